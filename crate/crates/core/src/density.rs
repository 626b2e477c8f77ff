//! Kernel density estimation on the unit cube.
//!
//! A [`KdeModel`] is a product-kernel KDE with optional mirror reflection at
//! the faces of `[0, 1]^d` and truncation into `[max(B', floor), B]`. Reflected
//! copies ("images") of every sample are materialised once at fit time and
//! sorted along the first axis, so each evaluation only visits images within
//! one bandwidth of the query.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::Kernel1D;
use crate::par;
use crate::quadrature::GridSpec;
use crate::sample::SampleSet;

/// Smallest value any clamped density evaluation returns.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Above this many points, cross-validation runs on a seeded subsample.
pub const CV_MAX_POINTS: usize = 4000;

/// Anything that can be evaluated as a density on `[0, 1]^d`.
pub trait Density: Sync {
    fn dim(&self) -> usize;

    /// Density at `x`; callers guarantee `x.len() == dim()` and `x` in the cube.
    fn density(&self, x: &[f64]) -> f64;

    /// Values at every node of `grid`, in node order.
    fn grid_values(&self, grid: &GridSpec) -> Vec<f64> {
        grid.values(|x| self.density(x))
    }
}

impl<D: Density + ?Sized> Density for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn density(&self, x: &[f64]) -> f64 {
        (**self).density(x)
    }
    fn grid_values(&self, grid: &GridSpec) -> Vec<f64> {
        (**self).grid_values(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// Reflect every sample across each face of the cube.
    Mirror,
    None,
}

/// Truncation bounds `[B', B]`; `B' = 0` and `B = inf` disable them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamp {
    lower: f64,
    upper: f64,
}

impl Clamp {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || lower < 0.0 || lower.is_infinite() || upper.is_nan() || upper <= lower {
            return Err(Error::InvalidArgument(format!(
                "clamp bounds must satisfy 0 <= B' < B, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn none() -> Self {
        Self {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        let lo = self.lower.max(DENSITY_FLOOR);
        if v.is_nan() || v < lo {
            lo
        } else if v > self.upper {
            self.upper
        } else {
            v
        }
    }
}

impl Default for Clamp {
    fn default() -> Self {
        Self::none()
    }
}

/// Fitted kernel density estimator.
#[derive(Debug, Clone)]
pub struct KdeModel {
    samples: SampleSet,
    h: f64,
    kernel: Kernel1D,
    clamp: Clamp,
    boundary: Boundary,
    /// `h^d`
    h_pow: f64,
    /// Image coordinates sorted by first axis (row-major, width d).
    img: Vec<f64>,
    img_first: Vec<f64>,
    img_owner: Vec<u32>,
    /// Images grouped by owner: `own[own_start[i]..own_start[i + 1]]` rows.
    own: Vec<f64>,
    own_start: Vec<usize>,
    /// Per-axis image coordinates of each sample:
    /// `axis_vals[axis_start[i * d + c]..axis_start[i * d + c + 1]]`.
    axis_vals: Vec<f64>,
    axis_start: Vec<usize>,
    /// For each sorted image, its index into the owner's per-axis lists.
    img_axis: Vec<u8>,
    /// Kernel sums at each sample, with and without the sample's own images.
    full_sums: Vec<f64>,
    loo_sums: Vec<f64>,
}

/// Reflected copies of coordinate `v` that can lie within `reach` of `[0, 1]`.
fn axis_images(v: f64, reach: f64, boundary: Boundary, out: &mut Vec<f64>) {
    out.clear();
    match boundary {
        Boundary::None => out.push(v),
        Boundary::Mirror => {
            let kmin = ((-reach - 1.0) / 2.0).floor() as i64;
            let kmax = ((2.0 + reach) / 2.0).ceil() as i64;
            for k in kmin..=kmax {
                let shift = 2.0 * k as f64;
                for cand in [v + shift, -v + shift] {
                    if cand >= -reach && cand <= 1.0 + reach {
                        out.push(cand);
                    }
                }
            }
        }
    }
}

impl KdeModel {
    pub fn fit(
        samples: &SampleSet,
        h: f64,
        kernel: &Kernel1D,
        clamp: Clamp,
        boundary: Boundary,
    ) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::EmptySample(n));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::BadBandwidth(h));
        }
        samples.check_unit_cube()?;
        let d = samples.dim();
        let reach = h * (1.0 + 1e-12);

        let mut own = Vec::new();
        let mut own_axis = Vec::new();
        let mut own_start = Vec::with_capacity(n + 1);
        let mut axis_vals = Vec::new();
        let mut axis_start = Vec::with_capacity(n * d + 1);
        let mut per_axis: Vec<Vec<f64>> = vec![Vec::new(); d];
        let mut idx = vec![0usize; d];
        for row in samples.rows() {
            own_start.push(own.len() / d);
            for c in 0..d {
                axis_images(row[c], reach, boundary, &mut per_axis[c]);
                axis_start.push(axis_vals.len());
                axis_vals.extend_from_slice(&per_axis[c]);
            }
            idx.iter_mut().for_each(|v| *v = 0);
            'outer: loop {
                for c in 0..d {
                    own.push(per_axis[c][idx[c]]);
                    own_axis.push(idx[c] as u8);
                }
                for c in (0..d).rev() {
                    idx[c] += 1;
                    if idx[c] < per_axis[c].len() {
                        continue 'outer;
                    }
                    idx[c] = 0;
                }
                break;
            }
        }
        own_start.push(own.len() / d);
        axis_start.push(axis_vals.len());

        let count = own.len() / d;
        let mut owner_of = Vec::with_capacity(count);
        for i in 0..n {
            owner_of.extend(std::iter::repeat_n(i as u32, own_start[i + 1] - own_start[i]));
        }
        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&a, &b| own[a * d].total_cmp(&own[b * d]).then(a.cmp(&b)));
        let mut img = Vec::with_capacity(own.len());
        let mut img_first = Vec::with_capacity(count);
        let mut img_owner = Vec::with_capacity(count);
        let mut img_axis = Vec::with_capacity(own.len());
        for &j in &order {
            img.extend_from_slice(&own[j * d..(j + 1) * d]);
            img_axis.extend_from_slice(&own_axis[j * d..(j + 1) * d]);
            img_first.push(own[j * d]);
            img_owner.push(owner_of[j]);
        }

        let mut model = Self {
            samples: samples.clone(),
            h,
            kernel: kernel.clone(),
            clamp,
            boundary,
            h_pow: h.powi(d as i32),
            img,
            img_first,
            img_owner,
            own,
            own_start,
            axis_vals,
            axis_start,
            img_axis,
            full_sums: Vec::new(),
            loo_sums: Vec::new(),
        };
        let full = par::map_indexed(n, |i| model.kernel_sum(model.samples.row(i)));
        // excluding the owner directly (rather than subtracting its images)
        // keeps the leave-one-out sum exact when the own term dominates
        let loo = par::map_indexed(n, |i| model.kernel_sum_excluding(model.samples.row(i), i));
        model.full_sums = full;
        model.loo_sums = loo;
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> &Kernel1D {
        &self.kernel
    }

    pub fn clamp(&self) -> Clamp {
        self.clamp
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "query has {} coordinates, model is {}-dimensional",
                x.len(),
                self.dim()
            )));
        }
        for (c, &v) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfDomain {
                    point: 0,
                    column: c,
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Clamped density from an unnormalized kernel sum over `count` points.
    #[inline]
    pub fn normalize(&self, sum: f64, count: usize) -> f64 {
        self.clamp.apply(sum / (count as f64 * self.h_pow))
    }

    #[inline]
    fn image_kernel(&self, j: usize, x: &[f64]) -> f64 {
        let d = x.len();
        let row = &self.img[j * d..(j + 1) * d];
        let mut v = 1.0;
        for c in 0..d {
            let k = self.kernel.eval((x[c] - row[c]) / self.h);
            if k == 0.0 {
                return 0.0;
            }
            v *= k;
        }
        v
    }

    #[inline]
    fn window(&self, x0: f64) -> std::ops::Range<usize> {
        let reach = self.h * (1.0 + 1e-12);
        let lo = self.img_first.partition_point(|&t| t < x0 - reach);
        let hi = self.img_first.partition_point(|&t| t <= x0 + reach);
        lo..hi
    }

    /// Unnormalized kernel sum `sum_j prod_c K((x_c - X_jc) / h)` over all
    /// images.
    pub fn kernel_sum(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in self.window(x[0]) {
            s += self.image_kernel(j, x);
        }
        s
    }

    /// Kernel sum skipping the images of sample `i`.
    pub fn kernel_sum_excluding(&self, x: &[f64], i: usize) -> f64 {
        let skip = i as u32;
        let mut s = 0.0;
        for j in self.window(x[0]) {
            if self.img_owner[j] != skip {
                s += self.image_kernel(j, x);
            }
        }
        s
    }

    /// `(total, selected)` kernel sums where `selected` keeps owners matching
    /// `pick`.
    pub fn kernel_sum_split<P: Fn(u32) -> bool>(&self, x: &[f64], pick: P) -> (f64, f64) {
        let (mut all, mut sel) = (0.0, 0.0);
        for j in self.window(x[0]) {
            let k = self.image_kernel(j, x);
            all += k;
            if pick(self.img_owner[j]) {
                sel += k;
            }
        }
        (all, sel)
    }

    /// [`Self::kernel_sum`] at every node of `grid`, in node order.
    ///
    /// Kernel profiles are computed once per axis image and scattered slab by
    /// slab along the first axis, visiting images in the same order as
    /// `kernel_sum`, so the sums are identical to node-by-node evaluation.
    pub fn grid_kernel_sums(&self, grid: &GridSpec) -> Vec<f64> {
        let d = self.dim();
        assert_eq!(d, grid.dim(), "grid dimension");
        if d == 1 {
            return grid.values(|x| self.kernel_sum(x));
        }
        let nodes = grid.axis_nodes();
        let m = nodes.len();
        let reach = self.h * (1.0 + 1e-12);
        let profiles: Vec<(usize, Vec<f64>)> = par::map_indexed(self.axis_vals.len(), |t| {
            let v = self.axis_vals[t];
            let lo = nodes.partition_point(|&x| x < v - reach);
            let hi = nodes.partition_point(|&x| x <= v + reach);
            let vals = (lo..hi).map(|b| self.kernel.eval((nodes[b] - v) / self.h)).collect();
            (lo, vals)
        });
        let slab = m.pow(d as u32 - 1);
        let mut out = vec![0.0; slab * m];
        par::fill_slabs(&mut out, slab, |a, s| {
            let xa = nodes[a];
            let mut profs: [&(usize, Vec<f64>); 8] = [&profiles[0]; 8];
            for j in self.window(xa) {
                let k0 = self.kernel.eval((xa - self.img_first[j]) / self.h);
                if k0 == 0.0 {
                    continue;
                }
                let base = self.img_owner[j] as usize * d;
                for (c, slot) in profs.iter_mut().enumerate().take(d).skip(1) {
                    let t = self.axis_start[base + c] + self.img_axis[j * d + c] as usize;
                    *slot = &profiles[t];
                }
                scatter(s, m, k0, &profs[1..d]);
            }
        });
        out
    }

    /// Images of sample `i` (the sample itself plus any reflections).
    pub fn images_of(&self, i: usize) -> impl Iterator<Item = &[f64]> {
        let d = self.dim();
        self.own[self.own_start[i] * d..self.own_start[i + 1] * d].chunks_exact(d)
    }

    /// Unnormalized kernel term of sample `i` at `x`.
    pub fn point_term(&self, i: usize, x: &[f64]) -> f64 {
        self.images_of(i)
            .map(|row| {
                let mut v = 1.0;
                for c in 0..row.len() {
                    v *= self.kernel.eval((x[c] - row[c]) / self.h);
                }
                v
            })
            .sum()
    }

    /// Untruncated full-sample estimate (may be negative for higher-order
    /// kernels).
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.kernel_sum(x) / (self.len() as f64 * self.h_pow)
    }

    /// Truncated full-sample estimate.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.normalize(self.kernel_sum(x), self.len()))
    }

    /// Estimate at sample `i` from the other `n - 1` samples.
    pub fn eval_loo(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.normalize(self.loo_sums[i], self.len() - 1))
    }

    /// Estimate at `x` from all samples except `i`.
    pub fn eval_loo_at(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_index(i)?;
        self.check_point(x)?;
        Ok(self.normalize(self.kernel_sum_excluding(x, i), self.len() - 1))
    }

    /// Truncated full-sample estimate at sample `i` (cached).
    pub fn eval_at_sample(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.normalize(self.full_sums[i], self.len()))
    }

    /// The leave-`i`-out estimate as a [`Density`].
    pub fn loo_view(&self, i: usize) -> Result<LooView<'_>> {
        self.check_index(i)?;
        Ok(LooView { model: self, i })
    }
}

impl Density for KdeModel {
    fn dim(&self) -> usize {
        self.samples.dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.normalize(self.kernel_sum(x), self.len())
    }

    fn grid_values(&self, grid: &GridSpec) -> Vec<f64> {
        let n = self.len();
        self.grid_kernel_sums(grid)
            .into_iter()
            .map(|s| self.normalize(s, n))
            .collect()
    }
}

/// Adds `acc * prod_c profile_c` over the box spanned by the profiles.
fn scatter(out: &mut [f64], m: usize, acc: f64, profs: &[&(usize, Vec<f64>)]) {
    let (lo, vals) = profs[0];
    if profs.len() == 1 {
        for (o, &k) in out[*lo..*lo + vals.len()].iter_mut().zip(vals) {
            *o += acc * k;
        }
        return;
    }
    let stride = m.pow(profs.len() as u32 - 1);
    for (t, &k) in vals.iter().enumerate() {
        let b = (lo + t) * stride;
        scatter(&mut out[b..b + stride], m, acc * k, &profs[1..]);
    }
}

/// A fitted model with one sample removed.
#[derive(Debug, Clone, Copy)]
pub struct LooView<'a> {
    model: &'a KdeModel,
    i: usize,
}

impl LooView<'_> {
    pub fn index(&self) -> usize {
        self.i
    }
}

impl Density for LooView<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.model
            .normalize(self.model.kernel_sum_excluding(x, self.i), self.model.len() - 1)
    }
}

/// Free-function form of [`KdeModel::fit`].
pub fn fit(
    samples: &SampleSet,
    h: f64,
    kernel: &Kernel1D,
    clamp: Clamp,
    boundary: Boundary,
) -> Result<KdeModel> {
    KdeModel::fit(samples, h, kernel, clamp, boundary)
}

/// Default cross-validation bandwidths: 16 log-spaced values from a
/// dimension-dependent lower end up to 1.
pub fn default_bandwidth_grid(dim: usize) -> Vec<f64> {
    let lo: f64 = match dim {
        1 => 0.01,
        2 => 0.03,
        3 => 0.06,
        _ => 0.1,
    };
    log_grid(lo, 1.0, 16)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Least-squares cross-validation criterion for every bandwidth in `grid`:
/// `int fhat_h^2 - (2/n) sum_i fhat_h^{(-fold(i))}(X_i)`, untruncated.
pub fn cv_scores(
    samples: &SampleSet,
    kernel: &Kernel1D,
    grid: &[f64],
    folds: usize,
    seed: u64,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    if grid.is_empty() || grid.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
        return Err(Error::EmptyGrid);
    }
    let n = samples.len();
    if folds < 2 || n < folds {
        return Err(Error::TooFewSamples {
            needed: folds.max(2),
            got: n,
        });
    }
    let fold_of = fold_assignment(n, folds, seed);
    let mut fold_size = vec![0usize; folds];
    for &f in &fold_of {
        fold_size[f as usize] += 1;
    }
    let quad = GridSpec::cv_for(samples.dim())?;
    let scores = par::map_tasks(grid.len(), |g| -> Result<f64> {
        let h = grid[g];
        let model = KdeModel::fit(samples, h, kernel, Clamp::none(), boundary)?;
        let norm = n as f64 * model.h_pow;
        let sq: Vec<f64> = model
            .grid_kernel_sums(&quad)
            .into_iter()
            .map(|s| (s / norm) * (s / norm))
            .collect();
        let int_sq = quad.integrate_values(&sq);
        let held: Vec<f64> = (0..n)
            .map(|i| {
                let f = fold_of[i];
                let x = samples.row(i);
                let (all, same) = model.kernel_sum_split(x, |o| fold_of[o as usize] == f);
                let train = n - fold_size[f as usize];
                (all - same) / (train as f64 * model.h_pow)
            })
            .collect();
        Ok(int_sq - 2.0 * par::mean(&held))
    });
    scores.into_iter().collect()
}

/// Fold index of each sample: seeded shuffle, then contiguous blocks.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<u8> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0u8; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = (pos * folds / n) as u8;
    }
    fold_of
}

/// Bandwidth in `grid` minimizing the least-squares CV score; ties go to the
/// smaller bandwidth. Sets larger than [`CV_MAX_POINTS`] are cross-validated
/// on a seeded subsample and the result is rescaled by
/// `(n_sub / n)^(1 / (2 nu + d))`, `nu` the kernel's bias order.
pub fn cv_bandwidth(
    samples: &SampleSet,
    kernel: &Kernel1D,
    grid: &[f64],
    folds: usize,
    seed: u64,
    boundary: Boundary,
) -> Result<f64> {
    let n = samples.len();
    let (work, scale) = if n > CV_MAX_POINTS {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe));
        idx.truncate(CV_MAX_POINTS);
        idx.sort_unstable();
        let nu = 2 * (kernel.order() / 2) + 2;
        let expo = 1.0 / (2 * nu + samples.dim()) as f64;
        (
            std::borrow::Cow::Owned(samples.select(&idx)),
            (CV_MAX_POINTS as f64 / n as f64).powf(expo),
        )
    } else {
        (std::borrow::Cow::Borrowed(samples), 1.0)
    };
    let scores = cv_scores(&work, kernel, grid, folds, seed, boundary)?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut best = order[0];
    for &g in &order[1..] {
        if scores[g] < scores[best] {
            best = g;
        }
    }
    Ok(grid[best] * scale)
}
