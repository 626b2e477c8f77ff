//! Tensor-product quadrature on the unit cube.
//!
//! Node values are computed in parallel and reduced in a fixed order, so
//! results are bit-identical for any worker count.

use crate::density::{Density, KdeModel};
use crate::error::{Error, Result};
use crate::par;

/// Largest number of tensor nodes a grid may have.
pub const MAX_NODES: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Midpoint,
    GaussLegendre,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    points_per_axis: usize,
    rule: Rule,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GridSpec {
    pub fn new(dim: usize, points_per_axis: usize, rule: Rule) -> Result<Self> {
        if dim == 0 {
            return Err(Error::UnsupportedDimension(0));
        }
        if points_per_axis < 2 {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs at least 2 points per axis, got {points_per_axis}"
            )));
        }
        let total = (points_per_axis as f64).powi(dim as i32);
        if total > MAX_NODES {
            return Err(Error::GridTooLarge { nodes: total });
        }
        let (nodes, weights) = match rule {
            Rule::Midpoint => {
                let m = points_per_axis as f64;
                let nodes = (0..points_per_axis).map(|k| (k as f64 + 0.5) / m).collect();
                (nodes, vec![1.0 / m; points_per_axis])
            }
            Rule::GaussLegendre => gauss_legendre_unit(points_per_axis),
        };
        Ok(Self {
            dim,
            points_per_axis,
            rule,
            nodes,
            weights,
        })
    }

    pub fn midpoint(dim: usize, points_per_axis: usize) -> Result<Self> {
        Self::new(dim, points_per_axis, Rule::Midpoint)
    }

    /// Estimator default: midpoint rule with 2048 / 256 / 48 / 24 points per
    /// axis for d = 1..=4.
    pub fn default_for(dim: usize) -> Result<Self> {
        Self::midpoint(dim, default_points(dim)?)
    }

    /// Ground-truth resolution: four times the default per axis, capped by the
    /// node limit.
    pub fn oracle_for(dim: usize) -> Result<Self> {
        let m = 4 * default_points(dim)?;
        let cap = MAX_NODES.powf(1.0 / dim as f64).floor() as usize;
        Self::midpoint(dim, m.min(cap))
    }

    /// Coarser grid used inside bandwidth cross-validation.
    pub fn cv_for(dim: usize) -> Result<Self> {
        let m = match dim {
            1 => 1024,
            2 => 128,
            3 => 32,
            4 => 16,
            d => return Err(Error::UnsupportedDimension(d)),
        };
        Self::midpoint(dim, m)
    }

    /// Same rule and resolution in another dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(dim, self.points_per_axis, self.rule)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    /// Total number of tensor nodes.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// One-dimensional nodes on `[0, 1]`, ascending.
    pub fn axis_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coordinates of node `k` (row-major, last axis fastest).
    pub fn node(&self, mut k: usize, out: &mut [f64]) {
        let m = self.points_per_axis;
        for c in (0..self.dim).rev() {
            out[c] = self.nodes[k % m];
            k /= m;
        }
    }

    /// Per-axis indices of node `k`.
    pub fn multi_index(&self, mut k: usize, out: &mut [usize]) {
        let m = self.points_per_axis;
        for c in (0..self.dim).rev() {
            out[c] = k % m;
            k /= m;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    /// Weight of node `k`.
    pub fn weight(&self, mut k: usize) -> f64 {
        let m = self.points_per_axis;
        let mut w = 1.0;
        for _ in 0..self.dim {
            w *= self.weights[k % m];
            k /= m;
        }
        w
    }

    /// Evaluates `g` at every node, in node order.
    pub fn values<G>(&self, g: G) -> Vec<f64>
    where
        G: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let mut out = vec![0.0; self.len()];
        let d = self.dim;
        par::fill_indexed(&mut out, |k| {
            let mut x = [0.0; 8];
            let x = &mut x[..d];
            self.node(k, x);
            g(x)
        });
        out
    }

    /// Quadrature sum of precomputed node values.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        match self.rule {
            Rule::Midpoint => par::pairwise_sum(values) / self.len() as f64,
            Rule::GaussLegendre => {
                let w: Vec<f64> = (0..self.len()).map(|k| self.weight(k)).collect();
                par::weighted_sum(&w, values)
            }
        }
    }
}

fn default_points(dim: usize) -> Result<usize> {
    match dim {
        1 => Ok(2048),
        2 => Ok(256),
        3 => Ok(48),
        4 => Ok(24),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_m(x) and P_m'(x) by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = mf * (x * pm - pm1) / (x * x - 1.0);
            let step = pm / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root
        nodes[m - 1 - i] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[m - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Advances a multi-index through the box `lo..hi`; false when exhausted.
pub(crate) fn next_index(idx: &mut [usize], lo: &[usize], hi: &[usize]) -> bool {
    for c in (0..idx.len()).rev() {
        idx[c] += 1;
        if idx[c] < hi[c] {
            return true;
        }
        idx[c] = lo[c];
    }
    false
}

/// Tensor-product quadrature of `g` over `[0, 1]^d`.
pub fn integrate<G>(g: G, spec: &GridSpec) -> f64
where
    G: Fn(&[f64]) -> f64 + Sync + Send,
{
    spec.integrate_values(&spec.values(g))
}

/// `int fhat(x)^a dx` for a fitted model.
pub fn integrate_power(model: &KdeModel, a: f64, spec: &GridSpec) -> Result<f64> {
    check_dim(model, spec)?;
    let values = model.grid_values(spec);
    Ok(spec.integrate_values(&powered(&values, a)))
}

fn powered(values: &[f64], a: f64) -> Vec<f64> {
    if a == 0.0 {
        vec![1.0; values.len()]
    } else if a == 1.0 {
        values.to_vec()
    } else {
        values.iter().map(|v| v.powf(a)).collect()
    }
}

fn check_dim(model: &KdeModel, spec: &GridSpec) -> Result<()> {
    if model.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model is {}-dimensional, grid is {}-dimensional",
            model.dim(),
            spec.dim()
        )));
    }
    Ok(())
}

/// Kernel sums of a fitted model at every grid node, plus the machinery to
/// remove one sample's contribution (rank-one downdate).
#[derive(Debug, Clone)]
pub struct LooGridCache<'a> {
    model: &'a KdeModel,
    grid: GridSpec,
    sums: Vec<f64>,
}

impl<'a> LooGridCache<'a> {
    /// O(n * grid) build.
    pub fn new(model: &'a KdeModel, grid: &GridSpec) -> Result<Self> {
        check_dim(model, grid)?;
        let sums = model.grid_kernel_sums(grid);
        Ok(Self {
            model,
            grid: grid.clone(),
            sums,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn model(&self) -> &'a KdeModel {
        self.model
    }

    /// Clamped full-sample density at every node.
    pub fn full_values(&self) -> Vec<f64> {
        let n = self.model.len();
        self.sums.iter().map(|&s| self.model.normalize(s, n)).collect()
    }

    /// Clamped density of `n - 1` points at every node, before removing any
    /// point's kernel term. Nodes outside a point's support take this value in
    /// that point's downdated density.
    pub fn rescaled_values(&self) -> Vec<f64> {
        let n1 = self.model.len() - 1;
        self.sums.iter().map(|&s| self.model.normalize(s, n1)).collect()
    }

    /// Nodes where sample `i` contributes, with its (unnormalized) kernel term.
    pub fn point_terms(&self, i: usize) -> Result<Vec<(usize, f64)>> {
        self.model.check_index(i)?;
        let d = self.grid.dim();
        let h = self.model.bandwidth();
        let reach = h * (1.0 + 1e-12);
        let nodes = self.grid.axis_nodes();
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut lo = vec![0usize; d];
        let mut hi = vec![0usize; d];
        let mut idx = vec![0usize; d];
        let mut u = vec![0.0; d];
        for img in self.model.images_of(i) {
            let mut empty = false;
            for c in 0..d {
                lo[c] = nodes.partition_point(|&t| t < img[c] - reach);
                hi[c] = nodes.partition_point(|&t| t <= img[c] + reach);
                if lo[c] >= hi[c] {
                    empty = true;
                }
            }
            if empty {
                continue;
            }
            idx.copy_from_slice(&lo);
            loop {
                for c in 0..d {
                    u[c] = (nodes[idx[c]] - img[c]) / h;
                }
                let k = self.model.kernel().eval_product(&u);
                if k != 0.0 {
                    out.push((self.grid.flat_index(&idx), k));
                }
                if !next_index(&mut idx, &lo, &hi) {
                    break;
                }
            }
        }
        out.sort_by_key(|p| p.0);
        out.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        Ok(out)
    }

    /// Clamped leave-one-out density at every node.
    pub fn loo_values(&self, i: usize) -> Result<Vec<f64>> {
        let mut v = self.rescaled_values();
        let n1 = self.model.len() - 1;
        for (k, t) in self.point_terms(i)? {
            v[k] = self.model.normalize(self.sums[k] - t, n1);
        }
        Ok(v)
    }

    /// Downdated clamped values on the support of sample `i` only.
    pub fn loo_support(&self, i: usize) -> Result<Vec<(usize, f64)>> {
        let n1 = self.model.len() - 1;
        Ok(self
            .point_terms(i)?
            .into_iter()
            .map(|(k, t)| (k, self.model.normalize(self.sums[k] - t, n1)))
            .collect())
    }
}

/// Precomputed pieces for `int fhat_{-i}^a` over all `i`.
#[derive(Debug, Clone)]
pub struct LooPowerIntegrals<'c, 'a> {
    cache: &'c LooGridCache<'a>,
    exponent: f64,
    rescaled: Vec<f64>,
    base: f64,
}

impl<'c, 'a> LooPowerIntegrals<'c, 'a> {
    pub fn new(cache: &'c LooGridCache<'a>, exponent: f64) -> Self {
        let rescaled = cache.rescaled_values();
        let base = cache.grid.integrate_values(&powered(&rescaled, exponent));
        Self {
            cache,
            exponent,
            rescaled,
            base,
        }
    }

    /// `int fhat_{-i}^a`, adjusting the shared base on sample `i`'s support.
    pub fn get(&self, i: usize) -> Result<f64> {
        if self.exponent == 0.0 {
            self.cache.model.check_index(i)?;
            return Ok(self.base);
        }
        let grid = &self.cache.grid;
        let mut delta = Vec::new();
        for (k, v) in self.cache.loo_support(i)? {
            let w = grid.weight(k);
            delta.push(w * (v.powf(self.exponent) - self.rescaled[k].powf(self.exponent)));
        }
        Ok(self.base + par::pairwise_sum(&delta))
    }
}

/// `int fhat_{-i}(x)^a dx` via the downdate cache (built on demand).
pub fn integrate_power_loo(
    model: &KdeModel,
    i: usize,
    a: f64,
    spec: &GridSpec,
    cache: Option<&LooGridCache<'_>>,
) -> Result<f64> {
    model.check_index(i)?;
    match cache {
        Some(c) => {
            if c.grid() != spec {
                return Err(Error::InvalidArgument(
                    "cache was built on a different grid".into(),
                ));
            }
            LooPowerIntegrals::new(c, a).get(i)
        }
        None => {
            let c = LooGridCache::new(model, spec)?;
            LooPowerIntegrals::new(&c, a).get(i)
        }
    }
}
