//! Analytic test densities on the unit cube, seeded samplers and quadrature
//! ground truth.
//!
//! The one-dimensional building blocks are
//!
//! * `uniform`: 1 on `[0, 1]`;
//! * `f1`: `0.5 + 5 t^9`, an equal mixture of `U(0, 1)` and the maximum of ten
//!   uniforms;
//! * `f2`: `0.5 + 0.5 t^19 (1 - t)^19 / B(20, 20)`, an equal mixture of
//!   `U(0, 1)` and `Beta(20, 20)`;
//! * `beta2020`: `Beta(20, 20)` alone.
//!
//! Multivariate densities are products of these, or finite mixtures of
//! products (which gives dependent coordinates).
//!
//! Random numbers come from ChaCha8 seeded with a `u64`; [`derive_seed`] maps
//! `(base, index)` to independent per-trial seeds.

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::functionals::{DensityPair, FunctionalSpec, Layout};
use crate::quadrature::GridSpec;
use crate::sample::SampleSet;

/// One-dimensional density on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Uniform,
    F1,
    F2,
    Beta2020,
}

fn ln_beta_20_20() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| 2.0 * ln_gamma(20.0) - ln_gamma(40.0))
}

fn beta2020_pdf(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    (19.0 * t.ln() + 19.0 * (1.0 - t).ln() - ln_beta_20_20()).exp()
}

impl Component {
    pub fn parse(tag: &str) -> Option<Self> {
        match tag {
            "uniform" | "u" => Some(Self::Uniform),
            "f1" => Some(Self::F1),
            "f2" => Some(Self::F2),
            "beta2020" => Some(Self::Beta2020),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::F1 => "f1",
            Self::F2 => "f2",
            Self::Beta2020 => "beta2020",
        }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match self {
            Self::Uniform => 1.0,
            Self::F1 => 0.5 + 5.0 * t.powi(9),
            Self::F2 => 0.5 + 0.5 * beta2020_pdf(t),
            Self::Beta2020 => beta2020_pdf(t),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform => rng.gen(),
            Self::F1 => {
                if rng.gen::<f64>() < 0.5 {
                    rng.gen()
                } else {
                    (0..10).map(|_| rng.gen::<f64>()).fold(0.0, f64::max)
                }
            }
            Self::F2 => {
                if rng.gen::<f64>() < 0.5 {
                    rng.gen()
                } else {
                    sample_beta2020(rng)
                }
            }
            Self::Beta2020 => sample_beta2020(rng),
        }
    }
}

/// The 20th smallest of 39 uniforms is `Beta(20, 20)`.
fn sample_beta2020<R: Rng>(rng: &mut R) -> f64 {
    let mut u = [0.0f64; 39];
    for v in u.iter_mut() {
        *v = rng.gen();
    }
    let (_, mid, _) = u.select_nth_unstable_by(19, f64::total_cmp);
    *mid
}

/// A density on `[0, 1]^d` with a closed form and an exact sampler.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticDensity {
    /// Independent coordinates.
    Product(Vec<Component>),
    /// Weighted mixture of same-dimensional densities; weights sum to 1.
    Mixture(Vec<(f64, AnalyticDensity)>),
}

impl AnalyticDensity {
    pub fn uniform(dim: usize) -> Self {
        Self::Product(vec![Component::Uniform; dim])
    }

    pub fn product(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidSpec("empty product density".into()));
        }
        Ok(Self::Product(components))
    }

    pub fn mixture(parts: Vec<(f64, AnalyticDensity)>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidSpec("empty mixture".into()));
        };
        let d = first.1.dim();
        if parts.iter().any(|(_, p)| p.dim() != d) {
            return Err(Error::DimensionMismatch(
                "mixture components differ in dimension".into(),
            ));
        }
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if parts.iter().any(|p| p.0.is_nan() || p.0 <= 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(
                "mixture weights must be positive and sum to 1".into(),
            ));
        }
        Ok(Self::Mixture(parts))
    }

    /// Parses `tag(x tag)*`, where a bare integer `N` after a tag repeats it
    /// to `N` copies: `f2x4`, `f1xuniform`, `uniformx2xf2`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut comps: Vec<Component> = Vec::new();
        let mut last: Option<Component> = None;
        let bad = || Error::InvalidSpec(format!("cannot parse distribution '{spec}'"));
        for tok in spec.trim().split('x') {
            let tok = tok.trim().to_ascii_lowercase();
            if let Ok(k) = tok.parse::<usize>() {
                let c = last.take().ok_or_else(bad)?;
                if k == 0 {
                    return Err(bad());
                }
                comps.extend(std::iter::repeat_n(c, k - 1));
            } else {
                let c = Component::parse(&tok).ok_or_else(bad)?;
                comps.push(c);
                last = Some(c);
            }
        }
        if comps.is_empty() {
            return Err(bad());
        }
        Ok(Self::Product(comps))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Product(c) => c.len(),
            Self::Mixture(p) => p[0].1.dim(),
        }
    }

    /// Density at `x` with a domain check.
    pub fn density_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, density is {}-dimensional",
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
        Ok(self.pdf(x))
    }

    fn pdf(&self, x: &[f64]) -> f64 {
        match self {
            Self::Product(c) => c.iter().zip(x).map(|(c, &t)| c.pdf(t)).product(),
            Self::Mixture(parts) => parts.iter().map(|(w, p)| w * p.pdf(x)).sum(),
        }
    }

    fn sample_row<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            Self::Product(c) => out.extend(c.iter().map(|c| c.sample(rng))),
            Self::Mixture(parts) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (w, p) in parts {
                    acc += w;
                    if u < acc {
                        return p.sample_row(rng, out);
                    }
                }
                parts[parts.len() - 1].1.sample_row(rng, out)
            }
        }
    }

    /// `n` independent draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * self.dim());
        for _ in 0..n {
            self.sample_row(&mut rng, &mut data);
        }
        SampleSet::new(self.dim(), data).expect("rows have the density's dimension")
    }

    /// Marginal density of the listed coordinates, in that order.
    pub fn marginal(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "cannot take marginal {cols:?} of a {}-dimensional density",
                self.dim()
            )));
        }
        Ok(match self {
            Self::Product(c) => Self::Product(cols.iter().map(|&k| c[k]).collect()),
            Self::Mixture(parts) => Self::Mixture(
                parts
                    .iter()
                    .map(|(w, p)| Ok((*w, p.marginal(cols)?)))
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

impl Density for AnalyticDensity {
    fn dim(&self) -> usize {
        AnalyticDensity::dim(self)
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.pdf(x)
    }
}

impl fmt::Display for AnalyticDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Product(c) => {
                let tags: Vec<&str> = c.iter().map(|c| c.tag()).collect();
                write!(f, "{}", tags.join("x"))
            }
            Self::Mixture(parts) => {
                let s: Vec<String> = parts.iter().map(|(w, p)| format!("{w}*{p}")).collect();
                write!(f, "({})", s.join(" + "))
            }
        }
    }
}

/// Independent seed for stream `index` under `base` (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Marginals of an analytic density, split by a column layout.
pub struct AnalyticBlocks {
    pub joint: AnalyticDensity,
    pub parts: Vec<AnalyticDensity>,
}

impl AnalyticBlocks {
    /// Joint plus the marginals required by a mutual-information kind.
    pub fn new(joint: &AnalyticDensity, layout: &Layout) -> Result<Self> {
        let parts = layout
            .marginal_columns()
            .iter()
            .map(|cols| joint.marginal(cols))
            .collect::<Result<_>>()?;
        Ok(Self {
            joint: joint.clone(),
            parts,
        })
    }

    pub fn pair(&self, layout: &Layout) -> DensityPair<'_> {
        DensityPair::with_marginals(&self.joint, self.parts.iter().map(|p| p as &dyn Density).collect(), *layout)
    }
}

/// Ground-truth value of `spec` on analytic densities by quadrature.
pub fn oracle_truth(
    spec: &FunctionalSpec,
    p: &AnalyticDensity,
    q: Option<&AnalyticDensity>,
    grid: &GridSpec,
) -> Result<f64> {
    spec.check_arity(q.is_some())?;
    if let Some(q) = q {
        if q.dim() != p.dim() {
            return Err(Error::DimensionMismatch(format!(
                "densities are {}- and {}-dimensional",
                p.dim(),
                q.dim()
            )));
        }
    }
    let grid = grid.with_dim(p.dim())?;
    match (spec.layout(p.dim())?, q) {
        (Some(layout), _) => {
            let blocks = AnalyticBlocks::new(p, &layout)?;
            crate::functionals::plugin_value(spec, &blocks.pair(&layout), &grid)
        }
        (None, Some(q)) => crate::functionals::plugin_value(spec, &DensityPair::Pair(p, q), &grid),
        (None, None) => crate::functionals::plugin_value(spec, &DensityPair::Single(p), &grid),
    }
}
