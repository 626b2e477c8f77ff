//! Data-split, leave-one-out and plug-in estimators with influence-based
//! variance estimates and normal confidence intervals.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::density::{cv_bandwidth, default_bandwidth_grid, Boundary, Clamp, KdeModel};
use crate::error::{Error, Result};
use crate::functionals::{
    CrossDensity, Fitted, FunctionalSpec, Influence, Kind, Layout, LooTerms,
};
use crate::kernels::{legendre_kernel, Kernel1D};
use crate::normal;
use crate::par;
use crate::quadrature::{GridSpec, Rule};
use crate::sample::SampleSet;
use crate::synthdata::derive_seed;

/// Influence sample variances below this mark a degenerate estimate.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ds,
    Loo,
    Plugin,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Ds => "ds",
            Method::Loo => "loo",
            Method::Plugin => "plugin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ds" => Some(Method::Ds),
            "loo" => Some(Method::Loo),
            "plugin" | "plug-in" => Some(Method::Plugin),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    /// Least-squares cross-validation per sample set.
    Auto,
    /// Bandwidth per fitted sample set, in order; the last entry repeats.
    Fixed(Vec<f64>),
}

/// Where an estimate's variance fields come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum VarianceSource {
    /// Sample variance of influence values at the fitted densities.
    #[default]
    Influence,
    /// Power-integral formula, for the Tsallis divergences only.
    PowerIntegral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub bandwidth: Bandwidth,
    pub kernel_order: usize,
    pub clamp: Clamp,
    pub boundary: Boundary,
    /// Quadrature points per axis; `None` uses [`GridSpec::default_for`].
    pub grid_points: Option<usize>,
    pub rule: Rule,
    /// Cross-validation bandwidths; `None` uses the dimension default.
    pub cv_grid: Option<Vec<f64>>,
    pub folds: usize,
    pub seed: u64,
    pub cross_density: CrossDensity,
    pub variance: VarianceSource,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Auto,
            kernel_order: 2,
            clamp: Clamp::none(),
            boundary: Boundary::Mirror,
            grid_points: None,
            rule: Rule::Midpoint,
            cv_grid: None,
            folds: 5,
            seed: 0,
            cross_density: CrossDensity::Full,
            variance: VarianceSource::Influence,
        }
    }
}

impl EstimatorConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_bandwidths(mut self, h: &[f64]) -> Self {
        self.bandwidth = Bandwidth::Fixed(h.to_vec());
        self
    }

    pub fn grid_for(&self, dim: usize) -> Result<GridSpec> {
        match self.grid_points {
            Some(m) => GridSpec::new(dim, m, self.rule),
            None => {
                let g = GridSpec::default_for(dim)?;
                GridSpec::new(dim, g.points_per_axis(), self.rule)
            }
        }
    }

    pub fn kernel(&self) -> Kernel1D {
        legendre_kernel(self.kernel_order)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Variance of the first influence function (or the only one).
    pub variance_f: f64,
    pub variance_g: Option<f64>,
    pub n_used: usize,
    pub m_used: Option<usize>,
    pub method: Method,
    /// Both influence variances vanished: the normal approximation does not
    /// apply.
    pub degenerate: bool,
    /// Leave-one-out intervals rest on conjectured, not proven, normality.
    pub conjectural: bool,
    pub variance_source: VarianceSource,
    pub seed: u64,
    pub bandwidths: Vec<f64>,
    pub kernel_order: usize,
}

impl Estimate {
    /// `sqrt(V_f / n + V_g / m)`.
    pub fn std_error(&self) -> f64 {
        let mut v = self.variance_f / self.n_used as f64;
        if let (Some(vg), Some(m)) = (self.variance_g, self.m_used) {
            v += vg / m as f64;
        }
        v.sqrt()
    }

    pub fn ci(&self, level: f64) -> Result<(f64, f64)> {
        confidence_interval(self, level)
    }
}

/// Two-sided normal interval `value +- z * std_error`.
pub fn confidence_interval(e: &Estimate, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    if e.degenerate {
        return Err(Error::DegenerateCase);
    }
    let half = normal::inverse_cdf(0.5 * (1.0 + level)) * e.std_error();
    Ok((e.value - half, e.value + half))
}

/// Models fitted for one estimate.
#[allow(clippy::large_enum_variant)] // built once per fit, never moved in bulk
enum FitSet {
    Single(KdeModel),
    Pair(KdeModel, KdeModel),
    Blocks {
        joint: KdeModel,
        parts: Vec<KdeModel>,
        layout: Layout,
    },
}

impl FitSet {
    fn fitted(&self) -> Fitted<'_> {
        match self {
            FitSet::Single(p) => Fitted::Single(p),
            FitSet::Pair(p, q) => Fitted::Pair(p, q),
            FitSet::Blocks { joint, parts, layout } => Fitted::Blocks {
                joint,
                parts,
                layout: *layout,
            },
        }
    }
}

/// The sample sets behind one estimate: `[X]`, `[X, Y]` or the joint sample
/// followed by its marginal projections.
struct Problem {
    sets: Vec<SampleSet>,
    layout: Option<Layout>,
    dim: usize,
}

impl Problem {
    fn new(spec: &FunctionalSpec, x: &SampleSet, y: Option<&SampleSet>) -> Result<Self> {
        spec.validate()?;
        spec.check_arity(y.is_some())?;
        let d = x.dim();
        if let Some(y) = y {
            if y.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "X is {d}-dimensional, Y is {}-dimensional",
                    y.dim()
                )));
            }
        }
        let layout = spec.layout(d)?;
        let mut sets = vec![x.clone()];
        if let Some(y) = y {
            sets.push(y.clone());
        }
        if let Some(l) = &layout {
            for cols in l.marginal_columns() {
                sets.push(x.project(&cols)?);
            }
        }
        Ok(Self {
            sets,
            layout,
            dim: d,
        })
    }

    fn check_size(&self, needed: usize) -> Result<()> {
        for s in &self.sets {
            if s.len() < needed {
                return Err(Error::TooFewSamples {
                    needed,
                    got: s.len(),
                });
            }
        }
        Ok(())
    }

    fn bandwidths(&self, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
        match &cfg.bandwidth {
            Bandwidth::Fixed(h) => {
                if h.is_empty() {
                    return Err(Error::BadBandwidth(f64::NAN));
                }
                Ok((0..self.sets.len()).map(|k| h[k.min(h.len() - 1)]).collect())
            }
            Bandwidth::Auto => {
                let kernel = cfg.kernel();
                self.sets
                    .iter()
                    .map(|s| {
                        let grid = match &cfg.cv_grid {
                            Some(g) => g.clone(),
                            None => default_bandwidth_grid(s.dim()),
                        };
                        cv_bandwidth(s, &kernel, &grid, cfg.folds, cfg.seed, cfg.boundary)
                    })
                    .collect()
            }
        }
    }

    /// Fits every set restricted to `rows` (per set; `None` = all rows).
    fn fit(&self, h: &[f64], cfg: &EstimatorConfig, rows: Option<&[Vec<usize>]>) -> Result<FitSet> {
        let kernel = cfg.kernel();
        let models: Vec<KdeModel> = self
            .sets
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let sub;
                let s = match rows {
                    Some(r) => {
                        sub = s.select(&r[k]);
                        &sub
                    }
                    None => s,
                };
                KdeModel::fit(s, h[k], &kernel, cfg.clamp, cfg.boundary)
            })
            .collect::<Result<_>>()?;
        let mut it = models.into_iter();
        Ok(match (self.layout, self.sets.len()) {
            (Some(layout), _) => {
                let joint = it.next().expect("joint model");
                FitSet::Blocks {
                    joint,
                    parts: it.collect(),
                    layout,
                }
            }
            (None, 1) => FitSet::Single(it.next().expect("model")),
            _ => {
                let p = it.next().expect("model");
                FitSet::Pair(p, it.next().expect("model"))
            }
        })
    }

    fn n(&self) -> usize {
        self.sets[0].len()
    }

    fn m(&self) -> Option<usize> {
        (self.layout.is_none() && self.sets.len() == 2).then(|| self.sets[1].len())
    }
}

/// The functional whose estimate is passed through an outer function, and
/// that function.
type Outer = Box<dyn Fn(f64) -> f64>;

fn plug_through(spec: &FunctionalSpec) -> Option<(FunctionalSpec, Outer)> {
    let alpha = spec.alpha()?;
    match spec.kind() {
        Kind::RenyiEntropy => Some((
            FunctionalSpec::new(Kind::TsallisEntropy).with_alpha(alpha),
            Box::new(move |t| (1.0 - (alpha - 1.0) * t).ln() / (1.0 - alpha)),
        )),
        Kind::RenyiDivergence => Some((
            FunctionalSpec::new(Kind::PowerIntegral).with_exponents(alpha, 1.0 - alpha),
            Box::new(move |s: f64| s.ln() / (alpha - 1.0)),
        )),
        _ => None,
    }
}

fn influence_variances(
    spec: &FunctionalSpec,
    fit: &FitSet,
    grid: &GridSpec,
    rows_f: Option<&SampleSet>,
    rows_g: Option<&SampleSet>,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let inf = Influence::new(spec, fit.fitted().densities(), grid)?;
    let eval = |s: Option<&SampleSet>, second: bool| -> Vec<f64> {
        match s {
            Some(s) => par::map_indexed(s.len(), |i| {
                if second {
                    inf.second(s.row(i))
                } else {
                    inf.first(s.row(i))
                }
            }),
            None => Vec::new(),
        }
    };
    Ok((eval(rows_f, false), eval(rows_g, true), inf.value()))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    method: Method,
    value: f64,
    vf: f64,
    vg: Option<f64>,
    n_used: usize,
    m_used: Option<usize>,
    h: Vec<f64>,
    cfg: &EstimatorConfig,
) -> Estimate {
    let degenerate = method != Method::Plugin
        && vf < DEGENERATE_VARIANCE
        && vg.is_none_or(|v| v < DEGENERATE_VARIANCE);
    Estimate {
        value,
        variance_f: vf.max(0.0),
        variance_g: vg.map(|v| v.max(0.0)),
        n_used,
        m_used,
        method,
        degenerate,
        conjectural: method == Method::Loo,
        variance_source: VarianceSource::Influence,
        seed: cfg.seed,
        bandwidths: h,
        kernel_order: cfg.kernel_order,
    }
}

/// Shuffled row order for data splitting; `Y` reuses `X`'s permutation when
/// the sizes match so that identical inputs give identical halves.
fn split_halves(len: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = len / 2;
    let a = (0..half).map(|k| perm[2 * k]).collect();
    let b = (0..half).map(|k| perm[2 * k + 1]).collect();
    (a, b)
}

/// Data-split estimator: fit on one half, correct with the mean influence
/// over the other half, swap, and average.
pub fn estimate_ds(
    spec: &FunctionalSpec,
    x: &SampleSet,
    y: Option<&SampleSet>,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    let problem = Problem::new(spec, x, y)?;
    problem.check_size(4)?;
    let grid = cfg.grid_for(problem.dim)?;
    let h = problem.bandwidths(cfg)?;
    let split_seed = derive_seed(cfg.seed, 0xD5);
    let (xa, xb) = split_halves(problem.n(), split_seed);
    let (ya, yb) = match problem.m() {
        Some(m) if m == problem.n() => (xa.clone(), xb.clone()),
        Some(m) => split_halves(m, derive_seed(cfg.seed, 0xD6)),
        None => (Vec::new(), Vec::new()),
    };
    let has_y = problem.m().is_some();
    let rows_for = |first: &[usize], second: &[usize]| -> Vec<Vec<usize>> {
        (0..problem.sets.len())
            .map(|k| if has_y && k == 1 { second.to_vec() } else { first.to_vec() })
            .collect()
    };
    let inner = plug_through(spec);
    let value_spec = inner.as_ref().map_or(spec, |p| &p.0);
    let mut values = [0.0; 2];
    let mut var_f = [0.0; 2];
    let mut var_g = [0.0; 2];
    for (k, (fit_rows, eval_rows)) in [
        (rows_for(&xa, &ya), rows_for(&xb, &yb)),
        (rows_for(&xb, &yb), rows_for(&xa, &ya)),
    ]
    .into_iter()
    .enumerate()
    {
        let fit = problem.fit(&h, cfg, Some(&fit_rows))?;
        let xs = problem.sets[0].select(&eval_rows[0]);
        let ys = has_y.then(|| problem.sets[1].select(&eval_rows[1]));
        let (pf, pg, t) = influence_variances(value_spec, &fit, &grid, Some(&xs), ys.as_ref())?;
        values[k] = t + par::mean(&pf) + if has_y { par::mean(&pg) } else { 0.0 };
        // the outer functional's own influence gives the standard error
        let (pf, pg) = if inner.is_some() {
            let (pf, pg, _) = influence_variances(spec, &fit, &grid, Some(&xs), ys.as_ref())?;
            (pf, pg)
        } else {
            (pf, pg)
        };
        var_f[k] = par::sample_variance(&pf);
        var_g[k] = if has_y { par::sample_variance(&pg) } else { 0.0 };
    }
    let mut value = 0.5 * (values[0] + values[1]);
    if let Some((_, outer)) = &inner {
        value = outer(value);
    }
    let n_used = 2 * xa.len();
    let m_used = has_y.then_some(2 * ya.len());
    Ok(finish(
        Method::Ds,
        value,
        0.5 * (var_f[0] + var_f[1]),
        has_y.then_some(0.5 * (var_g[0] + var_g[1])),
        n_used,
        m_used,
        h,
        cfg,
    ))
}

/// Leave-one-out estimator: the mean of the closed-form per-sample terms,
/// cycling the shorter sample when the sizes differ.
pub fn estimate_loo(
    spec: &FunctionalSpec,
    x: &SampleSet,
    y: Option<&SampleSet>,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    let problem = Problem::new(spec, x, y)?;
    problem.check_size(2)?;
    let grid = cfg.grid_for(problem.dim)?;
    let h = problem.bandwidths(cfg)?;
    let fit = problem.fit(&h, cfg, None)?;
    let terms = LooTerms::new(spec, fit.fitted(), &grid, cfg.cross_density)?;
    let value = terms.finish(par::mean(&terms.all()?));
    let has_y = problem.m().is_some();
    let (pf, pg, _) = influence_variances(
        spec,
        &fit,
        &grid,
        Some(&problem.sets[0]),
        has_y.then(|| &problem.sets[1]),
    )?;
    Ok(finish(
        Method::Loo,
        value,
        par::sample_variance(&pf),
        has_y.then(|| par::sample_variance(&pg)),
        problem.n(),
        problem.m(),
        h,
        cfg,
    ))
}

/// Plug-in baseline: `T` of the full-sample density estimates by quadrature.
pub fn estimate_plugin(
    spec: &FunctionalSpec,
    x: &SampleSet,
    y: Option<&SampleSet>,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    let problem = Problem::new(spec, x, y)?;
    problem.check_size(2)?;
    let grid = cfg.grid_for(problem.dim)?;
    let h = problem.bandwidths(cfg)?;
    let fit = problem.fit(&h, cfg, None)?;
    let value = Influence::new(spec, fit.fitted().densities(), &grid)?.value();
    let has_y = problem.m().is_some();
    Ok(finish(
        Method::Plugin,
        value,
        0.0,
        has_y.then_some(0.0),
        problem.n(),
        problem.m(),
        h,
        cfg,
    ))
}

/// Dispatches on `method`, then applies the configured variance source.
pub fn estimate(
    spec: &FunctionalSpec,
    method: Method,
    x: &SampleSet,
    y: Option<&SampleSet>,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    let mut e = match method {
        Method::Ds => estimate_ds(spec, x, y, cfg)?,
        Method::Loo => estimate_loo(spec, x, y, cfg)?,
        Method::Plugin => estimate_plugin(spec, x, y, cfg)?,
    };
    if cfg.variance == VarianceSource::PowerIntegral && method != Method::Plugin {
        if !matches!(spec.kind(), Kind::TsallisDivergence | Kind::CondTsallisDivergence) {
            return Err(Error::InvalidArgument(format!(
                "the power-integral variance applies to Tsallis divergences, not {}",
                spec.kind()
            )));
        }
        let y = y.expect("arity checked");
        let (vf, vg) = tsallis_component_variances(x, y, spec.alpha().expect("validated"), cfg)?;
        e.variance_f = vf.max(0.0);
        e.variance_g = Some(vg.max(0.0));
        e.degenerate = vf.abs() < DEGENERATE_VARIANCE && vg.abs() < DEGENERATE_VARIANCE;
        e.variance_source = VarianceSource::PowerIntegral;
    }
    Ok(e)
}

fn power_integral_values(
    x: &SampleSet,
    y: &SampleSet,
    exponents: &[(f64, f64)],
    cfg: &EstimatorConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec0 = FunctionalSpec::power_integral(exponents[0].0, exponents[0].1)?;
    let problem = Problem::new(&spec0, x, Some(y))?;
    problem.check_size(2)?;
    let grid = cfg.grid_for(problem.dim)?;
    let h = problem.bandwidths(cfg)?;
    let fit = problem.fit(&h, cfg, None)?;
    let values = exponents
        .iter()
        .map(|&(a, b)| {
            let spec = FunctionalSpec::power_integral(a, b)?;
            let terms = LooTerms::new(&spec, fit.fitted(), &grid, CrossDensity::LeaveOut)?;
            Ok(par::mean(&terms.all()?))
        })
        .collect::<Result<_>>()?;
    Ok((values, h))
}

/// Leave-one-out estimate of `S(a, b) = int f^a g^b` for `a + b = 1`.
pub fn estimate_power_integral(
    a: f64,
    b: f64,
    x: &SampleSet,
    y: &SampleSet,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    let spec = FunctionalSpec::power_integral(a, b)?;
    estimate_loo(&spec, x, Some(y), cfg)
}

fn check_variance_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha == 0.0 || alpha == 0.5 || alpha == 1.0 {
        return Err(Error::BadAlpha(alpha));
    }
    Ok(())
}

/// `(V_XZ, V_YZ)`: the two influence variances of the (conditional) Tsallis
/// divergence written through power integrals,
/// `V_XZ = (a / (a - 1))^2 (S(2a - 1, 2b) - S(a, b)^2)` and
/// `V_YZ = S(2a, 2b - 1) - S(a, b)^2` with `b = 1 - a`.
pub fn tsallis_component_variances(
    x: &SampleSet,
    y: &SampleSet,
    alpha: f64,
    cfg: &EstimatorConfig,
) -> Result<(f64, f64)> {
    check_variance_alpha(alpha)?;
    let beta = 1.0 - alpha;
    let (s, _) = power_integral_values(
        x,
        y,
        &[
            (alpha, beta),
            (2.0 * alpha - 1.0, 2.0 * beta),
            (2.0 * alpha, 2.0 * beta - 1.0),
        ],
        cfg,
    )?;
    let c = alpha / (alpha - 1.0);
    Ok((c * c * (s[1] - s[0] * s[0]), s[2] - s[0] * s[0]))
}

/// Asymptotic variance of `sqrt(N) (T - T_hat)` for the conditional Tsallis
/// divergence, `N = n + m`, from power-integral estimates:
/// `(N/n) V_XZ + (N/m) V_YZ`.
pub fn estimate_cond_tsallis_variance(
    x: &SampleSet,
    y: &SampleSet,
    alpha: f64,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let (vxz, vyz) = tsallis_component_variances(x, y, alpha, cfg)?;
    let (n, m) = (x.len() as f64, y.len() as f64);
    let big_n = n + m;
    Ok(big_n / n * vxz + big_n / m * vyz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(value: f64, vf: f64, n: usize) -> Estimate {
        Estimate {
            value,
            variance_f: vf,
            variance_g: None,
            n_used: n,
            m_used: None,
            method: Method::Ds,
            degenerate: false,
            conjectural: false,
            variance_source: VarianceSource::Influence,
            seed: 0,
            bandwidths: vec![0.1],
            kernel_order: 2,
        }
    }

    #[test]
    fn interval_example() {
        let (lo, hi) = confidence_interval(&est(0.0, 1.0, 100), 0.95).unwrap();
        assert!((lo + 0.196).abs() < 1e-3 && (hi - 0.196).abs() < 1e-3);
    }

    #[test]
    fn wider_level_contains_narrower() {
        let e = est(0.3, 2.0, 50);
        let a = e.ci(0.95).unwrap();
        let b = e.ci(0.99).unwrap();
        assert!(b.0 < a.0 && b.1 > a.1);
    }

    #[test]
    fn degenerate_interval_refused() {
        let mut e = est(0.0, 0.0, 10);
        e.degenerate = true;
        assert_eq!(e.ci(0.9), Err(Error::DegenerateCase));
        assert!(matches!(est(0.0, 1.0, 10).ci(1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn halves_are_disjoint() {
        let (a, b) = split_halves(11, 3);
        assert_eq!(a.len(), 5);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn variance_alpha_guard() {
        let s = SampleSet::from_column(vec![0.1, 0.2, 0.3]);
        let cfg = EstimatorConfig::default();
        for a in [0.0, 0.5, 1.0] {
            assert_eq!(
                estimate_cond_tsallis_variance(&s, &s, a, &cfg),
                Err(Error::BadAlpha(a))
            );
        }
    }
}
