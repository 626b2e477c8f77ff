//! Repeated-trial studies on synthetic data: `bench` and `qq`.

use std::io::Write;
use std::time::Instant;

use ifest::synthdata::oracle_truth;
use ifest::{
    derive_seed, estimate, AnalyticDensity, EstimatorConfig, FunctionalSpec, GridSpec, Method,
    SampleSet,
};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::stats;

pub const BENCH_HEADER: &str = "functional,method,n,m,trial,estimate,truth,abs_error,seconds";
pub const QQ_HEADER: &str = "trial,estimate,truth,std_error,z,z_sorted,normal_quantile";

/// A functional together with the analytic densities the samples come from
/// and its quadrature ground truth.
#[derive(Debug, Clone)]
pub struct Study {
    pub spec: FunctionalSpec,
    pub p: AnalyticDensity,
    pub q: Option<AnalyticDensity>,
    pub truth: f64,
}

impl Study {
    pub fn new(spec: FunctionalSpec, dist: &str, dist2: Option<&str>) -> CliResult<Self> {
        let p = AnalyticDensity::parse(dist)?;
        let q = dist2.map(AnalyticDensity::parse).transpose()?;
        spec.check_arity(q.is_some())?;
        if let Some(q) = &q {
            if q.dim() != p.dim() {
                return Err(CliError::Data(format!(
                    "--dist is {}-dimensional but --dist2 is {}-dimensional",
                    p.dim(),
                    q.dim()
                )));
            }
        }
        spec.layout(p.dim())?;
        let grid = GridSpec::oracle_for(p.dim())?;
        let truth = oracle_truth(&spec, &p, q.as_ref(), &grid)?;
        Ok(Self { spec, p, q, truth })
    }

    /// Samples for one trial: X from seed `(seed, 0)`, Y from `(seed, 1)`.
    pub fn draw(&self, n: usize, m: usize, seed: u64) -> (SampleSet, Option<SampleSet>) {
        let x = self.p.sample(n, derive_seed(seed, 0));
        let y = self.q.as_ref().map(|q| q.sample(m, derive_seed(seed, 1)));
        (x, y)
    }

    fn m_for(&self, n: usize) -> usize {
        if self.q.is_some() {
            n
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub functional: String,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub trial: usize,
    pub estimate: f64,
    pub truth: f64,
    pub abs_error: f64,
    pub seconds: f64,
}

impl BenchRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.functional,
            self.method,
            self.n,
            self.m,
            self.trial,
            self.estimate,
            self.truth,
            self.abs_error,
            self.seconds
        )
    }
}

/// Data seed of trial `trial` at sample size `n`; every method sees the same
/// data.
pub fn trial_seed(seed: u64, n: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(seed, n as u64), trial as u64)
}

/// Runs every `(n, trial)` cell in parallel and returns the records sorted
/// by method (in the given order), then n, then trial.
pub fn run_bench(
    study: &Study,
    methods: &[Method],
    n_list: &[usize],
    trials: usize,
    seed: u64,
    cfg: &EstimatorConfig,
    timing: bool,
) -> CliResult<Vec<BenchRecord>> {
    if trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    if methods.is_empty() || n_list.is_empty() {
        return Err(CliError::usage("need at least one method and one n"));
    }
    let cells: Vec<(usize, usize)> = n_list
        .iter()
        .flat_map(|&n| (0..trials).map(move |t| (n, t)))
        .collect();
    let results: Vec<CliResult<Vec<BenchRecord>>> = cells
        .par_iter()
        .map(|&(n, trial)| {
            let data_seed = trial_seed(seed, n, trial);
            let m = study.m_for(n);
            let (x, y) = study.draw(n, m, data_seed);
            let cfg = cfg.clone().with_seed(derive_seed(data_seed, 2));
            methods
                .iter()
                .map(|&method| {
                    let start = Instant::now();
                    let e = estimate(&study.spec, method, &x, y.as_ref(), &cfg)?;
                    let seconds = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
                    Ok(BenchRecord {
                        functional: study.spec.kind().tag().to_string(),
                        method,
                        n,
                        m,
                        trial,
                        estimate: e.value,
                        truth: study.truth,
                        abs_error: (e.value - study.truth).abs(),
                        seconds,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(cells.len() * methods.len());
    for r in results {
        rows.extend(r?);
    }
    let rank = |m: Method| methods.iter().position(|&k| k == m).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (rank(r.method), r.n, r.trial));
    Ok(rows)
}

pub fn write_bench<W: Write>(mut out: W, rows: &[BenchRecord]) -> CliResult<()> {
    writeln!(out, "{BENCH_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QqRow {
    pub trial: usize,
    pub estimate: f64,
    pub std_error: f64,
    /// `(estimate - truth) / std_error`, i.e. `sqrt(N) (T - truth) / S`.
    pub z: f64,
    /// Normal-theory 90% interval.
    pub ci90: (f64, f64),
}

/// Independent trials of one estimator; a degenerate trial is an error.
pub fn run_qq(
    study: &Study,
    method: Method,
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
    cfg: &EstimatorConfig,
) -> CliResult<Vec<QqRow>> {
    if trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    if method == Method::Plugin {
        return Err(CliError::usage("qq needs an influence-corrected method (ds or loo)"));
    }
    // at f = g the first-order term of these kinds vanishes, so the
    // estimates are not asymptotically normal at the usual rate
    if study.spec.kind().degenerates_at_equality() && study.q.as_ref() == Some(&study.p) {
        return Err(CliError::Degenerate(format!(
            "{} has vanishing influence functions when both densities are {}",
            study.spec.kind(),
            study.p
        )));
    }
    let rows: Vec<CliResult<QqRow>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let data_seed = derive_seed(seed, trial as u64);
            let (x, y) = study.draw(n, m, data_seed);
            let cfg = cfg.clone().with_seed(derive_seed(data_seed, 2));
            let e = estimate(&study.spec, method, &x, y.as_ref(), &cfg)?;
            let ci90 = e.ci(0.9)?;
            let se = e.std_error();
            Ok(QqRow {
                trial,
                estimate: e.value,
                std_error: se,
                z: (e.value - study.truth) / se,
                ci90,
            })
        })
        .collect();
    rows.into_iter().collect()
}

pub fn write_qq<W: Write>(mut out: W, rows: &[QqRow], truth: f64) -> CliResult<()> {
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.z).collect();
    sorted.sort_by(f64::total_cmp);
    let scores = stats::normal_scores(rows.len());
    writeln!(out, "{QQ_HEADER}")?;
    for (k, r) in rows.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.trial, r.estimate, truth, r.std_error, r.z, sorted[k], scores[k]
        )?;
    }
    out.flush()?;
    Ok(())
}
