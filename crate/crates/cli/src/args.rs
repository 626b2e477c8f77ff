//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ifest::{
    Bandwidth, Boundary, Clamp, EstimatorConfig, FunctionalSpec, Kind, Method,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "ifest",
    version,
    about = "Influence-function corrected entropy, divergence and mutual information estimators",
    after_help = "Set IFEST_THREADS to cap the worker count (0 = all cores)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate one functional from sample files.
    Estimate(EstimateArgs),
    /// Error-versus-n study on synthetic data; one CSV row per trial.
    Bench(BenchArgs),
    /// Standardized estimates over repeated trials, for normal QQ plots.
    Qq(QqArgs),
    /// Pairwise divergence affinity matrix exp(-scale * D) of sample files.
    Affinity(AffinityArgs),
    /// Draw a synthetic sample.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FunctionalArgs {
    /// Functional tag (shannon_entropy, kl, hellinger, tsallis_div, ...).
    #[arg(long)]
    pub functional: String,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Width of the trailing conditioning block (default 1 for conditional
    /// kinds).
    #[arg(long)]
    pub zdim: Option<usize>,
    /// Width of the Y block for mutual informations.
    #[arg(long)]
    pub ydim: Option<usize>,
    /// f-divergence generator: kl, reverse_kl, hellinger, chi_squared, js.
    #[arg(long)]
    pub phi: Option<String>,
    /// Exponents `a,b` for power_integral.
    #[arg(long)]
    pub exponents: Option<String>,
}

impl FunctionalArgs {
    pub fn spec(&self) -> CliResult<FunctionalSpec> {
        let kind = Kind::parse(&self.functional)
            .ok_or_else(|| CliError::usage(format!("unknown functional '{}'", self.functional)))?;
        let mut spec = FunctionalSpec::new(kind);
        if let Some(a) = self.alpha {
            if !kind.needs_alpha() {
                return Err(CliError::usage(format!("{kind} takes no --alpha")));
            }
            spec = spec.with_alpha(a);
        }
        if kind.is_conditional() {
            spec = spec.with_z_dim(self.zdim.unwrap_or(1));
        } else if let Some(z) = self.zdim {
            spec = spec.with_z_dim(z);
        }
        if let Some(y) = self.ydim {
            spec = spec.with_y_dim(y);
        }
        match (&self.phi, kind) {
            (Some(name), Kind::FDivergence) => spec = spec.with_phi_preset(name)?,
            (None, Kind::FDivergence) => spec = spec.with_phi_preset("kl")?,
            (Some(_), _) => return Err(CliError::usage(format!("{kind} takes no --phi"))),
            _ => {}
        }
        if let Some(ab) = &self.exponents {
            let v = parse_list(ab, "--exponents")?;
            if v.len() != 2 {
                return Err(CliError::usage("--exponents takes two values a,b"));
            }
            spec = spec.with_exponents(v[0], v[1]);
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// `auto` (cross-validated) or fixed `h` / `h1,h2,...` per sample set.
    #[arg(long, default_value = "auto")]
    pub bandwidth: String,
    #[arg(long, default_value_t = 2)]
    pub kernel_order: usize,
    /// Truncation bounds `B',B` (`inf` allowed for B).
    #[arg(long)]
    pub clamp: Option<String>,
    /// Quadrature points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Boundary correction: mirror or none.
    #[arg(long, default_value = "mirror")]
    pub boundary: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

impl ConfigArgs {
    pub fn config(&self, seed: u64) -> CliResult<EstimatorConfig> {
        let mut cfg = EstimatorConfig::default().with_seed(seed);
        if !self.bandwidth.trim().eq_ignore_ascii_case("auto") {
            let h = parse_list(&self.bandwidth, "--bandwidth")?;
            if h.is_empty() || h.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(CliError::usage("--bandwidth values must be positive"));
            }
            cfg.bandwidth = Bandwidth::Fixed(h);
        }
        if self.kernel_order % 2 == 1 || self.kernel_order > 6 {
            return Err(CliError::usage("--kernel-order must be 0, 2, 4 or 6"));
        }
        cfg.kernel_order = self.kernel_order;
        if let Some(c) = &self.clamp {
            let v = parse_list(c, "--clamp")?;
            if v.len() != 2 {
                return Err(CliError::usage("--clamp takes two values B',B"));
            }
            cfg.clamp = Clamp::new(v[0], v[1])?;
        }
        cfg.grid_points = self.grid;
        cfg.boundary = match self.boundary.trim().to_ascii_lowercase().as_str() {
            "mirror" => Boundary::Mirror,
            "none" => Boundary::None,
            other => return Err(CliError::usage(format!("unknown boundary '{other}'"))),
        };
        if self.folds < 2 {
            return Err(CliError::usage("--folds must be at least 2"));
        }
        cfg.folds = self.folds;
        Ok(cfg)
    }
}

pub fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method '{s}' (ds, loo, plugin)"))
}

fn parse_list(s: &str, flag: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("{flag}: '{t}' is not a number")))
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub functional: FunctionalArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long, default_value = "ds", value_parser = parse_method)]
    pub method: Method,
    /// Confidence level; a degenerate estimate then exits with status 4.
    #[arg(long)]
    pub ci: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print one JSON object instead of aligned text.
    #[arg(long)]
    pub json: bool,
    /// Min-max rescale every column onto [0.01, 0.99] before fitting.
    #[arg(long)]
    pub rescale: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub functional: FunctionalArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Distribution of X, e.g. f1, f2xuniform, uniformx3.
    #[arg(long)]
    pub dist: String,
    /// Distribution of Y for two-sample functionals.
    #[arg(long)]
    pub dist2: Option<String>,
    #[arg(long, default_value = "100,400,1600", value_delimiter = ',')]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value = "ds,loo,plugin", value_delimiter = ',', value_parser = parse_method)]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill the seconds column with wall-clock times (output is then no
    /// longer reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct QqArgs {
    #[command(flatten)]
    pub functional: FunctionalArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub dist2: Option<String>,
    /// Points per trial in X.
    #[arg(long)]
    pub n: usize,
    /// Points per trial in Y (default: n).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value = "ds", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AffinityArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated sample files.
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    /// hellinger, tsallis_div or renyi_div.
    #[arg(long, default_value = "hellinger")]
    pub divergence: String,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value = "loo", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub rescale: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
