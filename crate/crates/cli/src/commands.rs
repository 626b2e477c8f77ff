//! Subcommand entry points.

use std::io::Write;

use ifest::{derive_seed, estimate, AnalyticDensity, Estimate, FunctionalSpec, Kind, Method};
use serde_json::json;

use crate::args::{AffinityArgs, BenchArgs, EstimateArgs, GenArgs, QqArgs};
use crate::error::{CliError, CliResult};
use crate::io::{open_output, read_samples, write_samples};
use crate::stats;
use crate::study::{run_bench, run_qq, write_bench, write_qq, Study};

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let spec = args.functional.spec()?;
    spec.check_arity(args.y.is_some())?;
    let cfg = args.config.config(args.seed)?;
    if let Some(level) = args.ci {
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::usage("--ci must lie in (0, 1)"));
        }
    }
    let x = read_samples(&args.x, args.rescale)?;
    let y = args.y.as_deref().map(|p| read_samples(p, args.rescale)).transpose()?;
    let e = estimate(&spec, args.method, &x, y.as_ref(), &cfg)?;
    let level = args.ci.unwrap_or(0.95);
    let ci = e.ci(level).ok();

    let clamp = (cfg.clamp.lower(), cfg.clamp.upper());
    let grid = cfg.grid_for(x.dim())?;
    let mut out = std::io::stdout().lock();
    if args.json {
        let finite = |v: f64| if v.is_finite() { json!(v) } else { json!(null) };
        let obj = json!({
            "functional": spec.kind().tag(),
            "alpha": spec.alpha(),
            "method": e.method.tag(),
            "value": e.value,
            "variance_f": e.variance_f,
            "variance_g": e.variance_g,
            "std_error": e.std_error(),
            "ci_level": level,
            "ci": ci.map_or(json!("DEGENERATE"), |(lo, hi)| json!([lo, hi])),
            "degenerate": e.degenerate,
            "conjectural": e.conjectural,
            "n": e.n_used,
            "m": e.m_used,
            "bandwidths": e.bandwidths,
            "kernel_order": e.kernel_order,
            "clamp": [clamp.0, finite(clamp.1)],
            "boundary": format!("{:?}", cfg.boundary).to_lowercase(),
            "grid": grid.points_per_axis(),
            "variance_source": format!("{:?}", e.variance_source).to_lowercase(),
            "seed": e.seed,
        });
        writeln!(out, "{obj}")?;
    } else {
        write_human(&mut out, &spec, &e, level, ci, clamp, grid.points_per_axis(), &cfg)?;
    }
    out.flush()?;
    if args.ci.is_some() && ci.is_none() {
        return Err(CliError::Degenerate(
            "influence variances vanish; no confidence interval".into(),
        ));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_human<W: Write>(
    out: &mut W,
    spec: &FunctionalSpec,
    e: &Estimate,
    level: f64,
    ci: Option<(f64, f64)>,
    clamp: (f64, f64),
    grid: usize,
    cfg: &ifest::EstimatorConfig,
) -> CliResult<()> {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    writeln!(out, "functional      {}", spec.kind())?;
    if let Some(a) = spec.alpha() {
        writeln!(out, "alpha           {a}")?;
    }
    writeln!(out, "method          {}", e.method)?;
    writeln!(out, "value           {}", e.value)?;
    writeln!(out, "variance_f      {}", e.variance_f)?;
    if let Some(vg) = e.variance_g {
        writeln!(out, "variance_g      {vg}")?;
    }
    writeln!(out, "std_error       {}", e.std_error())?;
    match ci {
        Some((lo, hi)) => writeln!(out, "ci              {level}: [{lo}, {hi}]")?,
        None => writeln!(out, "ci              DEGENERATE")?,
    }
    if e.conjectural {
        writeln!(out, "note            leave-one-out intervals assume conjectured normality")?;
    }
    writeln!(out, "n               {}", e.n_used)?;
    if let Some(m) = e.m_used {
        writeln!(out, "m               {m}")?;
    }
    writeln!(out, "bandwidths      {}", join(&e.bandwidths))?;
    writeln!(out, "kernel_order    {}", e.kernel_order)?;
    writeln!(out, "clamp           {},{}", clamp.0, clamp.1)?;
    writeln!(out, "boundary        {:?}", cfg.boundary)?;
    writeln!(out, "grid            {grid}")?;
    writeln!(out, "variance_source {:?}", e.variance_source)?;
    writeln!(out, "seed            {}", e.seed)?;
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    if args.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let spec = args.functional.spec()?;
    let cfg = args.config.config(args.seed)?;
    let study = Study::new(spec, &args.dist, args.dist2.as_deref())?;
    let rows = run_bench(&study, &args.methods, &args.n_list, args.trials, args.seed, &cfg, args.timing)?;
    write_bench(open_output(args.out.as_deref())?, &rows)
}

pub fn cmd_qq(args: &QqArgs) -> CliResult<()> {
    let spec = args.functional.spec()?;
    let cfg = args.config.config(args.seed)?;
    let study = Study::new(spec, &args.dist, args.dist2.as_deref())?;
    let m = args.m.unwrap_or(args.n);
    let rows = run_qq(&study, args.method, args.n, m, args.trials, args.seed, &cfg)?;
    write_qq(open_output(args.out.as_deref())?, &rows, study.truth)?;
    let z: Vec<f64> = rows.iter().map(|r| r.z).collect();
    eprintln!(
        "truth {} mean_z {:.4} skewness {:.4} ks_distance {:.4}",
        study.truth,
        stats::mean(&z),
        stats::skewness(&z),
        stats::ks_normal(&z)
    );
    Ok(())
}

pub fn cmd_affinity(args: &AffinityArgs) -> CliResult<()> {
    let kind = Kind::parse(&args.divergence)
        .filter(|k| {
            matches!(
                k,
                Kind::HellingerDivergence | Kind::TsallisDivergence | Kind::RenyiDivergence
            )
        })
        .ok_or_else(|| {
            CliError::usage("--divergence must be hellinger, tsallis_div or renyi_div")
        })?;
    let mut spec = FunctionalSpec::new(kind);
    if let Some(a) = args.alpha {
        spec = spec.with_alpha(a);
    }
    spec.validate()?;
    if args.method == Method::Plugin {
        return Err(CliError::usage("--method must be loo or ds"));
    }
    if !(args.scale.is_finite() && args.scale >= 0.0) {
        return Err(CliError::usage("--scale must be a non-negative number"));
    }
    let cfg = args.config.config(args.seed)?;
    let sets = args
        .inputs
        .iter()
        .map(|p| read_samples(p, args.rescale))
        .collect::<CliResult<Vec<_>>>()?;
    let matrix = affinity_matrix(&spec, args.method, &sets, args.scale, &cfg)?;
    let mut out = open_output(args.out.as_deref())?;
    for row in &matrix {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// `A_ij = exp(-scale * max(0, (D(i, j) + D(j, i)) / 2))`, `A_ii = 1`.
pub fn affinity_matrix(
    spec: &FunctionalSpec,
    method: Method,
    sets: &[ifest::SampleSet],
    scale: f64,
    cfg: &ifest::EstimatorConfig,
) -> CliResult<Vec<Vec<f64>>> {
    let k = sets.len();
    let mut a = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let pair_cfg = cfg.clone().with_seed(derive_seed(cfg.seed, (i * k + j) as u64));
            let dij = estimate(spec, method, &sets[i], Some(&sets[j]), &pair_cfg)?.value;
            let dji = estimate(spec, method, &sets[j], Some(&sets[i]), &pair_cfg)?.value;
            let v = (-scale * (0.5 * (dij + dji)).max(0.0)).exp();
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    Ok(a)
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    if args.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let dist = AnalyticDensity::parse(&args.dist)?;
    let samples = dist.sample(args.n, args.seed);
    write_samples(open_output(args.out.as_deref())?, &samples)
}
