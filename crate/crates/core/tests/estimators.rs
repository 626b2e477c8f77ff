use ifest::estimators::{estimate_cond_tsallis_variance, estimate_power_integral};
use ifest::synthdata::oracle_truth;
use ifest::{
    confidence_interval, estimate, estimate_ds, estimate_loo, estimate_plugin, legendre_kernel,
    AnalyticDensity, Boundary, Clamp, Error, Estimate, EstimatorConfig, FunctionalSpec, GridSpec,
    KdeModel, Kind, Method, SampleSet, VarianceSource,
};

fn draw(dist: &str, n: usize, seed: u64) -> SampleSet {
    AnalyticDensity::parse(dist).unwrap().sample(n, seed)
}

fn cfg(seed: u64) -> EstimatorConfig {
    EstimatorConfig::default().with_seed(seed)
}

#[test]
fn ds_entropy_of_uniform() {
    let e = estimate_ds(&FunctionalSpec::shannon_entropy(), &draw("uniform", 2000, 1), None, &cfg(1)).unwrap();
    assert!(e.value.abs() <= 0.05, "{}", e.value);
    assert_eq!(e.method, Method::Ds);
    assert!(!e.degenerate && e.variance_g.is_none());
}

#[test]
fn ds_hellinger_of_identical_samples_is_degenerate() {
    let x = draw("f2", 2000, 2);
    let e = estimate_ds(&FunctionalSpec::hellinger(), &x, Some(&x), &cfg(2)).unwrap();
    assert!(e.value.abs() <= 0.05, "{}", e.value);
    assert!(e.degenerate);
    assert!(matches!(e.ci(0.9), Err(Error::DegenerateCase)));
}

#[test]
fn too_few_samples() {
    let x = draw("uniform", 3, 3);
    for m in [Method::Ds, Method::Loo, Method::Plugin] {
        let r = estimate(&FunctionalSpec::shannon_entropy(), m, &x, None, &cfg(0));
        assert!(matches!(r, Err(Error::TooFewSamples { .. })), "{m}");
    }
}

#[test]
fn arity_and_dimension_errors() {
    let x = draw("uniform", 100, 4);
    let y = draw("uniformx2", 100, 5);
    assert!(estimate_loo(&FunctionalSpec::kl(), &x, None, &cfg(0)).is_err());
    assert!(matches!(
        estimate_loo(&FunctionalSpec::kl(), &x, Some(&y), &cfg(0)),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn loo_kl_of_a_sample_with_itself() {
    let x = draw("f2", 500, 6);
    let e = estimate_loo(&FunctionalSpec::kl(), &x, Some(&x), &cfg(6)).unwrap();
    assert!(e.value.abs() <= 0.05, "{}", e.value);
    assert!(e.conjectural);
}

#[test]
fn loo_entropy_matches_refits() {
    let x = draw("f1", 60, 7);
    let h = 0.3;
    let e = estimate_loo(&FunctionalSpec::shannon_entropy(), &x, None, &cfg(7).with_bandwidths(&[h])).unwrap();
    let k = legendre_kernel(2);
    let mut total = 0.0;
    for i in 0..x.len() {
        let rows: Vec<&[f64]> = x.rows().enumerate().filter(|&(j, _)| j != i).map(|(_, r)| r).collect();
        let m = KdeModel::fit(&SampleSet::from_rows(&rows).unwrap(), h, &k, Clamp::none(), Boundary::Mirror).unwrap();
        total -= m.eval(x.row(i)).unwrap().ln();
    }
    let brute = total / x.len() as f64;
    assert!((e.value - brute).abs() < 1e-10 * brute.abs().max(1.0), "{} vs {brute}", e.value);
}

#[test]
fn loo_kl_near_the_oracle() {
    let f2 = AnalyticDensity::parse("f2").unwrap();
    let truth = oracle_truth(
        &FunctionalSpec::kl(),
        &f2,
        Some(&AnalyticDensity::uniform(1)),
        &GridSpec::oracle_for(1).unwrap(),
    )
    .unwrap();
    let e = estimate_loo(&FunctionalSpec::kl(), &draw("f2", 2000, 8), Some(&draw("uniform", 2000, 9)), &cfg(8))
        .unwrap();
    assert!((e.value - truth).abs() <= 0.05, "{} vs {truth}", e.value);
}

#[test]
fn plugin_examples() {
    let e = estimate_plugin(&FunctionalSpec::shannon_entropy(), &draw("uniform", 2000, 10), None, &cfg(10)).unwrap();
    assert!(e.value.abs() <= 0.1);
    assert_eq!((e.variance_f, e.degenerate), (0.0, false));

    let x = draw("f2", 1000, 11);
    let e = estimate_plugin(&FunctionalSpec::hellinger(), &x, Some(&x), &cfg(11)).unwrap();
    assert!(e.value.abs() <= 1e-3, "{}", e.value);

    let x4 = draw("uniformx4", 200, 12);
    let e = estimate_plugin(&FunctionalSpec::shannon_entropy(), &x4, None, &cfg(12).with_bandwidths(&[0.5]))
        .unwrap();
    assert!(e.value.is_finite());
}

fn fixed(value: f64, variance_f: f64, n: usize) -> Estimate {
    Estimate {
        value,
        variance_f,
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
fn confidence_intervals() {
    let e = fixed(0.0, 1.0, 100);
    let (lo, hi) = confidence_interval(&e, 0.95).unwrap();
    assert!((lo + 0.196).abs() < 1e-3 && (hi - 0.196).abs() < 1e-3);
    let (lo99, hi99) = e.ci(0.99).unwrap();
    assert!(lo99 < lo && hi99 > hi);
    assert!(e.ci(1.0).is_err() && e.ci(0.0).is_err());
    let mut d = e.clone();
    d.degenerate = true;
    assert!(matches!(d.ci(0.95), Err(Error::DegenerateCase)));
}

#[test]
fn power_integral_examples() {
    let x = draw("f2", 2000, 13);
    let s = estimate_power_integral(0.3, 0.7, &x, &x, &cfg(13)).unwrap();
    assert!((0.9..=1.1).contains(&s.value), "{}", s.value);

    let y = draw("uniform", 2000, 14);
    let s = estimate_power_integral(0.5, 0.5, &x, &y, &cfg(14)).unwrap();
    let hel = estimate_loo(&FunctionalSpec::hellinger(), &x, Some(&y), &cfg(14)).unwrap();
    assert!((2.0 - 2.0 * s.value - hel.value).abs() <= 0.02, "{} vs {}", 2.0 - 2.0 * s.value, hel.value);

    assert!(matches!(estimate_power_integral(2.0, 0.5, &x, &y, &cfg(0)), Err(Error::BadExponents { .. })));
    assert!(matches!(estimate_power_integral(0.3, 0.3, &x, &y, &cfg(0)), Err(Error::BadExponents { .. })));
}

#[test]
fn tsallis_variance_vanishes_at_equality() {
    let x = draw("f2", 2000, 15);
    let v = estimate_cond_tsallis_variance(&x, &x, 0.75, &cfg(15)).unwrap();
    assert!(v.abs() <= 0.1 * 4000.0 / 2000.0, "{v}");
    assert!(matches!(estimate_cond_tsallis_variance(&x, &x, 0.5, &cfg(0)), Err(Error::BadAlpha(_))));
}

#[test]
fn tsallis_variance_routes_agree() {
    let spec = FunctionalSpec::new(Kind::TsallisDivergence).with_alpha(0.75);
    for trial in 0..5 {
        let x = draw("f2", 1000, 100 + trial);
        let y = draw("uniform", 1000, 200 + trial);
        let c = cfg(trial);
        let specific = estimate_cond_tsallis_variance(&x, &y, 0.75, &c).unwrap();
        let e = estimate_loo(&spec, &x, Some(&y), &c).unwrap();
        let generic = 2.0 * e.variance_f + 2.0 * e.variance_g.unwrap();
        let ratio = specific / generic;
        assert!((0.5..=2.0).contains(&ratio), "trial {trial}: {specific} vs {generic}");
    }
}

#[test]
fn estimates_are_reproducible() {
    let x = draw("f1xuniform", 400, 16);
    let spec = FunctionalSpec::new(Kind::ShannonMi);
    let a = estimate_ds(&spec, &x, None, &cfg(3)).unwrap();
    let b = estimate_ds(&spec, &x, None, &cfg(3)).unwrap();
    assert_eq!(a, b);
}
