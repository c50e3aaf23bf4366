//! Monte Carlo consistency checks for the ARMA/ARCH simulators and estimators.

use riskwarn::timeseries::{
    arch_fit, arch_simulate, arma_fit, arma_forecast, arma_residuals, arma_simulate, difference,
    ArchModel, ArmaModel, TimeSeries,
};

const SEEDS: u64 = 20;

fn fraction_within(values: &[f64], target: f64, band: f64) -> f64 {
    values
        .iter()
        .filter(|v| (*v - target).abs() <= band)
        .count() as f64
        / values.len() as f64
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

fn sample_variance(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

#[test]
fn ar1_simulation_matches_analytic_moments() {
    let model = ArmaModel::new(0.0, vec![0.7], vec![], 1.0).unwrap();
    let (means, rhos): (Vec<f64>, Vec<f64>) = (0..SEEDS)
        .map(|seed| {
            let s = arma_simulate(&model, 2000, 200, seed).unwrap();
            let mean = s.values().iter().sum::<f64>() / 2000.0;
            (mean, lag1_autocorrelation(s.values()))
        })
        .unzip();
    assert!(fraction_within(&means, 0.0, 0.2) >= 0.9, "{means:?}");
    assert!(fraction_within(&rhos, 0.7, 0.05) >= 0.9, "{rhos:?}");
}

#[test]
fn ar1_fit_recovers_phi() {
    let model = ArmaModel::new(0.0, vec![0.7], vec![], 1.0).unwrap();
    let est: Vec<f64> = (0..SEEDS)
        .map(|seed| {
            let s = arma_simulate(&model, 2000, 200, seed).unwrap();
            arma_fit(&s, 1, 0).unwrap().phi[0]
        })
        .collect();
    assert!(fraction_within(&est, 0.7, 0.05) >= 0.9, "{est:?}");
}

#[test]
fn ma1_fit_recovers_theta() {
    let model = ArmaModel::new(0.0, vec![], vec![0.5], 1.0).unwrap();
    let est: Vec<f64> = (0..SEEDS)
        .map(|seed| {
            let s = arma_simulate(&model, 4000, 200, 1000 + seed).unwrap();
            arma_fit(&s, 0, 1).unwrap().theta[0]
        })
        .collect();
    assert!(fraction_within(&est, 0.5, 0.1) >= 0.9, "{est:?}");
}

#[test]
fn arma11_fit_recovers_both_parts_and_sigma2() {
    let model = ArmaModel::new(0.5, vec![0.6], vec![0.3], 2.0).unwrap();
    let s = arma_simulate(&model, 5000, 200, 77).unwrap();
    let fit = arma_fit(&s, 1, 1).unwrap();
    assert!((fit.phi[0] - 0.6).abs() < 0.06, "{fit:?}");
    assert!((fit.theta[0] - 0.3).abs() < 0.08, "{fit:?}");
    assert!((fit.mean() - model.mean()).abs() < 0.2, "{fit:?}");
    assert!((fit.sigma2 - 2.0).abs() < 0.15, "{fit:?}");
}

#[test]
fn ar1_forecast_matches_closed_form() {
    for &(c, phi, last) in &[(0.0, 0.5, 2.0), (1.3, -0.4, 0.7), (-2.0, 0.95, 10.0)] {
        let model = ArmaModel::new(c, vec![phi], vec![], 1.0).unwrap();
        let hist = TimeSeries::new(vec![last]).unwrap();
        let none = TimeSeries::new(vec![]).unwrap();
        let f = arma_forecast(&model, &hist, &none, 25).unwrap();
        for (i, v) in f.iter().enumerate() {
            let h = (i + 1) as i32;
            let want = c * (1.0 - phi.powi(h)) / (1.0 - phi) + phi.powi(h) * last;
            assert!((v - want).abs() < 1e-12, "h={h}: {v} vs {want}");
        }
    }
}

#[test]
fn forecast_from_fitted_residuals() {
    let model = ArmaModel::new(0.0, vec![0.5], vec![0.4], 1.0).unwrap();
    let s = arma_simulate(&model, 1000, 100, 3).unwrap();
    let fit = arma_fit(&s, 1, 1).unwrap();
    let resid = arma_residuals(&fit, &s).unwrap();
    assert_eq!(resid.len(), s.len() - 1);
    let f = arma_forecast(&fit, &s, &resid, 5).unwrap();
    let last = *s.values().last().unwrap();
    let e_last = *resid.values().last().unwrap();
    let want1 = fit.c + fit.phi[0] * last + fit.theta[0] * e_last;
    assert!((f[0] - want1).abs() < 1e-12);
}

#[test]
fn differencing_composes() {
    let s = TimeSeries::new((0..30).map(|t| (t as f64 * 0.7).sin() * t as f64).collect()).unwrap();
    let twice = difference(&difference(&s, 1).unwrap(), 1).unwrap();
    assert_eq!(twice.values(), difference(&s, 2).unwrap().values());
}

#[test]
fn arch_constant_variance_simulation() {
    let model = ArchModel::new(0.0, 1.0, vec![0.0]).unwrap();
    for seed in 0..SEEDS {
        let e = arch_simulate(&model, 5000, seed).unwrap();
        let v = sample_variance(e.values());
        assert!((v - 1.0).abs() <= 0.1, "seed {seed}: {v}");
    }
}

#[test]
fn arch1_simulation_matches_unconditional_variance() {
    let model = ArchModel::new(0.0, 0.2, vec![0.5]).unwrap();
    let uncond = model.unconditional_variance().unwrap();
    assert!((uncond - 0.4).abs() < 1e-15);
    let vars: Vec<f64> = (0..SEEDS)
        .map(|seed| sample_variance(arch_simulate(&model, 5000, seed).unwrap().values()))
        .collect();
    let avg = vars.iter().sum::<f64>() / vars.len() as f64;
    assert!((avg - 0.4).abs() < 0.03, "{vars:?}");
}

#[test]
fn arch_simulation_is_deterministic() {
    let model = ArchModel::new(0.0, 0.2, vec![0.5]).unwrap();
    assert_eq!(arch_simulate(&model, 500, 4), arch_simulate(&model, 500, 4));
}

#[test]
fn arch1_fit_recovers_coefficients() {
    let model = ArchModel::new(0.0, 0.2, vec![0.5]).unwrap();
    let fits: Vec<ArchModel> = (0..SEEDS)
        .map(|seed| arch_fit(&arch_simulate(&model, 4000, 500 + seed).unwrap(), 1).unwrap())
        .collect();
    let a0: Vec<f64> = fits.iter().map(|m| m.a0).collect();
    let a1: Vec<f64> = fits.iter().map(|m| m.a[0]).collect();
    assert!(fraction_within(&a0, 0.2, 0.1) >= 0.9, "a0 {a0:?}");
    assert!(fraction_within(&a1, 0.5, 0.1) >= 0.9, "a1 {a1:?}");
}

#[test]
fn arch1_fit_under_iid_null() {
    let model = ArchModel::new(0.0, 1.0, vec![0.0]).unwrap();
    let a1: Vec<f64> = (0..SEEDS)
        .map(|seed| {
            arch_fit(&arch_simulate(&model, 4000, 900 + seed).unwrap(), 1)
                .unwrap()
                .a[0]
        })
        .collect();
    assert!(a1.iter().all(|v| v.abs() <= 0.08), "{a1:?}");
}

#[test]
fn arch_fit_scales_with_residual_scale() {
    let model = ArchModel::new(0.0, 0.2, vec![0.5]).unwrap();
    let e = arch_simulate(&model, 4000, 42).unwrap();
    let base = arch_fit(&e, 1).unwrap();
    for k in [0.1, 3.0, 250.0] {
        let scaled = TimeSeries::new(e.values().iter().map(|v| v * k).collect()).unwrap();
        let fit = arch_fit(&scaled, 1).unwrap();
        assert!((fit.a0 / (k * k) - base.a0).abs() < 1e-9 * base.a0.max(1.0));
        assert!((fit.a[0] - base.a[0]).abs() < 1e-9);
    }
}
