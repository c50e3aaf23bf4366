//! Logistic default scoring on synthetic credit data: check the features for
//! collinearity, fit by gradient ascent and score the held-out firms.
//!
//! ```text
//! cargo run --example logit_scoring
//! ```

use riskwarn::dataprep::{apply_normalizer, fit_normalizer, stratified_split, SplitSpec};
use riskwarn::logit::{classify, fit_logit, multicollinearity_report, predict_proba, FitConfig};
use riskwarn::pipeline::{simulate_credit, CreditParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = simulate_credit(&CreditParams::default(), 21)?;
    let (train, test) = stratified_split(&data, &SplitSpec::by_count(18, 5, 21))?;
    let spec = fit_normalizer(&train)?;
    let train = apply_normalizer(&spec, &train)?;
    let test = apply_normalizer(&spec, &test)?;

    let report = multicollinearity_report(&train)?;
    if report.flagged.is_empty() {
        println!("no feature pairs above the collinearity threshold");
    }
    for pair in &report.flagged {
        println!(
            "collinear: {} / {} r={:.3}",
            pair.first, pair.second, pair.correlation
        );
    }

    // A small ridge penalty keeps coefficients finite on separable data.
    let config = FitConfig {
        l2: 0.05,
        ..FitConfig::default()
    };
    let fit = fit_logit(&train, &config)?;
    println!(
        "fitted in {} iterations (converged: {}), log-likelihood {:.4}",
        fit.iterations,
        fit.converged,
        fit.trace.last().copied().unwrap_or(f64::NAN)
    );
    println!("C0 = {:.3}", fit.model.c0);
    for (name, c) in train.feature_names().iter().zip(&fit.model.coeffs) {
        println!("  {name:<20} {c:>8.3}");
    }

    for s in test.samples().iter().take(8) {
        let p = predict_proba(&fit.model, &s.features)?;
        println!(
            "{} label={} p={p:.3} -> {:?}",
            s.id,
            s.label,
            classify(&fit.model, &s.features)?
        );
    }
    Ok(())
}
