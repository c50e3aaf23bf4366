//! Volatility clustering with an ARCH(1) model: simulate residuals, fit the
//! variance equation and read off the one-step conditional variance.
//!
//! ```text
//! cargo run --example arch_volatility
//! ```

use riskwarn::timeseries::{arch_fit, arch_simulate, arch_variance, ArchModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = ArchModel::new(0.0, 0.2, vec![0.5])?;
    let e = arch_simulate(&truth, 4000, 5)?;
    let fit = arch_fit(&e, 1)?;
    println!("true   a0={} a1={}", truth.a0, truth.a[0]);
    println!("fitted a0={:.3} a1={:.3}", fit.a0, fit.a[0]);
    match fit.unconditional_variance() {
        Some(v) => println!(
            "unconditional variance {v:.3} (true {:.3})",
            truth.unconditional_variance().unwrap_or(f64::NAN)
        ),
        None => println!("fitted model has no finite unconditional variance"),
    }

    let sample_var = e.values().iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
    println!("sample variance {sample_var:.3}");

    // The largest shock in the sample drives the highest next-step variance.
    let (at, shock) = e
        .values()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("non-empty series");
    let upto = riskwarn::TimeSeries::new(e.values()[..=at].to_vec())?;
    println!(
        "after shock {shock:.3} at t={at}: next variance {:.3}",
        arch_variance(&fit, &upto)?
    );
    Ok(())
}
