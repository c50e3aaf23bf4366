//! Simulate an ARMA(1,1) series, recover its parameters by conditional
//! least squares and forecast ten steps ahead.
//!
//! ```text
//! cargo run --example arma_forecast
//! ```

use riskwarn::timeseries::{
    arma_fit, arma_forecast, arma_residuals, arma_simulate, difference, ArmaModel,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = ArmaModel::new(0.5, vec![0.6], vec![0.3], 1.0)?;
    let series = arma_simulate(&truth, 3000, 200, 11)?;
    println!(
        "true:   c={} phi={:?} theta={:?} sigma2={}",
        truth.c, truth.phi, truth.theta, truth.sigma2
    );

    let fit = arma_fit(&series, 1, 1)?;
    println!(
        "fitted: c={:.3} phi=[{:.3}] theta=[{:.3}] sigma2={:.3} mean={:.3}",
        fit.c,
        fit.phi[0],
        fit.theta[0],
        fit.sigma2,
        fit.mean()
    );

    let residuals = arma_residuals(&fit, &series)?;
    let forecast = arma_forecast(&fit, &series, &residuals, 10)?;
    for (h, v) in forecast.iter().enumerate() {
        println!("h={:>2}  {v:.4}", h + 1);
    }
    println!("long-run mean {:.4}", fit.mean());

    // A random walk becomes stationary white noise after one difference.
    let walk = ArmaModel::new(0.0, vec![], vec![], 1.0)?;
    let steps = arma_simulate(&walk, 500, 0, 3)?;
    let mut level = 0.0;
    let path: Vec<f64> = steps
        .values()
        .iter()
        .map(|e| {
            level += e;
            level
        })
        .collect();
    let diffed = difference(&riskwarn::TimeSeries::new(path)?, 1)?;
    let ar = arma_fit(&diffed, 1, 0)?;
    println!(
        "AR(1) on differenced random walk: phi={:.3} (stationary: {})",
        ar.phi[0],
        ar.is_stationary()
    );
    Ok(())
}
