//! Train the three-layer network twice: as a default-risk classifier on
//! synthetic credit data, and as a one-step predictor on a sliding window of
//! an AR(1) series.
//!
//! ```text
//! cargo run --release --example bpnet_training
//! ```

use riskwarn::bpnet::{
    init_network, sliding_windows, train, train_on, Activation, BatchMode, Topology, TrainConfig,
};
use riskwarn::dataprep::{apply_normalizer, fit_normalizer, stratified_split, SplitSpec};
use riskwarn::pipeline::{simulate_credit, CreditParams};
use riskwarn::timeseries::{arma_simulate, ArmaModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = simulate_credit(&CreditParams::default(), 4)?;
    let (train_set, _) = stratified_split(&data, &SplitSpec::by_count(18, 5, 4))?;
    let train_set = apply_normalizer(&fit_normalizer(&train_set)?, &train_set)?;

    let config = TrainConfig {
        seed: 4,
        ..TrainConfig::default()
    };
    let net = init_network(
        Topology::with_default_width(train_set.dim())?,
        Activation::sigmoid(),
        Activation::sigmoid(),
        config.init_scale,
        config.seed,
    )?;
    let (net, history) = train(&net, &train_set, &config)?;
    println!(
        "classifier: n={} r={} status {:?}",
        net.n(),
        net.r(),
        history.status
    );
    for r in &history.records {
        println!("  epoch {:>3}  mse {:.5}", r.epoch, r.mse);
    }

    // Predict x[t] from the previous five values with a linear output unit.
    let series = arma_simulate(&ArmaModel::new(0.0, vec![0.8], vec![], 0.05)?, 600, 100, 9)?;
    let (inputs, targets) = sliding_windows(series.values(), 5);
    let window_config = TrainConfig {
        learning_rate: 0.05,
        max_epochs: 300,
        target_mse: 0.051,
        batch_mode: BatchMode::FullBatch,
        ..TrainConfig::default()
    };
    let predictor = init_network(
        Topology::new(5, 3),
        Activation::leaky_relu(),
        Activation::linear(),
        0.3,
        1,
    )?;
    let (predictor, h) = train_on(&predictor, &inputs, &targets, &window_config)?;
    println!(
        "window predictor: {} epochs, mse {:.4} -> {:.4} (noise variance 0.05)",
        h.epochs(),
        h.records[0].mse,
        h.final_mse()
    );
    let last = &inputs[inputs.len() - 1];
    println!(
        "next value after {:?}: {:.4}",
        last,
        predictor.predict(last)?
    );
    Ok(())
}
