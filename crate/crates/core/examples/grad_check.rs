//! Check backpropagation against central finite differences for every
//! hidden activation on a batch of random networks.
//!
//! ```text
//! cargo run --example grad_check
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskwarn::bpnet::{grad_check, init_network, Activation, Topology};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hidden = [
        Activation::sigmoid(),
        Activation::linear(),
        Activation::relu(),
        Activation::leaky_relu(),
        Activation::prelu(0.2)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for act in hidden {
        let mut worst = 0.0_f64;
        let mut skipped = 0;
        for seed in 0..20 {
            let n = rng.random_range(3..=8);
            let r = rng.random_range(2..n);
            let net = init_network(Topology::new(n, r), act, Activation::sigmoid(), 1.0, seed)?;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let check = grad_check(&net, &x, rng.random_range(0.0..1.0), 1e-5)?;
            worst = worst.max(check.max_relative_error);
            skipped += check.skipped;
        }
        println!(
            "{:<10?} max relative error {worst:.2e} ({skipped} kink-straddling parameters skipped)",
            act.kind
        );
    }
    Ok(())
}
