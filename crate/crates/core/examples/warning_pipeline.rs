//! The whole warning pipeline through the library API: simulate a credit
//! file, train both models, evaluate them on the held-out firms and grade
//! every firm into NORMAL / WATCH / ALERT.
//!
//! ```text
//! cargo run --release --example warning_pipeline [output-dir]
//! ```

use std::path::PathBuf;

use riskwarn::pipeline::{
    cmd_assess, cmd_evaluate, cmd_simulate, cmd_train, PipelineConfig, SimulateKind,
};
use riskwarn::RiskGrade;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("riskwarn-demo"));
    let cfg = PipelineConfig::new(dir.join("credit.csv"), dir.join("out"), 7);

    cmd_simulate(
        &SimulateKind::Credit(cfg.credit.clone()),
        cfg.seed,
        &cfg.input,
    )?;
    let summary = cmd_train(&cfg)?;
    println!(
        "trained: split {}/{}, bpnet mse {:.4} after {} epochs",
        summary.split.train.total, summary.split.test.total, summary.final_mse, summary.epochs
    );

    let eval = cmd_evaluate(&cfg, None)?;
    for (name, m) in [("bpnet", eval.bpnet), ("logit", eval.logit)] {
        println!(
            "{name}: {}/{} correct, type I {:.3}, type II {:.3}",
            m.correct(),
            m.total(),
            m.type_i_error,
            m.type_ii_error
        );
    }

    let reports = cmd_assess(&cfg, &cfg.input, None)?;
    for grade in [RiskGrade::Alert, RiskGrade::Watch, RiskGrade::Normal] {
        println!(
            "{grade}: {}",
            reports.iter().filter(|r| r.grade == grade).count()
        );
    }
    for r in reports.iter().take(5) {
        println!("  {} {} {}", r.id, r.grade, r.rationale);
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
