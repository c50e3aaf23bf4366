//! Data processing stage: CSV round trip, outlier cleaning, stratified
//! 112/23 split and min-max normalization fitted on the training half.
//!
//! ```text
//! cargo run --example data_prep
//! ```

use riskwarn::dataprep::{
    apply_normalizer, clean, fit_normalizer, stratified_split, CleanPolicy, Dataset, Label, Sample,
    SplitSpec,
};
use riskwarn::pipeline::{simulate_credit, CreditParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = simulate_credit(&CreditParams::default(), 1)?;

    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    let text = String::from_utf8(csv)?;
    println!("{}", text.lines().take(3).collect::<Vec<_>>().join("\n"));
    assert_eq!(Dataset::read_csv(text.as_bytes())?, data);

    // Corrupt one record and let the z-score filter catch it.
    let mut samples = data.samples().to_vec();
    samples.push(Sample {
        id: "BAD1".into(),
        features: vec![1.8, 0.45, 0.06, 0.10, 0.8, 500.0],
        label: Label::Normal,
    });
    let dirty = Dataset::new(data.feature_names().to_vec(), samples)?;
    let (cleaned, report) = clean(&dirty, &CleanPolicy::default())?;
    for f in &report.removed {
        println!("removed {} (features {:?})", f.id, f.features);
    }

    let (train, test) = stratified_split(&cleaned, &SplitSpec::by_count(18, 5, 1))?;
    println!(
        "train {} ({} NORMAL, {} ST), test {} ({} NORMAL, {} ST)",
        train.len(),
        train.count(Label::Normal),
        train.count(Label::St),
        test.len(),
        test.count(Label::Normal),
        test.count(Label::St)
    );

    let spec = fit_normalizer(&train)?;
    let normalized = apply_normalizer(&spec, &test)?;
    for (name, (lo, hi)) in train
        .feature_names()
        .iter()
        .zip(spec.min.iter().zip(&spec.max))
    {
        println!("  {name:<20} [{lo:.3}, {hi:.3}]");
    }
    println!(
        "first test row normalized: {:.3?}",
        normalized.samples()[0].features
    );
    Ok(())
}
