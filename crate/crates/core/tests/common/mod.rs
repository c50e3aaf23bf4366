#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskwarn::dataprep::{
    apply_normalizer, clean, fit_normalizer, stratified_split, CleanPolicy, Dataset, Label, Sample,
    SplitSpec,
};

/// Random labelled dataset with at least two samples per class. Features use
/// mixed scales below 100 in magnitude, with occasional constant columns and
/// repeated values.
pub fn random_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let n = rng.random_range(6..60);
    let dim = rng.random_range(1..6);
    let scales: Vec<f64> = (0..dim)
        .map(|_| 10f64.powi(rng.random_range(-3..=2)))
        .collect();
    let offsets: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let constant: Vec<bool> = (0..dim).map(|_| rng.random_bool(0.1)).collect();
    let mut labels: Vec<Label> = (0..n)
        .map(|_| {
            if rng.random_bool(0.3) {
                Label::St
            } else {
                Label::Normal
            }
        })
        .collect();
    labels[0] = Label::St;
    labels[1] = Label::St;
    labels[2] = Label::Normal;
    labels[3] = Label::Normal;
    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let features = (0..dim)
                .map(|j| {
                    if constant[j] {
                        offsets[j] * scales[j]
                    } else if rng.random_bool(0.1) {
                        scales[j]
                    } else {
                        (offsets[j] + rng.random_range(-1.0..1.0)) * scales[j]
                    }
                })
                .collect();
            Sample {
                id: format!("r{i:03}"),
                features,
                label,
            }
        })
        .collect();
    Dataset::new((0..dim).map(|j| format!("f{j}")).collect(), samples).unwrap()
}

fn ids(d: &Dataset) -> BTreeSet<String> {
    d.samples().iter().map(|s| s.id.clone()).collect()
}

/// Checks the data-processing laws on one dataset, returning the first
/// violation.
pub fn check_dataprep_invariants(data: &Dataset, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Split partition laws, for count and fraction modes.
    let normal = data.count(Label::Normal);
    let st = data.count(Label::St);
    let specs = [
        SplitSpec::by_count(rng.random_range(0..=normal), rng.random_range(0..=st), seed),
        SplitSpec::by_fraction(rng.random_range(0.05..0.95), seed),
    ];
    for spec in specs {
        let (train, test) =
            stratified_split(data, &spec).map_err(|e| format!("split {spec:?}: {e}"))?;
        let (a, b) = (ids(&train), ids(&test));
        if !a.is_disjoint(&b) {
            return Err(format!("split {spec:?}: train and test overlap"));
        }
        if a.union(&b).cloned().collect::<BTreeSet<_>>() != ids(data) {
            return Err(format!("split {spec:?}: union differs from input"));
        }
        if train.len() + test.len() != data.len() {
            return Err(format!("split {spec:?}: sizes do not add up"));
        }

        // Range law: fitted on train, applied to both halves.
        if train.is_empty() {
            continue;
        }
        let norm = fit_normalizer(&train).map_err(|e| e.to_string())?;
        for part in [&train, &test] {
            let out = apply_normalizer(&norm, part).map_err(|e| e.to_string())?;
            for s in out.samples() {
                if s.features.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(format!("normalized value outside [0,1] in {}", s.id));
                }
            }
        }
    }

    // Invertibility and monotonicity when fitted and applied to the same data.
    let norm = fit_normalizer(data).map_err(|e| e.to_string())?;
    let out = apply_normalizer(&norm, data).map_err(|e| e.to_string())?;
    for j in 0..data.dim() {
        if norm.constant[j] {
            if out.samples().iter().any(|s| s.features[j] != 0.0) {
                return Err(format!("constant feature {j} not mapped to 0"));
            }
            continue;
        }
        let (lo, hi) = (norm.min[j], norm.max[j]);
        for (raw, scaled) in data.samples().iter().zip(out.samples()) {
            let back = lo + scaled.features[j] * (hi - lo);
            if (back - raw.features[j]).abs() > 1e-12 {
                return Err(format!(
                    "feature {j} of {}: {} reconstructed as {back}",
                    raw.id, raw.features[j]
                ));
            }
        }
        let mut pairs: Vec<(f64, f64)> = data
            .samples()
            .iter()
            .zip(out.samples())
            .map(|(r, s)| (r.features[j], s.features[j]))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(format!("feature {j}: normalization not monotone"));
        }
    }

    // Exact CSV round trip.
    let mut buf = Vec::new();
    data.write_csv(&mut buf).map_err(|e| e.to_string())?;
    let back = Dataset::read_csv(buf.as_slice()).map_err(|e| e.to_string())?;
    if &back != data {
        return Err("CSV round trip changed the dataset".into());
    }

    // Cleaning is idempotent wherever the second pass meets the
    // three-sample precondition.
    let cutoff = rng.random_range(1.5..4.5);
    let policy = CleanPolicy {
        zscore_cutoff: cutoff,
    };
    let (once, _) = clean(data, &policy).map_err(|e| e.to_string())?;
    if once.len() < 3 {
        return Ok(());
    }
    let (twice, report) = clean(&once, &policy).map_err(|e| e.to_string())?;
    if !report.removed.is_empty() || twice != once {
        return Err(format!("clean at cutoff {cutoff} not idempotent"));
    }
    Ok(())
}
