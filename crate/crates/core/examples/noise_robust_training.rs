//! Train the window classifier on labels with 40% symmetric noise using
//! cross-entropy, GCE and PHGCE, and score each on clean labels.

use rand::{Rng, SeedableRng};
use weakanno::ingest::WindowingSpec;
use weakanno::synth::{sensor_suite, SensorSuiteConfig};
use weakanno::transfer::{make_windows, sample_track, LabeledWindowSet};
use weakanno::weaktrain::{evaluate, train, LossKind, LossSpec, TrainConfig};

fn main() -> weakanno::error::Result<()> {
    let mut suite = SensorSuiteConfig::default().with_seed(8);
    suite.participants = 2;
    let parts = sensor_suite(&suite)?;
    let windows = |i: usize| {
        let s = parts[i].sensors.as_ref().unwrap();
        make_windows(s, &sample_track(&parts[i].track, s), WindowingSpec::SENSOR)
    };
    let (clean, test) = (windows(0)?, windows(1)?);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let a = clean.num_labels;
    let noisy: Vec<_> = clean
        .labels
        .iter()
        .map(|&y| if rng.random::<f64>() < 0.4 { (y + rng.random_range(1..a)) % a } else { y })
        .collect();
    let noisy: LabeledWindowSet = clean.relabeled(noisy, "noisy")?;

    let cfg = TrainConfig {
        epochs: 20,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    for kind in [LossKind::WeightedCe, LossKind::Gce, LossKind::Phgce] {
        let spec = LossSpec::new(kind, noisy.class_weights.clone());
        let model = train(&noisy, &cfg, &spec)?;
        let e = evaluate(&model, &test)?;
        println!("{kind:>12}: accuracy {:.2}%  macro-F1 {:.2}%", 100.0 * e.accuracy, 100.0 * e.macro_f1);
    }
    Ok(())
}
