//! Label each centroid clip from ground truth, propagate to the cluster and
//! measure how thresholding trades coverage for accuracy.

use weakanno::annotate::Threshold;
use weakanno::eval::{labelling_accuracy, oracle_weak_labels};
use weakanno::gmm::GmmConfig;
use weakanno::synth::{embedding_suite, EmbeddingSuiteConfig};

fn main() -> weakanno::error::Result<()> {
    let mut suite = EmbeddingSuiteConfig::overlap_heavy().with_seed(11);
    suite.participants = 1;
    suite.clips = 800;
    let p = &embedding_suite(&suite)?[0];
    let clips = p.clips();

    let run = oracle_weak_labels(&clips, &GmmConfig::new(20, 1), Threshold::NONE)?;
    let sigma = run.noise_scale();
    println!("budget: {} of {} clips annotated", run.weak.annotation_budget, run.weak.len());
    println!("noise scale {sigma:.3}");
    for k in [f64::INFINITY, 6.0, 4.0] {
        let t = if k.is_finite() { Threshold::new(k * sigma)? } else { Threshold::NONE };
        let score = labelling_accuracy(&run.weak.with_threshold(t), &clips.ground_truth)?;
        println!(
            "threshold {:>8}: accuracy {:.2}%  coverage {:.2}%",
            if k.is_finite() { format!("{k}sigma") } else { "none".into() },
            100.0 * score.accuracy,
            100.0 * score.coverage
        );
    }
    Ok(())
}
