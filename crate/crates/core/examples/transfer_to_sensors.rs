//! Project clip-level weak labels onto a 20 Hz sensor stream and cut
//! labelled training windows.

use weakanno::annotate::Threshold;
use weakanno::eval::oracle_weak_labels;
use weakanno::gmm::GmmConfig;
use weakanno::ingest::WindowingSpec;
use weakanno::synth::{sensor_suite, SensorSuiteConfig};
use weakanno::transfer::{labels_to_timesteps, make_windows, sample_track};

fn main() -> weakanno::error::Result<()> {
    let mut suite = SensorSuiteConfig::default().with_seed(4);
    suite.participants = 1;
    let p = &sensor_suite(&suite)?[0];
    let sensors = p.sensors.as_ref().expect("sensor suite has sensors");
    let a = p.track.num_labels();

    let run = oracle_weak_labels(&p.clips(), &GmmConfig::new(20, 1), Threshold::NONE)?;
    for t in [Threshold::NONE, Threshold::new(6.0 * run.noise_scale())?] {
        let steps = labels_to_timesteps(&run.weak.with_threshold(t), p.embeddings.spans(), sensors, a)?;
        let windows = make_windows(sensors, &steps, WindowingSpec::SENSOR)?;
        println!(
            "threshold {:.3}: {} of {} samples labelled, {} windows, class counts {:?}",
            t.value(),
            steps.kept_count(),
            sensors.len(),
            windows.len(),
            windows.class_counts()
        );
    }
    let full = make_windows(sensors, &sample_track(&p.track, sensors), WindowingSpec::SENSOR)?;
    println!("ground truth: {} windows, class counts {:?}", full.len(), full.class_counts());
    Ok(())
}
