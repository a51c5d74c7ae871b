//! Compare fully supervised, few-shot, random and weak training with
//! leave-one-participant-out evaluation on the synthetic sensor suite.

use weakanno::annotate::Threshold;
use weakanno::eval::{labelling_accuracy, oracle_weak_labels};
use weakanno::gmm::GmmConfig;
use weakanno::ingest::WindowingSpec;
use weakanno::pipeline::{prepare_participant, run_scenarios, ExperimentSettings, LossParams, Protocol, SeedData};
use weakanno::synth::{sensor_suite, SensorSuiteConfig};
use weakanno::transfer::Scenario;
use weakanno::weaktrain::TrainConfig;

fn main() -> weakanno::error::Result<()> {
    let mut suite = SensorSuiteConfig::default().with_seed(1);
    suite.participants = 3;
    suite.duration_s = 480.0;
    let parts = sensor_suite(&suite)?;

    let seed = 1;
    let mut prepared = Vec::new();
    for p in &parts {
        let run = oracle_weak_labels(&p.clips(), &GmmConfig::new(20, seed), Threshold::NONE)?;
        let score = labelling_accuracy(&run.weak, &p.ground_truth)?;
        println!("{}: weak labels {:.2}% correct", p.participant_id(), 100.0 * score.accuracy);
        prepared.push(prepare_participant(
            &p.track,
            p.sensors.as_ref().unwrap(),
            &run.weak,
            p.embeddings.spans(),
            &[Threshold::NONE],
            WindowingSpec::SENSOR,
        )?);
    }
    let scenarios: Vec<Scenario> = ["fully-supervised", "few-shot", "random", "weak-ce", "weak-phgce"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let settings = ExperimentSettings {
        train: TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
        loss: LossParams::default(),
        protocol: Protocol::LeaveOneOut,
        clusters: 20,
    };
    let seeds = [SeedData {
        seed,
        participants: &prepared,
    }];
    let (report, _) = run_scenarios(&seeds, &scenarios, &settings)?;
    print!("{}", report.summary_table());
    Ok(())
}
