//! Run the file-based stages (cluster, annotate, train, report) on a
//! generated dataset; every stage leaves a checksummed manifest.

use weakanno::pipeline::{cmd_annotate_oracle, cmd_cluster, cmd_report, cmd_train, RunConfig};
use weakanno::synth::{participant_name, sensor_suite, write_dataset, SensorSuiteConfig};

fn main() -> weakanno::error::Result<()> {
    let root = std::env::temp_dir().join("weakanno-pipeline-example");
    let _ = std::fs::remove_dir_all(&root);
    let mut suite = SensorSuiteConfig::default();
    suite.participants = 3;
    write_dataset(&root.join("data"), &sensor_suite(&suite)?)?;

    let mut cfg = RunConfig::default();
    cfg.dataset.root = root.join("data");
    cfg.dataset.participants = (0..3).map(participant_name).collect();
    cfg.run.output = root.join("run");
    cfg.run.seeds = vec![1];
    cfg.clustering.components = 15;
    cfg.training.scenarios = vec!["fully-supervised".into(), "weak-ce".into(), "weak-phgce".into()];
    print!("{}", cfg.to_toml());

    let m = cmd_cluster(&cfg)?;
    println!("\ncluster: {} files, config {}", m.artifacts.len(), &m.config_hash[..12]);
    cmd_annotate_oracle(&cfg)?;
    cmd_train(&cfg)?;
    let reports = cmd_report(&cfg)?;
    print!("\n{}\n{}", reports.thresholds.summary_table(), reports.scenarios.unwrap().summary_table());
    println!("\noutputs under {}", cfg.run.output.display());
    Ok(())
}
