//! End-to-end experiment driver and file-based pipeline stages.

mod config;
mod experiment;
mod manifest;
mod stages;

pub use config::{
    AnnotationSection, ClusteringSection, DatasetSection, ReportSection, RunConfig, RunSection, TrainingSection,
    WindowSection,
};
pub use experiment::{
    corrupt_labels, prepare_participant, run_scenarios, scenario_windows, ExperimentSettings, LossParams,
    PreparedParticipant, Protocol, ScenarioOutcome, SeedData,
};
pub use manifest::{sha256_hex, Manifest, MANIFEST_FILE};
pub use stages::{
    cmd_annotate_oracle, cmd_cluster, cmd_report, cmd_train, finalize_annotation, finish_session,
    load_cluster_artifacts, load_label_names, load_participant_embeddings, load_participant_track, load_weak_labels,
    open_session, ClusterArtifacts, Reports, ANNOTATE_DIR, CLUSTER_DIR, REPORT_DIR, TRAIN_DIR,
};
