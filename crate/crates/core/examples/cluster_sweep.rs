//! Labelling accuracy as a function of the cluster count, averaged over
//! seeds and participants.

use weakanno::eval::{sweep_clusters, SweepSettings};
use weakanno::synth::{embedding_suite, EmbeddingSuiteConfig};

fn main() -> weakanno::error::Result<()> {
    let mut suite = EmbeddingSuiteConfig::default().with_seed(2);
    suite.participants = 3;
    suite.clips = 800;
    let clips: Vec<_> = embedding_suite(&suite)?.iter().map(|p| p.clips()).collect();

    let report = sweep_clusters(&clips, &[5, 10, 20, 40], &[1, 2], &SweepSettings::default())?;
    print!("{}", report.summary_table());
    Ok(())
}
