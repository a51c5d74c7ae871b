//! Fit a full-covariance mixture to synthetic clip embeddings and pick one
//! centroid clip per cluster.

use weakanno::annotate::find_centroids;
use weakanno::gmm::{assign, fit, GmmConfig};
use weakanno::synth::{embedding_suite, EmbeddingSuiteConfig};

fn main() -> weakanno::error::Result<()> {
    let mut suite = EmbeddingSuiteConfig::default().with_seed(3);
    suite.participants = 1;
    suite.clips = 600;
    let p = &embedding_suite(&suite)?[0];

    let data = p.embeddings.to_f64();
    let model = fit(data.view(), &GmmConfig::new(12, 1))?;
    println!(
        "converged={} after {} iterations, log-likelihood {:.2}",
        model.converged(),
        model.log_likelihood_trace().len(),
        model.final_log_likelihood()
    );
    let assignment = assign(&model, data.view())?;
    let centroids = find_centroids(&model, &assignment);
    println!("cluster  size  centroid clip  true label");
    for c in centroids.iter() {
        println!("{:>7} {:>5} {:>14} {:>11}", c.cluster, c.member_count, c.clip_index, p.ground_truth[c.clip_index]);
    }
    println!("empty clusters: {:?}", centroids.empty_clusters());
    Ok(())
}
