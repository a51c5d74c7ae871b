//! Drive an annotation session by hand: labels are appended to a log, and
//! reopening the session replays it.

use weakanno::annotate::{find_centroids, propagate, Threshold};
use weakanno::gmm::{assign, fit, GmmConfig};
use weakanno::session::AnnotationSession;
use weakanno::synth::{embedding_suite, label_names, EmbeddingSuiteConfig};

fn main() -> weakanno::error::Result<()> {
    let mut suite = EmbeddingSuiteConfig::default().with_seed(5);
    suite.participants = 1;
    suite.clips = 400;
    suite.num_classes = 4;
    let p = &embedding_suite(&suite)?[0];
    let data = p.embeddings.to_f64();
    let model = fit(data.view(), &GmmConfig::new(6, 0))?;
    let assignment = assign(&model, data.view())?;
    let centroids = find_centroids(&model, &assignment);

    let log = std::env::temp_dir().join("weakanno-session-example.log");
    let _ = std::fs::remove_file(&log);
    let open = || -> weakanno::error::Result<AnnotationSession> {
        let mut s = AnnotationSession::open("demo", "p01", label_names(4), &log)?;
        s.enqueue_requests(&centroids, p.embeddings.spans())?;
        Ok(s)
    };

    let mut session = open()?;
    let first = session.next_request().unwrap().clone();
    println!("asking for {} ({} clips, {:?})", first.request_id, first.member_count, first.clip_span);
    session.submit(&first.request_id, p.ground_truth[first.clip_index]).unwrap();
    drop(session);

    let mut session = open()?;
    println!("after reopening: {:?}", session.state());
    while let Some(r) = session.next_request().cloned() {
        session.submit(&r.request_id, p.ground_truth[r.clip_index]).unwrap();
    }
    let labels = session.close();
    let weak = propagate(&assignment, &labels, &p.embeddings, &centroids, Threshold::NONE)?;
    let correct = weak.clips.iter().zip(&p.ground_truth).filter(|(w, &g)| w.label == g).count();
    println!("{} labels propagated to {} clips, {correct} correct", labels.budget(), weak.len());
    println!("log: {}", log.display());
    Ok(())
}
