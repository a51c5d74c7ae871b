use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::experiment::{prepare_participant, run_scenarios, ExperimentSettings, PreparedParticipant, SeedData};
use super::manifest::Manifest;
use crate::annotate::{find_centroids, propagate, CentroidSet, ClusterLabels, Threshold, WeakLabelSet};
use crate::error::{Error, Result};
use crate::eval::{labelling_accuracy, run_jobs, sweep_clusters, LabelAccuracyReport, ParticipantClips, ScenarioReport, SweepRow, SweepSettings};
use crate::gmm::{assign, fit, ClusterAssignment, GmmModel};
use crate::ingest::{
    clip_ground_truth, concat_embeddings, load_embeddings_with, load_label_track, load_sensor_csv, parse_label_names,
    EmbeddingSet, LabelTrack, LoadOptions,
};
use crate::session::{AnnotationSession, FixedClock};
use crate::transfer::ScenarioKind;

pub const CLUSTER_DIR: &str = "cluster";
pub const ANNOTATE_DIR: &str = "annotate";
pub const TRAIN_DIR: &str = "train";
pub const REPORT_DIR: &str = "report";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|err| Error::io(parent, err))?;
    }
    fs::write(path, contents).map_err(|err| Error::io(path, err))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|err| Error::io(path, err))
}

impl RunConfig {
    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.run.output.join(stage)
    }

    pub fn model_path(&self, participant: &str, seed: u64) -> PathBuf {
        self.stage_dir(CLUSTER_DIR).join(participant).join(format!("seed{seed}.wgmm"))
    }

    pub fn assignment_path(&self, participant: &str, seed: u64) -> PathBuf {
        self.stage_dir(CLUSTER_DIR).join(participant).join(format!("seed{seed}.assign.csv"))
    }

    pub fn session_log_path(&self, participant: &str, seed: u64) -> PathBuf {
        self.stage_dir(ANNOTATE_DIR).join(participant).join(format!("seed{seed}.log"))
    }

    pub fn weak_path(&self, participant: &str, seed: u64) -> PathBuf {
        self.stage_dir(ANNOTATE_DIR).join(participant).join(format!("seed{seed}.weak.csv"))
    }

    fn require_stage(&self, stage: &str, next: &str) -> Result<Manifest> {
        Manifest::read(&self.stage_dir(stage)).map_err(|_| {
            Error::State(format!("missing stage `{stage}`: run `{stage}` before `{next}`"))
        })
    }

    fn participant_seed_pairs(&self) -> Vec<(String, u64)> {
        self.dataset
            .participants
            .iter()
            .flat_map(|p| self.run.seeds.iter().map(move |&s| (p.clone(), s)))
            .collect()
    }

    fn manifest(&self, stage: &str) -> Result<Manifest> {
        let m = Manifest::collect(
            stage,
            &self.stage_dir(stage),
            &self.hash(),
            &self.run.seeds,
            &self.dataset.participants,
        )?;
        m.write(&self.stage_dir(stage))?;
        Ok(m)
    }
}

/// Loads and concatenates the configured embedding sources of a participant.
pub fn load_participant_embeddings(cfg: &RunConfig, participant: &str) -> Result<EmbeddingSet> {
    let window = cfg.clips.spec()?;
    let mut combined: Option<EmbeddingSet> = None;
    for source in &cfg.dataset.sources {
        let path = cfg.embedding_path(participant, source)?;
        let opts = LoadOptions {
            participant_id: Some(participant.to_string()),
            source_tag: source.clone(),
            expected_dim: None,
            windowing: window,
        };
        let set = load_embeddings_with(&path, &opts)
            .map_err(|e| e.for_participant(participant))?
            .with_source_tag(source.clone());
        combined = Some(match combined {
            None => set,
            Some(prev) => concat_embeddings(&prev, &set).map_err(|e| e.for_participant(participant))?,
        });
    }
    let set = combined.ok_or_else(|| Error::Config("dataset.sources is empty".into()))?;
    Ok(if cfg.dataset.normalize { set.l2_normalized() } else { set })
}

pub fn load_label_names(cfg: &RunConfig) -> Result<Vec<String>> {
    Ok(parse_label_names(&read_to_string(&cfg.label_names_path())?))
}

pub fn load_participant_track(cfg: &RunConfig, participant: &str) -> Result<LabelTrack> {
    load_label_track(participant, &cfg.label_path(participant), &cfg.label_names_path())
        .map_err(|e| e.for_participant(participant))
}

/// Fits one mixture per (participant, seed) and writes the model and hard
/// assignment under `cluster/`.
pub fn cmd_cluster(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    run_jobs(cfg.participant_seed_pairs(), cfg.run.jobs, |(p, seed)| {
        let emb = load_participant_embeddings(cfg, p)?;
        let data = emb.to_f64();
        let model = fit(data.view(), &cfg.clustering.gmm(*seed)).map_err(|e| e.for_participant(p))?;
        let assignment = assign(&model, data.view())?;
        write(&cfg.model_path(p, *seed), model.encode())?;
        let mut csv = String::from("clip_index,cluster_id,log_density\n");
        for (t, &c) in assignment.cluster_ids.iter().enumerate() {
            let _ = writeln!(csv, "{t},{c},{:.9}", assignment.log_densities[[t, c]]);
        }
        write(&cfg.assignment_path(p, *seed), csv)
    })?;
    cfg.manifest(CLUSTER_DIR)
}

/// A stored mixture with the assignment and centroids it implies.
pub struct ClusterArtifacts {
    pub embeddings: EmbeddingSet,
    pub model: GmmModel,
    pub assignment: ClusterAssignment,
    pub centroids: CentroidSet,
}

pub fn load_cluster_artifacts(cfg: &RunConfig, participant: &str, seed: u64) -> Result<ClusterArtifacts> {
    let path = cfg.model_path(participant, seed);
    let bytes = fs::read(&path).map_err(|err| Error::io(&path, err).for_participant(participant))?;
    let model = GmmModel::decode(&bytes)?;
    let embeddings = load_participant_embeddings(cfg, participant)?;
    let assignment = assign(&model, embeddings.to_f64().view())?;
    let centroids = find_centroids(&model, &assignment);
    Ok(ClusterArtifacts {
        embeddings,
        model,
        assignment,
        centroids,
    })
}

/// Opens (or resumes) the annotation session of one (participant, seed) and
/// queues a request per unlabeled non-empty cluster.
pub fn open_session(cfg: &RunConfig, participant: &str, seed: u64) -> Result<(AnnotationSession, ClusterArtifacts)> {
    let artifacts = load_cluster_artifacts(cfg, participant, seed)?;
    let names = load_label_names(cfg)?;
    let mut session = AnnotationSession::open(
        &format!("{participant}-seed{seed}"),
        participant,
        names,
        &cfg.session_log_path(participant, seed),
    )?;
    if let Some(template) = &cfg.annotation.media_template {
        session = session.with_media_template(template.clone());
    }
    session.enqueue_requests(&artifacts.centroids, artifacts.embeddings.spans())?;
    Ok((session, artifacts))
}

/// Propagates collected cluster labels and writes the weak-label file.
pub fn finish_session(cfg: &RunConfig, seed: u64, artifacts: &ClusterArtifacts, labels: &ClusterLabels) -> Result<WeakLabelSet> {
    let participant = artifacts.embeddings.participant_id();
    let weak = propagate(
        &artifacts.assignment,
        labels,
        &artifacts.embeddings,
        &artifacts.centroids,
        cfg.annotation.threshold,
    )
    .map_err(|e| e.for_participant(participant))?;
    write(&cfg.weak_path(participant, seed), weak.to_csv(artifacts.embeddings.spans()))?;
    Ok(weak)
}

/// Answers every centroid request with the clip's ground-truth label,
/// replacing any earlier session log.
pub fn cmd_annotate_oracle(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    cfg.require_stage(CLUSTER_DIR, "annotate")?;
    run_jobs(cfg.participant_seed_pairs(), cfg.run.jobs, |(p, seed)| {
        let log = cfg.session_log_path(p, *seed);
        if log.exists() {
            fs::remove_file(&log).map_err(|err| Error::io(&log, err))?;
        }
        let (session, artifacts) = open_session(cfg, p, *seed)?;
        let mut session = session.with_clock(Box::new(FixedClock(0.0)));
        let track = load_participant_track(cfg, p)?;
        let gt = clip_ground_truth(&track, artifacts.embeddings.spans()).map_err(|e| e.for_participant(p))?;
        let pending: Vec<(String, usize)> = session
            .pending()
            .iter()
            .map(|r| (r.request_id.clone(), r.clip_index))
            .collect();
        for (id, clip) in pending {
            let label = *gt
                .get(clip)
                .ok_or_else(|| Error::Data(format!("no ground truth for clip {clip}")).for_participant(p))?;
            session
                .submit(&id, label)
                .map_err(|err| Error::State(err.to_string()).for_participant(p))?;
        }
        let labels = session.close();
        finish_session(cfg, *seed, &artifacts, &labels).map(|_| ())
    })?;
    cfg.manifest(ANNOTATE_DIR)
}

/// Writes the annotate-stage manifest once every session has a weak-label file.
pub fn finalize_annotation(cfg: &RunConfig) -> Result<Manifest> {
    for (p, seed) in cfg.participant_seed_pairs() {
        if !cfg.weak_path(&p, seed).exists() {
            return Err(Error::State(format!("participant {p}, seed {seed} is not annotated yet")));
        }
    }
    cfg.manifest(ANNOTATE_DIR)
}

pub fn load_weak_labels(cfg: &RunConfig, participant: &str, seed: u64, threshold: Threshold) -> Result<WeakLabelSet> {
    let text = read_to_string(&cfg.weak_path(participant, seed))?;
    Ok(WeakLabelSet::from_csv(participant, &text, threshold)?.0)
}

fn file_stem(scenario: &str, seed: u64, participant: &str) -> String {
    format!("{scenario}__seed{seed}__{participant}")
}

/// Trains every configured scenario for every seed and writes metrics,
/// confusion matrices and scenario manifests under `train/`.
pub fn cmd_train(cfg: &RunConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    cfg.require_stage(ANNOTATE_DIR, "train")?;
    let scenarios = cfg.scenarios()?;
    let thresholds: Vec<Threshold> = {
        let mut t: Vec<Threshold> = Vec::new();
        for s in scenarios.iter().filter(|s| s.kind == ScenarioKind::Weak) {
            if !t.contains(&s.threshold) {
                t.push(s.threshold);
            }
        }
        t
    };
    let window = cfg.training.window.spec()?;
    let names = load_label_names(cfg)?;
    let mut inputs = Vec::new();
    for p in &cfg.dataset.participants {
        let track = load_participant_track(cfg, p)?;
        let sensors = load_sensor_csv(p, &cfg.sensor_path(p), cfg.dataset.sensor_rate_hz).map_err(|e| e.for_participant(p))?;
        inputs.push((p.clone(), track, sensors));
    }
    let prepared: Vec<(u64, Vec<PreparedParticipant>)> = cfg
        .run
        .seeds
        .iter()
        .map(|&seed| {
            let per = inputs
                .iter()
                .map(|(p, track, sensors)| {
                    let text = read_to_string(&cfg.weak_path(p, seed))?;
                    let (weak, spans) = WeakLabelSet::from_csv(p, &text, Threshold::NONE)?;
                    prepare_participant(track, sensors, &weak, &spans, &thresholds, window)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((seed, per))
        })
        .collect::<Result<_>>()?;
    let seeds: Vec<SeedData<'_>> = prepared
        .iter()
        .map(|(seed, participants)| SeedData {
            seed: *seed,
            participants,
        })
        .collect();
    let settings = ExperimentSettings {
        train: cfg.training.optimizer.clone(),
        loss: cfg.loss,
        protocol: cfg.training.protocol,
        clusters: cfg.clustering.components,
    };
    let (report, outcomes) = run_scenarios(&seeds, &scenarios, &settings)?;
    let dir = cfg.stage_dir(TRAIN_DIR);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
    }
    write(&dir.join("metrics.csv"), report.to_csv())?;
    write(&dir.join("summary.txt"), report.summary_table())?;
    for o in &outcomes {
        let stem = file_stem(&o.scenario.to_string(), o.seed, &o.test_participant);
        write(
            &dir.join("confusion").join(format!("{stem}.csv")),
            o.evaluation.confusion_csv(Some(&names)),
        )?;
        let json = serde_json::to_string_pretty(&o.manifest).expect("manifest serialises") + "\n";
        write(&dir.join("scenarios").join(format!("{stem}.json")), json)?;
    }
    cfg.manifest(TRAIN_DIR)?;
    Ok(report)
}

/// Reports produced by [`cmd_report`].
pub struct Reports {
    pub clusters: LabelAccuracyReport,
    pub thresholds: LabelAccuracyReport,
    pub scenarios: Option<ScenarioReport>,
}

/// Labelling accuracy over the configured and swept cluster counts, the
/// threshold trade-off, and (when training ran) the scenario table.
pub fn cmd_report(cfg: &RunConfig) -> Result<Reports> {
    cfg.validate()?;
    cfg.require_stage(ANNOTATE_DIR, "report")?;
    let mut clips = Vec::new();
    let mut gts = Vec::new();
    for p in &cfg.dataset.participants {
        let embeddings = load_participant_embeddings(cfg, p)?;
        let track = load_participant_track(cfg, p)?;
        let gt = clip_ground_truth(&track, embeddings.spans()).map_err(|e| e.for_participant(p))?;
        gts.push(gt.clone());
        clips.push(ParticipantClips {
            embeddings,
            ground_truth: gt,
        });
    }
    let c = cfg.clustering.components;
    let mut threshold_rows = Vec::new();
    let mut cluster_rows = Vec::new();
    for (p, gt) in cfg.dataset.participants.iter().zip(&gts) {
        for &seed in &cfg.run.seeds {
            for &t in &cfg.report.thresholds {
                let weak = load_weak_labels(cfg, p, seed, t)?;
                let score = labelling_accuracy(&weak, gt).map_err(|e| e.for_participant(p))?;
                let row = SweepRow {
                    axis: t.to_string(),
                    seed,
                    participant: p.clone(),
                    threshold: t.value(),
                    accuracy: score.accuracy,
                    coverage: score.coverage,
                    budget: weak.annotation_budget,
                    clips: score.total,
                };
                if t.is_unbounded() {
                    cluster_rows.push(SweepRow {
                        axis: c.to_string(),
                        ..row.clone()
                    });
                }
                threshold_rows.push(row);
            }
        }
    }
    let extra: BTreeSet<usize> = cfg.report.cluster_sweep.iter().copied().filter(|&v| v != c).collect();
    if !extra.is_empty() {
        let settings = SweepSettings {
            gmm: cfg.clustering.gmm(0),
            jobs: cfg.run.jobs,
        };
        let swept = sweep_clusters(&clips, &extra.iter().copied().collect::<Vec<_>>(), &cfg.run.seeds, &settings)?;
        cluster_rows.extend(swept.rows);
    }
    if !cfg.report.thresholds.iter().any(|t| t.is_unbounded()) {
        for (p, gt) in cfg.dataset.participants.iter().zip(&gts) {
            for &seed in &cfg.run.seeds {
                let weak = load_weak_labels(cfg, p, seed, Threshold::NONE)?;
                let score = labelling_accuracy(&weak, gt)?;
                cluster_rows.push(SweepRow {
                    axis: c.to_string(),
                    seed,
                    participant: p.clone(),
                    threshold: f64::INFINITY,
                    accuracy: score.accuracy,
                    coverage: score.coverage,
                    budget: weak.annotation_budget,
                    clips: score.total,
                });
            }
        }
    }
    let mut c_axis: Vec<usize> = extra.into_iter().collect();
    c_axis.push(c);
    c_axis.sort_unstable();
    let c_order: Vec<String> = c_axis.iter().map(usize::to_string).collect();
    let clusters = LabelAccuracyReport::build("C", &c_order, cluster_rows);
    let t_order: Vec<String> = cfg.report.thresholds.iter().map(Threshold::to_string).collect();
    let thresholds = LabelAccuracyReport::build("threshold", &t_order, threshold_rows);

    let metrics = cfg.stage_dir(TRAIN_DIR).join("metrics.csv");
    let scenarios = if metrics.exists() {
        Some(ScenarioReport::from_csv(&read_to_string(&metrics)?)?)
    } else {
        None
    };

    let dir = cfg.stage_dir(REPORT_DIR);
    write(&dir.join("sweep_clusters.csv"), clusters.to_csv())?;
    write(&dir.join("sweep_thresholds.csv"), thresholds.to_csv())?;
    write(&dir.join("summary_clusters.txt"), clusters.summary_table())?;
    write(&dir.join("summary_thresholds.txt"), thresholds.summary_table())?;
    if let Some(s) = &scenarios {
        write(&dir.join("summary_scenarios.txt"), s.summary_table())?;
    }
    cfg.manifest(REPORT_DIR)?;
    Ok(Reports {
        clusters,
        thresholds,
        scenarios,
    })
}
