//! Labelling-accuracy statistics, cluster and threshold sweeps, and
//! aggregation of classifier results across seeds and participants.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{annotate_oracle, find_centroids, propagate, CentroidSet, Threshold, WeakLabelSet};
use crate::error::{Error, Result};
use crate::gmm::{assign, fit, ClusterAssignment, GmmConfig, GmmModel};
use crate::ingest::{EmbeddingSet, LabelId};

/// Retained-set labelling accuracy and the fraction of clips retained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub accuracy: f64,
    pub coverage: f64,
    pub retained: usize,
    pub total: usize,
}

pub fn labelling_accuracy(weak: &WeakLabelSet, gt: &[LabelId]) -> Result<LabelScore> {
    if gt.len() != weak.len() {
        return Err(Error::Shape(format!("{} ground-truth labels for {} clips", gt.len(), weak.len())));
    }
    let mut retained = 0;
    let mut correct = 0;
    for (clip, &truth) in weak.clips.iter().zip(gt) {
        if clip.retained {
            retained += 1;
            correct += usize::from(clip.label == truth);
        }
    }
    if retained == 0 {
        return Err(Error::UndefinedAccuracy(format!(
            "participant {} retains no clips",
            weak.participant_id
        )));
    }
    Ok(LabelScore {
        accuracy: correct as f64 / retained as f64,
        coverage: retained as f64 / weak.len() as f64,
        retained,
        total: weak.len(),
    })
}

/// Mean and sample standard deviation (n - 1); the deviation of a single
/// value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `82.47 ($\pm$ 6.03)`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.2} ($\\pm$ {std:.2})")
}

/// One participant's clips with ground truth, as fed to the sweeps.
#[derive(Clone, Debug)]
pub struct ParticipantClips {
    pub embeddings: EmbeddingSet,
    pub ground_truth: Vec<LabelId>,
}

impl ParticipantClips {
    pub fn participant_id(&self) -> &str {
        self.embeddings.participant_id()
    }
}

/// Every intermediate of an oracle-annotated clustering run.
#[derive(Clone, Debug)]
pub struct OracleRun {
    pub model: GmmModel,
    pub assignment: ClusterAssignment,
    pub centroids: CentroidSet,
    pub weak: WeakLabelSet,
}

impl OracleRun {
    /// Median distance of non-centroid clips to their centroid clip divided
    /// by the square root of the embedding dimension: a per-coordinate spread.
    pub fn noise_scale(&self) -> f64 {
        let mut d: Vec<f64> = self
            .weak
            .clips
            .iter()
            .map(|c| c.distance_to_centroid)
            .filter(|&d| d > 0.0)
            .collect();
        if d.is_empty() {
            return 0.0;
        }
        d.sort_by(f64::total_cmp);
        let m = d.len();
        let median = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
        median / (self.model.dim() as f64).sqrt()
    }
}

/// Cluster, pick centroids, label them from ground truth and propagate.
pub fn oracle_weak_labels(clips: &ParticipantClips, gmm: &GmmConfig, threshold: Threshold) -> Result<OracleRun> {
    let data = clips.embeddings.to_f64();
    let model = fit(data.view(), gmm)?;
    let assignment = assign(&model, data.view())?;
    let centroids = find_centroids(&model, &assignment);
    let labels = annotate_oracle(&centroids, &clips.ground_truth)?;
    let weak = propagate(&assignment, &labels, &clips.embeddings, &centroids, threshold)?;
    Ok(OracleRun {
        model,
        assignment,
        centroids,
        weak,
    })
}

/// A threshold either in embedding units or as a multiple of each run's
/// [`OracleRun::noise_scale`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdRule {
    Absolute(Threshold),
    NoiseScaled(f64),
}

impl ThresholdRule {
    pub fn resolve(&self, run: &OracleRun) -> Result<Threshold> {
        match *self {
            ThresholdRule::Absolute(t) => Ok(t),
            ThresholdRule::NoiseScaled(k) => Threshold::new(k * run.noise_scale()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ThresholdRule::Absolute(t) => t.to_string(),
            ThresholdRule::NoiseScaled(k) => format!("{k}sigma"),
        }
    }
}

/// One (participant, axis value, seed) measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub seed: u64,
    pub participant: String,
    pub threshold: f64,
    pub accuracy: f64,
    pub coverage: f64,
    pub budget: usize,
    pub clips: usize,
}

/// Across-participant statistics of one axis value; each participant is
/// first averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: String,
    pub participants: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub coverage_mean: f64,
    pub coverage_std: f64,
    pub budget_fraction_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelAccuracyReport {
    /// `"C"` or `"threshold"`.
    pub axis_name: String,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

impl LabelAccuracyReport {
    pub(crate) fn build(axis_name: &str, axis_order: &[String], mut rows: Vec<SweepRow>) -> Self {
        let position = |axis: &str| axis_order.iter().position(|a| a == axis).unwrap_or(usize::MAX);
        rows.sort_by(|a, b| {
            position(&a.axis)
                .cmp(&position(&b.axis))
                .then(a.seed.cmp(&b.seed))
                .then(a.participant.cmp(&b.participant))
        });
        let summary = axis_order
            .iter()
            .filter_map(|axis| {
                let mut per: BTreeMap<&str, Vec<&SweepRow>> = BTreeMap::new();
                for r in rows.iter().filter(|r| &r.axis == axis) {
                    per.entry(&r.participant).or_default().push(r);
                }
                if per.is_empty() {
                    return None;
                }
                let avg = |f: &dyn Fn(&SweepRow) -> f64| -> Vec<f64> {
                    per.values()
                        .map(|rs| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64)
                        .collect()
                };
                let (accuracy_mean, accuracy_std) = mean_std(&avg(&|r| r.accuracy));
                let (coverage_mean, coverage_std) = mean_std(&avg(&|r| r.coverage));
                let (budget_fraction_mean, _) = mean_std(&avg(&|r| r.budget as f64 / r.clips as f64));
                Some(SweepSummary {
                    axis: axis.clone(),
                    participants: per.len(),
                    accuracy_mean,
                    accuracy_std,
                    coverage_mean,
                    coverage_std,
                    budget_fraction_mean,
                })
            })
            .collect();
        LabelAccuracyReport {
            axis_name: axis_name.to_string(),
            rows,
            summary,
        }
    }

    pub fn summary_for(&self, axis: &str) -> Option<&SweepSummary> {
        self.summary.iter().find(|s| s.axis == axis)
    }

    /// Plot-ready rows: axis, seed, participant, accuracy, coverage, budget.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},seed,participant,accuracy,coverage,budget", self.axis_name);
        if self.axis_name != "C" {
            out.push_str(",distance");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{:.6},{:.6},{}",
                r.axis, r.seed, r.participant, r.accuracy, r.coverage, r.budget
            );
            if self.axis_name != "C" {
                let _ = write!(out, ",{:.6}", r.threshold);
            }
            out.push('\n');
        }
        out
    }

    /// Text table of percentages with `mean ($\pm$ std)` cells.
    pub fn summary_table(&self) -> String {
        let mut out = format!("{:<12} {:<22} {:<22} {:>8}\n", self.axis_name, "accuracy", "coverage", "budget");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<12} {:<22} {:<22} {:>7.2}%",
                s.axis,
                format_mean_std(100.0 * s.accuracy_mean, 100.0 * s.accuracy_std),
                format_mean_std(100.0 * s.coverage_mean, 100.0 * s.coverage_std),
                100.0 * s.budget_fraction_mean
            );
        }
        out
    }
}

/// Clustering settings shared by all runs of a sweep; `components` and
/// `seed` are overridden per run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepSettings {
    pub gmm: GmmConfig,
    pub jobs: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            gmm: GmmConfig::new(1, 0),
            jobs: 1,
        }
    }
}

pub(crate) fn run_jobs<J, T>(jobs: Vec<J>, threads: usize, work: impl Fn(&J) -> Result<T> + Sync + Send) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
{
    if threads <= 1 {
        return jobs.iter().map(work).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|err| Error::Config(err.to_string()))?;
    pool.install(|| jobs.par_iter().map(work).collect())
}

fn check_sizes(participants: &[ParticipantClips], c: usize) -> Result<()> {
    if participants.is_empty() {
        return Err(Error::Config("no participants".into()));
    }
    for p in participants {
        if p.embeddings.len() < c {
            return Err(Error::Config(format!(
                "C={c} exceeds the {} clips of participant {}",
                p.embeddings.len(),
                p.participant_id()
            )));
        }
    }
    Ok(())
}

/// Labelling accuracy for every (participant, C, seed) with no threshold.
pub fn sweep_clusters(
    participants: &[ParticipantClips],
    c_values: &[usize],
    seeds: &[u64],
    settings: &SweepSettings,
) -> Result<LabelAccuracyReport> {
    if seeds.is_empty() || c_values.is_empty() {
        return Err(Error::Config("a sweep needs at least one C value and one seed".into()));
    }
    if c_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("C values must be sorted ascending".into()));
    }
    check_sizes(participants, *c_values.last().unwrap())?;
    let jobs: Vec<(usize, usize, u64)> = c_values
        .iter()
        .flat_map(|&c| (0..participants.len()).flat_map(move |p| seeds.iter().map(move |&s| (c, p, s))))
        .collect();
    let rows = run_jobs(jobs, settings.jobs, |&(c, p, seed)| {
        let clips = &participants[p];
        let cfg = GmmConfig {
            components: c,
            seed,
            ..settings.gmm
        };
        let run = oracle_weak_labels(clips, &cfg, Threshold::NONE).map_err(|e| e.for_participant(clips.participant_id()))?;
        let score = labelling_accuracy(&run.weak, &clips.ground_truth)?;
        Ok(SweepRow {
            axis: c.to_string(),
            seed,
            participant: clips.participant_id().to_string(),
            threshold: f64::INFINITY,
            accuracy: score.accuracy,
            coverage: score.coverage,
            budget: run.weak.annotation_budget,
            clips: score.total,
        })
    })?;
    let order: Vec<String> = c_values.iter().map(usize::to_string).collect();
    Ok(LabelAccuracyReport::build("C", &order, rows))
}

/// Clusters once per (participant, seed) at `c` components and scores each
/// threshold rule on the same clustering.
pub fn sweep_thresholds(
    participants: &[ParticipantClips],
    c: usize,
    rules: &[ThresholdRule],
    seeds: &[u64],
    settings: &SweepSettings,
) -> Result<LabelAccuracyReport> {
    if seeds.is_empty() || rules.is_empty() {
        return Err(Error::Config("a sweep needs at least one threshold and one seed".into()));
    }
    check_sizes(participants, c)?;
    let jobs: Vec<(usize, u64)> = (0..participants.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let nested = run_jobs(jobs, settings.jobs, |&(p, seed)| {
        let clips = &participants[p];
        let cfg = GmmConfig {
            components: c,
            seed,
            ..settings.gmm
        };
        let run = oracle_weak_labels(clips, &cfg, Threshold::NONE).map_err(|e| e.for_participant(clips.participant_id()))?;
        rules
            .iter()
            .map(|rule| {
                let threshold = rule.resolve(&run)?;
                let weak = run.weak.with_threshold(threshold);
                let score = labelling_accuracy(&weak, &clips.ground_truth)?;
                Ok(SweepRow {
                    axis: rule.label(),
                    seed,
                    participant: clips.participant_id().to_string(),
                    threshold: threshold.value(),
                    accuracy: score.accuracy,
                    coverage: score.coverage,
                    budget: weak.annotation_budget,
                    clips: score.total,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let order: Vec<String> = rules.iter().map(ThresholdRule::label).collect();
    Ok(LabelAccuracyReport::build("threshold", &order, nested.into_iter().flatten().collect()))
}

/// Test metrics of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario: String,
    #[serde(rename = "C")]
    pub c: usize,
    pub threshold: String,
    pub seed: u64,
    pub participant: String,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Per-scenario accuracy and macro F1 across participants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub participants: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioReport {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<ScenarioSummary>,
}

impl ScenarioReport {
    /// Aggregates rows in the order scenarios first appear.
    pub fn from_rows(rows: Vec<MetricRow>) -> Self {
        let mut order: Vec<String> = Vec::new();
        for r in &rows {
            if !order.contains(&r.scenario) {
                order.push(r.scenario.clone());
            }
        }
        let summary = order
            .iter()
            .map(|scenario| {
                let mut per: BTreeMap<&str, Vec<&MetricRow>> = BTreeMap::new();
                for r in rows.iter().filter(|r| &r.scenario == scenario) {
                    per.entry(&r.participant).or_default().push(r);
                }
                let avg = |f: &dyn Fn(&MetricRow) -> f64| -> Vec<f64> {
                    per.values()
                        .map(|rs| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64)
                        .collect()
                };
                let (accuracy_mean, accuracy_std) = mean_std(&avg(&|r| r.accuracy));
                let (macro_f1_mean, macro_f1_std) = mean_std(&avg(&|r| r.macro_f1));
                ScenarioSummary {
                    scenario: scenario.clone(),
                    participants: per.len(),
                    accuracy_mean,
                    accuracy_std,
                    macro_f1_mean,
                    macro_f1_std,
                }
            })
            .collect();
        ScenarioReport { rows, summary }
    }

    pub fn summary_for(&self, scenario: &str) -> Option<&ScenarioSummary> {
        self.summary.iter().find(|s| s.scenario == scenario)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,C,threshold,seed,participant,accuracy,macro_f1\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{:.6}",
                r.scenario, r.c, r.threshold, r.seed, r.participant, r.accuracy, r.macro_f1
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let rows = reader
            .deserialize::<MetricRow>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|err| Error::Format(format!("metrics csv: {err}")))?;
        Ok(Self::from_rows(rows))
    }

    /// Accuracy and macro F1 in percent with two decimals.
    pub fn summary_table(&self) -> String {
        let mut out = format!("{:<24} {:>8} {:>8}\n", "scenario", "Acc", "F1");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<24} {:>8.2} {:>8.2}",
                s.scenario,
                100.0 * s.accuracy_mean,
                100.0 * s.macro_f1_mean
            );
        }
        out
    }
}
