use serde::{Deserialize, Serialize};

use crate::annotate::{Threshold, WeakLabelSet};
use crate::error::{Error, Result};
use crate::eval::{MetricRow, ScenarioReport};
use crate::ingest::{ClipSpan, LabelId, LabelTrack, SensorSeries, WindowingSpec};
use crate::transfer::{
    build_scenario, labels_to_timesteps, make_windows, sample_track, LabeledWindowSet, Scenario, ScenarioKind,
    ScenarioManifest,
};
use crate::weaktrain::{evaluate, train, Evaluation, LossSpec, TrainConfig};

/// How held-out test participants are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Every participant is the test set once, for every seed.
    LeaveOneOut,
    /// Seed `k` of the seed list tests on participant `k mod P` only.
    Rotating,
}

/// Loss hyper-parameters shared by every scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossParams {
    pub q: f64,
    pub tau: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            q: LossSpec::DEFAULT_Q,
            tau: LossSpec::DEFAULT_TAU,
        }
    }
}

/// Windowed data of one participant, ready for scenario construction.
#[derive(Clone, Debug)]
pub struct PreparedParticipant {
    pub id: String,
    /// Every window with its ground-truth label.
    pub full: LabeledWindowSet,
    /// Weak-label windows per threshold.
    pub weak: Vec<(Threshold, LabeledWindowSet)>,
    pub annotated: Vec<ClipSpan>,
    pub all_clips: Vec<ClipSpan>,
    pub budget: usize,
}

impl PreparedParticipant {
    pub fn weak_windows(&self, threshold: Threshold) -> Result<&LabeledWindowSet> {
        self.weak
            .iter()
            .find(|(t, _)| *t == threshold)
            .map(|(_, w)| w)
            .ok_or_else(|| Error::Config(format!("no weak windows prepared for threshold {threshold}")))
    }
}

/// Projects `weak` onto the sensor stream at each threshold and windows both
/// the weak and the ground-truth labels.
pub fn prepare_participant(
    track: &LabelTrack,
    sensors: &SensorSeries,
    weak: &WeakLabelSet,
    clip_spans: &[ClipSpan],
    thresholds: &[Threshold],
    window: WindowingSpec,
) -> Result<PreparedParticipant> {
    let id = sensors.participant_id().to_string();
    let a = track.num_labels();
    let full = make_windows(sensors, &sample_track(track, sensors), window)?;
    let weak_sets = thresholds
        .iter()
        .map(|&t| {
            let steps = labels_to_timesteps(&weak.with_threshold(t), clip_spans, sensors, a)?;
            let mut set = make_windows(sensors, &steps, window)?;
            set.provenance = format!("weak-t-{t}");
            Ok((t, set))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.for_participant(&id))?;
    let annotated = weak.centroid_clips.values().map(|&i| clip_spans[i]).collect();
    Ok(PreparedParticipant {
        id,
        full,
        weak: weak_sets,
        annotated,
        all_clips: clip_spans.to_vec(),
        budget: weak.annotation_budget,
    })
}

/// Deterministic per-(seed, participant) seed for the random-clip sampler.
fn sampler_seed(seed: u64, participant: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(participant as u64)
}

/// Training windows of one participant under `scenario`.
pub fn scenario_windows(scenario: &Scenario, p: &PreparedParticipant, index: usize, seed: u64) -> Result<LabeledWindowSet> {
    let weak = match scenario.kind {
        ScenarioKind::Weak => p.weak_windows(scenario.threshold)?,
        _ => &p.full,
    };
    build_scenario(scenario.kind, &p.full, weak, &p.annotated, &p.all_clips, sampler_seed(seed, index))
        .map_err(|e| e.for_participant(&p.id))
}

/// Outcome of one trained model.
#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub seed: u64,
    pub test_participant: String,
    pub evaluation: Evaluation,
    pub manifest: ScenarioManifest,
    pub final_loss: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentSettings {
    pub train: TrainConfig,
    pub loss: LossParams,
    pub protocol: Protocol,
    /// Cluster count recorded in the metric rows.
    pub clusters: usize,
}

/// Participants prepared from the weak labels of one clustering seed.
#[derive(Clone, Copy, Debug)]
pub struct SeedData<'a> {
    pub seed: u64,
    pub participants: &'a [PreparedParticipant],
}

/// Trains and evaluates every scenario for every seed and held-out
/// participant. Test sets always carry ground-truth labels.
pub fn run_scenarios(
    seeds: &[SeedData<'_>],
    scenarios: &[Scenario],
    settings: &ExperimentSettings,
) -> Result<(ScenarioReport, Vec<ScenarioOutcome>)> {
    if seeds.is_empty() {
        return Err(Error::Config("no seeds".into()));
    }
    if seeds.iter().any(|s| s.participants.len() < 2) {
        return Err(Error::Config("need at least two participants to hold one out".into()));
    }
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for scenario in scenarios {
        for (k, data) in seeds.iter().enumerate() {
            let participants = data.participants;
            let held_out: Vec<usize> = match settings.protocol {
                Protocol::LeaveOneOut => (0..participants.len()).collect(),
                Protocol::Rotating => vec![k % participants.len()],
            };
            for test in held_out {
                let outcome = run_one(participants, scenario, data.seed, test, settings)?;
                rows.push(MetricRow {
                    scenario: scenario.to_string(),
                    c: settings.clusters,
                    threshold: scenario.threshold.to_string(),
                    seed: data.seed,
                    participant: outcome.test_participant.clone(),
                    accuracy: outcome.evaluation.accuracy,
                    macro_f1: outcome.evaluation.macro_f1,
                });
                outcomes.push(outcome);
            }
        }
    }
    Ok((ScenarioReport::from_rows(rows), outcomes))
}

fn run_one(
    participants: &[PreparedParticipant],
    scenario: &Scenario,
    seed: u64,
    test: usize,
    settings: &ExperimentSettings,
) -> Result<ScenarioOutcome> {
    let parts = participants
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != test)
        .map(|(i, p)| scenario_windows(scenario, p, i, seed))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&LabeledWindowSet> = parts.iter().collect();
    let train_set = LabeledWindowSet::concat(&refs, &scenario.to_string())?;
    let budget = participants
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != test)
        .map(|(_, p)| p.budget)
        .sum();
    let test_p = &participants[test];
    let manifest = ScenarioManifest::new(scenario, &test_p.id, budget, &train_set);
    let spec = LossSpec::new(scenario.loss, train_set.class_weights.clone())
        .with_q(settings.loss.q)
        .with_tau(settings.loss.tau);
    let cfg = settings.train.clone().with_seed(seed);
    let model = train(&train_set, &cfg, &spec).map_err(|e| e.for_participant(&test_p.id))?;
    let evaluation = evaluate(&model, &test_p.full)?;
    Ok(ScenarioOutcome {
        scenario: *scenario,
        seed,
        test_participant: test_p.id.clone(),
        evaluation,
        manifest,
        final_loss: model.loss_curve().last().copied().unwrap_or(f64::NAN),
    })
}

/// Replaces a `fraction` of clip labels with a uniformly drawn different
/// class (symmetric noise). Centroid labels are corrupted like any other clip.
pub fn corrupt_labels(weak: &WeakLabelSet, fraction: f64, num_labels: usize, seed: u64) -> WeakLabelSet {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = weak.clone();
    for clip in &mut out.clips {
        if rng.random::<f64>() < fraction {
            let shift: LabelId = rng.random_range(1..num_labels);
            clip.label = (clip.label + shift) % num_labels;
        }
    }
    out
}
