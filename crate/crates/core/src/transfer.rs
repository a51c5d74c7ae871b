//! Projection of clip-level weak labels onto synchronised sensor streams and
//! construction of the windowed training sets for each training scenario.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::{Threshold, WeakLabelSet};
use crate::error::{Error, Result};
use crate::ingest::{majority, ClipSpan, LabelId, SensorSeries, WindowingSpec};
use crate::weaktrain::LossKind;

/// Per-sample labels of a sensor stream; `kept[i] == false` marks samples
/// with no retained clip covering them.
#[derive(Clone, Debug, PartialEq)]
pub struct TimestepLabels {
    pub labels: Vec<LabelId>,
    pub kept: Vec<bool>,
    pub num_labels: usize,
}

impl TimestepLabels {
    /// Fully kept track, e.g. dense ground truth.
    pub fn dense(labels: Vec<LabelId>, num_labels: usize) -> Self {
        let kept = vec![true; labels.len()];
        TimestepLabels { labels, kept, num_labels }
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }
}

/// Labels every sensor sample with the label of the retained clip whose
/// centre is nearest (ties to the earlier clip) among the clips covering it.
pub fn labels_to_timesteps(
    weak: &WeakLabelSet,
    spans: &[ClipSpan],
    series: &SensorSeries,
    num_labels: usize,
) -> Result<TimestepLabels> {
    if spans.len() != weak.len() {
        return Err(Error::Shape(format!("{} spans for {} weak labels", spans.len(), weak.len())));
    }
    let ts = series.timestamps();
    let (first, last) = (ts[0], ts[ts.len() - 1]);
    let covered = match (spans.first(), spans.last()) {
        (Some(a), Some(b)) => last >= a.start_s && first < b.end_s,
        _ => false,
    };
    if !covered {
        return Err(Error::Alignment(format!(
            "sensor stream [{first}, {last}] does not overlap the clip range"
        )));
    }
    let mut labels = vec![0; ts.len()];
    let mut kept = vec![false; ts.len()];
    for (i, &t) in ts.iter().enumerate() {
        let lo = spans.partition_point(|s| s.end_s <= t);
        let hi = spans.partition_point(|s| s.start_s <= t);
        let mut best: Option<(usize, f64)> = None;
        for k in lo..hi {
            if !weak.clips[k].retained || !spans[k].contains(t) {
                continue;
            }
            let d = (spans[k].center() - t).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        if let Some((k, _)) = best {
            labels[i] = weak.clips[k].label;
            kept[i] = true;
        }
    }
    Ok(TimestepLabels {
        labels,
        kept,
        num_labels,
    })
}

/// Samples a dense per-timestep label track from clip-free ground truth:
/// each sample takes the label of the last track sample at or before it.
pub fn sample_track(track: &crate::ingest::LabelTrack, series: &SensorSeries) -> TimestepLabels {
    let samples = track.samples();
    let labels = series
        .timestamps()
        .iter()
        .map(|&t| {
            let idx = samples.partition_point(|&(ts, _)| ts <= t);
            if idx == 0 {
                crate::ingest::NULL_LABEL
            } else {
                samples[idx - 1].1
            }
        })
        .collect();
    TimestepLabels::dense(labels, track.num_labels())
}

/// Flattened sensor windows with one label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindowSet {
    /// M x (W·D), sample-major within a window.
    pub features: Array2<f64>,
    pub labels: Vec<LabelId>,
    pub spans: Vec<ClipSpan>,
    /// Inverse-frequency class weights, zero for absent classes.
    pub class_weights: Vec<f64>,
    pub num_labels: usize,
    pub window_len: usize,
    pub channels: usize,
    pub provenance: String,
}

impl LabeledWindowSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_labels];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn distinct_classes(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    fn recompute_weights(&mut self) {
        self.class_weights = inverse_frequency_weights(&self.class_counts(), self.len());
    }

    /// Windows at `indices`, with weights recomputed.
    pub fn subset(&self, indices: &[usize], provenance: &str) -> LabeledWindowSet {
        let mut out = LabeledWindowSet {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            spans: indices.iter().map(|&i| self.spans[i]).collect(),
            class_weights: Vec::new(),
            num_labels: self.num_labels,
            window_len: self.window_len,
            channels: self.channels,
            provenance: provenance.to_string(),
        };
        out.recompute_weights();
        out
    }

    /// Same windows with replaced labels.
    pub fn relabeled(&self, labels: Vec<LabelId>, provenance: &str) -> Result<LabeledWindowSet> {
        if labels.len() != self.len() || labels.iter().any(|&l| l >= self.num_labels) {
            return Err(Error::Shape("relabeling must keep window count and vocabulary".into()));
        }
        let mut out = LabeledWindowSet {
            labels,
            provenance: provenance.to_string(),
            ..self.clone()
        };
        out.recompute_weights();
        Ok(out)
    }

    /// Stacks window sets with identical geometry (e.g. several participants).
    pub fn concat(sets: &[&LabeledWindowSet], provenance: &str) -> Result<LabeledWindowSet> {
        let first = sets
            .first()
            .ok_or_else(|| Error::EmptyDataset("no window sets to concatenate".into()))?;
        if sets.iter().any(|s| {
            s.num_labels != first.num_labels || s.window_len != first.window_len || s.channels != first.channels
        }) {
            return Err(Error::Shape("window sets differ in geometry or vocabulary".into()));
        }
        let views: Vec<_> = sets.iter().map(|s| s.features.view()).collect();
        let features = ndarray::concatenate(Axis(0), &views).map_err(|err| Error::Shape(err.to_string()))?;
        let mut out = LabeledWindowSet {
            features,
            labels: sets.iter().flat_map(|s| s.labels.iter().copied()).collect(),
            spans: sets.iter().flat_map(|s| s.spans.iter().copied()).collect(),
            class_weights: Vec::new(),
            num_labels: first.num_labels,
            window_len: first.window_len,
            channels: first.channels,
            provenance: provenance.to_string(),
        };
        out.recompute_weights();
        Ok(out)
    }
}

/// `total / (A · count_c)`, zero for classes that never occur.
pub fn inverse_frequency_weights(counts: &[usize], total: usize) -> Vec<f64> {
    let a = counts.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { total as f64 / (a * c as f64) })
        .collect()
}

/// Slides `spec` over the stream. A window's label is the majority of its
/// kept samples; windows with more than half their samples masked are dropped.
pub fn make_windows(series: &SensorSeries, track: &TimestepLabels, spec: WindowingSpec) -> Result<LabeledWindowSet> {
    spec.validate()?;
    let n = series.len();
    if track.labels.len() != n || track.kept.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} sensor samples", track.labels.len())));
    }
    let rate = series.rate_hz();
    let w = (spec.length_s * rate).round() as usize;
    let stride = ((spec.stride_s * rate).round() as usize).max(1);
    if w == 0 {
        return Err(Error::Config(format!("window of {}s is empty at {rate} Hz", spec.length_s)));
    }
    let d = series.num_channels();
    let count = if n >= w { (n - w) / stride + 1 } else { 0 };
    let channels = series.channels();
    let ts = series.timestamps();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut spans = Vec::new();
    let mut counts = vec![0usize; track.num_labels];
    for k in 0..count {
        let start = k * stride;
        let range = start..start + w;
        let masked = track.kept[range.clone()].iter().filter(|&&kept| !kept).count();
        if 2 * masked > w {
            continue;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for i in range.clone() {
            if track.kept[i] {
                counts[track.labels[i]] += 1;
            }
        }
        let Some(label) = majority(&counts) else { continue };
        for i in range {
            features.extend(channels.row(i).iter().copied());
        }
        labels.push(label);
        spans.push(ClipSpan::new(ts[start], ts[start] + w as f64 / rate));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "every window of participant {} was dropped",
            series.participant_id()
        )));
    }
    let m = labels.len();
    let features = Array2::from_shape_vec((m, w * d), features).map_err(|err| Error::Shape(err.to_string()))?;
    let mut out = LabeledWindowSet {
        features,
        labels,
        spans,
        class_weights: Vec::new(),
        num_labels: track.num_labels,
        window_len: w,
        channels: d,
        provenance: String::from("windows"),
    };
    out.recompute_weights();
    Ok(out)
}

/// Training regimes compared against each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Every window with its ground-truth label.
    FullySupervised,
    /// Only windows overlapping the annotated centroid clips, ground-truth labels.
    FewShot,
    /// Windows overlapping as many uniformly drawn clips as were annotated.
    Random,
    /// All windows kept by the weak-label pipeline, with propagated labels.
    Weak,
}

/// A scenario with its loss and (for weak scenarios) distance threshold,
/// e.g. `weak-phgce-t-4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub loss: LossKind,
    pub threshold: Threshold,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, loss: LossKind) -> Self {
        Scenario {
            kind,
            loss,
            threshold: Threshold::NONE,
        }
    }

    pub fn with_threshold(mut self, threshold: Threshold) -> Self {
        self.threshold = threshold;
        self
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let loss = match self.loss {
            LossKind::WeightedCe => "ce",
            LossKind::Gce => "gce",
            LossKind::Phgce => "phgce",
        };
        match self.kind {
            ScenarioKind::FullySupervised => f.write_str("fully-supervised")?,
            ScenarioKind::FewShot => write!(f, "few-shot-{loss}")?,
            ScenarioKind::Random => write!(f, "random-{loss}")?,
            ScenarioKind::Weak => write!(f, "weak-{loss}")?,
        }
        if !self.threshold.is_unbounded() {
            write!(f, "-t-{}", self.threshold)?;
        }
        Ok(())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let unknown = || Error::Config(format!("unknown scenario {s:?}"));
        let (kind, rest) = if let Some(rest) = lower.strip_prefix("fully-supervised") {
            (ScenarioKind::FullySupervised, rest)
        } else if let Some(rest) = lower.strip_prefix("few-shot") {
            (ScenarioKind::FewShot, rest)
        } else if let Some(rest) = lower.strip_prefix("random") {
            (ScenarioKind::Random, rest)
        } else if let Some(rest) = lower.strip_prefix("weak") {
            (ScenarioKind::Weak, rest)
        } else {
            return Err(unknown());
        };
        let (loss, rest) = if let Some(r) = rest.strip_prefix("-phgce") {
            (LossKind::Phgce, r)
        } else if let Some(r) = rest.strip_prefix("-gce") {
            (LossKind::Gce, r)
        } else if let Some(r) = rest.strip_prefix("-ce") {
            (LossKind::WeightedCe, r)
        } else {
            (LossKind::WeightedCe, rest)
        };
        let threshold = match rest {
            "" => Threshold::NONE,
            r => match r.strip_prefix("-t-").or_else(|| r.strip_prefix("-t")) {
                Some(v) => v.parse::<f64>().map_err(|_| unknown()).and_then(Threshold::new)?,
                None => return Err(unknown()),
            },
        };
        if kind != ScenarioKind::Weak && !threshold.is_unbounded() {
            return Err(Error::Config(format!("scenario {s:?}: only weak scenarios take a threshold")));
        }
        if kind == ScenarioKind::FullySupervised && loss != LossKind::WeightedCe {
            return Err(unknown());
        }
        Ok(Scenario { kind, loss, threshold })
    }
}

/// `n` distinct clip indices out of `total`, sorted.
pub fn sample_random_clips(n: usize, total: usize, seed: u64) -> Result<Vec<usize>> {
    if n > total {
        return Err(Error::Config(format!("cannot draw {n} clips from {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, total, n).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

fn overlapping_windows(set: &LabeledWindowSet, clips: &[ClipSpan]) -> Vec<usize> {
    (0..set.len())
        .filter(|&i| {
            let w = set.spans[i];
            clips.iter().any(|c| c.overlaps(w.start_s, w.end_s))
        })
        .collect()
}

/// Builds the training set of one participant for `kind`.
///
/// `annotated` are the spans of the clips shown to the annotator; `all_clips`
/// is the pool the random scenario draws its equally sized sample from.
pub fn build_scenario(
    kind: ScenarioKind,
    full_gt: &LabeledWindowSet,
    weak: &LabeledWindowSet,
    annotated: &[ClipSpan],
    all_clips: &[ClipSpan],
    rng_seed: u64,
) -> Result<LabeledWindowSet> {
    let out = match kind {
        ScenarioKind::FullySupervised => full_gt.subset(&(0..full_gt.len()).collect::<Vec<_>>(), "fully-supervised"),
        ScenarioKind::FewShot => full_gt.subset(&overlapping_windows(full_gt, annotated), "few-shot"),
        ScenarioKind::Random => {
            let picked = sample_random_clips(annotated.len(), all_clips.len(), rng_seed)?;
            let clips: Vec<ClipSpan> = picked.iter().map(|&i| all_clips[i]).collect();
            full_gt.subset(&overlapping_windows(full_gt, &clips), "random")
        }
        ScenarioKind::Weak => weak.subset(&(0..weak.len()).collect::<Vec<_>>(), "weak"),
    };
    if out.is_empty() {
        return Err(Error::EmptyDataset(format!("scenario {kind:?} selected no windows")));
    }
    Ok(out)
}

/// Summary of one scenario's training data, written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub scenario: String,
    pub participant: String,
    pub threshold: Threshold,
    pub budget: usize,
    pub total_windows: usize,
    pub windows_per_class: Vec<usize>,
}

impl ScenarioManifest {
    pub fn new(scenario: &Scenario, participant: &str, budget: usize, set: &LabeledWindowSet) -> Self {
        ScenarioManifest {
            scenario: scenario.to_string(),
            participant: participant.to_string(),
            threshold: scenario.threshold,
            budget,
            total_windows: set.len(),
            windows_per_class: set.class_counts(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::WeakLabel;
    use std::collections::BTreeMap;

    fn series(seconds: f64, rate: f64) -> SensorSeries {
        let n = (seconds * rate).round() as usize;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
        let channels = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        SensorSeries::new("p", rate, channels, ts).unwrap()
    }

    fn weak(labels: &[LabelId], retained: &[bool]) -> WeakLabelSet {
        WeakLabelSet {
            participant_id: "p".into(),
            clips: labels
                .iter()
                .zip(retained)
                .map(|(&label, &retained)| WeakLabel {
                    cluster_id: label,
                    label,
                    distance_to_centroid: 0.0,
                    retained,
                })
                .collect(),
            threshold: Threshold::NONE,
            annotation_budget: 1,
            centroid_clips: BTreeMap::new(),
        }
    }

    #[test]
    fn timestep_at_clip_center_takes_its_label() {
        let s = series(10.0, 10.0);
        let spans = vec![ClipSpan::new(0.0, 4.0), ClipSpan::new(4.0, 8.0)];
        let w = weak(&[1, 2], &[true, true]);
        let track = labels_to_timesteps(&w, &spans, &s, 3).unwrap();
        assert_eq!(track.labels[20], 1);
        assert_eq!(track.labels[60], 2);
        // beyond the last clip: nothing covers it
        assert!(!track.kept[90]);
    }

    #[test]
    fn omitted_only_coverage_is_masked() {
        let s = series(8.0, 10.0);
        let spans = vec![ClipSpan::new(0.0, 4.0), ClipSpan::new(4.0, 8.0)];
        let w = weak(&[1, 2], &[false, true]);
        let track = labels_to_timesteps(&w, &spans, &s, 3).unwrap();
        assert!(track.kept[..40].iter().all(|&k| !k));
        assert!(track.kept[40..].iter().all(|&k| k));
    }

    #[test]
    fn overlapping_clips_use_nearest_center() {
        let s = series(12.0, 4.0);
        let spans = WindowingSpec::CLIPS.spans(9, 0.0);
        let labels: Vec<LabelId> = (0..9).collect();
        let w = weak(&labels, &[true; 9]);
        let track = labels_to_timesteps(&w, &spans, &s, 9).unwrap();
        for (i, &t) in s.timestamps().iter().enumerate() {
            // exhaustive scan over covering clips
            let best = (0..9)
                .filter(|&k| spans[k].contains(t))
                .min_by(|&a, &b| {
                    (spans[a].center() - t).abs().total_cmp(&(spans[b].center() - t).abs()).then(a.cmp(&b))
                });
            assert_eq!(best.map(|k| labels[k]), track.kept[i].then_some(track.labels[i]), "t={t}");
        }
    }

    #[test]
    fn disjoint_ranges_fail() {
        let s = series(4.0, 10.0);
        let spans = vec![ClipSpan::new(100.0, 104.0)];
        assert!(matches!(
            labels_to_timesteps(&weak(&[1], &[true]), &spans, &s, 2),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn window_count_and_uniform_labels() {
        let s = series(10.0, 50.0);
        let track = TimestepLabels::dense(vec![2; 500], 4);
        let set = make_windows(&s, &track, WindowingSpec::SENSOR).unwrap();
        assert_eq!(set.len(), 19);
        assert!(set.labels.iter().all(|&l| l == 2));
        assert_eq!(set.class_weights, vec![0.0, 0.0, 19.0 / (4.0 * 19.0), 0.0]);
        assert_eq!(set.feature_dim(), 100);
        assert_eq!(set.features[[1, 0]], s.channels()[[25, 0]]);
    }

    #[test]
    fn mixed_window_majority_and_masking() {
        let s = series(1.0, 50.0);
        let mut labels = vec![1; 30];
        labels.extend(vec![3; 20]);
        let set = make_windows(&s, &TimestepLabels::dense(labels.clone(), 4), WindowingSpec::SENSOR).unwrap();
        assert_eq!(set.labels, vec![1]);

        let mut track = TimestepLabels::dense(labels, 4);
        track.kept[..26].iter_mut().for_each(|k| *k = false);
        assert!(matches!(make_windows(&s, &track, WindowingSpec::SENSOR), Err(Error::EmptyDataset(_))));
        track.kept[25] = true;
        // 25 masked of 50 is not more than half; 5 kept samples of label 1 vs 20 of label 3
        assert_eq!(make_windows(&s, &track, WindowingSpec::SENSOR).unwrap().labels, vec![3]);
    }

    #[test]
    fn scenario_names() {
        for name in ["fully-supervised", "few-shot-ce", "random-ce", "weak-ce", "weak-phgce", "weak-phgce-t-4", "weak-ce-t-6"] {
            assert_eq!(name.parse::<Scenario>().unwrap().to_string(), name);
        }
        assert_eq!("weak".parse::<Scenario>().unwrap().to_string(), "weak-ce");
        assert!("semi-supervised".parse::<Scenario>().is_err());
        assert!("few-shot-ce-t-4".parse::<Scenario>().is_err());
    }

    #[test]
    fn random_and_few_shot_budgets_match() {
        let s = series(60.0, 10.0);
        let labels: Vec<LabelId> = (0..600).map(|i| (i / 100) % 3).collect();
        let full = make_windows(&s, &TimestepLabels::dense(labels, 3), WindowingSpec::SENSOR).unwrap();
        let clips = WindowingSpec::CLIPS.spans(57, 0.0);
        let annotated: Vec<ClipSpan> = [3usize, 20, 41].iter().map(|&i| clips[i]).collect();
        let few = build_scenario(ScenarioKind::FewShot, &full, &full, &annotated, &clips, 1).unwrap();
        assert!(few.spans.iter().all(|w| annotated.iter().any(|c| c.overlaps(w.start_s, w.end_s))));
        let a = sample_random_clips(annotated.len(), clips.len(), 1).unwrap();
        let b = sample_random_clips(annotated.len(), clips.len(), 2).unwrap();
        assert_eq!(a.len(), b.len());
        assert_ne!(a, b);
        assert!(!build_scenario(ScenarioKind::Random, &full, &full, &annotated, &clips, 1).unwrap().is_empty());
    }

    #[test]
    fn perfect_weak_labels_match_ground_truth() {
        let s = series(40.0, 10.0);
        let gt: Vec<LabelId> = (0..400).map(|i| if i < 200 { 1 } else { 2 }).collect();
        let full = make_windows(&s, &TimestepLabels::dense(gt, 3), WindowingSpec::SENSOR).unwrap();
        // clips aligned so that no clip straddles the change point
        let spans: Vec<ClipSpan> = (0..10).map(|i| ClipSpan::new(4.0 * i as f64, 4.0 * i as f64 + 4.0)).collect();
        let clip_labels: Vec<LabelId> = (0..10).map(|i| if i < 5 { 1 } else { 2 }).collect();
        let w = weak(&clip_labels, &[true; 10]);
        let track = labels_to_timesteps(&w, &spans, &s, 3).unwrap();
        let weak_set = make_windows(&s, &track, WindowingSpec::SENSOR).unwrap();
        let built = build_scenario(ScenarioKind::Weak, &full, &weak_set, &[], &spans, 0).unwrap();
        for (i, span) in built.spans.iter().enumerate() {
            let j = full.spans.iter().position(|f| f == span).unwrap();
            assert_eq!(built.labels[i], full.labels[j]);
        }
    }
}
