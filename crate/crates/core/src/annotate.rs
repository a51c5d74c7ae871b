//! Centroid-clip selection, label propagation and distance thresholding.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{ClusterAssignment, GmmModel};
use crate::ingest::{ClipSpan, EmbeddingSet, LabelId};

/// The highest-density member clip of one cluster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub cluster: usize,
    pub clip_index: usize,
    pub log_density: f64,
    pub member_count: usize,
}

/// Centroid clips indexed by cluster; empty clusters have none.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidSet {
    by_cluster: Vec<Option<Centroid>>,
}

impl CentroidSet {
    pub fn get(&self, cluster: usize) -> Option<&Centroid> {
        self.by_cluster.get(cluster).and_then(Option::as_ref)
    }

    /// Centroids of non-empty clusters in cluster order.
    pub fn iter(&self) -> impl Iterator<Item = &Centroid> + '_ {
        self.by_cluster.iter().flatten()
    }

    /// Number of mixture components, including empty ones.
    pub fn num_clusters(&self) -> usize {
        self.by_cluster.len()
    }

    /// Number of non-empty clusters.
    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        (0..self.by_cluster.len())
            .filter(|&c| self.by_cluster[c].is_none())
            .collect()
    }

    pub fn clip_indices(&self) -> Vec<usize> {
        self.iter().map(|c| c.clip_index).collect()
    }

    pub fn from_centroids(num_clusters: usize, centroids: impl IntoIterator<Item = Centroid>) -> Self {
        let mut by_cluster = vec![None; num_clusters];
        for c in centroids {
            by_cluster[c.cluster] = Some(c);
        }
        CentroidSet { by_cluster }
    }
}

/// For every non-empty cluster, the member clip with the highest log-density
/// under that cluster's component; ties go to the smallest clip index.
pub fn find_centroids(model: &GmmModel, assignment: &ClusterAssignment) -> CentroidSet {
    debug_assert_eq!(model.num_components(), assignment.num_components());
    let c = assignment.num_components();
    let mut by_cluster: Vec<Option<Centroid>> = vec![None; c];
    for (t, &cluster) in assignment.cluster_ids.iter().enumerate() {
        let density = assignment.log_densities[[t, cluster]];
        match &mut by_cluster[cluster] {
            Some(best) => {
                best.member_count += 1;
                if density > best.log_density {
                    best.clip_index = t;
                    best.log_density = density;
                }
            }
            slot @ None => {
                *slot = Some(Centroid {
                    cluster,
                    clip_index: t,
                    log_density: density,
                    member_count: 1,
                })
            }
        }
    }
    CentroidSet { by_cluster }
}

/// Labels supplied for cluster centroids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    labels: BTreeMap<usize, LabelId>,
}

impl ClusterLabels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cluster: usize, label: LabelId) -> Option<LabelId> {
        self.labels.insert(cluster, label)
    }

    pub fn get(&self, cluster: usize) -> Option<LabelId> {
        self.labels.get(&cluster).copied()
    }

    /// Number of clips the annotator had to look at.
    pub fn budget(&self) -> usize {
        self.labels.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, LabelId)> + '_ {
        self.labels.iter().map(|(&c, &l)| (c, l))
    }
}

impl FromIterator<(usize, LabelId)> for ClusterLabels {
    fn from_iter<I: IntoIterator<Item = (usize, LabelId)>>(iter: I) -> Self {
        ClusterLabels {
            labels: iter.into_iter().collect(),
        }
    }
}

/// Simulated annotator: every centroid clip is answered with its ground-truth label.
pub fn annotate_oracle(centroids: &CentroidSet, ground_truth: &[LabelId]) -> Result<ClusterLabels> {
    centroids
        .iter()
        .map(|c| {
            ground_truth
                .get(c.clip_index)
                .map(|&label| (c.cluster, label))
                .ok_or_else(|| {
                    Error::Data(format!(
                        "no ground truth for centroid clip {} of cluster {}",
                        c.clip_index, c.cluster
                    ))
                })
        })
        .collect()
}

/// Maximum L2 distance (embedding units) between a clip and its centroid clip.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub const NONE: Threshold = Threshold(f64::INFINITY);
    pub const T6: Threshold = Threshold(6.0);
    pub const T4: Threshold = Threshold(4.0);

    pub fn new(distance: f64) -> Result<Self> {
        if distance >= 0.0 {
            Ok(Threshold(distance))
        } else {
            Err(Error::Config(format!("threshold must be >= 0, got {distance}")))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_unbounded(&self) -> bool {
        self.0.is_infinite()
    }

    pub fn retains(&self, distance: f64) -> bool {
        distance <= self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::NONE
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_unbounded() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    /// Accepts `none`/`inf`, the presets `T-6`/`T-4`, or a plain number.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "inf" | "infinity" | "" => Ok(Threshold::NONE),
            "t-6" | "t6" => Ok(Threshold::T6),
            "t-4" | "t4" => Ok(Threshold::T4),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("unknown threshold {s:?}")))
                .and_then(Threshold::new),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_unbounded() {
            serializer.serialize_str("none")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Threshold::new(v).map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Propagated label of one clip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLabel {
    pub cluster_id: usize,
    pub label: LabelId,
    pub distance_to_centroid: f64,
    pub retained: bool,
}

/// Weak labels of one participant's clips.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakLabelSet {
    pub participant_id: String,
    pub clips: Vec<WeakLabel>,
    pub threshold: Threshold,
    pub annotation_budget: usize,
    /// Clip index of every cluster's centroid.
    pub centroid_clips: BTreeMap<usize, usize>,
}

impl WeakLabelSet {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn retained_count(&self) -> usize {
        self.clips.iter().filter(|c| c.retained).count()
    }

    pub fn coverage(&self) -> f64 {
        self.retained_count() as f64 / self.clips.len() as f64
    }

    /// Same labels under a different threshold.
    pub fn with_threshold(&self, threshold: Threshold) -> WeakLabelSet {
        let mut out = self.clone();
        out.threshold = threshold;
        for clip in &mut out.clips {
            clip.retained = threshold.retains(clip.distance_to_centroid);
        }
        out
    }

    /// Writes `clip_index,start_s,end_s,cluster_id,label_id,distance,retained,is_centroid`.
    pub fn to_csv(&self, spans: &[ClipSpan]) -> String {
        let centroids: std::collections::BTreeSet<usize> = self.centroid_clips.values().copied().collect();
        let mut out = String::from("clip_index,start_s,end_s,cluster_id,label_id,distance,retained,is_centroid\n");
        for (t, (clip, span)) in self.clips.iter().zip(spans).enumerate() {
            out.push_str(&format!(
                "{t},{},{},{},{},{},{},{}\n",
                span.start_s,
                span.end_s,
                clip.cluster_id,
                clip.label,
                clip.distance_to_centroid,
                u8::from(clip.retained),
                u8::from(centroids.contains(&t))
            ));
        }
        out
    }

    pub fn from_csv(participant_id: &str, text: &str, threshold: Threshold) -> Result<(WeakLabelSet, Vec<ClipSpan>)> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.starts_with("clip_index,start_s,end_s,cluster_id,label_id,distance,retained") => {}
            _ => return Err(Error::Format("weak label CSV has an unexpected header".into())),
        }
        let mut clips = Vec::new();
        let mut spans = Vec::new();
        let mut centroid_clips = BTreeMap::new();
        for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Format(format!("weak label row {row} has {} fields", fields.len())));
            }
            let bad = |col: usize| Error::Format(format!("weak label row {row}, column {col} unparsable"));
            let num = |col: usize| fields[col].parse::<f64>().map_err(|_| bad(col));
            let int = |col: usize| fields[col].parse::<usize>().map_err(|_| bad(col));
            spans.push(ClipSpan::new(num(1)?, num(2)?));
            let cluster_id = int(3)?;
            if int(7)? == 1 {
                centroid_clips.insert(cluster_id, int(0)?);
            }
            clips.push(WeakLabel {
                cluster_id,
                label: int(4)?,
                distance_to_centroid: num(5)?,
                retained: int(6)? == 1,
            });
        }
        let set = WeakLabelSet {
            participant_id: participant_id.to_string(),
            annotation_budget: centroid_clips.len(),
            clips,
            threshold,
            centroid_clips,
        };
        Ok((set.with_threshold(threshold), spans))
    }
}

/// Copies every centroid label to its cluster's members and marks clips
/// farther than `threshold` (L2, in the clustering embedding space) from
/// their centroid clip as omitted.
pub fn propagate(
    assignment: &ClusterAssignment,
    labels: &ClusterLabels,
    embeddings: &EmbeddingSet,
    centroids: &CentroidSet,
    threshold: Threshold,
) -> Result<WeakLabelSet> {
    if embeddings.len() != assignment.len() {
        return Err(Error::Shape(format!(
            "{} embeddings for {} assigned clips",
            embeddings.len(),
            assignment.len()
        )));
    }
    for centroid in centroids.iter() {
        if labels.get(centroid.cluster).is_none() {
            return Err(Error::State(format!("cluster {} has no label", centroid.cluster)));
        }
    }
    let rows = embeddings.clips();
    let mut clips = Vec::with_capacity(assignment.len());
    for (t, &cluster) in assignment.cluster_ids.iter().enumerate() {
        let centroid = centroids
            .get(cluster)
            .ok_or_else(|| Error::State(format!("clip {t} belongs to cluster {cluster}, which has no centroid")))?;
        let distance = rows
            .row(t)
            .iter()
            .zip(rows.row(centroid.clip_index).iter())
            .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
            .sum::<f64>()
            .sqrt();
        clips.push(WeakLabel {
            cluster_id: cluster,
            label: labels.get(cluster).unwrap(),
            distance_to_centroid: distance,
            retained: threshold.retains(distance),
        });
    }
    Ok(WeakLabelSet {
        participant_id: embeddings.participant_id().to_string(),
        clips,
        threshold,
        annotation_budget: labels.budget(),
        centroid_clips: centroids.iter().map(|c| (c.cluster, c.clip_index)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{assign, GmmModel};
    use crate::ingest::WindowingSpec;
    use ndarray::{array, Array2};

    fn one_d_model() -> GmmModel {
        GmmModel::from_parts(vec![1.0], array![[0.0]], vec![array![[1.0]]]).unwrap()
    }

    fn set(values: &[f32]) -> EmbeddingSet {
        let clips = Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap();
        EmbeddingSet::new("p", clips, WindowingSpec::CLIPS.spans(values.len(), 0.0), "x").unwrap()
    }

    #[test]
    fn centroid_is_closest_to_mean() {
        let model = one_d_model();
        let emb = set(&[-1.0, 0.2, 3.0]);
        let a = assign(&model, emb.to_f64().view()).unwrap();
        let centroids = find_centroids(&model, &a);
        assert_eq!(centroids.get(0).unwrap().clip_index, 1);
        assert_eq!(centroids.get(0).unwrap().member_count, 3);
    }

    #[test]
    fn single_member_and_empty_clusters() {
        let model = GmmModel::from_parts(
            vec![0.5, 0.25, 0.25],
            array![[0.0], [100.0], [-100.0]],
            vec![array![[1.0]], array![[1.0]], array![[1.0]]],
        )
        .unwrap();
        let emb = set(&[0.1, -0.2, 99.0]);
        let a = assign(&model, emb.to_f64().view()).unwrap();
        let centroids = find_centroids(&model, &a);
        assert_eq!(centroids.get(1).unwrap().clip_index, 2);
        assert_eq!(centroids.empty_clusters(), vec![2]);
        assert_eq!(centroids.len(), 2);
    }

    #[test]
    fn centroid_ties_go_to_smallest_index() {
        let model = one_d_model();
        let emb = set(&[1.0, -1.0, 1.0]);
        let a = assign(&model, emb.to_f64().view()).unwrap();
        assert_eq!(find_centroids(&model, &a).get(0).unwrap().clip_index, 0);
    }

    #[test]
    fn oracle_labels() {
        let centroids = CentroidSet::from_centroids(
            3,
            [
                Centroid { cluster: 0, clip_index: 4, log_density: 0.0, member_count: 1 },
                Centroid { cluster: 2, clip_index: 1, log_density: 0.0, member_count: 1 },
            ],
        );
        let gt = vec![0, 3, 0, 0, 3];
        let labels = annotate_oracle(&centroids, &gt).unwrap();
        assert_eq!(labels.budget(), 2);
        assert_eq!(labels.get(0), Some(3));
        assert_eq!(labels.get(2), Some(3));
        assert!(matches!(annotate_oracle(&centroids, &gt[..2]), Err(Error::Data(_))));
    }

    #[test]
    fn oracle_budget_equals_non_empty_clusters() {
        let centroids = CentroidSet::from_centroids(
            100,
            (0..100).map(|c| Centroid { cluster: c, clip_index: c, log_density: 0.0, member_count: 1 }),
        );
        let gt: Vec<LabelId> = (0..100).map(|t| t % 7).collect();
        assert_eq!(annotate_oracle(&centroids, &gt).unwrap().budget(), 100);
    }

    #[test]
    fn thresholds_bound_retention() {
        let model = GmmModel::from_parts(
            vec![0.5, 0.5],
            array![[0.0], [10.0]],
            vec![array![[1.0]], array![[1.0]]],
        )
        .unwrap();
        let emb = set(&[0.0, 0.5, -2.0, 10.0, 11.0, 12.5]);
        let a = assign(&model, emb.to_f64().view()).unwrap();
        let centroids = find_centroids(&model, &a);
        let labels: ClusterLabels = [(0, 1), (1, 2)].into_iter().collect();

        let all = propagate(&a, &labels, &emb, &centroids, Threshold::NONE).unwrap();
        assert_eq!(all.retained_count(), 6);
        assert_eq!(all.clips.iter().map(|c| c.label).collect::<Vec<_>>(), vec![1, 1, 1, 2, 2, 2]);

        let zero = propagate(&a, &labels, &emb, &centroids, Threshold::new(0.0).unwrap()).unwrap();
        let kept: Vec<usize> = (0..6).filter(|&t| zero.clips[t].retained).collect();
        assert_eq!(kept, vec![0, 3]);
        assert_eq!(zero.clips[0].distance_to_centroid, 0.0);

        let mid = all.with_threshold(Threshold::new(1.5).unwrap());
        let kept: Vec<usize> = (0..6).filter(|&t| mid.clips[t].retained).collect();
        assert_eq!(kept, vec![0, 1, 3, 4]);
    }

    #[test]
    fn unlabeled_cluster_is_state_error() {
        let model = one_d_model();
        let emb = set(&[0.0, 1.0]);
        let a = assign(&model, emb.to_f64().view()).unwrap();
        let centroids = find_centroids(&model, &a);
        assert!(matches!(
            propagate(&a, &ClusterLabels::new(), &emb, &centroids, Threshold::NONE),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!("T-4".parse::<Threshold>().unwrap(), Threshold::T4);
        assert_eq!("t-6".parse::<Threshold>().unwrap(), Threshold::T6);
        assert!("none".parse::<Threshold>().unwrap().is_unbounded());
        assert_eq!("2.5".parse::<Threshold>().unwrap().value(), 2.5);
        assert!("-1".parse::<Threshold>().is_err());
        assert!("wide".parse::<Threshold>().is_err());
    }

    #[test]
    fn weak_csv_round_trip() {
        let model = one_d_model();
        let emb = set(&[0.0, 1.5, -0.25]);
        let a = assign(&model, emb.to_f64().view()).unwrap();
        let centroids = find_centroids(&model, &a);
        let labels: ClusterLabels = [(0, 4)].into_iter().collect();
        let weak = propagate(&a, &labels, &emb, &centroids, Threshold::T4).unwrap();
        let (back, spans) = WeakLabelSet::from_csv("p", &weak.to_csv(emb.spans()), Threshold::T4).unwrap();
        assert_eq!(back, weak);
        assert_eq!(spans, emb.spans());
    }
}
