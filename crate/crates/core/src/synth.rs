//! Seeded synthetic benchmark suites: activity timelines, frame-pooled clip
//! embeddings drawn from per-class Gaussian modes, and synchronised sensor
//! streams with class-specific sinusoids.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ParticipantClips;
use crate::ingest::{
    clip_ground_truth, pool_frames, save_embeddings, EmbeddingSet, LabelId, LabelTrack, SensorSeries, WindowingSpec,
};

/// A contiguous stretch of one activity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: LabelId,
    /// Which of the class's embedding modes the segment is drawn from.
    pub mode: usize,
}

/// Random activity segments covering `[0, duration_s)`; consecutive segments
/// always differ in label.
pub fn timeline(
    duration_s: f64,
    segment_s: (f64, f64),
    num_classes: usize,
    modes_per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    let mut t = 0.0;
    while t < duration_s {
        let len = rng.random_range(segment_s.0..=segment_s.1);
        let mut label = rng.random_range(0..num_classes);
        if let Some(prev) = out.last() {
            if num_classes > 1 && label == prev.label {
                label = (label + 1 + rng.random_range(0..num_classes - 1)) % num_classes;
            }
        }
        out.push(Segment {
            start_s: t,
            end_s: (t + len).min(duration_s),
            label,
            mode: rng.random_range(0..modes_per_class),
        });
        t += len;
    }
    out
}

fn segment_at(segments: &[Segment], t: f64) -> &Segment {
    let i = segments.partition_point(|s| s.end_s <= t);
    &segments[i.min(segments.len() - 1)]
}

/// Dense ground-truth track sampled at `rate_hz`.
pub fn track_from_segments(
    participant_id: &str,
    segments: &[Segment],
    duration_s: f64,
    rate_hz: f64,
    label_names: Vec<String>,
) -> Result<LabelTrack> {
    let n = (duration_s * rate_hz).floor() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate_hz;
            (t, segment_at(segments, t).label)
        })
        .collect();
    LabelTrack::new(participant_id, samples, label_names)
}

/// `null`, `activity-1`, ...
pub fn label_names(num_classes: usize) -> Vec<String> {
    (0..num_classes)
        .map(|i| if i == 0 { "null".to_string() } else { format!("activity-{i}") })
        .collect()
}

/// Class-mode Gaussian embeddings pooled from per-frame draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSuiteConfig {
    pub num_classes: usize,
    pub modes_per_class: usize,
    pub dim: usize,
    pub participants: usize,
    pub clips: usize,
    /// Standard deviation of the mode means around the origin.
    pub mode_scale: f64,
    /// Per-coordinate standard deviation of a single frame.
    pub frame_noise: f64,
    pub fps: f64,
    pub segment_s: (f64, f64),
    pub seed: u64,
}

impl Default for EmbeddingSuiteConfig {
    fn default() -> Self {
        EmbeddingSuiteConfig {
            num_classes: 10,
            modes_per_class: 2,
            dim: 16,
            participants: 5,
            clips: 2000,
            mode_scale: 3.0,
            frame_noise: 2.0,
            fps: 2.0,
            segment_s: (30.0, 90.0),
            seed: 0,
        }
    }
}

impl EmbeddingSuiteConfig {
    /// Modes that sit close together relative to the noise, so that clusters
    /// mix classes near their edges.
    pub fn overlap_heavy() -> Self {
        EmbeddingSuiteConfig {
            mode_scale: 1.0,
            frame_noise: 3.0,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn duration(&self) -> f64 {
        let spec = WindowingSpec::CLIPS;
        (self.clips - 1) as f64 * spec.stride_s + spec.length_s
    }
}

/// Mode means shared by all participants of a suite.
fn mode_means(num_classes: usize, modes: usize, dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
    let normal = Normal::new(0.0, scale).expect("positive scale");
    (0..num_classes)
        .map(|_| (0..modes).map(|_| (0..dim).map(|_| normal.sample(rng)).collect()).collect())
        .collect()
}

fn pooled_embeddings(
    participant_id: &str,
    segments: &[Segment],
    means: &[Vec<Vec<f64>>],
    frame_noise: f64,
    fps: f64,
    clips: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EmbeddingSet> {
    let spec = WindowingSpec::CLIPS;
    let dim = means[0][0].len();
    let frames = ((clips - 1) as f64 * spec.stride_s * fps + spec.length_s * fps).round() as usize;
    let noise = Normal::new(0.0, frame_noise).map_err(|err| Error::Config(err.to_string()))?;
    let mut data = Array2::<f32>::zeros((frames, dim));
    for (i, mut row) in data.rows_mut().into_iter().enumerate() {
        let seg = segment_at(segments, i as f64 / fps);
        let mean = &means[seg.label][seg.mode];
        for (v, m) in row.iter_mut().zip(mean) {
            *v = (m + noise.sample(rng)) as f32;
        }
    }
    pool_frames(participant_id, data.view(), spec, fps, "synth")
}

/// Everything generated for one synthetic participant.
#[derive(Clone, Debug)]
pub struct SynthParticipant {
    pub embeddings: EmbeddingSet,
    pub track: LabelTrack,
    pub ground_truth: Vec<LabelId>,
    pub sensors: Option<SensorSeries>,
}

impl SynthParticipant {
    pub fn participant_id(&self) -> &str {
        self.embeddings.participant_id()
    }

    pub fn clips(&self) -> ParticipantClips {
        ParticipantClips {
            embeddings: self.embeddings.clone(),
            ground_truth: self.ground_truth.clone(),
        }
    }
}

pub fn participant_name(i: usize) -> String {
    format!("p{:02}", i + 1)
}

pub fn embedding_suite(cfg: &EmbeddingSuiteConfig) -> Result<Vec<SynthParticipant>> {
    if cfg.num_classes < 2 || cfg.modes_per_class == 0 || cfg.dim == 0 || cfg.clips == 0 {
        return Err(Error::Config("suite needs two classes, one mode, one dimension and one clip".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = mode_means(cfg.num_classes, cfg.modes_per_class, cfg.dim, cfg.mode_scale, &mut rng);
    let duration = cfg.duration();
    let names = label_names(cfg.num_classes);
    (0..cfg.participants)
        .map(|p| {
            let id = participant_name(p);
            let segments = timeline(duration, cfg.segment_s, cfg.num_classes, cfg.modes_per_class, &mut rng);
            let embeddings = pooled_embeddings(&id, &segments, &means, cfg.frame_noise, cfg.fps, cfg.clips, &mut rng)?;
            let track = track_from_segments(&id, &segments, duration, 10.0, names.clone())?;
            let ground_truth = clip_ground_truth(&track, embeddings.spans())?;
            Ok(SynthParticipant {
                embeddings,
                track,
                ground_truth,
                sensors: None,
            })
        })
        .collect()
}

/// Sensor streams plus matching clip embeddings on one shared clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorSuiteConfig {
    pub num_classes: usize,
    pub participants: usize,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub channels: usize,
    /// Standard deviation of additive sensor noise.
    pub sensor_noise: f64,
    pub embedding: EmbeddingSuiteConfig,
    pub seed: u64,
}

impl Default for SensorSuiteConfig {
    fn default() -> Self {
        SensorSuiteConfig {
            num_classes: 6,
            participants: 5,
            duration_s: 900.0,
            rate_hz: 20.0,
            channels: 3,
            sensor_noise: 0.4,
            embedding: EmbeddingSuiteConfig {
                num_classes: 6,
                modes_per_class: 2,
                dim: 16,
                mode_scale: 1.1,
                frame_noise: 2.5,
                segment_s: (20.0, 60.0),
                ..EmbeddingSuiteConfig::default()
            },
            seed: 0,
        }
    }
}

impl SensorSuiteConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Oscillation frequency of class `a` in Hz.
    pub fn class_frequency(&self, a: LabelId) -> f64 {
        0.5 + 0.75 * a as f64
    }
}

/// Class-specific sinusoids with random per-segment phase, per-class
/// channel gains and Gaussian noise.
fn sensor_stream(
    participant_id: &str,
    segments: &[Segment],
    cfg: &SensorSuiteConfig,
    gains: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<SensorSeries> {
    let n = (cfg.duration_s * cfg.rate_hz).floor() as usize;
    let noise = Normal::new(0.0, cfg.sensor_noise).map_err(|err| Error::Config(err.to_string()))?;
    let phases: Vec<Vec<f64>> = segments
        .iter()
        .map(|_| (0..cfg.channels).map(|_| rng.random_range(0.0..TAU)).collect())
        .collect();
    let timestamps: Vec<f64> = (0..n).map(|i| i as f64 / cfg.rate_hz).collect();
    let mut channels = Array2::<f64>::zeros((n, cfg.channels));
    for (i, &t) in timestamps.iter().enumerate() {
        let k = segments.partition_point(|s| s.end_s <= t).min(segments.len() - 1);
        let a = segments[k].label;
        let f = cfg.class_frequency(a);
        for d in 0..cfg.channels {
            channels[[i, d]] = gains[a][d] * (TAU * f * t + phases[k][d]).sin() + noise.sample(rng);
        }
    }
    SensorSeries::new(participant_id, cfg.rate_hz, channels, timestamps)
}

pub fn sensor_suite(cfg: &SensorSuiteConfig) -> Result<Vec<SynthParticipant>> {
    let a = cfg.num_classes;
    if a < 2 || cfg.channels == 0 || !(cfg.rate_hz > 0.0) {
        return Err(Error::Config("sensor suite needs two classes, one channel and a positive rate".into()));
    }
    let emb = EmbeddingSuiteConfig {
        num_classes: a,
        ..cfg.embedding.clone()
    };
    let spec = WindowingSpec::CLIPS;
    let clips = ((cfg.duration_s - spec.length_s) / spec.stride_s).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = mode_means(a, emb.modes_per_class, emb.dim, emb.mode_scale, &mut rng);
    let gains: Vec<Vec<f64>> = (0..a)
        .map(|_| (0..cfg.channels).map(|_| rng.random_range(0.5..1.5)).collect())
        .collect();
    let names = label_names(a);
    (0..cfg.participants)
        .map(|p| {
            let id = participant_name(p);
            let segments = timeline(cfg.duration_s, emb.segment_s, a, emb.modes_per_class, &mut rng);
            let embeddings = pooled_embeddings(&id, &segments, &means, emb.frame_noise, emb.fps, clips, &mut rng)?;
            let track = track_from_segments(&id, &segments, cfg.duration_s, cfg.rate_hz, names.clone())?;
            let ground_truth = clip_ground_truth(&track, embeddings.spans())?;
            let sensors = sensor_stream(&id, &segments, cfg, &gains, &mut rng)?;
            Ok(SynthParticipant {
                embeddings,
                track,
                ground_truth,
                sensors: Some(sensors),
            })
        })
        .collect()
}

/// Writes a suite in the on-disk dataset layout:
/// `embeddings/<participant>/<tag>.wemb`, `labels/<participant>.csv`,
/// `labels/names.txt` and `sensors/<participant>.csv`.
pub fn write_dataset(root: &Path, participants: &[SynthParticipant]) -> Result<()> {
    let labels_dir = root.join("labels");
    fs::create_dir_all(&labels_dir).map_err(|e| Error::io(&labels_dir, e))?;
    if let Some(first) = participants.first() {
        let names = first.track.label_names().join("\n") + "\n";
        let path = labels_dir.join("names.txt");
        fs::write(&path, names).map_err(|e| Error::io(&path, e))?;
    }
    for p in participants {
        let id = p.participant_id();
        let dir = root.join("embeddings").join(id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_embeddings(&dir.join(format!("{}.wemb", p.embeddings.source_tag())), &p.embeddings)?;
        let path = labels_dir.join(format!("{id}.csv"));
        fs::write(&path, p.track.to_csv()).map_err(|e| Error::io(&path, e))?;
        if let Some(sensors) = &p.sensors {
            let dir = root.join("sensors");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join(format!("{id}.csv"));
            fs::write(&path, sensors.to_csv()).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timeline_covers_duration_without_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let segs = timeline(500.0, (10.0, 30.0), 4, 2, &mut rng);
        assert_eq!(segs[0].start_s, 0.0);
        assert_eq!(segs.last().unwrap().end_s, 500.0);
        for w in segs.windows(2) {
            assert_eq!(w[0].end_s, w[1].start_s);
            assert_ne!(w[0].label, w[1].label);
        }
    }

    #[test]
    fn embedding_suite_shapes_and_determinism() {
        let cfg = EmbeddingSuiteConfig {
            participants: 2,
            clips: 120,
            ..EmbeddingSuiteConfig::default()
        };
        let a = embedding_suite(&cfg).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].embeddings.len(), 120);
        assert_eq!(a[0].embeddings.dim(), 16);
        assert_eq!(a[0].ground_truth.len(), 120);
        let b = embedding_suite(&cfg).unwrap();
        assert_eq!(a[1].embeddings, b[1].embeddings);
        let c = embedding_suite(&cfg.clone().with_seed(1)).unwrap();
        assert_ne!(a[0].embeddings, c[0].embeddings);
    }

    #[test]
    fn sensor_suite_shares_clock_with_clips() {
        let cfg = SensorSuiteConfig {
            participants: 1,
            duration_s: 120.0,
            ..SensorSuiteConfig::default()
        };
        let p = &sensor_suite(&cfg).unwrap()[0];
        let s = p.sensors.as_ref().unwrap();
        assert_eq!(s.len(), 2400);
        assert_eq!(p.embeddings.len(), 117);
        assert!(p.embeddings.spans().last().unwrap().end_s <= 120.0);
        assert_eq!(p.track.samples().len(), s.len());
    }
}
