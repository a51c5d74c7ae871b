//! Loading, validating, windowing and combining clip embeddings, label tracks
//! and sensor streams.
//!
//! The canonical embedding container is a small little-endian binary file:
//!
//! ```text
//! "WEMB" | u32 version=1 | u32 T | u32 E | T*E f32 (row-major)
//!        [ | u32 flag=1 | 2*T f32 (start_s, end_s per clip) ]
//! ```
//!
//! A CSV fallback with header `start_s,end_s,f0,...,f{E-1}` is accepted as well.

use std::fs;
use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::codec::ByteReader;
use crate::error::{Error, Result};

/// Index into a label vocabulary. Index 0 is the NULL (background) class.
pub type LabelId = usize;

pub const NULL_LABEL: LabelId = 0;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"WEMB";
pub const EMBEDDING_VERSION: u32 = 1;

const SPAN_TOLERANCE: f64 = 1e-4;

/// Time extent of one clip, in seconds on the recording clock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipSpan {
    pub start_s: f64,
    pub end_s: f64,
}

impl ClipSpan {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        ClipSpan { start_s, end_s }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }

    /// Half-open containment: `start_s <= t < end_s`.
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }

    /// True if the half-open intervals `[start_s, end_s)` and `[start, end)` intersect.
    pub fn overlaps(&self, start: f64, end: f64) -> bool {
        self.start_s < end && start < self.end_s
    }
}

/// Sliding window geometry in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowingSpec {
    pub length_s: f64,
    pub stride_s: f64,
}

impl WindowingSpec {
    /// Four second clips shifted by one second (75% overlap).
    pub const CLIPS: WindowingSpec = WindowingSpec {
        length_s: 4.0,
        stride_s: 1.0,
    };

    /// One second sensor windows with 50% overlap.
    pub const SENSOR: WindowingSpec = WindowingSpec {
        length_s: 1.0,
        stride_s: 0.5,
    };

    pub fn new(length_s: f64, stride_s: f64) -> Result<Self> {
        let spec = WindowingSpec { length_s, stride_s };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length_s.is_finite()
            && self.stride_s.is_finite()
            && self.stride_s > 0.0
            && self.stride_s <= self.length_s;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "window spec needs 0 < stride <= length, got length {} stride {}",
                self.length_s, self.stride_s
            )))
        }
    }

    /// Window length and stride expressed in samples at `rate` samples per second.
    pub fn in_samples(&self, rate: f64) -> (f64, f64) {
        (self.length_s * rate, self.stride_s * rate)
    }

    /// Number of complete windows over `n` samples at `rate`; trailing partial
    /// windows are dropped.
    pub fn window_count(&self, n: usize, rate: f64) -> usize {
        let (len, stride) = self.in_samples(rate);
        let n = n as f64;
        if n + 1e-9 < len {
            return 0;
        }
        ((n - len) / stride + 1e-9).floor() as usize + 1
    }

    /// Spans of `count` consecutive windows starting at `origin_s`.
    pub fn spans(&self, count: usize, origin_s: f64) -> Vec<ClipSpan> {
        (0..count)
            .map(|t| {
                let start = origin_s + t as f64 * self.stride_s;
                ClipSpan::new(start, start + self.length_s)
            })
            .collect()
    }
}

/// Per-participant clip embedding matrix (T clips x E features).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    participant_id: String,
    clips: Array2<f32>,
    spans: Vec<ClipSpan>,
    source_tag: String,
}

impl EmbeddingSet {
    pub fn new(
        participant_id: impl Into<String>,
        clips: Array2<f32>,
        spans: Vec<ClipSpan>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let set = EmbeddingSet {
            participant_id: participant_id.into(),
            clips,
            spans,
            source_tag: source_tag.into(),
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let (t, e) = self.clips.dim();
        if t == 0 || e == 0 {
            return Err(Error::EmptyInput(format!(
                "embedding matrix must be at least 1x1, got {t}x{e}"
            )));
        }
        if self.spans.len() != t {
            return Err(Error::Shape(format!(
                "{} clip spans for {t} clips",
                self.spans.len()
            )));
        }
        for ((row, col), v) in self.clips.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite embedding value {v} at row {row}, column {col}"
                )));
            }
        }
        let length = self.spans[0].duration();
        if !(length > 0.0) {
            return Err(Error::Data(format!("clip 0 has non-positive length {length}")));
        }
        for (i, span) in self.spans.iter().enumerate() {
            if !span.start_s.is_finite() || !span.end_s.is_finite() {
                return Err(Error::Data(format!("clip {i} has a non-finite span")));
            }
            if (span.duration() - length).abs() > SPAN_TOLERANCE * length.max(1.0) {
                return Err(Error::Data(format!(
                    "clip {i} lasts {}s, expected {length}s",
                    span.duration()
                )));
            }
            if i > 0 && span.start_s <= self.spans[i - 1].start_s {
                return Err(Error::Data(format!(
                    "clip starts must be strictly increasing (clip {i})"
                )));
            }
        }
        Ok(())
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn clips(&self) -> ArrayView2<'_, f32> {
        self.clips.view()
    }

    pub fn spans(&self) -> &[ClipSpan] {
        &self.spans
    }

    /// Number of clips, T.
    pub fn len(&self) -> usize {
        self.clips.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.nrows() == 0
    }

    /// Embedding dimension, E.
    pub fn dim(&self) -> usize {
        self.clips.ncols()
    }

    /// Clip length in seconds (identical for all clips).
    pub fn clip_length(&self) -> f64 {
        self.spans[0].duration()
    }

    pub fn with_participant(mut self, participant_id: impl Into<String>) -> Self {
        self.participant_id = participant_id.into();
        self
    }

    pub fn with_source_tag(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    /// Widened copy used for all numerical work.
    pub fn to_f64(&self) -> Array2<f64> {
        self.clips.mapv(f64::from)
    }

    /// Copy with every row scaled to unit L2 norm (zero rows stay zero).
    pub fn l2_normalized(&self) -> EmbeddingSet {
        let mut clips = self.clips.clone();
        for mut row in clips.axis_iter_mut(Axis(0)) {
            let norm = row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| (f64::from(v) / norm) as f32);
            }
        }
        EmbeddingSet {
            clips,
            ..self.clone()
        }
    }

    /// Column slice `cols` of every clip; the inverse of [`concat_embeddings`].
    pub fn select_columns(&self, cols: Range<usize>) -> Result<EmbeddingSet> {
        if cols.start >= cols.end || cols.end > self.dim() {
            return Err(Error::Shape(format!(
                "column range {cols:?} outside 0..{}",
                self.dim()
            )));
        }
        Ok(EmbeddingSet {
            clips: self.clips.slice(s![.., cols]).to_owned(),
            ..self.clone()
        })
    }

    /// Encodes the canonical binary form, always including the span block.
    pub fn encode(&self) -> Vec<u8> {
        let (t, e) = self.clips.dim();
        let mut out = Vec::with_capacity(16 + 4 * t * e + 4 + 8 * t);
        out.extend_from_slice(&EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&(t as u32).to_le_bytes());
        out.extend_from_slice(&(e as u32).to_le_bytes());
        for v in self.clips.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&1u32.to_le_bytes());
        for span in &self.spans {
            out.extend_from_slice(&(span.start_s as f32).to_le_bytes());
            out.extend_from_slice(&(span.end_s as f32).to_le_bytes());
        }
        out
    }

    /// Decodes the binary form. Files without a span block get spans from
    /// `opts.windowing` starting at time zero.
    pub fn decode(bytes: &[u8], opts: &LoadOptions) -> Result<EmbeddingSet> {
        let mut reader = ByteReader::new(bytes);
        let magic = reader.take(4).ok_or_else(|| Error::Format("file shorter than header".into()))?;
        if magic != EMBEDDING_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:02x?}, expected WEMB")));
        }
        let header = |r: &mut ByteReader<'_>| {
            r.u32().ok_or_else(|| Error::Format("truncated header".into()))
        };
        let version = header(&mut reader)?;
        if version != EMBEDDING_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let t = header(&mut reader)? as usize;
        let e = header(&mut reader)? as usize;
        if let Some(expected) = opts.expected_dim {
            if expected != e {
                return Err(Error::Shape(format!(
                    "embedding dimension {e} does not match expected {expected}"
                )));
            }
        }
        let n = t
            .checked_mul(e)
            .ok_or_else(|| Error::Format(format!("header size {t}x{e} overflows")))?;
        let available = reader.remaining() / 4;
        if available < n {
            return Err(Error::Format(format!(
                "truncated: header declares {t}x{e} = {n} values, file holds {available}"
            )));
        }
        let values: Vec<f32> = (0..n).map(|_| reader.f32().unwrap()).collect();
        let spans = match reader.remaining() {
            0 => opts.windowing.spans(t, 0.0),
            rest if rest == 4 + 8 * t => {
                let flag = reader.u32().unwrap();
                if flag != 1 {
                    return Err(Error::Format(format!("unknown trailing block flag {flag}")));
                }
                (0..t)
                    .map(|_| {
                        let start = reader.f32().unwrap();
                        let end = reader.f32().unwrap();
                        ClipSpan::new(f64::from(start), f64::from(end))
                    })
                    .collect()
            }
            rest => {
                return Err(Error::Format(format!(
                    "{rest} trailing bytes after matrix; expected 0 or {}",
                    4 + 8 * t
                )))
            }
        };
        let clips = Array2::from_shape_vec((t, e), values)
            .map_err(|err| Error::Shape(err.to_string()))?;
        EmbeddingSet::new(
            opts.participant_id.clone().unwrap_or_default(),
            clips,
            spans,
            opts.source_tag.clone(),
        )
    }

    /// Writes the CSV fallback format.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("start_s,end_s");
        for j in 0..self.dim() {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for (span, row) in self.spans.iter().zip(self.clips.rows()) {
            out.push_str(&format!("{},{}", span.start_s, span.end_s));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, opts: &LoadOptions) -> Result<EmbeddingSet> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|err| Error::Format(err.to_string()))?
            .clone();
        if headers.len() < 3 || &headers[0] != "start_s" || &headers[1] != "end_s" {
            return Err(Error::Format(
                "embedding CSV header must be start_s,end_s,f0,...".into(),
            ));
        }
        let e = headers.len() - 2;
        for (j, name) in headers.iter().skip(2).enumerate() {
            if name != format!("f{j}") {
                return Err(Error::Format(format!("column {} should be f{j}, found {name}", j + 2)));
            }
        }
        if let Some(expected) = opts.expected_dim {
            if expected != e {
                return Err(Error::Shape(format!(
                    "embedding dimension {e} does not match expected {expected}"
                )));
            }
        }
        let mut values = Vec::new();
        let mut spans = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|err| Error::Format(err.to_string()))?;
            if record.len() != e + 2 {
                return Err(Error::Shape(format!(
                    "row {row} has {} fields, expected {}",
                    record.len(),
                    e + 2
                )));
            }
            let field = |col: usize| -> Result<f64> {
                record[col].parse::<f64>().map_err(|_| {
                    Error::Data(format!("row {row}, column {col}: cannot parse {:?}", &record[col]))
                })
            };
            spans.push(ClipSpan::new(field(0)?, field(1)?));
            for col in 2..e + 2 {
                values.push(field(col)? as f32);
            }
        }
        let t = spans.len();
        let clips = Array2::from_shape_vec((t, e), values)
            .map_err(|err| Error::Shape(err.to_string()))?;
        EmbeddingSet::new(
            opts.participant_id.clone().unwrap_or_default(),
            clips,
            spans,
            opts.source_tag.clone(),
        )
    }
}

/// How to interpret an embedding file on load.
#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Defaults to the file stem.
    pub participant_id: Option<String>,
    pub source_tag: String,
    pub expected_dim: Option<usize>,
    /// Used to synthesise spans when the file carries none.
    pub windowing: WindowingSpec,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            participant_id: None,
            source_tag: String::from("unknown"),
            expected_dim: None,
            windowing: WindowingSpec::CLIPS,
        }
    }
}

/// Loads an embedding file (binary, or CSV when the extension is `.csv`).
pub fn load_embeddings(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingSet> {
    load_embeddings_with(
        path,
        &LoadOptions {
            expected_dim,
            ..LoadOptions::default()
        },
    )
}

pub fn load_embeddings_with(path: &Path, opts: &LoadOptions) -> Result<EmbeddingSet> {
    let mut opts = opts.clone();
    if opts.participant_id.is_none() {
        opts.participant_id = path
            .file_stem()
            .map(|stem| stem.to_string_lossy().into_owned());
    }
    let is_csv = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
    if is_csv {
        let text = fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
        EmbeddingSet::from_csv(&text, &opts)
    } else {
        let bytes = fs::read(path).map_err(|err| Error::io(path, err))?;
        EmbeddingSet::decode(&bytes, &opts)
    }
}

pub fn save_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    fs::write(path, set.encode()).map_err(|err| Error::io(path, err))
}

/// Mean-pools frame embeddings into fixed-length clips.
///
/// Clip `t` averages frames `[round(t*stride*fps), round(t*stride*fps + length*fps))`.
pub fn pool_frames(
    participant_id: &str,
    frames: ArrayView2<'_, f32>,
    spec: WindowingSpec,
    fps: f64,
    source_tag: &str,
) -> Result<EmbeddingSet> {
    spec.validate()?;
    if !(fps > 0.0) {
        return Err(Error::Config(format!("fps must be positive, got {fps}")));
    }
    let (f, e) = frames.dim();
    let (len, stride) = spec.in_samples(fps);
    let count = spec.window_count(f, fps);
    if count == 0 || e == 0 {
        return Err(Error::EmptyInput(format!(
            "{f} frames cannot hold one {}s clip at {fps} fps",
            spec.length_s
        )));
    }
    let mut clips = Array2::<f32>::zeros((count, e));
    for t in 0..count {
        let start = (t as f64 * stride).round() as usize;
        let end = ((t as f64 * stride + len).round() as usize).min(f);
        let window = frames.slice(s![start..end, ..]);
        let n = (end - start) as f64;
        for (j, col) in window.columns().into_iter().enumerate() {
            let sum: f64 = col.iter().map(|&v| f64::from(v)).sum();
            clips[[t, j]] = (sum / n) as f32;
        }
    }
    EmbeddingSet::new(participant_id, clips, spec.spans(count, 0.0), source_tag)
}

/// Row-wise concatenation of two aligned embedding sets.
pub fn concat_embeddings(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<EmbeddingSet> {
    if a.participant_id != b.participant_id {
        return Err(Error::Alignment(format!(
            "participants differ: {} vs {}",
            a.participant_id, b.participant_id
        )));
    }
    if a.len() != b.len() {
        return Err(Error::Alignment(format!(
            "clip counts differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if let Some(i) = a
        .spans
        .iter()
        .zip(&b.spans)
        .position(|(x, y)| (x.start_s - y.start_s).abs() > SPAN_TOLERANCE || (x.end_s - y.end_s).abs() > SPAN_TOLERANCE)
    {
        return Err(Error::Alignment(format!("clip {i} spans differ")));
    }
    let clips = ndarray::concatenate(Axis(1), &[a.clips.view(), b.clips.view()])
        .map_err(|err| Error::Shape(err.to_string()))?;
    Ok(EmbeddingSet {
        participant_id: a.participant_id.clone(),
        clips,
        spans: a.spans.clone(),
        source_tag: format!("{}+{}", a.source_tag, b.source_tag),
    })
}

/// Ground-truth activity annotations sampled over time.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTrack {
    participant_id: String,
    samples: Vec<(f64, LabelId)>,
    label_names: Vec<String>,
}

impl LabelTrack {
    pub fn new(
        participant_id: impl Into<String>,
        samples: Vec<(f64, LabelId)>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let a = label_names.len();
        if a < 2 {
            return Err(Error::Data(format!(
                "label vocabulary needs at least 2 entries (NULL + one activity), got {a}"
            )));
        }
        for (i, &(ts, label)) in samples.iter().enumerate() {
            if !ts.is_finite() {
                return Err(Error::Data(format!("sample {i} has non-finite timestamp")));
            }
            if label >= a {
                return Err(Error::Data(format!(
                    "sample {i} has label {label} outside vocabulary of {a}"
                )));
            }
            if i > 0 && ts <= samples[i - 1].0 {
                return Err(Error::Data(format!(
                    "timestamps must be strictly increasing (sample {i})"
                )));
            }
        }
        Ok(LabelTrack {
            participant_id: participant_id.into(),
            samples,
            label_names,
        })
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn samples(&self) -> &[(f64, LabelId)] {
        &self.samples
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Vocabulary size A, including NULL.
    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp_s,label_id\n");
        for (ts, label) in &self.samples {
            out.push_str(&format!("{ts},{label}\n"));
        }
        out
    }

    pub fn from_csv(participant_id: &str, text: &str, label_names: Vec<String>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|err| Error::Format(err.to_string()))?;
        if headers.len() != 2 || &headers[0] != "timestamp_s" || &headers[1] != "label_id" {
            return Err(Error::Format("label CSV header must be timestamp_s,label_id".into()));
        }
        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|err| Error::Format(err.to_string()))?;
            let ts = record[0]
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("row {row}: bad timestamp {:?}", &record[0])))?;
            let label = record[1]
                .parse::<LabelId>()
                .map_err(|_| Error::Data(format!("row {row}: bad label id {:?}", &record[1])))?;
            samples.push((ts, label));
        }
        LabelTrack::new(participant_id, samples, label_names)
    }
}

/// Parses a label-name sidecar: one name per line, line index = label id.
pub fn parse_label_names(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim_end)
        .filter(|line| !line.is_empty())
        .map(String::from)
        .collect()
}

pub fn load_label_track(participant_id: &str, csv_path: &Path, names_path: &Path) -> Result<LabelTrack> {
    let names = fs::read_to_string(names_path).map_err(|err| Error::io(names_path, err))?;
    let text = fs::read_to_string(csv_path).map_err(|err| Error::io(csv_path, err))?;
    LabelTrack::from_csv(participant_id, &text, parse_label_names(&names))
}

/// Ground-truth label of every clip: the majority label among track samples
/// inside the clip span, ties to the smaller id, NULL when nothing is covered.
pub fn clip_ground_truth(track: &LabelTrack, spans: &[ClipSpan]) -> Result<Vec<LabelId>> {
    if track.samples.is_empty() {
        return Err(Error::Data(format!(
            "label track for {} is empty",
            track.participant_id
        )));
    }
    let mut counts = vec![0usize; track.num_labels()];
    let labels = spans
        .iter()
        .map(|span| {
            let lo = track.samples.partition_point(|&(ts, _)| ts < span.start_s);
            let hi = track.samples.partition_point(|&(ts, _)| ts < span.end_s);
            if lo >= hi {
                return NULL_LABEL;
            }
            counts.iter_mut().for_each(|c| *c = 0);
            for &(_, label) in &track.samples[lo..hi] {
                counts[label] += 1;
            }
            majority(&counts).unwrap_or(NULL_LABEL)
        })
        .collect();
    Ok(labels)
}

/// Index of the largest count, smallest index on ties; `None` if all zero.
pub(crate) fn majority(counts: &[usize]) -> Option<LabelId> {
    let mut best: Option<(LabelId, usize)> = None;
    for (label, &count) in counts.iter().enumerate() {
        if count > 0 && best.is_none_or(|(_, c)| count > c) {
            best = Some((label, count));
        }
    }
    best.map(|(label, _)| label)
}

/// Timestamped multichannel sensor stream (N samples x D channels).
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSeries {
    participant_id: String,
    rate_hz: f64,
    channels: Array2<f64>,
    timestamps: Vec<f64>,
}

impl SensorSeries {
    pub fn new(
        participant_id: impl Into<String>,
        rate_hz: f64,
        channels: Array2<f64>,
        timestamps: Vec<f64>,
    ) -> Result<Self> {
        let n = channels.nrows();
        if n == 0 || channels.ncols() == 0 {
            return Err(Error::EmptyInput("sensor series has no samples or channels".into()));
        }
        if timestamps.len() != n {
            return Err(Error::Shape(format!(
                "{} timestamps for {n} samples",
                timestamps.len()
            )));
        }
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::Data(format!("sampling rate must be positive, got {rate_hz}")));
        }
        if let Some(((row, col), v)) = channels.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite sensor value {v} at row {row}, channel {col}"
            )));
        }
        if timestamps.iter().any(|t| !t.is_finite()) || timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("sensor timestamps must be finite and strictly increasing".into()));
        }
        if n >= 2 {
            let median = median_delta(&timestamps);
            let implied = 1.0 / median;
            if (implied - rate_hz).abs() > 0.01 * rate_hz {
                return Err(Error::Data(format!(
                    "declared rate {rate_hz} Hz disagrees with median timestamp spacing ({implied:.4} Hz)"
                )));
            }
        }
        Ok(SensorSeries {
            participant_id: participant_id.into(),
            rate_hz,
            channels,
            timestamps,
        })
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn channels(&self) -> ArrayView2<'_, f64> {
        self.channels.view()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.ncols()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp_s");
        for j in 0..self.num_channels() {
            out.push_str(&format!(",c{j}"));
        }
        out.push('\n');
        for (ts, row) in self.timestamps.iter().zip(self.channels.rows()) {
            out.push_str(&ts.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the sensor CSV. The rate is inferred from the median timestamp
    /// spacing unless given.
    pub fn from_csv(participant_id: &str, text: &str, rate_hz: Option<f64>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|err| Error::Format(err.to_string()))?.clone();
        if headers.len() < 2 || &headers[0] != "timestamp_s" {
            return Err(Error::Format("sensor CSV header must be timestamp_s,c0,...".into()));
        }
        let d = headers.len() - 1;
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|err| Error::Format(err.to_string()))?;
            if record.len() != d + 1 {
                return Err(Error::Shape(format!("row {row} has {} fields, expected {}", record.len(), d + 1)));
            }
            for (col, field) in record.iter().enumerate() {
                let v = field
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("row {row}, column {col}: cannot parse {field:?}")))?;
                if col == 0 {
                    timestamps.push(v);
                } else {
                    values.push(v);
                }
            }
        }
        let n = timestamps.len();
        let channels = Array2::from_shape_vec((n, d), values).map_err(|err| Error::Shape(err.to_string()))?;
        let rate = match rate_hz {
            Some(rate) => rate,
            None if n >= 2 => 1.0 / median_delta(&timestamps),
            None => return Err(Error::EmptyInput("cannot infer a rate from fewer than 2 samples".into())),
        };
        SensorSeries::new(participant_id, rate, channels, timestamps)
    }
}

pub fn load_sensor_csv(participant_id: &str, path: &Path, rate_hz: Option<f64>) -> Result<SensorSeries> {
    let text = fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
    SensorSeries::from_csv(participant_id, &text, rate_hz)
}

fn median_delta(timestamps: &[f64]) -> f64 {
    let mut deltas: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    deltas.sort_by(f64::total_cmp);
    let mid = deltas.len() / 2;
    if deltas.len() % 2 == 1 {
        deltas[mid]
    } else {
        0.5 * (deltas[mid - 1] + deltas[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn header(t: u32, e: u32) -> Vec<u8> {
        let mut bytes = b"WEMB".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&t.to_le_bytes());
        bytes.extend_from_slice(&e.to_le_bytes());
        bytes
    }

    fn floats(bytes: &mut Vec<u8>, values: &[f32]) {
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    #[test]
    fn decodes_minimal_file() {
        let mut bytes = header(3, 2);
        floats(&mut bytes, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let set = EmbeddingSet::decode(&bytes, &LoadOptions::default()).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.dim(), 2);
        assert_eq!(set.clips()[[2, 1]], 6.0);
        assert_eq!(set.spans()[1], ClipSpan::new(1.0, 5.0));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut bytes = header(3, 2);
        floats(&mut bytes, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        match EmbeddingSet::decode(&bytes, &LoadOptions::default()) {
            Err(Error::Format(msg)) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = header(1, 1);
        floats(&mut bytes, &[0.0]);
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(
            EmbeddingSet::decode(&wrong_magic, &LoadOptions::default()),
            Err(Error::Format(_))
        ));
        let mut wrong_version = bytes;
        wrong_version[4] = 2;
        assert!(matches!(
            EmbeddingSet::decode(&wrong_version, &LoadOptions::default()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn expected_dim_mismatch_is_shape_error() {
        let mut bytes = header(1, 768);
        floats(&mut bytes, &vec![0.5; 768]);
        let opts = LoadOptions {
            expected_dim: Some(768),
            source_tag: "clip".into(),
            ..LoadOptions::default()
        };
        let set = EmbeddingSet::decode(&bytes, &opts).unwrap();
        assert_eq!(set.dim(), 768);
        assert_eq!(set.source_tag(), "clip");
        let opts = LoadOptions {
            expected_dim: Some(1024),
            ..opts
        };
        assert!(matches!(EmbeddingSet::decode(&bytes, &opts), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_entry_names_position() {
        let mut bytes = header(2, 2);
        floats(&mut bytes, &[0.0, 1.0, f32::NAN, 2.0]);
        match EmbeddingSet::decode(&bytes, &LoadOptions::default()) {
            Err(Error::Data(msg)) => assert!(msg.contains("row 1") && msg.contains("column 0"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn span_block_is_read() {
        let mut bytes = header(2, 1);
        floats(&mut bytes, &[1.0, 2.0]);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        floats(&mut bytes, &[10.0, 14.0, 12.0, 16.0]);
        let set = EmbeddingSet::decode(&bytes, &LoadOptions::default()).unwrap();
        assert_eq!(set.spans(), &[ClipSpan::new(10.0, 14.0), ClipSpan::new(12.0, 16.0)]);
    }

    #[test]
    fn csv_round_trip() {
        let set = EmbeddingSet::new(
            "p1",
            array![[0.25f32, -1.5], [3.0, 4.125]],
            WindowingSpec::CLIPS.spans(2, 0.0),
            "clip",
        )
        .unwrap();
        let opts = LoadOptions {
            participant_id: Some("p1".into()),
            source_tag: "clip".into(),
            ..LoadOptions::default()
        };
        assert_eq!(EmbeddingSet::from_csv(&set.to_csv(), &opts).unwrap(), set);
    }

    #[test]
    fn pool_frames_window_count() {
        let frames = Array2::<f32>::ones((300, 4));
        let set = pool_frames("p", frames.view(), WindowingSpec::CLIPS, 30.0, "clip").unwrap();
        assert_eq!(set.len(), 7);
        assert!(set.clips().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pool_frames_one_hot_mean() {
        // frames e_1..e_120 followed by zeros; first clip spans frames 0..120
        let mut frames = Array2::<f32>::zeros((150, 130));
        for i in 0..120 {
            frames[[i, i]] = 1.0;
        }
        let set = pool_frames("p", frames.view(), WindowingSpec::CLIPS, 30.0, "clip").unwrap();
        let first = set.clips().row(0).to_owned();
        for j in 0..120 {
            assert_eq!(first[j], (1.0f64 / 120.0) as f32);
        }
        assert!(first.iter().skip(120).all(|&v| v == 0.0));
    }

    #[test]
    fn pool_frames_too_short() {
        let frames = Array2::<f32>::ones((100, 2));
        assert!(matches!(
            pool_frames("p", frames.view(), WindowingSpec::CLIPS, 30.0, "clip"),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn concat_dims_and_rows() {
        let spans = WindowingSpec::CLIPS.spans(1, 0.0);
        let a = EmbeddingSet::new("p", array![[1.0f32, 2.0]], spans.clone(), "clip").unwrap();
        let b = EmbeddingSet::new("p", array![[3.0f32]], spans, "flow").unwrap();
        let c = concat_embeddings(&a, &b).unwrap();
        assert_eq!(c.clips().row(0).to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(c.source_tag(), "clip+flow");

        let spans = WindowingSpec::CLIPS.spans(10, 0.0);
        let clip = EmbeddingSet::new("p", Array2::zeros((10, 768)), spans.clone(), "clip").unwrap();
        let flow = EmbeddingSet::new("p", Array2::zeros((10, 1024)), spans, "i3d-flow").unwrap();
        assert_eq!(concat_embeddings(&clip, &flow).unwrap().dim(), 1792);

        let short = EmbeddingSet::new("p", Array2::zeros((9, 1024)), WindowingSpec::CLIPS.spans(9, 0.0), "flow").unwrap();
        assert!(matches!(concat_embeddings(&clip, &short), Err(Error::Alignment(_))));
    }

    fn names(a: usize) -> Vec<String> {
        (0..a).map(|i| format!("a{i}")).collect()
    }

    #[test]
    fn ground_truth_majority_tie_and_coverage() {
        // 10 samples in [0,1): 7 of label 3, 3 of label 1
        let mut samples: Vec<(f64, LabelId)> = (0..10)
            .map(|i| (i as f64 * 0.1, if i < 7 { 3 } else { 1 }))
            .collect();
        // 50/50 split between 5 and 2 in [1,2)
        samples.extend((0..10).map(|i| (1.0 + i as f64 * 0.1, if i < 5 { 5 } else { 2 })));
        let track = LabelTrack::new("p", samples, names(6)).unwrap();
        let spans = [
            ClipSpan::new(0.0, 1.0),
            ClipSpan::new(1.0, 2.0),
            ClipSpan::new(5.0, 9.0),
        ];
        assert_eq!(clip_ground_truth(&track, &spans).unwrap(), vec![3, 2, 0]);
    }

    #[test]
    fn ground_truth_empty_track() {
        let track = LabelTrack::new("p", vec![], names(2)).unwrap();
        assert!(matches!(
            clip_ground_truth(&track, &[ClipSpan::new(0.0, 4.0)]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn label_track_validation() {
        assert!(LabelTrack::new("p", vec![(0.0, 0)], names(1)).is_err());
        assert!(LabelTrack::new("p", vec![(0.0, 2)], names(2)).is_err());
        assert!(LabelTrack::new("p", vec![(1.0, 0), (1.0, 1)], names(2)).is_err());
        let text = "timestamp_s,label_id\n0.0,1\n0.5,0\n";
        let track = LabelTrack::from_csv("p", text, parse_label_names("null\nwalk\n")).unwrap();
        assert_eq!(track.samples(), &[(0.0, 1), (0.5, 0)]);
        assert_eq!(track.label_names()[1], "walk");
    }

    #[test]
    fn sensor_csv_and_rate_check() {
        let text = "timestamp_s,c0,c1\n0,1,2\n0.02,3,4\n0.04,5,6\n";
        let series = SensorSeries::from_csv("p", text, None).unwrap();
        assert!((series.rate_hz() - 50.0).abs() < 1e-9);
        assert_eq!(series.channels()[[2, 1]], 6.0);
        assert!(SensorSeries::from_csv("p", text, Some(40.0)).is_err());
        assert_eq!(SensorSeries::from_csv("p", &series.to_csv(), Some(50.0)).unwrap(), series);
    }

    #[test]
    fn windowing_spec_validation() {
        assert!(WindowingSpec::new(1.0, 0.0).is_err());
        assert!(WindowingSpec::new(1.0, 2.0).is_err());
        assert!(WindowingSpec::new(4.0, 1.0).is_ok());
        assert_eq!(WindowingSpec::SENSOR.window_count(500, 50.0), 19);
    }
}
