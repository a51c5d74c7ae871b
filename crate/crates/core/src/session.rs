//! Interactive annotation session: a queue of centroid-clip requests and an
//! append-only label log that a restarted session replays.
//!
//! Log records are tab-separated UTF-8 lines:
//!
//! ```text
//! request_id <TAB> cluster_id <TAB> clip_index <TAB> label_id <TAB> timestamp_s
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::annotate::{CentroidSet, ClusterLabels};
use crate::error::{Error, Result};
use crate::ingest::{ClipSpan, LabelId};

/// A centroid clip waiting for a label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorRequest {
    pub request_id: String,
    pub participant_id: String,
    pub clip_index: usize,
    pub clip_span: ClipSpan,
    pub cluster_id: usize,
    pub member_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub media_hint: Option<String>,
}

/// One line of the session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub request_id: String,
    pub cluster_id: usize,
    pub clip_index: usize,
    pub label_id: LabelId,
    pub timestamp_s: f64,
}

impl LabelRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:.3}\n",
            self.request_id, self.cluster_id, self.clip_index, self.label_id, self.timestamp_s
        )
    }

    pub fn parse(line: &str) -> Option<LabelRecord> {
        let mut fields = line.split('\t');
        let record = LabelRecord {
            request_id: fields.next()?.to_string(),
            cluster_id: fields.next()?.parse().ok()?,
            clip_index: fields.next()?.parse().ok()?,
            label_id: fields.next()?.parse().ok()?,
            timestamp_s: fields.next()?.trim_end().parse().ok()?,
        };
        fields.next().is_none().then_some(record)
    }
}

/// Source of record timestamps.
pub trait Clock: Send {
    fn now(&self) -> f64;
}

/// Wall-clock seconds since the Unix epoch.
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    }
}

/// Constant timestamp, for reproducible oracle logs.
pub struct FixedClock(pub f64);

impl Clock for FixedClock {
    fn now(&self) -> f64 {
        self.0
    }
}

/// Counts and vocabulary exposed to annotation frontends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub participant_id: String,
    pub total_clusters: usize,
    pub labeled: usize,
    pub pending: usize,
    pub vocabulary: Vec<VocabularyEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabularyEntry {
    pub id: LabelId,
    pub name: String,
}

/// Why a label submission was refused.
#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("session is closed")]
    Closed,
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error("request {0} already labeled")]
    Duplicate(String),
    #[error("label {label} outside vocabulary of {size}")]
    UnknownLabel { label: LabelId, size: usize },
    #[error("could not append to session log: {0}")]
    Log(String),
}

/// Single-writer annotation state machine.
pub struct AnnotationSession {
    session_id: String,
    participant_id: String,
    vocabulary: Vec<String>,
    log: Option<(PathBuf, File)>,
    requests: BTreeMap<usize, AnnotatorRequest>,
    labels: BTreeMap<usize, LabelRecord>,
    closed: bool,
    clock: Box<dyn Clock>,
    media_template: Option<String>,
}

impl AnnotationSession {
    /// Session without persistence.
    pub fn in_memory(session_id: &str, participant_id: &str, vocabulary: Vec<String>) -> Self {
        AnnotationSession {
            session_id: session_id.to_string(),
            participant_id: participant_id.to_string(),
            vocabulary,
            log: None,
            requests: BTreeMap::new(),
            labels: BTreeMap::new(),
            closed: false,
            clock: Box::new(SystemClock),
            media_template: None,
        }
    }

    /// Opens (or creates) a session backed by `log_path`, replaying any records
    /// already in it. A torn final line from an interrupted write is ignored.
    pub fn open(session_id: &str, participant_id: &str, vocabulary: Vec<String>, log_path: &Path) -> Result<Self> {
        let mut session = Self::in_memory(session_id, participant_id, vocabulary);
        if log_path.exists() {
            let text = fs::read_to_string(log_path).map_err(|err| Error::io(log_path, err))?;
            let complete = text.ends_with('\n');
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match LabelRecord::parse(line) {
                    Some(record) => {
                        if record.label_id >= session.vocabulary.len() {
                            return Err(Error::State(format!(
                                "log line {} has label {} outside the vocabulary",
                                i + 1,
                                record.label_id
                            )));
                        }
                        session.labels.entry(record.cluster_id).or_insert(record);
                    }
                    None if i + 1 == lines.len() && !complete => {}
                    None => {
                        return Err(Error::Format(format!(
                            "{}: unparsable log line {}",
                            log_path.display(),
                            i + 1
                        )))
                    }
                }
            }
            if !complete && !text.is_empty() {
                // drop the torn tail so later appends start on a fresh line
                let keep: String = text.lines().take(lines.len() - 1).map(|l| format!("{l}\n")).collect();
                fs::write(log_path, keep).map_err(|err| Error::io(log_path, err))?;
            }
        } else if let Some(parent) = log_path.parent() {
            fs::create_dir_all(parent).map_err(|err| Error::io(parent, err))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(|err| Error::io(log_path, err))?;
        session.log = Some((log_path.to_path_buf(), file));
        Ok(session)
    }

    pub fn with_clock(mut self, clock: Box<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Media hints are built from a template where `{participant}`,
    /// `{cluster}` and `{clip}` are substituted.
    pub fn with_media_template(mut self, template: impl Into<String>) -> Self {
        self.media_template = Some(template.into());
        self
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|(p, _)| p.as_path())
    }

    fn request_id(&self, cluster: usize, clip: usize) -> String {
        format!("{}-c{cluster}-t{clip}", self.participant_id)
    }

    /// Registers one request per non-empty cluster and returns those still
    /// unlabeled, ordered by cluster id. Calling it again with the same
    /// centroids yields the same request ids.
    pub fn enqueue_requests(&mut self, centroids: &CentroidSet, spans: &[ClipSpan]) -> Result<Vec<AnnotatorRequest>> {
        if self.closed {
            return Err(Error::State(format!("session {} is closed", self.session_id)));
        }
        for centroid in centroids.iter() {
            let span = *spans.get(centroid.clip_index).ok_or_else(|| {
                Error::Shape(format!("centroid clip {} has no span", centroid.clip_index))
            })?;
            let request_id = self.request_id(centroid.cluster, centroid.clip_index);
            if let Some(existing) = self.requests.get(&centroid.cluster) {
                if existing.request_id != request_id {
                    return Err(Error::State(format!(
                        "cluster {} already has outstanding request {}",
                        centroid.cluster, existing.request_id
                    )));
                }
                continue;
            }
            if let Some(record) = self.labels.get(&centroid.cluster) {
                if record.request_id != request_id {
                    return Err(Error::State(format!(
                        "log labels cluster {} via {}, but its centroid request is {request_id}",
                        centroid.cluster, record.request_id
                    )));
                }
            }
            let media_hint = self.media_template.as_ref().map(|tpl| {
                tpl.replace("{participant}", &self.participant_id)
                    .replace("{cluster}", &centroid.cluster.to_string())
                    .replace("{clip}", &centroid.clip_index.to_string())
            });
            self.requests.insert(
                centroid.cluster,
                AnnotatorRequest {
                    request_id,
                    participant_id: self.participant_id.clone(),
                    clip_index: centroid.clip_index,
                    clip_span: span,
                    cluster_id: centroid.cluster,
                    member_count: centroid.member_count,
                    media_hint,
                },
            );
        }
        Ok(self.pending().into_iter().cloned().collect())
    }

    /// Unlabeled requests in cluster order.
    pub fn pending(&self) -> Vec<&AnnotatorRequest> {
        self.requests
            .values()
            .filter(|r| !self.labels.contains_key(&r.cluster_id))
            .collect()
    }

    /// The unlabeled request with the smallest cluster id.
    pub fn next_request(&self) -> Option<&AnnotatorRequest> {
        self.requests
            .values()
            .find(|r| !self.labels.contains_key(&r.cluster_id))
    }

    pub fn request(&self, request_id: &str) -> Option<&AnnotatorRequest> {
        self.requests.values().find(|r| r.request_id == request_id)
    }

    pub fn request_for_cluster(&self, cluster: usize) -> Option<&AnnotatorRequest> {
        self.requests.get(&cluster)
    }

    pub fn labeled_count(&self) -> usize {
        self.requests
            .keys()
            .filter(|c| self.labels.contains_key(c))
            .count()
    }

    pub fn total_clusters(&self) -> usize {
        self.requests.len()
    }

    pub fn is_complete(&self) -> bool {
        self.labeled_count() == self.total_clusters()
    }

    /// Records a label for a pending request and appends it to the log.
    pub fn submit(&mut self, request_id: &str, label_id: LabelId) -> std::result::Result<LabelRecord, SubmitError> {
        if self.closed {
            return Err(SubmitError::Closed);
        }
        let request = self
            .request(request_id)
            .ok_or_else(|| SubmitError::UnknownRequest(request_id.to_string()))?;
        if self.labels.contains_key(&request.cluster_id) {
            return Err(SubmitError::Duplicate(request_id.to_string()));
        }
        if label_id >= self.vocabulary.len() {
            return Err(SubmitError::UnknownLabel {
                label: label_id,
                size: self.vocabulary.len(),
            });
        }
        let record = LabelRecord {
            request_id: request.request_id.clone(),
            cluster_id: request.cluster_id,
            clip_index: request.clip_index,
            label_id,
            timestamp_s: self.clock.now(),
        };
        if let Some((_, file)) = &mut self.log {
            file.write_all(record.to_line().as_bytes())
                .and_then(|_| file.flush())
                .map_err(|err| SubmitError::Log(err.to_string()))?;
        }
        self.labels.insert(record.cluster_id, record.clone());
        Ok(record)
    }

    /// Records in cluster order.
    pub fn records(&self) -> impl Iterator<Item = &LabelRecord> + '_ {
        self.labels.values()
    }

    pub fn state(&self) -> SessionState {
        let labeled = self.labeled_count();
        SessionState {
            session_id: self.session_id.clone(),
            participant_id: self.participant_id.clone(),
            total_clusters: self.total_clusters(),
            labeled,
            pending: self.total_clusters() - labeled,
            vocabulary: self
                .vocabulary
                .iter()
                .enumerate()
                .map(|(id, name)| VocabularyEntry { id, name: name.clone() })
                .collect(),
        }
    }

    /// Labels collected so far for registered clusters.
    pub fn cluster_labels(&self) -> ClusterLabels {
        self.labels
            .iter()
            .filter(|(c, _)| self.requests.contains_key(c))
            .map(|(&c, r)| (c, r.label_id))
            .collect()
    }

    /// Closes the session; further submissions are refused.
    pub fn close(&mut self) -> ClusterLabels {
        self.closed = true;
        self.log = None;
        self.cluster_labels()
    }
}
