use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{LossParams, Protocol};
use crate::annotate::Threshold;
use crate::error::{Error, Result};
use crate::gmm::GmmConfig;
use crate::ingest::WindowingSpec;
use crate::transfer::Scenario;
use crate::weaktrain::TrainConfig;

/// Where the inputs live and how to read them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub root: PathBuf,
    pub participants: Vec<String>,
    /// Embedding source tags, concatenated in this order.
    pub sources: Vec<String>,
    /// L2-normalise each clip embedding before clustering.
    pub normalize: bool,
    /// Sensor rate; inferred from timestamps when absent.
    pub sensor_rate_hz: Option<f64>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            root: PathBuf::from("data"),
            participants: Vec::new(),
            sources: vec![String::from("synth")],
            normalize: false,
            sensor_rate_hz: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSection {
    pub length_s: f64,
    pub stride_s: f64,
}

impl WindowSection {
    fn from_spec(spec: WindowingSpec) -> Self {
        WindowSection {
            length_s: spec.length_s,
            stride_s: spec.stride_s,
        }
    }

    pub fn spec(&self) -> Result<WindowingSpec> {
        WindowingSpec::new(self.length_s, self.stride_s)
    }
}

impl Default for WindowSection {
    fn default() -> Self {
        Self::from_spec(WindowingSpec::CLIPS)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringSection {
    pub components: usize,
    pub reg: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        let g = GmmConfig::new(20, 0);
        ClusteringSection {
            components: g.components,
            reg: g.reg,
            max_iter: g.max_iter,
            tol: g.tol,
        }
    }
}

impl ClusteringSection {
    pub fn gmm(&self, seed: u64) -> GmmConfig {
        GmmConfig {
            components: self.components,
            seed,
            reg: self.reg,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationSection {
    /// Threshold written into the weak-label files.
    pub threshold: Threshold,
    /// Media hint template; `{participant}`, `{cluster}` and `{clip}` are substituted.
    pub media_template: Option<String>,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        AnnotationSection {
            threshold: Threshold::NONE,
            media_template: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub jobs: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seeds: vec![1, 2, 3],
            output: PathBuf::from("runs/default"),
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    pub scenarios: Vec<String>,
    pub protocol: Protocol,
    pub window: WindowSection,
    #[serde(flatten)]
    pub optimizer: TrainConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            scenarios: ["fully-supervised", "few-shot-ce", "random-ce", "weak-ce", "weak-phgce"]
                .map(String::from)
                .to_vec(),
            protocol: Protocol::LeaveOneOut,
            window: WindowSection::from_spec(WindowingSpec::SENSOR),
            optimizer: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportSection {
    /// Extra cluster counts to sweep; the configured count is always included.
    pub cluster_sweep: Vec<usize>,
    pub thresholds: Vec<Threshold>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            cluster_sweep: Vec::new(),
            thresholds: vec![Threshold::NONE, Threshold::T6, Threshold::T4],
        }
    }
}

/// Everything a run needs, read from one TOML file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub clips: WindowSection,
    pub clustering: ClusteringSection,
    pub annotation: AnnotationSection,
    pub run: RunSection,
    pub training: TrainingSection,
    pub loss: LossParams,
    pub report: ReportSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|err| Error::Config(err.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            if cfg.dataset.root.is_relative() {
                cfg.dataset.root = base.join(&cfg.dataset.root);
            }
            if cfg.run.output.is_relative() {
                cfg.run.output = base.join(&cfg.run.output);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Stable digest of the effective configuration.
    pub fn hash(&self) -> String {
        super::manifest::sha256_hex(self.to_toml().as_bytes())
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        self.training.scenarios.iter().map(|s| s.parse()).collect()
    }

    /// Checks values and that every referenced input file exists.
    pub fn validate(&self) -> Result<()> {
        if self.dataset.participants.is_empty() {
            return Err(Error::Config("dataset.participants is empty".into()));
        }
        if self.dataset.sources.is_empty() {
            return Err(Error::Config("dataset.sources is empty".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds is empty".into()));
        }
        if self.clustering.components == 0 {
            return Err(Error::Config("clustering.components must be positive".into()));
        }
        self.clips.spec()?;
        self.training.window.spec()?;
        self.training.optimizer.validate()?;
        self.scenarios()?;
        for p in &self.dataset.participants {
            for source in &self.dataset.sources {
                self.embedding_path(p, source)?;
            }
        }
        Ok(())
    }

    /// Existing `.wemb` or `.csv` embedding file of a participant.
    pub fn embedding_path(&self, participant: &str, source: &str) -> Result<PathBuf> {
        let dir = self.dataset.root.join("embeddings").join(participant);
        ["wemb", "csv"]
            .iter()
            .map(|ext| dir.join(format!("{source}.{ext}")))
            .find(|p| p.exists())
            .ok_or_else(|| {
                Error::Io {
                    path: dir.join(format!("{source}.wemb")),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "embedding file not found"),
                }
                .for_participant(participant)
            })
    }

    pub fn label_path(&self, participant: &str) -> PathBuf {
        self.dataset.root.join("labels").join(format!("{participant}.csv"))
    }

    pub fn label_names_path(&self) -> PathBuf {
        self.dataset.root.join("labels").join("names.txt")
    }

    pub fn sensor_path(&self, participant: &str) -> PathBuf {
        self.dataset.root.join("sensors").join(format!("{participant}.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert!(text.contains("[clustering]"));
        assert!(text.contains("threshold = \"none\""));
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml("[clustering]\ncomponents = 7\n[annotation]\nthreshold = 4.0\n").unwrap();
        assert_eq!(cfg.clustering.components, 7);
        assert_eq!(cfg.annotation.threshold, Threshold::T4);
        assert_eq!(cfg.run.seeds.len(), 3);
        assert_eq!(cfg.clips.spec().unwrap(), WindowingSpec::CLIPS);
    }

    #[test]
    fn validation_rejects_empty_participants_and_bad_scenarios() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.training.scenarios = vec!["semi".into()];
        assert!(cfg.scenarios().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.clustering.components += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
