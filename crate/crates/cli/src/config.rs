//! Flat key=value experiment configuration with a strict schema.
//!
//! The format is deliberately plain so configs diff cleanly and carry no
//! platform quirks: one `key = value` per line, `#` comments, every key
//! optional with a documented default, unknown keys rejected.

use ntklab::error::{Error, Result};
use ntklab::model::Activation;
use ntklab::pca::{CvForm, FeatureMatrixSpec};
use ntklab::similarity::{SimilarityKind, SimilaritySpec};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Blobs,
    Mnist,
    Divergence1d,
}

impl DatasetKind {
    fn name(self) -> &'static str {
        match self {
            DatasetKind::Blobs => "blobs",
            DatasetKind::Mnist => "mnist",
            DatasetKind::Divergence1d => "divergence-1d",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(DatasetKind::Blobs),
            "mnist" => Ok(DatasetKind::Mnist),
            "divergence-1d" => Ok(DatasetKind::Divergence1d),
            other => Err(Error::invalid(format!("unknown dataset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentationKind {
    Identity,
    Crop,
}

/// Every knob an experiment can read, with spec-recorded defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Experiment name; when set it must match the invoked subcommand.
    pub experiment: Option<String>,
    pub dataset: DatasetKind,
    pub mnist_dir: Option<PathBuf>,
    pub mnist_n: usize,
    pub blobs_classes: usize,
    pub blobs_dim: usize,
    pub blobs_per_class: usize,
    pub blobs_noise: f64,
    pub q_pos: usize,
    pub q_neg: usize,
    pub augmentation: AugmentationKind,
    pub crop_lo: f64,
    pub crop_hi: f64,
    pub widths: Vec<usize>,
    pub depth: usize,
    pub activation: Activation,
    pub similarity: SimilarityKind,
    pub delta: f64,
    pub cv_form: CvForm,
    pub eta: f64,
    /// Learning rate for dot-similarity branches of mixed experiments
    /// (dot-product losses diverge at rates that keep cosine runs stable).
    pub eta_dot: f64,
    pub steps: usize,
    pub seeds: usize,
    pub record_every: usize,
    pub out_dim: usize,
    pub probe_count: usize,
    pub ridge: f64,
    pub iterative_steps: usize,
    pub divergence_n: usize,
    pub sim_dt: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            dataset: DatasetKind::Blobs,
            mnist_dir: None,
            mnist_n: 1000,
            blobs_classes: 4,
            blobs_dim: 16,
            blobs_per_class: 16,
            blobs_noise: 0.2,
            q_pos: 1,
            q_neg: 1,
            augmentation: AugmentationKind::Identity,
            crop_lo: 0.7,
            crop_hi: 1.0,
            widths: vec![64, 256, 1024],
            depth: 1,
            activation: Activation::Relu,
            similarity: SimilarityKind::Cosine,
            delta: 0.1,
            cv_form: CvForm::CosineBound,
            eta: 0.5,
            eta_dot: 1e-3,
            steps: 100,
            seeds: 5,
            record_every: 10,
            out_dim: 8,
            probe_count: 8,
            ridge: 1e-3,
            iterative_steps: 5,
            divergence_n: 16,
            sim_dt: 1e-5,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            config.set(key, value).map_err(|e| {
                Error::invalid(format!("line {}: {e}", lineno + 1))
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let usize_of = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::invalid(format!("'{v}' is not a count")))
        };
        let f64_of = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::invalid(format!("'{v}' is not a number")))
        };
        match key {
            "experiment" => self.experiment = Some(value.to_string()),
            "dataset" => self.dataset = DatasetKind::parse(value)?,
            "mnist_dir" => self.mnist_dir = Some(PathBuf::from(value)),
            "mnist_n" => self.mnist_n = usize_of(value)?,
            "blobs_classes" => self.blobs_classes = usize_of(value)?,
            "blobs_dim" => self.blobs_dim = usize_of(value)?,
            "blobs_per_class" => self.blobs_per_class = usize_of(value)?,
            "blobs_noise" => self.blobs_noise = f64_of(value)?,
            "q_pos" => self.q_pos = usize_of(value)?,
            "q_neg" => self.q_neg = usize_of(value)?,
            "augmentation" => {
                self.augmentation = match value {
                    "identity" => AugmentationKind::Identity,
                    "crop" => AugmentationKind::Crop,
                    other => {
                        return Err(Error::invalid(format!("unknown augmentation '{other}'")))
                    }
                }
            }
            "crop_lo" => self.crop_lo = f64_of(value)?,
            "crop_hi" => self.crop_hi = f64_of(value)?,
            "widths" => {
                self.widths = value
                    .split(',')
                    .map(|v| usize_of(v.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "depth" => self.depth = usize_of(value)?,
            "activation" => self.activation = Activation::parse(value)?,
            "similarity" => {
                self.similarity = match value {
                    "dot" => SimilarityKind::Dot,
                    "cosine" => SimilarityKind::Cosine,
                    other => return Err(Error::invalid(format!("unknown similarity '{other}'"))),
                }
            }
            "delta" => self.delta = f64_of(value)?,
            "cv_form" => {
                self.cv_form = match value {
                    "dot" => CvForm::Dot,
                    "cosine-bound" => CvForm::CosineBound,
                    other => {
                        return Err(Error::invalid(format!("unknown feature-matrix form '{other}'")))
                    }
                }
            }
            "eta" => self.eta = f64_of(value)?,
            "eta_dot" => self.eta_dot = f64_of(value)?,
            "steps" => self.steps = usize_of(value)?,
            "seeds" => self.seeds = usize_of(value)?,
            "record_every" => self.record_every = usize_of(value)?,
            "out_dim" => self.out_dim = usize_of(value)?,
            "probe_count" => self.probe_count = usize_of(value)?,
            "ridge" => self.ridge = f64_of(value)?,
            "iterative_steps" => self.iterative_steps = usize_of(value)?,
            "divergence_n" => self.divergence_n = usize_of(value)?,
            "sim_dt" => self.sim_dt = f64_of(value)?,
            other => return Err(Error::invalid(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::invalid("widths must be a nonempty list"));
        }
        if self.seeds == 0 {
            return Err(Error::invalid("seeds must be at least 1"));
        }
        if self.record_every == 0 || self.steps == 0 {
            return Err(Error::invalid("steps and record_every must be positive"));
        }
        if self.dataset == DatasetKind::Mnist && self.mnist_dir.is_none() {
            return Err(Error::invalid("mnist dataset needs mnist_dir"));
        }
        Ok(())
    }

    /// Canonical serialization; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        if let Some(e) = &self.experiment {
            out.push_str(&format!("experiment = {e}\n"));
        }
        out.push_str(&format!("dataset = {}\n", self.dataset.name()));
        if let Some(dir) = &self.mnist_dir {
            out.push_str(&format!("mnist_dir = {}\n", dir.display()));
        }
        out.push_str(&format!("mnist_n = {}\n", self.mnist_n));
        out.push_str(&format!("blobs_classes = {}\n", self.blobs_classes));
        out.push_str(&format!("blobs_dim = {}\n", self.blobs_dim));
        out.push_str(&format!("blobs_per_class = {}\n", self.blobs_per_class));
        out.push_str(&format!("blobs_noise = {}\n", self.blobs_noise));
        out.push_str(&format!("q_pos = {}\n", self.q_pos));
        out.push_str(&format!("q_neg = {}\n", self.q_neg));
        out.push_str(&format!(
            "augmentation = {}\n",
            match self.augmentation {
                AugmentationKind::Identity => "identity",
                AugmentationKind::Crop => "crop",
            }
        ));
        out.push_str(&format!("crop_lo = {}\n", self.crop_lo));
        out.push_str(&format!("crop_hi = {}\n", self.crop_hi));
        out.push_str(&format!(
            "widths = {}\n",
            self.widths
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        out.push_str(&format!("depth = {}\n", self.depth));
        out.push_str(&format!("activation = {}\n", self.activation.name()));
        out.push_str(&format!(
            "similarity = {}\n",
            match self.similarity {
                SimilarityKind::Dot => "dot",
                SimilarityKind::Cosine => "cosine",
            }
        ));
        out.push_str(&format!("delta = {}\n", self.delta));
        out.push_str(&format!(
            "cv_form = {}\n",
            match self.cv_form {
                CvForm::Dot => "dot",
                CvForm::CosineBound => "cosine-bound",
            }
        ));
        out.push_str(&format!("eta = {}\n", self.eta));
        out.push_str(&format!("eta_dot = {}\n", self.eta_dot));
        out.push_str(&format!("steps = {}\n", self.steps));
        out.push_str(&format!("seeds = {}\n", self.seeds));
        out.push_str(&format!("record_every = {}\n", self.record_every));
        out.push_str(&format!("out_dim = {}\n", self.out_dim));
        out.push_str(&format!("probe_count = {}\n", self.probe_count));
        out.push_str(&format!("ridge = {}\n", self.ridge));
        out.push_str(&format!("iterative_steps = {}\n", self.iterative_steps));
        out.push_str(&format!("divergence_n = {}\n", self.divergence_n));
        out.push_str(&format!("sim_dt = {}\n", self.sim_dt));
        out
    }

    pub fn similarity_spec(&self) -> Result<SimilaritySpec> {
        match self.similarity {
            SimilarityKind::Dot => Ok(SimilaritySpec::dot()),
            SimilarityKind::Cosine => SimilaritySpec::cosine(self.delta),
        }
    }

    pub fn feature_matrix_spec(&self) -> Result<FeatureMatrixSpec> {
        FeatureMatrixSpec::new(self.cv_form, self.delta)
    }
}
