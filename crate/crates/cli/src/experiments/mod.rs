//! Experiment drivers: each subcommand runs a (width x seed) grid at desk
//! scale, writes tidy CSVs plus a gnuplot script into its own output
//! directory, and records everything (config echo, notes, artifact hashes,
//! per-cell failures) in a manifest.

pub mod bounds_report;
pub mod collapse_demo;
pub mod cv_drift;
pub mod divergence_1d;
pub mod downstream;
pub mod frozen_vs_trained;
pub mod ntk_drift;
pub mod ntk_vs_gd;

use crate::config::{AugmentationKind, DatasetKind, ExperimentConfig};
use crate::manifest::Manifest;
use ntklab::data::{build_contrastive_dataset, load_mnist, synth_blobs, Augmentation, LabeledPoints};
use ntklab::error::{Error, Result};
use ntklab::model::NetworkArch;
use ntklab::numerics::derive_seed;
use ntklab::similarity::ContrastiveDataset;
use rayon::prelude::*;
use std::path::PathBuf;

pub struct Context {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub seed_base: u64,
}

impl Context {
    pub fn arch(&self, width: usize) -> Result<NetworkArch> {
        NetworkArch::new(
            self.base_points_dim()?,
            width,
            self.config.out_dim,
            self.config.depth,
            self.config.activation,
        )
    }

    fn base_points_dim(&self) -> Result<usize> {
        Ok(match self.config.dataset {
            DatasetKind::Blobs => self.config.blobs_dim,
            DatasetKind::Mnist => 784,
            DatasetKind::Divergence1d => 1,
        })
    }

    pub fn labeled_points(&self) -> Result<LabeledPoints> {
        let seed = derive_seed(self.seed_base, 0xDA7A);
        match self.config.dataset {
            DatasetKind::Blobs => synth_blobs(
                self.config.blobs_classes,
                self.config.blobs_dim,
                self.config.blobs_per_class,
                self.config.blobs_noise,
                seed,
            ),
            DatasetKind::Mnist => load_mnist(
                self.config.mnist_dir.as_ref().unwrap(),
                self.config.mnist_n,
                seed,
            ),
            DatasetKind::Divergence1d => Err(Error::invalid(
                "the 1-D divergence dataset has no labeled-point form",
            )),
        }
    }

    pub fn contrastive_dataset(&self) -> Result<ContrastiveDataset> {
        if self.config.dataset == DatasetKind::Divergence1d {
            let (ds, _) = ntklab::data::divergence_dataset_1d(
                self.config.divergence_n,
                derive_seed(self.seed_base, 0xDA7A),
            )?;
            return Ok(ds);
        }
        let base = self.labeled_points()?;
        let aug = match self.config.augmentation {
            AugmentationKind::Identity => Augmentation::Identity,
            AugmentationKind::Crop => Augmentation::ResizedCrop {
                lo: self.config.crop_lo,
                hi: self.config.crop_hi,
            },
        };
        build_contrastive_dataset(
            &base,
            self.config.q_pos,
            self.config.q_neg,
            aug,
            derive_seed(self.seed_base, 0xAA61),
        )
    }

    /// Per-cell network seed.
    pub fn net_seed(&self, seed_index: u64) -> u64 {
        self.seed_base + seed_index
    }

    /// Probe points: the first `probe_count` anchors.
    pub fn probes(&self, dataset: &ContrastiveDataset) -> Vec<Vec<f64>> {
        let count = self.config.probe_count.min(dataset.num_anchors());
        (0..count).map(|i| dataset.anchor(i).to_vec()).collect()
    }

    pub fn manifest(&self, experiment: &str) -> Manifest {
        let mut echo = self.config.clone();
        echo.experiment = Some(experiment.to_string());
        let mut m = Manifest::new(experiment, echo.serialize());
        m.note("seed_base", self.seed_base);
        m
    }
}

/// Run one closure per (width, seed) cell on the worker pool, returning
/// results in deterministic cell order regardless of scheduling.
pub fn run_grid<T: Send>(
    widths: &[usize],
    seeds: usize,
    job: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Vec<(usize, u64, Result<T>)> {
    let cells: Vec<(usize, u64)> = widths
        .iter()
        .flat_map(|&w| (0..seeds as u64).map(move |s| (w, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(w, s)| (w, s, job(w, s)))
        .collect()
}

/// Small gnuplot script plotting `y_col` against `x_col` from a CSV.
pub fn plot_script(csv_name: &str, title: &str, x_col: usize, y_col: usize, logscale: bool) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator \",\"\n");
    s.push_str(&format!("set title \"{title}\"\n"));
    s.push_str("set key outside\n");
    if logscale {
        s.push_str("set logscale xy\n");
    }
    s.push_str(&format!(
        "plot \"{csv_name}\" every ::1 using {x_col}:{y_col} with points title \"{title}\"\n"
    ));
    s
}

pub fn dispatch(name: &str, ctx: &Context) -> Result<bool> {
    if let Some(declared) = &ctx.config.experiment {
        if declared != name {
            return Err(Error::invalid(format!(
                "config declares experiment '{declared}' but '{name}' was invoked"
            )));
        }
    }
    std::fs::create_dir_all(&ctx.out_dir)?;
    match name {
        "ntk-vs-gd" => ntk_vs_gd::run(ctx),
        "ntk-drift" => ntk_drift::run(ctx),
        "divergence-1d" => divergence_1d::run(ctx),
        "cv-drift" => cv_drift::run(ctx),
        "frozen-vs-trained-cv" => frozen_vs_trained::run(ctx),
        "collapse-demo" => collapse_demo::run(ctx),
        "downstream" => downstream::run(ctx),
        "bounds-report" => bounds_report::run(ctx),
        other => Err(Error::invalid(format!("unknown experiment '{other}'"))),
    }
}
