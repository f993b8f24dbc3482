//! Run configuration: one TOML document holding a stage list and a section
//! of parameters per stage. Every section is optional and unknown keys are
//! rejected.
use std::path::{Path, PathBuf};

use kolmo_core::labeling::LabelParams;
use kolmo_core::latent::MapArch;
use kolmo_core::nnet::TrainConfig;
use kolmo_core::pipeline::{ReduceConfig, SimulateConfig};
use kolmo_core::reduction::AeArch;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Base seed of every random choice in the run.
    pub seed: u64,
    /// Directory holding all artifacts; relative paths resolve against the
    /// config file's directory.
    pub workdir: PathBuf,
    pub stages: Vec<String>,
    pub simulate: SimulateParams,
    pub reduce: ReduceConfig,
    pub pca: PcaParams,
    pub train_ae: TrainAeParams,
    pub sweep_ae: SweepParams,
    pub train_map: MapParams,
    pub train_phase: MapParams,
    pub rollout: RolloutParams,
    pub label: LabelParams,
    pub stats: StatsParams,
    pub predict_burst: BurstParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workdir: PathBuf::from("run"),
            stages: Vec::new(),
            simulate: SimulateParams::default(),
            reduce: ReduceConfig::default(),
            pca: PcaParams::default(),
            train_ae: TrainAeParams::default(),
            sweep_ae: SweepParams::default(),
            train_map: MapParams::default(),
            train_phase: MapParams::default(),
            rollout: RolloutParams::default(),
            label: LabelParams::default(),
            stats: StatsParams::default(),
            predict_burst: BurstParams::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Read a config file; a relative `workdir` is taken relative to it.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::parse(&text)?;
        if cfg.workdir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.workdir = dir.join(&cfg.workdir);
            }
        }
        Ok(cfg)
    }
}

/// Simulation parameters; the initial condition comes from the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateParams {
    pub re: f64,
    pub n: u32,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub t_total: f64,
    pub save_every: f64,
    pub discard: f64,
}

impl Default for SimulateParams {
    fn default() -> Self {
        let c = SimulateConfig::default();
        SimulateParams {
            re: c.re,
            n: c.n,
            nx: c.nx,
            ny: c.ny,
            dt: c.dt,
            t_total: c.t_total,
            save_every: c.save_every,
            discard: c.discard,
        }
    }
}

impl SimulateParams {
    pub fn to_core(&self, seed: u64) -> SimulateConfig {
        SimulateConfig {
            re: self.re,
            n: self.n,
            nx: self.nx,
            ny: self.ny,
            dt: self.dt,
            t_total: self.t_total,
            save_every: self.save_every,
            discard: self.discard,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaParams {
    pub center: bool,
    /// Chronological fraction of snapshots held out for the MSE curve.
    pub test_fraction: f64,
    /// Largest rank reported in the MSE curve.
    pub max_rank: usize,
}

impl Default for PcaParams {
    fn default() -> Self {
        PcaParams {
            center: true,
            test_fraction: 0.2,
            max_rank: 20,
        }
    }
}

/// Optimizer settings shared by the autoencoder and the maps. The learning
/// rate is multiplied by `lr_drop_factor` after `lr_drop_fraction` of the
/// epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Optim {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_drop_fraction: f64,
    pub lr_drop_factor: f64,
    pub n_models: usize,
    pub test_fraction: f64,
}

impl Default for Optim {
    fn default() -> Self {
        Optim {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            lr_drop_fraction: 0.7,
            lr_drop_factor: 0.1,
            n_models: 1,
            test_fraction: 0.2,
        }
    }
}

impl Optim {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let drop = (self.epochs as f64 * self.lr_drop_fraction).round() as usize;
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_drop_epoch: (drop < self.epochs).then_some(drop),
            lr_drop_factor: self.lr_drop_factor,
            seed,
        }
    }

    pub fn train_fraction(&self) -> f64 {
        1.0 - self.test_fraction
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainAeParams {
    pub d_h: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    /// Start from the exact PCA reconstruction rather than a random net.
    pub pca_start: bool,
    pub alpha_l: f64,
    pub center: bool,
    pub optim: Optim,
}

impl Default for TrainAeParams {
    fn default() -> Self {
        let arch = AeArch::desk_scale();
        TrainAeParams {
            d_h: 2,
            enc_hidden: arch.enc_hidden,
            dec_hidden: arch.dec_hidden,
            pca_start: arch.pca_start,
            alpha_l: 1.0,
            center: true,
            optim: Optim::default(),
        }
    }
}

impl TrainAeParams {
    pub fn arch(&self) -> AeArch {
        AeArch {
            enc_hidden: self.enc_hidden.clone(),
            dec_hidden: self.dec_hidden.clone(),
            pca_start: self.pca_start,
        }
    }
}

/// Autoencoder and PCA test MSE over a range of latent dimensions. Network
/// settings come from `[train_ae]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepParams {
    pub d_h: Vec<usize>,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams { d_h: vec![1, 2, 3] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapParams {
    /// Hidden widths; empty picks the desk-scale default of the map kind.
    pub hidden: Vec<usize>,
    pub optim: Optim,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            hidden: Vec::new(),
            optim: Optim {
                epochs: 300,
                ..Optim::default()
            },
        }
    }
}

impl MapParams {
    pub fn hidden_for(&self, phase: bool) -> Vec<usize> {
        if !self.hidden.is_empty() {
            return self.hidden.clone();
        }
        let arch = MapArch::desk_scale();
        if phase {
            arch.g_hidden
        } else {
            arch.f_hidden
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutParams {
    pub steps: usize,
    /// Row of the latent series the rollout starts from.
    pub start: usize,
    /// Advance the phase with the phase map when one is available.
    pub phase: bool,
}

impl Default for RolloutParams {
    fn default() -> Self {
        RolloutParams {
            steps: 1000,
            start: 0,
            phase: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsParams {
    /// Bins per axis of the joint I-D PDF.
    pub bins: usize,
    /// Largest MSD lag, in samples.
    pub max_lag: usize,
    pub ensemble_ics: usize,
    /// Ensemble prediction horizon, in samples.
    pub ensemble_horizon: usize,
    /// Initial conditions are drawn from the snapshots after this fraction.
    pub ensemble_from: f64,
}

impl Default for StatsParams {
    fn default() -> Self {
        StatsParams {
            bins: 100,
            max_lag: 200,
            ensemble_ics: 200,
            ensemble_horizon: 20,
            ensemble_from: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurstParams {
    pub indicators: Vec<String>,
    /// Prediction horizons in time units.
    pub horizons: Vec<f64>,
    pub c: f64,
    /// RBF width; 0 picks `1 / (dim * var)` of the features.
    pub gamma: f64,
    pub max_train: usize,
    /// Number of PCA coefficients for the `pca` indicator; 0 uses the
    /// autoencoder's `d_h`.
    pub pca_modes: usize,
}

impl Default for BurstParams {
    fn default() -> Self {
        BurstParams {
            indicators: ["latent", "pca", "mode10", "mode02", "dphi"].map(String::from).to_vec(),
            horizons: vec![5.0, 10.0, 20.0, 40.0, 60.0, 80.0],
            c: 1.0,
            gamma: 0.0,
            max_train: 5000,
            pca_modes: 0,
        }
    }
}
