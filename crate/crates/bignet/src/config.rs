//! Run configuration: defaults matching the training protocol, a plain
//! `key = value` file format, and the `BIGNET_SEED` environment override.

use std::path::Path;

use crate::error::{BignetError, Result};
use crate::graph::GraphMode;

pub const SEED_ENV_VAR: &str = "BIGNET_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: GraphMode,
    pub spatial_radius_m: f64,
    pub seed: u64,

    // Encoder / decoder shape.
    pub hidden_dim: usize,
    pub heads_hidden: usize,
    pub heads_out: usize,

    // Masking plan.
    pub mask_rate_homogeneous: f64,
    pub mask_rate_semantic: f64,
    pub mask_rate_topological: f64,
    pub mask_rate_spatial: f64,
    pub remask_views: usize,
    pub remask_rate: f64,

    // Loss shape.
    pub gamma: f64,
    pub ema_tau: f64,
    /// Eq. 4 as written sums the latent loss over every node; switch on to
    /// restrict it to the masked set instead.
    pub latent_loss_masked_only: bool,

    // Pretraining protocol.
    pub lr_grid: Vec<f64>,
    pub batch_grid: Vec<usize>,
    pub max_epochs: usize,
    pub patience: usize,

    // Transfer protocol.
    pub transfer_lr: f64,
    pub transfer_max_epochs: usize,
    pub transfer_patience: usize,
    pub class_weight_alpha: f64,
    pub transfer_fraction: f64,
    pub classifier_hidden_dim: usize,

    // Sweep grids.
    pub sweep_radii: Vec<f64>,
    pub sweep_fractions: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: GraphMode::Heterogeneous,
            spatial_radius_m: 0.3,
            seed: 0,
            hidden_dim: 512,
            heads_hidden: 4,
            heads_out: 1,
            mask_rate_homogeneous: 0.5,
            mask_rate_semantic: 0.5,
            mask_rate_topological: 0.6,
            mask_rate_spatial: 0.6,
            remask_views: 3,
            remask_rate: 0.5,
            gamma: 1.0,
            ema_tau: 0.996,
            latent_loss_masked_only: false,
            lr_grid: vec![0.001, 0.003, 0.005, 0.007],
            batch_grid: vec![4, 8, 16],
            max_epochs: 5000,
            patience: 300,
            transfer_lr: 0.003,
            transfer_max_epochs: 5000,
            transfer_patience: 300,
            class_weight_alpha: 0.1,
            transfer_fraction: 0.3,
            classifier_hidden_dim: 256,
            sweep_radii: vec![0.2, 0.3, 0.4, 0.5, 0.6],
            sweep_fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

impl RunConfig {
    /// Load a `key = value` file (`#` comments, blank lines ignored), then
    /// apply the `BIGNET_SEED` environment override if present.
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        for (lineno, line) in raw.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                BignetError::Config(format!(
                    "{}:{}: expected `key = value`, got {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| {
                BignetError::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        cfg.apply_env_override()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env_override(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            self.seed = v.parse().map_err(|_| {
                BignetError::Config(format!("{SEED_ENV_VAR} must be an integer, got {v:?}"))
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| BignetError::Config(format!("bad {what} value {value:?}"));
        match key {
            "mode" => {
                self.mode = match value {
                    "homogeneous" => GraphMode::Homogeneous,
                    "heterogeneous" => GraphMode::Heterogeneous,
                    _ => return Err(bad("mode")),
                }
            }
            "spatial_radius_m" => self.spatial_radius_m = parse_f64(value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "hidden_dim" => self.hidden_dim = value.parse().map_err(|_| bad("hidden_dim"))?,
            "heads_hidden" => self.heads_hidden = value.parse().map_err(|_| bad("heads_hidden"))?,
            "heads_out" => self.heads_out = value.parse().map_err(|_| bad("heads_out"))?,
            "mask_rate_homogeneous" => self.mask_rate_homogeneous = parse_f64(value)?,
            "mask_rate_semantic" => self.mask_rate_semantic = parse_f64(value)?,
            "mask_rate_topological" => self.mask_rate_topological = parse_f64(value)?,
            "mask_rate_spatial" => self.mask_rate_spatial = parse_f64(value)?,
            "remask_views" => self.remask_views = value.parse().map_err(|_| bad("remask_views"))?,
            "remask_rate" => self.remask_rate = parse_f64(value)?,
            "gamma" => self.gamma = parse_f64(value)?,
            "ema_tau" => self.ema_tau = parse_f64(value)?,
            "latent_loss_masked_only" => {
                self.latent_loss_masked_only = value.parse().map_err(|_| bad("bool"))?
            }
            "lr_grid" => self.lr_grid = parse_f64_list(value)?,
            "batch_grid" => self.batch_grid = parse_usize_list(value)?,
            "max_epochs" => self.max_epochs = value.parse().map_err(|_| bad("max_epochs"))?,
            "patience" => self.patience = value.parse().map_err(|_| bad("patience"))?,
            "transfer_lr" => self.transfer_lr = parse_f64(value)?,
            "transfer_max_epochs" => {
                self.transfer_max_epochs = value.parse().map_err(|_| bad("transfer_max_epochs"))?
            }
            "transfer_patience" => {
                self.transfer_patience = value.parse().map_err(|_| bad("transfer_patience"))?
            }
            "class_weight_alpha" => self.class_weight_alpha = parse_f64(value)?,
            "transfer_fraction" => self.transfer_fraction = parse_f64(value)?,
            "classifier_hidden_dim" => {
                self.classifier_hidden_dim =
                    value.parse().map_err(|_| bad("classifier_hidden_dim"))?
            }
            "sweep_radii" => self.sweep_radii = parse_f64_list(value)?,
            "sweep_fractions" => self.sweep_fractions = parse_f64_list(value)?,
            _ => return Err(BignetError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| r > 0.0 && r < 1.0;
        if self.spatial_radius_m <= 0.0 {
            return Err(BignetError::Config("spatial_radius_m must be positive".into()));
        }
        for (name, r) in [
            ("mask_rate_homogeneous", self.mask_rate_homogeneous),
            ("mask_rate_semantic", self.mask_rate_semantic),
            ("mask_rate_topological", self.mask_rate_topological),
            ("mask_rate_spatial", self.mask_rate_spatial),
            ("remask_rate", self.remask_rate),
        ] {
            if !rate_ok(r) {
                return Err(BignetError::Config(format!("{name} must be in (0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.ema_tau) {
            return Err(BignetError::Config("ema_tau must be in [0, 1]".into()));
        }
        if self.remask_views == 0 {
            return Err(BignetError::Config("remask_views must be >= 1".into()));
        }
        if self.lr_grid.is_empty() || self.batch_grid.is_empty() {
            return Err(BignetError::Config("lr_grid and batch_grid must be non-empty".into()));
        }
        if !(self.transfer_fraction > 0.0 && self.transfer_fraction < 1.0) {
            return Err(BignetError::Config("transfer_fraction must be in (0, 1)".into()));
        }
        if self.hidden_dim == 0 || self.heads_hidden == 0 || self.heads_out == 0 {
            return Err(BignetError::Config("network dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Serialize back to the same key=value format (for run manifests).
    pub fn to_key_values(&self) -> String {
        let list_f = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let list_u =
            |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        format!(
            "mode = {}\nspatial_radius_m = {}\nseed = {}\nhidden_dim = {}\nheads_hidden = {}\n\
             heads_out = {}\nmask_rate_homogeneous = {}\nmask_rate_semantic = {}\n\
             mask_rate_topological = {}\nmask_rate_spatial = {}\nremask_views = {}\n\
             remask_rate = {}\ngamma = {}\nema_tau = {}\nlatent_loss_masked_only = {}\n\
             lr_grid = {}\nbatch_grid = {}\nmax_epochs = {}\npatience = {}\ntransfer_lr = {}\n\
             transfer_max_epochs = {}\ntransfer_patience = {}\nclass_weight_alpha = {}\n\
             transfer_fraction = {}\nclassifier_hidden_dim = {}\nsweep_radii = {}\n\
             sweep_fractions = {}\n",
            match self.mode {
                GraphMode::Homogeneous => "homogeneous",
                GraphMode::Heterogeneous => "heterogeneous",
            },
            self.spatial_radius_m,
            self.seed,
            self.hidden_dim,
            self.heads_hidden,
            self.heads_out,
            self.mask_rate_homogeneous,
            self.mask_rate_semantic,
            self.mask_rate_topological,
            self.mask_rate_spatial,
            self.remask_views,
            self.remask_rate,
            self.gamma,
            self.ema_tau,
            self.latent_loss_masked_only,
            list_f(&self.lr_grid),
            list_u(&self.batch_grid),
            self.max_epochs,
            self.patience,
            self.transfer_lr,
            self.transfer_max_epochs,
            self.transfer_patience,
            self.class_weight_alpha,
            self.transfer_fraction,
            self.classifier_hidden_dim,
            list_f(&self.sweep_radii),
            list_f(&self.sweep_fractions),
        )
    }
}

fn parse_f64(value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| BignetError::Config(format!("bad numeric value {value:?}")))
}

fn parse_f64_list(value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|p| parse_f64(p.trim())).collect()
}

fn parse_usize_list(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| BignetError::Config(format!("bad integer value {p:?}")))
        })
        .collect()
}
