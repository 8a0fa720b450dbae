//! Per-map fitting of the untrained generator to sensor readings.
//!
//! The network input is fixed (sparse sensor raster or noise); only the
//! network parameters move. The loss reads observed cells only, so nothing
//! about the unobserved cells of the target can influence the fit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{AdamConfig, AdamState, Tape};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::grid::{BuildingMap, ExposureGrid, ObservationMask, SensorSet};
use crate::net::{make_prior_input, FinalActivation, GeneratorNet, KernelProfile, NetConfig, PriorMode};

/// Mixed into the run seed to decorrelate the noise input from the weights.
const PRIOR_SEED_SALT: u64 = 0x5EED_9E37_79B9_7F4A;
const NOISE_SEED_SALT: u64 = 0xA5A5_1234_C0FF_EE00;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub prior_mode: PriorMode,
    /// Feed the observation mask as a second GLIP input channel.
    pub mask_channel: bool,
    /// Noise planes for GRIP input.
    pub grip_channels: usize,
    pub epochs: usize,
    pub lr: f64,
    pub net: NetConfig,
    pub seed: u64,
    pub suppress_buildings: bool,
    pub log_every: usize,
    /// Start the head bias at the mean observed value instead of its random
    /// initialization.
    pub head_bias_from_data: bool,
    /// Weight of the running average of the output map over epochs; 0 keeps
    /// only the last output.
    pub output_ema: f64,
    /// Std of Gaussian noise added to the network input at every epoch.
    pub input_noise_std: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            prior_mode: PriorMode::Glip,
            mask_channel: false,
            grip_channels: 2,
            epochs: 150,
            lr: 0.01,
            net: NetConfig::default(),
            seed: 0,
            suppress_buildings: true,
            log_every: 1,
            head_bias_from_data: false,
            output_ema: 0.0,
            input_noise_std: 0.1,
        }
    }
}

impl ReconstructionConfig {
    pub fn input_channels(&self) -> usize {
        match self.prior_mode {
            PriorMode::Glip => 1 + usize::from(self.mask_channel),
            PriorMode::Grip => self.grip_channels,
        }
    }

    /// Network configuration for a `rows x cols` map: input width follows the
    /// prior, and depth is reduced when the grid is too small for it.
    pub fn resolved_net(&self, rows: usize, cols: usize) -> NetConfig {
        NetConfig {
            input_channels: self.input_channels(),
            ..self.net.clone()
        }
        .fit_to(rows, cols)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::validation("log_every must be >= 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::validation(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.output_ema) {
            return Err(Error::validation(format!("output_ema must be in [0, 1), got {}", self.output_ema)));
        }
        if !(self.input_noise_std.is_finite() && self.input_noise_std >= 0.0) {
            return Err(Error::validation(format!(
                "input noise std must be >= 0, got {}",
                self.input_noise_std
            )));
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "prior.mode",
        "prior.mask_channel",
        "prior.grip_channels",
        "train.epochs",
        "train.lr",
        "train.seed",
        "train.log_every",
        "train.suppress_buildings",
        "train.head_bias_from_data",
        "train.output_ema",
        "prior.input_noise_std",
        "net.depth",
        "net.enc_channels",
        "net.skip_channels",
        "net.enc_kernel",
        "net.dec_kernel",
        "net.skip_kernel",
        "net.kernel_profile",
        "net.down_stride",
        "net.final_activation",
    ];

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("prior.mode", self.prior_mode);
        kv.set("prior.mask_channel", self.mask_channel);
        kv.set("prior.grip_channels", self.grip_channels);
        kv.set("train.epochs", self.epochs);
        kv.set("train.lr", self.lr);
        kv.set("train.seed", self.seed);
        kv.set("train.log_every", self.log_every);
        kv.set("train.suppress_buildings", self.suppress_buildings);
        kv.set("train.head_bias_from_data", self.head_bias_from_data);
        kv.set("train.output_ema", self.output_ema);
        kv.set("prior.input_noise_std", self.input_noise_std);
        let n = &self.net;
        kv.set("net.depth", n.depth);
        kv.set_list("net.enc_channels", &n.enc_channels);
        kv.set_list("net.skip_channels", &n.skip_channels);
        kv.set("net.enc_kernel", n.enc_kernel);
        kv.set("net.dec_kernel", n.dec_kernel);
        kv.set("net.skip_kernel", n.skip_kernel);
        kv.set("net.kernel_profile", n.kernel_profile);
        kv.set("net.down_stride", n.down_stride);
        kv.set("net.final_activation", n.final_activation);
        kv
    }

    /// Reads the keys present in `kv` on top of `self`.
    pub fn apply_kv(mut self, kv: &KvConfig) -> Result<Self> {
        if let Some(v) = kv.get::<PriorMode>("prior.mode")? {
            self.prior_mode = v;
        }
        if let Some(v) = kv.get_bool("prior.mask_channel")? {
            self.mask_channel = v;
        }
        self.grip_channels = kv.get_or("prior.grip_channels", self.grip_channels)?;
        self.epochs = kv.get_or("train.epochs", self.epochs)?;
        self.lr = kv.get_or("train.lr", self.lr)?;
        self.seed = kv.get_or("train.seed", self.seed)?;
        self.log_every = kv.get_or("train.log_every", self.log_every)?;
        if let Some(v) = kv.get_bool("train.suppress_buildings")? {
            self.suppress_buildings = v;
        }
        if let Some(v) = kv.get_bool("train.head_bias_from_data")? {
            self.head_bias_from_data = v;
        }
        self.output_ema = kv.get_or("train.output_ema", self.output_ema)?;
        self.input_noise_std = kv.get_or("prior.input_noise_std", self.input_noise_std)?;
        let depth: Option<usize> = kv.get("net.depth")?;
        if let Some(d) = depth {
            self.net = self.net.with_depth(d);
        }
        if let Some(v) = kv.get_list("net.enc_channels")? {
            self.net.enc_channels = v;
        }
        if let Some(v) = kv.get_list("net.skip_channels")? {
            self.net.skip_channels = v;
        }
        let n = &mut self.net;
        n.enc_kernel = kv.get_or("net.enc_kernel", n.enc_kernel)?;
        n.dec_kernel = kv.get_or("net.dec_kernel", n.dec_kernel)?;
        n.skip_kernel = kv.get_or("net.skip_kernel", n.skip_kernel)?;
        n.kernel_profile = kv.get_or::<KernelProfile>("net.kernel_profile", n.kernel_profile)?;
        n.down_stride = kv.get_or("net.down_stride", n.down_stride)?;
        n.final_activation = kv.get_or::<FinalActivation>("net.final_activation", n.final_activation)?;
        if n.enc_channels.len() != n.depth || n.skip_channels.len() != n.depth {
            return Err(Error::Config {
                key: "net.depth".into(),
                msg: format!(
                    "depth {} disagrees with {} encoder / {} skip widths",
                    n.depth,
                    n.enc_channels.len(),
                    n.skip_channels.len()
                ),
            });
        }
        self.validate()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// De-normalized prediction in V/m.
    pub predicted: ExposureGrid,
    /// (epoch, masked loss before that epoch's update), every `log_every`.
    pub loss_curve: Vec<(usize, f64)>,
    pub epochs_run: usize,
    pub seed: u64,
    /// Normalization scale: the largest observed reading.
    pub scale: f64,
    /// Masked loss of the map after the last update (normalized units).
    pub final_loss: f64,
    /// Network configuration actually used.
    pub net: NetConfig,
}

impl ReconstructionResult {
    pub fn initial_loss(&self) -> f64 {
        self.loss_curve[0].1
    }

    pub fn loss_csv(&self) -> String {
        let mut out = String::from("iter,loss\n");
        for (i, l) in &self.loss_curve {
            let _ = writeln!(out, "{i},{l:.16e}");
        }
        out
    }
}

/// Zeroes building cells.
pub fn suppress_buildings(grid: &ExposureGrid, buildings: &BuildingMap) -> Result<ExposureGrid> {
    if !grid.dims().same_shape(&buildings.dims()) {
        return Err(Error::shape("suppress_buildings", "building raster differs from grid"));
    }
    let vals = grid
        .values()
        .iter()
        .zip(buildings.bits())
        .map(|(&v, &b)| if b { 0.0 } else { v })
        .collect();
    ExposureGrid::new(grid.dims(), vals)
}

/// Fits the generator to the sensor readings.
pub fn fit(sensors: &SensorSet, buildings: &BuildingMap, cfg: &ReconstructionConfig) -> Result<ReconstructionResult> {
    if sensors.is_empty() {
        return Err(Error::validation("cannot reconstruct from an empty sensor set"));
    }
    let (sparse, mask) = sensors.rasterize();
    fit_grid(&sparse, &mask, buildings, cfg)
}

/// Fits the generator to the cells of `target` selected by `observed`.
/// Unobserved cells of `target` are never read. Observed cells that fall on
/// buildings are dropped from the training mask.
pub fn fit_grid(
    target: &ExposureGrid,
    observed: &ObservationMask,
    buildings: &BuildingMap,
    cfg: &ReconstructionConfig,
) -> Result<ReconstructionResult> {
    cfg.validate()?;
    let dims = target.dims();
    if !observed.dims().same_shape(&dims) || !buildings.dims().same_shape(&dims) {
        return Err(Error::shape("fit", "target, mask and building raster must share a shape"));
    }
    let mask = observed.minus(buildings);
    if mask.popcount() == 0 {
        return Err(Error::validation("no observed points outside buildings"));
    }
    let sparse = ExposureGrid::new(
        dims,
        target
            .values()
            .iter()
            .zip(mask.bits())
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect(),
    )?;
    let (target_norm, scale) = sparse.normalize()?;

    let net_cfg = cfg.resolved_net(dims.rows, dims.cols);
    let prior = make_prior_input(
        cfg.prior_mode,
        &sparse,
        &mask,
        cfg.input_channels(),
        cfg.seed ^ PRIOR_SEED_SALT,
    )?;
    let mut net = GeneratorNet::build(net_cfg.clone(), dims.rows, dims.cols, cfg.seed)?;
    if cfg.head_bias_from_data {
        let observed: Vec<f64> = target_norm
            .values()
            .iter()
            .zip(mask.bits())
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect();
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        let bias = match net_cfg.final_activation {
            FinalActivation::Sigmoid => {
                let p = mean.clamp(1e-3, 1.0 - 1e-3);
                (p / (1.0 - p)).ln()
            }
            FinalActivation::None => mean,
        };
        let id = net.params().id("head.b").expect("generator has a head bias");
        net.params_mut().get_mut(id).values_mut().fill(bias);
    }
    let mut adam = AdamState::new(
        net.params(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ NOISE_SEED_SALT);
    let mut noisy = prior.clone();
    let mut average: Option<Vec<f64>> = None;
    let mut loss_curve = Vec::with_capacity(cfg.epochs.div_ceil(cfg.log_every));
    for epoch in 0..cfg.epochs {
        let input = if cfg.input_noise_std > 0.0 {
            let normal = Normal::new(0.0, cfg.input_noise_std).expect("validated std");
            for (n, &p) in noisy.tensor.values_mut().iter_mut().zip(prior.tensor.values()) {
                *n = p + normal.sample(&mut noise_rng);
            }
            &noisy
        } else {
            &prior
        };
        let mut tape = Tape::new();
        let out = net.forward(&mut tape, input)?;
        let loss = tape.masked_sq_loss(out, &target_norm, &mask)?;
        let value = tape.value(loss).values()[0];
        if !value.is_finite() {
            return Err(Error::Divergence { epoch, loss: value });
        }
        if epoch % cfg.log_every == 0 {
            loss_curve.push((epoch, value));
        }
        if cfg.output_ema > 0.0 {
            blend(&mut average, tape.value(out).values(), cfg.output_ema);
        }
        let grads = tape.backward(loss)?;
        net.params_mut().zero_grads();
        grads.accumulate_into(net.params_mut());
        adam.step(net.params_mut())?;
    }

    let mut tape = Tape::new();
    let out = net.forward(&mut tape, &prior)?;
    let loss = tape.masked_sq_loss(out, &target_norm, &mask)?;
    let final_loss = tape.value(loss).values()[0];
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: cfg.epochs,
            loss: final_loss,
        });
    }
    let last = tape.value(out).values();
    if cfg.output_ema > 0.0 {
        blend(&mut average, last, cfg.output_ema);
    }
    let map = average.as_deref().unwrap_or(last);
    // A linear head can go negative; exposure cannot.
    let normalized: Vec<f64> = map.iter().map(|v| v.max(0.0)).collect();
    let mut predicted = ExposureGrid::new(dims, normalized)?.denormalize(scale)?;
    if cfg.suppress_buildings {
        predicted = suppress_buildings(&predicted, buildings)?;
    }
    Ok(ReconstructionResult {
        predicted,
        loss_curve,
        epochs_run: cfg.epochs,
        seed: cfg.seed,
        scale,
        final_loss,
        net: net_cfg,
    })
}

fn blend(average: &mut Option<Vec<f64>>, values: &[f64], weight: f64) {
    match average {
        Some(avg) => {
            for (a, &v) in avg.iter_mut().zip(values) {
                *a = weight * *a + (1.0 - weight) * v;
            }
        }
        None => *average = Some(values.to_vec()),
    }
}

pub const PREDICTED_FILE: &str = "predicted.emgrid";
pub const LOSS_FILE: &str = "loss.csv";
pub const MANIFEST_FILE: &str = "manifest";

/// Runs [`fit`] and persists the predicted map, the loss curve and a
/// manifest (resolved config, seed, version, plus `extra` entries) in
/// `out_dir`.
pub fn reconstruct(
    sensors: &SensorSet,
    buildings: &BuildingMap,
    cfg: &ReconstructionConfig,
    out_dir: &Path,
    extra: &KvConfig,
) -> Result<ReconstructionResult> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let result = fit(sensors, buildings, cfg)?;
    result.predicted.write(out_dir.join(PREDICTED_FILE))?;
    let loss_path = out_dir.join(LOSS_FILE);
    fs::write(&loss_path, result.loss_csv()).map_err(|e| Error::io(&loss_path, e))?;
    let mut manifest = KvConfig::new();
    manifest.merge(extra);
    let resolved = ReconstructionConfig {
        net: result.net.clone(),
        ..cfg.clone()
    };
    manifest.merge(&resolved.to_kv());
    manifest.set("run.seed", cfg.seed);
    manifest.set("run.version", env!("CARGO_PKG_VERSION"));
    manifest.set("run.scale", format!("{:.16e}", result.scale));
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(result)
}
