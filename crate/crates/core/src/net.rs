//! U-Net style generator with convolutional skip connections.
//!
//! Encoder level `i` halves the spatial size with a strided convolution.
//! Decoder level `i` upsamples the deeper features by nearest neighbour,
//! concatenates a narrow skip branch computed from the encoder feature at the
//! same resolution (level 0 takes the network input itself), and convolves
//! the result. Every convolution except the 1x1 head is followed by batch
//! normalization and LeakyReLU.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ConvSpec, ParamId, ParamStore, Shape4, Tape, Tensor4, Var};
use crate::error::{Error, Result};
use crate::grid::{ExposureGrid, ObservationMask};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
/// Upper bound of the uniform noise used as random network input.
pub const NOISE_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalActivation {
    Sigmoid,
    None,
}

impl FromStr for FinalActivation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Self::Sigmoid),
            "none" | "linear" => Ok(Self::None),
            _ => Err(Error::validation(format!("unknown final activation `{s}`"))),
        }
    }
}

impl fmt::Display for FinalActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sigmoid => "sigmoid",
            Self::None => "none",
        })
    }
}

/// How kernel sizes are assigned to encoder and decoder levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelProfile {
    /// `enc_kernel` and `dec_kernel` at every level.
    Uniform,
    /// Sizes 2, 3, 4, 2, 3, 4, ... by level for encoder and decoder.
    Cycle234,
}

impl FromStr for KernelProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "cycle234" => Ok(Self::Cycle234),
            _ => Err(Error::validation(format!("unknown kernel profile `{s}`"))),
        }
    }
}

impl fmt::Display for KernelProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Cycle234 => "cycle234",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub depth: usize,
    pub enc_channels: Vec<usize>,
    pub skip_channels: Vec<usize>,
    pub enc_kernel: usize,
    pub dec_kernel: usize,
    pub skip_kernel: usize,
    pub kernel_profile: KernelProfile,
    pub down_stride: usize,
    pub out_channels: usize,
    pub final_activation: FinalActivation,
    pub input_channels: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            depth: 6,
            enc_channels: vec![32; 6],
            skip_channels: vec![4; 6],
            enc_kernel: 3,
            dec_kernel: 3,
            skip_kernel: 1,
            kernel_profile: KernelProfile::Uniform,
            down_stride: 2,
            out_channels: 1,
            final_activation: FinalActivation::Sigmoid,
            input_channels: 2,
        }
    }
}

impl NetConfig {
    /// Channel schedule truncated to `depth` levels.
    pub fn with_depth(mut self, depth: usize) -> Self {
        let last_enc = self.enc_channels.last().copied().unwrap_or(16);
        let last_skip = self.skip_channels.last().copied().unwrap_or(4);
        self.enc_channels.resize(depth, last_enc);
        self.skip_channels.resize(depth, last_skip);
        self.depth = depth;
        self
    }

    /// Deepest depth (at most the configured one) whose bottleneck still has
    /// at least two cells per channel, which batch normalization needs.
    pub fn fit_to(self, rows: usize, cols: usize) -> Self {
        let mut depth = self.depth;
        while depth > 1 && !self.depth_fits(depth, rows, cols) {
            depth -= 1;
        }
        self.with_depth(depth)
    }

    fn depth_fits(&self, depth: usize, rows: usize, cols: usize) -> bool {
        let Some(f) = self.down_stride.checked_pow(depth as u32) else {
            return false;
        };
        rows.is_multiple_of(f) && cols.is_multiple_of(f) && (rows / f) * (cols / f) >= 2
    }

    pub fn enc_kernel_at(&self, level: usize) -> usize {
        match self.kernel_profile {
            KernelProfile::Uniform => self.enc_kernel,
            KernelProfile::Cycle234 => [2, 3, 4][level % 3],
        }
    }

    pub fn dec_kernel_at(&self, level: usize) -> usize {
        match self.kernel_profile {
            KernelProfile::Uniform => self.dec_kernel,
            KernelProfile::Cycle234 => [2, 3, 4][level % 3],
        }
    }

    fn level_input(&self, level: usize) -> usize {
        if level == 0 {
            self.input_channels
        } else {
            self.enc_channels[level - 1]
        }
    }

    fn dec_input(&self, level: usize) -> usize {
        let below = if level + 1 == self.depth {
            self.enc_channels[level]
        } else {
            self.enc_channels[level + 1]
        };
        below + self.skip_channels[level]
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::validation("net depth must be >= 1"));
        }
        if self.enc_channels.len() != self.depth || self.skip_channels.len() != self.depth {
            return Err(Error::validation(format!(
                "depth {} needs that many encoder and skip widths, got {} and {}",
                self.depth,
                self.enc_channels.len(),
                self.skip_channels.len()
            )));
        }
        if self.enc_channels.iter().chain(&self.skip_channels).any(|&c| c == 0)
            || self.input_channels == 0
            || self.out_channels == 0
        {
            return Err(Error::validation("channel counts must be positive"));
        }
        let kernels = (0..self.depth)
            .flat_map(|l| [self.enc_kernel_at(l), self.dec_kernel_at(l)])
            .chain([self.skip_kernel]);
        for k in kernels {
            if !(1..=4).contains(&k) {
                return Err(Error::validation(format!("kernel size {k} outside 1..=4")));
            }
        }
        if self.down_stride < 2 {
            return Err(Error::validation("down_stride must be >= 2"));
        }
        let f = self
            .down_stride
            .checked_pow(self.depth as u32)
            .ok_or_else(|| Error::validation("down_stride^depth overflows"))?;
        if !rows.is_multiple_of(f) || !cols.is_multiple_of(f) {
            return Err(Error::validation(format!(
                "input {rows}x{cols} is not divisible by {}^{} = {f}",
                self.down_stride, self.depth
            )));
        }
        if (rows / f) * (cols / f) < 2 {
            return Err(Error::validation(format!(
                "bottleneck of {rows}x{cols} at depth {} is {}x{}; batch normalization needs at least 2 cells",
                self.depth,
                rows / f,
                cols / f
            )));
        }
        Ok(())
    }

    /// Scalar parameter count in closed form.
    pub fn param_count(&self) -> usize {
        let block = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout + 2 * cout;
        let mut total = 0;
        for l in 0..self.depth {
            total += block(self.level_input(l), self.enc_channels[l], self.enc_kernel_at(l));
            total += block(self.level_input(l), self.skip_channels[l], self.skip_kernel);
            total += block(self.dec_input(l), self.enc_channels[l], self.dec_kernel_at(l));
        }
        total + self.out_channels * self.enc_channels[0] + self.out_channels
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvBlock {
    w: ParamId,
    b: ParamId,
    bn_g: ParamId,
    bn_b: ParamId,
    kernel: usize,
    stride: usize,
}

#[derive(Debug, Clone)]
pub struct GeneratorNet {
    config: NetConfig,
    rows: usize,
    cols: usize,
    params: ParamStore,
    enc: Vec<ConvBlock>,
    skip: Vec<ConvBlock>,
    dec: Vec<ConvBlock>,
    head: (ParamId, ParamId),
}

fn init_conv(
    params: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
) -> Result<(ParamId, ParamId)> {
    let a = (1.0 / (cin * k * k) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a);
    let ws = Shape4::new(cout, cin, k, k);
    let w: Vec<f64> = (0..ws.len()).map(|_| dist.sample(rng)).collect();
    let b: Vec<f64> = (0..cout).map(|_| dist.sample(rng)).collect();
    let w = params.insert(format!("{name}.w"), Tensor4::new(ws, w)?)?;
    let b = params.insert(format!("{name}.b"), Tensor4::new(Shape4::new(1, cout, 1, 1), b)?)?;
    Ok((w, b))
}

#[allow(clippy::too_many_arguments)]
fn init_block(
    params: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
) -> Result<ConvBlock> {
    let (w, b) = init_conv(params, rng, name, cin, cout, kernel)?;
    let affine = Shape4::new(1, cout, 1, 1);
    let bn_g = params.insert(format!("{name}.bn_g"), Tensor4::filled(affine, 1.0))?;
    let bn_b = params.insert(format!("{name}.bn_b"), Tensor4::zeros(affine))?;
    Ok(ConvBlock {
        w,
        b,
        bn_g,
        bn_b,
        kernel,
        stride,
    })
}

impl GeneratorNet {
    /// Builds a network for `rows x cols` inputs with seeded uniform
    /// initialization.
    pub fn build(config: NetConfig, rows: usize, cols: usize, seed: u64) -> Result<Self> {
        config.validate(rows, cols)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let c = &config;
        let mut enc = Vec::with_capacity(c.depth);
        let mut skip = Vec::with_capacity(c.depth);
        let mut dec = Vec::with_capacity(c.depth);
        for l in 0..c.depth {
            enc.push(init_block(
                &mut params,
                &mut rng,
                &format!("enc{l}"),
                c.level_input(l),
                c.enc_channels[l],
                c.enc_kernel_at(l),
                c.down_stride,
            )?);
        }
        for l in 0..c.depth {
            skip.push(init_block(
                &mut params,
                &mut rng,
                &format!("skip{l}"),
                c.level_input(l),
                c.skip_channels[l],
                c.skip_kernel,
                1,
            )?);
        }
        for l in 0..c.depth {
            dec.push(init_block(
                &mut params,
                &mut rng,
                &format!("dec{l}"),
                c.dec_input(l),
                c.enc_channels[l],
                c.dec_kernel_at(l),
                1,
            )?);
        }
        let head = init_conv(&mut params, &mut rng, "head", c.enc_channels[0], c.out_channels, 1)?;
        Ok(Self {
            config,
            rows,
            cols,
            params,
            enc,
            skip,
            dec,
            head,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn block(&self, tape: &mut Tape, blk: &ConvBlock, x: Var) -> Result<Var> {
        let w = tape.param(&self.params, blk.w);
        let b = tape.param(&self.params, blk.b);
        let y = tape.conv2d(x, w, b, ConvSpec::same(blk.kernel, blk.stride))?;
        let g = tape.param(&self.params, blk.bn_g);
        let bt = tape.param(&self.params, blk.bn_b);
        let y = tape.batch_norm(y, g, bt, BN_EPS)?;
        tape.leaky_relu(y, LEAKY_SLOPE)
    }

    /// Records the full forward pass and returns the (1, out, M, N) output.
    pub fn forward(&self, tape: &mut Tape, input: &PriorInput) -> Result<Var> {
        let s = input.tensor.shape();
        let expect = Shape4::new(1, self.config.input_channels, self.rows, self.cols);
        if s != expect {
            return Err(Error::shape(
                "generator forward",
                format!("input {s}, network expects {expect}"),
            ));
        }
        let x = tape.constant(input.tensor.clone());
        let mut feats = Vec::with_capacity(self.config.depth + 1);
        feats.push(x);
        let mut h = x;
        for blk in &self.enc {
            h = self.block(tape, blk, h)?;
            feats.push(h);
        }
        for l in (0..self.config.depth).rev() {
            let up = tape.upsample_nearest(h, self.config.down_stride)?;
            let sk = self.block(tape, &self.skip[l], feats[l])?;
            let cat = tape.concat_channels(up, sk)?;
            h = self.block(tape, &self.dec[l], cat)?;
        }
        let w = tape.param(&self.params, self.head.0);
        let b = tape.param(&self.params, self.head.1);
        let out = tape.conv2d(h, w, b, ConvSpec::same(1, 1))?;
        match self.config.final_activation {
            FinalActivation::Sigmoid => tape.sigmoid(out),
            FinalActivation::None => Ok(out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMode {
    /// Sparse sensor raster (and optionally the mask) as network input.
    Glip,
    /// Uniform random noise as network input.
    Grip,
}

impl FromStr for PriorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "glip" => Ok(Self::Glip),
            "grip" => Ok(Self::Grip),
            _ => Err(Error::validation(format!("unknown prior mode `{s}` (glip|grip)"))),
        }
    }
}

impl fmt::Display for PriorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Glip => "glip",
            Self::Grip => "grip",
        })
    }
}

/// The fixed network input `Z_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorInput {
    pub tensor: Tensor4,
    pub mode: PriorMode,
}

/// Builds the network input.
///
/// GLIP: channel 0 is the sparse raster restricted to the mask and divided by
/// its maximum; with `channels == 2` channel 1 is the mask. GRIP: `channels`
/// planes of i.i.d. uniform noise in (0, 0.1).
pub fn make_prior_input(
    mode: PriorMode,
    sparse: &ExposureGrid,
    mask: &ObservationMask,
    channels: usize,
    seed: u64,
) -> Result<PriorInput> {
    let dims = sparse.dims();
    let (rows, cols) = (dims.rows, dims.cols);
    match mode {
        PriorMode::Glip => {
            if !(channels == 1 || channels == 2) {
                return Err(Error::validation(format!(
                    "GLIP input has 1 or 2 channels, requested {channels}"
                )));
            }
            if !mask.dims().same_shape(&dims) {
                return Err(Error::shape("make_prior_input", "mask and sparse grid differ"));
            }
            if mask.popcount() == 0 {
                return Err(Error::validation("GLIP prior needs at least one observed cell"));
            }
            let observed: Vec<f64> = sparse
                .values()
                .iter()
                .zip(mask.bits())
                .map(|(&v, &m)| if m { v } else { 0.0 })
                .collect();
            let scale = observed.iter().copied().fold(0.0, f64::max);
            let mut data: Vec<f64> = if scale > 0.0 {
                observed.iter().map(|v| v / scale).collect()
            } else {
                observed
            };
            if channels == 2 {
                data.extend(mask.bits().iter().map(|&m| if m { 1.0 } else { 0.0 }));
            }
            Ok(PriorInput {
                tensor: Tensor4::new(Shape4::new(1, channels, rows, cols), data)?,
                mode,
            })
        }
        PriorMode::Grip => {
            if channels == 0 {
                return Err(Error::validation("GRIP input needs at least one channel"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = Shape4::new(1, channels, rows, cols);
            let data = (0..shape.len())
                .map(|_| loop {
                    let v = rng.gen_range(0.0..NOISE_SCALE);
                    if v > 0.0 {
                        break v;
                    }
                })
                .collect();
            Ok(PriorInput {
                tensor: Tensor4::new(shape, data)?,
                mode,
            })
        }
    }
}
