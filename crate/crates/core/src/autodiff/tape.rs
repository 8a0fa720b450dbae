use super::params::{ParamId, ParamStore};
use super::tensor::{ConvSpec, Shape4, Tensor4};
use super::gemm::{gemm_acc, gemm_nt_acc, transpose};
use crate::error::{Error, Result};
use crate::grid::{ExposureGrid, ObservationMask};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        spec: ConvSpec,
    },
    Upsample {
        input: Var,
        factor: usize,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    Sigmoid {
        input: Var,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Concat {
        a: Var,
        b: Var,
    },
    MaskedSqLoss {
        pred: Var,
        target: Vec<f64>,
        mask: Vec<bool>,
        count: usize,
    },
}

/// Record of executed operations, consumed by one backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Tensor4>,
    ops: Vec<Op>,
    params: Vec<(Var, ParamId)>,
    consumed: bool,
}

/// Gradients of one backward pass, indexed by recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(Var, ParamId)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the parameter gradients into the store. Parameters the loss does
    /// not depend on receive an explicit zero gradient.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(var, id) in &self.params {
            let dst = store.get_mut(id).grad_mut_or_zero();
            if let Some(g) = &self.grads[var.0] {
                for (d, s) in dst.iter_mut().zip(g) {
                    *d += s;
                }
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor4 {
        &self.values[v.0]
    }

    /// Shapes of all recorded values in execution order.
    pub fn shapes(&self) -> impl Iterator<Item = Shape4> + '_ {
        self.values.iter().map(Tensor4::shape)
    }

    fn push(&mut self, value: Tensor4, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    fn check_live(&self) -> Result<()> {
        if self.consumed {
            Err(Error::Tape("tape already consumed by backward".into()))
        } else {
            Ok(())
        }
    }

    pub fn constant(&mut self, t: Tensor4) -> Var {
        let mut t = t;
        t.clear_grad();
        self.push(t, Op::Leaf)
    }

    /// Records a copy of a stored parameter; its gradient is routed back by
    /// [`Gradients::accumulate_into`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let mut t = store.get(id).clone();
        t.clear_grad();
        let v = self.push(t, Op::Leaf);
        self.params.push((v, id));
        v
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, spec: ConvSpec) -> Result<Var> {
        self.check_live()?;
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let out = conv2d_forward(x, w, b, spec)?;
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            },
        ))
    }

    pub fn upsample_nearest(&mut self, input: Var, factor: usize) -> Result<Var> {
        self.check_live()?;
        if factor == 0 {
            return Err(Error::shape("upsample_nearest", "factor must be >= 1"));
        }
        let x = self.value(input);
        let s = x.shape();
        let os = Shape4::new(s.batch, s.channels, s.rows * factor, s.cols * factor);
        let mut out = Vec::with_capacity(os.len());
        for plane in x.values().chunks(s.plane()) {
            for r in 0..os.rows {
                let src = &plane[(r / factor) * s.cols..(r / factor + 1) * s.cols];
                for &v in src {
                    for _ in 0..factor {
                        out.push(v);
                    }
                }
            }
        }
        let out = Tensor4::new(os, out)?;
        Ok(self.push(out, Op::Upsample { input, factor }))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Result<Var> {
        self.check_live()?;
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::validation(format!(
                "leaky_relu slope must lie in (0, 1), got {slope}"
            )));
        }
        let x = self.value(input);
        let vals = x
            .values()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let out = Tensor4::new(x.shape(), vals)?;
        Ok(self.push(out, Op::LeakyRelu { input, slope }))
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.check_live()?;
        let x = self.value(input);
        let vals = x.values().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
        let out = Tensor4::new(x.shape(), vals)?;
        Ok(self.push(out, Op::Sigmoid { input }))
    }

    /// Per-channel standardization over (batch, rows, cols) with the current
    /// batch statistics (biased variance), followed by `gamma * x + beta`.
    /// `gamma` and `beta` have shape (1, C, 1, 1).
    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        self.check_live()?;
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::validation(format!("batch_norm eps must be >= 0, got {eps}")));
        }
        let x = self.value(input);
        let s = x.shape();
        let affine = Shape4::new(1, s.channels, 1, 1);
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            if self.value(p).shape() != affine {
                return Err(Error::shape(
                    "batch_norm",
                    format!("{name} has shape {}, expected {affine}", self.value(p).shape()),
                ));
            }
        }
        let n = s.batch * s.plane();
        if n < 2 {
            return Err(Error::shape(
                "batch_norm",
                format!("needs at least 2 values per channel, input {s} has {n}"),
            ));
        }
        let (g, bt) = (self.value(gamma).values(), self.value(beta).values());
        let xv = x.values();
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; s.channels];
        let mut out = vec![0.0; xv.len()];
        let plane = s.plane();
        for c in 0..s.channels {
            let mut sum = 0.0;
            for b in 0..s.batch {
                let o = s.index(b, c, 0, 0);
                sum += xv[o..o + plane].iter().sum::<f64>();
            }
            let mean = sum / n as f64;
            let mut sq = 0.0;
            for b in 0..s.batch {
                let o = s.index(b, c, 0, 0);
                sq += xv[o..o + plane].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            }
            let var = sq / n as f64;
            if var + eps <= 0.0 {
                return Err(Error::validation(format!(
                    "batch_norm channel {c} is constant and eps = 0"
                )));
            }
            let is = 1.0 / (var + eps).sqrt();
            inv_std[c] = is;
            for b in 0..s.batch {
                let o = s.index(b, c, 0, 0);
                for i in o..o + plane {
                    let h = (xv[i] - mean) * is;
                    xhat[i] = h;
                    out[i] = g[c] * h + bt[c];
                }
            }
        }
        let out = Tensor4::new(s, out)?;
        Ok(self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.batch != sb.batch || sa.rows != sb.rows || sa.cols != sb.cols {
            return Err(Error::shape(
                "concat_channels",
                format!("cannot concatenate {sa} with {sb}: batch/spatial dims differ"),
            ));
        }
        let os = Shape4::new(sa.batch, sa.channels + sb.channels, sa.rows, sa.cols);
        let mut out = Vec::with_capacity(os.len());
        let (na, nb) = (sa.channels * sa.plane(), sb.channels * sb.plane());
        for bi in 0..sa.batch {
            out.extend_from_slice(&ta.values()[bi * na..(bi + 1) * na]);
            out.extend_from_slice(&tb.values()[bi * nb..(bi + 1) * nb]);
        }
        let out = Tensor4::new(os, out)?;
        Ok(self.push(out, Op::Concat { a, b }))
    }

    /// Mean squared error over the masked cells of a (1, 1, M, N) prediction.
    pub fn masked_sq_loss(
        &mut self,
        pred: Var,
        target: &ExposureGrid,
        mask: &ObservationMask,
    ) -> Result<Var> {
        let s = self.value(pred).shape();
        let d = target.dims();
        if s.batch != 1 || s.channels != 1 || s.rows != d.rows || s.cols != d.cols {
            return Err(Error::shape(
                "masked_sq_loss",
                format!("prediction must be (1, 1, {}, {}), got {s}", d.rows, d.cols),
            ));
        }
        self.masked_sq_loss_raw(pred, target.values(), mask.bits())
    }

    /// Masked mean squared error over a tensor of any shape, with `target`
    /// and `mask` in the tensor's row-major order.
    pub fn masked_sq_loss_raw(&mut self, pred: Var, target: &[f64], mask: &[bool]) -> Result<Var> {
        self.check_live()?;
        let p = self.value(pred);
        let s = p.shape();
        if target.len() != s.len() || mask.len() != s.len() {
            return Err(Error::shape(
                "masked_sq_loss",
                format!(
                    "prediction has {} cells, target {}, mask {}",
                    s.len(),
                    target.len(),
                    mask.len()
                ),
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::validation("no observed points"));
        }
        let mut sum = 0.0;
        for ((&pv, &tv), &m) in p.values().iter().zip(target).zip(mask) {
            if m {
                let d = pv - tv;
                sum += d * d;
            }
        }
        let out = Tensor4::scalar(sum / count as f64);
        Ok(self.push(
            out,
            Op::MaskedSqLoss {
                pred,
                target: target.to_vec(),
                mask: mask.to_vec(),
                count,
            },
        ))
    }

    /// Reverse pass from a scalar node. The tape cannot be used afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.check_live()?;
        if self.value(loss).shape() != Shape4::scalar() {
            return Err(Error::Tape(format!(
                "backward needs a scalar loss, got {}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;
        let ops = std::mem::take(&mut self.ops);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(vec![1.0]);

        for (idx, op) in ops.iter().enumerate().rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            match op {
                Op::Leaf => {
                    grads[idx] = Some(gy);
                    continue;
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    spec,
                } => {
                    let (gx, gw, gb) = conv2d_backward(
                        &self.values[input.0],
                        &self.values[weight.0],
                        self.values[idx].shape(),
                        &gy,
                        *spec,
                    );
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *weight, gw);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Upsample { input, factor } => {
                    let s = self.values[input.0].shape();
                    let f = *factor;
                    let ocols = s.cols * f;
                    let mut gx = vec![0.0; s.len()];
                    for (p, gplane) in gy.chunks(s.plane() * f * f).enumerate() {
                        let dst = &mut gx[p * s.plane()..(p + 1) * s.plane()];
                        for (r, grow) in gplane.chunks(ocols).enumerate() {
                            let drow = &mut dst[(r / f) * s.cols..(r / f + 1) * s.cols];
                            for (c, &g) in grow.iter().enumerate() {
                                drow[c / f] += g;
                            }
                        }
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::LeakyRelu { input, slope } => {
                    let x = self.values[input.0].values();
                    let gx = x
                        .iter()
                        .zip(&gy)
                        .map(|(&xv, &g)| if xv >= 0.0 { g } else { slope * g })
                        .collect();
                    accumulate(&mut grads, *input, gx);
                }
                Op::Sigmoid { input } => {
                    let y = self.values[idx].values();
                    let gx = y.iter().zip(&gy).map(|(&yv, &g)| g * yv * (1.0 - yv)).collect();
                    accumulate(&mut grads, *input, gx);
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let s = self.values[input.0].shape();
                    let g = self.values[gamma.0].values();
                    let n = (s.batch * s.plane()) as f64;
                    let plane = s.plane();
                    let mut gx = vec![0.0; s.len()];
                    let mut ggamma = vec![0.0; s.channels];
                    let mut gbeta = vec![0.0; s.channels];
                    for c in 0..s.channels {
                        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
                        for b in 0..s.batch {
                            let o = s.index(b, c, 0, 0);
                            for i in o..o + plane {
                                sum_dy += gy[i];
                                sum_dy_xhat += gy[i] * xhat[i];
                            }
                        }
                        ggamma[c] = sum_dy_xhat;
                        gbeta[c] = sum_dy;
                        let k = g[c] * inv_std[c] / n;
                        for b in 0..s.batch {
                            let o = s.index(b, c, 0, 0);
                            for i in o..o + plane {
                                gx[i] = k * (n * gy[i] - sum_dy - xhat[i] * sum_dy_xhat);
                            }
                        }
                    }
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *gamma, ggamma);
                    accumulate(&mut grads, *beta, gbeta);
                }
                Op::Concat { a, b } => {
                    let (sa, sb) = (self.values[a.0].shape(), self.values[b.0].shape());
                    let (na, nb) = (sa.channels * sa.plane(), sb.channels * sb.plane());
                    let mut ga = Vec::with_capacity(sa.len());
                    let mut gb = Vec::with_capacity(sb.len());
                    for chunk in gy.chunks(na + nb) {
                        ga.extend_from_slice(&chunk[..na]);
                        gb.extend_from_slice(&chunk[na..]);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MaskedSqLoss {
                    pred,
                    target,
                    mask,
                    count,
                } => {
                    let p = self.values[pred.0].values();
                    let k = 2.0 * gy[0] / *count as f64;
                    let gx = p
                        .iter()
                        .zip(target)
                        .zip(mask)
                        .map(|((&pv, &tv), &m)| if m { k * (pv - tv) } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *pred, gx);
                }
            }
        }
        Ok(Gradients {
            grads,
            params: std::mem::take(&mut self.params),
        })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, x)| *e += x),
        slot @ None => *slot = Some(g),
    }
}

/// Output indices `o` in `0..out_len` whose input position `o * stride + k - lead`
/// lies inside `0..in_len`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, k: usize, lead: usize, stride: usize) -> (usize, usize) {
    // o * stride + k >= lead
    let lo = if lead > k { (lead - k).div_ceil(stride) } else { 0 };
    // o * stride + k - lead <= in_len - 1
    let limit = in_len + lead;
    let hi = if limit > k {
        ((limit - 1 - k) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Cross-correlation. Each output accumulates `w * x` over (in channel,
/// kernel row, kernel col) in that order, then adds the bias.
pub(crate) fn conv2d_forward(x: &Tensor4, w: &Tensor4, b: &Tensor4, spec: ConvSpec) -> Result<Tensor4> {
    let (xs, ws) = (x.shape(), w.shape());
    if ws.channels != xs.channels {
        return Err(Error::shape(
            "conv2d",
            format!(
                "input channels: input {xs} has {} but weight {ws} expects {}",
                xs.channels, ws.channels
            ),
        ));
    }
    if b.shape().len() != ws.batch {
        return Err(Error::shape(
            "conv2d",
            format!("bias has {} entries for {} output channels", b.shape().len(), ws.batch),
        ));
    }
    let p = spec.padding;
    let orows = ConvSpec::out_len(xs.rows, p.top, p.bottom, ws.rows, spec.stride).ok_or_else(|| {
        Error::shape("conv2d", format!("rows: kernel {} does not fit input {xs}", ws.rows))
    })?;
    let ocols = ConvSpec::out_len(xs.cols, p.left, p.right, ws.cols, spec.stride).ok_or_else(|| {
        Error::shape("conv2d", format!("cols: kernel {} does not fit input {xs}", ws.cols))
    })?;
    let os = Shape4::new(xs.batch, ws.batch, orows, ocols);
    let kk = ws.channels * ws.rows * ws.cols;
    let mut out = vec![0.0; os.len()];
    let mut col = vec![0.0; kk * os.plane()];
    for bi in 0..xs.batch {
        im2col(x, bi, ws, os, spec, &mut col);
        let o = &mut out[os.index(bi, 0, 0, 0)..][..ws.batch * os.plane()];
        gemm_acc(ws.batch, os.plane(), kk, w.values(), &col, o);
        for (oc, plane) in o.chunks_mut(os.plane()).enumerate() {
            let bias = b.values()[oc];
            plane.iter_mut().for_each(|v| *v += bias);
        }
    }
    Tensor4::new(os, out)
}

/// Unfolds batch item `bi` of `x` into a (C*kh*kw) x (out rows*cols) matrix,
/// zero where the window hangs over the padding.
fn im2col(x: &Tensor4, bi: usize, ws: Shape4, os: Shape4, spec: ConvSpec, col: &mut [f64]) {
    let xs = x.shape();
    let (p, s) = (spec.padding, spec.stride);
    let xv = x.values();
    let plane = os.plane();
    for ic in 0..ws.channels {
        let xplane = &xv[xs.index(bi, ic, 0, 0)..][..xs.plane()];
        for kh in 0..ws.rows {
            let (r_lo, r_hi) = valid_range(os.rows, xs.rows, kh, p.top, s);
            for kw in 0..ws.cols {
                let (c_lo, c_hi) = valid_range(os.cols, xs.cols, kw, p.left, s);
                let row = &mut col[((ic * ws.rows + kh) * ws.cols + kw) * plane..][..plane];
                row.fill(0.0);
                for orow in r_lo..r_hi {
                    let ir = orow * s + kh - p.top;
                    let dst = &mut row[orow * os.cols..][..os.cols];
                    for oc_i in c_lo..c_hi {
                        dst[oc_i] = xplane[ir * xs.cols + oc_i * s + kw - p.left];
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatters a column matrix back onto batch item `bi`.
fn col2im(gcol: &[f64], bi: usize, xs: Shape4, ws: Shape4, os: Shape4, spec: ConvSpec, gx: &mut [f64]) {
    let (p, s) = (spec.padding, spec.stride);
    let plane = os.plane();
    for ic in 0..ws.channels {
        let gplane = &mut gx[xs.index(bi, ic, 0, 0)..][..xs.plane()];
        for kh in 0..ws.rows {
            let (r_lo, r_hi) = valid_range(os.rows, xs.rows, kh, p.top, s);
            for kw in 0..ws.cols {
                let (c_lo, c_hi) = valid_range(os.cols, xs.cols, kw, p.left, s);
                let row = &gcol[((ic * ws.rows + kh) * ws.cols + kw) * plane..][..plane];
                for orow in r_lo..r_hi {
                    let ir = orow * s + kh - p.top;
                    let src = &row[orow * os.cols..][..os.cols];
                    for oc_i in c_lo..c_hi {
                        gplane[ir * xs.cols + oc_i * s + kw - p.left] += src[oc_i];
                    }
                }
            }
        }
    }
}

fn conv2d_backward(
    x: &Tensor4,
    w: &Tensor4,
    os: Shape4,
    gy: &[f64],
    spec: ConvSpec,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (xs, ws) = (x.shape(), w.shape());
    let kk = ws.channels * ws.rows * ws.cols;
    let plane = os.plane();
    let mut gx = vec![0.0; xs.len()];
    let mut gw = vec![0.0; ws.len()];
    let mut gb = vec![0.0; ws.batch];
    let wt = transpose(ws.batch, kk, w.values());
    let mut col = vec![0.0; kk * plane];
    let mut gcol = vec![0.0; kk * plane];
    for bi in 0..xs.batch {
        let g = &gy[os.index(bi, 0, 0, 0)..][..ws.batch * plane];
        for (oc, gplane) in g.chunks(plane).enumerate() {
            gb[oc] += gplane.iter().sum::<f64>();
        }
        im2col(x, bi, ws, os, spec, &mut col);
        gemm_nt_acc(ws.batch, kk, plane, g, &col, &mut gw);
        gcol.fill(0.0);
        gemm_acc(kk, plane, ws.batch, &wt, g, &mut gcol);
        col2im(&gcol, bi, xs, ws, os, spec, &mut gx);
    }
    (gx, gw, gb)
}
