use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub batch: usize,
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Shape4 {
    pub const fn new(batch: usize, channels: usize, rows: usize, cols: usize) -> Self {
        Self {
            batch,
            channels,
            rows,
            cols,
        }
    }

    pub const fn scalar() -> Self {
        Self::new(1, 1, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.batch * self.channels * self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, r: usize, col: usize) -> usize {
        ((b * self.channels + c) * self.rows + r) * self.cols + col
    }
}

impl std::fmt::Display for Shape4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.batch, self.channels, self.rows, self.cols
        )
    }
}

/// Dense (batch, channel, row, col) array with optional gradient storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape4,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor4 {
    pub fn new(shape: Shape4, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape} needs {} values, got {}", shape.len(), values.len()),
            ));
        }
        Ok(Self {
            shape,
            values,
            grad: None,
        })
    }

    pub fn zeros(shape: Shape4) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
            grad: None,
        }
    }

    pub fn filled(shape: Shape4, v: f64) -> Self {
        Self {
            shape,
            values: vec![v; shape.len()],
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::filled(Shape4::scalar(), v)
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, b: usize, c: usize, r: usize, col: usize) -> f64 {
        self.values[self.shape.index(b, c, r, col)]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub(crate) fn grad_mut_or_zero(&mut self) -> &mut Vec<f64> {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn values_and_grad_mut(&mut self) -> (&mut [f64], Option<&[f64]>) {
        (&mut self.values, self.grad.as_deref())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Zero padding on each border of the spatial plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const fn uniform(p: usize) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    /// "Same" padding for a square kernel: `k / 2` on every side for odd
    /// kernels; even kernels put the extra row and column at the bottom and
    /// right.
    pub const fn same(kernel: usize) -> Self {
        let lead = (kernel - 1) / 2;
        let trail = kernel / 2;
        Self {
            top: lead,
            bottom: trail,
            left: lead,
            right: trail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub const fn new(stride: usize, padding: Padding) -> Self {
        Self { stride, padding }
    }

    pub const fn same(kernel: usize, stride: usize) -> Self {
        Self {
            stride,
            padding: Padding::same(kernel),
        }
    }

    /// Output extent along one axis, or `None` when the kernel does not fit.
    pub fn out_len(len: usize, lead: usize, trail: usize, kernel: usize, stride: usize) -> Option<usize> {
        let padded = len + lead + trail;
        if padded < kernel || stride == 0 {
            return None;
        }
        Some((padded - kernel) / stride + 1)
    }
}
