//! Dense kernels behind conv2d.
//!
//! `gemm_acc` accumulates each output element over `k` in increasing order
//! with one rounding per multiply and one per add, so a convolution written
//! as im2col + `gemm_acc` sums exactly like the direct loop.

const MR: usize = 4;
const NR: usize = 8;

/// `c (m x n) += a (m x k) * b (k x n)`, all row-major.
pub(crate) fn gemm_acc(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    const NC: usize = 8 * NR;
    let full_rows = m - m % MR;
    let tiles = n / NR;
    let mut packed = vec![[0.0f64; NR]; tiles * k];
    for t in 0..tiles {
        for p in 0..k {
            packed[t * k + p].copy_from_slice(&b[p * n + t * NR..][..NR]);
        }
    }
    let mut j0 = 0;
    while j0 < tiles * NR {
        let j1 = (j0 + NC).min(tiles * NR);
        let mut i = 0;
        while i < full_rows {
            for j in (j0..j1).step_by(NR) {
                tile(i, j, n, k, a, &packed[(j / NR) * k..][..k], c);
            }
            i += MR;
        }
        for r in full_rows..m {
            edge_row(r, j0, j1, n, k, a, b, c);
        }
        j0 = j1;
    }
    if tiles * NR < n {
        for r in 0..m {
            edge_row(r, tiles * NR, n, n, k, a, b, c);
        }
    }
}

#[inline(always)]
fn tile(i: usize, j: usize, n: usize, k: usize, a: &[f64], panel: &[[f64; NR]], c: &mut [f64]) {
    let mut acc = [[0.0f64; NR]; MR];
    for (r, row) in acc.iter_mut().enumerate() {
        row.copy_from_slice(&c[(i + r) * n + j..][..NR]);
    }
    let rows: [&[f64]; MR] = std::array::from_fn(|r| &a[(i + r) * k..][..k]);
    for (p, bv) in panel.iter().enumerate() {
        for (r, row) in acc.iter_mut().enumerate() {
            let av = rows[r][p];
            for q in 0..NR {
                row[q] += av * bv[q];
            }
        }
    }
    for (r, row) in acc.iter().enumerate() {
        c[(i + r) * n + j..][..NR].copy_from_slice(row);
    }
}

#[allow(clippy::too_many_arguments)]
fn edge_row(r: usize, j0: usize, j1: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    let crow = &mut c[r * n + j0..r * n + j1];
    for p in 0..k {
        let av = a[r * k + p];
        for (cv, &bv) in crow.iter_mut().zip(&b[p * n + j0..p * n + j1]) {
            *cv += av * bv;
        }
    }
}

/// `c (m x n) += a (m x k) * b^T` with `b` stored row-major as (n x k).
/// Summation order differs from `gemm_acc`; only used for gradients.
pub(crate) fn gemm_nt_acc(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    const L: usize = 4;
    let chunks = k / L;
    let mut i = 0;
    while i < m {
        let ri = (m - i).min(4);
        let mut j = 0;
        while j < n {
            let rj = (n - j).min(2);
            let mut acc = [[[0.0f64; L]; 2]; 4];
            for ch in 0..chunks {
                let o = ch * L;
                for (jj, acc_j) in (0..rj).zip(0..2) {
                    let bv: &[f64; L] = b[(j + jj) * k + o..][..L].try_into().unwrap();
                    for ii in 0..ri {
                        let av: &[f64; L] = a[(i + ii) * k + o..][..L].try_into().unwrap();
                        let lane = &mut acc[ii][acc_j];
                        for q in 0..L {
                            lane[q] += av[q] * bv[q];
                        }
                    }
                }
            }
            for ii in 0..ri {
                for jj in 0..rj {
                    let lane = acc[ii][jj];
                    let mut sum = (lane[0] + lane[1]) + (lane[2] + lane[3]);
                    for p in chunks * L..k {
                        sum += a[(i + ii) * k + p] * b[(j + jj) * k + p];
                    }
                    c[(i + ii) * n + j + jj] += sum;
                }
            }
            j += rj;
        }
        i += ri;
    }
}

/// Row-major transpose of a `rows x cols` matrix.
pub(crate) fn transpose(rows: usize, cols: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}
