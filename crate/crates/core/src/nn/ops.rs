//! Batched layer kernels on flat `f64` buffers (sample-major, then CHW).

/// `c = alpha * a * b + beta * c` for strided row/column-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(m * n <= c.len());
    // SAFETY: the asserts above bound every element the kernel touches
    // inside `a`, `b` and the dense row-major `m x n` block of `c`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub k: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    fn out_len(&self) -> usize {
        self.oc * self.oh * self.ow
    }

    /// Output columns `[lo, hi)` whose input column `ox + kj - pad` is in range.
    fn valid_span(&self, kj: usize, out: usize, size: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kj);
        let hi = (size + self.pad).saturating_sub(kj).min(out);
        (lo, hi.max(lo))
    }
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let n = g.cols();
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &mut cols[((c * g.k + ki) * g.k + kj) * n..][..n];
                let (xlo, xhi) = g.valid_span(kj, g.ow, g.w);
                for oy in 0..g.oh {
                    let dst = &mut row[oy * g.ow..(oy + 1) * g.ow];
                    let y = oy + ki;
                    if y < g.pad || y - g.pad >= g.h {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &x[(c * g.h + y - g.pad) * g.w..][..g.w];
                    dst[..xlo].fill(0.0);
                    dst[xhi..].fill(0.0);
                    for ox in xlo..xhi {
                        dst[ox] = src[ox + kj - g.pad];
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let n = g.cols();
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &cols[((c * g.k + ki) * g.k + kj) * n..][..n];
                let (xlo, xhi) = g.valid_span(kj, g.ow, g.w);
                for oy in 0..g.oh {
                    let y = oy + ki;
                    if y < g.pad || y - g.pad >= g.h {
                        continue;
                    }
                    let dst = &mut dx[(c * g.h + y - g.pad) * g.w..][..g.w];
                    let src = &row[oy * g.ow..(oy + 1) * g.ow];
                    for ox in xlo..xhi {
                        dst[ox + kj - g.pad] += src[ox];
                    }
                }
            }
        }
    }
}

/// Weight layout `[oc][c][ki][kj]`.
pub(crate) fn conv_forward(x: &[f64], g: &ConvGeom, weight: &[f64], bias: &[f64], batch: usize) -> Vec<f64> {
    let (kr, n) = (g.rows(), g.cols());
    let mut cols = vec![0.0; kr * n];
    let mut out = vec![0.0; batch * g.out_len()];
    for b in 0..batch {
        im2col(&x[b * g.in_len()..][..g.in_len()], g, &mut cols);
        let y = &mut out[b * g.out_len()..][..g.out_len()];
        for (row, &bv) in y.chunks_exact_mut(n).zip(bias) {
            row.fill(bv);
        }
        gemm(g.oc, kr, n, weight, (kr, 1), &cols, (n, 1), 1.0, y);
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient if asked.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    weight: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    batch: usize,
    want_dx: bool,
) -> Option<Vec<f64>> {
    let (kr, n) = (g.rows(), g.cols());
    let mut cols = vec![0.0; kr * n];
    let mut dcols = if want_dx { vec![0.0; kr * n] } else { Vec::new() };
    let mut dx = if want_dx { vec![0.0; batch * g.in_len()] } else { Vec::new() };
    for b in 0..batch {
        let dyb = &dy[b * g.out_len()..][..g.out_len()];
        for (acc, row) in db.iter_mut().zip(dyb.chunks_exact(n)) {
            *acc += row.iter().sum::<f64>();
        }
        im2col(&x[b * g.in_len()..][..g.in_len()], g, &mut cols);
        // dW[oc, r] += sum_n dY[oc, n] * cols[r, n]
        gemm(g.oc, n, kr, dyb, (n, 1), &cols, (1, n), 1.0, dw);
        if want_dx {
            // dcols[r, n] = sum_oc W[oc, r] * dY[oc, n]
            gemm(kr, g.oc, n, weight, (1, kr), dyb, (n, 1), 0.0, &mut dcols);
            col2im_add(&dcols, g, &mut dx[b * g.in_len()..][..g.in_len()]);
        }
    }
    want_dx.then_some(dx)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub win: usize,
    pub oh: usize,
    pub ow: usize,
}

/// Max over each window's in-range pixels; first maximum wins ties.
/// Returns outputs and, per output, the flat in-sample index of the argmax.
pub(crate) fn maxpool_forward(x: &[f64], g: &PoolGeom, batch: usize) -> (Vec<f64>, Vec<u32>) {
    let (in_len, out_len) = (g.c * g.h * g.w, g.c * g.oh * g.ow);
    let mut out = Vec::with_capacity(batch * out_len);
    let mut arg = Vec::with_capacity(batch * out_len);
    for b in 0..batch {
        let xb = &x[b * in_len..][..in_len];
        for c in 0..g.c {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for y in oy * g.win..((oy + 1) * g.win).min(g.h) {
                        for xx in ox * g.win..((ox + 1) * g.win).min(g.w) {
                            let idx = (c * g.h + y) * g.w + xx;
                            if xb[idx] > best {
                                best = xb[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_idx as u32);
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(dy: &[f64], argmax: &[u32], g: &PoolGeom, batch: usize) -> Vec<f64> {
    let (in_len, out_len) = (g.c * g.h * g.w, g.c * g.oh * g.ow);
    let mut dx = vec![0.0; batch * in_len];
    for b in 0..batch {
        let dxb = &mut dx[b * in_len..][..in_len];
        for (&d, &a) in dy[b * out_len..][..out_len].iter().zip(&argmax[b * out_len..][..out_len]) {
            dxb[a as usize] += d;
        }
    }
    dx
}

/// Weight layout `[out][in]`.
pub(crate) fn dense_forward(x: &[f64], n_in: usize, n_out: usize, weight: &[f64], bias: &[f64], batch: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        out.extend_from_slice(bias);
    }
    // Y[b, o] += sum_i X[b, i] * W[o, i]
    gemm(batch, n_in, n_out, x, (n_in, 1), weight, (1, n_in), 1.0, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    x: &[f64],
    dy: &[f64],
    n_in: usize,
    n_out: usize,
    weight: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    batch: usize,
    want_dx: bool,
) -> Option<Vec<f64>> {
    for row in dy.chunks_exact(n_out) {
        for (acc, &d) in db.iter_mut().zip(row) {
            *acc += d;
        }
    }
    // dW[o, i] += sum_b dY[b, o] * X[b, i]
    gemm(n_out, batch, n_in, dy, (1, n_out), x, (n_in, 1), 1.0, dw);
    want_dx.then(|| {
        let mut dx = vec![0.0; batch * n_in];
        // dX[b, i] = sum_o dY[b, o] * W[o, i]
        gemm(batch, n_out, n_in, dy, (n_out, 1), weight, (n_in, 1), 0.0, &mut dx);
        dx
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct cross-correlation, one output at a time.
    fn conv_reference(x: &[f64], g: &ConvGeom, weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.oc * g.oh * g.ow];
        for o in 0..g.oc {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut acc = bias[o];
                    for c in 0..g.c {
                        for ki in 0..g.k {
                            for kj in 0..g.k {
                                let y = (oy + ki) as isize - g.pad as isize;
                                let xx = (ox + kj) as isize - g.pad as isize;
                                if y < 0 || xx < 0 || y >= g.h as isize || xx >= g.w as isize {
                                    continue;
                                }
                                acc += weight[((o * g.c + c) * g.k + ki) * g.k + kj]
                                    * x[(c * g.h + y as usize) * g.w + xx as usize];
                            }
                        }
                    }
                    out[(o * g.oh + oy) * g.ow + ox] = acc;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, salt: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + salt) * 0.754877666).fract() - 0.5).collect()
    }

    #[test]
    fn conv_matches_direct_loops() {
        for (pad, oh, ow) in [(0, 3, 4), (1, 5, 6)] {
            let g = ConvGeom { c: 2, h: 5, w: 6, oc: 3, k: 3, pad, oh, ow };
            let x = pseudo(2 * 60, 0.3);
            let w = pseudo(3 * 18, 1.7);
            let b = vec![0.1, -0.2, 0.3];
            let out = conv_forward(&x, &g, &w, &b, 2);
            for s in 0..2 {
                let expect = conv_reference(&x[s * 60..(s + 1) * 60], &g, &w, &b);
                for (a, e) in out[s * g.out_len()..(s + 1) * g.out_len()].iter().zip(&expect) {
                    assert!((a - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_partial_windows() {
        let g = PoolGeom { c: 1, h: 3, w: 3, win: 2, oh: 2, ow: 2 };
        let x = [1.0, 5.0, 2.0, 3.0, 4.0, 9.0, 8.0, 7.0, 6.0];
        let (out, arg) = maxpool_forward(&x, &g, 1);
        assert_eq!(out, vec![5.0, 9.0, 8.0, 6.0]);
        assert_eq!(arg, vec![1, 5, 6, 8]);
        let dx = maxpool_backward(&[1.0, 2.0, 3.0, 4.0], &arg, &g, 1);
        assert_eq!(dx, vec![0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 3.0, 0.0, 4.0]);
    }

    #[test]
    fn dense_matches_loops() {
        let (n_in, n_out, batch) = (4, 3, 2);
        let x = pseudo(batch * n_in, 0.1);
        let w = pseudo(n_out * n_in, 0.9);
        let b = vec![1.0, 2.0, 3.0];
        let y = dense_forward(&x, n_in, n_out, &w, &b, batch);
        for s in 0..batch {
            for o in 0..n_out {
                let e: f64 = b[o] + (0..n_in).map(|i| w[o * n_in + i] * x[s * n_in + i]).sum::<f64>();
                assert!((y[s * n_out + o] - e).abs() < 1e-12);
            }
        }
    }
}
