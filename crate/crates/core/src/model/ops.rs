//! Dense row-major kernels shared by the forward and backward passes.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the network can be evaluated in.
///
/// Training runs in `f32`; `f64` exists for gradient checking.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    /// `c = alpha * a * b + beta * c` with explicit element strides.
    ///
    /// # Safety
    /// Strides must keep every addressed element inside the given pointers'
    /// allocations; see [`gemm`] for the checked wrapper.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("finite cast")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Strided view of a row-major buffer.
#[derive(Clone, Copy)]
pub struct View<'a, F> {
    pub data: &'a [F],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, F> View<'a, F> {
    pub fn new(data: &'a [F], rows: usize, cols: usize) -> Self {
        View { data, rows, cols, rs: cols, cs: 1 }
    }

    /// Column block `[c0, c0 + width)` of a `rows x stride` matrix.
    pub fn cols(data: &'a [F], rows: usize, stride: usize, c0: usize, width: usize) -> Self {
        View { data: &data[c0..], rows, cols: width, rs: stride, cs: 1 }
    }

    pub fn t(self) -> Self {
        View { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// Mutable strided view.
pub struct ViewMut<'a, F> {
    pub data: &'a mut [F],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, F> ViewMut<'a, F> {
    pub fn new(data: &'a mut [F], rows: usize, cols: usize) -> Self {
        ViewMut { data, rows, cols, rs: cols, cs: 1 }
    }

    pub fn cols(data: &'a mut [F], rows: usize, stride: usize, c0: usize, width: usize) -> Self {
        ViewMut { data: &mut data[c0..], rows, cols: width, rs: stride, cs: 1 }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// `c = alpha * a b + beta * c`.
pub fn gemm<F: Real>(alpha: F, a: View<'_, F>, b: View<'_, F>, beta: F, c: ViewMut<'_, F>) {
    assert_eq!(a.cols, b.rows, "inner dimensions");
    assert_eq!(a.rows, c.rows, "output rows");
    assert_eq!(b.cols, c.cols, "output cols");
    assert!(a.span() <= a.data.len() && b.span() <= b.data.len() && c.span() <= c.data.len());
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    // SAFETY: the span checks above bound every addressed element.
    unsafe {
        F::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        )
    }
}

/// `y = x w + b` for `x: n x din`, `w: din x dout`.
pub fn linear<F: Real>(x: &[F], n: usize, din: usize, w: &[F], b: &[F], dout: usize) -> Vec<F> {
    let mut y = Vec::with_capacity(n * dout);
    for _ in 0..n {
        y.extend_from_slice(b);
    }
    gemm(F::one(), View::new(x, n, din), View::new(w, din, dout), F::one(), ViewMut::new(&mut y, n, dout));
    y
}

/// Backward of [`linear`]: accumulates `dw += x^T dy`, `db += colsum(dy)` and
/// returns `dx = dy w^T` when requested.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<F: Real>(
    x: &[F],
    n: usize,
    din: usize,
    w: &[F],
    dy: &[F],
    dout: usize,
    dw: &mut [F],
    db: &mut [F],
    want_dx: bool,
) -> Option<Vec<F>> {
    gemm(
        F::one(),
        View::new(x, n, din).t(),
        View::new(dy, n, dout),
        F::one(),
        ViewMut::new(dw, din, dout),
    );
    for row in dy.chunks_exact(dout) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += *v;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![F::zero(); n * din];
        gemm(F::one(), View::new(dy, n, dout), View::new(w, din, dout).t(), F::zero(), ViewMut::new(&mut dx, n, din));
        dx
    })
}

pub fn relu<F: Real>(x: &[F]) -> Vec<F> {
    x.iter().map(|&v| if v > F::zero() { v } else { F::zero() }).collect()
}

/// Masks `dy` by the sign of the pre-activation.
pub fn relu_backward<F: Real>(pre: &[F], dy: &mut [F]) {
    for (g, &p) in dy.iter_mut().zip(pre) {
        if p <= F::zero() {
            *g = F::zero();
        }
    }
}

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer normalization. Returns the output together with the
/// normalized input and reciprocal standard deviations kept for backward.
pub fn layer_norm<F: Real>(x: &[F], width: usize, gain: &[F], bias: &[F]) -> (Vec<F>, Vec<F>, Vec<F>) {
    let n = x.len() / width;
    let eps = F::cast(LN_EPS);
    let wf = F::from_usize(width).unwrap();
    let mut y = vec![F::zero(); x.len()];
    let mut xhat = vec![F::zero(); x.len()];
    let mut rstd = Vec::with_capacity(n);
    for ((row, yrow), hrow) in x
        .chunks_exact(width)
        .zip(y.chunks_exact_mut(width))
        .zip(xhat.chunks_exact_mut(width))
    {
        let mean = row.iter().copied().sum::<F>() / wf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / wf;
        let r = (var + eps).sqrt().recip();
        for j in 0..width {
            let h = (row[j] - mean) * r;
            hrow[j] = h;
            yrow[j] = h * gain[j] + bias[j];
        }
        rstd.push(r);
    }
    (y, xhat, rstd)
}

pub fn layer_norm_backward<F: Real>(
    xhat: &[F],
    rstd: &[F],
    width: usize,
    gain: &[F],
    dy: &[F],
    dgain: &mut [F],
    dbias: &mut [F],
) -> Vec<F> {
    let wf = F::from_usize(width).unwrap();
    let mut dx = vec![F::zero(); dy.len()];
    let mut dh = vec![F::zero(); width];
    for (((hrow, dyrow), dxrow), &r) in xhat
        .chunks_exact(width)
        .zip(dy.chunks_exact(width))
        .zip(dx.chunks_exact_mut(width))
        .zip(rstd)
    {
        let mut sum_dh = F::zero();
        let mut sum_dh_h = F::zero();
        for j in 0..width {
            dgain[j] += dyrow[j] * hrow[j];
            dbias[j] += dyrow[j];
            dh[j] = dyrow[j] * gain[j];
            sum_dh += dh[j];
            sum_dh_h += dh[j] * hrow[j];
        }
        for j in 0..width {
            dxrow[j] = r * (dh[j] - (sum_dh + hrow[j] * sum_dh_h) / wf);
        }
    }
    dx
}

/// In-place numerically stable softmax of one row.
pub fn softmax_in_place<F: Real>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Given softmax output `p` and upstream `dp`, overwrites `dp` with the
/// gradient with respect to the softmax input.
pub fn softmax_backward_in_place<F: Real>(p: &[F], dp: &mut [F]) {
    let dot: F = p.iter().zip(dp.iter()).map(|(&a, &b)| a * b).sum();
    for (g, &pv) in dp.iter_mut().zip(p) {
        *g = pv * (*g - dot);
    }
}

/// `log(sum(exp(row)))`.
pub fn log_sum_exp<F: Real>(row: &[F]) -> F {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<F>().ln()
}
