//! Dense kernels shared by the forward and backward passes. Activations are
//! row-major `[rows × channels]`; linear weights are `[out × in]`.

use std::fmt::Debug;

use num_traits::Float;

/// Floating-point element type of a model: `f32` for training, `f64` for gradient checks.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    fn lit(x: f64) -> Self;

    /// Hyperbolic tangent used by GELU. Single precision trades the last few
    /// ulps for a form the compiler can vectorize.
    fn gelu_tanh(x: Self) -> Self;

    /// `c = alpha·a·b + beta·c` with arbitrary element strides.
    ///
    /// # Safety
    /// All strided accesses must stay inside the pointed-to buffers.
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
}

impl Scalar for f32 {
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn gelu_tanh(x: f32) -> f32 {
        // Odd 13/6 rational fit on [-7.9, 7.9]; saturates to ±1 beyond.
        let x = x.clamp(-7.905_311, 7.905_311);
        let x2 = x * x;
        let mut p = x2 * -2.760_768_5e-16 + 2.000_188e-13;
        p = x2 * p + -8.604_672e-11;
        p = x2 * p + 5.122_297e-8;
        p = x2 * p + 1.485_722_4e-5;
        p = x2 * p + 6.372_619e-4;
        p = x2 * p + 4.893_524_6e-3;
        p *= x;
        let mut q = x2 * 1.198_258_4e-6 + 1.185_347e-4;
        q = x2 * q + 2.268_434_6e-3;
        q = x2 * q + 4.893_525e-3;
        p / q
    }

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

impl Scalar for f64 {
    fn lit(x: f64) -> Self {
        x
    }

    fn gelu_tanh(x: f64) -> f64 {
        x.tanh()
    }

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

fn extent(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

/// Safe strided gemm: `c[m×n] = alpha·a[m×k]·b[k×n] + beta·c`. `c` must be dense row-major.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    beta: T,
    c: &mut [T],
) {
    assert!(extent(m, k, rsa, csa) <= a.len(), "gemm: lhs out of bounds");
    assert!(extent(k, n, rsb, csb) <= b.len(), "gemm: rhs out of bounds");
    assert!(m * n <= c.len(), "gemm: output out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: extents checked above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
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
        )
    }
}

/// `out[N×O] = inp[N×I] · wᵀ + bias`.
pub fn linear_forward<T: Scalar>(
    out: &mut [T],
    inp: &[T],
    weight: &[T],
    bias: Option<&[T]>,
    rows: usize,
    in_dim: usize,
    out_dim: usize,
) {
    gemm(
        rows,
        in_dim,
        out_dim,
        T::one(),
        inp,
        (in_dim, 1),
        weight,
        (1, in_dim),
        T::zero(),
        out,
    );
    if let Some(bias) = bias {
        for row in out[..rows * out_dim].chunks_exact_mut(out_dim) {
            for (o, &b) in row.iter_mut().zip(bias) {
                *o = *o + b;
            }
        }
    }
}

/// Accumulates gradients of [`linear_forward`] into `dinp`, `dweight` and `dbias`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    dinp: &mut [T],
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
    dout: &[T],
    inp: &[T],
    weight: &[T],
    rows: usize,
    in_dim: usize,
    out_dim: usize,
) {
    gemm(
        rows,
        out_dim,
        in_dim,
        T::one(),
        dout,
        (out_dim, 1),
        weight,
        (in_dim, 1),
        T::one(),
        dinp,
    );
    gemm(
        out_dim,
        rows,
        in_dim,
        T::one(),
        dout,
        (1, out_dim),
        inp,
        (in_dim, 1),
        T::one(),
        dweight,
    );
    if let Some(dbias) = dbias {
        for row in dout[..rows * out_dim].chunks_exact(out_dim) {
            for (db, &g) in dbias.iter_mut().zip(row) {
                *db = *db + g;
            }
        }
    }
}

pub const LN_EPS: f64 = 1e-5;

/// Per-row layer normalization; records mean and reciprocal std for the backward pass.
pub fn layernorm_forward<T: Scalar>(
    out: &mut [T],
    mean: &mut [T],
    rstd: &mut [T],
    inp: &[T],
    weight: &[T],
    bias: &[T],
    channels: usize,
) {
    let inv_c = T::lit(1.0 / channels as f64);
    for (((x, y), m), r) in inp
        .chunks_exact(channels)
        .zip(out.chunks_exact_mut(channels))
        .zip(mean.iter_mut())
        .zip(rstd.iter_mut())
    {
        let mu = x.iter().fold(T::zero(), |acc, &v| acc + v) * inv_c;
        let var = x.iter().fold(T::zero(), |acc, &v| acc + (v - mu) * (v - mu)) * inv_c;
        let s = (var + T::lit(LN_EPS)).sqrt().recip();
        for i in 0..channels {
            y[i] = (x[i] - mu) * s * weight[i] + bias[i];
        }
        *m = mu;
        *r = s;
    }
}

#[allow(clippy::too_many_arguments)]
pub fn layernorm_backward<T: Scalar>(
    dinp: &mut [T],
    dweight: &mut [T],
    dbias: &mut [T],
    dout: &[T],
    inp: &[T],
    weight: &[T],
    mean: &[T],
    rstd: &[T],
    channels: usize,
) {
    let inv_c = T::lit(1.0 / channels as f64);
    for (row, (dy, x)) in dout
        .chunks_exact(channels)
        .zip(inp.chunks_exact(channels))
        .enumerate()
    {
        let (mu, s) = (mean[row], rstd[row]);
        let mut dnorm_mean = T::zero();
        let mut dnorm_norm_mean = T::zero();
        for i in 0..channels {
            let norm = (x[i] - mu) * s;
            let dnorm = weight[i] * dy[i];
            dnorm_mean = dnorm_mean + dnorm;
            dnorm_norm_mean = dnorm_norm_mean + dnorm * norm;
        }
        dnorm_mean = dnorm_mean * inv_c;
        dnorm_norm_mean = dnorm_norm_mean * inv_c;
        let dx = &mut dinp[row * channels..(row + 1) * channels];
        for i in 0..channels {
            let norm = (x[i] - mu) * s;
            let dnorm = weight[i] * dy[i];
            dbias[i] = dbias[i] + dy[i];
            dweight[i] = dweight[i] + norm * dy[i];
            dx[i] = dx[i] + (dnorm - dnorm_mean - norm * dnorm_norm_mean) * s;
        }
    }
}

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh-approximated GELU.
pub fn gelu_forward<T: Scalar>(out: &mut [T], inp: &[T]) {
    let (half, one, k, c) = (T::lit(0.5), T::one(), T::lit(GELU_SCALE), T::lit(0.044715));
    for (y, &x) in out.iter_mut().zip(inp) {
        let cube = c * x * x * x;
        *y = half * x * (one + T::gelu_tanh(k * (x + cube)));
    }
}

pub fn gelu_backward<T: Scalar>(dinp: &mut [T], inp: &[T], dout: &[T]) {
    let (half, one, k, c) = (T::lit(0.5), T::one(), T::lit(GELU_SCALE), T::lit(0.044715));
    let three_c = T::lit(3.0 * 0.044715);
    for ((dx, &x), &dy) in dinp.iter_mut().zip(inp).zip(dout) {
        let u = k * (x + c * x * x * x);
        let th = T::gelu_tanh(u);
        let sech2 = one - th * th;
        let local = half * (one + th) + half * x * sech2 * k * (one + three_c * x * x);
        *dx = *dx + local * dy;
    }
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    let inv = sum.recip();
    for v in row.iter_mut() {
        *v = *v * inv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_naive() {
        let (rows, i_dim, o_dim) = (3, 4, 5);
        let inp: Vec<f64> = (0..rows * i_dim).map(|v| v as f64 * 0.3 - 1.0).collect();
        let w: Vec<f64> = (0..o_dim * i_dim).map(|v| (v as f64).sin()).collect();
        let b: Vec<f64> = (0..o_dim).map(|v| v as f64).collect();
        let mut out = vec![0.0; rows * o_dim];
        linear_forward(&mut out, &inp, &w, Some(&b), rows, i_dim, o_dim);
        for r in 0..rows {
            for o in 0..o_dim {
                let naive: f64 =
                    (0..i_dim).map(|i| inp[r * i_dim + i] * w[o * i_dim + i]).sum::<f64>() + b[o];
                assert!((out[r * o_dim + o] - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_precision_tanh_is_accurate() {
        let mut worst = 0.0f64;
        for i in -20_000..=20_000 {
            let x = i as f32 * 6e-4;
            worst = worst.max((f32::gelu_tanh(x) as f64 - (x as f64).tanh()).abs());
        }
        assert!(worst < 2e-6, "{worst}");
        assert!((f32::gelu_tanh(50.0) - 1.0).abs() < 2e-6);
        assert!((f32::gelu_tanh(-50.0) + 1.0).abs() < 2e-6);
    }

    #[test]
    fn layernorm_normalizes() {
        let c = 7;
        let inp: Vec<f64> = (0..3 * c).map(|v| ((v * 37 % 11) as f64) * 1.7 - 3.0).collect();
        let (w, b) = (vec![1.0; c], vec![0.0; c]);
        let mut out = vec![0.0; 3 * c];
        let (mut m, mut r) = (vec![0.0; 3], vec![0.0; 3]);
        layernorm_forward(&mut out, &mut m, &mut r, &inp, &w, &b, c);
        for row in out.chunks(c) {
            let mean: f64 = row.iter().sum::<f64>() / c as f64;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let (mut hi, mut lo) = ([0.0f64], [0.0f64]);
            gelu_forward(&mut hi, &[x + h]);
            gelu_forward(&mut lo, &[x - h]);
            let mut d = [0.0];
            gelu_backward(&mut d, &[x], &[1.0]);
            assert!((d[0] - (hi[0] - lo[0]) / (2.0 * h)).abs() < 1e-8);
        }
    }
}
