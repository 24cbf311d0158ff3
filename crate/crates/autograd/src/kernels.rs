//! Raw f32 compute kernels shared by the tape ops.
//!
//! All kernels fully overwrite their output buffers unless the name says
//! `_acc` (accumulate). Buffers may arrive with stale contents from the
//! tape's buffer pool, so no kernel may read its own output before writing.

/// c = a @ b, row-major, a: [m,k], b: [k,n], c: [m,n].
pub fn sgemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c += a @ b^T where a: [m,n], b: [k,n] row-major, c: [m,k].
pub fn sgemm_abt_acc(m: usize, n: usize, k: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    unsafe {
        matrixmultiply::sgemm(
            m,
            n,
            k,
            1.0,
            a.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            1,
            n as isize,
            1.0,
            c.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// c += a^T @ b where a: [m,k], b: [m,n] row-major, c: [k,n].
pub fn sgemm_atb_acc(k: usize, m: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    unsafe {
        matrixmultiply::sgemm(
            k,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            b.as_ptr(),
            n as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)
pub const GELU_A: f32 = 0.044_715;

/// General strided sgemm: c = alpha * a @ b + beta * c.
/// Strides are element counts per row/column step; callers guarantee the
/// strided views stay inside the slices.
#[allow(clippy::too_many_arguments)]
pub fn sgemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    unsafe {
        matrixmultiply::sgemm(
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
            rsc as isize,
            csc as isize,
        );
    }
}

#[inline]
pub fn gelu_scalar(x: f32) -> f32 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad_scalar(x: f32) -> f32 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn gelu(x: &[f32], y: &mut [f32]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = gelu_scalar(xi);
    }
}

pub fn gelu_backward_acc(x: &[f32], dy: &[f32], dx: &mut [f32]) {
    for ((dxi, &xi), &dyi) in dx.iter_mut().zip(x).zip(dy) {
        *dxi += dyi * gelu_grad_scalar(xi);
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(rows: usize, cols: usize, x: &[f32], y: &mut [f32]) {
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let yr = &mut y[r * cols..(r + 1) * cols];
        softmax_row(xr, yr);
    }
}

#[inline]
pub fn softmax_row(x: &[f32], y: &mut [f32]) {
    let m = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut s = 0.0f32;
    for (yi, &xi) in y.iter_mut().zip(x) {
        let e = (xi - m).exp();
        *yi = e;
        s += e;
    }
    let inv = 1.0 / s;
    for yi in y.iter_mut() {
        *yi *= inv;
    }
}

/// dx += y .* (dy - sum(dy .* y)) per row, given y = softmax(x).
pub fn softmax_rows_backward_acc(rows: usize, cols: usize, y: &[f32], dy: &[f32], dx: &mut [f32]) {
    for r in 0..rows {
        let yr = &y[r * cols..(r + 1) * cols];
        let dyr = &dy[r * cols..(r + 1) * cols];
        let dxr = &mut dx[r * cols..(r + 1) * cols];
        let dot: f32 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
        for ((dxi, &yi), &dyi) in dxr.iter_mut().zip(yr).zip(dyr) {
            *dxi += yi * (dyi - dot);
        }
    }
}

pub const LN_EPS: f32 = 1e-5;

/// y = gamma .* (x - mean) * rstd + beta per row; saves [mean, rstd] pairs.
pub fn layernorm(
    rows: usize,
    cols: usize,
    x: &[f32],
    gamma: &[f32],
    beta: &[f32],
    y: &mut [f32],
    mean_rstd: &mut [f32],
) {
    let n = cols as f32;
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let mean = xr.iter().sum::<f32>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        mean_rstd[2 * r] = mean;
        mean_rstd[2 * r + 1] = rstd;
        let yr = &mut y[r * cols..(r + 1) * cols];
        for c in 0..cols {
            yr[c] = gamma[c] * (xr[c] - mean) * rstd + beta[c];
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn layernorm_backward_acc(
    rows: usize,
    cols: usize,
    x: &[f32],
    gamma: &[f32],
    mean_rstd: &[f32],
    dy: &[f32],
    dx: &mut [f32],
    dgamma: &mut [f32],
    dbeta: &mut [f32],
) {
    let n = cols as f32;
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let dyr = &dy[r * cols..(r + 1) * cols];
        let dxr = &mut dx[r * cols..(r + 1) * cols];
        let mean = mean_rstd[2 * r];
        let rstd = mean_rstd[2 * r + 1];
        let mut sum_dyg = 0.0f32;
        let mut sum_dyg_xhat = 0.0f32;
        for c in 0..cols {
            let xhat = (xr[c] - mean) * rstd;
            let dyg = dyr[c] * gamma[c];
            sum_dyg += dyg;
            sum_dyg_xhat += dyg * xhat;
        }
        sum_dyg /= n;
        sum_dyg_xhat /= n;
        for c in 0..cols {
            let xhat = (xr[c] - mean) * rstd;
            let dyg = dyr[c] * gamma[c];
            dxr[c] += rstd * (dyg - sum_dyg - xhat * sum_dyg_xhat);
            dgamma[c] += dyr[c] * xhat;
            dbeta[c] += dyr[c];
        }
    }
}
