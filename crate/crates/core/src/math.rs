//! Small dense kernels over row-major `f64` slices.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out[n×m] = x[n×k] · w[k×m] + bias[m]`
pub fn affine(x: &[f64], n: usize, k: usize, w: &[f64], bias: &[f64], out: &mut [f64]) {
    let m = bias.len();
    debug_assert_eq!(x.len(), n * k);
    debug_assert_eq!(w.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    for (xr, or) in x.chunks_exact(k).zip(out.chunks_exact_mut(m)) {
        or.copy_from_slice(bias);
        for (p, &xv) in xr.iter().enumerate() {
            if xv != 0.0 {
                axpy(xv, &w[p * m..(p + 1) * m], or);
            }
        }
    }
}

/// `dw[k×m] += xᵀ · dy`, `db[m] += Σ_rows dy`
pub fn affine_param_grad(x: &[f64], k: usize, dy: &[f64], m: usize, dw: &mut [f64], db: &mut [f64]) {
    for (xr, dr) in x.chunks_exact(k).zip(dy.chunks_exact(m)) {
        for (p, &xv) in xr.iter().enumerate() {
            if xv != 0.0 {
                axpy(xv, dr, &mut dw[p * m..(p + 1) * m]);
            }
        }
        axpy(1.0, dr, db);
    }
}

/// `dx[n×k] = dy[n×m] · wᵀ`
pub fn affine_input_grad(dy: &[f64], m: usize, w: &[f64], k: usize, dx: &mut [f64]) {
    for (dr, xr) in dy.chunks_exact(m).zip(dx.chunks_exact_mut(k)) {
        for (p, out) in xr.iter_mut().enumerate() {
            *out = dot(dr, &w[p * m..(p + 1) * m]);
        }
    }
}

pub fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Numerically stable `log Σ exp`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(v.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

/// Writes `log softmax(logits)` into `out`.
pub fn log_softmax(logits: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(logits);
    for (o, l) in out.iter_mut().zip(logits) {
        *o = l - lse;
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    if v.is_empty() {
        0.0
    } else {
        libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64)
    }
}
