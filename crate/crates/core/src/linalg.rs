//! Small dense factorizations used by the solvers.

/// Least squares `min ‖Mx − b‖₂` for a row-major `n × k` matrix by
/// Householder QR. `None` if `M` is numerically rank deficient.
pub(crate) fn lstsq(m: &[f64], n: usize, k: usize, b: &[f64]) -> Option<Vec<f64>> {
    if k == 0 {
        return Some(Vec::new());
    }
    if k > n {
        return None;
    }
    let mut a = m.to_vec();
    let mut y = b.to_vec();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut v = vec![0.0; n];
    for j in 0..k {
        let mut norm = 0.0;
        for i in j..n {
            norm += a[i * k + j] * a[i * k + j];
        }
        let norm = norm.sqrt();
        if norm <= 1e-13 * scale {
            return None;
        }
        let alpha = if a[j * k + j] > 0.0 { -norm } else { norm };
        for i in j..n {
            v[i] = a[i * k + j];
        }
        v[j] -= alpha;
        let vnorm_sq: f64 = (j..n).map(|i| v[i] * v[i]).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        for c in j..k {
            let s: f64 = (j..n).map(|i| v[i] * a[i * k + c]).sum::<f64>() * 2.0 / vnorm_sq;
            for i in j..n {
                a[i * k + c] -= s * v[i];
            }
        }
        let s: f64 = (j..n).map(|i| v[i] * y[i]).sum::<f64>() * 2.0 / vnorm_sq;
        for i in j..n {
            y[i] -= s * v[i];
        }
    }
    let mut x = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = y[j];
        for c in j + 1..k {
            s -= a[j * k + c] * x[c];
        }
        x[j] = s / a[j * k + j];
    }
    Some(x)
}

/// Solve `Gx = r` for symmetric positive definite `k × k` `G` by Cholesky.
pub(crate) fn cholesky_solve(g: &[f64], k: usize, r: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = g[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if s <= 1e-14 * g[i * k + i].abs().max(f64::MIN_POSITIVE) {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut s = r[i];
        for p in 0..i {
            s -= l[i * k + p] * y[p];
        }
        y[i] = s / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for p in i + 1..k {
            s -= l[p * k + i] * x[p];
        }
        x[i] = s / l[i * k + i];
    }
    Some(x)
}
