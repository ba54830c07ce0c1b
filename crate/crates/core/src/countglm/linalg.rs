//! Dense symmetric positive-definite helpers for the small normal systems.

/// In-place lower Cholesky factor of a row-major `p × p` matrix. On failure
/// returns the first column whose pivot vanished after diagonal scaling.
pub fn cholesky(a: &mut [f64], p: usize) -> Result<(), usize> {
    let scale: Vec<f64> = (0..p).map(|i| a[i * p + i].abs().max(f64::MIN_POSITIVE)).collect();
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 1e-13 * scale[j]) || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    for i in 0..p {
        for j in i + 1..p {
            a[i * p + j] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`].
pub fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            y[i] -= l[i * p + k] * y[k];
        }
        y[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            y[i] -= l[k * p + i] * y[k];
        }
        y[i] /= l[i * p + i];
    }
    y
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(a: &[f64], p: usize) -> Result<Vec<f64>, usize> {
    let mut l = a.to_vec();
    cholesky(&mut l, p)?;
    let mut inv = vec![0.0; p * p];
    let mut e = vec![0.0; p];
    for j in 0..p {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(&l, p, &e);
        for i in 0..p {
            inv[i * p + j] = col[i];
        }
    }
    Ok(inv)
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &[f64], p: usize, b: &[f64]) -> Result<Vec<f64>, usize> {
    let mut l = a.to_vec();
    cholesky(&mut l, p)?;
    Ok(cholesky_solve(&l, p, b))
}

/// Fills the upper triangle from the lower one.
pub fn symmetrize_from_lower(a: &mut [f64], p: usize) {
    for i in 0..p {
        for j in i + 1..p {
            a[i * p + j] = a[j * p + i];
        }
    }
}
