//! Gamma-function differences that stay accurate when the dispersion is large.

use statrs::function::gamma::{digamma, ln_gamma};

fn small_integer(y: f64) -> Option<usize> {
    (y >= 0.0 && y < 64.0 && y.fract() == 0.0).then_some(y as usize)
}

/// ln Γ(x) for x > 0.
pub fn lgamma(x: f64) -> f64 {
    ln_gamma(x)
}

/// Trigamma ψ₁(x) for x > 0, by recurrence and the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// ln Γ(θ + y) − ln Γ(θ).
pub fn lgamma_ratio(y: f64, theta: f64) -> f64 {
    if let Some(k) = small_integer(y) {
        return (0..k).map(|j| (theta + j as f64).ln()).sum();
    }
    if theta > 1e5 {
        let s = theta + y;
        return (theta - 0.5) * (y / theta).ln_1p() + y * s.ln() - y + (1.0 / s - 1.0 / theta) / 12.0;
    }
    ln_gamma(theta + y) - ln_gamma(theta)
}

/// ψ(θ + y) − ψ(θ).
pub fn digamma_ratio(y: f64, theta: f64) -> f64 {
    if let Some(k) = small_integer(y) {
        return (0..k).map(|j| 1.0 / (theta + j as f64)).sum();
    }
    if theta > 1e5 {
        let s = theta + y;
        return (y / theta).ln_1p() - 0.5 / s + 0.5 / theta - 1.0 / (12.0 * s * s) + 1.0 / (12.0 * theta * theta);
    }
    digamma(theta + y) - digamma(theta)
}

/// ψ₁(θ + y) − ψ₁(θ).
pub fn trigamma_ratio(y: f64, theta: f64) -> f64 {
    if let Some(k) = small_integer(y) {
        return -(0..k).map(|j| 1.0 / (theta + j as f64).powi(2)).sum::<f64>();
    }
    trigamma(theta + y) - trigamma(theta)
}

/// Two-sided normal tail probability of a z statistic.
pub fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2)
}
