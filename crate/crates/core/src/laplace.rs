//! Numerical inverse Laplace transforms: the fixed Talbot contour for
//! transforms that extend to the complex plane, Gaver–Stehfest for
//! transforms known only on the positive axis.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Talbot orders compared for the instability flag.
pub const TALBOT_ORDERS: (usize, usize) = (24, 32);
/// Gaver–Stehfest orders compared for the instability flag.
pub const STEHFEST_ORDERS: (usize, usize) = (14, 16);
/// Relative disagreement between the two orders that flags instability.
pub const INSTABILITY_REL: f64 = 0.01;
/// Absolute disagreement always tolerated (values at the noise floor).
pub const INSTABILITY_ABS: f64 = 1e-9;

/// Fixed Talbot inversion with `m` nodes at time `t > 0`.
///
/// Contour `s(θ) = r θ (cot θ + i)`, `r = 2m / (5t)`.
pub fn talbot<F: Fn(Complex64) -> Complex64>(f: F, t: f64, m: usize) -> f64 {
    let r = 2.0 * m as f64 / (5.0 * t);
    let mut sum = 0.5 * (f(Complex64::new(r, 0.0)) * (r * t).exp()).re;
    for k in 1..m {
        let theta = k as f64 * PI / m as f64;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        sum += ((s * t).exp() * f(s) * Complex64::new(1.0, sigma)).re;
    }
    r / m as f64 * sum
}

/// Gaver–Stehfest weights `V_k`, `k = 1..=n` (`n` even).
pub fn stehfest_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    let fact = |k: usize| (1..=k).fold(1.0, |acc, j| acc * j as f64);
    (1..=n)
        .map(|k| {
            let mut v = 0.0;
            for j in k.div_ceil(2)..=k.min(half) {
                v += (j as f64).powi(half as i32) * fact(2 * j)
                    / (fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k));
            }
            if (k + half) % 2 == 1 {
                -v
            } else {
                v
            }
        })
        .collect()
}

/// Gaver–Stehfest inversion of order `n` at `t > 0`.
pub fn gaver_stehfest<F: Fn(f64) -> f64>(f: F, t: f64, n: usize) -> f64 {
    let w = stehfest_weights(n);
    let a = LN_2 / t;
    a * w
        .iter()
        .enumerate()
        .map(|(i, v)| v * f((i + 1) as f64 * a))
        .sum::<f64>()
}

fn compare(t: f64, tau: f64, low: f64, high: f64) -> Result<f64> {
    if (low - high).abs() > INSTABILITY_REL * high.abs() + INSTABILITY_ABS {
        return Err(Error::InversionInstability { t, tau, low, high });
    }
    Ok(high)
}

/// Talbot at both orders; errors when they disagree. `tau` is only
/// recorded in the error.
pub fn talbot_checked<F: Fn(Complex64) -> Complex64>(f: F, t: f64, tau: f64) -> Result<f64> {
    check_time(t)?;
    let low = talbot(&f, t, TALBOT_ORDERS.0);
    let high = talbot(&f, t, TALBOT_ORDERS.1);
    compare(t, tau, low, high)
}

/// Gaver–Stehfest at both orders; errors when they disagree.
pub fn gaver_stehfest_checked<F: Fn(f64) -> f64>(f: F, t: f64, tau: f64) -> Result<f64> {
    check_time(t)?;
    let low = gaver_stehfest(&f, t, STEHFEST_ORDERS.0);
    let high = gaver_stehfest(&f, t, STEHFEST_ORDERS.1);
    compare(t, tau, low, high)
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("inversion time must be positive, got {t}")))
    }
}
