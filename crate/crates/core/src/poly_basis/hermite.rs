//! Hermite-specific quantities behind the coherence analysis.
//!
//! The asymptotic results are stated for physicists' orthonormal polynomials
//! (weight `π^{-1/2} e^{-x²}`). They relate to the probabilists' ones used
//! everywhere else by `ψ^{phys}_k(x) = ψ^{prob}_k(√2 x)`.

use statrs::function::gamma::ln_gamma;

use super::{eval_1d, Family};
use crate::error::{PceError, Result};

/// Physicists' orthonormal `ψ_k(x)` and its derivative, from
/// `√(2(k+1)) ψ_{k+1} = 2x ψ_k − √(2k) ψ_{k−1}` differentiated term by term.
pub fn physicists_with_derivative(k: u32, x: f64) -> (f64, f64) {
    let (mut p_prev, mut p) = (0.0, 1.0);
    let (mut d_prev, mut d) = (0.0, 0.0);
    for j in 0..k {
        let jf = j as f64;
        let scale = (2.0 * (jf + 1.0)).sqrt();
        let root = (2.0 * jf).sqrt();
        let p_next = (2.0 * x * p - root * p_prev) / scale;
        let d_next = (2.0 * p + 2.0 * x * d - root * d_prev) / scale;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Physicists' orthonormal polynomial through the probabilists' recurrence.
pub fn physicists(k: u32, x: f64) -> f64 {
    eval_1d(Family::Hermite, k, std::f64::consts::SQRT_2 * x)
}

/// Hermite function `e^{-ξ²/4} ψ_k(ξ)` in the probabilists' normalization.
pub fn hermite_function(k: u32, xi: f64) -> f64 {
    (-0.25 * xi * xi).exp() * eval_1d(Family::Hermite, k, xi)
}

/// `log C_k` with `C_k = √(2^k k!)`, the physicists' normalizing constant.
pub fn log_norm_constant(k: u32) -> f64 {
    0.5 * (k as f64 * std::f64::consts::LN_2 + ln_gamma(k as f64 + 1.0))
}

/// Exponent `η_k(ξ)` with `|ψ_k(ξ)| ≈ exp(η_k(ξ) ξ²)` in the monotonic
/// region `ξ² > 2k` (physicists' convention):
///
/// `η = ½ − σ/(2ξ) − log C_k/ξ² − k/(2ξ²) + k log(σ+ξ)/ξ² + log(½(1+ξ/σ))/(2ξ²)`,
/// `σ = √(ξ² − 2k)`.
pub fn eta_k(k: u32, xi: f64) -> Result<f64> {
    let x = xi.abs();
    let kf = k as f64;
    if k == 0 || !(x * x > 2.0 * kf) {
        return Err(PceError::Domain {
            point: vec![xi],
            reason: format!("eta_k needs k >= 1 and xi^2 > 2k (k = {k})"),
        });
    }
    let x2 = x * x;
    let sigma = (x2 - 2.0 * kf).sqrt();
    Ok(0.5 - sigma / (2.0 * x) - log_norm_constant(k) / x2 - kf / (2.0 * x2)
        + kf * (sigma + x).ln() / x2
        + (0.5 * (1.0 + x / sigma)).ln() / (2.0 * x2))
}

/// Large-`k` limit of `η_k(√((2+ε)k+1))` as stated alongside the exponent.
pub fn eta_limit_stated(epsilon: f64) -> f64 {
    0.5 - std::f64::consts::LN_2 / (2.0 * (2.0 + epsilon))
}

/// Large-`k` limit obtained by expanding [`eta_k`] with Stirling's formula.
pub fn eta_limit_expanded(epsilon: f64) -> f64 {
    let a = 2.0 + epsilon;
    0.5 - (epsilon * a).sqrt() / (2.0 * a) + ((epsilon.sqrt() + a.sqrt()).ln() - 0.5 * std::f64::consts::LN_2) / a
}

/// Region shapes of the oscillatory/boundary bounds for physicists'
/// orthonormal `|ψ_k(ξ)|`, with the unspecified constant set to one.
/// `None` in the monotonic region.
pub fn table_bound_shape(k: u32, xi: f64) -> Option<f64> {
    let n = 2.0 * k as f64 + 1.0;
    let x = xi.abs();
    let edge = n.sqrt();
    let band = n.powf(-1.0 / 6.0);
    if x <= edge - band {
        Some(n.powf(-0.125) * (edge - x).powf(-0.25) * (0.5 * x * x).exp())
    } else if x <= edge + band {
        Some(n.powf(-1.0 / 12.0) * (0.5 * x * x).exp())
    } else {
        None
    }
}

/// Upper bound on `∫_{|ξ|>r} ψ_k² π^{-1/2} e^{-ξ²} dξ` for `k ≤ p` with the
/// vanishing correction dropped: `erfc(√((1−2η_p(r))r²)) / √(1−2η_p(r))`.
pub fn tail_mass_bound(p: u32, r: f64) -> Option<f64> {
    let eta = eta_k(p, r).ok()?;
    let a = 1.0 - 2.0 * eta;
    if a <= 0.0 {
        return None;
    }
    Some(statrs::function::erf::erfc((a * r * r).sqrt()) / a.sqrt())
}
