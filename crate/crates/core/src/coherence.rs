//! Coherence `μ = sup |w ψ_k|²`: empirical estimates, closed-form bounds,
//! truncation checks for Hermite bases and sample-count advisories.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{invalid, Result};
use crate::poly_basis::hermite::tail_mass_bound;
use crate::poly_basis::{BasisSpec, Family};
use crate::rng::rng_from_seed;
use crate::sampler::{sample, SamplingStrategy, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceEstimate {
    pub mu_hat: f64,
    pub draws: usize,
    pub strategy: SamplingStrategy,
    pub family: Family,
    pub dim: usize,
    pub order: u32,
    pub seed: u64,
}

/// Largest `(c·w(ξ)·B(ξ))²` over `M` draws of the strategy under test.
pub fn estimate_mu(
    spec: &BasisSpec,
    strategy: &SamplingStrategy,
    draws: usize,
    seed: u64,
) -> Result<CoherenceEstimate> {
    if draws < 1000 {
        return invalid("coherence estimates need at least 1000 draws");
    }
    let batch = sample(strategy, spec, draws, seed)?;
    let mut table = Vec::new();
    let mut dp = Vec::new();
    let mut mu_hat = 0.0f64;
    for i in 0..batch.len() {
        let b = spec.envelope_with(batch.point(i), &mut table, &mut dp)?;
        let v = batch.normalized_weight(i) * b;
        mu_hat = mu_hat.max(v * v);
    }
    Ok(CoherenceEstimate {
        mu_hat,
        draws,
        strategy: *strategy,
        family: spec.family(),
        dim: spec.dim(),
        order: spec.order(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuBound {
    pub value: f64,
    /// The bound holds only up to an unspecified constant or as `p → ∞`.
    pub asymptotic_only: bool,
}

/// Closed-form coherence bound for the strategy, `None` when none applies.
///
/// Legendre: `min(3^p, (2p/d+1)^d)` for standard sampling and `3^d` for
/// Chebyshev sampling. Hermite: `(e²/2)^p` for standard sampling and
/// `(2p)^{d/2}/Γ(d/2+1)` for ball sampling, both order-only. Coherence-optimal
/// sampling is bounded by the smaller of the two.
pub fn theoretical_mu_bound(spec: &BasisSpec, strategy: &SamplingStrategy) -> Option<MuBound> {
    let d = spec.dim() as f64;
    let p = spec.order() as f64;
    let standard = || match spec.family() {
        Family::Legendre => Some(MuBound {
            value: 3f64.powf(p).min((2.0 * p / d + 1.0).powf(d)),
            asymptotic_only: false,
        }),
        Family::Hermite => Some(MuBound {
            value: (2.0 - std::f64::consts::LN_2).exp().powf(p),
            asymptotic_only: true,
        }),
    };
    let asymptotic = || match spec.family() {
        Family::Legendre => Some(MuBound {
            value: 3f64.powf(d),
            asymptotic_only: false,
        }),
        Family::Hermite if spec.order() == 0 => None,
        Family::Hermite => Some(MuBound {
            value: ((0.5 * d) * (2.0 * p).ln() - ln_gamma(0.5 * d + 1.0)).exp(),
            asymptotic_only: true,
        }),
    };
    match strategy.kind {
        StrategyKind::Standard => standard(),
        StrategyKind::Asymptotic => asymptotic(),
        StrategyKind::CoherenceOptimal => match (standard(), asymptotic()) {
            (Some(a), Some(b)) => Some(if a.value <= b.value { a } else { b }),
            (a, b) => a.or(b),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub radius: f64,
    /// `P(‖Ξ‖₂ > r)` for a standard normal `Ξ`.
    pub prob_complement: f64,
    /// Monte Carlo estimate of `∑_k E[ψ_k(Ξ)² 1_{‖Ξ‖₂ > r}]`.
    pub orth_defect_sum: f64,
    /// `P · erfc(√((1−2η_p)r²))/√(1−2η_p)` from the one-dimensional tail bound,
    /// when `r` lies in the monotonic region.
    pub analytic_defect_bound: Option<f64>,
    pub n: usize,
    pub p_count: usize,
    pub satisfied: bool,
}

/// Check the two conditions on the ball `S = {‖ξ‖₂ ≤ r}` under standard
/// Hermite sampling: `P(S^c) < 1/(NP)` and `∑_k E[ψ_k² 1_{S^c}] ≤ P^{-1/2}/20`.
///
/// The defect sum is estimated by importance sampling of the tail: the
/// squared radius is drawn as `r² + 2E` with `E ~ Exp(1)` and the direction
/// uniformly, then reweighted by the chi-square density.
pub fn check_truncation(spec: &BasisSpec, n: usize, r: f64, draws: usize, seed: u64) -> Result<TruncationReport> {
    if spec.family() != Family::Hermite {
        return invalid("truncation checks apply to Hermite bases only");
    }
    if !(r > 0.0) {
        return invalid("truncation radius must be positive");
    }
    if draws == 0 {
        return invalid("truncation check needs at least one draw");
    }
    let d = spec.dim();
    let p_count = spec.len();
    let half_d = 0.5 * d as f64;

    let (prob_complement, orth_defect_sum) = if r.is_infinite() {
        (0.0, 0.0)
    } else {
        let prob = gamma_ur(half_d, 0.5 * r * r);
        // ln of g(s)/q(s) without the s-dependent factor s^{d/2-1}.
        let ln_ratio_const = std::f64::consts::LN_2 - 0.5 * r * r - half_d * std::f64::consts::LN_2 - ln_gamma(half_d);
        let mut rng = rng_from_seed(seed);
        let mut xi = vec![0.0; d];
        let mut row = vec![0.0; p_count];
        let mut table = Vec::new();
        let mut total = 0.0;
        for _ in 0..draws {
            let e: f64 = rng.sample(rand_distr::Exp1);
            let s = r * r + 2.0 * e;
            let mut nsq = 0.0;
            while nsq == 0.0 {
                for x in xi.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
                nsq = xi.iter().map(|v| v * v).sum::<f64>();
            }
            let scale = (s / nsq).sqrt();
            for x in xi.iter_mut() {
                *x *= scale;
            }
            spec.eval_row_into(&xi, &mut table, &mut row)?;
            let sum_sq: f64 = row.iter().map(|v| v * v).sum();
            total += (ln_ratio_const + (half_d - 1.0) * s.ln()).exp() * sum_sq;
        }
        (prob, total / draws as f64)
    };

    // The one-dimensional bound is stated in physicists' units, ξ = x/√2.
    let analytic_defect_bound = if r.is_finite() {
        tail_mass_bound(spec.order(), r / std::f64::consts::SQRT_2).map(|b| p_count as f64 * b)
    } else {
        Some(0.0)
    };
    let satisfied =
        prob_complement < 1.0 / (n as f64 * p_count as f64) && orth_defect_sum <= (p_count as f64).powf(-0.5) / 20.0;
    Ok(TruncationReport {
        radius: r,
        prob_complement,
        orth_defect_sum,
        analytic_defect_bound,
        n,
        p_count,
        satisfied,
    })
}

/// Non-rigorous sample count `⌈C(1+β)·μ·s·ln P⌉`; the absolute constant `C`
/// is unknown and supplied by the caller.
pub fn sample_count_advisory(mu: f64, s: usize, p_count: usize, beta: f64, c: f64) -> Result<u64> {
    if s == 0 {
        return Ok(0);
    }
    if !(mu > 0.0 && beta > 0.0 && c > 0.0) || p_count == 0 {
        return invalid("advisory inputs must be positive");
    }
    Ok((c * (1.0 + beta) * mu * s as f64 * (p_count as f64).ln()).ceil() as u64)
}

/// Regularization `λ = 10·σ_w·√(ln P / N)`.
pub fn lasso_lambda(p_count: usize, n: usize, sigma_w: f64) -> f64 {
    10.0 * sigma_w * ((p_count as f64).ln() / n as f64).sqrt()
}

/// Write `family,strategy,d,p,M,mu_hat,bound` rows; an empty bound cell
/// means none applies.
pub fn write_coherence_table<W: Write>(out: W, rows: &[(CoherenceEstimate, Option<MuBound>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "strategy", "d", "p", "M", "mu_hat", "bound"])?;
    for (est, bound) in rows {
        w.write_record([
            est.family.to_string(),
            est.strategy.kind.to_string(),
            est.dim.to_string(),
            est.order.to_string(),
            est.draws.to_string(),
            est.mu_hat.to_string(),
            bound.map(|b| b.value.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
