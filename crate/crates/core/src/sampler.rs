//! Input-point generation under standard, asymptotic and coherence-optimal
//! sampling, together with the matching weight function `w(ξ)`.
//!
//! Weights are stored as the raw functions `1`, `exp(−‖ξ‖²/4)`,
//! `∏(1−ξᵢ²)^{1/4}` and `1/B(ξ)`. Each batch also carries one positive
//! normalization constant `c` such that `c·w(ξ)ψ_j(ξ)` is orthonormal under
//! the sampling density. Row scaling by a constant does not change the
//! minimizer of the δ = 0 problem, but it puts coherence values and Gram
//! matrices on the scale where the stated bounds apply.

use std::io::Write;

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, PceError, Result};
use crate::poly_basis::{BasisSpec, Family};
use crate::rng::{derive_seed, rng_from_seed, PceRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Standard,
    Asymptotic,
    CoherenceOptimal,
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyKind::Standard => "standard",
            StrategyKind::Asymptotic => "asymptotic",
            StrategyKind::CoherenceOptimal => "coherence_optimal",
        })
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = PceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "standard" => Ok(StrategyKind::Standard),
            "asymptotic" => Ok(StrategyKind::Asymptotic),
            "coherence_optimal" | "co" => Ok(StrategyKind::CoherenceOptimal),
            other => Err(PceError::InvalidArgument(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Proposal distribution of the independence sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// Asymptotic when `p > d`, standard otherwise.
    #[default]
    Auto,
    Standard,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub burn_in: usize,
    /// Chain steps per kept sample; 100 keeps one state and discards 99.
    pub thinning: usize,
    /// Mixed into the batch seed, so that different configs give different chains.
    pub seed: u64,
    pub proposal: Proposal,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burn_in: 1000,
            thinning: 100,
            seed: 0,
            proposal: Proposal::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplingStrategy {
    pub kind: StrategyKind,
    pub mcmc: Option<McmcConfig>,
}

impl SamplingStrategy {
    pub fn standard() -> Self {
        SamplingStrategy {
            kind: StrategyKind::Standard,
            mcmc: None,
        }
    }

    pub fn asymptotic() -> Self {
        SamplingStrategy {
            kind: StrategyKind::Asymptotic,
            mcmc: None,
        }
    }

    pub fn coherence_optimal(config: McmcConfig) -> Self {
        SamplingStrategy {
            kind: StrategyKind::CoherenceOptimal,
            mcmc: Some(config),
        }
    }

    /// Strategy of the given kind, using default chain settings where needed.
    pub fn from_kind(kind: StrategyKind) -> Self {
        match kind {
            StrategyKind::Standard => Self::standard(),
            StrategyKind::Asymptotic => Self::asymptotic(),
            StrategyKind::CoherenceOptimal => Self::coherence_optimal(McmcConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.mcmc) {
            (StrategyKind::CoherenceOptimal, None) => invalid("coherence-optimal sampling needs an MCMC config"),
            (_, Some(c)) if c.thinning == 0 => invalid("MCMC thinning must be at least 1"),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.kind.fmt(f)
    }
}

/// Region on which a strategy's points live and its weight is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Whole,
    Cube,
    Ball { radius: f64 },
}

impl Support {
    pub fn contains(&self, xi: &[f64]) -> bool {
        match *self {
            Support::Whole => xi.iter().all(|v| v.is_finite()),
            Support::Cube => xi.iter().all(|v| v.abs() <= 1.0),
            Support::Ball { radius } => norm_sq(xi) <= radius * radius,
        }
    }
}

/// Radius `√2·√(2p+1)` of the Hermite sampling ball.
pub fn asymptotic_radius(p: u32) -> f64 {
    std::f64::consts::SQRT_2 * (2.0 * p as f64 + 1.0).sqrt()
}

/// `ln` of the volume of the `d`-ball of radius `r`.
pub fn ln_ball_volume(d: usize, r: f64) -> f64 {
    let df = d as f64;
    df * r.ln() + 0.5 * df * std::f64::consts::PI.ln() - ln_gamma(0.5 * df + 1.0)
}

fn norm_sq(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v * v).sum()
}

/// Non-MCMC distributions, used directly or as proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Draw {
    Standard,
    Asymptotic,
}

fn resolve_proposal(spec: &BasisSpec, config: &McmcConfig) -> Result<Draw> {
    let draw = match config.proposal {
        Proposal::Auto if spec.order() as usize > spec.dim() => Draw::Asymptotic,
        Proposal::Auto | Proposal::Standard => Draw::Standard,
        Proposal::Asymptotic => Draw::Asymptotic,
    };
    if draw == Draw::Asymptotic && spec.family() == Family::Hermite && spec.order() == 0 {
        return invalid("asymptotic Hermite sampling needs p >= 1");
    }
    Ok(draw)
}

fn draw_support(spec: &BasisSpec, draw: Draw) -> Support {
    match (spec.family(), draw) {
        (Family::Legendre, _) => Support::Cube,
        (Family::Hermite, Draw::Standard) => Support::Whole,
        (Family::Hermite, Draw::Asymptotic) => Support::Ball {
            radius: asymptotic_radius(spec.order()),
        },
    }
}

/// Support of the points a strategy produces for this basis.
pub fn strategy_support(strategy: &SamplingStrategy, spec: &BasisSpec) -> Result<Support> {
    strategy.validate()?;
    Ok(match strategy.kind {
        StrategyKind::Standard => draw_support(spec, Draw::Standard),
        StrategyKind::Asymptotic => draw_support(spec, Draw::Asymptotic),
        StrategyKind::CoherenceOptimal => draw_support(spec, resolve_proposal(spec, strategy.mcmc.as_ref().unwrap())?),
    })
}

fn draw_into(family: Family, draw: Draw, radius: f64, rng: &mut PceRng, out: &mut [f64]) {
    match (family, draw) {
        (Family::Hermite, Draw::Standard) => {
            for x in out.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
        }
        (Family::Legendre, Draw::Standard) => {
            for x in out.iter_mut() {
                *x = rng.gen_range(-1.0..=1.0);
            }
        }
        (Family::Hermite, Draw::Asymptotic) => {
            let mut nsq = 0.0;
            while nsq == 0.0 {
                for x in out.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
                nsq = norm_sq(out);
            }
            let u: f64 = rng.sample(Open01);
            let scale = radius * u.powf(1.0 / out.len() as f64) / nsq.sqrt();
            for x in out.iter_mut() {
                *x *= scale;
            }
        }
        (Family::Legendre, Draw::Asymptotic) => {
            for x in out.iter_mut() {
                // cos(πU) rounds to ±1 for U within ~1e-8 of the ends, where the
                // weight vanishes; redraw those.
                loop {
                    let u: f64 = rng.sample(Open01);
                    let v = (std::f64::consts::PI * u).cos();
                    if v.abs() < 1.0 {
                        *x = v;
                        break;
                    }
                }
            }
        }
    }
}

/// `ln(f(ξ)/q(ξ))` for the orthogonality density `f` and draw density `q`.
fn ln_f_over_q(family: Family, draw: Draw, radius: f64, xi: &[f64]) -> f64 {
    match (family, draw) {
        (_, Draw::Standard) => 0.0,
        (Family::Hermite, Draw::Asymptotic) => {
            let d = xi.len() as f64;
            ln_ball_volume(xi.len(), radius) - 0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * norm_sq(xi)
        }
        (Family::Legendre, Draw::Asymptotic) => xi
            .iter()
            .map(|x| std::f64::consts::FRAC_PI_2.ln() + 0.5 * (1.0 - x * x).ln())
            .sum(),
    }
}

fn raw_weight(family: Family, draw: Draw, xi: &[f64]) -> f64 {
    match (family, draw) {
        (_, Draw::Standard) => 1.0,
        (Family::Hermite, Draw::Asymptotic) => (-0.25 * norm_sq(xi)).exp(),
        (Family::Legendre, Draw::Asymptotic) => xi.iter().map(|x| (1.0 - x * x).sqrt().sqrt()).product(),
    }
}

/// Normalization making `c·w·ψ_j` orthonormal under the draw density.
fn closed_form_normalization(family: Family, draw: Draw, d: usize, radius: f64) -> f64 {
    match (family, draw) {
        (_, Draw::Standard) => 1.0,
        (Family::Hermite, Draw::Asymptotic) => {
            (0.5 * (ln_ball_volume(d, radius) - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln())).exp()
        }
        (Family::Legendre, Draw::Asymptotic) => std::f64::consts::FRAC_PI_2.powf(0.5 * d as f64),
    }
}

/// Points drawn under one strategy, row-major `N × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub points: Vec<f64>,
    /// Raw weights `w(ξ⁽ⁱ⁾)` as returned by [`weight_of`].
    pub weights: Vec<f64>,
    /// Constant `c` making `c·w·ψ_j` orthonormal under the sampling density.
    pub normalization: f64,
    pub strategy: SamplingStrategy,
    pub spec: BasisSpec,
    pub seed: u64,
    pub acceptance_rate: Option<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn iter_points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim())
    }

    /// `c·w(ξ⁽ⁱ⁾)`, the weight used when assembling measurement rows.
    pub fn normalized_weight(&self, i: usize) -> f64 {
        self.normalization * self.weights[i]
    }

    /// Rows `idx` of this batch, keeping strategy and normalization.
    pub fn subset(&self, idx: &[usize]) -> SampleBatch {
        let mut points = Vec::with_capacity(idx.len() * self.dim());
        for &i in idx {
            points.extend_from_slice(self.point(i));
        }
        SampleBatch {
            points,
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            normalization: self.normalization,
            strategy: self.strategy,
            spec: self.spec.clone(),
            seed: self.seed,
            acceptance_rate: self.acceptance_rate,
        }
    }

    /// Write `xi_1..xi_d,weight` (plus `u` when values are given) with a
    /// `#`-comment preamble describing the batch. Floats use the shortest
    /// representation that parses back to the same binary64.
    pub fn write_csv<W: Write>(&self, mut out: W, values: Option<&[f64]>) -> Result<()> {
        if let Some(v) = values {
            if v.len() != self.len() {
                return Err(PceError::DimensionMismatch {
                    expected: self.len(),
                    got: v.len(),
                });
            }
        }
        writeln!(out, "# family: {}", self.spec.family())?;
        writeln!(out, "# strategy: {}", self.strategy.kind)?;
        writeln!(out, "# d: {}", self.dim())?;
        writeln!(out, "# p: {}", self.spec.order())?;
        writeln!(out, "# seed: {}", self.seed)?;
        writeln!(out, "# normalization: {}", self.normalization)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("xi_{i}")).collect();
        header.push("weight".into());
        if values.is_some() {
            header.push("u".into());
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            record.clear();
            record.extend(self.point(i).iter().map(|v| v.to_string()));
            record.push(self.weights[i].to_string());
            if let Some(v) = values {
                record.push(v[i].to_string());
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return invalid("sample count must be at least 1");
    }
    Ok(())
}

fn iid_batch(spec: &BasisSpec, n: usize, seed: u64, draw: Draw, strategy: SamplingStrategy) -> Result<SampleBatch> {
    check_count(n)?;
    let family = spec.family();
    if draw == Draw::Asymptotic && family == Family::Hermite && spec.order() == 0 {
        return invalid("asymptotic Hermite sampling needs p >= 1");
    }
    let d = spec.dim();
    let radius = asymptotic_radius(spec.order());
    let mut rng = rng_from_seed(seed);
    let mut points = vec![0.0; n * d];
    let mut weights = Vec::with_capacity(n);
    for row in points.chunks_exact_mut(d) {
        draw_into(family, draw, radius, &mut rng, row);
        weights.push(raw_weight(family, draw, row));
    }
    Ok(SampleBatch {
        points,
        weights,
        normalization: closed_form_normalization(family, draw, d, radius),
        strategy,
        spec: spec.clone(),
        seed,
        acceptance_rate: None,
    })
}

/// I.i.d. draws from the orthogonality measure, `w ≡ 1`.
pub fn sample_standard(spec: &BasisSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    iid_batch(spec, n, seed, Draw::Standard, SamplingStrategy::standard())
}

/// Uniform draws on the `√2√(2p+1)` ball (Hermite) or Chebyshev draws (Legendre).
pub fn sample_asymptotic(spec: &BasisSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    iid_batch(spec, n, seed, Draw::Asymptotic, SamplingStrategy::asymptotic())
}

/// Independence Metropolis–Hastings chain targeting `f·B²` on the support.
///
/// The normalization `√E_f[B² 1_S]` is estimated by importance sampling from
/// every proposal the chain makes.
pub fn sample_coherence_optimal(spec: &BasisSpec, n: usize, config: McmcConfig, seed: u64) -> Result<SampleBatch> {
    check_count(n)?;
    let strategy = SamplingStrategy::coherence_optimal(config);
    strategy.validate()?;
    let draw = resolve_proposal(spec, &config)?;
    let family = spec.family();
    let d = spec.dim();
    let radius = asymptotic_radius(spec.order());
    let mut rng = rng_from_seed(derive_seed(seed, &[config.seed]));
    let mut table = Vec::new();
    let mut dp = Vec::new();

    let mut mass_sum = 0.0;
    let mut proposals = 0u64;
    // ln of the importance ratio f·B²/q; the MH ratio is a difference of two.
    let mut score = |xi: &[f64], mass_sum: &mut f64, proposals: &mut u64| -> Result<(f64, f64)> {
        let b = spec.envelope_with(xi, &mut table, &mut dp)?;
        let s = ln_f_over_q(family, draw, radius, xi) + 2.0 * b.ln();
        if !s.is_finite() {
            return Err(PceError::Mcmc(format!("proposal density vanishes at {xi:?}")));
        }
        *mass_sum += s.exp();
        *proposals += 1;
        Ok((s, b))
    };

    let mut current = vec![0.0; d];
    draw_into(family, draw, radius, &mut rng, &mut current);
    let (mut cur_score, mut cur_b) = score(&current, &mut mass_sum, &mut proposals)?;
    let mut candidate = vec![0.0; d];
    let mut accepted = 0u64;
    let mut steps = 0u64;

    let mut step = |current: &mut Vec<f64>, cur_score: &mut f64, cur_b: &mut f64, rng: &mut PceRng| -> Result<()> {
        draw_into(family, draw, radius, rng, &mut candidate);
        let (s, b) = score(&candidate, &mut mass_sum, &mut proposals)?;
        steps += 1;
        let log_ratio = s - *cur_score;
        let u: f64 = rng.sample(Open01);
        if log_ratio >= 0.0 || u.ln() < log_ratio {
            current.copy_from_slice(&candidate);
            *cur_score = s;
            *cur_b = b;
            accepted += 1;
        }
        Ok(())
    };

    for _ in 0..config.burn_in {
        step(&mut current, &mut cur_score, &mut cur_b, &mut rng)?;
    }
    let mut points = Vec::with_capacity(n * d);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..config.thinning {
            step(&mut current, &mut cur_score, &mut cur_b, &mut rng)?;
        }
        points.extend_from_slice(&current);
        weights.push(1.0 / cur_b);
    }
    drop(step);
    let mass = mass_sum / proposals as f64;
    Ok(SampleBatch {
        points,
        weights,
        normalization: mass.sqrt(),
        strategy,
        spec: spec.clone(),
        seed,
        acceptance_rate: Some(accepted as f64 / steps.max(1) as f64),
    })
}

/// Draw a batch under any strategy.
pub fn sample(strategy: &SamplingStrategy, spec: &BasisSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    strategy.validate()?;
    match strategy.kind {
        StrategyKind::Standard => sample_standard(spec, n, seed),
        StrategyKind::Asymptotic => sample_asymptotic(spec, n, seed),
        StrategyKind::CoherenceOptimal => sample_coherence_optimal(spec, n, strategy.mcmc.unwrap(), seed),
    }
}

/// Closed-form normalization `c` of a strategy, or `None` for the
/// coherence-optimal chain, whose constant is only available as an estimate.
pub fn strategy_normalization(strategy: &SamplingStrategy, spec: &BasisSpec) -> Result<Option<f64>> {
    strategy.validate()?;
    let radius = asymptotic_radius(spec.order());
    Ok(match strategy.kind {
        StrategyKind::Standard => Some(1.0),
        StrategyKind::Asymptotic => Some(closed_form_normalization(
            spec.family(),
            Draw::Asymptotic,
            spec.dim(),
            radius,
        )),
        StrategyKind::CoherenceOptimal => None,
    })
}

/// Raw weight `w(ξ)` of a strategy; points outside its support are a domain error.
pub fn weight_of(strategy: &SamplingStrategy, spec: &BasisSpec, xi: &[f64]) -> Result<f64> {
    let support = strategy_support(strategy, spec)?;
    spec.check_point(xi)?;
    if !support.contains(xi) {
        return Err(PceError::Domain {
            point: xi.to_vec(),
            reason: format!("outside the {} sampling support", strategy.kind),
        });
    }
    let w = match strategy.kind {
        StrategyKind::Standard => 1.0,
        StrategyKind::Asymptotic => raw_weight(spec.family(), Draw::Asymptotic, xi),
        StrategyKind::CoherenceOptimal => 1.0 / spec.envelope(xi)?,
    };
    if !(w > 0.0) {
        return Err(PceError::Domain {
            point: xi.to_vec(),
            reason: "weight vanishes on the boundary of the support".into(),
        });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter().enumerate().fold(0.0f64, |m, (i, &x)| {
            let f = cdf(x);
            m.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
        })
    }

    /// Asymptotic 1% critical value of the one-sample KS statistic.
    fn ks_band(n: usize) -> f64 {
        1.628 / (n as f64).sqrt()
    }

    fn mean_var(xs: impl Iterator<Item = f64>) -> (f64, f64, usize) {
        let v: Vec<f64> = xs.collect();
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var, n)
    }

    #[test]
    fn standard_legendre_moments() {
        let spec = BasisSpec::new(Family::Legendre, 2, 3).unwrap();
        let batch = sample_standard(&spec, 100_000, 1).unwrap();
        assert!(batch.weights.iter().all(|&w| w == 1.0));
        assert_eq!(batch.normalization, 1.0);
        for j in 0..2 {
            let (mean, var, n) = mean_var(batch.iter_points().map(|p| p[j]));
            let nf = n as f64;
            // Var(x) = 1/3, Var(x²) = 1/5 − 1/9.
            assert!(mean.abs() < 3.0 * (1.0 / 3.0 / nf).sqrt());
            assert!((var - 1.0 / 3.0).abs() < 3.0 * ((0.2 - 1.0 / 9.0) / nf).sqrt());
        }
    }

    #[test]
    fn standard_hermite_variance() {
        let spec = BasisSpec::new(Family::Hermite, 1, 3).unwrap();
        let batch = sample_standard(&spec, 100_000, 2).unwrap();
        let (_, var, n) = mean_var(batch.points.iter().copied());
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn hermite_ball_radius() {
        let spec = BasisSpec::new(Family::Hermite, 2, 3).unwrap();
        let batch = sample_asymptotic(&spec, 20_000, 3).unwrap();
        let r = 14f64.sqrt();
        assert!((r - 3.7417).abs() < 1e-4);
        assert!(batch.iter_points().all(|p| norm_sq(p).sqrt() <= r));
        for (p, &w) in batch.iter_points().zip(&batch.weights) {
            assert_eq!(w, (-0.25 * norm_sq(p)).exp());
        }
        assert!(sample_asymptotic(&BasisSpec::new(Family::Hermite, 2, 0).unwrap(), 5, 0).is_err());
    }

    #[test]
    fn ball_radius_law() {
        for d in [1usize, 2, 5] {
            let spec = BasisSpec::new(Family::Hermite, d, 4).unwrap();
            let r = asymptotic_radius(4);
            let batch = sample_asymptotic(&spec, 50_000, 40 + d as u64).unwrap();
            let us: Vec<f64> = batch
                .iter_points()
                .map(|p| (norm_sq(p).sqrt() / r).powi(d as i32))
                .collect();
            let ks = ks_statistic(us, |u| u.clamp(0.0, 1.0));
            assert!(ks < ks_band(50_000), "d={d} ks={ks}");
        }
    }

    #[test]
    fn chebyshev_angles_are_uniform() {
        let spec = BasisSpec::new(Family::Legendre, 1, 3).unwrap();
        let batch = sample_asymptotic(&spec, 100_000, 4).unwrap();
        let angles: Vec<f64> = batch.points.iter().map(|x| x.acos() / std::f64::consts::PI).collect();
        assert!(ks_statistic(angles, |u| u.clamp(0.0, 1.0)) < ks_band(100_000));
        assert!(batch.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
    }

    #[test]
    fn weight_examples() {
        let spec = BasisSpec::new(Family::Legendre, 2, 2).unwrap();
        assert_eq!(
            weight_of(&SamplingStrategy::standard(), &spec, &[0.3, -0.9]).unwrap(),
            1.0
        );
        assert_eq!(
            weight_of(&SamplingStrategy::asymptotic(), &spec, &[0.0, 0.0]).unwrap(),
            1.0
        );
        assert!(weight_of(&SamplingStrategy::asymptotic(), &spec, &[1.0, 0.0]).is_err());
        let herm = BasisSpec::new(Family::Hermite, 2, 3).unwrap();
        assert_eq!(
            weight_of(&SamplingStrategy::asymptotic(), &herm, &[0.0, 0.0]).unwrap(),
            1.0
        );
        assert!(weight_of(&SamplingStrategy::asymptotic(), &herm, &[3.0, 3.0]).is_err());

        // B = 2 at ξ = 2 for Hermite p = 1, where ψ_1(2) = 2.
        let one = BasisSpec::new(Family::Hermite, 1, 1).unwrap();
        let co = SamplingStrategy::coherence_optimal(McmcConfig::default());
        assert_eq!(one.envelope(&[2.0]).unwrap(), 2.0);
        assert_eq!(weight_of(&co, &one, &[2.0]).unwrap(), 0.5);
        let no_config = SamplingStrategy {
            kind: StrategyKind::CoherenceOptimal,
            mcmc: None,
        };
        assert!(weight_of(&no_config, &one, &[0.0]).is_err());
    }

    #[test]
    fn seeds_are_deterministic() {
        let spec = BasisSpec::new(Family::Hermite, 2, 5).unwrap();
        for strategy in [
            SamplingStrategy::standard(),
            SamplingStrategy::asymptotic(),
            SamplingStrategy::coherence_optimal(McmcConfig {
                burn_in: 50,
                thinning: 3,
                ..Default::default()
            }),
        ] {
            let a = sample(&strategy, &spec, 200, 9).unwrap();
            let b = sample(&strategy, &spec, 200, 9).unwrap();
            let c = sample(&strategy, &spec, 200, 10).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.points, c.points);
        }
    }

    #[test]
    fn coherence_optimal_legendre_matches_target() {
        let spec = BasisSpec::new(Family::Legendre, 1, 4).unwrap();
        let n = 100_000;
        let batch = sample_coherence_optimal(&spec, n, McmcConfig::default(), 12).unwrap();
        let rate = batch.acceptance_rate.unwrap();
        assert!(rate > 0.0 && rate < 1.0);

        // Bin probabilities of ½B² by composite midpoint quadrature.
        let bins = 50;
        let sub = 400;
        let mut mass = vec![0.0; bins];
        for (b, m) in mass.iter_mut().enumerate() {
            for s in 0..sub {
                let x = -1.0 + (b as f64 + (s as f64 + 0.5) / sub as f64) * 2.0 / bins as f64;
                *m += spec.envelope(&[x]).unwrap().powi(2);
            }
        }
        let total: f64 = mass.iter().sum();
        let mut counts = vec![0usize; bins];
        for &x in &batch.points {
            counts[(((x + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&mass)
            .map(|(&c, &m)| {
                let e = m / total * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let pval = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
        assert!(pval > 0.01, "chi2 {chi2} p {pval}");

        // E_f[B²] for the normalization, by the same quadrature.
        let exact = total / (bins * sub) as f64;
        assert!((batch.normalization.powi(2) / exact - 1.0).abs() < 0.02);
    }

    #[test]
    fn coherence_optimal_constant_basis_is_standard() {
        let spec = BasisSpec::new(Family::Hermite, 1, 0).unwrap();
        let batch = sample_coherence_optimal(
            &spec,
            20_000,
            McmcConfig {
                thinning: 1,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        assert_eq!(batch.acceptance_rate, Some(1.0));
        let cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
        assert!(ks_statistic(batch.points.clone(), cdf) < ks_band(20_000));
        assert!(batch.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn coherence_optimal_hermite_stays_in_ball() {
        let spec = BasisSpec::new(Family::Hermite, 2, 5).unwrap();
        let batch = sample_coherence_optimal(&spec, 5_000, McmcConfig::default(), 6).unwrap();
        let r = 22f64.sqrt();
        assert!(batch.iter_points().all(|p| norm_sq(p).sqrt() <= r));
        // Flatness: w·B is one at every kept point, up to the rounding of 1/B.
        for (p, &w) in batch.iter_points().zip(&batch.weights) {
            assert!((w * spec.envelope(p).unwrap() - 1.0).abs() <= f64::EPSILON);
        }
    }

    #[test]
    fn weighted_gram_is_identity() {
        let m = 40_000;
        for family in [Family::Hermite, Family::Legendre] {
            for kind in [
                StrategyKind::Standard,
                StrategyKind::Asymptotic,
                StrategyKind::CoherenceOptimal,
            ] {
                let spec = BasisSpec::new(family, 2, 3).unwrap();
                let batch = sample(&SamplingStrategy::from_kind(kind), &spec, m, 21).unwrap();
                let n = spec.len();
                let mut gram = vec![0.0; n * n];
                for i in 0..m {
                    let w = batch.normalized_weight(i);
                    let row = spec.eval_row(batch.point(i)).unwrap();
                    for a in 0..n {
                        for b in 0..n {
                            gram[a * n + b] += w * w * row[a] * row[b] / m as f64;
                        }
                    }
                }
                for a in 0..n {
                    for b in 0..n {
                        let t = if a == b { 1.0 } else { 0.0 };
                        assert!(
                            (gram[a * n + b] - t).abs() < 0.15,
                            "{family} {kind} ({a},{b}) {}",
                            gram[a * n + b]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ball_gram_matches_truncated_moments() {
        // In d = 1 the ball is [-r, r]; its weighted Gram matrix is the
        // Gaussian Gram matrix restricted to the interval, computed here by
        // Gauss-Legendre quadrature on [-r, r].
        let m = 200_000;
        let rule = crate::poly_basis::gauss_rule(Family::Legendre, 80).unwrap();
        for p in [1u32, 3, 5] {
            let spec = BasisSpec::new(Family::Hermite, 1, p).unwrap();
            let r = asymptotic_radius(p);
            let n = spec.len();
            let mut exact = vec![0.0; n * n];
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let xi = r * x;
                let row = spec.eval_row(&[xi]).unwrap();
                let dens = 2.0 * r * w * (-0.5 * xi * xi).exp() / (2.0 * std::f64::consts::PI).sqrt();
                for a in 0..n {
                    for b in 0..n {
                        exact[a * n + b] += dens * row[a] * row[b];
                    }
                }
            }
            let batch = sample_asymptotic(&spec, m, 40 + p as u64).unwrap();
            let mut gram = vec![0.0; n * n];
            for i in 0..m {
                let w = batch.normalized_weight(i);
                let row = spec.eval_row(batch.point(i)).unwrap();
                for a in 0..n {
                    for b in 0..n {
                        gram[a * n + b] += w * w * row[a] * row[b] / m as f64;
                    }
                }
            }
            let worst_defect = (0..n).map(|a| (exact[a * n + a] - 1.0).abs()).fold(0.0f64, f64::max);
            assert!(worst_defect > 0.05, "p={p}: truncation defect {worst_defect}");
            for k in 0..n * n {
                assert!(
                    (gram[k] - exact[k]).abs() < 0.02,
                    "p={p} entry {k}: {} vs {}",
                    gram[k],
                    exact[k]
                );
            }
        }
    }

    #[test]
    fn csv_round_trips_floats() {
        let spec = BasisSpec::new(Family::Hermite, 2, 2).unwrap();
        let batch = sample_asymptotic(&spec, 20, 8).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        assert_eq!(rdr.headers().unwrap(), vec!["xi_1", "xi_2", "weight"]);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.unwrap();
            assert_eq!(rec[0].parse::<f64>().unwrap(), batch.point(i)[0]);
            assert_eq!(rec[1].parse::<f64>().unwrap(), batch.point(i)[1]);
            assert_eq!(rec[2].parse::<f64>().unwrap(), batch.weights[i]);
        }
    }
}
