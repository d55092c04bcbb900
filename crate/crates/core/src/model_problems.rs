//! Quantities of interest: manufactured sparse expansions, the surface
//! coverage ODE, and sample files computed elsewhere.

use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PceError, Result};
use crate::poly_basis::{gauss_rule, BasisSpec, Family};
use crate::rng::rng_from_seed;
use crate::sampler::{strategy_normalization, weight_of, SampleBatch, SamplingStrategy, StrategyKind};

/// Sparse coefficient vector with a random support and normal entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedSignal {
    pub coefficients: Vec<f64>,
    /// Sorted positions of the non-zero entries.
    pub support: Vec<usize>,
    pub seed: u64,
}

impl ManufacturedSignal {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn evaluate(&self, spec: &BasisSpec, xi: &[f64]) -> Result<f64> {
        spec.eval_expansion(&self.coefficients, xi)
    }

    /// `u(ξ⁽ⁱ⁾)` at every point of a batch.
    pub fn values_at(&self, batch: &SampleBatch) -> Result<Vec<f64>> {
        if self.coefficients.len() != batch.spec.len() {
            return Err(PceError::DimensionMismatch {
                expected: batch.spec.len(),
                got: self.coefficients.len(),
            });
        }
        let mut table = Vec::new();
        let mut row = vec![0.0; batch.spec.len()];
        batch
            .iter_points()
            .map(|xi| {
                batch.spec.eval_row_into(xi, &mut table, &mut row)?;
                Ok(self.support.iter().map(|&j| row[j] * self.coefficients[j]).sum())
            })
            .collect()
    }
}

/// Draw `s` distinct support positions uniformly and fill them with i.i.d.
/// standard normals.
pub fn manufacture_signal(spec: &BasisSpec, s: usize, seed: u64) -> Result<ManufacturedSignal> {
    let p = spec.len();
    if s == 0 || s > p {
        return invalid(format!("sparsity {s} must lie in 1..={p}"));
    }
    let mut rng = rng_from_seed(seed);
    let mut support = index::sample(&mut rng, p, s).into_vec();
    support.sort_unstable();
    let mut coefficients = vec![0.0; p];
    for &j in &support {
        coefficients[j] = rng.sample(StandardNormal);
    }
    Ok(ManufacturedSignal {
        coefficients,
        support,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceReactionConfig {
    pub kappa: f64,
    pub rho0: f64,
    pub t_final: f64,
    /// Mixed absolute/relative local error tolerance of the integrator.
    pub tolerance: f64,
}

impl Default for SurfaceReactionConfig {
    fn default() -> Self {
        SurfaceReactionConfig {
            kappa: 10.0,
            rho0: 0.9,
            t_final: 4.0,
            tolerance: 1e-10,
        }
    }
}

/// Adsorption and desorption rates `(α, γ)` for a standard-normal input.
pub fn reaction_rates(xi: &[f64]) -> Result<(f64, f64)> {
    if xi.len() != 2 {
        return Err(PceError::DimensionMismatch {
            expected: 2,
            got: xi.len(),
        });
    }
    if !xi.iter().all(|v| v.is_finite()) {
        return Err(PceError::Domain {
            point: xi.to_vec(),
            reason: "non-finite input".into(),
        });
    }
    Ok((0.1 + (0.05 * xi[0]).exp(), 0.001 + 0.01 * (0.05 * xi[1]).exp()))
}

/// `dρ/dt = α(1−ρ) − γρ − κ(1−ρ)²ρ`.
pub fn coverage_rate(rho: f64, alpha: f64, gamma: f64, kappa: f64) -> f64 {
    let q = 1.0 - rho;
    alpha * q - gamma * rho - kappa * q * q * rho
}

/// `ρ(t_final)` for explicit rates.
pub fn integrate_coverage(alpha: f64, gamma: f64, config: &SurfaceReactionConfig) -> Result<f64> {
    if !(config.t_final >= 0.0) || !(config.tolerance > 0.0) {
        return invalid("final time must be non-negative and tolerance positive");
    }
    let f = |rho: f64| coverage_rate(rho, alpha, gamma, config.kappa);
    dopri5(f, config.rho0, config.t_final, config.tolerance)
}

/// Surface coverage at `t_final` for the input `ξ = (ξ₁, ξ₂)`.
pub fn surface_reaction_qoi(xi: &[f64], config: &SurfaceReactionConfig) -> Result<f64> {
    let (alpha, gamma) = reaction_rates(xi)?;
    integrate_coverage(alpha, gamma, config)
}

/// The QoI at every point of a batch.
pub fn surface_reaction_values(batch: &SampleBatch, config: &SurfaceReactionConfig) -> Result<Vec<f64>> {
    let points: Vec<&[f64]> = batch.iter_points().collect();
    points.par_iter().map(|xi| surface_reaction_qoi(xi, config)).collect()
}

// Dormand–Prince 5(4) tableau. The ODE is autonomous, so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand–Prince integration of an autonomous scalar ODE.
fn dopri5(f: impl Fn(f64) -> f64, y0: f64, t_end: f64, tol: f64) -> Result<f64> {
    let mut t = 0.0;
    let mut y = y0;
    if t_end == 0.0 {
        return Ok(y);
    }
    let mut h = (t_end * 1e-3).min(1e-2);
    let mut k = [0.0; 7];
    k[0] = f(y);
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        for s in 1..7 {
            let incr: f64 = (0..s).map(|j| A[s][j] * k[j]).sum();
            k[s] = f(y + h * incr);
        }
        // Row 6 of A holds the fifth-order weights, so k[6] = f(y_new) (FSAL).
        let y_new = y + h * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
        let err_est = h * (0..7).map(|j| E[j] * k[j]).sum::<f64>();
        let scale = tol * (1.0 + y.abs().max(y_new.abs()));
        let err = (err_est / scale).abs();
        if !y_new.is_finite() {
            h *= 0.1;
        } else if err <= 1.0 {
            t += h;
            y = y_new;
            k[0] = k[6];
            let grow = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= grow;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
        if h < 16.0 * f64::EPSILON * t.max(1.0) && t < t_end {
            return Err(PceError::StepSizeCollapse { t, step: h });
        }
    }
    Ok(y)
}

/// Projection of a QoI onto a Hermite basis with a tensor Gauss–Hermite rule
/// of `n_1d` nodes per dimension.
pub fn reference_coefficients_quadrature<F>(spec: &BasisSpec, qoi: F, n_1d: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if spec.family() != Family::Hermite {
        return invalid("reference coefficients use Gauss-Hermite quadrature and need the Hermite family");
    }
    if n_1d <= spec.order() as usize {
        return invalid(format!(
            "{n_1d} nodes cannot integrate order-{} products exactly",
            spec.order()
        ));
    }
    let d = spec.dim();
    let total = (n_1d as u64).checked_pow(d as u32).filter(|&t| t <= 50_000_000);
    let Some(total) = total else {
        return invalid(format!("tensor rule with {n_1d}^{d} nodes is too large"));
    };
    let rule = gauss_rule(Family::Hermite, n_1d)?;
    let contributions: Vec<(Vec<f64>, f64)> = (0..total as usize)
        .into_par_iter()
        .map(|code| {
            let mut xi = vec![0.0; d];
            let mut w = 1.0;
            let mut c = code;
            for x in xi.iter_mut() {
                let i = c % n_1d;
                c /= n_1d;
                *x = rule.nodes[i];
                w *= rule.weights[i];
            }
            let u = qoi(&xi)?;
            Ok((xi, w * u))
        })
        .collect::<Result<_>>()?;
    let mut coeffs = vec![0.0; spec.len()];
    let mut table = Vec::new();
    let mut row = vec![0.0; spec.len()];
    for (xi, wu) in &contributions {
        spec.eval_row_into(xi, &mut table, &mut row)?;
        for (c, r) in coeffs.iter_mut().zip(&row) {
            *c += wu * r;
        }
    }
    Ok(coeffs)
}

/// Coefficients from the finest rule of a converged quadrature ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceExpansion {
    pub coefficients: Vec<f64>,
    pub nodes: usize,
    /// `max_k |c_k|` difference between the last two rungs.
    pub last_change: f64,
}

/// Nodes per dimension of the default ladder: 40, 48, …, 320. The order-32
/// surface-reaction coefficients settle to 1e-8 near 216 nodes.
pub fn reference_ladder() -> Vec<usize> {
    (40..=320).step_by(8).collect()
}

/// Walk the ladder until two consecutive rules agree to `tol` in every
/// coefficient.
pub fn reference_coefficients_converged<F>(
    spec: &BasisSpec,
    qoi: F,
    ladder: &[usize],
    tol: f64,
) -> Result<ReferenceExpansion>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if ladder.len() < 2 {
        return invalid("quadrature ladder needs at least two rungs");
    }
    let mut prev = reference_coefficients_quadrature(spec, &qoi, ladder[0])?;
    let mut last_change = f64::INFINITY;
    for &n in &ladder[1..] {
        let next = reference_coefficients_quadrature(spec, &qoi, n)?;
        last_change = prev.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if last_change < tol {
            return Ok(ReferenceExpansion {
                coefficients: next,
                nodes: n,
                last_change,
            });
        }
        prev = next;
    }
    Err(PceError::QuadratureNoConvergence {
        last_change,
        nodes: *ladder.last().unwrap(),
    })
}

/// `index,coefficient` rows, the index written as a multi-index tuple.
pub fn write_reference_csv<W: Write>(out: W, spec: &BasisSpec, coefficients: &[f64]) -> Result<()> {
    if coefficients.len() != spec.len() {
        return Err(PceError::DimensionMismatch {
            expected: spec.len(),
            got: coefficients.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "coefficient"])?;
    for (m, c) in spec.index_set().iter().zip(coefficients) {
        w.write_record([m.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Coefficients written by [`write_reference_csv`]; `#` lines are skipped and
/// the index column must follow the basis ordering of `spec`.
pub fn read_reference_csv(path: impl AsRef<Path>, spec: &BasisSpec) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut coefficients = Vec::with_capacity(spec.len());
    let mut order = spec.index_set().iter();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| PceError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != 2 {
            return Err(err(format!("expected 2 fields, found {}", rec.len())));
        }
        match order.next() {
            Some(m) if m.to_string() == rec[0] => {}
            _ => return Err(err(format!("index `{}` out of basis order", &rec[0]))),
        }
        let c: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| err(format!("not a number: `{}`", &rec[1])))?;
        coefficients.push(c);
    }
    if coefficients.len() != spec.len() {
        return Err(PceError::DimensionMismatch {
            expected: spec.len(),
            got: coefficients.len(),
        });
    }
    Ok(coefficients)
}

/// Metadata lines (`# key: value`) of a sample file. All optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub family: Option<Family>,
    pub strategy: Option<StrategyKind>,
    pub order: Option<u32>,
    pub seed: Option<u64>,
    pub normalization: Option<f64>,
}

/// Points and QoI values read from a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSampleSet {
    /// Row-major `N × d`.
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    /// Raw weights, when the file has a `weight` column.
    pub weights: Option<Vec<f64>>,
    pub dim: usize,
    pub metadata: SampleMetadata,
}

impl ExternalSampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Batch for assembly under `strategy`. Weights come from the file when
    /// present and are recomputed otherwise; the normalization comes from the
    /// metadata or the strategy's closed form.
    pub fn to_batch(&self, spec: &BasisSpec, strategy: &SamplingStrategy) -> Result<SampleBatch> {
        if spec.dim() != self.dim {
            return Err(PceError::DimensionMismatch {
                expected: spec.dim(),
                got: self.dim,
            });
        }
        let weights = match &self.weights {
            Some(w) => w.clone(),
            None => (0..self.len())
                .map(|i| weight_of(strategy, spec, self.point(i)))
                .collect::<Result<_>>()?,
        };
        let normalization = match (self.metadata.normalization, strategy_normalization(strategy, spec)?) {
            (Some(c), _) | (None, Some(c)) => c,
            (None, None) => {
                return invalid("coherence-optimal samples need a `normalization` metadata line");
            }
        };
        Ok(SampleBatch {
            points: self.points.clone(),
            weights,
            normalization,
            strategy: *strategy,
            spec: spec.clone(),
            seed: self.metadata.seed.unwrap_or(0),
            acceptance_rate: None,
        })
    }
}

/// Read `xi_1..xi_d[,weight],u` rows, with optional `# key: value` lines
/// before the header. Errors carry the 1-based line number.
pub fn load_external_samples(path: impl AsRef<Path>) -> Result<ExternalSampleSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_external_samples(&text, path)
}

fn parse_external_samples(text: &str, path: &Path) -> Result<ExternalSampleSet> {
    let err = |line: usize, message: String| PceError::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut metadata = SampleMetadata::default();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut header = None;
    for (no, line) in lines.by_ref() {
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let Some((key, value)) = meta.split_once(':') else {
                continue;
            };
            let value = value.trim();
            let bad = |what: &str| err(no, format!("bad {what} `{value}`"));
            match key.trim() {
                "family" => metadata.family = Some(value.parse().map_err(|_| bad("family"))?),
                "strategy" => metadata.strategy = Some(value.parse().map_err(|_| bad("strategy"))?),
                "p" | "order" => metadata.order = Some(value.parse().map_err(|_| bad("order"))?),
                "seed" => metadata.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "normalization" => metadata.normalization = Some(value.parse().map_err(|_| bad("normalization"))?),
                _ => {}
            }
            continue;
        }
        header = Some((no, line));
        break;
    }
    let Some((header_no, header)) = header else {
        return Err(err(1, "missing header row".into()));
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let dim = columns.iter().take_while(|c| c.starts_with("xi_")).count();
    for (i, c) in columns[..dim].iter().enumerate() {
        if *c != format!("xi_{}", i + 1) {
            return Err(err(header_no, format!("expected column xi_{}, found `{c}`", i + 1)));
        }
    }
    let has_weight = match &columns[dim..] {
        ["u"] => false,
        ["weight", "u"] => true,
        _ => return Err(err(header_no, "header must be xi_1..xi_d[,weight],u".into())),
    };
    if dim == 0 {
        return Err(err(header_no, "no xi_ columns".into()));
    }
    let width = columns.len();

    let mut points = Vec::new();
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for (no, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(err(no, format!("expected {width} fields, found {}", fields.len())));
        }
        let mut parsed = Vec::with_capacity(width);
        for (f, name) in fields.iter().zip(&columns) {
            let v: f64 = f
                .parse()
                .map_err(|_| err(no, format!("column {name}: `{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(no, format!("column {name}: non-finite value `{f}`")));
            }
            parsed.push(v);
        }
        points.extend_from_slice(&parsed[..dim]);
        if has_weight {
            weights.push(parsed[dim]);
        }
        values.push(parsed[width - 1]);
    }
    if values.is_empty() {
        return Err(err(header_no, "no data rows".into()));
    }
    Ok(ExternalSampleSet {
        points,
        values,
        weights: has_weight.then_some(weights),
        dim,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::l1_solver::{assemble, solve_bpdn, SolverOptions};
    use crate::sampler::{sample, sample_standard};

    fn rk4(alpha: f64, gamma: f64, kappa: f64, rho0: f64, t_end: f64, steps: usize) -> f64 {
        let f = |r: f64| coverage_rate(r, alpha, gamma, kappa);
        let h = t_end / steps as f64;
        let mut y = rho0;
        for _ in 0..steps {
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        y
    }

    #[test]
    fn full_support_signal() {
        let spec = BasisSpec::new(Family::Legendre, 2, 3).unwrap();
        let sig = manufacture_signal(&spec, spec.len(), 5).unwrap();
        assert_eq!(sig.support, (0..spec.len()).collect::<Vec<_>>());
        assert!(sig.coefficients.iter().all(|c| *c != 0.0));
        assert_eq!(sig, manufacture_signal(&spec, spec.len(), 5).unwrap());
        assert!(manufacture_signal(&spec, spec.len() + 1, 5).is_err());
        assert!(manufacture_signal(&spec, 0, 5).is_err());
    }

    #[test]
    fn signal_entries_look_standard_normal() {
        let spec = BasisSpec::new(Family::Hermite, 1, 0).unwrap();
        let draws: Vec<f64> = (0..20_000)
            .map(|s| manufacture_signal(&spec, 1, s).unwrap().coefficients[0])
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn support_positions_are_uniform() {
        // Each of P positions is hit with probability s/P per draw.
        let spec = BasisSpec::new(Family::Legendre, 2, 2).unwrap();
        let (p, s, reps) = (spec.len(), 2, 12_000);
        let mut hits = vec![0usize; p];
        for seed in 0..reps {
            for j in manufacture_signal(&spec, s, seed).unwrap().support {
                hits[j] += 1;
            }
        }
        let expected = (reps as usize * s) as f64 / p as f64;
        let chi2: f64 = hits.iter().map(|&h| (h as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of χ²₅ is 20.5.
        assert!(chi2 < 20.5, "chi2 = {chi2}");
    }

    #[test]
    fn single_atom_is_recovered_from_few_samples() {
        let spec = BasisSpec::new(Family::Legendre, 2, 6).unwrap();
        let sig = manufacture_signal(&spec, 1, 3).unwrap();
        let n = (2.0 * (spec.len() as f64).ln()).ceil() as usize;
        let batch = sample_standard(&spec, n, 8).unwrap();
        let u = sig.values_at(&batch).unwrap();
        let j = sig.support[0];
        for (i, xi) in batch.iter_points().enumerate() {
            let direct = sig.coefficients[j] * spec.eval_row(xi).unwrap()[j];
            assert!((u[i] - direct).abs() < 1e-12);
            assert!((u[i] - sig.evaluate(&spec, xi).unwrap()).abs() < 1e-12);
        }
        let system = assemble(&batch, &u).unwrap();
        let res = solve_bpdn(&system, 0.0, &SolverOptions::default()).unwrap();
        let err: f64 = res
            .coefficients
            .iter()
            .zip(&sig.coefficients)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-6 * sig.coefficients[j].abs(), "err {err}");
    }

    #[test]
    fn overdetermined_manufactured_recovery() {
        let spec = BasisSpec::new(Family::Legendre, 2, 8).unwrap();
        let mut good = 0;
        for seed in 0..100 {
            let sig = manufacture_signal(&spec, 3, seed).unwrap();
            let batch = sample_standard(&spec, spec.len(), 1000 + seed).unwrap();
            let u = sig.values_at(&batch).unwrap();
            let res = solve_bpdn(&assemble(&batch, &u).unwrap(), 0.0, &SolverOptions::default()).unwrap();
            let num: f64 = res
                .coefficients
                .iter()
                .zip(&sig.coefficients)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let den: f64 = sig.coefficients.iter().map(|b| b * b).sum();
            if (num / den).sqrt() < 1e-6 {
                good += 1;
            }
        }
        assert!(good >= 99, "{good}/100");
    }

    #[test]
    fn ode_matches_independent_integrator() {
        let cfg = SurfaceReactionConfig::default();
        let (alpha, gamma) = reaction_rates(&[0.0, 0.0]).unwrap();
        assert!((alpha - 1.1).abs() < 1e-15 && (gamma - 0.011).abs() < 1e-15);
        let got = surface_reaction_qoi(&[0.0, 0.0], &cfg).unwrap();
        let oracle = rk4(alpha, gamma, 10.0, 0.9, 4.0, 200_000);
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
        for xi in [[3.0, -2.0], [-4.5, 4.0], [8.0, 8.0]] {
            let (a, g) = reaction_rates(&xi).unwrap();
            let got = surface_reaction_qoi(&xi, &cfg).unwrap();
            assert!((got - rk4(a, g, 10.0, 0.9, 4.0, 200_000)).abs() < 1e-8);
            assert!((0.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn zero_horizon_returns_initial_coverage() {
        let cfg = SurfaceReactionConfig {
            t_final: 0.0,
            ..Default::default()
        };
        assert_eq!(surface_reaction_qoi(&[0.3, -1.0], &cfg).unwrap(), 0.9);
    }

    #[test]
    fn long_horizon_settles_on_a_root() {
        let (alpha, gamma) = reaction_rates(&[0.0, 0.0]).unwrap();
        let cfg = SurfaceReactionConfig {
            t_final: 400.0,
            ..Default::default()
        };
        let rho = integrate_coverage(alpha, gamma, &cfg).unwrap();
        // Bisect for the root bracketing the endpoint.
        let f = |r: f64| coverage_rate(r, alpha, gamma, 10.0);
        let (mut lo, mut hi) = (rho - 1e-3, rho + 1e-3);
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!(f(0.5 * (lo + hi)).abs() < 1e-8);
        assert!((rho - 0.5 * (lo + hi)).abs() < 1e-6);
    }

    #[test]
    fn coverage_rises_with_adsorption() {
        let cfg = SurfaceReactionConfig::default();
        for gamma in [0.005, 0.011, 0.03] {
            let mut last = f64::NEG_INFINITY;
            for i in 0..40 {
                let alpha = 0.2 + 0.1 * i as f64;
                let rho = integrate_coverage(alpha, gamma, &cfg).unwrap();
                assert!(rho >= last, "alpha {alpha} gamma {gamma}");
                last = rho;
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = SurfaceReactionConfig::default();
        assert!(surface_reaction_qoi(&[f64::NAN, 0.0], &cfg).is_err());
        assert!(surface_reaction_qoi(&[0.0], &cfg).is_err());
    }

    #[test]
    fn step_collapse_is_reported() {
        // Finite-time blow-up of y' = y² from y = 1 at t = 1.
        let res = dopri5(|y| y * y, 1.0, 2.0, 1e-10);
        assert!(matches!(res, Err(PceError::StepSizeCollapse { .. })), "{res:?}");
    }

    #[test]
    fn quadrature_projects_polynomials_exactly() {
        let spec = BasisSpec::new(Family::Hermite, 2, 4).unwrap();
        let c = reference_coefficients_quadrature(&spec, |_| Ok(1.0), 10).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        let c = reference_coefficients_quadrature(&spec, |xi| Ok(spec.eval_row(xi)?[5]), 10).unwrap();
        for (j, v) in c.iter().enumerate() {
            let want = if j == 5 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10, "{j}: {v}");
        }
        assert!(reference_coefficients_quadrature(&spec, |_| Ok(1.0), 4).is_err());
        let leg = BasisSpec::new(Family::Legendre, 2, 2).unwrap();
        assert!(reference_coefficients_quadrature(&leg, |_| Ok(1.0), 10).is_err());
    }

    #[test]
    fn ladder_reports_non_convergence() {
        let spec = BasisSpec::new(Family::Hermite, 2, 2).unwrap();
        let kink = |xi: &[f64]| Ok(xi[0].abs().sqrt());
        let res = reference_coefficients_converged(&spec, kink, &[4, 5], 1e-12);
        assert!(matches!(res, Err(PceError::QuadratureNoConvergence { nodes: 5, .. })));
        let ok = reference_coefficients_converged(&spec, |xi: &[f64]| Ok(xi[0] * xi[1]), &[4, 5], 1e-12).unwrap();
        assert_eq!(ok.nodes, 5);
        // ξ₁ξ₂ = ψ_(1,1).
        assert!((ok.coefficients[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_file_round_trip() {
        let spec = BasisSpec::new(Family::Hermite, 2, 3).unwrap();
        let strategy = SamplingStrategy::asymptotic();
        let batch = sample(&strategy, &spec, 25, 17).unwrap();
        let values: Vec<f64> = batch.iter_points().map(|p| p[0].sin() + p[1]).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.csv");
        batch
            .write_csv(std::fs::File::create(&path).unwrap(), Some(&values))
            .unwrap();
        let set = load_external_samples(&path).unwrap();
        assert_eq!(set.points, batch.points);
        assert_eq!(set.values, values);
        assert_eq!(set.weights.as_deref(), Some(&batch.weights[..]));
        assert_eq!(set.metadata.family, Some(Family::Hermite));
        assert_eq!(set.metadata.strategy, Some(StrategyKind::Asymptotic));
        assert_eq!(set.metadata.order, Some(3));
        let back = set.to_batch(&spec, &strategy).unwrap();
        assert_eq!(back.normalization, batch.normalization);
        assert_eq!(back.weights, batch.weights);
    }

    #[test]
    fn coefficient_file_round_trip() {
        let spec = BasisSpec::new(Family::Legendre, 3, 4).unwrap();
        let sig = manufacture_signal(&spec, 5, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coef.csv");
        let mut buf = b"# seed: 2\n".to_vec();
        write_reference_csv(&mut buf, &spec, &sig.coefficients).unwrap();
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(read_reference_csv(&path, &spec).unwrap(), sig.coefficients);
        let other = BasisSpec::new(Family::Legendre, 3, 3).unwrap();
        assert!(read_reference_csv(&path, &other).is_err());
        let swapped = String::from_utf8(buf).unwrap().replacen("(0 0 0)", "(0 0 1)", 1);
        std::fs::write(&path, swapped).unwrap();
        assert!(matches!(read_reference_csv(&path, &spec), Err(PceError::Parse { .. })));
    }

    #[test]
    fn hand_written_file() {
        let text = "xi_1,xi_2,u\n0.5,-1,2.25\n0,0,1\n1e-3,2.5,-7\n";
        let set = parse_external_samples(text, Path::new("mem.csv")).unwrap();
        assert_eq!(set.dim, 2);
        assert_eq!(set.points, vec![0.5, -1.0, 0.0, 0.0, 1e-3, 2.5]);
        assert_eq!(set.values, vec![2.25, 1.0, -7.0]);
        assert!(set.weights.is_none());
        let spec = BasisSpec::new(Family::Hermite, 2, 2).unwrap();
        let batch = set.to_batch(&spec, &SamplingStrategy::standard()).unwrap();
        assert_eq!(batch.weights, vec![1.0; 3]);
        let cube = BasisSpec::new(Family::Legendre, 2, 2).unwrap();
        assert!(matches!(
            set.to_batch(&cube, &SamplingStrategy::standard()),
            Err(PceError::Domain { .. })
        ));
        assert!(set
            .to_batch(
                &BasisSpec::new(Family::Hermite, 3, 2).unwrap(),
                &SamplingStrategy::standard()
            )
            .is_err());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let line_of = |text: &str| match parse_external_samples(text, Path::new("x.csv")) {
            Err(PceError::Parse { line, message, .. }) => (line, message),
            other => panic!("{other:?}"),
        };
        let body = "# family: hermite\n# d: 2\nxi_1,xi_2,u\n1,2,3\n4,5,6\n7,8,9\n1,1,NaN\n";
        let (line, msg) = line_of(body);
        assert_eq!(line, 7);
        assert!(msg.contains("non-finite"));
        let (line, msg) = line_of("xi_1,xi_2,u\n1,2,3\n1,2\n");
        assert_eq!(line, 3);
        assert!(msg.contains("expected 3 fields"));
        let (line, msg) = line_of("xi_1,xi_2,u\n1,abc,3\n");
        assert_eq!(line, 2);
        assert!(msg.contains("not a number"));
        let (line, _) = line_of("xi_1,xi_3,u\n1,2,3\n");
        assert_eq!(line, 1);
        let (line, _) = line_of("# family: bessel\nxi_1,u\n1,2\n");
        assert_eq!(line, 1);
    }
}
