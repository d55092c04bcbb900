//! Weighted measurement systems and ℓ1 recovery.
//!
//! Both problems live on the Pareto curve `φ(τ) = min{‖b − Ac‖₂ : ‖c‖₁ ≤ τ}`.
//! [`solve_bpdn`] (`min ‖c‖₁ s.t. ‖b − Ac‖₂ ≤ δ`) follows the piecewise-linear
//! homotopy path of the Lasso from `c = 0` until the residual reaches `δ`,
//! which gives the exact solution and, in one pass, every tolerance of a
//! sweep. If the active columns become numerically dependent the solve falls
//! back to root-finding on `φ`: spectral projected gradient subproblems with
//! a nonmonotone line search, and Newton steps in `τ` using
//! `φ'(τ) = −‖Aᵀr‖_∞/‖r‖₂`.
//! [`solve_lasso_regularized`] stops the same path at the requested `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PceError, Result};
use crate::poly_basis::BasisSpec;
use crate::sampler::{SampleBatch, SamplingStrategy};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PceError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `out = A x`
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `out = Aᵀ y`
    pub fn matvec_t(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        out.fill(0.0);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yi != 0.0 {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += yi * a;
                }
            }
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }
}

/// Four interleaved partial sums so the loop vectorizes; the reduction
/// order is fixed, so results do not depend on the target.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let split = n - n % 4;
    for (ca, cb) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut tail = 0.0;
    for k in split..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Weighted system `A = WΨ`, `b = Wu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSystem {
    pub matrix: DenseMatrix,
    pub rhs: Vec<f64>,
    pub spec: BasisSpec,
    pub strategy: SamplingStrategy,
}

/// Unweighted design matrix `Ψ_{ij} = ψ_j(ξ⁽ⁱ⁾)` for row-major points.
pub fn design_matrix(spec: &BasisSpec, points: &[f64]) -> Result<DenseMatrix> {
    let d = spec.dim();
    if points.len() % d != 0 {
        return Err(PceError::DimensionMismatch {
            expected: d,
            got: points.len() % d,
        });
    }
    let n = points.len() / d;
    let mut m = DenseMatrix::zeros(n, spec.len());
    let mut table = Vec::new();
    for (i, xi) in points.chunks_exact(d).enumerate() {
        spec.eval_row_into(xi, &mut table, m.row_mut(i))?;
    }
    Ok(m)
}

/// Rows `c·w(ξ⁽ⁱ⁾)·ψ_j(ξ⁽ⁱ⁾)` and right-hand side `c·w(ξ⁽ⁱ⁾)·u(ξ⁽ⁱ⁾)`, with
/// the batch's normalization constant `c`.
pub fn assemble(batch: &SampleBatch, qoi_values: &[f64]) -> Result<MeasurementSystem> {
    if qoi_values.len() != batch.len() {
        return Err(PceError::DimensionMismatch {
            expected: batch.len(),
            got: qoi_values.len(),
        });
    }
    let mut matrix = design_matrix(&batch.spec, &batch.points)?;
    let mut rhs = Vec::with_capacity(batch.len());
    for (i, &u) in qoi_values.iter().enumerate() {
        let w = batch.normalized_weight(i);
        for v in matrix.row_mut(i) {
            *v *= w;
        }
        rhs.push(w * u);
    }
    Ok(MeasurementSystem {
        matrix,
        rhs,
        spec: batch.spec.clone(),
        strategy: batch.strategy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative duality gap of the subproblems and relative accuracy of
    /// `‖r‖₂ ≈ δ`.
    pub opt_tol: f64,
    /// Basis-pursuit stop `‖r‖₂ ≤ bp_tol·‖b‖₂` when `δ = 0`.
    pub bp_tol: f64,
    pub max_matvecs: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            opt_tol: 1e-6,
            bp_tol: 1e-9,
            max_matvecs: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub l1_norm: f64,
    /// Homotopy segments, plus projected-gradient iterations after a fallback.
    pub iterations: usize,
    pub matvecs: usize,
    pub converged: bool,
    pub delta_or_lambda: f64,
    /// Final ℓ1-ball radius, usable as a warm start.
    pub tau: f64,
}

/// Starting point for a BPDN solve, typically a neighbouring solution.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub tau: f64,
}

/// Euclidean projection of `x` onto `{‖z‖₁ ≤ τ}`, in place.
pub fn project_l1_ball(x: &mut [f64], tau: f64) {
    if norm1(x) <= tau {
        return;
    }
    if tau <= 0.0 {
        x.fill(0.0);
        return;
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - tau) / (k + 1) as f64;
        if t >= m {
            break;
        }
        theta = t;
    }
    for v in x.iter_mut() {
        *v = v.signum() * (v.abs() - theta).max(0.0);
    }
}

fn check_system(a: &DenseMatrix, b: &[f64]) -> Result<()> {
    if b.len() != a.rows() {
        return Err(PceError::DimensionMismatch {
            expected: a.rows(),
            got: b.len(),
        });
    }
    Ok(())
}

/// `min ‖c‖₁ s.t. ‖b − Ac‖₂ ≤ δ` on a measurement system.
pub fn solve_bpdn(system: &MeasurementSystem, delta: f64, opts: &SolverOptions) -> Result<RecoveryResult> {
    solve_bpdn_matrix(&system.matrix, &system.rhs, delta, opts, None)
}

const GLL_MEMORY: usize = 3;
const ARMIJO: f64 = 1e-4;
const STEP_MIN: f64 = 1e-16;
const STEP_MAX: f64 = 1e5;
const SUBSPACE_EVERY: usize = 10;

/// BPDN on a raw matrix and right-hand side.
///
/// The homotopy path is followed down to the residual level `δ`; if it breaks
/// down (near-dependent active columns) the spectral projected-gradient
/// Pareto solver takes over, warm-started from `warm` or the last path point.
pub fn solve_bpdn_matrix(
    a: &DenseMatrix,
    b: &[f64],
    delta: f64,
    opts: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<RecoveryResult> {
    let mut out = solve_bpdn_path(a, b, &[delta], opts, warm)?;
    Ok(out.pop().unwrap())
}

/// BPDN solutions for several tolerances from one homotopy pass. Results are
/// returned in the order of `deltas`.
pub fn solve_bpdn_path(
    a: &DenseMatrix,
    b: &[f64],
    deltas: &[f64],
    opts: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<Vec<RecoveryResult>> {
    check_system(a, b)?;
    if deltas.iter().any(|d| !(*d >= 0.0)) {
        return invalid("BPDN tolerance must be non-negative");
    }
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&i, &j| deltas[j].total_cmp(&deltas[i]));
    let sorted: Vec<f64> = order.iter().map(|&i| deltas[i]).collect();
    let floor = opts.bp_tol * norm2(b);
    let path = homotopy(a, b, &sorted, 0.0, floor, opts.max_matvecs);
    let mut results: Vec<Option<RecoveryResult>> = vec![None; deltas.len()];
    let mut restart = warm.cloned();
    for (pos, &i) in order.iter().enumerate() {
        let delta = sorted[pos];
        let res = match path.points.get(pos) {
            Some(pt) => RecoveryResult {
                l1_norm: norm1(&pt.coefficients),
                tau: norm1(&pt.coefficients),
                coefficients: pt.coefficients.clone(),
                residual_norm: pt.residual_norm,
                iterations: pt.steps,
                matvecs: pt.matvecs,
                converged: true,
                delta_or_lambda: delta,
            },
            None if delta <= floor && a.rows() >= a.cols() => match unique_feasible(a, b, floor) {
                Some(x) => {
                    let residual_norm = residual(a, &x, b);
                    RecoveryResult {
                        l1_norm: norm1(&x),
                        tau: norm1(&x),
                        coefficients: x,
                        residual_norm,
                        iterations: path.steps,
                        matvecs: path.matvecs,
                        converged: true,
                        delta_or_lambda: delta,
                    }
                }
                None => fallback(a, b, delta, opts, restart.as_ref(), &path)?,
            },
            None => fallback(a, b, delta, opts, restart.as_ref(), &path)?,
        };
        restart = Some(WarmStart {
            x: res.coefficients.clone(),
            tau: res.tau,
        });
        results[i] = Some(res);
    }
    Ok(results.into_iter().map(Option::unwrap).collect())
}

/// With full column rank the solutions of `Ax = b` form a single point, so
/// basis pursuit reduces to least squares.
fn unique_feasible(a: &DenseMatrix, b: &[f64], floor: f64) -> Option<Vec<f64>> {
    let x = crate::linalg::lstsq(a.as_slice(), a.rows(), a.cols(), b)?;
    (residual(a, &x, b) <= floor).then_some(x)
}

fn residual(a: &DenseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let mut r = vec![0.0; a.rows()];
    a.matvec(x, &mut r);
    r.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn fallback(
    a: &DenseMatrix,
    b: &[f64],
    delta: f64,
    opts: &SolverOptions,
    restart: Option<&WarmStart>,
    path: &PathOutcome,
) -> Result<RecoveryResult> {
    // Once the path has run down to λ ≈ 0 its end point is the numerically
    // best residual for this matrix; projected gradient cannot improve on it.
    if path.lambda <= 1e-8 * path.lambda0 {
        return Ok(RecoveryResult {
            l1_norm: norm1(&path.last),
            tau: norm1(&path.last),
            coefficients: path.last.clone(),
            residual_norm: path.residual_norm,
            iterations: path.steps,
            matvecs: path.matvecs,
            converged: path.residual_norm <= delta.max(opts.bp_tol * norm2(b)),
            delta_or_lambda: delta,
        });
    }
    let start = restart.cloned().unwrap_or_else(|| WarmStart {
        tau: norm1(&path.last),
        x: path.last.clone(),
    });
    let mut r = spg_bpdn(a, b, delta, opts, Some(&start))?;
    r.iterations += path.steps;
    r.matvecs += path.matvecs;
    Ok(r)
}

/// Thin QR factorization `A_S = QR` of the active columns, updated as
/// columns enter and leave. `RᵀR` is the active Gram matrix, so the path
/// direction never forms it explicitly.
struct ActiveQr {
    rows: usize,
    cap: usize,
    /// Column `i` of `Q` is `q[i * rows..(i + 1) * rows]`.
    q: Vec<f64>,
    /// Upper triangular, `r[i * cap + j]` for `i ≤ j`.
    r: Vec<f64>,
    k: usize,
}

impl ActiveQr {
    fn new(rows: usize, cap: usize) -> Self {
        ActiveQr {
            rows,
            cap,
            q: vec![0.0; cap * rows],
            r: vec![0.0; cap * cap],
            k: 0,
        }
    }

    fn q_col(&self, i: usize) -> &[f64] {
        &self.q[i * self.rows..(i + 1) * self.rows]
    }

    /// Append a column. Returns false if it is numerically in the span of
    /// the active columns.
    fn push(&mut self, col: &[f64]) -> bool {
        let k = self.k;
        if k == self.cap {
            return false;
        }
        let mut w = col.to_vec();
        // Classical Gram–Schmidt, applied twice.
        for _ in 0..2 {
            for i in 0..k {
                let h = dot(self.q_col(i), &w);
                self.r[i * self.cap + k] += h;
                for (wv, qv) in w.iter_mut().zip(&self.q[i * self.rows..(i + 1) * self.rows]) {
                    *wv -= h * qv;
                }
            }
        }
        let nrm = norm2(&w);
        if !(nrm > 1e-10 * norm2(col)) {
            for i in 0..k {
                self.r[i * self.cap + k] = 0.0;
            }
            return false;
        }
        for (qv, wv) in self.q[k * self.rows..(k + 1) * self.rows].iter_mut().zip(&w) {
            *qv = wv / nrm;
        }
        self.r[k * self.cap + k] = nrm;
        self.k += 1;
        true
    }

    /// Drop active column `m`, restoring triangularity with Givens rotations.
    fn remove(&mut self, m: usize) {
        let (k, cap, n) = (self.k, self.cap, self.rows);
        for i in 0..k {
            for j in m..k - 1 {
                self.r[i * cap + j] = self.r[i * cap + j + 1];
            }
            self.r[i * cap + k - 1] = 0.0;
        }
        for i in m..k - 1 {
            let (x, y) = (self.r[i * cap + i], self.r[(i + 1) * cap + i]);
            let h = x.hypot(y);
            if h == 0.0 {
                continue;
            }
            let (c, sn) = (x / h, y / h);
            for j in i..k - 1 {
                let (u, v) = (self.r[i * cap + j], self.r[(i + 1) * cap + j]);
                self.r[i * cap + j] = c * u + sn * v;
                self.r[(i + 1) * cap + j] = -sn * u + c * v;
            }
            self.r[(i + 1) * cap + i] = 0.0;
            for t in 0..n {
                let (u, v) = (self.q[i * n + t], self.q[(i + 1) * n + t]);
                self.q[i * n + t] = c * u + sn * v;
                self.q[(i + 1) * n + t] = -sn * u + c * v;
            }
        }
        for j in 0..cap {
            self.r[(k - 1) * cap + j] = 0.0;
        }
        self.q[(k - 1) * n..k * n].fill(0.0);
        self.k -= 1;
    }

    /// Solve `RᵀR x = rhs`.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (k, cap) = (self.k, self.cap);
        let mut y = rhs.to_vec();
        for i in 0..k {
            let mut s = y[i];
            for p in 0..i {
                s -= self.r[p * cap + i] * y[p];
            }
            y[i] = s / self.r[i * cap + i];
        }
        for i in (0..k).rev() {
            let mut s = y[i];
            for p in i + 1..k {
                s -= self.r[i * cap + p] * y[p];
            }
            y[i] = s / self.r[i * cap + i];
        }
        y
    }
}

struct PathPoint {
    coefficients: Vec<f64>,
    residual_norm: f64,
    steps: usize,
    matvecs: usize,
}

struct PathOutcome {
    /// One point per requested residual level, in order, until the path
    /// stopped.
    points: Vec<PathPoint>,
    /// Coefficients where the path stopped.
    last: Vec<f64>,
    lambda: f64,
    /// `‖Aᵀb‖_∞`, where the path starts.
    lambda0: f64,
    residual_norm: f64,
    steps: usize,
    matvecs: usize,
    /// The path reached `lambda_stop` (or every level) without breaking down.
    complete: bool,
}

/// Homotopy (LARS with sign changes) for `min ½‖b − Ac‖² + λ‖c‖₁` from
/// `λ = ‖Aᵀb‖_∞` down to `lambda_stop`. Along the way it records the point
/// where `‖b − Ac‖₂` first reaches each level of `deltas` (descending); a
/// level below `floor` is met by the end point of a path run to `λ = 0`.
fn homotopy(
    a: &DenseMatrix,
    b: &[f64],
    deltas: &[f64],
    lambda_stop: f64,
    floor: f64,
    max_matvecs: usize,
) -> PathOutcome {
    let (n, p) = (a.rows(), a.cols());
    let at = a.transpose();
    let column = |j: usize| &at.as_slice()[j * n..(j + 1) * n];
    let mut c = vec![0.0; p];
    let mut r = b.to_vec();
    let mut corr = vec![0.0; p];
    a.matvec_t(&r, &mut corr);
    let mut matvecs = 1;
    let mut lam = norm_inf(&corr);
    let lambda0 = lam;
    let mut points = Vec::new();
    let mut pending = deltas.iter().copied().peekable();
    let mut steps = 0;
    let mut r_norm = norm2(&r);

    while let Some(&d) = pending.peek() {
        if r_norm > d {
            break;
        }
        points.push(PathPoint {
            coefficients: c.clone(),
            residual_norm: r_norm,
            steps,
            matvecs,
        });
        pending.next();
    }
    let lasso_mode = deltas.is_empty();

    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut is_active = vec![false; p];
    let mut chol = ActiveQr::new(n, n.min(p));
    let mut complete = true;
    let mut banned: Option<(usize, f64)> = None;
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; p];
    let mut ax = vec![0.0; n];

    if lam > lambda_stop && (lasso_mode || pending.peek().is_some()) {
        let j = (0..p).max_by(|&i, &j| corr[i].abs().total_cmp(&corr[j].abs())).unwrap();
        let col = column(j);
        if chol.push(col) {
            active.push(j);
            signs.push(corr[j].signum());
            is_active[j] = true;
        } else {
            complete = false;
        }
    }

    while complete && lam > lambda_stop && (lasso_mode || pending.peek().is_some()) && !active.is_empty() {
        if matvecs >= max_matvecs {
            complete = false;
            break;
        }
        steps += 1;
        let dir = chol.solve(&signs);
        v.fill(0.0);
        for (&j, &dj) in active.iter().zip(&dir) {
            for (vi, &aij) in v.iter_mut().zip(column(j)) {
                *vi += dj * aij;
            }
        }
        a.matvec_t(&v, &mut q);
        matvecs += 1;

        let mut gamma = lam - lambda_stop;
        let mut event: Option<(usize, f64)> = None;
        let tiny = 1e-14 * lam;
        for j in 0..p {
            if is_active[j] {
                continue;
            }
            for (num, den, sign) in [(lam - corr[j], 1.0 - q[j], 1.0), (lam + corr[j], 1.0 + q[j], -1.0)] {
                // A column that just left may not re-enter with its old sign.
                if den > 1e-12 && banned != Some((j, sign)) {
                    let t = num / den;
                    if t > tiny && t < gamma {
                        gamma = t;
                        event = Some((j, sign));
                    }
                }
            }
        }
        for (ii, &j) in active.iter().enumerate() {
            if dir[ii] != 0.0 {
                let t = -c[j] / dir[ii];
                if t > tiny && t < gamma {
                    gamma = t;
                    event = Some((j, 0.0));
                }
            }
        }

        // Residual levels crossed inside this segment: ‖r − t v‖ = δ.
        let (rr, rv, vv) = (dot(&r, &r), dot(&r, &v), dot(&v, &v));
        while let Some(&d) = pending.peek() {
            let end_sq = rr - 2.0 * gamma * rv + gamma * gamma * vv;
            if d <= floor || end_sq.max(0.0).sqrt() > d || vv == 0.0 {
                break;
            }
            let disc = (rv * rv - vv * (rr - d * d)).max(0.0);
            let t = ((rv - disc.sqrt()) / vv).clamp(0.0, gamma);
            let mut pt = c.clone();
            for (&j, &dj) in active.iter().zip(&dir) {
                pt[j] += t * dj;
            }
            a.matvec(&pt, &mut ax);
            matvecs += 1;
            let res = ax.iter().zip(b).map(|(u, w)| (w - u).powi(2)).sum::<f64>().sqrt();
            points.push(PathPoint {
                coefficients: pt,
                residual_norm: res,
                steps,
                matvecs,
            });
            pending.next();
        }

        for (ii, &j) in active.iter().enumerate() {
            c[j] += gamma * dir[ii];
        }
        lam -= gamma;
        a.matvec(&c, &mut ax);
        for ((ri, &bi), &ai) in r.iter_mut().zip(b).zip(&ax) {
            *ri = bi - ai;
        }
        a.matvec_t(&r, &mut corr);
        matvecs += 2;
        r_norm = norm2(&r);
        // Levels at or below the floor are met as soon as the residual is.
        while let Some(&d) = pending.peek() {
            if r_norm > d.max(floor) {
                break;
            }
            points.push(PathPoint {
                coefficients: c.clone(),
                residual_norm: r_norm,
                steps,
                matvecs,
            });
            pending.next();
        }
        banned = None;
        match event {
            Some((j, 0.0)) => {
                let m = active.iter().position(|&i| i == j).unwrap();
                c[j] = 0.0;
                active.remove(m);
                banned = Some((j, signs.remove(m)));
                is_active[j] = false;
                chol.remove(m);
            }
            Some((j, sign)) => {
                if chol.push(column(j)) {
                    active.push(j);
                    signs.push(sign);
                    is_active[j] = true;
                } else {
                    complete = false;
                }
            }
            None => {}
        }
    }

    let complete = complete && pending.peek().is_none();
    PathOutcome {
        points,
        last: c,
        lambda: lam,
        lambda0,
        residual_norm: r_norm,
        steps,
        matvecs,
        complete,
    }
}

/// Pareto root-finding on `φ(τ) = min{‖b − Ax‖₂ : ‖x‖₁ ≤ τ}` with spectral
/// projected-gradient subproblems.
fn spg_bpdn(
    a: &DenseMatrix,
    b: &[f64],
    delta: f64,
    opts: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<RecoveryResult> {
    check_system(a, b)?;
    if !(delta >= 0.0) {
        return invalid("BPDN tolerance must be non-negative");
    }
    let (n, p) = (a.rows(), a.cols());
    let b_norm = norm2(b);
    if b_norm <= delta {
        return Ok(RecoveryResult {
            coefficients: vec![0.0; p],
            residual_norm: b_norm,
            l1_norm: 0.0,
            iterations: 0,
            matvecs: 0,
            converged: true,
            delta_or_lambda: delta,
            tau: 0.0,
        });
    }
    // Scale-free floors: quantities below these are treated as zero.
    let floor = opts.bp_tol * b_norm;
    // Newton aims slightly inside the constraint so that the iterates, which
    // approach the root from above, end up feasible.
    let target = delta * (1.0 - 1e-7);

    let (mut x, mut tau) = match warm {
        Some(w) if w.x.len() == p => (w.x.clone(), w.tau.max(0.0)),
        _ => (vec![0.0; p], 0.0),
    };
    project_l1_ball(&mut x, tau);

    let mut matvecs = 0usize;
    let mut r = vec![0.0; n];
    let mut g = vec![0.0; p];
    let mut ax = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64], ax: &mut [f64], matvecs: &mut usize| {
        a.matvec(x, ax);
        *matvecs += 1;
        for ((ri, &bi), &ai) in r.iter_mut().zip(b).zip(ax.iter()) {
            *ri = bi - ai;
        }
    };
    residual(&x, &mut r, &mut ax, &mut matvecs);
    a.matvec_t(&r, &mut g);
    matvecs += 1;

    let mut f_hist = [f64::NEG_INFINITY; GLL_MEMORY];
    let mut iterations = 0usize;
    let mut step = 1.0;
    let mut converged = false;
    let mut best: Option<(f64, Vec<f64>)> = None;

    let mut dx = vec![0.0; p];
    let mut adx = vec![0.0; n];
    let mut x_new = vec![0.0; p];
    let mut r_new = vec![0.0; n];
    let mut g_new = vec![0.0; p];
    let mut since_refresh = 0usize;

    loop {
        let r_norm = norm2(&r);
        let f = 0.5 * r_norm * r_norm;
        let g_norm = norm_inf(&g);
        // Duality gap of the τ subproblem, with dual point r (g = Aᵀr).
        let gap = (r_norm * r_norm - dot(b, &r) + tau * g_norm).max(0.0);
        let rel_gap = gap / (r_norm * r_norm).max(floor * floor);
        let feasible = r_norm <= delta * (1.0 + 1e-6) || r_norm <= floor;
        if feasible {
            let l1 = norm1(&x);
            if best.as_ref().map_or(true, |(bl, _)| l1 < *bl) {
                best = Some((l1, x.clone()));
            }
        }

        let on_target = feasible && rel_gap <= opts.opt_tol && r_norm >= delta * (1.0 - 10.0 * opts.opt_tol);
        if r_norm <= floor || on_target {
            converged = true;
            break;
        }
        if matvecs >= opts.max_matvecs {
            break;
        }

        // Newton update of τ once the subproblem is solved; inexact solves let
        // τ overshoot the root, which costs optimality at δ = 0.
        if rel_gap <= opts.opt_tol && g_norm > 0.0 {
            let tau_old = tau;
            tau = (tau + r_norm * (r_norm - target) / g_norm).max(0.0);
            if tau < tau_old {
                project_l1_ball(&mut x, tau);
                residual(&x, &mut r, &mut ax, &mut matvecs);
                a.matvec_t(&r, &mut g);
                matvecs += 1;
            }
            f_hist = [f64::NEG_INFINITY; GLL_MEMORY];
            if tau != tau_old {
                continue;
            }
        }

        // Spectral projected gradient step on ½‖b − Ax‖², gradient −g.
        iterations += 1;
        for ((d, &xi), &gi) in dx.iter_mut().zip(&x).zip(&g) {
            *d = xi + step * gi;
        }
        project_l1_ball(&mut dx, tau);
        for (d, &xi) in dx.iter_mut().zip(&x) {
            *d -= xi;
        }
        let gtd = -dot(&g, &dx);
        if gtd >= 0.0 || dx.iter().all(|&v| v == 0.0) {
            // No descent direction left: the subproblem is solved to precision.
            if g_norm > 0.0 && tau > 0.0 {
                let tau_old = tau;
                tau = (tau + r_norm * (r_norm - target) / g_norm).max(0.0);
                if tau > tau_old * (1.0 + 1e-14) {
                    f_hist = [f64::NEG_INFINITY; GLL_MEMORY];
                    continue;
                }
            }
            break;
        }
        a.matvec(&dx, &mut adx);
        matvecs += 1;
        f_hist[iterations % GLL_MEMORY] = f;
        let f_max = f_hist.iter().cloned().fold(f, f64::max);
        let mut alpha = 1.0;
        let mut f_new;
        loop {
            for ((rn, &ri), &ad) in r_new.iter_mut().zip(&r).zip(&adx) {
                *rn = ri - alpha * ad;
            }
            f_new = 0.5 * dot(&r_new, &r_new);
            if f_new <= f_max + ARMIJO * alpha * gtd || alpha < 1e-10 {
                break;
            }
            alpha *= 0.5;
        }
        for ((xn, &xi), &d) in x_new.iter_mut().zip(&x).zip(&dx) {
            *xn = xi + alpha * d;
        }
        since_refresh += 1;
        if since_refresh >= 50 {
            since_refresh = 0;
            residual(&x_new, &mut r_new, &mut ax, &mut matvecs);
        }
        a.matvec_t(&r_new, &mut g_new);
        matvecs += 1;

        // Barzilai–Borwein step from s = x_new − x, y = ∇f_new − ∇f = g − g_new.
        let mut sts = 0.0;
        let mut sty = 0.0;
        for j in 0..p {
            let s = x_new[j] - x[j];
            sts += s * s;
            sty += s * (g[j] - g_new[j]);
        }
        step = if sty <= 0.0 {
            STEP_MAX
        } else {
            (sts / sty).clamp(STEP_MIN, STEP_MAX)
        };
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut r, &mut r_new);
        std::mem::swap(&mut g, &mut g_new);

        if iterations % SUBSPACE_EVERY == 0 {
            if let Some(mut cand) = subspace_step(a, b, &x, tau) {
                project_l1_ball(&mut cand, tau);
                residual(&cand, &mut r_new, &mut ax, &mut matvecs);
                if dot(&r_new, &r_new) < dot(&r, &r) {
                    x = cand;
                    std::mem::swap(&mut r, &mut r_new);
                    a.matvec_t(&r, &mut g);
                    matvecs += 1;
                }
            }
        }
    }

    // Report exact residuals; fall back to the best feasible iterate if the
    // last one drifted out of the constraint.
    residual(&x, &mut r, &mut ax, &mut matvecs);
    let mut r_norm = norm2(&r);
    if r_norm > delta * (1.0 + 1e-6) && r_norm > floor {
        if let Some((_, bx)) = best {
            let mut rb = vec![0.0; n];
            residual(&bx, &mut rb, &mut ax, &mut matvecs);
            let rb_norm = norm2(&rb);
            if rb_norm < r_norm {
                x = bx;
                r_norm = rb_norm;
            }
        }
        converged = converged && (r_norm <= delta * (1.0 + 1e-6) || r_norm <= floor);
    }
    if delta == 0.0 && r_norm <= floor {
        if let Some((px, pr)) = polish_support(a, b, &x, floor) {
            x = px;
            r_norm = pr;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PceError::InvalidArgument(
            "solver produced non-finite coefficients".into(),
        ));
    }
    Ok(RecoveryResult {
        l1_norm: norm1(&x),
        coefficients: x,
        residual_norm: r_norm,
        iterations,
        matvecs,
        converged,
        delta_or_lambda: delta,
        tau,
    })
}

/// Exact minimizer of `½‖b − Ax‖²` over the face of the ℓ1 ball selected by
/// the support and signs of `x`, or the segment towards it up to the first
/// sign change.
fn subspace_step(a: &DenseMatrix, b: &[f64], x: &[f64], tau: f64) -> Option<Vec<f64>> {
    let n = a.rows();
    let mut support: Vec<usize> = (0..x.len()).filter(|&j| x[j] != 0.0).collect();
    if support.len() > n {
        // Vertices of the optimal face have at most n entries; keep the largest.
        support.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()));
        support.truncate(n);
        support.sort_unstable();
    }
    let k = support.len();
    if k == 0 {
        return None;
    }
    let signs: Vec<f64> = support.iter().map(|&j| x[j].signum()).collect();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for i in 0..n {
        let row = a.row(i);
        for (ii, &ji) in support.iter().enumerate() {
            let v = row[ji];
            rhs[ii] += v * b[i];
            for (jj, &jj_col) in support.iter().enumerate().skip(ii) {
                gram[ii * k + jj] += v * row[jj_col];
            }
        }
    }
    for ii in 0..k {
        for jj in 0..ii {
            gram[ii * k + jj] = gram[jj * k + ii];
        }
    }
    let z0 = crate::linalg::cholesky_solve(&gram, k, &rhs)?;
    let s_z0 = dot(&signs, &z0);
    let z = if s_z0 <= tau {
        z0
    } else {
        let w = crate::linalg::cholesky_solve(&gram, k, &signs)?;
        let s_w = dot(&signs, &w);
        if s_w <= 0.0 {
            return None;
        }
        let mu = (s_z0 - tau) / s_w;
        z0.iter().zip(&w).map(|(a, b)| a - mu * b).collect()
    };
    let mut t = 1.0f64;
    let mut blocking = None;
    for (ii, &j) in support.iter().enumerate() {
        if z[ii] * signs[ii] < 0.0 {
            let tj = x[j] / (x[j] - z[ii]);
            if tj < t {
                t = tj;
                blocking = Some(ii);
            }
        }
    }
    let mut out = vec![0.0; x.len()];
    for (ii, &j) in support.iter().enumerate() {
        let v = x[j] + t * (z[ii] - x[j]);
        out[j] = if v * signs[ii] > 0.0 && blocking != Some(ii) {
            v
        } else {
            0.0
        };
    }
    Some(out)
}

/// Replace a basis-pursuit solution by the exact interpolant on its
/// numerical support when that stays feasible and lowers the ℓ1 norm.
/// First-order iterates leave tiny entries off the support; this removes them.
fn polish_support(a: &DenseMatrix, b: &[f64], x: &[f64], floor: f64) -> Option<(Vec<f64>, f64)> {
    let (n, p) = (a.rows(), a.cols());
    let peak = norm_inf(x);
    if peak == 0.0 {
        return None;
    }
    let mut current = norm1(x);
    let mut best = None;
    let mut last_len = usize::MAX;
    for rel in [1e-3, 1e-4, 1e-5, 1e-6, 1e-7] {
        let support: Vec<usize> = (0..p).filter(|&j| x[j].abs() > rel * peak).collect();
        if support.len() == last_len || support.len() > n {
            continue;
        }
        last_len = support.len();
        let k = support.len();
        let mut sub = Vec::with_capacity(n * k);
        for i in 0..n {
            sub.extend(support.iter().map(|&j| a.get(i, j)));
        }
        let Some(coef) = crate::linalg::lstsq(&sub, n, k, b) else {
            continue;
        };
        let mut cand = vec![0.0; p];
        for (&j, &c) in support.iter().zip(&coef) {
            cand[j] = c;
        }
        let mut ax = vec![0.0; n];
        a.matvec(&cand, &mut ax);
        let res = ax.iter().zip(b).map(|(u, v)| (v - u).powi(2)).sum::<f64>().sqrt();
        let l1 = norm1(&cand);
        if res <= floor && l1 <= current {
            current = l1;
            best = Some((cand, res));
        }
    }
    best
}

/// `min ½‖b − Ac‖² + λ‖c‖₁` on a measurement system.
pub fn solve_lasso_regularized(
    system: &MeasurementSystem,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    solve_lasso_matrix(&system.matrix, &system.rhs, lambda, opts)
}

/// Lasso by the homotopy path from `λ_max = ‖Aᵀb‖_∞` down to `λ`, which
/// ends at the exact minimizer.
pub fn solve_lasso_matrix(a: &DenseMatrix, b: &[f64], lambda: f64, opts: &SolverOptions) -> Result<RecoveryResult> {
    check_system(a, b)?;
    if !(lambda > 0.0) {
        return invalid("Lasso regularization must be positive");
    }
    let path = homotopy(a, b, &[], lambda, 0.0, opts.max_matvecs);
    Ok(RecoveryResult {
        l1_norm: norm1(&path.last),
        tau: norm1(&path.last),
        coefficients: path.last,
        residual_norm: path.residual_norm,
        iterations: path.steps,
        matvecs: path.matvecs,
        converged: path.complete && path.lambda <= lambda,
        delta_or_lambda: lambda,
    })
}
