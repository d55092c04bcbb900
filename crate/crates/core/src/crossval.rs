//! Two-fold cross-validation of the BPDN tolerance δ.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PceError, Result};
use crate::l1_solver::{assemble, solve_bpdn, solve_bpdn_path, RecoveryResult, SolverOptions};
use crate::rng::rng_from_seed;
use crate::sampler::SampleBatch;

pub const GRID_LEN: usize = 121;

/// `10^x` for `x = 1, 0.95, …, −5`, largest first.
pub fn delta_grid() -> Vec<f64> {
    (0..GRID_LEN).map(|i| 10f64.powf((20.0 - i as f64) / 20.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValResult {
    pub delta_star: f64,
    pub delta_grid: Vec<f64>,
    /// `(ε⁽¹⁾, ε⁽²⁾)` for each grid value.
    pub fold_errors: Vec<(f64, f64)>,
    pub chosen_delta0: f64,
    pub seed: u64,
}

impl CrossValResult {
    /// `ε⁽¹⁾ + ε⁽²⁾` at each grid value.
    pub fn error_sums(&self) -> Vec<f64> {
        self.fold_errors.iter().map(|(a, b)| a + b).collect()
    }

    /// `delta,eps_1,eps_2,sum` rows in grid order.
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta", "eps_1", "eps_2", "sum"])?;
        for (d, (e1, e2)) in self.delta_grid.iter().zip(&self.fold_errors) {
            w.write_record([d.to_string(), e1.to_string(), e2.to_string(), (e1 + e2).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Split the batch into two halves by a seeded permutation and pick δ.
pub fn cross_validate_delta(
    batch: &SampleBatch,
    qoi_values: &[f64],
    opts: &SolverOptions,
    seed: u64,
) -> Result<CrossValResult> {
    let n = batch.len();
    if qoi_values.len() != n {
        return Err(PceError::DimensionMismatch {
            expected: n,
            got: qoi_values.len(),
        });
    }
    if n % 2 != 0 || n < 4 {
        return invalid(format!(
            "cross-validation needs an even sample count of at least 4, got {n}"
        ));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let (first, second) = perm.split_at(n / 2);
    let mut res = cross_validate_split(batch, qoi_values, opts, first, second)?;
    res.seed = seed;
    Ok(res)
}

/// Cross-validation on an explicit pair of folds.
pub fn cross_validate_split(
    batch: &SampleBatch,
    qoi_values: &[f64],
    opts: &SolverOptions,
    fold_a: &[usize],
    fold_b: &[usize],
) -> Result<CrossValResult> {
    if fold_a.is_empty() || fold_b.is_empty() {
        return invalid("both folds must be non-empty");
    }
    let grid = delta_grid();
    let e1 = fold_curve(batch, qoi_values, opts, fold_a, fold_b, &grid)?;
    let e2 = fold_curve(batch, qoi_values, opts, fold_b, fold_a, &grid)?;
    let fold_errors: Vec<(f64, f64)> = e1.into_iter().zip(e2).collect();
    // Grid runs from large to small δ; `<=` lets later (smaller) δ win ties.
    let mut best = 0;
    for i in 1..grid.len() {
        let (a, b) = fold_errors[i];
        let (ba, bb) = fold_errors[best];
        if a + b <= ba + bb {
            best = i;
        }
    }
    let chosen_delta0 = grid[best];
    Ok(CrossValResult {
        delta_star: std::f64::consts::SQRT_2 * chosen_delta0,
        delta_grid: grid,
        fold_errors,
        chosen_delta0,
        seed: 0,
    })
}

/// Weighted validation residuals `‖W(Ψ_val c_δ − u_val)‖₂` for every δ, training on
/// `train`. All grid values come from one homotopy pass.
fn fold_curve(
    batch: &SampleBatch,
    qoi_values: &[f64],
    opts: &SolverOptions,
    train: &[usize],
    val: &[usize],
    grid: &[f64],
) -> Result<Vec<f64>> {
    let train_batch = batch.subset(train);
    let train_u: Vec<f64> = train.iter().map(|&i| qoi_values[i]).collect();
    let system = assemble(&train_batch, &train_u)?;
    let val_u: Vec<f64> = val.iter().map(|&i| qoi_values[i]).collect();
    let val_system = assemble(&batch.subset(val), &val_u)?;
    let (psi_val, val_u) = (val_system.matrix, val_system.rhs);

    let solutions = solve_bpdn_path(&system.matrix, &system.rhs, grid, opts, None)?;
    let mut pred = vec![0.0; val.len()];
    Ok(solutions
        .iter()
        .map(|res| {
            psi_val.matvec(&res.coefficients, &mut pred);
            pred.iter()
                .zip(&val_u)
                .map(|(p, u)| (p - u).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// One BPDN solve on the full weighted system at the cross-validated δ.
pub fn final_recovery(
    batch: &SampleBatch,
    qoi_values: &[f64],
    delta_star: f64,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    let system = assemble(batch, qoi_values)?;
    solve_bpdn(&system, delta_star, opts)
}
