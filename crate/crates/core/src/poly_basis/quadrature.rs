//! Gauss rules from the Jacobi matrix of the three-term recurrence.
//!
//! Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix and
//! the weights are the squared first components of its normalized
//! eigenvectors. Both measures are probability measures, so the weights sum
//! to one.

use serde::{Deserialize, Serialize};

use super::Family;
use crate::error::{invalid, PceError, Result};

const MAX_QL_SWEEPS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `n`-point Gauss rule for the family's probability measure.
pub fn gauss_rule(family: Family, n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return invalid("a Gauss rule needs at least one node");
    }
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    for k in 1..n {
        let kf = k as f64;
        off[k - 1] = match family {
            Family::Hermite => kf.sqrt(),
            Family::Legendre => kf / (4.0 * kf * kf - 1.0).sqrt(),
        };
    }
    let mut first = vec![0.0; n];
    first[0] = 1.0;
    tridiagonal_ql(&mut diag, &mut off, &mut first)?;

    let mut pairs: Vec<(f64, f64)> = diag.into_iter().zip(first).map(|(x, v)| (x, v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
///
/// `diag` is overwritten with the eigenvalues. `off[i]` couples rows `i` and
/// `i + 1` (the last entry is ignored). `first` starts as `e_1` and ends as
/// the first row of the eigenvector matrix.
fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64], first: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if n > 0 {
        off[n - 1] = 0.0;
    }
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_QL_SWEEPS {
                return Err(PceError::EigenNoConvergence {
                    index: l,
                    iterations: sweeps,
                });
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let z = first[i + 1];
                first[i + 1] = s * first[i] + c * z;
                first[i] = c * first[i] - s * z;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}
