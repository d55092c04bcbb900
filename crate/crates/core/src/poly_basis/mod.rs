//! Orthonormal Hermite and Legendre bases, tensorized over a total-order set.
//!
//! Hermite polynomials use the probabilists' normalization, orthonormal under
//! the standard normal density. Legendre polynomials are orthonormal under the
//! uniform probability measure on `[-1, 1]`, so `ψ_k(1) = √(2k+1)`.

pub mod hermite;
pub mod quadrature;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PceError, Result};
use crate::index_set::{build_index_set, MultiIndexSet};

pub use quadrature::{gauss_rule, QuadratureRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Probabilists' Hermite, standard normal measure.
    Hermite,
    /// Legendre, uniform measure on `[-1, 1]`.
    Legendre,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Hermite => write!(f, "hermite"),
            Family::Legendre => write!(f, "legendre"),
        }
    }
}

impl FromStr for Family {
    type Err = PceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hermite" => Ok(Family::Hermite),
            "legendre" => Ok(Family::Legendre),
            other => Err(PceError::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

/// Single orthonormal polynomial `ψ_k(x)` via the three-term recurrence.
pub fn eval_1d(family: Family, k: u32, x: f64) -> f64 {
    let mut buf = vec![0.0; k as usize + 1];
    eval_1d_all(family, x, &mut buf);
    buf[k as usize]
}

/// Fill `out[k] = ψ_k(x)` for `k = 0..out.len()`.
pub fn eval_1d_all(family: Family, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    match family {
        Family::Hermite => {
            out[1] = x;
            for k in 1..out.len() - 1 {
                let kf = k as f64;
                out[k + 1] = (x * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
            }
        }
        Family::Legendre => {
            // Classical P_k first, scaled afterwards so that P_k(±1) stays exact.
            out[1] = x;
            for k in 1..out.len() - 1 {
                let kf = k as f64;
                out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
            }
            for (k, v) in out.iter_mut().enumerate().skip(1) {
                *v *= (2.0 * k as f64 + 1.0).sqrt();
            }
        }
    }
}

/// A polynomial family tensorized over a total-order multi-index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    family: Family,
    index_set: MultiIndexSet,
}

impl BasisSpec {
    pub fn new(family: Family, d: usize, p: u32) -> Result<Self> {
        Ok(BasisSpec {
            family,
            index_set: build_index_set(d, p)?,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.index_set.dim()
    }

    pub fn order(&self) -> u32 {
        self.index_set.order()
    }

    /// Number of basis functions `P`.
    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.index_set
    }

    /// Reject points of the wrong dimension, non-finite points, and Legendre
    /// points outside the cube.
    pub fn check_point(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dim() {
            return Err(PceError::DimensionMismatch {
                expected: self.dim(),
                got: xi.len(),
            });
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(PceError::Domain {
                point: xi.to_vec(),
                reason: "non-finite coordinate".into(),
            });
        }
        if self.family == Family::Legendre && xi.iter().any(|v| v.abs() > 1.0) {
            return Err(PceError::Domain {
                point: xi.to_vec(),
                reason: "Legendre points must lie in [-1, 1]^d".into(),
            });
        }
        Ok(())
    }

    /// Per-dimension tables `table[i * (p+1) + k] = ψ_k(ξ_i)`.
    fn fill_tables(&self, xi: &[f64], table: &mut Vec<f64>) {
        let stride = self.order() as usize + 1;
        table.clear();
        table.resize(stride * self.dim(), 0.0);
        for (i, &x) in xi.iter().enumerate() {
            eval_1d_all(self.family, x, &mut table[i * stride..(i + 1) * stride]);
        }
    }

    /// Row of the measurement matrix: `ψ_j(ξ)` for every `j` in set order.
    pub fn eval_row(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        let mut table = Vec::new();
        self.eval_row_into(xi, &mut table, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant of [`BasisSpec::eval_row`].
    pub fn eval_row_into(&self, xi: &[f64], table: &mut Vec<f64>, out: &mut [f64]) -> Result<()> {
        self.check_point(xi)?;
        assert_eq!(out.len(), self.len(), "output row has the wrong length");
        self.fill_tables(xi, table);
        let stride = self.order() as usize + 1;
        for (slot, m) in out.iter_mut().zip(self.index_set.iter()) {
            let mut prod = 1.0;
            for (i, &k) in m.entries().iter().enumerate() {
                prod *= table[i * stride + k as usize];
            }
            *slot = prod;
        }
        Ok(())
    }

    /// Evaluate `∑_j coeffs[j] ψ_j(ξ)`.
    pub fn eval_expansion(&self, coeffs: &[f64], xi: &[f64]) -> Result<f64> {
        if coeffs.len() != self.len() {
            return Err(PceError::DimensionMismatch {
                expected: self.len(),
                got: coeffs.len(),
            });
        }
        let row = self.eval_row(xi)?;
        Ok(row.iter().zip(coeffs).map(|(a, b)| a * b).sum())
    }

    /// Envelope `B(ξ) = max_j |ψ_j(ξ)|`.
    pub fn envelope(&self, xi: &[f64]) -> Result<f64> {
        let mut table = Vec::new();
        let mut dp = Vec::new();
        self.envelope_with(xi, &mut table, &mut dp)
    }

    /// Envelope by dynamic programming over dimensions:
    /// `M_i(q) = max_{k ≤ q} |ψ_k(ξ_i)| · M_{i-1}(q - k)`, `B = M_d(p)`.
    ///
    /// The products are formed in the same order as [`BasisSpec::eval_row`],
    /// so the value equals the brute-force maximum bit for bit.
    pub fn envelope_with(&self, xi: &[f64], table: &mut Vec<f64>, dp: &mut Vec<f64>) -> Result<f64> {
        self.check_point(xi)?;
        self.fill_tables(xi, table);
        let stride = self.order() as usize + 1;
        dp.clear();
        dp.resize(2 * stride, 1.0);
        let (mut prev, mut next) = dp.split_at_mut(stride);
        for i in 0..self.dim() {
            let col = &table[i * stride..(i + 1) * stride];
            for q in 0..stride {
                let mut best = 0.0f64;
                for k in 0..=q {
                    let v = col[k].abs() * prev[q - k];
                    if v > best {
                        best = v;
                    }
                }
                next[q] = best;
            }
            std::mem::swap(&mut prev, &mut next);
        }
        Ok(prev[stride - 1])
    }
}
