//! Total-order multi-index sets.
//!
//! A set of dimension `d` and order `p` holds every `k ∈ ℕ^d` with
//! `‖k‖₁ ≤ p`, graded by total order. Within one grade the indices are
//! listed with the first coordinate descending, then the second, and so on,
//! so `(d, p) = (2, 2)` enumerates `(0,0) (1,0) (0,1) (2,0) (1,1) (0,2)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PceError, Result};

/// Per-dimension polynomial orders of one tensor-product basis function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn total_order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiIndexSet {
    dim: usize,
    order: u32,
    indices: Vec<MultiIndex>,
}

impl MultiIndexSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, j: usize) -> Option<&MultiIndex> {
        self.indices.get(j)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    /// Position of `k` in the ordering, if present.
    pub fn position(&self, k: &[u32]) -> Option<usize> {
        self.indices.iter().position(|m| m.0 == k)
    }
}

/// Build the graded total-order set for `d ≥ 1` dimensions and order `p`.
pub fn build_index_set(d: usize, p: u32) -> Result<MultiIndexSet> {
    if d == 0 {
        return invalid("multi-index dimension must be at least 1");
    }
    let count = basis_count(d as u64, p as u64)?;
    let mut indices = Vec::with_capacity(count as usize);
    let mut scratch = vec![0u32; d];
    for grade in 0..=p {
        push_grade(&mut scratch, 0, grade, &mut indices);
    }
    debug_assert_eq!(indices.len() as u64, count);
    Ok(MultiIndexSet {
        dim: d,
        order: p,
        indices,
    })
}

fn push_grade(scratch: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex(scratch.to_vec()));
        return;
    }
    for k in (0..=remaining).rev() {
        scratch[pos] = k;
        push_grade(scratch, pos + 1, remaining - k, out);
    }
    scratch[pos] = 0;
}

/// Number of basis functions `C(p + d, d)`, exact or an overflow error.
pub fn basis_count(d: u64, p: u64) -> Result<u64> {
    let n = d.checked_add(p).ok_or(PceError::Overflow { n: u64::MAX, k: d })?;
    let k = d.min(p);
    // C(n, i) grows with i up to n/2, so intermediate values never exceed the result.
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc
            .checked_mul(n as u128 - k as u128 + i)
            .ok_or(PceError::Overflow { n, k: d })?
            / i;
        if acc > i64::MAX as u128 {
            return Err(PceError::Overflow { n, k: d });
        }
    }
    Ok(acc as u64)
}
