//! Unitary freedom of Kraus decompositions.
//!
//! A unitary `U` acting on the operator index, `T~_i = sum_j U_ij T_j`,
//! changes the environment measurement but not the channel. Unitaries that
//! are phase-diagonal times a permutation only relabel outcomes and rephase
//! operators, so they leave every fidelity unchanged.

use num_complex::Complex64;

use super::KrausSet;
use crate::error::{Error, Result};
use crate::linalg::{identity, max_abs_entry, unitarity_error, ComplexMatrix, TOL_STRUCTURAL};

/// Tolerance for matching operators up to a phase.
pub const TOL_EQUIVALENCE: f64 = 1e-8;

/// Unitary acting on the index of a Kraus set.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingUnitary(ComplexMatrix);

impl MixingUnitary {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "mixing unitary must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let err = unitarity_error(&matrix);
        if err > TOL_STRUCTURAL {
            return Err(Error::Parameter(format!("mixing matrix is not unitary (error {err:.3e})")));
        }
        Ok(MixingUnitary(matrix))
    }

    /// Caller guarantees unitarity.
    pub(crate) fn from_trusted(matrix: ComplexMatrix) -> Self {
        MixingUnitary(matrix)
    }

    pub fn identity(m: usize) -> Self {
        MixingUnitary(identity(m))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }
}

/// `T~_i = sum_j U_ij T_j`.
pub fn apply_mixing(set: &KrausSet, u: &MixingUnitary) -> Result<KrausSet> {
    if u.size() != set.len() {
        return Err(Error::Dimension(format!(
            "mixing unitary is {}x{} but the set has {} operators",
            u.size(),
            u.size(),
            set.len()
        )));
    }
    Ok(mix_unchecked(set, u.matrix()))
}

pub(crate) fn mix_unchecked(set: &KrausSet, u: &ComplexMatrix) -> KrausSet {
    let d = set.dim();
    let ops = set.operators();
    let mixed = (0..ops.len())
        .map(|i| {
            let mut acc = ComplexMatrix::zeros(d, d);
            for (j, t) in ops.iter().enumerate() {
                let c = u[(i, j)];
                if c != Complex64::new(0.0, 0.0) {
                    acc += t * c;
                }
            }
            acc
        })
        .collect();
    KrausSet::from_trusted(d, mixed)
}

/// Phase `c` with `b = c a`, when one exists within tolerance.
fn phase_match(a: &ComplexMatrix, b: &ComplexMatrix) -> bool {
    let (k, pivot) = a
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .map(|(k, z)| (k, *z))
        .expect("non-empty matrix");
    if pivot.norm() < TOL_EQUIVALENCE {
        return max_abs_entry(a) < TOL_EQUIVALENCE && max_abs_entry(b) < TOL_EQUIVALENCE;
    }
    let c = b.iter().nth(k).copied().expect("same shape") / pivot;
    if (c.norm() - 1.0).abs() > TOL_EQUIVALENCE {
        return false;
    }
    a.iter().zip(b.iter()).all(|(x, y)| (y - c * x).norm() <= TOL_EQUIVALENCE)
}

fn match_from(a: &[ComplexMatrix], b: &[ComplexMatrix], i: usize, used: &mut [bool]) -> bool {
    if i == a.len() {
        return true;
    }
    for j in 0..b.len() {
        if !used[j] && phase_match(&a[i], &b[j]) {
            used[j] = true;
            if match_from(a, b, i + 1, used) {
                return true;
            }
            used[j] = false;
        }
    }
    false
}

/// Whether `b` is obtained from `a` by permuting and rephasing operators.
///
/// The shorter set is padded with zero operators first; sets on different
/// dimensions are never equivalent.
pub fn equivalent_decompositions(a: &KrausSet, b: &KrausSet) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let m = a.len().max(b.len());
    let a = a.padded(m);
    let b = b.padded(m);
    let mut used = vec![false; m];
    match_from(a.operators(), b.operators(), 0, &mut used)
}
