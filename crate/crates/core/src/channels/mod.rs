//! Kraus-set data model, trace-preservation checks and channel equality.

mod families;
pub(crate) mod mixing;
mod spec_file;

pub use families::{
    build_ad_optimal_decomposition, build_qubit_extreme, build_qubit_mixture,
    build_qutrit_amplitude_damping, build_qutrit_dephasing, AdDecomposition, ChannelFamily,
};
pub use mixing::{apply_mixing, equivalent_decompositions, MixingUnitary, TOL_EQUIVALENCE};
pub use spec_file::{load_channel_spec, parse_channel_spec, ChannelSpec};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{identity, max_abs_diff, ComplexMatrix};

/// Tolerance on `max |sum T^dag T - I|` for a valid channel.
pub const TOL_CPTP: f64 = 1e-9;
/// Default Frobenius-norm threshold for [`prune`].
pub const TOL_PRUNE: f64 = 1e-12;
/// Choi-matrix tolerance when checking that two sets describe one channel.
pub const TOL_SAME_CHANNEL: f64 = 1e-8;

/// Outcome of [`validate_cptp`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CptpReport {
    /// Largest entrywise deviation of `sum T^dag T` from the identity.
    pub deviation: f64,
    pub tolerance: f64,
}

impl CptpReport {
    pub fn is_valid(&self) -> bool {
        self.deviation <= self.tolerance
    }
}

/// Measures how far `sum_x T_x^dag T_x` is from the identity.
pub fn validate_cptp(operators: &[ComplexMatrix]) -> Result<CptpReport> {
    let dim = common_dim(operators)?;
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for t in operators {
        sum += t.adjoint() * t;
    }
    Ok(CptpReport { deviation: max_abs_diff(&sum, &identity(dim)), tolerance: TOL_CPTP })
}

fn common_dim(operators: &[ComplexMatrix]) -> Result<usize> {
    let first = operators
        .first()
        .ok_or_else(|| Error::Dimension("a Kraus set needs at least one operator".into()))?;
    let dim = first.nrows();
    for (i, t) in operators.iter().enumerate() {
        if t.nrows() != dim || t.ncols() != dim || dim == 0 {
            return Err(Error::Dimension(format!(
                "operator {i} is {}x{}, expected {dim}x{dim}",
                t.nrows(),
                t.ncols()
            )));
        }
    }
    Ok(dim)
}

/// Ordered Kraus operators of one channel step, trace preserving to [`TOL_CPTP`].
#[derive(Clone, Debug, PartialEq)]
pub struct KrausSet {
    dim: usize,
    operators: Vec<ComplexMatrix>,
}

impl KrausSet {
    /// Validates shapes, the operator-count bound `d^2` and trace preservation.
    pub fn new(operators: Vec<ComplexMatrix>) -> Result<Self> {
        let dim = common_dim(&operators)?;
        if operators.len() > dim * dim {
            return Err(Error::Parameter(format!(
                "{} operators exceed the Kraus-rank bound d^2 = {}",
                operators.len(),
                dim * dim
            )));
        }
        let report = validate_cptp(&operators)?;
        if !report.is_valid() {
            return Err(Error::Validation { deviation: report.deviation, tolerance: report.tolerance });
        }
        Ok(KrausSet { dim, operators })
    }

    /// Skips validation. Only for sets derived from a valid set by an
    /// operation known to preserve trace preservation.
    pub(crate) fn from_trusted(dim: usize, operators: Vec<ComplexMatrix>) -> Self {
        debug_assert!(operators.iter().all(|t| t.shape() == (dim, dim)));
        KrausSet { dim, operators }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn into_operators(self) -> Vec<ComplexMatrix> {
        self.operators
    }

    pub fn deviation(&self) -> f64 {
        validate_cptp(&self.operators).map(|r| r.deviation).unwrap_or(f64::INFINITY)
    }

    /// Number of operators with Frobenius norm at least [`TOL_PRUNE`].
    pub fn nonzero_count(&self) -> usize {
        self.operators.iter().filter(|t| t.norm() >= TOL_PRUNE).count()
    }

    /// Appends zero operators up to `count` operators.
    pub fn padded(&self, count: usize) -> KrausSet {
        let mut operators = self.operators.clone();
        while operators.len() < count {
            operators.push(ComplexMatrix::zeros(self.dim, self.dim));
        }
        KrausSet { dim: self.dim, operators }
    }
}

/// Drops operators whose Frobenius norm is below `threshold`.
pub fn prune(set: &KrausSet, threshold: f64) -> KrausSet {
    let kept: Vec<ComplexMatrix> =
        set.operators.iter().filter(|t| t.norm() >= threshold).cloned().collect();
    if kept.is_empty() {
        // unreachable for a trace-preserving set
        return set.clone();
    }
    KrausSet { dim: set.dim, operators: kept }
}

/// `rho -> sum_x T_x rho T_x^dag`.
pub fn apply_channel(set: &KrausSet, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if rho.shape() != (set.dim, set.dim) {
        return Err(Error::Dimension(format!(
            "density matrix is {}x{}, channel acts on dimension {}",
            rho.nrows(),
            rho.ncols(),
            set.dim
        )));
    }
    let mut out = ComplexMatrix::zeros(set.dim, set.dim);
    for t in &set.operators {
        out += t * rho * t.adjoint();
    }
    Ok(out)
}

/// Unnormalised Choi matrix `sum_ij |i><j| (x) T(|i><j|)`.
pub fn choi_matrix(set: &KrausSet) -> ComplexMatrix {
    let d = set.dim;
    let mut choi = ComplexMatrix::zeros(d * d, d * d);
    let mut v = nalgebra::DVector::<Complex64>::zeros(d * d);
    for t in &set.operators {
        for i in 0..d {
            for a in 0..d {
                v[i * d + a] = t[(a, i)];
            }
        }
        choi += &v * v.adjoint();
    }
    choi
}

/// Largest entrywise difference between the Choi matrices of two sets, or
/// `None` when their dimensions differ.
pub fn choi_distance(a: &KrausSet, b: &KrausSet) -> Option<f64> {
    (a.dim == b.dim).then(|| max_abs_diff(&choi_matrix(a), &choi_matrix(b)))
}

/// Whether two Kraus sets describe the same channel.
pub fn same_channel(a: &KrausSet, b: &KrausSet, tol: f64) -> bool {
    choi_distance(a, b).is_some_and(|d| d <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, zeros};

    #[test]
    fn identity_set_has_zero_deviation() {
        let r = validate_cptp(&[identity(2)]).unwrap();
        assert_eq!(r.deviation, 0.0);
        assert!(r.is_valid());
    }

    #[test]
    fn scaled_identity_is_invalid() {
        let r = validate_cptp(&[identity(2) * Complex64::new(0.9, 0.0)]).unwrap();
        assert!((r.deviation - 0.19).abs() < 1e-12);
        assert!(!r.is_valid());
        assert!(matches!(
            KrausSet::new(vec![identity(2) * Complex64::new(0.9, 0.0)]),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        assert!(matches!(validate_cptp(&[identity(2), identity(3)]), Err(Error::Dimension(_))));
        assert!(matches!(validate_cptp(&[]), Err(Error::Dimension(_))));
        assert!(matches!(
            validate_cptp(&[ComplexMatrix::zeros(2, 3)]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn too_many_operators_rejected() {
        let h = Complex64::new(0.5, 0.0);
        let ops = vec![identity(2) * h, identity(2) * h, identity(2) * h, identity(2) * h, zeros(2)];
        assert!(matches!(KrausSet::new(ops), Err(Error::Parameter(_))));
    }

    #[test]
    fn prune_is_explicit() {
        let set = KrausSet::new(vec![identity(2), zeros(2)]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.nonzero_count(), 1);
        let pruned = prune(&set, TOL_PRUNE);
        assert_eq!(pruned.len(), 1);
        assert!(same_channel(&set, &pruned, 1e-14));
    }

    #[test]
    fn choi_of_identity_is_rank_one_projector() {
        let set = KrausSet::new(vec![identity(2)]).unwrap();
        let c = choi_matrix(&set);
        // |Omega><Omega| with Omega = |00> + |11>
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert_eq!(c[(i, j)], Complex64::new(1.0, 0.0));
        }
        assert_eq!(c[(1, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn apply_channel_checks_shape() {
        let set = KrausSet::new(vec![identity(2)]).unwrap();
        assert!(apply_channel(&set, &identity(3)).is_err());
        let rho = diag(&[0.25, 0.75]);
        assert_eq!(apply_channel(&set, &rho).unwrap(), rho);
    }
}
