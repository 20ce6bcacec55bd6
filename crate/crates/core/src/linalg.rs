//! Small dense complex linear algebra: polar decomposition, matrix absolute
//! value, Haar-random unitaries and a handful of helpers.
//!
//! Everything here is sized for the `d <= 4` regime of qubit and qutrit
//! channels; matrices are plain [`nalgebra::DMatrix`] values.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense complex matrix used for Kraus operators, unitaries and absolute values.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Tolerance for structural checks (unitarity, reconstruction, hermiticity).
pub const TOL_STRUCTURAL: f64 = 1e-10;
/// Tolerance for pure arithmetic identities.
pub const TOL_ARITHMETIC: f64 = 1e-12;
/// Singular values below this are treated as zero when completing the unitary
/// polar factor.
pub const TOL_RANK: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Factors `T = V |T|` of a square matrix.
#[derive(Clone, Debug)]
pub struct PolarFactors {
    /// Unitary part `V`, completed deterministically on the kernel of `T`.
    pub unitary_part: ComplexMatrix,
    /// Positive part `|T| = (T^dag T)^{1/2}`.
    pub absolute_part: ComplexMatrix,
}

/// Seed for a reproducible family of random streams.
///
/// Stream `i` of a seed is independent of stream `j != i`, which lets parallel
/// workers draw samples without sharing a generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn stream(self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }

    /// Seed for an independent sub-experiment, e.g. one grid point.
    pub fn derive(self, index: u64) -> RngSeed {
        RngSeed(self.stream(u64::MAX - index).random())
    }
}

impl Default for RngSeed {
    fn default() -> Self {
        RngSeed(0x5eed)
    }
}

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

pub fn zeros(dim: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(dim, dim)
}

/// Builds a matrix from real row-major entries.
pub fn from_real_rows(rows: &[&[f64]]) -> ComplexMatrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    ComplexMatrix::from_fn(r, c, |i, j| Complex64::new(rows[i][j], 0.0))
}

/// Builds a real diagonal matrix.
pub fn diag(values: &[f64]) -> ComplexMatrix {
    let d = values.len();
    ComplexMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(values[i], 0.0) } else { ZERO })
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Largest entrywise modulus of `a - b`. Shapes must agree.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs_entry(m: &ComplexMatrix) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// `max |U^dag U - I|` entrywise.
pub fn unitarity_error(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    max_abs_diff(&(u.adjoint() * u), &identity(u.nrows()))
}

pub fn is_unitary(u: &ComplexMatrix, tol: f64) -> bool {
    unitarity_error(u) <= tol
}

/// `max |M - M^dag|` entrywise.
pub fn hermiticity_error(m: &ComplexMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn require_square(m: &ComplexMatrix, what: &str) -> Result<()> {
    if m.nrows() == 0 || !m.is_square() {
        return Err(Error::Dimension(format!(
            "{what} needs a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Singular value decomposition by LAPACK (`zgesvd`). nalgebra's own SVD
/// returns wrong factors for some nearly rank-deficient inputs, which are
/// common here (damping operators, pruned mixtures).
pub(crate) struct Svd {
    pub u: Option<ComplexMatrix>,
    pub singular_values: Vec<f64>,
    pub v_t: Option<ComplexMatrix>,
}

pub(crate) fn svd(m: &ComplexMatrix, want_u: bool, want_v: bool) -> Svd {
    use ndarray_linalg::SVDInto;
    let a = ndarray::Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)]);
    let (u, s, vt) = a.svd_into(want_u, want_v).expect("LAPACK SVD converges on finite input");
    let back = |x: ndarray::Array2<Complex64>| ComplexMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)]);
    Svd { u: u.map(back), singular_values: s.to_vec(), v_t: vt.map(back) }
}

fn hermitian_part(m: ComplexMatrix) -> ComplexMatrix {
    (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `W diag(sigma) W^dag` from the right singular vectors (`v_t = W^dag`).
fn positive_part(v_t: &ComplexMatrix, sigma: &[f64]) -> ComplexMatrix {
    let mut scaled = v_t.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= Complex64::new(sigma[i].max(0.0), 0.0);
    }
    hermitian_part(v_t.adjoint() * scaled)
}

/// `|M|` for 2x2 matrices: `(M^dag M + |det M| I) / sqrt(tr M^dag M + 2 |det M|)`.
fn abs_2x2(m: &ComplexMatrix) -> ComplexMatrix {
    let a = m.adjoint() * m;
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
    let norm = (a[(0, 0)].re + a[(1, 1)].re + 2.0 * det).sqrt();
    if norm == 0.0 {
        return zeros(2);
    }
    let inv = 1.0 / norm;
    let mut out = a;
    out[(0, 0)] += det;
    out[(1, 1)] += det;
    out *= Complex64::new(inv, 0.0);
    // exact hermiticity
    out[(0, 0)].im = 0.0;
    out[(1, 1)].im = 0.0;
    out[(1, 0)] = out[(0, 1)].conj();
    out
}

/// Polar decomposition `m = V |m|`.
///
/// On the kernel of `m` the unitary factor is completed with the standard
/// basis vectors in index order, orthogonalised against the range.
pub fn polar_decompose(m: &ComplexMatrix) -> Result<PolarFactors> {
    require_square(m, "polar_decompose")?;
    let d = m.nrows();
    let svd = svd(m, true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = svd.singular_values;

    let absolute_part = positive_part(&v_t, &sigma);

    let kept: Vec<usize> = (0..d).filter(|&i| sigma[i] >= TOL_RANK).collect();
    let dropped: Vec<usize> = (0..d).filter(|&i| sigma[i] < TOL_RANK).collect();
    let mut left = u;
    if !dropped.is_empty() {
        let mut basis: Vec<nalgebra::DVector<Complex64>> =
            kept.iter().map(|&i| left.column(i).into_owned()).collect();
        let mut completion = Vec::with_capacity(dropped.len());
        for e in 0..d {
            if completion.len() == dropped.len() {
                break;
            }
            let mut v = nalgebra::DVector::<Complex64>::zeros(d);
            v[e] = ONE;
            // two Gram-Schmidt passes
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dotc(&v);
                    v -= b * proj;
                }
            }
            let n = v.norm();
            if n > 1e-6 {
                v /= Complex64::new(n, 0.0);
                basis.push(v.clone());
                completion.push(v);
            }
        }
        for (slot, v) in dropped.iter().zip(completion) {
            left.set_column(*slot, &v);
        }
    }
    let unitary_part = left * v_t;
    Ok(PolarFactors { unitary_part, absolute_part })
}

/// Matrix absolute value `|m| = (m^dag m)^{1/2}`.
pub fn matrix_abs(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    require_square(m, "matrix_abs")?;
    Ok(abs_unchecked(m))
}

/// [`matrix_abs`] without the shape check; callers guarantee a square input.
pub(crate) fn abs_unchecked(m: &ComplexMatrix) -> ComplexMatrix {
    match m.nrows() {
        1 => ComplexMatrix::from_element(1, 1, Complex64::new(m[(0, 0)].norm(), 0.0)),
        2 => abs_2x2(m),
        _ => {
            let svd = svd(m, false, true);
            positive_part(&svd.v_t.expect("right singular vectors requested"), &svd.singular_values)
        }
    }
}

/// Haar-distributed `dim x dim` unitary.
///
/// Draws a Ginibre matrix of i.i.d. standard complex normals, takes its QR
/// factorisation and rescales the columns of `Q` so that `R` has a positive
/// real diagonal.
pub fn haar_random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if dim == 0 {
        return Err(Error::Dimension("haar_random_unitary needs dim >= 1".into()));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[(i, j)] = Complex64::new(re * scale, im * scale);
        }
    }
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        // a Gaussian matrix is singular with probability zero
        let phase = if n > 0.0 { rjj / n } else { ONE };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}

/// Both sides of `(tr M)^2 = tr M^2 + 2 det M` for a 2x2 matrix.
pub fn trace_sq_identity_check(m: &ComplexMatrix) -> Result<(Complex64, Complex64)> {
    if m.shape() != (2, 2) {
        return Err(Error::Dimension(format!(
            "trace identity needs a 2x2 matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let tr = trace(m);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Ok((tr * tr, trace(&(m * m)) + det * 2.0))
}
