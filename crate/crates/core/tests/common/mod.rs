//! Reference implementations shared by the integration suites. Nothing here
//! calls into the library's kernels: absolute values come from a one-sided
//! Jacobi SVD and fidelities from explicit maximally entangled vectors.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use kraus_feedback::channels::KrausSet;

pub type CM = DMatrix<Complex64>;

const JACOBI_SWEEPS: usize = 60;

/// Right singular vectors and singular values by one-sided Jacobi rotations
/// on the columns of `m`.
pub fn jacobi_svd(m: &CM) -> (CM, Vec<f64>) {
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = CM::identity(n, n);
    for _ in 0..JACOBI_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = a.column(p).iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = a.column(q).iter().map(|z| z.norm_sqr()).sum();
                let g: Complex64 = a.column(p).iter().zip(a.column(q).iter()).map(|(x, y)| x.conj() * y).sum();
                let gn = g.norm();
                if gn <= 1e-300 || gn <= 1e-17 * (alpha * beta).sqrt() {
                    continue;
                }
                off = off.max(gn / (alpha * beta).sqrt());
                // rephase column q so that the overlap is real, then rotate
                let phase = g.conj() / gn;
                let zeta = (beta - alpha) / (2.0 * gn);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let x = mat[(r, p)];
                        let y = mat[(r, q)] * phase;
                        mat[(r, p)] = x * c - y * s;
                        mat[(r, q)] = x * s + y * c;
                    }
                }
            }
        }
        if off < 1e-16 {
            break;
        }
    }
    let sigma = (0..n).map(|j| a.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
    (v, sigma)
}

/// `|m| = W diag(s) W^dag` from the Jacobi SVD.
pub fn oracle_abs(m: &CM) -> CM {
    let (w, s) = jacobi_svd(m);
    let n = m.ncols();
    let mut out = CM::zeros(n, n);
    for (k, &sk) in s.iter().enumerate() {
        let col = w.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += col[i] * col[j].conj() * sk;
            }
        }
    }
    out
}

pub fn oracle_trace_norm(m: &CM) -> f64 {
    jacobi_svd(m).1.iter().sum()
}

/// `|Psi> = d^{-1/2} sum_i |i>|i>`.
fn max_entangled(d: usize) -> DVector<Complex64> {
    let mut psi = DVector::zeros(d * d);
    for i in 0..d {
        psi[i * d + i] = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    }
    psi
}

/// `sum_K |<Psi| (I (x) K) |Psi>|^2`, applying each `K` to the second factor
/// of the explicit vector.
pub fn oracle_fidelity(terms: &[CM], d: usize) -> f64 {
    let psi = max_entangled(d);
    terms
        .iter()
        .map(|k| {
            let mut out = DVector::<Complex64>::zeros(d * d);
            for i in 0..d {
                for a in 0..d {
                    for b in 0..d {
                        out[i * d + a] += k[(a, b)] * psi[i * d + b];
                    }
                }
            }
            psi.dotc(&out).norm_sqr()
        })
        .sum()
}

fn sequences(m: usize, n: usize) -> Vec<Vec<usize>> {
    (0..m.pow(n as u32))
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let x = idx % m;
                    idx /= m;
                    x
                })
                .collect()
        })
        .collect()
}

/// Markovian terms `|T_{x_n}| ... |T_{x_1}|` for per-step sets.
pub fn oracle_markovian(steps: &[&KrausSet]) -> f64 {
    let d = steps[0].dim();
    let abs: Vec<Vec<CM>> = steps.iter().map(|s| s.operators().iter().map(oracle_abs).collect()).collect();
    let n = steps.len();
    let m = steps[0].len();
    let terms: Vec<CM> = sequences(m, n)
        .into_iter()
        .map(|seq| seq.iter().enumerate().fold(CM::identity(d, d), |acc, (k, &x)| &abs[k][x] * acc))
        .collect();
    oracle_fidelity(&terms, d)
}

/// Bayesian terms `B_n` with `B_1 = |T_{x_1}|`, `B_k = |T_{x_k} B_{k-1}|`.
pub fn oracle_bayesian(steps: &[&KrausSet]) -> f64 {
    let d = steps[0].dim();
    let n = steps.len();
    let m = steps[0].len();
    let terms: Vec<CM> = sequences(m, n)
        .into_iter()
        .map(|seq| {
            seq.iter()
                .enumerate()
                .fold(CM::identity(d, d), |acc, (k, &x)| oracle_abs(&(&steps[k].operators()[x] * acc)))
        })
        .collect();
    oracle_fidelity(&terms, d)
}

/// Haar unitary from Gram-Schmidt on a complex Gaussian matrix, which gives
/// the same measure as phase-fixed QR.
pub fn oracle_haar<R: Rng>(n: usize, rng: &mut R) -> CM {
    let mut cols: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = DVector::from_fn(n, |_, _| {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&v);
                v -= c * proj;
            }
        }
        let norm = v.norm();
        cols.push(v / Complex64::new(norm, 0.0));
    }
    CM::from_columns(&cols)
}

/// Random `m`-operator Kraus set on `C^d`, cut from the first `d` columns of a
/// Haar unitary on `C^{md}`.
pub fn random_kraus<R: Rng>(d: usize, m: usize, rng: &mut R) -> KrausSet {
    let u = oracle_haar(m * d, rng);
    let ops = (0..m).map(|k| u.view((k * d, 0), (d, d)).into_owned()).collect();
    KrausSet::new(ops).expect("isometry blocks form a channel")
}

pub fn random_matrix<R: Rng>(d: usize, rng: &mut R) -> CM {
    CM::from_fn(d, d, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn max_diff(a: &CM, b: &CM) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn mix(set: &KrausSet, u: &CM) -> KrausSet {
    let d = set.dim();
    let ops = set.operators();
    let mixed = (0..ops.len())
        .map(|i| ops.iter().enumerate().fold(CM::zeros(d, d), |acc, (j, t)| acc + t * u[(i, j)]))
        .collect();
    KrausSet::new(mixed).expect("mixing preserves the channel")
}
