//! Parametric qubit and qutrit channel families.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::KrausSet;
use crate::error::{Error, Result};
use crate::linalg::{diag, from_real_rows, zeros, ComplexMatrix};

const RANGE_SLACK: f64 = 1e-9;

/// Which Kraus decomposition of the qutrit amplitude-damping channel to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdDecomposition {
    /// The ladder operators `A_0, A_1, A_2`.
    #[default]
    Canonical,
    /// The single-step fidelity optimum obtained by rotating `A_0` and `A_2`.
    Optimal,
}

/// Named channel constructors.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelFamily {
    QubitExtreme { theta: f64, phi: f64 },
    QubitMixture { lambda: f64, theta: f64, phi: f64, theta2: f64, phi2: f64 },
    QutritDephasing { gamma: f64 },
    QutritAmplitudeDamping { p: f64, decomposition: AdDecomposition },
    Raw(KrausSet),
}

impl ChannelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelFamily::QubitExtreme { .. } => "qubit-extreme",
            ChannelFamily::QubitMixture { .. } => "qubit-mixture",
            ChannelFamily::QutritDephasing { .. } => "qutrit-dephasing",
            ChannelFamily::QutritAmplitudeDamping { .. } => "qutrit-ad",
            ChannelFamily::Raw(_) => "raw",
        }
    }

    pub fn build(&self) -> Result<KrausSet> {
        match *self {
            ChannelFamily::QubitExtreme { theta, phi } => build_qubit_extreme(theta, phi),
            ChannelFamily::QubitMixture { lambda, theta, phi, theta2, phi2 } => {
                build_qubit_mixture(lambda, theta, phi, theta2, phi2)
            }
            ChannelFamily::QutritDephasing { gamma } => build_qutrit_dephasing(gamma),
            ChannelFamily::QutritAmplitudeDamping { p, decomposition } => match decomposition {
                AdDecomposition::Canonical => build_qutrit_amplitude_damping(p),
                AdDecomposition::Optimal => build_ad_optimal_decomposition(p),
            },
            ChannelFamily::Raw(ref set) => Ok(set.clone()),
        }
    }
}

impl From<KrausSet> for ChannelFamily {
    fn from(set: KrausSet) -> Self {
        ChannelFamily::Raw(set)
    }
}

fn check_angle(name: &str, value: f64) -> Result<()> {
    if !(-RANGE_SLACK..=PI + RANGE_SLACK).contains(&value) {
        return Err(Error::Parameter(format!("{name} = {value} is outside [0, pi]")));
    }
    Ok(())
}

fn check_probability(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Parameter(format!("{name} = {value} is outside [0, 1]")));
    }
    Ok(())
}

fn extreme_operators(theta: f64, phi: f64) -> [ComplexMatrix; 2] {
    [
        diag(&[theta.cos(), phi.cos()]),
        from_real_rows(&[&[0.0, phi.sin()], &[theta.sin(), 0.0]]),
    ]
}

/// Extreme-point qubit channel `T_0 = diag(cos theta, cos phi)`,
/// `T_1 = [[0, sin phi], [sin theta, 0]]`.
pub fn build_qubit_extreme(theta: f64, phi: f64) -> Result<KrausSet> {
    check_angle("theta", theta)?;
    check_angle("phi", phi)?;
    KrausSet::new(extreme_operators(theta, phi).into())
}

/// Convex combination `lambda T_{theta,phi} + (1 - lambda) T_{theta2,phi2}`
/// with the four operators `sqrt(lambda) T_0, sqrt(lambda) T_1,
/// sqrt(1-lambda) T'_0, sqrt(1-lambda) T'_1`. No operator is pruned.
pub fn build_qubit_mixture(lambda: f64, theta: f64, phi: f64, theta2: f64, phi2: f64) -> Result<KrausSet> {
    check_probability("lambda", lambda)?;
    for (name, v) in [("theta", theta), ("phi", phi), ("theta2", theta2), ("phi2", phi2)] {
        check_angle(name, v)?;
    }
    let a = Complex64::new(lambda.sqrt(), 0.0);
    let b = Complex64::new((1.0 - lambda).sqrt(), 0.0);
    let [t0, t1] = extreme_operators(theta, phi);
    let [s0, s1] = extreme_operators(theta2, phi2);
    KrausSet::new(vec![t0 * a, t1 * a, s0 * b, s1 * b])
}

/// Three diagonal Kraus operators of the qutrit dephasing channel, which damps
/// the `(m, n)` coherence by `exp(-gamma (m - n)^2 / 2)`.
pub fn build_qutrit_dephasing(gamma: f64) -> Result<KrausSet> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::Parameter(format!("gamma = {gamma} must be finite and >= 0")));
    }
    let q = (-gamma / 2.0).exp();
    let q2 = q * q;
    let q3 = q2 * q;
    let q4 = q2 * q2;
    let q6 = q3 * q3;
    let q8 = q4 * q4;

    let d0 = ((1.0 - q4) / 2.0).max(0.0).sqrt();
    let mut operators = vec![diag(&[-d0, 0.0, d0])];

    let root = (8.0 * q2 + q8).sqrt();
    let r6 = (8.0 + q6).sqrt();
    for sign in [1.0, -1.0] {
        let numerator = 2.0 + q4 + sign * root;
        if numerator < 1e-14 {
            // removable 0/0 in alpha_- at q = 1; the operator vanishes
            operators.push(zeros(3));
            continue;
        }
        let alpha = (q3 * r6 + sign * (4.0 - q6)) / (r6 + sign * 3.0 * q3);
        let coef = (numerator / (2.0 * (2.0 + alpha * alpha))).sqrt();
        operators.push(diag(&[coef, coef * alpha, coef]));
    }
    KrausSet::new(operators)
}

fn ad_entries(p: f64) -> (f64, f64, f64) {
    ((1.0 - p).sqrt(), p.sqrt(), (2.0 * p * (1.0 - p)).sqrt())
}

/// Qutrit amplitude damping with its ladder Kraus operators.
pub fn build_qutrit_amplitude_damping(p: f64) -> Result<KrausSet> {
    check_probability("p", p)?;
    let (s1, sp, s12) = ad_entries(p);
    let a0 = diag(&[1.0, s1, 1.0 - p]);
    let a1 = from_real_rows(&[&[0.0, sp, 0.0], &[0.0, 0.0, s12], &[0.0, 0.0, 0.0]]);
    let a2 = from_real_rows(&[&[0.0, 0.0, p], &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
    KrausSet::new(vec![a0, a1, a2])
}

/// The single-step optimal decomposition of qutrit amplitude damping:
/// `(A_0 + A_2)/sqrt 2, A_1, (A_2 - A_0)/sqrt 2`.
pub fn build_ad_optimal_decomposition(p: f64) -> Result<KrausSet> {
    check_probability("p", p)?;
    let (s1, sp, s12) = ad_entries(p);
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let t0 = from_real_rows(&[&[1.0, 0.0, p], &[0.0, s1, 0.0], &[0.0, 0.0, 1.0 - p]]) * h;
    let t1 = from_real_rows(&[&[0.0, sp, 0.0], &[0.0, 0.0, s12], &[0.0, 0.0, 0.0]]);
    let t2 = from_real_rows(&[&[1.0, 0.0, -p], &[0.0, s1, 0.0], &[0.0, 0.0, 1.0 - p]]) * (-h);
    KrausSet::new(vec![t0, t1, t2])
}
