//! Corrected channels and n-step entanglement fidelities.
//!
//! After outcome `x` the recovery `V_x^dag` (from `T_x = V_x |T_x|`) leaves
//! the corrected operator `|T_x|`. Over `n` steps with decompositions
//! `T^(1), ..., T^(n)` of the same channel:
//!
//! * Markovian feedback corrects each step on its own outcome:
//!   `F_n = 1/d^2 sum |tr |T^(n)_{x_n}| ... |T^(1)_{x_1}||^2`.
//! * Bayesian feedback corrects on the whole outcome history:
//!   `F'_n = 1/d^2 sum (tr B_{x_1..x_n})^2` with `B_{x_1} = |T^(1)_{x_1}|` and
//!   `B_{x_1..x_k} = |T^(k)_{x_k} B_{x_1..x_{k-1}}|`.
//!
//! Both sums are evaluated depth first, reusing prefixes. The Markovian sum
//! also has a transfer-matrix form `1/d^2 tr(E_n ... E_1)` with
//! `E_k = sum_x |T^(k)_x| (x) conj(|T^(k)_x|)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{choi_distance, KrausSet, TOL_SAME_CHANNEL};
use crate::error::{Error, Result};
use crate::linalg::{abs_unchecked, commutator, identity, max_abs_entry, polar_decompose, trace, ComplexMatrix};

/// Brute-force evaluation refuses more outcome sequences than this unless forced.
pub const MAX_BRUTE_TERMS: u128 = 100_000_000;
/// Term-count limit of [`fidelity_from_definition`] and the term enumerators.
pub const MAX_DEFINITION_TERMS: usize = 100_000;
const PARALLEL_TERMS: u128 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Markovian,
    Bayesian,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Brute,
    Transfer,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Markovian => "markovian",
            Strategy::Bayesian => "bayesian",
        })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Brute => "brute",
            Method::Transfer => "transfer",
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions {
    pub method: Method,
    /// Lift the [`MAX_BRUTE_TERMS`] guard.
    pub force: bool,
}

impl EvalOptions {
    pub fn transfer() -> Self {
        EvalOptions { method: Method::Transfer, force: false }
    }
}

/// Strategy plus one measurement (Kraus decomposition) per feedback step.
#[derive(Clone, Debug)]
pub struct FeedbackPlan {
    strategy: Strategy,
    decompositions: Vec<KrausSet>,
}

impl FeedbackPlan {
    /// Every step must decompose the same channel (Choi matrices within
    /// [`TOL_SAME_CHANNEL`]).
    pub fn new(strategy: Strategy, decompositions: Vec<KrausSet>) -> Result<Self> {
        let first = decompositions
            .first()
            .ok_or_else(|| Error::Parameter("a feedback plan needs at least one step".into()))?;
        for (k, set) in decompositions.iter().enumerate().skip(1) {
            match choi_distance(first, set) {
                None => {
                    return Err(Error::Dimension(format!(
                        "step {} acts on dimension {}, step 1 on {}",
                        k + 1,
                        set.dim(),
                        first.dim()
                    )))
                }
                Some(dist) if dist > TOL_SAME_CHANNEL => {
                    return Err(Error::ChannelMismatch(format!(
                        "step {} decomposes a different channel (Choi distance {dist:.3e})",
                        k + 1
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(FeedbackPlan { strategy, decompositions })
    }

    /// The same decomposition at each of `steps` steps.
    pub fn stationary(strategy: Strategy, set: KrausSet, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Parameter("a feedback plan needs at least one step".into()));
        }
        Ok(FeedbackPlan { strategy, decompositions: vec![set; steps] })
    }

    /// Caller guarantees all steps decompose one channel.
    pub(crate) fn from_trusted(strategy: Strategy, decompositions: Vec<KrausSet>) -> Self {
        debug_assert!(!decompositions.is_empty());
        FeedbackPlan { strategy, decompositions }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        FeedbackPlan { strategy, decompositions: self.decompositions.clone() }
    }

    pub fn steps(&self) -> usize {
        self.decompositions.len()
    }

    pub fn dim(&self) -> usize {
        self.decompositions[0].dim()
    }

    pub fn decompositions(&self) -> &[KrausSet] {
        &self.decompositions
    }

    /// Number of outcome sequences, saturating.
    pub fn term_count(&self) -> u128 {
        self.decompositions.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
    }
}

/// A fidelity value with how it was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Fidelity clamped to `[0, 1]`.
    pub value: f64,
    /// The value before clamping.
    pub unclamped: f64,
    pub strategy: Strategy,
    pub steps: usize,
    pub term_count: u128,
    pub method: Method,
}

impl FidelityReport {
    fn new(unclamped: f64, strategy: Strategy, steps: usize, term_count: u128, method: Method) -> Self {
        FidelityReport { value: unclamped.clamp(0.0, 1.0), unclamped, strategy, steps, term_count, method }
    }
}

/// The corrected operators `{|T_x|}`.
pub fn corrected_channel(set: &KrausSet) -> KrausSet {
    KrausSet::from_trusted(set.dim(), absolute_values(set))
}

pub(crate) fn absolute_values(set: &KrausSet) -> Vec<ComplexMatrix> {
    set.operators().iter().map(abs_unchecked).collect()
}

/// Recovery operators `R_x = V_x^dag`, so that `R_x T_x = |T_x|`.
pub fn recovery_operators(set: &KrausSet) -> Vec<ComplexMatrix> {
    set.operators()
        .iter()
        .map(|t| polar_decompose(t).expect("Kraus operators are square").unitary_part.adjoint())
        .collect()
}

/// `F_1 = 1/d^2 sum_x (tr |T_x|)^2`.
pub fn fidelity_one_step(set: &KrausSet) -> FidelityReport {
    let d = set.dim() as f64;
    let sum: f64 = set.operators().iter().map(|t| trace_abs(t).powi(2)).sum();
    FidelityReport::new(sum / (d * d), Strategy::Markovian, 1, set.len() as u128, Method::Brute)
}

/// Trace norm `tr |m|`, the sum of singular values.
pub(crate) fn trace_abs(m: &ComplexMatrix) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)].norm(),
        2 => {
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
            (m.norm_squared() + 2.0 * det).sqrt()
        }
        _ => crate::linalg::svd(m, false, false).singular_values.iter().map(|s| s.max(0.0)).sum(),
    }
}

fn trace_of_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let d = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

fn guard(term_count: u128, opts: &EvalOptions) -> Result<()> {
    if opts.method == Method::Brute && !opts.force && term_count > MAX_BRUTE_TERMS {
        return Err(Error::Resource(format!(
            "{term_count} outcome sequences exceed the brute-force limit of {MAX_BRUTE_TERMS}; \
             use the transfer method or force"
        )));
    }
    Ok(())
}

fn markovian_from(prefix: &ComplexMatrix, rest: &[Vec<ComplexMatrix>]) -> f64 {
    let (head, tail) = rest.split_first().expect("at least one remaining step");
    let mut acc = 0.0;
    if tail.is_empty() {
        for a in head {
            acc += trace_of_product(a, prefix).norm_sqr();
        }
    } else {
        for a in head {
            acc += markovian_from(&(a * prefix), tail);
        }
    }
    acc
}

/// Unnormalised Markovian sum over all outcome sequences, from the absolute
/// values of each step, partitioned by the first outcome.
pub(crate) fn markovian_sum(abs_steps: &[Vec<ComplexMatrix>]) -> f64 {
    let (first, rest) = abs_steps.split_first().expect("at least one step");
    let branch = |a: &ComplexMatrix| {
        if rest.is_empty() {
            trace(a).norm_sqr()
        } else {
            markovian_from(a, rest)
        }
    };
    let terms = abs_steps.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
    let partial: Vec<f64> = if terms >= PARALLEL_TERMS {
        first.par_iter().map(branch).collect()
    } else {
        first.iter().map(branch).collect()
    };
    partial.iter().sum()
}

fn bayesian_from(prefix: &ComplexMatrix, rest: &[&[ComplexMatrix]]) -> f64 {
    let (head, tail) = rest.split_first().expect("at least one remaining step");
    let mut acc = 0.0;
    if tail.is_empty() {
        for t in head.iter() {
            acc += trace_abs(&(t * prefix)).powi(2);
        }
    } else {
        for t in head.iter() {
            acc += bayesian_from(&abs_unchecked(&(t * prefix)), tail);
        }
    }
    acc
}

/// Unnormalised Bayesian sum: `first_abs` are the step-one absolute values,
/// `later` the raw operators of steps two onwards.
pub(crate) fn bayesian_sum(first_abs: &[ComplexMatrix], later: &[&[ComplexMatrix]]) -> f64 {
    let branch = |b: &ComplexMatrix| {
        if later.is_empty() {
            trace(b).re.powi(2)
        } else {
            bayesian_from(b, later)
        }
    };
    let terms = later.iter().fold(first_abs.len() as u128, |acc, s| acc.saturating_mul(s.len() as u128));
    let partial: Vec<f64> = if terms >= PARALLEL_TERMS {
        first_abs.par_iter().map(branch).collect()
    } else {
        first_abs.iter().map(branch).collect()
    };
    partial.iter().sum()
}

fn transfer_matrix(abs: &[ComplexMatrix]) -> ComplexMatrix {
    let d = abs[0].nrows();
    let mut e = ComplexMatrix::zeros(d * d, d * d);
    for a in abs {
        e += a.kronecker(&a.map(|z| z.conj()));
    }
    e
}

/// `F_n` of a plan, whatever the plan's own strategy tag.
pub fn fidelity_markovian(plan: &FeedbackPlan, opts: &EvalOptions) -> Result<FidelityReport> {
    let terms = plan.term_count();
    guard(terms, opts)?;
    let d = plan.dim() as f64;
    let abs_steps: Vec<Vec<ComplexMatrix>> = plan.decompositions.iter().map(absolute_values).collect();
    let sum = match opts.method {
        Method::Brute => markovian_sum(&abs_steps),
        Method::Transfer => {
            let mut acc = identity(plan.dim() * plan.dim());
            let mut cache: Option<(&KrausSet, ComplexMatrix)> = None;
            for (set, abs) in plan.decompositions.iter().zip(&abs_steps) {
                let e = match &cache {
                    Some((prev, e)) if *prev == set => e.clone(),
                    _ => transfer_matrix(abs),
                };
                acc = &e * acc;
                cache = Some((set, e));
            }
            trace(&acc).re
        }
    };
    Ok(FidelityReport::new(sum / (d * d), Strategy::Markovian, plan.steps(), terms, opts.method))
}

/// `F'_n` of a plan, whatever the plan's own strategy tag. Only brute force
/// is available.
pub fn fidelity_bayesian(plan: &FeedbackPlan, opts: &EvalOptions) -> Result<FidelityReport> {
    if opts.method != Method::Brute {
        return Err(Error::Parameter("the Bayesian fidelity has no transfer-matrix form".into()));
    }
    let terms = plan.term_count();
    guard(terms, opts)?;
    let d = plan.dim() as f64;
    let first_abs = absolute_values(&plan.decompositions[0]);
    let later: Vec<&[ComplexMatrix]> = plan.decompositions[1..].iter().map(|s| s.operators()).collect();
    let sum = bayesian_sum(&first_abs, &later);
    Ok(FidelityReport::new(sum / (d * d), Strategy::Bayesian, plan.steps(), terms, Method::Brute))
}

/// Clamped `F_n` or `F'_n` of `set` used at every one of `steps` steps,
/// without the guard.
pub(crate) fn stationary_value(set: &KrausSet, steps: usize, strategy: Strategy) -> f64 {
    let d = set.dim() as f64;
    let abs = absolute_values(set);
    let sum = match strategy {
        Strategy::Markovian => markovian_sum(&vec![abs; steps]),
        Strategy::Bayesian => bayesian_sum(&abs, &vec![set.operators(); steps - 1]),
    };
    (sum / (d * d)).clamp(0.0, 1.0)
}

/// Dispatches on the plan's strategy.
pub fn fidelity(plan: &FeedbackPlan, opts: &EvalOptions) -> Result<FidelityReport> {
    match plan.strategy {
        Strategy::Markovian => fidelity_markovian(plan, opts),
        Strategy::Bayesian => fidelity_bayesian(plan, opts),
    }
}

/// Entanglement fidelity `<Psi| (id (x) M)(|Psi><Psi|) |Psi>` of the map
/// `M(rho) = sum_K K rho K^dag`, computed literally on the doubled space
/// with `|Psi> = d^{-1/2} sum_i |ii>`.
pub fn fidelity_from_definition(terms: &[ComplexMatrix], d: usize) -> Result<f64> {
    if d == 0 || d > 3 {
        return Err(Error::Resource(format!("definition oracle supports d <= 3, got {d}")));
    }
    if terms.len() > MAX_DEFINITION_TERMS {
        return Err(Error::Resource(format!(
            "{} terms exceed the definition-oracle limit of {MAX_DEFINITION_TERMS}",
            terms.len()
        )));
    }
    if let Some(t) = terms.iter().find(|t| t.shape() != (d, d)) {
        return Err(Error::Dimension(format!("term is {}x{}, expected {d}x{d}", t.nrows(), t.ncols())));
    }
    let dd = d * d;
    let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    let psi = nalgebra::DVector::<Complex64>::from_fn(dd, |k, _| if k / d == k % d { amp } else { Complex64::new(0.0, 0.0) });
    let psi_proj = &psi * psi.adjoint();
    let id = identity(d);
    let mut out = ComplexMatrix::zeros(dd, dd);
    for k in terms {
        let lifted = id.kronecker(k);
        out += &lifted * &psi_proj * lifted.adjoint();
    }
    Ok((psi.adjoint() * out * &psi)[(0, 0)].re)
}

fn enumeration_guard(count: u128) -> Result<()> {
    if count > MAX_DEFINITION_TERMS as u128 {
        return Err(Error::Resource(format!(
            "{count} terms exceed the enumeration limit of {MAX_DEFINITION_TERMS}"
        )));
    }
    Ok(())
}

/// All products `|T^(n)_{x_n}| ... |T^(1)_{x_1}|`, first outcome slowest.
pub fn markovian_terms(plan: &FeedbackPlan) -> Result<Vec<ComplexMatrix>> {
    enumeration_guard(plan.term_count())?;
    let mut terms = vec![identity(plan.dim())];
    for set in &plan.decompositions {
        let abs = absolute_values(set);
        terms = terms.iter().flat_map(|p| abs.iter().map(move |a| a * p)).collect();
    }
    Ok(terms)
}

/// All nested corrected operators `B_{x_1..x_n}`, first outcome slowest.
pub fn bayesian_terms(plan: &FeedbackPlan) -> Result<Vec<ComplexMatrix>> {
    enumeration_guard(plan.term_count())?;
    let mut terms = absolute_values(&plan.decompositions[0]);
    for set in &plan.decompositions[1..] {
        terms = terms
            .iter()
            .flat_map(|b| set.operators().iter().map(move |t| abs_unchecked(&(t * b))))
            .collect();
    }
    Ok(terms)
}

/// Largest entry of any commutator `[|T^(i)_x|, |T^(j)_y|]` across the given
/// decompositions. Zero means the Bayesian and Markovian fidelities coincide.
pub fn commutator_witness(sets: &[KrausSet]) -> f64 {
    let abs: Vec<ComplexMatrix> = sets.iter().flat_map(absolute_values).collect();
    let mut worst: f64 = 0.0;
    for (i, a) in abs.iter().enumerate() {
        for b in &abs[i + 1..] {
            worst = worst.max(max_abs_entry(&commutator(a, b)));
        }
    }
    worst
}
