//! Searches over mixing unitaries `T~_i = sum_j U_ij T_j` that maximise
//! single- or multi-step fidelities.
//!
//! Candidates come from Haar sampling or from a structured grid
//! ([`Parametrization`]); each candidate index maps deterministically to a
//! unitary, so a search is reproducible for a fixed seed regardless of
//! thread count. Ties (values within `tolerance` of the maximum) go to the
//! lowest candidate index. Optional refinement polishes the best candidates
//! by coordinate ascent over Givens rotations.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{mixing, KrausSet, MixingUnitary};
use crate::error::{Error, Result};
use crate::fidelity::{self, FeedbackPlan, Strategy, MAX_BRUTE_TERMS};
use crate::linalg::{haar_random_unitary, identity, ComplexMatrix, RngSeed};

/// Grid size of the one-angle rotation family.
pub const ROTATION2_GRID: usize = 10_000;
/// Points per angle of the three-level Euler grid.
pub const EULER3_GRID: usize = 100;

const REFINE_INITIAL_STEP: f64 = PI / 8.0;
const REFINE_FINAL_STEP: f64 = 1e-7;
const REFINE_MAX_EVALS: usize = 20_000;
const MAX_TIES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrization {
    /// Haar-random `m x m` unitaries.
    Haar,
    /// `[[cos a, sin a], [-sin a, cos a]]` on a grid of [`ROTATION2_GRID`]
    /// angles in `[0, pi)`; two operators only.
    Rotation2,
    /// `R_23(theta23) R_13(theta13)` on an [`EULER3_GRID`]^2 grid over
    /// `[0, pi)^2`; three operators only.
    Euler3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Haar samples; grid parametrizations ignore it.
    pub sample_budget: usize,
    pub seed: RngSeed,
    pub parametrization: Parametrization,
    pub refine: bool,
    /// How many of the best candidates are refined.
    pub refine_starts: usize,
    /// Tie window for argmax selection and for greedy lookahead.
    pub tolerance: f64,
    pub record_trace: bool,
    /// Lift the brute-force guard.
    pub force: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            sample_budget: 100_000,
            seed: RngSeed::default(),
            parametrization: Parametrization::Haar,
            refine: false,
            refine_starts: 4,
            tolerance: 1e-9,
            record_trace: false,
            force: false,
        }
    }
}

impl OptimizerConfig {
    pub fn haar(sample_budget: usize, seed: RngSeed) -> Self {
        OptimizerConfig { sample_budget, seed, ..Default::default() }
    }

    pub fn grid(parametrization: Parametrization) -> Self {
        OptimizerConfig { parametrization, ..Default::default() }
    }

    pub fn with_refine(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerResult {
    pub best_unitary: MixingUnitary,
    pub best_value: f64,
    /// `apply_mixing(input, best_unitary)`.
    pub best_set: KrausSet,
    pub samples_evaluated: usize,
    /// Running maxima over candidates in index order.
    pub value_trace: Option<Vec<f64>>,
    /// Grid angles of the best candidate before refinement (`alpha`, or
    /// `theta13, theta23`); empty for Haar.
    pub best_angles: Vec<f64>,
    pub refined: bool,
}

fn candidate_count(cfg: &OptimizerConfig) -> usize {
    match cfg.parametrization {
        Parametrization::Haar => cfg.sample_budget,
        Parametrization::Rotation2 => ROTATION2_GRID,
        Parametrization::Euler3 => EULER3_GRID * EULER3_GRID,
    }
}

/// `[[cos a, sin a], [-sin a, cos a]]`.
pub fn rotation2(alpha: f64) -> ComplexMatrix {
    let (s, c) = alpha.sin_cos();
    crate::linalg::from_real_rows(&[&[c, s], &[-s, c]])
}

/// `R_23(theta23) R_13(theta13)` with `R_ij` the real rotation
/// `[[c, s], [-s, c]]` in the `(i, j)` plane.
///
/// The phase `e^{-i delta}` of the full three-angle factorisation multiplies
/// only the first row and is dropped.
pub fn euler3(theta13: f64, theta23: f64) -> ComplexMatrix {
    let (s13, c13) = theta13.sin_cos();
    let (s23, c23) = theta23.sin_cos();
    crate::linalg::from_real_rows(&[
        &[c13, 0.0, s13],
        &[-s13 * s23, c23, c13 * s23],
        &[-s13 * c23, -s23, c13 * c23],
    ])
}

fn candidate(cfg: &OptimizerConfig, m: usize, index: usize) -> (ComplexMatrix, Vec<f64>) {
    match cfg.parametrization {
        Parametrization::Haar => {
            let u = haar_random_unitary(m, &mut cfg.seed.stream(index as u64)).expect("m >= 1");
            (u, Vec::new())
        }
        Parametrization::Rotation2 => {
            let alpha = index as f64 * PI / ROTATION2_GRID as f64;
            (rotation2(alpha), vec![alpha])
        }
        Parametrization::Euler3 => {
            let step = PI / EULER3_GRID as f64;
            let t13 = (index / EULER3_GRID) as f64 * step;
            let t23 = (index % EULER3_GRID) as f64 * step;
            (euler3(t13, t23), vec![t13, t23])
        }
    }
}

fn check_parametrization(cfg: &OptimizerConfig, m: usize) -> Result<()> {
    match (cfg.parametrization, m) {
        (Parametrization::Rotation2, m) if m != 2 => Err(Error::Parameter(format!(
            "rotation2 mixes exactly 2 operators, the set has {m}"
        ))),
        (Parametrization::Euler3, m) if m != 3 => Err(Error::Parameter(format!(
            "euler3 mixes exactly 3 operators, the set has {m}"
        ))),
        (Parametrization::Haar, _) if cfg.sample_budget == 0 => {
            Err(Error::Parameter("sample_budget must be at least 1".into()))
        }
        _ => Ok(()),
    }
}

fn check_guard(cfg: &OptimizerConfig, m: usize, steps: usize) -> Result<()> {
    let terms = (0..steps).fold(1u128, |acc, _| acc.saturating_mul(m as u128));
    if !cfg.force && terms > MAX_BRUTE_TERMS {
        return Err(Error::Resource(format!(
            "{terms} outcome sequences per evaluation exceed the brute-force limit of {MAX_BRUTE_TERMS}"
        )));
    }
    Ok(())
}

/// Values of every candidate, in index order.
fn sweep<F>(set: &KrausSet, cfg: &OptimizerConfig, objective: &F) -> Vec<f64>
where
    F: Fn(&KrausSet) -> f64 + Sync,
{
    let m = set.len();
    (0..candidate_count(cfg))
        .into_par_iter()
        .map(|i| objective(&mixing::mix_unchecked(set, &candidate(cfg, m, i).0)))
        .collect()
}

/// Indices whose value is within `tol` of the maximum, ascending.
fn near_max(values: &[f64], tol: f64) -> Vec<usize> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().enumerate().filter(|(_, &v)| v >= max - tol).map(|(i, _)| i).take(MAX_TIES).collect()
}

fn running_max(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(f64::NEG_INFINITY, |best, &v| {
            *best = best.max(v);
            Some(*best)
        })
        .collect()
}

fn givens(m: usize, i: usize, j: usize, angle: f64, imaginary: bool) -> ComplexMatrix {
    let mut g = identity(m);
    let (s, c) = angle.sin_cos();
    g[(i, i)] = Complex64::new(c, 0.0);
    g[(j, j)] = Complex64::new(c, 0.0);
    if imaginary {
        g[(i, j)] = Complex64::new(0.0, s);
        g[(j, i)] = Complex64::new(0.0, s);
    } else {
        g[(i, j)] = Complex64::new(s, 0.0);
        g[(j, i)] = Complex64::new(-s, 0.0);
    }
    g
}

/// Coordinate ascent over left Givens rotations with a shrinking step.
fn refine_from<F>(set: &KrausSet, start: ComplexMatrix, objective: &F) -> (ComplexMatrix, f64)
where
    F: Fn(&KrausSet) -> f64,
{
    let m = set.len();
    let eval = |u: &ComplexMatrix| objective(&mixing::mix_unchecked(set, u));
    let mut u = start;
    let mut best = eval(&u);
    let generators: Vec<(usize, usize, bool)> = (0..m)
        .flat_map(|i| (i + 1..m).flat_map(move |j| [(i, j, false), (i, j, true)]))
        .collect();
    let mut step = REFINE_INITIAL_STEP;
    let mut evals = 0;
    while step >= REFINE_FINAL_STEP && evals < REFINE_MAX_EVALS {
        let mut improved = false;
        for &(i, j, imaginary) in &generators {
            for sign in [1.0, -1.0] {
                let trial = givens(m, i, j, sign * step, imaginary) * &u;
                let v = eval(&trial);
                evals += 1;
                if v > best + 1e-15 {
                    best = v;
                    u = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (u, best)
}

struct Choice {
    index: usize,
    values: Vec<f64>,
}

fn finish<F>(set: &KrausSet, cfg: &OptimizerConfig, choice: Choice, objective: &F) -> OptimizerResult
where
    F: Fn(&KrausSet) -> f64 + Sync,
{
    let m = set.len();
    let (mut u, angles) = candidate(cfg, m, choice.index);
    let mut refined = false;
    if cfg.refine {
        let mut starts = vec![choice.index];
        let mut order: Vec<usize> = (0..choice.values.len()).collect();
        order.sort_by(|&a, &b| choice.values[b].total_cmp(&choice.values[a]).then(a.cmp(&b)));
        for i in order {
            if starts.len() >= cfg.refine_starts.max(1) {
                break;
            }
            if i != choice.index {
                starts.push(i);
            }
        }
        let polished: Vec<(ComplexMatrix, f64)> = starts
            .par_iter()
            .map(|&i| refine_from(set, candidate(cfg, m, i).0, objective))
            .collect();
        let mut best = objective(&mixing::mix_unchecked(set, &u));
        for (cand, v) in polished {
            if v > best + cfg.tolerance {
                best = v;
                u = cand;
                refined = true;
            }
        }
    }
    let best_set = mixing::mix_unchecked(set, &u);
    let best_value = objective(&best_set);
    OptimizerResult {
        best_unitary: MixingUnitary::from_trusted(u),
        best_value,
        best_set,
        samples_evaluated: choice.values.len(),
        value_trace: cfg.record_trace.then(|| running_max(&choice.values)),
        best_angles: angles,
        refined,
    }
}

/// Maximises `objective(apply_mixing(set, U))` over the configured candidates.
pub fn maximize<F>(set: &KrausSet, cfg: &OptimizerConfig, objective: F) -> Result<OptimizerResult>
where
    F: Fn(&KrausSet) -> f64 + Sync,
{
    check_parametrization(cfg, set.len())?;
    let values = sweep(set, cfg, &objective);
    let index = near_max(&values, cfg.tolerance)[0];
    Ok(finish(set, cfg, Choice { index, values }, &objective))
}

fn plan_value(prefix: &[KrausSet], last: &KrausSet, repeat: usize, strategy: Strategy) -> f64 {
    let mut steps = prefix.to_vec();
    steps.extend(std::iter::repeat_n(last.clone(), repeat));
    let plan = FeedbackPlan::from_trusted(strategy, steps);
    let opts = fidelity::EvalOptions { force: true, ..Default::default() };
    fidelity::fidelity(&plan, &opts).expect("brute force with a lifted guard").value
}

/// Maximises `F_1` over mixings of `set`.
pub fn optimize_single_step(set: &KrausSet, cfg: &OptimizerConfig) -> Result<OptimizerResult> {
    maximize(set, cfg, |k| fidelity::fidelity_one_step(k).value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkovianMode {
    /// One mixing used at every step, maximising `F_n` directly.
    Stationary,
    /// Step `k` maximises `F_k` with earlier steps fixed; ties are broken by
    /// the `F_{k+1}` obtained when the candidate is also used at step `k+1`.
    Greedy,
}

#[derive(Clone, Debug)]
pub struct MarkovianSchedule {
    pub mode: MarkovianMode,
    /// One result per step.
    pub steps: Vec<OptimizerResult>,
    /// `F_n` of the resulting plan.
    pub value: f64,
}

impl MarkovianSchedule {
    pub fn plan(&self) -> FeedbackPlan {
        FeedbackPlan::from_trusted(Strategy::Markovian, self.steps.iter().map(|r| r.best_set.clone()).collect())
    }
}

/// Optimises the measurements of an `steps`-step Markovian plan.
pub fn optimize_markovian_sequence(
    channel: &KrausSet,
    steps: usize,
    mode: MarkovianMode,
    cfg: &OptimizerConfig,
) -> Result<MarkovianSchedule> {
    if steps == 0 {
        return Err(Error::Parameter("steps must be at least 1".into()));
    }
    check_guard(cfg, channel.len(), steps + usize::from(mode == MarkovianMode::Greedy && steps > 1))?;
    check_parametrization(cfg, channel.len())?;
    match mode {
        MarkovianMode::Stationary => {
            let r = maximize(channel, cfg, |k| fidelity::stationary_value(k, steps, Strategy::Markovian))?;
            let value = r.best_value;
            Ok(MarkovianSchedule { mode, steps: vec![r; steps], value })
        }
        MarkovianMode::Greedy => {
            let mut fixed: Vec<KrausSet> = Vec::with_capacity(steps);
            let mut results = Vec::with_capacity(steps);
            let m = channel.len();
            for k in 1..=steps {
                let prefix = fixed.clone();
                let objective = |s: &KrausSet| plan_value(&prefix, s, 1, Strategy::Markovian);
                let values = sweep(channel, cfg, &objective);
                let ties = near_max(&values, cfg.tolerance);
                let index = if ties.len() > 1 && k < steps {
                    let lookahead: Vec<f64> = ties
                        .par_iter()
                        .map(|&i| {
                            let s = mixing::mix_unchecked(channel, &candidate(cfg, m, i).0);
                            plan_value(&prefix, &s, 2, Strategy::Markovian)
                        })
                        .collect();
                    let best = near_max(&lookahead, 0.0)[0];
                    ties[best]
                } else {
                    ties[0]
                };
                let r = finish(channel, cfg, Choice { index, values }, &objective);
                fixed.push(r.best_set.clone());
                results.push(r);
            }
            let value = plan_value(&fixed[..steps - 1], &fixed[steps - 1], 1, Strategy::Markovian);
            Ok(MarkovianSchedule { mode, steps: results, value })
        }
    }
}

/// Maximises `F'_n` over one mixing used at every step.
pub fn optimize_bayesian_first_step(channel: &KrausSet, steps: usize, cfg: &OptimizerConfig) -> Result<OptimizerResult> {
    if steps == 0 {
        return Err(Error::Parameter("steps must be at least 1".into()));
    }
    check_guard(cfg, channel.len(), steps)?;
    maximize(channel, cfg, |k| fidelity::stationary_value(k, steps, Strategy::Bayesian))
}

#[derive(Clone, Debug)]
pub struct BayesianPerStep {
    /// Step one from [`optimize_single_step`], then one search per later step.
    pub steps: Vec<OptimizerResult>,
    /// `F'_k` when step `k` reuses the step-one decomposition (earlier steps
    /// at their optima), for `k = 2..=n`.
    pub baselines: Vec<f64>,
    /// Best searched `F'_k` minus the baseline, for `k = 2..=n`.
    pub improvements: Vec<f64>,
    /// `F'_n` of the resulting plan.
    pub value: f64,
}

impl BayesianPerStep {
    pub fn max_improvement(&self) -> f64 {
        self.improvements.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether some later step beats reusing the step-one measurement by
    /// more than `tol`.
    pub fn improved(&self, tol: f64) -> bool {
        self.max_improvement() > tol
    }

    pub fn plan(&self) -> FeedbackPlan {
        FeedbackPlan::from_trusted(Strategy::Bayesian, self.steps.iter().map(|r| r.best_set.clone()).collect())
    }
}

/// Greedy per-step Bayesian optimisation: step `k >= 2` searches mixings of
/// the step-one optimum with steps `1..k` fixed.
pub fn optimize_bayesian_per_step(channel: &KrausSet, steps: usize, cfg: &OptimizerConfig) -> Result<BayesianPerStep> {
    if steps < 2 {
        return Err(Error::Parameter("per-step optimisation needs at least 2 steps".into()));
    }
    check_guard(cfg, channel.len(), steps)?;
    let first = optimize_single_step(channel, cfg)?;
    let reference = first.best_set.clone();
    let mut fixed = vec![reference.clone()];
    let mut results = vec![first];
    let mut baselines = Vec::with_capacity(steps - 1);
    let mut improvements = Vec::with_capacity(steps - 1);
    for _ in 2..=steps {
        let prefix = fixed.clone();
        let objective = |s: &KrausSet| plan_value(&prefix, s, 1, Strategy::Bayesian);
        let baseline = objective(&reference);
        let r = maximize(&reference, cfg, objective)?;
        baselines.push(baseline);
        improvements.push(r.best_value - baseline);
        let keep = if r.best_value > baseline { r.best_set.clone() } else { reference.clone() };
        fixed.push(keep);
        results.push(r);
    }
    let value = plan_value(&fixed[..steps - 1], &fixed[steps - 1], 1, Strategy::Bayesian);
    Ok(BayesianPerStep { steps: results, baselines, improvements, value })
}
