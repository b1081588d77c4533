//! Parameter-server loop with distributed momentum and Byzantine workers.

use serde::{Deserialize, Serialize};

use crate::aggregation::{lambda_of, RuleId};
use crate::attacks::{attack_vector, honest_gradient_negation, AttackContext, AttackId};
use crate::error::{Error, Result};
use crate::problems::{Problem, ProblemSpec};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::theory::{lyapunov, theorem_params, TheoremInputs, TheoremOutputs};
use crate::vector::{mean_of, ParamVector};

/// Stream id of the run-level generator (θ̂ draw).
const RUN_STREAM: u64 = 0;
/// Stream id used to measure the logistic noise level in theorem mode.
const SIGMA_STREAM: u64 = u64::MAX - 1;
/// Draws used to measure the logistic noise level.
const SIGMA_SAMPLES: usize = 1000;
/// Full-batch descent steps used to estimate an unknown `Q*`.
const QSTAR_STEPS: usize = 2000;
/// Fraction of the observed decrease subtracted from the best loss.
const QSTAR_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremTag {
    Theorem,
}

/// A step size or momentum: an explicit value or the theorem prescription.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepParam {
    Value(f64),
    Mode(TheoremTag),
}

impl StepParam {
    pub const THEOREM: StepParam = StepParam::Mode(TheoremTag::Theorem);

    pub fn is_theorem(&self) -> bool {
        matches!(self, StepParam::Mode(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroTag {
    Zero,
}

/// Initial parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta1 {
    Named(ZeroTag),
    Vector(Vec<f64>),
}

impl Default for Theta1 {
    fn default() -> Self {
        Theta1::Named(ZeroTag::Zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub f: usize,
    /// Number of iterations `T`.
    pub steps: usize,
    pub gamma: StepParam,
    pub beta: StepParam,
    pub rule: RuleId,
    #[serde(default)]
    pub attack: Option<AttackId>,
    pub problem: ProblemSpec,
    pub seed: u64,
    #[serde(default)]
    pub theta1: Theta1,
    /// Order in which worker submissions reach the rule: position `k`
    /// receives worker `submission_order[k]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submission_order: Option<Vec<usize>>,
    /// Keep every iterate and aggregate in the result.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub record_trajectory: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.f >= self.n {
            return Err(Error::ByzantineBound { n: self.n, f: self.f });
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be >= 1".into()));
        }
        if let StepParam::Value(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::InvalidParameter(format!("gamma must be > 0, got {g}")));
            }
        }
        if let StepParam::Value(b) = self.beta {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!("beta must be in [0, 1), got {b}")));
            }
        }
        self.rule.validate()?;
        if let Some(attack) = &self.attack {
            attack.validate()?;
            if matches!(attack, AttackId::LabelFlip) && matches!(self.problem, ProblemSpec::Quadratic { .. }) {
                return Err(Error::UnsupportedProblem("label flipping needs a labelled dataset"));
            }
        }
        if let Some(order) = &self.submission_order {
            let mut seen = vec![false; self.n];
            let valid = order.len() == self.n
                && order.iter().all(|&i| i < self.n && !std::mem::replace(&mut seen[i], true));
            if !valid {
                return Err(Error::InvalidParameter(
                    "submission_order must be a permutation of 0..n".into(),
                ));
            }
        }
        if let Theta1::Vector(v) = &self.theta1 {
            if v.len() != self.problem.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.problem.dim(),
                    found: v.len(),
                });
            }
        }
        Ok(())
    }

    /// Honest workers are `0..n - f`; the last `f` are Byzantine.
    pub fn honest(&self) -> usize {
        self.n - self.f
    }
}

/// Per-step diagnostics, all evaluated on the exact objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub loss: f64,
    pub grad_sq: f64,
    pub drift_sq: f64,
    pub dev_sq: f64,
    pub lyapunov: f64,
    pub r_norm: f64,
    /// Mean over honest workers of `‖m_t⁽ⁱ⁾ - m̄_t‖²`.
    pub momentum_spread_sq: f64,
}

impl StepMetrics {
    pub const CSV_HEADER: &'static str = "step,loss,grad_sq,drift_sq,dev_sq,lyapunov,r_norm";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.step, self.loss, self.grad_sq, self.drift_sq, self.dev_sq, self.lyapunov, self.r_norm
        )
    }

    fn is_finite(&self) -> bool {
        [
            self.loss,
            self.grad_sq,
            self.drift_sq,
            self.dev_sq,
            self.lyapunov,
            self.r_norm,
            self.momentum_spread_sq,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Every iterate `θ_1..θ_{T+1}` and aggregate `R_1..R_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub thetas: Vec<ParamVector<S>>,
    pub aggregates: Vec<ParamVector<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<S> {
    pub metrics: Vec<StepMetrics>,
    /// `θ̂ = θ_{theta_hat_index}`, drawn uniformly from the completed steps.
    pub theta_hat: ParamVector<S>,
    pub theta_hat_index: usize,
    /// `(1/T) Σ_t ‖∇Q(θ_t)‖²` over the logged steps.
    pub avg_grad_sq: f64,
    /// The last iterate.
    pub final_theta: ParamVector<S>,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    /// Step at which a non-finite value appeared, if any.
    pub diverged_at: Option<usize>,
    pub gamma: f64,
    pub beta: f64,
    pub theory: Option<TheoremOutputs>,
    pub trajectory: Option<Trajectory<S>>,
}

#[derive(Debug, Clone)]
pub struct WorkerState<S> {
    pub id: usize,
    pub byzantine: bool,
    pub momentum: ParamVector<S>,
    pub rng: RngStream,
}

impl<S: Scalar> WorkerState<S> {
    pub fn new(id: usize, byzantine: bool, dim: usize, seed: u64) -> Self {
        Self {
            id,
            byzantine,
            momentum: ParamVector::zeros(dim),
            rng: RngStream::new(seed, 1 + id as u64),
        }
    }
}

/// `m ← β m + (1 - β) g`.
pub fn momentum_update<S: Scalar>(m: &mut ParamVector<S>, g: &ParamVector<S>, beta: S) -> Result<()> {
    g.ensure_dim(m.dim())?;
    let keep = S::one() - beta;
    let coords = m
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(&a, &b)| beta * a + keep * b)
        .collect();
    *m = ParamVector::from_raw(coords);
    Ok(())
}

/// One honest momentum update on a fresh stochastic gradient.
pub fn honest_step<S: Scalar>(
    worker: &mut WorkerState<S>,
    theta: &ParamVector<S>,
    beta: S,
    problem: &Problem<S>,
) -> Result<ParamVector<S>> {
    let g = problem.stochastic_gradient(theta, &mut worker.rng)?.gradient;
    momentum_update(&mut worker.momentum, &g, beta)?;
    Ok(worker.momentum.clone())
}

/// Builds the problem from `config` and runs it.
pub fn run<S: Scalar>(config: &RunConfig) -> Result<RunResult<S>> {
    config.validate()?;
    let problem = config.problem.build::<S>()?;
    run_with_problem(config, problem)
}

/// Runs `config` on an already built problem (its spec in `config` is
/// only used for validation).
pub fn run_with_problem<S: Scalar>(config: &RunConfig, mut problem: Problem<S>) -> Result<RunResult<S>> {
    config.validate()?;
    let dim = problem.dim();
    let theta1 = match &config.theta1 {
        Theta1::Named(_) => ParamVector::zeros(dim),
        Theta1::Vector(v) => {
            let t = ParamVector::from_f64(v)?;
            t.ensure_dim(dim)?;
            t
        }
    };
    let (gamma, beta, theory) = resolve_parameters(config, &mut problem, &theta1)?;
    let l = problem.smoothness_constant();
    let (n, f, steps) = (config.n, config.f, config.steps);
    let honest = config.honest();

    let mut run_rng = RngStream::new(config.seed, RUN_STREAM);
    let theta_hat_index = 1 + run_rng.below(steps);

    let mut workers: Vec<WorkerState<S>> = (0..n)
        .map(|i| WorkerState::new(i, i >= honest, dim, config.seed))
        .collect();
    let beta_s = S::lit(beta);
    let gamma_s = S::lit(gamma);

    let mut theta = theta1;
    let mut theta_hat = None;
    let mut prev_aggregate: Option<ParamVector<S>> = None;
    let mut metrics = Vec::with_capacity(steps);
    let mut trajectory = config.record_trajectory.then(|| Trajectory {
        thetas: vec![theta.clone()],
        aggregates: Vec::new(),
    });
    let mut diverged_at = None;
    let mut submissions: Vec<ParamVector<S>> = Vec::with_capacity(n);
    let honest_indices: Vec<usize> = (0..honest).collect();

    for step in 1..=steps {
        if step == theta_hat_index {
            theta_hat = Some(theta.clone());
        }
        let (loss, grad) = problem.loss_and_gradient(&theta)?;

        for w in workers.iter_mut() {
            match (w.byzantine, config.attack) {
                (false, _) | (true, None) => {
                    honest_step(w, &theta, beta_s, &problem)?;
                }
                (true, Some(AttackId::SignFlip)) => {
                    let g = problem.stochastic_gradient(&theta, &mut w.rng)?.gradient;
                    momentum_update(&mut w.momentum, &honest_gradient_negation(&g), beta_s)?;
                }
                (true, Some(AttackId::LabelFlip)) => {
                    let g = problem.flipped_gradient(&theta, &mut w.rng)?.gradient;
                    momentum_update(&mut w.momentum, &g, beta_s)?;
                }
                (true, Some(_)) => {}
            }
        }
        let honest_momentums: Vec<ParamVector<S>> =
            workers[..honest].iter().map(|w| w.momentum.clone()).collect();
        let crafted = match &config.attack {
            Some(attack) if f > 0 && attack.is_crafted() => Some(attack_vector(
                attack,
                &AttackContext {
                    honest_momentums: &honest_momentums,
                    step,
                    model: &theta,
                },
            )?),
            _ => None,
        };
        let submitted = |i: usize| -> &ParamVector<S> {
            match &crafted {
                Some(v) if i >= honest => v,
                _ => &workers[i].momentum,
            }
        };
        submissions.clear();
        match &config.submission_order {
            Some(order) => submissions.extend(order.iter().map(|&i| submitted(i).clone())),
            None => submissions.extend((0..n).map(|i| submitted(i).clone())),
        }
        let aggregate = config.rule.aggregate_lenient(&submissions, f, prev_aggregate.as_ref())?;

        let honest_mean = mean_of(&honest_momentums, &honest_indices);
        let dev_sq = honest_mean.dist_sq(&grad).as_f64();
        let drift_sq = aggregate.dist_sq(&honest_mean).as_f64();
        let spread = honest_momentums
            .iter()
            .map(|m| m.dist_sq(&honest_mean).as_f64())
            .sum::<f64>()
            / honest as f64;
        let loss = loss.as_f64();
        let record = StepMetrics {
            step,
            loss,
            grad_sq: grad.norm_sq().as_f64(),
            drift_sq,
            dev_sq,
            lyapunov: lyapunov(loss, dev_sq, l),
            r_norm: aggregate.norm().as_f64(),
            momentum_spread_sq: spread,
        };

        let next = theta.sub(&aggregate.scale(gamma_s))?;
        if !record.is_finite() || !next.is_finite() {
            diverged_at = Some(step);
            break;
        }
        metrics.push(record);
        if let Some(tr) = trajectory.as_mut() {
            tr.aggregates.push(aggregate.clone());
            tr.thetas.push(next.clone());
        }
        theta = next;
        prev_aggregate = Some(aggregate);
    }

    let completed = metrics.len();
    let (theta_hat, theta_hat_index) = match theta_hat {
        Some(t) if theta_hat_index <= completed.max(1) => (t, theta_hat_index),
        _ => {
            // the drawn index was never reached: redraw among completed steps
            let idx = 1 + run_rng.below(completed.max(1));
            let t = match &trajectory {
                Some(tr) => tr.thetas[idx - 1].clone(),
                None => replay_iterate(config, &problem, idx, gamma, beta)?,
            };
            (t, idx)
        }
    };
    let avg_grad_sq = if completed == 0 {
        f64::NAN
    } else {
        metrics.iter().map(|m| m.grad_sq).sum::<f64>() / completed as f64
    };
    let final_loss = problem.loss(&theta)?.as_f64();
    let final_accuracy = problem.accuracy(&theta);
    Ok(RunResult {
        metrics,
        theta_hat,
        theta_hat_index,
        avg_grad_sq,
        final_theta: theta,
        final_loss,
        final_accuracy,
        diverged_at,
        gamma,
        beta,
        theory,
        trajectory,
    })
}

/// Recomputes `θ_index` of a diverged run by replaying it with a shorter
/// horizon and the already resolved step size and momentum.
fn replay_iterate<S: Scalar>(
    config: &RunConfig,
    problem: &Problem<S>,
    index: usize,
    gamma: f64,
    beta: f64,
) -> Result<ParamVector<S>> {
    let mut short = config.clone();
    short.steps = index;
    short.gamma = StepParam::Value(gamma);
    short.beta = StepParam::Value(beta);
    short.record_trajectory = true;
    let result = run_with_problem(&short, problem.clone())?;
    let tr = result.trajectory.expect("recorded");
    Ok(tr.thetas[index - 1].clone())
}

fn resolve_parameters<S: Scalar>(
    config: &RunConfig,
    problem: &mut Problem<S>,
    theta1: &ParamVector<S>,
) -> Result<(f64, f64, Option<TheoremOutputs>)> {
    if !config.gamma.is_theorem() && !config.beta.is_theorem() {
        let StepParam::Value(g) = config.gamma else { unreachable!() };
        let StepParam::Value(b) = config.beta else { unreachable!() };
        return Ok((g, b, None));
    }
    let lambda = match lambda_of(&config.rule, config.n, config.f, problem.dim()) {
        Ok(c) => c.lambda,
        Err(Error::NoCertifiedCoefficient(rule)) => {
            return Err(Error::TheoremMode(format!(
                "rule `{rule}` has no resilience coefficient"
            )))
        }
        Err(e) => return Err(e),
    };
    let sigma = match problem.sigma() {
        Some(s) => s,
        None => problem.refresh_sigma(theta1, SIGMA_SAMPLES, &mut RngStream::new(config.seed, SIGMA_STREAM))?,
    };
    let l = problem.smoothness_constant();
    let (q1, grad1) = problem.loss_and_gradient(theta1)?;
    let q1 = q1.as_f64();
    let (qstar, estimated) = match problem.min_loss() {
        Some(q) => (q, false),
        None => (estimate_min_loss(problem, theta1, q1)?, true),
    };
    let mut out = theorem_params(&TheoremInputs {
        l,
        sigma,
        lambda,
        n: config.n,
        f: config.f,
        t: config.steps,
        q1,
        qstar,
        grad1_sq: grad1.norm_sq().as_f64(),
    })?;
    out.estimated = estimated;
    let gamma = match config.gamma {
        StepParam::Value(g) => g,
        StepParam::Mode(_) => out.gamma,
    };
    let beta = match config.beta {
        StepParam::Value(b) => b,
        StepParam::Mode(_) => out.beta,
    };
    Ok((gamma, beta, Some(out)))
}

/// Lower estimate of `Q*` from full-batch descent with step `1/L`.
fn estimate_min_loss<S: Scalar>(problem: &Problem<S>, theta1: &ParamVector<S>, q1: f64) -> Result<f64> {
    let step = S::lit(1.0 / problem.smoothness_constant());
    let mut theta = theta1.clone();
    let mut best = q1;
    for _ in 0..QSTAR_STEPS {
        let (loss, grad) = problem.loss_and_gradient(&theta)?;
        best = best.min(loss.as_f64());
        theta.axpy(-step, &grad)?;
    }
    best = best.min(problem.loss(&theta)?.as_f64());
    Ok((best - QSTAR_MARGIN * (q1 - best)).max(0.0))
}
