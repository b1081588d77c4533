//! Empirical checks of the `(f, λ)`-resilient averaging property.
//!
//! A rule `F` is `(f, λ)`-resilient averaging when, for every input set and
//! every subset `S` of `n - f` inputs, `‖F(x) - mean(x_S)‖ ≤ λ · diam(x_S)`.
//! The auditors here evaluate that inequality exhaustively over subsets, on
//! both hand-built witnesses and randomized instance families.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{lambda_of, RuleId};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::subsets::{check_enumerable, for_each_combination};
use crate::vector::{common_dim, distance_matrix, mean_of, subset_diameter, ParamVector};

/// Default audit tolerance for rules computed in closed form.
pub const EXACT_TOL: f64 = 1e-9;
/// Default audit tolerance for iterative rules (geometric median, clipping).
pub const ITERATIVE_TOL: f64 = 1e-6;

pub fn default_tolerance(rule: &RuleId) -> f64 {
    match rule {
        RuleId::Gm | RuleId::Cc { .. } => ITERATIVE_TOL,
        _ => EXACT_TOL,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditInstance<S> {
    pub xs: Vec<ParamVector<S>>,
    pub n: usize,
    pub f: usize,
    pub d: usize,
    /// Name of the generator family that produced the instance.
    pub label: String,
}

impl<S: Scalar> AuditInstance<S> {
    pub fn new(xs: Vec<ParamVector<S>>, f: usize, label: impl Into<String>) -> Result<Self> {
        let d = common_dim(&xs)?;
        let n = xs.len();
        if f >= n {
            return Err(Error::ByzantineBound { n, f });
        }
        Ok(Self {
            xs,
            n,
            f,
            d,
            label: label.into(),
        })
    }

    fn from_f64_rows(rows: Vec<Vec<f64>>, f: usize, label: &str) -> Result<Self> {
        let xs = rows
            .iter()
            .map(|r| ParamVector::from_f64(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(xs, f, label)
    }
}

/// Outcome of checking one instance against every size-`n - f` subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCheck {
    pub passed: bool,
    /// Largest `‖F(x) - mean(x_S)‖ / diam(x_S)` over subsets of positive
    /// diameter; 0 when there are none.
    pub worst_ratio: f64,
    /// The first violating subset if any, else the subset attaining
    /// `worst_ratio`.
    pub worst_subset: Vec<usize>,
}

/// Evaluates the resilient-averaging inequality for `rule` on every subset
/// of size `n - f`.
///
/// With `lambda_claimed = None` only the zero-diameter clause is enforced:
/// a subset of identical vectors must be reproduced exactly. The tolerance is
/// absolute at unit scale and grows with the largest input norm beyond that.
pub fn check_instance<S: Scalar>(
    rule: &RuleId,
    instance: &AuditInstance<S>,
    lambda_claimed: Option<f64>,
    tol: f64,
) -> Result<InstanceCheck> {
    let xs = &instance.xs;
    let (n, f) = (xs.len(), instance.f);
    if f >= n {
        return Err(Error::ByzantineBound { n, f });
    }
    check_enumerable(n, n - f)?;
    let output = rule.aggregate_lenient(xs, f, None)?;
    let scale = xs
        .iter()
        .map(|x| x.norm().as_f64())
        .fold(1.0f64, f64::max);
    let tol = tol * scale;
    let dist = distance_matrix(xs);

    let mut worst_ratio = 0.0f64;
    let mut ratio_subset: Option<Vec<usize>> = None;
    let mut violation: Option<(f64, Vec<usize>)> = None;
    for_each_combination(n, n - f, |subset| {
        let deviation = output.dist(&mean_of(xs, subset)).as_f64();
        let diam = subset_diameter(&dist, subset).as_f64();
        let excess = if diam > 0.0 {
            let ratio = deviation / diam;
            if ratio > worst_ratio || ratio_subset.is_none() {
                worst_ratio = worst_ratio.max(ratio);
                ratio_subset = Some(subset.to_vec());
            }
            lambda_claimed.map(|lambda| deviation - lambda * diam - tol)
        } else {
            Some(deviation - tol)
        };
        if let Some(excess) = excess.filter(|&e| e > 0.0) {
            if violation.as_ref().is_none_or(|(best, _)| excess > *best) {
                violation = Some((excess, subset.to_vec()));
            }
        }
    });

    let passed = violation.is_none();
    let worst_subset = match (violation, ratio_subset) {
        (Some((_, s)), _) => s,
        (None, Some(s)) => s,
        (None, None) => (0..n - f).collect(),
    };
    Ok(InstanceCheck {
        passed,
        worst_ratio,
        worst_subset,
    })
}

/// The 1-D construction behind the `f / (n - f)` lower bound on any
/// resilience coefficient, with its two witness subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundInstance<S> {
    pub instance: AuditInstance<S>,
    /// `S0 = {0..n-f}`, all zeros: any resilient rule must output 0.
    pub zero_subset: Vec<usize>,
    /// `S1 = {f..n}`, whose mean is `f / (n - f)`.
    pub shifted_subset: Vec<usize>,
    pub shifted_mean: f64,
}

/// `n - f` zeros followed by `f` ones.
pub fn lower_bound_instance<S: Scalar>(n: usize, f: usize) -> Result<LowerBoundInstance<S>> {
    if f == 0 || f >= n {
        return Err(Error::InvalidParameter(format!(
            "lower bound instance needs 0 < f < n, got n = {n}, f = {f}"
        )));
    }
    let rows = (0..n)
        .map(|i| vec![if i < n - f { 0.0 } else { 1.0 }])
        .collect();
    Ok(LowerBoundInstance {
        instance: AuditInstance::from_f64_rows(rows, f, Generator::LowerBound.name())?,
        zero_subset: (0..n - f).collect(),
        shifted_subset: (f..n).collect(),
        shifted_mean: f as f64 / (n - f) as f64,
    })
}

/// `n - f` copies of `(2)` followed by `f` strictly shorter vectors spread
/// over `[0, 1]`, whose sum differs from `2f`. Comparative gradient
/// elimination keeps the short vectors and misses the honest value.
pub fn cge_counterexample<S: Scalar>(n: usize, f: usize) -> Result<AuditInstance<S>> {
    if f == 0 || 2 * f >= n {
        return Err(Error::InvalidParameter(format!(
            "cge counterexample needs 0 < f < n/2, got n = {n}, f = {f}"
        )));
    }
    let rows = (0..n)
        .map(|i| {
            if i < n - f {
                vec![2.0]
            } else if f == 1 {
                vec![1.0]
            } else {
                vec![1.0 - (i - (n - f)) as f64 / (f - 1) as f64]
            }
        })
        .collect();
    AuditInstance::from_f64_rows(rows, f, Generator::CgeCounterexample.name())
}

/// Randomized instance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// I.i.d. standard normal vectors.
    Gaussian,
    /// I.i.d. Cauchy coordinates.
    HeavyTail,
    /// Two unit-spread clusters separated by `10^k`, `k ∈ {0..6}`.
    TwoCluster,
    /// Gaussian majority plus up to `f` far outliers at scale `10^k`.
    OutlierAtScale,
    /// The lower-bound construction, randomly embedded, scaled and permuted.
    LowerBound,
    /// Points on a random line at small integer positions (many ties).
    Colinear,
    /// `n - f` copies of a vector plus `f` strictly shorter ones.
    CgeCounterexample,
}

impl Generator {
    /// Every family.
    pub const ALL: [Generator; 7] = [
        Generator::Gaussian,
        Generator::HeavyTail,
        Generator::TwoCluster,
        Generator::OutlierAtScale,
        Generator::LowerBound,
        Generator::Colinear,
        Generator::CgeCounterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Gaussian => "gaussian",
            Generator::HeavyTail => "heavy-tail",
            Generator::TwoCluster => "two-cluster",
            Generator::OutlierAtScale => "outlier-at-scale",
            Generator::LowerBound => "lower-bound",
            Generator::Colinear => "colinear",
            Generator::CgeCounterexample => "cge-counterexample",
        }
    }

    pub fn generate<S: Scalar>(
        self,
        n: usize,
        f: usize,
        d: usize,
        rng: &mut RngStream,
    ) -> Result<AuditInstance<S>> {
        let gaussian = |rng: &mut RngStream, scale: f64| -> Vec<f64> {
            (0..d).map(|_| scale * rng.standard_normal()).collect()
        };
        let unit = |rng: &mut RngStream| -> Vec<f64> {
            loop {
                let g = gaussian(rng, 1.0);
                let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 1e-9 {
                    return g.into_iter().map(|c| c / norm).collect();
                }
            }
        };
        let along = |c: &[f64], u: &[f64], t: f64| -> Vec<f64> {
            c.iter().zip(u).map(|(a, b)| a + t * b).collect()
        };
        let outliers = f.max(1).min(n - 1);

        let mut rows: Vec<Vec<f64>> = match self {
            Generator::Gaussian => (0..n).map(|_| gaussian(rng, 1.0)).collect(),
            Generator::HeavyTail => (0..n)
                .map(|_| {
                    (0..d)
                        .map(|_| rng.standard_normal() / rng.standard_normal().abs().max(1e-12))
                        .collect()
                })
                .collect(),
            Generator::TwoCluster => {
                let separation = 10f64.powi(rng.below(7) as i32);
                let u = unit(rng);
                let far = 1 + rng.below(outliers);
                (0..n)
                    .map(|i| {
                        let centre = if i < n - far { 0.0 } else { separation };
                        along(&gaussian(rng, 1.0), &u, centre)
                    })
                    .collect()
            }
            Generator::OutlierAtScale => {
                let scale = 10f64.powi(rng.below(7) as i32);
                let colluding = rng.uniform() < 0.5;
                let shared = unit(rng);
                (0..n)
                    .map(|i| {
                        if i < n - f {
                            gaussian(rng, 1.0)
                        } else {
                            let dir = if colluding { shared.clone() } else { unit(rng) };
                            dir.into_iter().map(|c| c * scale).collect()
                        }
                    })
                    .collect()
            }
            Generator::LowerBound => {
                let centre = gaussian(rng, 10.0);
                let u = unit(rng);
                let step = 10f64.powf(rng.uniform_range(-2.0, 2.0));
                (0..n)
                    .map(|i| along(&centre, &u, if i < n - f { 0.0 } else { step }))
                    .collect()
            }
            Generator::Colinear => {
                let centre = gaussian(rng, 1.0);
                let u = unit(rng);
                let step = 10f64.powf(rng.uniform_range(-1.0, 1.0));
                (0..n)
                    .map(|_| along(&centre, &u, step * rng.below(4) as f64))
                    .collect()
            }
            Generator::CgeCounterexample => {
                let honest = gaussian(rng, 1.0);
                let radius = honest.iter().map(|c| c * c).sum::<f64>().sqrt();
                (0..n)
                    .map(|i| {
                        if i < n - f {
                            honest.clone()
                        } else {
                            let r = radius * rng.uniform_range(0.0, 0.9);
                            unit(rng).into_iter().map(|c| c * r).collect()
                        }
                    })
                    .collect()
            }
        };
        if !matches!(self, Generator::Gaussian | Generator::HeavyTail) {
            let perm = rng.permutation(n);
            rows = perm.into_iter().map(|i| rows[i].clone()).collect();
        }
        AuditInstance::from_f64_rows(rows, f, self.name())
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown generator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport<S> {
    pub schema_version: u32,
    pub rule: RuleId,
    pub n: usize,
    pub f: usize,
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    /// Table coefficient the audit was run against; `None` for rules without
    /// one, whose `lambda_empirical` is a measurement, not a certificate.
    pub lambda_claimed: Option<f64>,
    pub lambda_empirical: f64,
    pub worst_instance: AuditInstance<S>,
    pub worst_subset: Vec<usize>,
    pub violated: bool,
}

/// Runs `trials` randomized instances, cycling through `generators`, against
/// the rule's certified coefficient (if any) at the rule's default tolerance.
pub fn randomized_audit<S: Scalar>(
    rule: &RuleId,
    n: usize,
    f: usize,
    d: usize,
    trials: usize,
    generators: &[Generator],
    rng: &RngStream,
) -> Result<AuditReport<S>> {
    let lambda = if rule.is_certified() {
        Some(lambda_of(rule, n, f, d)?.lambda)
    } else {
        None
    };
    randomized_audit_with(rule, n, f, d, trials, generators, rng, lambda, default_tolerance(rule))
}

/// [`randomized_audit`] with an explicit claim and tolerance. Trials run in
/// parallel, each on its own substream, so the report does not depend on
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn randomized_audit_with<S: Scalar>(
    rule: &RuleId,
    n: usize,
    f: usize,
    d: usize,
    trials: usize,
    generators: &[Generator],
    rng: &RngStream,
    lambda_claimed: Option<f64>,
    tol: f64,
) -> Result<AuditReport<S>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("audit needs at least one trial".into()));
    }
    if generators.is_empty() {
        return Err(Error::InvalidParameter("audit needs at least one generator".into()));
    }
    if d == 0 || f >= n {
        return Err(Error::InvalidParameter(format!(
            "audit needs d >= 1 and f < n, got n = {n}, f = {f}, d = {d}"
        )));
    }
    rule.validate()?;
    check_enumerable(n, n - f)?;

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut stream = rng.substream(trial as u64);
            let generator = generators[trial % generators.len()];
            let instance = generator.generate::<S>(n, f, d, &mut stream)?;
            let check = check_instance(rule, &instance, lambda_claimed, tol)?;
            Ok((trial, instance, check))
        })
        .collect::<Result<Vec<_>>>()?;

    let lambda_empirical = outcomes
        .iter()
        .map(|(_, _, c)| c.worst_ratio)
        .fold(0.0, f64::max);
    let violated = outcomes.iter().any(|(_, _, c)| !c.passed);
    let (_, worst_instance, worst_check) = if violated {
        outcomes.into_iter().find(|(_, _, c)| !c.passed)
    } else {
        outcomes
            .into_iter()
            .reduce(|best, next| if next.2.worst_ratio > best.2.worst_ratio { next } else { best })
    }
    .expect("at least one trial");

    Ok(AuditReport {
        schema_version: crate::SCHEMA_VERSION,
        rule: *rule,
        n,
        f,
        d,
        trials,
        seed: rng.seed(),
        tol,
        lambda_claimed,
        lambda_empirical,
        worst_instance,
        worst_subset: worst_check.worst_subset,
        violated,
    })
}
