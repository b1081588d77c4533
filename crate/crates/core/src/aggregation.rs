//! Robust aggregation rules and their closed-form resilience coefficients.
//!
//! Every rule is a pure function of the submitted vectors and `f`. Ties are
//! always broken towards the smaller input index, so outputs are fully
//! deterministic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::subsets::check_enumerable;
use crate::vector::{
    common_dim, distance_matrix, mean_of, median_of_sorted, scalar_mean, sorted, ParamVector,
};

/// Default clipping radius for centered clipping.
pub const DEFAULT_CC_TAU: f64 = 2.0;
/// Default number of centered-clipping iterations.
pub const DEFAULT_CC_ITERS: usize = 1;

/// Identifies an aggregation rule together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum RuleId {
    Mean,
    Mda,
    Cwtm,
    Cwmed,
    Meamed,
    KrumStar,
    /// Average of the `q` best-scoring inputs; `None` means `q = n - f`.
    MultiKrumStar {
        q: Option<usize>,
    },
    Gm,
    Cc {
        c_tau: f64,
        iters: usize,
    },
    Cge,
}

impl RuleId {
    pub const ALL_NAMES: [&'static str; 10] = [
        "mean",
        "mda",
        "cwtm",
        "cwmed",
        "meamed",
        "krum_star",
        "multi_krum_star",
        "gm",
        "cc",
        "cge",
    ];

    /// The rules with a closed-form resilience coefficient.
    pub fn certified() -> Vec<RuleId> {
        vec![
            RuleId::Mda,
            RuleId::Cwtm,
            RuleId::Cwmed,
            RuleId::Meamed,
            RuleId::KrumStar,
            RuleId::MultiKrumStar { q: None },
            RuleId::Gm,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            RuleId::Mean => "mean",
            RuleId::Mda => "mda",
            RuleId::Cwtm => "cwtm",
            RuleId::Cwmed => "cwmed",
            RuleId::Meamed => "meamed",
            RuleId::KrumStar => "krum_star",
            RuleId::MultiKrumStar { .. } => "multi_krum_star",
            RuleId::Gm => "gm",
            RuleId::Cc { .. } => "cc",
            RuleId::Cge => "cge",
        }
    }

    pub fn is_certified(&self) -> bool {
        !matches!(self, RuleId::Mean | RuleId::Cc { .. } | RuleId::Cge)
    }

    /// Checks parameters that do not depend on the number of inputs.
    pub fn validate(&self) -> Result<()> {
        match *self {
            RuleId::Cc { c_tau, iters } => {
                if !(c_tau >= 0.0) || !c_tau.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "cc clipping radius must be >= 0, got {c_tau}"
                    )));
                }
                if iters == 0 {
                    return Err(Error::InvalidParameter("cc needs at least one iteration".into()));
                }
            }
            RuleId::MultiKrumStar { q: Some(0) } => {
                return Err(Error::InvalidParameter("multi_krum_star needs q >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Applies the rule. Centered clipping starts from the zero vector.
    pub fn aggregate<S: Scalar>(&self, xs: &[ParamVector<S>], f: usize) -> Result<ParamVector<S>> {
        self.aggregate_with_anchor(xs, f, None)
    }

    /// Applies the rule; `anchor` is the centered-clipping starting point
    /// (typically the previous aggregate) and is ignored by other rules.
    pub fn aggregate_with_anchor<S: Scalar>(
        &self,
        xs: &[ParamVector<S>],
        f: usize,
        anchor: Option<&ParamVector<S>>,
    ) -> Result<ParamVector<S>> {
        self.validate()?;
        match *self {
            RuleId::Mean => aggregate_mean(xs, f),
            RuleId::Mda => aggregate_mda(xs, f),
            RuleId::Cwtm => aggregate_cwtm(xs, f),
            RuleId::Cwmed => aggregate_cwmed(xs, f),
            RuleId::Meamed => aggregate_meamed(xs, f),
            RuleId::KrumStar => aggregate_multikrum_star(xs, f, 1),
            RuleId::MultiKrumStar { q } => {
                let q = q.unwrap_or(xs.len().saturating_sub(f));
                aggregate_multikrum_star(xs, f, q)
            }
            RuleId::Gm => aggregate_gm(xs, f, GM_DEFAULT_TOL, GM_DEFAULT_MAX_ITERS),
            RuleId::Cc { c_tau, iters } => {
                let dim = common_dim(xs)?;
                let v0 = match anchor {
                    Some(a) => {
                        a.ensure_dim(dim)?;
                        a.clone()
                    }
                    None => ParamVector::zeros(dim),
                };
                aggregate_cc(xs, f, c_tau, iters, &v0)
            }
            RuleId::Cge => aggregate_cge(xs, f),
        }
    }

    /// Like [`RuleId::aggregate_with_anchor`], but accepts the last iterate
    /// of a geometric median that ran out of iterations.
    pub fn aggregate_lenient<S: Scalar>(
        &self,
        xs: &[ParamVector<S>],
        f: usize,
        anchor: Option<&ParamVector<S>>,
    ) -> Result<ParamVector<S>> {
        match self.aggregate_with_anchor(xs, f, anchor) {
            Err(Error::GmNotConverged { last_iterate, .. }) => ParamVector::from_f64(&last_iterate),
            other => other,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleId::MultiKrumStar { q: Some(q) } => write!(out, "multi_krum_star(q={q})"),
            RuleId::Cc { c_tau, iters } => write!(out, "cc(c_tau={c_tau},iters={iters})"),
            other => out.write_str(other.name()),
        }
    }
}

impl FromStr for RuleId {
    type Err = Error;

    /// Parses a canonical lowercase rule name, using default parameters.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mean" => RuleId::Mean,
            "mda" => RuleId::Mda,
            "cwtm" => RuleId::Cwtm,
            "cwmed" => RuleId::Cwmed,
            "meamed" => RuleId::Meamed,
            "krum_star" => RuleId::KrumStar,
            "multi_krum_star" => RuleId::MultiKrumStar { q: None },
            "gm" => RuleId::Gm,
            "cc" => RuleId::Cc {
                c_tau: DEFAULT_CC_TAU,
                iters: DEFAULT_CC_ITERS,
            },
            "cge" => RuleId::Cge,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown rule `{other}` (expected one of {})",
                    RuleId::ALL_NAMES.join(", ")
                )))
            }
        })
    }
}

fn require_f_below_half(n: usize, f: usize) -> Result<()> {
    if 2 * f >= n {
        return Err(Error::ByzantineBound { n, f });
    }
    Ok(())
}

fn require_f_below_n(n: usize, f: usize) -> Result<()> {
    if f >= n {
        return Err(Error::ByzantineBound { n, f });
    }
    Ok(())
}

/// Plain average; `f` is ignored.
pub fn aggregate_mean<S: Scalar>(xs: &[ParamVector<S>], _f: usize) -> Result<ParamVector<S>> {
    crate::vector::vec_mean(xs)
}

/// Minimum diameter averaging: the mean of a size-`n - f` subset of smallest
/// diameter, ties resolved to the lexicographically smallest index set.
pub fn aggregate_mda<S: Scalar>(xs: &[ParamVector<S>], f: usize) -> Result<ParamVector<S>> {
    common_dim(xs)?;
    let n = xs.len();
    require_f_below_half(n, f)?;
    check_enumerable(n, f)?;
    let dist = distance_matrix(xs);
    let mut search = MdaSearch {
        dist: &dist,
        n,
        k: n - f,
        current: Vec::with_capacity(n - f),
        best: None,
    };
    search.descend(0, S::zero());
    let (_, subset) = search.best.expect("at least one subset");
    Ok(mean_of(xs, &subset))
}

/// Depth-first search over index sets in lexicographic order, pruning any
/// branch whose partial diameter already reaches the best complete one.
struct MdaSearch<'a, S> {
    dist: &'a [Vec<S>],
    n: usize,
    k: usize,
    current: Vec<usize>,
    best: Option<(S, Vec<usize>)>,
}

impl<S: Scalar> MdaSearch<'_, S> {
    fn descend(&mut self, start: usize, diam: S) {
        if self.current.len() == self.k {
            self.best = Some((diam, self.current.clone()));
            return;
        }
        let remaining = self.k - self.current.len();
        for next in start..=(self.n - remaining) {
            let grown = self
                .current
                .iter()
                .fold(diam, |acc, &i| acc.max(self.dist[i][next]));
            if matches!(&self.best, Some((b, _)) if grown >= *b) {
                continue;
            }
            self.current.push(next);
            self.descend(next + 1, grown);
            self.current.pop();
        }
    }
}

/// Coordinate-wise trimmed mean: per coordinate, drop the `f` smallest and
/// `f` largest values and average the rest.
pub fn aggregate_cwtm<S: Scalar>(xs: &[ParamVector<S>], f: usize) -> Result<ParamVector<S>> {
    let dim = common_dim(xs)?;
    let n = xs.len();
    require_f_below_half(n, f)?;
    let coords = (0..dim)
        .map(|k| {
            let column: Vec<S> = xs.iter().map(|x| x.as_slice()[k]).collect();
            scalar_mean(&sorted(&column)[f..n - f])
        })
        .collect();
    Ok(ParamVector::from_raw(coords))
}

/// Coordinate-wise median; `f` is ignored.
pub fn aggregate_cwmed<S: Scalar>(xs: &[ParamVector<S>], _f: usize) -> Result<ParamVector<S>> {
    let dim = common_dim(xs)?;
    let coords = (0..dim)
        .map(|k| {
            let column: Vec<S> = xs.iter().map(|x| x.as_slice()[k]).collect();
            median_of_sorted(&sorted(&column))
        })
        .collect();
    Ok(ParamVector::from_raw(coords))
}

/// Mean around median: per coordinate, the average of the `n - f` values
/// closest to the coordinate median.
pub fn aggregate_meamed<S: Scalar>(xs: &[ParamVector<S>], f: usize) -> Result<ParamVector<S>> {
    let dim = common_dim(xs)?;
    let n = xs.len();
    require_f_below_half(n, f)?;
    let coords = (0..dim)
        .map(|k| {
            let column: Vec<S> = xs.iter().map(|x| x.as_slice()[k]).collect();
            let median = median_of_sorted(&sorted(&column));
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                let da = (column[a] - median).abs();
                let db = (column[b] - median).abs();
                da.partial_cmp(&db).expect("finite").then(a.cmp(&b))
            });
            let kept: Vec<S> = order[..n - f].iter().map(|&i| column[i]).collect();
            scalar_mean(&kept)
        })
        .collect();
    Ok(ParamVector::from_raw(coords))
}

/// Krum scores: sum of squared distances to the `n - f - 1` nearest other
/// inputs.
pub fn krum_scores<S: Scalar>(xs: &[ParamVector<S>], f: usize) -> Result<Vec<S>> {
    common_dim(xs)?;
    let n = xs.len();
    require_f_below_n(n, f)?;
    let neighbours = n - f - 1;
    let scores = (0..n)
        .map(|i| {
            let mut others: Vec<(S, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (xs[i].dist_sq(&xs[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
            others[..neighbours].iter().map(|&(d, _)| d).sum()
        })
        .collect();
    Ok(scores)
}

/// Multi-Krum*: the mean of the `q` inputs with the lowest Krum scores.
/// Krum* is `q = 1`.
pub fn aggregate_multikrum_star<S: Scalar>(
    xs: &[ParamVector<S>],
    f: usize,
    q: usize,
) -> Result<ParamVector<S>> {
    common_dim(xs)?;
    let n = xs.len();
    require_f_below_half(n, f)?;
    if q == 0 || q > n - f {
        return Err(Error::InvalidParameter(format!(
            "multi_krum_star needs 1 <= q <= n - f = {}, got q = {q}",
            n - f
        )));
    }
    let scores = krum_scores(xs, f)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("finite")
            .then(a.cmp(&b))
    });
    Ok(mean_of(xs, &order[..q]))
}

/// Relative step tolerance and iteration cap of the geometric median.
pub const GM_DEFAULT_TOL: f64 = 1e-10;
pub const GM_DEFAULT_MAX_ITERS: usize = 10_000;

/// Geometric median, computed in double precision.
///
/// An input that satisfies the optimality condition is returned exactly when
/// it is the only one to do so. Otherwise the solver starts at the mean and
/// takes damped Newton steps, falling back to a Weiszfeld step (with the
/// Vardi-Zhang correction at data points) whenever the Hessian is singular
/// or the Newton step fails to decrease the objective. It stops once a step
/// is shorter than `tol` times the input spread (largest distance from the
/// mean).
pub fn aggregate_gm<S: Scalar>(
    xs: &[ParamVector<S>],
    _f: usize,
    tol: f64,
    max_iters: usize,
) -> Result<ParamVector<S>> {
    common_dim(xs)?;
    if !(tol > 0.0) || max_iters == 0 {
        return Err(Error::InvalidParameter(
            "gm needs tol > 0 and max_iters >= 1".into(),
        ));
    }
    if xs.iter().all(|x| x == &xs[0]) {
        return Ok(xs[0].clone());
    }
    let points: Vec<Vec<f64>> = xs.iter().map(|x| x.to_f64_vec()).collect();
    let mut optimal: Option<usize> = None;
    for j in 0..points.len() {
        if points[..j].contains(&points[j]) || !gm_optimal_at(&points, &points[j]) {
            continue;
        }
        if optimal.is_some() {
            optimal = None;
            break;
        }
        optimal = Some(j);
    }
    if let Some(j) = optimal {
        return Ok(xs[j].clone());
    }
    let mean = crate::vector::vec_mean(xs)?.to_f64_vec();
    let spread = points.iter().map(|x| euclid(x, &mean)).fold(0.0, f64::max);
    let threshold = tol * spread;
    let mut z = mean;
    for _ in 0..max_iters {
        let next = newton_step(&points, &z).unwrap_or_else(|| weiszfeld_step(&points, &z));
        let step = euclid(&next, &z);
        z = next;
        if step <= threshold {
            return Ok(ParamVector::from_raw(z.into_iter().map(S::lit).collect()));
        }
    }
    Err(Error::GmNotConverged {
        iterations: max_iters,
        last_iterate: z,
    })
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn gm_objective(points: &[Vec<f64>], z: &[f64]) -> f64 {
    points.iter().map(|x| euclid(x, z)).sum()
}

/// Sum of unit vectors from `z` towards the inputs different from `z`, and
/// the number of inputs equal to `z`.
fn gm_pull(points: &[Vec<f64>], z: &[f64]) -> (Vec<f64>, usize) {
    let mut pull = vec![0.0; z.len()];
    let mut multiplicity = 0;
    for x in points {
        let d = euclid(x, z);
        if d == 0.0 {
            multiplicity += 1;
            continue;
        }
        for ((p, a), b) in pull.iter_mut().zip(x).zip(z) {
            *p += (a - b) / d;
        }
    }
    (pull, multiplicity)
}

/// Whether `‖Σ_{x_i ≠ z} (x_i - z)/‖x_i - z‖‖ <= #{x_i = z}`.
fn gm_optimal_at(points: &[Vec<f64>], z: &[f64]) -> bool {
    let (pull, multiplicity) = gm_pull(points, z);
    pull.iter().map(|p| p * p).sum::<f64>().sqrt() <= multiplicity as f64
}

fn weiszfeld_step(points: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let mut total = 0.0;
    let mut acc = vec![0.0; z.len()];
    let mut multiplicity = 0usize;
    for x in points {
        let d = euclid(x, z);
        if d == 0.0 {
            multiplicity += 1;
            continue;
        }
        total += 1.0 / d;
        for (a, v) in acc.iter_mut().zip(x) {
            *a += v / d;
        }
    }
    let plain: Vec<f64> = acc.iter().map(|a| a / total).collect();
    if multiplicity == 0 {
        return plain;
    }
    let (pull, _) = gm_pull(points, z);
    let norm = pull.iter().map(|p| p * p).sum::<f64>().sqrt();
    let ratio = (multiplicity as f64 / norm).min(1.0);
    plain.iter().zip(z).map(|(p, q)| (1.0 - ratio) * p + ratio * q).collect()
}

/// Newton step with Armijo backtracking; `None` at a data point, for a
/// singular Hessian, or when no sufficient decrease is found.
fn newton_step(points: &[Vec<f64>], z: &[f64]) -> Option<Vec<f64>> {
    use nalgebra::{DMatrix, DVector};
    let dim = z.len();
    let mut grad = DVector::<f64>::zeros(dim);
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    for x in points {
        let r = DVector::from_iterator(dim, z.iter().zip(x).map(|(a, b)| a - b));
        let d = r.norm();
        if d == 0.0 {
            return None;
        }
        grad.axpy(1.0 / d, &r, 1.0);
        hess += (DMatrix::identity(dim, dim) - &r * r.transpose() / (d * d)) / d;
    }
    let direction = -hess.cholesky()?.solve(&grad);
    let slope = grad.dot(&direction);
    if !(slope < 0.0) {
        return None;
    }
    let f0 = gm_objective(points, z);
    let mut t = 1.0;
    for _ in 0..40 {
        let cand: Vec<f64> = z.iter().zip(direction.iter()).map(|(a, p)| a + t * p).collect();
        if gm_objective(points, &cand) <= f0 + 1e-4 * t * slope {
            return Some(cand);
        }
        t *= 0.5;
    }
    None
}

/// Centered clipping: `iters` rounds of
/// `v <- v + (1/n) Σ (x_i - v) min(1, c_tau / ‖x_i - v‖)` starting from `v0`.
pub fn aggregate_cc<S: Scalar>(
    xs: &[ParamVector<S>],
    _f: usize,
    c_tau: f64,
    iters: usize,
    v0: &ParamVector<S>,
) -> Result<ParamVector<S>> {
    let dim = common_dim(xs)?;
    v0.ensure_dim(dim)?;
    RuleId::Cc { c_tau, iters }.validate()?;
    let n = S::from_count(xs.len());
    let c_tau = S::lit(c_tau);
    let mut v = v0.clone();
    for _ in 0..iters {
        let mut step = ParamVector::zeros(dim);
        for x in xs {
            let diff = x.sub(&v)?;
            let norm = diff.norm();
            let factor = if norm > S::zero() {
                S::one().min(c_tau / norm)
            } else {
                S::one()
            };
            step.axpy(factor, &diff)?;
        }
        v.axpy(S::one() / n, &step)?;
    }
    Ok(v)
}

/// Comparative gradient elimination: the mean of the `n - f` inputs of
/// smallest norm.
pub fn aggregate_cge<S: Scalar>(xs: &[ParamVector<S>], f: usize) -> Result<ParamVector<S>> {
    common_dim(xs)?;
    let n = xs.len();
    require_f_below_n(n, f)?;
    let norms: Vec<S> = xs.iter().map(|x| x.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[a].partial_cmp(&norms[b]).expect("finite").then(a.cmp(&b)));
    Ok(mean_of(xs, &order[..n - f]))
}

/// A rule's certified `(f, λ)` resilience coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceCoefficient {
    pub rule: RuleId,
    pub n: usize,
    pub f: usize,
    pub d: usize,
    pub lambda: f64,
    /// `min{2 √(n - f), √d}`, the dimension factor of coordinate-wise rules.
    pub delta: f64,
}

/// `min{2 √(n - f), √d}`.
pub fn dimension_factor(n: usize, f: usize, d: usize) -> f64 {
    (2.0 * ((n - f) as f64).sqrt()).min((d as f64).sqrt())
}

/// Closed-form resilience coefficient for the certified rules, defined for
/// `2f < n`.
pub fn lambda_of(rule: &RuleId, n: usize, f: usize, d: usize) -> Result<ResilienceCoefficient> {
    require_f_below_half(n, f)?;
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let nf = (n - f) as f64;
    let n2f = (n - 2 * f) as f64;
    let (nn, ff) = (n as f64, f as f64);
    let delta = dimension_factor(n, f, d);
    let krum = 1.0 + (nf / n2f).sqrt();
    let lambda = match *rule {
        RuleId::Mda => 2.0 * ff / nf,
        RuleId::Cwtm => ff / nf * delta,
        RuleId::Meamed => 2.0 * ff / nf * delta,
        RuleId::KrumStar => krum,
        RuleId::MultiKrumStar { q } => {
            let q = q.unwrap_or(n - f);
            if q == 0 || q > n - f {
                return Err(Error::InvalidParameter(format!(
                    "multi_krum_star needs 1 <= q <= n - f = {}, got q = {q}",
                    n - f
                )));
            }
            krum * 1f64.min((nn - q as f64) / nf)
        }
        RuleId::Gm => 1.0 + nf / (n2f * nn).sqrt(),
        RuleId::Cwmed => nn / (2.0 * nf) * delta,
        RuleId::Mean | RuleId::Cc { .. } | RuleId::Cge => {
            return Err(Error::NoCertifiedCoefficient(rule.name()))
        }
    };
    Ok(ResilienceCoefficient {
        rule: *rule,
        n,
        f,
        d,
        lambda,
        delta,
    })
}
