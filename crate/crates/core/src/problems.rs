//! Synthetic objectives with known smoothness and noise constants.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{gaussian_vector, RngStream};
use crate::scalar::Scalar;
use crate::vector::ParamVector;

/// A stochastic gradient together with the loss it was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSample<S> {
    pub gradient: ParamVector<S>,
    pub loss: S,
}

/// `Q(θ) = ½‖θ - θ*‖²`, observed through `∇Q(θ) + u` with
/// `u ~ N(0, σ²/d · I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem<S> {
    pub theta_star: ParamVector<S>,
    pub sigma: f64,
}

/// How the two Gaussian blobs of a logistic dataset are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub dim: usize,
    /// Class 0 is centred at `mu · 𝟙` and class 1 at `-mu · 𝟙`.
    pub mu: f64,
    /// Samples per class.
    pub n_per_class: usize,
    pub seed: u64,
}

/// L2-regularized binary logistic regression on two unit-covariance
/// Gaussian blobs. Labels are 0/1 and the model has no intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProblem<S> {
    dim: usize,
    /// Row-major `samples × dim` feature matrix.
    features: Vec<S>,
    labels: Vec<u8>,
    pub batch: usize,
    pub reg: f64,
    /// Measured gradient-noise level `σ`; see [`Problem::estimate_sigma`].
    pub sigma_estimate: Option<f64>,
    smoothness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem<S> {
    Quadratic(QuadraticProblem<S>),
    Logistic(LogisticProblem<S>),
}

/// Serializable description from which a [`Problem`] is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic {
        dim: usize,
        sigma: f64,
        /// Minimizer; the origin when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta_star: Option<Vec<f64>>,
    },
    Logistic {
        dim: usize,
        mu: f64,
        /// Samples per class.
        n_samples: usize,
        batch: usize,
        #[serde(default)]
        reg: f64,
        #[serde(default)]
        data_seed: u64,
    },
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ProblemSpec::Quadratic { dim, .. } | ProblemSpec::Logistic { dim, .. } => dim,
        }
    }

    pub fn build<S: Scalar>(&self) -> Result<Problem<S>> {
        match self {
            ProblemSpec::Quadratic { dim, sigma, theta_star } => {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("dim must be >= 1".into()));
                }
                let star = match theta_star {
                    Some(c) => {
                        let v = ParamVector::from_f64(c)?;
                        v.ensure_dim(*dim)?;
                        v
                    }
                    None => ParamVector::zeros(*dim),
                };
                Problem::quadratic(star, *sigma)
            }
            ProblemSpec::Logistic {
                dim,
                mu,
                n_samples,
                batch,
                reg,
                data_seed,
            } => Problem::logistic(
                BlobSpec {
                    dim: *dim,
                    mu: *mu,
                    n_per_class: *n_samples,
                    seed: *data_seed,
                },
                *batch,
                *reg,
            ),
        }
    }
}

impl<S: Scalar> QuadraticProblem<S> {
    pub fn new(theta_star: ParamVector<S>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { theta_star, sigma })
    }
}

impl<S: Scalar> LogisticProblem<S> {
    pub fn from_blobs(spec: BlobSpec, batch: usize, reg: f64) -> Result<Self> {
        if spec.dim == 0 || spec.n_per_class == 0 {
            return Err(Error::InvalidParameter(
                "logistic dataset needs dim >= 1 and n_samples >= 1".into(),
            ));
        }
        if !spec.mu.is_finite() {
            return Err(Error::InvalidParameter("mu must be finite".into()));
        }
        let mut rng = RngStream::new(spec.seed, u64::MAX);
        let total = 2 * spec.n_per_class;
        let mut features = Vec::with_capacity(total * spec.dim);
        let mut labels = Vec::with_capacity(total);
        for i in 0..total {
            let label = (i % 2) as u8;
            let centre = if label == 1 { -spec.mu } else { spec.mu };
            for _ in 0..spec.dim {
                features.push(S::lit(centre + rng.standard_normal()));
            }
            labels.push(label);
        }
        Self::from_data(spec.dim, features, labels, batch, reg)
    }

    /// Builds a problem from an explicit dataset; labels must be 0 or 1.
    pub fn from_data(dim: usize, features: Vec<S>, labels: Vec<u8>, batch: usize, reg: f64) -> Result<Self> {
        if dim == 0 || labels.is_empty() || features.len() != dim * labels.len() {
            return Err(Error::InvalidParameter(
                "feature matrix must be samples × dim with at least one sample".into(),
            ));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
        }
        if batch == 0 {
            return Err(Error::InvalidParameter("batch must be >= 1".into()));
        }
        if !(reg >= 0.0) || !reg.is_finite() {
            return Err(Error::InvalidParameter(format!("reg must be >= 0, got {reg}")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let smoothness = logistic_smoothness(dim, &features, labels.len(), reg);
        Ok(Self {
            dim,
            features,
            labels,
            batch,
            reg,
            sigma_estimate: None,
            smoothness,
        })
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    fn row(&self, i: usize) -> &[S] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean loss and gradient over `indices`, with labels optionally flipped.
    fn loss_and_gradient(
        &self,
        theta: &ParamVector<S>,
        indices: impl ExactSizeIterator<Item = usize>,
        flip: bool,
    ) -> (S, ParamVector<S>) {
        let count = S::from_count(indices.len());
        let mut grad = vec![S::zero(); self.dim];
        let mut loss = S::zero();
        let th = theta.as_slice();
        for i in indices {
            let x = self.row(i);
            let y = if flip { 1 - self.labels[i] } else { self.labels[i] };
            let y = if y == 1 { S::one() } else { S::zero() };
            let z: S = x.iter().zip(th).map(|(&a, &b)| a * b).sum();
            // softplus(z) - y z, evaluated stably
            loss = loss + z.max(S::zero()) + (-z.abs()).exp().ln_1p() - y * z;
            let residual = sigmoid(z) - y;
            for (g, &xk) in grad.iter_mut().zip(x) {
                *g = *g + residual * xk;
            }
        }
        let reg = S::lit(self.reg);
        let half = S::lit(0.5);
        let loss = loss / count + half * reg * theta.norm_sq();
        let grad = grad
            .into_iter()
            .zip(th)
            .map(|(g, &t)| g / count + reg * t)
            .collect();
        (loss, ParamVector::from_raw(grad))
    }

    fn minibatch(&self, theta: &ParamVector<S>, rng: &mut RngStream, flip: bool) -> GradSample<S> {
        let (loss, gradient) = if self.batch >= self.samples() {
            self.loss_and_gradient(theta, 0..self.samples(), flip)
        } else {
            let picked = rng.sample_indices(self.samples(), self.batch);
            self.loss_and_gradient(theta, picked.into_iter(), flip)
        };
        GradSample { gradient, loss }
    }

    /// Fraction of samples classified correctly by `θ·x > 0`.
    pub fn accuracy(&self, theta: &ParamVector<S>) -> f64 {
        let th = theta.as_slice();
        let correct = (0..self.samples())
            .filter(|&i| {
                let z: S = self.row(i).iter().zip(th).map(|(&a, &b)| a * b).sum();
                (z > S::zero()) == (self.labels[i] == 1)
            })
            .count();
        correct as f64 / self.samples() as f64
    }
}

fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// `λ_max(XᵀX) / (4N) + reg`.
fn logistic_smoothness<S: Scalar>(dim: usize, features: &[S], samples: usize, reg: f64) -> f64 {
    let x = DMatrix::from_row_iterator(samples, dim, features.iter().map(|v| v.as_f64()));
    let gram = x.transpose() * &x;
    let top = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    top / (4.0 * samples as f64) + reg
}

impl<S: Scalar> Problem<S> {
    pub fn quadratic(theta_star: ParamVector<S>, sigma: f64) -> Result<Self> {
        Ok(Problem::Quadratic(QuadraticProblem::new(theta_star, sigma)?))
    }

    pub fn logistic(spec: BlobSpec, batch: usize, reg: f64) -> Result<Self> {
        Ok(Problem::Logistic(LogisticProblem::from_blobs(spec, batch, reg)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Quadratic(q) => q.theta_star.dim(),
            Problem::Logistic(l) => l.dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Problem::Quadratic(_) => "quadratic",
            Problem::Logistic(_) => "logistic",
        }
    }

    /// Exact objective `Q(θ)` on the full data.
    pub fn loss(&self, theta: &ParamVector<S>) -> Result<S> {
        theta.ensure_dim(self.dim())?;
        Ok(match self {
            Problem::Quadratic(q) => S::lit(0.5) * theta.dist_sq(&q.theta_star),
            Problem::Logistic(l) => l.loss_and_gradient(theta, 0..l.samples(), false).0,
        })
    }

    pub fn true_gradient(&self, theta: &ParamVector<S>) -> Result<ParamVector<S>> {
        theta.ensure_dim(self.dim())?;
        match self {
            Problem::Quadratic(q) => theta.sub(&q.theta_star),
            Problem::Logistic(l) => Ok(l.loss_and_gradient(theta, 0..l.samples(), false).1),
        }
    }

    /// Exact loss and gradient in one pass.
    pub fn loss_and_gradient(&self, theta: &ParamVector<S>) -> Result<(S, ParamVector<S>)> {
        theta.ensure_dim(self.dim())?;
        match self {
            Problem::Quadratic(_) => Ok((self.loss(theta)?, self.true_gradient(theta)?)),
            Problem::Logistic(l) => Ok(l.loss_and_gradient(theta, 0..l.samples(), false)),
        }
    }

    pub fn stochastic_gradient(&self, theta: &ParamVector<S>, rng: &mut RngStream) -> Result<GradSample<S>> {
        theta.ensure_dim(self.dim())?;
        match self {
            Problem::Quadratic(q) => {
                let noise = gaussian_vector(rng, self.dim(), q.sigma * q.sigma)?;
                Ok(GradSample {
                    gradient: theta.sub(&q.theta_star)?.add(&noise)?,
                    loss: self.loss(theta)?,
                })
            }
            Problem::Logistic(l) => Ok(l.minibatch(theta, rng, false)),
        }
    }

    /// Minibatch gradient with every label `l` replaced by `1 - l`.
    pub fn flipped_gradient(&self, theta: &ParamVector<S>, rng: &mut RngStream) -> Result<GradSample<S>> {
        theta.ensure_dim(self.dim())?;
        match self {
            Problem::Quadratic(_) => Err(Error::UnsupportedProblem(
                "label flipping needs a labelled dataset",
            )),
            Problem::Logistic(l) => Ok(l.minibatch(theta, rng, true)),
        }
    }

    /// Lipschitz constant of `∇Q`.
    pub fn smoothness_constant(&self) -> f64 {
        match self {
            Problem::Quadratic(_) => 1.0,
            Problem::Logistic(l) => l.smoothness,
        }
    }

    /// Gradient noise level `σ`: exact for the quadratic, the stored
    /// estimate for the logistic problem.
    pub fn sigma(&self) -> Option<f64> {
        match self {
            Problem::Quadratic(q) => Some(q.sigma),
            Problem::Logistic(l) => l.sigma_estimate,
        }
    }

    /// Known minimum value `Q*`, if any.
    pub fn min_loss(&self) -> Option<f64> {
        match self {
            Problem::Quadratic(_) => Some(0.0),
            Problem::Logistic(_) => None,
        }
    }

    pub fn accuracy(&self, theta: &ParamVector<S>) -> Option<f64> {
        match self {
            Problem::Quadratic(_) => None,
            Problem::Logistic(l) => Some(l.accuracy(theta)),
        }
    }

    /// Monte Carlo estimate of `sqrt(E‖g - ∇Q(θ)‖²)` from `samples` draws.
    pub fn estimate_sigma(&self, theta: &ParamVector<S>, samples: usize, rng: &mut RngStream) -> Result<f64> {
        if samples == 0 {
            return Err(Error::InvalidParameter("need at least one sample".into()));
        }
        let exact = self.true_gradient(theta)?;
        let mut total = 0.0;
        for _ in 0..samples {
            let g = self.stochastic_gradient(theta, rng)?.gradient;
            total += g.dist_sq(&exact).as_f64();
        }
        Ok((total / samples as f64).sqrt())
    }

    /// Measures `σ` at `theta` and stores it on a logistic problem. A no-op
    /// for the quadratic, whose `σ` is exact.
    pub fn refresh_sigma(&mut self, theta: &ParamVector<S>, samples: usize, rng: &mut RngStream) -> Result<f64> {
        let measured = match self {
            Problem::Quadratic(q) => return Ok(q.sigma),
            Problem::Logistic(_) => self.estimate_sigma(theta, samples, rng)?,
        };
        if let Problem::Logistic(l) = self {
            l.sigma_estimate = Some(measured);
        }
        Ok(measured)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> ParamVector<f64> {
        ParamVector::from_f64(c).unwrap()
    }

    fn blobs(batch: usize, reg: f64) -> Problem<f64> {
        Problem::logistic(
            BlobSpec {
                dim: 4,
                mu: 1.0,
                n_per_class: 100,
                seed: 3,
            },
            batch,
            reg,
        )
        .unwrap()
    }

    fn random_theta(rng: &mut RngStream, dim: usize, scale: f64) -> ParamVector<f64> {
        ParamVector::new((0..dim).map(|_| scale * rng.standard_normal()).collect()).unwrap()
    }

    /// Central finite difference of the exact loss.
    fn finite_difference(p: &Problem<f64>, theta: &ParamVector<f64>, h: f64) -> Vec<f64> {
        (0..theta.dim())
            .map(|k| {
                let mut up = theta.clone().into_vec();
                let mut down = up.clone();
                up[k] += h;
                down[k] -= h;
                (p.loss(&v(&up)).unwrap() - p.loss(&v(&down)).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn quadratic_gradient_examples() {
        let p = Problem::quadratic(v(&[0.0]), 1.0).unwrap();
        assert_eq!(p.true_gradient(&v(&[3.0])).unwrap(), v(&[3.0]));
        let p = Problem::quadratic(v(&[1.0, -2.0]), 1.0).unwrap();
        assert_eq!(p.true_gradient(&v(&[1.0, -2.0])).unwrap(), v(&[0.0, 0.0]));
        assert!(matches!(
            p.true_gradient(&v(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn noiseless_quadratic_is_exact() {
        let p = Problem::quadratic(v(&[0.5, 0.5]), 0.0).unwrap();
        let theta = v(&[2.0, -1.0]);
        let g = p.stochastic_gradient(&theta, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(g.gradient, p.true_gradient(&theta).unwrap());
    }

    #[test]
    fn quadratic_stochastic_gradient_is_unbiased() {
        let sigma = 2.0;
        let p = Problem::quadratic(v(&[0.0, 0.0, 0.0]), sigma).unwrap();
        let theta = v(&[1.0, -1.0, 0.5]);
        let m = 100_000;
        let mut rng = RngStream::new(8, 0);
        let mut sum = [0.0; 3];
        let mut sq = 0.0;
        for _ in 0..m {
            let g = p.stochastic_gradient(&theta, &mut rng).unwrap().gradient;
            for (s, x) in sum.iter_mut().zip(g.as_slice()) {
                *s += x;
            }
            sq += g.dist_sq(&theta);
        }
        for (s, t) in sum.iter().zip(theta.as_slice()) {
            assert!((s / m as f64 - t).abs() <= 5.0 * sigma / (m as f64).sqrt());
        }
        let var = sq / m as f64;
        assert!(var <= sigma * sigma * (1.0 + 5.0 * (2.0 / (3.0 * m as f64)).sqrt()));
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let p = blobs(10, 0.01);
        let mut rng = RngStream::new(2, 0);
        for _ in 0..100 {
            let theta = random_theta(&mut rng, 4, 1.0);
            let exact = p.true_gradient(&theta).unwrap();
            let fd = finite_difference(&p, &theta, 1e-6);
            let err: f64 = exact.as_slice().iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(err <= 1e-5 * exact.norm().max(1e-3), "err {err}");
        }
    }

    #[test]
    fn quadratic_gradient_matches_finite_differences() {
        let p = Problem::quadratic(v(&[0.3, -0.2, 1.0]), 1.0).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..100 {
            let theta = random_theta(&mut rng, 3, 2.0);
            let exact = p.true_gradient(&theta).unwrap();
            let fd = finite_difference(&p, &theta, 1e-6);
            let err: f64 = exact.as_slice().iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(err <= 1e-5 * exact.norm().max(1e-3));
        }
    }

    #[test]
    fn full_batch_equals_true_gradient() {
        let p = blobs(10_000, 0.1);
        let theta = v(&[0.2, -0.1, 0.3, 0.0]);
        let g = p.stochastic_gradient(&theta, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(g.gradient, p.true_gradient(&theta).unwrap());
        let a = p.flipped_gradient(&theta, &mut RngStream::new(0, 0)).unwrap();
        let b = p.flipped_gradient(&theta, &mut RngStream::new(5, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flipped_gradient_at_origin_negates_data_term() {
        let p = blobs(10_000, 0.0);
        let zero = ParamVector::zeros(4);
        let clean = p.true_gradient(&zero).unwrap();
        let flipped = p.flipped_gradient(&zero, &mut RngStream::new(0, 0)).unwrap().gradient;
        assert!(flipped.add(&clean).unwrap().norm() < 1e-12);
    }

    #[test]
    fn flipping_twice_restores_labels() {
        let p = match blobs(10_000, 0.0) {
            Problem::Logistic(l) => l,
            _ => unreachable!(),
        };
        let theta = v(&[0.4, 0.1, -0.3, 0.2]);
        let clean = p.loss_and_gradient(&theta, 0..p.samples(), false);
        let flipped_once = LogisticProblem::from_data(
            p.dim,
            p.features.clone(),
            p.labels.iter().map(|l| 1 - l).collect(),
            p.batch,
            p.reg,
        )
        .unwrap();
        let twice = flipped_once.loss_and_gradient(&theta, 0..p.samples(), true);
        assert_eq!(clean, twice);
    }

    #[test]
    fn quadratic_rejects_label_flip() {
        let p = Problem::quadratic(v(&[0.0]), 1.0).unwrap();
        assert!(matches!(
            p.flipped_gradient(&v(&[1.0]), &mut RngStream::new(0, 0)),
            Err(Error::UnsupportedProblem(_))
        ));
    }

    #[test]
    fn smoothness_examples() {
        assert_eq!(Problem::quadratic(v(&[0.0]), 1.0).unwrap().smoothness_constant(), 1.0);
        let zero = LogisticProblem::<f64>::from_data(2, vec![0.0; 6], vec![0, 1, 1], 1, 0.25).unwrap();
        assert_eq!(Problem::Logistic(zero).smoothness_constant(), 0.25);
    }

    #[test]
    fn logistic_gradient_is_lipschitz() {
        let p = blobs(10, 0.05);
        let l = p.smoothness_constant();
        let mut rng = RngStream::new(6, 0);
        for _ in 0..1000 {
            let a = random_theta(&mut rng, 4, 3.0);
            let b = random_theta(&mut rng, 4, 3.0);
            let lhs = p.true_gradient(&a).unwrap().dist(&p.true_gradient(&b).unwrap());
            assert!(lhs <= l * a.dist(&b) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn logistic_variance_is_measured_and_stored() {
        let mut p = blobs(5, 0.0);
        assert_eq!(p.sigma(), None);
        let theta = ParamVector::zeros(4);
        let s = p.refresh_sigma(&theta, 2000, &mut RngStream::new(1, 0)).unwrap();
        assert!(s > 0.0);
        assert_eq!(p.sigma(), Some(s));
        // losses are nonnegative
        assert!(p.loss(&theta).unwrap() >= 0.0);
    }

    #[test]
    fn accuracy_of_blob_classifier() {
        let p = blobs(10, 0.0);
        let acc = p.accuracy(&v(&[-1.0; 4])).unwrap();
        // Bayes accuracy Φ(2) ≈ 0.977
        assert!(acc > 0.93, "{acc}");
        let wrong = p.accuracy(&v(&[1.0; 4])).unwrap();
        assert!((acc + wrong - 1.0).abs() < 1e-12);
        assert_eq!(p.accuracy(&ParamVector::zeros(4)).unwrap(), 0.5);
    }
}
