//! Closed-form convergence constants, step-size prescription and the
//! per-step bounds used as diagnostics by the simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem and rule constants feeding the step-size prescription.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    /// Smoothness constant `L`.
    pub l: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub n: usize,
    pub f: usize,
    /// Horizon `T`.
    pub t: usize,
    /// `Q(θ₁)`.
    pub q1: f64,
    /// `Q*`, or a lower estimate of it.
    pub qstar: f64,
    /// `‖∇Q(θ₁)‖²`.
    pub grad1_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremOutputs {
    pub gamma: f64,
    pub beta: f64,
    pub t_min: u64,
    pub bound: f64,
    pub epsilon_order: f64,
    pub kappa: f64,
    pub a_o: f64,
    pub a_1: f64,
    pub a_2: f64,
    /// Set when `Q*` was estimated rather than known.
    pub estimated: bool,
}

impl TheoremInputs {
    fn validate(&self) -> Result<()> {
        let reals = [self.l, self.sigma, self.lambda, self.q1, self.qstar, self.grad1_sq];
        if reals.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::TheoremMode("inputs must be finite and nonnegative".into()));
        }
        if 2 * self.f >= self.n {
            return Err(Error::ByzantineBound { n: self.n, f: self.f });
        }
        if self.t == 0 {
            return Err(Error::TheoremMode("T must be >= 1".into()));
        }
        if self.l <= 0.0 {
            return Err(Error::TheoremMode("L must be > 0".into()));
        }
        if self.sigma == 0.0 {
            return Err(Error::TheoremMode("sigma = 0: use explicit gamma and beta".into()));
        }
        if self.lambda == 0.0 {
            return Err(Error::TheoremMode("lambda = 0: use explicit gamma and beta".into()));
        }
        if self.q1 < self.qstar {
            return Err(Error::TheoremMode("Q(theta_1) is below Q*".into()));
        }
        Ok(())
    }

    pub fn a_o(&self) -> f64 {
        4.0 * (2.0 * (self.q1 - self.qstar) + self.grad1_sq / (8.0 * self.l))
    }

    /// Smallest horizon for which the prescribed momentum is well defined.
    pub fn t_min(&self) -> u64 {
        let honest = (self.n - self.f) as f64;
        let raw = self.a_o() * self.l / (12.0 * self.sigma * self.sigma * self.lambda * self.lambda * honest);
        raw.ceil().max(1.0) as u64
    }
}

/// Constant step size `γ`, momentum `β = √(1 - 24γL)` and the resulting
/// bound on `E‖∇Q(θ̂)‖²`.
pub fn theorem_params(inputs: &TheoremInputs) -> Result<TheoremOutputs> {
    inputs.validate()?;
    let a_o = inputs.a_o();
    if a_o == 0.0 {
        return Err(Error::TheoremMode(
            "theta_1 is already optimal: use explicit gamma and beta".into(),
        ));
    }
    let t_min = inputs.t_min();
    if (inputs.t as u64) < t_min {
        return Err(Error::TheoremMode(format!(
            "T = {} is below T_min = {t_min}",
            inputs.t
        )));
    }
    let l = inputs.l;
    let a_1 = 6912.0 * l;
    let a_2 = 288.0 * l;
    let honest = (inputs.n - inputs.f) as f64;
    let lam_sq = inputs.lambda * inputs.lambda;
    let sigma = inputs.sigma;
    let t = inputs.t as f64;
    let k = a_1 * lam_sq * honest * honest + a_2;
    let scale = (a_o * honest / k).sqrt();
    let gamma = scale / (sigma * t.sqrt());
    let beta = (1.0 - 24.0 * gamma * l).max(0.0).sqrt();
    let bound = 2.0 * ((a_1 * lam_sq * honest + a_2 / honest) * a_o * sigma * sigma / t).sqrt()
        + (a_2 * sigma / honest) * scale * t.powf(-1.5);
    Ok(TheoremOutputs {
        gamma,
        beta,
        t_min,
        bound,
        epsilon_order: epsilon_order(sigma, inputs.lambda, inputs.n, inputs.f, inputs.t),
        kappa: kappa(inputs.lambda, inputs.n, inputs.f),
        a_o,
        a_1,
        a_2,
        estimated: false,
    })
}

/// `√((σ²/T)(1/(n-f) + λ²(n-f)))`, the bound without its constants.
pub fn epsilon_order(sigma: f64, lambda: f64, n: usize, f: usize, t: usize) -> f64 {
    let honest = (n - f) as f64;
    (sigma * sigma / t as f64 * (1.0 / honest + lambda * lambda * honest)).sqrt()
}

/// `λ²(n-f)`, the rule-dependent part of the rate.
pub fn kappa(lambda: f64, n: usize, f: usize) -> f64 {
    lambda * lambda * (n - f) as f64
}

/// Bound on `E‖m_t⁽ⁱ⁾ - m̄_t‖²` for an honest worker.
pub fn lemma_momentum_drift_bound(sigma: f64, n: usize, f: usize, beta: f64, t: usize) -> f64 {
    let honest = (n - f) as f64;
    let s2 = sigma * sigma;
    2.0 * s2 * (1.0 - beta).powi(2) * beta.powi(2 * (t as i32 - 1))
        + 2.0 * ((1.0 - beta) / (1.0 + beta)) * (1.0 + 1.0 / honest) * s2
}

/// Bound on `E‖δ_t‖²` when the rule is `(f, λ)`-resilient averaging.
pub fn lemma_drift_bound(sigma: f64, lambda: f64, n: usize, f: usize, beta: f64, t: usize) -> f64 {
    let honest = (n - f) as f64;
    let s2l2 = sigma * sigma * lambda * lambda;
    8.0 * s2l2 * honest * (1.0 - beta).powi(2) * beta.powi(2 * (t as i32 - 1))
        + 8.0 * ((1.0 - beta) / (1.0 + beta)) * (honest + 1.0) * s2l2
}

/// Coefficients of the deviation recursion
/// `E‖dev_t‖² ≤ β²ζ E‖dev_{t-1}‖² + β²·gradient·E‖∇Q‖² + (1-β)²σ²/(n-f) + β²·drift·E‖δ_{t-1}‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Coeffs {
    pub zeta: f64,
    pub gradient: f64,
    pub drift: f64,
}

pub fn lemma3_coeffs(gamma: f64, l: f64) -> Lemma3Coeffs {
    let gl = gamma * l;
    Lemma3Coeffs {
        zeta: (1.0 + gl) * (1.0 + 4.0 * gl),
        gradient: 4.0 * gl * (1.0 + gl),
        drift: 2.0 * gl * (1.0 + gl),
    }
}

impl Lemma3Coeffs {
    /// Right-hand side of the recursion given the previous step's quantities.
    pub fn rhs(&self, beta: f64, sigma: f64, honest: usize, dev_sq: f64, grad_sq: f64, drift_sq: f64) -> f64 {
        let b2 = beta * beta;
        b2 * self.zeta * dev_sq
            + b2 * self.gradient * grad_sq
            + (1.0 - beta).powi(2) * sigma * sigma / honest as f64
            + b2 * self.drift * drift_sq
    }
}

/// Upper bound on `2Q(θ_{t+1}) - 2Q(θ_t)`.
pub fn descent_rhs(gamma: f64, l: f64, grad_sq: f64, dev_sq: f64, drift_sq: f64) -> f64 {
    -gamma * (1.0 - 4.0 * gamma * l) * grad_sq
        + 2.0 * gamma * (1.0 + 2.0 * gamma * l) * dev_sq
        + 2.0 * gamma * (1.0 + gamma * l) * drift_sq
}

/// Weight of the squared deviation in the Lyapunov function.
pub fn lyapunov_weight(l: f64) -> f64 {
    1.0 / (8.0 * l)
}

/// `V = 2Q + ‖dev‖²/(8L)`.
pub fn lyapunov(loss: f64, dev_sq: f64, l: f64) -> f64 {
    2.0 * loss + lyapunov_weight(l) * dev_sq
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(t: usize, lambda: f64) -> TheoremInputs {
        TheoremInputs {
            l: 1.0,
            sigma: 1.0,
            lambda,
            n: 15,
            f: 5,
            t,
            q1: 0.5,
            qstar: 0.0,
            grad1_sq: 1.0,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn beta_from_gamma_example() {
        // choose sigma so that 24 γ L = 0.5 exactly at T = 100
        let mut inp = base(100, 1.0);
        let k = 6912.0 * 100.0 + 288.0;
        let a_o = inp.a_o();
        inp.sigma = (a_o * 10.0 / k).sqrt() / (10.0 * (0.5 / 24.0));
        let out = theorem_params(&inp).unwrap();
        assert!(rel(24.0 * out.gamma, 0.5) < 1e-12);
        assert!((out.beta - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn beta_in_unit_interval_from_t_min() {
        for lambda in [0.1, 0.5, 1.0, 3.0] {
            for sigma in [0.01, 0.3, 1.0, 10.0] {
                let mut inp = base(1, lambda);
                inp.sigma = sigma;
                let t_min = inp.t_min() as usize;
                for t in [t_min, t_min + 1, 2 * t_min, 100 * t_min] {
                    inp.t = t;
                    let out = theorem_params(&inp).unwrap();
                    assert!((0.0..1.0).contains(&out.beta), "beta {}", out.beta);
                    assert!(out.gamma < 1.0 / (24.0 * inp.l));
                    assert!(out.bound >= 0.0);
                }
                if t_min > 1 {
                    inp.t = t_min - 1;
                    assert!(matches!(theorem_params(&inp), Err(Error::TheoremMode(_))));
                }
            }
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let mut inp = base(10_000, 1.0);
        inp.sigma = 0.0;
        assert!(matches!(theorem_params(&inp), Err(Error::TheoremMode(_))));
        let mut inp = base(10_000, 0.0);
        assert!(matches!(theorem_params(&inp), Err(Error::TheoremMode(_))));
        inp.lambda = 1.0;
        inp.f = 8;
        assert!(matches!(theorem_params(&inp), Err(Error::ByzantineBound { .. })));
    }

    #[test]
    fn bound_monotone_on_grid() {
        let ts: Vec<usize> = (0..10).map(|i| 1000 * (1 << i)).collect();
        let lambdas: Vec<f64> = (1..=10).map(|i| 0.2 * i as f64).collect();
        let bound = |t: usize, lam: f64| theorem_params(&base(t, lam)).unwrap().bound;
        for &lam in &lambdas {
            for w in ts.windows(2) {
                assert!(bound(w[1], lam) < bound(w[0], lam));
            }
        }
        for &t in &ts {
            for w in lambdas.windows(2) {
                assert!(bound(t, w[1]) > bound(t, w[0]));
            }
        }
    }

    #[test]
    fn order_expression_tracks_leading_term() {
        let lead = |t: usize| {
            let inp = base(t, 0.7);
            let out = theorem_params(&inp).unwrap();
            let h = 10.0;
            let lead = 2.0 * ((out.a_1 * 0.49 * h + out.a_2 / h) * out.a_o / t as f64).sqrt();
            lead / out.epsilon_order
        };
        let r0 = lead(1000);
        for t in [2000, 10_000, 123_457, 10_000_000] {
            assert!(rel(lead(t), r0) < 1e-12);
        }
    }

    #[test]
    fn kappa_spot_checks() {
        for (n, f) in [(10, 3), (15, 5), (21, 7)] {
            let h = (n - f) as f64;
            let mda = 2.0 * f as f64 / h;
            assert!(rel(kappa(mda, n, f), 4.0 * (f * f) as f64 / h) < 1e-12);
            let krum = 1.0 + (h / (n - 2 * f) as f64).sqrt();
            // κ grows like (n-f)²/(n-2f) up to constants in [1, 4]
            let ratio = kappa(krum, n, f) / (h * h / (n - 2 * f) as f64);
            assert!((1.0..=4.0).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn drift_bound_examples() {
        assert_eq!(lemma_drift_bound(0.0, 1.0, 15, 5, 0.5, 3), 0.0);
        let (s, l) = (1.3, 0.7);
        let expect = 8.0 * s * s * l * l * 10.0 + 8.0 * 11.0 * l * l * s * s;
        assert!(rel(lemma_drift_bound(s, l, 15, 5, 0.0, 1), expect) < 1e-12);
        assert!(lemma_drift_bound(1.0, 1.0, 15, 5, 1.0 - 1e-6, 10_000_000) < 1e-4);
        assert_eq!(lemma_momentum_drift_bound(1.0, 15, 5, 0.0, 1), 2.0 + 2.0 * 1.1);
    }

    #[test]
    fn lemma3_examples() {
        assert_eq!(lemma3_coeffs(0.0, 5.0).zeta, 1.0);
        let c = lemma3_coeffs(1.0 / 18.0, 1.0);
        assert!(rel(c.zeta, (19.0 / 18.0) * (22.0 / 18.0)) < 1e-12);
        for g in [0.0, 0.01, 1.0, 7.0] {
            for l in [0.0, 0.5, 3.0] {
                let c = lemma3_coeffs(g, l);
                assert!(c.zeta >= 1.0 && c.gradient >= 0.0 && c.drift >= 0.0);
            }
        }
    }

    #[test]
    fn lyapunov_weight_example() {
        assert_eq!(lyapunov(1.0, 8.0, 1.0), 3.0);
    }
}
