//! Byzantine behaviours against the simulator's omniscient-adversary view.
//!
//! `empire` and `little` craft one vector from the honest momentums of the
//! current step, and every Byzantine worker submits it. `sign_flip` and
//! `label_flip` corrupt each Byzantine worker's own gradient, which then runs
//! through that worker's momentum like an honest one.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::{common_dim, vec_mean, ParamVector};

/// Default `ζ` for the fall-of-empires attack.
pub const DEFAULT_EMPIRE_ZETA: f64 = 1.1;
/// Default `ζ` for the little-is-enough attack.
pub const DEFAULT_LITTLE_ZETA: f64 = 1.0;

/// Which way `little` moves from the honest mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LittleDirection {
    /// Send `ḡ - ζ s`.
    #[default]
    Subtract,
    /// Send `ḡ + ζ s`.
    Add,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AttackId {
    Empire {
        zeta: f64,
    },
    Little {
        zeta: f64,
        #[serde(default)]
        direction: LittleDirection,
    },
    SignFlip,
    LabelFlip,
}

impl AttackId {
    pub const ALL_NAMES: [&'static str; 4] = ["empire", "little", "sign_flip", "label_flip"];

    pub fn empire() -> Self {
        AttackId::Empire {
            zeta: DEFAULT_EMPIRE_ZETA,
        }
    }

    pub fn little() -> Self {
        AttackId::Little {
            zeta: DEFAULT_LITTLE_ZETA,
            direction: LittleDirection::Subtract,
        }
    }

    /// Parses a canonical attack name; `zeta` overrides the default `ζ` of
    /// the crafted attacks.
    pub fn parse(name: &str, zeta: Option<f64>) -> Result<Self> {
        let attack = match name {
            "empire" => AttackId::Empire {
                zeta: zeta.unwrap_or(DEFAULT_EMPIRE_ZETA),
            },
            "little" => AttackId::Little {
                zeta: zeta.unwrap_or(DEFAULT_LITTLE_ZETA),
                direction: LittleDirection::Subtract,
            },
            "sign_flip" => AttackId::SignFlip,
            "label_flip" => AttackId::LabelFlip,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown attack `{other}` (expected one of {})",
                    Self::ALL_NAMES.join(", ")
                )))
            }
        };
        attack.validate()?;
        Ok(attack)
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackId::Empire { .. } => "empire",
            AttackId::Little { .. } => "little",
            AttackId::SignFlip => "sign_flip",
            AttackId::LabelFlip => "label_flip",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let AttackId::Empire { zeta } | AttackId::Little { zeta, .. } = *self {
            if !(zeta >= 0.0) || !zeta.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "attack zeta must be finite and >= 0, got {zeta}"
                )));
            }
        }
        Ok(())
    }

    /// Whether the attack submits a crafted vector (bypassing momentum).
    pub fn is_crafted(&self) -> bool {
        matches!(self, AttackId::Empire { .. } | AttackId::Little { .. })
    }
}

impl fmt::Display for AttackId {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackId::Empire { zeta } | AttackId::Little { zeta, .. } => {
                write!(out, "{}(zeta={zeta})", self.name())
            }
            _ => out.write_str(self.name()),
        }
    }
}

/// What the adversary observes at one step.
#[derive(Debug, Clone)]
pub struct AttackContext<'a, S> {
    pub honest_momentums: &'a [ParamVector<S>],
    pub step: usize,
    pub model: &'a ParamVector<S>,
}

/// Coordinate-wise population standard deviation (divides by the count).
pub fn coordinate_std<S: Scalar>(xs: &[ParamVector<S>]) -> Result<ParamVector<S>> {
    let mean = vec_mean(xs)?;
    let count = S::from_count(xs.len());
    let coords = (0..mean.dim())
        .map(|k| {
            let m = mean.as_slice()[k];
            let var: S = xs
                .iter()
                .map(|x| {
                    let dev = x.as_slice()[k] - m;
                    dev * dev
                })
                .sum::<S>()
                / count;
            var.sqrt()
        })
        .collect();
    ParamVector::new(coords)
}

/// The single vector every Byzantine worker submits under a crafted attack.
pub fn attack_vector<S: Scalar>(attack: &AttackId, ctx: &AttackContext<'_, S>) -> Result<ParamVector<S>> {
    attack.validate()?;
    common_dim(ctx.honest_momentums)?;
    let mean = vec_mean(ctx.honest_momentums)?;
    match *attack {
        AttackId::Empire { zeta } => Ok(mean.scale(S::one() - S::lit(zeta))),
        AttackId::Little { zeta, direction } => {
            let std = coordinate_std(ctx.honest_momentums)?;
            let signed = match direction {
                LittleDirection::Subtract => -S::lit(zeta),
                LittleDirection::Add => S::lit(zeta),
            };
            let mut out = mean;
            out.axpy(signed, &std)?;
            Ok(out)
        }
        AttackId::SignFlip | AttackId::LabelFlip => Err(Error::NotCraftedAttack(attack.name())),
    }
}

/// The sign-flip corruption of a worker's own gradient.
pub fn honest_gradient_negation<S: Scalar>(g: &ParamVector<S>) -> ParamVector<S> {
    g.neg()
}
