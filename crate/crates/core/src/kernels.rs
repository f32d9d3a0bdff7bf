//! Spectral regularizers `R(lambda)` and the filters they induce,
//! `H(lambda) = 1 / (1 + R(lambda) / phi)`.

use std::f64::consts::FRAC_PI_4;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_A: f64 = 4.0;
pub const DEFAULT_GAMMA: f64 = 1.0;
pub const DEFAULT_PHI: f64 = 10.0;
/// Eigenvalues within this distance below zero, or above a cutoff, are
/// treated as roundoff.
pub const EIGEN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `gamma * lambda`
    Tikhonov { gamma: f64 },
    /// `exp(gamma * lambda / 2)`
    Diffusion { gamma: f64 },
    /// `1 / (a - lambda)`
    RandomWalk { a: f64 },
    /// `1 / cos(lambda * pi / 4)`
    InverseCosine,
    /// `1` up to `omega`, infinite beyond it.
    Cutoff { omega: f64 },
}

/// A regularization value, with the infinite penalty kept symbolic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Finite(f64),
    Infinite,
}

impl Penalty {
    pub fn as_f64(self) -> f64 {
        match self {
            Penalty::Finite(v) => v,
            Penalty::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    pub phi: f64,
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            KernelFamily::Tikhonov { gamma } => write!(f, "tikhonov(gamma={gamma}")?,
            KernelFamily::Diffusion { gamma } => write!(f, "diffusion(gamma={gamma}")?,
            KernelFamily::RandomWalk { a } => write!(f, "random-walk(a={a}")?,
            KernelFamily::InverseCosine => write!(f, "inverse-cosine(")?,
            KernelFamily::Cutoff { omega } => write!(f, "cutoff(omega={omega}")?,
        }
        match self.family {
            KernelFamily::InverseCosine => write!(f, "phi={})", self.phi),
            _ => write!(f, ", phi={})", self.phi),
        }
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, phi: f64) -> Result<Self> {
        let spec = Self { family, phi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tikhonov(gamma: f64, phi: f64) -> Result<Self> {
        Self::new(KernelFamily::Tikhonov { gamma }, phi)
    }

    pub fn diffusion(gamma: f64, phi: f64) -> Result<Self> {
        Self::new(KernelFamily::Diffusion { gamma }, phi)
    }

    pub fn random_walk(a: f64, phi: f64) -> Result<Self> {
        Self::new(KernelFamily::RandomWalk { a }, phi)
    }

    pub fn inverse_cosine(phi: f64) -> Result<Self> {
        Self::new(KernelFamily::InverseCosine, phi)
    }

    pub fn cutoff(omega: f64, phi: f64) -> Result<Self> {
        Self::new(KernelFamily::Cutoff { omega }, phi)
    }

    /// Same family with a different `phi`.
    pub fn with_phi(self, phi: f64) -> Result<Self> {
        Self::new(self.family, phi)
    }

    pub fn validate(&self) -> Result<()> {
        // phi = +inf is allowed: it is the hard-constraint limit.
        if self.phi.is_nan() || self.phi <= 0.0 {
            return Err(Error::InvalidArgument(format!("phi must be > 0, got {}", self.phi)));
        }
        match self.family {
            KernelFamily::Tikhonov { gamma } | KernelFamily::Diffusion { gamma } => {
                if !(gamma >= 0.0 && gamma.is_finite()) {
                    return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
                }
            }
            KernelFamily::RandomWalk { a } => {
                if !(a >= 2.0 && a.is_finite()) {
                    return Err(Error::InvalidArgument(format!("a must be >= 2, got {a}")));
                }
            }
            KernelFamily::InverseCosine => {}
            KernelFamily::Cutoff { omega } => {
                if omega.is_nan() {
                    return Err(Error::InvalidArgument("omega is NaN".into()));
                }
            }
        }
        Ok(())
    }

    /// `R(lambda)`.
    pub fn r_value(&self, lambda: f64) -> Result<Penalty> {
        if lambda.is_nan() || lambda < -EIGEN_TOLERANCE {
            return Err(Error::KernelDomain(format!("eigenvalue {lambda} is negative")));
        }
        let lambda = lambda.max(0.0);
        Ok(match self.family {
            KernelFamily::Tikhonov { gamma } => Penalty::Finite(gamma * lambda),
            KernelFamily::Diffusion { gamma } => Penalty::Finite((gamma * lambda / 2.0).exp()),
            KernelFamily::RandomWalk { a } => {
                if lambda >= a {
                    return Err(Error::KernelDomain(format!(
                        "random walk needs lambda < a = {a}, got {lambda}"
                    )));
                }
                Penalty::Finite(1.0 / (a - lambda))
            }
            KernelFamily::InverseCosine => {
                if lambda >= 2.0 {
                    return Err(Error::KernelDomain(format!(
                        "inverse cosine needs lambda < 2, got {lambda}"
                    )));
                }
                Penalty::Finite(1.0 / (lambda * FRAC_PI_4).cos())
            }
            KernelFamily::Cutoff { omega } => {
                if lambda <= omega + EIGEN_TOLERANCE {
                    Penalty::Finite(1.0)
                } else {
                    Penalty::Infinite
                }
            }
        })
    }

    /// `H(lambda) = 1 / (1 + R(lambda) / phi)`. The cutoff family is the
    /// indicator of `lambda <= omega`, i.e. its `phi -> infinity` limit.
    pub fn h_value(&self, lambda: f64) -> Result<f64> {
        let r = self.r_value(lambda)?;
        Ok(match (self.family, r) {
            (KernelFamily::Cutoff { .. }, Penalty::Finite(_)) => 1.0,
            (_, Penalty::Infinite) => 0.0,
            (_, Penalty::Finite(r)) => 1.0 / (1.0 + r / self.phi),
        })
    }

    /// Filter gains for an ascending eigenvalue list.
    pub fn h_diagonal(&self, eigenvalues: &[f64]) -> Result<Vec<f64>> {
        eigenvalues.iter().map(|&l| self.h_value(l)).collect()
    }

    /// Finite `R(lambda)`, failing on the symbolic infinity.
    pub fn r_finite(&self, lambda: f64) -> Result<f64> {
        match self.r_value(lambda)? {
            Penalty::Finite(v) => Ok(v),
            Penalty::Infinite => Err(Error::KernelDomain(format!(
                "R({lambda}) is infinite for {self}"
            ))),
        }
    }
}
