//! Pointwise chemistry: the double well, the ternary triple well, the cubic
//! indicator `f` and the model parameters that tie them together.

use thiserror::Error;

use crate::grid::{mean, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("gamma must be symmetric (gamma12 = {g12}, gamma21 = {g21})")]
    GammaAsymmetric { g12: f64, g21: f64 },
    #[error("gamma must be positive definite (gamma11 = {g11}, det = {det})")]
    GammaNotPositiveDefinite { g11: f64, det: f64 },
    #[error("omega{index} must differ from 0 and 1, got {value}")]
    OmegaExcluded { index: usize, value: f64 },
    #[error("penalty constant must be positive and finite, got {0}")]
    Penalty(f64),
}

/// Interface width, long-range coupling matrix, target volumes and penalty
/// constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    epsilon: f64,
    gamma: [[f64; 2]; 2],
    omega: [f64; 2],
    penalty_m: f64,
}

impl ModelParams {
    pub fn new(
        epsilon: f64,
        gamma: [[f64; 2]; 2],
        omega: [f64; 2],
        penalty_m: f64,
    ) -> Result<Self, ModelError> {
        for (i, &w) in omega.iter().enumerate() {
            if w == 0.0 || w == 1.0 || !w.is_finite() {
                return Err(ModelError::OmegaExcluded {
                    index: i + 1,
                    value: w,
                });
            }
        }
        Self::without_volume_check(epsilon, gamma, omega, penalty_m)
    }

    /// Same validation as [`ModelParams::new`] except that `ω_i ∈ {0, 1}` is
    /// allowed. Only meant for probing pure-phase states.
    pub fn without_volume_check(
        epsilon: f64,
        gamma: [[f64; 2]; 2],
        omega: [f64; 2],
        penalty_m: f64,
    ) -> Result<Self, ModelError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ModelError::Epsilon(epsilon));
        }
        if gamma[0][1] != gamma[1][0] {
            return Err(ModelError::GammaAsymmetric {
                g12: gamma[0][1],
                g21: gamma[1][0],
            });
        }
        let det = gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0];
        if !(gamma[0][0] > 0.0 && det > 0.0) {
            return Err(ModelError::GammaNotPositiveDefinite {
                g11: gamma[0][0],
                det,
            });
        }
        if !(penalty_m > 0.0 && penalty_m.is_finite()) {
            return Err(ModelError::Penalty(penalty_m));
        }
        Ok(Self {
            epsilon,
            gamma,
            omega,
            penalty_m,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma(&self) -> [[f64; 2]; 2] {
        self.gamma
    }

    pub fn omega(&self) -> [f64; 2] {
        self.omega
    }

    pub fn penalty_m(&self) -> f64 {
        self.penalty_m
    }

    pub fn with_penalty(mut self, penalty_m: f64) -> Result<Self, ModelError> {
        if !(penalty_m > 0.0 && penalty_m.is_finite()) {
            return Err(ModelError::Penalty(penalty_m));
        }
        self.penalty_m = penalty_m;
        Ok(self)
    }
}

/// Double well `W(s) = 18 (s² - s)²`.
pub fn w(s: f64) -> f64 {
    let q = s * s - s;
    18.0 * q * q
}

/// `W'(s) = 36 (s² - s)(2s - 1)`.
pub fn w_prime(s: f64) -> f64 {
    36.0 * (s * s - s) * (2.0 * s - 1.0)
}

/// `W''(s) = 36 (6s² - 6s + 1)`.
pub fn w_double_prime(s: f64) -> f64 {
    36.0 * (6.0 * s * s - 6.0 * s + 1.0)
}

/// Triple well `W(p1) + W(p2) + W(1 - p1 - p2)`.
pub fn wt(p1: f64, p2: f64) -> f64 {
    w(p1) + w(p2) + w(1.0 - p1 - p2)
}

/// `∂W_T/∂p_i = W'(p_i) - W'(1 - p1 - p2)` for `i ∈ {0, 1}`.
pub fn wt_partial(i: usize, p1: f64, p2: f64) -> f64 {
    let own = match i {
        0 => p1,
        1 => p2,
        _ => panic!("phase index must be 0 or 1, got {i}"),
    };
    w_prime(own) - w_prime(1.0 - p1 - p2)
}

/// Indicator `f(s) = 3s² - 2s³`.
pub fn f(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

pub fn f_prime(s: f64) -> f64 {
    6.0 * s * (1.0 - s)
}

pub fn f_double_prime(s: f64) -> f64 {
    6.0 - 12.0 * s
}

/// Inverse of `f` on `[0, 1]` by bisection; `target` must lie in `[0, 1]`.
pub fn f_inverse_unit(target: f64) -> Option<f64> {
    if !(0.0..=1.0).contains(&target) {
        return None;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever endpoint is closer
    Some(if (f(lo) - target).abs() <= (f(hi) - target).abs() {
        lo
    } else {
        hi
    })
}

/// Signed constraint residual `mean f(φ) - ω`.
pub fn volume_residual(phi: &ScalarField, omega: f64) -> f64 {
    mean(&phi.map(f)) - omega
}

/// `∫ |f'(φ)|² dx`.
pub fn fprime_mass(phi: &ScalarField) -> f64 {
    phi.map(f_prime).norm_sq()
}
