//! Initial states satisfying both volume constraints.
//!
//! Raw fields are built around `base_levels` and then projected with
//! [`project_constraint`]. Random draws come from [`UniformSource`]: for
//! `RandomUniform` all nodes of `φ1` are drawn first (row-major), then all
//! nodes of `φ2`; for `Spots` the centers are drawn axis by axis, spot by spot.

use std::f64::consts::PI;
use std::str::FromStr;

use thiserror::Error;

use crate::chem::{f_inverse_unit, ModelParams};
use crate::constraint::{project_constraint, ConstraintError, MultiplierGuard};
use crate::energy::PhaseState;
use crate::grid::{PeriodicGrid, ScalarField};
use crate::random::UniformSource;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("omega{index} = {omega} is outside (0, 1) and cannot be reached from constant levels")]
    UnreachableTarget { index: usize, omega: f64 },
    #[error("invalid initial-condition spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    RandomUniform,
    Lamellar,
    Spots,
    ConstantSymmetric,
}

impl InitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RandomUniform => "random_uniform",
            Self::Lamellar => "lamellar",
            Self::Spots => "spots",
            Self::ConstantSymmetric => "constant_symmetric",
        }
    }
}

impl FromStr for InitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random_uniform" => Ok(Self::RandomUniform),
            "lamellar" => Ok(Self::Lamellar),
            "spots" => Ok(Self::Spots),
            "constant_symmetric" => Ok(Self::ConstantSymmetric),
            other => Err(format!(
                "unknown init kind '{other}' (expected random_uniform, lamellar, spots or constant_symmetric)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub kind: InitKind,
    pub seed: u64,
    pub amplitude: f64,
    pub base_levels: [f64; 2],
    /// Number of lamellar periods along axis 0.
    pub stripes: usize,
    pub spot_count: usize,
    /// Gaussian radius of each spot, in box units.
    pub spot_radius: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            kind: InitKind::RandomUniform,
            seed: 1,
            amplitude: 0.05,
            base_levels: [1.0 / 3.0, 1.0 / 3.0],
            stripes: 2,
            spot_count: 6,
            spot_radius: 0.08,
        }
    }
}

impl InitSpec {
    pub fn validate(&self) -> Result<(), InitError> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(InitError::InvalidSpec(format!(
                "amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        for (i, &b) in self.base_levels.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) {
                return Err(InitError::InvalidSpec(format!(
                    "base level {} must lie in (0, 1), got {b}",
                    i + 1
                )));
            }
        }
        if self.kind == InitKind::Lamellar && self.stripes == 0 {
            return Err(InitError::InvalidSpec("stripes must be at least 1".into()));
        }
        if self.kind == InitKind::Spots && !(self.spot_radius > 0.0) {
            return Err(InitError::InvalidSpec("spot_radius must be positive".into()));
        }
        Ok(())
    }
}

/// Builds an initial state with `|mean f(φ_i) - ω_i| <= 1e-12` for both phases.
pub fn generate(
    spec: &InitSpec,
    grid: &PeriodicGrid,
    params: &ModelParams,
) -> Result<PhaseState, InitError> {
    spec.validate()?;
    let omega = params.omega();
    for (i, &w) in omega.iter().enumerate() {
        if !(w > 0.0 && w < 1.0) {
            return Err(InitError::UnreachableTarget {
                index: i + 1,
                omega: w,
            });
        }
    }

    let raw = match spec.kind {
        InitKind::ConstantSymmetric => omega.map(|w| {
            let level = f_inverse_unit(w).expect("omega checked to lie in (0, 1)");
            ScalarField::constant(grid, level)
        }),
        InitKind::RandomUniform => {
            let mut rng = UniformSource::new(spec.seed);
            spec.base_levels.map(|base| {
                let values = (0..grid.len())
                    .map(|_| base + spec.amplitude * rng.symmetric())
                    .collect();
                ScalarField::new(grid, values).expect("grid-sized field")
            })
        }
        InitKind::Lamellar => {
            let length = 2.0 * grid.half_lengths()[0];
            let k = 2.0 * PI * spec.stripes as f64 / length;
            let [b1, b2] = spec.base_levels;
            let a = spec.amplitude;
            [
                ScalarField::from_fn(grid, |x| b1 + a * (k * x[0]).cos()),
                ScalarField::from_fn(grid, |x| b2 + a * (k * x[0] + 2.0 * PI / 3.0).cos()),
            ]
        }
        InitKind::Spots => spots(spec, grid),
    };

    let guard = MultiplierGuard::default();
    let [r1, r2] = raw;
    let p1 = project_constraint(&r1, omega[0], &guard)?.field;
    let p2 = project_constraint(&r2, omega[1], &guard)?.field;
    Ok(PhaseState::new(p1, p2, *params).expect("fields share the grid and are finite"))
}

/// Gaussian bumps at random centers; even-numbered spots go to `φ1`, odd to `φ2`.
fn spots(spec: &InitSpec, grid: &PeriodicGrid) -> [ScalarField; 2] {
    let mut rng = UniformSource::new(spec.seed);
    let half = grid.half_lengths().to_vec();
    let centers: Vec<Vec<f64>> = (0..spec.spot_count)
        .map(|_| half.iter().map(|&x| x * rng.symmetric()).collect())
        .collect();
    let r2 = spec.spot_radius * spec.spot_radius;
    let field_for = |parity: usize, base: f64| {
        ScalarField::from_fn(grid, |x| {
            let bumps: f64 = centers
                .iter()
                .enumerate()
                .filter(|(n, _)| n % 2 == parity)
                .map(|(_, c)| {
                    let d2: f64 = x
                        .iter()
                        .zip(c)
                        .zip(&half)
                        .map(|((&xi, &ci), &h)| {
                            let period = 2.0 * h;
                            let mut d = (xi - ci).rem_euclid(period);
                            if d > h {
                                d -= period;
                            }
                            d * d
                        })
                        .sum();
                    (-d2 / (2.0 * r2)).exp()
                })
                .sum();
            base + spec.amplitude * bumps
        })
    };
    [
        field_for(0, spec.base_levels[0]),
        field_for(1, spec.base_levels[1]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(omega: [f64; 2]) -> ModelParams {
        ModelParams::new(0.1, [[1.0, 0.2], [0.2, 1.0]], omega, 10.0).unwrap()
    }

    #[test]
    fn constant_symmetric_hits_one_third() {
        let grid = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let spec = InitSpec {
            kind: InitKind::ConstantSymmetric,
            ..InitSpec::default()
        };
        let s = generate(&spec, &grid, &params([7.0 / 27.0; 2])).unwrap();
        for i in 0..2 {
            assert!(s.phi(i).values().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn random_is_deterministic_and_feasible() {
        let grid = PeriodicGrid::uniform(2, 16, 0.5).unwrap();
        let spec = InitSpec {
            seed: 99,
            ..InitSpec::default()
        };
        let p = params([7.0 / 27.0, 0.3]);
        let a = generate(&spec, &grid, &p).unwrap();
        let b = generate(&spec, &grid, &p).unwrap();
        for i in 0..2 {
            let bits_a: Vec<u64> = a.phi(i).values().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.phi(i).values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        assert!(a.volume_residuals().iter().all(|r| r.abs() <= 1e-12));
        let other = generate(&InitSpec { seed: 100, ..spec }, &grid, &p).unwrap();
        assert_ne!(other, a);
    }

    #[test]
    fn every_kind_is_feasible() {
        let grid = PeriodicGrid::uniform(2, 32, 0.5).unwrap();
        let p = params([0.3, 0.25]);
        for kind in [InitKind::Lamellar, InitKind::Spots, InitKind::RandomUniform] {
            let spec = InitSpec {
                kind,
                amplitude: 0.2,
                ..InitSpec::default()
            };
            let s = generate(&spec, &grid, &p).unwrap();
            assert!(s.volume_residuals().iter().all(|r| r.abs() <= 1e-12), "{kind:?}");
        }
    }

    #[test]
    fn unreachable_targets_are_rejected() {
        let grid = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let p = params([1.2, 0.3]);
        let err = generate(&InitSpec::default(), &grid, &p).unwrap_err();
        assert!(matches!(err, InitError::UnreachableTarget { index: 1, .. }));
        let bad = InitSpec {
            base_levels: [0.0, 0.3],
            ..InitSpec::default()
        };
        assert!(matches!(
            generate(&bad, &grid, &params([0.3, 0.3])),
            Err(InitError::InvalidSpec(_))
        ));
    }
}
