//! Runtime checks of the model's structural properties: the H¹ energy bound,
//! the Green's-function identity behind the nonlocal term, energy
//! dissipation along trajectories and gradient consistency of the energy.

use thiserror::Error;

use crate::chem::fprime_mass;
use crate::constraint::max_volume_residual;
use crate::dynamics::Trajectory;
use crate::energy::{self, PhaseState};
use crate::grid::{dirichlet_form, h1_norm_sq, inv_neg_laplacian, ScalarField};
use crate::random::UniformSource;

/// Slack allowed on the H¹ bound.
pub const H1_BOUND_TOL: f64 = 1e-9;
/// Constraint accuracy required before the H¹ bound applies.
pub const H1_CONSTRAINT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("state violates the volume constraints by {0:e}")]
    ConstraintViolated(f64),
}

impl DiagnosticsError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ConfigMismatch(_) => "ConfigMismatch",
            Self::ConstraintViolated(_) => "ConstraintViolated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `max_i ‖φ_i‖²_{H¹} <= 4E + 2`, valid for `ε = 1` on a unit-volume box
/// with both constraints satisfied.
pub fn check_h1_bound(state: &PhaseState) -> Result<BoundCheck, DiagnosticsError> {
    let eps = state.params().epsilon();
    let volume = state.grid().total_volume();
    if (eps - 1.0).abs() > 1e-12 || (volume - 1.0).abs() > 1e-12 {
        return Err(DiagnosticsError::ConfigMismatch(format!(
            "H1 bound needs epsilon = 1 and unit volume (got epsilon = {eps}, volume = {volume})"
        )));
    }
    let residual = max_volume_residual(state);
    if !(residual <= H1_CONSTRAINT_TOL) {
        return Err(DiagnosticsError::ConstraintViolated(residual));
    }
    let lhs = h1_norm_sq(state.phi(0)).max(h1_norm_sq(state.phi(1)));
    let rhs = 4.0 * energy::energy(state).total + 2.0;
    Ok(BoundCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + H1_BOUND_TOL,
    })
}

/// Returns `(‖∇Ψ‖², ⟨w, Ψ⟩)` for `Ψ = (-Δ)^{-1}(w - mean w)`.
pub fn check_hls_identity(w: &ScalarField) -> (f64, f64) {
    let psi = inv_neg_laplacian(w);
    (dirichlet_form(&psi, &psi), w.dot(&psi))
}

/// Largest energy increase over any single step; zero for a dissipative run.
pub fn dissipation_audit(traj: &Trajectory) -> f64 {
    traj.reports
        .iter()
        .map(|r| r.energy_after - r.energy_before)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    /// `None` outside the normalized configuration.
    pub h1_bound_satisfied: Option<bool>,
    /// Smallest `∫|f'(φ_i)|²` over the stored states.
    pub min_fprime_mass: f64,
    pub energy_monotone: bool,
    pub max_volume_residual: f64,
    /// `(min, max)` of each phase over the stored states.
    pub field_range: [(f64, f64); 2],
}

impl DiagnosticsReport {
    /// Summarizes the snapshots (and final state) of a trajectory.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let states: Vec<&PhaseState> = traj
            .snapshots
            .iter()
            .map(|(_, s)| s)
            .chain(std::iter::once(&traj.final_state))
            .collect();

        let mut min_mass = f64::INFINITY;
        let mut max_res: f64 = 0.0;
        let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 2];
        let mut h1 = Some(true);
        for state in &states {
            for (i, range) in ranges.iter_mut().enumerate() {
                min_mass = min_mass.min(fprime_mass(state.phi(i)));
                let (lo, hi) = state.phi(i).min_max();
                *range = (range.0.min(lo), range.1.max(hi));
            }
            max_res = max_res.max(max_volume_residual(state));
            h1 = match (h1, check_h1_bound(state)) {
                (Some(acc), Ok(check)) => Some(acc && check.ok),
                _ => None,
            };
        }
        for r in &traj.reports {
            max_res = max_res.max(r.volume_residuals[0].abs().max(r.volume_residuals[1].abs()));
        }

        Self {
            h1_bound_satisfied: h1,
            min_fprime_mass: min_mass.max(0.0),
            energy_monotone: dissipation_audit(traj) <= 0.0,
            max_volume_residual: max_res,
            field_range: ranges,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Largest `|⟨δE/δφ, v⟩ - central difference| / (1 + |⟨δE/δφ, v⟩|)`.
    pub max_error: f64,
    pub directions: usize,
}

/// Compares `⟨δE/δφ_i, v_i⟩` against central differences of the energy
/// along random directions `v` (both phases perturbed at once).
///
/// `derivative` supplies the variational derivative under test; pass
/// [`energy_derivatives`] for the real one.
pub fn gradient_check(
    state: &PhaseState,
    directions: usize,
    h: f64,
    seed: u64,
    derivative: impl Fn(&PhaseState) -> [ScalarField; 2],
) -> GradientCheck {
    let grid = state.grid();
    let mut rng = UniformSource::new(seed);
    let grads = derivative(state);
    let mut max_error: f64 = 0.0;
    for _ in 0..directions {
        let v: [ScalarField; 2] = std::array::from_fn(|_| {
            let values = (0..grid.len()).map(|_| rng.symmetric()).collect();
            ScalarField::new(grid, values).expect("grid-sized direction")
        });
        let analytic = grads[0].dot(&v[0]) + grads[1].dot(&v[1]);
        let shifted = |sign: f64| {
            let s = state.with_fields(
                state.phi(0).axpy(sign * h, &v[0]),
                state.phi(1).axpy(sign * h, &v[1]),
            );
            energy::energy(&s).total
        };
        let numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        max_error = max_error.max((analytic - numeric).abs() / (1.0 + analytic.abs()));
    }
    GradientCheck {
        max_error,
        directions,
    }
}

/// Both variational derivatives of the energy.
pub fn energy_derivatives(state: &PhaseState) -> [ScalarField; 2] {
    energy::evaluate(state).derivative
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::ModelParams;
    use crate::grid::PeriodicGrid;
    use std::f64::consts::PI;

    #[test]
    fn h1_bound_on_symmetric_state() {
        let grid = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let p = ModelParams::new(1.0, [[1.0, 0.2], [0.2, 1.0]], [7.0 / 27.0; 2], 1.0).unwrap();
        let third = ScalarField::constant(&grid, 1.0 / 3.0);
        let state = PhaseState::new(third.clone(), third, p).unwrap();
        let check = check_h1_bound(&state).unwrap();
        assert!((check.lhs - 1.0 / 9.0).abs() < 1e-14);
        assert!((check.rhs - 22.0 / 3.0).abs() < 1e-12);
        assert!(check.ok);
    }

    #[test]
    fn h1_bound_on_pure_phase() {
        let grid = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let p = ModelParams::without_volume_check(1.0, [[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0], 1.0)
            .unwrap();
        let state = PhaseState::new(
            ScalarField::constant(&grid, 1.0),
            ScalarField::constant(&grid, 0.0),
            p,
        )
        .unwrap();
        let check = check_h1_bound(&state).unwrap();
        assert_eq!((check.lhs, check.rhs, check.ok), (1.0, 2.0, true));
    }

    #[test]
    fn h1_bound_requires_normalized_config() {
        let grid = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let p = ModelParams::new(2.0, [[1.0, 0.0], [0.0, 1.0]], [7.0 / 27.0; 2], 1.0).unwrap();
        let third = ScalarField::constant(&grid, 1.0 / 3.0);
        let state = PhaseState::new(third.clone(), third, p).unwrap();
        assert_eq!(check_h1_bound(&state).unwrap_err().name(), "ConfigMismatch");
    }

    #[test]
    fn hls_identity_on_cosine_and_constant() {
        let x1 = 0.8;
        let grid = PeriodicGrid::new(&[32, 8], &[x1, 0.6]).unwrap();
        let w = ScalarField::from_fn(&grid, |x| (PI * x[0] / x1).cos());
        let (lhs, rhs) = check_hls_identity(&w);
        let expected = 0.5 * (x1 / PI).powi(2) * grid.total_volume();
        assert!((lhs - expected).abs() < 1e-10 * expected);
        assert!((rhs - expected).abs() < 1e-10 * expected);
        let (a, b) = check_hls_identity(&ScalarField::constant(&grid, 3.0));
        assert!(a.abs() < 1e-20 && b.abs() < 1e-12);
    }
}
