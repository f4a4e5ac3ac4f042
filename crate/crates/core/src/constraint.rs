//! Volume-constraint enforcement: exact multipliers, penalty forcing and a
//! scalar projection along `f'(φ)` that restores `mean f(φ) = ω` exactly.

use thiserror::Error;

use crate::chem::{self, f, f_prime};
use crate::energy::{self, PhaseState};
use crate::grid::{mean, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("degenerate constraint: ∫|f'(φ)|² = {mass:e} is below the guard floor {floor:e}")]
    DegenerateConstraint { mass: f64, floor: f64 },
    #[error("projection failed: {0}")]
    ProjectionFailed(String),
}

/// Floor on `∫|f'(φ_i)|²` below which the multiplier is treated as undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierGuard {
    beta_min: f64,
}

impl Default for MultiplierGuard {
    fn default() -> Self {
        Self { beta_min: 1e-8 }
    }
}

impl MultiplierGuard {
    /// # Panics
    /// If `beta_min` is not positive.
    pub fn new(beta_min: f64) -> Self {
        assert!(beta_min > 0.0, "beta_min must be positive");
        Self { beta_min }
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    /// Returns the mass `∫|f'(φ)|²` if it clears the floor.
    pub fn check(&self, fprime: &ScalarField) -> Result<f64, ConstraintError> {
        let mass = fprime.norm_sq();
        if mass < self.beta_min || !mass.is_finite() {
            return Err(ConstraintError::DegenerateConstraint {
                mass,
                floor: self.beta_min,
            });
        }
        Ok(mass)
    }
}

/// `λ = ⟨-force, f'⟩ / ‖f'‖²`, the scalar that makes `-force - λ f'`
/// orthogonal to `f'`.
pub fn multiplier_for(
    force: &ScalarField,
    fprime: &ScalarField,
    guard: &MultiplierGuard,
) -> Result<f64, ConstraintError> {
    let mass = guard.check(fprime)?;
    Ok(-force.dot(fprime) / mass)
}

/// Lagrange multiplier `λ_i = ∫(-δE/δφ_i) f'(φ_i) / ∫|f'(φ_i)|²`.
pub fn lagrange_multiplier(
    state: &PhaseState,
    i: usize,
    guard: &MultiplierGuard,
) -> Result<f64, ConstraintError> {
    let derivative = energy::variational_derivative(state, i);
    multiplier_for(&derivative, &state.phi(i).map(f_prime), guard)
}

/// Penalty force `M (∫ (f(φ_i) - ω_i) dx) f'(φ_i)`.
pub fn penalty_force(state: &PhaseState, i: usize) -> ScalarField {
    let coefficient = penalty_coefficient(state, i);
    state.phi(i).map(|v| coefficient * f_prime(v))
}

/// The scalar `M ∫ (f(φ_i) - ω_i) dx` multiplying `f'(φ_i)` in the penalty force.
pub fn penalty_coefficient(state: &PhaseState, i: usize) -> f64 {
    let params = state.params();
    let omega = params.omega()[i];
    let violation = state.phi(i).map(|v| f(v) - omega).integral();
    params.penalty_m() * violation
}

/// Result of [`project_constraint`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub field: ScalarField,
    /// Coefficient `c` of the correction `c f'(φ)`.
    pub shift: f64,
    pub iterations: usize,
}

const PROJECTION_TOL: f64 = 1e-14;
const PROJECTION_MAX_ITERS: usize = 100;
const BRACKET: f64 = 0.5;

/// Returns `φ + c f'(φ)` with `c` chosen so that `mean f(φ + c f'(φ)) = ω`.
///
/// Newton from `c = 0`, safeguarded by a bracket on `[-0.5, 0.5]` with
/// bisection fallback. A field already within `1e-14` of the target is
/// returned unchanged.
pub fn project_constraint(
    phi: &ScalarField,
    omega: f64,
    guard: &MultiplierGuard,
) -> Result<Projection, ConstraintError> {
    let dir = phi.map(f_prime);
    guard.check(&dir)?;

    let total = phi.grid().total_volume();
    let cell = phi.grid().cell_volume();
    let residual_and_slope = |c: f64| {
        let (mut r, mut s) = (0.0, 0.0);
        for (&p, &d) in phi.values().iter().zip(dir.values()) {
            let q = p + c * d;
            r += f(q);
            s += f_prime(q) * d;
        }
        (r * cell / total - omega, s * cell / total)
    };

    let (r0, s0) = residual_and_slope(0.0);
    if !r0.is_finite() {
        return Err(ConstraintError::ProjectionFailed(
            "non-finite constraint residual".into(),
        ));
    }
    if r0.abs() <= PROJECTION_TOL {
        return Ok(Projection {
            field: phi.clone(),
            shift: 0.0,
            iterations: 0,
        });
    }

    // Plain Newton first; it converges in a handful of steps near the manifold.
    let mut c = 0.0;
    let (mut r, mut s) = (r0, s0);
    for it in 1..=8 {
        if s <= 0.0 || !s.is_finite() {
            break;
        }
        let next = c - r / s;
        if next.abs() > BRACKET {
            break;
        }
        c = next;
        (r, s) = residual_and_slope(c);
        if r.abs() <= PROJECTION_TOL {
            return Ok(finish(phi, &dir, c, it));
        }
    }

    // Bracketed Newton/bisection; `neg`/`pos` hold points with g < 0 and g > 0.
    let (mut neg, mut pos) = bracket(&residual_and_slope, r0)?;
    c = 0.5 * (neg + pos);
    (r, s) = residual_and_slope(c);
    for it in 1..=PROJECTION_MAX_ITERS {
        if r.abs() <= PROJECTION_TOL {
            return Ok(finish(phi, &dir, c, it));
        }
        if r < 0.0 {
            neg = c;
        } else {
            pos = c;
        }
        let (lo, hi) = (neg.min(pos), neg.max(pos));
        let newton = if s != 0.0 { c - r / s } else { f64::NAN };
        c = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
            (r, _) = residual_and_slope(c);
            if r.abs() <= 1e-12 {
                return Ok(finish(phi, &dir, c, it));
            }
            break;
        }
        (r, s) = residual_and_slope(c);
    }
    Err(ConstraintError::ProjectionFailed(format!(
        "no convergence after {PROJECTION_MAX_ITERS} iterations (residual {r:e})"
    )))
}

/// Scans outward from zero for a sign change of `g` inside `[-0.5, 0.5]`.
/// Returns `(neg, pos)` with `g(neg) < 0 < g(pos)`.
fn bracket(g: &impl Fn(f64) -> (f64, f64), r0: f64) -> Result<(f64, f64), ConstraintError> {
    let mut width: f64 = 1e-3;
    loop {
        let w = width.min(BRACKET);
        for c in [w, -w] {
            let r = g(c).0;
            if r.signum() != r0.signum() {
                return Ok(if r0 < 0.0 { (0.0, c) } else { (c, 0.0) });
            }
        }
        if w >= BRACKET {
            return Err(ConstraintError::ProjectionFailed(format!(
                "no sign change of the constraint residual for c in [-{BRACKET}, {BRACKET}]"
            )));
        }
        width *= 4.0;
    }
}

fn finish(phi: &ScalarField, dir: &ScalarField, shift: f64, iterations: usize) -> Projection {
    Projection {
        field: phi.axpy(shift, dir),
        shift,
        iterations,
    }
}

/// Projects both phases of a state onto their constraint sets.
pub fn project_state(state: &PhaseState, guard: &MultiplierGuard) -> Result<PhaseState, ConstraintError> {
    let omega = state.params().omega();
    let p1 = project_constraint(state.phi(0), omega[0], guard)?.field;
    let p2 = project_constraint(state.phi(1), omega[1], guard)?.field;
    Ok(state.with_fields(p1, p2))
}

/// `max_i |mean f(φ_i) - ω_i|`
pub fn max_volume_residual(state: &PhaseState) -> f64 {
    let [a, b] = state.volume_residuals();
    a.abs().max(b.abs())
}

/// `mean f(φ)`; convenience for callers tracking the constrained quantity.
pub fn volume_fraction(phi: &ScalarField) -> f64 {
    mean(&phi.map(chem::f))
}
