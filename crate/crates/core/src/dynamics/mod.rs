//! Time stepping for the constrained L² gradient flow.
//!
//! Three schemes share one skeleton: the coupled gradient block
//! `-ε(Δφ_i + Δφ_j/2)` is treated implicitly, mode by mode, through
//! `(I + τε|k|² A)^{-1}` with `A = [[1, 1/2], [1/2, 1]]`.
//!
//! * [`Scheme::Multiplier`] keeps everything else explicit, including the
//!   Lagrange multipliers frozen at the start of the step.
//! * [`Scheme::Penalty`] replaces the multiplier term by the penalty force.
//! * [`Scheme::MinimizingMovement`] minimizes `E + ‖φ - φᵏ‖²/(2τ)` over the
//!   constraint set with preconditioned projected gradient descent.

mod minimizing;
mod semi_implicit;

use num_complex::Complex64;
use thiserror::Error;

use crate::constraint::{ConstraintError, MultiplierGuard};
use crate::energy::{EnergyBreakdown, PhaseState};
use crate::grid::ScalarField;

pub use minimizing::{step_minimizing_movement, stationarity_residual};
pub use semi_implicit::{step_multiplier, step_penalty};

/// Field magnitude above which a step is reported as [`DynamicsError::BlowUp`].
pub const BLOW_UP_LIMIT: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("blow-up: field magnitude {magnitude:e} exceeds {BLOW_UP_LIMIT:e} (time step too large?)")]
    BlowUp { magnitude: f64 },
    #[error("inner solve failed after {iterations} iterations: {reason} (residual {residual:e})")]
    InnerSolveFailed {
        iterations: usize,
        residual: f64,
        reason: String,
    },
    #[error("discrete energy inequality violated by {excess:e}")]
    InequalityViolated { excess: f64 },
    #[error("input state violates the volume constraint by {residual:e}")]
    ConstraintViolated { residual: f64 },
    #[error("invalid step configuration: {0}")]
    InvalidConfig(String),
}

impl DynamicsError {
    /// Short stable name, used in CLI exit messages.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Constraint(ConstraintError::DegenerateConstraint { .. }) => "DegenerateConstraint",
            Self::Constraint(ConstraintError::ProjectionFailed(_)) => "ProjectionFailed",
            Self::BlowUp { .. } => "BlowUp",
            Self::InnerSolveFailed { .. } => "InnerSolveFailed",
            Self::InequalityViolated { .. } => "InequalityViolated",
            Self::ConstraintViolated { .. } => "ConstraintViolated",
            Self::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("step {step}: {source}")]
pub struct RunError {
    pub step: usize,
    #[source]
    pub source: DynamicsError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Multiplier,
    Penalty,
    MinimizingMovement,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Self::Multiplier, Self::Penalty, Self::MinimizingMovement];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Multiplier => "multiplier",
            Self::Penalty => "penalty",
            Self::MinimizingMovement => "minimizing_movement",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multiplier" => Ok(Self::Multiplier),
            "penalty" => Ok(Self::Penalty),
            "minimizing_movement" | "mm" => Ok(Self::MinimizingMovement),
            other => Err(format!(
                "unknown scheme '{other}' (expected multiplier, penalty or minimizing_movement)"
            )),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Starting point of the minimizing-movement inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStart {
    /// The previous state itself.
    Previous,
    /// One projected semi-implicit multiplier step from the previous state.
    Predictor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub tau: f64,
    pub scheme: Scheme,
    /// Restore the volume constraints after each step (multiplier and penalty only).
    pub project_each_step: bool,
    pub inner_tol_grad: f64,
    pub inner_tol_constraint: f64,
    pub inner_max_iters: usize,
    pub inner_start: InnerStart,
    pub guard: MultiplierGuard,
}

impl StepConfig {
    pub fn new(scheme: Scheme, tau: f64) -> Self {
        Self {
            tau,
            scheme,
            project_each_step: true,
            inner_tol_grad: 1e-9,
            inner_tol_constraint: 1e-11,
            inner_max_iters: 10_000,
            inner_start: InnerStart::Previous,
            guard: MultiplierGuard::default(),
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: &str| Err(DynamicsError::InvalidConfig(msg.to_string()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive and finite");
        }
        if !(self.inner_tol_grad > 0.0 && self.inner_tol_constraint > 0.0) {
            return bad("inner tolerances must be positive");
        }
        if self.inner_max_iters < 1 {
            return bad("inner_max_iters must be at least 1");
        }
        Ok(())
    }
}

/// Per-step record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub energy_before: f64,
    pub energy_after: f64,
    pub breakdown_after: EnergyBreakdown,
    /// Multipliers (or penalty coefficients `M ∫(f(φ_i) - ω_i)`).
    pub lambda: [f64; 2],
    /// `mean f(φ_i) - ω_i` after the step.
    pub volume_residuals: [f64; 2],
    /// `‖φ_i^{k+1} - φ_i^k‖₂`
    pub increment_l2: [f64; 2],
    pub inner_iters: usize,
    /// `E^{k+1} + Σ‖Δφ_i‖²/(2τ) - E^k`; minimizing movement only.
    pub mm_inequality_slack: Option<f64>,
    /// Constrained gradient residual of the inner solve; minimizing movement only.
    pub stationarity: Option<f64>,
}

/// Advances `state` by one step of the configured scheme.
pub fn step(state: &PhaseState, cfg: &StepConfig) -> Result<(PhaseState, StepReport), DynamicsError> {
    match cfg.scheme {
        Scheme::Multiplier => step_multiplier(state, cfg),
        Scheme::Penalty => step_penalty(state, cfg),
        Scheme::MinimizingMovement => step_minimizing_movement(state, cfg),
    }
}

/// Discrete trajectory: `times[k] = kτ`, `reports[k]` describes the step
/// from `times[k]` to `times[k + 1]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub reports: Vec<StepReport>,
    /// `(step index, state)` pairs at the configured interval.
    pub snapshots: Vec<(usize, PhaseState)>,
    pub final_state: PhaseState,
}

impl Trajectory {
    /// Energies `E^0, E^1, …` along the run.
    pub fn energies(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.reports.len() + 1);
        if let Some(first) = self.reports.first() {
            out.push(first.energy_before);
        }
        out.extend(self.reports.iter().map(|r| r.energy_after));
        out
    }

    /// Piecewise-constant interpolant: the stored snapshot with the largest
    /// step index `k` satisfying `kτ <= t`.
    pub fn snapshot_at(&self, t: f64, tau: f64) -> Option<&PhaseState> {
        let k = (t / tau + 1e-9).floor() as usize;
        self.snapshots
            .iter()
            .rev()
            .find(|(step, _)| *step <= k)
            .map(|(_, s)| s)
    }
}

/// Number of steps covering `horizon`.
pub fn step_count(horizon: f64, tau: f64) -> usize {
    (horizon / tau * (1.0 + 1e-12)).floor().max(0.0) as usize
}

/// Stateful driver; the CLI uses it to stream rows as steps complete.
#[derive(Debug, Clone)]
pub struct Simulation {
    state: PhaseState,
    cfg: StepConfig,
    steps_done: usize,
}

impl Simulation {
    pub fn new(initial: PhaseState, cfg: StepConfig) -> Result<Self, DynamicsError> {
        cfg.validate()?;
        if cfg.scheme == Scheme::Penalty {
            let coupling = cfg.tau * initial.params().penalty_m();
            if coupling > 1.0 {
                log::warn!(
                    "penalty scheme with tau*M = {coupling:.3e} > 1; the explicit penalty term may be unstable"
                );
            }
        }
        Ok(Self {
            state: initial,
            cfg,
            steps_done: 0,
        })
    }

    pub fn state(&self) -> &PhaseState {
        &self.state
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn time(&self) -> f64 {
        self.steps_done as f64 * self.cfg.tau
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    pub fn advance(&mut self) -> Result<StepReport, RunError> {
        let (next, report) = step(&self.state, &self.cfg).map_err(|source| RunError {
            step: self.steps_done,
            source,
        })?;
        self.state = next;
        self.steps_done += 1;
        Ok(report)
    }

    pub fn into_state(self) -> PhaseState {
        self.state
    }
}

/// Iterates the configured stepper `⌊horizon/τ⌋` times. Snapshots are kept
/// every `snapshot_every` steps (step 0 included); `0` disables them.
pub fn run(
    initial: PhaseState,
    cfg: &StepConfig,
    horizon: f64,
    snapshot_every: usize,
) -> Result<Trajectory, RunError> {
    let mut sim = Simulation::new(initial, *cfg).map_err(|source| RunError { step: 0, source })?;
    let steps = step_count(horizon, cfg.tau);
    let mut times = vec![0.0];
    let mut reports = Vec::with_capacity(steps);
    let mut snapshots = Vec::new();
    if snapshot_every > 0 {
        snapshots.push((0, sim.state().clone()));
    }
    for _ in 0..steps {
        reports.push(sim.advance()?);
        times.push(sim.time());
        if snapshot_every > 0 && sim.steps_done() % snapshot_every == 0 {
            snapshots.push((sim.steps_done(), sim.state().clone()));
        }
    }
    Ok(Trajectory {
        times,
        reports,
        snapshots,
        final_state: sim.into_state(),
    })
}

/// Solves `(diag I + coupling |k|² A) x = rhs` mode by mode for the pair of
/// phases, `A = [[1, 1/2], [1/2, 1]]`.
pub(crate) fn solve_coupled(rhs: [&ScalarField; 2], diag: f64, coupling: f64) -> [ScalarField; 2] {
    solve_shifted(rhs, [[diag, 0.0], [0.0, diag]], coupling)
}

/// Solves `(D + coupling |k|² A) x = rhs` mode by mode for a constant
/// symmetric positive definite `D`.
pub(crate) fn solve_shifted(
    rhs: [&ScalarField; 2],
    d: [[f64; 2]; 2],
    coupling: f64,
) -> [ScalarField; 2] {
    let grid = rhs[0].grid();
    let mut a = grid.forward(rhs[0]);
    let mut b = grid.forward(rhs[1]);
    for ((x, y), &k2) in a
        .iter_mut()
        .zip(b.iter_mut())
        .zip(grid.waves().squared_wavenumbers())
    {
        let s = coupling * k2;
        let m11 = d[0][0] + s;
        let m22 = d[1][1] + s;
        let m12 = d[0][1] + 0.5 * s;
        let det = m11 * m22 - m12 * m12;
        let (u, v): (Complex64, Complex64) = (*x, *y);
        *x = (u * m22 - v * m12) / det;
        *y = (v * m11 - u * m12) / det;
    }
    [grid.inverse_real(a), grid.inverse_real(b)]
}

pub(crate) fn check_blow_up(fields: &[ScalarField; 2]) -> Result<(), DynamicsError> {
    for f in fields {
        let magnitude = f.max_abs();
        if !f.all_finite() || magnitude > BLOW_UP_LIMIT {
            return Err(DynamicsError::BlowUp {
                magnitude: if magnitude.is_finite() { magnitude } else { f64::INFINITY },
            });
        }
    }
    Ok(())
}
