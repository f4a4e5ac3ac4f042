use crate::constraint::{multiplier_for, penalty_coefficient, project_state};
use crate::energy::{energy, evaluate, PhaseState};
use crate::grid::ScalarField;

use super::{check_blow_up, solve_coupled, DynamicsError, StepConfig, StepReport};

/// One semi-implicit step with explicit Lagrange multipliers.
pub fn step_multiplier(
    state: &PhaseState,
    cfg: &StepConfig,
) -> Result<(PhaseState, StepReport), DynamicsError> {
    let eval = evaluate(state);
    let lambda = [
        multiplier_for(&eval.derivative[0], &eval.fprime[0], &cfg.guard)?,
        multiplier_for(&eval.derivative[1], &eval.fprime[1], &cfg.guard)?,
    ];
    advance(state, cfg, eval.energy.total, &eval.reaction, &eval.fprime, lambda)
}

/// One semi-implicit step with the explicit penalty force
/// `M ∫(f(φ_i) - ω_i) f'(φ_i)` in place of the multiplier term.
pub fn step_penalty(
    state: &PhaseState,
    cfg: &StepConfig,
) -> Result<(PhaseState, StepReport), DynamicsError> {
    let eval = evaluate(state);
    let coefficient = [penalty_coefficient(state, 0), penalty_coefficient(state, 1)];
    advance(state, cfg, eval.energy.total, &eval.reaction, &eval.fprime, coefficient)
}

fn advance(
    state: &PhaseState,
    cfg: &StepConfig,
    energy_before: f64,
    reaction: &[ScalarField; 2],
    fprime: &[ScalarField; 2],
    lambda: [f64; 2],
) -> Result<(PhaseState, StepReport), DynamicsError> {
    let tau = cfg.tau;
    let eps = state.params().epsilon();

    // rhs_i = φ_i - τ (reaction_i + λ_i f'(φ_i))
    let rhs: [ScalarField; 2] = std::array::from_fn(|i| {
        let mut out = state.phi(i).clone();
        for ((o, r), fp) in out
            .values_mut()
            .iter_mut()
            .zip(reaction[i].values())
            .zip(fprime[i].values())
        {
            *o -= tau * (r + lambda[i] * fp);
        }
        out
    });
    let [p1, p2] = solve_coupled([&rhs[0], &rhs[1]], 1.0, tau * eps);
    check_blow_up(&[p1.clone(), p2.clone()])?;

    let mut next = state.with_fields(p1, p2);
    if cfg.project_each_step {
        next = project_state(&next, &cfg.guard)?;
    }

    let breakdown = energy(&next);
    let report = StepReport {
        energy_before,
        energy_after: breakdown.total,
        breakdown_after: breakdown,
        lambda,
        volume_residuals: next.volume_residuals(),
        increment_l2: [
            next.phi(0).distance(state.phi(0)),
            next.phi(1).distance(state.phi(1)),
        ],
        inner_iters: 0,
        mm_inequality_slack: None,
        stationarity: None,
    };
    Ok((next, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{self, ModelParams};
    use crate::dynamics::Scheme;
    use crate::grid::PeriodicGrid;

    fn symmetric_state(m: f64) -> PhaseState {
        let grid = PeriodicGrid::uniform(2, 16, 0.5).unwrap();
        let p = ModelParams::new(0.1, [[10.0, 2.0], [2.0, 10.0]], [7.0 / 27.0; 2], m).unwrap();
        let third = ScalarField::constant(&grid, 1.0 / 3.0);
        PhaseState::new(third.clone(), third, p).unwrap()
    }

    #[test]
    fn symmetric_state_is_fixed_point() {
        let state = symmetric_state(100.0);
        for scheme in [Scheme::Multiplier, Scheme::Penalty] {
            let cfg = StepConfig::new(scheme, 1e-3);
            let (next, report) = crate::dynamics::step(&state, &cfg).unwrap();
            assert!(next.distance(&state) < 1e-12, "{scheme}");
            assert!(report.lambda.iter().all(|l| l.abs() < 1e-12));
        }
    }

    #[test]
    fn penalty_step_linear_regime() {
        // Symmetric constant state with a deliberately mismatched target.
        let grid = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let omega = 0.25;
        let m = 50.0;
        let p = ModelParams::new(0.1, [[1.0, 0.0], [0.0, 1.0]], [omega; 2], m).unwrap();
        let third = ScalarField::constant(&grid, 1.0 / 3.0);
        let state = PhaseState::new(third.clone(), third, p).unwrap();
        let tau = 1e-6;
        let mut cfg = StepConfig::new(Scheme::Penalty, tau);
        cfg.project_each_step = false;
        let (next, _) = step_penalty(&state, &cfg).unwrap();
        let r = chem::f(1.0 / 3.0) - omega;
        let fp = chem::f_prime(1.0 / 3.0);
        let predicted = -tau * m * r * fp * fp;
        let change = chem::volume_residual(next.phi(0), omega) - r;
        assert!((change - predicted).abs() <= 1e-3 * predicted.abs(), "{change} vs {predicted}");
    }

    #[test]
    fn blow_up_is_reported() {
        let grid = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let p = ModelParams::new(0.1, [[1.0, 0.0], [0.0, 1.0]], [0.3; 2], 1.0).unwrap();
        let big = ScalarField::from_fn(&grid, |x| 50.0 * x[0]);
        let state = PhaseState::new(big.clone(), big, p).unwrap();
        let mut cfg = StepConfig::new(Scheme::Penalty, 10.0);
        cfg.project_each_step = false;
        let err = step_penalty(&state, &cfg).unwrap_err();
        assert_eq!(err.name(), "BlowUp");
    }
}
