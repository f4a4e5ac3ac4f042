//! The ternary free energy and its L² variational derivatives.
//!
//! ```text
//! E = ∫ ε/2 (|∇φ1|² + |∇φ2|² + ∇φ1·∇φ2) + 1/(2ε) W_T(φ1, φ2)
//!   + Σ_ij γ_ij/2 ∫ ∇Ψ_i·∇Ψ_j,        Ψ_i = (-Δ)^{-1}(f(φ_i) - ω_i)
//! ```
//!
//! The long-range term is evaluated as `∫ (f(φ_i) - ω_i) Ψ_j`, which equals
//! `∫ ∇Ψ_i·∇Ψ_j` for zero-mean potentials.

use thiserror::Error;

use crate::chem::{self, ModelParams};
use crate::grid::{inv_neg_laplacian, laplacian, PeriodicGrid, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("phase fields live on different grids")]
    GridMismatch,
    #[error("phase field {0} contains non-finite values")]
    NonFinite(usize),
}

/// The two independent phase fields; the third species is `1 - φ1 - φ2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    phi: [ScalarField; 2],
    params: ModelParams,
}

impl PhaseState {
    pub fn new(phi1: ScalarField, phi2: ScalarField, params: ModelParams) -> Result<Self, StateError> {
        if phi1.grid() != phi2.grid() {
            return Err(StateError::GridMismatch);
        }
        for (i, phi) in [&phi1, &phi2].into_iter().enumerate() {
            if !phi.all_finite() {
                return Err(StateError::NonFinite(i + 1));
            }
        }
        Ok(Self {
            phi: [phi1, phi2],
            params,
        })
    }

    pub fn phi(&self, i: usize) -> &ScalarField {
        &self.phi[i]
    }

    pub fn fields(&self) -> &[ScalarField; 2] {
        &self.phi
    }

    pub fn into_fields(self) -> [ScalarField; 2] {
        self.phi
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.phi[0].grid()
    }

    /// Replaces the fields, keeping the parameters. Grids must match.
    pub fn with_fields(&self, phi1: ScalarField, phi2: ScalarField) -> Self {
        debug_assert!(phi1.grid() == phi2.grid());
        Self {
            phi: [phi1, phi2],
            params: self.params,
        }
    }

    pub fn with_params(&self, params: ModelParams) -> Self {
        Self {
            phi: self.phi.clone(),
            params,
        }
    }

    pub fn volume_residuals(&self) -> [f64; 2] {
        let omega = self.params.omega();
        [
            chem::volume_residual(&self.phi[0], omega[0]),
            chem::volume_residual(&self.phi[1], omega[1]),
        ]
    }

    /// `sqrt(‖φ1 - ψ1‖² + ‖φ2 - ψ2‖²)`
    pub fn distance(&self, other: &Self) -> f64 {
        let d0 = self.phi[0].distance(&other.phi[0]);
        let d1 = self.phi[1].distance(&other.phi[1]);
        (d0 * d0 + d1 * d1).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub interfacial: f64,
    pub potential: f64,
    pub longrange: f64,
    pub total: f64,
}

/// Energy, variational derivatives and the intermediate fields shared by the
/// steppers, from a single pass of transforms.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub energy: EnergyBreakdown,
    /// `δE/δφ_i`
    pub derivative: [ScalarField; 2],
    /// `Δφ_i`
    pub laplacian: [ScalarField; 2],
    /// Everything in `δE/δφ_i` except the gradient terms:
    /// `W_T partial / (2ε) + Σ_k γ_ik Ψ_k f'(φ_i)`.
    pub reaction: [ScalarField; 2],
    /// `f'(φ_i)`
    pub fprime: [ScalarField; 2],
    /// `Ψ_i = (-Δ)^{-1}(f(φ_i) - ω_i)`
    pub potentials: [ScalarField; 2],
}

pub fn evaluate(state: &PhaseState) -> Evaluation {
    let params = state.params();
    let eps = params.epsilon();
    let gamma = params.gamma();
    let omega = params.omega();
    let [p1, p2] = state.fields();

    let lap = [laplacian(p1), laplacian(p2)];
    let excess = [p1.map(|v| chem::f(v) - omega[0]), p2.map(|v| chem::f(v) - omega[1])];
    let psi = [inv_neg_laplacian(&excess[0]), inv_neg_laplacian(&excess[1])];
    let fprime = [p1.map(chem::f_prime), p2.map(chem::f_prime)];

    let g11 = -p1.dot(&lap[0]);
    let g22 = -p2.dot(&lap[1]);
    let g12 = -p1.dot(&lap[1]);
    let interfacial = 0.5 * eps * (g11 + g22 + g12);

    let potential = p1.zip_map(p2, chem::wt).integral() / (2.0 * eps);

    let mut longrange = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            longrange += 0.5 * gamma[i][j] * excess[i].dot(&psi[j]);
        }
    }

    let reaction: [ScalarField; 2] = std::array::from_fn(|i| {
        let nonlocal = psi[0].zip_map(&psi[1], |a, b| gamma[i][0] * a + gamma[i][1] * b);
        let mut out = p1.zip_map(p2, |a, b| chem::wt_partial(i, a, b) / (2.0 * eps));
        for ((o, n), fp) in out
            .values_mut()
            .iter_mut()
            .zip(nonlocal.values())
            .zip(fprime[i].values())
        {
            *o += n * fp;
        }
        out
    });

    let derivative: [ScalarField; 2] = std::array::from_fn(|i| {
        let j = 1 - i;
        let mut out = reaction[i].clone();
        for ((o, li), lj) in out
            .values_mut()
            .iter_mut()
            .zip(lap[i].values())
            .zip(lap[j].values())
        {
            *o -= eps * li + 0.5 * eps * lj;
        }
        out
    });

    Evaluation {
        energy: EnergyBreakdown {
            interfacial,
            potential,
            longrange,
            total: interfacial + potential + longrange,
        },
        derivative,
        laplacian: lap,
        reaction,
        fprime,
        potentials: psi,
    }
}

pub fn energy(state: &PhaseState) -> EnergyBreakdown {
    evaluate(state).energy
}

/// `δE/δφ_i` for `i ∈ {0, 1}`.
pub fn variational_derivative(state: &PhaseState, i: usize) -> ScalarField {
    let [d0, d1] = evaluate(state).derivative;
    match i {
        0 => d0,
        1 => d1,
        _ => panic!("phase index must be 0 or 1, got {i}"),
    }
}

/// `∫ ∇Ψ_i·∇Ψ_j` with `Ψ_i = (-Δ)^{-1}(f(φ_i) - ω_i)`.
pub fn nonlocal_pairing(state: &PhaseState, i: usize, j: usize) -> f64 {
    let omega = state.params().omega();
    let excess_i = state.phi(i).map(|v| chem::f(v) - omega[i]);
    let excess_j = state.phi(j).map(|v| chem::f(v) - omega[j]);
    excess_i.dot(&inv_neg_laplacian(&excess_j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(eps: f64, omega: [f64; 2]) -> ModelParams {
        ModelParams::new(eps, [[2.0, 0.5], [0.5, 1.5]], omega, 100.0).unwrap()
    }

    #[test]
    fn symmetric_constant_state() {
        let grid = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let third = ScalarField::constant(&grid, 1.0 / 3.0);
        let p = params(1.0, [7.0 / 27.0, 7.0 / 27.0]);
        let state = PhaseState::new(third.clone(), third, p).unwrap();
        let e = energy(&state);
        assert!(e.interfacial.abs() < 1e-14);
        assert!(e.longrange.abs() < 1e-14);
        assert!((e.potential - 4.0 / 3.0).abs() < 1e-13);
        assert!((e.total - 4.0 / 3.0).abs() < 1e-13);
        for i in 0..2 {
            assert!(variational_derivative(&state, i).max_abs() < 1e-12);
        }
    }

    #[test]
    fn pure_minimum_has_zero_energy() {
        let grid = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let p = ModelParams::without_volume_check(0.2, [[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0], 1.0)
            .unwrap();
        let state = PhaseState::new(
            ScalarField::constant(&grid, 1.0),
            ScalarField::constant(&grid, 0.0),
            p,
        )
        .unwrap();
        assert!(energy(&state).total.abs() < 1e-14);
    }

    #[test]
    fn cosine_state_derivative_matches_term_by_term() {
        let x1 = 0.5;
        let eps = 0.3;
        let amp = 0.01;
        let grid = PeriodicGrid::uniform(2, 16, x1).unwrap();
        let mode = |x: &[f64]| (PI * x[0] / x1).cos();
        let p1 = ScalarField::from_fn(&grid, |x| 0.5 + amp * mode(x));
        let p2 = ScalarField::from_fn(&grid, |x| 0.5 - amp * mode(x));
        let omega = [0.45, 0.55];
        let gamma = [[2.0, 0.5], [0.5, 1.5]];
        let prm = ModelParams::new(eps, gamma, omega, 1.0).unwrap();
        let state = PhaseState::new(p1, p2, prm).unwrap();

        // Closed forms: Δ cos = -(π/X)² cos; φ3 ≡ 0.
        let k2 = (PI / x1).powi(2);
        #[allow(clippy::needless_range_loop)]
        for i in 0..2 {
            let d = variational_derivative(&state, i);
            let sign = if i == 0 { 1.0 } else { -1.0 };
            for (flat, &dv) in d.values().iter().enumerate() {
                let x = grid.coordinates(flat);
                let c = mode(&x);
                let c3 = (3.0 * PI * x[0] / x1).cos();
                let own = 0.5 + sign * amp * c;
                let other = 0.5 - sign * amp * c;
                let grad_terms = eps * k2 * sign * amp * c + 0.5 * eps * k2 * (-sign) * amp * c;
                let well = (chem::w_prime(own) - chem::w_prime(1.0 - own - other)) / (2.0 * eps);
                // f(1/2 + u) = 1/2 + 3u/2 - 2u³ and cos³ = (3 cos + cos 3x)/4
                let psi_of = |s: f64| {
                    let u = s * amp;
                    let lin = 1.5 * u - 1.5 * u.powi(3);
                    let triple = -0.5 * u.powi(3);
                    lin * c / k2 + triple * c3 / (9.0 * k2)
                };
                let psi1 = psi_of(1.0);
                let psi2 = psi_of(-1.0);
                let psi_own = [psi1, psi2];
                let nonlocal = (gamma[i][0] * psi_own[0] + gamma[i][1] * psi_own[1]) * chem::f_prime(own);
                let expected = grad_terms + well + nonlocal;
                assert!((dv - expected).abs() < 1e-12, "phase {i} node {flat}: {dv} vs {expected}");
            }
        }
    }

    #[test]
    fn breakdown_parts_are_nonnegative() {
        let grid = PeriodicGrid::uniform(2, 16, 0.5).unwrap();
        let p1 = ScalarField::from_fn(&grid, |x| 0.3 + 0.2 * (2.0 * PI * (x[0] + x[1])).sin());
        let p2 = ScalarField::from_fn(&grid, |x| {
            0.4 + 0.1 * (2.0 * PI * x[0]).cos() + 0.1 * (2.0 * PI * x[1]).sin()
        });
        let state = PhaseState::new(p1, p2, params(0.1, [0.3, 0.3])).unwrap();
        let e = energy(&state);
        assert!(e.interfacial >= 0.0 && e.potential >= 0.0 && e.longrange >= 0.0);
        assert!((e.total - (e.interfacial + e.potential + e.longrange)).abs() <= 1e-12 * e.total);
        let a = nonlocal_pairing(&state, 0, 1);
        let b = nonlocal_pairing(&state, 1, 0);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn rejects_mismatched_grids() {
        let g1 = PeriodicGrid::uniform(2, 8, 0.5).unwrap();
        let g2 = PeriodicGrid::uniform(2, 16, 0.5).unwrap();
        let err = PhaseState::new(
            ScalarField::constant(&g1, 0.3),
            ScalarField::constant(&g2, 0.3),
            params(0.1, [0.3, 0.3]),
        )
        .unwrap_err();
        assert_eq!(err, StateError::GridMismatch);
    }
}
