//! Shared oracles for the integration-test suites.
//!
//! Everything here recomputes reference quantities through routes that are
//! independent of the code under test: explicit Runge-Kutta integration of
//! the dual and Schrodinger equations of motion, and direct Hilbert-space
//! variational derivatives of the evolution operator.

#![allow(dead_code)]

use clpt_core::linalg::C64;
use clpt_core::problem::{ControlProblem, HilbertModel, Protocol};
use nalgebra::{DMatrix, DVector};

/// Reference dual propagator by classic RK4 on `dM/dt = (m0 + s(t) m1) M`,
/// with `refine` sub-steps per protocol step.
pub fn rk4_propagator(problem: &ControlProblem, protocol: &Protocol, refine: usize) -> DMatrix<f64> {
    let n = problem.dual_dim;
    let h = protocol.dt() / refine as f64;
    let mut m = DMatrix::<f64>::identity(n, n);
    for &s in protocol.values() {
        let g = &problem.m0 + &problem.m1 * s;
        for _ in 0..refine {
            let k1 = &g * &m;
            let k2 = &g * (&m + &k1 * (h / 2.0));
            let k3 = &g * (&m + &k2 * (h / 2.0));
            let k4 = &g * (&m + &k3 * h);
            m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    m
}

/// Complex Hamiltonian `H0 + s H1` of the effective Hilbert space.
pub fn hamiltonian(problem: &ControlProblem, s: f64) -> DMatrix<C64> {
    let real: DMatrix<f64> = match &problem.hilbert {
        HilbertModel::TwoLevel { h0, h1, .. } => {
            DMatrix::from_fn(2, 2, |i, j| h0[(i, j)] + s * h1[(i, j)])
        }
        HilbertModel::ThreeLevel { h0, h1, .. } => {
            DMatrix::from_fn(3, 3, |i, j| h0[(i, j)] + s * h1[(i, j)])
        }
    };
    real.map(|x| C64::new(x, 0.0))
}

/// Initial state as a complex vector over the effective space.
pub fn initial_state(problem: &ControlProblem) -> DVector<C64> {
    match &problem.hilbert {
        HilbertModel::TwoLevel { psi0, .. } => {
            DVector::from_fn(2, |i, _| C64::new(psi0[i], 0.0))
        }
        HilbertModel::ThreeLevel { psi0, .. } => {
            DVector::from_fn(3, |i, _| C64::new(psi0[i], 0.0))
        }
    }
}

/// Target state as a complex vector over the effective space.
pub fn target_state(problem: &ControlProblem) -> DVector<C64> {
    match &problem.hilbert {
        HilbertModel::TwoLevel { psi_star, .. } => {
            DVector::from_fn(2, |i, _| C64::new(psi_star[i], 0.0))
        }
        HilbertModel::ThreeLevel { psi_star, .. } => {
            DVector::from_fn(3, |i, _| C64::new(psi_star[i], 0.0))
        }
    }
}

/// Reference Schrodinger evolution `psi(T)` by RK4 on `dpsi/dt = -i H psi`.
/// Never touches the dual generators, so it cross-checks their construction.
pub fn rk4_state(problem: &ControlProblem, protocol: &Protocol, refine: usize) -> DVector<C64> {
    let h = protocol.dt() / refine as f64;
    let mi = C64::new(0.0, -1.0);
    let mut psi = initial_state(problem);
    for &s in protocol.values() {
        let ham = hamiltonian(problem, s) * mi;
        for _ in 0..refine {
            let k1 = &ham * &psi;
            let k2 = &ham * (&psi + &k1 * C64::new(h / 2.0, 0.0));
            let k3 = &ham * (&psi + &k2 * C64::new(h / 2.0, 0.0));
            let k4 = &ham * (&psi + &k3 * C64::new(h, 0.0));
            psi += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4)
                * C64::new(h / 6.0, 0.0);
        }
        // RK4 drifts off the unit sphere at O(h^5) per step; renormalize so
        // long protocols stay comparable at 1e-10.
        let norm = psi.norm();
        psi /= C64::new(norm, 0.0);
    }
    psi
}

/// Exact Hilbert-space evolution operator of a protocol (per-step
/// eigendecomposition of the Hermitian step Hamiltonian, latest leftmost).
pub fn unitary_exact(problem: &ControlProblem, protocol: &Protocol) -> DMatrix<C64> {
    let dim = problem.effective_dim;
    let dt = protocol.dt();
    let mut u = DMatrix::<C64>::identity(dim, dim);
    for &s in protocol.values() {
        let step = (hamiltonian(problem, s) * C64::new(0.0, -dt)).exp();
        u = step * u;
    }
    u
}

/// Infidelity through the rotating frame: `M0(T) M'` where the primed
/// propagator accumulates the exactly transformed steps
/// `exp(-t_{i+1} m0) exp(dt (m0 + s_i m1)) exp(t_i m0)`.
pub fn infidelity_rotating_frame(problem: &ControlProblem, protocol: &Protocol) -> f64 {
    let n = problem.dual_dim;
    let dt = protocol.dt();
    let mut mp = DMatrix::<f64>::identity(n, n);
    for (i, &s) in protocol.values().iter().enumerate() {
        let t0 = i as f64 * dt;
        let t1 = (i + 1) as f64 * dt;
        let step = (&problem.m0 * (-t1)).exp()
            * ((&problem.m0 + &problem.m1 * s) * dt).exp()
            * (&problem.m0 * t0).exp();
        mp = step * mp;
    }
    let m = (&problem.m0 * protocol.duration()).exp() * mp;
    clpt_core::problem::infidelity_from_matrix(problem, &m)
}

/// Max-abs difference of two real matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
