//! The two bounded-control problems and their dual (rotation-group)
//! representation.
//!
//! A protocol `s(t)` with `|s| <= 1` drives `H(s) = H0 + s H1`. Instead of
//! tracking wavefunctions, every pure state is mapped to a real dual vector
//! `n_i = 2 Re<psi|S^i|psi>` over a Hermitian operator basis with
//! `Tr(S^i S^j) = delta_ij / 2`; unitary evolution then acts as a rotation
//! `n(T) = M n(0)` and the infidelity becomes the affine form
//! `I = 1 - 1/d - (n_* . M n_0)/2`.
//!
//! Two concrete models are frozen here:
//!
//! * **single qubit** — Pauli basis `sigma/2` in the order (x, y, z),
//!   dual dimension 3 (SO(3));
//! * **two qubits, triplet sector** — an Ising pair with a common transverse
//!   control; the dynamics never leaves the exchange-symmetric triplet, so
//!   states live in an effective 3-level space with the Gell-Mann basis
//!   `lambda_a/2` in the standard order 1..8, dual dimension 8 (SU(3)).
//!
//! Basis orders, the triplet embedding {|uu>, (|ud>+|du>)/sqrt(2), |dd>}, and
//! the deterministic ground-state phase convention (first nonvanishing
//! amplitude real-positive) are all part of the serialization contract: CSV
//! and JSON outputs must be reproducible bit-for-bit.
//!
//! Sign convention: the stored generators satisfy `dn/dt = m n` for dual
//! vectors of evolving kets, i.e. `m_ij = -2i Tr(S^i [H, S^j])`. Expanding in
//! structure constants gives the equivalent closed form
//! `m = -[f_ijk 2 Tr(S^k H)]` (the bracketed matrix is the transpose of `m`;
//! both are antisymmetric). A regression test pins this identity.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::rng;

/// Longitudinal field, frozen for both problems.
pub const H_Z: f64 = -1.0;
/// Ising coupling of the two-qubit problem.
pub const J_COUPLING: f64 = -2.0;

/// Transverse-field amplitude, frozen for both problems.
pub fn h_x() -> f64 {
    -(5.0_f64).sqrt()
}

/// Which of the two frozen models a problem instance describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SingleQubit,
    TwoQubit,
}

/// Dimensionless couplings of `H(s) = H0 + s H1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub h_z: f64,
    pub h_x: f64,
    /// Ising coupling; 0 for the single-qubit problem.
    pub j: f64,
}

/// Totally antisymmetric structure constants `[S^i, S^j] = i f_ijk S^k`,
/// stored densely.
#[derive(Clone, Debug)]
pub struct StructureConstants {
    dim: usize,
    data: Vec<f64>,
}

impl StructureConstants {
    fn from_basis(basis: &[DMatrix<C64>]) -> Self {
        let dim = basis.len();
        let mut data = vec![0.0; dim * dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let comm = &basis[i] * &basis[j] - &basis[j] * &basis[i];
                for k in 0..dim {
                    // f_ijk = -2i Tr([S^i, S^j] S^k)
                    let tr: C64 = (&comm * &basis[k]).trace();
                    data[(i * dim + j) * dim + k] = (C64::new(0.0, -2.0) * tr).re;
                }
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }
}

/// Hilbert-space mirror of a problem. All Hamiltonians in both models are
/// real-symmetric and the frozen ground states are real vectors, which the
/// fast propagation paths exploit.
#[derive(Clone, Debug)]
pub enum HilbertModel {
    TwoLevel {
        h0: Matrix2<f64>,
        h1: Matrix2<f64>,
        psi0: Vector2<f64>,
        psi_star: Vector2<f64>,
    },
    ThreeLevel {
        h0: Matrix3<f64>,
        h1: Matrix3<f64>,
        psi0: Vector3<f64>,
        psi_star: Vector3<f64>,
    },
}

/// A control problem in dual representation.
#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub model: ModelKind,
    /// Physical Hilbert-space dimension (2 or 4).
    pub hilbert_dim: usize,
    /// Effective dimension `d` entering `1 - 1/d` (2, or 3 for the triplet
    /// sector of the two-qubit pair).
    pub effective_dim: usize,
    /// Dual-space dimension (3 or 8).
    pub dual_dim: usize,
    /// Drift generator: `dn/dt = (m0 + s m1) n`.
    pub m0: DMatrix<f64>,
    /// Control generator.
    pub m1: DMatrix<f64>,
    pub f: StructureConstants,
    /// Dual of the initial state.
    pub n0: DVector<f64>,
    /// Dual of the target state.
    pub n_star: DVector<f64>,
    pub couplings: Couplings,
    pub hilbert: HilbertModel,
}

/// Piecewise-constant protocol on a uniform grid over `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Protocol {
    duration: f64,
    values: Vec<f64>,
}

impl Protocol {
    /// Validates the hard bound `|s_i| <= 1`, `L >= 2`, and `T >= 0`.
    pub fn new(duration: f64, values: Vec<f64>) -> Result<Self> {
        if !duration.is_finite() || duration < 0.0 {
            return Err(Error::NegativeHorizon(duration));
        }
        if values.len() < 2 {
            return Err(Error::TooFewSteps(values.len()));
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value.abs() <= 1.0) {
                return Err(Error::ProtocolOutOfBounds { index, value });
            }
        }
        Ok(Self { duration, values })
    }

    pub fn constant(duration: f64, steps: usize, value: f64) -> Result<Self> {
        Self::new(duration, vec![value; steps])
    }

    /// Independent uniform values in `[-1, 1)`.
    pub fn random_uniform(duration: f64, steps: usize, rng: &mut impl rand::RngCore) -> Self {
        let values = (0..steps).map(|_| rng::uniform_symmetric(rng)).collect();
        Self::new(duration, values).expect("uniform values are in bounds")
    }

    /// Independent fair bangs, values in {-1, +1}.
    pub fn random_bang(duration: f64, steps: usize, rng: &mut impl rand::RngCore) -> Self {
        let values = (0..steps)
            .map(|_| if rng.next_u64() & 1 == 0 { -1.0 } else { 1.0 })
            .collect();
        Self::new(duration, values).expect("bang values are in bounds")
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The protocol `-s(T - t)`: reversed step order with negated values.
    /// Exact infidelity is invariant under this map.
    pub fn time_reversed_negated(&self) -> Self {
        let values = self.values.iter().rev().map(|&v| -v).collect();
        Self {
            duration: self.duration,
            values,
        }
    }
}

/// Dual-space propagator; always orthogonal.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub matrix: DMatrix<f64>,
}

impl Propagator {
    /// Largest entry of `M^T M - 1`; the orthogonality defect.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        linalg::max_abs(&(self.matrix.transpose() * &self.matrix - DMatrix::identity(n, n)))
    }
}

// ---------------------------------------------------------------------------
// Operator bases
// ---------------------------------------------------------------------------

fn pauli_basis() -> Vec<DMatrix<C64>> {
    let i = C64::new(0.0, 1.0);
    let o = C64::new(0.0, 0.0);
    let h = C64::new(0.5, 0.0);
    vec![
        DMatrix::from_row_slice(2, 2, &[o, h, h, o]),
        DMatrix::from_row_slice(2, 2, &[o, -i * h, i * h, o]),
        DMatrix::from_row_slice(2, 2, &[h, o, o, -h]),
    ]
}

/// Gell-Mann matrices over the triplet basis, divided by two, standard order
/// lambda_1..lambda_8.
fn gell_mann_basis() -> Vec<DMatrix<C64>> {
    let i = C64::new(0.0, 1.0);
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let s3 = 3.0_f64.sqrt();
    let lambdas: Vec<DMatrix<C64>> = vec![
        DMatrix::from_row_slice(3, 3, &[z, o, z, o, z, z, z, z, z]),
        DMatrix::from_row_slice(3, 3, &[z, -i, z, i, z, z, z, z, z]),
        DMatrix::from_row_slice(3, 3, &[o, z, z, z, -o, z, z, z, z]),
        DMatrix::from_row_slice(3, 3, &[z, z, o, z, z, z, o, z, z]),
        DMatrix::from_row_slice(3, 3, &[z, z, -i, z, z, z, i, z, z]),
        DMatrix::from_row_slice(3, 3, &[z, z, z, z, z, o, z, o, z]),
        DMatrix::from_row_slice(3, 3, &[z, z, z, z, z, -i, z, i, z]),
        DMatrix::from_row_slice(
            3,
            3,
            &[
                o / s3,
                z,
                z,
                z,
                o / s3,
                z,
                z,
                z,
                C64::new(-2.0 / s3, 0.0),
            ],
        ),
    ];
    lambdas.into_iter().map(|l| l * C64::new(0.5, 0.0)).collect()
}

/// The frozen Hermitian operator basis of a model (`Tr(S^i S^j) = delta/2`):
/// Pauli halves in (x, y, z) order, or Gell-Mann halves in standard order.
pub fn basis_matrices(model: ModelKind) -> Vec<DMatrix<C64>> {
    match model {
        ModelKind::SingleQubit => pauli_basis(),
        ModelKind::TwoQubit => gell_mann_basis(),
    }
}

fn basis_for(model: ModelKind) -> Vec<DMatrix<C64>> {
    basis_matrices(model)
}

/// `m_ij = -2i Tr(S^i [H, S^j])` for a Hermitian `H` given over the effective
/// space; the result is real antisymmetric.
fn generator_from(h: &DMatrix<C64>, basis: &[DMatrix<C64>]) -> DMatrix<f64> {
    let dim = basis.len();
    let mut m = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let comm = h * &basis[j] - &basis[j] * h;
        for i in 0..dim {
            let tr: C64 = (&basis[i] * &comm).trace();
            let v = C64::new(0.0, -2.0) * tr;
            debug_assert!(v.im.abs() < 1e-12);
            m[(i, j)] = v.re;
        }
    }
    m
}

fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|x| C64::new(x, 0.0))
}

// ---------------------------------------------------------------------------
// Frozen model construction
// ---------------------------------------------------------------------------

/// Ground state of the 2-level Hamiltonian `h_z (Sz + ratio Sx)`, phase-fixed.
fn ground_state_two_level(ratio: f64) -> Vector2<f64> {
    let h = Matrix2::new(0.5 * H_Z, 0.5 * ratio * H_Z, 0.5 * ratio * H_Z, -0.5 * H_Z);
    ground_state(&DMatrix::from_fn(2, 2, |i, j| h[(i, j)]))
        .fixed_rows::<2>(0)
        .into_owned()
}

/// Ground state of the two-qubit Hamiltonian with transverse field
/// `ratio * h_z`, computed inside the (exchange-symmetric) triplet sector.
fn ground_state_three_level(ratio: f64) -> Vector3<f64> {
    let h3 = triplet_hamiltonian(1.0, ratio * H_Z);
    ground_state(&DMatrix::from_fn(3, 3, |i, j| h3[(i, j)]))
        .fixed_rows::<3>(0)
        .into_owned()
}

/// Lowest eigenvector of a real-symmetric matrix, first nonvanishing
/// amplitude made real-positive.
fn ground_state(h: &DMatrix<f64>) -> DVector<f64> {
    let se = h.clone().symmetric_eigen();
    let mut idx = 0;
    for k in 1..se.eigenvalues.len() {
        if se.eigenvalues[k] < se.eigenvalues[idx] {
            idx = k;
        }
    }
    let mut v = se.eigenvectors.column(idx).into_owned();
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// Triplet-sector Hamiltonian of the two-qubit pair, built from the physical
/// 4x4 operator and projected onto {|uu>, (|ud>+|du>)/sqrt(2), |dd>}.
fn triplet_hamiltonian(s: f64, hx: f64) -> Matrix3<f64> {
    let sz = Matrix2::new(0.5, 0.0, 0.0, -0.5);
    let sx = Matrix2::new(0.0, 0.5, 0.5, 0.0);
    let id = Matrix2::identity();
    let sz1 = sz.kronecker(&id);
    let sz2 = id.kronecker(&sz);
    let sx1 = sx.kronecker(&id);
    let sx2 = id.kronecker(&sx);
    let h4: Matrix4<f64> =
        sz1 * sz2 * J_COUPLING + (sz1 + sz2) * H_Z + (sx1 + sx2) * (s * hx);
    let r = 0.5_f64.sqrt();
    // Columns: |uu>, (|ud>+|du>)/sqrt(2), |dd> over the product order
    // (uu, ud, du, dd).
    let tb = nalgebra::Matrix4x3::new(
        1.0, 0.0, 0.0, //
        0.0, r, 0.0, //
        0.0, r, 0.0, //
        0.0, 0.0, 1.0,
    );
    tb.transpose() * h4 * tb
}

/// Builds the frozen single-qubit problem (dual dimension 3).
pub fn build_single_qubit_problem() -> ControlProblem {
    let basis = pauli_basis();
    let h0 = Matrix2::new(0.5 * H_Z, 0.0, 0.0, -0.5 * H_Z);
    let hx = h_x();
    let h1 = Matrix2::new(0.0, 0.5 * hx, 0.5 * hx, 0.0);
    let psi0 = ground_state_two_level(-2.0);
    let psi_star = ground_state_two_level(2.0);
    finish_problem(
        ModelKind::SingleQubit,
        basis,
        HilbertModel::TwoLevel {
            h0,
            h1,
            psi0,
            psi_star,
        },
        Couplings {
            h_z: H_Z,
            h_x: hx,
            j: 0.0,
        },
    )
}

/// Builds the frozen two-qubit (triplet-sector) problem (dual dimension 8).
pub fn build_two_qubit_problem() -> ControlProblem {
    let basis = gell_mann_basis();
    let hx = h_x();
    let h0 = triplet_hamiltonian(0.0, hx);
    let h1 = triplet_hamiltonian(1.0, hx) - h0;
    let psi0 = ground_state_three_level(-2.0);
    let psi_star = ground_state_three_level(2.0);
    finish_problem(
        ModelKind::TwoQubit,
        basis,
        HilbertModel::ThreeLevel {
            h0,
            h1,
            psi0,
            psi_star,
        },
        Couplings {
            h_z: H_Z,
            h_x: hx,
            j: J_COUPLING,
        },
    )
}

fn finish_problem(
    model: ModelKind,
    basis: Vec<DMatrix<C64>>,
    hilbert: HilbertModel,
    couplings: Couplings,
) -> ControlProblem {
    let (h0c, h1c, psi0c, psi_star_c): (DMatrix<C64>, DMatrix<C64>, Vec<C64>, Vec<C64>) =
        match &hilbert {
            HilbertModel::TwoLevel {
                h0,
                h1,
                psi0,
                psi_star,
            } => (
                to_complex(&DMatrix::from_fn(2, 2, |i, j| h0[(i, j)])),
                to_complex(&DMatrix::from_fn(2, 2, |i, j| h1[(i, j)])),
                psi0.iter().map(|&x| C64::new(x, 0.0)).collect(),
                psi_star.iter().map(|&x| C64::new(x, 0.0)).collect(),
            ),
            HilbertModel::ThreeLevel {
                h0,
                h1,
                psi0,
                psi_star,
            } => (
                to_complex(&DMatrix::from_fn(3, 3, |i, j| h0[(i, j)])),
                to_complex(&DMatrix::from_fn(3, 3, |i, j| h1[(i, j)])),
                psi0.iter().map(|&x| C64::new(x, 0.0)).collect(),
                psi_star.iter().map(|&x| C64::new(x, 0.0)).collect(),
            ),
        };
    let m0 = generator_from(&h0c, &basis);
    let m1 = generator_from(&h1c, &basis);
    let f = StructureConstants::from_basis(&basis);
    let (effective_dim, hilbert_dim) = match model {
        ModelKind::SingleQubit => (2, 2),
        ModelKind::TwoQubit => (3, 4),
    };
    let n0 = dualize_raw(&psi0c, &basis);
    let n_star = dualize_raw(&psi_star_c, &basis);
    ControlProblem {
        model,
        hilbert_dim,
        effective_dim,
        dual_dim: basis.len(),
        m0,
        m1,
        f,
        n0,
        n_star,
        couplings,
        hilbert,
    }
}

fn dualize_raw(state: &[C64], basis: &[DMatrix<C64>]) -> DVector<f64> {
    DVector::from_fn(basis.len(), |i, _| {
        let mut acc = C64::new(0.0, 0.0);
        let s = &basis[i];
        for r in 0..s.nrows() {
            let mut row = C64::new(0.0, 0.0);
            for c in 0..s.ncols() {
                row += s[(r, c)] * state[c];
            }
            acc += state[r].conj() * row;
        }
        2.0 * acc.re
    })
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Maps a normalized state to its dual vector `n_i = 2 Re<psi|S^i|psi>`.
///
/// For the two-qubit problem the state may be given either over the triplet
/// basis (3 amplitudes) or over the physical product basis (4 amplitudes);
/// the latter must have no singlet component.
pub fn dualize_state(problem: &ControlProblem, state: &[C64]) -> Result<DVector<f64>> {
    let norm2: f64 = state.iter().map(|z| z.norm_sqr()).sum();
    if (norm2.sqrt() - 1.0).abs() > 1e-12 {
        return Err(Error::NotNormalized(norm2.sqrt()));
    }
    let effective: Vec<C64> = match (problem.model, state.len()) {
        (ModelKind::SingleQubit, 2) | (ModelKind::TwoQubit, 3) => state.to_vec(),
        (ModelKind::TwoQubit, 4) => {
            let r = 0.5_f64.sqrt();
            let singlet = (state[1] - state[2]) * r;
            if singlet.norm() > 1e-8 {
                return Err(Error::InvalidParameter(format!(
                    "state has singlet amplitude {:.3e}; the triplet-sector model cannot represent it",
                    singlet.norm()
                )));
            }
            vec![state[0], (state[1] + state[2]) * r, state[3]]
        }
        (_, got) => {
            return Err(Error::DimensionMismatch {
                expected: problem.effective_dim,
                got,
            })
        }
    };
    let basis = basis_for(problem.model);
    Ok(dualize_raw(&effective, &basis))
}

/// One exact dual-space step `exp(dt (m0 + s m1))`.
pub fn step_dual(problem: &ControlProblem, s: f64, dt: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(problem.dual_dim, problem.dual_dim);
    step_dual_into(problem, s, dt, &mut out);
    out
}

static GELL_MANN_STACK: std::sync::OnceLock<[Matrix3<C64>; 8]> = std::sync::OnceLock::new();

fn gell_mann_stack() -> &'static [Matrix3<C64>; 8] {
    GELL_MANN_STACK.get_or_init(|| {
        let v = gell_mann_basis();
        let mut out = [Matrix3::<C64>::zeros(); 8];
        for (o, m) in out.iter_mut().zip(&v) {
            *o = Matrix3::from_fn(|i, j| m[(i, j)]);
        }
        out
    })
}

/// Allocation-free variant of [`step_dual`] writing into `out` (shape
/// `dual_dim x dual_dim`). The single-qubit step is the closed-form SO(3)
/// exponential; the two-qubit step is the adjoint action of the exact
/// triplet-sector unitary on the operator basis, `P_ab = 2 Tr(U^dag S_a U
/// S_b)`. Both agree with the generic matrix exponential to machine
/// precision and are used by the samplers' inner loops.
pub fn step_dual_into(problem: &ControlProblem, s: f64, dt: f64, out: &mut DMatrix<f64>) {
    debug_assert_eq!(out.nrows(), problem.dual_dim);
    debug_assert_eq!(out.ncols(), problem.dual_dim);
    match &problem.hilbert {
        HilbertModel::TwoLevel { .. } => {
            let k = Matrix3::from_fn(|i, j| (problem.m0[(i, j)] + s * problem.m1[(i, j)]) * dt);
            let e = linalg::so3_exp(&k);
            for j in 0..3 {
                for i in 0..3 {
                    out[(i, j)] = e[(i, j)];
                }
            }
        }
        HilbertModel::ThreeLevel { h0, h1, .. } => {
            let h = h0 + h1 * s;
            let u = linalg::step_unitary3(&h, dt);
            let uh = u.adjoint();
            let basis = gell_mann_stack();
            for a in 0..8 {
                let w = uh * basis[a] * u;
                for b in 0..8 {
                    let sb = &basis[b];
                    let mut tr = C64::new(0.0, 0.0);
                    for i in 0..3 {
                        for j in 0..3 {
                            tr += w[(i, j)] * sb[(j, i)];
                        }
                    }
                    out[(a, b)] = 2.0 * tr.re;
                }
            }
        }
    }
}

/// Exact propagator of a piecewise-constant protocol: the ordered product of
/// per-step exponentials, latest step leftmost.
pub fn propagate_exact(problem: &ControlProblem, protocol: &Protocol) -> Propagator {
    let dt = protocol.dt();
    let n = problem.dual_dim;
    let mut m = DMatrix::identity(n, n);
    for &s in protocol.values() {
        m = step_dual(problem, s, dt) * m;
    }
    Propagator { matrix: m }
}

/// Infidelity from an explicit dual propagator matrix (clipped to `[0, 1]`).
pub fn infidelity_from_matrix(problem: &ControlProblem, m: &DMatrix<f64>) -> f64 {
    let i = 1.0 - 1.0 / problem.effective_dim as f64
        - 0.5 * problem.n_star.dot(&(m * &problem.n0));
    i.clamp(0.0, 1.0)
}

/// Exact infidelity of a protocol via the dual representation.
pub fn infidelity_exact(problem: &ControlProblem, protocol: &Protocol) -> f64 {
    infidelity_from_matrix(problem, &propagate_exact(problem, protocol).matrix)
}

/// Transition amplitude `<psi_*| U(T, 0) |psi_0>` via Hilbert-space
/// propagation (closed-form per-step exponentials). `1 - |amplitude|^2`
/// equals the dual-space infidelity; this is the sampler fast path.
pub fn amplitude_hilbert(problem: &ControlProblem, protocol: &Protocol) -> C64 {
    let dt = protocol.dt();
    match &problem.hilbert {
        HilbertModel::TwoLevel { psi0, psi_star, .. } => {
            let mut v = nalgebra::Vector2::new(C64::new(psi0[0], 0.0), C64::new(psi0[1], 0.0));
            for &s in protocol.values() {
                let u = linalg::step_unitary2(problem.couplings.h_z, s * problem.couplings.h_x, dt);
                v = u * v;
            }
            C64::new(psi_star[0], 0.0).conj() * v[0] + C64::new(psi_star[1], 0.0).conj() * v[1]
        }
        HilbertModel::ThreeLevel {
            h0,
            h1,
            psi0,
            psi_star,
        } => {
            let mut v = nalgebra::Vector3::new(
                C64::new(psi0[0], 0.0),
                C64::new(psi0[1], 0.0),
                C64::new(psi0[2], 0.0),
            );
            for &s in protocol.values() {
                let u = linalg::step_unitary3(&(h0 + h1 * s), dt);
                v = u * v;
            }
            (0..3).map(|k| C64::new(psi_star[k], 0.0).conj() * v[k]).sum()
        }
    }
}

/// Exact infidelity via the Hilbert-space fast path.
pub fn infidelity_hilbert(problem: &ControlProblem, protocol: &Protocol) -> f64 {
    (1.0 - amplitude_hilbert(problem, protocol).norm_sqr()).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ProblemJson {
    model: ModelKind,
    h_z: f64,
    h_x: f64,
    #[serde(rename = "J")]
    j: f64,
}

impl ControlProblem {
    /// Serializes the problem as its defining couplings; the representation
    /// is independent of any protocol discretization.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ProblemJson {
            model: self.model,
            h_z: self.couplings.h_z,
            h_x: self.couplings.h_x,
            j: self.couplings.j,
        })
        .expect("problem serialization cannot fail")
    }

    /// Rebuilds a problem from its JSON description, validating that the
    /// couplings match the frozen models.
    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: ProblemJson =
            serde_json::from_str(text).map_err(|e| Error::ProblemFormat(e.to_string()))?;
        let problem = match parsed.model {
            ModelKind::SingleQubit => build_single_qubit_problem(),
            ModelKind::TwoQubit => build_two_qubit_problem(),
        };
        let c = problem.couplings;
        for (name, got, want) in [
            ("h_z", parsed.h_z, c.h_z),
            ("h_x", parsed.h_x, c.h_x),
            ("J", parsed.j, c.j),
        ] {
            if (got - want).abs() > 1e-12 {
                return Err(Error::ProblemFormat(format!(
                    "unsupported coupling {name} = {got}; this build freezes {name} = {want}"
                )));
            }
        }
        Ok(problem)
    }
}
