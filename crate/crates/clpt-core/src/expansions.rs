//! Landscape expansions: Dyson/Taylor coefficients around arbitrary centers,
//! Magnus resummation in the rotating frame, and the cumulant (logarithm)
//! resummation.
//!
//! All time-ordered integrals are discretized on the protocol's uniform grid
//! with open in-cell Gauss-Legendre nodes. Cell-averaged insertion operators
//! reproduce the Frechet derivative of each step's matrix exponential, so
//! `b` and `J` are the *exact* first and second derivatives of the discrete
//! landscape up to the (negligible, ~1e-9) quadrature error of the smooth
//! in-cell integrands; coincident-cell contributions use nested ordered
//! Gauss-Legendre integrals rather than midpoint products. Coincident-time
//! kernel values take the upper ordering branch `t_1 >= t_2`; the assembled
//! quadratic form is insensitive to that choice because the two branches
//! produce transposed raw kernels that symmetrize identically.

use nalgebra::{DMatrix, DVector};
use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{step_dual, ControlProblem, Propagator, Protocol};

/// Which expansion produced a coefficient set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpansionKind {
    /// Around the zero protocol in the rotating frame.
    Dyson,
    /// Around an arbitrary center protocol.
    Taylor,
}

impl ExpansionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpansionKind::Dyson => "dyson",
            ExpansionKind::Taylor => "taylor",
        }
    }
}

/// Truncated landscape around a center protocol:
/// `I(s) ~= c + (T/L) b.ds + (1/2)(T/L)^2 ds.J ds + (1/6)(T/L)^3 K3[ds,ds,ds]`
/// with `ds = s - center`.
#[derive(Clone, Debug)]
pub struct ExpansionCoefficients {
    pub kind: ExpansionKind,
    pub center: Protocol,
    pub order: usize,
    /// Infidelity at the center (not clipped).
    pub c: f64,
    /// First-order kernel on step midpoints.
    pub b: DVector<f64>,
    /// Symmetrized second-order kernel.
    pub j: DMatrix<f64>,
    /// Optional symmetric third-order kernel, packed as `(i*L + j)*L + k`.
    pub k3: Option<Vec<f64>>,
}

impl ExpansionCoefficients {
    pub fn t(&self) -> f64 {
        self.center.duration()
    }

    pub fn l(&self) -> usize {
        self.center.steps()
    }

    /// Serializes to the documented CSV layout: one header row
    /// `kind,order,T,L,c`, then the `b` row, then `L` rows of `J`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{}",
            self.kind.as_str(),
            self.order,
            fmt(self.t()),
            self.l(),
            fmt(self.c)
        )?;
        writeln!(out, "{}", join(self.b.iter().copied()))?;
        for i in 0..self.l() {
            writeln!(out, "{}", join(self.j.row(i).iter().copied()))?;
        }
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| fmt(v)).collect::<Vec<_>>().join(",")
}

/// Four-point Gauss-Legendre rule on (0, 1); exact for septics, which keeps
/// the quadrature error of the smooth in-cell rotations near 1e-9 even on
/// the coarsest documented grids.
const GL4: [(f64, f64); 4] = [
    (0.069431844202973714, 0.173927422568726929),
    (0.330009478207571868, 0.326072577431273071),
    (0.669990521792428132, 0.326072577431273071),
    (0.930568155797026286, 0.173927422568726929),
];

/// Rotated control insertion at offset `tau` into a cell with constant
/// control `s`, entered with center propagator `p_start`.
fn a_tilde(problem: &ControlProblem, p_start: &DMatrix<f64>, s: f64, tau: f64) -> DMatrix<f64> {
    let p = step_dual(problem, s, tau) * p_start;
    p.transpose() * &problem.m1 * p
}

/// Cell average `(1/span) int_0^span A(tau) dtau`.
fn cell_avg(problem: &ControlProblem, p_start: &DMatrix<f64>, s: f64, span: f64) -> DMatrix<f64> {
    let n = problem.dual_dim;
    let mut acc = DMatrix::zeros(n, n);
    for (x, w) in GL4 {
        acc += a_tilde(problem, p_start, s, x * span) * w;
    }
    acc
}

/// Ordered double integral `(1/span^2) int_{t1 > t2} A(t1) A(t2)`.
fn cell_ordered2(
    problem: &ControlProblem,
    p_start: &DMatrix<f64>,
    s: f64,
    span: f64,
) -> DMatrix<f64> {
    let n = problem.dual_dim;
    let mut acc = DMatrix::zeros(n, n);
    for (x, w) in GL4 {
        let sub = x * span;
        acc += a_tilde(problem, p_start, s, sub) * cell_avg(problem, p_start, s, sub) * (w * x);
    }
    acc
}

/// Ordered triple integral `(1/span^3) int_{t1 > t2 > t3} A(t1) A(t2) A(t3)`.
fn cell_ordered3(
    problem: &ControlProblem,
    p_start: &DMatrix<f64>,
    s: f64,
    span: f64,
) -> DMatrix<f64> {
    let n = problem.dual_dim;
    let mut acc = DMatrix::zeros(n, n);
    for (x, w) in GL4 {
        let sub = x * span;
        acc += a_tilde(problem, p_start, s, sub)
            * cell_ordered2(problem, p_start, s, sub)
            * (w * x * x);
    }
    acc
}

fn coefficients_at(
    problem: &ControlProblem,
    center: Protocol,
    order: usize,
    kind: ExpansionKind,
) -> ExpansionCoefficients {
    let l = center.steps();
    let dt = center.dt();
    let n = problem.dual_dim;

    // Stage 1: walk the center trajectory, collecting cell-averaged
    // insertions (and ordered in-cell squares/cubes for the coincident
    // contributions of higher orders).
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut avg = Vec::with_capacity(l);
    let mut sq = Vec::new();
    let mut cu = Vec::new();
    for &s in center.values() {
        avg.push(cell_avg(problem, &p, s, dt));
        if order >= 2 {
            sq.push(cell_ordered2(problem, &p, s, dt));
        }
        if order >= 3 {
            cu.push(cell_ordered3(problem, &p, s, dt));
        }
        p = step_dual(problem, s, dt) * p;
    }

    let w = p.transpose() * &problem.n_star;
    let c = 1.0 - 1.0 / problem.effective_dim as f64
        - 0.5 * problem.n_star.dot(&(&p * &problem.n0));

    // Stage 2: contract the operator products into the coefficient tensors.
    let r: Vec<DVector<f64>> = avg.iter().map(|a| a * &problem.n0).collect();
    let g: Vec<DVector<f64>> = avg.iter().map(|a| a.transpose() * &w).collect();

    let b = DVector::from_fn(l, |i, _| -0.5 * w.dot(&r[i]));

    let mut j = DMatrix::zeros(l, l);
    if order >= 2 {
        // Upper ordering branch t_i >= t_j, then symmetrize; strictly
        // separated cells factorize into products of cell averages.
        for i in 0..l {
            for jj in 0..i {
                let v = -0.5 * g[i].dot(&r[jj]);
                j[(i, jj)] = v;
                j[(jj, i)] = v;
            }
            j[(i, i)] = -w.dot(&(&sq[i] * &problem.n0));
        }
    }

    let k3 = if order >= 3 {
        // Fully symmetric cubic kernel. Strictly ordered triples factorize;
        // coincident pairs use the in-cell ordered square, the triple
        // diagonal the in-cell ordered cube. Weights fold the symmetric-form
        // prefactor 1/6 against each slot's permutation multiplicity.
        let rd: Vec<DVector<f64>> = sq.iter().map(|d| d * &problem.n0).collect();
        let gd: Vec<DVector<f64>> = sq.iter().map(|d| d.transpose() * &w).collect();
        let mut mixed: Vec<DVector<f64>> = Vec::with_capacity(l * l);
        for a in &avg {
            for rv in &r {
                mixed.push(a * rv);
            }
        }
        let mut k3 = vec![0.0; l * l * l];
        let mut set = |a: usize, bb: usize, cc: usize, v: f64| {
            k3[(a * l + bb) * l + cc] = v;
        };
        for i in 0..l {
            for jj in 0..i {
                for k in 0..jj {
                    let v = -0.5 * g[i].dot(&mixed[jj * l + k]);
                    set(i, jj, k, v);
                    set(i, k, jj, v);
                    set(jj, i, k, v);
                    set(jj, k, i, v);
                    set(k, i, jj, v);
                    set(k, jj, i, v);
                }
                // Later pair coincident: t1 ~ t2 > t3.
                let hi = -gd[i].dot(&r[jj]);
                set(i, i, jj, hi);
                set(i, jj, i, hi);
                set(jj, i, i, hi);
                // Earlier pair coincident: t1 > t2 ~ t3.
                let lo = -g[i].dot(&rd[jj]);
                set(i, jj, jj, lo);
                set(jj, i, jj, lo);
                set(jj, jj, i, lo);
            }
            set(i, i, i, -3.0 * w.dot(&(&cu[i] * &problem.n0)));
        }
        Some(k3)
    } else {
        None
    };

    ExpansionCoefficients {
        kind,
        center,
        order,
        c,
        b,
        j,
        k3,
    }
}

/// Dyson coefficients of the rotating-frame landscape around `s = 0`.
pub fn dyson_coefficients(
    problem: &ControlProblem,
    t: f64,
    order: usize,
    l: usize,
) -> Result<ExpansionCoefficients> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidParameter(format!(
            "Dyson order must be 1..3, got {order}"
        )));
    }
    let center = Protocol::constant(t, l, 0.0)?;
    Ok(coefficients_at(problem, center, order, ExpansionKind::Dyson))
}

/// Taylor coefficients of the exact landscape around an arbitrary center.
///
/// `t` and `l` must match the center protocol; they are accepted separately
/// so call sites state the discretization they expect.
pub fn taylor_coefficients_at(
    problem: &ControlProblem,
    center: &Protocol,
    t: f64,
    order: usize,
    l: usize,
) -> Result<ExpansionCoefficients> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidParameter(format!(
            "Taylor order must be 1..2, got {order}"
        )));
    }
    if (t - center.duration()).abs() > 1e-12 * t.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "requested T = {t} but center has T = {}",
            center.duration()
        )));
    }
    if l != center.steps() {
        return Err(Error::DimensionMismatch {
            expected: center.steps(),
            got: l,
        });
    }
    Ok(coefficients_at(
        problem,
        center.clone(),
        order,
        ExpansionKind::Taylor,
    ))
}

/// Evaluates the truncated landscape at a protocol with the same grid.
pub fn evaluate_truncated(coeffs: &ExpansionCoefficients, protocol: &Protocol) -> Result<f64> {
    let l = coeffs.l();
    if protocol.steps() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: protocol.steps(),
        });
    }
    let q = coeffs.t() / l as f64;
    let ds: Vec<f64> = protocol
        .values()
        .iter()
        .zip(coeffs.center.values())
        .map(|(&s, &c)| s - c)
        .collect();
    let mut acc = coeffs.c;
    for i in 0..l {
        acc += q * coeffs.b[i] * ds[i];
    }
    if coeffs.order >= 2 {
        let mut quad = 0.0;
        for i in 0..l {
            let mut row = 0.0;
            for jj in 0..l {
                row += coeffs.j[(i, jj)] * ds[jj];
            }
            quad += ds[i] * row;
        }
        acc += 0.5 * q * q * quad;
    }
    if let Some(k3) = &coeffs.k3 {
        let mut cubic = 0.0;
        for i in 0..l {
            for jj in 0..l {
                let dij = ds[i] * ds[jj];
                if dij == 0.0 {
                    continue;
                }
                let base = (i * l + jj) * l;
                let mut inner = 0.0;
                for k in 0..l {
                    inner += k3[base + k] * ds[k];
                }
                cubic += dij * inner;
            }
        }
        acc += q * q * q * cubic / 6.0;
    }
    Ok(acc)
}

/// Magnus terms of the rotating-frame propagator.
#[derive(Clone, Debug)]
pub struct MagnusStack {
    /// `Omega_1 .. Omega_order`, all antisymmetric.
    pub terms: Vec<DMatrix<f64>>,
}

/// Rotating-frame control insertions `s_i M0(mid_i)^T m1 M0(mid_i)` on step
/// midpoints.
fn rotated_insertions(problem: &ControlProblem, protocol: &Protocol) -> Vec<DMatrix<f64>> {
    let dt = protocol.dt();
    let half = linalg::expm(&(&problem.m0 * (0.5 * dt)));
    let full = &half * &half;
    let mut cur = half;
    let mut out = Vec::with_capacity(protocol.steps());
    for &s in protocol.values() {
        out.push(cur.transpose() * &problem.m1 * &cur * s);
        cur = &full * cur;
    }
    out
}

/// Magnus expansion terms `Omega_1..Omega_order` of `M'(T)`, computed with
/// prefix/suffix reorganizations of the nested time-ordered sums (linear in
/// `L`); a direct nested-sum oracle pins the reorganization in tests.
pub fn magnus_terms(
    problem: &ControlProblem,
    protocol: &Protocol,
    order: usize,
) -> Result<MagnusStack> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidParameter(format!(
            "Magnus order must be 1..3, got {order}"
        )));
    }
    let dt = protocol.dt();
    let n = problem.dual_dim;
    let a = rotated_insertions(problem, protocol);

    let mut terms = Vec::with_capacity(order);
    // Omega_1 = sum_i a_i dt.
    let mut omega1 = DMatrix::zeros(n, n);
    for ai in &a {
        omega1 += ai * dt;
    }
    terms.push(omega1);

    if order >= 2 {
        // Omega_2 = (1/2) sum_{i>j} [a_i, a_j] dt^2 = (1/2) sum_i [a_i dt, P_i].
        let mut p = DMatrix::<f64>::zeros(n, n);
        let mut omega2 = DMatrix::<f64>::zeros(n, n);
        for ai in &a {
            let aidt = ai * dt;
            omega2 += 0.5 * linalg::commutator(&aidt, &p);
            p += aidt;
        }
        terms.push(omega2);
    }

    if order >= 3 {
        // Omega_3 = (1/6) sum_{i>j>k} ([a_i,[a_j,a_k]] + [a_k,[a_j,a_i]]) dt^3.
        // First piece: Q_i = sum_{j<i} [a_j dt, P_j] dt accumulates the inner
        // double sum; second piece groups over the middle index j with prefix
        // P_j and suffix S_j.
        let mut p = DMatrix::<f64>::zeros(n, n);
        let mut q = DMatrix::<f64>::zeros(n, n);
        let mut t_a = DMatrix::<f64>::zeros(n, n);
        for ai in &a {
            let aidt = ai * dt;
            t_a += linalg::commutator(&aidt, &q);
            q += linalg::commutator(&aidt, &p);
            p += aidt;
        }
        let total = p.clone();
        let mut t_b = DMatrix::<f64>::zeros(n, n);
        let mut prefix = DMatrix::<f64>::zeros(n, n);
        for ai in &a {
            let aidt = ai * dt;
            let suffix = &total - &prefix - &aidt;
            t_b += linalg::commutator(&prefix, &linalg::commutator(&aidt, &suffix));
            prefix += aidt;
        }
        terms.push((t_a + t_b) / 6.0);
    }

    Ok(MagnusStack { terms })
}

/// Lab-frame Magnus-truncated propagator `M0(T) exp(Omega_1 + .. + Omega_k)`.
/// Orthogonal at every order because each term is antisymmetric.
pub fn magnus_propagator(
    problem: &ControlProblem,
    protocol: &Protocol,
    order: usize,
) -> Result<Propagator> {
    let stack = magnus_terms(problem, protocol, order)?;
    let n = problem.dual_dim;
    let mut sum = DMatrix::zeros(n, n);
    for t in &stack.terms {
        sum += t;
    }
    let matrix = linalg::expm(&(&problem.m0 * protocol.duration())) * linalg::expm(&sum);
    Ok(Propagator { matrix })
}

/// Cumulant terms of `log(1 - I)` expanded on matrix moments of `sigma`:
/// returns `[kappa_0, kappa_1/1!, .., kappa_order/order!]`, whose sum
/// exponentiates to the resummed overlap.
///
/// Fails when `2/d + n_star'(T).n0 <= 0`, where the logarithm of the
/// zeroth-order overlap leaves the principal branch.
pub fn cumulants_from_matrix(
    problem: &ControlProblem,
    t: f64,
    sigma: &DMatrix<f64>,
    cumulant_order: usize,
) -> Result<Vec<f64>> {
    if cumulant_order == 0 || cumulant_order > 5 {
        return Err(Error::InvalidParameter(format!(
            "cumulant order must be 1..5, got {cumulant_order}"
        )));
    }
    let n_star_rot = linalg::expm(&(&problem.m0 * t)).transpose() * &problem.n_star;
    let d = problem.effective_dim as f64;
    let a0 = 1.0 / d + 0.5 * n_star_rot.dot(&problem.n0);
    if 2.0 * a0 <= 0.0 {
        return Err(Error::CumulantBranch(2.0 / d + n_star_rot.dot(&problem.n0)));
    }
    // Moments a_m = n_star' . sigma^m n0 / (2 m!).
    let mut moments = vec![a0];
    let mut v = problem.n0.clone();
    let mut factorial = 1.0;
    for m in 1..=cumulant_order {
        v = sigma * v;
        factorial *= m as f64;
        moments.push(0.5 * n_star_rot.dot(&v) / factorial);
    }
    // Power-series logarithm: c_m = (a_m - sum_{k<m} (k/m) c_k a_{m-k}) / a0.
    let mut cumulants = vec![a0.ln()];
    for m in 1..=cumulant_order {
        let mut acc = moments[m];
        for k in 1..m {
            acc -= (k as f64 / m as f64) * cumulants[k] * moments[m - k];
        }
        cumulants.push(acc / a0);
    }
    Ok(cumulants)
}

/// Cumulant-resummed infidelity: the overlap series in powers of the
/// truncated Magnus sum is re-expanded as `1 - exp(sum of cumulants)`.
pub fn cumulant_infidelity(
    problem: &ControlProblem,
    protocol: &Protocol,
    magnus_order: usize,
    cumulant_order: usize,
) -> Result<f64> {
    let stack = magnus_terms(problem, protocol, magnus_order)?;
    let n = problem.dual_dim;
    let mut sigma = DMatrix::zeros(n, n);
    for t in &stack.terms {
        sigma += t;
    }
    let cumulants = cumulants_from_matrix(problem, protocol.duration(), &sigma, cumulant_order)?;
    Ok(1.0 - cumulants.iter().sum::<f64>().exp())
}

/// Horizon below which the Magnus series is guaranteed to converge:
/// `T_mag = pi / C` with the generator bound `C = max |(m1)_ij|` (the entry
/// norm reproduces the quoted radii for both frozen problems).
pub fn magnus_convergence_radius(problem: &ControlProblem) -> f64 {
    std::f64::consts::PI / linalg::max_abs(&problem.m1)
}

/// Conservative Dyson truncation order for horizon `t`: `ceil(t C)`, at
/// least 1.
pub fn dyson_truncation_estimate(problem: &ControlProblem, t: f64) -> Result<usize> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {t}"
        )));
    }
    let c = linalg::max_abs(&problem.m1);
    Ok(((t * c).ceil() as usize).max(1))
}
