//! Linear and quadratic stability of protocol families, adiabatic tracing of
//! the optimal window protocol, and transition detection.
//!
//! The traced family `s_delta` is bang(+1) / window(0) / bang(-1) with a
//! centered window of half-width `delta`. Two constructions exist: the
//! exported tri-level protocol (grid cells on window edges assigned to the
//! window) and a fractional-edge variant whose two edge cells carry the
//! partial bang coverage, making the protocol - and every stability measure
//! built on it - continuous in `delta`. Tracing bisects the signed window
//! balance `B(delta)` (the window-signed aggregate of the gradient kernel),
//! then classifies each root as stable when the unsigned violation measure
//! `V(delta)` collapses (stable and unstable roots separate by many decades).
//!
//! Zero tolerances are scale-relative: `tau_b = 1e-8 max|b|` for pointwise
//! interior optimality, `tau_lambda = 1e-6 lambda_max` for vanishing
//! eigenvalues, and a `1e-4` relative ceiling on `V` for traced-root
//! acceptance (chosen inside the multi-decade gap between branches).

use nalgebra::{DMatrix, DVector};
use std::io::Write;

use crate::error::{Error, Result};
use crate::expansions::taylor_coefficients_at;
use crate::linalg::symmetric_eigen_desc;
use crate::problem::{infidelity_exact, ControlProblem, Protocol};

/// Relative ceiling on the violation measure under which a traced root
/// counts as linearly stable.
const V_STABLE_REL: f64 = 1e-4;

/// Eigenvalue threshold (absolute, infidelity per squared control) above
/// which a mode counts as stiff when counting `n_plus`.
pub const STIFF_THRESHOLD: f64 = 1e-3;

/// Outcome of the pointwise first-order optimality check.
#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub stable: bool,
    pub violating_indices: Vec<usize>,
    /// Largest pointwise violation magnitude (kernel units).
    pub max_violation: f64,
}

/// Pointwise linear stability of `center` against the gradient kernel `b`:
/// interior points need `b_i = 0` (within `1e-8 max|b|`), saturated points
/// need the kernel to push outward (`-sgn(b_i) = sgn(s_i)`).
pub fn linear_stability(b: &DVector<f64>, center: &Protocol) -> Result<StabilityReport> {
    if b.len() != center.steps() {
        return Err(Error::DimensionMismatch {
            expected: center.steps(),
            got: b.len(),
        });
    }
    let tau = 1e-8 * b.amax();
    let mut violating = Vec::new();
    let mut max_violation = 0.0_f64;
    for (i, (&bi, &si)) in b.iter().zip(center.values()).enumerate() {
        let interior = si.abs() < 1.0 - 1e-12;
        let violation = if interior {
            bi.abs()
        } else {
            (si * bi).max(0.0)
        };
        if violation > tau {
            violating.push(i);
            max_violation = max_violation.max(violation);
        }
    }
    Ok(StabilityReport {
        stable: violating.is_empty(),
        violating_indices: violating,
        max_violation,
    })
}

/// Eigen-decomposition of the scaled Hessian kernel `(1/L) J`.
#[derive(Clone, Debug)]
pub struct HessianSpectrum {
    /// Descending eigenvalues of `(1/L) J`.
    pub eigenvalues: DVector<f64>,
    /// Columns are eigenfunctions, orthonormal under `(1/L) sum f_i g_i`.
    pub eigenfunctions: DMatrix<f64>,
    pub t: Option<f64>,
    pub center: Option<Protocol>,
}

impl HessianSpectrum {
    pub fn l(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of stiff modes: eigenvalues above the fixed 1e-3 threshold.
    pub fn stiff_count(&self) -> usize {
        self.eigenvalues.iter().filter(|&&v| v > STIFF_THRESHOLD).count()
    }

    /// Overlap of eigenfunction `n` with its own reflection `i -> L+1-i`;
    /// +1 for even parity about T/2, -1 for odd.
    pub fn reflection_overlap(&self, n: usize) -> f64 {
        let l = self.l();
        let f = self.eigenfunctions.column(n);
        let mut acc = 0.0;
        for i in 0..l {
            acc += f[i] * f[l - 1 - i];
        }
        acc / l as f64
    }
}

/// Symmetric eigen-decomposition of `(1/L) J`, eigenvalues descending,
/// eigenfunctions normalized so `(1/L) sum f^(n)_i f^(m)_i = delta_nm`.
pub fn hessian_spectrum(j: &DMatrix<f64>, l: usize) -> HessianSpectrum {
    let scaled = j / l as f64;
    let (eigenvalues, mut vectors) = symmetric_eigen_desc(&scaled);
    vectors *= (l as f64).sqrt();
    HessianSpectrum {
        eigenvalues,
        eigenfunctions: vectors,
        t: None,
        center: None,
    }
}

/// Hessian spectrum of the exact landscape at `center` (order-2 expansion),
/// carrying the evaluation context.
pub fn hessian_spectrum_at(problem: &ControlProblem, center: &Protocol) -> Result<HessianSpectrum> {
    let coeffs = taylor_coefficients_at(problem, center, center.duration(), 2, center.steps())?;
    let mut spectrum = hessian_spectrum(&coeffs.j, center.steps());
    spectrum.t = Some(center.duration());
    spectrum.center = Some(center.clone());
    Ok(spectrum)
}

fn check_delta_range(t: f64, delta: f64) -> Result<()> {
    if !(0.0..=0.5 * t + 1e-15).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "window half-width {delta} outside [0, T/2] for T = {t}"
        )));
    }
    Ok(())
}

/// Exported window protocol: +1 before the window, 0 inside, -1 after.
/// Cells whose midpoint lands exactly on a window edge join the window.
pub fn s_delta(t: f64, delta: f64, l: usize) -> Result<Protocol> {
    check_delta_range(t, delta)?;
    let dt = t / l as f64;
    let lo = 0.5 * t - delta;
    let hi = 0.5 * t + delta;
    let values = (0..l)
        .map(|i| {
            let mid = (i as f64 + 0.5) * dt;
            if mid < lo {
                1.0
            } else if mid > hi {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    Protocol::new(t, values)
}

/// Fractional-edge window protocol: the two cells straddling the window
/// edges carry their partial bang coverage, so the protocol is continuous
/// in `delta`. Used by the tracer; exact bang/window cells match [`s_delta`].
pub fn s_delta_fractional(t: f64, delta: f64, l: usize) -> Result<Protocol> {
    check_delta_range(t, delta)?;
    let dt = t / l as f64;
    let lo = 0.5 * t - delta;
    let hi = 0.5 * t + delta;
    let values = (0..l)
        .map(|i| {
            let a = i as f64 * dt;
            let b = a + dt;
            // Coverage fractions of the three regions within this cell.
            let left = ((lo - a).min(dt)).max(0.0) / dt;
            let right = ((b - hi).min(dt)).max(0.0) / dt;
            left - right
        })
        .collect();
    Protocol::new(t, values)
}

/// Signed window balance `B`, unsigned violation measure `V`, and the
/// kernel scale `max(1, dt sum |b|)` for the fractional window protocol.
///
/// `B` aggregates the gradient kernel over the window with the sign of
/// `T/2 - t` and crosses zero at the traced `delta`; `V` integrates interior
/// violations `|b|` over the window plus outward-pushing kernel over the
/// bangs, and collapses only at stable roots.
pub fn window_measures(
    problem: &ControlProblem,
    t: f64,
    delta: f64,
    l: usize,
) -> Result<(f64, f64, f64)> {
    let protocol = s_delta_fractional(t, delta, l)?;
    let coeffs = taylor_coefficients_at(problem, &protocol, t, 1, l)?;
    let dt = protocol.dt();
    let lo = 0.5 * t - delta;
    let hi = 0.5 * t + delta;
    let mut balance = 0.0;
    let mut violation = 0.0;
    let mut scale = 0.0;
    for i in 0..l {
        let a = i as f64 * dt;
        let b_edge = a + dt;
        let mid = a + 0.5 * dt;
        let left = ((lo - a).min(dt)).max(0.0) / dt;
        let right = ((b_edge - hi).min(dt)).max(0.0) / dt;
        let win = (1.0 - left - right).max(0.0);
        let bi = coeffs.b[i];
        balance += dt * win * bi * (0.5 * t - mid).signum();
        violation += dt * win * bi.abs();
        violation += dt * (left * bi.max(0.0) + right * (-bi).max(0.0));
        scale += dt * bi.abs();
    }
    Ok((balance, violation, scale.max(1.0)))
}

/// One traced branch at a horizon: window half-width and the infidelity of
/// the fractional-edge protocol realizing it.
#[derive(Clone, Copy, Debug)]
pub struct DeltaBranch {
    pub delta: f64,
    pub infidelity: f64,
}

#[derive(Clone, Debug)]
pub struct DeltaPoint {
    pub t: f64,
    pub branches: Vec<DeltaBranch>,
}

/// Traced optimal-window curve; `termination` explains why tracing stopped
/// before exhausting the grid (no stable window protocol exists beyond the
/// symmetry-breaking horizon).
#[derive(Clone, Debug)]
pub struct DeltaCurve {
    pub points: Vec<DeltaPoint>,
    pub termination: Option<String>,
}

/// Stable roots of the window balance at fixed horizon: scans `[0, T/2]`,
/// brackets every sign change of `B`, bisects each, and keeps roots whose
/// violation measure is below the stability ceiling. `delta = 0` is handled
/// by the saturated-protocol criterion (kernel anti-aligned with the bangs).
fn stable_deltas(problem: &ControlProblem, t: f64, l: usize, scan: usize) -> Result<Vec<f64>> {
    let mut roots = Vec::new();

    // Pure bang-bang end of the family.
    let bang = s_delta_fractional(t, 0.0, l)?;
    let coeffs = taylor_coefficients_at(problem, &bang, t, 1, l)?;
    let worst = coeffs
        .b
        .iter()
        .zip(bang.values())
        .map(|(&bi, &si)| si * bi)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst <= 1e-12 * coeffs.b.amax().max(1e-300) {
        roots.push(0.0);
    }

    // Interior windows: bracket sign changes of the balance. B(0) = 0
    // identically (zero-measure window), so the scan seeds from a tiny
    // positive delta to keep roots near the bang end bracketable.
    let half = 0.5 * t;
    let mut prev = None;
    for k in 0..=scan {
        let delta = if k == 0 {
            half * 1e-7
        } else {
            half * k as f64 / scan as f64
        };
        let (balance, violation, scale) = window_measures(problem, t, delta, l)?;
        if let Some((d_prev, b_prev)) = prev {
            if balance == 0.0 && violation < V_STABLE_REL * scale {
                roots.push(delta);
            } else if b_prev * balance < 0.0 {
                let (mut a, mut fa, mut b) = (d_prev, b_prev, delta);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    let (fm, _, _) = window_measures(problem, t, m, l)?;
                    if fa * fm <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                        fa = fm;
                    }
                }
                let root = 0.5 * (a + b);
                let (_, violation, scale) = window_measures(problem, t, root, l)?;
                if violation < V_STABLE_REL * scale {
                    roots.push(root);
                }
            }
        }
        prev = Some((delta, balance));
    }
    Ok(roots)
}

/// Traces the stable window family over an increasing horizon grid.
pub fn trace_delta(problem: &ControlProblem, t_grid: &[f64], l: usize) -> Result<DeltaCurve> {
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "horizon grid must be strictly increasing".into(),
        ));
    }
    let mut points = Vec::new();
    let mut termination = None;
    for &t in t_grid {
        let deltas = stable_deltas(problem, t, l, 48)?;
        if deltas.is_empty() {
            termination = Some(format!(
                "no linearly stable window protocol at T = {t:.6}: traced family ends \
                 (symmetry-breaking horizon crossed)"
            ));
            break;
        }
        let branches = deltas
            .into_iter()
            .map(|delta| {
                let p = s_delta_fractional(t, delta, l)?;
                Ok(DeltaBranch {
                    delta,
                    infidelity: infidelity_exact(problem, &p),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        points.push(DeltaPoint { t, branches });
    }
    Ok(DeltaCurve {
        points,
        termination,
    })
}

/// Transition points and critical-mode diagnostics extracted from tracing.
#[derive(Clone, Debug)]
pub struct Transitions {
    /// First linear instability of the pure bang-bang protocol.
    pub t_c: Option<f64>,
    /// Bifurcation of the traced window family (quadratic instability).
    pub t_qsl: Option<f64>,
    /// Horizon where tracing terminates with no stable window left.
    pub t_sb: Option<f64>,
    /// Stiff-mode count just past the bifurcation (eigenvalues above 1e-3).
    pub n_plus: Option<usize>,
    /// Whether the critical eigenfunction is reflection-even about T/2.
    pub critical_parity_even: Option<bool>,
}

fn bang_instability(problem: &ControlProblem, t: f64, l: usize) -> Result<f64> {
    let bang = s_delta_fractional(t, 0.0, l)?;
    let coeffs = taylor_coefficients_at(problem, &bang, t, 1, l)?;
    Ok(coeffs
        .b
        .iter()
        .zip(bang.values())
        .map(|(&bi, &si)| si * bi)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Locates T_c (bang instability onset), then either the window-family
/// bifurcation (T_QSL, with stiff-mode count) or the tracing termination
/// (T_sb, with the parity of the critical eigenfunction), whichever the
/// grid exhibits. Unresolved transitions stay `None`.
pub fn detect_transitions(
    problem: &ControlProblem,
    t_grid: &[f64],
    l: usize,
) -> Result<Transitions> {
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "need a strictly increasing horizon grid with at least two points".into(),
        ));
    }

    // T_c: bisection on the worst bang-aligned kernel value.
    let mut t_c = None;
    let mut prev = (t_grid[0], bang_instability(problem, t_grid[0], l)?);
    for &t in &t_grid[1..] {
        let cur = (t, bang_instability(problem, t, l)?);
        if prev.1 <= 0.0 && cur.1 > 0.0 {
            let (mut a, mut b) = (prev.0, cur.0);
            for _ in 0..50 {
                let m = 0.5 * (a + b);
                if bang_instability(problem, m, l)? > 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            t_c = Some(0.5 * (a + b));
            break;
        }
        prev = cur;
    }

    // Count stable branches along the grid to catch bifurcation or
    // termination of the traced family.
    let mut t_qsl = None;
    let mut t_sb = None;
    let mut prev_t = t_grid[0];
    let mut prev_count = stable_deltas(problem, prev_t, l, 48)?.len();
    for &t in &t_grid[1..] {
        let count = stable_deltas(problem, t, l, 48)?.len();
        if prev_count == 1 && count >= 2 && t_qsl.is_none() {
            let (mut a, mut b) = (prev_t, t);
            for _ in 0..30 {
                let m = 0.5 * (a + b);
                if stable_deltas(problem, m, l, 48)?.len() >= 2 {
                    b = m;
                } else {
                    a = m;
                }
            }
            t_qsl = Some(0.5 * (a + b));
        }
        if prev_count >= 1 && count == 0 && t_sb.is_none() {
            let (mut a, mut b) = (prev_t, t);
            for _ in 0..30 {
                let m = 0.5 * (a + b);
                if stable_deltas(problem, m, l, 48)?.is_empty() {
                    b = m;
                } else {
                    a = m;
                }
            }
            t_sb = Some(0.5 * (a + b));
        }
        prev_t = t;
        prev_count = count;
    }

    // Critical-mode diagnostics at the located transition.
    let mut n_plus = None;
    let mut critical_parity_even = None;
    if let (Some(tq), Some(tc)) = (t_qsl, t_c) {
        let t_probe = tq + 0.01;
        let center = s_delta_fractional(t_probe, 0.5 * (t_probe - tc), l)?;
        let spectrum = hessian_spectrum_at(problem, &center)?;
        n_plus = Some(spectrum.stiff_count());
        let critical = nearest_zero_mode(&spectrum);
        critical_parity_even = Some(spectrum.reflection_overlap(critical) > 0.99);
    } else if let Some(ts) = t_sb {
        let t_probe = ts - 1e-3;
        if let Some(&delta) = stable_deltas(problem, t_probe, l, 48)?.last() {
            let center = s_delta_fractional(t_probe, delta, l)?;
            let spectrum = hessian_spectrum_at(problem, &center)?;
            let critical = nearest_zero_mode(&spectrum);
            critical_parity_even = Some(spectrum.reflection_overlap(critical) > 0.99);
        }
    }

    Ok(Transitions {
        t_c,
        t_qsl,
        t_sb,
        n_plus,
        critical_parity_even,
    })
}

/// Index of the eigenvalue closest to zero.
fn nearest_zero_mode(spectrum: &HessianSpectrum) -> usize {
    let mut best = 0;
    for (i, &v) in spectrum.eigenvalues.iter().enumerate() {
        if v.abs() < spectrum.eigenvalues[best].abs() {
            best = i;
        }
    }
    best
}

/// Linear interpolation of a protocol onto a finer uniform grid: cell
/// midpoint values interpolate piecewise-linearly between the original
/// midpoints (flat extension past the first and last).
pub fn interpolate_protocol(protocol: &Protocol, l_new: usize) -> Result<Protocol> {
    let l = protocol.steps();
    let t = protocol.duration();
    let values = protocol.values();
    let new_values = (0..l_new)
        .map(|j| {
            let tau = (j as f64 + 0.5) * t / l_new as f64;
            let pos = tau / (t / l as f64) - 0.5;
            if pos <= 0.0 {
                values[0]
            } else if pos >= (l - 1) as f64 {
                values[l - 1]
            } else {
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        })
        .collect();
    Protocol::new(t, new_values)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV: `T,branch,delta,infidelity`, one row per traced branch.
pub fn write_delta_curve_csv<W: Write>(curve: &DeltaCurve, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "T,branch,delta,infidelity")?;
    for point in &curve.points {
        for (k, branch) in point.branches.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                fmt(point.t),
                k,
                fmt(branch.delta),
                fmt(branch.infidelity)
            )?;
        }
    }
    Ok(())
}

/// CSV: `T,n,lambda`, eigenvalues in stored (descending) order.
pub fn write_spectrum_csv<W: Write>(
    t: f64,
    spectrum: &HessianSpectrum,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "T,n,lambda")?;
    for (n, &lambda) in spectrum.eigenvalues.iter().enumerate() {
        writeln!(out, "{},{},{}", fmt(t), n + 1, fmt(lambda))?;
    }
    Ok(())
}

/// CSV: `name,T_value,n_plus` for every resolved transition.
pub fn write_transitions_csv<W: Write>(
    transitions: &Transitions,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "name,T_value,n_plus")?;
    let n_plus = transitions
        .n_plus
        .map(|n| n.to_string())
        .unwrap_or_default();
    if let Some(t) = transitions.t_c {
        writeln!(out, "T_c,{},", fmt(t))?;
    }
    if let Some(t) = transitions.t_qsl {
        writeln!(out, "T_QSL,{},{n_plus}", fmt(t))?;
    }
    if let Some(t) = transitions.t_sb {
        writeln!(out, "T_sb,{},{n_plus}", fmt(t))?;
    }
    Ok(())
}
