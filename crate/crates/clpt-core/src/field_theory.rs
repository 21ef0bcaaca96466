//! Level-set statistics of the quadratic landscape in eigenmode space.
//!
//! Around the analytic center of the optimal window family the landscape is,
//! to second order, `I(x) = c + sum_n b_n x_n + (1/2) sum_n lambda_n x_n^2`
//! in coordinates of the Hessian eigenbasis, with the horizon factors
//! absorbed into `b_n` and `lambda_n`. Beyond the speed limit the
//! zero-infidelity level set of this model carries a partition function
//! whose saddle point yields closed-form predictions for the continuous
//! order parameter, for the per-mode moments of level-set samples, and for
//! the near-critical drift of the bang-bang overlap. The coarse-grained
//! counting entropies that weight the partition sum are also provided here.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::expansions::{taylor_coefficients_at, ExpansionCoefficients};
use crate::problem::{ControlProblem, Protocol};
use crate::stability::{hessian_spectrum, s_delta_fractional, HessianSpectrum};

/// Default boundary stiffness: a bounded flat step measure and the Gaussian
/// surrogate `exp(-(3/2) s^2)` share mean 0 and second moment 1/3, which
/// fixes the stiffness at 3.
pub const KAPPA_BOUNDARY: f64 = 3.0;

/// Modes with `|lambda_n|` below this threshold are treated as exactly
/// degenerate when completing the square: their offset `x1_n` is pinned to
/// zero and they are dropped from the restricted sum defining the level
/// constant `I` (the exclusion is recorded on the result).
pub const TAU_LAMBDA_DEFAULT: f64 = 1e-12;

/// Hard guard against forming `b_n / lambda_n` from pure rounding noise.
const X1_GUARD: f64 = 1e-14;

/// Modes whose displacement `dx_n` is this far below the largest one are
/// symmetry spectators: they contribute nothing to the partition function,
/// and their poles must not constrain the saddle bracket.
const DX_SPECTATOR: f64 = 1e-9;

/// Bang-bang stiffness `kappa = alpha N / L` for a counting measure over
/// `N`-site sign patterns coarse-grained onto `L` cells. `alpha = 1`
/// reproduces the curvature of the Shannon density around `s = 0`.
pub fn kappa_bang_bang(alpha: f64, n_sites: f64, l: usize) -> f64 {
    alpha * n_sites / l as f64
}

/// Quadratic landscape around a window-family center, reduced to the
/// Hessian eigenbasis and completed to `I(x) = I + (1/2) sum_n
/// lambda_n (x_n + x1_n)^2` wherever the spectrum permits.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// Eigenvalues with the horizon factors absorbed, descending.
    pub lambda: DVector<f64>,
    /// Linear coefficients projected onto the eigenbasis, same absorption.
    pub b: DVector<f64>,
    /// Eigenbasis coordinates of the center protocol.
    pub x0: DVector<f64>,
    /// Completed-square offsets `b_n / lambda_n` (zero for excluded modes).
    pub x1: DVector<f64>,
    /// Orientation applied to each eigenmode (multiply the spectrum's
    /// eigenfunction columns by these to recover the basis the coordinates
    /// refer to). Fixed so that `x0_n >= 0`, which keeps the projections
    /// continuous along horizon grids where the raw eigenvector sign is
    /// arbitrary.
    pub signs: DVector<f64>,
    /// Modes excluded from the completed square because `|lambda_n|` fell
    /// below the degeneracy threshold.
    pub excluded: Vec<usize>,
    /// Infidelity at the center.
    pub c: f64,
    /// Level constant: `c - (1/2) sum b_n^2 / lambda_n` over retained modes.
    pub i_const: f64,
    /// Number of persistently positive (stiff) eigenvalues.
    pub n_plus: usize,
    /// Boundary/entropy stiffness entering the partition function.
    pub kappa: f64,
    /// Horizon of the underlying protocol family.
    pub t: f64,
}

impl SpectralData {
    pub fn l(&self) -> usize {
        self.lambda.len()
    }

    /// Eigenvalues with the horizon absorption undone (per unit horizon²).
    pub fn lambda_raw(&self) -> DVector<f64> {
        &self.lambda / (self.t * self.t)
    }

    /// Shifted center coordinates `x0_n - x1_n - k_n/(kappa L)` entering the
    /// partition function; `k` may be empty (all zeros).
    fn delta_x(&self, k: &[f64]) -> Result<DVector<f64>> {
        let l = self.l();
        if !k.is_empty() && k.len() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: k.len(),
            });
        }
        let scale = 1.0 / (self.kappa * l as f64);
        Ok(DVector::from_fn(l, |n, _| {
            let shift = if k.is_empty() { 0.0 } else { k[n] * scale };
            self.x0[n] - self.x1[n] - shift
        }))
    }
}

/// Window protocol at the analytic center of the optimal family,
/// half-width `delta_0(T) = (T - T_c)/2`. The edge cells carry fractional
/// bang coverage so the family — and everything derived from it here — stays
/// continuous in `T` instead of aliasing the cell grid.
pub fn window_center(t: f64, t_c: f64, l: usize) -> Result<Protocol> {
    if t < t_c {
        return Err(Error::InvalidParameter(format!(
            "window center undefined below the critical horizon: T = {t} < T_c = {t_c}"
        )));
    }
    s_delta_fractional(t, 0.5 * (t - t_c), l)
}

/// Reduces the order-2 landscape at `coeffs.center` to eigenmode
/// coordinates, absorbing the horizon factors, and completes the square.
///
/// The expansion and the spectrum must describe the same center; modes with
/// `|lambda_n| < tau_lambda` are excluded from the completed square and
/// recorded as such.
pub fn build_spectral_data(
    coeffs: &ExpansionCoefficients,
    spectrum: &HessianSpectrum,
    kappa: f64,
    tau_lambda: f64,
) -> Result<SpectralData> {
    let l = coeffs.l();
    if spectrum.l() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: spectrum.l(),
        });
    }
    if coeffs.order < 2 {
        return Err(Error::InvalidParameter(format!(
            "spectral reduction needs an order-2 expansion, got order {}",
            coeffs.order
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "stiffness kappa must be positive, got {kappa}"
        )));
    }
    if !(tau_lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degeneracy threshold must be non-negative, got {tau_lambda}"
        )));
    }
    if let Some(ts) = spectrum.t {
        if (ts - coeffs.t()).abs() > 1e-12 * coeffs.t().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "expansion horizon {} and spectrum horizon {ts} differ",
                coeffs.t()
            )));
        }
    }
    if let Some(center) = &spectrum.center {
        let drift = center
            .values()
            .iter()
            .zip(coeffs.center.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if drift > 1e-12 {
            return Err(Error::InvalidParameter(
                "expansion and spectrum were taken around different centers".into(),
            ));
        }
    }

    let t = coeffs.t();
    let lf = l as f64;
    let lambda = &spectrum.eigenvalues * (t * t);
    let mut b = spectrum.eigenfunctions.transpose() * &coeffs.b * (t / lf);
    let center_vec = DVector::from_column_slice(coeffs.center.values());
    let mut x0 = spectrum.eigenfunctions.transpose() * center_vec / lf;

    // The eigen-solver's sign choice is arbitrary; orient each mode so the
    // center coordinate is non-negative (falling back to the linear
    // coefficient, then to the leading eigenfunction entry, for modes the
    // center does not touch).
    let mut signs = DVector::from_element(l, 1.0);
    for n in 0..l {
        let pick = if x0[n].abs() > 1e-10 {
            x0[n]
        } else if b[n].abs() > 1e-12 {
            b[n]
        } else {
            let col = spectrum.eigenfunctions.column(n);
            col[col.iamax()]
        };
        if pick < 0.0 {
            signs[n] = -1.0;
            b[n] = -b[n];
            x0[n] = -x0[n];
        }
    }

    let guard = tau_lambda.max(X1_GUARD);
    let mut excluded = Vec::new();
    let mut x1 = DVector::zeros(l);
    let mut square_sum = 0.0;
    for n in 0..l {
        if lambda[n].abs() < guard {
            excluded.push(n);
        } else {
            x1[n] = b[n] / lambda[n];
            square_sum += b[n] * b[n] / lambda[n];
        }
    }

    Ok(SpectralData {
        i_const: coeffs.c - 0.5 * square_sum,
        c: coeffs.c,
        n_plus: spectrum.stiff_count(),
        kappa,
        t,
        lambda,
        b,
        x0,
        x1,
        signs,
        excluded,
    })
}

/// Convenience pipeline: order-2 expansion at `center`, Hessian
/// eigen-decomposition, spectral reduction.
pub fn spectral_data_at(
    problem: &ControlProblem,
    center: &Protocol,
    kappa: f64,
    tau_lambda: f64,
) -> Result<SpectralData> {
    let coeffs = taylor_coefficients_at(problem, center, center.duration(), 2, center.steps())?;
    let mut spectrum = hessian_spectrum(&coeffs.j, center.steps());
    spectrum.t = Some(center.duration());
    spectrum.center = Some(center.clone());
    build_spectral_data(&coeffs, &spectrum, kappa, tau_lambda)
}

/// First two moments shared by the flat step measure on [-1, 1] and its
/// Gaussian surrogate `exp(-(3/2) s^2)`: mean 0, second moment 1/3.
pub fn gaussian_boundary_moments() -> (f64, f64) {
    (0.0, 1.0 / 3.0)
}

/// Exponent of the level-set partition function restricted to the imaginary
/// axis: `Omega(y) = kappa (-I y + (1/2) sum_n dx_n^2 / (1 + lambda_n y))`
/// with `dx_n = x0_n - x1_n - k_n/(kappa L)`.
///
/// `k` may be empty (treated as all zeros). Evaluation at a pole
/// `y = -1/lambda_n` is signaled as a numerical error.
pub fn omega(y: f64, data: &SpectralData, k: &[f64]) -> Result<f64> {
    let dx = data.delta_x(k)?;
    let mut sum = 0.0;
    for n in 0..data.l() {
        let denom = 1.0 + data.lambda[n] * y;
        if denom.abs() <= 1e-12 * (1.0 + (data.lambda[n] * y).abs()) {
            return Err(Error::Numerical(format!(
                "omega evaluated at the pole y = -1/lambda_{n}"
            )));
        }
        sum += dx[n] * dx[n] / denom;
    }
    Ok(data.kappa * (-data.i_const * y + 0.5 * sum))
}

/// Saddle point of the level-set partition function on the imaginary axis.
#[derive(Clone, Debug)]
pub struct SaddlePoint {
    /// Minimizer of the convex `Omega(y)` on the open bracket.
    pub y_star: f64,
    /// Open interval `(-1/lambda_+, -1/lambda_-)` between the poles of the
    /// largest-modulus positive and negative eigenvalues.
    pub bracket: (f64, f64),
    /// Stationarity residual `I + (1/2) sum lambda_n dx_n^2/(1+lambda_n y)^2`
    /// at `y_star`.
    pub residual: f64,
}

/// Displacements together with the spectator mask: modes whose displacement
/// is negligible against the largest one drop out of the partition function
/// and must not constrain the saddle (their poles would otherwise pin the
/// bracket on pure rounding noise).
fn active_displacements(data: &SpectralData, k: &[f64]) -> Result<(DVector<f64>, Vec<bool>)> {
    let dx = data.delta_x(k)?;
    let dx_max = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let active = dx
        .iter()
        .map(|v| v.abs() > DX_SPECTATOR * dx_max && dx_max > 0.0)
        .collect();
    Ok((dx, active))
}

/// Stationarity defect `g(y) = I + (1/2) sum_n lambda_n dx_n^2 /
/// (1 + lambda_n y)^2`; `Omega'(y) = -kappa g(y)`, so `g` decreases
/// monotonically from +inf to -inf across the bracket.
fn saddle_defect(
    y: f64,
    data: &SpectralData,
    dx: &DVector<f64>,
    active: &[bool],
) -> (f64, f64, f64) {
    let mut g = data.i_const;
    let mut slope = 0.0;
    let mut scale = data.i_const.abs();
    for n in 0..data.l() {
        if !active[n] {
            continue;
        }
        let denom = 1.0 + data.lambda[n] * y;
        let term = 0.5 * data.lambda[n] * dx[n] * dx[n] / (denom * denom);
        g += term;
        scale += term.abs();
        slope -= 2.0 * term * data.lambda[n] / denom;
    }
    (g, slope, scale)
}

/// Solves the saddle-point condition `Omega'(y_star) = 0` by safeguarded
/// Newton iteration on the open pole bracket.
///
/// Requires a sign-mixed spectrum among the displaced modes (at least one
/// positive and one negative eigenvalue); below the speed limit, where all
/// retained eigenvalues share a sign, the level-set formula does not apply
/// and an error is returned.
pub fn solve_saddle(data: &SpectralData, k: &[f64]) -> Result<SaddlePoint> {
    let (dx, active) = active_displacements(data, k)?;
    let lambda_pos = data
        .lambda
        .iter()
        .zip(&active)
        .filter(|&(&v, &a)| a && v > 0.0)
        .map(|(&v, _)| v)
        .fold(0.0, f64::max);
    let lambda_neg = data
        .lambda
        .iter()
        .zip(&active)
        .filter(|&(&v, &a)| a && v < 0.0)
        .map(|(&v, _)| v)
        .fold(0.0, f64::min);
    if lambda_pos == 0.0 || lambda_neg == 0.0 {
        return Err(Error::InvalidParameter(
            "saddle point needs displaced modes with eigenvalues of both signs; below the \
             speed limit the level-set formula does not apply"
                .into(),
        ));
    }
    let a = -1.0 / lambda_pos;
    let b = -1.0 / lambda_neg;
    let span = b - a;

    // Inch the evaluation points toward the poles until the defect sign
    // confirms the crossing; the divergent pole terms guarantee this unless
    // the extremal modes carry no displacement at all.
    let mut lo = a + 1e-9 * span;
    let mut hi = b - 1e-9 * span;
    for _ in 0..80 {
        if saddle_defect(lo, data, &dx, &active).0 > 0.0 {
            break;
        }
        lo = a + 0.0625 * (lo - a);
    }
    for _ in 0..80 {
        if saddle_defect(hi, data, &dx, &active).0 < 0.0 {
            break;
        }
        hi = b - 0.0625 * (b - hi);
    }
    let (g_lo, _, _) = saddle_defect(lo, data, &dx, &active);
    let (g_hi, _, _) = saddle_defect(hi, data, &dx, &active);
    if !(g_lo > 0.0) || !(g_hi < 0.0) {
        return Err(Error::NoRoot(format!(
            "saddle defect does not change sign on ({a:e}, {b:e}); \
             extremal modes carry no displacement"
        )));
    }

    // g(0) is always defined (0 lies strictly inside the bracket), so the
    // center is a cheap, well-conditioned starting point.
    let mut y = 0.0;
    for _ in 0..200 {
        let (g, slope, scale) = saddle_defect(y, data, &dx, &active);
        if g.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Ok(SaddlePoint {
                y_star: y,
                bracket: (a, b),
                residual: g,
            });
        }
        if g > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let newton = y - g / slope;
        y = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * span {
            let (g, _, _) = saddle_defect(y, data, &dx, &active);
            return Ok(SaddlePoint {
                y_star: y,
                bracket: (a, b),
                residual: g,
            });
        }
    }
    Err(Error::Numerical(
        "saddle iteration did not converge in 200 steps".into(),
    ))
}

/// Surrogate-kernel derivatives shared by the moment formulas.
fn r0_prime(x: f64) -> f64 {
    let d = 1.0 + x * x;
    (1.0 - 2.0 * x - x * x) / (d * d)
}

fn r0_second(x: f64) -> f64 {
    let d = 1.0 + x * x;
    2.0 * (x * x * x + 3.0 * x * x - 3.0 * x - 1.0) / (d * d * d)
}

/// Implicit saddle sensitivities with respect to the per-mode sources, from
/// the stationarity condition the solver enforces: `d_n y* = -F_k / F_y` and
/// `d_n^2 y* = -(F_kk + 2 F_ky y' + F_yy y'^2)/F_y` with `F = Omega'`.
struct SaddleSensitivity {
    /// `F_y / kappa = sum lambda^2 dx^2 / (1+u)^3` over displaced modes.
    s_y: f64,
    /// `-F_yy / (3 kappa) = sum lambda^3 dx^2 / (1+u)^4`.
    s_yy: f64,
}

impl SaddleSensitivity {
    fn new(data: &SpectralData, saddle: &SaddlePoint, dx: &DVector<f64>, active: &[bool]) -> Self {
        let mut s_y = 0.0;
        let mut s_yy = 0.0;
        for n in 0..data.l() {
            if !active[n] {
                continue;
            }
            let denom = 1.0 + data.lambda[n] * saddle.y_star;
            let base = data.lambda[n] * data.lambda[n] * dx[n] * dx[n];
            s_y += base / denom.powi(3);
            s_yy += base * data.lambda[n] / denom.powi(4);
        }
        SaddleSensitivity { s_y, s_yy }
    }

    fn first(&self, data: &SpectralData, saddle: &SaddlePoint, dx: f64, lambda: f64) -> f64 {
        if self.s_y <= 0.0 {
            return 0.0;
        }
        let denom = 1.0 + lambda * saddle.y_star;
        let lf = data.l() as f64;
        -lambda * dx / (data.kappa * lf * denom * denom * self.s_y)
    }

    fn second(&self, data: &SpectralData, saddle: &SaddlePoint, dx: f64, lambda: f64) -> f64 {
        if self.s_y <= 0.0 {
            return 0.0;
        }
        let lf = data.l() as f64;
        let denom = 1.0 + lambda * saddle.y_star;
        let yp = self.first(data, saddle, dx, lambda);
        // F_kk, F_ky and F_yy divided by kappa; the common kappa cancels
        // against F_y in the quotient.
        let f_kk = -lambda / (data.kappa * data.kappa * lf * lf * denom * denom);
        let f_ky = -2.0 * lambda * lambda * dx / (data.kappa * lf * denom.powi(3));
        let f_yy = -3.0 * self.s_yy;
        -(f_kk + 2.0 * f_ky * yp + f_yy * yp * yp) / self.s_y
    }
}

/// Gaussian-surrogate kernel `r_0(x) = (1+x)/(1+x^2)` entering the leading
/// order-parameter prediction; `r_0(0) = 1`.
pub fn r0(x: f64) -> f64 {
    (1.0 + x) / (1.0 + x * x)
}

/// Order-parameter prediction at a horizon just beyond the speed limit.
#[derive(Clone, Debug)]
pub struct QPrediction {
    /// Leading saddle value `(1/(kappa L)) sum_n r_0(lambda_n y_star)`.
    pub leading: f64,
    /// Sum of the exact per-mode variances of the saddle generating
    /// function, including the implicit shift of `y_star` with the source.
    pub corrected: f64,
    /// `corrected - leading`.
    pub difference: f64,
    pub saddle: SaddlePoint,
}

/// Predicts the continuous order parameter from the level-set saddle point:
/// the leading kernel sum and the variance-corrected value.
///
/// A fully degenerate spectrum (all `|lambda_n|` at rounding level) is the
/// flat-manifold limit: every kernel evaluates to `r_0(0) = 1` and the
/// prediction is exactly `1/kappa`.
pub fn q_prediction(data: &SpectralData) -> Result<QPrediction> {
    let l = data.l();
    let lf = l as f64;
    if data.lambda.iter().all(|v| v.abs() < X1_GUARD) {
        let q = 1.0 / data.kappa;
        return Ok(QPrediction {
            leading: q,
            corrected: q,
            difference: 0.0,
            saddle: SaddlePoint {
                y_star: 0.0,
                bracket: (f64::NEG_INFINITY, f64::INFINITY),
                residual: data.i_const,
            },
        });
    }
    let saddle = solve_saddle(data, &[])?;
    let (dx, active) = active_displacements(data, &[])?;
    let sens = SaddleSensitivity::new(data, &saddle, &dx, &active);
    let (bracket, curvature) = kernel_brackets(data, &saddle, &dx, &active);

    let mut leading = 0.0;
    let mut corrected = 0.0;
    for n in 0..l {
        let u = data.lambda[n] * saddle.y_star;
        leading += r0(u) / (data.kappa * lf);
        let (yp, ypp) = if active[n] {
            (
                sens.first(data, &saddle, dx[n], data.lambda[n]),
                sens.second(data, &saddle, dx[n], data.lambda[n]),
            )
        } else {
            (0.0, 0.0)
        };
        corrected += r0(u) / (data.kappa * lf)
            - 2.0 * dx[n] * data.lambda[n] * r0_prime(u) * yp
            + data.kappa * lf * (0.5 * curvature * yp * yp + bracket * ypp);
    }

    Ok(QPrediction {
        leading,
        corrected,
        difference: corrected - leading,
        saddle,
    })
}

/// Source-independent sums entering the surrogate-kernel moment formulas:
/// the stationarity bracket `-I + (1/2) sum lambda dx^2 r0'(u)` (nonzero
/// because the solved saddle zeroes the bare-kernel defect, not the
/// surrogate one) and the curvature sum `sum lambda^2 dx^2 r0''(u)`.
fn kernel_brackets(
    data: &SpectralData,
    saddle: &SaddlePoint,
    dx: &DVector<f64>,
    active: &[bool],
) -> (f64, f64) {
    let mut bracket = -data.i_const;
    let mut curvature = 0.0;
    for n in 0..data.l() {
        if !active[n] {
            continue;
        }
        let u = data.lambda[n] * saddle.y_star;
        bracket += 0.5 * data.lambda[n] * dx[n] * dx[n] * r0_prime(u);
        curvature += data.lambda[n] * data.lambda[n] * dx[n] * dx[n] * r0_second(u);
    }
    (bracket, curvature)
}

/// Symmetry-halving estimate for the speed-limit order parameter: treats the
/// reflection symmetry of the ensemble as freezing half of the fluctuating
/// directions and halves the saddle value. A labeled heuristic, not a
/// derivation.
pub fn symmetry_halving_heuristic(q_leading: f64) -> f64 {
    0.5 * q_leading
}

/// Per-mode first moments of the level-set measure at the saddle point,
/// `<x_n> = -x1_n - dx_n r0(u_n) + kappa L (d_n y_star) B` with the
/// surrogate kernel `r0` and the stationarity bracket `B` from
/// [`kernel_brackets`]. The surrogate kernel is regular at the stiff pole
/// `u = -1`, which keeps the moments smooth across horizons where a stiff
/// displacement changes sign.
pub fn mode_moments(data: &SpectralData, saddle: &SaddlePoint) -> Result<DVector<f64>> {
    let (dx, active) = active_displacements(data, &[])?;
    let l = data.l();
    let lf = l as f64;
    let sens = SaddleSensitivity::new(data, saddle, &dx, &active);
    let (bracket, _) = kernel_brackets(data, saddle, &dx, &active);
    Ok(DVector::from_fn(l, |n, _| {
        let u = data.lambda[n] * saddle.y_star;
        let yp = if active[n] {
            sens.first(data, saddle, dx[n], data.lambda[n])
        } else {
            0.0
        };
        -data.x1[n] - dx[n] * r0(u) + data.kappa * lf * yp * bracket
    }))
}

/// Bang-bang overlap of the frozen window family: `max(0, 1 - T_c/T)`.
pub fn q_bb_baseline(t: f64, t_c: f64) -> f64 {
    (1.0 - t_c / t).max(0.0)
}

/// Per-horizon entry of the near-critical bang-bang overlap evaluation.
#[derive(Clone, Debug)]
pub struct ScalingPoint {
    pub t: f64,
    /// Horizon distance above the speed limit.
    pub delta_t: f64,
    /// First moments `<x_n>` at the saddle.
    pub mean_x: DVector<f64>,
    /// Overlap drift `-sum_n (2 <x_n> + <x_n>^2)`.
    pub dq_bb: f64,
    /// Relative L2 deviation of the soft-mode moments from `-x0_n`.
    pub soft_deviation: f64,
    /// Euclidean size of the stiff-mode moments.
    pub stiff_norm: f64,
    pub saddle: SaddlePoint,
}

/// Near-critical scaling of the bang-bang overlap across a horizon grid.
#[derive(Clone, Debug)]
pub struct QbbScaling {
    pub points: Vec<ScalingPoint>,
    /// Intercept of the linear fit `dq_bb = a + b (T - T_qsl)`.
    pub intercept: f64,
    /// Slope of the linear fit.
    pub slope: f64,
    pub r_squared: f64,
    /// Log-log exponent of the stiff-mode moment size against `T - T_qsl`.
    pub stiff_exponent: f64,
}

/// Evaluates the saddle-point first moments over a horizon grid above the
/// speed limit, emits the overlap drift `dq_bb(T)` with its linear fit, and
/// classifies the stiff-mode moments (`~ delta T`) against the soft-mode
/// moments (`~ -x0_n`).
pub fn qbb_scaling(data: &[SpectralData], t_qsl: f64) -> Result<QbbScaling> {
    if data.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n_plus = data[0].n_plus;
    let l = data[0].l();
    let mut points = Vec::with_capacity(data.len());
    for entry in data {
        if entry.l() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: entry.l(),
            });
        }
        if entry.t <= t_qsl {
            return Err(Error::InvalidParameter(format!(
                "scaling grid must lie above the speed limit: T = {} <= {t_qsl}",
                entry.t
            )));
        }
        let saddle = solve_saddle(entry, &[])?;
        let mean_x = mode_moments(entry, &saddle)?;
        let dq_bb = -mean_x.iter().map(|&m| 2.0 * m + m * m).sum::<f64>();
        let mut soft_num = 0.0;
        let mut soft_den = 0.0;
        let mut stiff_sq = 0.0;
        for n in 0..l {
            if n < n_plus {
                stiff_sq += mean_x[n] * mean_x[n];
            } else {
                soft_num += (mean_x[n] + entry.x0[n]).powi(2);
                soft_den += entry.x0[n] * entry.x0[n];
            }
        }
        points.push(ScalingPoint {
            t: entry.t,
            delta_t: entry.t - t_qsl,
            mean_x,
            dq_bb,
            soft_deviation: if soft_den > 0.0 {
                (soft_num / soft_den).sqrt()
            } else {
                0.0
            },
            stiff_norm: stiff_sq.sqrt(),
            saddle,
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.delta_t).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.dq_bb).collect();
    let (intercept, slope, r_squared) = fit_linear(&xs, &ys);

    let log_pairs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.stiff_norm > 0.0)
        .map(|p| (p.delta_t.ln(), p.stiff_norm.ln()))
        .collect();
    let stiff_exponent = if log_pairs.len() >= 2 {
        let lx: Vec<f64> = log_pairs.iter().map(|p| p.0).collect();
        let ly: Vec<f64> = log_pairs.iter().map(|p| p.1).collect();
        fit_linear(&lx, &ly).1
    } else {
        f64::NAN
    };

    Ok(QbbScaling {
        points,
        intercept,
        slope,
        r_squared,
        stiff_exponent,
    })
}

/// Least-squares line `y = a + b x`; returns `(a, b, r_squared)`. With fewer
/// than two distinct abscissas the fit degenerates to the mean.
fn fit_linear(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return (mean_y, 0.0, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (mean_y - slope * mean_x, slope, r2)
}

/// Roots of the single-mode restriction `c + b_n x + (1/2) lambda_n x^2 = 0`
/// along eigenmode `n` (all other coordinates at the center). `None` when
/// the mode is degenerate or the level set does not intersect the line; the
/// pair is ordered.
pub fn level_set_mode_roots(data: &SpectralData, n: usize) -> Option<(f64, f64)> {
    let lambda = data.lambda[n];
    if lambda.abs() < X1_GUARD {
        return None;
    }
    let disc = data.b[n] * data.b[n] - 2.0 * lambda * data.c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let x_a = (-data.b[n] - sq) / lambda;
    let x_b = (-data.b[n] + sq) / lambda;
    Some((x_a.min(x_b), x_a.max(x_b)))
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy of the coarse-grained sign counting measure,
/// `S[s] = -(N/T) int [s+ log s+ + s- log s-] dt` with `s± = (1 ± s)/2`,
/// in nats. `0 log 0 := 0`.
pub fn coarse_grain_entropy(protocol: &Protocol, n_sites: f64) -> f64 {
    let l = protocol.steps() as f64;
    let mut acc = 0.0;
    for &s in protocol.values() {
        let p = (0.5 * (1.0 + s)).clamp(0.0, 1.0);
        acc += xlogx(p) + xlogx(1.0 - p);
    }
    (-(n_sites / l) * acc).max(0.0)
}

/// Entropic-index-2 (quadratic) surrogate of the counting entropy,
/// `S_2 = (N alpha / 2)(1 - (1/T) int s^2 dt)`.
pub fn tsallis_entropy(protocol: &Protocol, n_sites: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "entropic prefactor alpha must be positive, got {alpha}"
        )));
    }
    let l = protocol.steps() as f64;
    let mean_sq = protocol.values().iter().map(|&s| s * s).sum::<f64>() / l;
    Ok(0.5 * n_sites * alpha * (1.0 - mean_sq))
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the documented spectral layout: header `n,lambda,b,x0,x1`, one row
/// per mode, 1-based.
pub fn write_spectral_csv<W: Write>(data: &SpectralData, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "n,lambda,b,x0,x1")?;
    for n in 0..data.l() {
        writeln!(
            out,
            "{},{},{},{},{}",
            n + 1,
            fmt(data.lambda[n]),
            fmt(data.b[n]),
            fmt(data.x0[n]),
            fmt(data.x1[n])
        )?;
    }
    Ok(())
}

/// Saddle summary row for the documented `saddle.csv` layout.
#[derive(Clone, Debug)]
pub struct SaddleRow {
    pub t: f64,
    pub y_star: f64,
    pub residual: f64,
}

pub fn write_saddle_csv<W: Write>(rows: &[SaddleRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "T,y_star,residual")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{}",
            fmt(row.t),
            fmt(row.y_star),
            fmt(row.residual)
        )?;
    }
    Ok(())
}

/// Prediction row for the documented `predictions.csv` layout.
#[derive(Clone, Debug)]
pub struct PredictionRow {
    pub t: f64,
    pub q_pred_leading: f64,
    pub q_pred_corrected: f64,
    pub dqbb_pred: f64,
}

pub fn write_predictions_csv<W: Write>(rows: &[PredictionRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "T,q_pred_leading,q_pred_corrected,dqbb_pred")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            fmt(row.t),
            fmt(row.q_pred_leading),
            fmt(row.q_pred_corrected),
            fmt(row.dqbb_pred)
        )?;
    }
    Ok(())
}
