//! Small dense linear-algebra helpers used across the crate.
//!
//! Dual-space propagators live in 3 or 8 dimensions and Hilbert-space states in
//! 2 or 3, so everything here is specialized for tiny matrices: closed-form
//! SO(3) exponentials, a closed-form symmetric 3x3 eigensolver for the sampler
//! hot loop, and deterministic (sign-fixed, descending) symmetric
//! eigendecompositions so that serialized spectra are bit-for-bit reproducible.

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Matrix3, Vector3};

pub type C64 = Complex<f64>;

/// Matrix exponential of a small square real matrix (Padé scaling-and-squaring
/// as provided by nalgebra).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.exp()
}

/// Commutator `[a, b] = ab - ba`.
pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Exponential of a real antisymmetric 3x3 matrix (Rodrigues rotation
/// formula), with a series fallback for small angles.
///
/// This is the documented fast path for SO(3) propagation; it must agree with
/// the generic `expm` to 1e-12, which is enforced by a regression test.
pub fn so3_exp(k: &Matrix3<f64>) -> Matrix3<f64> {
    let theta = (k[(2, 1)] * k[(2, 1)] + k[(0, 2)] * k[(0, 2)] + k[(1, 0)] * k[(1, 0)]).sqrt();
    let t2 = theta * theta;
    // sin(t)/t and (1-cos(t))/t^2, stable near t = 0.
    let (a, b) = if theta < 1e-4 {
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / t2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// One exact propagation step `exp(-i dt H)` for the real-symmetric 2x2
/// Hamiltonian `H = (hz sigma_z + hxs sigma_x) / 2`, in closed form.
pub fn step_unitary2(hz: f64, hxs: f64, dt: f64) -> Matrix2<C64> {
    let e = (hz * hz + hxs * hxs).sqrt();
    let phi = 0.5 * dt * e;
    let c = phi.cos();
    // sin(phi)/e with the e -> 0 limit handled by the sinc series.
    let s = if e < 1e-9 {
        0.5 * dt * (1.0 - phi * phi / 6.0)
    } else {
        phi.sin() / e
    };
    Matrix2::new(
        C64::new(c, -s * hz),
        C64::new(0.0, -s * hxs),
        C64::new(0.0, -s * hxs),
        C64::new(c, s * hz),
    )
}

/// Eigendecomposition of a real symmetric 3x3 matrix, closed form
/// (Cardano for the characteristic cubic, cross products for eigenvectors).
///
/// Returns `(eigenvalues descending, eigenvector columns)` with an exactly
/// orthonormal right-handed eigenbasis. Designed for the sampler hot loop;
/// accuracy degrades gracefully only for nearly-degenerate spectra, which a
/// regression test rules out for the Hamiltonian family used here.
pub fn sym3_eigen(a: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let scale = max3_abs(a);
    if scale == 0.0 {
        return (Vector3::zeros(), Matrix3::identity());
    }
    let b = a / scale;
    let q = b.trace() / 3.0;
    let d0 = b[(0, 0)] - q;
    let d1 = b[(1, 1)] - q;
    let d2 = b[(2, 2)] - q;
    let off = b[(0, 1)] * b[(0, 1)] + b[(0, 2)] * b[(0, 2)] + b[(1, 2)] * b[(1, 2)];
    let p2 = (d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * off) / 6.0;
    let p = p2.sqrt();
    if p < 1e-14 {
        // Essentially a multiple of the identity.
        return (Vector3::from_element(q * scale), Matrix3::identity());
    }
    let m = (b - Matrix3::from_diagonal_element(q)) / p;
    let r = (0.5 * m.determinant()).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let two_thirds_pi = 2.0 * std::f64::consts::FRAC_PI_3;
    // phi in [0, pi/3]: cos(phi) gives the largest root, cos(phi + 2pi/3) the
    // smallest.
    let l0 = q + 2.0 * p * phi.cos();
    let l2 = q + 2.0 * p * (phi + two_thirds_pi).cos();

    // Eigenvectors for the two extreme eigenvalues; the middle one completes
    // an exactly orthonormal frame.
    let v0 = eigenvector3(&b, l0);
    let mut v2 = eigenvector3(&b, l2);
    v2 = (v2 - v0 * v0.dot(&v2)).normalize();
    let v1 = v2.cross(&v0);
    let vecs = Matrix3::from_columns(&[v0, v1, v2]);
    // Rayleigh quotients restore full eigenvalue accuracy after scaling.
    let vals = Vector3::new(
        v0.dot(&(b * v0)) * scale,
        v1.dot(&(b * v1)) * scale,
        v2.dot(&(b * v2)) * scale,
    );
    (vals, vecs)
}

/// Best eigenvector of `b` for eigenvalue `l` via cross products of the rows
/// of `b - l I` (the two most independent rows span the orthogonal
/// complement).
fn eigenvector3(b: &Matrix3<f64>, l: f64) -> Vector3<f64> {
    let c = b - Matrix3::from_diagonal_element(l);
    let r0 = Vector3::new(c[(0, 0)], c[(0, 1)], c[(0, 2)]);
    let r1 = Vector3::new(c[(1, 0)], c[(1, 1)], c[(1, 2)]);
    let r2 = Vector3::new(c[(2, 0)], c[(2, 1)], c[(2, 2)]);
    let c01 = r0.cross(&r1);
    let c02 = r0.cross(&r2);
    let c12 = r1.cross(&r2);
    let (n01, n02, n12) = (c01.norm_squared(), c02.norm_squared(), c12.norm_squared());
    let best = if n01 >= n02 && n01 >= n12 {
        c01 / n01.sqrt()
    } else if n02 >= n12 {
        c02 / n02.sqrt()
    } else {
        c12 / n12.sqrt()
    };
    if best.iter().all(|x| x.is_finite()) && best.norm_squared() > 0.5 {
        best
    } else {
        // Degenerate pair: any unit vector orthogonal to the remaining row.
        Vector3::x()
    }
}

fn max3_abs(a: &Matrix3<f64>) -> f64 {
    a.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

/// One exact propagation step `exp(-i dt H)` for a real-symmetric 3x3
/// Hamiltonian, via the closed-form eigendecomposition.
pub fn step_unitary3(h: &Matrix3<f64>, dt: f64) -> Matrix3<C64> {
    let (w, v) = sym3_eigen(h);
    let mut u = Matrix3::<C64>::zeros();
    let cis: [C64; 3] = [
        C64::new((w[0] * dt).cos(), -(w[0] * dt).sin()),
        C64::new((w[1] * dt).cos(), -(w[1] * dt).sin()),
        C64::new((w[2] * dt).cos(), -(w[2] * dt).sin()),
    ];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..3 {
                acc += cis[k] * (v[(i, k)] * v[(j, k)]);
            }
            u[(i, j)] = acc;
        }
    }
    u
}

/// Symmetric eigendecomposition with a frozen output convention: eigenvalues
/// in descending order, each eigenvector scaled so its largest-magnitude
/// component is positive (ties broken by the lowest index). This makes CSV
/// exports of spectra reproducible bit-for-bit.
pub fn symmetric_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let se = a.clone().symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[j]
            .partial_cmp(&se.eigenvalues[i])
            .expect("non-finite eigenvalue")
    });
    let mut vals = DVector::zeros(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = se.eigenvalues[src];
        let col = se.eigenvectors.column(src);
        let mut best = 0;
        let mut best_abs = 0.0;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best_abs + 1e-12 {
                best_abs = x.abs();
                best = i;
            }
        }
        let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
        vecs.column_mut(dst).copy_from(&(col * sign));
    }
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn random_antisym3(rng: &mut impl RngCore) -> Matrix3<f64> {
        let mut k = Matrix3::zeros();
        let vals: Vec<f64> = (0..3).map(|_| crate::rng::uniform_symmetric(rng)).collect();
        k[(2, 1)] = vals[0];
        k[(1, 2)] = -vals[0];
        k[(0, 2)] = vals[1];
        k[(2, 0)] = -vals[1];
        k[(1, 0)] = vals[2];
        k[(0, 1)] = -vals[2];
        k
    }

    #[test]
    fn rodrigues_matches_generic_exponential() {
        let mut rng = crate::rng::derive_stream(3, &[1]);
        for _ in 0..200 {
            let k = random_antisym3(&mut rng) * 3.0;
            let fast = so3_exp(&k);
            let kd = DMatrix::from_fn(3, 3, |i, j| k[(i, j)]);
            let slow = expm(&kd);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((fast[(i, j)] - slow[(i, j)]).abs() < 1e-12);
                }
            }
        }
        // Small-angle branch.
        let k = random_antisym3(&mut rng) * 1e-6;
        let fast = so3_exp(&k);
        let slow = expm(&DMatrix::from_fn(3, 3, |i, j| k[(i, j)]));
        for i in 0..3 {
            for j in 0..3 {
                assert!((fast[(i, j)] - slow[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn closed_form_sym3_matches_nalgebra() {
        let mut rng = crate::rng::derive_stream(4, &[2]);
        for _ in 0..500 {
            let mut a = Matrix3::zeros();
            for i in 0..3 {
                for j in i..3 {
                    let x = 2.0 * crate::rng::uniform_symmetric(&mut rng);
                    a[(i, j)] = x;
                    a[(j, i)] = x;
                }
            }
            let (vals, vecs) = sym3_eigen(&a);
            // Orthonormality and reconstruction.
            let e = (vecs.transpose() * vecs - Matrix3::identity()).abs().max();
            assert!(e < 1e-12, "orthonormality defect {e}");
            let recon = vecs * Matrix3::from_diagonal(&vals) * vecs.transpose();
            let d = (recon - a).abs().max();
            assert!(d < 1e-10, "reconstruction defect {d}");
            assert!(vals[0] >= vals[1] - 1e-12 && vals[1] >= vals[2] - 1e-12);
        }
    }

    #[test]
    fn unitary_steps_are_unitary_and_consistent() {
        let mut rng = crate::rng::derive_stream(5, &[3]);
        for _ in 0..50 {
            let hz = crate::rng::uniform_symmetric(&mut rng) * 2.0;
            let hx = crate::rng::uniform_symmetric(&mut rng) * 2.0;
            let dt = 0.3;
            let u = step_unitary2(hz, hx, dt);
            let uu = u.adjoint() * u;
            assert!((uu - Matrix2::identity()).iter().all(|z| z.norm() < 1e-13));
            // Against the complex-matrix exponential.
            let h = DMatrix::from_row_slice(
                2,
                2,
                &[
                    C64::new(0.5 * hz, 0.0),
                    C64::new(0.5 * hx, 0.0),
                    C64::new(0.5 * hx, 0.0),
                    C64::new(-0.5 * hz, 0.0),
                ],
            );
            let u_ref = (h * C64::new(0.0, -dt)).exp();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((u[(i, j)] - u_ref[(i, j)]).norm() < 1e-12);
                }
            }
        }
    }
}
