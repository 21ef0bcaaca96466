//! Temporary exploration harness (deleted before finalization).

use clpt_core::stability::*;
use clpt_core::{build_single_qubit_problem, build_two_qubit_problem};

#[test]
#[ignore]
fn probe_transitions_1q() {
    let p = build_single_qubit_problem();
    let grid: Vec<f64> = (0..28).map(|i| 0.5 + 0.1 * i as f64).collect();
    let tr = detect_transitions(&p, &grid, 64).unwrap();
    println!("1q: {tr:?}");
}

#[test]
#[ignore]
fn probe_transitions_2q() {
    let p = build_two_qubit_problem();
    let grid: Vec<f64> = (0..18).map(|i| 0.3 + 0.1 * i as f64).collect();
    let tr = detect_transitions(&p, &grid, 64).unwrap();
    println!("2q: {tr:?}");
}

#[test]
#[ignore]
fn probe_delta_curve_1q() {
    let p = build_single_qubit_problem();
    let grid: Vec<f64> = (0..12).map(|i| 1.0 + 0.14 * i as f64).collect();
    let curve = trace_delta(&p, &grid, 64).unwrap();
    for pt in &curve.points {
        let formula = 0.5 * (pt.t - 0.98454);
        let deltas: Vec<String> = pt
            .branches
            .iter()
            .map(|b| format!("{:.4}(I={:.2e})", b.delta, b.infidelity))
            .collect();
        println!(
            "T={:.3} formula={:.4} branches={}",
            pt.t,
            formula.max(0.0),
            deltas.join(" ")
        );
    }
    println!("termination: {:?}", curve.termination);
}

#[test]
#[ignore]
fn probe_delta_curve_2q() {
    let p = build_two_qubit_problem();
    let grid: Vec<f64> = (0..14).map(|i| 0.6 + 0.08 * i as f64).collect();
    let curve = trace_delta(&p, &grid, 64).unwrap();
    for pt in &curve.points {
        let deltas: Vec<String> = pt
            .branches
            .iter()
            .map(|b| format!("{:.4}/half={:.4}(I={:.2e})", b.delta, b.delta / (0.5 * pt.t), b.infidelity))
            .collect();
        println!("T={:.3} branches={}", pt.t, deltas.join(" "));
    }
    println!("termination: {:?}", curve.termination);
}

#[test]
#[ignore]
fn probe_bifurcation_1q() {
    let p = build_single_qubit_problem();
    for dt_off in [0.02, 0.04, 0.08, 0.16, 0.24] {
        let t = 2.5104 + dt_off;
        let roots = {
            let grid = [t - 1e-9, t];
            let curve = trace_delta(&p, &grid, 64).unwrap();
            curve.points[1].branches.clone()
        };
        let d0 = 0.5 * (t - 0.98454);
        let desc: Vec<String> = roots
            .iter()
            .map(|b| format!("{:.5} (d-d0={:+.5})", b.delta, b.delta - d0))
            .collect();
        println!("T=QSL+{dt_off}: {}", desc.join("  "));
    }
}

#[test]
#[ignore]
fn probe_spectrum_1q_near_qsl() {
    let p = build_single_qubit_problem();
    let t = 2.52;
    let center = s_delta_fractional(t, 0.5 * (t - 0.98454), 64).unwrap();
    let spec = hessian_spectrum_at(&p, &center).unwrap();
    println!("stiff count: {}", spec.stiff_count());
    println!("top 6: {:?}", spec.eigenvalues.as_slice()[..6].to_vec());
    let low: Vec<f64> = spec.eigenvalues.as_slice()[2..26].to_vec();
    println!("vanishing sector [2..26]: {low:?}");
    // n^-2 fit over the vanishing sector sorted by |lambda| descending.
    let mut mags: Vec<f64> = spec.eigenvalues.iter().skip(2).map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let pts: Vec<(f64, f64)> = (4..=20)
        .map(|n| ((n as f64).ln(), mags[n - 1].ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    println!("vanishing-sector slope: {slope:.3}");
    // Parity + Fourier overlap of the leading eigenfunctions.
    for k in 0..6 {
        println!(
            "mode {k}: lambda={:.4e} parity={:+.3}",
            spec.eigenvalues[k],
            spec.reflection_overlap(k)
        );
    }
}

#[test]
#[ignore]
fn probe_arc_gradient_refinement() {
    for (problem, t, name) in [
        (clpt_core::build_single_qubit_problem(), 1.8, "1q"),
        (clpt_core::build_two_qubit_problem(), 1.0, "2q"),
    ] {
        let curve = trace_delta(&problem, &[t - 1e-9, t], 64).unwrap();
        let d64 = curve.points[1].branches[0].delta;
        for l in [64usize, 128, 256] {
            // Polish the root at this resolution by bisecting the balance B.
            let dt = t / 64.0;
            let (mut lo, mut hi) = (d64 - 2.0 * dt, d64 + 2.0 * dt);
            let bval = |d: f64| window_measures(&problem, t, d, l).unwrap().0;
            let (mut blo, bhi) = (bval(lo), bval(hi));
            assert!(blo * bhi < 0.0, "no bracket at L={l}");
            for _ in 0..55 {
                let mid = 0.5 * (lo + hi);
                let bm = bval(mid);
                if bm * blo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    blo = bm;
                }
            }
            let delta = 0.5 * (lo + hi);
            let center = s_delta_fractional(t, delta, l).unwrap();
            let b = clpt_core::expansions::taylor_coefficients_at(&problem, &center, t, 1, l)
                .unwrap()
                .b;
            let cdt = t / l as f64;
            let (wlo, whi) = (0.5 * t - delta, 0.5 * t + delta);
            let mut worst = 0.0_f64;
            for i in 0..l {
                let (a, c) = (i as f64 * cdt, (i as f64 + 1.0) * cdt);
                if a > wlo && c < whi {
                    worst = worst.max(b[i].abs());
                }
            }
            println!("{name} T={t} L={l}: max interior |b| = {worst:.3e}, delta = {delta:.8}");
        }
    }
}

#[test]
#[ignore]
fn probe_fourier_overlaps() {
    let problem = clpt_core::build_single_qubit_problem();
    let t = 2.45;
    let curve = trace_delta(&problem, &[t - 1e-9, t], 64).unwrap();
    let delta = curve.points[1].branches[0].delta;
    let center = s_delta_fractional(t, delta, 64).unwrap();
    let spectrum = hessian_spectrum_at(&problem, &center).unwrap();
    let l = 64usize;
    println!("delta = {delta:.4}, window = [{:.4}, {:.4}]", 0.5 * t - delta, 0.5 * t + delta);
    for n in 0..8 {
        let f = spectrum.eigenfunctions.column(n);
        // Report raw eigenfunction values coarsely to see support.
        let mut prof = String::new();
        for i in (0..l).step_by(4) {
            prof.push_str(&format!("{:+.2} ", f[i]));
        }
        println!("mode {n} (lambda {:+.3e}): {prof}", spectrum.eigenvalues[n]);
        // Best overlap with full-interval integer Fourier modes.
        let mut best_full = (0.0_f64, 0usize);
        for k in 0..=l / 2 {
            let om = 2.0 * std::f64::consts::PI * k as f64 / t;
            for phase in 0..2 {
                let phi: Vec<f64> = (0..l)
                    .map(|i| {
                        let tau = (i as f64 + 0.5) * t / l as f64;
                        if phase == 0 { (om * tau).cos() } else { (om * tau).sin() }
                    })
                    .collect();
                let nf = (f.dot(&f) / l as f64).sqrt();
                let np = (phi.iter().map(|v| v * v).sum::<f64>() / l as f64).sqrt();
                if np < 1e-12 {
                    continue;
                }
                let ov = (f
                    .iter()
                    .zip(&phi)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / l as f64
                    / (nf * np))
                    .abs();
                if ov > best_full.0 {
                    best_full = (ov, k);
                }
            }
        }
        // Best overlap with window-supported sine modes sin(j pi (t-lo)/(2 delta)).
        let (wlo, whi) = (0.5 * t - delta, 0.5 * t + delta);
        let mut best_win = (0.0_f64, 0usize);
        for j in 1..=l / 2 {
            let phi: Vec<f64> = (0..l)
                .map(|i| {
                    let tau = (i as f64 + 0.5) * t / l as f64;
                    if tau > wlo && tau < whi {
                        (j as f64 * std::f64::consts::PI * (tau - wlo) / (whi - wlo)).sin()
                    } else {
                        0.0
                    }
                })
                .collect();
            let nf = (f.dot(&f) / l as f64).sqrt();
            let np = (phi.iter().map(|v| v * v).sum::<f64>() / l as f64).sqrt();
            let ov = (f
                .iter()
                .zip(&phi)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / l as f64
                / (nf * np))
                .abs();
            if ov > best_win.0 {
                best_win = (ov, j);
            }
        }
        println!(
            "  full-interval best {:.4} (k={}), window-sine best {:.4} (j={})",
            best_full.0, best_full.1, best_win.0, best_win.1
        );
    }
}

#[test]
#[ignore]
fn probe_fourier_half_integer() {
    let problem = build_single_qubit_problem();
    for t in [2.45_f64, 2.52] {
        let curve = trace_delta(&problem, &[t - 1e-9, t], 64).unwrap();
        let delta = curve.points[1].branches[0].delta;
        let center = s_delta_fractional(t, delta, 64).unwrap();
        let spectrum = hessian_spectrum_at(&problem, &center).unwrap();
        let l = 64usize;
        println!("T={t}");
        for n in 0..8 {
            let f = spectrum.eigenfunctions.column(n);
            let mut best = (0.0_f64, 0.0_f64, "");
            for j in 0..=2 * l {
                let om = std::f64::consts::PI * j as f64 / t;
                for (phase, name) in [(0, "cos"), (1, "sin")] {
                    let phi: Vec<f64> = (0..l)
                        .map(|i| {
                            let tau = (i as f64 + 0.5) * t / l as f64;
                            if phase == 0 { (om * tau).cos() } else { (om * tau).sin() }
                        })
                        .collect();
                    let nf = (f.dot(&f) / l as f64).sqrt();
                    let np = (phi.iter().map(|v| v * v).sum::<f64>() / l as f64).sqrt();
                    if np < 1e-12 {
                        continue;
                    }
                    let ov = (f.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() / l as f64
                        / (nf * np))
                        .abs();
                    if ov > best.0 {
                        best = (ov, j as f64 / 2.0, name);
                    }
                }
            }
            println!("  mode {n}: best {:.4} at k={} ({})", best.0, best.1, best.2);
        }
    }
}

#[test]
#[ignore]
fn probe_fourier_subspace() {
    let problem = build_single_qubit_problem();
    let l = 64usize;
    for t in [2.40_f64, 2.45, 2.48, 2.50] {
        let curve = trace_delta(&problem, &[t - 1e-9, t], 64).unwrap();
        let delta = curve.points[1].branches[0].delta;
        for (center, label) in [
            (s_delta_fractional(t, delta, l).unwrap(), "frac"),
            (s_delta(t, delta, l).unwrap(), "snap"),
        ] {
            let spectrum = hessian_spectrum_at(&problem, &center).unwrap();
            let mut line = format!("T={t} {label}: ");
            for n in 0..7 {
                let f = spectrum.eigenfunctions.column(n);
                let nf2 = f.dot(&f);
                // Projection onto span{cos(pi k tau/T), sin(pi k tau/T)} per
                // half-integer k (Gram-corrected), max over k in [0, L/2].
                let mut best = (0.0_f64, 0.0_f64);
                for j in 0..=l {
                    let om = std::f64::consts::PI * j as f64 / t;
                    let c: Vec<f64> = (0..l)
                        .map(|i| (om * (i as f64 + 0.5) * t / l as f64).cos())
                        .collect();
                    let s: Vec<f64> = (0..l)
                        .map(|i| (om * (i as f64 + 0.5) * t / l as f64).sin())
                        .collect();
                    let gcc: f64 = c.iter().map(|v| v * v).sum();
                    let gss: f64 = s.iter().map(|v| v * v).sum();
                    let gcs: f64 = c.iter().zip(&s).map(|(a, b)| a * b).sum();
                    let fc: f64 = f.iter().zip(&c).map(|(a, b)| a * b).sum();
                    let fs: f64 = f.iter().zip(&s).map(|(a, b)| a * b).sum();
                    let det = gcc * gss - gcs * gcs;
                    let proj2 = if det.abs() < 1e-9 * gcc.max(gss).powi(2).max(1e-300) {
                        if gcc > gss { fc * fc / gcc } else { fs * fs / gss }
                    } else {
                        (gss * fc * fc - 2.0 * gcs * fc * fs + gcc * fs * fs) / det
                    };
                    let ov = (proj2 / nf2).sqrt();
                    if ov > best.0 {
                        best = (ov, j as f64 / 2.0);
                    }
                }
                line.push_str(&format!("{:.3}@{} ", best.0, best.1));
            }
            println!("{line}");
        }
    }
}

#[test]
#[ignore]
fn probe_fourier_single_mode_240() {
    let problem = build_single_qubit_problem();
    let l = 64usize;
    for t in [2.30_f64, 2.35, 2.40, 2.42] {
        let curve = trace_delta(&problem, &[t - 1e-9, t], 64).unwrap();
        let delta = curve.points[1].branches[0].delta;
        let center = s_delta_fractional(t, delta, l).unwrap();
        let spectrum = hessian_spectrum_at(&problem, &center).unwrap();
        let mut line = format!("T={t}: ");
        for n in 0..7 {
            let f = spectrum.eigenfunctions.column(n);
            let nf = (f.dot(&f)).sqrt();
            let mut best = 0.0_f64;
            for j in 0..=l {
                for phase in 0..2 {
                    let phi: Vec<f64> = (0..l)
                        .map(|i| {
                            let x = std::f64::consts::PI * j as f64 * (i as f64 + 0.5) / l as f64;
                            if phase == 0 { x.cos() } else { x.sin() }
                        })
                        .collect();
                    let np = (phi.iter().map(|v| v * v).sum::<f64>()).sqrt();
                    if np < 1e-12 {
                        continue;
                    }
                    let ov =
                        (f.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() / (nf * np)).abs();
                    best = best.max(ov);
                }
            }
            line.push_str(&format!("{best:.3} "));
        }
        println!("{line}");
    }
}

#[test]
#[ignore]
fn probe_mirror_symmetry() {
    use clpt_core::{infidelity_exact, Protocol};
    for (problem, name) in [
        (build_single_qubit_problem(), "1q"),
        (build_two_qubit_problem(), "2q"),
    ] {
        let l = 24usize;
        let t = 2.0;
        let mut rng = clpt_core::rng::derive_stream(7, &[1]);
        let p = Protocol::random_uniform(t, l, &mut rng);
        let mirrored: Vec<f64> = (0..l).map(|i| -p.values()[l - 1 - i]).collect();
        let q = Protocol::new(t, mirrored).unwrap();
        let di = (infidelity_exact(&problem, &p) - infidelity_exact(&problem, &q)).abs();
        let sp = hessian_spectrum_at(&problem, &p).unwrap();
        let sq = hessian_spectrum_at(&problem, &q).unwrap();
        let ds = (&sp.eigenvalues - &sq.eigenvalues).amax();
        println!("{name}: |I(p)-I(mirror)| = {di:.3e}, spectrum diff = {ds:.3e}");
    }
}

#[test]
#[ignore]
fn probe_sd_qbb() {
    use clpt_core::samplers::*;
    let problem = build_single_qubit_problem();
    let t0 = std::time::Instant::now();
    for &t in &[0.6, 0.9, 1.2, 1.5, 2.0, 2.4, 2.6, 3.0] {
        let landscape = Landscape::Exact { problem: &problem, t };
        let mut ens = SampleEnsemble::new("single-qubit", t, 200, "exact", true);
        for seed in 0..250u64 {
            let p = stochastic_descent(&landscape, 200, seed).unwrap();
            ens.push_run(seed, vec![p]).unwrap();
        }
        let q = q_bb(&ens).unwrap();
        let pred = (1.0 - 0.9864 / t).max(0.0);
        println!("T={t}: q_BB = {q:.4}, 1-Tc/T = {pred:.4}");
    }
    println!("elapsed {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_lmc_run_1q() {
    use clpt_core::samplers::*;
    let problem = build_single_qubit_problem();
    for &(t, beta, iters) in &[(2.6, 1e5, 2_080_000usize), (2.4, 1e5, 520_000)] {
        let t0 = std::time::Instant::now();
        let mut config = LMCConfig::new(beta, 10f64.powf(-1.5), 64, t, iters, 1 << 12).unwrap();
        config.trap_threshold = 1e-6;
        config.exponent_sites = Some(512);
        if t < 2.51 {
            let curve = clpt_core::stability::trace_delta(&problem, &[t], 64).unwrap();
            config.reference_infidelity = curve.points[0].branches[0].infidelity;
            config.trap_threshold = 1e-4;
            println!("T={t}: reference infidelity {:.6e}", config.reference_infidelity);
        }
        let mut ens = SampleEnsemble::new("single-qubit", t, 64, "exact", false);
        let mut trapped = 0;
        let mut per_run = Vec::new();
        for seed in 0..8u64 {
            let run = lmc_run(&problem, &config, seed).unwrap();
            if run.trapped {
                trapped += 1;
            } else {
                let mut single = SampleEnsemble::new("single-qubit", t, 64, "exact", false);
                single.push_run(seed, run.samples.clone()).unwrap();
                per_run.push((q_continuous(&single).unwrap(), run.samples.len()));
                ens.push_run(seed, run.samples.clone()).unwrap();
            }
        }
        let q = q_continuous(&ens);
        println!(
            "T={t} beta={beta:.0e}: q = {q:?}, trapped {trapped}/8, per-run (q, M): {per_run:?}, {:?}",
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn probe_covariance_beta_dependence() {
    use clpt_core::samplers::*;
    let problem = build_single_qubit_problem();
    // Probe A: q saturation of a single cold run under the 512-site
    // exponent convention (growing-window per-run variance).
    let t0 = std::time::Instant::now();
    let mut config =
        LMCConfig::new(1e6, 10f64.powf(-1.5), 64, 2.6, 56_000_000, 1 << 12).unwrap();
    config.exponent_sites = Some(512);
    let run = lmc_run(&problem, &config, 11).unwrap();
    println!(
        "saturation run: {} samples, acc {:.3}, {:?}",
        run.samples.len(),
        run.acceptance_rate,
        t0.elapsed()
    );
    let m = run.samples.len();
    for &frac in &[0.1, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let k = ((m as f64 * frac) as usize).max(2);
        let mut ens = SampleEnsemble::new("single-qubit", 2.6, 64, "exact", false);
        ens.push_run(11, run.samples[..k].to_vec()).unwrap();
        println!("  window {k:5} samples: q = {:.4}", q_continuous(&ens).unwrap());
    }

    // Probe B: saturated per-run q ladder under the plain grid convention.
    for &(beta, iters) in &[(1e4, 2_000_000usize), (1e5, 2_000_000), (1e6, 10_000_000)] {
        let t0 = std::time::Instant::now();
        let config =
            LMCConfig::new(beta, 10f64.powf(-1.5), 64, 2.6, iters, 1 << 12).unwrap();
        let mut qs = Vec::new();
        for seed in 0..3u64 {
            let run = lmc_run(&problem, &config, seed).unwrap();
            let mut ens = SampleEnsemble::new("single-qubit", 2.6, 64, "exact", false);
            ens.push_run(seed, run.samples).unwrap();
            qs.push(q_continuous(&ens).unwrap());
        }
        println!("plain beta={beta:.0e} ({iters} iters): per-run q {qs:?}, {:?}", t0.elapsed());
    }
}

#[test]
#[ignore]
fn probe_covariance_pooled_runs() {
    use clpt_core::samplers::*;
    let problem = build_single_qubit_problem();
    let mut spectra = Vec::new();
    for &beta in &[1e4, 1e6] {
        let t0 = std::time::Instant::now();
        let mut config =
            LMCConfig::new(beta, 10f64.powf(-1.5), 64, 2.6, 425_000, 1 << 12).unwrap();
        config.exponent_sites = Some(512);
        let mut pooled = Vec::new();
        for seed in 0..48u64 {
            let run = lmc_run(&problem, &config, seed).unwrap();
            assert!(!run.trapped, "seed {seed} trapped");
            pooled.extend(run.samples);
        }
        let spec = covariance_spectrum(&pooled).unwrap();
        println!("beta={beta:.0e}: {} pooled samples, {:?}", pooled.len(), t0.elapsed());
        spectra.push(spec);
    }
    for k in 0..64 {
        let r = spectra[0][k] / spectra[1][k];
        println!(
            "k={k:2}: {:.3e} {:.3e}  ratio(warm/cold) {:.2}",
            spectra[0][k], spectra[1][k], r
        );
    }
}

#[test]
#[ignore]
fn probe_step_dual_into_matches_expm() {
    use clpt_core::problem::{step_dual, step_dual_into};
    for (problem, name) in [
        (build_single_qubit_problem(), "1q"),
        (build_two_qubit_problem(), "2q"),
    ] {
        let mut worst = 0.0_f64;
        for &s in &[-1.0, -0.3, 0.0, 0.7, 1.0] {
            for &dt in &[0.01, 0.1, 0.5] {
                let direct =
                    clpt_core::linalg::expm(&((&problem.m0 + &problem.m1 * s) * dt));
                let mut fast = nalgebra::DMatrix::zeros(problem.dual_dim, problem.dual_dim);
                step_dual_into(&problem, s, dt, &mut fast);
                worst = worst.max((&direct - &fast).amax());
                worst = worst.max((&direct - step_dual(&problem, s, dt)).amax());
            }
        }
        println!("{name}: max |expm - fast| = {worst:.3e}");
    }
}

#[test]
#[ignore]
fn probe_field_theory_1q() {
    use clpt_core::field_theory::*;
    let p = build_single_qubit_problem();
    let t_c = 0.9864091;
    let t_qsl = 2.5120856;
    for l in [64usize, 128, 256] {
        let center = window_center(2.52, t_c, l).unwrap();
        let data = spectral_data_at(&p, &center, KAPPA_BOUNDARY, TAU_LAMBDA_DEFAULT).unwrap();
        println!(
            "L={l}: n_plus={} c={:.6e} I={:.6e} excluded={:?}",
            data.n_plus, data.c, data.i_const, data.excluded
        );
        println!(
            "  lambda head: {:?}",
            data.lambda.iter().take(6).map(|v| format!("{v:.4e}")).collect::<Vec<_>>()
        );
        println!(
            "  lambda tail: {:?}",
            data.lambda.iter().rev().take(4).map(|v| format!("{v:.4e}")).collect::<Vec<_>>()
        );
        match q_prediction(&data) {
            Ok(q) => println!(
                "  y*={:.6e} bracket=({:.4e},{:.4e}) res={:.2e} q_lead={:.6} q_corr={:.6} diff={:+.2e}",
                q.saddle.y_star, q.saddle.bracket.0, q.saddle.bracket.1, q.saddle.residual,
                q.leading, q.corrected, q.difference
            ),
            Err(e) => println!("  q_prediction error: {e}"),
        }
    }
}

#[test]
#[ignore]
fn probe_qbb_scaling_1q() {
    use clpt_core::field_theory::*;
    let p = build_single_qubit_problem();
    let t_c = 0.9864091;
    let t_qsl = 2.5120856;
    let l = 64;
    let grid: Vec<f64> = (0..10).map(|i| 2.52 + 0.02 * i as f64).collect();
    let mut all = Vec::new();
    for &t in &grid {
        let center = window_center(t, t_c, l).unwrap();
        let data = spectral_data_at(&p, &center, KAPPA_BOUNDARY, TAU_LAMBDA_DEFAULT).unwrap();
        all.push(data);
    }
    let scaling = qbb_scaling(&all, t_qsl).unwrap();
    for pt in &scaling.points {
        println!(
            "T={:.3} dT={:.4} dq_bb={:+.6} soft_dev={:.4} stiff_norm={:.4e} y*={:.4e} mean_x head={:?}",
            pt.t, pt.delta_t, pt.dq_bb, pt.soft_deviation, pt.stiff_norm, pt.saddle.y_star,
            pt.mean_x.iter().take(5).map(|v| format!("{v:+.4}")).collect::<Vec<_>>()
        );
    }
    println!(
        "fit: a={:.6} b={:+.6} R2={:.6} stiff_exp={:.3}",
        scaling.intercept, scaling.slope, scaling.r_squared, scaling.stiff_exponent
    );
    // also check the alternative overlap-drift form for comparison
    for pt in &scaling.points {
        let data = all.iter().find(|d| (d.t - pt.t).abs() < 1e-12).unwrap();
        let alt: f64 = -(0..data.l())
            .map(|n| 2.0 * data.x0[n] * pt.mean_x[n] + pt.mean_x[n] * pt.mean_x[n])
            .sum::<f64>();
        println!("T={:.3} dq_spec={:+.6} dq_overlap_alt={:+.6}", pt.t, pt.dq_bb, alt);
    }
}

#[test]
#[ignore]
fn probe_qbb_modes_detail() {
    use clpt_core::field_theory::*;
    let p = build_single_qubit_problem();
    let t_c = 0.9864091;
    let l = 64;
    for &t in &[2.52f64, 2.54, 2.56, 2.60, 2.66] {
        for frac in [false, true] {
            let delta = 0.5 * (t - t_c);
            let center = if frac {
                s_delta_fractional(t, delta, l).unwrap()
            } else {
                s_delta(t, delta, l).unwrap()
            };
            let data = spectral_data_at(&p, &center, KAPPA_BOUNDARY, TAU_LAMBDA_DEFAULT).unwrap();
            let mut g0 = data.i_const;
            for n in 0..l {
                let dx = data.x0[n] - data.x1[n];
                g0 += 0.5 * data.lambda[n] * dx * dx;
            }
            println!(
                "T={t:.2} frac={frac} c={:.3e} I={:+.3e} g(0)={:+.4e} n_plus={}",
                data.c, data.i_const, g0, data.n_plus
            );
            for n in 0..4 {
                let dx = data.x0[n] - data.x1[n];
                println!(
                    "   n={} lam={:+.4e} b={:+.4e} x0={:+.4e} x1={:+.4e} dx={:+.4e}",
                    n + 1, data.lambda[n], data.b[n], data.x0[n], data.x1[n], dx
                );
            }
        }
    }
}
