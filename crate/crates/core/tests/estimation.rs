use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use ramping::estimate::{
    bootstrap, bound_value, design_matrix, fit, ls_gradient, ls_objective, ml_gradient,
    ml_objective, BootstrapOptions, BoundMethod, ConditionNumbers, FitOptions, Norm, Objective,
};
use ramping::model::{feature_map, random_feasible, simulate, HistoryBlock, ModelParams};
use ramping::rng::stream_rng;
use ramping::EventSequence;

fn random_events(k: usize, days: usize, m: u8, seed: u64) -> EventSequence {
    let mut rng = stream_rng(seed, 77);
    let states = (0..k * days).map(|_| rng.random_range(0..=m)).collect();
    EventSequence::from_rows(m as usize, k, states).unwrap()
}

fn blend(a: &ModelParams, b: &ModelParams, t: f64) -> ModelParams {
    let flat: Vec<f64> = a.flat().iter().zip(b.flat()).map(|(x, y)| t * x + (1.0 - t) * y).collect();
    ModelParams::from_flat(a.k(), a.d(), a.m(), a.is_single(), &flat).unwrap()
}

#[test]
fn objectives_are_convex_on_the_feasible_set() {
    let mut rng = stream_rng(31, 0);
    for (m, single) in [(1usize, true), (2, false)] {
        let ev = random_events(2, 120, m as u8, 5 + m as u64);
        for _ in 0..50 {
            let a = random_feasible(2, 2, m, single, 0.01, &mut rng);
            let b = random_feasible(2, 2, m, single, 0.01, &mut rng);
            let t: f64 = rng.random();
            let mid = blend(&a, &b, t);
            for f in [ls_objective, ml_objective] {
                let lhs = f(&mid, &ev).unwrap();
                let rhs = t * f(&a, &ev).unwrap() + (1.0 - t) * f(&b, &ev).unwrap();
                assert!(lhs <= rhs + 1e-10, "{lhs} > {rhs}");
            }
        }
    }
}

#[test]
fn ml_gradient_matches_central_differences() {
    let mut rng = stream_rng(32, 0);
    for (m, single) in [(1usize, true), (2, false)] {
        let ev = random_events(2, 80, m as u8, 40 + m as u64);
        for _ in 0..20 {
            let p = random_feasible(2, 2, m, single, 0.02, &mut rng);
            let g = ml_gradient(&p, &ev).unwrap();
            let flat = p.flat();
            let mut fd = vec![0.0; flat.len()];
            for i in 0..flat.len() {
                let h = 1e-6 * flat[i].abs().max(1.0);
                let mut up = flat.clone();
                up[i] += h;
                let mut dn = flat.clone();
                dn[i] -= h;
                let at = |v: &[f64]| {
                    let q = ModelParams::from_flat(2, 2, m, single, v).unwrap();
                    ml_objective(&q, &ev).unwrap()
                };
                fd[i] = (at(&up) - at(&dn)) / (2.0 * h);
            }
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / norm.max(1e-12) <= 1e-6, "relative error {}", diff / norm);
        }
    }
}

#[test]
fn ls_trace_is_monotone_and_fits_are_feasible() {
    for (m, seed) in [(1u8, 1u64), (2, 2), (1, 3)] {
        let ev = random_events(3, 300, m, seed);
        for objective in [Objective::Ls, Objective::Ml] {
            let r = fit(&ev, 2, &FitOptions::with_objective(objective)).unwrap();
            assert!(r.converged, "{:?}", r.warnings);
            let rho = if objective == Objective::Ml { Some(1e-3) } else { None };
            assert!(r.params.check_feasible(rho).feasible);
            for loc in &r.per_location {
                for w in loc.trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-14 * w[0].abs(), "trace increased {} -> {}", w[0], w[1]);
                }
            }
        }
    }
}

/// Oracle: dense normal equations per location built by a plain loop.
fn normal_equation_solution(ev: &EventSequence, d: usize) -> Vec<f64> {
    let k = ev.locations();
    let kappa = k + k * k * d;
    let mut a = DMatrix::<f64>::zeros(kappa, kappa);
    let mut b = DVector::<f64>::zeros(kappa);
    let mut n = 0.0;
    for t in d..ev.days() {
        let h = HistoryBlock::from_events(ev, t, d).unwrap();
        let eta = feature_map(&h).unwrap().transpose();
        let y = DVector::from_iterator(k, ev.row(t).unwrap().iter().map(|&s| s as f64));
        a += &eta * eta.transpose();
        b += &eta * y;
        n += 1.0;
    }
    a /= n;
    b /= n;
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

#[test]
fn interior_ls_fit_matches_normal_equations() {
    let mut rng = stream_rng(33, 0);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 5 {
        seed += 1;
        let truth = random_feasible(2, 1, 1, true, 0.1, &mut rng);
        let ev = simulate(&truth, 4000, seed, None).unwrap();
        let oracle = normal_equation_solution(&ev, 1);
        let op = ModelParams::from_flat(2, 1, 1, true, &oracle).unwrap();
        if !op.check_feasible(Some(1e-6)).feasible {
            continue;
        }
        let r = fit(&ev, 1, &FitOptions::default()).unwrap();
        let err = r.params.flat().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6, "error {err}");
        // the empirical regret vanishes at an interior solution
        let regret = ls_gradient(&r.params, &ev).unwrap();
        assert!(regret.iter().all(|g| g.abs() <= 1e-7));
        checked += 1;
    }
}

#[test]
fn boundary_active_fit_is_stationary() {
    // location 2 never fires, so its birthrate sits on the lower boundary
    let mut rng = stream_rng(34, 0);
    let states: Vec<u8> = (0..600)
        .map(|i| if i % 2 == 0 { rng.random_range(0..=1) } else { 0 })
        .collect();
    let ev = EventSequence::from_rows(1, 2, states).unwrap();
    let r = fit(&ev, 2, &FitOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.final_gradient_norm <= 1e-8);
    assert!(r.params.local(1).iter().all(|v| v.abs() < 1e-7));
}

#[test]
fn design_matrix_matches_brute_force() {
    let ev = random_events(2, 60, 1, 9);
    let d = 2;
    let dm = design_matrix(&ev, d).unwrap();
    let full = dm.full();
    let kappa = 2 + 4 * d;
    let mut oracle = DMatrix::<f64>::zeros(kappa, kappa);
    for t in d..ev.days() {
        let eta = feature_map(&HistoryBlock::from_events(&ev, t, d).unwrap()).unwrap().transpose();
        oracle += &eta * eta.transpose();
    }
    oracle /= (ev.days() - d) as f64;
    for i in 0..kappa {
        for j in 0..kappa {
            assert_abs_diff_eq!(full[(i, j)], oracle[(i, j)], epsilon = 1e-12);
            assert_eq!(full[(i, j)], full[(j, i)]);
        }
    }
    let eig = nalgebra::SymmetricEigen::new(full.clone());
    assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));

    // structured and generic condition numbers agree
    let a = ConditionNumbers::of_design(&dm);
    let b = ConditionNumbers::of_matrix(&full);
    assert_abs_diff_eq!(a.theta_2, b.theta_2, epsilon = 1e-10);
    assert_abs_diff_eq!(a.theta_inf, b.theta_inf, epsilon = 1e-8);
    assert_abs_diff_eq!(a.theta_1, b.theta_1, epsilon = 1e-10);
    assert!(a.theta_1 <= a.theta_2);
}

#[test]
fn regret_at_truth_concentrates() {
    let mut rng = stream_rng(35, 0);
    let truth = random_feasible(2, 2, 1, true, 0.05, &mut rng);
    let kappa = truth.kappa();
    let eps: f64 = 0.1;
    let n = 2000.0;
    let log = (2.0 * kappa as f64 / eps).ln();
    let ls_radius = (log / (2.0 * n)).sqrt() + log / (3.0 * n);
    let rho = 0.05;
    let ml_radius = (2.0 * log / n).sqrt() / rho;
    let (mut ls_ok, mut ml_ok) = (0, 0);
    let trials = 60;
    for seed in 0..trials {
        let ev = simulate(&truth, 2002, 1000 + seed, None).unwrap();
        let f = ls_gradient(&truth, &ev).unwrap();
        if f.iter().all(|v| v.abs() <= ls_radius) {
            ls_ok += 1;
        }
        let g = ml_gradient(&truth, &ev).unwrap();
        if g.iter().all(|v| v.abs() <= ml_radius) {
            ml_ok += 1;
        }
    }
    let need = ((1.0 - eps) * trials as f64).ceil() as i32;
    assert!(ls_ok >= need, "LS regret inside radius in {ls_ok}/{trials}");
    assert!(ml_ok >= need, "ML regret inside radius in {ml_ok}/{trials}");
}

#[test]
fn error_bounds_cover_at_moderate_n() {
    let mut rng = stream_rng(36, 0);
    let truth = random_feasible(2, 1, 1, true, 0.05, &mut rng);
    let trials = 50;
    for objective in [Objective::Ls, Objective::Ml] {
        let mut covered = [0; 3];
        for seed in 0..trials {
            let ev = simulate(&truth, 2001, 500 + seed, None).unwrap();
            let r = fit(&ev, 1, &FitOptions::with_objective(objective)).unwrap();
            let diff: Vec<f64> = r.params.flat().iter().zip(truth.flat()).map(|(a, b)| a - b).collect();
            let norms = [
                diff.iter().map(|v| v.abs()).sum::<f64>(),
                diff.iter().map(|v| v * v).sum::<f64>().sqrt(),
                diff.iter().map(|v| v.abs()).fold(0.0, f64::max),
            ];
            for (i, p) in [Norm::One, Norm::Two, Norm::Inf].iter().enumerate() {
                let b = r.bounds.iter().find(|b| b.p == *p).unwrap();
                if norms[i] <= b.value {
                    covered[i] += 1;
                }
            }
        }
        // at most an epsilon share of misses, with 3-sigma binomial slack
        let slack = 3.0 * (0.1f64 * 0.9 / trials as f64).sqrt();
        let need = ((0.9 - slack) * trials as f64).floor() as i32;
        assert!(covered.iter().all(|&c| c >= need), "{objective}: {covered:?}");
    }
}

#[test]
fn bootstrap_degenerate_and_scaling() {
    let ev = EventSequence::from_rows(1, 2, vec![0; 200]).unwrap();
    let opts = FitOptions::default();
    let r = fit(&ev, 1, &opts).unwrap();
    let boot = BootstrapOptions { replicates: 10, seed: 3, epsilon: 0.05 };
    let b = bootstrap(&ev, 1, &opts, &boot, &r.params).unwrap();
    assert_eq!(b.used, 10);
    assert!(b.se.iter().all(|&s| s.abs() < 1e-8));

    let mut rng = stream_rng(37, 0);
    let truth = random_feasible(2, 1, 1, true, 0.05, &mut rng);
    let boot = BootstrapOptions { replicates: 100, seed: 4, epsilon: 0.05 };
    let mean_se = |n: usize| {
        let ev = simulate(&truth, n + 1, 8, None).unwrap();
        let r = fit(&ev, 1, &opts).unwrap();
        let b = bootstrap(&ev, 1, &opts, &boot, &r.params).unwrap();
        for i in 0..b.se.len() {
            assert!(b.ci_low[i] <= b.ci_high[i]);
        }
        b.se.iter().sum::<f64>() / b.se.len() as f64
    };
    let ratio = mean_se(2000) / mean_se(8000);
    assert!((1.5..=2.7).contains(&ratio), "SE ratio {ratio}");

    let ev = simulate(&truth, 400, 8, None).unwrap();
    let r = fit(&ev, 1, &opts).unwrap();
    let a = bootstrap(&ev, 1, &opts, &boot, &r.params).unwrap();
    let b = bootstrap(&ev, 1, &opts, &boot, &r.params).unwrap();
    assert_eq!(a.se, b.se);
}

#[test]
fn bound_ratio_depends_only_on_thetas() {
    for numerator_n in [50.0, 365.0, 10_000.0] {
        let b1 = bound_value(9e-5, 9e-5, 819, numerator_n, 0.1, BoundMethod::Ls).unwrap();
        let b2 = bound_value(0.00668, 9e-5, 819, numerator_n, 0.1, BoundMethod::Ls).unwrap();
        assert_abs_diff_eq!(b1 / b2, (0.00668f64 / 9e-5).sqrt(), epsilon = 1e-12);
    }
}

#[test]
fn multi_state_fit_recovers_parameters() {
    let mut rng = stream_rng(38, 0);
    let truth = random_feasible(2, 1, 2, false, 0.05, &mut rng);
    let ev = simulate(&truth, 20_000, 3, None).unwrap();
    for objective in [Objective::Ls, Objective::Ml] {
        let r = fit(&ev, 1, &FitOptions::with_objective(objective)).unwrap();
        assert!(r.converged, "{:?}", r.warnings);
        assert!(r.params.check_feasible(None).feasible);
        // probabilities, unlike the over-parameterised coefficients, are identified
        for h in 0..9u8 {
            let hist = HistoryBlock::new(1, 2, vec![h % 3, h / 3]).unwrap();
            let a = r.params.probs(&hist).unwrap();
            let b = truth.probs(&hist).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 0.05, "{x} vs {y}");
            }
        }
    }
}
