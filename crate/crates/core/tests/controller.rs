use gdflow::adaptivity::{
    accept_or_reject, error_estimate, integrate, tolerance, IntegrationOptions, RunLog, StepControl,
};
use gdflow::benchmarks::{run_manufactured, ManufacturedCase};
use gdflow::fem::{FeSpace, Operators};
use gdflow::timestepping::{SchemeKind, Stepper};
use proptest::prelude::*;

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newest-first times with positive gaps.
fn times_from(t0: f64, gaps: &[f64]) -> Vec<f64> {
    let mut t = vec![t0];
    for g in gaps {
        let last = *t.last().unwrap();
        t.push(last - g);
    }
    t
}

proptest! {
    #[test]
    fn estimate_vanishes_on_polynomials_of_the_method_order(
        k in 1usize..=2,
        t0 in -1.0f64..1.0,
        gaps in prop::collection::vec(0.01f64..0.5, 3),
        coef in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let t = times_from(t0, &gaps[..k + 1]);
        // degree-k trajectories in two components
        let f = |s: f64| -> Vec<f64> {
            (0..2).map(|c| (0..=k).map(|d| coef[3 * c + d] * s.powi(d as i32)).sum()).collect()
        };
        let samples: Vec<Vec<f64>> = t.iter().map(|&s| f(s)).collect();
        let refs: Vec<&[f64]> = samples.iter().map(|v| v.as_slice()).collect();
        let est = error_estimate(&t, &refs, k, euclid).unwrap();
        let scale: f64 = coef.iter().map(|c| c.abs()).sum::<f64>() + 1.0;
        prop_assert!(est <= 1e-10 * scale, "k = {k}: {est:e}");
    }

    #[test]
    fn decision_is_invariant_under_scaling(
        k in 1usize..=2,
        gaps in prop::collection::vec(0.01f64..0.5, 3),
        raw in prop::collection::vec(-1.0f64..1.0, 16),
        tol_r in 1e-6f64..1e-2,
        c in prop::sample::select(vec![10.0, 100.0]),
    ) {
        let t = times_from(0.0, &gaps[..k + 1]);
        // snapshots with norm far above the 0.001 floor
        let snaps: Vec<Vec<f64>> = (0..k + 2).map(|i| raw[4 * i..4 * i + 4].iter().map(|v| 50.0 + v).collect()).collect();
        let refs: Vec<&[f64]> = snaps.iter().map(|v| v.as_slice()).collect();
        let est = error_estimate(&t, &refs, k, euclid).unwrap();
        let tol = tolerance(euclid(&snaps[0]), euclid(&snaps[1]), tol_r);

        let scaled: Vec<Vec<f64>> = snaps.iter().map(|v| v.iter().map(|x| c * x).collect()).collect();
        let srefs: Vec<&[f64]> = scaled.iter().map(|v| v.as_slice()).collect();
        let est_c = error_estimate(&t, &srefs, k, euclid).unwrap();
        let tol_c = tolerance(euclid(&scaled[0]), euclid(&scaled[1]), tol_r);
        prop_assert!((est_c - c * est).abs() <= 1e-9 * c * est.max(1e-300));
        let floor = tol_r * 0.001 * c;
        prop_assert!((tol_c - c * tol).abs() <= floor * 1.0001);
        // away from the threshold the decision is unchanged
        if (est / tol - 1.0).abs() > 1e-4 {
            prop_assert_eq!(accept_or_reject(est, tol), accept_or_reject(est_c, tol_c));
        }
    }
}

#[test]
fn manufactured_run_switches_order_early_and_keeps_time_monotone() {
    let space = FeSpace::unit_square(6).unwrap();
    let ops = Operators::new(&space);
    let case = ManufacturedCase::new(1e-6);
    for scheme in [SchemeKind::Imex, SchemeKind::SemiImplicit] {
        let stepper = Stepper::new(&space, &ops, &case, case.nu, case.mu, scheme).unwrap();
        let u0 = case.initial_velocity(&space, &ops, 0.0).unwrap();
        let opts = IntegrationOptions::adaptive(1.0, 1e-5);
        let mut seen = Vec::new();
        let res = integrate(&stepper, u0, vec![0.0; ops.n_pr()], &opts, |s| {
            seen.push((s.index, s.t, s.dt, s.order));
            Ok(())
        })
        .unwrap();
        let sum = &res.summary;
        assert_eq!(res.t, 1.0);
        assert_eq!(seen.len(), sum.accepted_steps);
        assert!(seen.windows(2).all(|w| w[1].1 > w[0].1 && w[1].0 == w[0].0 + 1));
        assert!((seen.last().unwrap().1 - 1.0).abs() < 1e-14);
        let switch = sum.switch_step.expect("order 2 reached");
        assert!(switch <= 10, "{scheme}: switched at step {switch}");
        assert!(seen.iter().filter(|s| s.3 == 1).count() <= 10);

        // logged ratio bounds enclose every accepted ratio
        let ratios: Vec<f64> = seen.windows(2).map(|w| w[1].2 / w[0].2).collect();
        for r in &ratios[1..] {
            assert!(*r >= sum.omega_min * (1.0 - 1e-12) && *r <= sum.omega_max * (1.0 + 1e-12));
        }
        assert!(sum.omega_max <= 2.0 + 1e-12);

        // every factorization after the first is flagged on some attempt
        let flagged = res.log.records().iter().filter(|r| r.refactored).count();
        assert_eq!(sum.factorizations, flagged + 1, "{scheme}");
        let attempts = res.log.records().len();
        assert_eq!(res.log.accepted().count(), sum.accepted_steps);
        assert!(attempts >= sum.accepted_steps + sum.rejections);
        assert!(sum.rejections as f64 <= 0.05 * attempts as f64, "{scheme}: {} of {attempts}", sum.rejections);
    }
}

#[test]
fn first_record_is_the_unestimated_euler_step() {
    let case = ManufacturedCase {
        t_final: 0.2,
        ..ManufacturedCase::new(1e-4)
    };
    let run = run_manufactured(&case, 4, SchemeKind::Imex, StepControl::Adaptive { tol_r: 1e-4 }).unwrap();
    let recs = run.log.records();
    assert!(recs[0].est.is_nan() && recs[0].order == 1);
    assert!((recs[0].dt - 1e-4).abs() < 1e-18);
    // only Euler steps from t = 0 carry no estimate
    for r in recs.iter().filter(|r| r.est.is_nan()) {
        assert!(r.order == 1 && (r.t - r.dt).abs() < 1e-15);
    }
    let first = run.log.accepted().next().unwrap();
    assert!(first.est.is_nan());
    let accepted: Vec<_> = run.log.accepted().collect();
    assert!(accepted.windows(2).all(|w| w[1].t > w[0].t));
    assert!((accepted.last().unwrap().t - 0.2).abs() < 1e-14);
}

#[test]
fn fixed_control_rejects_nonpositive_steps() {
    let space = FeSpace::unit_square(2).unwrap();
    let ops = Operators::new(&space);
    let case = ManufacturedCase::new(1e-2);
    let stepper = Stepper::new(&space, &ops, &case, case.nu, case.mu, SchemeKind::Imex).unwrap();
    let u0 = vec![0.0; ops.n_vel()];
    for control in [StepControl::Fixed { dt: 0.0 }, StepControl::Fixed { dt: -0.1 }, StepControl::Adaptive { tol_r: 0.0 }] {
        let opts = IntegrationOptions {
            t0: 0.0,
            t_final: 1.0,
            control,
            max_dt: None,
        };
        assert!(integrate(&stepper, u0.clone(), vec![0.0; ops.n_pr()], &opts, |_| Ok(())).is_err());
    }
}

#[test]
fn run_log_csv_has_one_row_per_attempt() {
    let case = ManufacturedCase {
        t_final: 0.1,
        ..ManufacturedCase::new(1e-3)
    };
    let run = run_manufactured(&case, 3, SchemeKind::SemiImplicit, StepControl::Adaptive { tol_r: 1e-4 }).unwrap();
    let mut buf = Vec::new();
    run.log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,dt,est,tol,accepted,refine_iters,refactored"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), run.log.records().len());
    for (row, rec) in rows.iter().zip(run.log.records()) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 7);
        let t: f64 = f[0].parse().unwrap();
        assert!((t - rec.t).abs() <= 1e-10 * rec.t.abs().max(1e-300));
        assert_eq!(f[4], if rec.accepted { "1" } else { "0" });
    }
    assert!(RunLog::default().records().is_empty());
}
