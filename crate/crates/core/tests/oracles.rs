//! Library results checked against the independent oracles in `common`.

#![allow(clippy::needless_range_loop)]

mod common;

use anchor_core::anchor::{
    anchor_solve, check_feasible, random_allocation, uniform_allocation, AnchorParams,
};
use anchor_core::fim::{fim_cm, FrequencyAllocation, IntervalModel};
use anchor_core::freq_alloc::build_assignment_problem;
use anchor_core::kinematics::{composite_measure_ils, synthesize_measurements, transition, State};
use anchor_core::power_time_alloc::{
    ascent_descent_solve, constraint_system, optimal_v, weights_at, AscentParams,
};
use anchor_core::rng::{stream, Stream};
use anchor_core::scenario::{desk3_scenario, reference_scenario, IntervalSchedule, Scenario};
use anchor_core::tracking::{
    first_interval_model, initial_tracks, run_fusion_interval, truth_trajectory, Method, TrialSeeds,
};
use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 42;

/// Objective of desk3 at the uniform allocation in the first interval,
/// computed with the oracle and frozen.
const DESK3_UNIFORM_G: f64 = 9.40852117310894e-4;

fn predicted_and_prior(s: &Scenario) -> (Vec<State>, Vec<Matrix4<f64>>) {
    let (_, tracks) = initial_tracks(
        s,
        TrialSeeds {
            seed: SEED,
            trial: 0,
        },
    )
    .unwrap();
    (
        tracks
            .iter()
            .map(|t| transition(&t.filtered, s.fusion_period))
            .collect(),
        tracks.iter().map(|t| t.bayes).collect(),
    )
}

fn rel(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn desk3_bayesian_fim_matches_oracle() {
    let s = desk3_scenario();
    let model = first_interval_model(&s, SEED).unwrap();
    let (pred, prior) = predicted_and_prior(&s);
    let mut rng = stream(SEED, Stream::Verify, &[100]);
    let mut allocs = vec![uniform_allocation(&model)];
    for _ in 0..5 {
        allocs.push(random_allocation(&model, &mut rng).unwrap());
    }
    for a in &allocs {
        let lib = model.bayesian_fims(&a.z, &a.freq);
        let oracle: Vec<Matrix4<f64>> = (0..s.targets.len())
            .map(|q| common::bayes_fim(&s, &a.z, &a.freq.blocks, q, 0, &pred[q], &prior[q]))
            .collect();
        for (l, o) in lib.iter().zip(&oracle) {
            assert!(rel(l, o) < 1e-6, "B mismatch {}", rel(l, o));
        }
        let g = model.objective(&a.z, &a.freq).unwrap();
        let go = common::objective(&s, &oracle);
        assert!((g - go).abs() < 1e-6 * go, "{g} vs {go}");
    }
    let u = &allocs[0];
    let go = common::objective(
        &s,
        &[common::bayes_fim(
            &s,
            &u.z,
            &u.freq.blocks,
            0,
            0,
            &pred[0],
            &prior[0],
        )],
    );
    assert!(
        (go - DESK3_UNIFORM_G).abs() < 1e-12 * DESK3_UNIFORM_G,
        "{go}"
    );
    assert!(
        (u.objective - DESK3_UNIFORM_G).abs() < 1e-6 * DESK3_UNIFORM_G,
        "{}",
        u.objective
    );
}

#[test]
fn desk3_assignment_problem_expansion() {
    let s = desk3_scenario();
    let model = first_interval_model(&s, SEED).unwrap();
    let mut rng = stream(SEED, Stream::Verify, &[101]);
    let z = random_allocation(&model, &mut rng).unwrap().z;
    let p = build_assignment_problem(&model, &z);
    let off = common::comm_offset(&s);
    let users = common::macro_users(&s);
    for (j, &u) in users.iter().enumerate() {
        let user = &s.users[u];
        for n in 0..s.num_blocks() {
            let mut a = 0.0;
            for i in 0..s.radars.len() {
                let e = &s.radars[i].schedule[0];
                let m = common::schedule(e.initial_time, e.revisit_interval, s.fusion_period, 0)
                    .len() as f64;
                let (pp, tt) = common::pt(&s, &z, i, 0);
                a += user.radar_to_user_gains[i] * common::overlap(&s, i, n) * m * pp * tt;
            }
            assert!(
                (p.a_tilde[j][n] - a).abs() <= 1e-12 * a.abs().max(1.0),
                "a~[{j}][{n}]"
            );
            for i in 0..s.radars.len() {
                let b = user.user_to_radar_gains[i] * z[off + j] * common::overlap(&s, i, n);
                assert!((p.b_tilde[i][j][n] - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
        let gamma = model.thresholds[j].exp_m1();
        let eps =
            (user.channel_gain * z[off + j] - user.noise_power * gamma) * s.fusion_period / gamma;
        assert!((p.eps_tilde[j] - eps).abs() <= 1e-12 * eps.abs().max(1.0));
    }
}

#[test]
fn desk3_constraint_rows_match_expansion() {
    let s = desk3_scenario();
    let model = first_interval_model(&s, SEED).unwrap();
    let freq = FrequencyAllocation { blocks: vec![1, 3] };
    let cs = constraint_system(&model, &freq);
    assert_eq!(cs.a.nrows(), 5);
    assert_eq!(cs.a.ncols(), 4);
    let mut rng = stream(SEED, Stream::Verify, &[102]);
    let t0 = s.fusion_period;
    for _ in 0..20 {
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..0.5)).collect();
        let lhs = &cs.a * nalgebra::DVector::from_column_slice(&z) - &cs.b;
        // budgets: sum_q M P - 1, sum_q M T - 1, sum P_c - 1
        let m = |i: usize| {
            let e = &s.radars[i].schedule[0];
            common::schedule(e.initial_time, e.revisit_interval, t0, 0).len() as f64
        };
        assert!((lhs[0] - (m(0) * z[0] - 1.0)).abs() < 1e-12);
        assert!((lhs[1] - (m(1) * z[1] - 1.0)).abs() < 1e-12);
        assert!((lhs[2] - (z[2] + z[3] - 1.0)).abs() < 1e-12);
        // throughput rows: (gamma (radar energy + sigma^2 T0) - beta P_c T0) / gamma
        for j in 0..2 {
            let user = &s.users[j];
            let gamma = model.thresholds[j].exp_m1();
            let sinr = common::throughput(&s, &z, &freq.blocks, j, 0).exp_m1();
            let denom = user.channel_gain * z[2 + j] * t0 / sinr;
            let expect = (gamma * denom - user.channel_gain * z[2 + j] * t0) / gamma;
            assert!(
                (lhs[3 + j] - expect).abs() < 1e-9 * expect.abs().max(1.0),
                "{} vs {expect}",
                lhs[3 + j]
            );
        }
    }
}

#[test]
fn desk3_weights_match_direct_trace() {
    let s = desk3_scenario();
    let model = first_interval_model(&s, SEED).unwrap();
    let (pred, prior) = predicted_and_prior(&s);
    let u = uniform_allocation(&model);
    let w = weights_at(&model, &u.z, &u.freq).unwrap();
    let t0 = s.fusion_period;
    let lt = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0 / t0, 1.0, 1.0 / t0));
    let b = common::bayes_fim(&s, &u.z, &u.freq.blocks, 0, 0, &pred[0], &prior[0]);
    let minv = (lt * b * lt).try_inverse().unwrap();
    let v = minv / minv.trace();
    for i in 0..3 {
        let c = common::unit_info(&s, i, 0, 0, &pred[0]);
        let expect = ((lt * v).transpose() * c * (lt * v)).trace();
        assert!(
            (w[i][0] - expect).abs() < 1e-6 * expect,
            "omega {i}: {} vs {expect}",
            w[i][0]
        );
    }
}

#[test]
fn optimal_v_beats_random_competitors() {
    let mut rng = stream(SEED, Stream::Verify, &[103]);
    let lt = Matrix4::from_diagonal(&Vector4::new(1.0, 0.1, 1.0, 0.1));
    for _ in 0..50 {
        let a = Matrix4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let b = a * a.transpose() + Matrix4::identity() * 0.05;
        let m = lt.transpose() * b * lt;
        let val = |v: &Matrix4<f64>| (v.transpose() * m * v).trace();
        let best = val(&optimal_v(&b, &lt).unwrap());
        for _ in 0..100 {
            let c = Matrix4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let v = c * c.transpose();
            let v = v / v.trace();
            assert!(val(&v) >= best * (1.0 - 1e-12));
        }
    }
}

/// Best objective over a 50x50 grid of (MIMO power, PAR dwell) with each
/// user's comm power at the smallest value meeting its threshold.
fn grid_search(
    s: &Scenario,
    model: &IntervalModel,
    blocks: &[usize],
    pred: &[State],
    prior: &[Matrix4<f64>],
) -> f64 {
    let t0 = s.fusion_period;
    let m = |i: usize| {
        let e = &s.radars[i].schedule[0];
        common::schedule(e.initial_time, e.revisit_interval, t0, 0).len() as f64
    };
    let (pmax, tmax) = (1.0 / m(0), 1.0 / m(1));
    let mut best = f64::NEG_INFINITY;
    for a in 0..=50 {
        for b in 0..=50 {
            let mut z = vec![pmax * a as f64 / 50.0, tmax * b as f64 / 50.0, 0.0, 0.0];
            for j in 0..2 {
                z[2 + j] = common::min_power(s, &z, blocks, j, 0, model.thresholds[j]);
            }
            if z[2] + z[3] > s.comm_power_budget {
                continue;
            }
            let fims: Vec<Matrix4<f64>> = (0..s.targets.len())
                .map(|q| common::bayes_fim(s, &z, blocks, q, 0, &pred[q], &prior[q]))
                .collect();
            best = best.max(common::objective(s, &fims));
        }
    }
    best
}

#[test]
fn desk3_ascent_near_grid_optimum() {
    let s = desk3_scenario();
    let model = first_interval_model(&s, SEED).unwrap();
    let (pred, prior) = predicted_and_prior(&s);
    let u = uniform_allocation(&model);
    let out = ascent_descent_solve(&model, &u.z, &u.freq, &AscentParams::default()).unwrap();
    let grid = grid_search(&s, &model, &u.freq.blocks, &pred, &prior);
    assert!(
        out.objective >= 0.98 * grid,
        "ascent {} vs grid {grid}",
        out.objective
    );
    check_feasible(&model, &out.z, &u.freq).unwrap();
}

#[test]
fn desk3_anchor_near_joint_brute_force() {
    let s = desk3_scenario();
    let model = first_interval_model(&s, SEED).unwrap();
    let (pred, prior) = predicted_and_prior(&s);
    let mut best = f64::NEG_INFINITY;
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                best = best.max(grid_search(&s, &model, &[a, b], &pred, &prior));
            }
        }
    }
    let sol = anchor_solve(
        &model,
        &AnchorParams::default(),
        &mut stream(SEED, Stream::Anneal, &[0]),
    )
    .unwrap();
    assert!(
        sol.objective >= 0.98 * best,
        "anchor {} vs brute force {best}",
        sol.objective
    );
}

#[test]
fn reference_interval_optimized_beats_baselines() {
    let s = reference_scenario(1);
    let model = first_interval_model(&s, SEED).unwrap();
    let sol = anchor_solve(
        &model,
        &AnchorParams::default(),
        &mut stream(SEED, Stream::Anneal, &[0]),
    )
    .unwrap();
    let u = uniform_allocation(&model);
    let mut rng = stream(SEED, Stream::RandomAlloc, &[0]);
    let mean_random: f64 = (0..100)
        .map(|_| random_allocation(&model, &mut rng).unwrap().objective)
        .sum::<f64>()
        / 100.0;
    assert!(
        sol.objective > u.objective,
        "{} vs uniform {}",
        sol.objective,
        u.objective
    );
    assert!(
        sol.objective > mean_random,
        "{} vs random {mean_random}",
        sol.objective
    );
}

#[test]
fn optimized_composite_measures_are_tighter_than_random() {
    let s = reference_scenario(1);
    let seeds = TrialSeeds {
        seed: SEED,
        trial: 0,
    };
    let (init, tracks) = initial_tracks(&s, seeds).unwrap();
    let truths = truth_trajectory(&s, &init, 1, seeds).unwrap();
    let params = AnchorParams::default();
    let trace = |m: Method| -> f64 {
        let r = run_fusion_interval(&s, 0, &truths[0], &tracks, m, &params, seeds, false).unwrap();
        r.targets
            .iter()
            .map(|t| t.cm.as_ref().unwrap().1.trace())
            .sum()
    };
    let (a, r) = (trace(Method::Anchor), trace(Method::Random));
    assert!(a < r, "anchor {a} vs random {r}");
}

#[test]
fn random_allocations_are_feasible_with_margin() {
    let s = reference_scenario(1);
    let model = first_interval_model(&s, SEED).unwrap();
    let mut rng = stream(SEED, Stream::RandomAlloc, &[1]);
    let mut positive = 0;
    let mut total = 0;
    for _ in 0..1000 {
        let a = random_allocation(&model, &mut rng).unwrap();
        check_feasible(&model, &a.z, &a.freq).unwrap();
        for m in &a.margins {
            assert!(*m >= -1e-9);
            positive += usize::from(*m > 1e-9);
            total += 1;
        }
    }
    assert!(positive as f64 > 0.99 * total as f64, "{positive}/{total}");
}

#[test]
fn uniform_margins_vanish() {
    for s in [reference_scenario(1), reference_scenario(2), desk3_scenario()] {
        let model = first_interval_model(&s, SEED).unwrap();
        let u = uniform_allocation(&model);
        assert!(u.margins.iter().all(|m| m.abs() < 1e-9), "{:?}", u.margins);
    }
}

#[test]
fn ils_covariance_matches_its_bound() {
    let s = desk3_scenario();
    let model = first_interval_model(&s, SEED).unwrap();
    let u = uniform_allocation(&model);
    let truth = transition(
        &State::from_column_slice(&s.targets[0].initial_state),
        s.fusion_period,
    );
    let sched = IntervalSchedule::for_interval(&s, 0);
    let bound = fim_cm(&s, &sched, &u.z, &u.freq, 0, &truth)
        .unwrap()
        .try_inverse()
        .unwrap();
    let mut rng = stream(SEED, Stream::Verify, &[104]);
    let n = 500;
    let mut cov = Matrix4::zeros();
    for _ in 0..n {
        let mut records = Vec::new();
        for i in 0..3 {
            let times = &sched.times[i][0];
            let (p, t) = model.pt(&u.z, i, 0);
            let var = anchor_core::fim::measurement_covariance(
                &s,
                i,
                0,
                p,
                t,
                model.interference(&u.z, &u.freq, i),
            )
            .unwrap();
            records.extend(
                synthesize_measurements(
                    &truth,
                    i,
                    0,
                    s.radars[i].position,
                    sched.fusion_time,
                    times,
                    &vec![var; times.len()],
                    &mut rng,
                )
                .unwrap(),
            );
        }
        let (est, _) =
            composite_measure_ils(&records, &truth, sched.fusion_time, s.fusion_period).unwrap();
        let e = est - truth;
        cov += e * e.transpose();
    }
    cov /= n as f64;
    let r = rel(&cov, &bound);
    assert!(r < 0.15, "relative error {r}");
}

#[test]
fn nees_within_chi_square_band() {
    let s = desk3_scenario();
    let params = AnchorParams::default();
    let n = 500u64;
    let mut acc = 0.0;
    for trial in 0..n {
        let seeds = TrialSeeds { seed: SEED, trial };
        let (init, tracks) = initial_tracks(&s, seeds).unwrap();
        let truths = truth_trajectory(&s, &init, 1, seeds).unwrap();
        let r = run_fusion_interval(
            &s,
            0,
            &truths[0],
            &tracks,
            Method::Uniform,
            &params,
            seeds,
            false,
        )
        .unwrap();
        let t = &r.targets[0].track;
        let e = t.filtered - truths[0][0];
        acc += (e.transpose() * t.cov.try_inverse().unwrap() * e)[0];
    }
    let mean = acc / n as f64;
    // chi-square with 4n dof, scaled by 1/n: 4 +- 1.96 sqrt(8/n)
    let half = 1.96 * (8.0 / n as f64).sqrt();
    assert!((mean - 4.0).abs() < half, "mean NEES {mean}");
}
