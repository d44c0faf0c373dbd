//! Numerical self-checks behind `anchor-sim verify`.

use std::time::Instant;

use anchor_core::anchor::{random_allocation, uniform_allocation, AnchorParams};
use anchor_core::fim::{fim_cm, measurement_covariance, FrequencyAllocation, IntervalModel};
use anchor_core::freq_alloc::{
    anneal, build_assignment_problem, exhaustive_assignment, AnnealParams,
};
use anchor_core::kinematics::{
    measure, measure_jacobian, synthesize_measurements, transition, transition_matrix, wrap_angle,
};
use anchor_core::linalg::{normalizer, spd_inverse};
use anchor_core::power_time_alloc::{objective_gradient, optimal_v};
use anchor_core::projection::project_onto_polytope;
use anchor_core::rng::{stream, Stream};
use anchor_core::scenario::{desk3_scenario, reference_scenario, Scenario};
use anchor_core::tracking::{
    first_interval_model, initial_tracks, run_fusion_interval, truth_trajectory, Method, TrialSeeds,
};
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Failure, Level, EXIT_VERIFY};

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn trace_identity(seed: u64) -> Result<Check, Failure> {
    let mut rng = stream(seed, Stream::Verify, &[1]);
    let lam = normalizer(10.0);
    let lt = lam.try_inverse().expect("diagonal");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = Matrix4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let b = a * a.transpose() + Matrix4::identity() * 0.1;
        let v = optimal_v(&b, &lt)?;
        let lhs = (v.transpose() * lt.transpose() * b * lt * v).trace();
        let rhs = 1.0 / (lam * spd_inverse(&b, "B")? * lam.transpose()).trace();
        worst = worst.max((lhs - rhs).abs() / rhs.abs());
    }
    Ok(check(
        "trace identity at the optimal V",
        worst < 1e-10,
        format!("worst relative error {worst:.3e}"),
    ))
}

fn gradient(seed: u64, corrupt: bool) -> Result<Check, Failure> {
    let s = reference_scenario(1);
    let model = first_interval_model(&s, seed)?;
    let mut worst: f64 = 0.0;
    for n in 0..100u64 {
        let mut rng = stream(seed, Stream::Verify, &[2, n]);
        let sol = random_allocation(&model, &mut rng)?;
        let mut an = objective_gradient(&model, &sol.z, &sol.freq)?;
        if corrupt {
            an[0] *= 1.01;
            an[0] += 1e-3 * an.norm();
        }
        let fd = central_difference(&model, &sol.z, &sol.freq)?;
        worst = worst.max((&fd - &an).norm() / an.norm());
    }
    Ok(check(
        "analytic gradient vs central differences",
        worst < 1e-6,
        format!("worst relative error {worst:.3e} over 100 points"),
    ))
}

fn central_difference(
    model: &IntervalModel,
    z: &[f64],
    freq: &FrequencyAllocation,
) -> Result<DVector<f64>, Failure> {
    let mut out = DVector::zeros(z.len());
    for k in 0..z.len() {
        let h = 1e-4 * z[k].abs().max(1e-3);
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[k] += h;
        zm[k] -= h;
        out[k] = (model.objective(&zp, freq)? - model.objective(&zm, freq)?) / (2.0 * h);
    }
    Ok(out)
}

/// Closest feasible point among all equality-constrained projections onto
/// subsets of the constraints (plus the bounds `z >= 0`).
fn enumerate_projection(
    v: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = v.len();
    let m = a.nrows();
    let rows = m + n;
    let row = |k: usize| -> (DVector<f64>, f64) {
        if k < m {
            (a.row(k).transpose(), b[k])
        } else {
            let mut e = DVector::zeros(n);
            e[k - m] = -1.0;
            (e, 0.0)
        }
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << rows) {
        let set: Vec<usize> = (0..rows).filter(|k| mask & (1 << k) != 0).collect();
        if set.len() > n {
            continue;
        }
        let mut z = v.clone();
        if !set.is_empty() {
            let as_ = DMatrix::from_fn(set.len(), n, |r, c| row(set[r]).0[c]);
            let bs = DVector::from_iterator(set.len(), set.iter().map(|&k| row(k).1));
            let Some(gi) = (&as_ * as_.transpose()).try_inverse() else {
                continue;
            };
            z = v - as_.transpose() * (gi * (&as_ * v - bs));
        }
        let feasible = (0..rows).all(|k| {
            let (r, bk) = row(k);
            r.dot(&z) <= bk + 1e-9 * (1.0 + bk.abs())
        });
        if feasible {
            let d = (&z - v).norm();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, z));
            }
        }
    }
    best.map(|(_, z)| z)
}

fn projection(seed: u64) -> Result<Check, Failure> {
    let mut worst_kkt: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for t in 0..20u64 {
        let mut rng = stream(seed, Stream::Verify, &[3, t]);
        let n = rng.random_range(3..=6);
        let m = rng.random_range(1..=4);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..2.0));
        let z0 = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let b = &a * &z0 + DVector::from_fn(m, |_, _| rng.random_range(0.0..0.5));
        let v = DVector::from_fn(n, |_, _| rng.random_range(-2.0..3.0));
        let p = project_onto_polytope(&v, &a, &b)?;
        worst_kkt = worst_kkt.max(p.kkt.max());
        let oracle = enumerate_projection(&v, &a, &b)
            .ok_or_else(|| Failure::config("oracle found no feasible point"))?;
        worst_gap = worst_gap.max((&p.z - oracle).amax());
    }
    Ok(check(
        "polytope projection (KKT and enumeration oracle)",
        worst_kkt < 1e-8 && worst_gap < 1e-7,
        format!("worst KKT residual {worst_kkt:.3e}, worst oracle gap {worst_gap:.3e}"),
    ))
}

fn anneal_quality(seed: u64, runs: u64) -> Result<Check, Failure> {
    let s = desk3_scenario();
    let model = first_interval_model(&s, seed)?;
    let mut hits = 0;
    let mut exceeded = false;
    for n in 0..runs {
        let mut rng = stream(seed, Stream::Verify, &[4, n]);
        let z = random_allocation(&model, &mut rng)?.z;
        let problem = build_assignment_problem(&model, &z);
        let (_, best) = exhaustive_assignment(&model, &problem)?;
        let out = anneal(&model, &problem, None, &AnnealParams::default(), &mut rng)?;
        if out.objective > best * (1.0 + 1e-12) {
            exceeded = true;
        }
        if (out.objective - best).abs() <= 1e-12 * best.abs() {
            hits += 1;
        }
    }
    let need = (runs * 95).div_ceil(100);
    Ok(check(
        "annealing reaches the exhaustive optimum",
        hits >= need && !exceeded,
        format!("{hits}/{runs} runs optimal"),
    ))
}

/// Two-radar copy of the three-radar desk instance.
fn desk2() -> Scenario {
    let mut s = desk3_scenario();
    s.radars.truncate(2);
    for t in &mut s.targets {
        t.rcs.truncate(2);
    }
    for u in &mut s.users {
        u.radar_to_user_gains.truncate(2);
        u.user_to_radar_gains.truncate(2);
    }
    s
}

fn fim_monte_carlo(seed: u64) -> Result<Check, Failure> {
    let s = desk2();
    s.validate()?;
    let model = first_interval_model(&s, seed)?;
    let u = uniform_allocation(&model);
    let state = transition(
        &Vector4::from_column_slice(&s.targets[0].initial_state),
        s.fusion_period,
    );
    let fusion_time = model.schedule.fusion_time;
    let analytic = fim_cm(&s, &model.schedule, &u.z, &u.freq, 0, &state)?;
    let mut emp = Matrix4::zeros();
    let draws = 100_000u64;
    let mut rng = stream(seed, Stream::Verify, &[5]);
    for _ in 0..draws {
        let mut score = Vector4::zeros();
        for i in 0..s.radars.len() {
            let times = &model.schedule.times[i][0];
            if times.is_empty() {
                continue;
            }
            let (p, t) = model.pt(&u.z, i, 0);
            let var = measurement_covariance(&s, i, 0, p, t, model.interference(&u.z, &u.freq, i))?;
            let recs = synthesize_measurements(
                &state,
                i,
                0,
                s.radars[i].position,
                fusion_time,
                times,
                &vec![var; times.len()],
                &mut rng,
            )?;
            for r in &recs {
                let at = transition(&state, r.time - fusion_time);
                let h = measure(&at, r.radar_position)?;
                let jac = measure_jacobian(&at, r.radar_position)?
                    * transition_matrix(r.time - fusion_time);
                let mut resid = r.value - h;
                resid[1] = wrap_angle(resid[1]);
                let w = resid.component_div(&r.noise_var);
                score += jac.transpose() * w;
            }
        }
        emp += score * score.transpose();
    }
    emp /= draws as f64;
    let rel = (emp - analytic).norm() / analytic.norm();
    Ok(check(
        "Fisher information vs empirical score covariance",
        rel < 0.03,
        format!("relative Frobenius error {rel:.3e} over {draws} draws"),
    ))
}

/// Mean normalized estimation error squared of the uniform-allocation
/// filter on the desk instance; a consistent filter gives about 4.
fn nees(seed: u64) -> Result<Check, Failure> {
    let s = desk3_scenario();
    let params = AnchorParams::default();
    let trials = 300u64;
    let intervals = 5;
    let mut acc = 0.0;
    let mut count = 0usize;
    for trial in 0..trials {
        let seeds = TrialSeeds { seed, trial };
        let (init, mut tracks) = initial_tracks(&s, seeds)?;
        let truths = truth_trajectory(&s, &init, intervals, seeds)?;
        for (k, truth) in truths.iter().enumerate() {
            let res = run_fusion_interval(
                &s,
                k,
                truth,
                &tracks,
                Method::Uniform,
                &params,
                seeds,
                false,
            )?;
            tracks = res.targets.iter().map(|t| t.track.clone()).collect();
            for (tr, x) in tracks.iter().zip(truth) {
                let e = tr.filtered - x;
                let ci = spd_inverse(&tr.cov, "posterior covariance")?;
                acc += (e.transpose() * ci * e)[0];
                count += 1;
            }
        }
    }
    let mean = acc / count as f64;
    Ok(check(
        "filter consistency (mean NEES near 4)",
        (3.0..=5.0).contains(&mean),
        format!("mean NEES {mean:.3} over {count} estimates"),
    ))
}

pub fn cmd_verify(level: Level, seed: u64, corrupt_gradient: bool) -> Result<(), Failure> {
    let started = Instant::now();
    let mut checks = vec![
        trace_identity(seed)?,
        gradient(seed, corrupt_gradient)?,
        projection(seed)?,
        anneal_quality(seed, if level == Level::Full { 100 } else { 20 })?,
    ];
    if level == Level::Full {
        checks.push(fim_monte_carlo(seed)?);
        checks.push(nees(seed)?);
    }
    let mut failed = 0;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += usize::from(!c.passed);
    }
    println!(
        "{} checks, {failed} failed, {:.1}s",
        checks.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        return Err(Failure {
            code: EXIT_VERIFY,
            message: format!("{failed} verification check(s) failed"),
        });
    }
    Ok(())
}
