//! Constant-velocity target motion, the range/angle/Doppler measurement
//! model, synthetic measurements and the composite-measure estimator.

use nalgebra::{Matrix3x4, Matrix4, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalizer, spd_inverse, symmetrize};

/// `[x, vx, y, vy]`.
pub type State = Vector4<f64>;

pub const ILS_MAX_ITERS: usize = 50;
pub const ILS_STEP_TOL: f64 = 1e-6;
const ILS_MAX_HALVINGS: usize = 10;

pub fn transition_matrix(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 1)] = dt;
    f[(2, 3)] = dt;
    f
}

pub fn transition(s: &State, dt: f64) -> State {
    State::new(s[0] + s[1] * dt, s[1], s[2] + s[3] * dt, s[3])
}

/// Discrete white-noise-acceleration covariance over `dt`.
pub fn process_noise(intensity: f64, dt: f64) -> Matrix4<f64> {
    let dt = dt.abs();
    let a = intensity * dt.powi(3) / 3.0;
    let b = intensity * dt.powi(2) / 2.0;
    let c = intensity * dt;
    let mut m = Matrix4::zeros();
    for o in [0, 2] {
        m[(o, o)] = a;
        m[(o, o + 1)] = b;
        m[(o + 1, o)] = b;
        m[(o + 1, o + 1)] = c;
    }
    m
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Range, four-quadrant bearing and radial velocity seen from `radar`.
pub fn measure(s: &State, radar: [f64; 2]) -> Result<Vector3<f64>> {
    let dx = s[0] - radar[0];
    let dy = s[2] - radar[1];
    let r = dx.hypot(dy);
    if !(r > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    Ok(Vector3::new(r, dy.atan2(dx), (dx * s[1] + dy * s[3]) / r))
}

/// Jacobian of [`measure`] with respect to the state at the measurement time.
pub fn measure_jacobian(s: &State, radar: [f64; 2]) -> Result<Matrix3x4<f64>> {
    let dx = s[0] - radar[0];
    let dy = s[2] - radar[1];
    let r2 = dx * dx + dy * dy;
    let r = r2.sqrt();
    if !(r > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    let nu = (dx * s[1] + dy * s[3]) / r;
    Ok(Matrix3x4::new(
        dx / r,
        0.0,
        dy / r,
        0.0,
        -dy / r2,
        0.0,
        dx / r2,
        0.0,
        (s[1] - nu * dx / r) / r,
        dx / r,
        (s[3] - nu * dy / r) / r,
        dy / r,
    ))
}

/// Jacobian of the measurement taken `dt_back` seconds before the fusion
/// time, with respect to the fusion-time state.
pub fn measurement_jacobian(
    fusion_state: &State,
    radar: [f64; 2],
    dt_back: f64,
) -> Result<Matrix3x4<f64>> {
    let back = transition_matrix(-dt_back);
    Ok(measure_jacobian(&(back * fusion_state), radar)? * back)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub radar_id: usize,
    pub target_id: usize,
    pub radar_position: [f64; 2],
    pub time: f64,
    /// `(R, theta, nu)`.
    pub value: Vector3<f64>,
    /// Diagonal of the noise covariance.
    pub noise_var: Vector3<f64>,
}

/// Noisy measurements of a target whose fusion-time state is `truth`, taken
/// at `times` (all before `fusion_time`) with noise variances `vars`.
///
/// Noise is drawn as standard normals scaled by the standard deviations, so
/// two calls sharing an rng state but differing in `vars` see the same
/// underlying draws.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_measurements<R: Rng>(
    truth: &State,
    radar_id: usize,
    target_id: usize,
    radar_position: [f64; 2],
    fusion_time: f64,
    times: &[f64],
    vars: &[Vector3<f64>],
    rng: &mut R,
) -> Result<Vec<MeasurementRecord>> {
    assert_eq!(times.len(), vars.len());
    let mut out = Vec::with_capacity(times.len());
    for (&t, var) in times.iter().zip(vars) {
        let s = transition(truth, t - fusion_time);
        let clean = measure(&s, radar_position)?;
        let noise = Vector3::from_fn(|k, _| rng.sample::<f64, _>(StandardNormal) * var[k].sqrt());
        let mut value = clean + noise;
        value[1] = wrap_angle(value[1]);
        out.push(MeasurementRecord {
            radar_id,
            target_id,
            radar_position,
            time: t,
            value,
            noise_var: *var,
        });
    }
    Ok(out)
}

struct Linearized {
    cost: f64,
    info: Matrix4<f64>,
    score: Vector4<f64>,
}

fn linearize(records: &[MeasurementRecord], s: &State, fusion_time: f64) -> Result<Linearized> {
    let mut info = Matrix4::zeros();
    let mut score = Vector4::zeros();
    let mut cost = 0.0;
    for rec in records {
        let dt_back = fusion_time - rec.time;
        let sm = transition(s, -dt_back);
        let pred = measure(&sm, rec.radar_position)?;
        let h = measurement_jacobian(s, rec.radar_position, dt_back)?;
        let mut res = rec.value - pred;
        res[1] = wrap_angle(res[1]);
        let w = rec.noise_var.map(|v| 1.0 / v);
        let wres = res.component_mul(&w);
        cost += res.dot(&wres);
        score += h.transpose() * wres;
        info += h.transpose() * Matrix3x4::from_fn(|r, c| h[(r, c)] * w[r]);
    }
    Ok(Linearized {
        cost,
        info: symmetrize(&info),
        score,
    })
}

/// Fisher information of `records` about the fusion-time state, evaluated at `s`.
pub fn records_information(
    records: &[MeasurementRecord],
    s: &State,
    fusion_time: f64,
) -> Result<Matrix4<f64>> {
    Ok(linearize(records, s, fusion_time)?.info)
}

/// Maximum-likelihood fusion-time state from one interval's measurements,
/// by damped Gauss-Newton started at `predicted`. Returns the estimate and
/// the inverse Fisher information at the estimate.
pub fn composite_measure_ils(
    records: &[MeasurementRecord],
    predicted: &State,
    fusion_time: f64,
    t0: f64,
) -> Result<(State, Matrix4<f64>)> {
    if records.is_empty() {
        return Err(Error::Singular("composite-measure FIM (no measurements)"));
    }
    let lam = normalizer(t0);
    let mut s = *predicted;
    let mut lin = linearize(records, &s, fusion_time)?;
    let mut converged = false;
    for _ in 0..ILS_MAX_ITERS {
        let step = spd_inverse(&lin.info, "composite-measure FIM")? * lin.score;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=ILS_MAX_HALVINGS {
            let cand = s + step * alpha;
            if let Ok(l) = linearize(records, &cand, fusion_time) {
                if l.cost <= lin.cost {
                    accepted = Some((cand, l));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((cand, l)) = accepted else {
            // No descent along the Gauss-Newton direction: already at the
            // minimum to working precision.
            converged = true;
            break;
        };
        let moved = (lam * (cand - s)).norm();
        s = cand;
        lin = l;
        if moved < ILS_STEP_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(ILS_MAX_ITERS));
    }
    let cov = spd_inverse(&lin.info, "composite-measure FIM")?;
    Ok((s, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn transition_examples() {
        let s = State::new(-2000.0, 50.0, -4000.0, 50.0);
        assert_eq!(
            transition(&s, 10.0),
            State::new(-1500.0, 50.0, -3500.0, 50.0)
        );
        assert_eq!(transition(&s, 0.0), s);
        assert_eq!(
            transition(&State::new(0.0, -25.0, 0.0, -50.0), 2.0),
            State::new(-50.0, -25.0, -100.0, -50.0)
        );
        assert_eq!(transition_matrix(3.0) * s, transition(&s, 3.0));
    }

    #[test]
    fn measure_examples() {
        let m = measure(&State::new(3000.0, 10.0, 4000.0, 0.0), [0.0, 0.0]).unwrap();
        assert!(close(m[0], 5000.0, 1e-15));
        assert!(close(m[1], 0.927295218001612, 1e-12));
        assert!(close(m[2], 6.0, 1e-15));
        let m = measure(&State::new(1000.0, 0.0, 0.0, 99.0), [0.0, 0.0]).unwrap();
        assert_eq!(m, Vector3::new(1000.0, 0.0, 0.0));
        assert_eq!(
            measure(&State::new(5.0, 1.0, 7.0, 1.0), [5.0, 7.0]),
            Err(Error::DegenerateGeometry)
        );
    }

    #[test]
    fn jacobian_examples() {
        let h =
            measurement_jacobian(&State::new(3000.0, 10.0, 4000.0, 0.0), [0.0, 0.0], 0.0).unwrap();
        assert!(close(h[(0, 0)], 0.6, 1e-15) && close(h[(0, 2)], 0.8, 1e-15));
        assert_eq!(h[(0, 1)], 0.0);
        let h = measurement_jacobian(&State::new(1000.0, 0.0, 0.0, 0.0), [0.0, 0.0], 0.0).unwrap();
        assert!(close(h[(1, 2)], 1e-3, 1e-15));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = stream(3, Stream::Verify, &[]);
        for _ in 0..200 {
            let s = State::new(
                rng.random_range(-5000.0..5000.0),
                rng.random_range(-60.0..60.0),
                rng.random_range(-5000.0..5000.0),
                rng.random_range(-60.0..60.0),
            );
            let radar = [
                rng.random_range(-5000.0..5000.0),
                rng.random_range(-5000.0..5000.0),
            ];
            let dt = rng.random_range(0.0..10.0);
            let h = measurement_jacobian(&s, radar, dt).unwrap();
            let scale = [1000.0, 10.0, 1000.0, 10.0];
            for c in 0..4 {
                let step = 1e-3 * scale[c];
                let mut sp = s;
                let mut sm = s;
                sp[c] += step;
                sm[c] -= step;
                let mp = measure(&transition(&sp, -dt), radar).unwrap();
                let mm = measure(&transition(&sm, -dt), radar).unwrap();
                for r in 0..3 {
                    let mut d = mp[r] - mm[r];
                    if r == 1 {
                        d = wrap_angle(d);
                    }
                    let fd = d / (2.0 * step);
                    let col_scale = h.row(r).abs().max().max(1e-300);
                    assert!(
                        (fd - h[(r, c)]).abs() <= 1e-5 * col_scale,
                        "row {r} col {c}: fd {fd} analytic {}",
                        h[(r, c)]
                    );
                }
            }
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert_eq!(wrap_angle(-std::f64::consts::PI), std::f64::consts::PI);
        assert!(close(
            wrap_angle(3.0 * std::f64::consts::PI / 2.0),
            -std::f64::consts::FRAC_PI_2,
            1e-15
        ));
    }

    fn three_radar_records(
        truth: &State,
        var: Vector3<f64>,
        seed: Option<u64>,
    ) -> Vec<MeasurementRecord> {
        let radars = [[0.0, 0.0], [4000.0, 0.0], [0.0, 4000.0]];
        let times = [1.0, 4.0, 7.0];
        let mut out = Vec::new();
        let mut rng = stream(seed.unwrap_or(0), Stream::Noise, &[]);
        for (i, &p) in radars.iter().enumerate() {
            let vars = vec![var; times.len()];
            let mut recs =
                synthesize_measurements(truth, i, 0, p, 10.0, &times, &vars, &mut rng).unwrap();
            out.append(&mut recs);
        }
        out
    }

    #[test]
    fn vanishing_noise_reproduces_model() {
        let truth = State::new(2000.0, 10.0, 3000.0, -5.0);
        let recs = three_radar_records(&truth, Vector3::repeat(1e-20), Some(1));
        for r in &recs {
            let clean = measure(&transition(&truth, r.time - 10.0), r.radar_position).unwrap();
            assert!((r.value - clean).abs().max() < 1e-8);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let truth = State::new(2000.0, 10.0, 3000.0, -5.0);
        let var = Vector3::new(100.0, 1e-4, 1.0);
        assert_eq!(
            three_radar_records(&truth, var, Some(5)),
            three_radar_records(&truth, var, Some(5))
        );
    }

    #[test]
    fn synthesized_noise_has_requested_covariance() {
        let truth = State::new(2000.0, 10.0, 3000.0, -5.0);
        let var = Vector3::new(25.0, 4e-4, 0.5);
        let mut rng = stream(11, Stream::Noise, &[]);
        let clean = measure(&transition(&truth, -3.0), [0.0, 0.0]).unwrap();
        let n = 10_000;
        let mut sq = Vector3::zeros();
        for _ in 0..n {
            let r =
                synthesize_measurements(&truth, 0, 0, [0.0, 0.0], 10.0, &[7.0], &[var], &mut rng)
                    .unwrap();
            let d = r[0].value - clean;
            sq += d.component_mul(&d);
        }
        let est = sq / n as f64;
        for k in 0..3 {
            assert!(
                (est[k] / var[k] - 1.0).abs() < 0.05,
                "entry {k}: {}",
                est[k] / var[k]
            );
        }
    }

    #[test]
    fn ils_recovers_truth_without_noise() {
        let truth = State::new(2000.0, 10.0, 3000.0, -5.0);
        let recs = three_radar_records(&truth, Vector3::new(100.0, 1e-4, 1.0), None);
        let noiseless: Vec<_> = recs
            .into_iter()
            .map(|mut r| {
                r.value = measure(&transition(&truth, r.time - 10.0), r.radar_position).unwrap();
                r
            })
            .collect();
        let (s, cov) = composite_measure_ils(&noiseless, &truth, 10.0, 10.0).unwrap();
        assert!((s - truth).abs().max() < 1e-6);
        assert!(crate::linalg::is_spd(&cov, 1e-12));
        // and from a perturbed start
        let start = truth + State::new(150.0, -3.0, -120.0, 2.0);
        let (s, _) = composite_measure_ils(&noiseless, &start, 10.0, 10.0).unwrap();
        assert!((s - truth).abs().max() < 1e-6);
    }

    #[test]
    fn single_measurement_is_unobservable() {
        let truth = State::new(2000.0, 10.0, 3000.0, -5.0);
        let mut rng = stream(1, Stream::Noise, &[]);
        let recs = synthesize_measurements(
            &truth,
            0,
            0,
            [0.0, 0.0],
            10.0,
            &[5.0],
            &[Vector3::new(1.0, 1e-4, 1.0)],
            &mut rng,
        )
        .unwrap();
        assert!(matches!(
            composite_measure_ils(&recs, &truth, 10.0, 10.0),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn ils_is_order_invariant() {
        let truth = State::new(2000.0, 10.0, 3000.0, -5.0);
        let recs = three_radar_records(&truth, Vector3::new(100.0, 1e-4, 1.0), Some(9));
        let mut rev = recs.clone();
        rev.reverse();
        let (a, _) = composite_measure_ils(&recs, &truth, 10.0, 10.0).unwrap();
        let (b, _) = composite_measure_ils(&rev, &truth, 10.0, 10.0).unwrap();
        assert!((a - b).abs().max() < 1e-6);
    }

    #[test]
    fn process_noise_is_psd() {
        let g = process_noise(0.05, 10.0);
        assert!(crate::linalg::is_spd(&g, 1e-15));
        assert!(close(g[(0, 0)], 0.05 * 1000.0 / 3.0, 1e-15));
    }
}
