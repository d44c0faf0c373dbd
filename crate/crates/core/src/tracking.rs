//! Closed-loop tracking: allocate, measure, fuse into a composite measure,
//! Kalman update; plus the Monte Carlo campaign and its metrics.

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{
    anchor_solve, check_feasible, random_allocation, uniform_allocation, AllocationSolution,
    AnchorParams,
};
use crate::error::{Error, Result};
use crate::fim::{fim_cm, measurement_covariance, IntervalModel};
use crate::kinematics::{
    composite_measure_ils, process_noise, synthesize_measurements, transition, transition_matrix,
    State,
};
use crate::linalg::{normalizer, spd_inverse, spd_sqrt, symmetrize, CompensatedSum};
use crate::rng::{stream, Stream};
use crate::scenario::{IntervalSchedule, Scenario};

/// Looks whose power-dwell product falls below this are treated as not made.
const MIN_PT: f64 = 1e-12;
const INIT_REL_NOISE: f64 = 0.05;
const INIT_COV_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Anchor,
    Uniform,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Anchor => "anchor",
            Method::Uniform => "uniform",
            Method::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "anchor" => Ok(Method::Anchor),
            "uniform" => Ok(Method::Uniform),
            "random" => Ok(Method::Random),
            other => Err(Error::Invalid {
                field: "methods".into(),
                reason: format!("unknown method `{other}`"),
            }),
        }
    }
}

/// Filter state of one target at a fusion time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub filtered: State,
    pub cov: Matrix4<f64>,
    /// Bayesian FIM carried by the allocation recursion.
    pub bayes: Matrix4<f64>,
}

/// Predict over `t0` with process noise `gamma`, then fuse the composite
/// measure `(cm, cm_cov)`.
pub fn kalman_update(
    prior: &TrackState,
    cm: &State,
    cm_cov: &Matrix4<f64>,
    t0: f64,
    gamma: &Matrix4<f64>,
) -> Result<(State, Matrix4<f64>)> {
    let f = transition_matrix(t0);
    let pred = f * prior.filtered;
    let pred_cov = symmetrize(&(gamma + f * prior.cov * f.transpose()));
    let s_inv = spd_inverse(&(pred_cov + cm_cov), "innovation covariance")?;
    let k = pred_cov * s_inv;
    let post = pred + k * (cm - pred);
    let cov = symmetrize(&((Matrix4::identity() - k) * pred_cov));
    Ok((post, cov))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    /// Composite measure and its covariance, if the looks made it observable.
    pub cm: Option<(State, Matrix4<f64>)>,
    pub track: TrackState,
    pub measurements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub interval: usize,
    pub targets: Vec<TargetOutcome>,
    pub objective: f64,
    pub allocation: AllocationSolution,
}

/// Per-trial random streams.
#[derive(Debug, Clone, Copy)]
pub struct TrialSeeds {
    pub seed: u64,
    pub trial: u64,
}

pub fn allocate<R: Rng>(
    model: &IntervalModel,
    method: Method,
    params: &AnchorParams,
    rng: &mut R,
) -> Result<AllocationSolution> {
    match method {
        Method::Anchor => anchor_solve(model, params, rng),
        Method::Uniform => {
            let u = uniform_allocation(model);
            check_feasible(model, &u.z, &u.freq)?;
            Ok(u)
        }
        Method::Random => random_allocation(model, rng),
    }
}

/// One fusion interval for every target. `truths` are the true states at
/// the fusion time closing the interval.
#[allow(clippy::too_many_arguments)]
pub fn run_fusion_interval(
    scenario: &Scenario,
    interval: usize,
    truths: &[State],
    tracks: &[TrackState],
    method: Method,
    params: &AnchorParams,
    seeds: TrialSeeds,
    fast_mode: bool,
) -> Result<IntervalResult> {
    let t0 = scenario.fusion_period;
    let schedule = IntervalSchedule::for_interval(scenario, interval);
    let predicted: Vec<State> = tracks.iter().map(|t| transition(&t.filtered, t0)).collect();
    let bayes_prev: Vec<Matrix4<f64>> = tracks.iter().map(|t| t.bayes).collect();
    let model = IntervalModel::new(scenario, schedule, &predicted, &bayes_prev)?;
    let path = [seeds.trial, interval as u64];
    let alloc = match method {
        Method::Anchor => allocate(
            &model,
            method,
            params,
            &mut stream(seeds.seed, Stream::Anneal, &path),
        )?,
        Method::Random => allocate(
            &model,
            method,
            params,
            &mut stream(seeds.seed, Stream::RandomAlloc, &path),
        )?,
        Method::Uniform => allocate(
            &model,
            method,
            params,
            &mut stream(seeds.seed, Stream::Verify, &path),
        )?,
    };
    let z = &alloc.z;
    let freq = &alloc.freq;
    let next_bayes = model.bayesian_fims(z, freq);
    let fusion_time = model.schedule.fusion_time;
    let mut targets = Vec::with_capacity(tracks.len());
    for (q, track) in tracks.iter().enumerate() {
        let mut records = Vec::new();
        for i in 0..scenario.radars.len() {
            let times = &model.schedule.times[i][q];
            let (p, t) = model.pt(z, i, q);
            if times.is_empty() || p * t <= MIN_PT {
                continue;
            }
            let interf = model.interference(z, freq, i);
            let var = measurement_covariance(scenario, i, q, p, t, interf)?;
            let vars = vec![var; times.len()];
            // Same noise draws for every method: keyed by (trial, interval, radar, target).
            let mut rng = stream(
                seeds.seed,
                Stream::Noise,
                &[seeds.trial, interval as u64, i as u64, q as u64],
            );
            records.extend(synthesize_measurements(
                &truths[q],
                i,
                q,
                scenario.radars[i].position,
                fusion_time,
                times,
                &vars,
                &mut rng,
            )?);
        }
        let measurements = records.len();
        let cm = if fast_mode {
            let info = fim_cm(scenario, &model.schedule, z, freq, q, &truths[q])?;
            match spd_inverse(&info, "composite-measure FIM") {
                Ok(cov) => {
                    let l = spd_sqrt(&cov, "composite-measure covariance")?;
                    let mut rng = stream(
                        seeds.seed,
                        Stream::Noise,
                        &[seeds.trial, interval as u64, u64::MAX, q as u64],
                    );
                    let w = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                    Some((truths[q] + l * w, cov))
                }
                Err(Error::Singular(_)) => None,
                Err(e) => return Err(e),
            }
        } else if records.is_empty() {
            None
        } else {
            match composite_measure_ils(&records, &predicted[q], fusion_time, t0) {
                Ok(v) => Some(v),
                Err(Error::Singular(_)) => None,
                Err(e) => return Err(e),
            }
        };
        let gamma = process_noise(scenario.targets[q].process_noise_intensity, t0);
        let (filtered, cov) = match &cm {
            Some((s, c)) => kalman_update(track, s, c, t0, &gamma)?,
            None => {
                let f = transition_matrix(t0);
                (
                    predicted[q],
                    symmetrize(&(gamma + f * track.cov * f.transpose())),
                )
            }
        };
        targets.push(TargetOutcome {
            cm,
            track: TrackState {
                filtered,
                cov,
                bayes: next_bayes[q],
            },
            measurements,
        });
    }
    Ok(IntervalResult {
        interval,
        targets,
        objective: alloc.objective,
        allocation: alloc,
    })
}

/// `sum_q sqrt(mean_n |Lambda (est - truth)|^2)`; `errors[q][n]` are the
/// per-trial estimate errors of target q.
pub fn crmse(errors: &[Vec<State>], t0: f64) -> f64 {
    let lam = normalizer(t0);
    errors
        .iter()
        .map(|per_trial| {
            let mut acc = CompensatedSum::default();
            for e in per_trial {
                acc.add((lam * e).norm_squared());
            }
            (acc.value() / per_trial.len() as f64).sqrt()
        })
        .sum()
}

/// Initial truths and filter states of one trial.
pub fn initial_tracks(
    scenario: &Scenario,
    seeds: TrialSeeds,
) -> Result<(Vec<State>, Vec<TrackState>)> {
    let mut rng = stream(seeds.seed, Stream::Truth, &[seeds.trial, u64::MAX]);
    let mut truths = Vec::new();
    let mut tracks = Vec::new();
    for t in &scenario.targets {
        let truth = State::from_column_slice(&t.initial_state);
        let sd = truth.map(|v| (INIT_REL_NOISE * v.abs()).max(1.0));
        let noise = Vector4::from_fn(|k, _| rng.sample::<f64, _>(StandardNormal) * sd[k]);
        let cov = Matrix4::from_diagonal(&sd.component_mul(&sd)) * INIT_COV_SCALE;
        tracks.push(TrackState {
            filtered: truth + noise,
            cov,
            bayes: spd_inverse(&cov, "initial covariance")?,
        });
        truths.push(truth);
    }
    Ok((truths, tracks))
}

/// Allocation model of the first interval of trial 0, built from the
/// initial filter states. Handy for exercising the allocators in isolation.
pub fn first_interval_model(scenario: &Scenario, seed: u64) -> Result<IntervalModel<'_>> {
    let (_, tracks) = initial_tracks(scenario, TrialSeeds { seed, trial: 0 })?;
    let t0 = scenario.fusion_period;
    let predicted: Vec<State> = tracks.iter().map(|t| transition(&t.filtered, t0)).collect();
    let bayes: Vec<Matrix4<f64>> = tracks.iter().map(|t| t.bayes).collect();
    IntervalModel::new(
        scenario,
        IntervalSchedule::for_interval(scenario, 0),
        &predicted,
        &bayes,
    )
}

/// True states at fusion times 1..=intervals.
pub fn truth_trajectory(
    scenario: &Scenario,
    initial: &[State],
    intervals: usize,
    seeds: TrialSeeds,
) -> Result<Vec<Vec<State>>> {
    let t0 = scenario.fusion_period;
    let mut out = Vec::with_capacity(intervals);
    let mut cur = initial.to_vec();
    for k in 0..intervals {
        let mut next = Vec::with_capacity(cur.len());
        for (q, s) in cur.iter().enumerate() {
            let g = process_noise(scenario.targets[q].process_noise_intensity, t0);
            let w = if g.amax() > 0.0 {
                let l = spd_sqrt(
                    &(g + Matrix4::identity() * (1e-12 * g.amax())),
                    "process noise",
                )?;
                let mut rng = stream(
                    seeds.seed,
                    Stream::Truth,
                    &[seeds.trial, k as u64, q as u64],
                );
                l * Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal))
            } else {
                Vector4::zeros()
            };
            next.push(transition(s, t0) + w);
        }
        out.push(next.clone());
        cur = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub intervals: usize,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub params: AnchorParams,
    pub fast_mode: bool,
}

/// Result of one (trial, method, interval).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub trial: usize,
    pub method: Method,
    pub interval: usize,
    /// Posterior minus truth per target.
    pub errors: Vec<State>,
    pub measurements: Vec<usize>,
    pub objective: f64,
    pub margins: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub z: Vec<f64>,
    pub blocks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub interval: usize,
    pub crmse: f64,
    pub mean_objective: f64,
    pub location_deviation: f64,
    pub velocity_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    /// Ordered by trial, then method (in config order), then interval.
    pub records: Vec<IntervalRecord>,
    pub summary: Vec<SummaryRow>,
}

impl CampaignResult {
    pub fn summary_for(&self, method: Method, interval: usize) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.interval == interval)
    }
}

/// Runs every method on one trial over all intervals.
pub fn run_trial(
    scenario: &Scenario,
    config: &CampaignConfig,
    trial: usize,
) -> Result<Vec<IntervalRecord>> {
    let seeds = TrialSeeds {
        seed: config.seed,
        trial: trial as u64,
    };
    let (init_truth, init_tracks) = initial_tracks(scenario, seeds)?;
    let truths = truth_trajectory(scenario, &init_truth, config.intervals, seeds)?;
    let mut out = Vec::with_capacity(config.methods.len() * config.intervals);
    for &method in &config.methods {
        let mut tracks = init_tracks.clone();
        for (k, truth) in truths.iter().enumerate() {
            let res = run_fusion_interval(
                scenario,
                k,
                truth,
                &tracks,
                method,
                &config.params,
                seeds,
                config.fast_mode,
            )?;
            tracks = res.targets.iter().map(|t| t.track.clone()).collect();
            out.push(IntervalRecord {
                trial,
                method,
                interval: k,
                errors: tracks
                    .iter()
                    .zip(truth)
                    .map(|(t, s)| t.filtered - s)
                    .collect(),
                measurements: res.targets.iter().map(|t| t.measurements).collect(),
                objective: res.objective,
                margins: res.allocation.margins.clone(),
                objective_trace: res.allocation.objective_trace.clone(),
                z: res.allocation.z.clone(),
                blocks: res.allocation.freq.blocks.clone(),
            });
        }
    }
    Ok(out)
}

pub fn summarize(
    scenario: &Scenario,
    config: &CampaignConfig,
    records: &[IntervalRecord],
) -> Vec<SummaryRow> {
    let t0 = scenario.fusion_period;
    let nq = scenario.targets.len();
    let mut rows = Vec::new();
    for &method in &config.methods {
        for k in 0..config.intervals {
            let sel: Vec<&IntervalRecord> = records
                .iter()
                .filter(|r| r.method == method && r.interval == k)
                .collect();
            let errors: Vec<Vec<State>> = (0..nq)
                .map(|q| sel.iter().map(|r| r.errors[q]).collect())
                .collect();
            let dev = |idx: [usize; 2]| -> f64 {
                errors
                    .iter()
                    .map(|per| {
                        let mut acc = CompensatedSum::default();
                        for e in per {
                            acc.add(e[idx[0]].powi(2) + e[idx[1]].powi(2));
                        }
                        (acc.value() / per.len() as f64).sqrt()
                    })
                    .sum()
            };
            let mut g = CompensatedSum::default();
            for r in &sel {
                g.add(r.objective);
            }
            rows.push(SummaryRow {
                method,
                interval: k,
                crmse: crmse(&errors, t0),
                mean_objective: g.value() / sel.len() as f64,
                location_deviation: dev([0, 2]),
                velocity_deviation: dev([1, 3]),
            });
        }
    }
    rows
}

/// Runs all trials (in parallel on the current rayon pool) and aggregates
/// per-interval metrics. Output does not depend on the thread count.
pub fn run_campaign(scenario: &Scenario, config: &CampaignConfig) -> Result<CampaignResult> {
    if config.trials == 0 || config.intervals == 0 || config.methods.is_empty() {
        return Err(Error::Invalid {
            field: "campaign".into(),
            reason: "trials, intervals and methods must be non-empty".into(),
        });
    }
    config.params.anneal.validate()?;
    let per_trial: Vec<Vec<IntervalRecord>> = (0..config.trials)
        .into_par_iter()
        .map(|n| run_trial(scenario, config, n))
        .collect::<Result<_>>()?;
    let records: Vec<IntervalRecord> = per_trial.into_iter().flatten().collect();
    let summary = summarize(scenario, config, &records);
    Ok(CampaignResult {
        config: config.clone(),
        records,
        summary,
    })
}
