//! Static description of the radar/communications network.
//!
//! A [`Scenario`] holds the radar fleet, the targets, the macro/micro users,
//! the shared subchannel grid and all budgets. It is immutable once built and
//! is shared read-only by every solver and Monte Carlo worker.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance used when deciding whether a visit falls inside `[t_k, t_k+1)`.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadarKind {
    /// Several simultaneous beams; per-target power is allocated, dwell fixed.
    MimoColocated,
    /// Sequential electronic steering; per-target dwell is allocated, power fixed.
    PhasedArray,
    /// Fixed power and dwell.
    MechScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Macro,
    Micro,
}

/// Contiguous run of subchannels `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub start: usize,
    pub width: usize,
}

impl Band {
    pub fn selector(&self, num_subchannels: usize) -> Vec<u8> {
        (0..num_subchannels)
            .map(|f| u8::from(f >= self.start && f < self.start + self.width))
            .collect()
    }

    /// Number of subchannels shared with `[lo, hi)`.
    pub fn overlap(&self, lo: usize, hi: usize) -> usize {
        let a = self.start.max(lo);
        let b = (self.start + self.width).min(hi);
        b.saturating_sub(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub initial_time: f64,
    pub revisit_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSpec {
    pub id: usize,
    pub kind: RadarKind,
    pub position: [f64; 2],
    pub band: Band,
    /// Transmit signal bandwidth.
    pub signal_bandwidth: f64,
    /// 3 dB receive beamwidth, radians.
    pub beamwidth_3db: f64,
    pub rx_noise_power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_dwell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget: Option<f64>,
    /// One entry per target.
    pub schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: usize,
    /// `[x, vx, y, vy]` in m and m/s.
    pub initial_state: [f64; 4],
    /// Radar cross-section seen by each radar.
    pub rcs: Vec<f64>,
    /// White-noise acceleration intensity, (m/s^2)^2 per s.
    pub process_noise_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommUserSpec {
    pub id: usize,
    pub tier: Tier,
    pub channel_gain: f64,
    pub noise_power: f64,
    /// Required throughput in nats. `None` calibrates it per interval to the
    /// throughput of the uniform allocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_threshold: Option<f64>,
    /// Gain of the co-channel macro downlink into this micro user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_tier_gain: Option<f64>,
    /// Micro users reuse the block of this macro user (index among macro users).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_macro: Option<usize>,
    /// Fixed transmit power of a micro downlink.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_power: Option<f64>,
    /// Radar i into this user, one per radar.
    pub radar_to_user_gains: Vec<f64>,
    /// This downlink into radar i, one per radar. Macro users only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub user_to_radar_gains: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Fusion period T0, seconds.
    pub fusion_period: f64,
    /// Total shared bandwidth, Hz.
    pub total_bandwidth: f64,
    /// Subchannel width, Hz.
    pub subchannel_width: f64,
    pub num_subchannels: usize,
    /// Subchannels per communications block.
    pub comm_block_size: usize,
    pub comm_power_budget: f64,
    #[serde(default = "one")]
    pub range_const: f64,
    #[serde(default = "one")]
    pub angle_const: f64,
    #[serde(default = "one")]
    pub doppler_const: f64,
    pub radars: Vec<RadarSpec>,
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub users: Vec<CommUserSpec>,
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn positive(field: String, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(field: String, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes to toml")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn num_blocks(&self) -> usize {
        self.num_subchannels / self.comm_block_size
    }

    pub fn num_macro(&self) -> usize {
        self.users.iter().filter(|u| u.tier == Tier::Macro).count()
    }

    pub fn macro_users(&self) -> impl Iterator<Item = &CommUserSpec> {
        self.users.iter().filter(|u| u.tier == Tier::Macro)
    }

    pub fn micro_users(&self) -> impl Iterator<Item = &CommUserSpec> {
        self.users.iter().filter(|u| u.tier == Tier::Micro)
    }

    pub fn count_kind(&self, kind: RadarKind) -> usize {
        self.radars.iter().filter(|r| r.kind == kind).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}", self.schema_version),
            ));
        }
        positive("fusion_period".into(), self.fusion_period)?;
        positive("total_bandwidth".into(), self.total_bandwidth)?;
        positive("subchannel_width".into(), self.subchannel_width)?;
        positive("comm_power_budget".into(), self.comm_power_budget)?;
        positive("range_const".into(), self.range_const)?;
        positive("angle_const".into(), self.angle_const)?;
        positive("doppler_const".into(), self.doppler_const)?;
        let expected = (self.total_bandwidth / self.subchannel_width).round() as usize;
        if self.num_subchannels != expected || expected == 0 {
            return Err(invalid(
                "num_subchannels",
                format!(
                    "expected round(total_bandwidth / subchannel_width) = {expected}, got {}",
                    self.num_subchannels
                ),
            ));
        }
        if self.comm_block_size == 0 {
            return Err(invalid("comm_block_size", "must be >= 1"));
        }
        if !self.num_subchannels.is_multiple_of(self.comm_block_size) {
            return Err(Error::Divisibility {
                subchannels: self.num_subchannels,
                block: self.comm_block_size,
            });
        }
        let j = self.num_macro();
        if j > self.num_blocks() {
            return Err(Error::TooManyUsers {
                users: j,
                blocks: self.num_blocks(),
            });
        }
        if self.radars.is_empty() {
            return Err(invalid("radars", "at least one radar is required"));
        }
        if self.targets.is_empty() {
            return Err(invalid("targets", "at least one target is required"));
        }
        let n = self.radars.len();
        let q = self.targets.len();
        for (i, r) in self.radars.iter().enumerate() {
            let f = |name: &str| format!("radars[{i}].{name}");
            if r.band.width == 0 || r.band.start + r.band.width > self.num_subchannels {
                return Err(invalid(
                    f("band"),
                    "must be a non-empty run inside the grid",
                ));
            }
            positive(f("signal_bandwidth"), r.signal_bandwidth)?;
            positive(f("beamwidth_3db"), r.beamwidth_3db)?;
            positive(f("rx_noise_power"), r.rx_noise_power)?;
            if !r.position.iter().all(|v| v.is_finite()) {
                return Err(invalid(f("position"), "must be finite"));
            }
            let (need_dwell, need_power) = match r.kind {
                RadarKind::MimoColocated => (true, false),
                RadarKind::PhasedArray => (false, true),
                RadarKind::MechScan => (true, true),
            };
            match (need_dwell, r.fixed_dwell) {
                (true, Some(v)) => positive(f("fixed_dwell"), v)?,
                (true, None) => return Err(invalid(f("fixed_dwell"), "required for this kind")),
                _ => {}
            }
            match (need_power, r.fixed_power) {
                (true, Some(v)) => positive(f("fixed_power"), v)?,
                (true, None) => return Err(invalid(f("fixed_power"), "required for this kind")),
                _ => {}
            }
            match (r.kind, r.power_budget, r.time_budget) {
                (RadarKind::MimoColocated, Some(p), None) => positive(f("power_budget"), p)?,
                (RadarKind::PhasedArray, None, Some(t)) => positive(f("time_budget"), t)?,
                (RadarKind::MechScan, None, None) => {}
                _ => {
                    return Err(invalid(
                        f("budget"),
                        "MIMO radars need only power_budget, phased arrays only time_budget, \
                         mechanical scanners neither",
                    ))
                }
            }
            if r.schedule.len() != q {
                return Err(invalid(f("schedule"), format!("needs {q} entries")));
            }
            for (k, s) in r.schedule.iter().enumerate() {
                positive(
                    f(&format!("schedule[{k}].revisit_interval")),
                    s.revisit_interval,
                )?;
                if !(s.initial_time >= 0.0 && s.initial_time < self.fusion_period) {
                    return Err(invalid(
                        f(&format!("schedule[{k}].initial_time")),
                        "must lie in [0, fusion_period)",
                    ));
                }
            }
        }
        for (k, t) in self.targets.iter().enumerate() {
            let f = |name: &str| format!("targets[{k}].{name}");
            if !t.initial_state.iter().all(|v| v.is_finite()) {
                return Err(invalid(f("initial_state"), "must be finite"));
            }
            if t.rcs.len() != n {
                return Err(invalid(f("rcs"), format!("needs {n} entries")));
            }
            for (i, &v) in t.rcs.iter().enumerate() {
                positive(f(&format!("rcs[{i}]")), v)?;
            }
            non_negative(f("process_noise_intensity"), t.process_noise_intensity)?;
        }
        for (k, u) in self.users.iter().enumerate() {
            let f = |name: &str| format!("users[{k}].{name}");
            non_negative(f("channel_gain"), u.channel_gain)?;
            positive(f("noise_power"), u.noise_power)?;
            if u.radar_to_user_gains.len() != n {
                return Err(invalid(
                    f("radar_to_user_gains"),
                    format!("needs {n} entries"),
                ));
            }
            for (i, &g) in u.radar_to_user_gains.iter().enumerate() {
                non_negative(f(&format!("radar_to_user_gains[{i}]")), g)?;
            }
            match u.tier {
                Tier::Macro => {
                    if u.user_to_radar_gains.len() != n {
                        return Err(invalid(
                            f("user_to_radar_gains"),
                            format!("needs {n} entries"),
                        ));
                    }
                    for (i, &g) in u.user_to_radar_gains.iter().enumerate() {
                        non_negative(f(&format!("user_to_radar_gains[{i}]")), g)?;
                    }
                    if let Some(eps) = u.throughput_threshold {
                        positive(f("throughput_threshold"), eps)?;
                    }
                }
                Tier::Micro => {
                    if !u.user_to_radar_gains.is_empty() {
                        return Err(invalid(
                            f("user_to_radar_gains"),
                            "micro transmitters do not interfere with radars",
                        ));
                    }
                    let pair = u
                        .paired_macro
                        .ok_or_else(|| invalid(f("paired_macro"), "required for micro users"))?;
                    if pair >= j {
                        return Err(invalid(f("paired_macro"), "no such macro user"));
                    }
                    non_negative(
                        f("cross_tier_gain"),
                        u.cross_tier_gain.ok_or_else(|| {
                            invalid(f("cross_tier_gain"), "required for micro users")
                        })?,
                    )?;
                    positive(
                        f("tx_power"),
                        u.tx_power
                            .ok_or_else(|| invalid(f("tx_power"), "required for micro users"))?,
                    )?;
                }
            }
        }
        Ok(())
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml_str(&text)
}

/// Visit times of `radar` on target `target` inside `[t_start, t_end)`.
pub fn measurement_schedule(
    radar: &RadarSpec,
    target: usize,
    t_start: f64,
    t_end: f64,
) -> Vec<f64> {
    let entry = radar.schedule[target];
    let rev = entry.revisit_interval;
    let first = ((t_start - entry.initial_time) / rev - TIME_EPS)
        .ceil()
        .max(0.0) as u64;
    let mut times = Vec::new();
    let mut m = first;
    loop {
        let t = entry.initial_time + m as f64 * rev;
        if t >= t_end - TIME_EPS {
            break;
        }
        if t >= t_start - TIME_EPS {
            times.push(t);
        }
        m += 1;
    }
    times
}

/// Measurement times of every radar on every target in fusion interval `k`,
/// i.e. `[k T0, (k+1) T0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSchedule {
    pub interval: usize,
    pub start: f64,
    /// Fusion time `t_{k+1}`.
    pub fusion_time: f64,
    /// `times[i][q]`, ascending.
    pub times: Vec<Vec<Vec<f64>>>,
}

impl IntervalSchedule {
    pub fn for_interval(scenario: &Scenario, interval: usize) -> Self {
        let t0 = scenario.fusion_period;
        let start = interval as f64 * t0;
        let end = start + t0;
        let times = scenario
            .radars
            .iter()
            .map(|r| {
                (0..scenario.targets.len())
                    .map(|q| measurement_schedule(r, q, start, end))
                    .collect()
            })
            .collect();
        IntervalSchedule {
            interval,
            start,
            fusion_time: end,
            times,
        }
    }

    /// `M_{i,q}`.
    pub fn count(&self, radar: usize, target: usize) -> usize {
        self.times[radar][target].len()
    }
}

/// Index bookkeeping derived from a scenario: which radars are optimized,
/// where their variables sit in the allocation vector, and how radar bands
/// overlap the communications blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub mimo: Vec<usize>,
    pub par: Vec<usize>,
    pub msr: Vec<usize>,
    pub macro_users: Vec<usize>,
    pub micro_users: Vec<usize>,
    pub num_targets: usize,
    pub num_blocks: usize,
    /// `block_overlap[i][n]`: subchannels of radar i inside block n.
    pub block_overlap: Vec<Vec<f64>>,
}

impl Layout {
    pub fn new(s: &Scenario) -> Self {
        let by_kind = |k: RadarKind| {
            s.radars
                .iter()
                .enumerate()
                .filter(|(_, r)| r.kind == k)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        let users_by = |t: Tier| {
            s.users
                .iter()
                .enumerate()
                .filter(|(_, u)| u.tier == t)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        let nb = s.num_blocks();
        let w = s.comm_block_size;
        let block_overlap = s
            .radars
            .iter()
            .map(|r| {
                (0..nb)
                    .map(|n| r.band.overlap(n * w, (n + 1) * w) as f64)
                    .collect()
            })
            .collect();
        Layout {
            mimo: by_kind(RadarKind::MimoColocated),
            par: by_kind(RadarKind::PhasedArray),
            msr: by_kind(RadarKind::MechScan),
            macro_users: users_by(Tier::Macro),
            micro_users: users_by(Tier::Micro),
            num_targets: s.targets.len(),
            num_blocks: nb,
            block_overlap,
        }
    }

    pub fn num_macro(&self) -> usize {
        self.macro_users.len()
    }

    /// Length of the flattened allocation vector.
    pub fn z_len(&self) -> usize {
        (self.mimo.len() + self.par.len()) * self.num_targets + self.macro_users.len()
    }

    pub fn comm_offset(&self) -> usize {
        (self.mimo.len() + self.par.len()) * self.num_targets
    }

    /// Position of radar `i`'s variable for target `q` in z, if it has one.
    pub fn radar_slot(&self, radar: usize, target: usize) -> Option<usize> {
        let q = self.num_targets;
        if let Some(r) = self.mimo.iter().position(|&i| i == radar) {
            return Some(r * q + target);
        }
        self.par
            .iter()
            .position(|&i| i == radar)
            .map(|r| (self.mimo.len() + r) * q + target)
    }
}

/// Radar and user counts for the random generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub mimo: usize,
    pub phased: usize,
    pub mech: usize,
    pub targets: usize,
    pub users: usize,
}

impl Counts {
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid("counts", e.to_string()))?;
        if v.len() != 5 {
            return Err(invalid("counts", "expected five comma-separated integers"));
        }
        Ok(Counts {
            mimo: v[0],
            phased: v[1],
            mech: v[2],
            targets: v[3],
            users: v[4],
        })
    }
}

/// Axis-aligned region, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Default for Region {
    fn default() -> Self {
        Region {
            x: (-5000.0, 5000.0),
            y: (-5000.0, 5000.0),
        }
    }
}

/// Distribution parameters for randomly drawn gains. Each gain is the square
/// of a Gaussian sample `mean + std * N(0, 1)`.
#[derive(Debug, Clone, Copy)]
struct SquaredGaussian {
    mean: f64,
    std: f64,
}

impl SquaredGaussian {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let n: f64 = Normal::new(self.mean, self.std).unwrap().sample(rng);
        (n * n).max(1e-9 * (self.mean * self.mean + self.std * self.std))
    }
}

const RADAR_NOISE: SquaredGaussian = SquaredGaussian {
    mean: 1.0,
    std: 0.3,
};
const USER_TO_RADAR: SquaredGaussian = SquaredGaussian {
    mean: 3.0,
    std: 1.0,
};
const RADAR_TO_USER: SquaredGaussian = SquaredGaussian {
    mean: 0.0,
    std: 1.0,
};
const CHANNEL_GAIN: SquaredGaussian = SquaredGaussian {
    mean: 3.0,
    std: 1.0,
};
const USER_NOISE: SquaredGaussian = SquaredGaussian {
    mean: 1.0,
    std: 0.3,
};
const CROSS_TIER: SquaredGaussian = SquaredGaussian {
    mean: 0.0,
    std: 0.5,
};
const RCS: SquaredGaussian = SquaredGaussian {
    mean: 1.0,
    std: 0.2,
};

/// Per-measurement share of the unit budgets used for fixed dwells/powers.
const FIXED_SHARE: f64 = 0.125;
const BEAMWIDTH: f64 = 0.05;
const PROCESS_NOISE: f64 = 1e-6;

struct Builder {
    t0: f64,
    bandwidth: f64,
    df: f64,
    block: usize,
}

impl Builder {
    fn radar(
        &self,
        id: usize,
        kind: RadarKind,
        position: [f64; 2],
        band: Band,
        schedule: Vec<ScheduleEntry>,
        noise: f64,
    ) -> RadarSpec {
        let (fixed_dwell, fixed_power, power_budget, time_budget) = match kind {
            RadarKind::MimoColocated => (Some(FIXED_SHARE), None, Some(1.0), None),
            RadarKind::PhasedArray => (None, Some(FIXED_SHARE), None, Some(1.0)),
            RadarKind::MechScan => (Some(FIXED_SHARE), Some(FIXED_SHARE), None, None),
        };
        RadarSpec {
            id,
            kind,
            position,
            band,
            // MHz, which keeps the range/Doppler constants O(1) in scale.
            signal_bandwidth: band.width as f64 * self.df / 1e6,
            beamwidth_3db: BEAMWIDTH,
            rx_noise_power: noise,
            fixed_dwell,
            fixed_power,
            power_budget,
            time_budget,
            schedule,
        }
    }

    fn finish(
        &self,
        radars: Vec<RadarSpec>,
        targets: Vec<TargetSpec>,
        users: Vec<CommUserSpec>,
    ) -> Scenario {
        Scenario {
            schema_version: SCHEMA_VERSION,
            fusion_period: self.t0,
            total_bandwidth: self.bandwidth,
            subchannel_width: self.df,
            num_subchannels: (self.bandwidth / self.df).round() as usize,
            comm_block_size: self.block,
            comm_power_budget: 1.0,
            range_const: 1e4,
            angle_const: 1e-3,
            doppler_const: 1e-5,
            radars,
            targets,
            users,
        }
    }
}

fn random_users<R: Rng>(
    rng: &mut R,
    n_radars: usize,
    n_macro: usize,
    n_micro: usize,
) -> Vec<CommUserSpec> {
    let mut users = Vec::with_capacity(n_macro + n_micro);
    for j in 0..n_macro {
        users.push(CommUserSpec {
            id: j,
            tier: Tier::Macro,
            channel_gain: CHANNEL_GAIN.sample(rng),
            noise_power: USER_NOISE.sample(rng),
            throughput_threshold: None,
            cross_tier_gain: None,
            paired_macro: None,
            tx_power: None,
            radar_to_user_gains: (0..n_radars).map(|_| RADAR_TO_USER.sample(rng)).collect(),
            user_to_radar_gains: (0..n_radars).map(|_| USER_TO_RADAR.sample(rng)).collect(),
        });
    }
    for l in 0..n_micro {
        users.push(CommUserSpec {
            id: n_macro + l,
            tier: Tier::Micro,
            channel_gain: CHANNEL_GAIN.sample(rng),
            noise_power: USER_NOISE.sample(rng),
            throughput_threshold: None,
            cross_tier_gain: Some(CROSS_TIER.sample(rng)),
            paired_macro: Some(l % n_macro.max(1)),
            tx_power: Some(0.1),
            radar_to_user_gains: (0..n_radars).map(|_| RADAR_TO_USER.sample(rng)).collect(),
            user_to_radar_gains: Vec::new(),
        });
    }
    users
}

/// Random scenario in the style of the reference-scale experiments: 400 MHz in
/// 4 MHz subchannels, 4-subchannel comm blocks, 10 s fusion period.
pub fn generate_random_scenario(seed: u64, counts: Counts, region: Region) -> Result<Scenario> {
    let b = Builder {
        t0: 10.0,
        bandwidth: 400e6,
        df: 4e6,
        block: 4,
    };
    let f = (b.bandwidth / b.df).round() as usize;
    let nf = f / b.block;
    if counts.users > nf {
        return Err(Error::TooManyUsers {
            users: counts.users,
            blocks: nf,
        });
    }
    let n = counts.mimo + counts.phased + counts.mech;
    if n == 0 || counts.targets == 0 {
        return Err(invalid("counts", "need at least one radar and one target"));
    }
    let mut rng = rng::stream(seed, Stream::Scenario, &[]);
    let revisits = [2.0, 2.5, 3.0];
    let band_width = (f / 10).max(1);
    let mut radars = Vec::with_capacity(n);
    for i in 0..n {
        let kind = if i < counts.mimo {
            RadarKind::MimoColocated
        } else if i < counts.mimo + counts.phased {
            RadarKind::PhasedArray
        } else {
            RadarKind::MechScan
        };
        let position = [
            rng.random_range(region.x.0..region.x.1),
            rng.random_range(region.y.0..region.y.1),
        ];
        let band = Band {
            start: rng.random_range(0..=f - band_width),
            width: band_width,
        };
        let shared_rev = revisits[rng.random_range(0..revisits.len())];
        let schedule = (0..counts.targets)
            .map(|_| {
                let rev = if kind == RadarKind::PhasedArray {
                    revisits[rng.random_range(0..revisits.len())]
                } else {
                    shared_rev
                };
                ScheduleEntry {
                    initial_time: (rng.random_range(0.0..rev) * 10.0_f64).round() / 10.0,
                    revisit_interval: rev,
                }
            })
            .collect();
        let noise = RADAR_NOISE.sample(&mut rng);
        radars.push(b.radar(i, kind, position, band, schedule, noise));
    }
    let targets = (0..counts.targets)
        .map(|q| {
            let speed = rng.random_range(25.0..60.0);
            let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            TargetSpec {
                id: q,
                initial_state: [
                    rng.random_range(region.x.0..region.x.1),
                    speed * heading.cos(),
                    rng.random_range(region.y.0..region.y.1),
                    speed * heading.sin(),
                ],
                rcs: (0..n).map(|_| RCS.sample(&mut rng)).collect(),
                process_noise_intensity: PROCESS_NOISE,
            }
        })
        .collect();
    let users = random_users(&mut rng, n, counts.users, 0);
    let s = b.finish(radars, targets, users);
    s.validate()?;
    Ok(s)
}

/// Schedules of the eight-radar experiment: `(initial, revisit)` for
/// targets 1 and 2, radars 1..=8.
const REFERENCE_SCHEDULE: [[(f64, f64); 2]; 8] = [
    [(2.0, 2.0), (2.0, 2.0)],
    [(2.5, 2.0), (2.5, 2.0)],
    [(3.0, 2.0), (3.0, 2.0)],
    [(2.3, 3.0), (3.0, 3.0)],
    [(3.0, 2.0), (3.5, 2.0)],
    [(3.2, 2.0), (3.8, 2.0)],
    [(3.2, 2.5), (4.0, 2.5)],
    [(2.1, 2.5), (3.5, 2.5)],
];

/// Bands of the eight radars as `(start, width)`. They overlap each other
/// and jointly cover blocks 0..=18; blocks 19..=24 stay radar-free.
const REFERENCE_BANDS: [(usize, usize); 8] = [
    (0, 76),
    (1, 74),
    (2, 72),
    (3, 70),
    (4, 68),
    (5, 66),
    (6, 64),
    (7, 62),
];

/// The eight-radar, two-target, six-user network with the published
/// schedules and target trajectories. Radar positions and all gains are
/// drawn under `seed`.
pub fn reference_scenario(seed: u64) -> Scenario {
    let b = Builder {
        t0: 10.0,
        bandwidth: 400e6,
        df: 4e6,
        block: 4,
    };
    let mut rng = rng::stream(seed, Stream::Scenario, &[0x9a9e4]);
    let region = Region::default();
    let kinds = [
        RadarKind::MimoColocated,
        RadarKind::MimoColocated,
        RadarKind::MimoColocated,
        RadarKind::PhasedArray,
        RadarKind::PhasedArray,
        RadarKind::PhasedArray,
        RadarKind::MechScan,
        RadarKind::MechScan,
    ];
    let radars = kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let position = [
                rng.random_range(region.x.0..region.x.1),
                rng.random_range(region.y.0..region.y.1),
            ];
            let schedule = REFERENCE_SCHEDULE[i]
                .iter()
                .map(|&(initial_time, revisit_interval)| ScheduleEntry {
                    initial_time,
                    revisit_interval,
                })
                .collect();
            let band = Band {
                start: REFERENCE_BANDS[i].0,
                width: REFERENCE_BANDS[i].1,
            };
            let noise = RADAR_NOISE.sample(&mut rng);
            b.radar(i, kind, position, band, schedule, noise)
        })
        .collect::<Vec<_>>();
    let initial = [
        [-2000.0, 50.0, -4000.0, 50.0],
        [4000.0, -25.0, 2000.0, -50.0],
    ];
    let targets = initial
        .iter()
        .enumerate()
        .map(|(q, s)| TargetSpec {
            id: q,
            initial_state: *s,
            rcs: (0..8).map(|_| RCS.sample(&mut rng)).collect(),
            process_noise_intensity: PROCESS_NOISE,
        })
        .collect();
    let users = random_users(&mut rng, 8, 6, 2);
    b.finish(radars, targets, users)
}

/// Tiny deterministic instance (one radar of each kind, one target, two
/// macro users, four comm blocks) small enough for brute-force checks.
pub fn desk3_scenario() -> Scenario {
    let b = Builder {
        t0: 10.0,
        bandwidth: 32e6,
        df: 4e6,
        block: 2,
    };
    let sched = |initial_time, revisit_interval| {
        vec![ScheduleEntry {
            initial_time,
            revisit_interval,
        }]
    };
    let mut radars = vec![
        b.radar(
            0,
            RadarKind::MimoColocated,
            [0.0, 0.0],
            Band { start: 0, width: 4 },
            sched(1.0, 3.0),
            1.0,
        ),
        b.radar(
            1,
            RadarKind::PhasedArray,
            [4000.0, 0.0],
            Band { start: 2, width: 4 },
            sched(2.0, 4.0),
            0.8,
        ),
        b.radar(
            2,
            RadarKind::MechScan,
            [0.0, 4000.0],
            Band { start: 5, width: 3 },
            sched(0.5, 5.0),
            1.2,
        ),
    ];
    for r in &mut radars {
        r.signal_bandwidth = 16.0;
    }
    let targets = vec![TargetSpec {
        id: 0,
        initial_state: [2000.0, 10.0, 3000.0, -5.0],
        rcs: vec![1.0, 0.9, 1.1],
        process_noise_intensity: PROCESS_NOISE,
    }];
    let users = vec![
        CommUserSpec {
            id: 0,
            tier: Tier::Macro,
            channel_gain: 4.0,
            noise_power: 1.0,
            throughput_threshold: None,
            cross_tier_gain: None,
            paired_macro: None,
            tx_power: None,
            radar_to_user_gains: vec![0.5, 1.0, 0.3],
            user_to_radar_gains: vec![6.0, 3.0, 4.0],
        },
        CommUserSpec {
            id: 1,
            tier: Tier::Macro,
            channel_gain: 6.0,
            noise_power: 0.7,
            throughput_threshold: None,
            cross_tier_gain: None,
            paired_macro: None,
            tx_power: None,
            radar_to_user_gains: vec![0.8, 0.2, 0.6],
            user_to_radar_gains: vec![2.0, 7.0, 5.0],
        },
    ];
    b.finish(radars, targets, users)
}
