use std::path::Path;

use anchor_core::anchor::AnchorParams;
use anchor_core::scenario::{
    generate_random_scenario, load_scenario, Counts, Region, Scenario, SCHEMA_VERSION,
};
use anchor_core::tracking::{run_campaign, CampaignConfig, Method};
use log::info;
use serde::{Deserialize, Serialize};

use crate::output;
use crate::{Failure, RunArgs};

/// Where the scenario came from. The resolved scenario itself is stored
/// alongside, so a manifest replays without the original file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    File { path: String },
    Generated { gen_seed: u64, counts: Counts },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub simulator_version: String,
    pub source: ScenarioSource,
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub intervals: usize,
    pub seed: u64,
    pub fast_mode: bool,
    pub params: AnchorParams,
    /// Named sub-streams every random draw is taken from.
    pub streams: Vec<String>,
}

impl RunManifest {
    pub fn config(&self) -> CampaignConfig {
        CampaignConfig {
            intervals: self.intervals,
            trials: self.trials,
            methods: self.methods.clone(),
            seed: self.seed,
            params: self.params,
            fast_mode: self.fast_mode,
        }
    }
}

fn parse_methods(list: &str) -> Result<Vec<Method>, Failure> {
    let mut out = Vec::new();
    for m in list.split(',').filter(|s| !s.trim().is_empty()) {
        let m = Method::parse(m)?;
        if out.contains(&m) {
            return Err(Failure::config(format!(
                "method `{}` listed twice",
                m.name()
            )));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(Failure::config("--methods is empty"));
    }
    Ok(out)
}

fn apply_overrides(args: &RunArgs, p: &mut AnchorParams) -> Result<(), Failure> {
    let a = &mut p.anneal;
    if let Some(v) = args.anneal_tmax {
        a.t_max = v;
    }
    if let Some(v) = args.anneal_tmin {
        a.t_min = v;
    }
    if let Some(v) = args.anneal_dt {
        a.delta_t = v;
    }
    if let Some(v) = args.anneal_retries {
        a.retry_budget = v;
    }
    a.validate()?;
    let s = &mut p.ascent;
    if let Some(v) = args.ascent_eta {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Failure::config(format!(
                "--ascent.eta must be > 0, got {v}"
            )));
        }
        s.step_size = Some(v);
    }
    if let Some(v) = args.ascent_max_iters {
        s.max_iters = v;
    }
    if let Some(v) = args.ascent_tol {
        s.tol = v;
    }
    if let Some(v) = args.outer_tol {
        p.outer_tol = v;
    }
    if let Some(v) = args.outer_max_iters {
        p.max_outer_iters = v;
    }
    for (name, v) in [("ascent.tol", p.ascent.tol), ("outer.tol", p.outer_tol)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Failure::config(format!("--{name} must be >= 0, got {v}")));
        }
    }
    if p.max_outer_iters == 0 {
        return Err(Failure::config("--outer.max-iters must be at least 1"));
    }
    Ok(())
}

pub fn resolve_manifest(args: &RunArgs) -> Result<RunManifest, Failure> {
    if let Some(path) = &args.manifest {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Failure::config(format!(
                "manifest schema version {} is not supported (expected {SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        m.scenario.validate()?;
        return Ok(m);
    }
    let (source, scenario) = match (&args.scenario, args.gen_seed) {
        (Some(path), _) => (
            ScenarioSource::File {
                path: path.display().to_string(),
            },
            load_scenario(path).map_err(|e| match e {
                anchor_core::Error::Io(msg) => Failure::io(format!("{}: {msg}", path.display())),
                other => other.into(),
            })?,
        ),
        (None, Some(gen_seed)) => {
            let counts = Counts::parse(args.counts.as_deref().unwrap_or_default())?;
            (
                ScenarioSource::Generated { gen_seed, counts },
                generate_random_scenario(gen_seed, counts, Region::default())?,
            )
        }
        (None, None) => return Err(Failure::config("need --scenario, --gen-seed or --manifest")),
    };
    if args.trials == 0 || args.intervals == 0 {
        return Err(Failure::config(
            "--trials and --intervals must be at least 1",
        ));
    }
    let mut params = AnchorParams::default();
    apply_overrides(args, &mut params)?;
    Ok(RunManifest {
        schema_version: SCHEMA_VERSION,
        simulator_version: env!("CARGO_PKG_VERSION").to_string(),
        source,
        scenario,
        methods: parse_methods(&args.methods)?,
        trials: args.trials,
        intervals: args.intervals,
        seed: args.seed,
        fast_mode: args.fast_mode,
        params,
        streams: [
            "scenario",
            "truth",
            "noise",
            "anneal",
            "random_alloc",
            "verify",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    })
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"")
        .map_err(|e| Failure::io(format!("{} is not writable: {e}", dir.display())))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let manifest = resolve_manifest(args)?;
    prepare_out(&args.out)?;
    let config = manifest.config();
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(Failure::config("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    info!(
        "running {} trial(s) x {} interval(s) of {:?} on {jobs} thread(s)",
        config.trials, config.intervals, config.methods
    );
    let result = pool.install(|| run_campaign(&manifest.scenario, &config))?;

    output::write_results(&args.out.join("results.csv"), &manifest.scenario, &result)?;
    output::write_trace(&args.out.join("trace.csv"), &result)?;
    output::write_summary(&args.out.join("summary.csv"), &result)?;
    output::write_json(
        &args.out.join("allocation.json"),
        &output::allocations(&result),
    )?;
    output::write_json(&args.out.join("manifest.json"), &manifest)?;

    println!(
        "{:<8} {:>8} {:>14} {:>14}",
        "method", "interval", "crmse", "mean_g"
    );
    for row in &result.summary {
        println!(
            "{:<8} {:>8} {:>14} {:>14}",
            row.method.name(),
            row.interval,
            output::sig12(row.crmse),
            output::sig12(row.mean_objective)
        );
    }
    Ok(())
}
