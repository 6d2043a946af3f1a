//! The four pipeline stages: plan, abstract, schedule, simulate.
//!
//! Stages communicate exclusively through files in the artifact
//! directory, so each one can run in a separate invocation (or not at
//! all: downstream stages report a stage-order error when an upstream
//! artifact is missing). Every stage finishes by writing its manifest.

use crate::artifacts::{
    envelope_csv, read_upstream_json, reference_csv, schedule_csv, trace_csv, write_artifact,
    write_json, FileStamp, Manifest, ReferenceArtifact, Timings,
};
use crate::error::{CliError, Result};
use reachsched::abstraction::{min_comm_schedule, CommSchedule};
use reachsched::error_model::SafetyEnvelope;
use reachsched::lyapunov::DeltaIssClf;
use reachsched::planner::ReferenceTrajectory;
use reachsched::runtime::{error_bound_series, run_offline, run_online, ExecutionTrace};
use reachsched::scenario::{
    abstract_leg, plan_references, prepare_traverse, PreparedLeg, RunMode, ScenarioConfig,
};
use reachsched::simulator::{
    check_validity, monte_carlo, monte_carlo_from, traverse, CampaignStats, DisturbanceModel,
    SchedulePolicy, TraverseStats, ValidityReport,
};
use reachsched::system::SystemModel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Everything a stage needs: the validated config with command-line
/// overrides already applied, the artifact directory, and the pieces of
/// the manifest that identify this invocation.
pub struct StageCtx {
    pub cfg: ScenarioConfig,
    pub dir: PathBuf,
    pub config_stamp: FileStamp,
    pub seed_override: Option<u64>,
    pub mode_override: Option<String>,
}

impl StageCtx {
    fn manifest(
        &self,
        stage: &str,
        inputs: Vec<FileStamp>,
        outputs: Vec<FileStamp>,
        seeds: BTreeMap<String, u64>,
        timings: Timings,
    ) -> Manifest {
        Manifest {
            stage: stage.to_string(),
            scenario: self.cfg.name.clone(),
            mode: self.cfg.runtime.mode.to_string(),
            config: self.config_stamp.clone(),
            seed_override: self.seed_override,
            mode_override: self.mode_override.clone(),
            inputs,
            outputs,
            seeds,
            timings_ms: timings.into_map(),
        }
    }

    pub(crate) fn write_manifest(
        &self,
        stage: &str,
        inputs: Vec<FileStamp>,
        outputs: Vec<FileStamp>,
        seeds: BTreeMap<String, u64>,
        timings: Timings,
    ) -> Result<()> {
        let manifest = self.manifest(stage, inputs, outputs, seeds, timings);
        write_json(&self.dir, &format!("manifest_{stage}.json"), &manifest)?;
        Ok(())
    }
}

/// File suffixes for the per-leg artifacts of the active mode.
pub fn leg_suffixes(mode: RunMode) -> &'static [&'static str] {
    match mode {
        RunMode::Traverse => &["_out", "_back"],
        _ => &[""],
    }
}

/// Loads the planned references the active mode expects.
pub fn load_references(ctx: &StageCtx) -> Result<(Vec<ReferenceTrajectory>, Vec<FileStamp>)> {
    let mut references = Vec::new();
    let mut stamps = Vec::new();
    for suffix in leg_suffixes(ctx.cfg.runtime.mode) {
        let name = format!("reference{suffix}.json");
        let (artifact, stamp): (ReferenceArtifact, _) =
            read_upstream_json(&ctx.dir, &name, "plan")?;
        references.push(artifact.into_reference(ctx.dir.join(&name))?);
        stamps.push(stamp);
    }
    Ok((references, stamps))
}

/// Abstraction legs for the configured mode. Traverse chains the two legs
/// through the handoff entry levels; a single leg tightens its entry
/// level to the pinned start when the config fixes one.
pub fn prepare_legs(
    cfg: &ScenarioConfig,
    sys: &SystemModel,
    clf: &DeltaIssClf,
    mut references: Vec<ReferenceTrajectory>,
) -> Result<Vec<PreparedLeg>, reachsched::Error> {
    if cfg.runtime.mode == RunMode::Traverse {
        let back = references.pop().expect("traverse loads two references");
        let out = references.pop().expect("traverse loads two references");
        let [leg_out, leg_back] = prepare_traverse(cfg, sys, clf, out, back)?;
        Ok(vec![leg_out, leg_back])
    } else {
        let reference = references.pop().expect("single-leg modes load one reference");
        let v_entry = match &cfg.runtime.x0 {
            Some(_) => Some(clf.value(&cfg.initial_state(sys)?, &reference.states[0])),
            None => None,
        };
        Ok(vec![abstract_leg(cfg, sys, clf, reference, v_entry)?])
    }
}

pub fn cmd_plan(ctx: &StageCtx) -> Result<()> {
    let mut timings = Timings::default();
    let sys = ctx.cfg.build_system()?;
    let references = timings.time("plan", || plan_references(&ctx.cfg, &sys))?;

    let mut outputs = Vec::new();
    let mut horizons = Vec::new();
    for (reference, suffix) in references.iter().zip(leg_suffixes(ctx.cfg.runtime.mode)) {
        let artifact = ReferenceArtifact::from_reference(&ctx.cfg.name, reference);
        outputs.push(write_json(&ctx.dir, &format!("reference{suffix}.json"), &artifact)?);
        outputs.push(write_artifact(
            &ctx.dir,
            &format!("reference{suffix}.csv"),
            reference_csv(reference).as_bytes(),
        )?);
        horizons.push(reference.horizon());
    }

    let mut seeds = BTreeMap::new();
    seeds.insert("rrt".to_string(), ctx.cfg.rrt.seed);
    if ctx.cfg.runtime.mode == RunMode::Traverse {
        seeds.insert("rrt_back".to_string(), ctx.cfg.rrt.seed.wrapping_add(1));
    }
    ctx.write_manifest("plan", Vec::new(), outputs, seeds, timings)?;
    println!(
        "plan: {} leg(s) with horizons {horizons:?} -> {}",
        references.len(),
        ctx.dir.display()
    );
    Ok(())
}

/// Summary of one leg's timed abstraction, as written by the abstract
/// stage for downstream tools and sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbstractionLegSummary {
    pub leg: String,
    pub m: usize,
    pub nu_bar: f64,
    pub horizon: usize,
    pub iterations: usize,
    pub s_init: usize,
    pub s_init_level: f64,
    pub v_init: f64,
    pub v_final: f64,
    pub num_final_symbols: usize,
    pub feasible: bool,
    pub min_comms: Option<usize>,
    pub infeasibility: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbstractionArtifact {
    pub feasible: bool,
    /// Failure preceding leg construction, when one occurred.
    pub error: Option<String>,
    pub legs: Vec<AbstractionLegSummary>,
}

/// JSON header next to the envelope CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EnvelopeHeader {
    v_init: f64,
    v_final: f64,
    horizon: usize,
}

fn leg_name(suffix: &str) -> String {
    let trimmed = suffix.trim_start_matches('_');
    if trimmed.is_empty() {
        "main".to_string()
    } else {
        trimmed.to_string()
    }
}

fn summarize_leg(leg: &PreparedLeg, suffix: &str) -> (AbstractionLegSummary, Option<reachsched::Error>) {
    let partition = &leg.ta.system.partition;
    let (feasible, min_comms, infeasibility, err) = match min_comm_schedule(&leg.ta) {
        Ok((schedule, _)) => (true, Some(schedule.cost()), None, None),
        Err(err) => (false, None, Some(err.to_string()), Some(err)),
    };
    let summary = AbstractionLegSummary {
        leg: leg_name(suffix),
        m: partition.levels.len(),
        nu_bar: partition.nu_bar,
        horizon: leg.ta.horizon,
        iterations: leg.ta.iterations,
        s_init: leg.ta.s_init,
        s_init_level: partition.level(leg.ta.s_init),
        v_init: leg.env.v_init,
        v_final: leg.env.v_final,
        num_final_symbols: leg.ta.final_symbols.iter().filter(|&&f| f).count(),
        feasible,
        min_comms,
        infeasibility,
    };
    (summary, err)
}

fn write_envelope(dir: &std::path::Path, suffix: &str, env: &SafetyEnvelope) -> Result<[FileStamp; 2]> {
    let csv = write_artifact(dir, &format!("envelope{suffix}.csv"), envelope_csv(env).as_bytes())?;
    let header = EnvelopeHeader {
        v_init: env.v_init,
        v_final: env.v_final,
        horizon: env.horizon(),
    };
    let json = write_json(dir, &format!("envelope{suffix}.json"), &header)?;
    Ok([csv, json])
}

pub fn cmd_abstract(ctx: &StageCtx) -> Result<()> {
    let mut timings = Timings::default();
    let sys = ctx.cfg.build_system()?;
    let clf = ctx.cfg.build_clf(&sys)?;
    let (references, input_stamps) = load_references(ctx)?;

    let prepared = timings.time("abstract", || prepare_legs(&ctx.cfg, &sys, &clf, references));
    let legs = match prepared {
        Ok(legs) => legs,
        Err(err) => {
            // Infeasibility discovered while unrolling (the entry level
            // overflows the partition) is still a reportable result.
            if matches!(err, reachsched::Error::Infeasible(_)) {
                let summary = AbstractionArtifact {
                    feasible: false,
                    error: Some(err.to_string()),
                    legs: Vec::new(),
                };
                let outputs = vec![write_json(&ctx.dir, "abstraction.json", &summary)?];
                ctx.write_manifest("abstract", input_stamps, outputs, BTreeMap::new(), timings)?;
            }
            return Err(err.into());
        }
    };

    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    let mut first_infeasible = None;
    for (leg, suffix) in legs.iter().zip(leg_suffixes(ctx.cfg.runtime.mode)) {
        outputs.extend(write_envelope(&ctx.dir, suffix, &leg.env)?);
        let (summary, err) = summarize_leg(leg, suffix);
        println!(
            "abstract[{}]: M={} horizon={} s_init level {:.6e} -> {}",
            summary.leg,
            summary.m,
            summary.horizon,
            summary.s_init_level,
            match summary.min_comms {
                Some(cost) => format!("min comms {cost}"),
                None => "infeasible".to_string(),
            }
        );
        summaries.push(summary);
        if first_infeasible.is_none() {
            first_infeasible = err;
        }
    }
    let artifact = AbstractionArtifact {
        feasible: summaries.iter().all(|s| s.feasible),
        error: None,
        legs: summaries,
    };
    outputs.push(write_json(&ctx.dir, "abstraction.json", &artifact)?);
    ctx.write_manifest("abstract", input_stamps, outputs, BTreeMap::new(), timings)?;
    match first_infeasible {
        Some(err) => Err(err.into()),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleLeg {
    pub leg: String,
    pub cost: usize,
    pub horizon: usize,
    pub schedule: CommSchedule,
    /// Stages at which the schedule communicates.
    pub comm_stages: Vec<usize>,
    /// Error levels along the accepting run, one per stage.
    pub run_levels: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleArtifact {
    pub legs: Vec<ScheduleLeg>,
}

pub fn cmd_schedule(ctx: &StageCtx) -> Result<()> {
    let mut timings = Timings::default();
    let sys = ctx.cfg.build_system()?;
    let clf = ctx.cfg.build_clf(&sys)?;
    let (references, mut input_stamps) = load_references(ctx)?;
    let (_, abstraction_stamp): (AbstractionArtifact, _) =
        read_upstream_json(&ctx.dir, "abstraction.json", "abstract")?;
    input_stamps.push(abstraction_stamp);

    let legs = prepare_legs(&ctx.cfg, &sys, &clf, references)?;
    let mut outputs = Vec::new();
    let mut artifact = ScheduleArtifact { legs: Vec::new() };
    for (leg, suffix) in legs.iter().zip(leg_suffixes(ctx.cfg.runtime.mode)) {
        let (schedule, run) = timings.time(&format!("schedule{suffix}"), || {
            min_comm_schedule(&leg.ta)
        })?;
        outputs.push(write_artifact(
            &ctx.dir,
            &format!("schedule{suffix}.csv"),
            schedule_csv(&schedule.bits).as_bytes(),
        )?);
        let partition = &leg.ta.system.partition;
        println!(
            "schedule[{}]: {} transmissions over {} stages",
            leg_name(suffix),
            schedule.cost(),
            schedule.bits.len()
        );
        artifact.legs.push(ScheduleLeg {
            leg: leg_name(suffix),
            cost: schedule.cost(),
            horizon: schedule.bits.len(),
            comm_stages: schedule
                .bits
                .iter()
                .enumerate()
                .filter_map(|(k, &c)| c.then_some(k))
                .collect(),
            run_levels: run.iter().map(|&s| partition.level(s)).collect(),
            schedule,
        });
    }
    outputs.push(write_json(&ctx.dir, "schedule.json", &artifact)?);
    ctx.write_manifest("schedule", input_stamps, outputs, BTreeMap::new(), timings)?;
    Ok(())
}

/// Campaign statistics for the offline and online modes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignArtifact {
    pub mode: String,
    pub disturbance: String,
    pub runs: usize,
    pub seed: u64,
    pub validity_rate: f64,
    pub comm_min: usize,
    pub comm_max: usize,
    pub comm_mean: f64,
    pub min_safety_slack: f64,
    pub outcomes: CampaignStats,
}

/// Statistics for the budgeted traverse mode, one entry per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraverseArtifact {
    pub mode: String,
    pub disturbance: String,
    pub runs: usize,
    pub seed: u64,
    pub step_budget: usize,
    pub comm_min: usize,
    pub comm_max: usize,
    pub all_runs_valid: bool,
    pub outcomes: Vec<TraverseStats>,
}

/// JSON twin of the exemplar trace CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraceSummary {
    start: Vec<f64>,
    comm_count: usize,
    valid: bool,
    report: ValidityReport,
}

fn disturbance_name(kind: reachsched::simulator::DisturbanceKind) -> String {
    serde_json::to_value(kind)
        .expect("plain enum serializes")
        .as_str()
        .expect("kind serializes to a string")
        .to_string()
}

/// Runs one exemplar execution from the nominal start and serializes the
/// full trace for plotting.
fn write_nominal_trace(
    ctx: &StageCtx,
    leg: &PreparedLeg,
    clf: &DeltaIssClf,
    schedule: Option<&CommSchedule>,
    seed: u64,
) -> Result<(Vec<FileStamp>, ExecutionTrace)> {
    let x0 = ctx.cfg.initial_state(&leg.sys)?;
    let mut dist = DisturbanceModel::for_run(
        ctx.cfg.runtime.disturbance,
        leg.sys.disturbance_set.radius,
        leg.sys.disturbance_dim(),
        seed,
        0,
    );
    let trace = match schedule {
        Some(schedule) => run_offline(&leg.sys, clf, &leg.reference, schedule, x0.clone(), &mut dist)?,
        None => run_online(&leg.sys, clf, &leg.reference, &leg.ta, x0.clone(), &mut dist)?,
    };
    let bounds = error_bound_series(&leg.model, leg.env.v_init, &trace);
    let report = check_validity(&leg.sys, &trace);
    let summary = TraceSummary {
        start: x0.iter().copied().collect(),
        comm_count: trace.comm_count(),
        valid: report.valid(),
        report,
    };
    let stamps = vec![
        write_artifact(&ctx.dir, "traces/nominal.csv", trace_csv(&trace, &bounds).as_bytes())?,
        write_json(&ctx.dir, "traces/nominal.json", &summary)?,
    ];
    Ok((stamps, trace))
}

pub fn cmd_simulate(ctx: &StageCtx) -> Result<()> {
    let mut timings = Timings::default();
    let sys = ctx.cfg.build_system()?;
    let clf = ctx.cfg.build_clf(&sys)?;
    let (references, mut input_stamps) = load_references(ctx)?;
    let (_, abstraction_stamp): (AbstractionArtifact, _) =
        read_upstream_json(&ctx.dir, "abstraction.json", "abstract")?;
    input_stamps.push(abstraction_stamp);

    let runtime = &ctx.cfg.runtime;
    let mut seeds = BTreeMap::new();
    seeds.insert("runtime".to_string(), runtime.seed);
    let legs = prepare_legs(&ctx.cfg, &sys, &clf, references)?;
    let mut outputs = Vec::new();

    match runtime.mode {
        RunMode::Offline | RunMode::Online => {
            let leg = &legs[0];
            let schedule = if runtime.mode == RunMode::Offline {
                let (artifact, stamp): (ScheduleArtifact, _) =
                    read_upstream_json(&ctx.dir, "schedule.json", "schedule")?;
                input_stamps.push(stamp);
                let stored = artifact
                    .legs
                    .into_iter()
                    .next()
                    .ok_or_else(|| CliError::Config("schedule artifact holds no legs".into()))?;
                if stored.schedule.bits.len() != leg.reference.horizon() {
                    return Err(CliError::Config(format!(
                        "stored schedule covers {} stages but the reference has {}; \
                         re-run the schedule stage",
                        stored.schedule.bits.len(),
                        leg.reference.horizon()
                    )));
                }
                Some(stored.schedule)
            } else {
                None
            };
            let policy = match &schedule {
                Some(schedule) => SchedulePolicy::Offline(schedule),
                None => SchedulePolicy::Online(&leg.ta),
            };
            let stats = timings.time("campaign", || match &ctx.cfg.runtime.x0 {
                Some(_) => {
                    let x0 = ctx.cfg.initial_state(&leg.sys)?;
                    monte_carlo_from(
                        &leg.sys,
                        &clf,
                        &leg.reference,
                        policy,
                        vec![x0; runtime.runs],
                        runtime.disturbance,
                        runtime.seed,
                    )
                }
                None => monte_carlo(
                    &leg.sys,
                    &clf,
                    &leg.reference,
                    policy,
                    runtime.runs,
                    runtime.disturbance,
                    runtime.seed,
                ),
            })?;
            let comms = stats.comm_counts();
            let artifact = CampaignArtifact {
                mode: runtime.mode.to_string(),
                disturbance: disturbance_name(runtime.disturbance),
                runs: runtime.runs,
                seed: runtime.seed,
                validity_rate: stats.validity_rate(),
                comm_min: comms.iter().copied().min().unwrap_or(0),
                comm_max: comms.iter().copied().max().unwrap_or(0),
                comm_mean: comms.iter().sum::<usize>() as f64 / comms.len() as f64,
                min_safety_slack: stats.min_slack(),
                outcomes: stats,
            };
            println!(
                "simulate {}: {}/{} valid, comms {}..{}, min slack {:.3}",
                artifact.mode,
                (artifact.validity_rate * artifact.runs as f64).round() as usize,
                artifact.runs,
                artifact.comm_min,
                artifact.comm_max,
                artifact.min_safety_slack
            );
            outputs.push(write_json(&ctx.dir, "stats.json", &artifact)?);
            let (trace_stamps, _) = timings.time("nominal_trace", || {
                write_nominal_trace(ctx, leg, &clf, schedule.as_ref(), runtime.seed)
            })?;
            outputs.extend(trace_stamps);
        }
        RunMode::Traverse => {
            let x0 = ctx.cfg.initial_state(&sys)?;
            let outcomes = timings.time("campaign", || {
                (0..runtime.runs)
                    .map(|i| {
                        traverse(
                            &clf,
                            [legs[0].as_traverse_leg(), legs[1].as_traverse_leg()],
                            x0.clone(),
                            runtime.step_budget,
                            runtime.disturbance,
                            runtime.seed.wrapping_add(i as u64),
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()
            })?;
            let artifact = TraverseArtifact {
                mode: runtime.mode.to_string(),
                disturbance: disturbance_name(runtime.disturbance),
                runs: runtime.runs,
                seed: runtime.seed,
                step_budget: runtime.step_budget,
                comm_min: outcomes.iter().map(|o| o.comm_count).min().unwrap_or(0),
                comm_max: outcomes.iter().map(|o| o.comm_count).max().unwrap_or(0),
                all_runs_valid: outcomes.iter().all(|o| o.all_legs_valid),
                outcomes,
            };
            println!(
                "simulate traverse: {} run(s) of {} steps, comms {}..{}, all legs valid: {}",
                artifact.runs,
                artifact.step_budget,
                artifact.comm_min,
                artifact.comm_max,
                artifact.all_runs_valid
            );
            outputs.push(write_json(&ctx.dir, "stats.json", &artifact)?);
        }
    }

    ctx.write_manifest("simulate", input_stamps, outputs, seeds, timings)?;
    Ok(())
}
