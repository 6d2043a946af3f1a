//! Comparison sweeps and the certificate grid check.
//!
//! The sweep command answers two questions the pipeline stages do not:
//! how the communication count degrades as the symbol budget shrinks
//! (`--m-list`), and how much disturbance the scenario can absorb before
//! scheduling breaks down (`--bisect-wmax`). Infeasible entries are data
//! here, not process failures, so the sweep exits 0 and records them.

use crate::artifacts::{push_csv_rows, write_artifact, write_json, Timings};
use crate::error::{CliError, Result};
use crate::pipeline::{load_references, prepare_legs, StageCtx};
use rayon::prelude::*;
use reachsched::abstraction::{min_comm_schedule, optcom, sym_of_state};
use reachsched::lyapunov::verify_clf_on_grid;
use reachsched::planner::ReferenceTrajectory;
use reachsched::scenario::RunMode;
use reachsched::simulator::{traverse, TraverseStats};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Result of evaluating one symbol budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MSweepEntry {
    pub m: usize,
    pub feasible: bool,
    /// Communication count the table compares: the traverse window count
    /// in traverse mode, the minimum schedule cost otherwise.
    pub comms: Option<usize>,
    /// Minimum schedule cost per leg, where schedulable.
    pub schedule_costs: Vec<Option<usize>>,
    pub traverse: Option<TraverseStats>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MSweepArtifact {
    pub mode: String,
    pub seed: u64,
    pub step_budget: usize,
    pub entries: Vec<MSweepEntry>,
}

/// Largest schedulable disturbance radius, offline versus online-at-start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierArtifact {
    pub tolerance: f64,
    pub config_wmax: f64,
    pub offline_wmax: f64,
    pub online_wmax: f64,
    pub evaluations: usize,
}

const FRONTIER_TOL: f64 = 0.005;

fn evaluate_m(ctx: &StageCtx, m: usize, references: &[ReferenceTrajectory]) -> Result<MSweepEntry> {
    let mut cfg = ctx.cfg.clone();
    cfg.abstraction.m = m;
    let sys = cfg.build_system()?;
    let clf = cfg.build_clf(&sys)?;

    let infeasible = |err: reachsched::Error, costs: Vec<Option<usize>>| MSweepEntry {
        m,
        feasible: false,
        comms: None,
        schedule_costs: costs,
        traverse: None,
        error: Some(err.to_string()),
    };

    let legs = match prepare_legs(&cfg, &sys, &clf, references.to_vec()) {
        Ok(legs) => legs,
        Err(err @ reachsched::Error::Infeasible(_)) => return Ok(infeasible(err, Vec::new())),
        Err(err) => return Err(err.into()),
    };

    let mut costs = Vec::with_capacity(legs.len());
    for leg in &legs {
        match min_comm_schedule(&leg.ta) {
            Ok((schedule, _)) => costs.push(Some(schedule.cost())),
            Err(err @ reachsched::Error::Infeasible(_)) => {
                costs.push(None);
                return Ok(infeasible(err, costs));
            }
            Err(err) => return Err(err.into()),
        }
    }

    if cfg.runtime.mode == RunMode::Traverse {
        let x0 = cfg.initial_state(&sys)?;
        let stats = traverse(
            &clf,
            [legs[0].as_traverse_leg(), legs[1].as_traverse_leg()],
            x0,
            cfg.runtime.step_budget,
            cfg.runtime.disturbance,
            cfg.runtime.seed,
        )?;
        Ok(MSweepEntry {
            m,
            feasible: true,
            comms: Some(stats.comm_count),
            schedule_costs: costs,
            traverse: Some(stats),
            error: None,
        })
    } else {
        Ok(MSweepEntry {
            m,
            feasible: true,
            comms: costs[0],
            schedule_costs: costs,
            traverse: None,
            error: None,
        })
    }
}

/// True when the scenario still schedules at disturbance radius `w`. The
/// offline test demands a full accepting run from the worst-case entry
/// level; the online test instead starts leg 0 from the nominal start's
/// measured symbol, which is never coarser, so online feasibility covers
/// at least the offline range.
fn feasible_at(
    ctx: &StageCtx,
    references: &[ReferenceTrajectory],
    w: f64,
    online: bool,
) -> Result<bool> {
    let mut cfg = ctx.cfg.clone();
    cfg.system.w_max = w;
    let sys = cfg.build_system()?;
    let clf = cfg.build_clf(&sys)?;
    let legs = match prepare_legs(&cfg, &sys, &clf, references.to_vec()) {
        Ok(legs) => legs,
        Err(reachsched::Error::Infeasible(_)) => return Ok(false),
        Err(err) => return Err(err.into()),
    };
    for (i, leg) in legs.iter().enumerate() {
        let schedulable = if online && i == 0 {
            let x0 = cfg.initial_state(&leg.sys)?;
            let symbol = sym_of_state(&leg.ta.system, &clf, &x0, &leg.reference.states[0]);
            optcom(&leg.ta, symbol, 0).map(|_| ())
        } else {
            min_comm_schedule(&leg.ta).map(|_| ())
        };
        match schedulable {
            Ok(()) => {}
            Err(reachsched::Error::Infeasible(_)) => return Ok(false),
            Err(err) => return Err(err.into()),
        }
    }
    Ok(true)
}

/// Largest accepted w located by doubling then bisection. The predicate
/// is monotone (larger disturbances only remove schedules), `floor` is a
/// value known or required to be accepted, and the result is exact to
/// within the tolerance.
fn bisect_max(
    ctx: &StageCtx,
    references: &[ReferenceTrajectory],
    online: bool,
    floor: f64,
    evaluations: &mut usize,
) -> Result<f64> {
    let check = |w: f64, evaluations: &mut usize| -> Result<bool> {
        *evaluations += 1;
        feasible_at(ctx, references, w, online)
    };
    if !check(floor, evaluations)? {
        return Ok(floor);
    }
    let mut lo = floor;
    let mut hi = (2.0 * floor).max(ctx.cfg.system.w_max).max(0.01);
    let mut doublings = 0;
    while check(hi, evaluations)? {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(CliError::Config(format!(
                "the scenario schedules at any disturbance radius up to {lo:.3e}; \
                 no frontier to bisect"
            )));
        }
    }
    while hi - lo > FRONTIER_TOL {
        let mid = 0.5 * (lo + hi);
        if check(mid, evaluations)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn bisect_frontier(ctx: &StageCtx, references: &[ReferenceTrajectory]) -> Result<FrontierArtifact> {
    let mut evaluations = 0;
    let offline_wmax = bisect_max(ctx, references, false, 0.0, &mut evaluations)?;
    // The online search starts at the offline frontier, which it accepts
    // by construction, so the reported pair is always ordered.
    let online_wmax = bisect_max(ctx, references, true, offline_wmax, &mut evaluations)?;
    Ok(FrontierArtifact {
        tolerance: FRONTIER_TOL,
        config_wmax: ctx.cfg.system.w_max,
        offline_wmax,
        online_wmax,
        evaluations,
    })
}

pub fn cmd_sweep(ctx: &StageCtx, m_list: Option<Vec<usize>>, bisect_wmax: bool) -> Result<()> {
    if m_list.is_none() && !bisect_wmax {
        return Err(CliError::Config(
            "sweep needs --m-list and/or --bisect-wmax".into(),
        ));
    }
    let mut timings = Timings::default();
    let (references, input_stamps) = load_references(ctx)?;
    let mut outputs = Vec::new();
    let mut seeds = BTreeMap::new();

    if let Some(ms) = m_list {
        if let Some(&bad) = ms.iter().find(|&&m| m < 2) {
            return Err(CliError::Config(format!(
                "--m-list entries need at least 2 symbols, got {bad}"
            )));
        }
        seeds.insert("runtime".to_string(), ctx.cfg.runtime.seed);
        let entries = timings.time("m_sweep", || {
            ms.par_iter()
                .map(|&m| evaluate_m(ctx, m, &references))
                .collect::<Result<Vec<_>>>()
        })?;
        for entry in &entries {
            println!(
                "sweep M={}: {}",
                entry.m,
                match entry.comms {
                    Some(comms) => format!("{comms} transmissions"),
                    None => "infeasible".to_string(),
                }
            );
        }
        let artifact = MSweepArtifact {
            mode: ctx.cfg.runtime.mode.to_string(),
            seed: ctx.cfg.runtime.seed,
            step_budget: ctx.cfg.runtime.step_budget,
            entries,
        };
        let csv = push_csv_rows(
            "m,feasible,comms",
            artifact.entries.iter().map(|e| {
                vec![
                    e.m.to_string(),
                    e.feasible.to_string(),
                    e.comms.map_or(String::new(), |c| c.to_string()),
                ]
            }),
        );
        outputs.push(write_artifact(&ctx.dir, "sweep_m.csv", csv.as_bytes())?);
        outputs.push(write_json(&ctx.dir, "sweep_m.json", &artifact)?);
    }

    if bisect_wmax {
        let frontier = timings.time("bisect_wmax", || bisect_frontier(ctx, &references))?;
        println!(
            "sweep w_max frontier: offline {:.4}, online {:.4} (tolerance {})",
            frontier.offline_wmax, frontier.online_wmax, frontier.tolerance
        );
        outputs.push(write_json(&ctx.dir, "frontier.json", &frontier)?);
    }

    ctx.write_manifest("sweep", input_stamps, outputs, seeds, timings)?;
    Ok(())
}

/// Grid density matching the certificate checks reported for the bundled
/// scenarios.
const GRID_DENSITY: usize = 21;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClfReportArtifact {
    pub grid_density: usize,
    pub all_ok: bool,
    pub report: reachsched::lyapunov::VerificationReport,
}

pub fn cmd_verify_clf(ctx: &StageCtx) -> Result<()> {
    let mut timings = Timings::default();
    let sys = ctx.cfg.build_system()?;
    let clf = ctx.cfg.build_clf(&sys)?;
    let report = timings.time("verify", || verify_clf_on_grid(&clf, &sys, GRID_DENSITY))?;
    let artifact = ClfReportArtifact {
        grid_density: GRID_DENSITY,
        all_ok: report.all_ok(),
        report,
    };
    let outputs = vec![write_json(&ctx.dir, "clf_report.json", &artifact)?];
    ctx.write_manifest("verify-clf", Vec::new(), outputs, BTreeMap::new(), timings)?;
    let report = &artifact.report;
    println!(
        "verify-clf: {} grid points, {} pairs; worst slacks: sandwich {:.3e}, \
         decrease {:.3e}, input {:.3e}",
        report.grid_points,
        report.checked_pairs,
        report.sandwich.worst_slack,
        report.decrease.worst_slack,
        report.input_bound.worst_slack
    );
    if !artifact.all_ok {
        let total =
            report.sandwich.violations + report.decrease.violations + report.input_bound.violations;
        return Err(reachsched::Error::Certificate(format!(
            "{total} grid violation(s); see clf_report.json"
        ))
        .into());
    }
    Ok(())
}
