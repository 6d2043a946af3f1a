//! Finite abstraction of the scalar error recursion and schedule search.
//!
//! The nonnegative error axis is quantized into M levels (the last one
//! infinite). Lifting the worst-case recursion onto the levels gives a
//! small deterministic transition system; unrolling it along the reference
//! horizon and pruning by the stage budgets gives a layered DAG whose
//! cheapest accepting run, counting communicating steps, is the schedule
//! we execute. A brute-force binary tree over the exact recursion serves
//! as the ground-truth baseline for small horizons.

use crate::error::{Error, InfeasibleReason, Result};
use crate::error_model::{ErrorBoundModel, SafetyEnvelope};
use crate::lyapunov::DeltaIssClf;
use crate::planner::ReferenceTrajectory;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Cost sentinel for unreachable nodes in the layered search.
const UNREACHABLE: u32 = u32::MAX;
/// Slack in the feedback-magnitude admissibility test, matching the
/// schedule checker.
const INPUT_CHECK_TOL: f64 = 1.0e-9;

/// Quantization of the error axis into levels nu_1 < ... < nu_{M-1} =
/// nu_bar < nu_M = infinity, equally spaced below the ceiling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    pub m: usize,
    pub nu_bar: f64,
    pub levels: Vec<f64>,
}

impl Partition {
    /// Equally spaced levels below an explicit ceiling.
    pub fn with_ceiling(nu_bar: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("need at least 2 levels, got {m}")));
        }
        if !(nu_bar > 0.0) || !nu_bar.is_finite() {
            return Err(Error::Config(format!(
                "level ceiling must be positive and finite, got {nu_bar}"
            )));
        }
        let mut levels: Vec<f64> = (1..m)
            .map(|i| nu_bar * i as f64 / (m - 1) as f64)
            .collect();
        levels.push(f64::INFINITY);
        Ok(Partition { m, nu_bar, levels })
    }

    /// Level of the i-th symbol (0-based).
    pub fn level(&self, i: usize) -> f64 {
        self.levels[i]
    }

    /// Lowest-index symbol whose level dominates the value. The infinite
    /// top level makes this total.
    pub fn symbol_for(&self, v: f64) -> usize {
        self.levels
            .iter()
            .position(|&nu| v <= nu)
            .expect("the top level is infinite")
    }
}

/// Ceiling taken as the largest stage budget of the envelope.
pub fn build_partition(env: &SafetyEnvelope, m: usize) -> Result<Partition> {
    let nu_bar = env.v_max.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Partition::with_ceiling(nu_bar, m)
}

/// The worst-case error recursion lifted onto the partition: a
/// deterministic, non-blocking transition system over the level symbols,
/// one successor per (symbol, communication bit).
#[derive(Debug, Clone)]
pub struct SymbolicErrorSystem {
    pub partition: Partition,
    /// Successor under a silent step (no communication).
    pub succ_silent: Vec<usize>,
    /// Successor under a communicating step.
    pub succ_comm: Vec<usize>,
}

impl SymbolicErrorSystem {
    pub fn num_symbols(&self) -> usize {
        self.partition.m
    }

    pub fn successor(&self, symbol: usize, communicated: bool) -> usize {
        if communicated {
            self.succ_comm[symbol]
        } else {
            self.succ_silent[symbol]
        }
    }
}

/// Lifts one step of the error recursion: the successor of a level under
/// a bit is the lowest level dominating the propagated bound.
pub fn build_symbolic_system(
    model: &ErrorBoundModel,
    partition: Partition,
) -> SymbolicErrorSystem {
    let map = |communicated: bool| -> Vec<usize> {
        partition
            .levels
            .iter()
            .map(|&nu| partition.symbol_for(model.step_bound(nu, communicated, model.w_max)))
            .collect()
    };
    SymbolicErrorSystem {
        succ_silent: map(false),
        succ_comm: map(true),
        partition,
    }
}

/// A communication schedule with its origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommSchedule {
    pub bits: Vec<bool>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Planned ahead of execution; always starts with a communication.
    Offline,
    /// Re-planned during execution from the given stage on.
    OnlineAt(usize),
    /// Produced by the exhaustive tree baseline; the first bit is free.
    Exhaustive,
}

impl CommSchedule {
    pub fn cost(&self) -> usize {
        self.bits.iter().filter(|&&c| c).count()
    }
}

/// The symbolic system unrolled along the reference horizon, with edges
/// pruned by the stage budgets and the input-magnitude condition.
#[derive(Debug, Clone)]
pub struct TimedSymbolicSystem {
    pub system: SymbolicErrorSystem,
    pub horizon: usize,
    /// allowed[k][i][c]: the edge (s_i, k) -c-> (succ_c(s_i), k+1) survived.
    allowed: Vec<Vec<[bool; 2]>>,
    pub s_init: usize,
    /// Symbols whose level meets the terminal bound.
    pub final_symbols: Vec<bool>,
    /// Loop iterations spent building the edge set; 2 M L by construction.
    pub iterations: usize,
}

/// Unrolls the symbolic system along the horizon. At each stage an edge
/// survives only when its source level fits the current budget, its
/// target level fits the next budget, and (for communicating edges) the
/// feedback magnitude at the source level stays admissible.
pub fn build_timed_system(
    system: SymbolicErrorSystem,
    model: &ErrorBoundModel,
    env: &SafetyEnvelope,
    reference: &ReferenceTrajectory,
) -> Result<TimedSymbolicSystem> {
    let l = env.horizon();
    if reference.horizon() != l {
        return Err(Error::Config(format!(
            "reference horizon {} does not match envelope horizon {l}",
            reference.horizon()
        )));
    }
    let m = system.num_symbols();
    let s_init = system.partition.symbol_for(env.v_init);
    if !system.partition.level(s_init).is_finite() {
        return Err(Error::Infeasible(InfeasibleReason::InitialLevelOverflow {
            v_init: env.v_init,
            nu_bar: system.partition.nu_bar,
        }));
    }

    let mut iterations = 0usize;
    let mut allowed = Vec::with_capacity(l);
    for k in 0..l {
        let u_ref_norm = reference.controls[k].norm();
        let mut layer = vec![[false; 2]; m];
        for (i, flags) in layer.iter_mut().enumerate() {
            let level = system.partition.level(i);
            for c in [false, true] {
                iterations += 1;
                if level > env.v_max[k] {
                    continue;
                }
                let target_level = system.partition.level(system.successor(i, c));
                if target_level > env.v_max[k + 1] {
                    continue;
                }
                if c {
                    let bound = model.feedback_magnitude_bound(level, u_ref_norm);
                    if bound > model.u_max + INPUT_CHECK_TOL {
                        continue;
                    }
                }
                flags[usize::from(c)] = true;
            }
        }
        allowed.push(layer);
    }

    let final_symbols = system
        .partition
        .levels
        .iter()
        .map(|&nu| nu <= env.v_final)
        .collect();

    Ok(TimedSymbolicSystem {
        system,
        horizon: l,
        allowed,
        s_init,
        final_symbols,
        iterations,
    })
}

/// Minimum communications needed from every (symbol, stage) to reach an
/// accepted terminal symbol, by backward induction over the layers.
#[derive(Debug, Clone)]
pub struct CostToGo {
    /// cost[k][i]; UNREACHABLE marks dead nodes.
    cost: Vec<Vec<u32>>,
}

impl CostToGo {
    pub fn at(&self, stage: usize, symbol: usize) -> Option<u32> {
        let c = self.cost[stage][symbol];
        (c != UNREACHABLE).then_some(c)
    }
}

impl TimedSymbolicSystem {
    pub fn edge_allowed(&self, stage: usize, symbol: usize, communicated: bool) -> bool {
        self.allowed[stage][symbol][usize::from(communicated)]
    }

    /// Backward induction over the layered DAG; each stage relaxes both
    /// outgoing edges of every symbol, which is the settle order a 0-1
    /// shortest-path search would produce on this graph.
    pub fn cost_to_go(&self) -> CostToGo {
        let m = self.system.num_symbols();
        let mut cost = vec![vec![UNREACHABLE; m]; self.horizon + 1];
        for i in 0..m {
            if self.final_symbols[i] {
                cost[self.horizon][i] = 0;
            }
        }
        for k in (0..self.horizon).rev() {
            for i in 0..m {
                let mut best = UNREACHABLE;
                if self.edge_allowed(k, i, false) {
                    best = best.min(cost[k + 1][self.system.successor(i, false)]);
                }
                if self.edge_allowed(k, i, true) {
                    let tail = cost[k + 1][self.system.successor(i, true)];
                    if tail != UNREACHABLE {
                        best = best.min(tail + 1);
                    }
                }
                cost[k][i] = best;
            }
        }
        CostToGo { cost }
    }

    /// Greedy forward walk along cost-optimal edges, preferring silence;
    /// with a deterministic transition map this realizes the unique
    /// lexicographically-latest-communication optimum.
    fn walk(
        &self,
        table: &CostToGo,
        start: usize,
        start_stage: usize,
        force_first_comm: bool,
    ) -> Option<(Vec<bool>, Vec<usize>)> {
        let mut bits = Vec::with_capacity(self.horizon - start_stage);
        let mut run = Vec::with_capacity(self.horizon - start_stage + 1);
        let mut cur = start;
        run.push(cur);
        for k in start_stage..self.horizon {
            let silent_cost = if self.edge_allowed(k, cur, false) && !(k == start_stage && force_first_comm)
            {
                table.cost[k + 1][self.system.successor(cur, false)]
            } else {
                UNREACHABLE
            };
            let comm_cost = if self.edge_allowed(k, cur, true) {
                let tail = table.cost[k + 1][self.system.successor(cur, true)];
                if tail == UNREACHABLE { UNREACHABLE } else { tail + 1 }
            } else {
                UNREACHABLE
            };
            let best = silent_cost.min(comm_cost);
            if best == UNREACHABLE {
                return None;
            }
            let communicate = comm_cost < silent_cost;
            bits.push(communicate);
            cur = self.system.successor(cur, communicate);
            run.push(cur);
        }
        self.final_symbols[cur].then_some((bits, run))
    }

    /// First stage with no surviving run, for infeasibility diagnostics:
    /// forward-reachable symbols from the initial node (first bit forced
    /// to communicate) until a layer comes up empty.
    fn first_dead_stage(&self) -> InfeasibleReason {
        let level0 = self.system.partition.level(self.s_init);
        if self.horizon > 0 && level0 > 0.0 {
            // Distinguish "the initial symbol itself violates the stage-0
            // budget" from a later collapse.
            let has_exit = self.edge_allowed(0, self.s_init, true)
                || self.edge_allowed(0, self.s_init, false);
            if !has_exit {
                return InfeasibleReason::InitialEnvelope {
                    level: level0,
                    v_max0: f64::NAN,
                };
            }
        }
        let m = self.system.num_symbols();
        let mut frontier = vec![false; m];
        frontier[self.s_init] = true;
        for k in 0..self.horizon {
            let mut next = vec![false; m];
            let mut any = false;
            for (i, &active) in frontier.iter().enumerate() {
                if !active {
                    continue;
                }
                for c in [false, true] {
                    if k == 0 && !c {
                        continue;
                    }
                    if self.edge_allowed(k, i, c) {
                        next[self.system.successor(i, c)] = true;
                        any = true;
                    }
                }
            }
            if !any {
                return InfeasibleReason::EmptyLayer { stage: k + 1 };
            }
            frontier = next;
        }
        // Every layer is populated but no reachable terminal symbol is
        // accepted.
        let v_final = self
            .system
            .partition
            .levels
            .iter()
            .zip(&self.final_symbols)
            .filter(|&(_, &ok)| ok)
            .map(|(&nu, _)| nu)
            .fold(f64::NAN, f64::max);
        InfeasibleReason::Terminal { v_final }
    }
}

/// Cheapest accepting run from the initial node, counting communicating
/// steps, with the first bit forced to communicate. Ties resolve to the
/// schedule whose communications happen latest.
pub fn min_comm_schedule(ta: &TimedSymbolicSystem) -> Result<(CommSchedule, Vec<usize>)> {
    let table = ta.cost_to_go();
    match ta.walk(&table, ta.s_init, 0, true) {
        Some((bits, run)) => Ok((
            CommSchedule { bits, provenance: Provenance::Offline },
            run,
        )),
        None => Err(Error::Infeasible(ta.first_dead_stage())),
    }
}

/// Lowest symbol covering the certificate value of a concrete state pair.
pub fn sym_of_state(
    system: &SymbolicErrorSystem,
    clf: &DeltaIssClf,
    x: &DVector<f64>,
    x_hat: &DVector<f64>,
) -> usize {
    system.partition.symbol_for(clf.value(x, x_hat))
}

/// Remaining min-communication schedule from (symbol, stage) with the
/// immediate bit forced to communicate; the online re-planning primitive.
pub fn optcom(ta: &TimedSymbolicSystem, symbol: usize, stage: usize) -> Result<CommSchedule> {
    let table = ta.cost_to_go();
    optcom_with(ta, &table, symbol, stage)
}

/// `optcom` against a precomputed cost table, for tight runtime loops.
pub fn optcom_with(
    ta: &TimedSymbolicSystem,
    table: &CostToGo,
    symbol: usize,
    stage: usize,
) -> Result<CommSchedule> {
    if stage >= ta.horizon {
        return Err(Error::Config(format!(
            "re-planning stage {stage} is outside the horizon {}",
            ta.horizon
        )));
    }
    match ta.walk(table, symbol, stage, true) {
        Some((bits, _)) => Ok(CommSchedule {
            bits,
            provenance: Provenance::OnlineAt(stage),
        }),
        None => Err(Error::Infeasible(InfeasibleReason::NoRunFromState {
            level: ta.system.partition.level(symbol),
            stage,
        })),
    }
}

/// Result of the exhaustive baseline: the cheapest surviving schedule (if
/// any) and how many tree nodes were created on the way.
#[derive(Debug, Clone)]
pub struct NaiveTreeResult {
    pub schedule: Option<CommSchedule>,
    pub nodes: u64,
}

/// Depth-L binary tree over the exact error recursion, pruned only by the
/// stage budgets, the terminal bound, and the input condition. The first
/// bit is unconstrained here. Exponential by design; refuses horizons
/// beyond the cap.
pub fn naive_tree_schedule(
    model: &ErrorBoundModel,
    env: &SafetyEnvelope,
    reference: &ReferenceTrajectory,
    l_cap: usize,
) -> Result<NaiveTreeResult> {
    let l = env.horizon();
    if reference.horizon() != l {
        return Err(Error::Config(format!(
            "reference horizon {} does not match envelope horizon {l}",
            reference.horizon()
        )));
    }
    if l > l_cap {
        return Err(Error::Planning(format!(
            "horizon {l} exceeds the exhaustive-tree cap {l_cap}; the tree \
             would hold up to 2^{} nodes",
            l + 1
        )));
    }

    struct Search<'a> {
        model: &'a ErrorBoundModel,
        env: &'a SafetyEnvelope,
        u_ref_norms: Vec<f64>,
        horizon: usize,
        nodes: u64,
        best: Option<(usize, Vec<bool>)>,
    }

    impl Search<'_> {
        fn visit(&mut self, v: f64, stage: usize, comms: usize, bits: &mut Vec<bool>) {
            self.nodes += 1;
            if stage == self.horizon {
                if v <= self.env.v_final
                    && self.best.as_ref().is_none_or(|(c, _)| comms < *c)
                {
                    self.best = Some((comms, bits.clone()));
                }
                return;
            }
            // Silence first: among equal costs the first completed leaf in
            // this order communicates latest.
            for c in [false, true] {
                if c {
                    let bound = self
                        .model
                        .feedback_magnitude_bound(v, self.u_ref_norms[stage]);
                    if bound > self.model.u_max + INPUT_CHECK_TOL {
                        continue;
                    }
                }
                let next = self.model.step_bound(v, c, self.model.w_max);
                if next > self.env.v_max[stage + 1] {
                    self.nodes += 1;
                    continue;
                }
                bits.push(c);
                self.visit(next, stage + 1, comms + usize::from(c), bits);
                bits.pop();
            }
        }
    }

    let mut search = Search {
        model,
        env,
        u_ref_norms: reference.controls.iter().map(|u| u.norm()).collect(),
        horizon: l,
        nodes: 0,
        best: None,
    };
    let mut bits = Vec::with_capacity(l);
    search.visit(env.v_init, 0, 0, &mut bits);

    Ok(NaiveTreeResult {
        schedule: search.best.map(|(_, bits)| CommSchedule {
            bits,
            provenance: Provenance::Exhaustive,
        }),
        nodes: search.nodes,
    })
}
