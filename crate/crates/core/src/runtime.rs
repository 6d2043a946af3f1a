//! Closed-loop execution of a communication schedule.
//!
//! The plant and controller are simulated in-process but keep the message
//! discipline of the networked setup: at a communicating step the plant
//! sends its state up, the controller answers with the feedback control
//! for now plus a batch of reference controls covering the following
//! silent stretch, and the plant replays that batch until the next
//! transmission. The offline variant replays a fixed schedule; the online
//! variant re-plans the remaining schedule at every transmission from the
//! measured state.

use crate::abstraction::{optcom_with, sym_of_state, CommSchedule, TimedSymbolicSystem};
use crate::error::{Error, Result};
use crate::error_model::ErrorBoundModel;
use crate::lyapunov::DeltaIssClf;
use crate::planner::ReferenceTrajectory;
use crate::simulator::DisturbanceModel;
use crate::system::SystemModel;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Number of leading zeros of a bit sequence: the length of the silent
/// stretch a controller can cover with one batch.
pub fn zeropref(bits: &[bool]) -> usize {
    bits.iter().take_while(|&&c| !c).count()
}

/// One transmission event as seen by the controller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommEvent {
    pub stage: usize,
    /// Reference controls batched for the silent stretch after this step.
    pub batch_len: usize,
    /// Symbol chosen by the online re-planner, if any.
    pub symbol: Option<usize>,
    /// Level of that symbol; the anchor for the error-bound series.
    pub symbol_level: Option<f64>,
    /// Communications still to come from here on (this one included).
    pub remaining_cost: usize,
}

/// Message-log entry; transmission counts are audited from these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Message {
    StateUp { stage: usize },
    ControlBatchDown { stage: usize, len: usize },
}

/// Record of one closed-loop run.
#[derive(Debug, Clone)]
pub struct ExecutionTrace {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub comm: Vec<bool>,
    /// Realized certificate values V(x_k, x_hat_k), one per state.
    pub errors: Vec<f64>,
    pub disturbances: Vec<DVector<f64>>,
    pub comm_events: Vec<CommEvent>,
    pub messages: Vec<Message>,
}

impl ExecutionTrace {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn comm_count(&self) -> usize {
        self.comm.iter().filter(|&&c| c).count()
    }
}

/// Worst-case bound series matching a trace: starts at `v_init` (or at
/// the first re-plan anchor), propagates through the executed bits, and
/// re-anchors at every online re-plan to the level the planner committed
/// to. Realized errors must stay below this series.
pub fn error_bound_series(
    model: &ErrorBoundModel,
    v_init: f64,
    trace: &ExecutionTrace,
) -> Vec<f64> {
    let mut anchors = vec![None; trace.horizon() + 1];
    for ev in &trace.comm_events {
        if let Some(level) = ev.symbol_level {
            anchors[ev.stage] = Some(level);
        }
    }
    let mut series = Vec::with_capacity(trace.horizon() + 1);
    let mut v = anchors[0].unwrap_or(v_init);
    series.push(v);
    for (k, &c) in trace.comm.iter().enumerate() {
        v = model.step_bound(v, c, model.w_max);
        if let Some(anchor) = anchors[k + 1] {
            v = anchor;
        }
        series.push(v);
    }
    series
}

struct LoopState<'a> {
    sys: &'a SystemModel,
    clf: &'a DeltaIssClf,
    reference: &'a ReferenceTrajectory,
    trace: ExecutionTrace,
    /// Reference controls pre-transmitted for upcoming silent steps,
    /// consumed front to back.
    batch: std::collections::VecDeque<DVector<f64>>,
    x: DVector<f64>,
}

impl<'a> LoopState<'a> {
    fn new(
        sys: &'a SystemModel,
        clf: &'a DeltaIssClf,
        reference: &'a ReferenceTrajectory,
        x0: DVector<f64>,
    ) -> Result<Self> {
        if !sys.initial_set.contains(&x0, 1e-9) {
            return Err(Error::Simulation(
                "initial state is outside the initial set".into(),
            ));
        }
        let mut trace = ExecutionTrace {
            states: vec![x0.clone()],
            controls: Vec::with_capacity(reference.horizon()),
            comm: Vec::with_capacity(reference.horizon()),
            errors: vec![clf.value(&x0, &reference.states[0])],
            disturbances: Vec::with_capacity(reference.horizon()),
            comm_events: Vec::new(),
            messages: Vec::new(),
        };
        trace.states.reserve(reference.horizon());
        Ok(LoopState {
            sys,
            clf,
            reference,
            trace,
            batch: std::collections::VecDeque::new(),
            x: x0,
        })
    }

    /// The communicating step at stage k: state up, feedback applied now,
    /// the next `batch_len` reference controls down.
    fn communicate(&mut self, k: usize, batch_len: usize, event: CommEvent) -> DVector<f64> {
        self.trace.messages.push(Message::StateUp { stage: k });
        let u = self
            .clf
            .feedback(&self.x, &self.reference.states[k], &self.reference.controls[k]);
        debug_assert!(self.batch.is_empty(), "batch must be drained before a transmission");
        self.batch.clear();
        for step in 0..batch_len {
            self.batch
                .push_back(self.reference.controls[k + 1 + step].clone());
        }
        self.trace.messages.push(Message::ControlBatchDown {
            stage: k,
            len: batch_len + 1,
        });
        self.trace.comm_events.push(event);
        self.trace.comm.push(true);
        u
    }

    /// The silent step: replay the next pre-transmitted control.
    fn replay(&mut self) -> DVector<f64> {
        let u = self
            .batch
            .pop_front()
            .expect("silent step without a pre-transmitted control: schedule bookkeeping broke");
        self.trace.comm.push(false);
        u
    }

    fn advance(&mut self, k: usize, u: DVector<f64>, w: DVector<f64>) {
        let next = self.sys.step(&self.x, &u, &w);
        self.trace.controls.push(u);
        self.trace.disturbances.push(w);
        self.trace
            .errors
            .push(self.clf.value(&next, &self.reference.states[k + 1]));
        self.trace.states.push(next.clone());
        self.x = next;
    }

    fn finish(self) -> ExecutionTrace {
        debug_assert!(self.batch.is_empty(), "unused pre-transmitted controls remain");
        self.trace
    }
}

/// Plays back a fixed schedule. At every communicating step the batch
/// covers exactly the silent stretch that follows, so the plant never
/// runs dry.
pub fn run_offline(
    sys: &SystemModel,
    clf: &DeltaIssClf,
    reference: &ReferenceTrajectory,
    schedule: &CommSchedule,
    x0: DVector<f64>,
    dist: &mut DisturbanceModel,
) -> Result<ExecutionTrace> {
    let l = reference.horizon();
    if schedule.bits.len() != l {
        return Err(Error::Config(format!(
            "schedule length {} does not match the reference horizon {l}",
            schedule.bits.len()
        )));
    }
    if l > 0 && !schedule.bits[0] {
        return Err(Error::Config(
            "playback requires a schedule that communicates at stage 0".into(),
        ));
    }
    let mut lp = LoopState::new(sys, clf, reference, x0)?;
    for k in 0..l {
        let w = dist.sample();
        let u = if schedule.bits[k] {
            let batch_len = zeropref(&schedule.bits[k + 1..]);
            let remaining_cost = schedule.bits[k..].iter().filter(|&&c| c).count();
            lp.communicate(
                k,
                batch_len,
                CommEvent {
                    stage: k,
                    batch_len,
                    symbol: None,
                    symbol_level: None,
                    remaining_cost,
                },
            )
        } else {
            lp.replay()
        };
        lp.advance(k, u, w);
    }
    Ok(lp.finish())
}

/// Self-triggered execution: at every transmission the controller maps
/// the received state to its error symbol, re-solves the remaining
/// min-communication schedule, and ships a batch covering the planned
/// silent stretch. Infeasibility at stage 0 is a precondition failure;
/// later infeasibility contradicts the re-planning guarantee and is
/// reported as an invariant violation.
pub fn run_online(
    sys: &SystemModel,
    clf: &DeltaIssClf,
    reference: &ReferenceTrajectory,
    ta: &TimedSymbolicSystem,
    x0: DVector<f64>,
    dist: &mut DisturbanceModel,
) -> Result<ExecutionTrace> {
    let l = reference.horizon();
    if ta.horizon != l {
        return Err(Error::Config(format!(
            "timed system horizon {} does not match the reference horizon {l}",
            ta.horizon
        )));
    }
    let table = ta.cost_to_go();
    let mut lp = LoopState::new(sys, clf, reference, x0)?;
    let mut k = 0usize;
    let mut first = true;
    while k < l {
        // Communicating step: re-plan from the measured state.
        let symbol = sym_of_state(&ta.system, clf, &lp.x, &reference.states[k]);
        let plan = match optcom_with(ta, &table, symbol, k) {
            Ok(plan) => plan,
            Err(err) if first => return Err(err),
            Err(err) => {
                return Err(Error::Simulation(format!(
                    "re-planning failed mid-run at stage {k}, which a feasible \
                     start rules out: {err}"
                )))
            }
        };
        first = false;
        let batch_len = zeropref(&plan.bits[1..]);
        let remaining_cost = plan.bits.iter().filter(|&&c| c).count();
        let u = lp.communicate(
            k,
            batch_len,
            CommEvent {
                stage: k,
                batch_len,
                symbol: Some(symbol),
                symbol_level: Some(ta.system.partition.level(symbol)),
                remaining_cost,
            },
        );
        let w = dist.sample();
        lp.advance(k, u, w);
        k += 1;
        // Silent stretch covered by the batch just shipped.
        for _ in 0..batch_len {
            let w = dist.sample();
            let u = lp.replay();
            lp.advance(k, u, w);
            k += 1;
        }
    }
    debug_assert_eq!(k, l, "execution must cover the whole horizon");
    Ok(lp.finish())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::abstraction::{
        build_symbolic_system, build_timed_system, min_comm_schedule, Partition, Provenance,
    };
    use crate::error_model::{check_schedule, safety_envelope, SafetyEnvelope};
    use crate::geometry::{FreeSpaceRegion, HPolytope, Polygon};
    use crate::simulator::DisturbanceKind;
    use crate::system::{Dynamics, NormBallSet, SystemModel};
    use nalgebra::DMatrix;

    #[test]
    fn leading_zero_counts() {
        assert_eq!(zeropref(&[false, false, true, false]), 2);
        assert_eq!(zeropref(&[true, false, false]), 0);
        assert_eq!(zeropref(&[false, false, false]), 3);
        assert_eq!(zeropref(&[]), 0);
    }

    /// Stable scalar-per-axis plant in 2-D with a norm certificate, plus
    /// a straight-line reference of the requested horizon.
    pub(crate) fn harness(
        horizon: usize,
    ) -> (SystemModel, DeltaIssClf, ReferenceTrajectory, ErrorBoundModel, SafetyEnvelope)
    {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.9]));
        let b = DMatrix::identity(2, 2);
        let sys = SystemModel::new(
            Dynamics::Linear { a, b },
            0.9,
            1.0,
            NormBallSet::new(4.0).unwrap(),
            NormBallSet::new(0.02).unwrap(),
            FreeSpaceRegion {
                outer: Polygon::rectangle(-6.0, -6.0, 6.0, 6.0),
                obstacles: vec![],
                bounds: vec![],
                half_spaces: vec![],
            },
            HPolytope::from_box(&[-4.2, -4.2], &[-3.8, -3.8]).unwrap(),
            HPolytope::from_box(&[-1.0, -1.0], &[1.5, 1.5]).unwrap(),
        )
        .unwrap();
        // K = 0.4 I keeps sigma(A - BK) = 0.5.
        let clf = DeltaIssClf::norm_gain(&sys, DMatrix::identity(2, 2) * 0.4).unwrap();

        // Drive the reference from the initial-set center toward the
        // origin with the open-loop dynamics.
        let (start, _) = sys.initial_set.chebyshev_center().unwrap();
        let mut states = vec![start.clone()];
        let mut controls = Vec::new();
        let w0 = DVector::zeros(2);
        for _ in 0..horizon {
            let x = states.last().unwrap();
            // Pull toward (0.5, 0.5), saturating inside the input ball.
            let goal = DVector::from_vec(vec![0.5, 0.5]);
            let mut u = (&goal - x) * 0.35;
            if u.norm() > sys.input_set.radius {
                u *= sys.input_set.radius / u.norm();
            }
            let next = sys.step(x, &u, &w0);
            controls.push(u);
            states.push(next);
        }
        let reference = ReferenceTrajectory { states, controls, margin: 0.1, seed: 0 };
        let model = ErrorBoundModel::from_clf(&clf, &sys, None).unwrap();
        let env = safety_envelope(&clf, &sys, &reference).unwrap();
        (sys, clf, reference, model, env)
    }

    pub(crate) fn accepted_schedule(
        model: &ErrorBoundModel,
        env: &SafetyEnvelope,
        reference: &ReferenceTrajectory,
        m: usize,
    ) -> (TimedSymbolicSystem, CommSchedule) {
        let partition = Partition::with_ceiling(
            env.v_max.iter().cloned().fold(0.0, f64::max),
            m,
        )
        .unwrap();
        let t = build_symbolic_system(model, partition);
        let ta = build_timed_system(t, model, env, reference).unwrap();
        let (schedule, _) = min_comm_schedule(&ta).unwrap();
        (ta, schedule)
    }

    #[test]
    fn all_ones_schedule_closes_the_loop_every_step() {
        let (sys, clf, reference, _, _) = harness(6);
        let schedule = CommSchedule {
            bits: vec![true; 6],
            provenance: Provenance::Offline,
        };
        let (x0, _) = sys.initial_set.chebyshev_center().unwrap();
        let mut dist = DisturbanceModel::for_run(DisturbanceKind::Zero, 0.02, 2, 1, 0);
        let trace = run_offline(&sys, &clf, &reference, &schedule, x0, &mut dist).unwrap();
        assert_eq!(trace.comm_count(), 6);
        assert_eq!(trace.horizon(), 6);
        // Every batch is the single fresh control.
        assert!(trace.comm_events.iter().all(|e| e.batch_len == 0));
        assert_eq!(
            trace.messages.iter().filter(|m| matches!(m, Message::StateUp { .. })).count(),
            6
        );
    }

    #[test]
    fn batches_cover_exactly_the_silent_stretches() {
        let (sys, clf, reference, _, _) = harness(6);
        let schedule = CommSchedule {
            bits: vec![true, false, false, true, false, true],
            provenance: Provenance::Offline,
        };
        let (x0, _) = sys.initial_set.chebyshev_center().unwrap();
        let mut dist = DisturbanceModel::for_run(DisturbanceKind::Zero, 0.02, 2, 1, 0);
        let trace = run_offline(&sys, &clf, &reference, &schedule, x0, &mut dist).unwrap();
        let batches: Vec<usize> = trace.comm_events.iter().map(|e| e.batch_len).collect();
        assert_eq!(batches, vec![2, 1, 0]);
        // Silent steps replay the reference control exactly.
        assert_eq!(trace.controls[1], reference.controls[1]);
        assert_eq!(trace.controls[2], reference.controls[2]);
        assert_eq!(trace.controls[4], reference.controls[4]);
    }

    #[test]
    fn rejects_start_outside_the_initial_set() {
        let (sys, clf, reference, _, _) = harness(4);
        let schedule = CommSchedule {
            bits: vec![true; 4],
            provenance: Provenance::Offline,
        };
        let x0 = DVector::from_vec(vec![0.0, 0.0]);
        let mut dist = DisturbanceModel::for_run(DisturbanceKind::Zero, 0.02, 2, 1, 0);
        assert!(run_offline(&sys, &clf, &reference, &schedule, x0, &mut dist).is_err());
    }

    #[test]
    fn rejects_schedule_that_stays_silent_at_the_start() {
        let (sys, clf, reference, _, _) = harness(4);
        let schedule = CommSchedule {
            bits: vec![false, true, true, true],
            provenance: Provenance::Exhaustive,
        };
        let (x0, _) = sys.initial_set.chebyshev_center().unwrap();
        let mut dist = DisturbanceModel::for_run(DisturbanceKind::Zero, 0.02, 2, 1, 0);
        assert!(run_offline(&sys, &clf, &reference, &schedule, x0, &mut dist).is_err());
    }

    #[test]
    fn realized_errors_stay_under_the_propagated_bounds() {
        let (sys, clf, reference, model, env) = harness(12);
        let (_, schedule) = accepted_schedule(&model, &env, &reference, 40);
        let check = check_schedule(&model, &env, &reference, &schedule.bits).unwrap();
        assert!(check.pass());

        for run in 0..20 {
            let mut dist =
                DisturbanceModel::for_run(DisturbanceKind::UniformBall, 0.02, 2, 99, run);
            let (x0, _) = sys.initial_set.chebyshev_center().unwrap();
            let trace =
                run_offline(&sys, &clf, &reference, &schedule, x0, &mut dist).unwrap();
            let bounds = error_bound_series(&model, env.v_init, &trace);
            for (k, (&v, &vb)) in trace.errors.iter().zip(&bounds).enumerate() {
                assert!(
                    v <= vb + 1e-9,
                    "run {run}: realized error {v} above bound {vb} at stage {k}"
                );
            }
        }
    }

    #[test]
    fn online_run_matches_its_own_plan_bookkeeping() {
        let (sys, clf, reference, model, env) = harness(12);
        let (ta, offline) = accepted_schedule(&model, &env, &reference, 40);

        let (x0, _) = sys.initial_set.chebyshev_center().unwrap();
        let mut dist = DisturbanceModel::for_run(DisturbanceKind::UniformBall, 0.02, 2, 7, 0);
        let trace = run_online(&sys, &clf, &reference, &ta, x0, &mut dist).unwrap();
        assert_eq!(trace.horizon(), 12);
        assert!(trace.comm[0], "first step must communicate");
        // Flags match the recorded events.
        for ev in &trace.comm_events {
            assert!(trace.comm[ev.stage]);
        }
        assert_eq!(
            trace.comm_count(),
            trace.comm_events.len(),
            "every communication stems from a re-plan"
        );
        // The error series stays under the re-anchored bound series.
        let bounds = error_bound_series(&model, env.v_init, &trace);
        for (&v, &vb) in trace.errors.iter().zip(&bounds) {
            assert!(v <= vb + 1e-9);
        }
        // Online never pays more than the offline plan on this instance
        // when both start at the same state (the initial symbol covers
        // the realized error at least as tightly as v_init).
        assert!(trace.comm_count() <= offline.cost());
    }

    #[test]
    fn online_zero_disturbance_strong_contraction_transmits_once() {
        // Open loop contracts (sigma = 0.9 < 1) and there is no
        // disturbance, so after the forced first feedback step the error
        // keeps shrinking without further help.
        let (sys, clf, reference, _, env) = harness(10);
        let mut quiet_sys = sys;
        quiet_sys.disturbance_set = NormBallSet::new(0.0).unwrap();
        let model_quiet = ErrorBoundModel::from_clf(&clf, &quiet_sys, None).unwrap();
        let (ta, _) = {
            let partition = Partition::with_ceiling(
                env.v_max.iter().cloned().fold(0.0, f64::max),
                60,
            )
            .unwrap();
            let t = build_symbolic_system(&model_quiet, partition);
            let ta = build_timed_system(t, &model_quiet, &env, &reference).unwrap();
            let (s, _) = min_comm_schedule(&ta).unwrap();
            (ta, s)
        };
        let (x0, _) = quiet_sys.initial_set.chebyshev_center().unwrap();
        let mut dist = DisturbanceModel::for_run(DisturbanceKind::Zero, 0.0, 2, 1, 0);
        let trace = run_online(&quiet_sys, &clf, &reference, &ta, x0, &mut dist).unwrap();
        assert_eq!(trace.comm_count(), 1, "flags: {:?}", trace.comm);
    }
}
