//! Scalar error propagation along a reference trajectory.
//!
//! The tracking error is summarized by one number v = V(x, x_hat). Per
//! step it evolves by a worst-case recursion with two branches: when the
//! controller received a fresh measurement the certificate contracts v,
//! otherwise the open-loop Lipschitz growth applies. Everything downstream
//! (the symbolic abstraction, schedule search, runtime monitoring) works
//! on this one-dimensional model.

use crate::classk::ClassK;
use crate::error::{Error, Result};
use crate::lyapunov::DeltaIssClf;
use crate::planner::ReferenceTrajectory;
use crate::system::SystemModel;
use serde::{Deserialize, Serialize};

/// Points used when grid-checking branch monotonicity.
const MONOTONICITY_GRID: usize = 1000;
/// Default horizon for the monotonicity grid when none is implied.
const DEFAULT_CHECK_HORIZON: f64 = 1.0e3;
/// Slack in the feedback-magnitude admissibility test.
const INPUT_CHECK_TOL: f64 = 1.0e-9;

/// Worst-case one-step map of the scalar tracking error.
#[derive(Debug, Clone)]
pub struct ErrorBoundModel {
    /// Contraction amount after a measurement: v decreases by alpha2(v),
    /// where alpha2 folds the decrease gain through the upper sandwich.
    alpha2: ClassK,
    /// Disturbance offset in the contraction branch.
    rho: ClassK,
    /// Sandwich bounds of the certificate, needed to convert v back and
    /// forth to a state-space radius.
    alpha_lo: ClassK,
    alpha_hi: ClassK,
    /// Feedback magnitude bound pieces.
    alpha_u: ClassK,
    rho_u: ClassK,
    lipschitz_x: f64,
    lipschitz_w: f64,
    pub w_max: f64,
    pub u_max: f64,
    /// True when the raw alpha2 had to be capped below the identity to
    /// keep the contraction branch monotone.
    pub identity_cap_applied: bool,
}

impl ErrorBoundModel {
    /// Assembles a model from explicit comparison functions. The
    /// contraction branch is capped below the identity when the raw
    /// alpha2 would make it non-monotone, then both branches are
    /// grid-checked on [0, check_horizon].
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        alpha2: ClassK,
        rho: ClassK,
        alpha_lo: ClassK,
        alpha_hi: ClassK,
        alpha_u: ClassK,
        rho_u: ClassK,
        lipschitz_x: f64,
        lipschitz_w: f64,
        w_max: f64,
        u_max: f64,
        check_horizon: Option<f64>,
    ) -> Result<Self> {
        if lipschitz_x <= 0.0 || lipschitz_w <= 0.0 {
            return Err(Error::Config("Lipschitz constants must be positive".into()));
        }
        if w_max < 0.0 || u_max <= 0.0 {
            return Err(Error::Config(
                "disturbance bound must be nonnegative and input bound positive".into(),
            ));
        }
        for f in [&alpha2, &rho, &alpha_lo, &alpha_hi, &alpha_u, &rho_u] {
            f.validate()?;
        }
        let horizon = check_horizon.unwrap_or(DEFAULT_CHECK_HORIZON);
        if !(horizon > 0.0) {
            return Err(Error::Config("check horizon must be positive".into()));
        }

        let mut model = ErrorBoundModel {
            alpha2,
            rho,
            alpha_lo,
            alpha_hi,
            alpha_u,
            rho_u,
            lipschitz_x,
            lipschitz_w,
            w_max,
            u_max,
            identity_cap_applied: false,
        };
        if !model.contraction_branch_monotone(horizon) {
            model.alpha2 = ClassK::min_with_scaled_id(model.alpha2, 1.0e-6);
            model.identity_cap_applied = true;
        }
        model.check_monotone(horizon)?;
        Ok(model)
    }

    /// Derives the model from a certificate and the plant constants.
    pub fn from_clf(
        clf: &DeltaIssClf,
        sys: &SystemModel,
        check_horizon: Option<f64>,
    ) -> Result<Self> {
        Self::from_parts(
            clf.alpha2(),
            clf.rho.clone(),
            clf.alpha_lo.clone(),
            clf.alpha_hi.clone(),
            clf.alpha_u.clone(),
            clf.rho_u.clone(),
            sys.lipschitz_x,
            sys.lipschitz_w,
            sys.disturbance_set.radius,
            sys.input_set.radius,
            check_horizon,
        )
    }

    pub fn alpha_lo(&self) -> &ClassK {
        &self.alpha_lo
    }

    pub fn alpha_hi(&self) -> &ClassK {
        &self.alpha_hi
    }

    fn contraction_branch_monotone(&self, horizon: f64) -> bool {
        let mut prev = 0.0;
        for i in 1..=MONOTONICITY_GRID {
            let v = horizon * i as f64 / MONOTONICITY_GRID as f64;
            let shrunk = v - self.alpha2.eval(v);
            if shrunk < prev - 1e-12 {
                return false;
            }
            prev = shrunk;
        }
        true
    }

    /// Verifies the defining monotonicity of both branches on a grid over
    /// [0, horizon] in v and [0, w_max] in the disturbance norm.
    pub fn check_monotone(&self, horizon: f64) -> Result<()> {
        if !self.contraction_branch_monotone(horizon) {
            return Err(Error::Certificate(
                "contraction branch of the error recursion is not monotone in v".into(),
            ));
        }
        // The open-loop branch is a composition of increasing maps; check
        // anyway to catch a mis-specified alpha pair.
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=MONOTONICITY_GRID {
            let v = horizon * i as f64 / MONOTONICITY_GRID as f64;
            let grown = self.open_loop(v, self.w_max)?;
            if grown < prev - 1e-12 {
                return Err(Error::Certificate(
                    "open-loop branch of the error recursion is not monotone in v".into(),
                ));
            }
            prev = grown;
        }
        Ok(())
    }

    fn open_loop(&self, v: f64, omega: f64) -> Result<f64> {
        let radius = self.alpha_lo.invert(v)?;
        Ok(self
            .alpha_hi
            .eval(self.lipschitz_x * radius + self.lipschitz_w * omega))
    }

    /// One step of the worst-case error recursion. Infinity is absorbing:
    /// once the bound is vacuous it stays vacuous.
    pub fn step_bound(&self, v: f64, communicated: bool, omega: f64) -> f64 {
        assert!(v >= 0.0, "error bound must be nonnegative, got {v}");
        assert!(omega >= 0.0, "disturbance norm must be nonnegative, got {omega}");
        if v.is_infinite() {
            return f64::INFINITY;
        }
        if communicated {
            (v - self.alpha2.eval(v)).max(0.0) + self.rho.eval(omega)
        } else {
            self.open_loop(v, omega)
                .expect("finite nonnegative v inverts under a validated class-K function")
        }
    }

    /// Worst-case bounds v_0..v_L under the given communication schedule,
    /// feeding the peak disturbance norm into every step.
    pub fn propagate_bounds(&self, v0: f64, schedule: &[bool]) -> Vec<f64> {
        let mut out = Vec::with_capacity(schedule.len() + 1);
        out.push(v0);
        let mut v = v0;
        for &c in schedule {
            v = self.step_bound(v, c, self.w_max);
            out.push(v);
        }
        out
    }

    /// Largest state-space radius certified safe for a given error bound.
    pub fn radius_of_bound(&self, v: f64) -> Result<f64> {
        self.alpha_lo.invert(v)
    }

    /// Feedback magnitude bound at error level v with reference input norm
    /// u_ref; infinite when the level itself is infinite.
    pub fn feedback_magnitude_bound(&self, v: f64, u_ref_norm: f64) -> f64 {
        if v.is_infinite() {
            return f64::INFINITY;
        }
        let radius = self
            .alpha_lo
            .invert(v)
            .expect("finite nonnegative v inverts under a validated class-K function");
        self.alpha_u.eval(radius) + self.rho_u.eval(u_ref_norm)
    }
}

/// Stage-wise error budget derived from the reference's clearance to the
/// unsafe set, plus the entry and exit levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SafetyEnvelope {
    /// v_max[k]: largest tolerable error at stage k, one per state.
    pub v_max: Vec<f64>,
    /// Worst certificate value over the initial set against the first
    /// reference state.
    pub v_init: f64,
    /// Error level guaranteeing the final state still sits in the target.
    pub v_final: f64,
}

impl SafetyEnvelope {
    pub fn horizon(&self) -> usize {
        self.v_max.len().saturating_sub(1)
    }
}

/// Computes the per-stage error budget for a reference trajectory.
///
/// The budget at stage k converts the reference's clearance to the
/// free-space boundary through the lower sandwich bound: any state whose
/// certificate value stays below it is still safe. The entry level is the
/// exact maximum of V over the initial set (attained at a vertex, V being
/// convex in its first argument), and the exit level converts the final
/// state's clearance inside the target polytope.
pub fn safety_envelope(
    clf: &DeltaIssClf,
    sys: &SystemModel,
    reference: &ReferenceTrajectory,
) -> Result<SafetyEnvelope> {
    let mut v_max = Vec::with_capacity(reference.states.len());
    for (k, x) in reference.states.iter().enumerate() {
        let clearance = sys.free_space.signed_distance(x);
        if clearance <= 0.0 {
            return Err(Error::Planning(format!(
                "reference state {k} has no clearance to the unsafe set ({clearance:.6})"
            )));
        }
        v_max.push(clf.alpha_lo.eval(clearance));
    }

    let first = &reference.states[0];
    let mut v_init = 0.0_f64;
    for vertex in sys.initial_set.vertices()? {
        v_init = v_init.max(clf.value(&vertex, first));
    }

    let last = reference.states.last().expect("nonempty states");
    if !sys.target_set.contains(last, 1e-9) {
        return Err(Error::Planning(
            "reference does not end inside the target set".into(),
        ));
    }
    let exit_clearance = sys.target_set.face_clearance(last).max(0.0);
    let v_final = clf.alpha_lo.eval(exit_clearance);

    Ok(SafetyEnvelope { v_max, v_init, v_final })
}

/// Outcome of checking a communication schedule against the envelope.
///
/// The four checks: the recursion starts at the entry level, stays inside
/// the per-stage budget from stage 1 on, ends below the exit level, and
/// every communicating step keeps the feedback magnitude admissible. Stage
/// 0 of the budget is reported separately as a warning, since the entry
/// level is fixed by the initial set rather than by the schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleCheck {
    pub v_bar: Vec<f64>,
    pub initial_ok: bool,
    pub envelope_ok: bool,
    pub envelope_fail_index: Option<usize>,
    pub terminal_ok: bool,
    pub input_ok: bool,
    pub input_fail_index: Option<usize>,
    /// True when the entry level already exceeds the stage-0 budget.
    pub initial_budget_warning: bool,
}

impl ScheduleCheck {
    pub fn pass(&self) -> bool {
        self.initial_ok && self.envelope_ok && self.terminal_ok && self.input_ok
    }
}

/// Propagates the worst-case bound from the entry level under `schedule`
/// and evaluates all feasibility conditions against the envelope.
pub fn check_schedule(
    model: &ErrorBoundModel,
    env: &SafetyEnvelope,
    reference: &ReferenceTrajectory,
    schedule: &[bool],
) -> Result<ScheduleCheck> {
    let l = schedule.len();
    if env.v_max.len() != l + 1 {
        return Err(Error::Config(format!(
            "envelope covers {} stages but the schedule has length {l}",
            env.v_max.len()
        )));
    }
    if reference.horizon() != l {
        return Err(Error::Config(format!(
            "reference horizon {} does not match schedule length {l}",
            reference.horizon()
        )));
    }

    let v_bar = model.propagate_bounds(env.v_init, schedule);
    let initial_ok = v_bar[0] == env.v_init;
    let initial_budget_warning = env.v_init > env.v_max[0];

    let mut envelope_ok = true;
    let mut envelope_fail_index = None;
    for k in 1..=l {
        if !(v_bar[k] <= env.v_max[k]) {
            envelope_ok = false;
            envelope_fail_index = Some(k);
            break;
        }
    }

    let terminal_ok = v_bar[l] <= env.v_final;

    let mut input_ok = true;
    let mut input_fail_index = None;
    for (k, &c) in schedule.iter().enumerate() {
        if !c {
            continue;
        }
        let bound = model.feedback_magnitude_bound(v_bar[k], reference.controls[k].norm());
        if bound > model.u_max + INPUT_CHECK_TOL {
            input_ok = false;
            input_fail_index = Some(k);
            break;
        }
    }

    Ok(ScheduleCheck {
        v_bar,
        initial_ok,
        envelope_ok,
        envelope_fail_index,
        terminal_ok,
        input_ok,
        input_fail_index,
        initial_budget_warning,
    })
}
