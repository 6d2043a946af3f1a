//! Scenario configuration: the JSON surface describing one complete
//! experiment (plant, certificate, planner knobs, abstraction size,
//! runtime mode), plus the builders that turn it into core types.
//!
//! The config deliberately mirrors the geometry types with plain lists
//! instead of reusing their serde forms: construction goes through the
//! checked constructors, so a hand-edited file cannot smuggle in a
//! degenerate polygon or a ragged matrix.

use crate::abstraction::{build_partition, build_symbolic_system, build_timed_system, Partition, TimedSymbolicSystem};
use crate::error::{Error, Result};
use crate::error_model::{safety_envelope, ErrorBoundModel, SafetyEnvelope};
use crate::geometry::{AxisBound, FreeSpaceRegion, HPolytope, HalfSpace, Polygon};
use crate::lyapunov::DeltaIssClf;
use crate::planner::{plan_rrt, plan_rrt_from, ReferenceTrajectory, RrtParams};
use crate::simulator::{DisturbanceKind, TraverseLeg};
use crate::system::{discretize_zoh, Dynamics, NormBallSet, SystemModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Complete description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub system: SystemConfig,
    pub clf: ClfConfig,
    #[serde(default)]
    pub rrt: RrtConfig,
    pub abstraction: AbstractionConfig,
    #[serde(default)]
    pub runtime: RuntimeConfig,
    /// Where pipeline stages drop their artifacts; the CLI `--out` flag
    /// overrides it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dynamics: DynamicsConfig,
    /// Input ball radius.
    pub u_max: f64,
    /// Disturbance ball radius.
    pub w_max: f64,
    pub lipschitz_x: f64,
    pub lipschitz_w: f64,
    pub free_space: FreeSpaceConfig,
    pub initial_set: BoxSetConfig,
    pub target_set: BoxSetConfig,
}

/// Dynamics families expressible in a config file. Matrices are row-major
/// lists of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DynamicsConfig {
    /// Discrete-time x+ = A x + B u + w.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    /// Continuous-time x' = A_c x + B_c u sampled exactly at `dt`; the
    /// disturbance stays additive on the sampled state.
    LinearZoh { a_c: Vec<Vec<f64>>, b_c: Vec<Vec<f64>>, dt: f64 },
    /// Euler-discretized damped pendulum.
    Pendulum { delta: f64, a: f64, b: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeSpaceConfig {
    /// Outer boundary polygon as a vertex list.
    pub outer: Vec<[f64; 2]>,
    /// Polygonal holes.
    #[serde(default)]
    pub obstacles: Vec<Vec<[f64; 2]>>,
    /// Interval bounds on coordinates beyond the planar pair.
    #[serde(default)]
    pub bounds: Vec<AxisBoundConfig>,
    /// Extra half-space constraints `normal . x <= offset`.
    #[serde(default)]
    pub half_spaces: Vec<HalfSpaceConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBoundConfig {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceConfig {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Axis-aligned box given by its corner vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSetConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Certificate families expressible in a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClfConfig {
    /// V = ||x - y|| with linear feedback gain K.
    NormGain { k: Vec<Vec<f64>> },
    /// V = e' P e with decrease matrix Q, feedback row k_u, and the
    /// disturbance offset rho_lin * r + rho_quad * r^2.
    Quadratic {
        p: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        k_u: Vec<Vec<f64>>,
        #[serde(default)]
        rho_lin: f64,
        rho_quad: f64,
    },
}

/// Planner knobs plus the planning seed. Flattened so config files list
/// the RRT parameters inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RrtConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub params: RrtParams,
}

impl Default for RrtConfig {
    fn default() -> Self {
        RrtConfig { seed: 0, params: RrtParams::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractionConfig {
    /// Number of quantization symbols, including the unbounded top one.
    pub m: usize,
    /// Explicit ceiling for the finite levels. Defaults to the envelope
    /// peak, which wastes resolution when the corridor is much wider than
    /// the error band the schedule actually works in.
    #[serde(default)]
    pub nu_bar: Option<f64>,
}

impl AbstractionConfig {
    /// The level partition this block asks for, given the leg's envelope.
    pub fn partition(&self, env: &SafetyEnvelope) -> Result<Partition> {
        match self.nu_bar {
            Some(nu_bar) => Partition::with_ceiling(nu_bar, self.m),
            None => build_partition(env, self.m),
        }
    }
}

/// Execution mode of the simulate stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    Offline,
    Online,
    Traverse,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunMode::Offline => "offline",
            RunMode::Online => "online",
            RunMode::Traverse => "traverse",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeConfig {
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub disturbance: DisturbanceKind,
    /// Monte-Carlo campaign size.
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Step cap for the traverse mode.
    #[serde(default = "default_step_budget")]
    pub step_budget: usize,
    /// Pinned start state. When absent, campaigns sample the initial set
    /// and single runs start at its Chebyshev center.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

fn default_runs() -> usize {
    100
}

fn default_step_budget() -> usize {
    1000
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            mode: RunMode::default(),
            disturbance: DisturbanceKind::default(),
            runs: default_runs(),
            seed: 0,
            step_budget: default_step_budget(),
            x0: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("scenario needs a name".into()));
        }
        if self.abstraction.m < 2 {
            return Err(Error::Config(format!(
                "abstraction needs at least 2 symbols, got {}",
                self.abstraction.m
            )));
        }
        if let Some(nu_bar) = self.abstraction.nu_bar {
            if !(nu_bar > 0.0) || !nu_bar.is_finite() {
                return Err(Error::Config(format!(
                    "level ceiling must be positive and finite, got {nu_bar}"
                )));
            }
        }
        if !(self.system.u_max > 0.0) || !self.system.u_max.is_finite() {
            return Err(Error::Config("input radius must be positive and finite".into()));
        }
        if self.system.w_max < 0.0 || !self.system.w_max.is_finite() {
            return Err(Error::Config("disturbance radius must be finite and >= 0".into()));
        }
        self.rrt.params.validate()?;
        if self.runtime.runs == 0 {
            return Err(Error::Config("campaign needs at least one run".into()));
        }
        if self.runtime.step_budget == 0 {
            return Err(Error::Config("step budget must be positive".into()));
        }
        Ok(())
    }

    /// Assembles the plant model through the checked constructors.
    pub fn build_system(&self) -> Result<SystemModel> {
        let dynamics = match &self.system.dynamics {
            DynamicsConfig::Linear { a, b } => Dynamics::Linear {
                a: to_matrix(a, "A")?,
                b: to_matrix(b, "B")?,
            },
            DynamicsConfig::LinearZoh { a_c, b_c, dt } => {
                let (a, b) = discretize_zoh(&to_matrix(a_c, "A_c")?, &to_matrix(b_c, "B_c")?, *dt)?;
                Dynamics::Linear { a, b }
            }
            DynamicsConfig::Pendulum { delta, a, b } => {
                Dynamics::Pendulum { delta: *delta, a: *a, b: *b }
            }
        };
        let fs = &self.system.free_space;
        let free_space = FreeSpaceRegion {
            outer: Polygon::new(fs.outer.clone())?,
            obstacles: fs
                .obstacles
                .iter()
                .map(|v| Polygon::new(v.clone()))
                .collect::<Result<Vec<_>>>()?,
            bounds: fs
                .bounds
                .iter()
                .map(|b| AxisBound { dim: b.dim, lo: b.lo, hi: b.hi })
                .collect(),
            half_spaces: fs
                .half_spaces
                .iter()
                .map(|h| HalfSpace { normal: h.normal.clone(), offset: h.offset })
                .collect(),
        };
        SystemModel::new(
            dynamics,
            self.system.lipschitz_x,
            self.system.lipschitz_w,
            NormBallSet::new(self.system.u_max)?,
            NormBallSet::new(self.system.w_max)?,
            free_space,
            HPolytope::from_box(&self.system.initial_set.lo, &self.system.initial_set.hi)?,
            HPolytope::from_box(&self.system.target_set.lo, &self.system.target_set.hi)?,
        )
    }

    pub fn build_clf(&self, sys: &SystemModel) -> Result<DeltaIssClf> {
        match &self.clf {
            ClfConfig::NormGain { k } => DeltaIssClf::norm_gain(sys, to_matrix(k, "K")?),
            ClfConfig::Quadratic { p, q, k_u, rho_lin, rho_quad } => DeltaIssClf::quadratic(
                sys,
                to_matrix(p, "P")?,
                to_matrix(q, "Q")?,
                to_matrix(k_u, "k_u")?,
                *rho_lin,
                *rho_quad,
            ),
        }
    }

    /// The execution start state: the pinned one when the config fixes
    /// it, otherwise the initial set's Chebyshev center.
    pub fn initial_state(&self, sys: &SystemModel) -> Result<DVector<f64>> {
        match &self.runtime.x0 {
            Some(raw) => {
                if raw.len() != sys.state_dim() {
                    return Err(Error::Config(format!(
                        "pinned start has dimension {}, plant expects {}",
                        raw.len(),
                        sys.state_dim()
                    )));
                }
                let x0 = DVector::from_row_slice(raw);
                if !sys.initial_set.contains(&x0, 1e-9) {
                    return Err(Error::Config(
                        "pinned start lies outside the initial set".into(),
                    ));
                }
                Ok(x0)
            }
            None => Ok(sys.initial_set.chebyshev_center()?.0),
        }
    }
}

fn to_matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Config(format!("matrix {name} must be non-empty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("matrix {name} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// One leg prepared end to end: plant, reference, error model, envelope,
/// and the timed unroll, ready for scheduling or execution.
#[derive(Debug, Clone)]
pub struct PreparedLeg {
    pub sys: SystemModel,
    pub reference: ReferenceTrajectory,
    pub model: ErrorBoundModel,
    pub env: SafetyEnvelope,
    pub ta: TimedSymbolicSystem,
}

impl PreparedLeg {
    pub fn as_traverse_leg(&self) -> TraverseLeg<'_> {
        TraverseLeg { sys: &self.sys, reference: &self.reference, ta: &self.ta }
    }
}

/// Plans the reference trajectories a scenario needs: one leg in the
/// offline/online modes, an out-and-back pair in traverse mode. The
/// return leg is chained from the outbound endpoint (with a decorrelated
/// seed), so the pair hands over without a jump in the reference.
pub fn plan_references(
    cfg: &ScenarioConfig,
    sys: &SystemModel,
) -> Result<Vec<ReferenceTrajectory>> {
    let out = plan_rrt(sys, &cfg.rrt.params, cfg.rrt.seed)?;
    if cfg.runtime.mode != RunMode::Traverse {
        return Ok(vec![out]);
    }
    let back_sys = mirror(sys)?;
    let start = out.states.last().expect("planned reference is nonempty").clone();
    let back = plan_rrt_from(&back_sys, &cfg.rrt.params, start, cfg.rrt.seed.wrapping_add(1))?;
    Ok(vec![out, back])
}

/// The same plant with initial and target sets exchanged: the return leg
/// of a traverse.
pub fn mirror(sys: &SystemModel) -> Result<SystemModel> {
    SystemModel::new(
        sys.dynamics.clone(),
        sys.lipschitz_x,
        sys.lipschitz_w,
        sys.input_set,
        sys.disturbance_set,
        sys.free_space.clone(),
        sys.target_set.clone(),
        sys.initial_set.clone(),
    )
}

/// Envelope, partition, and timed unroll for one leg. `v_entry` tightens
/// the entry bound below the initial-set worst case when the start is
/// pinned or handed over from another leg.
pub fn abstract_leg(
    cfg: &ScenarioConfig,
    sys: &SystemModel,
    clf: &DeltaIssClf,
    reference: ReferenceTrajectory,
    v_entry: Option<f64>,
) -> Result<PreparedLeg> {
    let model = ErrorBoundModel::from_clf(clf, sys, None)?;
    let mut env = safety_envelope(clf, sys, &reference)?;
    if let Some(v) = v_entry {
        env.v_init = v;
    }
    let partition = cfg.abstraction.partition(&env)?;
    let system = build_symbolic_system(&model, partition);
    let ta = build_timed_system(system, &model, &env, &reference)?;
    Ok(PreparedLeg { sys: sys.clone(), reference, model, env, ta })
}

/// Prepares both traverse legs with the handoff rule: each leg's entry
/// bound is the other leg's terminal bound, because an accepted run ends
/// with the certificate value at or below that level and the next leg's
/// reference starts exactly where the previous one ended. The out leg
/// additionally honors the pinned start of the first departure, so its
/// entry bound is the larger of the two requirements.
pub fn prepare_traverse(
    cfg: &ScenarioConfig,
    sys: &SystemModel,
    clf: &DeltaIssClf,
    reference_out: ReferenceTrajectory,
    reference_back: ReferenceTrajectory,
) -> Result<[PreparedLeg; 2]> {
    let back_sys = mirror(sys)?;
    let env_out = safety_envelope(clf, sys, &reference_out)?;
    let env_back = safety_envelope(clf, &back_sys, &reference_back)?;

    let x0 = cfg.initial_state(sys)?;
    let first_departure = clf.value(&x0, &reference_out.states[0]);
    let v_entry_out = first_departure.max(env_back.v_final);
    let v_entry_back = env_out.v_final;

    let out = abstract_leg(cfg, sys, clf, reference_out, Some(v_entry_out))?;
    let back = abstract_leg(cfg, &back_sys, clf, reference_back, Some(v_entry_back))?;
    Ok([out, back])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::min_comm_schedule;

    fn toy_config_json() -> String {
        r#"{
            "name": "toy",
            "system": {
                "dynamics": { "kind": "pendulum", "delta": 0.2, "a": 0.6, "b": 3.0 },
                "u_max": 2.0,
                "w_max": 0.025,
                "lipschitz_x": 1.05,
                "lipschitz_w": 0.2,
                "free_space": {
                    "outer": [[-1.0, -0.5], [1.0, -0.5], [1.0, 0.5], [-1.0, 0.5]]
                },
                "initial_set": { "lo": [-0.9, -0.1], "hi": [-0.7, 0.1] },
                "target_set": { "lo": [0.7, -0.1], "hi": [0.9, 0.1] }
            },
            "clf": {
                "family": "quadratic",
                "p": [[2.1, 0.45], [0.45, 0.43]],
                "q": [[0.29, 0.0], [0.0, 0.29]],
                "k_u": [[2.9, 2.0]],
                "rho_lin": 3.5,
                "rho_quad": 0.16
            },
            "rrt": { "seed": 7, "margin": 0.1, "goal_margin": 0.05 },
            "abstraction": { "m": 60 },
            "runtime": { "mode": "offline", "runs": 5, "seed": 3 }
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_builds_the_toy_scenario() {
        let cfg: ScenarioConfig = serde_json::from_str(&toy_config_json()).unwrap();
        cfg.validate().unwrap();
        let sys = cfg.build_system().unwrap();
        assert_eq!(sys.state_dim(), 2);
        assert_eq!(sys.input_set.radius, 2.0);
        let clf = cfg.build_clf(&sys).unwrap();
        assert!(clf.value(&DVector::from_vec(vec![1.0, 0.0]), &DVector::zeros(2)) > 2.0);
        let x0 = cfg.initial_state(&sys).unwrap();
        assert!(sys.initial_set.contains(&x0, 1e-9));
    }

    #[test]
    fn round_trips_through_serde() {
        let cfg: ScenarioConfig = serde_json::from_str(&toy_config_json()).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.name, cfg.name);
        assert_eq!(back.abstraction.m, cfg.abstraction.m);
        assert_eq!(back.rrt.seed, cfg.rrt.seed);
        assert_eq!(back.rrt.params.margin, cfg.rrt.params.margin);
        assert_eq!(back.runtime.runs, cfg.runtime.runs);
    }

    #[test]
    fn rejects_malformed_configs() {
        // Ragged CLF matrix.
        let mut bad: serde_json::Value = serde_json::from_str(&toy_config_json()).unwrap();
        bad["clf"]["p"] = serde_json::json!([[1.0, 0.0], [0.0]]);
        let cfg: ScenarioConfig = serde_json::from_value(bad).unwrap();
        assert!(matches!(
            cfg.build_clf(&cfg.build_system().unwrap()),
            Err(Error::Config(_))
        ));

        // Too few symbols.
        let mut bad: serde_json::Value = serde_json::from_str(&toy_config_json()).unwrap();
        bad["abstraction"]["m"] = serde_json::json!(1);
        let cfg: ScenarioConfig = serde_json::from_value(bad).unwrap();
        assert!(cfg.validate().is_err());

        // Unknown field anywhere in a deny-listed block.
        let mut bad: serde_json::Value = serde_json::from_str(&toy_config_json()).unwrap();
        bad["system"]["tau"] = serde_json::json!(0.95);
        assert!(serde_json::from_value::<ScenarioConfig>(bad).is_err());

        // Pinned start outside the initial set.
        let mut bad: serde_json::Value = serde_json::from_str(&toy_config_json()).unwrap();
        bad["runtime"]["x0"] = serde_json::json!([0.0, 0.0]);
        let cfg: ScenarioConfig = serde_json::from_value(bad).unwrap();
        let sys = cfg.build_system().unwrap();
        assert!(cfg.initial_state(&sys).is_err());
    }

    #[test]
    fn zoh_dynamics_build_from_continuous_blocks() {
        let mut val: serde_json::Value = serde_json::from_str(&toy_config_json()).unwrap();
        val["system"]["dynamics"] = serde_json::json!({
            "kind": "linear-zoh",
            "a_c": [[0.0, 1.0], [0.0, 0.0]],
            "b_c": [[0.0], [1.0]],
            "dt": 0.5
        });
        let cfg: ScenarioConfig = serde_json::from_value(val).unwrap();
        let sys = cfg.build_system().unwrap();
        let Dynamics::Linear { a, b } = &sys.dynamics else {
            panic!("zoh config must yield linear dynamics");
        };
        // Double integrator sampled at dt: A = [[1, dt], [0, 1]],
        // B = [[dt^2/2], [dt]].
        approx::assert_relative_eq!(a[(0, 1)], 0.5, epsilon = 1e-12);
        approx::assert_relative_eq!(b[(0, 0)], 0.125, epsilon = 1e-12);
        approx::assert_relative_eq!(b[(1, 0)], 0.5, epsilon = 1e-12);

        // A stable sampled plant builds a norm-gain certificate end to end.
        let mut val: serde_json::Value = serde_json::from_str(&toy_config_json()).unwrap();
        val["system"]["dynamics"] = serde_json::json!({
            "kind": "linear-zoh",
            "a_c": [[-1.0, 0.0], [0.0, -1.0]],
            "b_c": [[1.0, 0.0], [0.0, 1.0]],
            "dt": 0.5
        });
        val["clf"] = serde_json::json!({
            "family": "norm-gain",
            "k": [[0.2, 0.0], [0.0, 0.2]]
        });
        let cfg: ScenarioConfig = serde_json::from_value(val).unwrap();
        let sys = cfg.build_system().unwrap();
        cfg.build_clf(&sys).unwrap();
    }

    fn linear_traverse_json() -> String {
        // Contracting linear plant in an open box with symmetric initial
        // and target squares, so both traverse legs are plannable.
        r#"{
            "name": "toy-traverse",
            "system": {
                "dynamics": {
                    "kind": "linear",
                    "a": [[0.9, 0.0], [0.0, 0.9]],
                    "b": [[1.0, 0.0], [0.0, 1.0]]
                },
                "u_max": 4.0,
                "w_max": 0.02,
                "lipschitz_x": 0.9,
                "lipschitz_w": 1.0,
                "free_space": {
                    "outer": [[-6.0, -6.0], [6.0, -6.0], [6.0, 6.0], [-6.0, 6.0]]
                },
                "initial_set": { "lo": [-4.2, -4.2], "hi": [-3.8, -3.8] },
                "target_set": { "lo": [3.8, 3.8], "hi": [4.2, 4.2] }
            },
            "clf": { "family": "norm-gain", "k": [[0.4, 0.0], [0.0, 0.4]] },
            "rrt": { "seed": 11, "margin": 0.1, "goal_margin": 0.05 },
            "abstraction": { "m": 80 },
            "runtime": { "mode": "traverse", "runs": 1, "seed": 2, "step_budget": 60 }
        }"#
        .to_string()
    }

    #[test]
    fn traverse_wiring_chains_the_legs() {
        let cfg: ScenarioConfig = serde_json::from_str(&linear_traverse_json()).unwrap();
        cfg.validate().unwrap();
        let sys = cfg.build_system().unwrap();
        let clf = cfg.build_clf(&sys).unwrap();
        let refs = plan_references(&cfg, &sys).unwrap();
        assert_eq!(refs.len(), 2);
        let [out, back]: [ReferenceTrajectory; 2] =
            refs.try_into().map_err(|_| ()).unwrap();
        assert_eq!(
            back.states[0],
            *out.states.last().unwrap(),
            "return leg departs from the outbound endpoint"
        );
        let legs = prepare_traverse(&cfg, &sys, &clf, out, back).unwrap();
        assert_eq!(legs[0].env.v_init, legs[1].env.v_final.max(0.0));
        assert_eq!(legs[1].env.v_init, legs[0].env.v_final);
        for leg in &legs {
            min_comm_schedule(&leg.ta).unwrap();
        }

        // The wired legs execute under the runtime they were built for.
        let x0 = cfg.initial_state(&sys).unwrap();
        let stats = crate::simulator::traverse(
            &clf,
            [legs[0].as_traverse_leg(), legs[1].as_traverse_leg()],
            x0,
            cfg.runtime.step_budget,
            cfg.runtime.disturbance,
            cfg.runtime.seed,
        )
        .unwrap();
        assert_eq!(stats.steps, cfg.runtime.step_budget);
        assert!(stats.all_legs_valid);
        assert!(stats.legs_completed >= 2);
    }
}
