//! Offline reference generation: a kinodynamic RRT from the Chebyshev
//! center of the initial set into the target set, keeping a safety margin
//! to every free-space boundary.
//!
//! The planner is deliberately plain: uniform state sampling with goal
//! bias, nearest neighbor under a velocity-discounted Euclidean metric,
//! and one-step steering by trying a fixed number of admissible controls.
//! Anything smarter stays behind the same trajectory contract.

use crate::error::{Error, Result};
use crate::system::SystemModel;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Nominal trajectory: states x_0..x_L and open-loop controls u_0..u_{L-1}.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    /// Clearance kept to the free-space boundary at every state.
    pub margin: f64,
    pub seed: u64,
}

impl ReferenceTrajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RrtParams {
    /// Safety margin required at every reference state.
    pub margin: f64,
    pub max_iterations: usize,
    /// Candidate controls tried per expansion.
    pub num_controls: usize,
    /// Probability of sampling the goal instead of a uniform state.
    pub goal_bias: f64,
    /// Weight of the velocity-like coordinates (second half of the state)
    /// in the nearest-neighbor metric.
    pub velocity_weight: f64,
    /// Reference controls are sampled inside a ball of this fraction of
    /// u_max, leaving headroom for the online feedback correction.
    pub control_radius_frac: f64,
    /// Required clearance to the target-set faces at acceptance; keeps the
    /// terminal error budget strictly positive.
    pub goal_margin: f64,
}

impl Default for RrtParams {
    fn default() -> Self {
        RrtParams {
            margin: 0.0,
            max_iterations: 100_000,
            num_controls: 16,
            goal_bias: 0.1,
            velocity_weight: 0.5,
            control_radius_frac: 1.0,
            goal_margin: 0.0,
        }
    }
}

impl RrtParams {
    pub fn validate(&self) -> Result<()> {
        if self.margin < 0.0 || self.goal_margin < 0.0 {
            return Err(Error::Config("margins must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(Error::Config("goal bias must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.control_radius_frac) || self.control_radius_frac == 0.0 {
            return Err(Error::Config("control radius fraction must be in (0, 1]".into()));
        }
        if self.num_controls == 0 || self.max_iterations == 0 {
            return Err(Error::Config("iteration and control budgets must be positive".into()));
        }
        if self.velocity_weight <= 0.0 {
            return Err(Error::Config("velocity weight must be positive".into()));
        }
        Ok(())
    }
}

struct TreeNode {
    state: DVector<f64>,
    parent: usize,
    control_from_parent: Option<DVector<f64>>,
}

/// Distance with the second half of the coordinates discounted; both
/// example plants keep their velocity-like coordinates there.
fn weighted_dist(a: &DVector<f64>, b: &DVector<f64>, velocity_weight: f64) -> f64 {
    let n = a.len();
    let split = n.div_ceil(2);
    let mut acc = 0.0;
    for i in 0..n {
        let w = if i < split { 1.0 } else { velocity_weight };
        let d = a[i] - b[i];
        acc += w * d * d;
    }
    acc.sqrt()
}

/// Signed clearance of a state inside an H-polytope: the minimum face
/// slack measured in Euclidean distance.
pub fn polytope_clearance(set: &crate::geometry::HPolytope, x: &DVector<f64>) -> f64 {
    set.face_clearance(x)
}

/// Grows an RRT until the target set is reached with the required
/// clearances, then extracts the root-to-goal trajectory. The tree is
/// rooted at the Chebyshev center of the initial set.
pub fn plan_rrt(
    sys: &SystemModel,
    params: &RrtParams,
    seed: u64,
) -> Result<ReferenceTrajectory> {
    let (root, _) = sys.initial_set.chebyshev_center()?;
    plan_rrt_from(sys, params, root, seed)
}

/// Same search from an explicit root state. Chained legs use this: the
/// return trip departs from the endpoint of the outbound reference rather
/// than from the initial-set center.
pub fn plan_rrt_from(
    sys: &SystemModel,
    params: &RrtParams,
    root: DVector<f64>,
    seed: u64,
) -> Result<ReferenceTrajectory> {
    params.validate()?;
    if root.len() != sys.state_dim() {
        return Err(Error::Config(format!(
            "start state has dimension {}, plant expects {}",
            root.len(),
            sys.state_dim()
        )));
    }
    if sys.free_space.signed_distance(&root) < params.margin {
        return Err(Error::Planning(format!(
            "start state violates the margin: clearance {:.4} < {:.4}",
            sys.free_space.signed_distance(&root),
            params.margin
        )));
    }
    let (goal_center, _) = sys.target_set.chebyshev_center()?;
    let (lo, hi) = sys.sampling_box()?;
    let n = sys.state_dim();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut nodes = vec![TreeNode { state: root, parent: 0, control_from_parent: None }];
    let u_radius = params.control_radius_frac * sys.input_set.radius;

    for iter in 0..params.max_iterations {
        let sample = if rng.gen_bool(params.goal_bias) {
            goal_center.clone()
        } else {
            DVector::from_fn(n, |i, _| rng.gen_range(lo[i]..=hi[i]))
        };
        // Nearest node, lowest index on ties.
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, node) in nodes.iter().enumerate() {
            let d = weighted_dist(&node.state, &sample, params.velocity_weight);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        // Steer: try candidate controls, keep the admissible child closest
        // to the sample.
        let mut child: Option<(DVector<f64>, DVector<f64>, f64)> = None;
        let w0 = DVector::zeros(sys.disturbance_dim());
        for _ in 0..params.num_controls {
            let u = crate::simulator::uniform_in_ball(u_radius, sys.input_dim(), &mut rng);
            let next = sys.step(&nodes[best].state, &u, &w0);
            if sys.free_space.signed_distance(&next) < params.margin {
                continue;
            }
            let d = weighted_dist(&next, &sample, params.velocity_weight);
            if child.as_ref().is_none_or(|(_, _, bd)| d < *bd) {
                child = Some((next, u, d));
            }
        }
        let Some((state, control, _)) = child else { continue };
        nodes.push(TreeNode {
            state: state.clone(),
            parent: best,
            control_from_parent: Some(control),
        });

        if sys.target_set.face_clearance(&state) >= params.goal_margin {
            // Reached: walk back to the root.
            let mut rev_states = Vec::new();
            let mut rev_controls = Vec::new();
            let mut at = nodes.len() - 1;
            loop {
                rev_states.push(nodes[at].state.clone());
                match &nodes[at].control_from_parent {
                    Some(u) => {
                        rev_controls.push(u.clone());
                        at = nodes[at].parent;
                    }
                    None => break,
                }
            }
            rev_states.reverse();
            rev_controls.reverse();
            let _ = iter;
            return Ok(ReferenceTrajectory {
                states: rev_states,
                controls: rev_controls,
                margin: params.margin,
                seed,
            });
        }
    }
    Err(Error::Planning(format!(
        "iteration budget {} exhausted; tree holds {} nodes without reaching the target",
        params.max_iterations,
        nodes.len()
    )))
}

/// Per-condition outcome of re-checking a reference trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub start_is_center: bool,
    pub dynamics_ok: bool,
    pub margin_ok: bool,
    /// First index violating the margin, when margin_ok is false.
    pub margin_fail_index: Option<usize>,
    pub terminal_ok: bool,
    pub controls_ok: bool,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.start_is_center
            && self.dynamics_ok
            && self.margin_ok
            && self.terminal_ok
            && self.controls_ok
    }
}

pub fn validate_reference(sys: &SystemModel, traj: &ReferenceTrajectory) -> Result<ValidationReport> {
    if traj.states.len() != traj.controls.len() + 1 {
        return Err(Error::Config(
            "trajectory must hold exactly one more state than controls".into(),
        ));
    }
    let (center, _) = sys.initial_set.chebyshev_center()?;
    let start_is_center = (&traj.states[0] - &center).norm() <= 1e-7;

    let w0 = DVector::zeros(sys.disturbance_dim());
    let mut dynamics_ok = true;
    for k in 0..traj.horizon() {
        let pred = sys.step(&traj.states[k], &traj.controls[k], &w0);
        if (&pred - &traj.states[k + 1]).norm() > 1e-9 {
            dynamics_ok = false;
            break;
        }
    }

    let mut margin_ok = true;
    let mut margin_fail_index = None;
    for (k, x) in traj.states.iter().enumerate() {
        if sys.free_space.signed_distance(x) < traj.margin - 1e-9 {
            margin_ok = false;
            margin_fail_index = Some(k);
            break;
        }
    }

    let terminal_ok = sys
        .target_set
        .contains(traj.states.last().expect("nonempty states"), 1e-9);
    let controls_ok = traj
        .controls
        .iter()
        .all(|u| sys.input_set.contains(u, 1e-9));

    Ok(ValidationReport {
        start_is_center,
        dynamics_ok,
        margin_ok,
        margin_fail_index,
        terminal_ok,
        controls_ok,
    })
}
