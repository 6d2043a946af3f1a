//! Plant dynamics and constraint sets: the discrete-time system map, its
//! registered Lipschitz constants, the admissible input/disturbance balls,
//! and the free-space / initial / target geometry.

use crate::error::{Error, Result};
use crate::geometry::{FreeSpaceRegion, HPolytope};
use crate::linalg::expm;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Euclidean norm ball { v : ||v|| <= radius }.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormBallSet {
    pub radius: f64,
}

impl NormBallSet {
    pub fn new(radius: f64) -> Result<Self> {
        if radius < 0.0 || !radius.is_finite() {
            return Err(Error::Config(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        Ok(NormBallSet { radius })
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        v.norm() <= self.radius + tol
    }
}

/// The two discrete-time dynamics families the pipeline supports.
#[derive(Debug, Clone)]
pub enum Dynamics {
    /// x+ = A x + B u + w (disturbance additive on the state).
    Linear { a: DMatrix<f64>, b: DMatrix<f64> },
    /// Damped pendulum under explicit Euler:
    ///   x1+ = x1 + delta * (x2 + w)
    ///   x2+ = x2 + delta * (a sin(x1) - b x2 + u)
    /// with scalar input and scalar disturbance entering the angle channel.
    Pendulum { delta: f64, a: f64, b: f64 },
}

impl Dynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            Dynamics::Linear { a, .. } => a.nrows(),
            Dynamics::Pendulum { .. } => 2,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Dynamics::Linear { b, .. } => b.ncols(),
            Dynamics::Pendulum { .. } => 1,
        }
    }

    pub fn disturbance_dim(&self) -> usize {
        match self {
            Dynamics::Linear { a, .. } => a.nrows(),
            Dynamics::Pendulum { .. } => 1,
        }
    }
}

/// Exact zero-order-hold discretization of `x' = A_c x + B_c u`:
/// A = exp(A_c dt), B = (integral of exp(A_c s) ds over [0, dt]) B_c.
///
/// Computed from one exponential of the augmented block matrix
/// [[A_c, B_c], [0, 0]] * dt, whose top rows are exactly [A, B]. The
/// series truncation in `expm` sits far below the 1e-12 tolerance this
/// routine promises.
pub fn discretize_zoh(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_c.nrows();
    if a_c.ncols() != n {
        return Err(Error::Config(format!(
            "continuous A must be square, got {}x{}",
            a_c.nrows(),
            a_c.ncols()
        )));
    }
    if b_c.nrows() != n {
        return Err(Error::Config("continuous B row count must match A".into()));
    }
    if dt <= 0.0 {
        return Err(Error::Config(format!("sampling interval must be positive, got {dt}")));
    }
    let m = b_c.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a_c);
    aug.view_mut((0, n), (n, m)).copy_from(b_c);
    let e = expm(&(aug * dt));
    let a = e.view((0, 0), (n, n)).into_owned();
    let b = e.view((0, n), (n, m)).into_owned();
    Ok((a, b))
}

/// Plant model: dynamics plus every constraint set the synthesis needs.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub dynamics: Dynamics,
    /// Registered Lipschitz constant of f in x (guarded by a sampled test).
    pub lipschitz_x: f64,
    /// Registered Lipschitz constant of f in w.
    pub lipschitz_w: f64,
    pub input_set: NormBallSet,
    pub disturbance_set: NormBallSet,
    pub free_space: FreeSpaceRegion,
    pub initial_set: HPolytope,
    pub target_set: HPolytope,
}

impl SystemModel {
    pub fn new(
        dynamics: Dynamics,
        lipschitz_x: f64,
        lipschitz_w: f64,
        input_set: NormBallSet,
        disturbance_set: NormBallSet,
        free_space: FreeSpaceRegion,
        initial_set: HPolytope,
        target_set: HPolytope,
    ) -> Result<Self> {
        if lipschitz_x <= 0.0 || lipschitz_w <= 0.0 {
            return Err(Error::Config(
                "registered Lipschitz constants must be positive".into(),
            ));
        }
        let sys = SystemModel {
            dynamics,
            lipschitz_x,
            lipschitz_w,
            input_set,
            disturbance_set,
            free_space,
            initial_set,
            target_set,
        };
        sys.validate()?;
        Ok(sys)
    }

    fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        self.free_space.validate(n)?;
        if self.initial_set.dim() != n || self.target_set.dim() != n {
            return Err(Error::Config(
                "initial/target polytope dimension does not match the state".into(),
            ));
        }
        // Containment: vertices plus pairwise midpoints at coarse
        // resolution; exact polytope-in-region containment is out of scope.
        for (name, set) in [("initial", &self.initial_set), ("target", &self.target_set)] {
            let verts = set.vertices()?;
            let mut probes: Vec<DVector<f64>> = verts.clone();
            for i in 0..verts.len() {
                for j in (i + 1)..verts.len() {
                    let mid = (&verts[i] + &verts[j]) * 0.5;
                    probes.push(mid);
                }
            }
            for p in &probes {
                if self.free_space.signed_distance(p) < -1e-2 {
                    return Err(Error::Config(format!(
                        "{name} set reaches outside the free space near {p:?}"
                    )));
                }
            }
        }
        // Disjointness of the initial and target sets, checked on vertices.
        let iv = self.initial_set.vertices()?;
        if iv.iter().any(|v| self.target_set.contains(v, 1e-9)) {
            return Err(Error::Config(
                "initial set vertex lies inside the target set".into(),
            ));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.dynamics.disturbance_dim()
    }

    /// One step of the plant map. Pure; panics on dimension mismatch
    /// (caller bug, not data).
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.state_dim(), "state dimension mismatch");
        assert_eq!(u.len(), self.input_dim(), "input dimension mismatch");
        assert_eq!(w.len(), self.disturbance_dim(), "disturbance dimension mismatch");
        match &self.dynamics {
            Dynamics::Linear { a, b } => a * x + b * u + w,
            Dynamics::Pendulum { delta, a, b } => {
                let x1 = x[0];
                let x2 = x[1];
                DVector::from_vec(vec![
                    x1 + delta * (x2 + w[0]),
                    x2 + delta * (a * x1.sin() - b * x2 + u[0]),
                ])
            }
        }
    }

    /// Sampled guard for the registered Lipschitz constants: draws state
    /// pairs inside the free-space bounding region and disturbance pairs
    /// in W, and checks the increment bound. Returns the worst observed
    /// ratio violation, if any.
    pub fn sampled_lipschitz_check<R: Rng>(
        &self,
        samples: usize,
        rng: &mut R,
    ) -> Result<()> {
        let (lo, hi) = self.sampling_box()?;
        let n = self.state_dim();
        let q = self.disturbance_dim();
        let mut worst: f64 = 0.0;
        let mut worst_at = None;
        let mut accepted = 0usize;
        let mut attempts = 0usize;
        while accepted < samples && attempts < samples * 200 {
            attempts += 1;
            let x1 = DVector::from_fn(n, |i, _| rng.gen_range(lo[i]..=hi[i]));
            let x2 = DVector::from_fn(n, |i, _| rng.gen_range(lo[i]..=hi[i]));
            if !self.free_space.contains(&x1) || !self.free_space.contains(&x2) {
                continue;
            }
            accepted += 1;
            let u = self.random_in_ball(self.input_set.radius, self.input_dim(), rng);
            let w1 = self.random_in_ball(self.disturbance_set.radius, q, rng);
            let w2 = self.random_in_ball(self.disturbance_set.radius, q, rng);
            let lhs = (self.step(&x1, &u, &w1) - self.step(&x2, &u, &w2)).norm();
            let rhs = self.lipschitz_x * (&x1 - &x2).norm() + self.lipschitz_w * (&w1 - &w2).norm();
            if lhs > rhs + 1e-9 && lhs - rhs > worst {
                worst = lhs - rhs;
                worst_at = Some((x1.clone(), x2.clone()));
            }
        }
        if accepted < samples {
            return Err(Error::Config(
                "free space too thin for Lipschitz sampling (rejection failed)".into(),
            ));
        }
        match worst_at {
            None => Ok(()),
            Some((x1, x2)) => Err(Error::Certificate(format!(
                "registered Lipschitz constants violated by {worst:.3e} for the pair \
                 x1 = {x1:?}, x2 = {x2:?}"
            ))),
        }
    }

    /// Axis box enclosing the free space (outer polygon bbox plus axis
    /// bounds), used for rejection sampling.
    pub fn sampling_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.state_dim();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        let verts = self.free_space.outer.vertices();
        for d in 0..2.min(n) {
            lo[d] = verts.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min);
            hi[d] = verts.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max);
        }
        for b in &self.free_space.bounds {
            lo[b.dim] = lo[b.dim].max(b.lo);
            hi[b.dim] = hi[b.dim].min(b.hi);
        }
        if lo.iter().zip(&hi).any(|(l, h)| !l.is_finite() || !h.is_finite() || l > h) {
            return Err(Error::Config(
                "free space is unbounded in some coordinate; add axis bounds".into(),
            ));
        }
        Ok((lo, hi))
    }

    fn random_in_ball<R: Rng>(&self, radius: f64, dim: usize, rng: &mut R) -> DVector<f64> {
        crate::simulator::uniform_in_ball(radius, dim, rng)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    pub fn toy_pendulum() -> SystemModel {
        SystemModel::new(
            Dynamics::Pendulum { delta: 0.2, a: 0.6, b: 3.0 },
            1.05,
            0.2,
            NormBallSet::new(2.0).unwrap(),
            NormBallSet::new(0.025).unwrap(),
            FreeSpaceRegion {
                outer: Polygon::rectangle(-1.0, -0.5, 1.0, 0.5),
                obstacles: vec![],
                bounds: vec![],
                half_spaces: vec![],
            },
            HPolytope::from_box(&[-0.9, -0.1], &[-0.7, 0.1]).unwrap(),
            HPolytope::from_box(&[0.7, -0.1], &[0.9, 0.1]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn pendulum_equilibrium_fixed() {
        let sys = toy_pendulum();
        let x = sys.step(&dv(&[0.0, 0.0]), &dv(&[0.0]), &dv(&[0.0]));
        assert_relative_eq!(x.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pendulum_step_hand_value() {
        // x = (0, 0.5): x1+ = 0.1, x2+ = 0.5 - 0.2 * 3 * 0.5 = 0.2
        let sys = toy_pendulum();
        let x = sys.step(&dv(&[0.0, 0.5]), &dv(&[0.0]), &dv(&[0.0]));
        assert_relative_eq!(x[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(x[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn zoh_zero_generator() {
        let a_c = DMatrix::zeros(2, 2);
        let b_c = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let (a, b) = discretize_zoh(&a_c, &b_c, 0.3).unwrap();
        assert_relative_eq!(a[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(a[(0, 1)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(b[(0, 0)], 0.3, epsilon = 1e-14);
        assert_relative_eq!(b[(1, 0)], 0.6, epsilon = 1e-14);
    }

    #[test]
    fn zoh_scalar_velocity_channel() {
        // x' = (u - x)/tau with tau = 0.95, dt = 0.5:
        // A = e^{-0.5/0.95}, B = 1 - A.
        let tau = 0.95;
        let a_c = DMatrix::from_row_slice(1, 1, &[-1.0 / tau]);
        let b_c = DMatrix::from_row_slice(1, 1, &[1.0 / tau]);
        let (a, b) = discretize_zoh(&a_c, &b_c, 0.5).unwrap();
        let expect_a = (-0.5f64 / tau).exp();
        assert_relative_eq!(a[(0, 0)], expect_a, epsilon = 1e-12);
        assert_relative_eq!(b[(0, 0)], 1.0 - expect_a, epsilon = 1e-12);
        assert!((a[(0, 0)] - 0.5908).abs() < 5e-4);
        assert!((b[(0, 0)] - 0.4092).abs() < 5e-4);
    }

    #[test]
    fn zoh_diagonal_generator() {
        let a_c = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b_c = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let (a, _) = discretize_zoh(&a_c, &b_c, 0.7).unwrap();
        assert_relative_eq!(a[(0, 0)], (-0.7f64).exp(), epsilon = 1e-13);
        assert_relative_eq!(a[(1, 1)], (-1.4f64).exp(), epsilon = 1e-13);
        assert_relative_eq!(a[(0, 1)], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn zoh_rejects_bad_shapes() {
        let a_c = DMatrix::zeros(2, 3);
        let b_c = DMatrix::zeros(2, 1);
        assert!(discretize_zoh(&a_c, &b_c, 1.0).is_err());
    }

    #[test]
    fn step_is_deterministic() {
        let sys = toy_pendulum();
        let x = dv(&[0.3, -0.2]);
        let u = dv(&[0.5]);
        let w = dv(&[0.01]);
        let a = sys.step(&x, &u, &w);
        let b = sys.step(&x, &u, &w);
        assert_eq!(a, b, "identical inputs must give bitwise-identical outputs");
    }

    #[test]
    fn lipschitz_guard_accepts_sound_constant() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        let sys = toy_pendulum();
        sys.sampled_lipschitz_check(2000, &mut rng).unwrap();
    }

    #[test]
    fn lipschitz_guard_rejects_unsound_constant() {
        use rand::SeedableRng;
        let mut sys = toy_pendulum();
        sys.lipschitz_x = 0.5; // far below the true constant
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        assert!(sys.sampled_lipschitz_check(2000, &mut rng).is_err());
    }

    #[test]
    fn validation_rejects_overlapping_sets() {
        let err = SystemModel::new(
            Dynamics::Pendulum { delta: 0.2, a: 0.6, b: 3.0 },
            1.05,
            0.2,
            NormBallSet::new(2.0).unwrap(),
            NormBallSet::new(0.025).unwrap(),
            FreeSpaceRegion {
                outer: Polygon::rectangle(-1.0, -0.5, 1.0, 0.5),
                obstacles: vec![],
                bounds: vec![],
                half_spaces: vec![],
            },
            HPolytope::from_box(&[-0.2, -0.1], &[0.2, 0.1]).unwrap(),
            HPolytope::from_box(&[0.1, -0.1], &[0.5, 0.1]).unwrap(),
        );
        assert!(err.is_err());
    }
}
