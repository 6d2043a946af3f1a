//! Incremental-stability certificates for reference tracking: a function
//! V(x, y) contracting the gap between the fed-back plant state x and the
//! open-loop reference state y, plus the comparison-function bundle the
//! scalar error model consumes.
//!
//! Two families are built in:
//!  * norm-gain: V = ||x - y||, kappa = u - K (x - y), for linear plants;
//!  * quadratic: V = (x-y)' P (x-y), kappa = u - k_u . (x - y), with an
//!    explicit decrease matrix Q and disturbance-gain coefficients.
//!
//! The verifier evaluates the defining inequalities on a state-pair grid;
//! a pass is a strong falsification check, not a proof.

use crate::classk::ClassK;
use crate::error::{Error, Result};
use crate::linalg::{sigma_max, sym_eig_max, sym_eig_min};
use crate::system::{Dynamics, SystemModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Concrete certificate family with its parameters.
#[derive(Debug, Clone)]
pub enum ClfFamily {
    /// V(x,y) = ||x-y||; requires linear dynamics with sigma_max(A-BK) < 1.
    NormGain { k: DMatrix<f64> },
    /// V(x,y) = e' P e with e = x - y; decrease certified by Q; the
    /// disturbance offset is rho_lin * r + rho_quad * r^2.
    Quadratic {
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        k_u: DMatrix<f64>,
        rho_lin: f64,
        rho_quad: f64,
    },
}

/// Certificate bundle: the family plus the derived comparison functions.
#[derive(Debug, Clone)]
pub struct DeltaIssClf {
    pub family: ClfFamily,
    /// Lower sandwich: alpha_lo(||x-y||) <= V(x,y).
    pub alpha_lo: ClassK,
    /// Upper sandwich: V(x,y) <= alpha_hi(||x-y||).
    pub alpha_hi: ClassK,
    /// Per-step decrease gain: V drops by at least alpha(||x-y||).
    pub alpha: ClassK,
    /// Disturbance offset in the decrease inequality.
    pub rho: ClassK,
    /// Feedback magnitude bound: ||kappa|| <= alpha_u(||x-y||) + rho_u(||u||).
    pub alpha_u: ClassK,
    pub rho_u: ClassK,
}

impl DeltaIssClf {
    /// Builds the norm-gain family for a linear plant. Fails unless the
    /// closed loop is a strict contraction in the spectral norm, since the
    /// decrease gain is 1 - sigma_max(A - BK).
    pub fn norm_gain(sys: &SystemModel, k: DMatrix<f64>) -> Result<Self> {
        let Dynamics::Linear { a, b } = &sys.dynamics else {
            return Err(Error::Config(
                "the norm-gain family needs linear dynamics".into(),
            ));
        };
        if k.nrows() != sys.input_dim() || k.ncols() != sys.state_dim() {
            return Err(Error::Config(format!(
                "gain must be {}x{}, got {}x{}",
                sys.input_dim(),
                sys.state_dim(),
                k.nrows(),
                k.ncols()
            )));
        }
        let a_cl = a - b * &k;
        let sigma_cl = sigma_max(&a_cl);
        if sigma_cl >= 1.0 {
            return Err(Error::Certificate(format!(
                "closed loop is not a spectral-norm contraction: sigma_max = {sigma_cl:.6}"
            )));
        }
        let gain_norm = sigma_max(&k);
        Ok(DeltaIssClf {
            family: ClfFamily::NormGain { k },
            alpha_lo: ClassK::linear(1.0),
            alpha_hi: ClassK::linear(1.0),
            alpha: ClassK::linear(1.0 - sigma_cl),
            rho: ClassK::linear(1.0),
            alpha_u: ClassK::linear(gain_norm.max(f64::MIN_POSITIVE)),
            rho_u: ClassK::linear(1.0),
        })
    }

    /// Builds the quadratic family. P must be positive definite and Q
    /// positive definite (they certify the sandwich and the decrease);
    /// whether Q really certifies the decrease for the given plant is the
    /// verifier's job, not a construction-time guarantee.
    pub fn quadratic(
        sys: &SystemModel,
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        k_u: DMatrix<f64>,
        rho_lin: f64,
        rho_quad: f64,
    ) -> Result<Self> {
        let n = sys.state_dim();
        if p.nrows() != n || p.ncols() != n || q.nrows() != n || q.ncols() != n {
            return Err(Error::Config("P and Q must be n x n".into()));
        }
        if k_u.nrows() != sys.input_dim() || k_u.ncols() != n {
            return Err(Error::Config(format!(
                "k_u must be {}x{}, got {}x{}",
                sys.input_dim(),
                n,
                k_u.nrows(),
                k_u.ncols()
            )));
        }
        let p_min = sym_eig_min(&p);
        let p_max = sym_eig_max(&p);
        let q_min = sym_eig_min(&q);
        if p_min <= 0.0 {
            return Err(Error::Certificate(format!(
                "P is not positive definite (lambda_min = {p_min:.3e})"
            )));
        }
        if q_min <= 0.0 {
            return Err(Error::Certificate(format!(
                "Q is not positive definite (lambda_min = {q_min:.3e})"
            )));
        }
        if rho_lin < 0.0 || rho_quad < 0.0 || rho_lin + rho_quad == 0.0 {
            return Err(Error::Config(
                "disturbance gain needs nonnegative coefficients, not all zero".into(),
            ));
        }
        let mut rho_terms = Vec::new();
        if rho_lin > 0.0 {
            rho_terms.push((rho_lin, 1.0));
        }
        if rho_quad > 0.0 {
            rho_terms.push((rho_quad, 2.0));
        }
        let gain_norm = sigma_max(&k_u);
        Ok(DeltaIssClf {
            family: ClfFamily::Quadratic { p, q, k_u, rho_lin, rho_quad },
            alpha_lo: ClassK::power(p_min, 2.0),
            alpha_hi: ClassK::power(p_max, 2.0),
            alpha: ClassK::power(q_min, 2.0),
            rho: ClassK::poly(&rho_terms),
            alpha_u: ClassK::linear(gain_norm.max(f64::MIN_POSITIVE)),
            rho_u: ClassK::linear(1.0),
        })
    }

    /// V(x, y).
    pub fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let e = x - y;
        match &self.family {
            ClfFamily::NormGain { .. } => e.norm(),
            ClfFamily::Quadratic { p, .. } => (e.transpose() * p * &e)[(0, 0)],
        }
    }

    /// kappa(x, y, u): the plant-side control when fresh state feedback
    /// is available. Equals u when x = y.
    pub fn feedback(&self, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let e = x - y;
        match &self.family {
            ClfFamily::NormGain { k } => u - k * e,
            ClfFamily::Quadratic { k_u, .. } => u - k_u * e,
        }
    }

    /// The contraction gain applied to V per communicating step, as a
    /// function of the current V value: alpha composed with the inverse
    /// upper sandwich.
    pub fn alpha2(&self) -> ClassK {
        ClassK::compose(self.alpha.clone(), inverse_form(&self.alpha_hi))
    }
}

/// Closed-form inverse for the sandwich forms used by the two families.
/// Both are Linear or Power, whose inverses stay in the algebra.
fn inverse_form(f: &ClassK) -> ClassK {
    match f {
        ClassK::Linear { a } => ClassK::linear(1.0 / a),
        ClassK::Power { a, p } => ClassK::power((1.0 / a).powf(1.0 / p), 1.0 / p),
        other => panic!("no closed-form inverse for {other:?}"),
    }
}

/// Worst slack and violation count for one inequality over the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    /// Smallest (most adverse) slack seen; negative means a violation.
    pub worst_slack: f64,
    pub violations: usize,
    /// The tuple achieving the worst slack: flattened (x, y, u, w1, w2)
    /// where applicable.
    pub worst_case: Option<Vec<f64>>,
}

impl InequalityReport {
    fn new() -> Self {
        InequalityReport { worst_slack: f64::INFINITY, violations: 0, worst_case: None }
    }

    fn record(&mut self, slack: f64, case: impl FnOnce() -> Vec<f64>) {
        if slack < -1e-9 {
            self.violations += 1;
        }
        if slack < self.worst_slack {
            self.worst_slack = slack;
            self.worst_case = Some(case());
        }
    }

    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub sandwich: InequalityReport,
    pub decrease: InequalityReport,
    pub input_bound: InequalityReport,
    pub grid_points: usize,
    pub checked_pairs: usize,
}

impl VerificationReport {
    pub fn all_ok(&self) -> bool {
        self.sandwich.ok() && self.decrease.ok() && self.input_bound.ok()
    }
}

/// Cap on the number of state pairs the verifier enumerates. Pairs beyond
/// the cap are thinned by a deterministic stride, so higher-dimensional
/// systems stay checkable; two-dimensional grids at the default density
/// fit comfortably under the cap and are checked exhaustively.
const PAIR_BUDGET: usize = 1_500_000;

/// Evaluates the sandwich, decrease, and input-bound inequalities on a
/// uniform grid over the free space (grid_density points per axis),
/// control inputs from the boundary of U plus zero, and disturbances from
/// the extremes of W plus zero. Violations are data in the report, not
/// errors.
pub fn verify_clf_on_grid(
    clf: &DeltaIssClf,
    sys: &SystemModel,
    grid_density: usize,
) -> Result<VerificationReport> {
    if grid_density < 2 {
        return Err(Error::Config("grid density must be at least 2".into()));
    }
    let (lo, hi) = sys.sampling_box()?;
    let n = sys.state_dim();
    let mut points: Vec<DVector<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let x = DVector::from_fn(n, |d, _| {
            lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / (grid_density - 1) as f64
        });
        if sys.free_space.signed_distance(&x) > 0.0 {
            points.push(x);
        }
        let mut d = 0;
        loop {
            if d == n {
                break;
            }
            idx[d] += 1;
            if idx[d] < grid_density {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == n {
            break;
        }
    }

    let u_grid = control_grid(sys);
    let w_grid = disturbance_grid(sys);

    let mut sandwich = InequalityReport::new();
    let mut decrease = InequalityReport::new();
    let mut input_bound = InequalityReport::new();

    let total_pairs = points.len() * points.len();
    let stride = total_pairs.div_ceil(PAIR_BUDGET).max(1);
    let mut checked = 0usize;
    for (pair_idx, (xi, yi)) in (0..points.len())
        .flat_map(|i| (0..points.len()).map(move |j| (i, j)))
        .enumerate()
    {
        if pair_idx % stride != 0 {
            continue;
        }
        checked += 1;
        let x = &points[xi];
        let y = &points[yi];
        let e_norm = (x - y).norm();
        let v = clf.value(x, y);

        let lo_slack = v - clf.alpha_lo.eval(e_norm);
        let hi_slack = clf.alpha_hi.eval(e_norm) - v;
        sandwich.record(lo_slack.min(hi_slack), || flat_case(&[x, y], &[]));

        for u in &u_grid {
            let kap = clf.feedback(x, y, u);
            let bound = clf.alpha_u.eval(e_norm) + clf.rho_u.eval(u.norm());
            input_bound.record(bound - kap.norm(), || flat_case(&[x, y, u], &[]));

            for w1 in &w_grid {
                for w2 in &w_grid {
                    let x_next = sys.step(x, &kap, w1);
                    let y_next = sys.step(y, u, w2);
                    let v_next = clf.value(&x_next, &y_next);
                    let dw = (w1 - w2).norm();
                    let slack = -clf.alpha.eval(e_norm) + clf.rho.eval(dw) - (v_next - v);
                    decrease.record(slack, || flat_case(&[x, y, u, w1, w2], &[]));
                }
            }
        }
    }

    Ok(VerificationReport {
        sandwich,
        decrease,
        input_bound,
        grid_points: points.len(),
        checked_pairs: checked,
    })
}

fn flat_case(vecs: &[&DVector<f64>], extra: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for v in vecs {
        out.extend(v.iter().copied());
    }
    out.extend_from_slice(extra);
    out
}

/// Zero plus the boundary extremes of the input ball along each axis.
fn control_grid(sys: &SystemModel) -> Vec<DVector<f64>> {
    let m = sys.input_dim();
    let r = sys.input_set.radius;
    let mut grid = vec![DVector::zeros(m)];
    for i in 0..m {
        for s in [-1.0, 1.0] {
            let mut u = DVector::zeros(m);
            u[i] = s * r;
            grid.push(u);
        }
    }
    grid
}

/// Zero plus the extremes of the disturbance ball along each axis.
fn disturbance_grid(sys: &SystemModel) -> Vec<DVector<f64>> {
    let q = sys.disturbance_dim();
    let r = sys.disturbance_set.radius;
    let mut grid = vec![DVector::zeros(q)];
    if r > 0.0 {
        for i in 0..q {
            for s in [-1.0, 1.0] {
                let mut w = DVector::zeros(q);
                w[i] = s * r;
                grid.push(w);
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FreeSpaceRegion, HPolytope, Polygon};
    use crate::system::NormBallSet;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn linear_sys(sigma_scale: f64) -> SystemModel {
        // Simple stable 2x2 linear plant.
        let a = DMatrix::from_row_slice(2, 2, &[0.8 * sigma_scale, 0.1, 0.0, 0.7 * sigma_scale]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        SystemModel::new(
            Dynamics::Linear { a, b },
            1.5,
            1.0,
            NormBallSet::new(5.0).unwrap(),
            NormBallSet::new(0.1).unwrap(),
            FreeSpaceRegion {
                outer: Polygon::rectangle(-10.0, -10.0, 10.0, 10.0),
                obstacles: vec![],
                bounds: vec![],
                half_spaces: vec![],
            },
            HPolytope::from_box(&[-9.0, -9.0], &[-8.0, -8.0]).unwrap(),
            HPolytope::from_box(&[8.0, 8.0], &[9.0, 9.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn norm_family_value_and_feedback() {
        let sys = linear_sys(1.0);
        let k = DMatrix::from_row_slice(1, 2, &[0.1, 0.3]);
        let clf = DeltaIssClf::norm_gain(&sys, k).unwrap();
        assert_relative_eq!(clf.value(&dv(&[3.0, 4.0]), &dv(&[0.0, 0.0])), 5.0);
        assert_eq!(clf.feedback(&dv(&[1.0, 2.0]), &dv(&[1.0, 2.0]), &dv(&[0.7])), dv(&[0.7]));
    }

    #[test]
    fn norm_family_rejects_expanding_loop() {
        let sys = linear_sys(1.6);
        let k = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        assert!(DeltaIssClf::norm_gain(&sys, k).is_err());
    }

    #[test]
    fn quadratic_value_matches_p() {
        let sys = crate::system::tests::toy_pendulum();
        let p = DMatrix::from_row_slice(2, 2, &[2.1, 0.45, 0.45, 0.43]);
        let q = DMatrix::from_row_slice(2, 2, &[0.29, 0.0, 0.0, 0.29]);
        let k_u = DMatrix::from_row_slice(1, 2, &[2.9, 2.0]);
        let clf = DeltaIssClf::quadratic(&sys, p, q, k_u, 3.5, 0.16).unwrap();
        assert_relative_eq!(clf.value(&dv(&[1.0, 0.0]), &dv(&[0.0, 0.0])), 2.1, epsilon = 1e-12);
        // feedback: u - k_u . e with e = (0.1, -0.05): -(0.29 - 0.10) = -0.19
        let kap = clf.feedback(&dv(&[0.1, -0.05]), &dv(&[0.0, 0.0]), &dv(&[0.0]));
        assert_relative_eq!(kap[0], -0.19, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_sandwich_functions() {
        let sys = crate::system::tests::toy_pendulum();
        let p = DMatrix::from_row_slice(2, 2, &[2.1, 0.45, 0.45, 0.43]);
        let q = DMatrix::from_row_slice(2, 2, &[0.29, 0.0, 0.0, 0.29]);
        let k_u = DMatrix::from_row_slice(1, 2, &[2.9, 2.0]);
        let clf = DeltaIssClf::quadratic(&sys, p, q, k_u, 3.5, 0.16).unwrap();
        // lambda bounds of P: 2.1 + 0.43 trace, det = 0.7005
        let p_min = clf.alpha_lo.eval(1.0);
        let p_max = clf.alpha_hi.eval(1.0);
        assert!(p_min > 0.31 && p_min < 0.32, "{p_min}");
        assert!(p_max > 2.21 && p_max < 2.22, "{p_max}");
        // alpha2 is linear with slope q_min / p_max.
        let a2 = clf.alpha2();
        assert_relative_eq!(a2.eval(2.0), 2.0 * 0.29 / p_max, epsilon = 1e-9);
    }

    #[test]
    fn norm_family_exact_contraction_on_samples() {
        let sys = linear_sys(1.0);
        let k = DMatrix::from_row_slice(1, 2, &[0.05, 0.4]);
        let clf = DeltaIssClf::norm_gain(&sys, k.clone()).unwrap();
        let Dynamics::Linear { a, b } = &sys.dynamics else { unreachable!() };
        let a_cl = a - b * &k;
        let sigma = sigma_max(&a_cl);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..500 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-5.0..5.0));
            let y = DVector::from_fn(2, |_, _| rng.gen_range(-5.0..5.0));
            let u = dv(&[rng.gen_range(-2.0..2.0)]);
            let kap = clf.feedback(&x, &y, &u);
            let w = DVector::zeros(2);
            let xn = sys.step(&x, &kap, &w);
            let yn = sys.step(&y, &u, &w);
            assert!(
                clf.value(&xn, &yn) <= sigma * clf.value(&x, &y) + 1e-9,
                "norm contraction bound violated"
            );
        }
    }

    #[test]
    fn grid_verifier_passes_norm_family() {
        let sys = linear_sys(1.0);
        let k = DMatrix::from_row_slice(1, 2, &[0.05, 0.4]);
        let clf = DeltaIssClf::norm_gain(&sys, k).unwrap();
        let report = verify_clf_on_grid(&clf, &sys, 7).unwrap();
        assert!(report.all_ok(), "unexpected violations: {report:?}");
    }

    #[test]
    fn grid_verifier_flags_broken_certificate() {
        // Inflate Q tenfold: the claimed decrease is impossible.
        let sys = crate::system::tests::toy_pendulum();
        let p = DMatrix::from_row_slice(2, 2, &[2.1, 0.45, 0.45, 0.43]);
        let q = DMatrix::from_row_slice(2, 2, &[2.9, 0.0, 0.0, 2.9]);
        let k_u = DMatrix::from_row_slice(1, 2, &[2.9, 2.0]);
        let clf = DeltaIssClf::quadratic(&sys, p, q, k_u, 3.5, 0.16).unwrap();
        let report = verify_clf_on_grid(&clf, &sys, 9).unwrap();
        assert!(report.decrease.violations > 0);
    }

    #[test]
    fn symmetry_and_identity_of_value() {
        let sys = crate::system::tests::toy_pendulum();
        let p = DMatrix::from_row_slice(2, 2, &[2.1, 0.45, 0.45, 0.43]);
        let q = DMatrix::from_row_slice(2, 2, &[0.29, 0.0, 0.0, 0.29]);
        let k_u = DMatrix::from_row_slice(1, 2, &[2.9, 2.0]);
        let clf = DeltaIssClf::quadratic(&sys, p, q, k_u, 3.5, 0.16).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let y = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let vxy = clf.value(&x, &y);
            let vyx = clf.value(&y, &x);
            assert_relative_eq!(vxy, vyx, epsilon = 1e-12);
            assert!(vxy >= 0.0);
        }
        let z = dv(&[0.3, -0.2]);
        assert_eq!(clf.value(&z, &z), 0.0);
    }
}
