//! State-constraint geometry: planar free-space regions (a polygon with
//! polygonal holes, plus axis bounds and half-spaces on the remaining
//! coordinates) and H-polytopes for initial/terminal sets.
//!
//! The signed distance of a state to the free-space boundary is computed
//! as the minimum over every constraint curve. For points inside the
//! region that is an under-approximation of the true clearance (the
//! boundary is a subset of the union of the curves), which is exactly the
//! direction the safety envelope needs to stay sound.

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpSolution};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const EPS_GEOM: f64 = 1e-9;

/// Simple planar polygon, stored counter-clockwise, not self-intersecting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<[f64; 2]>,
}

impl Polygon {
    /// Builds a polygon, normalizing orientation to counter-clockwise.
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        let mut p = Polygon { vertices };
        if p.signed_area() < 0.0 {
            p.vertices.reverse();
        }
        if p.signed_area().abs() < EPS_GEOM {
            return Err(Error::Geometry("polygon is degenerate (zero area)".into()));
        }
        Ok(p)
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon {
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut a = 0.0;
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            a += x0 * y1 - x1 * y0;
        }
        a * 0.5
    }

    /// Point membership, boundary inclusive. Winding-number test with an
    /// explicit on-edge check so boundary points are never misclassified
    /// by ray parity.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        if self.distance_to_boundary(p) < EPS_GEOM {
            return true;
        }
        self.winding_number(p) != 0
    }

    fn winding_number(&self, p: [f64; 2]) -> i32 {
        let n = self.vertices.len();
        let mut wn = 0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if a[1] <= p[1] {
                if b[1] > p[1] && cross(a, b, p) > 0.0 {
                    wn += 1;
                }
            } else if b[1] <= p[1] && cross(a, b, p) < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    /// Euclidean distance from `p` to the polygon outline.
    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        let n = self.vertices.len();
        let mut d = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            d = d.min(dist_point_segment(p, a, b));
        }
        d
    }
}

fn cross(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])
}

/// Distance from point `p` to segment `ab`.
pub fn dist_point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let abx = b[0] - a[0];
    let aby = b[1] - a[1];
    let apx = p[0] - a[0];
    let apy = p[1] - a[1];
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = apx - t * abx;
    let dy = apy - t * aby;
    (dx * dx + dy * dy).sqrt()
}

/// Closed interval bound on one state coordinate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AxisBound {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Half-space `normal . x <= offset` over the full state vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// The admissible state region: a planar polygon with polygonal holes on
/// coordinates (0, 1), interval bounds on further coordinates, and
/// optional half-space side constraints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeSpaceRegion {
    pub outer: Polygon,
    #[serde(default)]
    pub obstacles: Vec<Polygon>,
    #[serde(default)]
    pub bounds: Vec<AxisBound>,
    #[serde(default)]
    pub half_spaces: Vec<HalfSpace>,
}

impl FreeSpaceRegion {
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if state_dim < 2 {
            return Err(Error::Geometry(
                "free-space region needs at least a 2-dimensional state".into(),
            ));
        }
        for b in &self.bounds {
            if b.dim >= state_dim {
                return Err(Error::Geometry(format!(
                    "axis bound on dim {} out of range for state dim {}",
                    b.dim, state_dim
                )));
            }
            if b.lo > b.hi {
                return Err(Error::Geometry(format!(
                    "axis bound on dim {} has lo {} > hi {}",
                    b.dim, b.lo, b.hi
                )));
            }
        }
        for h in &self.half_spaces {
            if h.normal.len() != state_dim {
                return Err(Error::Geometry(format!(
                    "half-space normal has {} entries, state dim is {}",
                    h.normal.len(),
                    state_dim
                )));
            }
            let nrm: f64 = h.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm < EPS_GEOM {
                return Err(Error::Geometry("half-space normal is zero".into()));
            }
        }
        for obs in &self.obstacles {
            for &v in obs.vertices() {
                if !self.outer.contains(v) {
                    return Err(Error::Geometry(
                        "obstacle vertex lies outside the outer polygon".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Signed distance of `x` to the free-space boundary: positive inside,
    /// negative outside, zero on the boundary. Inside, the value is a
    /// (tight for generic points) under-approximation of the true
    /// clearance, so it is safe to feed into the envelope construction.
    pub fn signed_distance(&self, x: &DVector<f64>) -> f64 {
        let p = [x[0], x[1]];
        let mut d = f64::INFINITY;
        let mut inside = self.outer.contains(p);
        d = d.min(self.outer.distance_to_boundary(p));
        for obs in &self.obstacles {
            if obs.contains(p) && obs.distance_to_boundary(p) > EPS_GEOM {
                inside = false;
            }
            d = d.min(obs.distance_to_boundary(p));
        }
        for b in &self.bounds {
            let lo = x[b.dim] - b.lo;
            let hi = b.hi - x[b.dim];
            if lo < 0.0 || hi < 0.0 {
                inside = false;
            }
            d = d.min(lo.abs().min(hi.abs()));
        }
        for h in &self.half_spaces {
            let nrm: f64 = h.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            let slack: f64 = h.offset
                - h.normal
                    .iter()
                    .zip(x.iter())
                    .map(|(a, v)| a * v)
                    .sum::<f64>();
            let sd = slack / nrm;
            if sd < 0.0 {
                inside = false;
            }
            d = d.min(sd.abs());
        }
        if inside {
            d
        } else {
            -d
        }
    }

    /// Strict interior membership: states on the boundary count as
    /// unsafe, matching the safety semantics everywhere else.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.signed_distance(x) > 0.0
    }
}

/// Convex polytope in H-representation: `{ x : a x <= b }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HPolytope {
    rows: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl HPolytope {
    pub fn new(rows: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() || rows.len() != offsets.len() {
            return Err(Error::Geometry(
                "polytope needs matching, non-empty rows and offsets".into(),
            ));
        }
        let n = rows[0].len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Geometry("polytope rows have inconsistent width".into()));
        }
        Ok(HPolytope { rows, offsets })
    }

    /// Axis-aligned box `[lo_i, hi_i]` as 2n half-spaces.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Geometry("box bounds must have equal nonzero length".into()));
        }
        if lo.iter().zip(hi).any(|(l, h)| l > h) {
            return Err(Error::Geometry("box has lo > hi".into()));
        }
        let n = lo.len();
        let mut rows = Vec::with_capacity(2 * n);
        let mut offsets = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut r = vec![0.0; n];
            r[i] = 1.0;
            rows.push(r);
            offsets.push(hi[i]);
            let mut r = vec![0.0; n];
            r[i] = -1.0;
            rows.push(r);
            offsets.push(-lo[i]);
        }
        Ok(HPolytope { rows, offsets })
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.rows.iter().zip(&self.offsets).all(|(r, &b)| {
            r.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>() <= b + tol
        })
    }

    /// Minimum Euclidean face slack min_i (b_i - a_i x) / ||a_i||.
    /// Positive strictly inside, negative outside; for full-dimensional
    /// polytopes this is the distance to the boundary when inside.
    pub fn face_clearance(&self, x: &DVector<f64>) -> f64 {
        self.rows
            .iter()
            .zip(&self.offsets)
            .map(|(r, &b)| {
                let dot: f64 = r.iter().zip(x.iter()).map(|(a, v)| a * v).sum();
                let norm = r.iter().map(|a| a * a).sum::<f64>().sqrt();
                (b - dot) / norm
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.dim(), |i, j| self.rows[i][j])
    }

    fn b_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.offsets)
    }

    /// Chebyshev center: the center and radius of the largest ball inside
    /// the polytope. Lower-dimensional polytopes (implicit equalities such
    /// as a box collapsed to a point in some coordinates) are handled by
    /// reducing to the affine hull first; the radius is then measured
    /// inside that affine subspace.
    pub fn chebyshev_center(&self) -> Result<(DVector<f64>, f64)> {
        let n = self.dim();
        let m = self.rows.len();
        let a = self.a_matrix();
        let b = self.b_vector();

        // Implicit equality rows: a_i x = b_i over the whole feasible set,
        // detected by minimizing a_i x subject to the polytope.
        let mut equalities = Vec::new();
        for i in 0..m {
            let lp = LinearProgram {
                objective: DVector::from_fn(n, |j, _| a[(i, j)]),
                a_ub: a.clone(),
                b_ub: b.clone(),
            };
            let sol = lp.solve().map_err(|e| match e {
                Error::LpInfeasible => Error::Geometry("polytope is empty".into()),
                other => other,
            })?;
            if b[i] - sol.objective <= 1e-7 {
                equalities.push(i);
            }
        }

        if equalities.is_empty() {
            let sol = self.chebyshev_lp(&a, &b, None)?;
            let center = DVector::from_fn(n, |j, _| sol.x[j]);
            return Ok((center, sol.x[n]));
        }

        // Affine hull {x : a_E x = b_E}; particular solution by SVD
        // pseudo-inverse, null-space basis from the right singular vectors.
        let ae = DMatrix::from_fn(equalities.len(), n, |i, j| a[(equalities[i], j)]);
        let be = DVector::from_fn(equalities.len(), |i, _| b[equalities[i]]);
        let svd = ae.clone().svd(true, true);
        let x_p = svd
            .solve(&be, 1e-10)
            .map_err(|e| Error::Geometry(format!("affine hull solve failed: {e}")))?;
        let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
        let rank = svd.singular_values.iter().filter(|s| **s > 1e-10).count();
        let null_dim = n - rank;
        if null_dim == 0 {
            // The feasible set is a single point.
            return Ok((x_p, 0.0));
        }
        let basis = DMatrix::from_fn(n, null_dim, |i, j| v_t[(rank + j, i)]);

        // Reduced problem over z with x = x_p + basis z.
        let mut red_rows = Vec::new();
        let mut red_offsets = Vec::new();
        for i in 0..m {
            if equalities.contains(&i) {
                continue;
            }
            let ai = DVector::from_fn(n, |j, _| a[(i, j)]);
            let proj = basis.transpose() * &ai;
            let slack = b[i] - ai.dot(&x_p);
            if proj.norm() < 1e-10 {
                if slack < -1e-9 {
                    return Err(Error::Geometry("polytope is empty".into()));
                }
                continue;
            }
            red_rows.push(proj.iter().copied().collect::<Vec<f64>>());
            red_offsets.push(slack);
        }
        if red_rows.is_empty() {
            return Err(Error::Geometry(
                "polytope is unbounded within its affine hull".into(),
            ));
        }
        let ra = DMatrix::from_fn(red_rows.len(), null_dim, |i, j| red_rows[i][j]);
        let rb = DVector::from_row_slice(&red_offsets);
        let sol = self.chebyshev_lp(&ra, &rb, None)?;
        let z = DVector::from_fn(null_dim, |j, _| sol.x[j]);
        let center = &x_p + &basis * z;
        Ok((center, sol.x[null_dim]))
    }

    /// max r  s.t.  a_i x + r ||a_i|| <= b_i, encoded as a minimization.
    fn chebyshev_lp(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        _marker: Option<()>,
    ) -> Result<LpSolution> {
        let m = a.nrows();
        let n = a.ncols();
        let mut rows = DMatrix::zeros(m + 1, n + 1);
        let mut offs = DVector::zeros(m + 1);
        for i in 0..m {
            let nrm = a.row(i).norm();
            for j in 0..n {
                rows[(i, j)] = a[(i, j)];
            }
            rows[(i, n)] = nrm;
            offs[i] = b[i];
        }
        // r >= 0
        rows[(m, n)] = -1.0;
        offs[m] = 0.0;
        let mut objective = DVector::zeros(n + 1);
        objective[n] = -1.0;
        let lp = LinearProgram {
            objective,
            a_ub: rows,
            b_ub: offs,
        };
        lp.solve().map_err(|e| match e {
            Error::LpInfeasible => Error::Geometry("polytope is empty".into()),
            Error::LpUnbounded => Error::Geometry("polytope is unbounded".into()),
            other => other,
        })
    }

    /// Vertex enumeration by basis enumeration: every subset of `dim` rows
    /// whose normals are independent is solved as a linear system and kept
    /// if feasible. Fine for the small constraint counts this crate sees.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>> {
        let n = self.dim();
        let m = self.rows.len();
        if m < n {
            return Err(Error::Geometry(
                "polytope with fewer rows than dimensions has no vertices".into(),
            ));
        }
        let a = self.a_matrix();
        let b = self.b_vector();
        let mut verts: Vec<DVector<f64>> = Vec::new();
        let mut subset = vec![0usize; n];
        enumerate_subsets(m, n, &mut subset, 0, 0, &mut |rows_idx| {
            let sub_a = DMatrix::from_fn(n, n, |i, j| a[(rows_idx[i], j)]);
            let sub_b = DVector::from_fn(n, |i, _| b[rows_idx[i]]);
            let lu = sub_a.full_piv_lu();
            if let Some(x) = lu.solve(&sub_b) {
                if x.iter().all(|v| v.is_finite())
                    && self.contains(&x, 1e-7)
                    && !verts.iter().any(|v| (v - &x).norm() < 1e-7)
                {
                    verts.push(x);
                }
            }
        });
        if verts.is_empty() {
            return Err(Error::Geometry("polytope has no vertices (empty or unbounded)".into()));
        }
        Ok(verts)
    }

    /// Per-axis bounding intervals via 2n linear programs.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let a = self.a_matrix();
        let b = self.b_vector();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for j in 0..n {
            for (sign, out) in [(1.0, &mut lo as &mut DVector<f64>), (-1.0, &mut hi)] {
                let mut obj = DVector::zeros(n);
                obj[j] = sign;
                let sol = LinearProgram {
                    objective: obj,
                    a_ub: a.clone(),
                    b_ub: b.clone(),
                }
                .solve()
                .map_err(|e| match e {
                    Error::LpInfeasible => Error::Geometry("polytope is empty".into()),
                    Error::LpUnbounded => Error::Geometry("polytope is unbounded".into()),
                    other => other,
                })?;
                out[j] = sign * sol.objective;
            }
        }
        Ok((lo, hi))
    }
}

fn enumerate_subsets(
    m: usize,
    n: usize,
    subset: &mut Vec<usize>,
    depth: usize,
    start: usize,
    f: &mut impl FnMut(&[usize]),
) {
    if depth == n {
        f(subset);
        return;
    }
    for i in start..m {
        subset[depth] = i;
        enumerate_subsets(m, n, subset, depth + 1, i + 1, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn polygon_orientation_normalized() {
        let p = Polygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(p.signed_area() > 0.0);
    }

    #[test]
    fn point_in_polygon_basic() {
        let p = Polygon::rectangle(-1.0, -1.0, 1.0, 1.0);
        assert!(p.contains([0.0, 0.0]));
        assert!(p.contains([1.0, 1.0])); // corner
        assert!(p.contains([1.0, 0.0])); // edge
        assert!(!p.contains([1.2, 0.0]));
    }

    #[test]
    fn distance_to_segment_cases() {
        // Perpendicular foot inside the segment.
        assert_relative_eq!(
            dist_point_segment([0.5, 1.0], [0.0, 0.0], [1.0, 0.0]),
            1.0,
            epsilon = 1e-12
        );
        // Nearest point is an endpoint.
        assert_relative_eq!(
            dist_point_segment([2.0, 1.0], [0.0, 0.0], [1.0, 0.0]),
            2f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn signed_distance_with_hole() {
        let fs = FreeSpaceRegion {
            outer: Polygon::rectangle(-2.0, -2.0, 2.0, 2.0),
            obstacles: vec![Polygon::rectangle(-0.5, -0.5, 0.5, 0.5)],
            bounds: vec![],
            half_spaces: vec![],
        };
        // Between hole and outer wall: clearance is to the hole (0.5).
        let d = fs.signed_distance(&dv(&[1.0, 0.0]));
        assert_relative_eq!(d, 0.5, epsilon = 1e-12);
        // Inside the hole: negative.
        assert!(fs.signed_distance(&dv(&[0.0, 0.0])) < 0.0);
        // Outside the outer polygon: negative.
        assert!(fs.signed_distance(&dv(&[3.0, 0.0])) < 0.0);
    }

    #[test]
    fn signed_distance_with_axis_bounds() {
        let fs = FreeSpaceRegion {
            outer: Polygon::rectangle(-10.0, -10.0, 10.0, 10.0),
            obstacles: vec![],
            bounds: vec![
                AxisBound { dim: 2, lo: -4.0, hi: 4.0 },
                AxisBound { dim: 3, lo: -4.0, hi: 4.0 },
            ],
            half_spaces: vec![],
        };
        let d = fs.signed_distance(&dv(&[0.0, 0.0, 3.5, 0.0]));
        assert_relative_eq!(d, 0.5, epsilon = 1e-12);
        assert!(fs.signed_distance(&dv(&[0.0, 0.0, 4.5, 0.0])) < 0.0);
    }

    #[test]
    fn chebyshev_right_triangle() {
        // Triangle (0,0), (1,0), (0,1): inradius (2 - sqrt(2)) / 2.
        let p = HPolytope::new(
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0, 1.0],
        )
        .unwrap();
        let (c, r) = p.chebyshev_center().unwrap();
        let expect = (2.0 - 2f64.sqrt()) / 2.0;
        assert_relative_eq!(r, expect, epsilon = 1e-9);
        assert_relative_eq!(c[0], expect, epsilon = 1e-9);
        assert_relative_eq!(c[1], expect, epsilon = 1e-9);
    }

    #[test]
    fn chebyshev_degenerate_box() {
        // [-9,-7]^2 x {0}^2: center (-8,-8,0,0), in-hull radius 1.
        let p = HPolytope::from_box(&[-9.0, -9.0, 0.0, 0.0], &[-7.0, -7.0, 0.0, 0.0]).unwrap();
        let (c, r) = p.chebyshev_center().unwrap();
        assert_relative_eq!(c[0], -8.0, epsilon = 1e-7);
        assert_relative_eq!(c[1], -8.0, epsilon = 1e-7);
        assert_relative_eq!(c[2], 0.0, epsilon = 1e-7);
        assert_relative_eq!(c[3], 0.0, epsilon = 1e-7);
        assert_relative_eq!(r, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn chebyshev_invariant_under_row_permutation() {
        let p1 = HPolytope::new(
            vec![
                vec![1.0, 0.3],
                vec![-1.0, 0.5],
                vec![0.2, 1.0],
                vec![-0.1, -1.0],
                vec![1.0, 1.0],
            ],
            vec![2.0, 1.5, 1.0, 1.2, 2.2],
        )
        .unwrap();
        let p2 = HPolytope::new(
            vec![
                vec![1.0, 1.0],
                vec![0.2, 1.0],
                vec![1.0, 0.3],
                vec![-0.1, -1.0],
                vec![-1.0, 0.5],
            ],
            vec![2.2, 1.0, 2.0, 1.2, 1.5],
        )
        .unwrap();
        let (_, r1) = p1.chebyshev_center().unwrap();
        let (_, r2) = p2.chebyshev_center().unwrap();
        assert_relative_eq!(r1, r2, epsilon = 1e-7);
    }

    #[test]
    fn vertices_of_box() {
        let p = HPolytope::from_box(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        let mut vs = p.vertices().unwrap();
        assert_eq!(vs.len(), 4);
        vs.sort_by(|a, b| (a[0], a[1]).partial_cmp(&(b[0], b[1])).unwrap());
        assert_relative_eq!(vs[0][0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(vs[3][1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn vertices_of_degenerate_box() {
        let p = HPolytope::from_box(&[-9.0, -9.0, 0.0, 0.0], &[-7.0, -7.0, 0.0, 0.0]).unwrap();
        let vs = p.vertices().unwrap();
        assert_eq!(vs.len(), 4);
        for v in &vs {
            assert_relative_eq!(v[2], 0.0, epsilon = 1e-9);
            assert_relative_eq!(v[3], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn bounding_box_matches_vertices() {
        let p = HPolytope::new(
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0, 1.0],
        )
        .unwrap();
        let (lo, hi) = p.bounding_box().unwrap();
        assert_relative_eq!(lo[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(hi[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(hi[1], 1.0, epsilon = 1e-9);
    }
}
