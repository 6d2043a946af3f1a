//! Dense two-phase simplex for the small linear programs the geometry
//! layer needs (Chebyshev centers, implicit-equality detection).
//!
//! Pivot selection is Bland's rule throughout: the entering variable is
//! the lowest-index column with a negative reduced cost and the leaving
//! row breaks ratio ties by the lowest basis index. That makes cycling
//! impossible and the iteration order deterministic, so a permutation of
//! the constraint rows can change the pivot path but not the optimum.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const EPS_PIVOT: f64 = 1e-9;
const EPS_COST: f64 = 1e-9;

/// minimize `objective . x` subject to `a_ub * x <= b_ub`, `x` free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.objective.len();
        let m = self.a_ub.nrows();
        assert_eq!(self.a_ub.ncols(), n, "objective/constraint width mismatch");
        assert_eq!(self.b_ub.len(), m);

        // Standard form: x = xp - xn with xp, xn >= 0, one slack per row.
        // Columns: [xp (n) | xn (n) | slack (m)]; artificials appended later.
        let cols = 2 * n + m;
        let mut a = DMatrix::zeros(m, cols);
        let mut b = DVector::zeros(m);
        for i in 0..m {
            let flip = self.b_ub[i] < 0.0;
            let sgn = if flip { -1.0 } else { 1.0 };
            for j in 0..n {
                a[(i, j)] = sgn * self.a_ub[(i, j)];
                a[(i, n + j)] = -sgn * self.a_ub[(i, j)];
            }
            a[(i, 2 * n + i)] = sgn;
            b[i] = sgn * self.b_ub[i];
        }

        let mut tab = Tableau::with_artificials(a, b);
        tab.run_phase1()?;

        let mut cost = DVector::zeros(tab.total_cols());
        for j in 0..n {
            cost[j] = self.objective[j];
            cost[n + j] = -self.objective[j];
        }
        tab.run_phase2(&cost)?;

        let z = tab.primal_values();
        let x = DVector::from_fn(n, |j, _| z[j] - z[n + j]);
        let objective = self.objective.dot(&x);
        Ok(LpSolution { x, objective })
    }
}

struct Tableau {
    a: DMatrix<f64>,
    b: DVector<f64>,
    basis: Vec<usize>,
    structural: usize,
}

impl Tableau {
    /// Builds the phase-1 tableau with one artificial per row (basis).
    fn with_artificials(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let m = a.nrows();
        let structural = a.ncols();
        let mut full = DMatrix::zeros(m, structural + m);
        full.view_mut((0, 0), (m, structural)).copy_from(&a);
        for i in 0..m {
            full[(i, structural + i)] = 1.0;
        }
        let basis = (structural..structural + m).collect();
        Tableau { a: full, b, basis, structural }
    }

    fn total_cols(&self) -> usize {
        self.a.ncols()
    }

    fn run_phase1(&mut self) -> Result<()> {
        let cols = self.total_cols();
        let mut cost = DVector::zeros(cols);
        for j in self.structural..cols {
            cost[j] = 1.0;
        }
        self.iterate(&cost, self.total_cols())?;
        let obj: f64 = self
            .basis
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[j] * self.b[i])
            .sum();
        if obj > 1e-7 {
            return Err(Error::LpInfeasible);
        }
        self.evict_artificials();
        Ok(())
    }

    /// Pivots any basic artificial out (it sits at zero level after a
    /// feasible phase 1); rows with no structural pivot are redundant and
    /// get neutralized in place.
    fn evict_artificials(&mut self) {
        for i in 0..self.basis.len() {
            if self.basis[i] < self.structural {
                continue;
            }
            let mut pivoted = false;
            for j in 0..self.structural {
                if self.a[(i, j)].abs() > EPS_PIVOT {
                    self.pivot(i, j);
                    pivoted = true;
                    break;
                }
            }
            if !pivoted {
                // Redundant row: zero it so it can never constrain a pivot.
                for j in 0..self.total_cols() {
                    self.a[(i, j)] = 0.0;
                }
                self.b[i] = 0.0;
            }
        }
    }

    fn run_phase2(&mut self, cost: &DVector<f64>) -> Result<()> {
        let mut full = DVector::zeros(self.total_cols());
        full.rows_mut(0, cost.len()).copy_from(cost);
        // Artificial columns are barred from re-entering.
        self.iterate(&full, self.structural)
    }

    /// Runs simplex pivots with Bland's rule until optimal.
    /// Columns at index >= `enterable` may not enter the basis.
    fn iterate(&mut self, cost: &DVector<f64>, enterable: usize) -> Result<()> {
        let m = self.basis.len();
        loop {
            // Reduced costs relative to the current basis.
            let mut entering = None;
            for j in 0..enterable {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for i in 0..m {
                    r -= cost[self.basis[i]] * self.a[(i, j)];
                }
                if r < -EPS_COST {
                    entering = Some(j);
                    break; // Bland: lowest index wins.
                }
            }
            let Some(j) = entering else { return Ok(()) };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let aij = self.a[(i, j)];
                if aij > EPS_PIVOT {
                    let ratio = self.b[i] / aij;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-12
                                || (ratio < lr + 1e-12 && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((i, _)) = leave else {
                return Err(Error::LpUnbounded);
            };
            self.pivot(i, j);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let m = self.basis.len();
        let cols = self.total_cols();
        let p = self.a[(row, col)];
        for j in 0..cols {
            self.a[(row, j)] /= p;
        }
        self.b[row] /= p;
        for i in 0..m {
            if i == row {
                continue;
            }
            let f = self.a[(i, col)];
            if f.abs() < 1e-300 {
                continue;
            }
            for j in 0..cols {
                self.a[(i, j)] -= f * self.a[(row, j)];
            }
            self.b[i] -= f * self.b[row];
        }
        self.basis[row] = col;
    }

    fn primal_values(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.total_cols());
        for (i, &j) in self.basis.iter().enumerate() {
            z[j] = self.b[i];
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lp(c: &[f64], a: &[&[f64]], b: &[f64]) -> LinearProgram {
        let n = c.len();
        let m = a.len();
        LinearProgram {
            objective: DVector::from_row_slice(c),
            a_ub: DMatrix::from_fn(m, n, |i, j| a[i][j]),
            b_ub: DVector::from_row_slice(b),
        }
    }

    #[test]
    fn box_minimum() {
        // min x + y on [-1, 2]^2 -> (-1, -1)
        let p = lp(
            &[1.0, 1.0],
            &[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]],
            &[2.0, 1.0, 2.0, 1.0],
        );
        let s = p.solve().unwrap();
        assert_relative_eq!(s.objective, -2.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        // x <= -1 and -x <= 0 (x >= 0) cannot both hold.
        let p = lp(&[1.0], &[&[1.0], &[-1.0]], &[-1.0, 0.0]);
        assert!(matches!(p.solve(), Err(Error::LpInfeasible)));
    }

    #[test]
    fn unbounded_detected() {
        let p = lp(&[-1.0], &[&[-1.0]], &[0.0]);
        assert!(matches!(p.solve(), Err(Error::LpUnbounded)));
    }

    #[test]
    fn degenerate_equality_pair() {
        // x <= 3 and -x <= -3 pin x = 3 exactly.
        let p = lp(&[1.0, 0.0], &[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]], &[3.0, -3.0, 1.0, 0.0]);
        let s = p.solve().unwrap();
        assert_relative_eq!(s.x[0], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn permuted_rows_same_optimum() {
        let rows: Vec<Vec<f64>> = vec![
            vec![1.0, 2.0],
            vec![-1.0, 1.0],
            vec![0.0, -1.0],
            vec![-2.0, -1.0],
            vec![1.0, -0.5],
        ];
        let b = [4.0, 1.0, 2.0, 3.0, 2.5];
        let base = lp(
            &[-1.0, -1.0],
            &rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>(),
            &b,
        )
        .solve()
        .unwrap();
        let perm = [3usize, 0, 4, 2, 1];
        let pr: Vec<&[f64]> = perm.iter().map(|&i| rows[i].as_slice()).collect();
        let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        let other = lp(&[-1.0, -1.0], &pr, &pb).solve().unwrap();
        assert_relative_eq!(base.objective, other.objective, epsilon = 1e-9);
    }
}
