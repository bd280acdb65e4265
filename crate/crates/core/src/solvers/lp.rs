//! Two-phase primal simplex on a dense tableau, Bland's rule throughout.
//!
//! `min cᵀz s.t. Gz ≤ h` with free `z` becomes the standard form
//! `[G, -G, I] (z⁺, z⁻, s) = h` with every variable non-negative. Rows with
//! negative right-hand side are negated and given an artificial variable.

use super::{linear_rows, CanonicalProgram, ProgramSolution, Status};
use crate::error::{Error, Result};
use crate::numerics::{solve_general, DenseMatrix};

const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

struct Tableau {
    /// `m` rows of `ncols` coefficients followed by the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn reduced_costs(&self, cost: &[f64], allowed: usize) -> Vec<f64> {
        let mut d: Vec<f64> = cost[..allowed].to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (dj, a) in d.iter_mut().zip(&self.rows[r][..allowed]) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    /// Runs simplex iterations over columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize, pivots: &mut usize) -> Status {
        loop {
            if *pivots >= MAX_PIVOTS {
                return Status::MaxIterations;
            }
            let d = self.reduced_costs(cost, allowed);
            let Some(enter) = (0..allowed)
                .find(|&j| d[j] < -PIVOT_TOL && !self.basis.contains(&j))
            else {
                return Status::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][enter];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Status::Unbounded;
            };
            self.pivot(r, enter);
            *pivots += 1;
        }
    }
}

/// Solves `min cᵀz + const` subject to linear constraints only.
pub fn solve_lp(prog: &CanonicalProgram) -> Result<ProgramSolution> {
    if !prog.objective.is_linear() {
        return Err(Error::InvalidQuery("LP objective must be linear".into()));
    }
    let (g, h) = linear_rows(prog)?;
    let n = prog.dim;
    let m = g.len();

    // Column layout: z⁺ (n), z⁻ (n), slacks (m), artificials (one per negated row).
    let flipped: Vec<bool> = h.iter().map(|&v| v < 0.0).collect();
    let n_art = flipped.iter().filter(|&&f| f).count();
    let n_struct = 2 * n + m;
    let ncols = n_struct + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = n_struct;
    for i in 0..m {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        let mut row = vec![0.0; ncols + 1];
        for k in 0..n {
            row[k] = sign * g[i][k];
            row[n + k] = -sign * g[i][k];
        }
        row[2 * n + i] = sign;
        row[ncols] = sign * h[i];
        if flipped[i] {
            row[art] = 1.0;
            basis.push(art);
            art += 1;
        } else {
            basis.push(2 * n + i);
        }
        rows.push(row);
    }
    let mut tab = Tableau { rows, basis, ncols };
    let mut pivots = 0;

    if n_art > 0 {
        let mut phase1 = vec![0.0; ncols];
        phase1[n_struct..].iter_mut().for_each(|c| *c = 1.0);
        match tab.optimize(&phase1, ncols, &mut pivots) {
            Status::Optimal => {}
            Status::MaxIterations => return Ok(ProgramSolution::failed(Status::MaxIterations, n, pivots)),
            // Phase 1 is bounded below by zero.
            Status::Unbounded | Status::Infeasible => unreachable!("phase 1 cannot be unbounded"),
        }
        let infeas: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= n_struct)
            .map(|r| tab.rhs(r))
            .sum();
        let scale = 1.0 + h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeas > 1e-9 * scale {
            return Ok(ProgramSolution::failed(Status::Infeasible, n, pivots));
        }
        // Drive zero-valued artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= n_struct {
                if let Some(c) = (0..n_struct).find(|&c| tab.rows[r][c].abs() > PIVOT_TOL) {
                    tab.pivot(r, c);
                    pivots += 1;
                }
            }
        }
    }

    let mut cost = vec![0.0; ncols];
    for k in 0..n {
        cost[k] = prog.objective.linear[k];
        cost[n + k] = -prog.objective.linear[k];
    }
    let status = tab.optimize(&cost, n_struct, &mut pivots);
    if status != Status::Optimal {
        return Ok(ProgramSolution::failed(status, n, pivots));
    }

    let mut u = vec![0.0; ncols];
    for (r, &b) in tab.basis.iter().enumerate() {
        u[b] = tab.rhs(r);
    }
    let z: Vec<f64> = (0..n).map(|k| u[k] - u[n + k]).collect();

    // Duals from Bᵀy = c_B on the standard-form columns, mapped back to `Gz ≤ h`.
    let column = |j: usize, i: usize| -> f64 {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        if j < n {
            sign * g[i][j]
        } else if j < 2 * n {
            -sign * g[i][j - n]
        } else if j < n_struct {
            if j - 2 * n == i {
                sign
            } else {
                0.0
            }
        } else {
            // Artificial columns are unit vectors on their row.
            let owner = (0..m).filter(|&r| flipped[r]).nth(j - n_struct).unwrap();
            if owner == i {
                1.0
            } else {
                0.0
            }
        }
    };
    let multipliers = if m == 0 {
        Vec::new()
    } else {
        let mut bt = DenseMatrix::zeros(m, m);
        for (r, &b) in tab.basis.iter().enumerate() {
            for i in 0..m {
                bt[(r, i)] = column(b, i);
            }
        }
        let cb: Vec<f64> = tab.basis.iter().map(|&b| cost[b]).collect();
        match solve_general(&bt, &cb) {
            Some(y) => (0..m)
                .map(|i| {
                    let sign = if flipped[i] { -1.0 } else { 1.0 };
                    (-sign * y[i]).max(0.0)
                })
                .collect(),
            None => vec![0.0; m],
        }
    };
    Ok(prog.solution(Status::Optimal, z, multipliers, pivots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{Objective, QuadraticConstraint};

    fn lp(c: Vec<f64>, rows: Vec<(Vec<f64>, f64)>) -> CanonicalProgram {
        CanonicalProgram::new(
            Objective::linear(c),
            rows.into_iter().map(|(q, c)| QuadraticConstraint::linear(q, c)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_lower_bound() {
        let s = solve_lp(&lp(vec![1.0], vec![(vec![-1.0], 1.0)])).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(s.stationarity < 1e-12 && s.complementarity < 1e-12);
    }

    #[test]
    fn two_lower_bounds() {
        let s = solve_lp(&lp(
            vec![1.0, 1.0],
            vec![(vec![-1.0, 0.0], 0.5), (vec![0.0, -1.0], 0.25)],
        ))
        .unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] - 0.5).abs() < 1e-12 && (s.point[1] - 0.25).abs() < 1e-12);
        assert!((s.objective - 0.75).abs() < 1e-12);
        assert!(s.stationarity < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let s = solve_lp(&lp(vec![0.0], vec![(vec![1.0], 0.0), (vec![-1.0], 1.0)])).unwrap();
        assert_eq!(s.status, Status::Infeasible);
    }

    #[test]
    fn unbounded_direction() {
        let s = solve_lp(&lp(vec![-1.0], vec![(vec![-1.0], 0.0)])).unwrap();
        assert_eq!(s.status, Status::Unbounded);
    }

    #[test]
    fn rejects_quadratic_rows() {
        let prog = CanonicalProgram::new(
            Objective::linear(vec![1.0]),
            vec![QuadraticConstraint::quadratic(DenseMatrix::identity(1), vec![0.0], -1.0)],
        )
        .unwrap();
        assert!(solve_lp(&prog).is_err());
    }

    #[test]
    fn degenerate_vertex() {
        // Three constraints through the optimum (0, 0).
        let s = solve_lp(&lp(
            vec![1.0, 1.0],
            vec![
                (vec![-1.0, 0.0], 0.0),
                (vec![0.0, -1.0], 0.0),
                (vec![-1.0, -1.0], 0.0),
            ],
        ))
        .unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!(s.objective.abs() < 1e-12);
        assert!(s.stationarity < 1e-9);
    }
}
