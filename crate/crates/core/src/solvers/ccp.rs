//! Penalty convex-concave procedure for difference-of-convex constraints.
//!
//! Each DC row `½zᵀA₊z - ½zᵀA₋z + qᵀz + c ≤ 0` has its concave part replaced
//! by the first-order expansion `ĝ(z) = ρᵀz + c̃` of `½zᵀA₋z` at the current
//! iterate, plus a non-negative slack penalised with weight `τ`.

use super::{
    solve_convex_qcqp, solve_lp, solve_qp, CanonicalProgram, Objective, ProgramSolution,
    QuadraticConstraint, Status,
};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm_inf, DenseMatrix};

/// `½zᵀ(convex)z - ½zᵀ(concave)z + qᵀz + c ≤ 0`, both matrices PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct DcConstraint {
    pub convex: Option<DenseMatrix>,
    pub concave: Option<DenseMatrix>,
    pub q: Vec<f64>,
    pub c: f64,
}

impl DcConstraint {
    pub fn eval(&self, z: &[f64]) -> f64 {
        let plus = self.convex.as_ref().map_or(0.0, |a| 0.5 * a.quad_form(z));
        let minus = self.concave.as_ref().map_or(0.0, |a| 0.5 * a.quad_form(z));
        plus - minus + dot(&self.q, z) + self.c
    }

    /// The same row with `A = A₊ - A₋`.
    pub fn combined(&self) -> QuadraticConstraint {
        let n = self.q.len();
        let plus = self.convex.clone().unwrap_or_else(|| DenseMatrix::zeros(n, n));
        let a = match &self.concave {
            Some(m) => plus.sub(m),
            None => plus,
        };
        QuadraticConstraint::quadratic(a, self.q.clone(), self.c)
    }
}

/// A convex program (`base`) with additional DC rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DcProgram {
    pub base: CanonicalProgram,
    pub dc_constraints: Vec<DcConstraint>,
}

impl DcProgram {
    pub fn new(base: CanonicalProgram, dc_constraints: Vec<DcConstraint>) -> Result<Self> {
        let n = base.dim;
        for dc in &dc_constraints {
            let dims = [Some(dc.q.len()), dc.convex.as_ref().map(DenseMatrix::rows), dc.concave.as_ref().map(DenseMatrix::rows)];
            if let Some(found) = dims.into_iter().flatten().find(|&d| d != n) {
                return Err(Error::DimensionMismatch { expected: n, found });
            }
        }
        Ok(Self { base, dc_constraints })
    }

    pub fn max_violation(&self, z: &[f64]) -> f64 {
        self.dc_constraints
            .iter()
            .map(|c| c.eval(z))
            .fold(self.base.max_violation(z), f64::max)
    }

    /// `f₀(z) + τ Σ max(0, g_j(z))`
    pub fn penalized(&self, z: &[f64], tau: f64) -> f64 {
        let excess: f64 = self.dc_constraints.iter().map(|c| c.eval(z).max(0.0)).sum();
        self.base.objective.eval(z) + tau * excess
    }

    /// The non-convex program with every row in plain canonical form.
    pub fn combined(&self) -> CanonicalProgram {
        let mut constraints = self.base.constraints.clone();
        constraints.extend(self.dc_constraints.iter().map(DcConstraint::combined));
        CanonicalProgram {
            dim: self.base.dim,
            objective: self.base.objective.clone(),
            constraints,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CcpOptions {
    pub tau0: f64,
    pub tau_growth: f64,
    pub tau_max: f64,
    pub max_iterations: usize,
    pub movement_tol: f64,
    pub slack_tol: f64,
}

impl Default for CcpOptions {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            tau_growth: 2.0,
            tau_max: 1e6,
            max_iterations: 100,
            movement_tol: 1e-6,
            slack_tol: 1e-6,
        }
    }
}

/// One outer step; `penalized_*` are both measured with the step's `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct CcpIterate {
    pub k: usize,
    /// Linearization point.
    pub point: Vec<f64>,
    /// `A₋ z_k` per DC row.
    pub rho: Vec<Vec<f64>>,
    /// `-½ z_kᵀ A₋ z_k` per DC row.
    pub c_tilde: Vec<f64>,
    pub tau: f64,
    pub penalized_before: f64,
    pub penalized_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcpOutcome {
    pub solution: ProgramSolution,
    pub trace: Vec<CcpIterate>,
}

fn lift_matrix(m: &DenseMatrix, size: usize) -> DenseMatrix {
    let mut big = DenseMatrix::zeros(size, size);
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            big[(r, c)] = m[(r, c)];
        }
    }
    big
}

fn lift_vec(v: &[f64], size: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(size, 0.0);
    out
}

struct Subproblem {
    prog: CanonicalProgram,
    rho: Vec<Vec<f64>>,
    c_tilde: Vec<f64>,
}

/// Convexified program over `(z, s)` at linearization point `zk`.
fn convexify(dc: &DcProgram, zk: &[f64], tau: f64) -> Subproblem {
    let n = dc.base.dim;
    let m = dc.dc_constraints.len();
    let size = n + m;
    let base = &dc.base;

    let mut linear = lift_vec(&base.objective.linear, size);
    linear[n..].iter_mut().for_each(|v| *v = tau);
    let objective = Objective {
        hessian: base.objective.hessian.as_ref().map(|h| lift_matrix(h, size)),
        linear,
        constant: base.objective.constant,
    };

    let mut constraints: Vec<QuadraticConstraint> = base
        .constraints
        .iter()
        .map(|c| QuadraticConstraint {
            a: c.a.as_ref().map(|a| lift_matrix(a, size)),
            q: lift_vec(&c.q, size),
            c: c.c,
        })
        .collect();
    let mut rho = Vec::with_capacity(m);
    let mut c_tilde = Vec::with_capacity(m);
    for (j, row) in dc.dc_constraints.iter().enumerate() {
        let (r, ct) = match &row.concave {
            Some(a) => (a.matvec(zk), -0.5 * a.quad_form(zk)),
            None => (vec![0.0; n], 0.0),
        };
        let mut q = lift_vec(&row.q, size);
        for i in 0..n {
            q[i] -= r[i];
        }
        q[n + j] = -1.0;
        let a = row
            .convex
            .as_ref()
            .filter(|a| !a.is_zero())
            .map(|a| lift_matrix(a, size));
        constraints.push(QuadraticConstraint { a, q, c: row.c - ct });
        rho.push(r);
        c_tilde.push(ct);
    }
    for j in 0..m {
        let mut q = vec![0.0; size];
        q[n + j] = -1.0;
        constraints.push(QuadraticConstraint::linear(q, 0.0));
    }
    Subproblem {
        prog: CanonicalProgram {
            dim: size,
            objective,
            constraints,
        },
        rho,
        c_tilde,
    }
}

fn solve_convex(prog: &CanonicalProgram) -> Result<ProgramSolution> {
    if !prog.is_linear() {
        solve_convex_qcqp(prog)
    } else if prog.objective.is_linear() {
        solve_lp(prog)
    } else {
        solve_qp(prog)
    }
}

/// Runs penalty CCP from `start`.
pub fn penalty_ccp(dc: &DcProgram, start: &[f64], opts: &CcpOptions) -> Result<CcpOutcome> {
    let n = dc.base.dim;
    if start.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: start.len(),
        });
    }
    let m = dc.dc_constraints.len();
    let n_base = dc.base.constraints.len();
    let combined = dc.combined();
    let mut z = start.to_vec();
    let mut tau = opts.tau0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut multipliers = vec![0.0; n_base + m];

    for k in 0..opts.max_iterations {
        let sub = convexify(dc, &z, tau);
        let sol = solve_convex(&sub.prog)?;
        iterations += sol.iterations;
        match sol.status {
            Status::Optimal => {}
            Status::Infeasible => return Ok(failed(Status::Infeasible, n, iterations, trace)),
            Status::Unbounded => return Ok(failed(Status::Unbounded, n, iterations, trace)),
            Status::MaxIterations => {
                return Err(Error::SubproblemFailure(format!(
                    "convex subproblem hit its iteration cap at outer step {k}"
                )))
            }
        }
        let before = dc.penalized(&z, tau);
        let candidate = sol.point[..n].to_vec();
        let after_candidate = dc.penalized(&candidate, tau);
        // Never accept a step that the subproblem solver's round-off made worse.
        let (next, after) = if after_candidate <= before {
            (candidate, after_candidate)
        } else {
            (z.clone(), before)
        };
        let slack = sol.point[n..].iter().fold(0.0f64, |a, &s| a.max(s));
        let moved = norm_inf(&crate::numerics::sub(&next, &z));
        trace.push(CcpIterate {
            k,
            point: z.clone(),
            rho: sub.rho,
            c_tilde: sub.c_tilde,
            tau,
            penalized_before: before,
            penalized_after: after,
        });
        if sol.multipliers.len() >= n_base + m {
            multipliers = sol.multipliers[..n_base + m].to_vec();
        }
        z = next;
        let violation = dc.max_violation(&z);
        if moved < opts.movement_tol && slack < opts.slack_tol && violation <= opts.slack_tol {
            let mut solution = combined.solution(Status::Optimal, z, multipliers, iterations);
            solution.iterations = k + 1;
            return Ok(CcpOutcome { solution, trace });
        }
        tau = (tau * opts.tau_growth).min(opts.tau_max);
    }
    let mut solution = combined.solution(Status::MaxIterations, z, multipliers, iterations);
    solution.iterations = opts.max_iterations;
    Ok(CcpOutcome { solution, trace })
}

fn failed(status: Status, n: usize, iterations: usize, trace: Vec<CcpIterate>) -> CcpOutcome {
    CcpOutcome {
        solution: ProgramSolution::failed(status, n, iterations),
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `min x² s.t. 1 - x² ≤ 0`
    fn outside_unit() -> DcProgram {
        let base = CanonicalProgram::new(
            Objective::quadratic(DenseMatrix::identity(1).scale(2.0), vec![0.0], 0.0),
            vec![],
        )
        .unwrap();
        DcProgram::new(
            base,
            vec![DcConstraint {
                convex: None,
                concave: Some(DenseMatrix::identity(1).scale(2.0)),
                q: vec![0.0],
                c: 1.0,
            }],
        )
        .unwrap()
    }

    fn grid_minimizers_1d() -> Vec<f64> {
        let mut best = f64::INFINITY;
        let mut arg = Vec::new();
        for i in -3000..=3000 {
            let x = i as f64 * 1e-3;
            if 1.0 - x * x <= 0.0 {
                let v = x * x;
                if v < best - 1e-12 {
                    best = v;
                    arg = vec![x];
                } else if (v - best).abs() <= 1e-12 {
                    arg.push(x);
                }
            }
        }
        arg
    }

    fn check_trace(out: &CcpOutcome) {
        for it in &out.trace {
            assert!(it.penalized_after <= it.penalized_before + 1e-9, "{it:?}");
        }
    }

    #[test]
    fn positive_basin() {
        assert_eq!(grid_minimizers_1d(), vec![-1.0, 1.0]);
        let out = penalty_ccp(&outside_unit(), &[0.5], &CcpOptions::default()).unwrap();
        assert_eq!(out.solution.status, Status::Optimal);
        assert!((out.solution.point[0] - 1.0).abs() < 1e-4);
        assert!(out.solution.max_violation <= 1e-6);
        check_trace(&out);
    }

    #[test]
    fn negative_basin() {
        let out = penalty_ccp(&outside_unit(), &[-0.5], &CcpOptions::default()).unwrap();
        assert!((out.solution.point[0] + 1.0).abs() < 1e-4);
        check_trace(&out);
    }

    #[test]
    fn fixed_point_start() {
        let out = penalty_ccp(&outside_unit(), &[1.0], &CcpOptions::default()).unwrap();
        assert_eq!(out.solution.status, Status::Optimal);
        assert_eq!(out.trace.len(), 1);
        assert!((out.solution.point[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_concave_part_converges_in_one_step() {
        // Linear DC row x ≥ 0.5; its multiplier 0.5 is below τ₀ = 1, so the
        // first penalised subproblem is already exact.
        let base = CanonicalProgram::new(
            Objective::quadratic(DenseMatrix::identity(1), vec![0.0], 0.0),
            vec![],
        )
        .unwrap();
        let dc = DcProgram::new(
            base,
            vec![DcConstraint {
                convex: None,
                concave: None,
                q: vec![-1.0],
                c: 0.5,
            }],
        )
        .unwrap();
        let out = penalty_ccp(&dc, &[0.5], &CcpOptions::default()).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert!((out.solution.point[0] - 0.5).abs() < 1e-9);
        assert!((out.solution.multipliers[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn quadratic_convex_part() {
        // min (x-3)² + y² s.t. x² + y² ≤ 1 ... as a DC row with only a convex part.
        let base = CanonicalProgram::new(
            Objective::quadratic(DenseMatrix::identity(2).scale(2.0), vec![-6.0, 0.0], 9.0),
            vec![],
        )
        .unwrap();
        let dc = DcProgram::new(
            base,
            vec![DcConstraint {
                convex: Some(DenseMatrix::identity(2).scale(2.0)),
                concave: None,
                q: vec![0.0, 0.0],
                c: -1.0,
            }],
        )
        .unwrap();
        let out = penalty_ccp(&dc, &[0.0, 0.0], &CcpOptions::default()).unwrap();
        assert_eq!(out.solution.status, Status::Optimal);
        assert!((out.solution.point[0] - 1.0).abs() < 1e-5);
        assert!(out.solution.point[1].abs() < 1e-5);
        check_trace(&out);
    }
}
