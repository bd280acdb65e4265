//! Solvers for the program classes the engine emits.
//!
//! Every constraint is stored in the canonical form `½ zᵀAz + qᵀz + c ≤ 0`;
//! linear rows simply omit `A`.

mod ccp;
mod dual_qcqp;
mod lp;
mod nelder_mead;
mod qcqp;
mod qp;

use crate::error::{Error, Result};
use crate::numerics::{dot, norm_inf, sym_eigen, DenseMatrix};

pub use ccp::{penalty_ccp, CcpIterate, CcpOptions, CcpOutcome, DcConstraint, DcProgram};
pub use dual_qcqp::{solve_single_qcqp_dual, DualQcqpSolution, SingleQuadraticConstraint};
pub use lp::solve_lp;
pub use nelder_mead::{downhill_simplex, SimplexOptions, SimplexResult};
pub use qcqp::{solve_convex_qcqp, solve_convex_qcqp_from, BarrierOptions};
pub use qp::solve_qp;

/// Eigenvalue floor below which a matrix no longer counts as positive semi-definite.
pub const PSD_EIGEN_FLOOR: f64 = -1e-8;

/// `qᵀz + c ≤ 0`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub q: Vec<f64>,
    pub c: f64,
}

impl LinearConstraint {
    pub fn new(q: Vec<f64>, c: f64) -> Self {
        Self { q, c }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        dot(&self.q, z) + self.c
    }
}

/// `½ zᵀAz + qᵀz + c ≤ 0`; `a = None` means the row is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraint {
    pub a: Option<DenseMatrix>,
    pub q: Vec<f64>,
    pub c: f64,
}

impl QuadraticConstraint {
    pub fn linear(q: Vec<f64>, c: f64) -> Self {
        Self { a: None, q, c }
    }

    pub fn quadratic(a: DenseMatrix, q: Vec<f64>, c: f64) -> Self {
        Self { a: Some(a), q, c }
    }

    pub fn is_linear(&self) -> bool {
        self.a.as_ref().is_none_or(DenseMatrix::is_zero)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let quad = self.a.as_ref().map_or(0.0, |a| 0.5 * a.quad_form(z));
        quad + dot(&self.q, z) + self.c
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        match &self.a {
            Some(a) => a.matvec(z).iter().zip(&self.q).map(|(x, y)| x + y).collect(),
            None => self.q.clone(),
        }
    }
}

impl From<LinearConstraint> for QuadraticConstraint {
    fn from(l: LinearConstraint) -> Self {
        QuadraticConstraint::linear(l.q, l.c)
    }
}

/// `½ zᵀPz + pᵀz + constant`
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub hessian: Option<DenseMatrix>,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl Objective {
    pub fn linear(linear: Vec<f64>) -> Self {
        Self {
            hessian: None,
            linear,
            constant: 0.0,
        }
    }

    pub fn quadratic(hessian: DenseMatrix, linear: Vec<f64>, constant: f64) -> Self {
        Self {
            hessian: Some(hessian),
            linear,
            constant,
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let quad = self.hessian.as_ref().map_or(0.0, |h| 0.5 * h.quad_form(z));
        quad + dot(&self.linear, z) + self.constant
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        match &self.hessian {
            Some(h) => h.matvec(z).iter().zip(&self.linear).map(|(x, y)| x + y).collect(),
            None => self.linear.clone(),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.hessian.as_ref().is_none_or(DenseMatrix::is_zero)
    }
}

/// Objective plus a conjunction of canonical constraints over `z ∈ ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalProgram {
    pub dim: usize,
    pub objective: Objective,
    pub constraints: Vec<QuadraticConstraint>,
}

impl CanonicalProgram {
    pub fn new(objective: Objective, constraints: Vec<QuadraticConstraint>) -> Result<Self> {
        let dim = objective.linear.len();
        let check = |n: usize| {
            if n == dim {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: dim,
                    found: n,
                })
            }
        };
        if let Some(h) = &objective.hessian {
            check(h.rows())?;
            check(h.cols())?;
        }
        for c in &constraints {
            check(c.q.len())?;
            if let Some(a) = &c.a {
                check(a.rows())?;
                check(a.cols())?;
            }
        }
        Ok(Self {
            dim,
            objective,
            constraints,
        })
    }

    pub fn max_violation(&self, z: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.eval(z))
            .fold(0.0, f64::max)
    }

    pub fn is_linear(&self) -> bool {
        self.constraints.iter().all(QuadraticConstraint::is_linear)
    }

    /// `‖∇f₀ + Σ μ_i ∇f_i‖∞`
    pub fn stationarity(&self, z: &[f64], multipliers: &[f64]) -> f64 {
        let mut g = self.objective.gradient(z);
        for (c, mu) in self.constraints.iter().zip(multipliers) {
            if *mu != 0.0 {
                for (gi, di) in g.iter_mut().zip(c.gradient(z)) {
                    *gi += mu * di;
                }
            }
        }
        norm_inf(&g)
    }

    /// `max_i |μ_i f_i(z)|`
    pub fn complementarity(&self, z: &[f64], multipliers: &[f64]) -> f64 {
        self.constraints
            .iter()
            .zip(multipliers)
            .map(|(c, mu)| (mu * c.eval(z)).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_psd(&self) -> Result<()> {
        let psd = |m: &DenseMatrix, what: &str| -> Result<()> {
            if m.is_zero() {
                return Ok(());
            }
            let e = sym_eigen(m)?;
            if e.min_eigenvalue() < PSD_EIGEN_FLOOR * (1.0 + m.max_abs()) {
                return Err(Error::InvalidQuery(format!("{what} is not positive semi-definite")));
            }
            Ok(())
        };
        if let Some(h) = &self.objective.hessian {
            psd(h, "objective hessian")?;
        }
        for c in &self.constraints {
            if let Some(a) = &c.a {
                psd(a, "constraint matrix")?;
            }
        }
        Ok(())
    }

    pub(crate) fn solution(
        &self,
        status: Status,
        point: Vec<f64>,
        multipliers: Vec<f64>,
        iterations: usize,
    ) -> ProgramSolution {
        ProgramSolution {
            status,
            objective: self.objective.eval(&point),
            max_violation: self.max_violation(&point),
            stationarity: self.stationarity(&point, &multipliers),
            complementarity: self.complementarity(&point, &multipliers),
            duality_gap: None,
            iterations,
            multipliers,
            point,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// Solver output with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramSolution {
    pub status: Status,
    pub point: Vec<f64>,
    pub objective: f64,
    /// Lagrange multipliers, one per constraint.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub max_violation: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub duality_gap: Option<f64>,
}

impl ProgramSolution {
    pub(crate) fn failed(status: Status, dim: usize, iterations: usize) -> Self {
        ProgramSolution {
            status,
            point: vec![f64::NAN; dim],
            objective: f64::NAN,
            multipliers: Vec::new(),
            iterations,
            max_violation: f64::NAN,
            stationarity: f64::NAN,
            complementarity: f64::NAN,
            duality_gap: None,
        }
    }

    /// Converts non-optimal statuses into errors.
    pub fn into_optimal(self) -> Result<ProgramSolution> {
        match self.status {
            Status::Optimal => Ok(self),
            Status::Infeasible => Err(Error::Infeasible),
            Status::Unbounded => Err(Error::Unbounded),
            Status::MaxIterations => Err(Error::SubproblemFailure(format!(
                "iteration cap reached after {} iterations",
                self.iterations
            ))),
        }
    }
}

/// Converts a program with only linear rows into `(G, h)` with `G z ≤ h`.
pub(crate) fn linear_rows(prog: &CanonicalProgram) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut g = Vec::with_capacity(prog.constraints.len());
    let mut h = Vec::with_capacity(prog.constraints.len());
    for c in &prog.constraints {
        if !c.is_linear() {
            return Err(Error::InvalidQuery("expected only linear constraints".into()));
        }
        g.push(c.q.clone());
        h.push(-c.c);
    }
    Ok((g, h))
}

#[cfg(test)]
pub(crate) mod test_support {
    /// Brute-force minimum of `objective` over feasible points of a 2-D grid.
    pub fn grid_min_2d(
        lo: f64,
        hi: f64,
        step: f64,
        objective: impl Fn(&[f64]) -> f64,
        feasible: impl Fn(&[f64]) -> bool,
    ) -> (f64, [f64; 2]) {
        let n = ((hi - lo) / step).round() as i64;
        let mut best = (f64::INFINITY, [f64::NAN; 2]);
        for i in 0..=n {
            for j in 0..=n {
                let p = [lo + i as f64 * step, lo + j as f64 * step];
                if feasible(&p) {
                    let v = objective(&p);
                    if v < best.0 {
                        best = (v, p);
                    }
                }
            }
        }
        best
    }
}
