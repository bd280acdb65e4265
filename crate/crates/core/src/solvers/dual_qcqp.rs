//! `min ½‖z - x‖² s.t. ½zᵀAz + bᵀz + r ≤ 0` with indefinite `A`, solved globally
//! through its one-dimensional dual.
//!
//! Stationarity gives `(I + λA) z = x - λb`. In the eigenbasis of `A` every
//! coordinate is `z̃_i = (x̃_i - λ b̃_i) / (1 + λ λ_i)`, and the constraint value
//! `φ(λ)` along this curve is decreasing on `[0, λ_up)`, `λ_up = -1/λ_min`.

use super::{CanonicalProgram, Objective, ProgramSolution, QuadraticConstraint, Status};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm_inf, sym_eigen, DenseMatrix, SymEigen, SYMMETRY_TOL};

const BISECTION_STEPS: usize = 300;
const BRACKET_LIMIT: f64 = 1e15;

#[derive(Debug, Clone, PartialEq)]
pub struct SingleQuadraticConstraint {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub r: f64,
}

impl SingleQuadraticConstraint {
    pub fn eval(&self, z: &[f64]) -> f64 {
        0.5 * self.a.quad_form(z) + dot(&self.b, z) + self.r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualQcqpSolution {
    pub solution: ProgramSolution,
    pub lambda: f64,
    /// The stationarity system was singular at the optimal multiplier.
    pub hard_case: bool,
}

struct Secular<'a> {
    eig: &'a SymEigen,
    xt: Vec<f64>,
    bt: Vec<f64>,
    r: f64,
}

impl Secular<'_> {
    fn point(&self, lambda: f64) -> Vec<f64> {
        (0..self.xt.len())
            .map(|i| (self.xt[i] - lambda * self.bt[i]) / (1.0 + lambda * self.eig.eigenvalues[i]))
            .collect()
    }

    fn constraint(&self, zt: &[f64]) -> f64 {
        (0..zt.len())
            .map(|i| 0.5 * self.eig.eigenvalues[i] * zt[i] * zt[i] + self.bt[i] * zt[i])
            .sum::<f64>()
            + self.r
    }

    fn phi(&self, lambda: f64) -> f64 {
        self.constraint(&self.point(lambda))
    }

    fn to_original(&self, zt: &[f64]) -> Vec<f64> {
        let n = zt.len();
        let mut z = vec![0.0; n];
        for (i, &c) in zt.iter().enumerate() {
            let v = self.eig.eigenvector(i);
            for k in 0..n {
                z[k] += c * v[k];
            }
        }
        z
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // f(lo) > 0 ≥ f(hi)
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Global optimum of the single-constraint problem projected from `x`.
pub fn solve_single_qcqp_dual(x: &[f64], constraint: &SingleQuadraticConstraint) -> Result<DualQcqpSolution> {
    let n = x.len();
    if constraint.b.len() != n || constraint.a.rows() != n || constraint.a.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: constraint.b.len(),
        });
    }
    if !constraint.a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let prog = CanonicalProgram::new(
        Objective::quadratic(DenseMatrix::identity(n), x.iter().map(|v| -v).collect(), 0.5 * dot(x, x)),
        vec![QuadraticConstraint::quadratic(
            constraint.a.clone(),
            constraint.b.clone(),
            constraint.r,
        )],
    )?;
    let finish = |z: Vec<f64>, lambda: f64, hard_case: bool| {
        let mut solution = prog.solution(Status::Optimal, z, vec![lambda], 1);
        solution.duality_gap = Some((-lambda * constraint.eval(&solution.point)).abs());
        DualQcqpSolution {
            solution,
            lambda,
            hard_case,
        }
    };

    if constraint.eval(x) <= 0.0 {
        return Ok(finish(x.to_vec(), 0.0, false));
    }

    let eig = sym_eigen(&constraint.a.symmetrized())?;
    let vt = |v: &[f64]| (0..n).map(|i| dot(&eig.eigenvector(i), v)).collect::<Vec<f64>>();
    let sec = Secular {
        eig: &eig,
        xt: vt(x),
        bt: vt(&constraint.b),
        r: constraint.r,
    };
    let lmin = eig.min_eigenvalue();
    let scale = 1.0 + constraint.a.max_abs();

    if lmin >= -1e-14 * scale {
        // Convex case: λ unbounded above.
        let mut hi = 1.0;
        while sec.phi(hi) > 0.0 {
            hi *= 2.0;
            if hi > BRACKET_LIMIT {
                return Ok(DualQcqpSolution {
                    solution: ProgramSolution::failed(Status::Infeasible, n, 0),
                    lambda: f64::NAN,
                    hard_case: false,
                });
            }
        }
        let lambda = bisect(|l| sec.phi(l), 0.0, hi);
        return Ok(finish(sec.to_original(&sec.point(lambda)), lambda, false));
    }

    let lambda_up = -1.0 / lmin;
    let min_idx: Vec<usize> = (0..n)
        .filter(|&i| (eig.eigenvalues[i] - lmin).abs() <= 1e-10 * scale)
        .collect();
    let vec_scale = 1.0 + norm_inf(x) + lambda_up * norm_inf(&constraint.b);
    let degenerate = min_idx
        .iter()
        .all(|&i| (sec.xt[i] - lambda_up * sec.bt[i]).abs() <= 1e-12 * vec_scale);

    // Limit of φ at λ_up with the minimal-eigenvalue coordinates removed.
    let mut zp = vec![0.0; n];
    for i in 0..n {
        if !min_idx.contains(&i) {
            zp[i] = (sec.xt[i] - lambda_up * sec.bt[i]) / (1.0 + lambda_up * eig.eigenvalues[i]);
        }
    }
    let phi_lim = sec.constraint(&zp);

    if !degenerate || phi_lim <= 0.0 {
        // Root strictly inside [0, λ_up): φ → -∞ at λ_up or φ(λ_up) ≤ 0.
        let mut hi = lambda_up;
        let mut shrink = 1e-12;
        while !(sec.phi(hi) <= 0.0 && sec.phi(hi).is_finite()) {
            hi = lambda_up * (1.0 - shrink);
            shrink *= 10.0;
            if shrink > 1.0 {
                return Err(Error::SubproblemFailure("secular equation bracket not found".into()));
            }
        }
        let lambda = bisect(|l| sec.phi(l), 0.0, hi);
        return Ok(finish(sec.to_original(&sec.point(lambda)), lambda, false));
    }

    // Hard case: λ = λ_up, move along the first minimal eigenvector until the
    // constraint is active. `φ_lim + b̃_v t + ½ λ_min t² = 0` has roots of opposite sign.
    let v = min_idx[0];
    let (a2, b1, c0) = (0.5 * lmin, sec.bt[v], phi_lim);
    let disc = (b1 * b1 - 4.0 * a2 * c0).max(0.0).sqrt();
    let roots = [(-b1 + disc) / (2.0 * a2), (-b1 - disc) / (2.0 * a2)];
    let target = sec.xt[v];
    let dist = |t: f64| (t - target).abs();
    let t = if (dist(roots[0]) - dist(roots[1])).abs() <= 1e-12 * (1.0 + target.abs()) {
        roots[0].max(roots[1])
    } else if dist(roots[0]) < dist(roots[1]) {
        roots[0]
    } else {
        roots[1]
    };
    let mut zt = zp;
    zt[v] = t;
    Ok(finish(sec.to_original(&zt), lambda_up, true))
}
