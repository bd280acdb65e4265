//! Primal active-set method for convex quadratic programs with linear constraints.
//!
//! A feasible vertex from the simplex phase 1 seeds the working set. Positive
//! semi-definite (singular) Hessians are handled by an outer proximal-point
//! loop, so each inner problem has a positive-definite Hessian.

use super::{linear_rows, solve_lp, CanonicalProgram, Objective, ProgramSolution, Status};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm_inf, solve_general, sym_eigen, DenseMatrix};

const MAX_ACTIVE_SET_ITERS: usize = 10_000;
const MAX_PROXIMAL_ITERS: usize = 2_000;
const ACTIVE_TOL: f64 = 1e-10;
const DIVERGENCE_NORM: f64 = 1e12;

struct InnerResult {
    status: Status,
    x: Vec<f64>,
    multipliers: Vec<f64>,
    iterations: usize,
}

/// `min ½xᵀQx + pᵀx s.t. Gx ≤ h` with positive-definite `Q`, from feasible `x0`.
fn active_set(
    q: &DenseMatrix,
    p: &[f64],
    g: &[Vec<f64>],
    h: &[f64],
    x0: Vec<f64>,
) -> InnerResult {
    let n = p.len();
    let m = g.len();
    let mut x = x0;
    let mut working: Vec<usize> = Vec::new();

    // Seed with linearly independent active rows (Gram-Schmidt on the normals).
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        let slack = h[i] - dot(&g[i], &x);
        if slack.abs() > ACTIVE_TOL * (1.0 + h[i].abs()) || basis.len() == n {
            continue;
        }
        let mut v = g[i].clone();
        for b in &basis {
            let proj = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= proj * bi);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-9 * (1.0 + dot(&g[i], &g[i]).sqrt()) {
            basis.push(v.iter().map(|vi| vi / norm).collect());
            working.push(i);
        }
    }

    for iter in 0..MAX_ACTIVE_SET_ITERS {
        let k = working.len();
        let size = n + k;
        let mut kkt = DenseMatrix::zeros(size, size);
        for r in 0..n {
            for c in 0..n {
                kkt[(r, c)] = q[(r, c)];
            }
        }
        for (w, &i) in working.iter().enumerate() {
            for c in 0..n {
                kkt[(n + w, c)] = g[i][c];
                kkt[(c, n + w)] = g[i][c];
            }
        }
        let grad: Vec<f64> = q.matvec(&x).iter().zip(p).map(|(a, b)| a + b).collect();
        let mut rhs = vec![0.0; size];
        for r in 0..n {
            rhs[r] = -grad[r];
        }
        let Some(sol) = solve_general(&kkt, &rhs) else {
            // Dependent working set; drop the newest row and retry.
            working.pop();
            continue;
        };
        let d = &sol[..n];
        let mu = &sol[n..];
        let dscale = 1.0 + norm_inf(&x);
        if norm_inf(d) <= 1e-12 * dscale {
            let worst = mu
                .iter()
                .enumerate()
                .filter(|(_, &v)| v < -1e-12 * (1.0 + norm_inf(&grad)))
                .min_by(|a, b| a.1.total_cmp(b.1));
            match worst {
                None => {
                    let mut multipliers = vec![0.0; m];
                    for (w, &i) in working.iter().enumerate() {
                        multipliers[i] = mu[w].max(0.0);
                    }
                    return InnerResult {
                        status: Status::Optimal,
                        x,
                        multipliers,
                        iterations: iter + 1,
                    };
                }
                Some((w, _)) => {
                    working.remove(w);
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let gd = dot(&g[i], d);
            if gd > 1e-14 * (1.0 + norm_inf(&g[i]) * norm_inf(d)) {
                let step = ((h[i] - dot(&g[i], &x)) / gd).max(0.0);
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        x.iter_mut().zip(d).for_each(|(xi, di)| *xi += alpha * di);
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    InnerResult {
        status: Status::MaxIterations,
        multipliers: vec![0.0; m],
        x,
        iterations: MAX_ACTIVE_SET_ITERS,
    }
}

/// Solves a convex QP (positive semi-definite objective, linear constraints).
pub fn solve_qp(prog: &CanonicalProgram) -> Result<ProgramSolution> {
    let (g, h) = linear_rows(prog)?;
    let n = prog.dim;
    let q = prog
        .objective
        .hessian
        .clone()
        .unwrap_or_else(|| DenseMatrix::zeros(n, n));
    if !q.is_symmetric(crate::numerics::SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let q = q.symmetrized();
    let min_eig = if q.is_zero() { 0.0 } else { sym_eigen(&q)?.min_eigenvalue() };
    let qscale = 1.0 + q.max_abs();
    if min_eig < super::PSD_EIGEN_FLOOR * qscale {
        return Err(Error::InvalidQuery("QP hessian is not positive semi-definite".into()));
    }

    // Feasible starting vertex.
    let phase1 = CanonicalProgram {
        dim: n,
        objective: Objective::linear(vec![0.0; n]),
        constraints: prog.constraints.clone(),
    };
    let start = solve_lp(&phase1)?;
    match start.status {
        Status::Optimal => {}
        Status::Infeasible => return Ok(ProgramSolution::failed(Status::Infeasible, n, start.iterations)),
        other => return Ok(ProgramSolution::failed(other, n, start.iterations)),
    }
    let p = &prog.objective.linear;

    if min_eig > 1e-10 * qscale {
        let r = active_set(&q, p, &g, &h, start.point);
        return Ok(prog.solution(r.status, r.x, r.multipliers, r.iterations + start.iterations));
    }

    // Proximal point: x_{k+1} = argmin ½xᵀQx + pᵀx + (ρ/2)‖x - x_k‖².
    let rho = qscale;
    let q_prox = q.add(&DenseMatrix::identity(n).scale(rho));
    let mut x = start.point;
    let mut iterations = start.iterations;
    for _ in 0..MAX_PROXIMAL_ITERS {
        let shifted: Vec<f64> = p.iter().zip(&x).map(|(pi, xi)| pi - rho * xi).collect();
        let r = active_set(&q_prox, &shifted, &g, &h, x.clone());
        iterations += r.iterations;
        if r.status != Status::Optimal {
            return Ok(prog.solution(r.status, r.x, r.multipliers, iterations));
        }
        let moved = norm_inf(&crate::numerics::sub(&r.x, &x));
        if norm_inf(&r.x) > DIVERGENCE_NORM {
            return Ok(ProgramSolution::failed(Status::Unbounded, n, iterations));
        }
        x = r.x;
        if moved <= 1e-12 * (1.0 + norm_inf(&x)) {
            return Ok(prog.solution(Status::Optimal, x, r.multipliers, iterations));
        }
    }
    let m = g.len();
    Ok(prog.solution(Status::MaxIterations, x, vec![0.0; m], iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::QuadraticConstraint;

    fn half_norm_sq(center: &[f64]) -> Objective {
        let n = center.len();
        Objective::quadratic(
            DenseMatrix::identity(n),
            center.iter().map(|c| -c).collect(),
            0.5 * dot(center, center),
        )
    }

    #[test]
    fn projection_onto_half_space() {
        let prog = CanonicalProgram::new(
            half_norm_sq(&[2.0, 0.0]),
            vec![QuadraticConstraint::linear(vec![1.0, 0.0], -1.0)],
        )
        .unwrap();
        let s = solve_qp(&prog).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] - 1.0).abs() < 1e-12 && s.point[1].abs() < 1e-12);
        assert!(s.stationarity < 1e-12 && s.complementarity < 1e-12);
        assert!((s.multipliers[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_minimum() {
        let prog = CanonicalProgram::new(
            Objective::quadratic(DenseMatrix::identity(2), vec![-1.0, -2.0], 0.0),
            vec![],
        )
        .unwrap();
        let s = solve_qp(&prog).unwrap();
        assert!((s.point[0] - 1.0).abs() < 1e-12 && (s.point[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn min_norm_on_sum_constraint() {
        // KKT by hand: x = μ/2·(1,1)... with ½‖x‖², x = μ(1,1), 2μ = 2, μ = 1.
        let prog = CanonicalProgram::new(
            half_norm_sq(&[0.0, 0.0]),
            vec![QuadraticConstraint::linear(vec![-1.0, -1.0], 2.0)],
        )
        .unwrap();
        let s = solve_qp(&prog).unwrap();
        assert!((s.point[0] - 1.0).abs() < 1e-12 && (s.point[1] - 1.0).abs() < 1e-12);
        assert!((s.multipliers[0] - 1.0).abs() < 1e-12);
        assert!(s.stationarity <= 1e-12 && s.max_violation <= 1e-12);
    }

    #[test]
    fn singular_hessian_uses_proximal_loop() {
        // min ½x₁² + x₂ s.t. x₂ ≥ 1, x₁ ≥ 2.
        let prog = CanonicalProgram::new(
            Objective::quadratic(DenseMatrix::from_diagonal(&[1.0, 0.0]), vec![0.0, 1.0], 0.0),
            vec![
                QuadraticConstraint::linear(vec![0.0, -1.0], 1.0),
                QuadraticConstraint::linear(vec![-1.0, 0.0], 2.0),
            ],
        )
        .unwrap();
        let s = solve_qp(&prog).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] - 2.0).abs() < 1e-9 && (s.point[1] - 1.0).abs() < 1e-9);
        assert!(s.stationarity < 1e-6);
    }

    #[test]
    fn infeasible_qp() {
        let prog = CanonicalProgram::new(
            half_norm_sq(&[0.0]),
            vec![
                QuadraticConstraint::linear(vec![1.0], 0.0),
                QuadraticConstraint::linear(vec![-1.0], 1.0),
            ],
        )
        .unwrap();
        assert_eq!(solve_qp(&prog).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn many_redundant_rows() {
        // x ≥ 1 repeated, plus x ≥ 0.5.
        let mut rows = vec![QuadraticConstraint::linear(vec![-1.0], 1.0); 4];
        rows.push(QuadraticConstraint::linear(vec![-1.0], 0.5));
        let prog = CanonicalProgram::new(half_norm_sq(&[0.0]), rows).unwrap();
        let s = solve_qp(&prog).unwrap();
        assert!((s.point[0] - 1.0).abs() < 1e-12);
        assert!(s.stationarity < 1e-12);
    }
}
