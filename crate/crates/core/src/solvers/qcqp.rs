//! Log-barrier method for convex QCQPs.
//!
//! Follows the central path of `t·f₀ - Σ log(-f_i)` with damped Newton steps,
//! raising `t` by `μ` per round. A slack phase finds a strictly feasible start
//! when the caller does not supply one.

use super::{CanonicalProgram, Objective, ProgramSolution, QuadraticConstraint, Status};
use crate::error::Result;
use crate::numerics::{dot, norm2, norm_inf, solve_general, Cholesky, DenseMatrix};

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Newton steps across all centering rounds.
    pub max_iterations: usize,
    /// Target for the duality gap `m / t`.
    pub gap_tol: f64,
    /// Centering multiplier.
    pub mu: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gap_tol: 1e-10,
            mu: 10.0,
        }
    }
}

const PHASE_RADIUS: f64 = 1e4;
/// The slack phase stops once every row holds with this much room (or at its optimum).
const PHASE_MARGIN: f64 = 0.1;
/// Newton steps per centering round; later rounds re-center anyway.
const ROUND_STEPS: usize = 50;

struct Outcome {
    status: Status,
    z: Vec<f64>,
    lambda: Vec<f64>,
    iterations: usize,
    gap: f64,
}

fn barrier_value(prog: &CanonicalProgram, z: &[f64], t: f64) -> f64 {
    let mut v = t * prog.objective.eval(z);
    for c in &prog.constraints {
        let f = c.eval(z);
        if f >= 0.0 {
            return f64::INFINITY;
        }
        v -= (-f).ln();
    }
    v
}

fn solve_newton(h: &DenseMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
    if let Ok(ch) = Cholesky::factor(h) {
        return Some(ch.solve(rhs));
    }
    if let Some(x) = solve_general(h, rhs) {
        return Some(x);
    }
    let n = h.rows();
    let ridge = 1e-10 * (1.0 + h.max_abs());
    solve_general(&h.add(&DenseMatrix::identity(n).scale(ridge)), rhs)
}

/// Damped Newton on `t·f₀(z) - Σ log(-f_i(z))`. Returns the Newton steps taken.
fn center(
    prog: &CanonicalProgram,
    z: &mut Vec<f64>,
    t: f64,
    budget: usize,
    stop_below: Option<(usize, f64)>,
) -> Option<usize> {
    let n = prog.dim;
    for step in 0..budget {
        if let Some((idx, level)) = stop_below {
            if z[idx] < level {
                return Some(step);
            }
        }
        let mut g: Vec<f64> = prog.objective.gradient(z).iter().map(|v| t * v).collect();
        let mut h = prog
            .objective
            .hessian
            .as_ref()
            .map_or_else(|| DenseMatrix::zeros(n, n), |q| q.scale(t));
        for c in &prog.constraints {
            let f = c.eval(z);
            let grad = c.gradient(z);
            if let Some(a) = &c.a {
                h = h.add(&a.scale(-1.0 / f));
            }
            for r in 0..n {
                g[r] -= grad[r] / f;
                if grad[r] == 0.0 {
                    continue;
                }
                for col in 0..n {
                    h[(r, col)] += grad[r] * grad[col] / (f * f);
                }
            }
        }
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let dz = solve_newton(&h.symmetrized(), &neg)?;
        let decrement = -dot(&g, &dz);
        if !decrement.is_finite() {
            return None;
        }
        let phi = barrier_value(prog, z, t);
        // Below this the Armijo test is decided by round-off in `phi`.
        if decrement <= 1e-9 + 1e-13 * phi.abs() {
            return Some(step);
        }
        let mut s = 1.0;
        loop {
            let zn: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + s * b).collect();
            let v = barrier_value(prog, &zn, t);
            if v <= phi - 0.01 * s * decrement {
                *z = zn;
                break;
            }
            s *= 0.5;
            if s < 1e-14 {
                // No representable progress left at this `t`.
                return Some(step + 1);
            }
        }
        if norm_inf(z) > 1e12 {
            return None;
        }
    }
    Some(budget)
}

fn stationarity(prog: &CanonicalProgram, z: &[f64], lambda: &[f64]) -> f64 {
    let mut r = prog.objective.gradient(z);
    for (c, l) in prog.constraints.iter().zip(lambda) {
        for (ri, gi) in r.iter_mut().zip(c.gradient(z)) {
            *ri += l * gi;
        }
    }
    norm_inf(&r)
}

/// Refits the multipliers of near-active rows by least squares on the
/// stationarity condition; `1 / (-t f_i)` loses digits when `f_i` is tiny.
fn polish(prog: &CanonicalProgram, z: &[f64], lambda: Vec<f64>) -> Vec<f64> {
    let f: Vec<f64> = prog.constraints.iter().map(|c| c.eval(z)).collect();
    let active: Vec<usize> = (0..f.len()).filter(|&i| f[i] > -1e-6).collect();
    if active.is_empty() {
        return lambda;
    }
    let mut rhs = prog.objective.gradient(z);
    for (i, c) in prog.constraints.iter().enumerate() {
        if !active.contains(&i) {
            for (r, g) in rhs.iter_mut().zip(c.gradient(z)) {
                *r += lambda[i] * g;
            }
        }
    }
    let grads: Vec<Vec<f64>> = active.iter().map(|&i| prog.constraints[i].gradient(z)).collect();
    let k = active.len();
    let mut normal = DenseMatrix::zeros(k, k);
    let mut b = vec![0.0; k];
    for a in 0..k {
        for c in 0..k {
            normal[(a, c)] = dot(&grads[a], &grads[c]);
        }
        normal[(a, a)] += 1e-14 * (1.0 + dot(&grads[a], &grads[a]));
        b[a] = -dot(&grads[a], &rhs);
    }
    let Some(fit) = solve_newton(&normal, &b) else {
        return lambda;
    };
    if fit.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return lambda;
    }
    let mut refined = lambda.clone();
    for (&i, v) in active.iter().zip(fit) {
        refined[i] = v;
    }
    if stationarity(prog, z, &refined) < stationarity(prog, z, &lambda) {
        refined
    } else {
        lambda
    }
}

/// Log-barrier path following from a strictly feasible `z0`.
fn barrier(prog: &CanonicalProgram, z0: Vec<f64>, opts: &BarrierOptions, stop_below: Option<(usize, f64)>) -> Outcome {
    let n = prog.dim;
    let m = prog.constraints.len();
    let mut z = z0;
    if m == 0 {
        // Unconstrained: a single Newton solve (objective is convex quadratic).
        let h = prog.objective.hessian.clone().unwrap_or_else(|| DenseMatrix::zeros(n, n));
        let g = prog.objective.gradient(&z);
        return match solve_newton(&h, &g.iter().map(|v| -v).collect::<Vec<_>>()) {
            Some(dz) if norm_inf(&dz).is_finite() && norm_inf(&dz) < 1e12 => {
                z.iter_mut().zip(&dz).for_each(|(zi, d)| *zi += d);
                let ok = norm_inf(&prog.objective.gradient(&z)) <= 1e-8 * (1.0 + norm_inf(&g));
                Outcome {
                    status: if ok { Status::Optimal } else { Status::Unbounded },
                    z,
                    lambda: Vec::new(),
                    iterations: 1,
                    gap: 0.0,
                }
            }
            _ => Outcome {
                status: Status::Unbounded,
                z,
                lambda: Vec::new(),
                iterations: 1,
                gap: f64::NAN,
            },
        };
    }

    let multipliers = |z: &[f64], t: f64| -> Vec<f64> {
        prog.constraints.iter().map(|c| 1.0 / (-t * c.eval(z))).collect()
    };
    let mut t = 1.0;
    let mut iterations = 0;
    loop {
        let budget = opts.max_iterations.saturating_sub(iterations).min(ROUND_STEPS);
        let Some(steps) = center(prog, &mut z, t, budget, stop_below) else {
            let status = if norm_inf(&z) > 1e12 { Status::Unbounded } else { Status::MaxIterations };
            return Outcome { status, lambda: multipliers(&z, t), z, iterations, gap: f64::NAN };
        };
        iterations += steps;
        let gap = m as f64 / t;
        let stopped = stop_below.is_some_and(|(idx, level)| z[idx] < level);
        if stopped || gap <= opts.gap_tol * (1.0 + prog.objective.eval(&z).abs()) {
            let lambda = polish(prog, &z, multipliers(&z, t));
            return Outcome { status: Status::Optimal, lambda, z, iterations, gap };
        }
        if iterations >= opts.max_iterations {
            return Outcome { status: Status::MaxIterations, lambda: multipliers(&z, t), z, iterations, gap };
        }
        t *= opts.mu;
    }
}

/// Finds a strictly feasible point via `min s s.t. f_i(z) ≤ s, s ≥ -1`.
fn slack_phase(prog: &CanonicalProgram, z0: &[f64], opts: &BarrierOptions) -> Option<(Vec<f64>, usize)> {
    let n = prog.dim;
    let worst = prog.constraints.iter().map(|c| c.eval(z0)).fold(f64::NEG_INFINITY, f64::max);
    let mut constraints: Vec<QuadraticConstraint> = prog
        .constraints
        .iter()
        .map(|c| {
            let a = c.a.as_ref().map(|a| {
                let mut big = DenseMatrix::zeros(n + 1, n + 1);
                for r in 0..n {
                    for col in 0..n {
                        big[(r, col)] = a[(r, col)];
                    }
                }
                big
            });
            let mut q = c.q.clone();
            q.push(-1.0);
            QuadraticConstraint { a, q, c: c.c }
        })
        .collect();
    let mut lower = vec![0.0; n + 1];
    lower[n] = -1.0;
    constraints.push(QuadraticConstraint::linear(lower, -1.0));
    // The slack problem is often unbounded in z; a wide ball keeps its barrier bounded below.
    let radius = PHASE_RADIUS * (1.0 + norm_inf(z0));
    let mut ball = DenseMatrix::zeros(n + 1, n + 1);
    let mut q = vec![0.0; n + 1];
    for i in 0..n {
        ball[(i, i)] = 2.0;
        q[i] = -2.0 * z0[i];
    }
    constraints.push(QuadraticConstraint { a: Some(ball), q, c: dot(z0, z0) - radius * radius });
    let mut cost = vec![0.0; n + 1];
    cost[n] = 1.0;
    let phase = CanonicalProgram {
        dim: n + 1,
        objective: Objective::linear(cost),
        constraints,
    };
    let mut start = z0.to_vec();
    start.push(worst.max(-0.5) + 1.0);
    let out = barrier(&phase, start, opts, Some((n, -PHASE_MARGIN)));
    let s = out.z[n];
    let z: Vec<f64> = out.z[..n].to_vec();
    if s < 0.0 && prog.constraints.iter().all(|c| c.eval(&z) < 0.0) {
        Some((z, out.iterations))
    } else {
        None
    }
}

/// Solves a convex QCQP, finding a strictly feasible start if needed.
pub fn solve_convex_qcqp(prog: &CanonicalProgram) -> Result<ProgramSolution> {
    solve_convex_qcqp_from(prog, &vec![0.0; prog.dim], &BarrierOptions::default())
}

/// Like [`solve_convex_qcqp`] with a starting point (used directly when strictly feasible).
pub fn solve_convex_qcqp_from(prog: &CanonicalProgram, start: &[f64], opts: &BarrierOptions) -> Result<ProgramSolution> {
    prog.check_psd()?;
    let strictly = prog.constraints.iter().all(|c| c.eval(start) < 0.0);
    let (z0, phase_iters) = if strictly {
        (start.to_vec(), 0)
    } else {
        match slack_phase(prog, start, opts) {
            Some(found) => found,
            None => return Ok(ProgramSolution::failed(Status::Infeasible, prog.dim, 0)),
        }
    };
    let out = barrier(prog, z0, opts, None);
    let mut sol = prog.solution(out.status, out.z, out.lambda, out.iterations + phase_iters);
    sol.duality_gap = Some(out.gap);
    if sol.status == Status::Optimal && norm2(&sol.point).is_nan() {
        sol.status = Status::MaxIterations;
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(center: &[f64], radius_sq: f64) -> QuadraticConstraint {
        // ‖z - c‖² ≤ r²  ⇔  ½ zᵀ(2I)z - 2cᵀz + ‖c‖² - r² ≤ 0
        let n = center.len();
        QuadraticConstraint::quadratic(
            DenseMatrix::identity(n).scale(2.0),
            center.iter().map(|c| -2.0 * c).collect(),
            dot(center, center) - radius_sq,
        )
    }

    fn norm_sq_objective(n: usize) -> Objective {
        Objective::quadratic(DenseMatrix::identity(n).scale(2.0), vec![0.0; n], 0.0)
    }

    #[test]
    fn nearest_point_of_disk() {
        let prog = CanonicalProgram::new(norm_sq_objective(2), vec![disk(&[2.0, 0.0], 1.0)]).unwrap();
        let s = solve_convex_qcqp(&prog).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] - 1.0).abs() < 1e-6 && s.point[1].abs() < 1e-6);
        assert!(s.duality_gap.unwrap() <= 1e-6);
        assert!(s.max_violation <= 1e-7);
    }

    #[test]
    fn interior_optimum() {
        let prog = CanonicalProgram::new(norm_sq_objective(2), vec![disk(&[0.0, 0.0], 4.0)]).unwrap();
        let s = solve_convex_qcqp(&prog).unwrap();
        assert!(s.point.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn supporting_point() {
        let prog = CanonicalProgram::new(Objective::linear(vec![1.0, 0.0]), vec![disk(&[0.0, 0.0], 1.0)]).unwrap();
        let s = solve_convex_qcqp(&prog).unwrap();
        assert!((s.point[0] + 1.0).abs() < 1e-6 && s.point[1].abs() < 1e-6);
        assert!(s.stationarity <= 1e-6);
    }

    #[test]
    fn disjoint_disks_infeasible() {
        let prog = CanonicalProgram::new(
            norm_sq_objective(2),
            vec![disk(&[0.0, 0.0], 1.0), disk(&[5.0, 0.0], 1.0)],
        )
        .unwrap();
        assert_eq!(solve_convex_qcqp(&prog).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn rejects_indefinite_rows() {
        let prog = CanonicalProgram::new(
            norm_sq_objective(2),
            vec![QuadraticConstraint::quadratic(DenseMatrix::from_diagonal(&[1.0, -1.0]), vec![0.0, 0.0], -1.0)],
        )
        .unwrap();
        assert!(solve_convex_qcqp(&prog).is_err());
    }

    #[test]
    fn linear_rows_match_lp() {
        let prog = CanonicalProgram::new(
            Objective::linear(vec![1.0, 1.0]),
            vec![
                QuadraticConstraint::linear(vec![-1.0, 0.0], 0.5),
                QuadraticConstraint::linear(vec![0.0, -1.0], 0.25),
            ],
        )
        .unwrap();
        let s = solve_convex_qcqp(&prog).unwrap();
        assert!((s.objective - 0.75).abs() < 1e-8);
    }
}
