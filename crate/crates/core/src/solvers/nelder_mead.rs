//! Derivative-free downhill simplex (Nelder-Mead).

use crate::numerics::norm_inf;

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop when every vertex is within this distance (∞-norm) of the best one.
    pub diameter_tol: f64,
    /// Stop when `f_worst - f_best` falls below this.
    pub spread_tol: f64,
    /// Absolute edge length of the start simplex; `None` uses 5% of each
    /// coordinate (0.00025 for zero coordinates).
    pub initial_step: Option<f64>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            diameter_tol: 1e-8,
            spread_tol: 1e-10,
            initial_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when the iteration cap was hit.
    pub converged: bool,
}

/// Minimises `f` starting from `start`. Non-finite values are treated as `+∞`.
pub fn downhill_simplex(mut f: impl FnMut(&[f64]) -> f64, start: &[f64], opts: &SimplexOptions) -> SimplexResult {
    let n = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let value = eval(start);
        return SimplexResult {
            point: Vec::new(),
            value,
            iterations: 0,
            evaluations: 1,
            converged: true,
        };
    }

    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += match opts.initial_step {
            Some(h) => h,
            None if v[i] != 0.0 => 0.05 * v[i],
            None => 0.00025,
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Stable sort keeps the earlier (start-side) vertex first on ties.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| norm_inf(&crate::numerics::sub(v, &simplex[0])))
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        let spread = values[n] - values[0];
        if spread.abs() < opts.spread_tol {
            // Vertices can tie while straddling a minimum; confirm on the centroid.
            let mid: Vec<f64> = (0..n)
                .map(|k| simplex.iter().map(|v| v[k]).sum::<f64>() / (n + 1) as f64)
                .collect();
            let fm = eval(&mid);
            if (fm - values[0]).abs() < opts.spread_tol {
                converged = true;
                break;
            }
            if fm < values[n] {
                simplex[n] = mid;
                values[n] = fm;
                iterations += 1;
                continue;
            }
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for k in 0..n {
                centroid[k] += v[k] / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|k| centroid[k] + t * (simplex[n][k] - centroid[k]))
                .collect()
        };

        let xr = along(-alpha);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(-alpha * gamma);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-alpha * rho);
            let fc = eval(&xc);
            (xc, if fc <= fr { fc } else { f64::INFINITY })
        } else {
            let xc = along(rho);
            let fc = eval(&xc);
            (xc, if fc < values[n] { fc } else { f64::INFINITY })
        };
        if fc.is_finite() {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = (0..n)
                .map(|k| simplex[0][k] + sigma * (simplex[i][k] - simplex[0][k]))
                .collect();
            values[i] = eval(&shrunk);
            simplex[i] = shrunk;
        }
    }
    SimplexResult {
        point: simplex.swap_remove(0),
        value: values[0],
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola() {
        let r = downhill_simplex(|x| (x[0] - 1.0).powi(2), &[0.0], &SimplexOptions::default());
        assert!(r.converged);
        assert!((r.point[0] - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = downhill_simplex(f, &[-1.2, 1.0], &SimplexOptions::default());
        assert!((r.point[0] - 1.0).abs() < 1e-4 && (r.point[1] - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn constant_returns_start() {
        let r = downhill_simplex(|_| 3.0, &[0.7, -2.0], &SimplexOptions::default());
        assert!(r.converged);
        assert_eq!(r.point, vec![0.7, -2.0]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn cap_is_flagged() {
        let opts = SimplexOptions {
            max_iterations: 3,
            ..Default::default()
        };
        let r = downhill_simplex(|x| (x[0] - 100.0).powi(2), &[0.0], &opts);
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }
}
