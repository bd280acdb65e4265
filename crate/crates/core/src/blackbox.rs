//! Model-agnostic fallback: minimise `ℓ(h(x'), y′) + C·θ(x', x)` with the downhill simplex.
//!
//! A 0–1 loss is flat almost everywhere, so each start escalates a penalty on
//! the distance to validity (decision margin or tolerance band) until the
//! simplex lands on a valid point. The cheapest valid point evaluated wins.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::engine::{target_value, CounterfactualQuery, CounterfactualReport, Diagnostics, Method};
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::solvers::{downhill_simplex, SimplexOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlackboxOptions {
    /// Total starts: `x` itself plus `restarts - 1` perturbed copies.
    pub restarts: usize,
    /// Standard deviation of the start perturbation.
    pub sigma: f64,
    /// Weight of the distance term.
    pub c: f64,
    pub seed: u64,
}

impl Default for BlackboxOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            sigma: 1.0,
            c: 1.0,
            seed: 0,
        }
    }
}

const PENALTY_LEVELS: [f64; 7] = [1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6];

struct Objective<'a> {
    model: &'a ModelSpec,
    query: &'a CounterfactualQuery,
}

impl Objective<'_> {
    /// `(ℓ, shortfall)`: the counterfactual loss and how far `p` is from validity.
    fn loss(&self, p: &[f64]) -> (f64, f64) {
        let q = self.query;
        let Ok(pred) = self.model.predict(p) else {
            return (f64::INFINITY, f64::INFINITY);
        };
        if self.model.is_regression() {
            let y = target_value(&q.target).unwrap_or(f64::NAN);
            let v = pred.value().unwrap_or(f64::NAN);
            let err = (v - y).abs();
            (err * err, (err - q.tolerance).max(0.0))
        } else {
            let wrong = if pred.label() == q.target.label() { 0.0 } else { 1.0 };
            let shortfall = match q.target.label().map(|l| self.model.decision_margin(p, l)) {
                Some(Ok(Some(m))) => (q.margin - m).max(0.0),
                _ => wrong,
            };
            (wrong, shortfall)
        }
    }

    /// Valid and, where the model has a decision margin, at least `ε_margin` inside.
    fn valid(&self, p: &[f64]) -> bool {
        self.query.is_valid(self.model, p) && self.loss(p).1 == 0.0
    }
}

/// Derivative-free counterfactual for any model.
pub fn blackbox_counterfactual(model: &ModelSpec, query: &CounterfactualQuery) -> Result<CounterfactualReport> {
    let opts = query.blackbox;
    if !(opts.c > 0.0 && opts.sigma >= 0.0) || opts.restarts == 0 {
        return Err(Error::InvalidQuery("blackbox options need C > 0, σ ≥ 0 and restarts ≥ 1".into()));
    }
    let obj = Objective { model, query };
    let x = &query.x;
    let theta = |p: &[f64]| query.regularizer.eval(x, p).unwrap_or(f64::INFINITY);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, opts.sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut starts = vec![x.clone()];
    for _ in 1..opts.restarts {
        starts.push(x.iter().map(|v| v + normal.sample(&mut rng)).collect());
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    for start in &starts {
        let mut point = start.clone();
        for mu in PENALTY_LEVELS {
            let mut seen: Option<(f64, Vec<f64>)> = None;
            let r = downhill_simplex(
                |p| {
                    let (l, short) = obj.loss(p);
                    let t = theta(p);
                    if obj.valid(p) && seen.as_ref().is_none_or(|(v, _)| t < *v) {
                        seen = Some((t, p.to_vec()));
                    }
                    opts.c * t + mu * (l + short)
                },
                &point,
                &SimplexOptions {
                    max_iterations: 4_000,
                    ..Default::default()
                },
            );
            iterations += r.iterations;
            point = r.point;
            if let Some((t, p)) = seen {
                if best.as_ref().is_none_or(|(v, _)| t < *v) {
                    best = Some((t, p));
                }
            }
            if obj.valid(&point) {
                break;
            }
        }
    }
    let Some((_, point)) = best else {
        return Err(Error::NotFound("no restart reached the requested prediction".into()));
    };
    let diagnostics = Diagnostics {
        iterations,
        candidates: Some(starts.len()),
        ..Default::default()
    };
    CounterfactualReport::finish(model, query, point, Method::Blackbox, diagnostics)
}
