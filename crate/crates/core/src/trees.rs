//! Exact counterfactuals for single trees and two heuristics for tree ensembles.

use crate::engine::{target_label, target_value, CounterfactualQuery, CounterfactualReport, Diagnostics, Method, TIE_TOL};
use crate::error::{Error, Result};
use crate::models::{EnsembleModel, ModelSpec, Prediction, TreeModel, TreeNode, TreeTask};
use crate::regularizers::Regularizer;
use crate::solvers::{downhill_simplex, SimplexOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `x_j ≤ t`
    Le,
    /// `x_j > t`
    Gt,
}

/// Which leaf predictions count as the requested one.
#[derive(Debug, Clone, PartialEq)]
pub enum Acceptance {
    Exactly(Prediction),
    Interval { lo: f64, hi: f64 },
}

impl Acceptance {
    pub fn accepts(&self, p: &Prediction) -> bool {
        match self {
            Acceptance::Exactly(t) => p == t,
            Acceptance::Interval { lo, hi } => p.value().is_some_and(|v| *lo <= v && v <= *hi),
        }
    }

    /// Classification targets are matched exactly, regression targets within `ε_tol`.
    pub fn for_query(task: TreeTask, query: &CounterfactualQuery) -> Result<Self> {
        Ok(match task {
            TreeTask::Classification => Acceptance::Exactly(Prediction::Label(target_label(&query.target)?.clone())),
            TreeTask::Regression => {
                let y = target_value(&query.target)?;
                Acceptance::Interval {
                    lo: y - query.tolerance,
                    hi: y + query.tolerance,
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathCondition {
    pub conditions: Vec<(usize, Relation, f64)>,
    pub prediction: Prediction,
}

impl PathCondition {
    /// Per-feature box `(lo, hi]`; `None` when the conditions contradict each other.
    pub fn bounds(&self, dim: usize) -> Option<Vec<(f64, f64)>> {
        let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); dim];
        for &(j, rel, t) in &self.conditions {
            match rel {
                Relation::Le => b[j].1 = b[j].1.min(t),
                Relation::Gt => b[j].0 = b[j].0.max(t),
            }
        }
        b.iter().all(|(lo, hi)| lo < hi).then_some(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxChange {
    /// New value per feature, `None` when unchanged.
    pub changes: Vec<Option<f64>>,
    pub point: Vec<f64>,
    pub value: f64,
}

/// Root-to-leaf paths whose leaf is accepted, in left-first order.
/// Leaves behind contradictory splits can never be reached and are skipped.
pub fn enumerate_paths(tree: &TreeModel, accept: &Acceptance) -> Vec<PathCondition> {
    fn walk(node: &TreeNode, path: &mut Vec<(usize, Relation, f64)>, accept: &Acceptance, out: &mut Vec<PathCondition>) {
        match node {
            TreeNode::Leaf(p) => {
                if accept.accepts(p) {
                    out.push(PathCondition {
                        conditions: path.clone(),
                        prediction: p.clone(),
                    });
                }
            }
            TreeNode::Split { feature, threshold, left, right } => {
                path.push((*feature, Relation::Le, *threshold));
                walk(left, path, accept, out);
                path.pop();
                path.push((*feature, Relation::Gt, *threshold));
                walk(right, path, accept, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(&tree.root, &mut Vec::new(), accept, &mut out);
    out.retain(|p| p.bounds(tree.dimension).is_some());
    out
}

/// Moves each violated feature to the nearest point of the path's box:
/// `t` for a violated `x_j ≤ t`, `t + δ` for a violated `x_j > t`.
pub fn path_min_change(x: &[f64], path: &PathCondition, reg: &Regularizer, split_margin: f64) -> Result<BoxChange> {
    let bounds = path.bounds(x.len()).ok_or(Error::InconsistentPath)?;
    let mut changes = vec![None; x.len()];
    let mut point = x.to_vec();
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        let v = if x[j] > hi {
            hi
        } else if x[j] <= lo {
            // A box thinner than δ is entered at its closed end.
            (lo + split_margin).min(hi)
        } else {
            continue;
        };
        if v <= lo {
            return Err(Error::InconsistentPath);
        }
        changes[j] = Some(v);
        point[j] = v;
    }
    let value = reg.eval(x, &point)?;
    Ok(BoxChange { changes, point, value })
}

/// Cheapest box change over every accepted path; first path wins ties.
fn best_change(tree: &TreeModel, accept: &Acceptance, query: &CounterfactualQuery) -> Result<(BoxChange, usize)> {
    let paths = enumerate_paths(tree, accept);
    if paths.is_empty() {
        return Err(Error::NoSuchPrediction);
    }
    let mut best: Option<BoxChange> = None;
    for p in &paths {
        let c = path_min_change(&query.x, p, &query.regularizer, query.split_margin)?;
        if best.as_ref().is_none_or(|b| c.value < b.value) {
            best = Some(c);
        }
    }
    Ok((best.expect("non-empty path list"), paths.len()))
}

/// Exact counterfactual of a single tree.
pub fn tree_counterfactual(tree: &TreeModel, query: &CounterfactualQuery) -> Result<CounterfactualReport> {
    let accept = Acceptance::for_query(tree.task, query)?;
    let (change, n_paths) = best_change(tree, &accept, query)?;
    let diagnostics = Diagnostics {
        candidates: Some(n_paths),
        ..Default::default()
    };
    CounterfactualReport::finish(&ModelSpec::Tree(tree.clone()), query, change.point, Method::Tree, diagnostics)
}

fn ensemble_acceptance(e: &EnsembleModel, query: &CounterfactualQuery) -> Result<Acceptance> {
    Acceptance::for_query(
        if ModelSpec::Ensemble(e.clone()).is_regression() { TreeTask::Regression } else { TreeTask::Classification },
        query,
    )
}

/// Whether every strict split `x_j > t` on the path of `p` holds with margin `δ`.
fn clears_splits(node: &TreeNode, p: &[f64], split_margin: f64) -> bool {
    match node {
        TreeNode::Leaf(_) => true,
        TreeNode::Split { feature, threshold, left, right } => {
            if p[*feature] <= *threshold {
                clears_splits(left, p, split_margin)
            } else {
                p[*feature] >= threshold + split_margin && clears_splits(right, p, split_margin)
            }
        }
    }
}

/// Heuristic A: start from each tree's own counterfactual and run the downhill
/// simplex on `#disagreeing trees + C·θ(x', x)`, keeping the cheapest valid point seen.
pub fn ensemble_counterfactual_a(e: &EnsembleModel, query: &CounterfactualQuery) -> Result<CounterfactualReport> {
    let model = ModelSpec::Ensemble(e.clone());
    let accept = ensemble_acceptance(e, query)?;
    let x = &query.x;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |p: &[f64], best: &mut Option<(f64, Vec<f64>)>| {
        if query.is_valid(&model, p) && e.trees.iter().all(|t| clears_splits(&t.root, p, query.split_margin)) {
            if let Ok(v) = query.regularizer.eval(x, p) {
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    *best = Some((v, p.to_vec()));
                }
            }
        }
    };
    let mut starts = 0;
    let mut iterations = 0;
    for tree in &e.trees {
        let Ok((change, _)) = best_change(tree, &accept, query) else {
            continue;
        };
        starts += 1;
        let start = change.point;
        consider(&start, &mut best);
        let scale = start
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            .max(1e-3);
        let opts = SimplexOptions {
            initial_step: Some(scale),
            max_iterations: 2_000,
            ..Default::default()
        };
        let mut seen: Option<(f64, Vec<f64>)> = None;
        let r = downhill_simplex(
            |p| {
                consider(p, &mut seen);
                let disagree = e.trees.iter().filter(|t| !accept.accepts(t.root.evaluate(p))).count() as f64;
                disagree + query.ensemble_c * query.regularizer.eval(x, p).unwrap_or(f64::INFINITY)
            },
            &start,
            &opts,
        );
        iterations += r.iterations;
        if let Some((_, p)) = seen {
            consider(&p, &mut best);
        }
    }
    let Some((_, point)) = best else {
        return Err(Error::NotFound("no start produced a valid ensemble counterfactual".into()));
    };
    let diagnostics = Diagnostics {
        iterations,
        candidates: Some(starts),
        ..Default::default()
    };
    CounterfactualReport::finish(&model, query, point, Method::EnsembleA, diagnostics)
}

/// Heuristic B: box changes of every path of every tree that currently
/// disagrees, kept only when the whole ensemble then predicts the target.
pub fn ensemble_counterfactual_b(e: &EnsembleModel, query: &CounterfactualQuery) -> Result<CounterfactualReport> {
    let model = ModelSpec::Ensemble(e.clone());
    let accept = ensemble_acceptance(e, query)?;
    let mut seen: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<BoxChange> = None;
    for tree in &e.trees {
        if accept.accepts(tree.root.evaluate(&query.x)) {
            continue;
        }
        for path in enumerate_paths(tree, &accept) {
            let c = path_min_change(&query.x, &path, &query.regularizer, query.split_margin)?;
            if seen.contains(&c.point) {
                continue;
            }
            seen.push(c.point.clone());
            if query.is_valid(&model, &c.point) && best.as_ref().is_none_or(|b| c.value < b.value) {
                best = Some(c);
            }
        }
    }
    let Some(best) = best else {
        return Err(Error::NotFound("no single-tree change flips the ensemble".into()));
    };
    let diagnostics = Diagnostics {
        candidates: Some(seen.len()),
        ..Default::default()
    };
    CounterfactualReport::finish(&model, query, best.point, Method::EnsembleB, diagnostics)
}

/// Runs both heuristics and keeps the cheaper valid result (B on ties).
pub fn ensemble_counterfactual(e: &EnsembleModel, query: &CounterfactualQuery) -> Result<CounterfactualReport> {
    if query.is_valid(&ModelSpec::Ensemble(e.clone()), &query.x) {
        let model = ModelSpec::Ensemble(e.clone());
        return CounterfactualReport::finish(&model, query, query.x.clone(), Method::EnsembleB, Diagnostics::default());
    }
    let b = ensemble_counterfactual_b(e, query);
    let a = ensemble_counterfactual_a(e, query);
    match (a, b) {
        (Ok(a), Ok(b)) => Ok(if a.regularization_value < b.regularization_value - TIE_TOL { a } else { b }),
        (Ok(a), Err(_)) => Ok(a),
        (Err(_), Ok(b)) => Ok(b),
        (Err(e), Err(_)) => Err(e),
    }
}
