//! Assembles the counterfactual program for a model and dispatches it to a solver.

mod constraints;

use std::fmt;

use serde::Serialize;

use crate::blackbox::{blackbox_counterfactual, BlackboxOptions};
use crate::error::{Error, Result};
use crate::models::{LvqModel, ModelSpec, Prediction};
use crate::numerics::{sym_eigen, DenseMatrix};
use crate::regularizers::{ObjectivePieces, Regularizer};
use crate::solvers::{
    penalty_ccp, solve_lp, solve_qp, solve_single_qcqp_dual, CanonicalProgram, CcpOptions,
    DcConstraint, DcProgram, Objective, ProgramSolution, QuadraticConstraint,
    SingleQuadraticConstraint, Status,
};
use crate::trees;

pub use constraints::{build_constraints, lvq_constraints, ConstraintKind, ConstraintRow, ConstraintSet};
pub(crate) use constraints::{target_label, target_value};

pub const DEFAULT_MARGIN: f64 = 1e-4;
pub const DEFAULT_SPLIT_MARGIN: f64 = 1e-6;
pub const DEFAULT_ENSEMBLE_C: f64 = 0.1;
/// Values closer than this count as ties between candidate counterfactuals.
pub const TIE_TOL: f64 = 1e-9;

/// A request for a counterfactual of `x` with prediction `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualQuery {
    pub x: Vec<f64>,
    pub target: Prediction,
    pub regularizer: Regularizer,
    /// `ε_margin`: strict inequalities are solved as `g + ε_margin ≤ 0`.
    pub margin: f64,
    /// `ε_tol`: accepted deviation from a regression target.
    pub tolerance: f64,
    /// `δ_split` used to cross the strict side of a tree split.
    pub split_margin: f64,
    /// Weight of the distance term in ensemble heuristic A.
    pub ensemble_c: f64,
    pub blackbox: BlackboxOptions,
}

impl CounterfactualQuery {
    pub fn new(x: Vec<f64>, target: impl Into<Prediction>, regularizer: Regularizer) -> Self {
        Self {
            x,
            target: target.into(),
            regularizer,
            margin: DEFAULT_MARGIN,
            tolerance: 0.0,
            split_margin: DEFAULT_SPLIT_MARGIN,
            ensemble_c: DEFAULT_ENSEMBLE_C,
            blackbox: BlackboxOptions::default(),
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        model.check_dimension(&self.x)?;
        self.regularizer.check_dimension(self.x.len())?;
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidQuery("margin must be positive and finite".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidQuery("tolerance must be non-negative and finite".into()));
        }
        if !(self.split_margin > 0.0 && self.split_margin.is_finite()) {
            return Err(Error::InvalidQuery("split margin must be positive and finite".into()));
        }
        if model.is_regression() {
            target_value(&self.target)?;
        } else {
            let label = target_label(&self.target)?;
            // Trees report unreachable labels as NoSuchPrediction instead.
            let tree_like = matches!(model, ModelSpec::Tree(_) | ModelSpec::Ensemble(_));
            if !tree_like && !model.labels().contains(label) {
                return Err(Error::InvalidTarget(format!("unknown label {label}")));
            }
        }
        Ok(())
    }

    /// Whether `xp` counts as a counterfactual: the model predicts the target
    /// (regressors: within `tolerance`).
    pub fn is_valid(&self, model: &ModelSpec, xp: &[f64]) -> bool {
        let Ok(p) = model.predict(xp) else {
            return false;
        };
        if model.is_regression() {
            match (p.value(), target_value(&self.target)) {
                (Some(v), Ok(y)) => (v - y).abs() <= self.tolerance + 1e-9,
                _ => false,
            }
        } else {
            p.label().is_some() && p.label() == self.target.label()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lp,
    Qp,
    Ccp,
    DualQcqp,
    Tree,
    EnsembleA,
    EnsembleB,
    Blackbox,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lp => "lp",
            Method::Qp => "qp",
            Method::Ccp => "ccp",
            Method::DualQcqp => "dual-qcqp",
            Method::Tree => "tree",
            Method::EnsembleA => "ensemble-a",
            Method::EnsembleB => "ensemble-b",
            Method::Blackbox => "blackbox",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_violation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complementarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    /// Candidates examined (prototypes, starts, tree paths, restarts).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
}

impl Diagnostics {
    fn from_solution(s: &ProgramSolution) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            status: Some(s.status),
            iterations: s.iterations,
            max_violation: finite(s.max_violation),
            stationarity: finite(s.stationarity),
            complementarity: finite(s.complementarity),
            duality_gap: s.duality_gap.and_then(finite),
            candidates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualReport {
    pub counterfactual: Vec<f64>,
    pub deltas: Vec<f64>,
    pub regularization_value: f64,
    pub achieved_prediction: Prediction,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl CounterfactualReport {
    /// Builds the report for `xp` after checking it reproduces the target.
    pub(crate) fn finish(
        model: &ModelSpec,
        query: &CounterfactualQuery,
        xp: Vec<f64>,
        method: Method,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        if !query.is_valid(model, &xp) {
            return Err(Error::SubproblemFailure(format!(
                "{method} solution does not reproduce the requested prediction"
            )));
        }
        Ok(Self {
            deltas: xp.iter().zip(&query.x).map(|(a, b)| a - b).collect(),
            regularization_value: query.regularizer.eval(&query.x, &xp)?,
            achieved_prediction: model.predict(&xp)?,
            counterfactual: xp,
            method,
            diagnostics,
        })
    }
}

/// Result of solving one constraint system.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Solved {
    pub point: Vec<f64>,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

fn lift_constraint(c: &QuadraticConstraint, size: usize) -> QuadraticConstraint {
    let n = c.q.len();
    let mut q = c.q.clone();
    q.resize(size, 0.0);
    let a = c.a.as_ref().filter(|a| !a.is_zero()).map(|a| {
        let mut big = DenseMatrix::zeros(size, size);
        for r in 0..n {
            for col in 0..n {
                big[(r, col)] = a[(r, col)];
            }
        }
        big
    });
    QuadraticConstraint { a, q, c: c.c }
}

/// Objective and extra rows for the regularizer, over `z = x'` (Euclidean)
/// or `z = (x', β)` (Manhattan epigraph).
fn regularizer_program(x: &[f64], reg: &Regularizer) -> Result<(Objective, Vec<QuadraticConstraint>, usize)> {
    Ok(match reg.objective_pieces(x)? {
        ObjectivePieces::Quadratic(p) => (
            Objective::quadratic(p.hessian.scale(2.0), p.linear.iter().map(|v| 2.0 * v).collect(), p.constant),
            Vec::new(),
            x.len(),
        ),
        ObjectivePieces::Epigraph(p) => (
            Objective::linear(p.cost.clone()),
            p.rows.iter().cloned().map(QuadraticConstraint::from).collect(),
            2 * x.len(),
        ),
    })
}

fn lift_start(x: &[f64], reg: &Regularizer, start: &[f64]) -> Vec<f64> {
    match reg {
        Regularizer::Euclidean => start.to_vec(),
        Regularizer::Manhattan { weights } => {
            let mut z = start.to_vec();
            z.extend(weights.iter().zip(x.iter().zip(start)).map(|(w, (a, b))| w * (a - b).abs()));
            z
        }
    }
}

/// Minimises the regularizer subject to `rows` (already relaxed).
///
/// `starts` are points that satisfy the rows, tried before `x` by penalty CCP.
pub(crate) fn solve_system(
    x: &[f64],
    reg: &Regularizer,
    rows: &[QuadraticConstraint],
    starts: &[Vec<f64>],
) -> Result<Solved> {
    let d = x.len();
    let linear = rows.iter().all(QuadraticConstraint::is_linear);

    if !linear && rows.len() == 1 && reg.is_euclidean() {
        let row = &rows[0];
        let single = SingleQuadraticConstraint {
            a: row.a.clone().unwrap_or_else(|| DenseMatrix::zeros(d, d)),
            b: row.q.clone(),
            r: row.c,
        };
        let sol = solve_single_qcqp_dual(x, &single)?;
        let s = sol.solution.into_optimal()?;
        return Ok(Solved {
            diagnostics: Diagnostics::from_solution(&s),
            point: s.point,
            method: Method::DualQcqp,
        });
    }

    let (objective, reg_rows, size) = regularizer_program(x, reg)?;
    let mut base_rows = reg_rows;

    if linear {
        base_rows.extend(rows.iter().map(|r| lift_constraint(r, size)));
        let prog = CanonicalProgram::new(objective, base_rows)?;
        let (s, method) = if reg.is_euclidean() {
            (solve_qp(&prog)?, Method::Qp)
        } else {
            (solve_lp(&prog)?, Method::Lp)
        };
        let s = s.into_optimal()?;
        return Ok(Solved {
            diagnostics: Diagnostics::from_solution(&s),
            point: s.point[..d].to_vec(),
            method,
        });
    }

    let lift_m = |m: DenseMatrix| lift_constraint(&QuadraticConstraint::quadratic(m, vec![0.0; d], 0.0), size).a;
    let mut dc_rows = Vec::new();
    for r in rows {
        if r.is_linear() {
            base_rows.push(lift_constraint(r, size));
            continue;
        }
        let (plus, minus) = sym_eigen(&r.a.as_ref().expect("quadratic row").symmetrized())?.psd_split();
        let lifted = lift_constraint(&QuadraticConstraint::linear(r.q.clone(), r.c), size);
        dc_rows.push(DcConstraint {
            convex: lift_m(plus),
            concave: lift_m(minus),
            q: lifted.q,
            c: lifted.c,
        });
    }
    let dc = DcProgram::new(CanonicalProgram::new(objective, base_rows)?, dc_rows)?;

    let mut all_starts: Vec<Vec<f64>> = starts.to_vec();
    all_starts.push(x.to_vec());
    let mut best: Option<(f64, ProgramSolution)> = None;
    let mut first_err = None;
    for s in &all_starts {
        match penalty_ccp(&dc, &lift_start(x, reg, s), &CcpOptions::default()) {
            Ok(out) if out.solution.status == Status::Optimal => {
                let xp = &out.solution.point[..d];
                if rows.iter().any(|r| r.eval(xp) > 1e-6) {
                    continue;
                }
                let v = reg.eval(x, xp)?;
                if best.as_ref().is_none_or(|(bv, _)| v < bv - TIE_TOL) {
                    best = Some((v, out.solution));
                }
            }
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((_, s)) => {
            let mut diagnostics = Diagnostics::from_solution(&s);
            diagnostics.candidates = Some(all_starts.len());
            Ok(Solved {
                point: s.point[..d].to_vec(),
                method: Method::Ccp,
                diagnostics,
            })
        }
        None => Err(first_err.unwrap_or_else(|| {
            Error::SubproblemFailure("penalty CCP reached no feasible point from any start".into())
        })),
    }
}

/// Class mean of the target when it already satisfies the relaxed system.
fn witness(model: &ModelSpec, query: &CounterfactualQuery, rows: &[QuadraticConstraint]) -> Vec<Vec<f64>> {
    let Some(label) = query.target.label() else {
        return Vec::new();
    };
    let mean = match model {
        ModelSpec::Gnb(m) => m.classes.iter().find(|c| c.label == *label).map(|c| c.means.clone()),
        ModelSpec::Qda(m) => m.classes.iter().find(|c| c.label == *label).map(|c| c.mean.clone()),
        _ => None,
    };
    mean.into_iter()
        .filter(|p| rows.iter().all(|r| r.eval(p) <= 0.0))
        .collect()
}

/// Computes a counterfactual, choosing the solver from the model family.
pub fn compute_counterfactual(model: &ModelSpec, query: &CounterfactualQuery) -> Result<CounterfactualReport> {
    query.validate(model)?;
    match model {
        ModelSpec::Lvq(m) => lvq_counterfactual(m, model, query),
        ModelSpec::Tree(t) => trees::tree_counterfactual(t, query),
        ModelSpec::Ensemble(e) => trees::ensemble_counterfactual(e, query),
        _ => {
            let set = build_constraints(model, &query.target, query.tolerance)?;
            let rows = set.relaxed(query.margin);
            let starts = witness(model, query, &rows);
            let solved = solve_system(&query.x, &query.regularizer, &rows, &starts)?;
            CounterfactualReport::finish(model, query, solved.point, solved.method, solved.diagnostics)
        }
    }
}

/// Like [`compute_counterfactual`] but always uses the derivative-free fallback.
pub fn compute_blackbox(model: &ModelSpec, query: &CounterfactualQuery) -> Result<CounterfactualReport> {
    query.validate(model)?;
    blackbox_counterfactual(model, query)
}

/// One program per prototype carrying the target label; the cheapest wins
/// (lowest prototype index on ties).
pub fn lvq_counterfactual(m: &LvqModel, model: &ModelSpec, query: &CounterfactualQuery) -> Result<CounterfactualReport> {
    let label = target_label(&query.target)?;
    let own: Vec<usize> = (0..m.prototypes.len())
        .filter(|&i| m.prototypes[i].label == *label)
        .collect();
    if own.is_empty() {
        return Err(Error::NoPrototypeForTarget);
    }
    let mut best: Option<(f64, Solved)> = None;
    let mut first_err = None;
    for &i in &own {
        let rows = lvq_constraints(m, i)?.relaxed(query.margin);
        let p = m.prototypes[i].point.clone();
        let starts: Vec<Vec<f64>> = rows.iter().all(|r| r.eval(&p) <= 0.0).then_some(p).into_iter().collect();
        match solve_system(&query.x, &query.regularizer, &rows, &starts) {
            Ok(s) => {
                let v = query.regularizer.eval(&query.x, &s.point)?;
                if best.as_ref().is_none_or(|(bv, _)| v < bv - TIE_TOL) {
                    best = Some((v, s));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((_, mut solved)) = best else {
        return Err(first_err.expect("at least one prototype was tried"));
    };
    solved.diagnostics.candidates = Some(own.len());
    CounterfactualReport::finish(model, query, solved.point, solved.method, solved.diagnostics)
}

#[cfg(test)]
mod tests;
