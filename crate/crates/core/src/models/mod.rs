//! Supported model families and their prediction functions.

mod document;

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, Cholesky, DenseMatrix};

pub use document::{load_model, ModelDocument};

/// Below this magnitude the exponential regressor's linear predictor counts as its pole.
pub const EXPONENTIAL_POLE_TOL: f64 = 1e-12;

/// A class label: an integer or a string.
///
/// Integers order before strings; ties in every argmax resolve to the lowest label or index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Text(String),
}

impl Label {
    /// Integers when the text parses as one (`"+1"`, `"-1"`, `"3"`), otherwise text.
    pub fn parse(s: &str) -> Label {
        let t = s.trim();
        let unsigned = t.strip_prefix('+').unwrap_or(t);
        match unsigned.parse::<i64>() {
            Ok(v) => Label::Int(v),
            Err(_) => match unsigned.parse::<f64>() {
                Ok(v) if v.fract() == 0.0 && v.abs() < 9e15 => Label::Int(v as i64),
                _ => Label::Text(t.to_string()),
            },
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(v) => write!(f, "{v}"),
            Label::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Label {
    fn from(v: i64) -> Self {
        Label::Int(v)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Text(s.to_string())
    }
}

/// Output of a model, also used to express the requested prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Label(Label),
    Value(f64),
}

impl Prediction {
    pub fn label(&self) -> Option<&Label> {
        match self {
            Prediction::Label(l) => Some(l),
            Prediction::Value(_) => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Prediction::Value(v) => Some(*v),
            Prediction::Label(_) => None,
        }
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prediction::Label(l) => l.fmt(f),
            Prediction::Value(v) => v.fmt(f),
        }
    }
}

impl From<Label> for Prediction {
    fn from(l: Label) -> Self {
        Prediction::Label(l)
    }
}

/// `h(x) = sign(wᵀx + b)` with labels `-1` and `+1`. Zero maps to `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl HyperplaneModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }
}

/// Multinomial logistic regression; predicts the class with the largest `w_iᵀx + b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub labels: Vec<Label>,
}

impl SoftmaxModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    /// Class probabilities (numerically stabilized).
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scores(x);
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmKind {
    Linear,
    Poisson,
    Exponential,
}

/// Generalized linear regressor: identity, log, or negative-inverse link.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmRegressor {
    pub kind: GlmKind,
    pub w: Vec<f64>,
    pub b: f64,
}

impl GlmRegressor {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let z = self.linear_predictor(x);
        match self.kind {
            GlmKind::Linear => Ok(z),
            GlmKind::Poisson => Ok(z.exp()),
            GlmKind::Exponential => {
                if z.abs() < EXPONENTIAL_POLE_TOL {
                    Err(Error::Evaluation(
                        "exponential regressor evaluated at its pole".into(),
                    ))
                } else {
                    Ok(-1.0 / z)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnbClass {
    pub label: Label,
    pub prior: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Gaussian naive Bayes with per-class, per-feature variances.
#[derive(Debug, Clone, PartialEq)]
pub struct GnbModel {
    pub classes: Vec<GnbClass>,
}

impl GnbModel {
    /// `log π_i + Σ_k log N(x_k | μ_ik, σ²_ik)` per class.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| {
                c.prior.ln()
                    + x.iter()
                        .zip(c.means.iter().zip(&c.variances))
                        .map(|(xk, (m, v))| {
                            -0.5 * (2.0 * PI * v).ln() - (xk - m) * (xk - m) / (2.0 * v)
                        })
                        .sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QdaClass {
    pub label: Label,
    pub prior: f64,
    pub mean: Vec<f64>,
    pub covariance: DenseMatrix,
    precision: DenseMatrix,
    log_det: f64,
}

impl QdaClass {
    pub fn new(label: Label, prior: f64, mean: Vec<f64>, covariance: DenseMatrix) -> Result<Self> {
        let chol = Cholesky::factor(&covariance).map_err(|e| match e {
            Error::NotSymmetric => Error::Validation(format!("covariance of class {label} is not symmetric")),
            Error::NotPositiveDefinite { .. } => {
                Error::Validation(format!("covariance of class {label} is not positive definite"))
            }
            other => other,
        })?;
        Ok(Self {
            precision: chol.inverse(),
            log_det: chol.log_det(),
            label,
            prior,
            mean,
            covariance: covariance.symmetrized(),
        })
    }

    /// `Σ⁻¹`
    pub fn precision(&self) -> &DenseMatrix {
        &self.precision
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }
}

/// Quadratic discriminant analysis: one Gaussian per class with its own covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct QdaModel {
    pub classes: Vec<QdaClass>,
}

impl QdaModel {
    /// Log joint density per class, up to the shared `-(d/2) log 2π`.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| {
                let diff: Vec<f64> = x.iter().zip(&c.mean).map(|(a, m)| a - m).collect();
                c.prior.ln() - 0.5 * c.log_det - 0.5 * c.precision.quad_form(&diff)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub label: Label,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LvqMetric {
    Identity,
    Global(DenseMatrix),
    PerPrototype(Vec<DenseMatrix>),
}

/// Nearest-prototype classifier under `(x - p)ᵀ Ω_p (x - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LvqModel {
    pub prototypes: Vec<Prototype>,
    pub metric: LvqMetric,
}

impl LvqModel {
    /// Metric matrix used for prototype `i`.
    pub fn metric_for(&self, i: usize) -> DenseMatrix {
        let d = self.prototypes[i].point.len();
        match &self.metric {
            LvqMetric::Identity => DenseMatrix::identity(d),
            LvqMetric::Global(m) => m.clone(),
            LvqMetric::PerPrototype(ms) => ms[i].clone(),
        }
    }

    pub fn distance(&self, i: usize, x: &[f64]) -> f64 {
        let p = &self.prototypes[i].point;
        let diff: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
        match &self.metric {
            LvqMetric::Identity => dot(&diff, &diff),
            LvqMetric::Global(m) => m.quad_form(&diff),
            LvqMetric::PerPrototype(ms) => ms[i].quad_form(&diff),
        }
    }

    pub fn distances(&self, x: &[f64]) -> Vec<f64> {
        (0..self.prototypes.len()).map(|i| self.distance(i, x)).collect()
    }

    /// Index of the nearest prototype; lowest index on ties.
    pub fn nearest(&self, x: &[f64]) -> usize {
        argmin(&self.distances(x))
    }

    pub fn labels(&self) -> Vec<Label> {
        let mut ls: Vec<Label> = self.prototypes.iter().map(|p| p.label.clone()).collect();
        ls.sort();
        ls.dedup();
        ls
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeTask {
    Classification,
    Regression,
}

/// Binary split node or leaf. Left branch is `x_j ≤ t`, right branch `x_j > t`.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(Prediction),
}

impl TreeNode {
    pub fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn leaf(p: impl Into<Prediction>) -> Self {
        TreeNode::Leaf(p.into())
    }

    pub fn evaluate(&self, x: &[f64]) -> &Prediction {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf(p) => return p,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }


    pub fn leaves(&self) -> Vec<&Prediction> {
        match self {
            TreeNode::Leaf(p) => vec![p],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub dimension: usize,
    pub task: TreeTask,
    pub root: TreeNode,
}

impl TreeModel {
    pub fn predict(&self, x: &[f64]) -> Prediction {
        self.root.evaluate(x).clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[serde(alias = "majority-vote")]
    Majority,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub trees: Vec<TreeModel>,
    pub aggregation: Aggregation,
}

impl EnsembleModel {
    pub fn dimension(&self) -> usize {
        self.trees[0].dimension
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        aggregate(
            self.aggregation,
            self.trees.iter().map(|t| t.root.evaluate(x)),
        )
    }
}

/// Combines per-tree outputs: majority vote (lowest label on ties) or mean.
pub fn aggregate<'a>(agg: Aggregation, votes: impl Iterator<Item = &'a Prediction>) -> Prediction {
    match agg {
        Aggregation::Majority => {
            let mut counts: Vec<(Label, usize)> = Vec::new();
            for v in votes {
                let label = match v {
                    Prediction::Label(l) => l.clone(),
                    Prediction::Value(x) => Label::Text(x.to_string()),
                };
                match counts.iter_mut().find(|(l, _)| *l == label) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((label, 1)),
                }
            }
            counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            Prediction::Label(counts.swap_remove(0).0)
        }
        Aggregation::Mean => {
            let (sum, n) = votes.fold((0.0, 0usize), |(s, n), v| {
                (s + v.value().unwrap_or(f64::NAN), n + 1)
            });
            Prediction::Value(sum / n as f64)
        }
    }
}

/// Every supported model family.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Hyperplane(HyperplaneModel),
    Softmax(SoftmaxModel),
    Glm(GlmRegressor),
    Gnb(GnbModel),
    Qda(QdaModel),
    Lvq(LvqModel),
    Tree(TreeModel),
    Ensemble(EnsembleModel),
}

impl ModelSpec {
    pub fn dimension(&self) -> usize {
        match self {
            ModelSpec::Hyperplane(m) => m.w.len(),
            ModelSpec::Softmax(m) => m.weights[0].len(),
            ModelSpec::Glm(m) => m.w.len(),
            ModelSpec::Gnb(m) => m.classes[0].means.len(),
            ModelSpec::Qda(m) => m.classes[0].mean.len(),
            ModelSpec::Lvq(m) => m.prototypes[0].point.len(),
            ModelSpec::Tree(m) => m.dimension,
            ModelSpec::Ensemble(m) => m.dimension(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Hyperplane(_) => "hyperplane",
            ModelSpec::Softmax(_) => "softmax",
            ModelSpec::Glm(m) => match m.kind {
                GlmKind::Linear => "linear",
                GlmKind::Poisson => "poisson",
                GlmKind::Exponential => "exponential",
            },
            ModelSpec::Gnb(_) => "gnb",
            ModelSpec::Qda(_) => "qda",
            ModelSpec::Lvq(_) => "lvq",
            ModelSpec::Tree(_) => "tree",
            ModelSpec::Ensemble(_) => "ensemble",
        }
    }

    pub fn is_regression(&self) -> bool {
        match self {
            ModelSpec::Glm(_) => true,
            ModelSpec::Tree(t) => t.task == TreeTask::Regression,
            ModelSpec::Ensemble(e) => e.aggregation == Aggregation::Mean,
            _ => false,
        }
    }

    /// The labels a classifier can emit, sorted. Empty for regressors.
    pub fn labels(&self) -> Vec<Label> {
        let mut out = match self {
            ModelSpec::Hyperplane(_) => vec![Label::Int(-1), Label::Int(1)],
            ModelSpec::Softmax(m) => m.labels.clone(),
            ModelSpec::Gnb(m) => m.classes.iter().map(|c| c.label.clone()).collect(),
            ModelSpec::Qda(m) => m.classes.iter().map(|c| c.label.clone()).collect(),
            ModelSpec::Lvq(m) => m.labels(),
            ModelSpec::Tree(t) if t.task == TreeTask::Classification => t
                .root
                .leaves()
                .into_iter()
                .filter_map(|p| p.label().cloned())
                .collect(),
            ModelSpec::Ensemble(e) if e.aggregation == Aggregation::Majority => e
                .trees
                .iter()
                .flat_map(|t| t.root.leaves())
                .filter_map(|p| p.label().cloned())
                .collect(),
            _ => Vec::new(),
        };
        out.sort();
        out.dedup();
        out
    }

    pub fn check_dimension(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input vector"));
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dimension(x)?;
        Ok(match self {
            ModelSpec::Hyperplane(m) => {
                Prediction::Label(Label::Int(if m.score(x) >= 0.0 { 1 } else { -1 }))
            }
            ModelSpec::Softmax(m) => Prediction::Label(m.labels[argmax(&m.scores(x))].clone()),
            ModelSpec::Glm(m) => Prediction::Value(m.evaluate(x)?),
            ModelSpec::Gnb(m) => {
                Prediction::Label(m.classes[argmax(&m.log_joint(x))].label.clone())
            }
            ModelSpec::Qda(m) => {
                Prediction::Label(m.classes[argmax(&m.log_joint(x))].label.clone())
            }
            ModelSpec::Lvq(m) => Prediction::Label(m.prototypes[m.nearest(x)].label.clone()),
            ModelSpec::Tree(t) => t.predict(x),
            ModelSpec::Ensemble(e) => e.predict(x),
        })
    }

    /// How far `x` sits inside the decision region of `target`: the target's
    /// discriminant minus the best competitor's, in the units of the
    /// counterfactual constraints (`-max_j g_j(x)`). Positive means `target` wins.
    ///
    /// `None` for regressors and tree models, which have no such score.
    pub fn decision_margin(&self, x: &[f64], target: &Label) -> Result<Option<f64>> {
        self.check_dimension(x)?;
        let per_class = |labels: Vec<&Label>, scores: Vec<f64>| -> Result<Option<f64>> {
            let i = labels
                .iter()
                .position(|l| *l == target)
                .ok_or_else(|| Error::InvalidTarget(format!("unknown label {target}")))?;
            let best_other = scores
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, s)| *s)
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(Some(scores[i] - best_other))
        };
        match self {
            ModelSpec::Hyperplane(m) => match target {
                Label::Int(y @ (-1 | 1)) => Ok(Some(*y as f64 * m.score(x))),
                _ => Err(Error::InvalidTarget(format!(
                    "hyperplane labels are -1 and 1, got {target}"
                ))),
            },
            ModelSpec::Softmax(m) => per_class(m.labels.iter().collect(), m.scores(x)),
            ModelSpec::Gnb(m) => {
                per_class(m.classes.iter().map(|c| &c.label).collect(), m.log_joint(x))
            }
            ModelSpec::Qda(m) => {
                per_class(m.classes.iter().map(|c| &c.label).collect(), m.log_joint(x))
            }
            ModelSpec::Lvq(m) => {
                let d = m.distances(x);
                let (mut own, mut other) = (f64::INFINITY, f64::INFINITY);
                for (p, di) in m.prototypes.iter().zip(d) {
                    if p.label == *target {
                        own = own.min(di);
                    } else {
                        other = other.min(di);
                    }
                }
                if own.is_infinite() {
                    return Err(Error::NoPrototypeForTarget);
                }
                Ok(Some(0.5 * (other - own)))
            }
            ModelSpec::Glm(_) | ModelSpec::Tree(_) | ModelSpec::Ensemble(_) => Ok(None),
        }
    }
}

/// Index of the largest value; lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].partial_cmp(&v[best]) == Some(Ordering::Greater) {
            best = i;
        }
    }
    best
}

/// Index of the smallest value; lowest index on ties.
pub fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].partial_cmp(&v[best]) == Some(Ordering::Less) {
            best = i;
        }
    }
    best
}
