//! JSON model files.
//!
//! ```json
//! {"family": "hyperplane", "dimension": 2, "params": {"w": [1, 0], "b": -1}}
//! ```

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::*;
use crate::numerics::{sym_eigen, SYMMETRY_TOL};

const PRIOR_SUM_TOL: f64 = 1e-9;
const PSD_FLOOR: f64 = -1e-8;

/// Top-level shape shared by every model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub family: String,
    pub dimension: usize,
    pub params: Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperplaneParams {
    w: Vec<f64>,
    b: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoftmaxParams {
    weights: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Label>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GnbClassParams {
    label: Label,
    prior: f64,
    means: Vec<f64>,
    variances: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GnbParams {
    classes: Vec<GnbClassParams>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QdaClassParams {
    label: Label,
    prior: f64,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QdaParams {
    classes: Vec<QdaClassParams>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrototypeParams {
    label: Label,
    point: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MetricParams {
    Identity,
    Global(Vec<Vec<f64>>),
    PerPrototype(Vec<Vec<Vec<f64>>>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LvqParams {
    prototypes: Vec<PrototypeParams>,
    metric: MetricParams,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeParams {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<NodeParams>,
        right: Box<NodeParams>,
    },
    Leaf {
        leaf: Value,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task: Option<TreeTask>,
    root: NodeParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleParams {
    aggregation: Aggregation,
    trees: Vec<NodeParams>,
}

fn params<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Parse(e.to_string()))
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn check_vec(name: &str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(invalid(format!("{name} has length {}, expected {dim}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn check_matrix(name: &str, rows: &[Vec<f64>], dim: usize) -> Result<DenseMatrix> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(invalid(format!("{name} must be {dim}x{dim}")));
    }
    let m = DenseMatrix::from_rows(rows).map_err(|e| invalid(format!("{name}: {e}")))?;
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(invalid(format!("{name} is not symmetric")));
    }
    Ok(m)
}

fn check_psd(name: &str, m: &DenseMatrix) -> Result<()> {
    let e = sym_eigen(m)?;
    if e.min_eigenvalue() < PSD_FLOOR * (1.0 + m.max_abs()) {
        return Err(invalid(format!("{name} is not positive semi-definite")));
    }
    Ok(())
}

fn check_priors(priors: &[f64]) -> Result<()> {
    if priors.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(invalid("class priors must be strictly positive"));
    }
    let total: f64 = priors.iter().sum();
    if (total - 1.0).abs() > PRIOR_SUM_TOL {
        return Err(invalid(format!("class priors sum to {total}, expected 1")));
    }
    Ok(())
}

fn check_unique(labels: &[&Label]) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(invalid(format!("duplicate class label {l}")));
        }
    }
    Ok(())
}

fn leaf_value(v: &Value, task: TreeTask) -> Result<Prediction> {
    match (task, v) {
        (TreeTask::Regression, Value::Number(n)) => n
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Prediction::Value)
            .ok_or_else(|| invalid("regression leaf must be finite")),
        (TreeTask::Regression, _) => Err(invalid("regression leaves must be numbers")),
        (TreeTask::Classification, Value::Number(n)) => n
            .as_i64()
            .map(|i| Prediction::Label(Label::Int(i)))
            .ok_or_else(|| invalid("classification leaves must be integers or strings")),
        (TreeTask::Classification, Value::String(s)) => {
            Ok(Prediction::Label(Label::Text(s.clone())))
        }
        _ => Err(invalid("unsupported leaf value")),
    }
}

fn infer_task(node: &NodeParams) -> TreeTask {
    fn all_discrete(n: &NodeParams) -> bool {
        match n {
            NodeParams::Leaf { leaf } => leaf.is_string() || leaf.as_i64().is_some(),
            NodeParams::Split { left, right, .. } => all_discrete(left) && all_discrete(right),
        }
    }
    if all_discrete(node) {
        TreeTask::Classification
    } else {
        TreeTask::Regression
    }
}

fn build_node(n: &NodeParams, task: TreeTask, dim: usize) -> Result<TreeNode> {
    match n {
        NodeParams::Leaf { leaf } => Ok(TreeNode::Leaf(leaf_value(leaf, task)?)),
        NodeParams::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if *feature >= dim {
                return Err(invalid(format!("split feature {feature} outside dimension {dim}")));
            }
            if !threshold.is_finite() {
                return Err(invalid("split threshold must be finite"));
            }
            Ok(TreeNode::split(
                *feature,
                *threshold,
                build_node(left, task, dim)?,
                build_node(right, task, dim)?,
            ))
        }
    }
}

fn node_params(n: &TreeNode) -> NodeParams {
    match n {
        TreeNode::Leaf(p) => NodeParams::Leaf {
            leaf: serde_json::to_value(p).expect("predictions serialize"),
        },
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => NodeParams::Split {
            feature: *feature,
            threshold: *threshold,
            left: Box::new(node_params(left)),
            right: Box::new(node_params(right)),
        },
    }
}

fn build_tree(root: &NodeParams, task: Option<TreeTask>, dim: usize) -> Result<TreeModel> {
    let task = task.unwrap_or_else(|| infer_task(root));
    Ok(TreeModel {
        dimension: dim,
        task,
        root: build_node(root, task, dim)?,
    })
}

impl ModelDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Validates the document and builds the model.
    pub fn into_model(self) -> Result<ModelSpec> {
        let dim = self.dimension;
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let model = match self.family.as_str() {
            "hyperplane" | "logistic" => {
                let p: HyperplaneParams = params(self.params)?;
                check_vec("w", &p.w, dim)?;
                if !p.b.is_finite() {
                    return Err(invalid("b must be finite"));
                }
                ModelSpec::Hyperplane(HyperplaneModel { w: p.w, b: p.b })
            }
            "softmax" => {
                let p: SoftmaxParams = params(self.params)?;
                let k = p.weights.len();
                if k < 2 {
                    return Err(invalid("softmax needs at least two classes"));
                }
                if p.intercepts.len() != k {
                    return Err(invalid("one intercept per class required"));
                }
                for (i, w) in p.weights.iter().enumerate() {
                    check_vec(&format!("weights[{i}]"), w, dim)?;
                }
                check_vec("intercepts", &p.intercepts, k)?;
                let labels = p
                    .labels
                    .unwrap_or_else(|| (0..k as i64).map(Label::Int).collect());
                if labels.len() != k {
                    return Err(invalid("one label per class required"));
                }
                check_unique(&labels.iter().collect::<Vec<_>>())?;
                ModelSpec::Softmax(SoftmaxModel {
                    weights: p.weights,
                    intercepts: p.intercepts,
                    labels,
                })
            }
            "linear" | "poisson" | "exponential" => {
                let kind = match self.family.as_str() {
                    "linear" => GlmKind::Linear,
                    "poisson" => GlmKind::Poisson,
                    _ => GlmKind::Exponential,
                };
                let p: HyperplaneParams = params(self.params)?;
                check_vec("w", &p.w, dim)?;
                if !p.b.is_finite() {
                    return Err(invalid("b must be finite"));
                }
                ModelSpec::Glm(GlmRegressor { kind, w: p.w, b: p.b })
            }
            "gnb" => {
                let p: GnbParams = params(self.params)?;
                if p.classes.len() < 2 {
                    return Err(invalid("naive Bayes needs at least two classes"));
                }
                for c in &p.classes {
                    check_vec("means", &c.means, dim)?;
                    check_vec("variances", &c.variances, dim)?;
                    if c.variances.iter().any(|v| *v <= 0.0) {
                        return Err(invalid(format!(
                            "class {} has a non-positive variance",
                            c.label
                        )));
                    }
                }
                check_priors(&p.classes.iter().map(|c| c.prior).collect::<Vec<_>>())?;
                check_unique(&p.classes.iter().map(|c| &c.label).collect::<Vec<_>>())?;
                ModelSpec::Gnb(GnbModel {
                    classes: p
                        .classes
                        .into_iter()
                        .map(|c| GnbClass {
                            label: c.label,
                            prior: c.prior,
                            means: c.means,
                            variances: c.variances,
                        })
                        .collect(),
                })
            }
            "qda" => {
                let p: QdaParams = params(self.params)?;
                if p.classes.len() < 2 {
                    return Err(invalid("QDA needs at least two classes"));
                }
                check_priors(&p.classes.iter().map(|c| c.prior).collect::<Vec<_>>())?;
                check_unique(&p.classes.iter().map(|c| &c.label).collect::<Vec<_>>())?;
                let mut classes = Vec::with_capacity(p.classes.len());
                for c in p.classes {
                    check_vec("mean", &c.mean, dim)?;
                    let cov = check_matrix(&format!("covariance of class {}", c.label), &c.covariance, dim)?;
                    classes.push(QdaClass::new(c.label, c.prior, c.mean, cov)?);
                }
                ModelSpec::Qda(QdaModel { classes })
            }
            "lvq" => {
                let p: LvqParams = params(self.params)?;
                if p.prototypes.len() < 2 {
                    return Err(invalid("LVQ needs at least two prototypes"));
                }
                for pr in &p.prototypes {
                    check_vec("prototype", &pr.point, dim)?;
                }
                let metric = match p.metric {
                    MetricParams::Identity => LvqMetric::Identity,
                    MetricParams::Global(m) => {
                        let m = check_matrix("global metric", &m, dim)?;
                        check_psd("global metric", &m)?;
                        LvqMetric::Global(m)
                    }
                    MetricParams::PerPrototype(ms) => {
                        if ms.len() != p.prototypes.len() {
                            return Err(invalid("one metric matrix per prototype required"));
                        }
                        let mut out = Vec::with_capacity(ms.len());
                        for (i, m) in ms.iter().enumerate() {
                            let name = format!("metric of prototype {i}");
                            let m = check_matrix(&name, m, dim)?;
                            check_psd(&name, &m)?;
                            out.push(m);
                        }
                        LvqMetric::PerPrototype(out)
                    }
                };
                ModelSpec::Lvq(LvqModel {
                    prototypes: p
                        .prototypes
                        .into_iter()
                        .map(|pr| Prototype {
                            label: pr.label,
                            point: pr.point,
                        })
                        .collect(),
                    metric,
                })
            }
            "tree" => {
                let p: TreeParams = params(self.params)?;
                ModelSpec::Tree(build_tree(&p.root, p.task, dim)?)
            }
            "ensemble" => {
                let p: EnsembleParams = params(self.params)?;
                if p.trees.is_empty() {
                    return Err(invalid("ensemble needs at least one tree"));
                }
                let task = match p.aggregation {
                    Aggregation::Majority => TreeTask::Classification,
                    Aggregation::Mean => TreeTask::Regression,
                };
                let trees = p
                    .trees
                    .iter()
                    .map(|t| build_tree(t, Some(task), dim))
                    .collect::<Result<Vec<_>>>()?;
                ModelSpec::Ensemble(EnsembleModel {
                    trees,
                    aggregation: p.aggregation,
                })
            }
            other => return Err(Error::UnsupportedFamily(other.to_string())),
        };
        Ok(model)
    }

    pub fn from_model(model: &ModelSpec) -> Self {
        let to = |v: serde_json::Result<Value>| v.expect("model parameters serialize");
        let mat = |m: &DenseMatrix| m.to_rows();
        let params = match model {
            ModelSpec::Hyperplane(m) => to(serde_json::to_value(HyperplaneParams { w: m.w.clone(), b: m.b })),
            ModelSpec::Glm(m) => to(serde_json::to_value(HyperplaneParams { w: m.w.clone(), b: m.b })),
            ModelSpec::Softmax(m) => to(serde_json::to_value(SoftmaxParams {
                weights: m.weights.clone(),
                intercepts: m.intercepts.clone(),
                labels: Some(m.labels.clone()),
            })),
            ModelSpec::Gnb(m) => to(serde_json::to_value(GnbParams {
                classes: m
                    .classes
                    .iter()
                    .map(|c| GnbClassParams {
                        label: c.label.clone(),
                        prior: c.prior,
                        means: c.means.clone(),
                        variances: c.variances.clone(),
                    })
                    .collect(),
            })),
            ModelSpec::Qda(m) => to(serde_json::to_value(QdaParams {
                classes: m
                    .classes
                    .iter()
                    .map(|c| QdaClassParams {
                        label: c.label.clone(),
                        prior: c.prior,
                        mean: c.mean.clone(),
                        covariance: mat(&c.covariance),
                    })
                    .collect(),
            })),
            ModelSpec::Lvq(m) => to(serde_json::to_value(LvqParams {
                prototypes: m
                    .prototypes
                    .iter()
                    .map(|p| PrototypeParams {
                        label: p.label.clone(),
                        point: p.point.clone(),
                    })
                    .collect(),
                metric: match &m.metric {
                    LvqMetric::Identity => MetricParams::Identity,
                    LvqMetric::Global(g) => MetricParams::Global(mat(g)),
                    LvqMetric::PerPrototype(ms) => MetricParams::PerPrototype(ms.iter().map(mat).collect()),
                },
            })),
            ModelSpec::Tree(t) => to(serde_json::to_value(TreeParams {
                task: Some(t.task),
                root: node_params(&t.root),
            })),
            ModelSpec::Ensemble(e) => to(serde_json::to_value(EnsembleParams {
                aggregation: e.aggregation,
                trees: e.trees.iter().map(|t| node_params(&t.root)).collect(),
            })),
        };
        ModelDocument {
            family: model.family().to_string(),
            dimension: model.dimension(),
            params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents serialize")
    }
}

/// Parses and validates a model file.
pub fn load_model(text: &str) -> Result<ModelSpec> {
    ModelDocument::parse(text)?.into_model()
}

impl ModelSpec {
    pub fn to_json(&self) -> String {
        ModelDocument::from_model(self).to_json()
    }
}
