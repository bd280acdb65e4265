//! Constraint systems `g(x') ≤ 0` describing "the model predicts y′".

use crate::error::{Error, Result};
use crate::models::{GlmKind, GlmRegressor, GnbModel, Label, LvqModel, ModelSpec, Prediction, QdaModel, SoftmaxModel};
use crate::numerics::{dot, DenseMatrix};
use crate::solvers::QuadraticConstraint;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    Convex,
    /// `A = convex - concave` with both pieces PSD.
    DifferenceOfConvex { convex: DenseMatrix, concave: DenseMatrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub constraint: QuadraticConstraint,
    pub kind: ConstraintKind,
    /// The original inequality is `g < 0`; solved as `g + ε_margin ≤ 0`.
    pub strict: bool,
}

impl ConstraintRow {
    fn linear(q: Vec<f64>, c: f64, strict: bool) -> Self {
        Self {
            constraint: QuadraticConstraint::linear(q, c),
            kind: ConstraintKind::Convex,
            strict,
        }
    }

    /// Strict row with the DC split `(convex, concave)`; purely linear when they cancel.
    fn split(convex: DenseMatrix, concave: DenseMatrix, q: Vec<f64>, c: f64) -> Self {
        let a = convex.sub(&concave);
        let kind = if a.is_zero() {
            ConstraintKind::Convex
        } else {
            ConstraintKind::DifferenceOfConvex { convex, concave }
        };
        Self {
            constraint: QuadraticConstraint::quadratic(a, q, c),
            kind,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    pub rows: Vec<ConstraintRow>,
}

impl ConstraintSet {
    pub fn is_linear(&self) -> bool {
        self.rows.iter().all(|r| r.constraint.is_linear())
    }

    /// Rows with strict inequalities tightened by `margin`.
    pub fn relaxed(&self, margin: f64) -> Vec<QuadraticConstraint> {
        self.rows
            .iter()
            .map(|r| {
                let mut c = r.constraint.clone();
                if r.strict {
                    c.c += margin;
                }
                c
            })
            .collect()
    }

    pub fn max_violation(&self, x: &[f64], margin: f64) -> f64 {
        self.relaxed(margin).iter().map(|c| c.eval(x)).fold(0.0, f64::max)
    }
}

fn class_index<'a>(labels: impl Iterator<Item = &'a Label>, target: &Label) -> Result<usize> {
    labels
        .into_iter()
        .position(|l| l == target)
        .ok_or_else(|| Error::InvalidTarget(format!("unknown label {target}")))
}

/// Requested class for classifiers; integer labels also count as numeric targets.
pub(crate) fn target_label(target: &Prediction) -> Result<&Label> {
    target
        .label()
        .ok_or_else(|| Error::InvalidTarget(format!("expected a class label, got {target}")))
}

pub(crate) fn target_value(target: &Prediction) -> Result<f64> {
    let v = match target {
        Prediction::Value(v) => *v,
        Prediction::Label(Label::Int(i)) => *i as f64,
        Prediction::Label(Label::Text(t)) => t
            .parse()
            .map_err(|_| Error::InvalidTarget(format!("expected a number, got {t}")))?,
    };
    if !v.is_finite() {
        return Err(Error::InvalidTarget("target must be finite".into()));
    }
    Ok(v)
}

/// Builds the constraint system for every family with a closed-form system.
///
/// LVQ systems are per prototype ([`lvq_constraints`]); trees have none.
pub fn build_constraints(model: &ModelSpec, target: &Prediction, tolerance: f64) -> Result<ConstraintSet> {
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(Error::InvalidQuery("tolerance must be finite and non-negative".into()));
    }
    match model {
        ModelSpec::Hyperplane(m) => {
            let y = match target_label(target)? {
                Label::Int(y @ (-1 | 1)) => *y as f64,
                other => {
                    return Err(Error::InvalidTarget(format!(
                        "hyperplane labels are -1 and 1, got {other}"
                    )))
                }
            };
            let q = m.w.iter().map(|w| -y * w).collect();
            Ok(ConstraintSet {
                rows: vec![ConstraintRow::linear(q, -m.b * y, true)],
            })
        }
        ModelSpec::Softmax(m) => softmax_constraints(m, target_label(target)?),
        ModelSpec::Glm(m) => glm_constraints(m, target_value(target)?, tolerance),
        ModelSpec::Gnb(m) => gnb_constraints(m, target_label(target)?),
        ModelSpec::Qda(m) => qda_constraints(m, target_label(target)?),
        ModelSpec::Lvq(_) => Err(Error::UnsupportedFamily(
            "lvq constraints are built per prototype".into(),
        )),
        ModelSpec::Tree(_) | ModelSpec::Ensemble(_) => Err(Error::UnsupportedFamily(
            "tree models have no constraint system".into(),
        )),
    }
}

fn softmax_constraints(m: &SoftmaxModel, target: &Label) -> Result<ConstraintSet> {
    let i = class_index(m.labels.iter(), target)?;
    let rows = (0..m.labels.len())
        .filter(|&j| j != i)
        .map(|j| {
            let q = m.weights[j].iter().zip(&m.weights[i]).map(|(a, b)| a - b).collect();
            ConstraintRow::linear(q, m.intercepts[j] - m.intercepts[i], true)
        })
        .collect();
    Ok(ConstraintSet { rows })
}

/// Pre-image of `[y′ - ε, y′ + ε]` under the link, as bounds on `wᵀx + b`.
fn glm_bounds(kind: GlmKind, y: f64, eps: f64) -> Result<(Option<f64>, Option<f64>)> {
    match kind {
        GlmKind::Linear => Ok((Some(y - eps), Some(y + eps))),
        GlmKind::Poisson => {
            if y <= 0.0 {
                return Err(Error::InvalidTarget(format!(
                    "poisson targets must be positive, got {y}"
                )));
            }
            let lower = (y - eps > 0.0).then(|| (y - eps).ln());
            Ok((lower, Some((y + eps).ln())))
        }
        GlmKind::Exponential => {
            if y == 0.0 {
                return Err(Error::InvalidTarget("exponential targets must be non-zero".into()));
            }
            // -1/z is increasing on each branch; stay on the branch of y′.
            let same_side = |v: f64| v != 0.0 && v.signum() == y.signum();
            let lower = same_side(y - eps).then(|| -1.0 / (y - eps));
            let upper = same_side(y + eps).then(|| -1.0 / (y + eps));
            match (lower, upper) {
                (None, None) => Err(Error::InvalidTarget(
                    "tolerance interval spans the exponential pole".into(),
                )),
                bounds => Ok(bounds),
            }
        }
    }
}

fn glm_constraints(m: &GlmRegressor, y: f64, eps: f64) -> Result<ConstraintSet> {
    let (lower, upper) = glm_bounds(m.kind, y, eps)?;
    let mut rows = Vec::new();
    if let Some(u) = upper {
        rows.push(ConstraintRow::linear(m.w.clone(), m.b - u, false));
    }
    if let Some(l) = lower {
        rows.push(ConstraintRow::linear(m.w.iter().map(|w| -w).collect(), l - m.b, false));
    }
    Ok(ConstraintSet { rows })
}

fn gnb_constraints(m: &GnbModel, target: &Label) -> Result<ConstraintSet> {
    let i = class_index(m.classes.iter().map(|c| &c.label), target)?;
    let ci = &m.classes[i];
    let inv_i: Vec<f64> = ci.variances.iter().map(|v| 1.0 / v).collect();
    let rows = m
        .classes
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, cj)| {
            let inv_j: Vec<f64> = cj.variances.iter().map(|v| 1.0 / v).collect();
            let q = (0..inv_i.len())
                .map(|k| cj.means[k] * inv_j[k] - ci.means[k] * inv_i[k])
                .collect();
            let c = (cj.prior / ci.prior).ln()
                + (0..inv_i.len())
                    .map(|k| {
                        0.5 * (ci.variances[k] / cj.variances[k]).ln()
                            - 0.5 * cj.means[k] * cj.means[k] * inv_j[k]
                            + 0.5 * ci.means[k] * ci.means[k] * inv_i[k]
                    })
                    .sum::<f64>();
            ConstraintRow::split(
                DenseMatrix::from_diagonal(&inv_i),
                DenseMatrix::from_diagonal(&inv_j),
                q,
                c,
            )
        })
        .collect();
    Ok(ConstraintSet { rows })
}

fn qda_constraints(m: &QdaModel, target: &Label) -> Result<ConstraintSet> {
    let i = class_index(m.classes.iter().map(|c| &c.label), target)?;
    let ci = &m.classes[i];
    let pi_mu_i = ci.precision().matvec(&ci.mean);
    let rows = m
        .classes
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, cj)| {
            let pj_mu_j = cj.precision().matvec(&cj.mean);
            let q = pj_mu_j.iter().zip(&pi_mu_i).map(|(a, b)| a - b).collect();
            let c = 0.5 * (dot(&ci.mean, &pi_mu_i) - dot(&cj.mean, &pj_mu_j))
                + 0.5 * (ci.log_det() - cj.log_det())
                + (cj.prior / ci.prior).ln();
            ConstraintRow::split(ci.precision().clone(), cj.precision().clone(), q, c)
        })
        .collect();
    Ok(ConstraintSet { rows })
}

/// Rows keeping `x'` strictly closer to prototype `i` than to every prototype
/// with a different label: `½(d_i(x') - d_j(x')) < 0`.
pub fn lvq_constraints(m: &LvqModel, i: usize) -> Result<ConstraintSet> {
    let pi = m.prototypes.get(i).ok_or(Error::NoPrototypeForTarget)?;
    let omega_i = m.metric_for(i);
    let oi_pi = omega_i.matvec(&pi.point);
    let rows = m
        .prototypes
        .iter()
        .enumerate()
        .filter(|(_, pj)| pj.label != pi.label)
        .map(|(j, pj)| {
            let omega_j = m.metric_for(j);
            let oj_pj = omega_j.matvec(&pj.point);
            let q = oj_pj.iter().zip(&oi_pi).map(|(a, b)| a - b).collect();
            let c = 0.5 * (dot(&pi.point, &oi_pi) - dot(&pj.point, &oj_pj));
            ConstraintRow::split(omega_i.clone(), omega_j, q, c)
        })
        .collect();
    Ok(ConstraintSet { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GnbClass, HyperplaneModel, LvqMetric, Prototype, QdaClass};

    fn label(i: i64) -> Prediction {
        Prediction::Label(Label::Int(i))
    }

    #[test]
    fn hyperplane_row() {
        let m = ModelSpec::Hyperplane(HyperplaneModel { w: vec![1.0, 1.0], b: 0.0 });
        let s = build_constraints(&m, &label(1), 0.0).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].constraint.q, vec![-1.0, -1.0]);
        assert_eq!(s.rows[0].constraint.c, 0.0);
        assert!(build_constraints(&m, &label(2), 0.0).is_err());
    }

    #[test]
    fn poisson_rows_at_unit_target() {
        let m = ModelSpec::Glm(GlmRegressor { kind: GlmKind::Poisson, w: vec![1.0], b: 0.0 });
        let s = build_constraints(&m, &Prediction::Value(1.0), 0.0).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(s.rows.iter().all(|r| r.constraint.c == 0.0 && !r.strict));
        let s = build_constraints(&m, &Prediction::Value(1.0), 0.1).unwrap();
        // |e^x - 1| ≤ 0.1  ⇔  ln 0.9 ≤ x ≤ ln 1.1
        for x in [0.9f64.ln(), 0.0, 1.1f64.ln()] {
            assert!(s.max_violation(&[x], 0.0) <= 1e-15);
        }
        assert!(s.max_violation(&[0.2], 0.0) > 0.0);
        assert!(matches!(
            build_constraints(&m, &Prediction::Value(0.0), 0.0),
            Err(Error::InvalidTarget(_))
        ));
    }

    #[test]
    fn exponential_rows_stay_on_branch() {
        let m = ModelSpec::Glm(GlmRegressor { kind: GlmKind::Exponential, w: vec![1.0], b: 0.0 });
        assert!(matches!(
            build_constraints(&m, &Prediction::Value(0.0), 0.0),
            Err(Error::InvalidTarget(_))
        ));
        // f = -1/z; y′ = 2 ± 3 allows every z ≤ -1/5.
        let s = build_constraints(&m, &Prediction::Value(2.0), 3.0).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert!(s.max_violation(&[-0.2], 0.0) <= 1e-15 && s.max_violation(&[-0.1], 0.0) > 0.0);
        let s = build_constraints(&m, &Prediction::Value(-2.0), 0.5).unwrap();
        assert_eq!(s.rows.len(), 2);
        for z in [1.0 / 2.5, 0.5, 1.0 / 1.5] {
            assert!(s.max_violation(&[z], 0.0) <= 1e-15);
        }
    }

    fn gnb(var2: f64) -> GnbModel {
        GnbModel {
            classes: vec![
                GnbClass { label: Label::Int(1), prior: 0.3, means: vec![-1.0, 0.5], variances: vec![1.0, 2.0] },
                GnbClass { label: Label::Int(2), prior: 0.7, means: vec![1.0, -0.5], variances: vec![var2, 2.0] },
            ],
        }
    }

    #[test]
    fn gnb_rows_reproduce_log_joint_differences() {
        let m = gnb(0.5);
        let s = gnb_constraints(&m, &Label::Int(2)).unwrap();
        assert!(matches!(s.rows[0].kind, ConstraintKind::DifferenceOfConvex { .. }));
        for x in [[0.0, 0.0], [1.5, -2.0], [-3.0, 4.0]] {
            let lj = m.log_joint(&x);
            let g = s.rows[0].constraint.eval(&x);
            assert!((g - (lj[0] - lj[1])).abs() < 1e-12, "{g} vs {}", lj[0] - lj[1]);
        }
    }

    #[test]
    fn gnb_equal_variances_are_linear() {
        let s = gnb_constraints(&gnb(1.0), &Label::Int(1)).unwrap();
        assert!(s.is_linear());
        assert!(s.rows[0].constraint.a.as_ref().unwrap().is_zero());
    }

    fn qda(cov2: DenseMatrix) -> QdaModel {
        let cov1 = DenseMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        QdaModel {
            classes: vec![
                QdaClass::new(Label::Int(0), 0.4, vec![0.0, 1.0], cov1).unwrap(),
                QdaClass::new(Label::Int(1), 0.6, vec![2.0, -1.0], cov2).unwrap(),
            ],
        }
    }

    #[test]
    fn qda_rows_reproduce_log_joint_differences() {
        let m = qda(DenseMatrix::from_rows(&[vec![1.0, -0.2], vec![-0.2, 0.5]]).unwrap());
        let s = qda_constraints(&m, &Label::Int(0)).unwrap();
        for x in [[0.0, 0.0], [1.0, 2.0], [-2.0, 0.5]] {
            let lj = m.log_joint(&x);
            assert!((s.rows[0].constraint.eval(&x) - (lj[1] - lj[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn qda_equal_covariances_are_linear() {
        let cov = DenseMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let s = qda_constraints(&qda(cov), &Label::Int(1)).unwrap();
        assert!(s.is_linear());
    }

    #[test]
    fn softmax_two_classes_equals_hyperplane() {
        let sm = SoftmaxModel {
            weights: vec![vec![0.5, -1.0], vec![-0.25, 2.0]],
            intercepts: vec![0.3, -0.1],
            labels: vec![Label::Int(0), Label::Int(1)],
        };
        let hp = ModelSpec::Hyperplane(HyperplaneModel { w: vec![0.75, -3.0], b: 0.4 });
        let a = softmax_constraints(&sm, &Label::Int(0)).unwrap();
        let b = build_constraints(&hp, &label(1), 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lvq_rows_reproduce_half_distance_differences() {
        let m = LvqModel {
            prototypes: vec![
                Prototype { label: Label::Int(0), point: vec![-1.0, 0.0] },
                Prototype { label: Label::Int(1), point: vec![1.0, 0.5] },
                Prototype { label: Label::Int(1), point: vec![0.0, 2.0] },
            ],
            metric: LvqMetric::PerPrototype(vec![
                DenseMatrix::from_diagonal(&[1.0, 2.0]),
                DenseMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap(),
                DenseMatrix::identity(2),
            ]),
        };
        let s = lvq_constraints(&m, 1).unwrap();
        assert_eq!(s.rows.len(), 1);
        for x in [[0.0, 0.0], [2.0, -1.0]] {
            let d = m.distances(&x);
            assert!((s.rows[0].constraint.eval(&x) - 0.5 * (d[1] - d[0])).abs() < 1e-12);
        }
        assert_eq!(lvq_constraints(&m, 0).unwrap().rows.len(), 2);
    }
}
