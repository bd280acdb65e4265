use super::*;
use crate::models::{
    GlmKind, GlmRegressor, GnbClass, GnbModel, HyperplaneModel, Label, LvqMetric, Prototype,
    QdaClass, QdaModel,
};
use crate::solvers::test_support::grid_min_2d;
use crate::solvers::{CanonicalProgram, DcConstraint, DcProgram};

fn hyperplane() -> ModelSpec {
    ModelSpec::Hyperplane(HyperplaneModel { w: vec![1.0, 0.0], b: 0.0 })
}

#[test]
fn hyperplane_euclidean() {
    let q = CounterfactualQuery::new(vec![-2.0, 0.0], Label::Int(1), Regularizer::Euclidean).with_margin(0.01);
    let r = compute_counterfactual(&hyperplane(), &q).unwrap();
    assert_eq!(r.method, Method::Qp);
    assert!((r.counterfactual[0] - 0.01).abs() < 1e-12 && r.counterfactual[1].abs() < 1e-12);
    assert!((r.regularization_value - 2.01 * 2.01).abs() < 1e-10);
    assert_eq!(r.achieved_prediction, Prediction::Label(Label::Int(1)));
}

#[test]
fn hyperplane_manhattan() {
    let q = CounterfactualQuery::new(vec![-2.0, 0.0], Label::Int(1), Regularizer::uniform_manhattan(2))
        .with_margin(0.01);
    let r = compute_counterfactual(&hyperplane(), &q).unwrap();
    assert_eq!(r.method, Method::Lp);
    assert!((r.counterfactual[0] - 0.01).abs() < 1e-12 && r.counterfactual[1].abs() < 1e-12);
    assert!((r.regularization_value - 2.01).abs() < 1e-12);
    assert_eq!(r.deltas.len(), 2);
}

#[test]
fn linear_regression_exact_target() {
    let m = ModelSpec::Glm(GlmRegressor { kind: GlmKind::Linear, w: vec![1.0, 0.0], b: 0.0 });
    let q = CounterfactualQuery::new(vec![0.0, 0.0], Prediction::Value(2.0), Regularizer::Euclidean);
    let r = compute_counterfactual(&m, &q).unwrap();
    assert!((r.counterfactual[0] - 2.0).abs() < 1e-12 && r.counterfactual[1].abs() < 1e-12);
}

#[test]
fn unknown_target_rejected() {
    let q = CounterfactualQuery::new(vec![-2.0, 0.0], Label::Int(3), Regularizer::Euclidean);
    assert!(matches!(compute_counterfactual(&hyperplane(), &q), Err(Error::InvalidTarget(_))));
    let q = CounterfactualQuery::new(vec![-2.0], Label::Int(1), Regularizer::Euclidean);
    assert!(matches!(compute_counterfactual(&hyperplane(), &q), Err(Error::DimensionMismatch { .. })));
}

fn gnb_1d(var2: f64) -> ModelSpec {
    ModelSpec::Gnb(GnbModel {
        classes: vec![
            GnbClass { label: Label::Int(1), prior: 0.5, means: vec![-1.0], variances: vec![1.0] },
            GnbClass { label: Label::Int(2), prior: 0.5, means: vec![1.0], variances: vec![var2] },
        ],
    })
}

#[test]
fn gnb_one_dimensional_boundary() {
    let m = gnb_1d(1.0);
    let q = CounterfactualQuery::new(vec![-2.0], Label::Int(2), Regularizer::Euclidean);
    let r = compute_counterfactual(&m, &q).unwrap();
    // Nearest grid point (step 1e-4 over [-3, 3]) predicted as class 2.
    let grid = (0..=60_000)
        .map(|i| -3.0 + i as f64 * 1e-4)
        .filter(|&x| m.predict(&[x]).unwrap() == Prediction::Label(Label::Int(2)))
        .min_by(|a, b| (a + 2.0).abs().total_cmp(&(b + 2.0).abs()))
        .unwrap();
    assert!((r.counterfactual[0] - grid).abs() <= 1e-4, "{} vs {grid}", r.counterfactual[0]);
    assert!(r.counterfactual[0] > 0.0);
}

fn grid_check(model: &ModelSpec, q: &CounterfactualQuery, r: &CounterfactualReport) {
    let (best, _) = grid_min_2d(
        -5.0,
        5.0,
        1e-2,
        |p| q.regularizer.eval(&q.x, p).unwrap(),
        |p| q.is_valid(model, p),
    );
    assert!(r.regularization_value <= best + 1e-1, "{} vs grid {best}", r.regularization_value);
}

#[test]
fn gnb_unequal_variances_single_row_uses_dual() {
    let m = ModelSpec::Gnb(GnbModel {
        classes: vec![
            GnbClass { label: Label::Int(1), prior: 0.5, means: vec![-1.0, 0.0], variances: vec![1.0, 1.0] },
            GnbClass { label: Label::Int(2), prior: 0.5, means: vec![1.0, 0.5], variances: vec![0.5, 2.0] },
        ],
    });
    let q = CounterfactualQuery::new(vec![-2.0, 0.0], Label::Int(2), Regularizer::Euclidean);
    let r = compute_counterfactual(&m, &q).unwrap();
    assert_eq!(r.method, Method::DualQcqp);
    grid_check(&m, &q, &r);
    let q = CounterfactualQuery::new(vec![-2.0, 0.0], Label::Int(2), Regularizer::uniform_manhattan(2));
    let r = compute_counterfactual(&m, &q).unwrap();
    assert_eq!(r.method, Method::Ccp);
    grid_check(&m, &q, &r);
}

#[test]
fn qda_three_classes_uses_ccp() {
    let cov = |a: f64, b: f64, c: f64| DenseMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap();
    let m = ModelSpec::Qda(QdaModel {
        classes: vec![
            QdaClass::new(Label::Int(0), 0.3, vec![-2.0, 0.0], cov(1.0, 0.2, 1.0)).unwrap(),
            QdaClass::new(Label::Int(1), 0.3, vec![2.0, 0.0], cov(0.5, 0.0, 2.0)).unwrap(),
            QdaClass::new(Label::Int(2), 0.4, vec![0.0, 2.5], cov(1.5, -0.3, 0.7)).unwrap(),
        ],
    });
    let q = CounterfactualQuery::new(vec![-2.0, 0.0], Label::Int(1), Regularizer::Euclidean);
    let r = compute_counterfactual(&m, &q).unwrap();
    assert_eq!(r.method, Method::Ccp);
    grid_check(&m, &q, &r);
}

fn lvq(metric: LvqMetric) -> ModelSpec {
    ModelSpec::Lvq(LvqModel {
        prototypes: vec![
            Prototype { label: Label::from("A"), point: vec![-1.0, 0.0] },
            Prototype { label: Label::from("B"), point: vec![1.0, 0.0] },
        ],
        metric,
    })
}

#[test]
fn lvq_bisector() {
    let q = CounterfactualQuery::new(vec![-2.0, 0.0], Label::from("B"), Regularizer::Euclidean);
    let plain = compute_counterfactual(&lvq(LvqMetric::Identity), &q).unwrap();
    assert!(plain.counterfactual[0] > 0.0 && plain.counterfactual[0] < 1e-3);
    assert!((plain.regularization_value.sqrt() - 2.0).abs() < 1e-3);
    let global = compute_counterfactual(&lvq(LvqMetric::Global(DenseMatrix::identity(2))), &q).unwrap();
    assert_eq!(plain.counterfactual, global.counterfactual);
    let local = compute_counterfactual(
        &lvq(LvqMetric::PerPrototype(vec![DenseMatrix::identity(2); 2])),
        &q,
    )
    .unwrap();
    assert!((local.regularization_value - plain.regularization_value).abs() < 1e-9);
}

#[test]
fn lvq_equal_metrics_through_ccp() {
    let ModelSpec::Lvq(m) = lvq(LvqMetric::PerPrototype(vec![DenseMatrix::identity(2); 2])) else {
        unreachable!()
    };
    let x = [-2.0, 0.0];
    let rows = lvq_constraints(&m, 1).unwrap().relaxed(DEFAULT_MARGIN);
    let base = CanonicalProgram::new(
        Objective::quadratic(DenseMatrix::identity(2).scale(2.0), vec![4.0, 0.0], 4.0),
        vec![],
    )
    .unwrap();
    // Minimal split of A = 0 is (0, 0).
    let dc = DcProgram::new(
        base,
        vec![DcConstraint { convex: None, concave: None, q: rows[0].q.clone(), c: rows[0].c }],
    )
    .unwrap();
    let out = penalty_ccp(&dc, &[1.0, 0.0], &CcpOptions::default()).unwrap();
    let qp = solve_system(&x, &Regularizer::Euclidean, &rows, &[]).unwrap();
    assert_eq!(qp.method, Method::Qp);
    let v_ccp = Regularizer::Euclidean.eval(&x, &out.solution.point).unwrap();
    let v_qp = Regularizer::Euclidean.eval(&x, &qp.point).unwrap();
    assert!((v_ccp - v_qp).abs() < 1e-6, "{v_ccp} vs {v_qp}");
}

#[test]
fn lvq_nearest_own_prototype_wins() {
    let m = ModelSpec::Lvq(LvqModel {
        prototypes: vec![
            Prototype { label: Label::from("A"), point: vec![-1.0, 0.0] },
            Prototype { label: Label::from("B"), point: vec![1.0, 0.0] },
            Prototype { label: Label::from("B"), point: vec![5.0, 0.0] },
        ],
        metric: LvqMetric::Identity,
    });
    let ModelSpec::Lvq(lv) = &m else { unreachable!() };
    let x = [-2.0, 0.0];
    let values: Vec<f64> = [1usize, 2]
        .iter()
        .map(|&i| {
            let rows = lvq_constraints(lv, i).unwrap().relaxed(DEFAULT_MARGIN);
            let s = solve_system(&x, &Regularizer::Euclidean, &rows, &[]).unwrap();
            Regularizer::Euclidean.eval(&x, &s.point).unwrap()
        })
        .collect();
    assert!(values[0] < values[1]);
    let q = CounterfactualQuery::new(x.to_vec(), Label::from("B"), Regularizer::Euclidean);
    let r = compute_counterfactual(&m, &q).unwrap();
    assert!((r.regularization_value - values[0]).abs() < 1e-12);
    let q = CounterfactualQuery::new(x.to_vec(), Label::from("C"), Regularizer::Euclidean);
    assert!(compute_counterfactual(&m, &q).is_err());
}

#[test]
fn local_metrics_use_ccp() {
    let m = lvq(LvqMetric::PerPrototype(vec![
        DenseMatrix::from_diagonal(&[1.0, 0.5]),
        DenseMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 0.5]]).unwrap(),
    ]));
    let q = CounterfactualQuery::new(vec![-2.0, 0.0], Label::from("B"), Regularizer::uniform_manhattan(2));
    let r = compute_counterfactual(&m, &q).unwrap();
    assert_eq!(r.method, Method::Ccp);
    grid_check(&m, &q, &r);
}

#[test]
fn margin_monotonicity() {
    let m = gnb_1d(0.5);
    let mut last = 0.0;
    for eps in [1e-4, 1e-2, 1e-1] {
        let q = CounterfactualQuery::new(vec![-2.0], Label::Int(2), Regularizer::Euclidean).with_margin(eps);
        let v = compute_counterfactual(&m, &q).unwrap().regularization_value;
        assert!(v >= last - 1e-12);
        last = v;
    }
}
