use cfx_core::engine::{build_constraints, lvq_constraints};
use cfx_core::models::{
    HyperplaneModel, Label, LvqMetric, LvqModel, ModelSpec, Prediction, Prototype, QdaClass, QdaModel, SoftmaxModel,
};
use cfx_core::numerics::{dot, solve_spd, sym_eigen, DenseMatrix};
use cfx_core::regularizers::{mad_weights, ObjectivePieces, Regularizer};
use cfx_core::solvers::{solve_lp, CanonicalProgram, Objective, QuadraticConstraint, Status};
use proptest::prelude::*;

fn symmetric(n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-5.0..5.0f64, n * n).prop_map(move |v| {
        DenseMatrix::new(n, n, v).unwrap().symmetrized()
    })
}

fn spd(n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-2.0..2.0f64, n * n).prop_map(move |v| {
        let l = DenseMatrix::new(n, n, v).unwrap();
        l.matmul(&l.transpose()).add(&DenseMatrix::identity(n).scale(0.1))
    })
}

fn columns() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5, 1usize..30).prop_flat_map(|(d, n)| prop::collection::vec(prop::collection::vec(-100.0..100.0f64, n), d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigen_reconstructs(m in symmetric(5)) {
        let e = sym_eigen(&m).unwrap();
        let r = e.reconstruct();
        let scale = m.max_abs().max(1.0);
        prop_assert!(r.sub(&m).max_abs() <= 1e-8 * scale);
    }

    #[test]
    fn spd_solve_residual(m in spd(5), b in prop::collection::vec(-10.0..10.0f64, 5)) {
        let x = solve_spd(&m, &b).unwrap();
        let back = m.matvec(&x);
        let err = back.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        let scale = b.iter().map(|v| v.abs()).fold(1.0, f64::max);
        prop_assert!(err <= 1e-8 * scale);
    }

    #[test]
    fn mad_permutation_invariant(cols in columns(), seed in any::<u64>()) {
        let n = cols[0].len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<Vec<f64>> = cols.iter().map(|c| order.iter().map(|&i| c[i]).collect()).collect();
        prop_assert_eq!(mad_weights(&cols).unwrap(), mad_weights(&permuted).unwrap());
    }

    #[test]
    fn mad_scaling_covariance(cols in columns(), s in 0.01..100.0f64) {
        let w = mad_weights(&cols).unwrap();
        let scaled: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| v * s).collect()).collect();
        let ws = mad_weights(&scaled).unwrap();
        for (a, b) in w.iter().zip(&ws) {
            if 1.0 / a > 1e-6 && 1.0 / b > 1e-6 {
                prop_assert!((b * s - a).abs() <= 1e-9 * a);
            }
        }
    }

    #[test]
    fn regularizer_zero_at_x(x in prop::collection::vec(-10.0..10.0f64, 1..6), w in prop::collection::vec(0.1..5.0f64, 6)) {
        let d = x.len();
        prop_assert_eq!(Regularizer::Euclidean.eval(&x, &x).unwrap(), 0.0);
        prop_assert_eq!(Regularizer::manhattan(w[..d].to_vec()).unwrap().eval(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn epigraph_value_matches_weighted_l1(
        x in prop::collection::vec(-3.0..3.0f64, 3),
        w in prop::collection::vec(0.1..5.0f64, 3),
        rows in prop::collection::vec((prop::collection::vec(-1.0..1.0f64, 3), 0.1..2.0f64), 1..5),
    ) {
        // Polytope {x' : aᵀx' ≥ b}, shifted so it is far from x.
        let reg = Regularizer::manhattan(w.clone()).unwrap();
        let ObjectivePieces::Epigraph(p) = reg.objective_pieces(&x).unwrap() else { unreachable!() };
        let mut cons: Vec<QuadraticConstraint> = p.rows.iter().map(|r| QuadraticConstraint::linear(r.q.clone(), r.c)).collect();
        for (a, b) in &rows {
            let mut q: Vec<f64> = a.iter().map(|v| -v).collect();
            q.extend([0.0; 3]);
            cons.push(QuadraticConstraint::linear(q, dot(a, &x) + b));
        }
        let prog = CanonicalProgram::new(Objective::linear(p.cost.clone()), cons).unwrap();
        let s = solve_lp(&prog).unwrap();
        prop_assume!(s.status == Status::Optimal);
        let xp = &s.point[..3];
        let direct = reg.eval(&x, xp).unwrap();
        prop_assert!((s.objective - direct).abs() <= 1e-7, "{} vs {}", s.objective, direct);
    }

    #[test]
    fn softmax_two_classes_is_hyperplane(
        w1 in prop::collection::vec(-3.0..3.0f64, 3), w2 in prop::collection::vec(-3.0..3.0f64, 3),
        b1 in -2.0..2.0f64, b2 in -2.0..2.0f64,
    ) {
        let soft = ModelSpec::Softmax(SoftmaxModel {
            weights: vec![w2.clone(), w1.clone()],
            intercepts: vec![b2, b1],
            labels: vec![Label::Int(-1), Label::Int(1)],
        });
        let w: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a - b).collect();
        let hyper = ModelSpec::Hyperplane(HyperplaneModel { w, b: b1 - b2 });
        for y in [-1i64, 1] {
            let a = build_constraints(&soft, &Prediction::Label(Label::Int(y)), 0.0).unwrap();
            let b = build_constraints(&hyper, &Prediction::Label(Label::Int(y)), 0.0).unwrap();
            prop_assert_eq!(a.rows.len(), b.rows.len());
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                for (u, v) in ra.constraint.q.iter().zip(&rb.constraint.q) {
                    prop_assert!((u - v).abs() <= 1e-12);
                }
                prop_assert!((ra.constraint.c - rb.constraint.c).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn lvq_identity_equals_global_identity(
        pts in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 3),
        x in prop::collection::vec(-5.0..5.0f64, 2),
    ) {
        let protos: Vec<Prototype> = pts.iter().enumerate()
            .map(|(i, p)| Prototype { label: Label::Int((i % 2) as i64), point: p.clone() })
            .collect();
        let plain = ModelSpec::Lvq(LvqModel { prototypes: protos.clone(), metric: LvqMetric::Identity });
        let global = LvqModel { prototypes: protos.clone(), metric: LvqMetric::Global(DenseMatrix::identity(2)) };
        prop_assert_eq!(plain.predict(&x).unwrap(), ModelSpec::Lvq(global.clone()).predict(&x).unwrap());
        let ModelSpec::Lvq(plain) = plain else { unreachable!() };
        for i in 0..3 {
            prop_assert_eq!(lvq_constraints(&plain, i).unwrap(), lvq_constraints(&global, i).unwrap());
        }
    }

    #[test]
    fn qda_equal_covariance_rows_are_linear(
        cov in spd(2),
        means in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 3),
    ) {
        let classes = means.iter().enumerate()
            .map(|(i, m)| QdaClass::new(Label::Int(i as i64), 1.0 / 3.0, m.clone(), cov.clone()).unwrap())
            .collect();
        let m = ModelSpec::Qda(QdaModel { classes });
        let set = build_constraints(&m, &Prediction::Label(Label::Int(0)), 0.0).unwrap();
        prop_assert!(set.is_linear());
    }
}
