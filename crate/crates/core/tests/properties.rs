use std::f64::consts::PI;

use proptest::prelude::*;

use hesse_core::dsl::{parse_potential, BinOp, Expr, Func, PotentialField};
use hesse_core::infogeo::{duality_pairing_check, Coordinates, SimplexFamily};
use hesse_core::structure::{beta_scale_defect, structure_at, verify_identities, IDENTITY_TOLERANCE};
use hesse_core::tensor::{contract, norm_sq, DenseTensor, MetricPoint, Variance};

fn expr_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..400).prop_map(|k| Expr::Num(k as f64 / 8.0)),
        (0usize..3).prop_map(Expr::Var),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow),
        ];
        let func = prop_oneof![Just(Func::Log), Just(Func::Exp), Just(Func::Sqrt), Just(Func::Sin), Just(Func::Cos)];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Binary(o, Box::new(a), Box::new(b))),
            (func, inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

fn field(name: &str, n: usize, eps: Option<f64>) -> PotentialField {
    PotentialField::builtin_family(name, n, eps, None).unwrap()
}

fn quartic() -> PotentialField {
    PotentialField::parse("(x1^2 + x2^2)/2 + 0.01*(x1^4 + x1^2*x2^2) + 0.1*sin(x1)*x2^2", 2).unwrap()
}

/// Fourth-order central difference of `f` along `axis`.
fn d1(f: &dyn Fn(&[f64]) -> f64, x: &[f64], axis: usize, h: f64) -> f64 {
    let at = |s: f64| {
        let mut y = x.to_vec();
        y[axis] += s * h;
        f(&y)
    };
    (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h)
}

fn cone_point() -> impl Strategy<Value = Vec<f64>> {
    (-0.6f64..0.6, 0.7f64..2.5).prop_map(|(s, y)| vec![s * y, y])
}

fn torus_point() -> impl Strategy<Value = Vec<f64>> {
    (0.0..2.0 * PI, 0.0..2.0 * PI).prop_map(|(a, b)| vec![a, b])
}

fn spd(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |a| {
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum::<f64>();
            }
            g[i * n + i] += 0.5;
        }
        g
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_then_parsing_gives_the_same_tree(e in expr_tree()) {
        let printed = e.to_string();
        let parsed = parse_potential(&printed, 3).unwrap();
        prop_assert_eq!(parsed.root(), &e, "printed as {}", printed);
        let again = parse_potential(&parsed.to_string(), 3).unwrap();
        prop_assert_eq!(again.root(), &e);
    }

    #[test]
    fn jet_derivatives_match_finite_differences(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let f = quartic();
        let p = [x, y];
        let jet = f.eval_jet(&p, 2).unwrap();
        let value = |q: &[f64]| f.eval_jet(q, 0).unwrap().value();
        let h = 1e-3;
        for i in 0..2 {
            prop_assert!((jet.gradient()[i] - d1(&value, &p, i, h)).abs() < 1e-6);
            let grad_i = |q: &[f64]| f.eval_jet(q, 1).unwrap().gradient()[i];
            for j in 0..2 {
                prop_assert!((jet.hessian()[i][j] - d1(&grad_i, &p, j, h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn contraction_is_bilinear(
        a in prop::collection::vec(-5.0f64..5.0, 9),
        b in prop::collection::vec(-5.0f64..5.0, 9),
        c in prop::collection::vec(-5.0f64..5.0, 3),
        s in -3.0f64..3.0,
    ) {
        use Variance::{Lower, Upper};
        let ta = DenseTensor::from_data(3, &[Lower, Lower], a).unwrap();
        let tb = DenseTensor::from_data(3, &[Lower, Lower], b).unwrap();
        let tc = DenseTensor::from_data(3, &[Upper], c).unwrap();
        let lhs = contract(&ta.scale(s).add(&tb).unwrap(), &tc, &[(1, 0)], None).unwrap();
        let rhs = contract(&ta, &tc, &[(1, 0)], None).unwrap().scale(s)
            .add(&contract(&tb, &tc, &[(1, 0)], None).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn norms_are_nonnegative(g in spd(3), t in prop::collection::vec(-5.0f64..5.0, 27)) {
        let m = MetricPoint::new(&g, 3).unwrap();
        let t = DenseTensor::from_data(3, &[Variance::Lower; 3], t).unwrap();
        prop_assert!(norm_sq(&t, &m).unwrap() >= 0.0);
    }

    #[test]
    fn identities_hold_on_the_cone(x in cone_point()) {
        let sp = structure_at(&field("log_cone", 2, None), &x).unwrap();
        for r in verify_identities(&sp, IDENTITY_TOLERANCE) {
            prop_assert!(r.pass, "{} residual {}", r.name, r.residual);
        }
        prop_assert!(sp.beta.max_abs_diff(&sp.metric.g) < 1e-10);
    }

    #[test]
    fn identities_hold_on_the_torus(x in torus_point(), eps in 0.0f64..0.05) {
        let sp = structure_at(&field("torus_perturbed", 2, Some(eps)), &x).unwrap();
        for r in verify_identities(&sp, IDENTITY_TOLERANCE) {
            prop_assert!(r.pass, "{} residual {}", r.name, r.residual);
        }
    }

    #[test]
    fn beta_ignores_constant_rescaling(x in torus_point(), c in 0.1f64..100.0) {
        let f = field("torus_perturbed", 2, Some(0.05));
        prop_assert!(beta_scale_defect(&f, &x, c).unwrap() < 1e-12);
    }

    #[test]
    fn fisher_duality_pairing(theta in prop::collection::vec(-3.0f64..3.0, 3), a in -2.0f64..2.0) {
        let fam = SimplexFamily::new(4, Coordinates::Natural).unwrap();
        prop_assert!(duality_pairing_check(&fam, &theta, a).unwrap() < 1e-10);
    }
}
