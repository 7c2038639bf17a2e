use mexec_core::checks::conley;
use mexec_core::lindyn::{deviation_of_plan, ExecutionPlan};
use mexec_core::linalg::identity;
use mexec_core::optimal::solve;
use mexec_core::{derive_coefficients, Mat, MarketSpec, TimeFn, Vector};
use proptest::prelude::*;

fn rotation(angle: f64) -> Mat {
    let (s, c) = angle.sin_cos();
    Mat::from_row_slice(2, 2, &[c, s, -s, c])
}

fn spd(a: f64, b: f64, off: f64) -> Mat {
    // diagonally dominant, hence positive definite
    let off = off * a.min(b) * 0.9;
    Mat::from_row_slice(2, 2, &[a, off, off, b])
}

fn market(angle: f64, l1: f64, l2: f64, r: (f64, f64, f64)) -> MarketSpec {
    MarketSpec::new(rotation(angle), Vector::from_vec(vec![l1, l2]), spd(r.0, r.1, r.2), 1.0)
        .with_drift(TimeFn::Constant(Vector::from_vec(vec![0.3, -0.2])))
        .with_grid(20)
}

fn plan_from(values: &[f64], x0: Vector) -> ExecutionPlan {
    let values = values.chunks(2).map(Vector::from_column_slice).collect();
    ExecutionPlan { x_pre: x0, values, terminal: Vector::zeros(2) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn impact_powers_add(angle in -3.0..3.0f64, l1 in 0.2..5.0f64, l2 in 0.2..5.0f64,
                         a in -1.5..1.5f64, b in -1.5..1.5f64) {
        let spec = market(angle, l1, l2, (1.0, 2.0, 0.3));
        let c = derive_coefficients(&spec).unwrap();
        for j in [0, 7, 40] {
            let lhs = c.gamma_power(j, a) * c.gamma_power(j, b);
            let rhs = c.gamma_power(j, a + b);
            prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn deviation_is_linear(p in prop::collection::vec(-5.0..5.0f64, 40),
                           q in prop::collection::vec(-5.0..5.0f64, 40),
                           a in -2.0..2.0f64, b in -2.0..2.0f64, angle in -3.0..3.0f64) {
        let spec = market(angle, 1.0, 2.0, (1.5, 0.7, -0.4));
        let c = derive_coefficients(&spec).unwrap();
        let x1 = Vector::from_vec(vec![1.0, -1.0]);
        let x2 = Vector::from_vec(vec![0.5, 2.0]);
        let (p1, p2) = (plan_from(&p, x1.clone()), plan_from(&q, x2.clone()));
        let combo: Vec<f64> = p.iter().zip(&q).map(|(u, v)| a * u + b * v).collect();
        let pc = plan_from(&combo, &x1 * a + &x2 * b);
        let d1 = deviation_of_plan(&spec, &c, &p1, None).unwrap();
        let d2 = deviation_of_plan(&spec, &c, &p2, None).unwrap();
        // d = 0 for all three, so the deviation is linear in the plan alone
        let dc = deviation_of_plan(&spec, &c, &pc, None).unwrap();
        for i in 0..20 {
            let lin = &d1.values[i] * a + &d2.values[i] * b;
            prop_assert!((&dc.values[i] - lin).amax() <= 1e-9 * (1.0 + dc.values[i].amax()));
        }
        let lin = &d1.terminal * a + &d2.terminal * b;
        prop_assert!((&dc.terminal - lin).amax() <= 1e-9 * (1.0 + dc.terminal.amax()));
    }

    #[test]
    fn conley_is_scale_invariant(r in (0.5..5.0f64, 0.5..5.0f64, -0.99..0.99f64),
                                 g in (0.5..5.0f64, 0.5..5.0f64, -0.9..0.9f64),
                                 s in 0.1..10.0f64, t in 0.1..10.0f64) {
        let rho = spd(r.0, r.1, r.2);
        let gamma = spd(g.0, g.1, g.2);
        let base = conley(&rho, &gamma).unwrap();
        prop_assert_eq!(conley(&(&rho * s), &(&gamma * t)).unwrap(), base);
    }

    #[test]
    fn strategy_flips_with_position(x1 in -100.0..100.0f64, x2 in -100.0..100.0f64, angle in -3.0..3.0f64) {
        let x = Vector::from_vec(vec![x1, x2]);
        let spec = market(angle, 1.0, 3.0, (2.0, 1.0, 0.5))
            .with_risk(TimeFn::Constant(identity(2) * 0.5));
        let a = solve(&spec.clone().with_position(x.clone())).unwrap();
        let b = solve(&spec.with_position(-x)).unwrap();
        for i in 0..20 {
            prop_assert!((&a.plan.values[i] + &b.plan.values[i]).amax() <= 1e-10 * (1.0 + a.plan.values[i].amax()));
        }
        prop_assert!((a.cost - b.cost).abs() <= 1e-9 * (1.0 + a.cost.abs()));
    }
}
