use mexec_core::checks::{assumption_audit, CheckStatus};
use mexec_core::lindyn::{cost_quadratic_form, fv_cost, pathwise_cost, risk_cost, ExecutionPlan};
use mexec_core::montecarlo::{mc_cost, SimConfig, StrategyRule};
use mexec_core::optimal::{build_pipeline, solve, SolutionMode};
use mexec_core::presets;
use mexec_core::riccati::step_halving_defect;
use mexec_core::{derive_coefficients, ExecError, Vector};

#[test]
fn presets_pass_hard_checks() {
    for spec in [
        presets::non_commuting(),
        presets::cross_risk(),
        presets::cross_impact(),
        presets::stochastic_impact(),
        presets::targeted(),
    ] {
        let spec = spec.with_grid(50);
        let c = derive_coefficients(&spec).unwrap();
        let report = assumption_audit(&spec, &c);
        assert!(report.passes_hard_checks(), "{report}");
        assert_eq!(report.get("kappa_pd").unwrap().status, CheckStatus::Pass);
    }
}

#[test]
fn indefinite_kappa_is_flagged() {
    let spec = presets::indefinite_kappa(0.2).with_grid(50);
    let c = derive_coefficients(&spec).unwrap();
    let report = assumption_audit(&spec, &c);
    assert_eq!(report.get("kappa_pd").unwrap().status, CheckStatus::Fail);
    assert!(!report.passes_hard_checks());
}

#[test]
fn riccati_converges_under_step_halving() {
    let spec = presets::targeted();
    let coarse = step_halving_defect(&spec.clone().with_grid(20)).unwrap();
    let fine = step_halving_defect(&spec.with_grid(40)).unwrap();
    // fourth order: each halving should gain well over a factor of eight
    assert!(fine < coarse / 8.0, "{coarse:e} -> {fine:e}");
}

#[test]
fn pathwise_cost_matches_quadratic_form_at_first_order() {
    let mut gaps = Vec::new();
    for n in [100, 200, 400] {
        let spec = presets::cross_impact().with_grid(n);
        let c = derive_coefficients(&spec).unwrap();
        let plan = ExecutionPlan::from_fn(
            c.grid(),
            spec.x0.clone(),
            |s| Vector::from_vec(vec![80.0 * (1.0 - s), 20.0 * s * (1.0 - s)]),
            Vector::zeros(2),
        );
        let a = pathwise_cost(&spec, &c, &plan, None).unwrap();
        let b = cost_quadratic_form(&spec, &c, &plan, None).unwrap();
        gaps.push((a - b).abs());
    }
    assert!(gaps[1] < 0.6 * gaps[0] && gaps[2] < 0.6 * gaps[1], "{gaps:?}");
}

#[test]
fn optimal_plan_reproduces_analytic_cost() {
    for spec in [presets::cross_risk(), presets::targeted()] {
        let spec = spec.with_grid(400);
        let c = derive_coefficients(&spec).unwrap();
        let sol = solve(&spec).unwrap();
        let fv = fv_cost(&spec, &c, &sol.plan_mid).unwrap();
        assert!((fv - sol.cost).abs() < 1e-4 * sol.cost.abs(), "{fv} vs {}", sol.cost);
    }
}

#[test]
fn empty_plan_costs_nothing() {
    let spec = presets::cross_risk().with_position(Vector::zeros(2)).with_grid(30);
    let c = derive_coefficients(&spec).unwrap();
    let plan = ExecutionPlan::immediate(&Vector::zeros(2), &Vector::zeros(2), 30);
    assert_eq!(fv_cost(&spec, &c, &plan).unwrap(), 0.0);
    assert_eq!(risk_cost(&c, &plan).unwrap(), 0.0);
}

#[test]
fn general_targets_select_transformed_pipeline() {
    let spec = presets::targeted().with_grid(50);
    let c = derive_coefficients(&spec).unwrap();
    assert_eq!(SolutionMode::for_coefficients(&c), SolutionMode::GeneralTarget);
    assert_eq!(solve(&spec).unwrap().mode, SolutionMode::GeneralTarget);
}

#[test]
fn monte_carlo_rejects_grid_mismatch() {
    let spec = presets::stochastic_impact().with_grid(40);
    let c = derive_coefficients(&spec).unwrap();
    let p = build_pipeline(&c, SolutionMode::ZeroTarget).unwrap();
    let err = mc_cost(&spec, &c, StrategyRule::Feedback(&p.rule), &SimConfig::new(10, 1, 41)).unwrap_err();
    assert!(matches!(err, ExecError::Config(_)));
}

#[test]
fn deterministic_monte_carlo_matches_analytic_cost() {
    let spec = presets::cross_risk().with_grid(400);
    let c = derive_coefficients(&spec).unwrap();
    let p = build_pipeline(&c, SolutionMode::ZeroTarget).unwrap();
    let est = mc_cost(&spec, &c, StrategyRule::Feedback(&p.rule), &SimConfig::new(5, 3, 400)).unwrap();
    let exact = p.cost(&spec, &c).unwrap();
    assert_eq!(est.stderr, 0.0);
    assert!((est.mean - exact).abs() < 1e-3 * exact.abs());
}
