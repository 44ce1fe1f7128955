use tailwealth::ifp::{
    coleman_step, pih_margin_check, policy_lower_bound_check, solve, IfProblem, IfpError,
    MarkovIncome, Policy, SolveConfig,
};
use tailwealth::tails::TailClass;
use tailwealth::utility::UtilitySpec;
use tailwealth::wealth::{
    derive_rho, simulate_panel, tail_inheritance_report, InheritanceConfig, PanelSettings,
};

fn two_state() -> IfProblem {
    IfProblem::with_default_grid(
        0.95,
        1.02,
        UtilitySpec::crra(2.0).unwrap(),
        MarkovIncome::two_state(0.5, 1.5, 0.9).unwrap(),
    )
    .unwrap()
}

/// `|u′(t) − max{βR E u′(c(R(a−t)+y′, z′)), u′(a)}|` on a uniform t-grid.
fn brute_force_node(policy: &Policy, problem: &IfProblem, z: usize, a: f64, points: usize) -> f64 {
    let u = problem.utility();
    let (beta, r) = (problem.beta(), problem.r());
    let inc = problem.income();
    let row = &inc.transition()[z];
    let resid = |t: f64| {
        let e: f64 = row
            .iter()
            .zip(inc.y())
            .enumerate()
            .map(|(zn, (p, y))| p * u.marginal(policy.eval(zn, r * (a - t) + y)).unwrap())
            .sum();
        let rhs = (beta * r * e).max(u.marginal(a).unwrap());
        (u.marginal(t).unwrap() - rhs).abs()
    };
    let h = a / points as f64;
    (1..=points)
        .map(|k| k as f64 * h)
        .map(|t| (t, resid(t)))
        .fold((a, f64::INFINITY), |best, (t, v)| if v < best.1 { (t, v) } else { best })
        .0
}

#[test]
fn coleman_step_matches_brute_force_euler_minimizer() {
    let problem = two_state();
    let (policy, _) = solve(&problem, &SolveConfig::default()).unwrap();
    let next = coleman_step(&policy, &problem).unwrap();
    let nodes = problem.grid().nodes();
    let points = 100_000;
    for z in 0..2 {
        for i in (0..nodes.len()).step_by(13) {
            let a = nodes[i];
            let t = brute_force_node(&policy, &problem, z, a, points);
            // The oracle resolves t to one grid step.
            let tol = 1e-6 + a / points as f64;
            let got = next.values(z)[i];
            assert!((got - t).abs() <= tol, "z={z} a={a}: solver {got} vs brute force {t}");
        }
    }
}

#[test]
fn modulus_stays_near_beta_r_at_every_iteration() {
    let problem = two_state();
    let (_, report) = solve(&problem, &SolveConfig::default()).unwrap();
    assert!(report.converged);
    let h = &report.metric_history;
    for w in h.windows(2) {
        if w[0] > report.effective_tolerance * 10.0 {
            assert!(w[1] / w[0] <= 0.95 * 1.02 + 0.01, "ratio {}", w[1] / w[0]);
        }
    }
}

#[test]
fn iid_income_gives_state_independent_policy() {
    let problem = IfProblem::with_default_grid(
        0.95,
        1.02,
        UtilitySpec::crra(2.0).unwrap(),
        MarkovIncome::iid(vec![0.5, 1.0, 1.5], vec![0.3, 0.4, 0.3]).unwrap(),
    )
    .unwrap();
    let (policy, _) = solve(&problem, &SolveConfig::default()).unwrap();
    for z in 1..3 {
        assert_eq!(policy.values(z), policy.values(0));
    }
}

#[test]
fn positive_income_policy_strictly_dominates_lower_bound() {
    let problem = two_state();
    let (policy, _) = solve(&problem, &SolveConfig::default()).unwrap();
    let rep = policy_lower_bound_check(&policy, &problem, 0.0).unwrap();
    assert!(rep.holds && rep.min_gap > 0.0, "{rep:?}");
    let pih = pih_margin_check(&policy, &problem, 2.0).unwrap();
    assert!(pih.holds);
}

#[test]
fn margin_check_is_inapplicable_below_unit_rate() {
    let problem = IfProblem::with_default_grid(
        0.95,
        0.99,
        UtilitySpec::crra(2.0).unwrap(),
        MarkovIncome::two_state(0.5, 1.5, 0.9).unwrap(),
    )
    .unwrap();
    let (policy, _) = solve(&problem, &SolveConfig::default()).unwrap();
    assert!(matches!(
        pih_margin_check(&policy, &problem, 2.0),
        Err(IfpError::RateBelowOne(_))
    ));
    assert_eq!(derive_rho(&problem, 2.0).unwrap().rho, 0.99);
}

#[test]
fn bounded_income_wealth_is_bounded_and_not_heavy() {
    let problem = two_state();
    let (policy, _) = solve(&problem, &SolveConfig::default()).unwrap();
    let rho = derive_rho(&problem, 2.0).unwrap().rho;
    let a_hat = pih_margin_check(&policy, &problem, 2.0).unwrap().a_hat;
    let panel = simulate_panel(&policy, &problem, &PanelSettings::new(20_000, 500, 11)).unwrap();
    let rep =
        tail_inheritance_report(&panel, &problem, rho, a_hat, &InheritanceConfig::default())
            .unwrap();
    let bound = rep.hard_bound.unwrap();
    assert!(rep.max_wealth <= bound, "{} > {bound}", rep.max_wealth);
    assert_ne!(rep.wealth.classification, TailClass::Heavy);
    assert!(rep.holds, "{rep:?}");
}
