use std::sync::Arc;

use proptest::prelude::*;
use tailwealth::contraction::{
    compact_support_bound, simulate_recursion, trace_path, ContractionMap, ShockDistribution,
    ShockFamily,
};
use tailwealth::hetbeta::{excess_demand, solve_equilibrium, AgentType, Economy};
use tailwealth::ifp::{coleman_step, AssetGrid, IfProblem, MarkovIncome, Policy};
use tailwealth::io::{read_column, write_column};
use tailwealth::tails::{
    empirical_mgf, exponential_decay_rate, markov_bound_check, polynomial_decay_rate, MgfValue,
    TailSample,
};
use tailwealth::utility::UtilitySpec;

fn sample_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..50.0, min..max)
}

fn dist_strategy() -> impl Strategy<Value = ShockDistribution> {
    prop_oneof![
        (0.0f64..2.0, 0.0f64..3.0).prop_map(|(lo, w)| ShockDistribution::Uniform { lo, hi: lo + w }),
        (0.2f64..5.0).prop_map(|rate| ShockDistribution::Exponential { rate }),
        (1.1f64..4.0, 0.1f64..2.0).prop_map(|(alpha, xmin)| ShockDistribution::Pareto { alpha, xmin }),
    ]
}

fn map_strategy() -> impl Strategy<Value = ContractionMap> {
    prop_oneof![
        (0.0f64..0.95).prop_map(|r| ContractionMap::linear(r).unwrap()),
        (0.0f64..0.95, 0.0f64..5.0).prop_map(|(r, cap)| ContractionMap::linear_plus_cap(r, cap).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mgf_at_zero_is_one_and_monotone(values in sample_strategy(1, 200)) {
        let s = TailSample::new(values, "p").unwrap();
        let curve = empirical_mgf(&s, &[0.0, 0.01, 0.05, 0.1]).unwrap();
        prop_assert_eq!(curve.m_values[0], MgfValue::Finite(1.0));
        let finite: Vec<f64> = curve.m_values.iter().filter_map(|m| m.finite()).collect();
        prop_assert!(finite.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
    }

    #[test]
    fn markov_bound_holds_on_empirical_measure(
        values in sample_strategy(1, 200),
        s in 0.01f64..1.0,
        xs in prop::collection::vec(-5.0f64..60.0, 1..10),
    ) {
        let sample = TailSample::new(values, "p").unwrap();
        for pt in markov_bound_check(&sample, s, &xs).unwrap() {
            prop_assert!(pt.holds, "{pt:?}");
        }
    }

    #[test]
    fn hill_is_scale_invariant(values in prop::collection::vec(1.0f64..1e4, 120..300), c in 0.01f64..100.0) {
        let a = TailSample::new(values.clone(), "p").unwrap();
        let b = TailSample::new(values.iter().map(|v| v * c).collect(), "p").unwrap();
        let (ea, eb) = (polynomial_decay_rate(&a, 50), polynomial_decay_rate(&b, 50));
        if let (Ok(ea), Ok(eb)) = (ea, eb) {
            prop_assert!((ea.estimate - eb.estimate).abs() <= 1e-9 * ea.estimate.abs());
        }
    }

    #[test]
    fn survival_slope_is_scale_equivariant(values in prop::collection::vec(0.0f64..1e3, 200..400), c in 0.1f64..10.0) {
        let a = TailSample::new(values.clone(), "p").unwrap();
        let b = TailSample::new(values.iter().map(|v| v * c).collect(), "p").unwrap();
        if let (Ok(ea), Ok(eb)) = (exponential_decay_rate(&a, 0.1), exponential_decay_rate(&b, 0.1)) {
            prop_assert!((ea.estimate - c * eb.estimate).abs() <= 1e-8 * ea.estimate.abs().max(1e-12));
        }
    }

    #[test]
    fn larger_shocks_give_larger_paths(
        map in map_strategy(),
        dist in dist_strategy(),
        c in 1.0f64..4.0,
        x0 in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let base = ShockFamily::iid(dist).unwrap();
        let big = base.scaled(c).unwrap();
        for i in 0..4 {
            let p = trace_path(&map, &base, x0, 30, seed, i);
            let q = trace_path(&map, &big, x0, 30, seed, i);
            for (x, y) in p.values.iter().zip(&q.values) {
                prop_assert!(y >= x, "{x} > {y}");
            }
        }
    }

    #[test]
    fn perfectly_correlated_paths_are_geometric_sums(
        rho in 0.0f64..0.95,
        dist in dist_strategy(),
        x0 in 0.0f64..5.0,
        steps in 1usize..100,
        seed in any::<u64>(),
    ) {
        let map = ContractionMap::linear(rho).unwrap();
        let shocks = ShockFamily::perfectly_correlated(dist).unwrap();
        let t = trace_path(&map, &shocks, x0, steps, seed, 3);
        let y1 = t.shocks[0];
        let rt = rho.powi(steps as i32);
        let exact = (1.0 - rt) / (1.0 - rho) * y1 + rt * x0;
        let got = *t.values.last().unwrap();
        prop_assert!((got - exact).abs() <= 1e-12 * exact.max(1.0), "{got} vs {exact}");
    }

    #[test]
    fn compact_bound_is_never_exceeded(
        map in map_strategy(),
        hi in 0.0f64..3.0,
        x0 in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let shocks = ShockFamily::iid(ShockDistribution::Uniform { lo: 0.0, hi }).unwrap();
        let panel = simulate_recursion(&map, &shocks, x0, 60, 200, seed).unwrap();
        let bound = compact_support_bound(&map, hi, x0).unwrap();
        prop_assert!(panel.running_max <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn inverse_marginal_round_trips(
        x in 1e-3f64..1e4,
        gamma in 0.2f64..6.0,
        a in 0.05f64..3.0,
        b in 0.0f64..3.0,
    ) {
        for u in [
            UtilitySpec::crra(gamma).unwrap(),
            UtilitySpec::hara(a, b).unwrap(),
            UtilitySpec::log_shifted(b).unwrap(),
        ] {
            let m = u.marginal(x).unwrap();
            let back = u.inverse_marginal(m).unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.max(1.0), "{u:?}: {back} vs {x}");
        }
        let cara = UtilitySpec::cara(b + 0.1).unwrap();
        let xs = x.min(50.0);
        let back = cara.inverse_marginal(cara.marginal(xs).unwrap()).unwrap();
        prop_assert!((back - xs).abs() <= 1e-9 * xs.max(1.0));
    }

    #[test]
    fn rra_matches_finite_difference(
        x in 0.1f64..100.0,
        gamma in 0.2f64..6.0,
        a in 0.05f64..3.0,
        b in 0.0f64..3.0,
    ) {
        for u in [
            UtilitySpec::crra(gamma).unwrap(),
            UtilitySpec::hara(a, b).unwrap(),
            UtilitySpec::cara(b + 0.1).unwrap(),
            UtilitySpec::log_shifted(b).unwrap(),
        ] {
            let h = 1e-5 * x;
            let d = (u.log_marginal(x + h).unwrap() - u.log_marginal(x - h).unwrap()) / (2.0 * h);
            let fd = -x * d;
            let exact = u.rra(x).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{u:?}: {fd} vs {exact}");
        }
    }

    #[test]
    fn column_csv_round_trips(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..50)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_column(&p, "x", &values).unwrap();
        prop_assert_eq!(read_column(&p).unwrap(), values);
    }
}

fn small_problem(beta: f64, r: f64, gamma: f64, y_lo: f64, y_hi: f64, stay: f64) -> IfProblem {
    IfProblem::new(
        beta,
        r,
        UtilitySpec::crra(gamma).unwrap(),
        MarkovIncome::two_state(y_lo, y_hi, stay).unwrap(),
        AssetGrid::geometric(1e-3, 50.0, 60).unwrap(),
    )
    .unwrap()
}

fn scaled_policy(grid: &Arc<AssetGrid>, states: usize, lambda: f64) -> Policy {
    let v: Vec<Vec<f64>> = (0..states)
        .map(|_| grid.nodes().iter().map(|a| lambda * a).collect())
        .collect();
    Policy::new(grid.clone(), v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coleman_operator_is_monotone_self_map(
        beta in 0.85f64..0.97,
        r in 0.98f64..1.03,
        gamma in 0.5f64..4.0,
        y_lo in 0.1f64..1.0,
        spread in 0.0f64..2.0,
        stay in 0.5f64..0.99,
        lambda in 0.05f64..1.0,
    ) {
        prop_assume!(beta * r < 1.0);
        let problem = small_problem(beta, r, gamma, y_lo, y_lo + spread, stay);
        let grid = Arc::new(problem.grid().clone());
        let low = scaled_policy(&grid, 2, lambda);
        let high = scaled_policy(&grid, 2, 1.0);
        let kl = coleman_step(&low, &problem).unwrap();
        let kh = coleman_step(&high, &problem).unwrap();
        let nodes = grid.nodes();
        for z in 0..2 {
            for i in 0..nodes.len() {
                let (cl, ch) = (kl.values(z)[i], kh.values(z)[i]);
                prop_assert!(cl <= ch * (1.0 + 1e-12), "z={z} i={i}: {cl} > {ch}");
                prop_assert!(cl > 0.0 && cl <= nodes[i]);
                if i > 0 {
                    prop_assert!(kl.values(z)[i] >= kl.values(z)[i - 1]);
                }
            }
        }
    }

    #[test]
    fn equilibrium_properties(
        p in 0.005f64..0.1,
        g1 in 0.5f64..4.0,
        g2 in 0.5f64..4.0,
        b1 in 0.85f64..0.95,
        gap in 0.005f64..0.04,
        pi in 0.1f64..0.9,
        c in 0.1f64..20.0,
    ) {
        let t = |pi, beta, gamma| AgentType { pi, p, y: 1.0, beta, gamma };
        let e = Economy::new(vec![t(pi, b1, g1), t(1.0 - pi, b1 + gap, g2)]).unwrap();
        prop_assert!(excess_demand(&e, 1.0).unwrap() < 0.0);
        let res = solve_equilibrium(&e, 1e-12).unwrap();
        prop_assert!(res.excess_demand.abs() < 1e-10);
        for (ty, o) in e.types().iter().zip(&res.types) {
            let rhs = (1.0 - ty.p) * o.growth * o.mean_wealth + ty.p * o.w0;
            prop_assert!((o.mean_wealth - rhs).abs() <= 1e-12 * o.mean_wealth);
        }
        if let Some(alpha) = res.alpha {
            prop_assert!(alpha > 1.0);
        }
        let scaled = solve_equilibrium(&e.scale_endowments(c).unwrap(), 1e-12 * c).unwrap();
        prop_assert!((scaled.r - res.r).abs() < 1e-10, "{} vs {}", scaled.r, res.r);
    }
}
