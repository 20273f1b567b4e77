use mho_core::dynamics::{integrate_step, transition, InputSequence, StateVector, VanDerPol};
use mho_core::rate_adapter::{update_q, RateState};
use mho_core::scenario::{indicators, RunResult};
use proptest::prelude::*;

fn run(setting_id: usize, scenario_id: usize, costs: Vec<f64>) -> RunResult {
    RunResult {
        setting_id,
        scenario_id,
        x_hat0: [0.0; 3],
        q_series: vec![20; costs.len()],
        error_series: vec![[0.0; 3]; costs.len()],
        cost_series: costs,
        cycles: Vec::new(),
    }
}

proptest! {
    #[test]
    fn transition_composes(
        x1 in -2.0..2.0f64, x2 in -2.0..2.0f64, x3 in 0.1..3.0f64,
        inputs in prop::collection::vec(0.5..1.5f64, 0..40),
        split in 0usize..40,
    ) {
        let m = VanDerPol::new(10.0);
        let x0 = StateVector::<3>::new(x1, x2, x3);
        let split = split.min(inputs.len());
        let seq = InputSequence::new(&inputs, 0.002);
        let whole = transition(&m, inputs.len(), &x0, seq).unwrap();
        let mid = transition(&m, split, &x0, seq).unwrap();
        let parts = transition(&m, inputs.len() - split, &mid, seq.skip(split)).unwrap();
        prop_assert!((whole - parts).norm() <= 1e-12 * (1.0 + whole.norm()));
    }

    #[test]
    fn single_step_transition_is_integrate_step(x1 in -2.0..2.0f64, x2 in -2.0..2.0f64, u in 0.5..1.5f64) {
        let m = VanDerPol::new(7.0);
        let x0 = StateVector::<3>::new(x1, x2, 1.0);
        let a = transition(&m, 1, &x0, InputSequence::new(&[u], 0.002)).unwrap();
        let b = integrate_step(&m, &x0, u, 0.002).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn q_stays_in_bounds(
        q_min in 2usize..60, span in 0usize..400, delta in 0usize..50,
        steps in prop::collection::vec((0.0..2.0f64, -1e3..1e3f64), 1..200),
    ) {
        let mut s = RateState::new(q_min, q_min, q_min + span, delta).unwrap();
        for (k, g) in steps {
            let next = update_q(&s, k, g, -g);
            prop_assert!(next.q >= q_min && next.q <= q_min + span);
            prop_assert!(next.q.abs_diff(s.q) <= delta);
            s = next;
        }
    }

    #[test]
    fn indicators_are_order_and_scale_invariant(
        costs in prop::collection::vec(prop::collection::vec(0.1..100.0f64, 6), 6),
        scale in 0.01..100.0f64,
        rotate in 0usize..6,
    ) {
        // 3 settings x 2 scenarios
        let runs: Vec<RunResult> = costs.iter().enumerate().map(|(i, c)| run(i / 2 + 1, i % 2, c.clone())).collect();
        let a = indicators(&runs).unwrap();
        let mut shuffled: Vec<RunResult> = runs.iter().map(|r| run(r.setting_id, r.scenario_id, r.cost_series.iter().map(|j| j * scale).collect())).collect();
        shuffled.rotate_left(rotate);
        let b = indicators(&shuffled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.m - y.m).abs() <= 1e-9 * (1.0 + x.m.abs()));
            prop_assert!((x.sigma - y.sigma).abs() <= 1e-9 * (1.0 + x.sigma.abs()));
        }
    }
}
