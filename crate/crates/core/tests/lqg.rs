mod common;

use common::lqg::*;
use ctlcap::capacity::{expected_cost, kappa_min, kappa_min_stationary, stage_rates, synthesize_control, StrategyParams};
use ctlcap::riccati::*;
use ctlcap::{stationary, LqgSystem, StageMatrices};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn finite_kappa_min_matches_textbook_lqg() {
    for st in [scalar_plant(), two_state_plant()] {
        for n in [1, 2, 7, 40] {
            let sys = plant_system(st.clone(), n);
            let ours = kappa_min(&sys).unwrap();
            let oracle = optimal_cost(&sys) / n as f64;
            assert!(rel(ours, oracle) < 1e-10, "n={n}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn stationary_kappa_min_matches_textbook_lqg() {
    for st in [scalar_plant(), two_state_plant()] {
        let ours = kappa_min_stationary(&st).unwrap();
        let oracle = optimal_average_cost(&st);
        assert!(rel(ours, oracle) < 1e-8, "{ours} vs {oracle}");
    }
}

#[test]
fn zero_rate_strategy_cost_is_the_textbook_optimum() {
    let sys = plant_system(two_state_plant(), 12);
    let strat = StrategyParams::zero_rate(&sys).unwrap();
    assert!(rel(expected_cost(&sys, &strat).unwrap(), optimal_cost(&sys)) < 1e-10);
}

fn scalar_stage() -> impl Strategy<Value = StageMatrices> {
    (-1.5f64..1.5, -1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.5, -1.0f64..1.0, 0.2f64..1.5, 0.2f64..2.0, 0.0f64..1.0, 0.1f64..2.0)
        .prop_map(|(f, b, c, d, g, n, kw, q, r)| StageMatrices::scalar(f, b, c, d, g, n, kw, q, r))
}

fn s(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn filter_dre_is_monotone(st in scalar_stage(), a in 0.0f64..5.0, extra in 0.0f64..5.0) {
        let lo = filter_dre_step(&s(a), &st).unwrap()[(0, 0)];
        let hi = filter_dre_step(&s(a + extra), &st).unwrap()[(0, 0)];
        prop_assert!(hi >= lo - 1e-12 * hi.abs().max(1.0));
    }

    #[test]
    fn joseph_and_gain_forms_agree(st in scalar_stage(), sig in 0.0f64..5.0) {
        let sig = s(sig);
        let m = compute_filter_gain(&sig, &st).unwrap();
        let kih = innovations_cov_state(&sig, &st);
        let gain_form = &st.f * &sig * st.f.transpose() + &st.g * &st.k_w * st.g.transpose() - &m * &kih * m.transpose();
        let next = filter_dre_step(&sig, &st).unwrap();
        prop_assert!((next[(0, 0)] - gain_form[(0, 0)]).abs() <= 1e-10 * next[(0, 0)].abs().max(1.0));
    }

    #[test]
    fn output_innovations_dominate_state_innovations(st in scalar_stage(), sig in 0.0f64..3.0, k in 0.0f64..3.0, g1 in -2.0f64..2.0, kz in 0.0f64..2.0) {
        let kih = innovations_cov_state(&s(sig), &st);
        let ki = output_innovations_cov(&s(k), &kih, &s(g1), &s(kz), &st);
        prop_assert!(ki[(0, 0)] >= kih[(0, 0)] - 1e-12);
    }

    #[test]
    fn control_part_cancels_signalling_gain(g1 in prop::collection::vec(-3.0f64..3.0, 6), f in -1.2f64..1.2, c in -1.0f64..1.0) {
        let st = StageMatrices::scalar(f, 0.0, c, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        let sys = stationary(st, DVector::zeros(1), s(1.0), 6).unwrap();
        let gamma1: Vec<_> = g1.iter().map(|&v| s(v)).collect();
        let kz = vec![s(0.3); 6];
        let g2 = synthesize_control(&sys, &gamma1, &kz).unwrap().gamma2;
        for (a, b) in g2.iter().zip(&gamma1) {
            prop_assert!((a[(0, 0)] + b[(0, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbing_control_part_never_helps(st in scalar_stage(), g1 in -1.5f64..1.5, kz in 0.0f64..1.0, t in 0usize..4, delta in -1.0f64..1.0) {
        let sys = stationary(st, DVector::from_element(1, 0.4), s(0.7), 4).unwrap();
        let gamma1 = vec![s(g1); 4];
        let k_z = vec![s(kz); 4];
        let syn = synthesize_control(&sys, &gamma1, &k_z).unwrap();
        let best = StrategyParams { gamma1: gamma1.clone(), gamma2: syn.gamma2.clone(), k_z: k_z.clone() };
        let mut worse = best.clone();
        worse.gamma2[t][(0, 0)] += delta;
        let j_best = expected_cost(&sys, &best).unwrap();
        prop_assert!((j_best - syn.cost).abs() <= 1e-8 * j_best.abs().max(1.0));
        prop_assert!(expected_cost(&sys, &worse).unwrap() >= j_best - 1e-9 * j_best.abs().max(1.0));
        let rates = stage_rates(&sys, &gamma1, &k_z).unwrap();
        prop_assert!(rates.iter().all(|r| *r >= 0.0));
    }

    #[test]
    fn stationary_validation_matches_one_stage(f in -2.0f64..2.0, n in -1.0f64..1.0, kw in -0.5f64..1.0, r in -0.5f64..1.0, k in -0.5f64..1.0, len in 1usize..5) {
        let st = StageMatrices::scalar(f, 0.0, 1.0, 1.0, 1.0, n, kw, 0.0, r);
        let one = LqgSystem { stages: vec![st], mu_x1: DVector::zeros(1), k_x1: s(k) };
        let many = one.with_horizon(len);
        prop_assert_eq!(one.validate().is_empty(), many.validate().is_empty());
        prop_assert_eq!(stationary(one.stages[0].clone(), DVector::zeros(1), s(k), len).is_ok(), one.validate().is_empty());
    }
}
