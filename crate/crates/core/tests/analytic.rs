mod common;

use approx::assert_abs_diff_eq;
use gravojcm::blockalg::{coefficient_set, effective_coupling, Frame, NodeContext};
use gravojcm::config::{coherent_weights, FormulaMode, PhysicalParams};
use gravojcm::evolve::{evaluate_node, series_sum, node_purity, SeriesControl, TailBound};
use gravojcm::oracle::{extract_elements, TruncatedOperatorSet};
use gravojcm::scaled::Scaled;
use gravojcm::C64;
use proptest::prelude::*;

fn params() -> PhysicalParams {
    common::reference().physical
}

fn max_diff_c(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn exact_mode_matches_frozen_dense_solution() {
    let mut cfg = common::reference();
    cfg.physical.alpha = C64::new(1.2, 0.5);
    cfg.physical.qg = 1.5e7;
    let n_max = 12;
    cfg.numerics.n_max = n_max;
    let w = coherent_weights(cfg.physical.alpha, n_max);
    for &(p, lt) in &[(-1.3, 3.0), (0.0, 11.0), (0.83, 24.0), (-2.1, 0.4)] {
        let t = lt / cfg.physical.lambda;
        let ctx = NodeContext::new(p, t, &cfg.physical);
        let got = evaluate_node(&ctx, &w, FormulaMode::BlockExact, &cfg.numerics);
        assert!(got.converged);
        let rho = common::frozen_density(&cfg.physical, p, t, n_max, n_max + 2);
        let want = extract_elements(&rho, &TruncatedOperatorSet::new(n_max + 2), n_max);
        let e = &got.elements;
        let err = [
            max_diff(&e.m11, &want.m11),
            max_diff(&e.m22, &want.m22),
            max_diff_c(&e.m12, &want.m12),
            max_diff_c(&e.m11_a, &want.m11_a),
            max_diff_c(&e.m22_a, &want.m22_a),
            max_diff_c(&e.m11_a2, &want.m11_a2),
            max_diff_c(&e.m22_a2, &want.m22_a2),
        ];
        assert!(err.iter().all(|&x| x < 1e-10), "p={p} lt={lt}: {err:?}");
        assert!(got.hermiticity_residual < 1e-12);
    }
}

#[test]
fn coefficients_are_identity_at_t0() {
    let ctx = NodeContext::new(0.3, 0.0, &params());
    for mode in [FormulaMode::PaperFaithful, FormulaMode::BlockExact] {
        for n in 0..6 {
            let c = coefficient_set(n, &ctx, mode, Frame::Absolute).unwrap();
            assert_abs_diff_eq!(c.d1.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(c.d4.re, 1.0, epsilon = 1e-15);
            assert!(c.d2.norm() < 1e-15 && c.d3.norm() < 1e-15);
            assert_abs_diff_eq!(c.e1.re(), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(c.e4.re(), 1.0, epsilon = 1e-15);
            assert!(c.e2.to_c64().norm() < 1e-15 && c.e3.to_c64().norm() < 1e-15);
        }
    }
}

#[test]
fn undamped_e_family_is_trivial() {
    let mut p = params();
    p.gamma = 0.0;
    let ctx = NodeContext::new(0.3, 7e-6, &p);
    for mode in [FormulaMode::PaperFaithful, FormulaMode::BlockExact] {
        for n in 0..6 {
            let c = coefficient_set(n, &ctx, mode, Frame::Absolute).unwrap();
            assert_eq!((c.e1.re(), c.e4.re()), (1.0, 1.0));
            assert!(c.e2.is_zero() && c.e3.is_zero());
        }
    }
}

#[test]
fn negative_index_is_rejected() {
    let ctx = NodeContext::new(0.0, 1e-6, &params());
    assert!(coefficient_set(-1, &ctx, FormulaMode::BlockExact, Frame::Absolute).is_err());
}

#[test]
fn resonant_quarter_period() {
    let p = params();
    let pr = p.resonant_momentum();
    for n in 0..5i64 {
        let om = p.lambda * ((n + 1) as f64).sqrt();
        let t = std::f64::consts::FRAC_PI_2 / om;
        let ctx = NodeContext::new(pr, t, &p);
        assert!(ctx.detuning.abs() < 1e-6);
        let c = coefficient_set(n, &ctx, FormulaMode::BlockExact, Frame::Absolute).unwrap();
        assert!(c.d1.norm() < 1e-10);
        // d2 √(n+1) = -i κ*/λ at the quarter period
        assert!((c.d2 * ((n + 1) as f64).sqrt() * p.lambda / ctx.kappa.conj() + C64::i()).norm() < 1e-10);
    }
}

#[test]
fn coupling_modulus_is_lambda() {
    let p = params();
    for &(q, t) in &[(0.0, 0.0), (1.7, 3e-6), (-4.0, 2.5e-5)] {
        assert_abs_diff_eq!(effective_coupling(q, t, &p).norm(), p.lambda, epsilon = 1e-6);
    }
}

#[test]
fn series_of_unit_terms_is_exponential() {
    let x = 3.7;
    let ctrl = SeriesControl { two_gamma_t: x, tol: 1e-14, k_max: 200 };
    let bound = TailBound { ln_scale: 0.0, rate: 1.0 };
    let s = series_sum(&ctrl, &[bound], Scaled::ZERO, |_, w, acc| *acc += w, |a| a.ln_abs());
    assert!(s.converged);
    assert!((s.partial.re() - x.exp()).abs() < 1e-12 * x.exp());
}

#[test]
fn undamped_series_stops_at_zero() {
    let ctrl = SeriesControl { two_gamma_t: 0.0, tol: 1e-12, k_max: 200 };
    let bound = TailBound { ln_scale: 0.0, rate: 1.0 };
    let s = series_sum(&ctrl, &[bound], Scaled::ZERO, |_, w, acc| *acc += w.scale(2.5), |a| a.ln_abs());
    assert_eq!(s.k_reached, 0);
    assert_eq!(s.partial.re(), 2.5);
}

#[test]
fn truncated_series_matches_long_fixed_sum() {
    let cfg = common::reference();
    let t = 1e-5;
    let ctx = NodeContext::new(0.4, t, &cfg.physical);
    let w = coherent_weights(cfg.physical.alpha, cfg.numerics.n_max);
    let adaptive = evaluate_node(&ctx, &w, FormulaMode::BlockExact, &cfg.numerics);
    let mut fixed = cfg.numerics.clone();
    fixed.series_tol = 1e-300;
    let long = evaluate_node(&ctx, &w, FormulaMode::BlockExact, &fixed);
    assert!(adaptive.converged);
    assert!(long.k_reached > adaptive.k_reached);
    let rel = max_diff(&adaptive.elements.m11, &long.elements.m11)
        .max(max_diff(&adaptive.elements.m22, &long.elements.m22));
    assert!(rel < 1e-10, "{rel}");
}

#[test]
fn undamped_frozen_node_stays_pure() {
    let mut cfg = common::reference();
    cfg.physical.gamma = 0.0;
    let w = coherent_weights(cfg.physical.alpha, cfg.numerics.n_max);
    let norm: f64 = w.iter().map(|x| x.norm_sqr()).sum();
    for lt in [0.0, 4.0, 19.0] {
        let ctx = NodeContext::new(cfg.physical.frozen_phase_momentum(), lt / cfg.physical.lambda, &cfg.physical);
        let pu = node_purity(&ctx, &w, &cfg.numerics).unwrap();
        assert!((pu - norm * norm).abs() < 1e-8, "{pu}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagator_blocks_are_unitary(n in 0i64..30, lt in 0.0f64..25.0, p in -3.0f64..3.0, qg in 0.0f64..2e7) {
        let mut par = params();
        par.qg = qg;
        let t = lt / par.lambda;
        let ctx = NodeContext::new(p, t, &par);
        let c = coefficient_set(n, &ctx, FormulaMode::BlockExact, Frame::Absolute).unwrap();
        let up = coefficient_set(n + 1, &ctx, FormulaMode::BlockExact, Frame::Absolute).unwrap();
        let r = ((n + 1) as f64).sqrt();
        let (a, b, cc, d) = (c.d1, c.d2 * r, up.d3 * r, up.d4);
        prop_assert!((a.norm_sqr() + cc.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((b.norm_sqr() + d.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((a.conj() * b + cc.conj() * d).norm() < 1e-12);
    }

    #[test]
    fn coherent_weight_ratio(re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let a = C64::new(re, im);
        let w = coherent_weights(a, 30);
        for n in 0..30 {
            if w[n].norm() > 1e-300 {
                let ratio = w[n + 1].norm() / w[n].norm();
                prop_assert!((ratio - a.norm() / ((n + 1) as f64).sqrt()).abs() < 1e-12 * (1.0 + ratio));
            }
        }
    }
}
