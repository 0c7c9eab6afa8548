//! Invariants checked on random inputs.

use kmono::estimate::{grenander, invert_mixing};
use kmono::interp::{hermite_interpolant, HermiteData};
use kmono::limit::{lcm_oracle, simulate_many};
use kmono::{
    fit_lse, mixture_density, mixture_to_piecewise, ExecPolicy, FitOptions, MassConstraint, MixingMeasure,
    PiecewisePoly, Sample,
};
use proptest::prelude::*;

/// Sorted distinct atoms with positive weights.
fn measure() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.1f64..5.0, 0.05f64..2.0), 1..8).prop_map(|mut v| {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-3);
        v
    })
}

fn build(pairs: &[(f64, f64)]) -> MixingMeasure {
    MixingMeasure::from_pairs(pairs, MassConstraint::Free).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixtures_alternate_in_sign(pairs in measure(), k in 1usize..=6, x in 0.01f64..6.0) {
        let mm = build(&pairs);
        let g = mixture_to_piecewise(&mm, k).unwrap();
        let scale = mm.total_mass() / pairs[0].0.powi(k as i32) * 100.0;
        for j in 0..k {
            let v = if x >= g.end() { 0.0 } else { g.eval_left(x, j).unwrap() };
            let signed = if j % 2 == 0 { v } else { -v };
            prop_assert!(signed >= -1e-9 * scale, "j = {j}: {v}");
        }
    }

    #[test]
    fn piecewise_form_matches_direct_evaluation(pairs in measure(), k in 2usize..=6, x in 0.01f64..6.0) {
        let mm = build(&pairs);
        let g = mixture_to_piecewise(&mm, k).unwrap();
        let direct = mixture_density(&mm, k, x).unwrap();
        let pw = if x >= g.end() { 0.0 } else { g.eval(x, 0).unwrap() };
        prop_assert!((pw - direct).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn mass_is_the_integral(pairs in measure(), k in 1usize..=6) {
        let mm = build(&pairs);
        let g = mixture_to_piecewise(&mm, k).unwrap();
        let big = g.antiderivative(1, 0.0).unwrap();
        let total = big.eval(big.end(), 0).unwrap();
        prop_assert!((total - mm.total_mass()).abs() <= 1e-10 * mm.total_mass());
    }

    #[test]
    fn inversion_recovers_the_mixing_cdf(pairs in measure(), k in 1usize..=5, u in 0.0f64..1.0) {
        let mm = build(&pairs);
        let g = mixture_to_piecewise(&mm, k).unwrap();
        let t = 0.05 + 6.0 * u;
        prop_assume!(pairs.iter().all(|p| (p.0 - t).abs() > 1e-6));
        let f = invert_mixing(&g, k, t).unwrap();
        prop_assert!((f - mm.cdf(t)).abs() <= 1e-9 * mm.total_mass().max(1.0));
    }

    #[test]
    fn hermite_interpolation_reproduces_polynomials(
        k in 2usize..=5,
        gaps in prop::collection::vec(0.05f64..1.0, 7),
        coeffs in prop::collection::vec(-2.0f64..2.0, 10),
    ) {
        // 2k - 2 sites
        let mut sites = vec![0.0];
        for g in &gaps[..2 * k - 3] {
            sites.push(sites.last().unwrap() + g);
        }
        let end = *sites.last().unwrap();
        let p = PiecewisePoly::from_monomial(0.0, end, &coeffs[..2 * k]).unwrap();
        let h = hermite_interpolant(&HermiteData::from_poly(k, &sites, &p).unwrap()).unwrap();
        let scale = coeffs.iter().map(|c| c.abs()).sum::<f64>() * end.max(1.0).powi(2 * k as i32);
        for i in 0..=50 {
            let x = end * i as f64 / 50.0;
            prop_assert!((h.eval_unchecked(x, 0) - p.eval_unchecked(x, 0)).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn k1_least_squares_fit_is_the_grenander_estimator(values in prop::collection::vec(0.01f64..10.0, 1..25)) {
        let s = Sample::new(values).unwrap();
        let fit = fit_lse(&s, 1, &FitOptions::default()).unwrap();
        let gren = grenander(&s);
        for &x in s.values() {
            let g = gren.eval(x);
            prop_assert!((fit.density(x) - g).abs() <= 1e-8 * g.max(1.0));
        }
    }

    #[test]
    fn concave_majorant_is_concave_and_above(values in prop::collection::vec(-3.0f64..3.0, 3..60)) {
        let grid: Vec<f64> = (0..values.len()).map(|i| i as f64 * 0.1).collect();
        let m = lcm_oracle(&grid, &values);
        for (a, b) in m.iter().zip(&values) {
            prop_assert!(a >= &(b - 1e-12));
        }
        for w in m.windows(3) {
            prop_assert!(w[1] - w[0] >= w[2] - w[1] - 1e-12);
        }
        prop_assert!((m[0] - values[0]).abs() < 1e-12);
        prop_assert!((m[m.len() - 1] - values[values.len() - 1]).abs() < 1e-12);
    }
}

#[test]
fn execution_policy_does_not_change_the_paths() {
    let seq = simulate_many(2, 1.0, 1.0 / 64.0, 17, 6, ExecPolicy::Sequential).unwrap();
    let par = simulate_many(2, 1.0, 1.0 / 64.0, 17, 6, ExecPolicy::Parallel).unwrap();
    assert_eq!(seq, par);
}
