//! Invariants checked on generated inputs.

use perlat::curve::{uniform_grid, CurveKind, SummaryCurve};
use perlat::envelope::{rank_envelope, RankMeasure};
use perlat::estimators::{
    g_nearest_neighbor, k_empirical, pcf_empirical, rescale_to_unit_intensity, scattering_intensity,
};
use perlat::field::CovarianceModel;
use perlat::fit::{contrast, ContrastSpec};
use perlat::ktheory::k_theoretical;
use perlat::special::noncentral_chisq_cdf;
use perlat::{BoxWindow, PointPattern};
use proptest::prelude::*;

fn pattern_strategy() -> impl Strategy<Value = PointPattern> {
    (20usize..120, 6.0f64..10.0).prop_flat_map(|(n, side)| {
        prop::collection::vec(prop::collection::vec(0.0..1.0f64, 3), n).prop_map(move |unit| {
            let w = BoxWindow::cube(3, side).unwrap();
            let pts = unit.into_iter().map(|u| u.into_iter().map(|v| v * side).collect()).collect();
            PointPattern::new(w, pts).unwrap()
        })
    })
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ncx2_is_a_cdf(d in 1u32..=3, eta in 0.0f64..300.0, x in 0.0f64..400.0, dx in 0.0f64..50.0) {
        let a = noncentral_chisq_cdf(d, x, eta).unwrap();
        let b = noncentral_chisq_cdf(d, x + dx, eta).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a - 1e-14);
    }

    #[test]
    fn ncx2_decreases_in_noncentrality(d in 1u32..=3, x in 0.1f64..200.0, eta in 0.0f64..200.0, de in 0.0f64..20.0) {
        let a = noncentral_chisq_cdf(d, x, eta).unwrap();
        let b = noncentral_chisq_cdf(d, x, eta + de).unwrap();
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn theoretical_k_monotone_and_nonnegative(sigma in 0.02f64..0.6, range in 0.3f64..5.0, gamma in 0.2f64..2.0) {
        let grid = uniform_grid(0.0, 3.0, 0.05).unwrap();
        for m in [CovarianceModel::iid(3, sigma).unwrap(), CovarianceModel::powexp(3, sigma, range, gamma).unwrap()] {
            let k = k_theoretical(&m, &grid, 15.0).unwrap();
            prop_assert!(k.values[0] >= 0.0);
            prop_assert!(k.values.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn k_hat_permutation_and_translation_invariant(p in pattern_strategy(), shift in prop::collection::vec(-50.0f64..50.0, 3)) {
        let grid = uniform_grid(0.0, 2.5, 0.25).unwrap();
        let k = k_empirical(&p, &grid).unwrap();
        prop_assert!(k.values.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(k.values.iter().all(|&v| v >= 0.0));
        let perm: Vec<usize> = (0..p.len()).rev().collect();
        let kp = k_empirical(&p.permuted(&perm), &grid).unwrap();
        prop_assert!(close(&k.values, &kp.values));
        let c = p.window().center();
        let moved: Vec<f64> = c.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let t = p.affine(1.0, &c, &moved).unwrap();
        prop_assert!(close(&k.values, &k_empirical(&t, &grid).unwrap().values));
        let g = pcf_empirical(&p, &uniform_grid(0.25, 2.5, 0.25).unwrap(), 0.2).unwrap();
        let gp = pcf_empirical(&p.permuted(&perm), &uniform_grid(0.25, 2.5, 0.25).unwrap(), 0.2).unwrap();
        prop_assert!(close(&g.values, &gp.values));
        prop_assert!(g.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn g_hat_is_a_cdf(p in pattern_strategy()) {
        let g = g_nearest_neighbor(&p, &uniform_grid(0.0, 2.0, 0.1).unwrap());
        // sparse small windows may leave no point beyond the border distance
        prop_assume!(g.is_ok());
        let g = g.unwrap();
        prop_assert!(g.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(g.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn scattering_nonnegative(p in pattern_strategy()) {
        let s = scattering_intensity(&p, 2.0).unwrap();
        prop_assert!(s.intensities.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rescale_idempotent(p in pattern_strategy()) {
        let once = rescale_to_unit_intensity(&p).unwrap();
        let twice = rescale_to_unit_intensity(&once).unwrap();
        prop_assert!((once.intensity() - 1.0).abs() < 1e-12);
        prop_assert!(close(once.coords(), twice.coords()));
        prop_assert!(close(&once.window().min, &twice.window().min));
    }

    #[test]
    fn contrast_nonnegative(sigma in 0.05f64..0.5, noise in prop::collection::vec(0.9f64..1.1, 61)) {
        let grid = uniform_grid(0.0, 3.0, 0.05).unwrap();
        let truth = CovarianceModel::iid(3, 0.25).unwrap();
        let k = k_theoretical(&truth, &grid, 15.0).unwrap();
        let values = k.values.iter().zip(&noise).map(|(v, e)| v * e).collect();
        let k = SummaryCurve::new(grid, values, CurveKind::K).unwrap();
        let d = contrast(&CovarianceModel::iid(3, sigma).unwrap(), &k, &ContrastSpec::new(0.0, 3.0)).unwrap();
        prop_assert!(d >= 0.0);
    }

    #[test]
    fn envelopes_ordered_and_nested(seed in 0u64..1000) {
        let grid = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let sims: Vec<Vec<f64>> = (0..99).map(|_| (0..5).map(|_| next()).collect()).collect();
        let data: Vec<f64> = (0..5).map(|_| next()).collect();
        for measure in [RankMeasure::Erl, RankMeasure::Area] {
            let wide = rank_envelope(&grid, &data, &sims, measure, 0.01).unwrap();
            let narrow = rank_envelope(&grid, &data, &sims, measure, 0.1).unwrap();
            for r in 0..5 {
                prop_assert!(wide.lower[r] <= wide.upper[r]);
                prop_assert!(wide.lower[r] <= narrow.lower[r] && narrow.upper[r] <= wide.upper[r]);
            }
            let (lo, hi) = wide.p_interval;
            prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
        }
    }
}
