mod oracles;

use leafsev_core::stats::{
    compare_treatments, erf, erfc, f_sf, kolmogorov_sf, ks_normality, ln_gamma, mean_ci, one_way_anova,
    parse_treatments_csv, reg_inc_beta, studentized_range_cdf, t_quantile, tukey_hsd, two_prop_z, KsOptions,
};
use proptest::prelude::*;

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

#[test]
fn erf_matches_series_on_grid() {
    for x in grid(-3.0, 3.0, 50) {
        let want = oracles::erf_series(x);
        assert!((erf(x) - want).abs() < 1e-10, "erf({x}): {} vs {want}", erf(x));
        assert!((erfc(x) - (1.0 - want)).abs() < 1e-10);
    }
}

#[test]
fn ln_gamma_matches_stirling_on_grid() {
    for x in grid(0.05, 30.0, 50) {
        let want = oracles::ln_gamma_stirling(x);
        assert!((ln_gamma(x).unwrap() - want).abs() < 1e-10, "lnΓ({x})");
    }
}

#[test]
fn incomplete_beta_matches_series_on_grid() {
    let shapes = [(0.5, 0.5), (1.0, 3.0), (2.5, 7.0), (6.0, 2.0), (9.5, 9.5)];
    for (i, x) in grid(0.0, 1.0, 50).enumerate() {
        let (a, b) = shapes[i % shapes.len()];
        let want = oracles::inc_beta_series(a, b, x);
        let got = reg_inc_beta(a, b, x).unwrap();
        assert!((got - want).abs() < 1e-10, "I_{x}({a}, {b}): {got} vs {want}");
    }
}

fn derived_groups() -> Vec<Vec<f64>> {
    vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]]
}

#[test]
fn anova_p_matches_integrated_density() {
    let t = one_way_anova(&derived_groups()).unwrap();
    assert!((t.f - 3.0).abs() < 1e-12);
    let oracle = oracles::f_sf_simpson(3.0, 2.0, 6.0);
    assert!((t.p - oracle).abs() < 1e-4, "{} vs {oracle}", t.p);
    // a non-trivial numerator df as well
    let oracle = oracles::f_sf_simpson(2.2, 4.0, 11.0);
    assert!((f_sf(2.2, 4.0, 11.0) - oracle).abs() < 1e-6);
}

#[test]
fn tukey_matches_double_integral() {
    let p = 1.0 - studentized_range_cdf(3.77, 3, 12.0).unwrap();
    assert!((0.045..=0.055).contains(&p), "{p}");
    let oracle = 1.0 - oracles::studentized_range_simpson(3.77, 3, 12.0);
    assert!((p - oracle).abs() < 1e-4, "{p} vs {oracle}");
    let oracle = oracles::studentized_range_simpson(2.5, 4, 7.0);
    assert!((studentized_range_cdf(2.5, 4, 7.0).unwrap() - oracle).abs() < 1e-4);
}

#[test]
fn t_quantile_one_df() {
    assert!((t_quantile(0.975, 1.0).unwrap() - 12.7062).abs() < 1e-4);
    assert!((t_quantile(0.975, 10.0).unwrap() - 2.2281).abs() < 1e-4);
}

#[test]
fn proportion_and_interval_examples() {
    let z = two_prop_z(8, 10, 4, 10).unwrap();
    assert!((z.statistic - 1.8257).abs() < 1e-4);
    assert!((z.p - 0.0679).abs() < 1e-4);
    let eq = two_prop_z(3, 10, 6, 20).unwrap();
    assert_eq!((eq.statistic, eq.p), (0.0, 1.0));
    let ci = mean_ci(&[0.0, 2.0], 0.95).unwrap();
    assert!((ci.lower + 11.7062).abs() < 1e-4 && (ci.upper - 13.7062).abs() < 1e-4);
}

#[test]
fn kolmogorov_tail_matches_series() {
    for lambda in grid(0.3, 2.5, 23) {
        let want = oracles::kolmogorov_tail_series(lambda);
        assert!((kolmogorov_sf(lambda) - want).abs() < 1e-10, "λ = {lambda}");
    }
}

#[test]
fn ks_outlier_needs_lilliefors() {
    let s = [0.0, 0.0, 0.0, 1000.0];
    let plain = ks_normality(&s, KsOptions::default()).unwrap();
    let lf = ks_normality(&s, KsOptions { lilliefors: true }).unwrap();
    assert!(plain.p > 0.05);
    assert!(lf.p < 0.05);
}

#[test]
fn compare_document_shapes() {
    let csv = "value,rgb,manual\n1,2,3\n2,3,4\n3,4,5\n";
    let t = parse_treatments_csv(csv).unwrap();
    let c = compare_treatments(&t, 0.05, KsOptions::default()).unwrap();
    assert!((c.anova.f - 3.0).abs() < 1e-12);
    assert_eq!(c.intervals.len(), 3);
    assert_eq!(c.tukey.len(), 3);
    // three observations per column is below the KS minimum
    assert!(c.normality.is_empty());
    let json = serde_json::to_value(&c).unwrap();
    assert_eq!(json["tukey"][0]["kind"], "TUKEY_PAIR");
    assert_eq!(json["tukey"][0]["pair"][0], "value");
    assert!(json["intervals"][0]["lower"].is_f64());
}

#[test]
fn tukey_labels_and_equal_means() {
    let g = vec![vec![4.0, 5.0, 6.0, 5.0], vec![6.0, 5.0, 4.0, 5.0]];
    let t = one_way_anova(&g).unwrap();
    assert_eq!(t.f, 0.0);
    let pairs = tukey_hsd(&g, &["a".into(), "b".into()], 0.05).unwrap();
    assert_eq!(pairs[0].significant, Some(false));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn anova_f_is_affine_invariant(
        data in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3..8), 2..5),
        shift in -1e3f64..1e3,
        scale in 0.01f64..100.0,
    ) {
        let Ok(base) = one_way_anova(&data) else { return Ok(()) };
        let moved: Vec<Vec<f64>> = data.iter().map(|g| g.iter().map(|v| scale * v + shift).collect()).collect();
        let t = one_way_anova(&moved).unwrap();
        prop_assert!((t.f - base.f).abs() <= 1e-6 * base.f.max(1.0));
        prop_assert!((0.0..=1.0).contains(&t.p));
    }

    #[test]
    fn p_values_are_probabilities(x1 in 0u64..50, extra1 in 1u64..50, x2 in 0u64..50, extra2 in 1u64..50) {
        if let Ok(r) = two_prop_z(x1, x1 + extra1, x2, x2 + extra2) {
            prop_assert!((0.0..=1.0).contains(&r.p));
        }
    }

    #[test]
    fn intervals_contain_the_mean(sample in prop::collection::vec(-1e3f64..1e3, 2..30), conf in 0.5f64..0.999) {
        let ci = mean_ci(&sample, conf).unwrap();
        let m = sample.iter().sum::<f64>() / sample.len() as f64;
        prop_assert!(ci.lower <= m + 1e-9 && m - 1e-9 <= ci.upper);
    }
}
