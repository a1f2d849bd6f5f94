use num_traits::ToPrimitive;
use voronoi_perc::osss::{exact_osss, monte_carlo_osss, random_instance};
use voronoi_perc::sharpness::{
    beta1_estimate, integrate_lemma_system, mlem_closed_form, verify_lemma_dichotomy, LemmaSystem,
    CANONICAL_BOUNDARIES,
};
use voronoi_perc::stats::Estimate;

fn close(e: &Estimate, exact: &num_rational::BigRational) -> bool {
    (e.mean - exact.to_f64().unwrap()).abs() <= 5.0 * e.stderr + 1e-9
}

#[test]
fn sampled_osss_quantities_match_the_exact_ones() {
    for seed in 0..5 {
        let space = random_instance(3, 3, seed);
        let exact = exact_osss(&space).unwrap();
        let mc = monte_carlo_osss(&space, 20000, seed).unwrap();
        assert!(close(&mc.variance, &exact.variance), "seed {seed}");
        for (e, x) in mc.revealments.iter().zip(&exact.revealments) {
            assert!(close(e, x), "seed {seed}");
        }
        for (e, x) in mc.influences.iter().zip(&exact.influences) {
            assert!(close(e, x), "seed {seed}");
        }
    }
}

#[test]
fn exponential_theta_has_a_positive_constant() {
    // θ_n = exp(-(1/2 - p) n) below 1/2.
    let theta = |p: f64, n: usize| (-(0.5 - p) * n as f64).exp();
    let ps: Vec<f64> = (0..5).map(|i| 0.3 + 0.04 * i as f64).collect();
    let r = mlem_closed_form(theta, &ps, 16, 1e-4).unwrap();
    assert!(r.c_hat > 0.0);
}

#[test]
fn canonical_families_pass_the_dichotomy() {
    for (a, b) in CANONICAL_BOUNDARIES {
        let fam = integrate_lemma_system(&LemmaSystem::canonical(64, a, b)).unwrap();
        let b1 = beta1_estimate(&fam, 0.02).unwrap();
        assert!(verify_lemma_dichotomy(&fam, b1.beta1, 0.05, 0.02).unwrap().holds, "({a}, {b})");
    }
}
