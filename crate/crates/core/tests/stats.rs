use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use statrs::function::gamma::ln_gamma;
use trajsynth::stats::{f_survival, freq_above, one_way_anova};

fn f_density(x: f64, d1: f64, d2: f64) -> f64 {
    if x == 0.0 {
        return if d1 == 2.0 { 1.0 } else { 0.0 };
    }
    let ln_beta = ln_gamma(d1 / 2.0) + ln_gamma(d2 / 2.0) - ln_gamma((d1 + d2) / 2.0);
    let ln = 0.5 * (d1 * (d1 * x).ln() + d2 * d2.ln() - (d1 + d2) * (d1 * x + d2).ln()) - x.ln() - ln_beta;
    ln.exp()
}

/// Upper tail by composite Simpson's rule on the density over [0, f].
fn simpson_survival(f: f64, d1: f64, d2: f64) -> f64 {
    let n = 200_000;
    let h = f / n as f64;
    let mut s = f_density(0.0, d1, d2) + f_density(f, d1, d2);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f_density(i as f64 * h, d1, d2);
    }
    1.0 - s * h / 3.0
}

fn naive_f(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for (g, m) in groups.iter().zip(&means) {
        for x in g {
            ssb += (m - grand).powi(2);
            ssw += (x - m).powi(2);
        }
    }
    let k = groups.len() as f64;
    (ssb / (k - 1.0)) / (ssw / (all.len() as f64 - k))
}

#[test]
fn textbook_groups() {
    let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
    assert!((r.f_stat - 27.0).abs() < 1e-9);
    assert!((r.p_value - simpson_survival(27.0, 2.0, 6.0)).abs() < 1e-6);
    let statrs_p = 1.0 - FisherSnedecor::new(2.0, 6.0).unwrap().cdf(27.0);
    assert!((r.p_value - statrs_p).abs() < 1e-9);
}

#[test]
fn identical_groups() {
    let g = vec![0.3, 0.5, 0.9];
    let r = one_way_anova(&[g.clone(), g.clone(), g]).unwrap();
    assert_eq!((r.f_stat, r.p_value), (0.0, 1.0));
}

#[test]
fn survival_against_quadrature_and_statrs() {
    for (f, d1, d2) in [(0.5, 2, 6), (1.0, 3, 10), (2.7, 2, 597), (4.2, 5, 20), (10.0, 4, 4)] {
        let ours = f_survival(f, d1, d2);
        let reference = 1.0 - FisherSnedecor::new(d1 as f64, d2 as f64).unwrap().cdf(f);
        assert!((ours - reference).abs() < 1e-9, "F({d1},{d2}) at {f}");
    }
    for f in [0.5, 3.0, 27.0] {
        assert!((f_survival(f, 2, 6) - simpson_survival(f, 2.0, 6.0)).abs() < 1e-6);
    }
}

#[test]
fn survival_is_monotone() {
    let mut prev = 1.0;
    for i in 1..400 {
        let p = f_survival(i as f64 * 0.05, 2, 597);
        assert!(p <= prev);
        prev = p;
    }
}

#[test]
fn freq_above_binomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xs: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>()).collect();
    let n = freq_above(&xs, 0.5);
    assert!((450..=550).contains(&n), "{n}");
    assert_eq!(freq_above(&[0.5, 0.5, 0.6], 0.5), 1);
}

fn arb_groups() -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 2..30), 2..5)
}

proptest! {
    #[test]
    fn matches_naive_computation(groups in arb_groups()) {
        let r = one_way_anova(&groups).unwrap();
        prop_assume!(!r.degenerate && r.f_stat > 0.0);
        let naive = naive_f(&groups);
        prop_assert!((r.f_stat - naive).abs() <= 1e-9 * naive.max(1.0));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn scale_invariant(groups in arb_groups(), c in 0.01f64..100.0) {
        let a = one_way_anova(&groups).unwrap();
        let scaled: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| x * c).collect()).collect();
        let b = one_way_anova(&scaled).unwrap();
        prop_assume!(a.f_stat.is_finite() && a.f_stat > 0.0);
        prop_assert!((a.f_stat - b.f_stat).abs() <= 1e-9 * a.f_stat.max(1.0));
    }

    #[test]
    fn two_groups_equal_t_squared(
        x in proptest::collection::vec(0.0f64..1.0, 2..25),
        y in proptest::collection::vec(0.0f64..1.0, 2..25),
    ) {
        let r = one_way_anova(&[x.clone(), y.clone()]).unwrap();
        prop_assume!(!r.degenerate && r.f_stat > 0.0);
        let (nx, ny) = (x.len() as f64, y.len() as f64);
        let mx = x.iter().sum::<f64>() / nx;
        let my = y.iter().sum::<f64>() / ny;
        let ss = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() + y.iter().map(|v| (v - my).powi(2)).sum::<f64>();
        let df = nx + ny - 2.0;
        let t = (mx - my) / (ss / df * (1.0 / nx + 1.0 / ny)).sqrt();
        prop_assert!((r.f_stat - t * t).abs() <= 1e-9 * r.f_stat.max(1.0));
        let two_sided = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()));
        prop_assert!((r.p_value - two_sided).abs() < 1e-8);
    }
}
