mod common;

use common::{binomial_pmf, bisect, mixed_exp_integral};
use proptest::prelude::*;
use stopsum::{BinomialSample, Dual, MixedExpStep};

#[test]
fn mgf_matches_quadrature() {
    let s = MixedExpStep::new(0.4, 1.5, 2.0).unwrap();
    let quad = mixed_exp_integral(0.4, 1.5, 2.0, |x| (0.5 * x).exp());
    assert!((s.mgf(&0.5).unwrap() - quad).abs() < 1e-8);
}

#[test]
fn tilted_density_integrates_to_one() {
    let s = MixedExpStep::new(1.0 / 3.0, 2.0, 1.0).unwrap();
    let t = s.tilt(0.5).unwrap();
    assert!(t.c_w > 0.0 && t.c_w < 1.0);
    let mass = mixed_exp_integral(t.c_w, t.rate_up, t.rate_down, |_| 1.0);
    assert!((mass - 1.0).abs() < 1e-10);
    // The tilted law is e^{wx} f(x) / mgf(w).
    let direct = mixed_exp_integral(1.0 / 3.0, 2.0, 1.0, |x| x * (0.5 * x).exp()) / s.mgf(&0.5).unwrap();
    let mean = t.as_step().mean();
    assert!((direct - mean).abs() < 1e-8);
}

#[test]
fn tilted_binomial_pmf_sums_to_one() {
    let b = BinomialSample::new(10, 0.2).unwrap();
    let t: f64 = 0.5;
    let raw = binomial_pmf(10, 0.2);
    let norm = b.pgf(&t);
    let total: f64 = raw.iter().enumerate().map(|(x, p)| t.powi(x as i32) * p / norm).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let tilted = binomial_pmf(10, b.tilted_p(&t).unwrap());
    for (x, p) in raw.iter().enumerate() {
        assert!((t.powi(x as i32) * p / norm - tilted[x]).abs() < 1e-12);
    }
    assert!((b.tilted_p(&1.0).unwrap() - 0.2).abs() < 1e-16);
}

#[test]
fn q_exceed_dual_at_one() {
    let b = BinomialSample::new(50, 0.1).unwrap();
    let d = b.q_exceed(4, &Dual::variable(1.0)).unwrap();
    let h = 1e-6;
    let fd = (b.q_exceed(4, &(1.0 + h)).unwrap() - b.q_exceed(4, &(1.0 - h)).unwrap()) / (2.0 * h);
    assert!((d.der - fd).abs() < 1e-6);
    assert!((d.val - binomial_pmf(50, 0.1)[5..].iter().sum::<f64>()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn w_star_is_the_nonzero_root(p in 0.05..0.95f64, t1 in 0.3..4.0f64, t2 in 0.3..4.0f64) {
        let s = MixedExpStep::new(p, t1, t2).unwrap();
        let w = s.w_star();
        prop_assert!((s.mgf(&w).unwrap() - 1.0).abs() < 1e-12);
        prop_assume!(w.abs() > 1e-3);
        let f = |x: f64| s.mgf(&x).unwrap() - 1.0;
        let root = if w > 0.0 {
            bisect(f, 1e-12, t1 * (1.0 - 1e-12))
        } else {
            bisect(f, -t2 * (1.0 - 1e-12), -1e-12)
        };
        prop_assert!((root - w).abs() < 1e-10);
    }

    #[test]
    fn tilted_density_is_reweighted(p in 0.05..0.95f64, t1 in 0.3..4.0f64, t2 in 0.3..4.0f64, frac in 0.01..0.99f64) {
        let s = MixedExpStep::new(p, t1, t2).unwrap();
        let w = -t2 + frac * (t1 + t2);
        let t = s.tilt(w).unwrap();
        prop_assert!(t.c_w > 0.0 && t.c_w < 1.0);
        let m = s.mgf(&w).unwrap();
        for i in -20..=20 {
            let x = i as f64 * 0.37;
            let direct = (w * x).exp() * s.density(x) / m;
            prop_assert!((t.density(x) - direct).abs() < 1e-12 * (1.0 + direct));
        }
    }

    #[test]
    fn q_exceed_nondecreasing_in_t(n in 2u32..40, p in 0.01..0.9f64, cf in 0.0..1.0f64) {
        let b = BinomialSample::new(n, p).unwrap();
        let c = ((n - 1) as f64 * cf) as u32;
        let mut last = 0.0;
        for i in 1..=60 {
            let t = i as f64 * 0.1;
            let q = b.q_exceed(c, &t).unwrap();
            prop_assert!(q >= last - 1e-12);
            last = q;
        }
    }
}

#[test]
fn zero_tilt_identity() {
    let s = MixedExpStep::new(0.3, 1.2, 0.7).unwrap();
    assert_eq!(s.tilt(0.0).unwrap().as_step(), s);
    let d = MixedExpStep::new(0.5, 1.7, 1.7).unwrap();
    assert_eq!(d.w_star(), 0.0);
}
