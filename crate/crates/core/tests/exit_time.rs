use proptest::prelude::*;
use stopsum::exit::*;
use stopsum::sim::{sim_exit, MeanEstimate};
use stopsum::{Error, MixedExpStep, Series};

fn down_walk() -> ExitModel {
    ExitModel::two_sided(MixedExpStep::new(1.0 / 3.0, 2.0, 1.0).unwrap(), 8.0, 6.0).unwrap()
}

fn drifting_step() -> MixedExpStep {
    MixedExpStep::new(0.4, 1.5, 2.0).unwrap()
}

#[test]
fn up_probability_closed_forms() {
    let sym = ExitModel::two_sided(MixedExpStep::new(0.5, 1.0, 1.0).unwrap(), 4.0, 4.0).unwrap();
    assert!((exit_up_probability(&sym).unwrap() - 0.5).abs() < 1e-15);
    let asym = ExitModel::two_sided(MixedExpStep::new(0.5, 1.0, 1.0).unwrap(), 2.0, 5.0).unwrap();
    let limit = (1.0 + 2.0) / (2.0 + 7.0);
    assert!((exit_up_probability(&asym).unwrap() - limit).abs() < 1e-15);
    let one_sided = ExitModel::one_sided(drifting_step(), 3.0).unwrap();
    assert!(matches!(exit_up_probability(&one_sided), Err(Error::Usage(_))));
}

#[test]
fn up_probability_against_simulation() {
    let model = down_walk();
    let p = exit_up_probability(&model).unwrap();
    let sim = sim_exit(&model, 1_000_000, 11, 0).unwrap();
    let est = sim.prob_up(model.b);
    let se = (p * (1.0 - p) / est.n as f64).sqrt();
    assert!((est.mean - p).abs() < 3.0 * se, "{} vs {p}", est.mean);
}

#[test]
fn w_u_endpoints() {
    let s = MixedExpStep::new(1.0 / 3.0, 2.0, 1.0).unwrap();
    assert!((w_u_point(&s, 1.0).unwrap() - 1.0).abs() < 1e-12);
    let neg = MixedExpStep::new(0.6, 1.0, 1.0).unwrap();
    assert!(w_u_point(&neg, 1.0).unwrap().abs() < 1e-12);
    assert!((w_u_series(&s, 10).unwrap().coeffs()[0] - 2.0).abs() < 1e-15);
    let w = w_u_point(&s, 0.7).unwrap();
    assert!((s.mgf(&w).unwrap() - 1.0 / 0.7).abs() < 1e-10);
    assert!(matches!(w_u_point(&s, 0.0), Err(Error::Domain(_))));
    assert!(matches!(w_u_point(&s, 1.2), Err(Error::Domain(_))));
}

fn random_step() -> impl Strategy<Value = MixedExpStep> {
    (0.05..0.95f64, 0.3..4.0f64, 0.3..4.0f64).prop_map(|(p, a, b)| MixedExpStep::new(p, a, b).unwrap())
}

proptest! {
    #[test]
    fn w_u_decreasing_and_solves(step in random_step()) {
        let mut last = f64::INFINITY;
        for i in 1..=99 {
            let u = i as f64 / 100.0;
            let w = w_u_point(&step, u).unwrap();
            prop_assert!(w < last);
            prop_assert!((step.mgf(&w).unwrap() * u - 1.0).abs() < 1e-10);
            prop_assert!(tilted_drift(&step, u).unwrap() > 0.0);
            last = w;
        }
    }

    #[test]
    fn laplace_matches_general(theta in 0.3..2.5f64, a in 0.5..6.0f64, b in 0.5..6.0f64) {
        let model = ExitModel::two_sided(MixedExpStep::new(0.5, theta, theta).unwrap(), a, b).unwrap();
        let general = exit_pgf_series(&model, 60).unwrap().pmf_t;
        let closed = laplace_pgf(theta, a, b, &Series::var(60)).unwrap();
        for (x, y) in general.iter().zip(closed.coeffs()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let hg = exit_conditional_pgf_series(&model, 60, Precision::Double).unwrap();
        let hc = laplace_conditional_pgf(theta, a, b, &Series::var(60)).unwrap();
        for (x, y) in hg.iter().zip(hc.coeffs()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn pmf_nonnegative_and_starts_at_one(step in random_step(), a in 0.5..8.0f64, b in 0.5..8.0f64) {
        let model = ExitModel::two_sided(step, a, b).unwrap();
        let d = exit_pgf_series(&model, 80).unwrap();
        prop_assert!(d.pmf_t[0].abs() < 1e-12);
        prop_assert!(d.pmf_t.iter().all(|&x| x >= -1e-12));
        prop_assert!(d.mass_total <= 1.0 + 1e-9);
        let up = exit_up_probability(&model).unwrap();
        prop_assert!((0.0..=1.0).contains(&up));
        for i in 1..10 {
            let pu = tilted_prob_up(&model, &(i as f64 / 10.0)).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&pu));
        }
    }
}

#[test]
fn two_sided_mass() {
    let d = exit_pgf_series(&down_walk(), 400).unwrap();
    assert!((d.mass_total - 1.0).abs() < 1e-6);
    let partial: Vec<f64> = d.pmf_t.iter().scan(0.0, |s, x| { *s += x; Some(*s) }).collect();
    assert!(partial.windows(2).all(|w| w[1] >= w[0] - 1e-12));
}

#[test]
fn double_double_agrees() {
    let model = down_walk();
    let a = exit_pgf_series_with(&model, 200, Precision::Double).unwrap().pmf_t;
    let b = exit_pgf_series_with(&model, 200, Precision::DoubleDouble).unwrap().pmf_t;
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn joint_gf_marginal_and_wald() {
    let model = down_walk();
    let pmf = exit_pgf_series(&model, 400).unwrap().pmf_t;
    for &u in &[0.3f64, 0.6, 0.9] {
        let series: f64 = pmf.iter().enumerate().map(|(m, p)| p * u.powi(m as i32)).sum();
        assert!((exit_joint_gf(&model, u, 0.0).unwrap() - series).abs() < 1e-8);
        assert!((exit_pgf_point(&model, u).unwrap() - series).abs() < 1e-8);
    }
    let w = model.step.w_star();
    let near_one = exit_joint_gf(&model, 1.0 - 1e-9, w).unwrap();
    assert!((near_one - 1.0).abs() < 1e-6);
    assert!(matches!(exit_joint_gf(&model, 0.5, 2.5), Err(Error::Domain(_))));
}

#[test]
fn joint_gf_against_simulation() {
    let model = down_walk();
    let (u, x) = (0.9f64, 0.3);
    let sim = sim_exit(&model, 100_000, 5, 0).unwrap();
    let est = MeanEstimate::from_values(sim.samples.iter().map(|s| u.powf(s.t as f64) * (x * s.s).exp()));
    let exact = exit_joint_gf(&model, u, x).unwrap();
    assert!(est.z_against(exact).abs() < 3.0, "{} vs {exact}", est.mean);
}

#[test]
fn conditional_pmf_normalized() {
    let walk = ExitModel::two_sided(MixedExpStep::new(2.0 / 3.0, 1.0, 2.0).unwrap(), 6.0, 8.0).unwrap();
    let h = exit_conditional_pgf_series(&walk, 600, Precision::Double).unwrap();
    assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let up = exit_conditional_pgf(&walk, &(1.0 - 1e-10)).unwrap();
    assert!((up - 1.0).abs() < 1e-6);
}

#[test]
fn laplace_conditional_instance() {
    let model = ExitModel::two_sided(MixedExpStep::new(0.5, 2.0, 2.0).unwrap(), 5.0, 5.0).unwrap();
    let general = exit_conditional_pgf_series(&model, 200, Precision::Double).unwrap();
    let closed = laplace_conditional_pgf(2.0, 5.0, 5.0, &Series::var(200)).unwrap();
    for (x, y) in general.iter().zip(closed.coeffs()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn one_sided_values() {
    let p = one_sided_prob_finite(&drifting_step(), 3.0).unwrap();
    assert!((p - 14.0 / 15.0 * (-0.3f64).exp()).abs() < 1e-15);
    assert!((p - 0.69143).abs() < 1e-5);
    let sym = MixedExpStep::new(0.5, 1.0, 1.0).unwrap();
    assert_eq!(one_sided_prob_finite(&sym, 3.0).unwrap(), 1.0);
    let s = one_sided_conditional_pmf(&drifting_step(), 3.0, 16384, Precision::Double).unwrap();
    assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let g = one_sided_conditional_pgf(&drifting_step(), 3.0, &(1.0 - 1e-12)).unwrap();
    assert!((g - 1.0).abs() < 1e-5);
}

#[test]
fn one_sided_crossing_frequency() {
    let model = ExitModel::one_sided(drifting_step(), 3.0).unwrap();
    let exact = one_sided_prob_finite(&drifting_step(), 3.0).unwrap();
    let mut last = 0.0;
    for &h in &[100u64, 1000, 5000] {
        let sim = sim_exit(&model, 100_000, 9, h).unwrap();
        let freq = 1.0 - sim.censored_fraction();
        assert!(freq >= last - 0.01);
        last = freq;
    }
    assert!(last <= exact + 0.01 && (exact - last).abs() < 0.01, "{last} vs {exact}");
}

#[test]
fn supercritical_censoring_decays() {
    let step = MixedExpStep::new(0.6, 1.0, 1.5).unwrap();
    assert!(step.mean() > 0.0);
    let model = ExitModel::one_sided(step, 10.0).unwrap();
    let fractions: Vec<f64> = [100u64, 1000, 10_000]
        .iter()
        .map(|&h| sim_exit(&model, 20_000, 4, h).unwrap().censored_fraction())
        .collect();
    assert!(fractions.windows(2).all(|w| w[1] <= w[0]), "{fractions:?}");
}

#[test]
fn expected_time_checks() {
    let model = down_walk();
    let mean = expected_exit_time(&model, 1024).unwrap();
    let sim = sim_exit(&model, 100_000, 21, 0).unwrap();
    let s_mean = sim.mean_s();
    let wald = model.step.mean() * mean.mean;
    assert!(s_mean.z_against(wald).abs() < 3.0, "{} vs {wald}", s_mean.mean);

    // Abel summation: (1 - E(u^T)) / (1 - u) -> E(T) as u -> 1.
    let abel = |u: f64| (1.0 - exit_pgf_point(&model, u).unwrap()) / (1.0 - u);
    let (u1, u2) = (1.0 - 1e-4, 1.0 - 2e-4);
    let extrapolated = 2.0 * abel(u1) - abel(u2);
    assert!((extrapolated - mean.mean).abs() < 1e-3 * mean.mean);

    let lap = ExitModel::two_sided(MixedExpStep::new(0.5, 1.0, 1.0).unwrap(), 4.0, 4.0).unwrap();
    let m = expected_exit_time(&lap, 1024).unwrap();
    let sim = sim_exit(&lap, 100_000, 22, 0).unwrap();
    assert!(sim.mean_t().z_against(m.mean).abs() < 3.0);

    assert!(matches!(expected_exit_time(&model, 8), Err(Error::Truncation { .. })));
}
