//! Switching time `T` and total defectives `S_T` for acceptance sampling
//! with a k-run (or k-out-of-m scan) switching rule.
//!
//! Each lot contributes a `Binomial(n, p)` count; a lot "fails" when the
//! count exceeds the acceptance number `c`. Sampling stops at the first
//! time the switching rule is satisfied by failing lots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::{Series, UNIT_TOLERANCE};
use crate::tilted::BinomialSample;

/// Largest scan window handled by the state embedding.
pub const SCAN_WINDOW_CAP: u32 = 16;

/// Extra mass beyond the requested level before a percentile is trusted.
pub const PERCENTILE_MARGIN: f64 = 1e-4;

/// Upper limit for the adaptive order search.
pub const MAX_ADAPTIVE_ORDER: usize = 1 << 15;

const TAIL_TOL: f64 = 1e-17;
const MAX_STEPS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub sample: BinomialSample,
    pub c: u32,
    pub k: u32,
}

/// `k` failing lots among the last `m` switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanRule {
    pub k: u32,
    pub m: u32,
}

impl SamplingPlan {
    pub fn new(n: u32, p: f64, c: u32, k: u32) -> Result<Self> {
        let sample = BinomialSample::new(n, p)?;
        if c >= n {
            return Err(Error::Domain(format!("acceptance number c={c} must be below n={n}")));
        }
        if k == 0 {
            return Err(Error::Domain("run length k must be at least 1".into()));
        }
        Ok(SamplingPlan { sample, c, k })
    }

    /// `P(Z > c)` for a single lot.
    pub fn q(&self) -> f64 {
        self.sample.q_exceed(self.c, &1.0).expect("plan invariants hold")
    }

    /// Smallest possible value of `S_T`.
    pub fn min_support(&self) -> usize {
        (self.k as usize) * (self.c as usize + 1)
    }

    /// Mean of the order-k geometric waiting time.
    pub fn expected_t(&self) -> f64 {
        let q = self.q();
        let qk = q.powi(self.k as i32);
        (1.0 - qk) / ((1.0 - q) * qk)
    }
}

impl ScanRule {
    pub fn new(k: u32, m: u32) -> Result<Self> {
        if k == 0 || k > m {
            return Err(Error::Domain(format!("scan rule needs 1 <= k <= m, got k={k}, m={m}")));
        }
        Ok(ScanRule { k, m })
    }

    fn states(&self) -> Result<usize> {
        if self.m > SCAN_WINDOW_CAP {
            return Err(Error::Capacity {
                states: 1usize << (self.m - 1).min(63),
                cap: 1usize << (SCAN_WINDOW_CAP - 1),
            });
        }
        Ok(1usize << (self.m - 1))
    }
}

fn check_unit_interval<S: Scalar>(x: &S, name: &str) -> Result<()> {
    if !S::FORMAL && !(0.0..=1.0).contains(&x.lead()) {
        return Err(Error::Domain(format!("{name} must lie in [0,1], got {}", x.lead())));
    }
    Ok(())
}

/// pgf of the waiting time for `k` consecutive successes with success
/// probability `q`:
/// `(qz)^k (1 - qz) / (1 - z + (1 - q) q^k z^(k+1))`.
pub fn geom_order_k_pgf<S: Scalar>(z: &S, q: &S, k: u32) -> Result<S> {
    if k == 0 {
        return Err(Error::Domain("run length k must be at least 1".into()));
    }
    check_unit_interval(z, "z")?;
    check_unit_interval(q, "q")?;
    if (q.clone() - 1.0).magnitude() == 0.0 {
        return Ok(z.powi(k));
    }
    let hit = q.clone() * z.clone();
    run_pgf(&(z.clone() - hit.clone()), &hit, k)
}

/// The order-k pgf in terms of the per-lot weights `g = (1 - q) z` and
/// `h = q z`: `h^k (1 - h) / (1 - g - h + g h^k)`.
fn run_pgf<S: Scalar>(pass: &S, hit: &S, k: u32) -> Result<S> {
    let hk = hit.powi(k);
    let num = hk.clone() * (-hit.clone() + 1.0);
    let den = -pass.clone() - hit.clone() + 1.0 + pass.clone() * hk;
    if !S::FORMAL && den.magnitude() < UNIT_TOLERANCE {
        return Err(Error::Pole { magnitude: den.magnitude() });
    }
    num.try_div(&den)
}

/// Domain checks for point evaluation: `u` in `[0,1]`, `t > 0` and
/// `u (1 - p + p t)^n` in `[0,1]`.
fn check_lot_arguments<S: Scalar>(plan: &SamplingPlan, u: &S, t: &S) -> Result<()> {
    if S::FORMAL {
        return Ok(());
    }
    check_unit_interval(u, "u")?;
    if t.lead() <= 0.0 {
        return Err(Error::Domain(format!("t must be positive, got {}", t.lead())));
    }
    let z = u.lead() * plan.sample.pgf(&t.lead());
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::Domain(format!("u (1 - p + p t)^n = {z} lies outside [0,1]")));
    }
    Ok(())
}

/// `E(u^T t^{S_T})` under the k-run rule: the order-k pgf at
/// `z = u (1 - p + p t)^n` and `q = q_t`.
///
/// Evaluated through the weights `z (1 - q_t)` and `z q_t`, whose
/// expansions in `t` are finite with non-negative coefficients; `q_t`
/// alone has a pole at `t = -(1 - p) / p`.
pub fn sampling_joint_pgf<S: Scalar>(plan: &SamplingPlan, u: &S, t: &S) -> Result<S> {
    let (pass, hit) = lot_weights(plan, u, t)?;
    run_pgf(&pass, &hit, plan.k)
}

/// Waiting-time pgf for the k-out-of-m scan rule with success
/// probability `q`.
pub fn scan_pgf<S: Scalar>(z: &S, q: &S, rule: ScanRule) -> Result<S> {
    check_unit_interval(z, "z")?;
    check_unit_interval(q, "q")?;
    let hit = z.clone() * q.clone();
    let pass = z.clone() - hit.clone();
    scan_propagate(&pass, &hit, rule)
}

/// Propagates the occupancy of the last `m - 1` outcomes (bit set = failing
/// lot). `pass` and `hit` are the per-lot weights `z (1 - q)` and `z q`.
fn scan_propagate<S: Scalar>(pass: &S, hit: &S, rule: ScanRule) -> Result<S> {
    let states = rule.states()?;
    let mask = states - 1;
    let zero = pass.lift(0.0);
    let mut occ = vec![zero.clone(); states];
    occ[0] = zero.lift(1.0);
    let mut result = zero.clone();
    let nilpotent = match (pass.nilpotent_order(), hit.nilpotent_order()) {
        (Some(a), Some(b)) => Some(a.min(b)),
        _ => None,
    };
    for _ in 1..=nilpotent.unwrap_or(MAX_STEPS) {
        let mut next = vec![zero.clone(); states];
        for (s, o) in occ.iter().enumerate() {
            if o.magnitude() == 0.0 {
                continue;
            }
            let a = (s << 1) & mask;
            next[a] = next[a].clone() + o.clone() * pass.clone();
            if s.count_ones() + 1 >= rule.k {
                result = result + o.clone() * hit.clone();
            } else {
                let b = ((s << 1) | 1) & mask;
                next[b] = next[b].clone() + o.clone() * hit.clone();
            }
        }
        occ = next;
        if nilpotent.is_none() {
            let survival: f64 = occ.iter().map(Scalar::norm1).sum();
            if survival < TAIL_TOL {
                return Ok(result);
            }
        }
    }
    if nilpotent.is_some() {
        return Ok(result);
    }
    Err(Error::Pole { magnitude: (pass.clone() + hit.clone()).magnitude() })
}

/// Per-lot weights `u E(t^Z; Z <= c)` and `u E(t^Z; Z > c)`, each a
/// polynomial in `t` with non-negative coefficients.
pub fn lot_weights<S: Scalar>(plan: &SamplingPlan, u: &S, t: &S) -> Result<(S, S)> {
    check_lot_arguments(plan, u, t)?;
    let pmf = plan.sample.pmf();
    let c = plan.c as usize;
    let horner = |coeffs: &[f64], lowest: usize| {
        let mut acc = t.lift(0.0);
        for &a in coeffs.iter().rev() {
            acc = acc * t.clone() + a;
        }
        acc * t.powi(lowest as u32)
    };
    let pass = horner(&pmf[..=c], 0);
    let hit = horner(&pmf[c + 1..], c + 1);
    Ok((u.clone() * pass, u.clone() * hit))
}

/// `E(u^T t^{S_T})` under the k-out-of-m scan rule.
pub fn scan_km_joint_pgf<S: Scalar>(
    plan: &SamplingPlan,
    rule: ScanRule,
    u: &S,
    t: &S,
) -> Result<S> {
    let (pass, hit) = lot_weights(plan, u, t)?;
    scan_propagate(&pass, &hit, rule)
}

/// `E(u^T t^{S_T})` under the k-run rule, by propagating run progress
/// instead of dividing. Slower than [`sampling_joint_pgf`] but free of
/// cancellation when `q` is close to 0 or 1.
pub fn run_chain_joint_pgf<S: Scalar>(plan: &SamplingPlan, u: &S, t: &S) -> Result<S> {
    let (pass, hit) = lot_weights(plan, u, t)?;
    let k = plan.k as usize;
    let zero = pass.lift(0.0);
    let mut occ = vec![zero.clone(); k];
    occ[0] = zero.lift(1.0);
    let mut result = zero.clone();
    let nilpotent = match (pass.nilpotent_order(), hit.nilpotent_order()) {
        (Some(a), Some(b)) => Some(a.min(b)),
        _ => None,
    };
    for _ in 1..=nilpotent.unwrap_or(MAX_STEPS) {
        let mut next = vec![zero.clone(); k];
        let mut reset = zero.clone();
        for (j, o) in occ.iter().enumerate() {
            reset = reset + o.clone();
            if j + 1 == k {
                result = result + o.clone() * hit.clone();
            } else {
                next[j + 1] = o.clone() * hit.clone();
            }
        }
        next[0] = next[0].clone() + reset * pass.clone();
        occ = next;
        if nilpotent.is_none() && occ.iter().map(Scalar::norm1).sum::<f64>() < TAIL_TOL {
            return Ok(result);
        }
    }
    if nilpotent.is_some() {
        return Ok(result);
    }
    Err(Error::Pole { magnitude: (pass.clone() + hit.clone()).magnitude() })
}

fn joint_pgf<S: Scalar>(plan: &SamplingPlan, scan: Option<ScanRule>, u: &S, t: &S) -> Result<S> {
    match scan {
        Some(rule) => scan_km_joint_pgf(plan, rule, u, t),
        None => sampling_joint_pgf(plan, u, t),
    }
}

/// `P(T = r, S_T = m)` for `r <= rmax`, `m <= mmax`, from the bivariate
/// expansion in `(u, t)`.
pub fn joint_pmf(
    plan: &SamplingPlan,
    scan: Option<ScanRule>,
    rmax: usize,
    mmax: usize,
) -> Result<Vec<Vec<f64>>> {
    let t_inner = Series::var(mmax);
    let u = Series::variable_like(&t_inner, rmax);
    let t = Series::constant(t_inner, rmax);
    let g = joint_pgf(plan, scan, &u, &t)?;
    Ok(g.into_coeffs().into_iter().map(Series::into_coeffs).collect())
}

/// `P(T = r)` for `r = 0..=order`.
pub fn t_pmf(plan: &SamplingPlan, scan: Option<ScanRule>, order: usize) -> Result<Vec<f64>> {
    let u = Series::var(order);
    let t = Series::constant(1.0, order);
    Ok(joint_pgf(plan, scan, &u, &t)?.into_coeffs())
}

/// `P(S_T = m)` for `m = 0..=order`.
pub fn st_pmf(plan: &SamplingPlan, order: usize) -> Result<Vec<f64>> {
    st_pmf_with(plan, None, order)
}

pub fn st_pmf_with(plan: &SamplingPlan, scan: Option<ScanRule>, order: usize) -> Result<Vec<f64>> {
    let k = scan.map_or(plan.k, |r| r.k) as usize;
    let support = k * (plan.c as usize + 1);
    if order < support {
        return Err(Error::Usage(format!(
            "order {order} is below the smallest possible total {support}"
        )));
    }
    let u = Series::constant(1.0, order);
    let t = Series::var(order);
    Ok(joint_pgf(plan, scan, &u, &t)?.into_coeffs())
}

/// Distribution of `S_T` truncated at `order`, with its tail
/// probabilities `h_m = P(S_T > m)` from `H(t) = (1 - E(t^{S_T})) / (1 - t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StDistribution {
    pub order: usize,
    pub pmf: Vec<f64>,
    pub cdf: Vec<f64>,
    pub tail: Vec<f64>,
    pub captured: f64,
    /// `H(1)` truncated at `order`, plus a geometric estimate of the rest.
    pub mean: f64,
}

impl StDistribution {
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        let order = pmf.len() - 1;
        let g = Series::from_coeffs(pmf.clone())?;
        let one_minus_t = Series::from_coeffs({
            let mut c = vec![0.0; order + 1];
            c[0] = 1.0;
            if order >= 1 {
                c[1] = -1.0;
            }
            c
        })?;
        let tail = (-g + 1.0).try_div_series(&one_minus_t)?.into_coeffs();
        let cdf: Vec<f64> = pmf
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect();
        let captured = cdf[order];
        let mean = tail.iter().sum::<f64>() + geometric_remainder(&tail);
        Ok(StDistribution { order, pmf, cdf, tail, captured, mean })
    }

    /// Smallest `m` with `CDF(m) >= level`.
    pub fn percentile(&self, level: f64) -> Option<usize> {
        self.cdf.iter().position(|&c| c >= level)
    }
}

fn geometric_remainder(tail: &[f64]) -> f64 {
    let n = tail.len();
    if n < 2 {
        return 0.0;
    }
    let (a, b) = (tail[n - 2], tail[n - 1]);
    if a <= 0.0 || b <= 1e-15 {
        return 0.0;
    }
    let ratio = b / a;
    if ratio < 1.0 {
        b * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    }
}

/// Result of an adaptive percentile search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StSummary {
    pub distribution: StDistribution,
    pub levels: Vec<f64>,
    pub percentiles: Vec<usize>,
    pub mean: f64,
}

/// Doubles the truncation order, starting from `order`, until the captured
/// mass reaches every level plus [`PERCENTILE_MARGIN`] and the truncated
/// tail of `H(1)` is negligible.
pub fn st_summary(
    plan: &SamplingPlan,
    scan: Option<ScanRule>,
    levels: &[f64],
    order: usize,
) -> Result<StSummary> {
    for &l in levels {
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::Domain(format!("percentile level must lie in (0,1), got {l}")));
        }
    }
    let k = scan.map_or(plan.k, |r| r.k) as usize;
    let support = k * (plan.c as usize + 1);
    let required = levels.iter().cloned().fold(0.0, f64::max) + PERCENTILE_MARGIN;
    let mut m = order.max(support + 1);
    loop {
        let dist = StDistribution::from_pmf(st_pmf_with(plan, scan, m)?)?;
        let tail_left = dist.mean - dist.tail.iter().sum::<f64>();
        if dist.captured >= required && tail_left <= 1e-9 * dist.mean.max(1.0) {
            let percentiles = levels
                .iter()
                .map(|&l| dist.percentile(l).expect("captured mass exceeds level"))
                .collect();
            return Ok(StSummary {
                mean: dist.mean,
                levels: levels.to_vec(),
                percentiles,
                distribution: dist,
            });
        }
        if m >= MAX_ADAPTIVE_ORDER {
            return Err(Error::Truncation {
                order: m,
                captured: dist.captured,
                required,
                suggested: 2 * m,
            });
        }
        m = (2 * m).min(MAX_ADAPTIVE_ORDER);
    }
}

/// Percentile at `level` and mean of `S_T` under the k-run rule.
pub fn st_tail_gf_and_percentile(plan: &SamplingPlan, level: f64, order: usize) -> Result<(usize, f64)> {
    let s = st_summary(plan, None, &[level], order)?;
    Ok((s.percentiles[0], s.mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Dual;

    #[test]
    fn order_one_is_geometric() {
        for &q in &[0.1, 0.5, 0.9] {
            for i in 0..=10 {
                let z = i as f64 / 10.0;
                let g = geom_order_k_pgf(&z, &q, 1).unwrap();
                let closed = q * z / (1.0 - (1.0 - q) * z);
                assert!((g - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn certain_success() {
        let z = Series::var(6);
        let g = geom_order_k_pgf(&z, &Series::constant(1.0, 6), 3).unwrap();
        assert_eq!(g.coeffs(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert!((geom_order_k_pgf(&0.7, &1.0, 3).unwrap() - 0.343).abs() < 1e-15);
    }

    #[test]
    fn series_leading_coefficient() {
        let z = Series::var(10);
        let g = geom_order_k_pgf(&z, &Series::constant(0.3, 10), 2).unwrap();
        assert_eq!(g.coeffs()[1], 0.0);
        assert!((g.coeffs()[2] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_arguments() {
        assert!(matches!(geom_order_k_pgf(&1.2, &0.5, 2), Err(Error::Domain(_))));
        let plan = SamplingPlan::new(10, 0.2, 1, 2).unwrap();
        assert!(matches!(sampling_joint_pgf(&plan, &0.5, &0.0), Err(Error::Domain(_))));
        assert!(matches!(sampling_joint_pgf(&plan, &1.0, &1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn total_mass_and_marginal() {
        let plan = SamplingPlan::new(20, 0.1, 1, 2).unwrap();
        assert!((sampling_joint_pgf(&plan, &1.0, &1.0).unwrap() - 1.0).abs() < 1e-12);
        let u = 0.7;
        let a = sampling_joint_pgf(&plan, &u, &1.0).unwrap();
        let b = geom_order_k_pgf(&u, &plan.q(), 2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn scan_with_full_window_is_a_run() {
        let plan = SamplingPlan::new(5, 0.2, 1, 3).unwrap();
        let rule = ScanRule::new(3, 3).unwrap();
        for &(u, t) in &[(0.5, 0.5), (0.9, 1.0), (1.0, 0.8), (0.3, 0.1)] {
            let a = sampling_joint_pgf(&plan, &u, &t).unwrap();
            let b = scan_km_joint_pgf(&plan, rule, &u, &t).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn run_chain_matches_closed_form() {
        let plan = SamplingPlan::new(20, 0.1, 1, 3).unwrap();
        let u = Series::var(40);
        let t = Series::constant(Dual::variable(1.0), 40);
        let uu = Series::variable_like(&Dual::constant(0.0), 40);
        let a = sampling_joint_pgf(&plan, &uu, &t).unwrap();
        let b = run_chain_joint_pgf(&plan, &uu, &t).unwrap();
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((x.val - y.val).abs() < 1e-12 && (x.der - y.der).abs() < 1e-11);
        }
        let one = Series::constant(1.0, 40);
        let c = run_chain_joint_pgf(&plan, &u, &one).unwrap();
        let d = sampling_joint_pgf(&plan, &u, &one).unwrap();
        for (x, y) in c.coeffs().iter().zip(d.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn scan_capacity() {
        let plan = SamplingPlan::new(5, 0.2, 1, 3).unwrap();
        let rule = ScanRule::new(3, 17).unwrap();
        assert!(matches!(
            scan_km_joint_pgf(&plan, rule, &0.5, &1.0),
            Err(Error::Capacity { .. })
        ));
        assert!(ScanRule::new(4, 3).is_err());
    }

    #[test]
    fn dual_derivative_in_t() {
        let plan = SamplingPlan::new(20, 0.1, 1, 2).unwrap();
        let u = Dual::constant(0.8);
        let d = sampling_joint_pgf(&plan, &u, &Dual::variable(1.0)).unwrap();
        let h = 1e-6;
        let f = |t: f64| sampling_joint_pgf(&plan, &0.8, &t).unwrap();
        let fd = (f(1.0 + h) - f(1.0 - h)) / (2.0 * h);
        assert!((d.der - fd).abs() < 1e-6);
    }

    #[test]
    fn support_starts_at_kc() {
        let plan = SamplingPlan::new(20, 0.1, 1, 2).unwrap();
        let pmf = st_pmf(&plan, 30).unwrap();
        assert!(pmf[..4].iter().all(|x| x.abs() < 1e-10));
        assert!(pmf[4] > 1e-6);
        assert!(matches!(st_pmf(&plan, 3), Err(Error::Usage(_))));
    }

    #[test]
    fn tail_matches_cdf() {
        let plan = SamplingPlan::new(10, 0.2, 1, 2).unwrap();
        let d = StDistribution::from_pmf(st_pmf(&plan, 200).unwrap()).unwrap();
        for (h, c) in d.tail.iter().zip(&d.cdf) {
            assert!((h - (1.0 - c)).abs() < 1e-10);
        }
    }
}
