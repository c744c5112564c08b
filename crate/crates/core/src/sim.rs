//! Seeded Monte Carlo for the exit walk and the sampling plan, and a
//! two-measure check of the tilting identities.
//!
//! Runs are grouped in blocks of [`BLOCK_SIZE`]; block `j` draws from the
//! ChaCha8 stream `j` of the seed, so results do not depend on how many
//! threads execute the blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit::{ExitModel, LowerBarrier};
use crate::sampling::{SamplingPlan, ScanRule};
use crate::tilted::{BinomialSample, MixedExpStep};

pub const RNG_NAME: &str = "ChaCha8";
pub const BLOCK_SIZE: usize = 4096;

/// Stream offset for draws under the tilted measure.
const TILTED_STREAMS: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub t: u64,
    pub s: f64,
    /// The run hit the horizon before stopping; `t` is the horizon.
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub samples: Vec<SimSample>,
    pub seed: u64,
    pub n_runs: usize,
    /// Step cap, 0 for none.
    pub truncation_horizon: u64,
    pub rng: String,
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for x in values {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let se = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
        MeanEstimate { mean, se, n }
    }

    /// Standardized difference to `value`.
    pub fn z_against(&self, value: f64) -> f64 {
        z_score(self.mean - value, self.se)
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

impl SimResult {
    pub fn censored_fraction(&self) -> f64 {
        self.samples.iter().filter(|s| s.censored).count() as f64 / self.n_runs as f64
    }

    fn finished(&self) -> impl Iterator<Item = &SimSample> {
        self.samples.iter().filter(|s| !s.censored)
    }

    pub fn mean_t(&self) -> MeanEstimate {
        MeanEstimate::from_values(self.finished().map(|s| s.t as f64))
    }

    pub fn mean_s(&self) -> MeanEstimate {
        MeanEstimate::from_values(self.finished().map(|s| s.s))
    }

    /// Fraction of all runs that stopped with `S_T >= b`.
    pub fn prob_up(&self, b: f64) -> MeanEstimate {
        MeanEstimate::from_values(
            self.samples.iter().map(|s| if !s.censored && s.s >= b { 1.0 } else { 0.0 }),
        )
    }

    /// Empirical `P(T = m)` for `m = 0..=max`.
    pub fn pmf_t(&self, max: usize) -> Vec<f64> {
        self.histogram(max, |s| s.t as usize)
    }

    /// Empirical `P(S_T = m)` for integer-valued totals.
    pub fn pmf_s(&self, max: usize) -> Vec<f64> {
        self.histogram(max, |s| s.s.round() as usize)
    }

    fn histogram(&self, max: usize, key: impl Fn(&SimSample) -> usize) -> Vec<f64> {
        let mut counts = vec![0.0; max + 1];
        for s in self.finished() {
            let m = key(s);
            if m <= max {
                counts[m] += 1.0;
            }
        }
        let n = self.n_runs as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    }
}

fn run_blocks<F>(n_runs: usize, seed: u64, stream_base: u64, draw: F) -> Vec<SimSample>
where
    F: Fn(&mut ChaCha8Rng) -> SimSample + Sync,
{
    let blocks = n_runs.div_ceil(BLOCK_SIZE);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + j as u64);
            let len = BLOCK_SIZE.min(n_runs - j * BLOCK_SIZE);
            (0..len).map(|_| draw(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

fn walk(step: &MixedExpStep, lower: f64, b: f64, horizon: u64, rng: &mut ChaCha8Rng) -> SimSample {
    let mut s = 0.0;
    let mut t = 0u64;
    loop {
        t += 1;
        let up: f64 = rng.random();
        if up < step.p {
            s += exponential(rng, step.theta1);
        } else {
            s -= exponential(rng, step.theta2);
        }
        if s >= b || s <= lower {
            return SimSample { t, s, censored: false };
        }
        if horizon > 0 && t >= horizon {
            return SimSample { t, s, censored: true };
        }
    }
}

/// The step cap used for `model`: `horizon` if nonzero, otherwise none for
/// two-sided exits and `ceil(50 b / drift)` for a one-sided exit with
/// positive drift.
pub fn exit_horizon(model: &ExitModel, horizon: u64) -> Result<u64> {
    if horizon > 0 || model.a().is_some() {
        return Ok(horizon);
    }
    let drift = model.step.mean();
    if drift > 0.0 {
        Ok((50.0 * model.b / drift).ceil() as u64)
    } else {
        Err(Error::Usage(format!(
            "the walk has drift {drift} <= 0 and may never reach b; give a horizon"
        )))
    }
}

fn sim_exit_streams(model: &ExitModel, n_runs: usize, seed: u64, horizon: u64, base: u64) -> Result<SimResult> {
    if n_runs == 0 {
        return Err(Error::Usage("need at least one run".into()));
    }
    let horizon = exit_horizon(model, horizon)?;
    let lower = match model.lower {
        LowerBarrier::Finite(a) => -a,
        LowerBarrier::Infinite => f64::NEG_INFINITY,
    };
    let step = model.step;
    let b = model.b;
    let samples = run_blocks(n_runs, seed, base, |rng| walk(&step, lower, b, horizon, rng));
    Ok(SimResult { samples, seed, n_runs, truncation_horizon: horizon, rng: RNG_NAME.into() })
}

/// Simulates the exit walk `n_runs` times. `horizon = 0` selects the
/// default policy of [`exit_horizon`].
pub fn sim_exit(model: &ExitModel, n_runs: usize, seed: u64, horizon: u64) -> Result<SimResult> {
    sim_exit_streams(model, n_runs, seed, horizon, 0)
}

struct BinomialTable {
    cdf: Vec<f64>,
}

impl BinomialTable {
    fn new(sample: &BinomialSample) -> Self {
        let mut acc = 0.0;
        let cdf = sample
            .pmf()
            .into_iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        BinomialTable { cdf }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u32 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.cdf.len() - 1) as u32
    }
}

fn lots(
    table: &BinomialTable,
    c: u32,
    k: u32,
    scan: Option<ScanRule>,
    rng: &mut ChaCha8Rng,
) -> SimSample {
    let (k, window) = match scan {
        Some(r) => (r.k, r.m),
        None => (k, 0),
    };
    let mut s = 0u64;
    let mut t = 0u64;
    let mut run = 0u32;
    let mut bits = 0u32;
    let mask = if window > 1 { (1u32 << (window - 1)) - 1 } else { 0 };
    loop {
        t += 1;
        let z = table.draw(rng);
        s += z as u64;
        let fail = z > c;
        let done = if window == 0 {
            run = if fail { run + 1 } else { 0 };
            run >= k
        } else {
            let hits = bits.count_ones() + fail as u32;
            bits = ((bits << 1) | fail as u32) & mask;
            fail && hits >= k
        };
        if done {
            return SimSample { t, s: s as f64, censored: false };
        }
    }
}

fn sim_sampling_streams(
    plan: &SamplingPlan,
    scan: Option<ScanRule>,
    n_runs: usize,
    seed: u64,
    base: u64,
) -> Result<SimResult> {
    if n_runs == 0 {
        return Err(Error::Usage("need at least one run".into()));
    }
    let table = BinomialTable::new(&plan.sample);
    let (c, k) = (plan.c, plan.k);
    let samples = run_blocks(n_runs, seed, base, |rng| lots(&table, c, k, scan, rng));
    Ok(SimResult { samples, seed, n_runs, truncation_horizon: 0, rng: RNG_NAME.into() })
}

/// Simulates the sampling plan under the run rule, or under `scan` when
/// given.
pub fn sim_sampling(
    plan: &SamplingPlan,
    scan: Option<ScanRule>,
    n_runs: usize,
    seed: u64,
) -> Result<SimResult> {
    sim_sampling_streams(plan, scan, n_runs, seed, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum IdentityTarget {
    Exit { model: ExitModel, horizon: u64 },
    Sampling { plan: SamplingPlan, scan: Option<ScanRule> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub u: f64,
    pub w: f64,
    /// `E(e^{wZ})` for one step or lot.
    pub mgf: f64,
    /// `E(u^T e^{w S_T})` under the original measure.
    pub lhs: MeanEstimate,
    /// `E((u E(e^{wZ}))^T)` under the measure tilted by `w`.
    pub rhs: MeanEstimate,
    pub z_score: f64,
    /// `E(E(e^{wZ})^{-T} e^{w S_T})` under the original measure.
    pub wald: MeanEstimate,
    pub wald_z: f64,
    pub censored: usize,
    pub rng: String,
}

/// Simulates both sides of `E(u^T e^{w S_T}) = E_w((u E(e^{wZ}))^T)`, the
/// right side under the tilted measure, and the fundamental identity
/// `E(E(e^{wZ})^{-T} e^{w S_T}) = 1`. Censored runs contribute zero.
pub fn verify_tilting_identity(
    target: &IdentityTarget,
    u: f64,
    w: f64,
    n_runs: usize,
    seed: u64,
) -> Result<IdentityReport> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::Domain(format!("u must lie in (0,1], got {u}")));
    }
    let (mgf, original, tilted) = match target {
        IdentityTarget::Exit { model, horizon } => {
            let mgf = model.step.mgf(&w)?;
            let tilted_model = ExitModel { step: model.step.tilt(w)?.as_step(), ..*model };
            (
                mgf,
                sim_exit_streams(model, n_runs, seed, *horizon, 0)?,
                sim_exit_streams(&tilted_model, n_runs, seed, *horizon, TILTED_STREAMS)?,
            )
        }
        IdentityTarget::Sampling { plan, scan } => {
            let t = w.exp();
            let mgf = plan.sample.pgf(&t);
            let tilted_plan = SamplingPlan { sample: plan.sample.tilt(t)?, ..*plan };
            (
                mgf,
                sim_sampling_streams(plan, *scan, n_runs, seed, 0)?,
                sim_sampling_streams(&tilted_plan, *scan, n_runs, seed, TILTED_STREAMS)?,
            )
        }
    };
    let term = |s: &SimSample, f: &dyn Fn(&SimSample) -> f64| if s.censored { 0.0 } else { f(s) };
    let lhs = MeanEstimate::from_values(
        original.samples.iter().map(|s| term(s, &|s| u.powf(s.t as f64) * (w * s.s).exp())),
    );
    let base = u * mgf;
    let rhs = MeanEstimate::from_values(tilted.samples.iter().map(|s| term(s, &|s| base.powf(s.t as f64))));
    let wald = MeanEstimate::from_values(
        original.samples.iter().map(|s| term(s, &|s| (w * s.s - s.t as f64 * mgf.ln()).exp())),
    );
    let z = z_score(lhs.mean - rhs.mean, (lhs.se * lhs.se + rhs.se * rhs.se).sqrt());
    let censored = original.samples.iter().chain(&tilted.samples).filter(|s| s.censored).count();
    Ok(IdentityReport {
        u,
        w,
        mgf,
        lhs,
        rhs,
        z_score: z,
        wald_z: wald.z_against(1.0),
        wald,
        censored,
        rng: RNG_NAME.into(),
    })
}
