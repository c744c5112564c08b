#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

/// Binomial pmf by direct products of factorial ratios.
pub fn binomial_pmf(n: u32, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|x| {
            let mut c = 1.0;
            for i in 0..x {
                c *= (n - i) as f64 / (i + 1) as f64;
            }
            c * p.powi(x as i32) * (1.0 - p).powi((n - x) as i32)
        })
        .collect()
}

/// `joint[r][m] = P(T = r, S_T = m)` for the k-run rule, by enumerating
/// (run progress, accumulated defectives) over every lot outcome.
pub fn dp_run_joint(n: u32, p: f64, c: u32, k: u32, rmax: usize, mmax: usize) -> Vec<Vec<f64>> {
    let pmf = binomial_pmf(n, p);
    let mut joint = vec![vec![0.0; mmax + 1]; rmax + 1];
    let mut states: BTreeMap<(u32, usize), f64> = BTreeMap::new();
    states.insert((0, 0), 1.0);
    for r in 1..=rmax {
        let mut next = BTreeMap::new();
        for (&(j, s), &pr) in &states {
            for (x, &px) in pmf.iter().enumerate() {
                let s2 = s + x;
                let w = pr * px;
                if x as u32 > c {
                    if j + 1 == k {
                        if s2 <= mmax {
                            joint[r][s2] += w;
                        }
                    } else {
                        *next.entry((j + 1, s2)).or_insert(0.0) += w;
                    }
                } else {
                    *next.entry((0, s2)).or_insert(0.0) += w;
                }
            }
        }
        states = next;
    }
    joint
}

/// Same as [`dp_run_joint`] for the k-out-of-m scan rule; the state holds
/// the outcomes of the last `m - 1` lots explicitly.
pub fn dp_scan_joint(
    n: u32,
    p: f64,
    c: u32,
    k: usize,
    m: usize,
    rmax: usize,
    mmax: usize,
) -> Vec<Vec<f64>> {
    let pmf = binomial_pmf(n, p);
    let mut joint = vec![vec![0.0; mmax + 1]; rmax + 1];
    let mut states: BTreeMap<(Vec<bool>, usize), f64> = BTreeMap::new();
    states.insert((Vec::new(), 0), 1.0);
    for r in 1..=rmax {
        let mut next = BTreeMap::new();
        for ((window, s), &pr) in &states {
            for (x, &px) in pmf.iter().enumerate() {
                let fail = x as u32 > c;
                let mut w: VecDeque<bool> = window.iter().copied().collect();
                w.push_back(fail);
                while w.len() > m {
                    w.pop_front();
                }
                let hits = w.iter().filter(|&&b| b).count();
                let s2 = s + x;
                if fail && hits >= k {
                    if s2 <= mmax {
                        joint[r][s2] += pr * px;
                    }
                } else {
                    while w.len() > m.saturating_sub(1) {
                        w.pop_front();
                    }
                    *next.entry((w.into_iter().collect(), s2)).or_insert(0.0) += pr * px;
                }
            }
        }
        states = next;
    }
    joint
}

/// `P(T = r)` for `r <= rmax` when each trial succeeds with probability
/// `q` and `k` successes in a row are needed.
pub fn dp_run_waiting(q: f64, k: usize, rmax: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; rmax + 1];
    let mut occ = vec![0.0; k];
    occ[0] = 1.0;
    for r in 1..=rmax {
        let mut next = vec![0.0; k];
        for j in 0..k {
            next[0] += occ[j] * (1.0 - q);
            if j + 1 == k {
                pmf[r] += occ[j] * q;
            } else {
                next[j + 1] += occ[j] * q;
            }
        }
        occ = next;
    }
    pmf
}

/// Composite Simpson rule on `[lo, hi]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let x = lo + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

/// `∫ g(x) f(x) dx` for the mixed-exponential density `f`.
pub fn mixed_exp_integral(p: f64, t1: f64, t2: f64, g: impl Fn(f64) -> f64) -> f64 {
    let up = simpson(|x| g(x) * p * t1 * (-t1 * x).exp(), 0.0, 80.0 / t1, 200_000);
    let down = simpson(|x| g(x) * (1.0 - p) * t2 * (t2 * x).exp(), -80.0 / t2, 0.0, 200_000);
    up + down
}

pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `sum log P(T = tau_i | p)` for the k-run plan, from the run DP.
pub fn run_loglik(n: u32, p: f64, c: u32, k: usize, taus: &[u64]) -> f64 {
    let pmf = binomial_pmf(n, p);
    let q: f64 = pmf[(c as usize + 1)..].iter().sum();
    let max = *taus.iter().max().unwrap() as usize;
    let t = dp_run_waiting(q, k, max);
    taus.iter().map(|&tau| t[tau as usize].ln()).sum()
}

/// Maximizer of [`run_loglik`] over a grid of step `step`.
pub fn grid_mle(n: u32, c: u32, k: usize, taus: &[u64], step: f64) -> f64 {
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut p = step;
    while p < 1.0 {
        let l = run_loglik(n, p, c, k, taus);
        if l > best.0 {
            best = (l, p);
        }
        p += step;
    }
    best.1
}
