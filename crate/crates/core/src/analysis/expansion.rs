//! Depth expansion near the source: `N_d`, its layer split, and the flow-1
//! share `X_d`, with the checks built on them.

use serde::Serialize;

use crate::analysis::bounds::TheoryBounds;
use crate::analysis::hypergeom::{hypergeom_mean, hypergeom_pit};
use crate::error::{Error, Result};
use crate::rfa::{depth_histogram, main_flow_counts, RfaState};
use crate::rng::{uniform_unit, Domain, RandomSource};
use crate::topology::Network;

/// Per-depth counts for `d = 0 ..= d*` on one replica.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpansionStats {
    pub n: usize,
    pub dstar: u32,
    /// `N_d`.
    pub n_d: Vec<usize>,
    /// `N'_d`: depth-`d` peers whose layer-1 parent sits at depth `d-1`.
    pub n_prime: Vec<usize>,
    /// `N''_d`: depth-`d` peers reached only through layer 2.
    pub n_dprime: Vec<usize>,
    /// `X_d`: flow-1 peers at depth `d`.
    pub x: Vec<usize>,
}

impl ExpansionStats {
    /// `N_{>d}`; `d = -1` gives `N`.
    pub fn beyond(&self, d: i64) -> usize {
        if d < 0 {
            return self.n;
        }
        self.n - self.n_d.iter().take(d as usize + 1).sum::<usize>()
    }

    /// `N_h = 2 N_{h-1}` for every `1 ≤ h ≤ d`.
    pub fn is_binary_up_to(&self, d: u32) -> bool {
        (1..=d as usize).all(|h| h < self.n_d.len() && self.n_d[h] == 2 * self.n_d[h - 1])
    }

    /// `max_{1≤d≤d*} |X_d / N_d - 1/2|` over non-empty depths.
    pub fn max_half_split_gap(&self) -> f64 {
        (1..self.n_d.len())
            .filter(|&d| self.n_d[d] > 0)
            .map(|d| (self.x[d] as f64 / self.n_d[d] as f64 - 0.5).abs())
            .fold(0.0, f64::max)
    }
}

pub fn measure_expansion(net: &Network, state: &RfaState) -> Result<ExpansionStats> {
    if state.m() != 2 {
        return Err(Error::AnalysisLimitedToTwoFlows(state.m()));
    }
    let hist = depth_histogram(state);
    let x = main_flow_counts(state)?;
    let len = hist.counts.len();
    let mut n_prime = vec![0usize; len];
    let mut n_dprime = vec![0usize; len];
    for &v in state.peers() {
        let Some(d) = state.depth(v) else { continue };
        if d == 0 {
            continue;
        }
        let p = net.parent(v, 0);
        if state.depth(p) == Some(d - 1) {
            n_prime[d as usize] += 1;
        } else {
            n_dprime[d as usize] += 1;
        }
    }
    Ok(ExpansionStats { n: state.n(), dstar: state.dstar(), n_d: hist.counts, n_prime, n_dprime, x })
}

/// Outcome of the expansion event on one replica.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionEvent {
    /// `N_d ≥ 2 φ_{d-1} N_{d-1}` for every `1 ≤ d ≤ d*`.
    pub growth: bool,
    /// `N_{d*} ≥ (1-ε) N / (ln N)^c`.
    pub final_depth: bool,
    /// First depth where the growth condition fails.
    pub first_failure: Option<u32>,
}

impl ExpansionEvent {
    pub fn holds(&self) -> bool {
        self.growth && self.final_depth
    }
}

pub fn check_expansion_event(stats: &ExpansionStats, bounds: &TheoryBounds, eps: f64) -> ExpansionEvent {
    let mut first_failure = None;
    for d in 1..=stats.dstar {
        let need = 2.0 * bounds.phi(d - 1, stats) * stats.n_d[d as usize - 1] as f64;
        if (stats.n_d[d as usize] as f64) < need {
            first_failure = Some(d);
            break;
        }
    }
    let final_depth = stats.n_d[stats.dstar as usize] as f64 >= bounds.final_depth_target(eps);
    ExpansionEvent { growth: first_failure.is_none(), final_depth, first_failure }
}

/// `|X_d / N_d - 1/2| < ε` for every non-empty depth `1 ≤ d ≤ d*`.
pub fn check_half_split(stats: &ExpansionStats, eps: f64) -> bool {
    stats.max_half_split_gap() < eps
}

/// Randomised PIT values of `N'_{d+1}` and `N''_{d+1}` under their
/// conditional hypergeometric laws, for `0 ≤ d < d*`.
///
/// `N'_{d+1} ~ HG(N_{>d-1}, N_{>d}, N_d)` and
/// `N''_{d+1} ~ HG(N_{>d-1}, N_{>d} - N'_{d+1}, N_d)`. Under the model each
/// returned sequence is i.i.d. uniform on `[0, 1)`.
pub fn hypergeometric_pits(stats: &ExpansionStats, rng: &RandomSource, replica: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut first = Vec::new();
    let mut second = Vec::new();
    for d in 0..stats.dstar as usize {
        let pop = stats.beyond(d as i64 - 1) as u64;
        let fresh = stats.beyond(d as i64) as u64;
        let draws = stats.n_d[d] as u64;
        let mut s = rng.stream(Domain::Pit, replica, d as u64);
        let a = stats.n_prime[d + 1] as u64;
        first.push(hypergeom_pit(pop, fresh, draws, a, uniform_unit(&mut s))?);
        let b = stats.n_dprime[d + 1] as u64;
        second.push(hypergeom_pit(pop, fresh - a, draws, b, uniform_unit(&mut s))?);
    }
    Ok((first, second))
}

/// `N_{d+1} - E[N_{d+1} | N_0..N_d]` for `0 ≤ d < d*`, where the
/// conditional mean is `2 N_{>d} N_d / N_{>d-1} - N_{>d} N_d² / N_{>d-1}²`.
pub fn growth_residuals(stats: &ExpansionStats) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(stats.dstar as usize);
    for d in 0..stats.dstar as usize {
        let pop = stats.beyond(d as i64 - 1) as u64;
        let fresh = stats.beyond(d as i64) as u64;
        let nd = stats.n_d[d] as u64;
        let first = hypergeom_mean(pop, fresh, nd)?;
        let mean = if pop == 0 { 0.0 } else {
            let m1 = *first.numer() as f64 / *first.denom() as f64;
            m1 + nd as f64 * (fresh as f64 - m1) / pop as f64
        };
        out.push(stats.n_d[d + 1] as f64 - mean);
    }
    Ok(out)
}
