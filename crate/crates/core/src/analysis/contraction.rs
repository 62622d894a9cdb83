//! Checks on the contraction sequence `γ_h` pooled over replicas.

use serde::Serialize;

use crate::analysis::stats::{mean_se, MeanSe};
use crate::flowgraph::ContractionStats;

/// Mean increment `γ_{h+1} - γ_h` over replicas where both are defined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleRow {
    pub h: usize,
    pub increment: MeanSe,
    pub pass: bool,
}

/// Frequency of `γ_{h+1} ≤ γ_h + ε` against the mean of the per-replica
/// bounds `1 - 2 exp(-ε² S_{>h} / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRow {
    pub h: usize,
    pub replicas: usize,
    pub frequency: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HStarSummary {
    pub limit: f64,
    /// Replicas with `h*` defined and at most `limit`.
    pub within: usize,
    pub replicas: usize,
    pub fraction: f64,
    pub max: Option<usize>,
    pub pass: bool,
}

/// `γ_1 ≤ 1 - 1/(ln N)^c` on replicas where `S_1 ≥ (1-ε) N / (2 (ln N)^c)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gamma1Summary {
    pub bound: f64,
    pub eligible: usize,
    pub held: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub martingale: Vec<MartingaleRow>,
    pub steps: Vec<StepRow>,
    pub h_star: HStarSummary,
    pub gamma1: Gamma1Summary,
}

impl ContractionReport {
    pub fn martingale_pass(&self) -> bool {
        self.martingale.iter().all(|r| r.pass)
    }

    pub fn steps_pass(&self) -> bool {
        self.steps.iter().all(|r| r.pass)
    }

    pub fn pass(&self) -> bool {
        self.martingale_pass() && self.steps_pass() && self.h_star.pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionConfig {
    pub n: usize,
    pub c: f64,
    pub eps: f64,
    pub margin: f64,
    /// Increments are tested for `1 ≤ h ≤ h_max`.
    pub h_max: usize,
    /// `h*` must not exceed `h_star_factor · ln N` ...
    pub h_star_factor: f64,
    /// ... in at least this fraction of replicas.
    pub h_star_quantile: f64,
}

impl ContractionConfig {
    pub fn new(n: usize, c: f64) -> Self {
        Self { n, c, eps: 0.1, margin: 0.05, h_max: 10, h_star_factor: 1.2, h_star_quantile: 0.95 }
    }
}

fn gamma(s: &ContractionStats, h: usize) -> Option<f64> {
    s.gamma.get(h).copied().filter(|g| !g.is_nan())
}

pub fn check_contraction(samples: &[ContractionStats], cfg: &ContractionConfig) -> ContractionReport {
    let mut martingale = Vec::new();
    let mut steps = Vec::new();
    for h in 1..=cfg.h_max {
        let mut inc = Vec::new();
        let mut held = 0usize;
        let mut bound_sum = 0.0;
        for s in samples {
            if let (Some(a), Some(b)) = (gamma(s, h), gamma(s, h + 1)) {
                inc.push(b - a);
                if b <= a + cfg.eps {
                    held += 1;
                }
                bound_sum += 1.0 - 2.0 * (-cfg.eps * cfg.eps * s.remaining[h] as f64 / 2.0).exp();
            }
        }
        if inc.is_empty() {
            continue;
        }
        let m = mean_se(&inc);
        let pass = if m.se.is_nan() || m.se == 0.0 { m.mean.abs() < 1e-12 || inc.len() == 1 } else { m.mean.abs() <= 3.0 * m.se };
        martingale.push(MartingaleRow { h, increment: m, pass });
        let frequency = held as f64 / inc.len() as f64;
        let bound = bound_sum / inc.len() as f64;
        steps.push(StepRow { h, replicas: inc.len(), frequency, bound, pass: frequency >= bound - cfg.margin });
    }

    let ln_n = (cfg.n as f64).ln();
    let limit = cfg.h_star_factor * ln_n;
    let within = samples.iter().filter(|s| s.h_star.is_some_and(|h| h as f64 <= limit)).count();
    let fraction = if samples.is_empty() { f64::NAN } else { within as f64 / samples.len() as f64 };
    let h_star = HStarSummary {
        limit,
        within,
        replicas: samples.len(),
        fraction,
        max: samples.iter().filter_map(|s| s.h_star).max(),
        pass: fraction >= cfg.h_star_quantile,
    };

    let bound = 1.0 - 1.0 / ln_n.powf(cfg.c);
    let need = (1.0 - cfg.eps) * cfg.n as f64 / (2.0 * ln_n.powf(cfg.c));
    let mut gamma1 = Gamma1Summary { bound, eligible: 0, held: 0 };
    for s in samples {
        if s.shells.len() > 1 && s.shells[1] as f64 >= need {
            gamma1.eligible += 1;
            if gamma(s, 1).is_some_and(|g| g <= bound) {
                gamma1.held += 1;
            }
        }
    }
    ContractionReport { martingale, steps, h_star, gamma1 }
}
