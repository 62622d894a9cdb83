//! Finite-N evaluations of the expansion regime constants and bounds.

use serde::Serialize;

use crate::analysis::expansion::ExpansionStats;

/// Regime boundaries `d1 = ⌈log₂N / 3⌉`, `d2 = ⌈5 log₂N / 6⌉` and the
/// per-depth growth factors `φ_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryBounds {
    pub n: usize,
    pub c: f64,
    pub dstar: u32,
    pub d1: u32,
    pub d2: u32,
}

impl TheoryBounds {
    pub fn new(n: usize, c: f64, dstar: u32) -> Self {
        let log2n = (n as f64).log2();
        Self { n, c, dstar, d1: (log2n / 3.0).ceil() as u32, d2: (5.0 * log2n / 6.0).ceil() as u32 }
    }

    /// `d1 < d2 ≤ d*`; regime checks are skipped when this fails.
    pub fn regimes_ordered(&self) -> bool {
        self.d1 < self.d2 && self.d2 <= self.dstar
    }

    /// `φ_d`: 1 below `d1`, `1 - N^{-1/9}` up to `d2`, then
    /// `(1 - N_d / N_{>d-1})^3`.
    pub fn phi(&self, d: u32, stats: &ExpansionStats) -> f64 {
        if d < self.d1 {
            1.0
        } else if d < self.d2 {
            1.0 - (self.n as f64).powf(-1.0 / 9.0)
        } else {
            let above = stats.beyond(d as i64 - 1) as f64;
            if above == 0.0 {
                0.0
            } else {
                (1.0 - stats.n_d[d as usize] as f64 / above).powi(3)
            }
        }
    }

    /// `σ_d = 1 - 2 N_d / N_{>d-1} - φ_d`.
    pub fn sigma(&self, d: u32, stats: &ExpansionStats) -> f64 {
        let above = stats.beyond(d as i64 - 1) as f64;
        1.0 - 2.0 * stats.n_d[d as usize] as f64 / above - self.phi(d, stats)
    }

    /// `1 - d·2^{2d} / (N - 2^d)` at `d = d1`.
    pub fn binary_prefix_bound(&self) -> f64 {
        let d = self.d1 as i32;
        let p = 2f64.powi(d);
        1.0 - d as f64 * p * p / (self.n as f64 - p)
    }

    /// `1 - 2(1+ε) log₂N / N^{1/3}`.
    pub fn expansion_bound(&self, eps: f64) -> f64 {
        let n = self.n as f64;
        1.0 - 2.0 * (1.0 + eps) * n.log2() / n.cbrt()
    }

    /// `(1-ε) N / (ln N)^c`.
    pub fn final_depth_target(&self, eps: f64) -> f64 {
        let n = self.n as f64;
        (1.0 - eps) * n / n.ln().powf(self.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_boundaries() {
        let b = TheoryBounds::new(100_000, 0.5, 15);
        assert_eq!((b.d1, b.d2), (6, 14));
        assert!(b.regimes_ordered());
        // 1 - 6·4096 / (100000 - 64)
        assert!((b.binary_prefix_bound() - (1.0 - 24_576.0 / 99_936.0)).abs() < 1e-12);
        assert!(!TheoryBounds::new(100, 0.5, 5).regimes_ordered());
        let t = b.final_depth_target(0.1);
        assert!((t - 0.9 * 100_000.0 / 100_000f64.ln().sqrt()).abs() < 1e-9);
    }
}
