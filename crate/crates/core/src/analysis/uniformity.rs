//! Monte Carlo test that every layer is a uniform permutation and layers
//! are independent.

use serde::Serialize;

use crate::analysis::stats::{chi_square_gof, chi_square_independence, ChiSquare};
use crate::error::{Error, Result};
use crate::parallel::{try_map_replicas, Execution};
use crate::rng::{Domain, RandomSource};
use crate::topology::{exact_layer_distribution, grow};

/// Largest `N` accepted by [`check_uniformity`].
pub const UNIFORMITY_MAX_N: usize = 5;

/// Lexicographic rank of a permutation of `1..=n` given as successors.
pub fn permutation_rank(succ: &[u32]) -> usize {
    let n = succ.len();
    let mut rank = 0;
    for i in 0..n {
        let smaller = succ[i + 1..].iter().filter(|&&x| x < succ[i]).count();
        rank = rank * (n - i) + smaller;
    }
    rank
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Monte Carlo frequencies against the exact oracle, per layer and cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactComparison {
    /// Every exact joint mass equals `1 / (N!)^M`.
    pub oracle_uniform: bool,
    pub cells: usize,
    /// Largest `|freq - p| / sqrt(p (1 - p) / samples)`.
    pub max_abs_z: f64,
    pub within_three_sigma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub per_layer: Vec<ChiSquare>,
    /// Contingency tests for every layer pair `(a, b)` with `a < b`.
    pub pairwise: Vec<(usize, usize, ChiSquare)>,
    pub exact: Option<ExactComparison>,
}

impl UniformityReport {
    /// Every chi-square test passes at `alpha` split over the tests
    /// (Bonferroni) and the exact comparison, when present, holds.
    pub fn pass(&self, alpha: f64) -> bool {
        let tests = (self.per_layer.len() + self.pairwise.len()).max(1) as f64;
        let level = alpha / tests;
        self.per_layer.iter().all(|t| t.passes(level))
            && self.pairwise.iter().all(|(_, _, t)| t.passes(level))
            && self.exact.as_ref().is_none_or(|e| e.oracle_uniform && e.within_three_sigma)
    }
}

/// Build `samples` fresh networks of `n` peers and test their layers.
pub fn check_uniformity(m: usize, n: usize, samples: usize, rng: &RandomSource, exec: Execution) -> Result<UniformityReport> {
    if !(1..=UNIFORMITY_MAX_N).contains(&n) {
        return Err(Error::OracleLimitExceeded(format!("uniformity check needs 1 ≤ N ≤ {UNIFORMITY_MAX_N}, got {n}")));
    }
    if m == 0 || samples == 0 {
        return Err(Error::invalid("uniformity check needs M ≥ 1 and samples ≥ 1"));
    }
    let cells = factorial(n);
    let key = (n * 16 + m) as u64;
    let ranks: Vec<Vec<usize>> = try_map_replicas(exec, samples, |i| {
        let net = grow(n, m, &rng.derive(Domain::Replica, key, i as u64))?;
        Ok::<_, Error>((0..m).map(|l| permutation_rank(&net.layer_permutation(l))).collect())
    })?;

    let mut marginal = vec![vec![0u64; cells]; m];
    for r in &ranks {
        for (l, &x) in r.iter().enumerate() {
            marginal[l][x] += 1;
        }
    }
    let uniform = vec![1.0 / cells as f64; cells];
    let per_layer = marginal.iter().map(|obs| chi_square_gof(obs, &uniform)).collect::<Result<Vec<_>>>()?;

    let mut pairwise = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            let mut table = vec![vec![0u64; cells]; cells];
            for r in &ranks {
                table[r[a]][r[b]] += 1;
            }
            pairwise.push((a, b, chi_square_independence(&table)?));
        }
    }

    let exact = if n <= 4 && cells.pow(m as u32) <= 1_000_000 {
        let dist = exact_layer_distribution(n, m)?;
        let total = cells.pow(m as u32);
        let oracle_uniform = dist.len() == total && dist.values().all(|p| *p.numer() == 1 && *p.denom() == total as u64);
        let mut masses = vec![vec![0f64; cells]; m];
        for (tuple, p) in &dist {
            let p = *p.numer() as f64 / *p.denom() as f64;
            for (l, succ) in tuple.iter().enumerate() {
                masses[l][permutation_rank(succ)] += p;
            }
        }
        let mut max_abs_z: f64 = 0.0;
        for l in 0..m {
            for x in 0..cells {
                let p = masses[l][x];
                let freq = marginal[l][x] as f64 / samples as f64;
                let sd = (p * (1.0 - p) / samples as f64).sqrt();
                let z = if sd == 0.0 { if freq == p { 0.0 } else { f64::INFINITY } } else { (freq - p).abs() / sd };
                max_abs_z = max_abs_z.max(z);
            }
        }
        Some(ExactComparison { oracle_uniform, cells: m * cells, max_abs_z, within_three_sigma: max_abs_z <= 3.0 })
    } else {
        None
    };
    Ok(UniformityReport { n, m, samples, per_layer, pairwise, exact })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_are_lexicographic() {
        assert_eq!(permutation_rank(&[1, 2, 3]), 0);
        assert_eq!(permutation_rank(&[1, 3, 2]), 1);
        assert_eq!(permutation_rank(&[3, 2, 1]), 5);
        assert_eq!(permutation_rank(&[1]), 0);
    }

    #[test]
    fn single_peer_is_trivially_uniform() {
        let r = check_uniformity(2, 1, 10, &RandomSource::new(0), Execution::Sequential).unwrap();
        assert!(r.pass(1e-3));
        assert_eq!(r.per_layer[0].dof, 0);
        assert!(r.exact.unwrap().oracle_uniform);
    }

    #[test]
    fn three_peers_one_layer() {
        let r = check_uniformity(1, 3, 60_000, &RandomSource::new(5), Execution::Parallel).unwrap();
        assert!(r.pass(1e-3), "{r:?}");
        assert!(r.pairwise.is_empty());
    }

    #[test]
    fn limits() {
        assert!(check_uniformity(1, 6, 10, &RandomSource::new(0), Execution::Sequential).is_err());
        assert!(check_uniformity(0, 3, 10, &RandomSource::new(0), Execution::Sequential).is_err());
    }
}
