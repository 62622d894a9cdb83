//! Goodness-of-fit tests and summary statistics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Outcome of a chi-square test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins left after merging sparse ones.
    pub bins: usize,
}

impl ChiSquare {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

fn survival(statistic: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Invariant(e.to_string()))?;
    Ok(dist.sf(statistic))
}

/// Pearson goodness of fit of `observed` counts against cell probabilities.
///
/// Adjacent cells are merged left to right until each expected count is at
/// least 5; a short tail is folded into the last merged bin.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probs.len() {
        return Err(Error::invalid("observed and expected cells differ in length"));
    }
    let total: u64 = observed.iter().sum();
    let mass: f64 = probs.iter().sum();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("cell probabilities sum to {mass}")));
    }
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &p) in observed.iter().zip(probs) {
        o += ob as f64;
        e += p * total as f64;
        if e >= 5.0 {
            merged.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => merged.push((o, e)),
        }
    }
    let statistic: f64 = merged.iter().filter(|(_, e)| *e > 0.0).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = merged.len().saturating_sub(1);
    Ok(ChiSquare { statistic, dof, p_value: survival(statistic, dof)?, bins: merged.len() })
}

/// Pearson test of independence on a contingency table.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<ChiSquare> {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("ragged contingency table"));
    }
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j] as f64).sum()).collect();
    let total: f64 = rows.iter().sum();
    let mut statistic = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            let e = rows[i] * col_sums[j] / total;
            if e > 0.0 {
                statistic += (o as f64 - e).powi(2) / e;
            }
        }
    }
    let live_rows = rows.iter().filter(|&&r| r > 0.0).count();
    let live_cols = col_sums.iter().filter(|&&c| c > 0.0).count();
    let dof = live_rows.saturating_sub(1) * live_cols.saturating_sub(1);
    Ok(ChiSquare { statistic, dof, p_value: survival(statistic, dof)?, bins: live_rows * live_cols })
}

/// Equal-width histogram test of values in `[0, 1)` against the uniform law.
pub fn chi_square_uniform01(values: &[f64], bins: usize) -> Result<ChiSquare> {
    let mut counts = vec![0u64; bins];
    for &u in values {
        let b = ((u * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    chi_square_gof(&counts, &vec![1.0 / bins as f64; bins])
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe { n, mean: f64::NAN, se: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { n, mean, se: f64::NAN };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanSe { n, mean, se: (var / n as f64).sqrt() }
}

/// Least-squares line `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("linear fit needs at least two paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("linear fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { intercept: my - slope * mx, slope, r_squared })
}

/// Empirical frequency of `true`.
pub fn frequency(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return f64::NAN;
    }
    flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64
}
