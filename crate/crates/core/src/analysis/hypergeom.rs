//! Hypergeometric distribution: exact mean, sampling, pmf and cdf.
//!
//! `HG(pop, successes, draws)` counts successes among `draws` items taken
//! without replacement from `pop` items of which `successes` are marked.

use num_rational::Ratio;
use rand::Rng;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

fn check(pop: u64, successes: u64, draws: u64) -> Result<()> {
    if successes > pop || draws > pop {
        return Err(Error::invalid(format!(
            "hypergeometric parameters out of range: pop={pop} successes={successes} draws={draws}"
        )));
    }
    Ok(())
}

/// `draws · successes / pop` as an exact fraction (zero when `pop = 0`).
pub fn hypergeom_mean(pop: u64, successes: u64, draws: u64) -> Result<Ratio<u64>> {
    check(pop, successes, draws)?;
    if pop == 0 {
        return Ok(Ratio::from_integer(0));
    }
    // Reduce before multiplying to stay inside u64.
    let a = Ratio::new(successes, pop);
    Ok(a * Ratio::from_integer(draws))
}

pub fn hypergeom_variance(pop: u64, successes: u64, draws: u64) -> Result<f64> {
    check(pop, successes, draws)?;
    if pop <= 1 {
        return Ok(0.0);
    }
    let (n, k, d) = (pop as f64, successes as f64, draws as f64);
    Ok(d * (k / n) * ((n - k) / n) * ((n - d) / (n - 1.0)))
}

/// One exact sample by drawing items from the urn one at a time.
pub fn hypergeom_sample<R: Rng + ?Sized>(pop: u64, successes: u64, draws: u64, rng: &mut R) -> Result<u64> {
    check(pop, successes, draws)?;
    let (mut left, mut marked, mut hits) = (pop, successes, 0);
    for _ in 0..draws {
        if marked == 0 {
            break;
        }
        if rng.random_range(0..left) < marked {
            marked -= 1;
            hits += 1;
        }
        left -= 1;
    }
    Ok(hits)
}

/// Support `lo..=hi` of `HG(pop, successes, draws)`.
pub fn support(pop: u64, successes: u64, draws: u64) -> (u64, u64) {
    ((draws + successes).saturating_sub(pop), draws.min(successes))
}

fn ln_pmf(pop: u64, successes: u64, draws: u64, x: u64) -> f64 {
    ln_binomial(successes, x) + ln_binomial(pop - successes, draws - x) - ln_binomial(pop, draws)
}

/// `P(X = x)`.
pub fn hypergeom_pmf(pop: u64, successes: u64, draws: u64, x: u64) -> Result<f64> {
    check(pop, successes, draws)?;
    let (lo, hi) = support(pop, successes, draws);
    if x < lo || x > hi {
        return Ok(0.0);
    }
    Ok(ln_pmf(pop, successes, draws, x).exp())
}

/// `P(X = x) / P(X = x - 1)`.
fn step_ratio(pop: u64, successes: u64, draws: u64, x: u64) -> f64 {
    let (n, k, d, x) = (pop as f64, successes as f64, draws as f64, x as f64);
    (k - x + 1.0) * (d - x + 1.0) / (x * (n - k - d + x))
}

/// `(P(X < x), P(X = x))`, summed outward from `x` with the pmf ratio
/// recurrence until terms stop mattering.
pub fn hypergeom_split(pop: u64, successes: u64, draws: u64, x: u64) -> Result<(f64, f64)> {
    check(pop, successes, draws)?;
    let (lo, hi) = support(pop, successes, draws);
    if x < lo {
        return Ok((0.0, 0.0));
    }
    if x > hi {
        return Ok((1.0, 0.0));
    }
    let px = ln_pmf(pop, successes, draws, x).exp();
    let below = |x: u64| {
        let mut sum = 0.0;
        let mut term = px;
        let mut k = x;
        while k > lo {
            term /= step_ratio(pop, successes, draws, k);
            k -= 1;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        sum
    };
    let above = |x: u64| {
        let mut sum = 0.0;
        let mut term = px;
        let mut k = x;
        while k < hi {
            k += 1;
            term *= step_ratio(pop, successes, draws, k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        sum
    };
    let mean = draws as f64 * successes as f64 / pop as f64;
    let lower = if (x as f64) <= mean { below(x) } else { (1.0 - px - above(x)).max(0.0) };
    Ok((lower, px))
}

/// Randomised probability integral transform `F(x-1) + u·P(X = x)`, which is
/// exactly uniform on `[0, 1)` when `x` is drawn from the distribution.
pub fn hypergeom_pit(pop: u64, successes: u64, draws: u64, x: u64, u: f64) -> Result<f64> {
    let (lower, px) = hypergeom_split(pop, successes, draws, x)?;
    Ok((lower + u * px).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, RandomSource};

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn mean_exact() {
        assert_eq!(hypergeom_mean(10, 5, 4).unwrap(), Ratio::from_integer(2));
        assert_eq!(hypergeom_mean(7, 7, 3).unwrap(), Ratio::from_integer(3));
        assert_eq!(hypergeom_mean(3, 1, 1).unwrap(), Ratio::new(1, 3));
        assert_eq!(hypergeom_mean(0, 0, 0).unwrap(), Ratio::from_integer(0));
        assert!(hypergeom_mean(3, 4, 1).is_err());
        assert!(hypergeom_mean(3, 1, 4).is_err());
        let big = hypergeom_mean(100_000, 99_990, 40_000).unwrap();
        assert_eq!(big, Ratio::new(99_990u64 * 40_000 / 100, 1_000));
    }

    #[test]
    fn degenerate_samples() {
        let mut rng = RandomSource::new(1).stream(Domain::Sampling, 0, 0);
        assert_eq!(hypergeom_sample(10, 4, 0, &mut rng).unwrap(), 0);
        assert_eq!(hypergeom_sample(10, 0, 7, &mut rng).unwrap(), 0);
        assert_eq!(hypergeom_sample(10, 10, 7, &mut rng).unwrap(), 7);
        assert_eq!(hypergeom_sample(10, 4, 10, &mut rng).unwrap(), 4);
    }

    #[test]
    fn pmf_matches_binomial_formula() {
        let (n, k, d) = (20u64, 8u64, 6u64);
        let mut total = 0.0;
        for x in 0..=6 {
            let exact = binom(k, x) * binom(n - k, d - x) / binom(n, d);
            let p = hypergeom_pmf(n, k, d, x).unwrap();
            assert!((p - exact).abs() < 1e-12, "x={x}");
            total += p;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_is_cdf() {
        for &(n, k, d) in &[(20u64, 8u64, 6u64), (50, 45, 30), (1000, 300, 200), (100_000, 60_000, 20_000)] {
            let (lo, hi) = support(n, k, d);
            let mut cdf = 0.0;
            for x in lo..=hi {
                let (below, px) = hypergeom_split(n, k, d, x).unwrap();
                assert!((below - cdf).abs() < 1e-9, "({n},{k},{d}) x={x}: {below} vs {cdf}");
                cdf += px;
            }
            assert!((cdf - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_mean_within_three_sigma() {
        let mut rng = RandomSource::new(2).stream(Domain::Sampling, 0, 0);
        let (n, k, d) = (50u64, 20u64, 10u64);
        let samples = 1_000_000u64;
        let sum: u64 = (0..samples).map(|_| hypergeom_sample(n, k, d, &mut rng).unwrap()).sum();
        let mean = sum as f64 / samples as f64;
        let exact = hypergeom_mean(n, k, d).unwrap();
        let exact = *exact.numer() as f64 / *exact.denom() as f64;
        let se = (hypergeom_variance(n, k, d).unwrap() / samples as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact}");
    }
}
