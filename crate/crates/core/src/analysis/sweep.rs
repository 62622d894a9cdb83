//! Repair sweep over network sizes and extra-layer counts.

use serde::Serialize;

use crate::analysis::stats::{linear_fit, mean_se, LinearFit};
use crate::dissemination::{simulate, verify_delay_equals_distance};
use crate::error::{Error, Result};
use crate::flowgraph::{decompose_all, distance_delay_table};
use crate::parallel::{try_map_replicas, Execution};
use crate::repair::resolve_repairs;
use crate::rfa::compute_rfa;
use crate::rng::{Domain, RandomSource};
use crate::topology::grow;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub ns: Vec<usize>,
    pub m: usize,
    pub ks: Vec<usize>,
    pub replicas: usize,
    pub c: f64,
    pub seed: u64,
    /// Also run the slotted dissemination on every base network and
    /// require delays to equal flow-graph distances.
    pub cross_check: bool,
    #[serde(skip)]
    pub exec: Execution,
}

impl SweepConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            ns: vec![10, 31, 100, 316, 1000, 3163],
            m: 4,
            ks: vec![0, 1, 2],
            replicas: 100,
            c: 0.5,
            seed,
            cross_check: true,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub replica: usize,
    pub disconnected_before: usize,
    pub disconnected_after: usize,
    pub extra_uploaders: usize,
    /// Largest delay over peers receiving every flow after repair.
    pub max_delay: u32,
}

/// Rows ordered by `(N, K, replica)`. The base network of a replica is
/// shared by every `K`, so results are comparable across `K`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.ns.is_empty() || cfg.ks.is_empty() || cfg.replicas == 0 {
        return Err(Error::invalid("sweep needs at least one N, one K and one replica"));
    }
    if cfg.ns.contains(&0) || cfg.m == 0 {
        return Err(Error::invalid("sweep needs N ≥ 1 and M ≥ 1"));
    }
    crate::rfa::check_c(cfg.c)?;
    let k_max = *cfg.ks.iter().max().expect("non-empty");
    let root = RandomSource::new(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.ns.len() * cfg.ks.len() * cfg.replicas);
    for &n in &cfg.ns {
        let per_replica = try_map_replicas(cfg.exec, cfg.replicas, |r| {
            let rng = root.derive(Domain::Replica, n as u64, r as u64);
            let mut net = grow(n, cfg.m, &rng)?;
            net.extend_layers(k_max, &rng)?;
            let state = compute_rfa(&net, cfg.c, &rng)?;
            let (graphs, decomps) = decompose_all(&net, &state)?;
            if cfg.cross_check {
                let table = distance_delay_table(&decomps);
                let log = simulate(&net, &state, 2 * (table.max_delay() as usize + 1))?;
                let report = verify_delay_equals_distance(&log, &table)?;
                if !report.is_exact() {
                    return Err(Error::Invariant(format!(
                        "N={n} replica {r}: {} delay mismatches",
                        report.mismatches.len() + report.rate_violations
                    )));
                }
            }
            cfg.ks
                .iter()
                .map(|&k| {
                    let plan = resolve_repairs(&net, &state, &graphs, &decomps, k)?;
                    Ok(SweepRow {
                        n,
                        m: cfg.m,
                        k,
                        replica: r,
                        disconnected_before: plan.disconnected_before,
                        disconnected_after: plan.disconnected_after,
                        extra_uploaders: plan.extra_uploaders.len(),
                        max_delay: plan.delays.connected_max_delay(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (ki, _) in cfg.ks.iter().enumerate() {
            rows.extend(per_replica.iter().map(|rs| rs[ki]));
        }
    }
    Ok(rows)
}

/// Sweep CSV: `N,M,K,replica,disconnected_before,disconnected_after,extra_uploaders,max_delay`.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = crate::output::csv_writer();
    w.write_record(["N", "M", "K", "replica", "disconnected_before", "disconnected_after", "extra_uploaders", "max_delay"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.k.to_string(),
            r.replica.to_string(),
            r.disconnected_before.to_string(),
            r.disconnected_after.to_string(),
            r.extra_uploaders.to_string(),
            r.max_delay.to_string(),
        ])?;
    }
    crate::output::finish(w)
}

/// Replica means for one `(N, K)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellMeans {
    pub n: usize,
    pub k: usize,
    pub replicas: usize,
    pub disconnected_before: f64,
    pub disconnected_after: f64,
    pub extra_uploaders: f64,
    pub max_delay: f64,
}

/// Means per `(N, K)` in the order cells first appear.
pub fn cell_means(rows: &[SweepRow]) -> Vec<CellMeans> {
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.n, r.k)) {
            keys.push((r.n, r.k));
        }
    }
    keys.into_iter()
        .map(|(n, k)| {
            let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.n == n && r.k == k).collect();
            let mean = |f: &dyn Fn(&SweepRow) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / cell.len() as f64;
            CellMeans {
                n,
                k,
                replicas: cell.len(),
                disconnected_before: mean(&|r| r.disconnected_before as f64),
                disconnected_after: mean(&|r| r.disconnected_after as f64),
                extra_uploaders: mean(&|r| r.extra_uploaders as f64),
                max_delay: mean(&|r| r.max_delay as f64),
            }
        })
        .collect()
}

/// Disconnected peers and extra uploaders per `(N, K)`:
/// `N,K,mean_disconnected,mean_extra_uploaders`.
pub fn disconnected_csv(means: &[CellMeans]) -> Result<String> {
    let mut w = crate::output::csv_writer();
    w.write_record(["N", "K", "mean_disconnected", "mean_extra_uploaders"])?;
    for c in means {
        w.write_record([c.n.to_string(), c.k.to_string(), c.disconnected_after.to_string(), c.extra_uploaders.to_string()])?;
    }
    crate::output::finish(w)
}

/// Maximum delay per `(N, K)`: `N,K,mean_max_delay`.
pub fn max_delay_csv(means: &[CellMeans]) -> Result<String> {
    let mut w = crate::output::csv_writer();
    w.write_record(["N", "K", "mean_max_delay"])?;
    for c in means {
        w.write_record([c.n.to_string(), c.k.to_string(), c.max_delay.to_string()])?;
    }
    crate::output::finish(w)
}

/// Envelope checks on a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEnvelope {
    /// Largest mean residual at the largest `K`, over all `N`.
    pub worst_residual: f64,
    /// Largest mean extra-uploader count over all cells.
    pub worst_uploaders: f64,
    /// Fit of mean max delay against `ln N`, per `K`.
    pub delay_fits: Vec<(usize, LinearFit)>,
    /// Largest mean per-replica increase of max delay from `K = 0`.
    pub worst_delay_increase: f64,
}

pub fn sweep_envelope(rows: &[SweepRow]) -> Result<SweepEnvelope> {
    let means = cell_means(rows);
    let k_max = means.iter().map(|c| c.k).max().ok_or_else(|| Error::invalid("empty sweep"))?;
    let mut ks: Vec<usize> = means.iter().map(|c| c.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let worst_residual = means.iter().filter(|c| c.k == k_max).map(|c| c.disconnected_after).fold(0.0, f64::max);
    let worst_uploaders = means.iter().map(|c| c.extra_uploaders).fold(0.0, f64::max);
    let mut delay_fits = Vec::new();
    for &k in &ks {
        let cells: Vec<&CellMeans> = means.iter().filter(|c| c.k == k).collect();
        let xs: Vec<f64> = cells.iter().map(|c| (c.n as f64).ln()).collect();
        let ys: Vec<f64> = cells.iter().map(|c| c.max_delay).collect();
        if xs.len() >= 2 {
            delay_fits.push((k, linear_fit(&xs, &ys)?));
        }
    }
    let mut worst_delay_increase: f64 = 0.0;
    let mut ns: Vec<usize> = means.iter().map(|c| c.n).collect();
    ns.dedup();
    for &n in &ns {
        for &k in ks.iter().filter(|&&k| k > 0) {
            let inc: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.k == k)
                .filter_map(|r| {
                    rows.iter()
                        .find(|b| b.n == n && b.k == 0 && b.replica == r.replica)
                        .map(|b| r.max_delay as f64 - b.max_delay as f64)
                })
                .collect();
            if !inc.is_empty() {
                worst_delay_increase = worst_delay_increase.max(mean_se(&inc).mean);
            }
        }
    }
    Ok(SweepEnvelope { worst_residual, worst_uploaders, delay_fits, worst_delay_increase })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SweepConfig {
        SweepConfig { ns: vec![10, 31, 100], replicas: 4, ..SweepConfig::new(seed) }
    }

    #[test]
    fn grid_shape_and_order() {
        let rows = run_sweep(&small(1)).unwrap();
        assert_eq!(rows.len(), 3 * 3 * 4);
        assert_eq!((rows[0].n, rows[0].k, rows[0].replica), (10, 0, 0));
        assert_eq!((rows[4].n, rows[4].k, rows[4].replica), (10, 1, 0));
        for r in &rows {
            if r.k == 0 {
                assert_eq!(r.disconnected_after, r.disconnected_before);
                assert_eq!(r.extra_uploaders, 0);
            }
            let base = rows.iter().find(|b| b.n == r.n && b.k == 0 && b.replica == r.replica).unwrap();
            assert_eq!(r.disconnected_before, base.disconnected_before);
            assert!(r.disconnected_after <= base.disconnected_after);
        }
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let a = sweep_csv(&run_sweep(&small(7)).unwrap()).unwrap();
        let b = sweep_csv(&run_sweep(&SweepConfig { exec: Execution::Sequential, ..small(7) }).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("N,M,K,replica,disconnected_before,disconnected_after,extra_uploaders,max_delay\n"));
    }

    #[test]
    fn means_and_envelope() {
        let rows = run_sweep(&small(3)).unwrap();
        let means = cell_means(&rows);
        assert_eq!(means.len(), 9);
        assert_eq!(disconnected_csv(&means).unwrap().lines().count(), 10);
        assert_eq!(max_delay_csv(&means).unwrap().lines().count(), 10);
        let env = sweep_envelope(&rows).unwrap();
        assert_eq!(env.delay_fits.len(), 3);
        assert!(env.worst_delay_increase >= 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(run_sweep(&SweepConfig { ks: vec![], ..small(0) }).is_err());
        assert!(run_sweep(&SweepConfig { c: 1.5, ..small(0) }).is_err());
    }
}
