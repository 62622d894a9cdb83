//! Slotted chunk dissemination over the flow-labelled overlay.
//!
//! In slot `t` the source emits chunk `(f, t)` for every flow and queues it
//! on each outgoing edge whose child labelled that edge `f`. Every edge then
//! sends the head of its FIFO queue; the chunk arrives at slot `t + 1` and
//! the receiver queues it on its own flow-`f` outgoing edges, to be sent
//! from the next slot on.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::flowgraph::DelayTable;
use crate::rfa::RfaState;
use crate::topology::{Network, PeerId, SOURCE};

/// A unit chunk: flow id and generation slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chunk {
    pub flow: u16,
    pub seq: u32,
}

const NOT_RECEIVED: u32 = u32::MAX;

/// First-delivery slot of every chunk at every peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryLog {
    pub flows: usize,
    pub slots: usize,
    pub peers: Vec<PeerId>,
    /// `rx[(i * flows + f - 1) * slots + seq]`, `u32::MAX` when not received.
    rx: Vec<u32>,
    /// Largest queue length seen right before a transmission phase.
    pub max_queue_depth: usize,
    /// Largest number of chunks a single peer sent in one slot.
    pub max_uploads_per_slot: usize,
    /// Total chunk receptions, counting each incoming edge separately.
    pub receptions: u64,
    /// Receptions of a chunk the peer already had.
    pub duplicate_receptions: u64,
}

impl DeliveryLog {
    fn idx(&self, i: usize, f: usize, seq: usize) -> usize {
        (i * self.flows + f - 1) * self.slots + seq
    }

    /// Slot at which peer index `i` first received chunk `(f, seq)`.
    pub fn received_at(&self, i: usize, f: usize, seq: usize) -> Option<u32> {
        match self.rx[self.idx(i, f, seq)] {
            NOT_RECEIVED => None,
            t => Some(t),
        }
    }

    /// Worst `rx - seq` over everything peer index `i` received.
    pub fn worst_delay(&self, i: usize) -> Option<u32> {
        let mut worst = None;
        for f in 1..=self.flows {
            for seq in 0..self.slots {
                if let Some(t) = self.received_at(i, f, seq) {
                    let d = t - seq as u32;
                    worst = Some(worst.map_or(d, |w: u32| w.max(d)));
                }
            }
        }
        worst
    }

    /// Delivery CSV: `peer,flow,seq,rx_slot`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = crate::output::csv_writer();
        w.write_record(["peer", "flow", "seq", "rx_slot"])?;
        for (i, v) in self.peers.iter().enumerate() {
            for f in 1..=self.flows {
                for seq in 0..self.slots {
                    if let Some(t) = self.received_at(i, f, seq) {
                        w.write_record([v.to_string(), f.to_string(), seq.to_string(), t.to_string()])?;
                    }
                }
            }
        }
        crate::output::finish(w)
    }
}

/// Run `slots` slots of dissemination on a frozen snapshot.
pub fn simulate(net: &Network, state: &RfaState, slots: usize) -> Result<DeliveryLog> {
    if slots == 0 {
        return Err(Error::invalid("slots must be at least 1"));
    }
    if net.m() != state.m() || net.len() != state.n() {
        return Err(Error::invalid("flow assignment was computed on a different network"));
    }
    let m = net.m();
    let peers = state.peers().to_vec();
    let mut index = vec![usize::MAX; net.id_bound()];
    for (i, v) in peers.iter().enumerate() {
        index[v.index()] = i;
    }
    // Outgoing edges grouped by the flow their child assigned.
    let mut out_edges: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); m + 1]; peers.len()];
    let mut edge_child = Vec::new();
    for (i, &v) in peers.iter().enumerate() {
        for l in 0..m {
            let c = net.child(v, l);
            if v == SOURCE && c == SOURCE {
                continue;
            }
            let f = state.flow(c, l);
            out_edges[i][f].push(edge_child.len());
            edge_child.push((i, index[c.index()]));
        }
    }
    let mut queues: Vec<VecDeque<Chunk>> = vec![VecDeque::new(); edge_child.len()];

    let mut log = DeliveryLog {
        flows: m,
        slots,
        peers,
        rx: vec![NOT_RECEIVED; 0],
        max_queue_depth: 0,
        max_uploads_per_slot: 0,
        receptions: 0,
        duplicate_receptions: 0,
    };
    log.rx = vec![NOT_RECEIVED; log.peers.len() * m * slots];
    let src = index[SOURCE.index()];
    for f in 1..=m {
        for seq in 0..slots {
            let k = log.idx(src, f, seq);
            log.rx[k] = seq as u32;
        }
    }

    let mut in_flight: Vec<(usize, Chunk)> = Vec::new();
    let mut uploads = vec![0usize; log.peers.len()];
    for t in 0..slots {
        for (f, edges) in out_edges[src].iter().enumerate().skip(1) {
            let chunk = Chunk { flow: f as u16, seq: t as u32 };
            for &e in edges {
                queues[e].push_back(chunk);
            }
        }
        // Transmission phase: every edge sends its oldest chunk.
        in_flight.clear();
        uploads.iter_mut().for_each(|u| *u = 0);
        for (e, q) in queues.iter_mut().enumerate() {
            log.max_queue_depth = log.max_queue_depth.max(q.len());
            if let Some(chunk) = q.pop_front() {
                let (from, to) = edge_child[e];
                uploads[from] += 1;
                in_flight.push((to, chunk));
            }
        }
        log.max_uploads_per_slot = log.max_uploads_per_slot.max(uploads.iter().copied().max().unwrap_or(0));
        // Delivery phase: arrivals at slot t + 1, queued for forwarding.
        for &(to, chunk) in &in_flight {
            log.receptions += 1;
            let k = log.idx(to, chunk.flow as usize, chunk.seq as usize);
            if log.rx[k] != NOT_RECEIVED {
                log.duplicate_receptions += 1;
                continue;
            }
            log.rx[k] = t as u32 + 1;
            for &e in &out_edges[to][chunk.flow as usize] {
                queues[e].push_back(chunk);
            }
        }
    }
    Ok(log)
}

/// A connected `(peer, flow)` whose measured delay disagrees with its
/// flow-graph distance, or a disconnected one that received chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayMismatch {
    pub peer: PeerId,
    pub flow: usize,
    pub distance: Option<u32>,
    pub measured: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayReport {
    pub checked: usize,
    pub mismatches: Vec<DelayMismatch>,
    /// Connected `(peer, flow)` pairs that did not receive exactly one chunk
    /// per slot over the last quarter of the horizon.
    pub rate_violations: usize,
    /// Per `(peer, flow)`: steady-state delay (last chunk received).
    pub steady_delay: Vec<Option<u32>>,
}

impl DelayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty() && self.rate_violations == 0
    }
}

/// Compare measured delays with flow-graph distances chunk by chunk.
pub fn verify_delay_equals_distance(log: &DeliveryLog, table: &DelayTable) -> Result<DelayReport> {
    let max_distance = table.max_delay() as usize;
    if log.slots < max_distance + 1 {
        return Err(Error::InsufficientSlots { slots: log.slots, max_distance });
    }
    if table.peers != log.peers || table.flows != log.flows {
        return Err(Error::invalid("delay table and delivery log cover different peers"));
    }
    let mut report = DelayReport { checked: 0, mismatches: Vec::new(), rate_violations: 0, steady_delay: Vec::new() };
    let tail_start = log.slots - log.slots / 4;
    for (i, &v) in log.peers.iter().enumerate() {
        for f in 1..=log.flows {
            report.checked += 1;
            let dist = table.row(i)[f - 1];
            let mut measured = None;
            let mut ok = true;
            for seq in 0..log.slots {
                let rx = log.received_at(i, f, seq);
                match (dist, rx) {
                    (Some(h), Some(t)) => {
                        let d = t - seq as u32;
                        measured = Some(d);
                        ok &= d == h;
                    }
                    (Some(h), None) => ok &= seq + h as usize >= log.slots,
                    (None, Some(t)) => {
                        measured = Some(t - seq as u32);
                        ok = false;
                    }
                    (None, None) => {}
                }
            }
            if let Some(h) = dist {
                // Exactly one new chunk per slot over the tail of the horizon.
                let mut per_slot = vec![0u32; log.slots + 1];
                for seq in 0..log.slots {
                    if let Some(t) = log.received_at(i, f, seq) {
                        per_slot[t as usize] += 1;
                    }
                }
                let from = tail_start.max(h as usize);
                if (from..log.slots).any(|t| per_slot[t] != 1) {
                    report.rate_violations += 1;
                }
            }
            report.steady_delay.push(if dist.is_some() { measured } else { None });
            if !ok {
                report.mismatches.push(DelayMismatch { peer: v, flow: f, distance: dist, measured });
            }
        }
    }
    Ok(report)
}

/// Summary CSV: `peer,flow,distance,steady_delay,connected`.
pub fn summary_csv(table: &DelayTable, report: &DelayReport) -> Result<String> {
    let mut w = crate::output::csv_writer();
    w.write_record(["peer", "flow", "distance", "steady_delay", "connected"])?;
    for (i, v) in table.peers.iter().enumerate() {
        for f in 1..=table.flows {
            let d = table.row(i)[f - 1];
            let s = report.steady_delay[i * table.flows + f - 1];
            w.write_record([
                v.to_string(),
                f.to_string(),
                d.map_or(String::new(), |d| d.to_string()),
                s.map_or(String::new(), |d| d.to_string()),
                d.is_some().to_string(),
            ])?;
        }
    }
    crate::output::finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgraph::{decompose_all, distance_delay_table};
    use crate::rfa::compute_rfa;
    use crate::rng::RandomSource;
    use crate::topology::grow;

    /// Layer 1 is the chain 1→2→…→6→1. Layer 2 is all loops except a 2-cycle
    /// 1↔6, so peers 2..5 must take flow 1 from layer 1.
    fn chain() -> Network {
        let mut net = Network::new(2).unwrap();
        net.join_with_peers(PeerId(2), &[SOURCE, PeerId(2)]).unwrap();
        for v in 3..=5 {
            net.join_with_peers(PeerId(v), &[PeerId(v - 1), PeerId(v)]).unwrap();
        }
        net.join_with_peers(PeerId(6), &[PeerId(5), SOURCE]).unwrap();
        net
    }

    #[test]
    fn chain_delay_equals_hops() {
        let net = chain();
        let st = compute_rfa(&net, 0.5, &RandomSource::new(3)).unwrap();
        let (_, decomps) = decompose_all(&net, &st).unwrap();
        let log = simulate(&net, &st, 20).unwrap();
        for (i, v) in log.peers.clone().iter().enumerate() {
            if let Some(h) = decomps[0].distance(*v) {
                for seq in 0..20 - h as usize {
                    assert_eq!(log.received_at(i, 1, seq), Some(seq as u32 + h));
                }
            }
        }
        // Peers 2..=5 sit on the layer-1 chain at distance v - 1 in flow 1.
        for v in 2..=5u32 {
            if st.flow(PeerId(v), 0) == 1 {
                assert_eq!(decomps[0].distance(PeerId(v)), Some(v - 1));
            }
        }
        let table = distance_delay_table(&decomps);
        let report = verify_delay_equals_distance(&log, &table).unwrap();
        assert!(report.is_exact(), "{:?}", report.mismatches);
        assert_eq!(log.worst_delay(0), Some(0));
    }

    #[test]
    fn cycle_peer_never_receives() {
        // Peer 2 loops in both layers: it labels its own loops and is cut off.
        let mut net = Network::new(2).unwrap();
        net.join_with_peers(PeerId(2), &[PeerId(2), PeerId(2)]).unwrap();
        let st = compute_rfa(&net, 0.5, &RandomSource::new(0)).unwrap();
        let log = simulate(&net, &st, 10).unwrap();
        for f in 1..=2 {
            for seq in 0..10 {
                assert_eq!(log.received_at(1, f, seq), None);
            }
        }
        let (_, decomps) = decompose_all(&net, &st).unwrap();
        let table = distance_delay_table(&decomps);
        let report = verify_delay_equals_distance(&log, &table).unwrap();
        assert!(report.is_exact());
        assert_eq!(report.steady_delay[2], None);
    }

    #[test]
    fn random_network_zero_mismatches() {
        let rng = RandomSource::new(100);
        let net = grow(100, 2, &rng).unwrap();
        let st = compute_rfa(&net, 0.5, &rng).unwrap();
        let (_, decomps) = decompose_all(&net, &st).unwrap();
        let table = distance_delay_table(&decomps);
        let slots = table.max_delay() as usize * 4 + 4;
        let log = simulate(&net, &st, slots).unwrap();
        let report = verify_delay_equals_distance(&log, &table).unwrap();
        assert!(report.is_exact(), "{:?}", report.mismatches);
        assert_eq!(report.checked, 200);
        assert!(log.max_queue_depth <= 1);
        assert!(log.max_uploads_per_slot <= 2);
        assert_eq!(log.duplicate_receptions, 0);
        let short = simulate(&net, &st, table.max_delay() as usize).unwrap();
        assert!(matches!(verify_delay_equals_distance(&short, &table), Err(Error::InsufficientSlots { .. })));
    }

    #[test]
    fn receptions_follow_labelled_edges() {
        // Every chunk crosses each flow-f edge into a connected peer exactly once.
        let rng = RandomSource::new(4);
        let net = grow(400, 4, &rng).unwrap();
        let st = compute_rfa(&net, 0.5, &rng).unwrap();
        let (_, decomps) = decompose_all(&net, &st).unwrap();
        let table = distance_delay_table(&decomps);
        let slots = table.max_delay() as usize + 8;
        let log = simulate(&net, &st, slots).unwrap();
        let mut expected = 0u64;
        for (i, _) in table.peers.iter().enumerate().skip(1) {
            for f in 1..=4 {
                if let Some(h) = table.row(i)[f - 1] {
                    expected += (slots - h as usize + 1) as u64;
                }
            }
        }
        assert_eq!(log.receptions, expected);
        assert_eq!(log.duplicate_receptions, 0);
    }

    #[test]
    fn csv_outputs() {
        let net = chain();
        let st = compute_rfa(&net, 0.5, &RandomSource::new(3)).unwrap();
        let (_, decomps) = decompose_all(&net, &st).unwrap();
        let table = distance_delay_table(&decomps);
        let log = simulate(&net, &st, 8).unwrap();
        let csv = log.to_csv().unwrap();
        assert!(csv.starts_with("peer,flow,seq,rx_slot\n1,1,0,0\n"));
        let report = verify_delay_equals_distance(&log, &table).unwrap();
        let summary = summary_csv(&table, &report).unwrap();
        assert!(summary.starts_with("peer,flow,distance,steady_delay,connected\n1,1,0,0,true\n"));
        assert!(simulate(&net, &st, 0).is_err());
    }
}
