//! Repair of disconnected peers through extra layers.
//!
//! A peer still missing flow `f` asks its extra-layer parents, lowest layer
//! first, for the flow. A request succeeds when the parent receives `f` and
//! the extra edge into the requesting peer is still free; each extra edge
//! carries at most one unit of upload. Once a peer receives `f`, every peer
//! downstream of it in flow graph `f` (the rest of its cycle and any
//! attached peers) receives it too, and keeps its earliest arrival.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::error::{Error, Result};
use crate::flowgraph::{Decomposition, DelayTable, FlowGraph};
use crate::rfa::RfaState;
use crate::topology::{Network, PeerId};

/// One `(peer, flow)` pair that was disconnected and is now served.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairedFlow {
    pub peer: PeerId,
    pub flow: usize,
    /// Extra-layer parent whose upload feeds this peer, directly or upstream.
    pub helper: PeerId,
    /// Served by its own flow-`f` incoming edge rather than by a request.
    pub via_cycle: bool,
    pub delay: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairPlan {
    pub k: usize,
    /// `(peer, flow) → helper` for every granted request.
    pub requests: BTreeMap<(PeerId, usize), PeerId>,
    /// Peers uploading on at least one extra edge.
    pub extra_uploaders: BTreeSet<PeerId>,
    /// Ordered by `(peer, flow)`.
    pub repaired: Vec<RepairedFlow>,
    pub disconnected_before: usize,
    pub disconnected_after: usize,
    /// Per-flow delays after repair; `None` for pairs still disconnected.
    pub delays: DelayTable,
}

impl RepairPlan {
    /// Repair CSV: `peer,flow,helper,served_via_cycle`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = crate::output::csv_writer();
        w.write_record(["peer", "flow", "helper", "served_via_cycle"])?;
        for r in &self.repaired {
            w.write_record([r.peer.to_string(), r.flow.to_string(), r.helper.to_string(), r.via_cycle.to_string()])?;
        }
        crate::output::finish(w)
    }
}

/// Resolve repair requests on the first `k` extra layers of `net`.
pub fn resolve_repairs(
    net: &Network,
    state: &RfaState,
    graphs: &[FlowGraph],
    decomps: &[Decomposition],
    k: usize,
) -> Result<RepairPlan> {
    let m = state.m();
    if graphs.len() != m || decomps.len() != m {
        return Err(Error::invalid("need one flow graph and decomposition per flow"));
    }
    if k > net.extra() {
        return Err(Error::invalid(format!("repair uses {k} extra layers but the network has {}", net.extra())));
    }
    let before = crate::flowgraph::distance_delay_table(decomps);
    let peers = before.peers.clone();
    let mut index = vec![usize::MAX; net.id_bound()];
    for (i, v) in peers.iter().enumerate() {
        index[v.index()] = i;
    }
    let children: Vec<Vec<Vec<PeerId>>> = graphs.iter().map(FlowGraph::children).collect();

    let mut delay = before.distance.clone();
    let mut origin: Vec<Option<(PeerId, bool)>> = vec![None; delay.len()];
    let mut edge_used = vec![false; peers.len() * k];
    let mut requests = BTreeMap::new();
    let mut extra_uploaders = BTreeSet::new();

    let mut pending: Vec<(usize, usize)> = Vec::new();
    for (i, _) in peers.iter().enumerate() {
        for f in 0..m {
            if delay[i * m + f].is_none() {
                pending.push((i, f));
            }
        }
    }

    // Requests are handled one at a time in `(peer, flow)` order; a grant
    // is visible to every later request. Passes repeat until none succeeds,
    // since a helper may only become served after an earlier pass.
    let repairable: Vec<bool> = delay.iter().map(Option::is_none).collect();
    loop {
        let mut granted = false;
        for &(i, f) in &pending {
            if delay[i * m + f].is_some() {
                continue;
            }
            let v = peers[i];
            let Some((extra, helper, hd)) = (0..k).find_map(|extra| {
                let helper = net.parent(v, m + extra);
                let hd = delay[index[helper.index()] * m + f]?;
                (!edge_used[i * k + extra]).then_some((extra, helper, hd))
            }) else {
                continue;
            };
            edge_used[i * k + extra] = true;
            requests.insert((v, f + 1), helper);
            extra_uploaders.insert(helper);
            origin[i * m + f] = Some((helper, false));
            delay[i * m + f] = Some(hd + 1);
            granted = true;

            // Earliest arrival downstream of the new grant along flow edges.
            let mut heap = BinaryHeap::from([Reverse((hd + 1, i))]);
            while let Some(Reverse((d, i))) = heap.pop() {
                if delay[i * m + f] != Some(d) {
                    continue;
                }
                for &w in &children[f][peers[i].index()] {
                    let wi = index[w.index()];
                    let j = wi * m + f;
                    let improves = match delay[j] {
                        None => true,
                        Some(old) => repairable[j] && d + 1 < old,
                    };
                    if improves {
                        delay[j] = Some(d + 1);
                        if origin[j].is_none_or(|(_, via_cycle)| via_cycle) {
                            origin[j] = Some((helper, true));
                        }
                        heap.push(Reverse((d + 1, wi)));
                    }
                }
            }
        }
        if !granted {
            break;
        }
    }

    let mut repaired = Vec::new();
    for &(i, f) in &pending {
        if let (Some(d), Some((helper, via_cycle))) = (delay[i * m + f], origin[i * m + f]) {
            repaired.push(RepairedFlow { peer: peers[i], flow: f + 1, helper, via_cycle, delay: d });
        }
    }
    let delays = DelayTable { flows: m, peers, distance: delay };
    Ok(RepairPlan {
        k,
        requests,
        extra_uploaders,
        repaired,
        disconnected_before: before.disconnected_peers(),
        disconnected_after: delays.disconnected_peers(),
        delays,
    })
}
