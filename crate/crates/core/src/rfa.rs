//! Random flow assignment.
//!
//! Every non-source peer labels its `M` incoming edges with the `M` flows,
//! one-to-one. Children of the source take the flow of the layer that links
//! them to the source; peers with a parent shallower than the threshold
//! depth `d*` inherit the main flow of their shallowest parent (random
//! tie-break) on that edge; all other labels are a uniformly random
//! completion.
//!
//! The fixpoint is computed on a snapshot as a breadth-first sweep from the
//! source. Each peer draws its tie-break and its label completion from its
//! own stream (`Domain::Rfa`, peer id), so peers elsewhere in the network do
//! not perturb its choices.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::{uniform_index, Domain, RandomSource};
use crate::topology::{Network, PeerId, SOURCE};

/// Depth of peers not reached through parents shallower than `d*`.
pub const UNREACHED: u32 = u32::MAX;

/// Threshold depth `⌈log₂(N / (ln N)^c)⌉`, at least 1.
pub fn dstar(n: usize, c: f64) -> Result<u32> {
    if n < 2 {
        return Err(Error::invalid(format!("d* needs N >= 2, got {n}")));
    }
    check_c(c)?;
    let nf = n as f64;
    let d = (nf / nf.ln().powf(c)).log2().ceil();
    Ok(d.max(1.0) as u32)
}

pub(crate) fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("c must lie in (0, 1), got {c}")))
    }
}

/// Converged flow assignment on one network snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RfaState {
    m: usize,
    c: f64,
    dstar: u32,
    peers: Vec<PeerId>,
    depth: Vec<u32>,
    main_flow: Vec<u16>,
    /// `inflow[v * m + layer]` is the flow on `v`'s incoming edge in that
    /// layer; zero for the source and for ids not in the snapshot.
    inflow: Vec<u16>,
}

impl RfaState {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dstar(&self) -> u32 {
        self.dstar
    }

    pub fn n(&self) -> usize {
        self.peers.len()
    }

    /// Peers of the snapshot in ascending id order.
    pub fn peers(&self) -> &[PeerId] {
        &self.peers
    }

    /// `d(v)`, or `None` for ∞.
    pub fn depth(&self, v: PeerId) -> Option<u32> {
        match self.depth[v.index()] {
            UNREACHED => None,
            d => Some(d),
        }
    }

    pub(crate) fn raw_depth(&self, v: PeerId) -> u32 {
        self.depth[v.index()]
    }

    /// `χ(v)`, zero when unset.
    pub fn main_flow(&self, v: PeerId) -> usize {
        self.main_flow[v.index()] as usize
    }

    /// `f_m(v)` for zero-based layer `layer`.
    pub fn flow(&self, v: PeerId, layer: usize) -> usize {
        self.inflow[v.index() * self.m + layer] as usize
    }

    /// Zero-based layer on which `v` receives flow `f`.
    pub fn layer_of_flow(&self, v: PeerId, f: usize) -> Option<usize> {
        let row = &self.inflow[v.index() * self.m..(v.index() + 1) * self.m];
        row.iter().position(|&x| x as usize == f)
    }

    /// One line per peer: `v d(v) chi(v) f_1(v) .. f_M(v)`, `-1` for ∞.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for &v in &self.peers {
            let d = self.depth(v).map_or(-1, |d| d as i64);
            out.push_str(&format!("{} {} {}", v, d, self.main_flow(v)));
            for layer in 0..self.m {
                out.push_str(&format!(" {}", self.flow(v, layer)));
            }
            out.push('\n');
        }
        out
    }

    /// Check the labelling invariants against the network it was built on.
    pub fn check_invariants(&self, net: &Network) -> Result<()> {
        let m = self.m;
        for &v in &self.peers {
            if v == SOURCE {
                continue;
            }
            let mut labels: Vec<usize> = (0..m).map(|l| self.flow(v, l)).collect();
            labels.sort_unstable();
            if labels != (1..=m).collect::<Vec<_>>() {
                return Err(Error::Invariant(format!("peer {v} labels {labels:?} are not a permutation")));
            }
            let d = self.raw_depth(v);
            if d != UNREACHED {
                let chi = self.main_flow(v);
                if d > self.dstar || chi == 0 || chi > m {
                    return Err(Error::Invariant(format!("peer {v} at depth {d} has main flow {chi}")));
                }
                let min_parent = (0..m).map(|l| self.raw_depth(net.parent(v, l))).min().unwrap();
                if min_parent == UNREACHED || min_parent + 1 != d {
                    return Err(Error::Invariant(format!("peer {v} depth {d} vs min parent depth {min_parent}")));
                }
                let inherited = (0..m).any(|l| {
                    let p = net.parent(v, l);
                    self.raw_depth(p) == d - 1
                        && self.flow(v, l) == chi
                        && (p == SOURCE && chi == l + 1 || p != SOURCE && self.main_flow(p) == chi)
                });
                if !inherited {
                    return Err(Error::Invariant(format!("peer {v} main flow {chi} not carried by a shallowest parent")));
                }
            } else if (0..m).any(|l| self.raw_depth(net.parent(v, l)) < self.dstar) {
                return Err(Error::Invariant(format!("peer {v} unreached despite a shallow parent")));
            }
        }
        Ok(())
    }
}

/// Run the flow assignment to its fixpoint on the `M` streaming layers.
pub fn compute_rfa(net: &Network, c: f64, rng: &RandomSource) -> Result<RfaState> {
    check_c(c)?;
    let m = net.m();
    if m > u16::MAX as usize {
        return Err(Error::invalid("too many flows"));
    }
    let n = net.len();
    let dstar = if n >= 2 { dstar(n, c)? } else { 1 };
    let bound = net.id_bound();
    let mut depth = vec![UNREACHED; bound];
    let mut main_flow = vec![0u16; bound];
    let mut inflow = vec![0u16; bound * m];
    // Layer chosen for the inherited label, per peer.
    let mut anchor: Vec<Option<usize>> = vec![None; bound];
    let mut tie_draw = vec![0u64; bound];
    let mut streams: Vec<Option<_>> = (0..bound).map(|_| None).collect();

    let stream_for = |v: PeerId, streams: &mut Vec<Option<crate::rng::Stream>>, tie_draw: &mut Vec<u64>| {
        if streams[v.index()].is_none() {
            let mut s = rng.stream(Domain::Rfa, v.0 as u64, 0);
            tie_draw[v.index()] = s.next_u64();
            streams[v.index()] = Some(s);
        }
    };

    depth[SOURCE.index()] = 0;
    let mut frontier = vec![SOURCE];
    let mut level = 0u32;
    let mut ties = Vec::with_capacity(m);
    while !frontier.is_empty() && level < dstar {
        let mut next = Vec::new();
        for &u in &frontier {
            for l in 0..m {
                let v = net.child(u, l);
                if depth[v.index()] == UNREACHED && anchor[v.index()].is_none() {
                    // Reserve; settled below once all candidates are known.
                    anchor[v.index()] = Some(usize::MAX);
                    next.push(v);
                }
            }
        }
        next.sort_unstable();
        for &v in &next {
            ties.clear();
            ties.extend((0..m).filter(|&l| depth[net.parent(v, l).index()] == level));
            stream_for(v, &mut streams, &mut tie_draw);
            let pick = ties[(tie_draw[v.index()] % ties.len() as u64) as usize];
            let p = net.parent(v, pick);
            let chi = if p == SOURCE { pick as u16 + 1 } else { main_flow[p.index()] };
            depth[v.index()] = level + 1;
            main_flow[v.index()] = chi;
            inflow[v.index() * m + pick] = chi;
            anchor[v.index()] = Some(pick);
        }
        frontier = next;
        level += 1;
    }

    let mut peers = net.peers();
    peers.sort_unstable();
    let mut free = Vec::with_capacity(m);
    for &v in &peers {
        if v == SOURCE {
            continue;
        }
        stream_for(v, &mut streams, &mut tie_draw);
        let s = streams[v.index()].as_mut().unwrap();
        free.clear();
        free.extend(1..=m as u16);
        if let Some(pick) = anchor[v.index()] {
            let chi = inflow[v.index() * m + pick];
            free.retain(|&f| f != chi);
        }
        for l in 0..m {
            if anchor[v.index()] == Some(l) {
                continue;
            }
            let f = free.remove(uniform_index(s, free.len()));
            inflow[v.index() * m + l] = f;
        }
    }

    Ok(RfaState {
        m,
        c,
        dstar,
        peers,
        depth,
        main_flow,
        inflow,
    })
}

/// Peer counts per depth `N_0 ..= N_{d*}` plus the unreached remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthHistogram {
    pub counts: Vec<usize>,
    pub unreached: usize,
    pub total: usize,
}

impl DepthHistogram {
    /// `N_d`, zero beyond `d*`.
    pub fn at(&self, d: usize) -> usize {
        self.counts.get(d).copied().unwrap_or(0)
    }

    /// `N_{≤d}`.
    pub fn at_most(&self, d: usize) -> usize {
        self.counts.iter().take(d + 1).sum()
    }

    /// `N_{>d}`; `d = -1` gives `N`.
    pub fn beyond(&self, d: i64) -> usize {
        if d < 0 {
            self.total
        } else {
            self.total - self.at_most(d as usize)
        }
    }
}

pub fn depth_histogram(state: &RfaState) -> DepthHistogram {
    let mut counts = vec![0usize; state.dstar as usize + 1];
    let mut unreached = 0;
    for &v in &state.peers {
        match state.depth(v) {
            Some(d) => counts[d as usize] += 1,
            None => unreached += 1,
        }
    }
    DepthHistogram { counts, unreached, total: state.peers.len() }
}

/// Flow-1 peers per depth, `X_0 ..= X_{d*}` (with `X_0 = 0`).
pub fn main_flow_counts(state: &RfaState) -> Result<Vec<usize>> {
    if state.m != 2 {
        return Err(Error::AnalysisLimitedToTwoFlows(state.m));
    }
    let mut x = vec![0usize; state.dstar as usize + 1];
    for &v in &state.peers {
        if let Some(d) = state.depth(v) {
            if v != SOURCE && state.main_flow(v) == 1 {
                x[d as usize] += 1;
            }
        }
    }
    Ok(x)
}
