//! Flow graphs and their tree-plus-cycles structure.
//!
//! Flow graph `f` keeps, for every non-source peer, the single incoming edge
//! labelled `f`. Tracing those edges backwards from any peer either reaches
//! the source (the peer hangs in the source-rooted tree, at a unique
//! distance) or revisits a peer (the peer sits on, or downstream of, a
//! cycle and never receives flow `f`).

use crate::error::{Error, Result};
use crate::rfa::{RfaState, UNREACHED};
use crate::topology::{Network, PeerId, SOURCE};

/// Incoming flow-`f` edge of each peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowGraph {
    flow: usize,
    peers: Vec<PeerId>,
    /// `(parent, zero-based layer)`, indexed by peer id.
    in_edge: Vec<Option<(PeerId, u16)>>,
}

impl FlowGraph {
    pub fn flow(&self) -> usize {
        self.flow
    }

    pub fn peers(&self) -> &[PeerId] {
        &self.peers
    }

    pub fn in_edge(&self, v: PeerId) -> Option<(PeerId, usize)> {
        self.in_edge[v.index()].map(|(p, l)| (p, l as usize))
    }

    pub fn parent(&self, v: PeerId) -> Option<PeerId> {
        self.in_edge[v.index()].map(|(p, _)| p)
    }

    /// Children lists in flow graph order, indexed by peer id.
    pub fn children(&self) -> Vec<Vec<PeerId>> {
        let mut out = vec![Vec::new(); self.in_edge.len()];
        for &v in &self.peers {
            if let Some((p, _)) = self.in_edge[v.index()] {
                out[p.index()].push(v);
            }
        }
        out
    }
}

pub fn build_flow_graph(net: &Network, state: &RfaState, f: usize) -> Result<FlowGraph> {
    let m = state.m();
    if f == 0 || f > m {
        return Err(Error::InvalidFlow { flow: f, flows: m });
    }
    if net.m() != m || net.len() != state.n() {
        return Err(Error::invalid("flow assignment was computed on a different network"));
    }
    let mut in_edge = vec![None; net.id_bound()];
    for &v in state.peers() {
        if v == SOURCE {
            continue;
        }
        let layer = state
            .layer_of_flow(v, f)
            .ok_or_else(|| Error::Invariant(format!("peer {v} has no incoming flow-{f} edge")))?;
        in_edge[v.index()] = Some((net.parent(v, layer), layer as u16));
    }
    Ok(FlowGraph { flow: f, peers: state.peers().to_vec(), in_edge })
}

/// Disconnected part of a flow graph: a cycle and the peers hanging off it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleComponent {
    /// Cycle in flow direction, starting at its smallest id.
    pub cycle: Vec<PeerId>,
    /// Peers downstream of the cycle, ascending.
    pub attached: Vec<PeerId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    flow: usize,
    /// Hop distance from the source, `UNREACHED` for disconnected peers.
    dist: Vec<u32>,
    pub tree: Vec<PeerId>,
    pub components: Vec<CycleComponent>,
}

impl Decomposition {
    pub fn flow(&self) -> usize {
        self.flow
    }

    pub fn distance(&self, v: PeerId) -> Option<u32> {
        match self.dist[v.index()] {
            UNREACHED => None,
            d => Some(d),
        }
    }

    pub fn is_connected(&self, v: PeerId) -> bool {
        self.dist[v.index()] != UNREACHED
    }

    pub fn disconnected_count(&self) -> usize {
        self.components.iter().map(|c| c.cycle.len() + c.attached.len()).sum()
    }

    pub fn max_distance(&self) -> u32 {
        self.tree.iter().map(|&v| self.dist[v.index()]).max().unwrap_or(0)
    }

    /// `v dist(v)` lines for tree peers, then `cycle: ...` lines and, for
    /// cycles with downstream peers, `attached: <cycle head> ...` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for &v in &self.tree {
            out.push_str(&format!("{} {}\n", v, self.dist[v.index()]));
        }
        for c in &self.components {
            out.push_str("cycle:");
            for v in &c.cycle {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        for c in &self.components {
            if c.attached.is_empty() {
                continue;
            }
            out.push_str(&format!("attached: {}", c.cycle[0]));
            for v in &c.attached {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Classify every peer as tree (with distance) or disconnected.
pub fn decompose(fg: &FlowGraph) -> Decomposition {
    const NEW: u8 = 0;
    const ACTIVE: u8 = 1;
    const DONE: u8 = 2;
    const NO_COMPONENT: u32 = u32::MAX;

    let bound = fg.in_edge.len();
    let mut state = vec![NEW; bound];
    let mut dist = vec![UNREACHED; bound];
    let mut comp = vec![NO_COMPONENT; bound];
    let mut components: Vec<CycleComponent> = Vec::new();
    if bound > SOURCE.index() {
        state[SOURCE.index()] = DONE;
        dist[SOURCE.index()] = 0;
    }

    let mut path: Vec<PeerId> = Vec::new();
    for &start in &fg.peers {
        if state[start.index()] != NEW {
            continue;
        }
        path.clear();
        let mut v = start;
        while state[v.index()] == NEW {
            state[v.index()] = ACTIVE;
            path.push(v);
            v = fg.parent(v).expect("non-source peer without incoming edge");
        }
        if state[v.index()] == ACTIVE {
            // New cycle: path[pos..] traced backwards.
            let pos = path.iter().position(|&u| u == v).unwrap();
            let id = components.len() as u32;
            let mut cycle: Vec<PeerId> = path[pos..].iter().rev().copied().collect();
            let head = cycle.iter().enumerate().min_by_key(|(_, u)| **u).map(|(i, _)| i).unwrap();
            cycle.rotate_left(head);
            for &u in &cycle {
                comp[u.index()] = id;
                state[u.index()] = DONE;
            }
            components.push(CycleComponent { cycle, attached: Vec::new() });
            path.truncate(pos);
        }
        // The rest of the path hangs below `v`, nearest peer last.
        let (base_dist, base_comp) = (dist[v.index()], comp[v.index()]);
        for (k, &u) in path.iter().rev().enumerate() {
            state[u.index()] = DONE;
            if base_dist != UNREACHED {
                dist[u.index()] = base_dist + 1 + k as u32;
            } else {
                comp[u.index()] = base_comp;
                components[base_comp as usize].attached.push(u);
            }
        }
    }
    for c in &mut components {
        c.attached.sort_unstable();
    }
    let tree = fg.peers.iter().copied().filter(|v| dist[v.index()] != UNREACHED).collect();
    Decomposition { flow: fg.flow, dist, tree, components }
}

/// Contraction shells beyond `d*` in flow graph 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionStats {
    pub n: usize,
    /// `S_h` for `h = 0, 1, ...` until a shell is empty.
    pub shells: Vec<usize>,
    /// `S_{>h}` aligned with `shells`.
    pub remaining: Vec<usize>,
    /// `γ_h = S_{>h} / S_{>h-1}` for `h ≥ 1`; `gamma[0]` is unused (NaN).
    pub gamma: Vec<f64>,
    /// `S_{>h,m}`: remaining peers whose flow-1 edge is in layer `m`.
    pub remaining_by_layer: Vec<[usize; 2]>,
    pub threshold: f64,
    /// First `h` with `S_{>h}` below the threshold.
    pub h_star: Option<usize>,
}

impl ContractionStats {
    /// `h,S_h,S_gt_h,gamma_h` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = crate::output::csv_writer();
        w.write_record(["h", "S_h", "S_gt_h", "gamma_h"])?;
        for h in 0..self.shells.len() {
            let g = if h == 0 || self.gamma[h].is_nan() { String::new() } else { format!("{}", self.gamma[h]) };
            w.write_record([h.to_string(), self.shells[h].to_string(), self.remaining[h].to_string(), g])?;
        }
        crate::output::finish(w)
    }
}

/// `N / exp((ln N)^{1-c})`.
pub fn coverage_threshold(n: usize, c: f64) -> f64 {
    let nf = n as f64;
    nf / nf.ln().powf(1.0 - c).exp()
}

/// Shell index per peer id (`usize::MAX` when in no shell) and shell sizes.
pub(crate) fn shell_index(state: &RfaState, flow1: &FlowGraph) -> (Vec<usize>, Vec<usize>) {
    let dstar = state.dstar();
    let mut shell = vec![usize::MAX; flow1.in_edge.len()];
    let mut current = Vec::new();
    let mut s0 = 0;
    for &v in state.peers() {
        match state.depth(v) {
            Some(d) if d < dstar => {
                shell[v.index()] = 0;
                s0 += 1;
            }
            Some(d) if d == dstar && state.main_flow(v) == 1 => {
                shell[v.index()] = 1;
                current.push(v);
            }
            _ => {}
        }
    }
    let mut shells = vec![s0, current.len()];
    let children = flow1.children();
    while !current.is_empty() {
        let h = shells.len();
        let mut next = Vec::new();
        for &u in &current {
            for &w in &children[u.index()] {
                if shell[w.index()] == usize::MAX {
                    shell[w.index()] = h;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        shells.push(next.len());
        current = next;
    }
    (shell, shells)
}

/// Shells `S_0` (depth below `d*`), `S_1` (flow-1 peers at depth `d*`) and
/// `S_h` (peers whose flow-1 parent lies in `S_{h-1}`).
pub fn contraction_stats(state: &RfaState, flow1: &FlowGraph) -> Result<ContractionStats> {
    if state.m() != 2 {
        return Err(Error::AnalysisLimitedToTwoFlows(state.m()));
    }
    if flow1.flow() != 1 {
        return Err(Error::InvalidFlow { flow: flow1.flow(), flows: 2 });
    }
    let n = state.n();
    let (shell, shells) = shell_index(state, flow1);

    let mut remaining = Vec::with_capacity(shells.len());
    let mut covered = 0;
    for &s in &shells {
        covered += s;
        remaining.push(n - covered);
    }
    let mut gamma = vec![f64::NAN; shells.len()];
    for h in 1..shells.len() {
        if remaining[h - 1] > 0 {
            gamma[h] = remaining[h] as f64 / remaining[h - 1] as f64;
        }
    }

    // Count by shell index and flow-1 layer, then take suffix sums.
    let mut by_shell = vec![[0usize; 2]; shells.len() + 1];
    for &v in state.peers() {
        if v == SOURCE {
            continue;
        }
        let layer = state.layer_of_flow(v, 1).expect("permutation labels");
        let s = shell[v.index()].min(shells.len());
        by_shell[s][layer] += 1;
    }
    let mut remaining_by_layer = vec![[0usize; 2]; shells.len()];
    let mut acc = by_shell[shells.len()];
    for h in (0..shells.len()).rev() {
        remaining_by_layer[h] = acc;
        acc[0] += by_shell[h][0];
        acc[1] += by_shell[h][1];
    }

    let threshold = coverage_threshold(n.max(2), state.c());
    let h_star = remaining.iter().position(|&r| (r as f64) < threshold);
    Ok(ContractionStats { n, shells, remaining, gamma, remaining_by_layer, threshold, h_star })
}

/// Per-peer distance in every flow graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayTable {
    pub flows: usize,
    pub peers: Vec<PeerId>,
    /// Row-major `peers × flows`; `None` for ∞.
    pub distance: Vec<Option<u32>>,
}

impl DelayTable {
    pub fn row(&self, i: usize) -> &[Option<u32>] {
        &self.distance[i * self.flows..(i + 1) * self.flows]
    }

    /// `max_f dist_f(v)`, `None` when some flow is unreachable.
    pub fn peer_max(&self, i: usize) -> Option<u32> {
        self.row(i).iter().try_fold(0, |acc, d| d.map(|d| acc.max(d)))
    }

    pub fn is_connected(&self, i: usize) -> bool {
        self.row(i).iter().all(Option::is_some)
    }

    /// Peers missing at least one flow.
    pub fn disconnected_peers(&self) -> usize {
        (0..self.peers.len()).filter(|&i| !self.is_connected(i)).count()
    }

    /// Largest finite `(peer, flow)` distance.
    pub fn max_delay(&self) -> u32 {
        self.distance.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Largest `max_f dist_f(v)` over peers that receive every flow.
    pub fn connected_max_delay(&self) -> u32 {
        (0..self.peers.len()).filter_map(|i| self.peer_max(i)).max().unwrap_or(0)
    }
}

pub fn distance_delay_table(decomps: &[Decomposition]) -> DelayTable {
    let flows = decomps.len();
    let peers: Vec<PeerId> = match decomps.first() {
        Some(d) => {
            let mut all: Vec<PeerId> = d.tree.clone();
            all.extend(d.components.iter().flat_map(|c| c.cycle.iter().chain(&c.attached).copied()));
            all.sort_unstable();
            all
        }
        None => Vec::new(),
    };
    let mut distance = Vec::with_capacity(peers.len() * flows);
    for &v in &peers {
        for d in decomps {
            distance.push(d.distance(v));
        }
    }
    DelayTable { flows, peers, distance }
}

/// Build and decompose all `M` flow graphs.
pub fn decompose_all(net: &Network, state: &RfaState) -> Result<(Vec<FlowGraph>, Vec<Decomposition>)> {
    let graphs: Vec<FlowGraph> = (1..=state.m()).map(|f| build_flow_graph(net, state, f)).collect::<Result<_>>()?;
    let decomps = graphs.iter().map(decompose).collect();
    Ok((graphs, decomps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfa::compute_rfa;
    use crate::rng::RandomSource;
    use crate::topology::grow;
    use std::collections::VecDeque;

    fn graph(n: u32, edges: &[(u32, u32)]) -> FlowGraph {
        let mut in_edge = vec![None; n as usize + 1];
        for &(p, v) in edges {
            in_edge[v as usize] = Some((PeerId(p), 0));
        }
        FlowGraph { flow: 1, peers: (1..=n).map(PeerId).collect(), in_edge }
    }

    #[test]
    fn chain_is_a_tree() {
        let d = decompose(&graph(3, &[(1, 2), (2, 3)]));
        assert_eq!(d.dump(), "1 0\n2 1\n3 2\n");
        assert!(d.components.is_empty());
    }

    #[test]
    fn two_cycle_is_disconnected() {
        let d = decompose(&graph(3, &[(3, 2), (2, 3)]));
        assert_eq!(d.tree, vec![PeerId(1)]);
        assert_eq!(d.components.len(), 1);
        assert_eq!(d.components[0].cycle, vec![PeerId(2), PeerId(3)]);
        assert_eq!(d.dump(), "1 0\ncycle: 2 3\n");
    }

    #[test]
    fn cycle_is_canonicalized_in_flow_direction() {
        // 4 → 2 → 5 → 4, with 6 hanging off 5.
        let d = decompose(&graph(6, &[(1, 3), (4, 2), (2, 5), (5, 4), (5, 6)]));
        assert_eq!(d.components[0].cycle, vec![PeerId(2), PeerId(5), PeerId(4)]);
        assert_eq!(d.components[0].attached, vec![PeerId(6)]);
        assert_eq!(d.dump(), "1 0\n3 1\ncycle: 2 5 4\nattached: 2 6\n");
        assert_eq!(d.disconnected_count(), 4);
    }

    #[test]
    fn loop_counts_as_cycle() {
        let d = decompose(&graph(2, &[(2, 2)]));
        assert_eq!(d.components[0].cycle, vec![PeerId(2)]);
    }

    fn bfs_oracle(fg: &FlowGraph) -> Vec<u32> {
        let children = fg.children();
        let mut dist = vec![UNREACHED; children.len()];
        dist[SOURCE.index()] = 0;
        let mut q = VecDeque::from([SOURCE]);
        while let Some(u) = q.pop_front() {
            for &w in &children[u.index()] {
                if dist[w.index()] == UNREACHED {
                    dist[w.index()] = dist[u.index()] + 1;
                    q.push_back(w);
                }
            }
        }
        dist
    }

    #[test]
    fn random_decomposition_partitions_and_matches_bfs() {
        for (seed, n, m) in [(1u64, 10_000usize, 2usize), (2, 3000, 4), (3, 64, 3)] {
            let rng = RandomSource::new(seed);
            let net = grow(n, m, &rng).unwrap();
            let st = compute_rfa(&net, 0.5, &rng).unwrap();
            let (graphs, decomps) = decompose_all(&net, &st).unwrap();
            let mut total_in = 0;
            for (fg, d) in graphs.iter().zip(&decomps) {
                assert_eq!(d.tree.len() + d.disconnected_count(), n);
                let oracle = bfs_oracle(fg);
                for v in net.peers() {
                    assert_eq!(d.dist[v.index()], oracle[v.index()]);
                    if let (Some(dv), Some(p)) = (d.distance(v), fg.parent(v)) {
                        assert_eq!(dv, d.distance(p).unwrap() + 1);
                    }
                }
                for c in &d.components {
                    for (i, &u) in c.cycle.iter().enumerate() {
                        let next = c.cycle[(i + 1) % c.cycle.len()];
                        assert_eq!(fg.parent(next), Some(u));
                    }
                }
                total_in += fg.peers().iter().filter(|v| fg.in_edge(**v).is_some()).count();
            }
            assert_eq!(total_in, m * (n - 1));
        }
    }

    #[test]
    fn three_peer_example_flow_graphs() {
        let mut net = Network::new(2).unwrap();
        net.join_with_peers(PeerId(2), &[SOURCE, SOURCE]).unwrap();
        net.join_with_peers(PeerId(3), &[PeerId(2), SOURCE]).unwrap();
        let st = compute_rfa(&net, 0.5, &RandomSource::new(1)).unwrap();
        let fg = build_flow_graph(&net, &st, 1).unwrap();
        assert_eq!(fg.in_edge(PeerId(2)), Some((SOURCE, 0)));
        assert!(fg.in_edge(PeerId(3)).is_some());
        assert!(fg.in_edge(SOURCE).is_none());
        assert!(matches!(build_flow_graph(&net, &st, 3), Err(Error::InvalidFlow { .. })));
        assert!(matches!(build_flow_graph(&net, &st, 0), Err(Error::InvalidFlow { .. })));
    }

    #[test]
    fn contraction_shells_are_consistent() {
        let rng = RandomSource::new(5);
        let net = grow(10_000, 2, &rng).unwrap();
        let st = compute_rfa(&net, 0.5, &rng).unwrap();
        let (graphs, decomps) = decompose_all(&net, &st).unwrap();
        let cs = contraction_stats(&st, &graphs[0]).unwrap();
        assert_eq!(cs.shells.iter().sum::<usize>() + cs.remaining.last().unwrap(), 10_000);
        for h in 1..cs.shells.len() {
            assert_eq!(cs.remaining[h], cs.remaining[h - 1] - cs.shells[h]);
            assert!((0.0..=1.0).contains(&cs.gamma[h]));
        }
        for h in 0..cs.shells.len() {
            let r = cs.remaining_by_layer[h];
            assert_eq!(r[0] + r[1], cs.remaining[h]);
        }
        // Shell h ≥ 1 sits at flow-1 distance d* + h - 1.
        let (shell, _) = shell_index(&st, &graphs[0]);
        for v in net.peers() {
            let h = shell[v.index()];
            if h >= 1 && h != usize::MAX {
                assert_eq!(decomps[0].distance(v), Some(st.dstar() + h as u32 - 1), "peer {v} shell {h}");
            }
        }
        let csv = cs.to_csv().unwrap();
        assert!(csv.starts_with("h,S_h,S_gt_h,gamma_h\n0,"));
    }

    #[test]
    fn contraction_requires_two_flows() {
        let rng = RandomSource::new(1);
        let net = grow(100, 3, &rng).unwrap();
        let st = compute_rfa(&net, 0.5, &rng).unwrap();
        let fg = build_flow_graph(&net, &st, 1).unwrap();
        assert!(matches!(contraction_stats(&st, &fg), Err(Error::AnalysisLimitedToTwoFlows(3))));
    }

    #[test]
    fn delay_table() {
        let rng = RandomSource::new(9);
        let net = grow(300, 2, &rng).unwrap();
        let st = compute_rfa(&net, 0.5, &rng).unwrap();
        let (_, decomps) = decompose_all(&net, &st).unwrap();
        let t = distance_delay_table(&decomps);
        assert_eq!(t.peers.len(), 300);
        assert_eq!(t.row(0), &[Some(0), Some(0)]);
        let disconnected: std::collections::BTreeSet<PeerId> = decomps
            .iter()
            .flat_map(|d| d.components.iter().flat_map(|c| c.cycle.iter().chain(&c.attached).copied()))
            .collect();
        assert_eq!(t.disconnected_peers(), disconnected.len());
        assert_eq!(t.max_delay(), decomps.iter().map(|d| d.max_distance()).max().unwrap());
    }
}
