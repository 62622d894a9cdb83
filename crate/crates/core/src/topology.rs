//! Overlay construction under churn.
//!
//! The overlay is the union of `M` layers. Each layer is a 1-regular digraph
//! (a permutation of the peer set, loops allowed). A joining peer is added to
//! the peer set first and then, independently per layer, picks a uniformly
//! random existing peer `w` (itself included) and breaks into `w`'s outgoing
//! edge, or creates a loop when `w` is the newcomer. A departing peer splices
//! its parent to its child in every layer.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::rng::{uniform_index, Domain, RandomSource};

/// Peer identifier. Ids are positive; peer 1 is the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId(pub u32);

/// The stream source, present from creation and never removed.
pub const SOURCE: PeerId = PeerId(1);

impl PeerId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

const ABSENT: u32 = 0;

/// One 1-regular digraph. `succ[v]` is the child `c_m(v)` and `pred[v]` the
/// parent `p_m(v)`; both are indexed by peer id and `0` marks absent peers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    succ: Vec<u32>,
    pred: Vec<u32>,
}

impl Layer {
    fn with_source() -> Self {
        Layer {
            succ: vec![ABSENT, SOURCE.0],
            pred: vec![ABSENT, SOURCE.0],
        }
    }

    fn grow(&mut self, v: PeerId) {
        if self.succ.len() <= v.index() {
            self.succ.resize(v.index() + 1, ABSENT);
            self.pred.resize(v.index() + 1, ABSENT);
        }
    }

    #[inline]
    pub fn child(&self, v: PeerId) -> PeerId {
        PeerId(self.succ[v.index()])
    }

    #[inline]
    pub fn parent(&self, v: PeerId) -> PeerId {
        PeerId(self.pred[v.index()])
    }

    /// Insert `v` after `w`, or as a loop when `w == v`.
    fn break_in(&mut self, w: PeerId, v: PeerId) {
        self.grow(v);
        if w == v {
            self.succ[v.index()] = v.0;
            self.pred[v.index()] = v.0;
            return;
        }
        let next = self.succ[w.index()];
        self.succ[v.index()] = next;
        self.pred[v.index()] = w.0;
        self.succ[w.index()] = v.0;
        self.pred[next as usize] = v.0;
    }

    fn splice_out(&mut self, v: PeerId) {
        let p = self.pred[v.index()];
        let c = self.succ[v.index()];
        if p != v.0 {
            self.succ[p as usize] = c;
            self.pred[c as usize] = p;
        }
        self.succ[v.index()] = ABSENT;
        self.pred[v.index()] = ABSENT;
    }
}

/// A membership change, recorded in the order it was applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChurnEvent {
    Join(PeerId),
    Leave(PeerId),
}

/// The `M`-layer overlay plus any extra repair layers.
///
/// The first `m()` layers carry the stream; layers past that are extra
/// layers used only by repair requests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    members: Vec<PeerId>,
    position: Vec<u32>,
    layers: Vec<Layer>,
    primary: usize,
    next_id: u32,
    history: Vec<ChurnEvent>,
}

impl Network {
    /// A network holding only the source, looped in each of `m` layers.
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("M must be at least 1"));
        }
        Ok(Network {
            members: vec![SOURCE],
            position: vec![0, 1],
            layers: (0..m).map(|_| Layer::with_source()).collect(),
            primary: m,
            next_id: 2,
            history: Vec::new(),
        })
    }

    /// Number of streaming layers `M`.
    pub fn m(&self) -> usize {
        self.primary
    }

    /// Number of extra (repair) layers.
    pub fn extra(&self) -> usize {
        self.layers.len() - self.primary
    }

    pub fn total_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// One past the largest id ever assigned; per-peer arrays use this size.
    pub fn id_bound(&self) -> usize {
        self.next_id as usize
    }

    pub fn contains(&self, v: PeerId) -> bool {
        self.position.get(v.index()).is_some_and(|&p| p != 0)
    }

    /// Peers in ascending id order.
    pub fn peers(&self) -> Vec<PeerId> {
        let mut out = self.members.clone();
        out.sort_unstable();
        out
    }

    /// Peers in sampling order (the order joins draw from).
    pub fn members(&self) -> &[PeerId] {
        &self.members
    }

    pub fn history(&self) -> &[ChurnEvent] {
        &self.history
    }

    pub fn next_id(&self) -> PeerId {
        PeerId(self.next_id)
    }

    /// Layer `m`, zero-based, extra layers included.
    pub fn layer(&self, m: usize) -> &Layer {
        &self.layers[m]
    }

    #[inline]
    pub fn child(&self, v: PeerId, m: usize) -> PeerId {
        self.layers[m].child(v)
    }

    #[inline]
    pub fn parent(&self, v: PeerId, m: usize) -> PeerId {
        self.layers[m].parent(v)
    }

    /// Parents of `v` in the `M` streaming layers; element `m` is `p_m(v)`.
    pub fn parents(&self, v: PeerId) -> Result<Vec<PeerId>> {
        self.require(v)?;
        Ok(self.layers[..self.primary].iter().map(|l| l.parent(v)).collect())
    }

    /// Children of `v` in the `M` streaming layers.
    pub fn children(&self, v: PeerId) -> Result<Vec<PeerId>> {
        self.require(v)?;
        Ok(self.layers[..self.primary].iter().map(|l| l.child(v)).collect())
    }

    fn require(&self, v: PeerId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::UnknownPeer(v))
        }
    }

    fn admit(&mut self, v: PeerId) -> Result<()> {
        if v.0 < self.next_id {
            return Err(Error::invalid(format!(
                "peer id {v} is already in use or was used before (next free id is {})",
                self.next_id
            )));
        }
        self.members.push(v);
        if self.position.len() <= v.index() {
            self.position.resize(v.index() + 1, 0);
        }
        self.position[v.index()] = self.members.len() as u32;
        self.next_id = v.0 + 1;
        Ok(())
    }

    /// Join `v`, picking `w_m` for layer `m` with `draw(m, |V|)`, an index
    /// into [`Network::members`] taken after `v` was appended.
    pub fn join_with(&mut self, v: PeerId, mut draw: impl FnMut(usize, usize) -> usize) -> Result<()> {
        self.admit(v)?;
        let n = self.members.len();
        for m in 0..self.layers.len() {
            let w = self.members[draw(m, n)];
            self.layers[m].break_in(w, v);
        }
        self.history.push(ChurnEvent::Join(v));
        Ok(())
    }

    /// Join `v` with explicitly chosen break-in peers, one per layer.
    pub fn join_with_peers(&mut self, v: PeerId, targets: &[PeerId]) -> Result<()> {
        if targets.len() != self.layers.len() {
            return Err(Error::invalid(format!(
                "expected {} break-in peers, got {}",
                self.layers.len(),
                targets.len()
            )));
        }
        if v.0 < self.next_id {
            return Err(Error::invalid(format!("peer id {v} is not fresh")));
        }
        for &w in targets {
            if w != v && !self.contains(w) {
                return Err(Error::UnknownPeer(w));
            }
        }
        self.admit(v)?;
        for (layer, &w) in self.layers.iter_mut().zip(targets) {
            layer.break_in(w, v);
        }
        self.history.push(ChurnEvent::Join(v));
        Ok(())
    }

    /// Join `v` using the per-(event, layer) streams of `rng`.
    pub fn join(&mut self, v: PeerId, rng: &RandomSource) -> Result<()> {
        let event = self.history.len() as u64;
        self.join_with(v, |m, n| {
            uniform_index(&mut rng.stream(Domain::Join, event, m as u64), n)
        })
    }

    /// Join the next fresh id and return it.
    pub fn join_next(&mut self, rng: &RandomSource) -> Result<PeerId> {
        let v = PeerId(self.next_id);
        self.join(v, rng)?;
        Ok(v)
    }

    /// Remove `v`, splicing its parent to its child in every layer.
    pub fn leave(&mut self, v: PeerId) -> Result<()> {
        if v == SOURCE {
            return Err(Error::SourceDepartureForbidden);
        }
        self.require(v)?;
        for layer in &mut self.layers {
            layer.splice_out(v);
        }
        let slot = self.position[v.index()] as usize - 1;
        self.members.swap_remove(slot);
        if slot < self.members.len() {
            let moved = self.members[slot];
            self.position[moved.index()] = slot as u32 + 1;
        }
        self.position[v.index()] = 0;
        self.history.push(ChurnEvent::Leave(v));
        Ok(())
    }

    /// Add `k` extra layers by replaying the churn history with fresh
    /// randomness. Extra layer `j` draws from the `ExtraLayer` stream at
    /// `(event, j)`, so extending by 1 twice equals extending by 2.
    pub fn extend_layers(&mut self, k: usize, rng: &RandomSource) -> Result<()> {
        if k == 0 {
            return Ok(());
        }
        let offset = self.extra();
        let mut shadow = Network::new(k)?;
        for (event, ev) in self.history.iter().enumerate() {
            match *ev {
                ChurnEvent::Join(v) => shadow.join_with(v, |j, n| {
                    let mut s = rng.stream(Domain::ExtraLayer, event as u64, (offset + j) as u64);
                    uniform_index(&mut s, n)
                })?,
                ChurnEvent::Leave(v) => shadow.leave(v)?,
            }
        }
        debug_assert_eq!(shadow.members, self.members);
        self.layers.extend(shadow.layers);
        Ok(())
    }

    /// Successors of the peers in ascending id order, for layer `m`.
    pub fn layer_permutation(&self, m: usize) -> Vec<u32> {
        self.peers().iter().map(|&v| self.layers[m].child(v).0).collect()
    }

    /// Verify that every layer is a bijection on the peer set with a
    /// consistent inverse map.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.members.len();
        for (i, &v) in self.members.iter().enumerate() {
            if self.position[v.index()] as usize != i + 1 {
                return Err(Error::Invariant(format!("member index of {v} is stale")));
            }
        }
        if self.position.iter().filter(|&&p| p != 0).count() != n {
            return Err(Error::Invariant("membership map out of sync".into()));
        }
        let mut seen = vec![0usize; self.id_bound()];
        for (m, layer) in self.layers.iter().enumerate() {
            for &v in &self.members {
                let c = layer.child(v);
                let p = layer.parent(v);
                if !self.contains(c) || !self.contains(p) {
                    return Err(Error::Invariant(format!("layer {} links {v} outside the peer set", m + 1)));
                }
                if layer.parent(c) != v || layer.child(p) != v {
                    return Err(Error::Invariant(format!("layer {} inverse map broken at {v}", m + 1)));
                }
                if seen[c.index()] == m + 1 {
                    return Err(Error::Invariant(format!("layer {} gives {c} two parents", m + 1)));
                }
                seen[c.index()] = m + 1;
            }
            for (id, (&s, &p)) in layer.succ.iter().zip(&layer.pred).enumerate() {
                let alive = self.position.get(id).is_some_and(|&q| q != 0);
                if !alive && (s != ABSENT || p != ABSENT) {
                    return Err(Error::Invariant(format!("layer {} retains departed peer {id}", m + 1)));
                }
            }
        }
        Ok(())
    }

    /// Line-oriented dump: `N L`, then `m v c_m(v)` sorted by `(m, v)`.
    pub fn dump(&self) -> String {
        let peers = self.peers();
        let mut out = format!("{} {}\n", peers.len(), self.layers.len());
        for (m, layer) in self.layers.iter().enumerate() {
            for &v in &peers {
                out.push_str(&format!("{} {} {}\n", m + 1, v, layer.child(v)));
            }
        }
        out
    }
}

/// A churn script entry: `join` or `leave <id>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChurnCommand {
    Join,
    Leave(PeerId),
}

/// Parse a churn script, one command per line. Blank lines and `#` comments
/// are skipped.
pub fn parse_churn_script(text: &str) -> Result<Vec<ChurnCommand>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let cmd = match (parts.next(), parts.next(), parts.next()) {
            (Some("join"), None, _) => ChurnCommand::Join,
            (Some("leave"), Some(id), None) => {
                let id: u32 = id.parse().map_err(|_| Error::ChurnScript {
                    line: i + 1,
                    reason: format!("bad peer id {id:?}"),
                })?;
                ChurnCommand::Leave(PeerId(id))
            }
            _ => {
                return Err(Error::ChurnScript { line: i + 1, reason: format!("unrecognized command {line:?}") })
            }
        };
        out.push(cmd);
    }
    Ok(out)
}

/// Apply a churn script; joins take fresh ids from the monotone counter.
pub fn apply_churn(net: &mut Network, script: &[ChurnCommand], rng: &RandomSource) -> Result<()> {
    for cmd in script {
        match *cmd {
            ChurnCommand::Join => {
                net.join_next(rng)?;
            }
            ChurnCommand::Leave(v) => net.leave(v)?,
        }
    }
    Ok(())
}

/// Grow a network to `n` peers by `n - 1` consecutive joins.
pub fn grow(n: usize, m: usize, rng: &RandomSource) -> Result<Network> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let mut net = Network::new(m)?;
    for _ in 1..n {
        net.join_next(rng)?;
    }
    Ok(net)
}

/// Layer tuple key: one successor list per layer, peers in ascending order.
pub type LayerTuple = Vec<Vec<u32>>;

/// Largest number of equally likely join histories the exact oracle walks.
pub const ORACLE_MAX_HISTORIES: u64 = 1_000_000;

/// Exact distribution over layer tuples after joins `2..=n`, by walking
/// every sequence of break-in draws.
pub fn exact_layer_distribution(n: usize, m: usize) -> Result<BTreeMap<LayerTuple, Ratio<u64>>> {
    if !(1..=6).contains(&n) {
        return Err(Error::OracleLimitExceeded(format!("N = {n} (must be 1..=6)")));
    }
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    let mut histories: u64 = 1;
    for k in 2..=n as u64 {
        histories = k
            .checked_pow(m as u32)
            .and_then(|x| histories.checked_mul(x))
            .filter(|&h| h <= ORACLE_MAX_HISTORIES)
            .ok_or_else(|| Error::OracleLimitExceeded(format!("(N!)^M histories for N = {n}, M = {m}")))?;
    }

    fn walk(net: &Network, n: usize, counts: &mut BTreeMap<LayerTuple, u64>) -> Result<()> {
        if net.len() == n {
            let key = (0..net.total_layers()).map(|m| net.layer_permutation(m)).collect();
            *counts.entry(key).or_insert(0) += 1;
            return Ok(());
        }
        let size = net.len() + 1;
        let layers = net.total_layers();
        let combos = size.pow(layers as u32);
        for mut code in 0..combos {
            let mut choice = Vec::with_capacity(layers);
            for _ in 0..layers {
                choice.push(code % size);
                code /= size;
            }
            let mut next = net.clone();
            let v = next.next_id();
            next.join_with(v, |layer, _| choice[layer])?;
            walk(&next, n, counts)?;
        }
        Ok(())
    }

    let mut counts = BTreeMap::new();
    walk(&Network::new(m)?, n, &mut counts)?;
    Ok(counts.into_iter().map(|(k, c)| (k, Ratio::new(c, histories))).collect())
}
