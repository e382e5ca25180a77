//! Network graph of users, routers and fiber links, plus least-cost routing.
//!
//! Path cost is the physical fiber length only. When several paths share the
//! minimum cost, one of them is drawn uniformly at random.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack used when comparing accumulated path lengths for ties.
const COST_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("link {a}-{b}: {reason}")]
    InvalidLink { a: String, b: String, reason: String },
    #[error("user node `{0}` must have exactly one link, to its attached router")]
    BadUserAttachment(String),
    #[error("topology is not connected")]
    Disconnected,
    #[error("no path from `{src}` to `{dst}`")]
    NoPath { src: String, dst: String },
    #[error("source and destination are the same node `{0}`")]
    SameEndpoints(String),
    #[error("failed to read topology: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse topology: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Sender,
    Receiver,
    Router,
}

/// Dense index of a node inside a [`NetworkTopology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached_router: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
}

impl LinkSpec {
    pub fn loss_db(&self) -> f64 {
        self.length_km * self.attenuation_db_per_km
    }
}

/// On-disk JSON layout of a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

/// Validated, immutable network graph.
#[derive(Debug, Clone)]
pub struct NetworkTopology {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    index: HashMap<String, NodeId>,
    /// adjacency[n] = (neighbor, link index)
    adjacency: Vec<Vec<(NodeId, usize)>>,
}

impl NetworkTopology {
    pub fn new(file: TopologyFile) -> Result<Self, TopologyError> {
        let TopologyFile { nodes, links } = file;
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), NodeId(i as u32)).is_some() {
                return Err(TopologyError::DuplicateNode(n.id.clone()));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen_pairs = BTreeMap::new();
        for (li, l) in links.iter().enumerate() {
            let bad = |reason: &str| TopologyError::InvalidLink {
                a: l.a.clone(),
                b: l.b.clone(),
                reason: reason.to_string(),
            };
            let a = *index.get(&l.a).ok_or_else(|| TopologyError::UnknownNode(l.a.clone()))?;
            let b = *index.get(&l.b).ok_or_else(|| TopologyError::UnknownNode(l.b.clone()))?;
            if a == b {
                return Err(bad("self loop"));
            }
            if !(l.length_km > 0.0 && l.length_km.is_finite()) {
                return Err(bad("length_km must be > 0"));
            }
            if !(l.attenuation_db_per_km >= 0.0 && l.attenuation_db_per_km.is_finite()) {
                return Err(bad("attenuation_db_per_km must be >= 0"));
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if seen_pairs.insert(key, li).is_some() {
                return Err(bad("parallel link"));
            }
            adjacency[a.index()].push((b, li));
            adjacency[b.index()].push((a, li));
        }

        for (i, n) in nodes.iter().enumerate() {
            match n.kind {
                NodeKind::Router => {}
                NodeKind::Sender | NodeKind::Receiver => {
                    let router = n
                        .attached_router
                        .as_ref()
                        .ok_or_else(|| TopologyError::BadUserAttachment(n.id.clone()))?;
                    let r = *index
                        .get(router)
                        .ok_or_else(|| TopologyError::UnknownNode(router.clone()))?;
                    let adj = &adjacency[i];
                    if nodes[r.index()].kind != NodeKind::Router || adj.len() != 1 || adj[0].0 != r {
                        return Err(TopologyError::BadUserAttachment(n.id.clone()));
                    }
                }
            }
        }

        let topo = Self { nodes, links, index, adjacency };
        if !topo.is_connected() {
            return Err(TopologyError::Disconnected);
        }
        Ok(topo)
    }

    pub fn from_json_str(s: &str) -> Result<Self, TopologyError> {
        Self::new(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile { nodes: self.nodes.clone(), links: self.links.clone() }
    }

    fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(n) = queue.pop_front() {
            for &(m, _) in &self.adjacency[n] {
                if !seen[m.index()] {
                    seen[m.index()] = true;
                    queue.push_back(m.index());
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id.index()]
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].id
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.index()].kind
    }

    pub fn lookup(&self, name: &str) -> Result<NodeId, TopologyError> {
        self.index.get(name).copied().ok_or_else(|| TopologyError::UnknownNode(name.to_string()))
    }

    pub fn ids_of(&self, kind: NodeKind) -> Vec<NodeId> {
        (0..self.nodes.len() as u32).map(NodeId).filter(|&n| self.kind(n) == kind).collect()
    }

    pub fn senders(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Sender)
    }

    pub fn receivers(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Receiver)
    }

    pub fn routers(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Router)
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[id.index()].len()
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = (NodeId, &LinkSpec)> + '_ {
        self.adjacency[id.index()].iter().map(move |&(m, li)| (m, &self.links[li]))
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<&LinkSpec> {
        self.adjacency[a.index()]
            .iter()
            .find(|&&(m, _)| m == b)
            .map(|&(_, li)| &self.links[li])
    }

    /// Sum of link lengths along `path`, or `None` if two consecutive nodes are not adjacent.
    pub fn path_length_km(&self, path: &[NodeId]) -> Option<f64> {
        path.windows(2)
            .map(|w| self.link_between(w[0], w[1]).map(|l| l.length_km))
            .sum()
    }

    /// Sum of link losses (length x attenuation) along `path`.
    pub fn path_loss_db(&self, path: &[NodeId]) -> Option<f64> {
        path.windows(2)
            .map(|w| self.link_between(w[0], w[1]).map(LinkSpec::loss_db))
            .sum()
    }

    pub fn routers_on(&self, path: &[NodeId]) -> usize {
        path.iter().filter(|&&n| self.kind(n) == NodeKind::Router).count()
    }

    /// Shortest-path tree rooted at `src`, reusable for many draws.
    pub fn shortest_paths_from(&self, src: NodeId) -> ShortestPaths {
        ShortestPaths::compute(self, src)
    }

    /// Draws one minimum-length path from `src` to `dst`, ties broken uniformly.
    pub fn least_cost_path<R: Rng + ?Sized>(
        &self,
        src: NodeId,
        dst: NodeId,
        rng: &mut R,
    ) -> Result<Vec<NodeId>, TopologyError> {
        if src == dst {
            return Err(TopologyError::SameEndpoints(self.name(src).to_string()));
        }
        self.shortest_paths_from(src).sample(self, dst, rng)
    }
}

/// Dijkstra result with shortest-path counts, enabling uniform sampling among
/// all minimum-cost paths.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    src: NodeId,
    dist: Vec<f64>,
    /// predecessors on some shortest path
    preds: Vec<Vec<NodeId>>,
    /// number of distinct shortest paths from src (as f64; counts may be large)
    counts: Vec<f64>,
}

impl ShortestPaths {
    fn compute(topo: &NetworkTopology, src: NodeId) -> Self {
        let n = topo.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut preds: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        dist[src.index()] = 0.0;
        // O(n^2) Dijkstra; networks here have tens of nodes.
        for _ in 0..n {
            let mut best: Option<usize> = None;
            for v in 0..n {
                if !done[v] && dist[v].is_finite() && best.is_none_or(|b| dist[v] < dist[b]) {
                    best = Some(v);
                }
            }
            let Some(u) = best else { break };
            done[u] = true;
            order.push(u);
            // users are leaves: they never relay traffic
            if u != src.index() && topo.kind(NodeId(u as u32)) != NodeKind::Router {
                continue;
            }
            for &(m, li) in &topo.adjacency[u] {
                let v = m.index();
                if done[v] {
                    continue;
                }
                let cand = dist[u] + topo.links[li].length_km;
                let tol = COST_TIE_EPS * cand.max(1.0);
                if cand < dist[v] - tol {
                    dist[v] = cand;
                    preds[v].clear();
                    preds[v].push(NodeId(u as u32));
                } else if (cand - dist[v]).abs() <= tol {
                    preds[v].push(NodeId(u as u32));
                }
            }
        }
        let mut counts = vec![0.0; n];
        counts[src.index()] = 1.0;
        for &u in order.iter().skip(1) {
            counts[u] = preds[u].iter().map(|p| counts[p.index()]).sum();
        }
        Self { src, dist, preds, counts }
    }

    pub fn source(&self) -> NodeId {
        self.src
    }

    pub fn distance_km(&self, dst: NodeId) -> Option<f64> {
        let d = self.dist[dst.index()];
        d.is_finite().then_some(d)
    }

    /// Number of distinct minimum-cost paths to `dst`.
    pub fn path_count(&self, dst: NodeId) -> f64 {
        self.counts[dst.index()]
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        topo: &NetworkTopology,
        dst: NodeId,
        rng: &mut R,
    ) -> Result<Vec<NodeId>, TopologyError> {
        if !self.dist[dst.index()].is_finite() {
            return Err(TopologyError::NoPath {
                src: topo.name(self.src).to_string(),
                dst: topo.name(dst).to_string(),
            });
        }
        let mut rev = vec![dst];
        let mut cur = dst;
        while cur != self.src {
            let preds = &self.preds[cur.index()];
            cur = if preds.len() == 1 {
                preds[0]
            } else {
                // choose predecessor p with probability counts[p] / counts[cur]
                let total = self.counts[cur.index()];
                let mut x = rng.random::<f64>() * total;
                let mut pick = *preds.last().expect("reachable node has a predecessor");
                for &p in preds {
                    x -= self.counts[p.index()];
                    if x < 0.0 {
                        pick = p;
                        break;
                    }
                }
                pick
            };
            rev.push(cur);
        }
        rev.reverse();
        Ok(rev)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeKind::Sender => "sender",
            NodeKind::Receiver => "receiver",
            NodeKind::Router => "router",
        };
        f.write_str(s)
    }
}

/// Parameters of the four-router ring used for the reference network.
///
/// Routers are `R1..R{n}`; router `r` hosts senders `A{r}1, A{r}2, ...` and
/// receivers `B{r}1, B{r}2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultTopologyOptions {
    pub routers: u32,
    pub users_per_router: u32,
    /// Router-router adjacency as 1-based router numbers.
    pub router_links: Vec<(u32, u32)>,
    pub user_link_km: f64,
    pub router_link_km: f64,
    pub attenuation_db_per_km: f64,
}

impl Default for DefaultTopologyOptions {
    fn default() -> Self {
        // Ring R1-R2-R4-R3-R1: R2/R4 adjacent, R2/R3 opposite, matching the
        // 1/2/3-router reference pairs A31-B32, A42-B22, A22-B31.
        Self {
            routers: 4,
            users_per_router: 2,
            router_links: vec![(1, 2), (2, 4), (4, 3), (3, 1)],
            user_link_km: 5.0,
            router_link_km: 20.0,
            attenuation_db_per_km: 0.2,
        }
    }
}

impl DefaultTopologyOptions {
    pub fn build(&self) -> Result<NetworkTopology, TopologyError> {
        let mut nodes = Vec::new();
        let mut links = Vec::new();
        for r in 1..=self.routers {
            nodes.push(NodeSpec { id: format!("R{r}"), kind: NodeKind::Router, attached_router: None });
        }
        for r in 1..=self.routers {
            for (prefix, kind) in [("A", NodeKind::Sender), ("B", NodeKind::Receiver)] {
                for u in 1..=self.users_per_router {
                    let id = format!("{prefix}{r}{u}");
                    links.push(LinkSpec {
                        a: id.clone(),
                        b: format!("R{r}"),
                        length_km: self.user_link_km,
                        attenuation_db_per_km: self.attenuation_db_per_km,
                    });
                    nodes.push(NodeSpec { id, kind, attached_router: Some(format!("R{r}")) });
                }
            }
        }
        for &(a, b) in &self.router_links {
            links.push(LinkSpec {
                a: format!("R{a}"),
                b: format!("R{b}"),
                length_km: self.router_link_km,
                attenuation_db_per_km: self.attenuation_db_per_km,
            });
        }
        NetworkTopology::new(TopologyFile { nodes, links })
    }
}

/// The sixteen-user, four-router reference network.
pub fn build_default_topology() -> NetworkTopology {
    DefaultTopologyOptions::default().build().expect("reference topology is valid")
}
