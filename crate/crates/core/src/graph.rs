//! Directed communication topologies.
//!
//! Node identifiers are dense `0..n`. Arcs are stored sorted by `(from, to)`
//! and addressed by their position in that order (the *arc id*), which every
//! other module uses to key per-link state.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Attempts before random generation gives up on a configuration.
pub const MAX_GENERATION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
}

impl Arc {
    pub const fn new(from: usize, to: usize) -> Self {
        Arc { from, to }
    }
}

impl std::fmt::Display for Arc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.from, self.to)
    }
}

/// A strongly connected digraph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    arcs: Vec<Arc>,
    out_arcs: Vec<Vec<usize>>,
    in_arcs: Vec<Vec<usize>>,
}

impl Topology {
    /// Validates and builds a topology. Duplicate arcs are merged.
    pub fn from_arcs(n: usize, arcs: impl IntoIterator<Item = Arc>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTopology(format!("need at least 2 nodes, got {n}")));
        }
        let mut arcs: Vec<Arc> = arcs.into_iter().collect();
        for a in &arcs {
            if a.from >= n || a.to >= n {
                return Err(Error::InvalidTopology(format!("arc {a} out of range for n={n}")));
            }
            if a.from == a.to {
                return Err(Error::InvalidTopology(format!("self-loop at node {}", a.from)));
            }
        }
        arcs.sort_unstable();
        arcs.dedup();
        if !is_strongly_connected(n, &arcs) {
            return Err(Error::InvalidTopology("graph is not strongly connected".into()));
        }
        let mut out_arcs = vec![Vec::new(); n];
        let mut in_arcs = vec![Vec::new(); n];
        for (id, a) in arcs.iter().enumerate() {
            out_arcs[a.from].push(id);
            in_arcs[a.to].push(id);
        }
        Ok(Topology { n, arcs, out_arcs, in_arcs })
    }

    /// Ring `i -> i+1 (mod n)`, plus `i -> i-1` when bidirectional.
    pub fn cycle(n: usize, bidirectional: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTopology(format!("need at least 2 nodes, got {n}")));
        }
        let mut arcs: Vec<Arc> = (0..n).map(|i| Arc::new(i, (i + 1) % n)).collect();
        if bidirectional {
            arcs.extend((0..n).map(|i| Arc::new(i, (i + n - 1) % n)));
        }
        // For n = 2 both directions coincide, leaving 2 arcs rather than 2n.
        Self::from_arcs(n, arcs)
    }

    /// Every ordered pair included independently with probability `p`; the
    /// whole graph is resampled until strongly connected.
    pub fn random_strongly_connected(n: usize, p: f64, rng: &mut Stream) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTopology(format!("need at least 2 nodes, got {n}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!("edge probability {p} outside [0, 1]")));
        }
        for _ in 0..MAX_GENERATION_ATTEMPTS {
            let mut arcs = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.bernoulli(p) {
                        arcs.push(Arc::new(i, j));
                    }
                }
            }
            if is_strongly_connected(n, &arcs) {
                return Self::from_arcs(n, arcs);
            }
        }
        Err(Error::config(format!(
            "no strongly connected graph with n={n}, p={p} after {MAX_GENERATION_ATTEMPTS} attempts"
        )))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, id: usize) -> Arc {
        self.arcs[id]
    }

    pub fn arc_id(&self, arc: Arc) -> Option<usize> {
        self.arcs.binary_search(&arc).ok()
    }

    /// Arc ids leaving `node`, ordered by destination.
    pub fn out_arcs(&self, node: usize) -> &[usize] {
        &self.out_arcs[node]
    }

    /// Arc ids entering `node`, ordered by source.
    pub fn in_arcs(&self, node: usize) -> &[usize] {
        &self.in_arcs[node]
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out_arcs[node].len()
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.in_arcs[node].len()
    }

    pub fn max_out_degree(&self) -> usize {
        self.out_arcs.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Plain-text arc list: `n` on the first line, then `i j` per arc.
    pub fn to_arc_list(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for a in &self.arcs {
            let _ = writeln!(s, "{} {}", a.from, a.to);
        }
        s
    }

    pub fn parse_arc_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::parse("empty arc list"))?
            .parse()
            .map_err(|e| Error::parse(format!("node count: {e}")))?;
        let mut arcs = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let mut field = |name: &str| -> Result<usize> {
                it.next()
                    .ok_or_else(|| Error::parse(format!("missing {name} in `{line}`")))?
                    .parse()
                    .map_err(|e| Error::parse(format!("{name} in `{line}`: {e}")))
            };
            let from = field("source")?;
            let to = field("destination")?;
            arcs.push(Arc::new(from, to));
        }
        Self::from_arcs(n, arcs)
    }
}

/// Forward search from node 0, then the same search on the transpose.
pub fn is_strongly_connected(n: usize, arcs: &[Arc]) -> bool {
    if n == 0 {
        return false;
    }
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for a in arcs {
        if a.from >= n || a.to >= n {
            return false;
        }
        fwd[a.from].push(a.to);
        bwd[a.to].push(a.from);
    }
    reaches_all(&fwd) && reaches_all(&bwd)
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == adj.len()
}

/// True when the union of every `window` consecutive arc masks is strongly
/// connected. `masks[k][a]` marks arc `a` active at slot `k`.
pub fn is_b_connected(topology: &Topology, masks: &[Vec<bool>], window: usize) -> bool {
    if window == 0 || masks.len() < window {
        return false;
    }
    (0..=masks.len() - window).all(|start| {
        let union: Vec<Arc> = topology
            .arcs()
            .iter()
            .enumerate()
            .filter(|(id, _)| masks[start..start + window].iter().any(|m| m[*id]))
            .map(|(_, a)| *a)
            .collect();
        is_strongly_connected(topology.n(), &union)
    })
}
