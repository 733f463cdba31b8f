//! Undirected graphs as adjacency bitsets, clique counting and its downward
//! self-reduction.

use std::fmt;

use crate::error::{OiError, Result};

/// Largest vertex count representable by the bitset rows.
pub const MAX_VERTICES: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    adjacency: Vec<u64>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph({}, {:?})", self.n, self.edges())
    }
}

impl Graph {
    pub fn empty(n: usize) -> Result<Self> {
        if n > MAX_VERTICES {
            return Err(OiError::config(format!("at most {MAX_VERTICES} vertices, got {n}")));
        }
        Ok(Graph {
            n,
            adjacency: vec![0; n],
        })
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut g = Graph::empty(n)?;
        for u in 0..n {
            g.adjacency[u] = low_mask(n) & !(1 << u);
        }
        Ok(g)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(n)?;
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u >= self.n || v >= self.n || u == v {
            return Err(OiError::domain(format!("invalid edge ({u}, {v}) on {} vertices", self.n)));
        }
        self.adjacency[u] |= 1 << v;
        self.adjacency[v] |= 1 << u;
        Ok(())
    }

    pub fn vertices(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adjacency[u] >> v & 1 == 1
    }

    pub fn neighbors(&self, v: usize) -> u64 {
        self.adjacency[v]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in u + 1..self.n {
                if self.has_edge(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|r| r.count_ones() as usize).sum::<usize>() / 2
    }

    /// `G^{(v)}`: the graph induced by `v`'s neighbors, on the same vertex set.
    pub fn neighborhood(&self, v: usize) -> Graph {
        let keep = self.adjacency[v];
        Graph {
            n: self.n,
            adjacency: (0..self.n)
                .map(|u| if keep >> u & 1 == 1 { self.adjacency[u] & keep } else { 0 })
                .collect(),
        }
    }

    /// Number of edge slots, `n(n−1)/2`.
    pub fn slots(n: usize) -> usize {
        n * n.saturating_sub(1) / 2
    }

    /// Edge `(u, v)`, `u < v`, maps to bit `v(v−1)/2 + u`.
    pub fn encode(&self) -> Result<u64> {
        if Graph::slots(self.n) > 64 {
            return Err(OiError::config(format!("{} vertices do not fit a 64-bit code", self.n)));
        }
        let mut code = 0u64;
        for (u, v) in self.edges() {
            code |= 1 << (v * (v - 1) / 2 + u);
        }
        Ok(code)
    }

    pub fn decode(n: usize, code: u64) -> Result<Graph> {
        let slots = Graph::slots(n);
        if slots > 64 || (slots < 64 && code >> slots != 0) {
            return Err(OiError::domain(format!("code {code:#x} is not a graph on {n} vertices")));
        }
        let mut g = Graph::empty(n)?;
        for v in 1..n {
            for u in 0..v {
                if code >> (v * (v - 1) / 2 + u) & 1 == 1 {
                    g.add_edge(u, v)?;
                }
            }
        }
        Ok(g)
    }
}

fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Number of `k`-cliques; zero when `k > n`.
pub fn clique_count(g: &Graph, k: usize) -> Result<u64> {
    if k == 0 {
        return Err(OiError::config("clique size must be at least 1"));
    }
    if k > g.n {
        return Ok(0);
    }
    Ok(extend(g, low_mask(g.n), k))
}

/// Cliques of size `k` inside `candidates`, each counted once via increasing vertex order.
fn extend(g: &Graph, candidates: u64, k: usize) -> u64 {
    if k == 1 {
        return candidates.count_ones() as u64;
    }
    let mut total = 0;
    let mut rest = candidates;
    while rest != 0 {
        let v = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        let next = rest & g.adjacency[v];
        if next.count_ones() as usize >= k - 1 {
            total += extend(g, next, k - 1);
        }
    }
    total
}

/// `k·f_k(G) = Σ_v f_{k−1}(G^{(v)})`, using exactly `n` oracle calls. Needs `k ≥ 3`
/// so that the isolated vertices of `G^{(v)}` are not counted.
pub fn clique_downward(
    g: &Graph,
    k: usize,
    oracle: &mut dyn FnMut(&Graph) -> Result<u64>,
) -> Result<u64> {
    if k < 3 {
        return Err(OiError::config(format!(
            "the neighborhood reduction needs clique size at least 3, got {k}"
        )));
    }
    let mut sum = 0u64;
    for v in 0..g.n {
        sum += oracle(&g.neighborhood(v))?;
    }
    if sum % k as u64 != 0 {
        return Err(OiError::OracleInconsistent(format!(
            "neighborhood counts sum to {sum}, not a multiple of {k}"
        )));
    }
    Ok(sum / k as u64)
}
