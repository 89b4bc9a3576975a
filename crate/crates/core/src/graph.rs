//! Explicit graphs, worlds and paths.

use serde::{Deserialize, Serialize};

use crate::bits::BitSet;

pub type VertexId = u32;
pub type EdgeId = u32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub pos: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub endpoints: [VertexId; 2],
    /// Cost of evaluating the edge against a world.
    pub eval_cost: f64,
    /// Geometric length used for shortest-path search.
    pub length: f64,
}

impl Edge {
    /// The endpoint opposite `v`, if `v` is an endpoint.
    #[inline]
    pub fn other(&self, v: VertexId) -> Option<VertexId> {
        match self.endpoints {
            [a, b] if a == v => Some(b),
            [a, b] if b == v => Some(a),
            _ => None,
        }
    }

    #[inline]
    pub fn touches(&self, v: VertexId) -> bool {
        self.endpoints[0] == v || self.endpoints[1] == v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub start: VertexId,
    pub goal: VertexId,
}

impl ExplicitGraph {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e as usize]
    }

    pub fn eval_costs(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.eval_cost).collect()
    }

    /// Incident edge ids per vertex, in increasing edge-id order.
    pub fn adjacency(&self) -> Vec<Vec<EdgeId>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            let [a, b] = e.endpoints;
            if (a as usize) < adj.len() {
                adj[a as usize].push(e.id);
            }
            if b != a && (b as usize) < adj.len() {
                adj[b as usize].push(e.id);
            }
        }
        adj
    }

    /// Type-invariant violations, as human-readable strings.
    pub fn structural_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let nv = self.vertices.len() as u64;
        for (i, v) in self.vertices.iter().enumerate() {
            if v.id as usize != i {
                out.push(format!("vertex at position {i} has id {}", v.id));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.id as usize != i {
                out.push(format!("edge at position {i} has id {}", e.id));
            }
            for &v in &e.endpoints {
                if v as u64 >= nv {
                    out.push(format!("edge {i} references missing vertex {v}"));
                }
            }
            if !(e.eval_cost > 0.0 && e.eval_cost.is_finite()) {
                out.push(format!("edge {i} has non-positive eval_cost {}", e.eval_cost));
            }
            if !(e.length >= 0.0 && e.length.is_finite()) {
                out.push(format!("edge {i} has invalid length {}", e.length));
            }
        }
        if self.start as u64 >= nv || self.goal as u64 >= nv {
            out.push("start or goal vertex missing".into());
        }
        if self.start == self.goal {
            out.push("start equals goal".into());
        }
        out
    }
}

/// Edge validity in one world (1 = valid).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct World(pub BitSet);

impl World {
    pub fn all_valid(num_edges: usize) -> Self {
        World(BitSet::ones(num_edges))
    }

    #[inline]
    pub fn is_valid(&self, e: EdgeId) -> bool {
        self.0.get(e as usize)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn path_valid(&self, path: &Path) -> bool {
        path.edges.iter().all(|&e| self.is_valid(e))
    }
}

/// Ordered start-to-goal edge sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path {
    pub edges: Vec<EdgeId>,
}

impl Path {
    pub fn new(edges: Vec<EdgeId>) -> Self {
        Path { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge_set(&self, num_edges: usize) -> BitSet {
        BitSet::from_indices(num_edges, self.edges.iter().map(|&e| e as usize))
    }

    pub fn contains(&self, e: EdgeId) -> bool {
        self.edges.contains(&e)
    }

    /// Total length, summing edge lengths in ascending order so that paths
    /// with the same multiset of lengths get bit-identical totals.
    pub fn length(&self, graph: &ExplicitGraph) -> f64 {
        let mut ls: Vec<f64> = self.edges.iter().map(|&e| graph.edge(e).length).collect();
        ls.sort_by(f64::total_cmp);
        ls.iter().sum()
    }

    /// Walks the path from `graph.start`, returning the visited vertices or
    /// a description of the first broken link.
    pub fn walk(&self, graph: &ExplicitGraph) -> Result<Vec<VertexId>, String> {
        if self.edges.is_empty() {
            return Err("empty path".into());
        }
        let mut seen = std::collections::HashSet::new();
        let mut cur = graph.start;
        let mut verts = vec![cur];
        for (i, &e) in self.edges.iter().enumerate() {
            if e as usize >= graph.num_edges() {
                return Err(format!("edge id {e} out of range"));
            }
            if !seen.insert(e) {
                return Err(format!("edge {e} repeated"));
            }
            cur = graph
                .edge(e)
                .other(cur)
                .ok_or_else(|| format!("edge {e} at position {i} is not incident to vertex {cur}"))?;
            verts.push(cur);
        }
        if cur != graph.goal {
            return Err(format!("path ends at {cur}, not goal {}", graph.goal));
        }
        Ok(verts)
    }
}
