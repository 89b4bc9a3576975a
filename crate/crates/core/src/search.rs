//! Deterministic shortest-path search and loopless k-shortest paths.
//!
//! Ties between equal-length paths are always broken towards the
//! lexicographically smallest edge-id sequence.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use crate::graph::{EdgeId, ExplicitGraph, Path, VertexId};

const REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Distances to `target` over usable edges, avoiding blocked vertices.
fn dist_to(
    graph: &ExplicitGraph,
    adj: &[Vec<EdgeId>],
    usable: &dyn Fn(EdgeId) -> bool,
    blocked: &dyn Fn(VertexId) -> bool,
    target: VertexId,
) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.num_vertices()];
    let mut heap = BinaryHeap::new();
    dist[target as usize] = 0.0;
    heap.push(Reverse((Dist(0.0), target)));
    while let Some(Reverse((Dist(d), v))) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        for &e in &adj[v as usize] {
            if !usable(e) {
                continue;
            }
            let edge = graph.edge(e);
            let Some(u) = edge.other(v) else { continue };
            if blocked(u) {
                continue;
            }
            let nd = d + edge.length;
            if nd < dist[u as usize] {
                dist[u as usize] = nd;
                heap.push(Reverse((Dist(nd), u)));
            }
        }
    }
    dist
}

/// Shortest `from → to` path by edge length over usable edges, never
/// entering a blocked vertex. Among shortest paths the lexicographically
/// smallest edge-id sequence is returned.
pub fn shortest_path_lex(
    graph: &ExplicitGraph,
    adj: &[Vec<EdgeId>],
    usable: &dyn Fn(EdgeId) -> bool,
    blocked: &dyn Fn(VertexId) -> bool,
    from: VertexId,
    to: VertexId,
) -> Option<Vec<EdgeId>> {
    let dist = dist_to(graph, adj, usable, blocked, to);
    if !dist[from as usize].is_finite() {
        return None;
    }
    let mut visited = HashSet::new();
    visited.insert(from);
    let mut out = Vec::new();
    let mut v = from;
    while v != to {
        let dv = dist[v as usize];
        let tol = REL_TOL * dv.max(1.0);
        let next = adj[v as usize].iter().copied().find_map(|e| {
            if !usable(e) {
                return None;
            }
            let edge = graph.edge(e);
            let u = edge.other(v)?;
            if blocked(u) || visited.contains(&u) || !dist[u as usize].is_finite() {
                return None;
            }
            ((edge.length + dist[u as usize] - dv).abs() <= tol).then_some((e, u))
        })?;
        out.push(next.0);
        visited.insert(next.1);
        v = next.1;
    }
    Some(out)
}

/// Shortest start-goal path over the whole graph.
pub fn shortest_path(graph: &ExplicitGraph) -> Option<Path> {
    let adj = graph.adjacency();
    shortest_path_lex(graph, &adj, &|_| true, &|_| false, graph.start, graph.goal).map(Path::new)
}

#[derive(PartialEq, Eq)]
struct Candidate {
    length: Dist,
    edges: Vec<EdgeId>,
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.length
            .cmp(&other.length)
            .then_with(|| self.edges.cmp(&other.edges))
    }
}

/// Up to `k` shortest simple start-goal paths (Yen's algorithm), ordered by
/// length and then by edge-id sequence.
pub fn k_shortest_paths(graph: &ExplicitGraph, k: usize) -> Vec<Path> {
    k_shortest_paths_within(graph, &|_| true, k)
}

/// [`k_shortest_paths`] over the subgraph of usable edges.
pub fn k_shortest_paths_within(graph: &ExplicitGraph, usable: &dyn Fn(EdgeId) -> bool, k: usize) -> Vec<Path> {
    let adj = graph.adjacency();
    let mut accepted: Vec<Path> = Vec::new();
    if k == 0 {
        return accepted;
    }
    let Some(first) = shortest_path_lex(graph, &adj, usable, &|_| false, graph.start, graph.goal) else {
        return accepted;
    };
    let first = Path::new(first);
    accepted.push(first);
    let mut seen: HashSet<Vec<EdgeId>> = HashSet::new();
    seen.insert(accepted[0].edges.clone());
    let mut pending: BTreeSet<Candidate> = BTreeSet::new();

    while accepted.len() < k {
        let prev = accepted.last().expect("nonempty");
        let verts = prev.walk(graph).expect("accepted paths are connected");
        for i in 0..prev.edges.len() {
            let spur = verts[i];
            let root = &prev.edges[..i];
            let removed: HashSet<EdgeId> = accepted
                .iter()
                .filter(|p| p.edges.len() > i && &p.edges[..i] == root)
                .map(|p| p.edges[i])
                .collect();
            let blocked: HashSet<VertexId> = verts[..i].iter().copied().collect();
            let spur_path = shortest_path_lex(
                graph,
                &adj,
                &|e| usable(e) && !removed.contains(&e),
                &|v| blocked.contains(&v),
                spur,
                graph.goal,
            );
            if let Some(tail) = spur_path {
                let mut edges = root.to_vec();
                edges.extend(tail);
                if seen.contains(&edges) {
                    continue;
                }
                let length = Dist(Path::new(edges.clone()).length(graph));
                pending.insert(Candidate { length, edges });
            }
        }
        let Some(best) = pending.pop_first() else { break };
        seen.insert(best.edges.clone());
        accepted.push(Path::new(best.edges));
    }
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_grid_graph;

    /// All simple start-goal paths by DFS.
    fn all_simple_paths(g: &ExplicitGraph) -> Vec<Path> {
        fn rec(
            g: &ExplicitGraph,
            adj: &[Vec<EdgeId>],
            v: VertexId,
            seen: &mut Vec<VertexId>,
            cur: &mut Vec<EdgeId>,
            out: &mut Vec<Path>,
        ) {
            if v == g.goal {
                out.push(Path::new(cur.clone()));
                return;
            }
            for &e in &adj[v as usize] {
                let u = g.edge(e).other(v).unwrap();
                if seen.contains(&u) {
                    continue;
                }
                seen.push(u);
                cur.push(e);
                rec(g, adj, u, seen, cur, out);
                cur.pop();
                seen.pop();
            }
        }
        let adj = g.adjacency();
        let mut out = Vec::new();
        rec(g, &adj, g.start, &mut vec![g.start], &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn two_by_two_library() {
        let g = build_grid_graph(2, 2);
        let ps = k_shortest_paths(&g, 3);
        assert_eq!(ps.len(), 3);
        assert_eq!(ps[0].edges.len(), 1);
        assert!((ps[0].length(&g) - 2f64.sqrt()).abs() < 1e-12);
        assert!((ps[1].length(&g) - 2.0).abs() < 1e-12);
        assert!((ps[2].length(&g) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn yen_matches_enumeration_on_small_grids() {
        for (r, c) in [(2, 3), (3, 3)] {
            let g = build_grid_graph(r, c);
            let mut all = all_simple_paths(&g);
            all.sort_by(|a, b| {
                a.length(&g)
                    .total_cmp(&b.length(&g))
                    .then_with(|| a.edges.cmp(&b.edges))
            });
            let k = all.len().min(40);
            let yen = k_shortest_paths(&g, k);
            let yl: Vec<f64> = yen.iter().map(|p| p.length(&g)).collect();
            let al: Vec<f64> = all[..k].iter().map(|p| p.length(&g)).collect();
            assert_eq!(yl, al, "{r}x{c}");
            let distinct: HashSet<_> = yen.iter().collect();
            assert_eq!(distinct.len(), yen.len());
            for p in &yen {
                p.walk(&g).unwrap();
            }
        }
    }

    #[test]
    fn exhausts_when_k_exceeds_paths() {
        let g = build_grid_graph(2, 2);
        let n = all_simple_paths(&g).len();
        assert_eq!(k_shortest_paths(&g, 100).len(), n);
    }

    #[test]
    fn lex_tiebreak_prefers_smallest_edge_ids() {
        // Two length-2 routes in the 2x2 grid without the diagonal: 0-1-3 via
        // edges (0,3) and 0-2-3 via edges (1,5).
        let g = build_grid_graph(2, 2);
        let adj = g.adjacency();
        let p = shortest_path_lex(&g, &adj, &|e| e != 2, &|_| false, g.start, g.goal).unwrap();
        assert_eq!(p, vec![0, 3]);
    }
}
