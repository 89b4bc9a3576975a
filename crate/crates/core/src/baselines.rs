//! Reference lazy policies: LazySP on the full graph, LazySP over the path
//! library, and a uniformly random evaluator.
//!
//! LazySP always evaluates the candidate path "forward": the first
//! unevaluated edge from the start, stopping at the first invalid one.

use rand::Rng;

use crate::graph::{EdgeId, ExplicitGraph, Path};
use crate::oracle::EdgeOracle;
use crate::search::shortest_path_lex;
use crate::trace::{EdgeLedger, Terminal};
use crate::Result;

pub const LAZYSP_GRAPH: &str = "lazysp-graph";
pub const LAZYSP_SET: &str = "lazysp-set";
pub const RANDOM: &str = "random";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyEnd {
    pub terminal: Terminal,
    pub path: Option<Vec<EdgeId>>,
}

impl PolicyEnd {
    fn solved(region: Option<u32>, path: &[EdgeId]) -> Self {
        PolicyEnd {
            terminal: Terminal::Solved { region },
            path: Some(path.to_vec()),
        }
    }

    fn dead() -> Self {
        PolicyEnd {
            terminal: Terminal::AllRegionsDead,
            path: None,
        }
    }
}

/// Evaluates unknown edges of `path` in order until one is invalid.
/// Returns whether the whole path is now known valid.
fn evaluate_forward<O: EdgeOracle>(path: &[EdgeId], ledger: &mut EdgeLedger<'_, O>) -> Result<bool> {
    for &e in path {
        let ok = match ledger.status(e) {
            Some(v) => v,
            None => ledger.evaluate(e)?,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// LazySP on the whole graph, unknown edges treated as valid.
pub fn lazysp_graph<O: EdgeOracle>(graph: &ExplicitGraph, ledger: &mut EdgeLedger<'_, O>) -> Result<PolicyEnd> {
    let adj = graph.adjacency();
    loop {
        let candidate = {
            let usable = |e: EdgeId| ledger.status(e) != Some(false);
            shortest_path_lex(graph, &adj, &usable, &|_| false, graph.start, graph.goal)
        };
        let Some(path) = candidate else {
            return Ok(PolicyEnd {
                terminal: Terminal::Infeasible,
                path: None,
            });
        };
        if evaluate_forward(&path, ledger)? {
            return Ok(PolicyEnd::solved(None, &path));
        }
    }
}

/// LazySP restricted to the library: the shortest library path with no
/// known-invalid edge, ties to the lowest index.
pub fn lazysp_set<O: EdgeOracle>(
    library: &[Path],
    graph: &ExplicitGraph,
    ledger: &mut EdgeLedger<'_, O>,
) -> Result<PolicyEnd> {
    let mut order: Vec<usize> = (0..library.len()).collect();
    let lengths: Vec<f64> = library.iter().map(|p| p.length(graph)).collect();
    order.sort_by(|&a, &b| lengths[a].total_cmp(&lengths[b]).then(a.cmp(&b)));
    for r in order {
        let path = &library[r].edges;
        if path.iter().any(|&e| ledger.status(e) == Some(false)) {
            continue;
        }
        if evaluate_forward(path, ledger)? {
            return Ok(PolicyEnd::solved(Some(r as u32), path));
        }
    }
    Ok(PolicyEnd::dead())
}

/// Evaluates uniformly random unknown edges drawn from the library paths
/// that are still plausible.
pub fn random_policy<O: EdgeOracle, R: Rng>(
    library: &[Path],
    num_edges: usize,
    ledger: &mut EdgeLedger<'_, O>,
    rng: &mut R,
) -> Result<PolicyEnd> {
    loop {
        let plausible: Vec<usize> = (0..library.len())
            .filter(|&r| !library[r].edges.iter().any(|&e| ledger.status(e) == Some(false)))
            .collect();
        if plausible.is_empty() {
            return Ok(PolicyEnd::dead());
        }
        if let Some(&r) = plausible
            .iter()
            .find(|&&r| library[r].edges.iter().all(|&e| ledger.status(e) == Some(true)))
        {
            return Ok(PolicyEnd::solved(Some(r as u32), &library[r].edges));
        }
        let mut unknown = vec![false; num_edges];
        for &r in &plausible {
            for &e in &library[r].edges {
                if ledger.status(e).is_none() {
                    unknown[e as usize] = true;
                }
            }
        }
        let pool: Vec<EdgeId> = (0..num_edges as EdgeId).filter(|&e| unknown[e as usize]).collect();
        let e = pool[rng.gen_range(0..pool.len())];
        ledger.evaluate(e)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::World;
    use crate::scenario::build_grid_graph;
    use crate::search::{k_shortest_paths, shortest_path};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_valid_graph_evaluates_the_shortest_path() {
        let g = build_grid_graph(4, 4);
        let w = World::all_valid(g.num_edges());
        let costs = g.eval_costs();
        let mut ledger = EdgeLedger::new(&w, &costs);
        let end = lazysp_graph(&g, &mut ledger).unwrap();
        let sp = shortest_path(&g).unwrap();
        assert_eq!(end.path.as_ref(), Some(&sp.edges));
        let evaluated: Vec<_> = ledger.records().iter().map(|r| r.edge).collect();
        assert_eq!(evaluated, sp.edges);
    }

    #[test]
    fn blocked_graph_is_infeasible() {
        let g = build_grid_graph(3, 3);
        let w = World(crate::bits::BitSet::zeros(g.num_edges()));
        let costs = g.eval_costs();
        let mut ledger = EdgeLedger::new(&w, &costs);
        let end = lazysp_graph(&g, &mut ledger).unwrap();
        assert_eq!(end.terminal, Terminal::Infeasible);
        // no evaluation happens once the optimistic graph is cut
        let n = ledger.records().len();
        assert!(n > 0 && n <= g.num_edges());
    }

    #[test]
    fn set_all_valid_uses_path_zero() {
        let g = build_grid_graph(4, 4);
        let lib = k_shortest_paths(&g, 5);
        let w = World::all_valid(g.num_edges());
        let costs = g.eval_costs();
        let mut ledger = EdgeLedger::new(&w, &costs);
        let end = lazysp_set(&lib, &g, &mut ledger).unwrap();
        assert_eq!(end.terminal, Terminal::Solved { region: Some(0) });
        let evaluated: Vec<_> = ledger.records().iter().map(|r| r.edge).collect();
        assert_eq!(evaluated, lib[0].edges);
    }

    #[test]
    fn set_moves_on_after_first_edge_fails() {
        let g = build_grid_graph(4, 4);
        let lib = k_shortest_paths(&g, 5);
        let mut w = World::all_valid(g.num_edges());
        w.0.set(lib[0].edges[0] as usize, false);
        let costs = g.eval_costs();
        let mut ledger = EdgeLedger::new(&w, &costs);
        let end = lazysp_set(&lib, &g, &mut ledger).unwrap();
        assert_eq!(ledger.records()[0].edge, lib[0].edges[0]);
        assert!(!ledger.records()[0].valid);
        let r = match end.terminal {
            Terminal::Solved { region: Some(r) } => r as usize,
            other => panic!("{other:?}"),
        };
        assert!(r > 0 && !lib[r].contains(lib[0].edges[0]));
        let bound: f64 = lib.iter().flat_map(|p| &p.edges).collect::<std::collections::BTreeSet<_>>().iter().map(|&&e| costs[e as usize]).sum();
        assert!(ledger.cost() <= bound);
    }

    #[test]
    fn random_is_seeded_and_sound() {
        let g = build_grid_graph(4, 4);
        let lib = k_shortest_paths(&g, 6);
        let mut w = World::all_valid(g.num_edges());
        w.0.set(lib[0].edges[1] as usize, false);
        let costs = g.eval_costs();
        let run = |seed| {
            let mut ledger = EdgeLedger::new(&w, &costs);
            let end = random_policy(&lib, g.num_edges(), &mut ledger, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            (end, ledger.records().to_vec())
        };
        assert_eq!(run(3), run(3));
        let (end, _) = run(3);
        let p = end.path.unwrap();
        assert!(p.iter().all(|&e| w.is_valid(e)));
    }

    #[test]
    fn random_single_edge_path() {
        let g = build_grid_graph(2, 2);
        let diag = (0..g.num_edges() as EdgeId)
            .find(|&e| g.edge(e).touches(g.start) && g.edge(e).touches(g.goal))
            .unwrap();
        let lib = vec![Path::new(vec![diag])];
        let w = World::all_valid(g.num_edges());
        let costs = g.eval_costs();
        let mut ledger = EdgeLedger::new(&w, &costs);
        random_policy(&lib, g.num_edges(), &mut ledger, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(ledger.records().len(), 1);
    }
}
