//! Synthetic 2D grid scenarios: lattice graphs, parametric obstacle worlds
//! and k-shortest-path libraries.
//!
//! Geometry is exact. Lattice vertex `(col, row)` sits at `(4·col, 4·row)` in
//! integer quarter-cell units; discs have integer quarter-unit centres and
//! radii, and a wall on vertex row `w` is the closed rectangle one cell thick
//! centred on that row. An edge is invalid iff its closed segment meets any
//! closed obstacle.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BitMatrix, BitSet};
use crate::dataset::{make_split, Dataset, Provenance};
use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeId, ExplicitGraph, Path, Vertex, World};
use crate::rng;
use crate::search::{k_shortest_paths, k_shortest_paths_within};

const Q: i64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Obstacles {
    /// `discs` closed discs with uniformly random centres.
    Forest { discs: u32, radius: f64 },
    /// One full-width wall with a single gap.
    OneWall(WallParams),
    /// Two walls with independent gaps, one drawn from each row band (the
    /// bands must not overlap, so the rows are distinct).
    TwoWall { lower: WallParams, upper: WallParams },
    /// A wall hanging off the left boundary and one off the right boundary,
    /// on distinct rows, each open at its free end.
    Baffle {
        wall_rows: (u32, u32),
        gap_width: u32,
        max_offset: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallParams {
    /// Inclusive range of vertex rows the wall may occupy.
    pub wall_rows: (u32, u32),
    /// Inclusive range for the first open column of the gap.
    pub gap_cols: (u32, u32),
    /// Number of open vertex columns.
    pub gap_width: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub rows: u32,
    pub cols: u32,
    pub obstacles: Obstacles,
}

pub const KINDS: [&str; 4] = ["forest", "onewall", "twowall", "baffle"];

impl ScenarioSpec {
    /// Default parameters for a scenario kind on a `rows × cols` grid.
    pub fn preset(kind: &str, rows: u32, cols: u32) -> Result<Self> {
        let inner = (2.min(rows.saturating_sub(1)), rows.saturating_sub(3));
        let obstacles = match kind {
            "forest" => Obstacles::Forest {
                discs: ((rows * cols) as f64 / 12.0).round() as u32,
                radius: 0.75,
            },
            "onewall" => Obstacles::OneWall(WallParams {
                wall_rows: inner,
                gap_cols: (0, cols.saturating_sub(1)),
                gap_width: 1,
            }),
            "twowall" => {
                let low = rows.saturating_sub(1) / 3;
                let high = rows.saturating_sub(1) - low;
                let band = |row| WallParams {
                    wall_rows: (row, row),
                    gap_cols: (0, cols.saturating_sub(1)),
                    gap_width: 1,
                };
                Obstacles::TwoWall {
                    lower: band(low),
                    upper: band(high),
                }
            }
            "baffle" => Obstacles::Baffle {
                wall_rows: inner,
                gap_width: 2,
                max_offset: cols.saturating_sub(5) / 2,
            },
            other => return Err(Error::Contract(format!("unknown scenario kind `{other}`"))),
        };
        let spec = ScenarioSpec { rows, cols, obstacles };
        spec.check()?;
        Ok(spec)
    }

    pub fn kind(&self) -> &'static str {
        match self.obstacles {
            Obstacles::Forest { .. } => "forest",
            Obstacles::OneWall(_) => "onewall",
            Obstacles::TwoWall { .. } => "twowall",
            Obstacles::Baffle { .. } => "baffle",
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        if self.rows < 5 || self.cols < 5 {
            return bad(format!("grid {}x{} smaller than 5x5", self.rows, self.cols));
        }
        let row_range = |(lo, hi): (u32, u32), need: u32| {
            if lo > hi || hi >= self.rows || hi - lo + 1 < need {
                Err(Error::Contract(format!(
                    "wall rows {lo}..={hi} invalid for {} rows (need {need} distinct)",
                    self.rows
                )))
            } else {
                Ok(())
            }
        };
        match &self.obstacles {
            Obstacles::Forest { radius, .. } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    return bad(format!("disc radius {radius} invalid"));
                }
            }
            Obstacles::OneWall(w) => self.check_wall(w)?,
            Obstacles::TwoWall { lower, upper } => {
                self.check_wall(lower)?;
                self.check_wall(upper)?;
                if lower.wall_rows.1 >= upper.wall_rows.0 {
                    return bad(format!(
                        "wall bands {:?} and {:?} overlap or are out of order",
                        lower.wall_rows, upper.wall_rows
                    ));
                }
            }
            Obstacles::Baffle {
                wall_rows,
                gap_width,
                max_offset,
            } => {
                row_range(*wall_rows, 2)?;
                if *gap_width < 1 || gap_width + max_offset >= self.cols {
                    return bad(format!("baffle gap {gap_width} + offset {max_offset} too wide"));
                }
            }
        }
        Ok(())
    }

    fn check_wall(&self, w: &WallParams) -> Result<()> {
        let (lo, hi) = w.wall_rows;
        if lo > hi || hi >= self.rows {
            return Err(Error::Contract(format!("wall rows {lo}..={hi} invalid for {} rows", self.rows)));
        }
        if w.gap_width < 1 || w.gap_width > self.cols {
            return Err(Error::Contract(format!("gap width {} invalid", w.gap_width)));
        }
        let (lo, hi) = w.gap_cols;
        if lo > hi || hi + w.gap_width > self.cols {
            return Err(Error::Contract(format!("gap columns {lo}..={hi} do not fit width {}", w.gap_width)));
        }
        Ok(())
    }
}

/// 8-connected `rows × cols` lattice. Vertex `row·cols + col` sits at
/// `(col, row)`; start is the bottom-left vertex and goal the top-right.
/// Edges are numbered by lower vertex id, then right, up, up-right, up-left.
pub fn build_grid_graph(rows: u32, cols: u32) -> ExplicitGraph {
    assert!(rows >= 2 && cols >= 2, "grid must be at least 2x2");
    let id = |r: u32, c: u32| r * cols + c;
    let mut vertices = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            vertices.push(Vertex {
                id: id(r, c),
                pos: [c as f64, r as f64],
            });
        }
    }
    let mut edges = Vec::new();
    let mut push = |a: u32, b: u32, length: f64| {
        edges.push(Edge {
            id: edges.len() as u32,
            endpoints: [a, b],
            eval_cost: 1.0,
            length,
        })
    };
    let diag = std::f64::consts::SQRT_2;
    for r in 0..rows {
        for c in 0..cols {
            let v = id(r, c);
            if c + 1 < cols {
                push(v, id(r, c + 1), 1.0);
            }
            if r + 1 < rows {
                push(v, id(r + 1, c), 1.0);
                if c + 1 < cols {
                    push(v, id(r + 1, c + 1), diag);
                }
                if c > 0 {
                    push(v, id(r + 1, c - 1), diag);
                }
            }
        }
    }
    ExplicitGraph {
        vertices,
        edges,
        start: id(0, 0),
        goal: id(rows - 1, cols - 1),
    }
}

type Pt = (i64, i64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    Disc { cx: i64, cy: i64, r: i64 },
    Rect { x0: i64, x1: i64, y0: i64, y1: i64 },
}

fn orient(a: Pt, b: Pt, c: Pt) -> i64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: Pt, b: Pt, p: Pt) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed segments `ab` and `cd` share at least one point.
fn segments_meet(a: Pt, b: Pt, c: Pt, d: Pt) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1.signum() * o2.signum() < 0 && o3.signum() * o4.signum() < 0 {
        return true;
    }
    (o1 == 0 && on_segment(a, b, c))
        || (o2 == 0 && on_segment(a, b, d))
        || (o3 == 0 && on_segment(c, d, a))
        || (o4 == 0 && on_segment(c, d, b))
}

impl Shape {
    /// Whether the closed segment `pq` meets the closed shape.
    pub fn hits(&self, p: Pt, q: Pt) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => {
                let (dx, dy) = (q.0 - p.0, q.1 - p.1);
                let (wx, wy) = (cx - p.0, cy - p.1);
                let dot = wx * dx + wy * dy;
                let len2 = dx * dx + dy * dy;
                let r2 = r * r;
                if dot <= 0 || len2 == 0 {
                    wx * wx + wy * wy <= r2
                } else if dot >= len2 {
                    let (ux, uy) = (cx - q.0, cy - q.1);
                    ux * ux + uy * uy <= r2
                } else {
                    let cross = (dx * wy - dy * wx) as i128;
                    cross * cross <= r2 as i128 * len2 as i128
                }
            }
            Shape::Rect { x0, x1, y0, y1 } => {
                let inside = |t: Pt| t.0 >= x0 && t.0 <= x1 && t.1 >= y0 && t.1 <= y1;
                if inside(p) || inside(q) {
                    return true;
                }
                if p.0.max(q.0) < x0 || p.0.min(q.0) > x1 || p.1.max(q.1) < y0 || p.1.min(q.1) > y1 {
                    return false;
                }
                let c = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
                (0..4).any(|i| segments_meet(p, q, c[i], c[(i + 1) % 4]))
            }
        }
    }
}

/// Wall on vertex row `row` spanning vertex columns `c0..=c1`.
fn wall(row: u32, c0: u32, c1: u32) -> Shape {
    let (row, c0, c1) = (row as i64, c0 as i64, c1 as i64);
    Shape::Rect {
        x0: Q * c0 - Q / 2,
        x1: Q * c1 + Q / 2,
        y0: Q * row - Q / 2,
        y1: Q * row + Q / 2,
    }
}

fn wall_with_gap(out: &mut Vec<Shape>, cols: u32, row: u32, gap: u32, width: u32) {
    if gap > 0 {
        out.push(wall(row, 0, gap - 1));
    }
    if gap + width < cols {
        out.push(wall(row, gap + width, cols - 1));
    }
}

fn sample_wall<R: Rng + ?Sized>(out: &mut Vec<Shape>, cols: u32, w: &WallParams, rng: &mut R) {
    let row = rng.gen_range(w.wall_rows.0..=w.wall_rows.1);
    let gap = rng.gen_range(w.gap_cols.0..=w.gap_cols.1);
    wall_with_gap(out, cols, row, gap, w.gap_width);
}

fn two_rows<R: Rng + ?Sized>((lo, hi): (u32, u32), rng: &mut R) -> (u32, u32) {
    let a = rng.gen_range(lo..=hi);
    let mut b = rng.gen_range(lo..hi);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Draws one obstacle configuration.
pub fn sample_obstacles<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Vec<Shape> {
    let mut out = Vec::new();
    match &spec.obstacles {
        Obstacles::Forest { discs, radius } => {
            let r = (radius * Q as f64).round() as i64;
            for _ in 0..*discs {
                let cx = rng.gen_range(0..=Q * (spec.cols as i64 - 1));
                let cy = rng.gen_range(0..=Q * (spec.rows as i64 - 1));
                out.push(Shape::Disc { cx, cy, r });
            }
        }
        Obstacles::OneWall(w) => sample_wall(&mut out, spec.cols, w, rng),
        Obstacles::TwoWall { lower, upper } => {
            sample_wall(&mut out, spec.cols, lower, rng);
            sample_wall(&mut out, spec.cols, upper, rng);
        }
        Obstacles::Baffle {
            wall_rows,
            gap_width,
            max_offset,
        } => {
            let (left_row, right_row) = two_rows(*wall_rows, rng);
            let off_l = rng.gen_range(0..=*max_offset);
            let off_r = rng.gen_range(0..=*max_offset);
            out.push(wall(left_row, 0, spec.cols - 1 - gap_width - off_l));
            out.push(wall(right_row, gap_width + off_r, spec.cols - 1));
        }
    }
    out
}

fn lattice(graph: &ExplicitGraph, v: u32) -> Pt {
    let p = graph.vertices[v as usize].pos;
    ((p[0] * Q as f64).round() as i64, (p[1] * Q as f64).round() as i64)
}

/// Edge validity against a fixed set of obstacles.
pub fn world_from_shapes(graph: &ExplicitGraph, shapes: &[Shape]) -> World {
    let mut bits = BitSet::ones(graph.num_edges());
    for e in &graph.edges {
        let (p, q) = (lattice(graph, e.endpoints[0]), lattice(graph, e.endpoints[1]));
        if shapes.iter().any(|s| s.hits(p, q)) {
            bits.set(e.id as usize, false);
        }
    }
    World(bits)
}

pub fn sample_world<R: Rng + ?Sized>(spec: &ScenarioSpec, graph: &ExplicitGraph, rng: &mut R) -> World {
    world_from_shapes(graph, &sample_obstacles(spec, rng))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Library {
    pub paths: Vec<Path>,
    /// Fewer than `m` distinct simple paths existed.
    pub short: bool,
}

/// `k` shortest simple paths on the obstacle-free graph, uniformly
/// subsampled to `m` (the shortest is always kept), sorted by length.
pub fn build_path_library(graph: &ExplicitGraph, k: usize, m: usize, seed: u64) -> Result<Library> {
    if m < 1 || k < m {
        return Err(Error::Contract(format!("need k >= m >= 1, got k={k}, m={m}")));
    }
    let found = k_shortest_paths(graph, k);
    if found.is_empty() {
        return Err(Error::Contract("start and goal are disconnected".into()));
    }
    Ok(subsample_library(graph, found, m, seed))
}

/// Up to `k` distinct paths solved on the given worlds: round `j` adds the
/// `j`-th shortest path of every world (in order) until `k` distinct paths
/// are pooled or `max_rounds` is reached. The pool is then subsampled to `m`
/// like [`build_path_library`].
pub fn build_library_from_worlds(
    graph: &ExplicitGraph,
    worlds: &[World],
    k: usize,
    m: usize,
    max_rounds: usize,
    seed: u64,
) -> Result<Library> {
    if m < 1 || k < m {
        return Err(Error::Contract(format!("need k >= m >= 1, got k={k}, m={m}")));
    }
    let mut per_world: Vec<Vec<Path>> = vec![Vec::new(); worlds.len()];
    let mut pool: Vec<Path> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for round in 1..=max_rounds.max(1) {
        // each round extends every world's list to `round` paths
        per_world = worlds
            .par_iter()
            .zip(per_world.into_par_iter())
            .map(|(w, have)| {
                if have.len() + 1 < round {
                    have
                } else {
                    k_shortest_paths_within(graph, &|e| w.is_valid(e), round)
                }
            })
            .collect();
        let mut grew = false;
        for paths in &per_world {
            if let Some(p) = paths.get(round - 1) {
                grew = true;
                if pool.len() < k && seen.insert(p.edges.clone()) {
                    pool.push(p.clone());
                }
            }
        }
        if pool.len() >= k || !grew {
            break;
        }
    }
    if pool.is_empty() {
        return Err(Error::Contract("no world has a start-goal path".into()));
    }
    Ok(subsample_library(graph, pool, m, seed))
}

/// Keeps the shortest path plus a uniform sample of `m − 1` others, sorted
/// by length then edge sequence.
fn subsample_library(graph: &ExplicitGraph, found: Vec<Path>, m: usize, seed: u64) -> Library {
    let key = |p: &Path| (p.length(graph), p.edges.clone());
    let by_length = |a: &(f64, Vec<EdgeId>), b: &(f64, Vec<EdgeId>)| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1));
    let mut keyed: Vec<(f64, Vec<EdgeId>)> = found.iter().map(key).collect();
    let short = keyed.len() < m;
    if !short {
        let best = (0..keyed.len())
            .min_by(|&a, &b| by_length(&keyed[a], &keyed[b]))
            .expect("nonempty");
        let others: Vec<usize> = (0..keyed.len()).filter(|&i| i != best).collect();
        let mut rng = rng::stream(seed, rng::SUBSAMPLE, 0);
        let mut keep: Vec<usize> = sample_indices(&mut rng, others.len(), m - 1)
            .into_iter()
            .map(|i| others[i])
            .collect();
        keep.push(best);
        keyed = keep.into_iter().map(|i| keyed[i].clone()).collect();
    }
    keyed.sort_by(by_length);
    Library {
        paths: keyed.into_iter().map(|(_, e)| Path::new(e)).collect(),
        short,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibrarySource {
    /// Paths solved on the training worlds.
    #[default]
    Worlds,
    /// Paths on the obstacle-free graph.
    Free,
}

/// Cap on per-world path rounds when pooling from worlds.
pub const MAX_LIBRARY_ROUNDS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub spec: ScenarioSpec,
    pub worlds: usize,
    pub k: usize,
    pub m: usize,
    pub test_fraction: f64,
    #[serde(default)]
    pub library: LibrarySource,
}

/// Samples `N` worlds, builds the library and membership, and splits.
/// World `i` is drawn from its own stream, so output is independent of how
/// the work is scheduled.
pub fn generate_dataset(params: &GenParams, seed: u64) -> Result<Dataset> {
    let spec = &params.spec;
    spec.check()?;
    if params.worlds < 10 {
        return Err(Error::Contract(format!("need at least 10 worlds, got {}", params.worlds)));
    }
    let graph = build_grid_graph(spec.rows, spec.cols);
    let rows: Vec<BitSet> = (0..params.worlds)
        .into_par_iter()
        .map(|i| sample_world(spec, &graph, &mut rng::stream(seed, rng::DATASET, i as u64)).0)
        .collect();
    let worlds = BitMatrix::from_rows(graph.num_edges(), rows);
    let split = make_split(params.worlds, params.test_fraction, seed)?;
    let lib = match params.library {
        LibrarySource::Free => build_path_library(&graph, params.k, params.m, seed)?,
        LibrarySource::Worlds => {
            let train: Vec<World> = split.train.iter().map(|&h| World(worlds.row(h).clone())).collect();
            build_library_from_worlds(&graph, &train, params.k, params.m, MAX_LIBRARY_ROUNDS, seed)?
        }
    };
    let provenance = Provenance {
        scenario: spec.kind().into(),
        seed,
        parameters: serde_json::to_value(params).expect("params serialize"),
        coverage: None,
        library_short: lib.short,
    };
    let mut ds = Dataset::new(graph, worlds, lib.paths, split, provenance)?;
    ds.provenance.coverage = Some(ds.coverage(&ds.split.train));
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::validate_dataset;
    use crate::search::shortest_path;

    /// Neighbour pairs counted by brute force over all vertex pairs.
    fn brute_edge_count(rows: i64, cols: i64) -> usize {
        let pts: Vec<(i64, i64)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
        let mut n = 0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let (dr, dc) = ((pts[i].0 - pts[j].0).abs(), (pts[i].1 - pts[j].1).abs());
                if dr <= 1 && dc <= 1 {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn grid_counts() {
        let g = build_grid_graph(2, 2);
        assert_eq!((g.num_vertices(), g.num_edges()), (4, 6));
        let g = build_grid_graph(3, 3);
        assert_eq!((g.num_vertices(), g.num_edges()), (9, 20));
        for (r, c) in [(2, 2), (3, 3), (4, 7), (11, 11)] {
            let g = build_grid_graph(r, c);
            assert_eq!(g.num_edges(), brute_edge_count(r as i64, c as i64));
            assert!(g.structural_problems().is_empty());
            for e in &g.edges {
                assert!(e.length == 1.0 || e.length == std::f64::consts::SQRT_2);
            }
            let mut pairs: Vec<_> = g
                .edges
                .iter()
                .map(|e| (e.endpoints[0].min(e.endpoints[1]), e.endpoints[0].max(e.endpoints[1])))
                .collect();
            pairs.sort();
            pairs.dedup();
            assert_eq!(pairs.len(), g.num_edges());
        }
        assert_eq!(g_start_goal(5, 4), (0, 19));
    }

    fn g_start_goal(r: u32, c: u32) -> (u32, u32) {
        let g = build_grid_graph(r, c);
        (g.start, g.goal)
    }

    #[test]
    fn disc_touching_counts_as_hit() {
        // segment (0,0)-(4,0), disc centred 2 above its midpoint
        let d = Shape::Disc { cx: 2, cy: 2, r: 2 };
        assert!(d.hits((0, 0), (4, 0)));
        let d = Shape::Disc { cx: 2, cy: 3, r: 2 };
        assert!(!d.hits((0, 0), (4, 0)));
        // beyond the endpoint
        let d = Shape::Disc { cx: 7, cy: 0, r: 2 };
        assert!(!d.hits((0, 0), (4, 0)));
        assert!(Shape::Disc { cx: 6, cy: 0, r: 2 }.hits((0, 0), (4, 0)));
    }

    #[test]
    fn rect_corner_touch_and_pass() {
        let r = Shape::Rect { x0: 0, x1: 2, y0: 0, y1: 2 };
        assert!(r.hits((-2, -2), (0, 0)));
        assert!(r.hits((-1, 1), (3, 1)));
        assert!(!r.hits((3, -1), (3, 5)));
        assert!(!r.hits((-1, 4), (4, 3)));
    }

    #[test]
    fn forest_without_discs_is_all_valid() {
        let spec = ScenarioSpec {
            rows: 6,
            cols: 6,
            obstacles: Obstacles::Forest { discs: 0, radius: 1.0 },
        };
        let g = build_grid_graph(6, 6);
        let w = sample_world(&spec, &g, &mut rng::stream(1, rng::DATASET, 0));
        assert!(w.0.all());
    }

    #[test]
    fn onewall_blocks_crossings_outside_gap() {
        let g = build_grid_graph(9, 9);
        let row = 4;
        let (gap, width) = (3, 2);
        let mut shapes = Vec::new();
        wall_with_gap(&mut shapes, 9, row, gap, width);
        let w = world_from_shapes(&g, &shapes);
        for e in &g.edges {
            let [a, b] = e.endpoints;
            let (pa, pb) = (g.vertices[a as usize].pos, g.vertices[b as usize].pos);
            let (ya, yb) = (pa[1] as u32, pb[1] as u32);
            let crosses = ya.min(yb) < row && ya.max(yb) >= row || ya.min(yb) <= row && ya.max(yb) > row;
            let cols_in_gap = [pa[0], pb[0]].iter().all(|&x| (gap..gap + width).contains(&(x as u32)));
            if crosses && !cols_in_gap {
                assert!(!w.is_valid(e.id), "edge {:?}", e.endpoints);
            }
            if ya.abs_diff(row) >= 2 && yb.abs_diff(row) >= 2 {
                assert!(w.is_valid(e.id));
            }
        }
        // the vertical edges through the gap survive
        let v = |r: u32, c: u32| r * 9 + c;
        let through = g
            .edges
            .iter()
            .find(|e| e.endpoints == [v(row - 1, gap), v(row, gap)])
            .unwrap();
        assert!(w.is_valid(through.id));
    }

    #[test]
    fn twowall_aligned_gaps_leave_a_monotone_path() {
        let g = build_grid_graph(11, 11);
        let mut shapes = Vec::new();
        wall_with_gap(&mut shapes, 11, 3, 5, 1);
        wall_with_gap(&mut shapes, 11, 7, 5, 1);
        let w = world_from_shapes(&g, &shapes);
        // start (0,0) diagonally to (col 2, row 2), up to (2,... ) – explicit:
        // go right along row 0 to column 5, straight up column 5, then right
        // along row 10.
        let v = |r: u32, c: u32| r * 11 + c;
        let find = |a: u32, b: u32| {
            g.edges
                .iter()
                .find(|e| e.endpoints == [a.min(b), a.max(b)])
                .unwrap()
                .id
        };
        let mut edges = Vec::new();
        for c in 0..5 {
            edges.push(find(v(0, c), v(0, c + 1)));
        }
        for r in 0..10 {
            edges.push(find(v(r, 5), v(r + 1, 5)));
        }
        for c in 5..10 {
            edges.push(find(v(10, c), v(10, c + 1)));
        }
        let p = Path::new(edges);
        p.walk(&g).unwrap();
        assert!(w.path_valid(&p));
    }

    #[test]
    fn library_basics() {
        let g = build_grid_graph(2, 2);
        let lib = build_path_library(&g, 1, 1, 0).unwrap();
        assert_eq!(lib.paths, vec![shortest_path(&g).unwrap()]);
        let lib = build_path_library(&g, 3, 3, 0).unwrap();
        assert_eq!(lib.paths, k_shortest_paths(&g, 3));
        let lib = build_path_library(&g, 50, 50, 0).unwrap();
        assert!(lib.short);
        assert!(build_path_library(&g, 2, 3, 0).is_err());
    }

    /// Bellman-Ford shortest start-goal length.
    fn bellman_ford(g: &ExplicitGraph) -> f64 {
        let mut d = vec![f64::INFINITY; g.num_vertices()];
        d[g.start as usize] = 0.0;
        for _ in 0..g.num_vertices() {
            for e in &g.edges {
                let [a, b] = e.endpoints;
                let (a, b) = (a as usize, b as usize);
                d[b] = d[b].min(d[a] + e.length);
                d[a] = d[a].min(d[b] + e.length);
            }
        }
        d[g.goal as usize]
    }

    #[test]
    fn library_sorted_distinct_and_shortest_first() {
        let g = build_grid_graph(7, 7);
        let lib = build_path_library(&g, 120, 30, 9).unwrap();
        assert_eq!(lib.paths.len(), 30);
        let lens: Vec<f64> = lib.paths.iter().map(|p| p.length(&g)).collect();
        assert!(lens.windows(2).all(|w| w[0] <= w[1]));
        assert!((lens[0] - bellman_ford(&g)).abs() < 1e-9);
        let set: std::collections::HashSet<_> = lib.paths.iter().collect();
        assert_eq!(set.len(), 30);
        for p in &lib.paths {
            p.walk(&g).unwrap();
        }
        assert_eq!(build_path_library(&g, 120, 30, 9).unwrap(), lib);
    }

    #[test]
    fn generated_datasets_validate_and_are_deterministic() {
        for kind in KINDS {
            let params = GenParams {
                spec: ScenarioSpec::preset(kind, 7, 7).unwrap(),
                worlds: 40,
                k: 30,
                m: 10,
                test_fraction: 0.1,
                library: LibrarySource::Worlds,
            };
            let a = generate_dataset(&params, 3).unwrap();
            assert!(validate_dataset(&a).is_empty(), "{kind}");
            assert_eq!(a.split.test.len(), 4);
            let b = generate_dataset(&params, 3).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes());
        }
        let params = GenParams {
            spec: ScenarioSpec {
                rows: 6,
                cols: 6,
                obstacles: Obstacles::Forest { discs: 0, radius: 1.0 },
            },
            worlds: 10,
            k: 5,
            m: 5,
            test_fraction: 0.2,
            library: LibrarySource::Worlds,
        };
        assert_eq!(generate_dataset(&params, 0).unwrap().provenance.coverage, Some(1.0));
    }

    #[test]
    fn world_library_paths_come_from_worlds() {
        let spec = ScenarioSpec::preset("twowall", 9, 9).unwrap();
        let g = build_grid_graph(9, 9);
        let worlds: Vec<World> = (0..60).map(|i| sample_world(&spec, &g, &mut rng::stream(4, rng::DATASET, i))).collect();
        let lib = build_library_from_worlds(&g, &worlds, 40, 12, MAX_LIBRARY_ROUNDS, 4).unwrap();
        assert!(!lib.short);
        assert_eq!(lib.paths.len(), 12);
        let set: std::collections::HashSet<_> = lib.paths.iter().collect();
        assert_eq!(set.len(), 12);
        for p in &lib.paths {
            p.walk(&g).unwrap();
            assert!(worlds.iter().any(|w| w.path_valid(p)));
        }
        let lens: Vec<f64> = lib.paths.iter().map(|p| p.length(&g)).collect();
        assert!(lens.windows(2).all(|w| w[0] <= w[1]));
        let best = worlds
            .iter()
            .filter_map(|w| crate::search::k_shortest_paths_within(&g, &|e| w.is_valid(e), 1).pop())
            .map(|p| p.length(&g))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(lens[0], best);
    }

    #[test]
    fn scenario_spec_checks() {
        assert!(ScenarioSpec::preset("maze", 11, 11).is_err());
        assert!(ScenarioSpec::preset("twowall", 4, 11).is_err());
        let mut s = ScenarioSpec::preset("onewall", 11, 11).unwrap();
        if let Obstacles::OneWall(w) = &mut s.obstacles {
            w.gap_width = 0;
        }
        assert!(s.check().is_err());
        let mut s = ScenarioSpec::preset("twowall", 11, 11).unwrap();
        if let Obstacles::TwoWall { lower, upper } = &mut s.obstacles {
            assert_eq!((lower.wall_rows, upper.wall_rows), ((3, 3), (7, 7)));
            upper.wall_rows = (3, 5);
        }
        assert!(s.check().is_err());
    }
}
