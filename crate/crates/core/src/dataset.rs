//! World databases: outcome matrix, path library, membership, split, and the
//! on-disk container.
//!
//! The container is three newline-terminated lines:
//!
//! 1. a compact JSON header ([`Header`]): schema version, dimensions, the
//!    explicit graph, the path library, the train/test split and generator
//!    provenance;
//! 2. standard base64 of the outcome matrix, rows concatenated, each row
//!    packed to `ceil(|E| / 8)` bytes with column 0 in the least-significant
//!    bit of the first byte;
//! 3. the membership matrix, packed the same way with `ceil(m / 8)` bytes
//!    per row.

use std::fmt;
use std::io::Write;
use std::path::Path as FsPath;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::{BitMatrix, BitSet};
use crate::error::{Error, Result};
use crate::graph::{ExplicitGraph, Path, World};
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;
pub const FORMAT_TAG: &str = "lazydrd-dataset";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Where a dataset came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: String,
    pub seed: u64,
    #[serde(default)]
    pub parameters: serde_json::Value,
    /// Fraction of training worlds with at least one feasible library path.
    #[serde(default)]
    pub coverage: Option<f64>,
    /// Set when fewer distinct paths existed than were requested.
    #[serde(default)]
    pub library_short: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: ExplicitGraph,
    /// Outcome matrix, one row per world, one column per edge.
    pub worlds: BitMatrix,
    pub paths: Vec<Path>,
    /// `membership[h][r]` is set iff path `r` is valid in world `h`.
    pub membership: BitMatrix,
    pub split: Split,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Graph,
    Dimensions,
    PathStructure,
    Membership,
    Split,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

impl Violation {
    fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            detail: detail.into(),
        }
    }
}

/// `M[h][r] = AND over e in path r of Θ[h][e]`.
pub fn compute_membership(worlds: &BitMatrix, paths: &[Path]) -> Result<BitMatrix> {
    let ne = worlds.n_cols();
    let mut sets = Vec::with_capacity(paths.len());
    for (r, p) in paths.iter().enumerate() {
        if let Some(&e) = p.edges.iter().find(|&&e| e as usize >= ne) {
            return Err(Error::Structural(format!(
                "path {r} uses edge {e}, but worlds have {ne} edges"
            )));
        }
        sets.push(p.edge_set(ne));
    }
    let rows = worlds
        .rows()
        .iter()
        .map(|w| {
            let mut row = BitSet::zeros(paths.len());
            for (r, s) in sets.iter().enumerate() {
                if s.is_subset(w) {
                    row.set(r, true);
                }
            }
            row
        })
        .collect();
    Ok(BitMatrix::from_rows(paths.len(), rows))
}

impl Dataset {
    /// Builds a dataset, computing membership from the worlds and paths.
    pub fn new(
        graph: ExplicitGraph,
        worlds: BitMatrix,
        paths: Vec<Path>,
        split: Split,
        provenance: Provenance,
    ) -> Result<Self> {
        let membership = compute_membership(&worlds, &paths)?;
        Ok(Dataset {
            graph,
            worlds,
            paths,
            membership,
            split,
            provenance,
        })
    }

    pub fn num_worlds(&self) -> usize {
        self.worlds.n_rows()
    }

    pub fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn world(&self, h: usize) -> World {
        World(self.worlds.row(h).clone())
    }

    /// Whether world `h` has at least one feasible library path.
    pub fn has_feasible_path(&self, h: usize) -> bool {
        !self.membership.row(h).none()
    }

    /// Fraction of the given worlds with at least one feasible library path.
    pub fn coverage(&self, worlds: &[usize]) -> f64 {
        if worlds.is_empty() {
            return 0.0;
        }
        let n = worlds.iter().filter(|&&h| self.has_feasible_path(h)).count();
        n as f64 / worlds.len() as f64
    }

    /// Serializes into the container format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT_TAG.into(),
            schema_version: SCHEMA_VERSION,
            num_worlds: self.num_worlds(),
            num_edges: self.num_edges(),
            num_paths: self.num_paths(),
            bit_order: "lsb0".into(),
            graph: self.graph.clone(),
            paths: self.paths.clone(),
            split: self.split.clone(),
            provenance: self.provenance.clone(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.extend(B64.encode(self.worlds.to_packed()).as_bytes());
        out.push(b'\n');
        out.extend(B64.encode(self.membership.to_packed()).as_bytes());
        out.push(b'\n');
        out
    }

    /// Parses the container format and validates the result.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        let mut lines = text.split('\n');
        let head = lines.next().unwrap_or_default();
        let probe: serde_json::Value = serde_json::from_str(head)?;
        if probe.get("format").and_then(|f| f.as_str()) != Some(FORMAT_TAG) {
            return Err(Error::Parse("missing dataset format tag".into()));
        }
        let version = probe
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Parse("missing schema_version".into()))?;
        if version != SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                found: version as u32,
                expected: SCHEMA_VERSION,
            });
        }
        let header: Header = serde_json::from_value(probe)?;
        let theta_line = lines
            .next()
            .ok_or_else(|| Error::Parse("missing outcome payload".into()))?;
        let member_line = lines
            .next()
            .ok_or_else(|| Error::Parse("missing membership payload".into()))?;
        if lines.next() != Some("") || lines.next().is_some() {
            return Err(Error::Parse("unexpected trailing content".into()));
        }
        let decode = |s: &str, what: &str| {
            B64.decode(s)
                .map_err(|e| Error::Parse(format!("{what} payload: {e}")))
        };
        let worlds = BitMatrix::from_packed(header.num_worlds, header.num_edges, &decode(theta_line, "outcome")?)
            .ok_or_else(|| Error::Parse("outcome payload has wrong size".into()))?;
        let membership = BitMatrix::from_packed(header.num_worlds, header.num_paths, &decode(member_line, "membership")?)
            .ok_or_else(|| Error::Parse("membership payload has wrong size".into()))?;
        if header.graph.num_edges() != header.num_edges || header.paths.len() != header.num_paths {
            return Err(Error::Parse("header dimensions disagree with contents".into()));
        }
        let ds = Dataset {
            graph: header.graph,
            worlds,
            paths: header.paths,
            membership,
            split: header.split,
            provenance: header.provenance,
        };
        let v = validate_dataset(&ds);
        if v.is_empty() {
            Ok(ds)
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Hex SHA-256 of the serialized container.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    schema_version: u32,
    num_worlds: usize,
    num_edges: usize,
    num_paths: usize,
    bit_order: String,
    graph: ExplicitGraph,
    paths: Vec<Path>,
    split: Split,
    provenance: Provenance,
}

/// All type-invariant violations; empty iff the dataset is well formed.
pub fn validate_dataset(ds: &Dataset) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out: Vec<Violation> = ds
        .graph
        .structural_problems()
        .into_iter()
        .map(|s| Violation::new(Graph, s))
        .collect();
    let n = ds.num_worlds();
    let ne = ds.num_edges();
    if ds.worlds.n_cols() != ne {
        out.push(Violation::new(
            Dimensions,
            format!("worlds have {} columns, graph has {ne} edges", ds.worlds.n_cols()),
        ));
    }
    if ds.membership.n_rows() != n || ds.membership.n_cols() != ds.paths.len() {
        out.push(Violation::new(
            Dimensions,
            format!(
                "membership is {}x{}, expected {n}x{}",
                ds.membership.n_rows(),
                ds.membership.n_cols(),
                ds.paths.len()
            ),
        ));
        return out;
    }
    let mut paths_ok = true;
    for (r, p) in ds.paths.iter().enumerate() {
        if let Err(e) = p.walk(&ds.graph) {
            paths_ok = false;
            out.push(Violation::new(PathStructure, format!("path {r}: {e}")));
        }
    }
    if paths_ok && ds.worlds.n_cols() == ne {
        let expect = compute_membership(&ds.worlds, &ds.paths).expect("paths checked");
        for h in 0..n {
            for r in 0..ds.paths.len() {
                if expect.get(h, r) != ds.membership.get(h, r) {
                    out.push(Violation::new(
                        Membership,
                        format!("world {h}, path {r}: stored {}", ds.membership.get(h, r) as u8),
                    ));
                }
            }
        }
    }
    let mut seen = vec![0u8; n];
    for &i in ds.split.train.iter().chain(&ds.split.test) {
        if i >= n {
            out.push(Violation::new(Split, format!("index {i} out of range")));
        } else {
            seen[i] += 1;
        }
    }
    let dup = seen.iter().filter(|&&c| c > 1).count();
    let missing = seen.iter().filter(|&&c| c == 0).count();
    if dup > 0 {
        out.push(Violation::new(Split, format!("{dup} world(s) listed twice")));
    }
    if missing > 0 {
        out.push(Violation::new(Split, format!("{missing} world(s) in neither split")));
    }
    out
}

/// Deterministic train/test partition with `|test| = round(N * test_fraction)`,
/// clamped so that both sides are nonempty. Both index lists are sorted.
pub fn split_dataset(mut ds: Dataset, test_fraction: f64, seed: u64) -> Result<Dataset> {
    ds.split = make_split(ds.num_worlds(), test_fraction, seed)?;
    Ok(ds)
}

pub fn make_split(n: usize, test_fraction: f64, seed: u64) -> Result<Split> {
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 worlds, have {n}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, rng::SPLIT, 0));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, test })
}

pub fn save_dataset(ds: &Dataset, path: &FsPath) -> Result<()> {
    write_atomic(path, &ds.to_bytes())
}

pub fn load_dataset(path: &FsPath) -> Result<Dataset> {
    Dataset::from_bytes(&std::fs::read(path)?)
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &FsPath, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => FsPath::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Vertex};

    /// Path graph 0-1-2 plus a shortcut 0-2; three worlds.
    fn tiny() -> Dataset {
        let v = |id, x| Vertex { id, pos: [x, 0.0] };
        let e = |id, a, b| Edge {
            id,
            endpoints: [a, b],
            eval_cost: 1.0,
            length: 1.0,
        };
        let graph = ExplicitGraph {
            vertices: vec![v(0, 0.0), v(1, 1.0), v(2, 2.0)],
            edges: vec![e(0, 0, 1), e(1, 1, 2), e(2, 0, 2)],
            start: 0,
            goal: 2,
        };
        let worlds = BitMatrix::from_rows(
            3,
            vec![
                BitSet::from_bools(&[true, false, true]),
                BitSet::from_bools(&[true, true, false]),
                BitSet::from_bools(&[false, false, false]),
            ],
        );
        let paths = vec![Path::new(vec![2]), Path::new(vec![0, 1])];
        Dataset::new(
            graph,
            worlds,
            paths,
            Split {
                train: vec![0, 1],
                test: vec![2],
            },
            Provenance {
                scenario: "tiny".into(),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn membership_is_and_over_edges() {
        let w = BitMatrix::from_rows(3, vec![BitSet::from_bools(&[true, false, true])]);
        let m = compute_membership(&w, &[Path::new(vec![0, 2]), Path::new(vec![0, 1])]).unwrap();
        assert!(m.get(0, 0));
        assert!(!m.get(0, 1));

        let all = BitMatrix::from_rows(3, vec![BitSet::ones(3), BitSet::zeros(3)]);
        let m = compute_membership(&all, &[Path::new(vec![1])]).unwrap();
        assert!(m.get(0, 0));
        assert!(!m.get(1, 0));
    }

    #[test]
    fn membership_rejects_out_of_range_edge() {
        let w = BitMatrix::zeros(1, 3);
        assert!(matches!(
            compute_membership(&w, &[Path::new(vec![3])]),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn validate_flags_flipped_membership_and_broken_path() {
        let ds = tiny();
        assert!(validate_dataset(&ds).is_empty());

        let mut bad = ds.clone();
        let cur = bad.membership.get(1, 1);
        bad.membership.set(1, 1, !cur);
        let v = validate_dataset(&bad);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Membership);

        let mut bad = ds;
        bad.paths[1] = Path::new(vec![1, 0]);
        let v = validate_dataset(&bad);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::PathStructure);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = make_split(1000, 0.1, 5).unwrap();
        assert_eq!(s.test.len(), 100);
        assert_eq!(s.train.len(), 900);
        assert_eq!(make_split(10, 0.5, 1).unwrap().test.len(), 5);
        assert_eq!(make_split(1000, 0.1, 5).unwrap(), s);
        assert_ne!(make_split(1000, 0.1, 6).unwrap(), s);
        assert!(matches!(make_split(1, 0.5, 0), Err(Error::Split(_))));
        assert!(matches!(make_split(10, 1.0, 0), Err(Error::Split(_))));
    }

    #[test]
    fn container_roundtrip_and_errors() {
        let ds = tiny();
        let bytes = ds.to_bytes();
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), ds);

        let truncated = &bytes[..bytes.len() - 3];
        assert!(Dataset::from_bytes(truncated).is_err());
        let cut_header = &bytes[..20];
        assert!(matches!(Dataset::from_bytes(cut_header), Err(Error::Parse(_))));

        let text = String::from_utf8(bytes).unwrap();
        let bumped = text.replacen("\"schema_version\":1", "\"schema_version\":9", 1);
        assert!(matches!(
            Dataset::from_bytes(bumped.as_bytes()),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        let ds = tiny();
        save_dataset(&ds, &p).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
