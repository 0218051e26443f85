//! Graph files, run configuration, and deterministic artifact output.
//!
//! Graph files are UTF-8 JSON:
//!
//! ```json
//! {
//!   "schema": "v1",
//!   "vertices": 3,
//!   "edges": [{"u": 0, "v": 1, "length": 1.0, "potential": [0.0, 0.25, 0.0]}],
//!   "conditions": [{"vertex": 0, "kind": "delta", "alpha": 0.5}],
//!   "beta": [["e0", "e2r"], ...]
//! }
//! ```
//!
//! A missing `"potential"` means W identically zero. Conditions are either a
//! named `"kind"` (`kirchhoff`, `dirichlet`, `neumann`, `delta` with
//! `"alpha"`) or an explicit `"matrix"`: a row-major list of `[re, im]` pairs
//! of length d^2 that must be unitary. `"beta"` is an optional per-vertex
//! order of the outgoing bonds; bond `k` of edge `e` is written `"e<e>"` in
//! canonical orientation and `"e<e>r"` reversed.
//!
//! Tabular output is CSV with every float printed at 17 significant digits,
//! so identical configs produce byte-identical files. Every artifact embeds
//! the schema version, the config hash, and the seed.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditions::{unitarity_defect, ConditionKind, VertexCondition};
use crate::graph::{BondId, CombinatorialGraph, EdgeData, QuantumGraph};
use crate::{Error, Result};

pub const SCHEMA: &str = "v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    vertices: usize,
    edges: Vec<EdgeEntry>,
    conditions: Vec<ConditionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<Vec<String>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    u: usize,
    v: usize,
    length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    potential: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionEntry {
    vertex: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<[f64; 2]>>,
}

fn bond_name(b: BondId) -> String {
    if b.rev {
        format!("e{}r", b.edge)
    } else {
        format!("e{}", b.edge)
    }
}

fn parse_bond(s: &str, edge_count: usize) -> Result<BondId> {
    let bad = || Error::Format(format!("bad bond name '{s}'"));
    let body = s.strip_prefix('e').or_else(|| s.strip_prefix('b')).ok_or_else(bad)?;
    let (digits, rev) = match body.strip_suffix('r') {
        Some(d) => (d, true),
        None => (body, false),
    };
    let edge: usize = digits.parse().map_err(|_| bad())?;
    if edge >= edge_count {
        return Err(Error::Format(format!("bond '{s}' references edge {edge} of {edge_count}")));
    }
    Ok(BondId { edge, rev })
}

fn condition_from_entry(c: &ConditionEntry, degree: usize) -> Result<VertexCondition> {
    let v = c.vertex;
    match (&c.kind, &c.matrix) {
        (Some(kind), None) => {
            let kind = match kind.as_str() {
                "kirchhoff" => ConditionKind::Kirchhoff,
                "dirichlet" => ConditionKind::Dirichlet,
                "neumann" => ConditionKind::Neumann,
                "delta" => ConditionKind::Delta {
                    alpha: c.alpha.ok_or_else(|| {
                        Error::Format(format!("vertex {v}: delta condition needs \"alpha\""))
                    })?,
                },
                other => {
                    return Err(Error::Format(format!("vertex {v}: unknown kind '{other}'")))
                }
            };
            if c.alpha.is_some() && !matches!(kind, ConditionKind::Delta { .. }) {
                return Err(Error::Format(format!("vertex {v}: \"alpha\" only applies to delta")));
            }
            Ok(VertexCondition::named(kind, degree))
        }
        (None, Some(entries)) => {
            if entries.len() != degree * degree {
                return Err(Error::Format(format!(
                    "vertex {v}: matrix has {} entries, degree {degree} needs {}",
                    entries.len(),
                    degree * degree
                )));
            }
            let u = DMatrix::from_fn(degree, degree, |i, j| {
                let [re, im] = entries[i * degree + j];
                C64::new(re, im)
            });
            let defect = unitarity_defect(&u);
            if defect > 1e-8 {
                return Err(Error::Format(format!(
                    "vertex {v}: matrix is not unitary (defect {defect:.2e})"
                )));
            }
            Ok(VertexCondition::custom(u))
        }
        _ => Err(Error::Format(format!(
            "vertex {v}: give exactly one of \"kind\" or \"matrix\""
        ))),
    }
}

fn graph_from_file(file: GraphFile) -> Result<QuantumGraph> {
    if let Some(s) = &file.schema {
        if s != SCHEMA {
            return Err(Error::Format(format!("unsupported schema '{s}', expected '{SCHEMA}'")));
        }
    }
    let edge_pairs: Vec<(usize, usize)> = file.edges.iter().map(|e| (e.u, e.v)).collect();
    let graph = CombinatorialGraph::new(file.vertices, edge_pairs)?;
    let mut data = Vec::with_capacity(file.edges.len());
    for (i, e) in file.edges.iter().enumerate() {
        if !(e.length > 0.0) {
            return Err(Error::Format(format!(
                "edge {i} ({} - {}): length {} must be positive",
                e.u, e.v, e.length
            )));
        }
        let d = match &e.potential {
            None => EdgeData::free(e.length),
            Some(w) if w.is_empty() => EdgeData::free(e.length),
            Some(w) if w.len() == 1 => EdgeData::new(e.length, vec![w[0], w[0]])?,
            Some(w) => EdgeData::new(e.length, w.clone())?,
        };
        data.push(d);
    }
    let mut conditions: Vec<Option<VertexCondition>> = vec![None; file.vertices];
    for c in &file.conditions {
        if c.vertex >= file.vertices {
            return Err(Error::Format(format!(
                "condition references vertex {} of {}",
                c.vertex, file.vertices
            )));
        }
        if conditions[c.vertex].is_some() {
            return Err(Error::Format(format!("vertex {} has two conditions", c.vertex)));
        }
        conditions[c.vertex] = Some(condition_from_entry(c, graph.degree(c.vertex))?);
    }
    let conditions = conditions
        .into_iter()
        .enumerate()
        .map(|(v, c)| c.ok_or_else(|| Error::Format(format!("vertex {v} has no condition"))))
        .collect::<Result<Vec<_>>>()?;
    let beta = match &file.beta {
        None => None,
        Some(rows) => {
            if rows.len() != file.vertices {
                return Err(Error::Format("beta must list every vertex".into()));
            }
            let mut orders = Vec::with_capacity(rows.len());
            for row in rows {
                orders.push(
                    row.iter()
                        .map(|s| parse_bond(s, file.edges.len()))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            Some(orders)
        }
    };
    QuantumGraph::new(graph, data, conditions, beta)
}

fn graph_to_file(q: &QuantumGraph) -> GraphFile {
    let g = q.graph();
    let edges = (0..g.edge_count())
        .map(|e| {
            let (u, v) = g.edge(e);
            let d = q.edge_data(e);
            let potential = if d.is_free() {
                None
            } else {
                // the file format carries uniform samples; resample kinked
                // grids at their own resolution
                let n = d.potential.len();
                let uniform = d
                    .breaks()
                    .iter()
                    .enumerate()
                    .all(|(i, &b)| (b - d.length * i as f64 / (n - 1) as f64).abs() < 1e-12);
                if uniform {
                    Some(d.potential.clone())
                } else {
                    Some(
                        (0..n)
                            .map(|i| {
                                d.potential_canonical(d.length * i as f64 / (n - 1) as f64)
                            })
                            .collect(),
                    )
                }
            };
            EdgeEntry { u, v, length: d.length, potential }
        })
        .collect();
    let conditions = (0..g.vertex_count())
        .map(|v| {
            let cond = q.condition(v);
            match cond.kind() {
                ConditionKind::Kirchhoff => ConditionEntry {
                    vertex: v,
                    kind: Some("kirchhoff".into()),
                    alpha: None,
                    matrix: None,
                },
                ConditionKind::Dirichlet => ConditionEntry {
                    vertex: v,
                    kind: Some("dirichlet".into()),
                    alpha: None,
                    matrix: None,
                },
                ConditionKind::Neumann => ConditionEntry {
                    vertex: v,
                    kind: Some("neumann".into()),
                    alpha: None,
                    matrix: None,
                },
                ConditionKind::Delta { alpha } => ConditionEntry {
                    vertex: v,
                    kind: Some("delta".into()),
                    alpha: Some(*alpha),
                    matrix: None,
                },
                ConditionKind::Custom => {
                    let u = cond.unitary();
                    let mut entries = Vec::with_capacity(u.len());
                    for i in 0..u.nrows() {
                        for j in 0..u.ncols() {
                            entries.push([u[(i, j)].re, u[(i, j)].im]);
                        }
                    }
                    ConditionEntry { vertex: v, kind: None, alpha: None, matrix: Some(entries) }
                }
            }
        })
        .collect();
    // beta only matters when some condition is sensitive to the bond order
    let needs_beta = (0..g.vertex_count()).any(|v| !q.condition(v).kind().permutation_invariant());
    let beta = needs_beta.then(|| {
        (0..g.vertex_count())
            .map(|v| q.beta(v).iter().map(|&b| bond_name(b)).collect())
            .collect()
    });
    GraphFile { schema: Some(SCHEMA.into()), vertices: g.vertex_count(), edges, conditions, beta }
}

/// Parses a graph from a JSON string; errors carry line/field diagnostics.
pub fn parse_graph_str(s: &str) -> Result<QuantumGraph> {
    let file: GraphFile = serde_json::from_str(s)
        .map_err(|e| Error::Format(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    graph_from_file(file)
}

pub fn parse_graph_file(path: impl AsRef<Path>) -> Result<QuantumGraph> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path)?;
    parse_graph_str(&s).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn graph_to_json(q: &QuantumGraph) -> String {
    serde_json::to_string_pretty(&graph_to_file(q)).expect("graph serialization cannot fail")
}

pub fn write_graph_file(q: &QuantumGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, graph_to_json(q) + "\n")?;
    Ok(())
}

/// Everything a run depends on, in one serializable record. The config hash
/// embedded in artifacts is derived from this, so two runs with equal configs
/// produce byte-identical output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: String,
    pub graph: Option<String>,
    pub graph_b: Option<String>,
    pub root: Option<String>,
    pub root_a: Option<String>,
    pub root_b: Option<String>,
    pub z: Option<Vec<String>>,
    pub lmax: Option<f64>,
    pub kmax: Option<usize>,
    pub strict: bool,
    pub family: Option<String>,
    pub sizes: Option<Vec<usize>>,
    pub chi: Option<String>,
    pub limit: Option<String>,
    pub length: Option<String>,
    pub conditions: Option<String>,
    pub eps: Option<Vec<f64>>,
    pub bins: Option<usize>,
    pub n: Option<usize>,
    pub seed: u64,
    pub out: Option<String>,
}

impl RunConfig {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization cannot fail");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in &digest[..8] {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

/// Fixed 17-significant-digit float formatting; the determinism contract for
/// CSV artifacts.
pub fn fmt_f64(x: f64) -> String {
    // canonical zero; an empty float sum yields -0.0
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

/// Parses `"re:im"` into a complex number.
pub fn parse_complex(s: &str) -> Result<C64> {
    let bad = || Error::Format(format!("bad complex value '{s}', expected re:im"));
    let (re, im) = s.split_once(':').ok_or_else(bad)?;
    Ok(C64::new(re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?))
}

/// Parses a root point `"e0:0.5"` (or `"b0:0.5"`, `"e0r:0.25"`) into a bond
/// and an offset along it.
pub fn parse_root(s: &str, q: &QuantumGraph) -> Result<(BondId, f64)> {
    let bad = || Error::Format(format!("bad root '{s}', expected bond:offset like e0:0.5"));
    let (bond, offset) = s.split_once(':').ok_or_else(bad)?;
    let bond = parse_bond(bond, q.graph().edge_count())?;
    let offset: f64 = offset.trim().parse().map_err(|_| bad())?;
    let len = q.edge_data(bond.edge).length;
    if !(offset > 0.0 && offset < len) {
        return Err(Error::Format(format!(
            "root offset {offset} must lie strictly inside the edge (length {len})"
        )));
    }
    Ok((bond, offset))
}

/// Writes a CSV artifact: comment lines carrying schema, config hash and
/// seed, then the header, then the rows.
pub fn write_csv(
    path: impl AsRef<Path>,
    config: &RunConfig,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    write_csv_to(std::fs::File::create(path)?, config, header, rows)
}

pub fn write_csv_to(
    mut out: impl std::io::Write,
    config: &RunConfig,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    writeln!(out, "# schema {SCHEMA}")?;
    writeln!(out, "# config {} seed {}", config.hash(), config.seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Shared envelope for JSON artifacts.
pub fn json_envelope(config: &RunConfig) -> serde_json::Map<String, serde_json::Value> {
    let mut map = serde_json::Map::new();
    map.insert("schema".into(), SCHEMA.into());
    map.insert("config".into(), config.hash().into());
    map.insert("seed".into(), config.seed.into());
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = r#"{
        "schema": "v1",
        "vertices": 3,
        "edges": [
            {"u": 0, "v": 1, "length": 1.0},
            {"u": 1, "v": 2, "length": 1.0},
            {"u": 2, "v": 0, "length": 1.0}
        ],
        "conditions": [
            {"vertex": 0, "kind": "kirchhoff"},
            {"vertex": 1, "kind": "kirchhoff"},
            {"vertex": 2, "kind": "kirchhoff"}
        ]
    }"#;

    #[test]
    fn triangle_fixture_parses() {
        let q = parse_graph_str(TRIANGLE).unwrap();
        assert_eq!(q.graph().vertex_count(), 3);
        assert_eq!(q.graph().edge_count(), 3);
        for v in 0..3 {
            assert_eq!(*q.condition(v).kind(), ConditionKind::Kirchhoff);
        }
        // omitted potential means W identically zero
        for e in 0..3 {
            assert!(q.edge_data(e).is_free());
        }
    }

    #[test]
    fn negative_length_names_the_edge() {
        let s = TRIANGLE.replace(r#""u": 1, "v": 2, "length": 1.0"#, r#""u": 1, "v": 2, "length": -1.0"#);
        let err = parse_graph_str(&s).unwrap_err().to_string();
        assert!(err.contains("edge 1"), "{err}");
        assert!(err.contains("-1"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let s = TRIANGLE.replace(r#""schema": "v1","#, r#""schema": "v1", "extra": 1,"#);
        assert!(parse_graph_str(&s).is_err());
        let s = TRIANGLE.replace(r#""length": 1.0}"#, r#""length": 1.0, "wat": 2}"#);
        assert!(parse_graph_str(&s).is_err());
    }

    #[test]
    fn condition_validation() {
        let s = TRIANGLE.replace(r#"{"vertex": 2, "kind": "kirchhoff"}"#, r#"{"vertex": 2, "kind": "delta"}"#);
        assert!(parse_graph_str(&s).unwrap_err().to_string().contains("alpha"));
        let s = TRIANGLE.replace(r#"{"vertex": 2, "kind": "kirchhoff"}"#, r#"{"vertex": 0, "kind": "kirchhoff"}"#);
        assert!(parse_graph_str(&s).unwrap_err().to_string().contains("two conditions"));
        // explicit unitary: bond swap at a degree-2 vertex
        let s = TRIANGLE.replace(
            r#"{"vertex": 2, "kind": "kirchhoff"}"#,
            r#"{"vertex": 2, "matrix": [[0,0],[1,0],[1,0],[0,0]]}"#,
        );
        let q = parse_graph_str(&s).unwrap();
        assert_eq!(*q.condition(2).kind(), ConditionKind::Custom);
        let s = TRIANGLE.replace(
            r#"{"vertex": 2, "kind": "kirchhoff"}"#,
            r#"{"vertex": 2, "matrix": [[0,0],[2,0],[2,0],[0,0]]}"#,
        );
        assert!(parse_graph_str(&s).unwrap_err().to_string().contains("unitary"));
    }

    #[test]
    fn graph_round_trip() {
        let s = TRIANGLE.replace(
            r#"{"u": 0, "v": 1, "length": 1.0}"#,
            r#"{"u": 0, "v": 1, "length": 1.5, "potential": [0.0, 1.0, 0.0]}"#,
        );
        let s = s.replace(
            r#"{"vertex": 1, "kind": "kirchhoff"}"#,
            r#"{"vertex": 1, "kind": "delta", "alpha": 0.25}"#,
        );
        let q = parse_graph_str(&s).unwrap();
        let q2 = parse_graph_str(&graph_to_json(&q)).unwrap();
        assert_eq!(q2.graph().edges(), q.graph().edges());
        for e in 0..3 {
            assert_eq!(q2.edge_data(e), q.edge_data(e));
        }
        for v in 0..3 {
            assert_eq!(q2.condition(v).kind(), q.condition(v).kind());
        }
    }

    #[test]
    fn beta_round_trip_for_custom_conditions() {
        let s = TRIANGLE.replace(
            r#"{"vertex": 2, "kind": "kirchhoff"}"#,
            r#"{"vertex": 2, "matrix": [[0,0],[1,0],[1,0],[0,0]]}"#,
        );
        let q = parse_graph_str(&s).unwrap();
        let json = graph_to_json(&q);
        assert!(json.contains("\"beta\""));
        let q2 = parse_graph_str(&json).unwrap();
        for v in 0..3 {
            assert_eq!(q2.beta(v), q.beta(v));
        }
    }

    #[test]
    fn run_config_round_trips() {
        let cfg = RunConfig {
            command: "spectrum".into(),
            graph: Some("triangle.json".into()),
            lmax: Some(100.0),
            seed: 7,
            ..RunConfig::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
        // unknown keys rejected
        let bad = json.replace("{", r#"{"mystery": 3, "#);
        assert!(serde_json::from_str::<RunConfig>(&bad).is_err());
        // the hash tracks content
        let mut other = cfg.clone();
        other.seed = 8;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn float_formatting_and_parsers() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(std::f64::consts::PI), "3.1415926535897931e0");
        let z = parse_complex("1:5").unwrap();
        assert_eq!((z.re, z.im), (1.0, 5.0));
        assert!(parse_complex("1").is_err());
        let q = parse_graph_str(TRIANGLE).unwrap();
        let (b, x) = parse_root("e0:0.5", &q).unwrap();
        assert_eq!((b.edge, b.rev, x), (0, false, 0.5));
        let (b, _) = parse_root("b2r:0.25", &q).unwrap();
        assert_eq!((b.edge, b.rev), (2, true));
        assert!(parse_root("e0:1.5", &q).is_err());
        assert!(parse_root("e9:0.5", &q).is_err());
    }

    #[test]
    fn csv_artifacts_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { command: "spectrum".into(), seed: 3, ..RunConfig::default() };
        let rows = vec![vec![fmt_f64(1.0), "1".into()], vec![fmt_f64(4.0), "1".into()]];
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_csv(&p1, &cfg, &["lambda", "multiplicity"], &rows).unwrap();
        write_csv(&p2, &cfg, &["lambda", "multiplicity"], &rows).unwrap();
        let a = std::fs::read(&p1).unwrap();
        assert_eq!(a, std::fs::read(&p2).unwrap());
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("# schema v1\n"));
        assert!(text.contains(&cfg.hash()));
        assert!(text.contains("seed 3"));
    }
}
