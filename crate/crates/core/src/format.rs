//! Text format for graphs and boundary conditions.
//!
//! ```text
//! # comment
//! [vertices]
//! v1 v2
//! [internal]
//! i1 v1 v2 1.0        # id from to length
//! [external]
//! e1 v1               # id vertex
//! [condition v1]
//! delta 0.5           # or dirichlet | neumann | kirchhoff
//! [condition v2]
//! A 1 -1 0            # raw rows, columns in the vertex's slot order
//! A 0 1 -1
//! A 0 0 0
//! B 0 0 0
//! B 0 0 0
//! B 1 1 1
//! ```
//!
//! `[condition global]` takes `n` rows `A …` and `n` rows `B …` over all
//! trace slots instead of per-vertex blocks. Vertices without a condition
//! get Kirchhoff. Matrix entries are real numbers or complex numbers written
//! `a+bi`, `a-bi` or `bi`.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::graph::{GraphDescription, GraphError, MetricGraph};
use crate::linalg::CMat;
use crate::vertex::{BcError, BoundarySpec, TraceLayout, VertexCondition};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Bc(#[from] BcError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// How the boundary condition was specified.
#[derive(Clone, Debug, PartialEq)]
pub enum Conditions {
    PerVertex(Vec<VertexCondition>),
    Global(BoundarySpec),
}

#[derive(Clone, Debug)]
pub struct GraphFile {
    pub graph: MetricGraph,
    pub conditions: Conditions,
}

impl GraphFile {
    pub fn spec(&self) -> Result<BoundarySpec, BcError> {
        match &self.conditions {
            Conditions::PerVertex(c) => BoundarySpec::from_vertex_conditions(&self.graph, c),
            Conditions::Global(s) => Ok(s.clone()),
        }
    }
}

pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(Complex64::new(v, 0.0));
    }
    let body = s.strip_suffix('i')?;
    // Find the sign separating real and imaginary parts, skipping exponents.
    let bytes = body.as_bytes();
    let mut split = None;
    for k in (1..bytes.len()).rev() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
            split = Some(k);
            break;
        }
    }
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        x => x.parse().ok()?,
    };
    Some(Complex64::new(re.parse().ok()?, im))
}

fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else if z.im < 0.0 {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

#[derive(Default)]
struct RawBlock {
    line: usize,
    preset: Option<VertexCondition>,
    a: Vec<Vec<Complex64>>,
    b: Vec<Vec<Complex64>>,
}

enum Section {
    None,
    Vertices,
    Internal,
    External,
    Condition,
}

fn rows_to_matrix(rows: &[Vec<Complex64>], n: usize, line: usize) -> Result<CMat, FormatError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(FormatError::Syntax {
            line,
            msg: format!("expected {n} rows of {n} entries"),
        });
    }
    Ok(CMat::from_fn(n, n, |i, j| rows[i][j]))
}

/// Parse the text format.
pub fn parse(text: &str) -> Result<GraphFile, FormatError> {
    let mut desc = GraphDescription::default();
    let mut section = Section::None;
    let mut blocks: Vec<(String, RawBlock)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: &str| FormatError::Syntax {
            line,
            msg: msg.to_string(),
        };
        if let Some(head) = content.strip_prefix('[') {
            let head = head.strip_suffix(']').ok_or_else(|| err("unterminated section header"))?;
            let mut parts = head.split_whitespace();
            section = match (parts.next(), parts.next(), parts.next()) {
                (Some("vertices"), None, _) => Section::Vertices,
                (Some("internal"), None, _) => Section::Internal,
                (Some("external"), None, _) => Section::External,
                (Some("condition"), Some(v), None) => {
                    if blocks.iter().any(|(name, _)| name == v) {
                        return Err(err(&format!("duplicate condition for `{v}`")));
                    }
                    blocks.push((
                        v.to_string(),
                        RawBlock {
                            line,
                            ..Default::default()
                        },
                    ));
                    Section::Condition
                }
                _ => return Err(err(&format!("unknown section `[{head}]`"))),
            };
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match &section {
            Section::None => return Err(err("content before the first section")),
            Section::Vertices => desc.vertices.extend(toks.iter().map(|s| s.to_string())),
            Section::Internal => {
                if toks.len() != 4 {
                    return Err(err("expected `id from to length`"));
                }
                let len: f64 = toks[3].parse().map_err(|_| err("invalid length"))?;
                desc.internal
                    .push((toks[0].into(), toks[1].into(), toks[2].into(), len));
            }
            Section::External => {
                if toks.len() != 2 {
                    return Err(err("expected `id vertex`"));
                }
                desc.external.push((toks[0].into(), toks[1].into()));
            }
            Section::Condition => {
                let block = &mut blocks.last_mut().unwrap().1;
                match toks[0] {
                    "A" | "B" => {
                        let row = toks[1..]
                            .iter()
                            .map(|t| parse_complex(t))
                            .collect::<Option<Vec<_>>>()
                            .ok_or_else(|| err("invalid matrix entry"))?;
                        if toks[0] == "A" {
                            block.a.push(row);
                        } else {
                            block.b.push(row);
                        }
                    }
                    name => {
                        if block.preset.is_some() {
                            return Err(err("more than one preset"));
                        }
                        let preset = match (name, toks.len()) {
                            ("dirichlet", 1) => VertexCondition::Dirichlet,
                            ("neumann", 1) => VertexCondition::Neumann,
                            ("kirchhoff", 1) => VertexCondition::Kirchhoff,
                            ("delta", 2) => VertexCondition::Delta(
                                toks[1].parse().map_err(|_| err("invalid delta strength"))?,
                            ),
                            _ => return Err(err(&format!("unknown condition `{content}`"))),
                        };
                        block.preset = Some(preset);
                    }
                }
            }
        }
    }
    let graph = MetricGraph::new(&desc)?;
    let layout = TraceLayout::of(&graph);
    let mut global = None;
    let mut per: HashMap<usize, VertexCondition> = HashMap::new();
    for (name, block) in blocks {
        let from_rows = |n: usize| -> Result<VertexCondition, FormatError> {
            Ok(VertexCondition::Raw {
                a: rows_to_matrix(&block.a, n, block.line)?,
                b: rows_to_matrix(&block.b, n, block.line)?,
            })
        };
        let has_rows = !block.a.is_empty() || !block.b.is_empty();
        if has_rows == block.preset.is_some() {
            return Err(FormatError::Syntax {
                line: block.line,
                msg: "a condition needs exactly one of a preset or A/B rows".into(),
            });
        }
        if name == "global" {
            if block.preset.is_some() {
                return Err(FormatError::Syntax {
                    line: block.line,
                    msg: "global conditions take A/B rows".into(),
                });
            }
            let VertexCondition::Raw { a, b } = from_rows(layout.dim())? else {
                unreachable!()
            };
            global = Some(BoundarySpec::new(a, b));
        } else {
            let v = graph.vertex_id(&name)?;
            let cond = match block.preset {
                Some(p) => p,
                None => from_rows(graph.degree(v))?,
            };
            per.insert(v.0, cond);
        }
    }
    let conditions = match global {
        Some(spec) => {
            if !per.is_empty() {
                return Err(FormatError::Syntax {
                    line: 0,
                    msg: "global and per-vertex conditions cannot be mixed".into(),
                });
            }
            Conditions::Global(spec)
        }
        None => Conditions::PerVertex(
            graph
                .vertices()
                .map(|v| per.remove(&v.0).unwrap_or(VertexCondition::Kirchhoff))
                .collect(),
        ),
    };
    Ok(GraphFile { graph, conditions })
}

pub fn read(path: &std::path::Path) -> Result<GraphFile, FormatError> {
    parse(&std::fs::read_to_string(path)?)
}

fn write_rows(out: &mut String, tag: &str, m: &CMat) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_complex(m[(i, j)])).collect();
        let _ = writeln!(out, "{tag} {}", row.join(" "));
    }
}

/// Serialize a graph (and conditions) back to the text format.
pub fn serialize(g: &MetricGraph, conditions: &Conditions) -> String {
    let d = g.to_description();
    let mut out = String::from("[vertices]\n");
    let _ = writeln!(out, "{}", d.vertices.join(" "));
    if !d.internal.is_empty() {
        out.push_str("[internal]\n");
        for (id, from, to, len) in &d.internal {
            let _ = writeln!(out, "{id} {from} {to} {len:?}");
        }
    }
    if !d.external.is_empty() {
        out.push_str("[external]\n");
        for (id, v) in &d.external {
            let _ = writeln!(out, "{id} {v}");
        }
    }
    match conditions {
        Conditions::PerVertex(conds) => {
            for (v, cond) in g.vertices().zip(conds) {
                let _ = writeln!(out, "[condition {}]", g.vertex_name(v));
                match cond {
                    VertexCondition::Dirichlet => out.push_str("dirichlet\n"),
                    VertexCondition::Neumann => out.push_str("neumann\n"),
                    VertexCondition::Kirchhoff => out.push_str("kirchhoff\n"),
                    VertexCondition::Delta(gam) => {
                        let _ = writeln!(out, "delta {gam:?}");
                    }
                    VertexCondition::Raw { a, b } => {
                        write_rows(&mut out, "A", a);
                        write_rows(&mut out, "B", b);
                    }
                }
            }
        }
        Conditions::Global(spec) => {
            out.push_str("[condition global]\n");
            write_rows(&mut out, "A", &spec.a);
            write_rows(&mut out, "B", &spec.b);
        }
    }
    out
}
