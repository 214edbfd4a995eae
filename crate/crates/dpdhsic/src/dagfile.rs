//! DAG files: one line per node, `j: k1 k2 ...`, listing 0-based parents.
//! Blank lines and lines starting with `#` are ignored.

use std::path::Path;

use dpdhsic_core::dagcheck::Dag;

use crate::error::{AppError, AppResult, ParseError};

/// Parses DAG text. Every node `0..d` must appear exactly once. A cycle is
/// reported as [`dpdhsic_core::Error::Cycle`].
pub fn parse_dag(text: &str) -> AppResult<Dag> {
    let mut entries: Vec<(u64, usize, Vec<usize>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let bad = |msg: String| AppError::parse("<dag>", ParseError::new(line, msg));
        let (node, rest) = body
            .split_once(':')
            .ok_or_else(|| bad(format!("expected `j: parents`, found `{body}`")))?;
        let node: usize = node
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a node index", node.trim())))?;
        let parents = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| bad(format!("`{t}` is not a node index")))
            })
            .collect::<AppResult<Vec<usize>>>()?;
        entries.push((line, node, parents));
    }
    let d = entries.len();
    let mut parents: Vec<Option<Vec<usize>>> = vec![None; d];
    for (line, node, ps) in entries {
        let bad = |msg: String| AppError::parse("<dag>", ParseError::new(line, msg));
        if node >= d {
            return Err(bad(format!("node {node} is out of range for {d} nodes")));
        }
        if parents[node].is_some() {
            return Err(bad(format!("node {node} is listed twice")));
        }
        if let Some(&k) = ps.iter().find(|&&k| k >= d) {
            return Err(bad(format!("parent {k} is out of range for {d} nodes")));
        }
        parents[node] = Some(ps);
    }
    let parents = parents.into_iter().map(|p| p.expect("every slot filled")).collect();
    Ok(Dag::new(parents)?)
}

pub fn read_dag_file(path: &Path) -> AppResult<Dag> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_dag(&text).map_err(|e| match e {
        AppError::Parse { source, .. } => AppError::parse(path, source),
        other => other,
    })
}

/// Inverse of [`parse_dag`].
pub fn format_dag(dag: &Dag) -> String {
    (0..dag.d())
        .map(|j| {
            let ps: Vec<String> = dag.parents(j).iter().map(usize::to_string).collect();
            if ps.is_empty() {
                format!("{j}:\n")
            } else {
                format!("{j}: {}\n", ps.join(" "))
            }
        })
        .collect()
}
