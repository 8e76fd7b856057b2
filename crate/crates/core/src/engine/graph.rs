use std::fmt::Write;
use std::sync::Arc;

use crate::kernel::{render_value, Fingerprint, State};

/// Reachable states and deduplicated transitions retained by a check.
#[derive(Clone, Debug, Default)]
pub struct StateGraph {
    /// Indexed by state id in discovery order.
    pub nodes: Vec<(Fingerprint, State)>,
    /// (source id, target id, action name)
    pub edges: Vec<(u32, u32, Arc<str>)>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    EdgeCsv,
}

impl GraphFormat {
    pub fn parse(s: &str) -> Option<GraphFormat> {
        match s {
            "dot" => Some(GraphFormat::Dot),
            "csv" | "edge-csv" => Some(GraphFormat::EdgeCsv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("the state graph was not retained; re-run the check with graph retention enabled")]
    NotRetained,
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders the graph as Graphviz dot or as a `source_fp,target_fp,action`
/// edge list. With `full_values`, dot node labels show every variable.
pub fn export_graph(graph: Option<&StateGraph>, format: GraphFormat, full_values: bool) -> Result<String, GraphError> {
    let g = graph.ok_or(GraphError::NotRetained)?;
    let mut s = String::new();
    match format {
        GraphFormat::Dot => {
            s.push_str("digraph StateGraph {\n");
            for (fp, state) in &g.nodes {
                let label = if full_values {
                    let mut l = String::new();
                    for (name, v) in state.iter() {
                        let _ = write!(l, "{name} = {}\\n", dot_escape(&render_value(v)));
                    }
                    l
                } else {
                    fp.to_string()
                };
                let _ = writeln!(s, "  \"{fp}\" [label=\"{label}\"];");
            }
            for (src, dst, action) in &g.edges {
                let _ = writeln!(
                    s,
                    "  \"{}\" -> \"{}\" [label=\"{}\"];",
                    g.nodes[*src as usize].0,
                    g.nodes[*dst as usize].0,
                    dot_escape(action)
                );
            }
            s.push_str("}\n");
        }
        GraphFormat::EdgeCsv => {
            s.push_str("source_fp,target_fp,action\n");
            for (src, dst, action) in &g.edges {
                let _ = writeln!(s, "{},{},{action}", g.nodes[*src as usize].0, g.nodes[*dst as usize].0);
            }
        }
    }
    Ok(s)
}

/// `fingerprint,variable,value` rows for every retained state.
pub fn export_nodes(graph: &StateGraph) -> String {
    let mut s = String::from("fingerprint,variable,value\n");
    for (fp, state) in &graph.nodes {
        for (name, v) in state.iter() {
            let text = render_value(v);
            let _ = writeln!(s, "{fp},{name},\"{}\"", text.replace('"', "\"\""));
        }
    }
    s
}
