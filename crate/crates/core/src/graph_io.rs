//! Chart serialization: Cypher import script, Graphviz DOT, and a JSON
//! document (`commute-chart/1`) that loads back into a chart and verdict.
//!
//! Cypher nodes carry the label `Action` and the properties `ActionType`,
//! `Thread`, `Location`, `Address`, `Value`, `Phase`, `Order`, `Occurrence`
//! and, where present, `Method` and `Rmw`. Transitions are `NEXT`
//! relationships whose `id` property lists the trace ids that take them, so
//! a query such as
//!
//! ```text
//! MATCH (a)-[r:NEXT]->(b) WHERE 1 IN r.id AND a.Thread='1' RETURN a, b
//! ```
//!
//! selects one trace's main-thread actions.
//!
//! DOT fill colors: METHOD INVOCATION pink, METHOD RESPONSE lightblue,
//! ATOMIC READ palegreen, ATOMIC WRITE khaki, ATOMIC RMW orange, THREAD
//! START/FINISH lightgray, THREAD CREATE/JOIN lavender. The preconditional
//! node has a double border and postconditional nodes a bold red border.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commutativity::Verdict;
use crate::explorer::ActionType;
use crate::statechart::{
    subgraph_by_trace, ChartError, ConditionalStates, Node, NodeId, StateChart, TraceId,
};

pub const SCHEMA: &str = "commute-chart/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema error at {path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn cypher_str(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('\'');
    for c in text.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out.push('\'');
    out
}

fn cypher_properties(node: &Node) -> String {
    let key = &node.key;
    let mut props = vec![
        format!("ActionType:{}", cypher_str(key.action_type.as_str())),
        format!("Thread:{}", cypher_str(&key.thread.to_string())),
    ];
    if let Some(location) = &key.location {
        props.push(format!("Location:{}", cypher_str(location.as_str())));
        props.push(format!("Address:{}", cypher_str(&format!("{:#x}", location.address()))));
    }
    if let Some(value) = &key.value {
        props.push(format!("Value:{}", cypher_str(&value.to_string())));
    }
    if let Some(method) = &key.method {
        props.push(format!("Method:{}", cypher_str(method)));
    }
    if let Some(kind) = key.rmw {
        props.push(format!("Rmw:{}", cypher_str(&kind.to_string())));
    }
    props.push(format!("Phase:{}", cypher_str(&key.phase.to_string())));
    props.push(format!("Order:{}", cypher_str(&node.memory_order.to_string())));
    props.push(format!("Occurrence:{}", key.occurrence));
    props.join(", ")
}

/// Cypher script creating every node, then every transition, in one statement.
pub fn emit_cypher(chart: &StateChart) -> String {
    let mut out = String::new();
    for node in chart.nodes.values() {
        let _ = writeln!(out, "CREATE (n{}:Action {{{}}})", node.id, cypher_properties(node));
    }
    for (&(from, to), traces) in &chart.transitions {
        let ids: Vec<String> = traces.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "CREATE (n{from})-[:NEXT {{id:[{}]}}]->(n{to})", ids.join(","));
    }
    out.push_str(";\n");
    out
}

fn fill_color(action_type: ActionType) -> &'static str {
    match action_type {
        ActionType::MethodInvocation => "pink",
        ActionType::MethodResponse => "lightblue",
        ActionType::AtomicRead => "palegreen",
        ActionType::AtomicWrite => "khaki",
        ActionType::AtomicRmw => "orange",
        ActionType::ThreadStart | ActionType::ThreadFinish => "lightgray",
        ActionType::ThreadCreate | ActionType::ThreadJoin => "lavender",
    }
}

fn dot_str(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn dot_label(node: &Node) -> String {
    let key = &node.key;
    let short = key.action_type.as_str().trim_start_matches("ATOMIC ");
    let mut first = short.to_string();
    if let Some(value) = key.value.as_ref().map(ToString::to_string).filter(|v| !v.is_empty()) {
        let _ = write!(first, " {value}");
    }
    let mut second = format!("T{}", key.thread);
    for part in [
        key.method.clone(),
        key.rmw.map(|k| k.to_string()),
        key.location.as_ref().map(|l| l.to_string()),
    ]
    .into_iter()
    .flatten()
    {
        second.push(' ');
        second.push_str(&part);
    }
    format!("{first}\n{second}")
}

/// Graphviz rendering; `trace` restricts it to one trace's path.
pub fn emit_dot(chart: &StateChart, trace: Option<TraceId>) -> Result<String, ChartError> {
    let filtered;
    let chart = match trace {
        Some(t) => {
            filtered = subgraph_by_trace(chart, t)?;
            &filtered
        }
        None => chart,
    };
    let (pre, post) = match &chart.conditional {
        Some(c) => (Some(c.preconditional), c.postconditional.clone()),
        None => (None, BTreeSet::new()),
    };
    let mut out = String::from("digraph statechart {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=box, style=\"rounded,filled\", fontname=\"Helvetica\"];\n");
    for node in chart.nodes.values() {
        let mut attrs = vec![
            format!("label={}", dot_str(&dot_label(node))),
            format!("fillcolor={}", dot_str(fill_color(node.key.action_type))),
        ];
        if pre == Some(node.id) {
            attrs.push("peripheries=2".into());
        }
        if post.contains(&node.id) {
            attrs.push("color=\"red\", penwidth=2".into());
        }
        let _ = writeln!(out, "  n{} [{}];", node.id, attrs.join(", "));
    }
    for (&(from, to), traces) in &chart.transitions {
        let ids: Vec<String> = traces.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "  n{from} -> n{to} [label={}];", dot_str(&format!("{{{}}}", ids.join(","))));
    }
    out.push_str("}\n");
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    from: NodeId,
    to: NodeId,
    traces: Vec<TraceId>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartDoc {
    schema: String,
    start: NodeId,
    ends: Vec<NodeId>,
    traces: Vec<TraceId>,
    nodes: Vec<Node>,
    edges: Vec<EdgeDoc>,
    conditional: Option<ConditionalStates>,
    verdict: Verdict,
}

/// JSON document holding the chart and the verdict.
pub fn emit_json(chart: &StateChart, verdict: &Verdict) -> String {
    let doc = ChartDoc {
        schema: SCHEMA.to_string(),
        start: chart.start,
        ends: chart.ends.iter().copied().collect(),
        traces: chart.traces.iter().copied().collect(),
        nodes: chart.nodes.values().cloned().collect(),
        edges: chart
            .transitions
            .iter()
            .map(|(&(from, to), traces)| EdgeDoc {
                from,
                to,
                traces: traces.iter().copied().collect(),
            })
            .collect(),
        conditional: chart.conditional.clone(),
        verdict: verdict.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("chart documents always serialize");
    text.push('\n');
    text
}

/// Parses and validates a document written by [`emit_json`].
pub fn load_json(text: &str) -> Result<(StateChart, Verdict), SchemaError> {
    let deserializer = &mut serde_json::Deserializer::from_str(text);
    let doc: ChartDoc = serde_path_to_error::deserialize(deserializer).map_err(|e| {
        let path = e.path().to_string();
        SchemaError::new(if path.is_empty() { "$".into() } else { path }, e.inner().to_string())
    })?;
    if doc.schema != SCHEMA {
        return Err(SchemaError::new(
            "schema",
            format!("unsupported schema {:?}, expected {SCHEMA:?}", doc.schema),
        ));
    }
    let mut nodes = BTreeMap::new();
    for (i, node) in doc.nodes.into_iter().enumerate() {
        if nodes.insert(node.id, node).is_some() {
            return Err(SchemaError::new(format!("nodes[{i}].id"), "duplicate node id"));
        }
    }
    let known = |id: NodeId, path: String| {
        if nodes.contains_key(&id) {
            Ok(())
        } else {
            Err(SchemaError::new(path, format!("references missing node {id}")))
        }
    };
    known(doc.start, "start".into())?;
    for (i, &end) in doc.ends.iter().enumerate() {
        known(end, format!("ends[{i}]"))?;
    }
    let traces: BTreeSet<TraceId> = doc.traces.iter().copied().collect();
    let mut transitions = BTreeMap::new();
    for (i, edge) in doc.edges.iter().enumerate() {
        known(edge.from, format!("edges[{i}].from"))?;
        known(edge.to, format!("edges[{i}].to"))?;
        if let Some(t) = edge.traces.iter().find(|t| !traces.contains(t)) {
            return Err(SchemaError::new(format!("edges[{i}].traces"), format!("unknown trace {t}")));
        }
        if transitions
            .insert((edge.from, edge.to), edge.traces.iter().copied().collect::<BTreeSet<_>>())
            .is_some()
        {
            return Err(SchemaError::new(format!("edges[{i}]"), "duplicate edge"));
        }
    }
    if let Some(c) = &doc.conditional {
        known(c.preconditional, "conditional.preconditional".into())?;
        for (i, &id) in c.postconditional.iter().enumerate() {
            known(id, format!("conditional.postconditional[{i}]"))?;
        }
    }
    let chart = StateChart {
        nodes,
        transitions,
        start: doc.start,
        ends: doc.ends.into_iter().collect(),
        traces,
        conditional: doc.conditional,
    };
    Ok((chart, doc.verdict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commutativity::run_scenario;
    use crate::explorer::ExploreConfig;
    use crate::scenario::{Operation, Scenario};

    fn fig7() -> (StateChart, Verdict) {
        let run = run_scenario(
            &Scenario::hw_queue(3).concurrent([Operation::Enqueue(100), Operation::Dequeue]),
            &ExploreConfig::default(),
        )
        .unwrap();
        (run.chart, run.verdict)
    }

    #[test]
    fn json_round_trip() {
        let (chart, verdict) = fig7();
        let text = emit_json(&chart, &verdict);
        assert_eq!(load_json(&text).unwrap(), (chart, verdict));
    }

    #[test]
    fn truncated_json_is_rejected() {
        let (chart, verdict) = fig7();
        let text = emit_json(&chart, &verdict);
        assert!(load_json(&text[..text.len() / 2]).is_err());
    }

    #[test]
    fn dangling_edge_names_the_edge() {
        let (chart, verdict) = fig7();
        let mut doc: serde_json::Value = serde_json::from_str(&emit_json(&chart, &verdict)).unwrap();
        doc["edges"][2]["to"] = serde_json::json!(9999);
        let err = load_json(&doc.to_string()).unwrap_err();
        assert_eq!(err.path, "edges[2].to");
    }

    #[test]
    fn wrong_type_reports_path() {
        let (chart, verdict) = fig7();
        let mut doc: serde_json::Value = serde_json::from_str(&emit_json(&chart, &verdict)).unwrap();
        doc["nodes"][1]["key"]["thread"] = serde_json::json!("one");
        let err = load_json(&doc.to_string()).unwrap_err();
        assert_eq!(err.path, "nodes[1].key.thread");
    }

    #[test]
    fn cypher_ids_cover_all_traces() {
        let (chart, _) = fig7();
        let script = emit_cypher(&chart);
        assert!(script.contains("Value:'0x64'"));
        let mut ids = BTreeSet::new();
        for line in script.lines().filter(|l| l.contains("[:NEXT")) {
            let inner = line.split("id:[").nth(1).unwrap().split(']').next().unwrap();
            ids.extend(inner.split(',').map(|s| s.parse::<u32>().unwrap()));
        }
        assert_eq!(ids, BTreeSet::from([1, 2, 3]));
        assert!(script.trim_end().ends_with(';'));
    }

    #[test]
    fn dot_colors_and_rmw_label() {
        let (chart, _) = fig7();
        let dot = emit_dot(&chart, None).unwrap();
        assert!(dot.contains("fillcolor=\"pink\""));
        assert!(dot.contains("fillcolor=\"lightblue\""));
        assert!(dot.contains("RMW 0x0→0x1"));
        assert!(matches!(emit_dot(&chart, Some(42)), Err(ChartError::UnknownTrace(42))));
    }

    #[test]
    fn emission_is_deterministic() {
        let (a, va) = fig7();
        let (b, vb) = fig7();
        assert_eq!(emit_cypher(&a), emit_cypher(&b));
        assert_eq!(emit_json(&a, &va), emit_json(&b, &vb));
    }
}
