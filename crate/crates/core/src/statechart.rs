//! Merged state-chart graph over the representative traces.
//!
//! Records with equal [`NodeKey`]s share one node; every consecutive record
//! pair of a trace contributes a transition labelled with that trace's id.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explorer::{ActionRecord, ActionType, RecordValue, TraceSet};
use crate::program::{LocationId, MemoryOrder, Phase, RmwKind, ThreadId, MAIN_THREAD};

pub type NodeId = u32;
pub type TraceId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartError {
    #[error("unknown trace {0}")]
    UnknownTrace(TraceId),
    #[error("thread {thread} has no actions in trace {trace}")]
    UnknownThread { trace: TraceId, thread: ThreadId },
}

/// Merge key of an action node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub phase: Phase,
    pub action_type: ActionType,
    pub thread: ThreadId,
    pub location: Option<LocationId>,
    pub value: Option<RecordValue>,
    pub occurrence: u32,
    pub method: Option<String>,
    pub rmw: Option<RmwKind>,
}

impl NodeKey {
    pub fn of(record: &ActionRecord) -> Self {
        Self {
            phase: record.phase,
            action_type: record.action_type,
            thread: record.thread,
            location: record.location.clone(),
            value: record.value.clone(),
            occurrence: record.occurrence,
            method: record.method.clone(),
            rmw: record.rmw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub key: NodeKey,
    pub memory_order: MemoryOrder,
}

impl Node {
    /// Same rendering as [`ActionRecord::label`].
    pub fn label(&self) -> String {
        let key = &self.key;
        let mut label = key.action_type.as_str().to_string();
        if let Some(method) = &key.method {
            label.push(' ');
            label.push_str(method);
        }
        if let Some(kind) = key.rmw {
            label.push_str(&format!(" {kind}"));
        }
        if let Some(location) = &key.location {
            label.push_str(&format!(" {location}"));
        }
        if let Some(value) = key.value.as_ref().map(ToString::to_string).filter(|v| !v.is_empty()) {
            label.push(' ');
            label.push_str(&value);
        }
        label
    }

    pub fn matches(&self, record: &ActionRecord) -> bool {
        self.key == NodeKey::of(record) && self.memory_order == record.memory_order
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConditionalStates {
    pub preconditional: NodeId,
    pub postconditional: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateChart {
    pub nodes: BTreeMap<NodeId, Node>,
    pub transitions: BTreeMap<(NodeId, NodeId), BTreeSet<TraceId>>,
    pub start: NodeId,
    pub ends: BTreeSet<NodeId>,
    pub traces: BTreeSet<TraceId>,
    pub conditional: Option<ConditionalStates>,
}

/// Records of one trace grouped by thread, per the two-clause query: edges
/// between consecutive same-thread actions and actions with no same-thread
/// neighbour.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadSlice {
    pub edges: Vec<(NodeId, NodeId)>,
    pub isolated: Vec<NodeId>,
}

impl ThreadSlice {
    pub fn node_ids(&self) -> BTreeSet<NodeId> {
        self.edges
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .chain(self.isolated.iter().copied())
            .collect()
    }
}

impl StateChart {
    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn node_by_key(&self, key: &NodeKey) -> Option<&Node> {
        self.nodes.values().find(|n| &n.key == key)
    }

    pub fn edge_count(&self) -> usize {
        self.transitions.len()
    }

    fn check_trace(&self, trace: TraceId) -> Result<(), ChartError> {
        if self.traces.contains(&trace) {
            Ok(())
        } else {
            Err(ChartError::UnknownTrace(trace))
        }
    }

    /// Node ids visited by `trace`, following its labelled edges from the start.
    pub fn trace_path(&self, trace: TraceId) -> Result<Vec<NodeId>, ChartError> {
        self.check_trace(trace)?;
        let mut successor: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for (&(from, to), ids) in &self.transitions {
            if ids.contains(&trace) {
                successor.insert(from, to);
            }
        }
        let mut path = vec![self.start];
        let mut seen = BTreeSet::from([self.start]);
        let mut current = self.start;
        while let Some(&next) = successor.get(&current) {
            if !seen.insert(next) {
                break;
            }
            path.push(next);
            current = next;
        }
        Ok(path)
    }

    pub fn trace_nodes(&self, trace: TraceId) -> Result<Vec<&Node>, ChartError> {
        Ok(self
            .trace_path(trace)?
            .into_iter()
            .map(|id| &self.nodes[&id])
            .collect())
    }

    /// Thread ids that own at least one node.
    pub fn threads(&self) -> BTreeSet<ThreadId> {
        self.nodes.values().map(|n| n.key.thread).collect()
    }
}

/// Builds the merged chart. Node ids follow first appearance across traces
/// in ascending trace-id order.
pub fn build_statechart(traces: &TraceSet) -> StateChart {
    let mut ids: BTreeMap<NodeKey, NodeId> = BTreeMap::new();
    let mut nodes = BTreeMap::new();
    let mut transitions: BTreeMap<(NodeId, NodeId), BTreeSet<TraceId>> = BTreeMap::new();
    let mut starts = BTreeSet::new();
    let mut ends = BTreeSet::new();
    let mut ordered: Vec<_> = traces.traces.iter().collect();
    ordered.sort_by_key(|t| t.id);
    for trace in &ordered {
        let mut previous = None;
        for record in &trace.execution.records {
            let key = NodeKey::of(record);
            let next_id = ids.len() as NodeId;
            let id = *ids.entry(key.clone()).or_insert_with(|| {
                nodes.insert(
                    next_id,
                    Node {
                        id: next_id,
                        key,
                        memory_order: record.memory_order,
                    },
                );
                next_id
            });
            match previous {
                None => {
                    starts.insert(id);
                }
                Some(prev) => {
                    transitions.entry((prev, id)).or_default().insert(trace.id);
                }
            }
            previous = Some(id);
        }
        if let Some(last) = previous {
            ends.insert(last);
        }
    }
    debug_assert!(starts.len() <= 1, "every trace begins with main's THREAD START");
    StateChart {
        nodes,
        transitions,
        start: starts.into_iter().next().unwrap_or(0),
        ends,
        traces: ordered.iter().map(|t| t.id).collect(),
        conditional: None,
    }
}

/// Path of one trace as a standalone chart; ids and attributes are kept.
pub fn subgraph_by_trace(chart: &StateChart, trace: TraceId) -> Result<StateChart, ChartError> {
    let path = chart.trace_path(trace)?;
    let on_path: BTreeSet<NodeId> = path.iter().copied().collect();
    let nodes = path.iter().map(|id| (*id, chart.nodes[id].clone())).collect();
    let transitions = path
        .windows(2)
        .map(|w| ((w[0], w[1]), BTreeSet::from([trace])))
        .collect();
    let conditional = chart.conditional.as_ref().map(|c| ConditionalStates {
        preconditional: c.preconditional,
        postconditional: c
            .postconditional
            .iter()
            .copied()
            .filter(|id| on_path.contains(id))
            .collect(),
    });
    Ok(StateChart {
        nodes,
        transitions,
        start: chart.start,
        ends: path.last().copied().into_iter().collect(),
        traces: BTreeSet::from([trace]),
        conditional,
    })
}

pub fn per_thread_slice(chart: &StateChart, trace: TraceId, thread: ThreadId) -> Result<ThreadSlice, ChartError> {
    let path = chart.trace_path(trace)?;
    let owned: Vec<bool> = path.iter().map(|id| chart.nodes[id].key.thread == thread).collect();
    if !owned.contains(&true) {
        return Err(ChartError::UnknownThread { trace, thread });
    }
    // Consecutive among this thread's own actions in trace order.
    let mine: Vec<NodeId> = path
        .iter()
        .zip(&owned)
        .filter(|(_, &o)| o)
        .map(|(&id, _)| id)
        .collect();
    let mut edges = Vec::new();
    let mut isolated = Vec::new();
    for (i, &id) in path.iter().enumerate() {
        if !owned[i] {
            continue;
        }
        let next_owned = i + 1 < path.len() && owned[i + 1];
        let prev_owned = i > 0 && owned[i - 1];
        if next_owned {
            edges.push((id, path[i + 1]));
        }
        if !next_owned && !prev_owned {
            isolated.push(id);
        }
    }
    debug_assert_eq!(
        ThreadSlice {
            edges: edges.clone(),
            isolated: isolated.clone()
        }
        .node_ids(),
        mine.iter().copied().collect()
    );
    Ok(ThreadSlice { edges, isolated })
}

/// Marks the preconditional node (last setup node when setup operations
/// ran, else main's THREAD START) and the probe nodes.
pub fn annotate_conditional_states(chart: &StateChart, traces: &TraceSet) -> StateChart {
    let mut annotated = chart.clone();
    let Some(first) = traces.traces.iter().min_by_key(|t| t.id) else {
        return annotated;
    };
    let records = &first.execution.records;
    let has_setup_ops = records
        .iter()
        .any(|r| r.phase == Phase::Setup && r.action_type == ActionType::MethodInvocation);
    let pre_record = if has_setup_ops {
        records.iter().rev().find(|r| r.phase == Phase::Setup)
    } else {
        records
            .iter()
            .find(|r| r.thread == MAIN_THREAD && r.action_type == ActionType::ThreadStart)
    };
    let preconditional = pre_record
        .and_then(|r| chart.node_by_key(&NodeKey::of(r)))
        .map_or(chart.start, |n| n.id);
    let postconditional = chart
        .nodes
        .values()
        .filter(|n| n.key.phase == Phase::Probe)
        .map(|n| n.id)
        .collect();
    annotated.conditional = Some(ConditionalStates {
        preconditional,
        postconditional,
    });
    annotated
}
