//! Commutativity experiments: run a scenario, fingerprint each trace by its
//! probe actions and the concurrent operations' responses, and compare.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result;
use crate::explorer::{action_independent, explore, quotient, ActionType, Execution, ExploreConfig, RecordValue, TraceSet};
use crate::program::{NodeRef, Phase, RmwKind, ThreadId, Value, MAIN_THREAD};
use crate::scenario::Scenario;
pub use crate::scenario::FootprintMode;
use crate::statechart::{annotate_conditional_states, build_statechart, StateChart, TraceId};
use crate::structures::build_program;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommutativityError {
    #[error("{op} never responded in trace {trace}")]
    MissingResponse { trace: TraceId, op: String },
}

/// One probe action with its location token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FootprintEntry {
    pub action_type: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmw: Option<RmwKind>,
    pub location: String,
    pub value: RecordValue,
}

impl fmt::Display for FootprintEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let short = self.action_type.as_str().trim_start_matches("ATOMIC ");
        write!(f, "{short}")?;
        if let Some(kind) = self.rmw {
            write!(f, " {kind}")?;
        }
        write!(f, " {} {}", self.location, self.value)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbeFootprint {
    pub entries: Vec<FootprintEntry>,
}

impl ProbeFootprint {
    pub fn count(&self, action_type: ActionType) -> usize {
        self.entries.iter().filter(|e| e.action_type == action_type).count()
    }

    pub fn reads(&self) -> usize {
        self.count(ActionType::AtomicRead)
    }

    /// Whether any entry reads or writes `value`.
    pub fn mentions(&self, value: &Value) -> bool {
        self.entries.iter().any(|e| match &e.value {
            RecordValue::One(v) => v == value,
            RecordValue::Rmw { read, written } => read == value || written == value,
            RecordValue::Args(args) => args.contains(value),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Short per-type summary, e.g. `R3 W2 RMW1`.
    pub fn summary(&self) -> String {
        format!(
            "R{} W{} RMW{}",
            self.count(ActionType::AtomicRead),
            self.count(ActionType::AtomicWrite),
            self.count(ActionType::AtomicRmw)
        )
    }
}

impl fmt::Display for ProbeFootprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let entries: Vec<String> = self.entries.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", entries.join(", "))
    }
}

/// Atomic actions of the probe phase, in order.
pub fn probe_footprint(trace: &Execution, mode: FootprintMode) -> ProbeFootprint {
    let mut locations: BTreeMap<String, String> = BTreeMap::new();
    let mut targets: BTreeMap<NodeRef, NodeRef> = BTreeMap::new();
    let mut entries = Vec::new();
    for record in trace.records_in_phase(Phase::Probe) {
        if !record.action_type.is_atomic() {
            continue;
        }
        let (Some(location), Some(value)) = (&record.location, &record.value) else {
            continue;
        };
        let entry = match mode {
            FootprintMode::Exact => FootprintEntry {
                action_type: record.action_type,
                rmw: record.rmw,
                location: location.to_string(),
                value: value.clone(),
            },
            FootprintMode::Canonical => {
                let next = locations.len() + 1;
                let token = locations
                    .entry(location.to_string())
                    .or_insert_with(|| format!("L{next}"))
                    .clone();
                let value = value.map_values(|v| match v {
                    Value::Ref { target, marked } => {
                        let next = targets.len() + 1;
                        let renamed = targets
                            .entry(target.clone())
                            .or_insert_with(|| NodeRef::new(format!("R{next}")))
                            .clone();
                        Value::Ref {
                            target: renamed,
                            marked: *marked,
                        }
                    }
                    other => other.clone(),
                });
                FootprintEntry {
                    action_type: record.action_type,
                    rmw: record.rmw,
                    location: token,
                    value,
                }
            }
        };
        entries.push(entry);
    }
    ProbeFootprint { entries }
}

/// Observable outcome of one trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvidence {
    pub trace: TraceId,
    pub footprint: ProbeFootprint,
    /// Concurrent-operation label to response.
    pub responses: BTreeMap<String, Value>,
    /// Concurrent operation that can respond first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_responder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub first: TraceId,
    pub second: TraceId,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub commutes: bool,
    pub evidence: Vec<TraceEvidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Traces grouped by the concurrent operation that can respond first.
    pub groups: BTreeMap<String, Vec<TraceId>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Verdict {
    pub fn evidence_for(&self, trace: TraceId) -> Option<&TraceEvidence> {
        self.evidence.iter().find(|e| e.trace == trace)
    }
}

fn differences(a: &TraceEvidence, b: &TraceEvidence) -> Vec<String> {
    let mut reasons = Vec::new();
    if a.footprint != b.footprint {
        for action_type in [ActionType::AtomicRead, ActionType::AtomicWrite, ActionType::AtomicRmw] {
            let (x, y) = (a.footprint.count(action_type), b.footprint.count(action_type));
            if x != y {
                reasons.push(format!(
                    "probe {} count differs: trace {} has {x}, trace {} has {y}",
                    action_type, a.trace, b.trace
                ));
            }
        }
        let position = a
            .footprint
            .entries
            .iter()
            .zip(&b.footprint.entries)
            .position(|(x, y)| x != y)
            .unwrap_or_else(|| a.footprint.len().min(b.footprint.len()));
        reasons.push(format!("probe footprints diverge at action {}", position + 1));
    }
    let labels: BTreeSet<&String> = a.responses.keys().chain(b.responses.keys()).collect();
    for label in labels {
        let (x, y) = (a.responses.get(label), b.responses.get(label));
        if x != y {
            let show = |v: Option<&Value>| v.map_or("none".to_string(), ToString::to_string);
            reasons.push(format!(
                "{label} responds {} in trace {} but {} in trace {}",
                show(x),
                a.trace,
                show(y),
                b.trace
            ));
        }
    }
    reasons
}

/// Compares evidence across traces.
pub fn decide(mut evidence: Vec<TraceEvidence>) -> Verdict {
    evidence.sort_by_key(|e| e.trace);
    let footprints: BTreeSet<&ProbeFootprint> = evidence.iter().map(|e| &e.footprint).collect();
    let labels: BTreeSet<&String> = evidence.iter().flat_map(|e| e.responses.keys()).collect();
    let responses_agree = labels.iter().all(|label| {
        let seen: BTreeSet<Option<&Value>> = evidence.iter().map(|e| e.responses.get(*label)).collect();
        seen.len() == 1
    });
    let commutes = footprints.len() <= 1 && responses_agree;
    let witness = if commutes {
        None
    } else {
        evidence.iter().enumerate().find_map(|(i, a)| {
            evidence[i + 1..].iter().find_map(|b| {
                let reasons = differences(a, b);
                (!reasons.is_empty()).then_some(Witness {
                    first: a.trace,
                    second: b.trace,
                    reasons,
                })
            })
        })
    };
    let mut groups: BTreeMap<String, Vec<TraceId>> = BTreeMap::new();
    for e in &evidence {
        let key = e.first_responder.clone().unwrap_or_else(|| "none".into());
        groups.entry(key).or_default().push(e.trace);
    }
    let mut notes = Vec::new();
    if evidence.len() == 1 {
        notes.push("single trace: nothing to compare, commutes vacuously".to_string());
    }
    Verdict {
        commutes,
        evidence,
        witness,
        groups,
        notes,
    }
}

fn concurrent_threads(scenario: &Scenario) -> impl Iterator<Item = (ThreadId, String)> + '_ {
    (0..scenario.concurrent.len()).map(move |i| {
        let thread = MAIN_THREAD + 1 + i as ThreadId;
        let label = scenario
            .concurrent_label(thread)
            .expect("every concurrent operation has a label");
        (thread, label)
    })
}

/// Response of every concurrent operation in every trace.
pub fn response_table(
    traces: &TraceSet,
    scenario: &Scenario,
) -> std::result::Result<BTreeMap<(TraceId, String), Value>, CommutativityError> {
    let mut table = BTreeMap::new();
    for trace in &traces.traces {
        for (thread, label) in concurrent_threads(scenario) {
            let response = trace
                .execution
                .records
                .iter()
                .find(|r| r.thread == thread && r.action_type == ActionType::MethodResponse)
                .and_then(|r| match &r.value {
                    Some(RecordValue::One(v)) => Some(v.clone()),
                    _ => None,
                })
                .ok_or_else(|| CommutativityError::MissingResponse {
                    trace: trace.id,
                    op: label.clone(),
                })?;
            table.insert((trace.id, label), response);
        }
    }
    Ok(table)
}

/// Concurrent operation whose response has the smallest causal past (ties
/// go to the lower thread). Unlike response position, this is the same for
/// every member of a trace class.
fn first_responder(execution: &Execution, scenario: &Scenario) -> Option<String> {
    let records = &execution.records;
    let mut past: Vec<BTreeSet<usize>> = Vec::with_capacity(records.len());
    for (j, record) in records.iter().enumerate() {
        let mut cone = BTreeSet::new();
        for i in 0..j {
            if !cone.contains(&i) && !action_independent(&records[i], record) {
                cone.insert(i);
                cone.extend(past[i].iter().copied());
            }
        }
        past.push(cone);
    }
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.phase == Phase::Concurrent && r.action_type == ActionType::MethodResponse)
        .min_by_key(|(j, r)| (past[*j].len(), r.thread))
        .and_then(|(_, r)| scenario.concurrent_label(r.thread))
}

/// Evidence for every trace of a finished exploration.
pub fn collect_evidence(
    traces: &TraceSet,
    scenario: &Scenario,
) -> std::result::Result<Vec<TraceEvidence>, CommutativityError> {
    let mut table = response_table(traces, scenario)?;
    Ok(traces
        .traces
        .iter()
        .map(|trace| {
            let responses = concurrent_threads(scenario)
                .map(|(_, label)| {
                    let value = table.remove(&(trace.id, label.clone())).expect("table is complete");
                    (label, value)
                })
                .collect();
            TraceEvidence {
                trace: trace.id,
                footprint: probe_footprint(&trace.execution, scenario.options.footprint_mode),
                responses,
                first_responder: first_responder(&trace.execution, scenario),
            }
        })
        .collect())
}

/// Everything produced by one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub traces: TraceSet,
    pub chart: StateChart,
    pub verdict: Verdict,
}

/// Explores the scenario, builds its chart and decides commutativity.
pub fn run_scenario(scenario: &Scenario, config: &ExploreConfig) -> Result<ScenarioRun> {
    let spec = build_program(scenario)?;
    let raw = explore(&spec, config)?;
    let traces = if scenario.options.quotient {
        quotient(raw)
    } else {
        TraceSet::unquotiented(raw)
    };
    let chart = annotate_conditional_states(&build_statechart(&traces), &traces);
    let verdict = decide(collect_evidence(&traces, scenario)?);
    Ok(ScenarioRun {
        scenario: scenario.clone(),
        traces,
        chart,
        verdict,
    })
}
