//! Exhaustive interleaving exploration under sequential consistency.
//!
//! [`explore`] runs a depth-first search over schedules. A thread's step
//! executes exactly one branching emission (an atomic action or a join)
//! together with the annotation, allocation and lifecycle emissions around
//! it, so threads interleave at atomic granularity only. The main thread's
//! joins are deferred until no spawned thread can run; a join commutes with
//! everything except the joined thread, so this loses no trace class.
//!
//! [`quotient`] groups the raw executions into Mazurkiewicz classes using
//! [`action_independent`] and assigns trace IDs `1..=n`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::{
    allocate, apply_atomic, AtomicAction, Emission, LocationId, MainDriver, MemoryOrder,
    ModelError, Phase, ProgramSpec, RmwKind, Store, ThreadId, ThreadProgram, Value, MAIN_THREAD,
};
use crate::trace_monoid::lex_normal_form;

/// Default cap on the number of raw executions.
pub const DEFAULT_MAX_EXECUTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state space exceeds {limit} executions; raise the cap to explore fully")]
    StateSpaceBound { limit: usize },
    #[error("deadlock: no runnable thread and main has not finished")]
    Deadlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreConfig {
    pub max_executions: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            max_executions: DEFAULT_MAX_EXECUTIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionType {
    #[serde(rename = "THREAD CREATE")]
    ThreadCreate,
    #[serde(rename = "THREAD START")]
    ThreadStart,
    #[serde(rename = "THREAD JOIN")]
    ThreadJoin,
    #[serde(rename = "THREAD FINISH")]
    ThreadFinish,
    #[serde(rename = "ATOMIC READ")]
    AtomicRead,
    #[serde(rename = "ATOMIC WRITE")]
    AtomicWrite,
    #[serde(rename = "ATOMIC RMW")]
    AtomicRmw,
    #[serde(rename = "METHOD INVOCATION")]
    MethodInvocation,
    #[serde(rename = "METHOD RESPONSE")]
    MethodResponse,
}

impl ActionType {
    pub const ALL: [ActionType; 9] = [
        ActionType::ThreadCreate,
        ActionType::ThreadStart,
        ActionType::ThreadJoin,
        ActionType::ThreadFinish,
        ActionType::AtomicRead,
        ActionType::AtomicWrite,
        ActionType::AtomicRmw,
        ActionType::MethodInvocation,
        ActionType::MethodResponse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::ThreadCreate => "THREAD CREATE",
            ActionType::ThreadStart => "THREAD START",
            ActionType::ThreadJoin => "THREAD JOIN",
            ActionType::ThreadFinish => "THREAD FINISH",
            ActionType::AtomicRead => "ATOMIC READ",
            ActionType::AtomicWrite => "ATOMIC WRITE",
            ActionType::AtomicRmw => "ATOMIC RMW",
            ActionType::MethodInvocation => "METHOD INVOCATION",
            ActionType::MethodResponse => "METHOD RESPONSE",
        }
    }

    pub fn is_atomic(self) -> bool {
        matches!(
            self,
            ActionType::AtomicRead | ActionType::AtomicWrite | ActionType::AtomicRmw
        )
    }

    pub fn is_lifecycle(self) -> bool {
        matches!(
            self,
            ActionType::ThreadCreate
                | ActionType::ThreadStart
                | ActionType::ThreadJoin
                | ActionType::ThreadFinish
        )
    }

    pub fn mutates(self) -> bool {
        matches!(self, ActionType::AtomicWrite | ActionType::AtomicRmw)
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Value attached to a record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordValue {
    /// Read result, written value, response, or lifecycle target thread.
    One(Value),
    /// Value read and value left behind by an RMW.
    Rmw { read: Value, written: Value },
    /// Method arguments.
    Args(Vec<Value>),
}

impl RecordValue {
    pub fn map_values(&self, mut f: impl FnMut(&Value) -> Value) -> RecordValue {
        match self {
            RecordValue::One(v) => RecordValue::One(f(v)),
            RecordValue::Rmw { read, written } => RecordValue::Rmw {
                read: f(read),
                written: f(written),
            },
            RecordValue::Args(args) => RecordValue::Args(args.iter().map(f).collect()),
        }
    }
}

impl fmt::Display for RecordValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordValue::One(v) => write!(f, "{v}"),
            RecordValue::Rmw { read, written } => write!(f, "{read}→{written}"),
            RecordValue::Args(args) => {
                let args: Vec<String> = args.iter().map(Value::to_string).collect();
                f.write_str(&args.join(","))
            }
        }
    }
}

/// One observed event of an execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionRecord {
    pub seq: usize,
    pub thread: ThreadId,
    pub action_type: ActionType,
    pub location: Option<LocationId>,
    pub value: Option<RecordValue>,
    pub rmw: Option<RmwKind>,
    pub method: Option<String>,
    pub memory_order: MemoryOrder,
    pub phase: Phase,
    pub occurrence: u32,
}

/// Position-free identity of a record; equal across equivalent executions.
pub type RecordIdentity<'a> = (
    ThreadId,
    ActionType,
    Phase,
    u32,
    Option<&'a LocationId>,
    Option<&'a RecordValue>,
    Option<&'a str>,
    Option<RmwKind>,
);

impl ActionRecord {
    pub fn identity(&self) -> RecordIdentity<'_> {
        (
            self.thread,
            self.action_type,
            self.phase,
            self.occurrence,
            self.location.as_ref(),
            self.value.as_ref(),
            self.method.as_deref(),
            self.rmw,
        )
    }

    /// Key used to order representatives: (thread, action type, location, value).
    pub fn order_key(&self) -> (ThreadId, ActionType, Option<&LocationId>, Option<&RecordValue>) {
        (self.thread, self.action_type, self.location.as_ref(), self.value.as_ref())
    }

    /// Thread named by a THREAD CREATE / THREAD JOIN record.
    pub fn lifecycle_target(&self) -> Option<ThreadId> {
        match (self.action_type, &self.value) {
            (ActionType::ThreadCreate | ActionType::ThreadJoin, Some(RecordValue::One(Value::Int(t)))) => {
                ThreadId::try_from(*t).ok()
            }
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        let mut label = self.action_type.as_str().to_string();
        if let Some(method) = &self.method {
            label.push(' ');
            label.push_str(method);
        }
        if let Some(kind) = self.rmw {
            label.push_str(&format!(" {kind}"));
        }
        if let Some(location) = &self.location {
            label.push_str(&format!(" {location}"));
        }
        if let Some(value) = self.value.as_ref().map(ToString::to_string).filter(|v| !v.is_empty()) {
            label.push(' ');
            label.push_str(&value);
        }
        label
    }
}

impl fmt::Display for ActionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} T{} [{}] {}", self.seq, self.thread, self.phase, self.label())
    }
}

/// Whether two records of one execution may be swapped when adjacent.
pub fn action_independent(p: &ActionRecord, q: &ActionRecord) -> bool {
    if p.thread == q.thread {
        return false;
    }
    if let (Some(a), Some(b)) = (&p.location, &q.location) {
        if a == b && (p.action_type.mutates() || q.action_type.mutates()) {
            return false;
        }
    }
    let orders = |x: &ActionRecord, y: &ActionRecord| x.lifecycle_target() == Some(y.thread);
    !(orders(p, q) || orders(q, p))
}

/// Contiguous run of records produced by one scheduling decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepSpan {
    pub thread: ThreadId,
    pub records: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub records: Vec<ActionRecord>,
    pub final_store: Store,
    pub steps: Vec<StepSpan>,
    /// Thread of every emission in order; replays through `run_sequential`.
    pub emission_schedule: Vec<ThreadId>,
}

impl Execution {
    pub fn schedule(&self) -> Vec<ThreadId> {
        self.steps.iter().map(|s| s.thread).collect()
    }

    pub fn records_in_phase(&self, phase: Phase) -> impl Iterator<Item = &ActionRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    pub fn threads(&self) -> Vec<ThreadId> {
        let mut threads: Vec<ThreadId> = self.records.iter().map(|r| r.thread).collect();
        threads.sort_unstable();
        threads.dedup();
        threads
    }

    fn order_keys(&self) -> Vec<(ThreadId, ActionType, Option<&LocationId>, Option<&RecordValue>)> {
        self.records.iter().map(ActionRecord::order_key).collect()
    }

    /// Records of the lexicographically least equivalent ordering.
    pub fn normal_form(&self) -> Vec<RecordIdentity<'_>> {
        lex_normal_form(&self.records, ActionRecord::identity, action_independent)
            .into_iter()
            .map(|i| self.records[i].identity())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub id: u32,
    pub execution: Execution,
    /// Indices into [`TraceSet::raw`] of the class members.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSet {
    pub raw: Vec<Execution>,
    pub traces: Vec<Trace>,
}

impl TraceSet {
    /// Every raw execution becomes its own trace.
    pub fn unquotiented(raw: Vec<Execution>) -> Self {
        let classes = (0..raw.len()).map(|i| vec![i]).collect();
        Self::from_classes(raw, classes)
    }

    fn from_classes(raw: Vec<Execution>, classes: Vec<Vec<usize>>) -> Self {
        let mut reps: Vec<(usize, Vec<usize>)> = classes
            .into_iter()
            .map(|members| {
                let rep = *members
                    .iter()
                    .min_by(|&&a, &&b| compare_executions(&raw[a], &raw[b]))
                    .expect("classes are nonempty");
                (rep, members)
            })
            .collect();
        reps.sort_by(|a, b| compare_executions(&raw[a.0], &raw[b.0]));
        let traces = reps
            .into_iter()
            .enumerate()
            .map(|(i, (rep, members))| Trace {
                id: i as u32 + 1,
                execution: raw[rep].clone(),
                members,
            })
            .collect();
        Self { raw, traces }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn trace(&self, id: u32) -> Option<&Trace> {
        self.traces.iter().find(|t| t.id == id)
    }
}

fn compare_executions(a: &Execution, b: &Execution) -> std::cmp::Ordering {
    a.order_keys().cmp(&b.order_keys()).then_with(|| {
        let ia: Vec<_> = a.records.iter().map(ActionRecord::identity).collect();
        let ib: Vec<_> = b.records.iter().map(ActionRecord::identity).collect();
        ia.cmp(&ib)
    })
}

/// Partitions `raw` into Mazurkiewicz classes and numbers their representatives.
pub fn quotient(raw: Vec<Execution>) -> TraceSet {
    let classes: Vec<Vec<usize>> = {
        let mut by_form: BTreeMap<Vec<RecordIdentity<'_>>, Vec<usize>> = BTreeMap::new();
        for (i, execution) in raw.iter().enumerate() {
            by_form.entry(execution.normal_form()).or_default().push(i);
        }
        by_form.into_values().collect()
    };
    TraceSet::from_classes(raw, classes)
}

/// Enumerates every execution of `spec`.
pub fn explore(spec: &ProgramSpec, config: &ExploreConfig) -> Result<Vec<Execution>, ExploreError> {
    let mut done = Vec::new();
    let mut stack = vec![Machine::new(spec)?];
    while let Some(machine) = stack.pop() {
        let enabled = machine.enabled();
        match enabled.split_last() {
            None => {
                if !machine.all_finished() {
                    return Err(ExploreError::Deadlock);
                }
                if done.len() == config.max_executions {
                    return Err(ExploreError::StateSpaceBound {
                        limit: config.max_executions,
                    });
                }
                done.push(machine.into_execution());
            }
            Some((&last, rest)) => {
                // Lowest thread id is explored first.
                let mut last_machine = machine.clone();
                last_machine.step(last)?;
                stack.push(last_machine);
                for &thread in rest.iter().rev() {
                    let mut next = machine.clone();
                    next.step(thread)?;
                    stack.push(next);
                }
            }
        }
    }
    Ok(done)
}

#[derive(Debug, Clone)]
enum Actor {
    Main(MainDriver),
    Spawned(Box<dyn ThreadProgram>),
}

impl Actor {
    fn resume(&mut self, previous: Option<&Value>) -> (Emission, Phase) {
        match self {
            Actor::Main(driver) => driver.resume(previous),
            Actor::Spawned(program) => (program.resume(previous), Phase::Concurrent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Waiting,
    Live,
    Done,
}

#[derive(Debug, Clone)]
struct Slot {
    actor: Actor,
    status: Status,
    pending: Option<(Emission, Phase)>,
    started: bool,
    emitted: usize,
    allocations: u32,
}

#[derive(Debug, Clone)]
struct Machine {
    store: Store,
    slots: Vec<Slot>,
    records: Vec<ActionRecord>,
    occurrences: BTreeMap<(ThreadId, ActionType, Phase), u32>,
    steps: Vec<StepSpan>,
    emission_schedule: Vec<ThreadId>,
    step_bound: usize,
}

impl Machine {
    fn new(spec: &ProgramSpec) -> Result<Self, ExploreError> {
        let mut slots = vec![Slot {
            actor: Actor::Main(spec.main_driver()),
            status: Status::Live,
            pending: None,
            started: false,
            emitted: 0,
            allocations: 0,
        }];
        slots.extend(spec.threads.iter().map(|program| Slot {
            actor: Actor::Spawned(program.clone()),
            status: Status::Waiting,
            pending: None,
            started: false,
            emitted: 0,
            allocations: 0,
        }));
        let mut machine = Self {
            store: spec.initial_store.clone(),
            slots,
            records: Vec::new(),
            occurrences: BTreeMap::new(),
            steps: Vec::new(),
            emission_schedule: Vec::new(),
            step_bound: spec.step_bound,
        };
        machine.pull(MAIN_THREAD, None)?;
        Ok(machine)
    }

    fn slot(&self, thread: ThreadId) -> &Slot {
        &self.slots[thread as usize - 1]
    }

    fn slot_mut(&mut self, thread: ThreadId) -> &mut Slot {
        &mut self.slots[thread as usize - 1]
    }

    fn is_done(&self, thread: ThreadId) -> bool {
        self.slots
            .get(thread as usize - 1)
            .is_some_and(|s| s.status == Status::Done)
    }

    fn enabled(&self) -> Vec<ThreadId> {
        let spawned: Vec<ThreadId> = (2..=self.slots.len() as ThreadId)
            .filter(|&t| self.slot(t).status == Status::Live)
            .collect();
        if !spawned.is_empty() {
            return spawned;
        }
        let main = self.slot(MAIN_THREAD);
        match (&main.status, &main.pending) {
            (Status::Live, Some((Emission::Join(t), _))) if !self.is_done(*t) => vec![],
            (Status::Live, _) => vec![MAIN_THREAD],
            _ => vec![],
        }
    }

    fn all_finished(&self) -> bool {
        self.slots.iter().all(|s| s.status == Status::Done)
    }

    fn pull(&mut self, thread: ThreadId, previous: Option<Value>) -> Result<(), ModelError> {
        let bound = self.step_bound;
        let slot = self.slot_mut(thread);
        slot.emitted += 1;
        if slot.emitted > bound {
            return Err(ModelError::StepBoundExceeded { thread, bound });
        }
        let next = slot.actor.resume(previous.as_ref());
        slot.pending = Some(next);
        Ok(())
    }

    fn step(&mut self, thread: ThreadId) -> Result<(), ExploreError> {
        let start = self.records.len();
        if !self.slot(thread).started {
            self.slot_mut(thread).started = true;
            self.push(thread, ActionType::ThreadStart, Phase::Lifecycle, None, None, None, None);
        }
        let mut branched = false;
        loop {
            let (emission, phase) = self
                .slot_mut(thread)
                .pending
                .take()
                .expect("live threads always have a pending emission");
            if emission.is_branch_point() {
                let blocked = matches!(emission, Emission::Join(t) if !self.is_done(t));
                if branched || blocked {
                    self.slot_mut(thread).pending = Some((emission, phase));
                    break;
                }
                branched = true;
            }
            let result = self.execute(thread, &emission, phase)?;
            self.emission_schedule.push(thread);
            if emission == Emission::Finish {
                self.slot_mut(thread).status = Status::Done;
                break;
            }
            self.pull(thread, result)?;
        }
        self.steps.push(StepSpan {
            thread,
            records: start..self.records.len(),
        });
        Ok(())
    }

    fn execute(&mut self, thread: ThreadId, emission: &Emission, phase: Phase) -> Result<Option<Value>, ExploreError> {
        match emission {
            Emission::Atomic(action) => {
                let outcome = apply_atomic(&mut self.store, thread, action)?;
                let (kind, value, rmw) = match action {
                    AtomicAction::Read { .. } => (
                        ActionType::AtomicRead,
                        RecordValue::One(outcome.read.clone().expect("reads observe a value")),
                        None,
                    ),
                    AtomicAction::Write { .. } => (
                        ActionType::AtomicWrite,
                        RecordValue::One(outcome.written.clone().expect("writes store a value")),
                        None,
                    ),
                    AtomicAction::Rmw { op, .. } => (
                        ActionType::AtomicRmw,
                        RecordValue::Rmw {
                            read: outcome.read.clone().expect("rmw reads"),
                            written: outcome.written.clone().expect("rmw writes"),
                        },
                        Some(op.kind()),
                    ),
                };
                self.push(thread, kind, phase, Some(action.location().clone()), Some(value), rmw, None);
                Ok(Some(outcome.result))
            }
            Emission::Invoke { method, args } => {
                self.push(
                    thread,
                    ActionType::MethodInvocation,
                    phase,
                    None,
                    Some(RecordValue::Args(args.clone())),
                    None,
                    Some(method.clone()),
                );
                Ok(None)
            }
            Emission::Respond { method, value } => {
                self.push(
                    thread,
                    ActionType::MethodResponse,
                    phase,
                    None,
                    Some(RecordValue::One(value.clone())),
                    None,
                    Some(method.clone()),
                );
                Ok(None)
            }
            Emission::Allocate { fields } => {
                let counter = self.slot(thread).allocations;
                self.slot_mut(thread).allocations += 1;
                let (node, installed) = allocate(&mut self.store, thread, counter, fields);
                for (location, value) in installed {
                    self.push(
                        thread,
                        ActionType::AtomicWrite,
                        phase,
                        Some(location),
                        Some(RecordValue::One(value)),
                        None,
                        None,
                    );
                }
                Ok(Some(Value::Ref {
                    target: node,
                    marked: false,
                }))
            }
            Emission::Create(target) | Emission::Join(target) if thread != MAIN_THREAD => {
                let _ = target;
                Err(ModelError::IllegalEmission {
                    thread,
                    emission: emission.to_string(),
                }
                .into())
            }
            Emission::Create(target) => {
                let target = *target;
                if target < 2 || target as usize > self.slots.len() {
                    return Err(ModelError::InvalidSchedule {
                        position: self.emission_schedule.len(),
                        reason: format!("create of unknown thread {target}"),
                    }
                    .into());
                }
                self.push(
                    thread,
                    ActionType::ThreadCreate,
                    Phase::Lifecycle,
                    None,
                    Some(RecordValue::One(Value::Int(target.into()))),
                    None,
                    None,
                );
                self.slot_mut(target).status = Status::Live;
                self.pull(target, None)?;
                Ok(None)
            }
            Emission::Join(target) => {
                self.push(
                    thread,
                    ActionType::ThreadJoin,
                    Phase::Lifecycle,
                    None,
                    Some(RecordValue::One(Value::Int((*target).into()))),
                    None,
                    None,
                );
                Ok(None)
            }
            Emission::Finish => {
                self.push(thread, ActionType::ThreadFinish, Phase::Lifecycle, None, None, None, None);
                Ok(None)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        thread: ThreadId,
        action_type: ActionType,
        phase: Phase,
        location: Option<LocationId>,
        value: Option<RecordValue>,
        rmw: Option<RmwKind>,
        method: Option<String>,
    ) {
        let counter = self.occurrences.entry((thread, action_type, phase)).or_insert(0);
        let occurrence = *counter;
        *counter += 1;
        self.records.push(ActionRecord {
            seq: self.records.len(),
            thread,
            action_type,
            location,
            value,
            rmw,
            method,
            memory_order: MemoryOrder::SeqCst,
            phase,
            occurrence,
        });
    }

    fn into_execution(self) -> Execution {
        Execution {
            records: self.records,
            final_store: self.store,
            steps: self.steps,
            emission_schedule: self.emission_schedule,
        }
    }
}
