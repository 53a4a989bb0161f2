//! The action language concurrent programs are modeled in.
//!
//! A program is a shared [`Store`] of atomic locations plus deterministic
//! thread programs. Each [`ThreadProgram`] is a step function: it is fed the
//! result of its previous emission and returns the next [`Emission`].
//! The main thread (thread 1) is driven by a [`ProgramSpec`]: it performs the
//! initial writes, runs the setup operations, spawns threads `2..=n`, joins
//! them, runs the probe operations and finishes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ThreadId = u32;

pub const MAIN_THREAD: ThreadId = 1;

/// Default cap on emissions per thread before an execution is abandoned.
pub const DEFAULT_STEP_BOUND: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("thread {thread} read uninitialized location {location}")]
    UninitializedRead { thread: ThreadId, location: LocationId },
    #[error("thread {thread}: fetch-add on non-scalar {value} at {location}")]
    Type {
        thread: ThreadId,
        location: LocationId,
        value: Value,
    },
    #[error("thread {thread} exceeded the step bound of {bound} emissions")]
    StepBoundExceeded { thread: ThreadId, bound: usize },
    #[error("invalid schedule at position {position}: {reason}")]
    InvalidSchedule { position: usize, reason: String },
    #[error("thread {thread} emitted {emission}, which only the main thread may emit")]
    IllegalEmission { thread: ThreadId, emission: String },
}

/// Name of an atomic location, e.g. `tail`, `items[0]` or `n2.1.next`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocationId(String);

impl LocationId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Stable synthetic address used when exporting locations as hex.
    pub fn address(&self) -> u32 {
        // FNV-1a
        let mut hash: u32 = 0x811c_9dc5;
        for byte in self.0.bytes() {
            hash ^= u32::from(byte);
            hash = hash.wrapping_mul(0x0100_0193);
        }
        hash
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LocationId {
    fn from(name: &str) -> Self {
        Self::new(name)
    }
}

/// A group of locations forming one node, e.g. `n2.0` owning `n2.0.key`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeRef(String);

impl NodeRef {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn allocated(thread: ThreadId, counter: u32) -> Self {
        Self(format!("n{thread}.{counter}"))
    }

    pub fn field(&self, name: &str) -> LocationId {
        LocationId(format!("{}.{name}", self.0))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Int(i64),
    /// Reference to a node, with the logical-deletion mark bit.
    Ref { target: NodeRef, marked: bool },
    Null,
    /// Response of a dequeue that found nothing.
    Empty,
    Bool(bool),
    /// Response of an operation with no result.
    Ok,
}

impl Value {
    pub fn reference(target: impl Into<String>) -> Self {
        Value::Ref {
            target: NodeRef::new(target),
            marked: false,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_ref_target(&self) -> Option<(&NodeRef, bool)> {
        match self {
            Value::Ref { target, marked } => Some((target, *marked)),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) if *v < 0 => write!(f, "-{:#x}", v.unsigned_abs()),
            Value::Int(v) => write!(f, "{v:#x}"),
            Value::Ref { target, marked } => {
                write!(f, "&{target}")?;
                if *marked {
                    f.write_str("*")?;
                }
                Ok(())
            }
            Value::Null => f.write_str("null"),
            Value::Empty => f.write_str("EMPTY"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Ok => f.write_str("OK"),
        }
    }
}

/// Memory order carried on every atomic action. Exploration is sequentially
/// consistent, so this is metadata only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemoryOrder {
    #[default]
    #[serde(rename = "seq_cst")]
    SeqCst,
}

impl fmt::Display for MemoryOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryOrder::SeqCst => f.write_str("seq_cst"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RmwOp {
    FetchAdd(i64),
    CompareAndSwap { expected: Value, new: Value },
    Exchange(Value),
}

impl RmwOp {
    pub fn kind(&self) -> RmwKind {
        match self {
            RmwOp::FetchAdd(_) => RmwKind::FetchAdd,
            RmwOp::CompareAndSwap { .. } => RmwKind::CompareAndSwap,
            RmwOp::Exchange(_) => RmwKind::Exchange,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmwKind {
    FetchAdd,
    CompareAndSwap,
    Exchange,
}

impl fmt::Display for RmwKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RmwKind::FetchAdd => "FAI",
            RmwKind::CompareAndSwap => "CAS",
            RmwKind::Exchange => "XCHG",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AtomicAction {
    Read { location: LocationId },
    Write { location: LocationId, value: Value },
    Rmw { location: LocationId, op: RmwOp },
}

impl AtomicAction {
    pub fn read(location: impl Into<LocationId>) -> Self {
        AtomicAction::Read {
            location: location.into(),
        }
    }

    pub fn write(location: impl Into<LocationId>, value: Value) -> Self {
        AtomicAction::Write {
            location: location.into(),
            value,
        }
    }

    pub fn rmw(location: impl Into<LocationId>, op: RmwOp) -> Self {
        AtomicAction::Rmw {
            location: location.into(),
            op,
        }
    }

    pub fn location(&self) -> &LocationId {
        match self {
            AtomicAction::Read { location }
            | AtomicAction::Write { location, .. }
            | AtomicAction::Rmw { location, .. } => location,
        }
    }

    pub fn memory_order(&self) -> MemoryOrder {
        MemoryOrder::SeqCst
    }
}

impl From<String> for LocationId {
    fn from(name: String) -> Self {
        Self(name)
    }
}

/// What happened when an atomic action was applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomicOutcome {
    /// Value handed back to the issuing thread.
    pub result: Value,
    /// Value observed before the action (reads and RMWs).
    pub read: Option<Value>,
    /// Value stored at the location afterwards (writes and RMWs).
    pub written: Option<Value>,
}

/// Shared memory: atomic locations and their current values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Store(BTreeMap<LocationId, Value>);

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, location: &LocationId) -> Option<&Value> {
        self.0.get(location)
    }

    pub fn insert(&mut self, location: LocationId, value: Value) {
        self.0.insert(location, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LocationId, &Value)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(LocationId, Value)> for Store {
    fn from_iter<I: IntoIterator<Item = (LocationId, Value)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Applies one atomic action to `store` under sequential consistency.
///
/// CAS results are `Bool(success)`; a failed CAS leaves the store unchanged.
pub fn apply_atomic(
    store: &mut Store,
    thread: ThreadId,
    action: &AtomicAction,
) -> Result<AtomicOutcome, ModelError> {
    let current = |store: &Store, location: &LocationId| {
        store
            .get(location)
            .cloned()
            .ok_or_else(|| ModelError::UninitializedRead {
                thread,
                location: location.clone(),
            })
    };
    match action {
        AtomicAction::Read { location } => {
            let value = current(store, location)?;
            Ok(AtomicOutcome {
                result: value.clone(),
                read: Some(value),
                written: None,
            })
        }
        AtomicAction::Write { location, value } => {
            store.insert(location.clone(), value.clone());
            Ok(AtomicOutcome {
                result: value.clone(),
                read: None,
                written: Some(value.clone()),
            })
        }
        AtomicAction::Rmw { location, op } => {
            let old = current(store, location)?;
            let (result, new) = match op {
                RmwOp::FetchAdd(k) => {
                    let Value::Int(v) = old else {
                        return Err(ModelError::Type {
                            thread,
                            location: location.clone(),
                            value: old,
                        });
                    };
                    (Value::Int(v), Value::Int(v.wrapping_add(*k)))
                }
                RmwOp::CompareAndSwap { expected, new } => {
                    if &old == expected {
                        (Value::Bool(true), new.clone())
                    } else {
                        (Value::Bool(false), old.clone())
                    }
                }
                RmwOp::Exchange(new) => (old.clone(), new.clone()),
            };
            store.insert(location.clone(), new.clone());
            Ok(AtomicOutcome {
                result,
                read: Some(old),
                written: Some(new),
            })
        }
    }
}

/// Installs the fields of a fresh node `n{thread}.{counter}`.
pub fn allocate(
    store: &mut Store,
    thread: ThreadId,
    counter: u32,
    fields: &[(String, Value)],
) -> (NodeRef, Vec<(LocationId, Value)>) {
    let node = NodeRef::allocated(thread, counter);
    let installed: Vec<(LocationId, Value)> = fields
        .iter()
        .map(|(name, value)| (node.field(name), value.clone()))
        .collect();
    for (location, value) in &installed {
        store.insert(location.clone(), value.clone());
    }
    (node, installed)
}

/// One output of a thread's step function.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Emission {
    Atomic(AtomicAction),
    Invoke { method: String, args: Vec<Value> },
    Respond { method: String, value: Value },
    /// Allocate a node; the result is a reference to it.
    Allocate { fields: Vec<(String, Value)> },
    /// Main thread only.
    Create(ThreadId),
    /// Main thread only.
    Join(ThreadId),
    Finish,
}

impl Emission {
    /// Scheduling branch points sit before atomic actions and joins only.
    pub fn is_branch_point(&self) -> bool {
        matches!(self, Emission::Atomic(_) | Emission::Join(_))
    }
}

impl fmt::Display for Emission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Emission::Atomic(AtomicAction::Read { location }) => write!(f, "Read({location})"),
            Emission::Atomic(AtomicAction::Write { location, value }) => {
                write!(f, "Write({location}, {value})")
            }
            Emission::Atomic(AtomicAction::Rmw { location, op }) => write!(f, "{}({location})", op.kind()),
            Emission::Invoke { method, args } => {
                let args: Vec<String> = args.iter().map(Value::to_string).collect();
                write!(f, "Invoke {method}({})", args.join(", "))
            }
            Emission::Respond { method, value } => write!(f, "Respond {method} -> {value}"),
            Emission::Allocate { fields } => write!(f, "Allocate({} fields)", fields.len()),
            Emission::Create(t) => write!(f, "Create({t})"),
            Emission::Join(t) => write!(f, "Join({t})"),
            Emission::Finish => f.write_str("Finish"),
        }
    }
}

/// A deterministic thread program.
///
/// `resume` receives the result of the previous emission (`None` on the first
/// call, and after annotations and `Finish`-free lifecycle emissions) and
/// returns the next emission. Identical result histories must yield
/// identical emissions.
pub trait ThreadProgram: fmt::Debug + Send + Sync {
    fn resume(&mut self, previous: Option<&Value>) -> Emission;

    fn clone_box(&self) -> Box<dyn ThreadProgram>;
}

impl Clone for Box<dyn ThreadProgram> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Straight-line program that ignores results. Useful for tests and benches.
#[derive(Debug, Clone)]
pub struct Script {
    emissions: Vec<Emission>,
    cursor: usize,
}

impl Script {
    pub fn new(emissions: Vec<Emission>) -> Self {
        Self {
            emissions,
            cursor: 0,
        }
    }

    pub fn writes<'a>(locations: impl IntoIterator<Item = &'a str>, value: i64) -> Self {
        Self::new(
            locations
                .into_iter()
                .map(|l| Emission::Atomic(AtomicAction::write(l, Value::Int(value))))
                .collect(),
        )
    }
}

impl ThreadProgram for Script {
    fn resume(&mut self, _previous: Option<&Value>) -> Emission {
        let emission = self.emissions.get(self.cursor).cloned().unwrap_or(Emission::Finish);
        self.cursor += 1;
        emission
    }

    fn clone_box(&self) -> Box<dyn ThreadProgram> {
        Box::new(self.clone())
    }
}

/// Phase a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    Concurrent,
    Probe,
    Lifecycle,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Setup => "setup",
            Phase::Concurrent => "concurrent",
            Phase::Probe => "probe",
            Phase::Lifecycle => "lifecycle",
        })
    }
}

/// Whole-program description: main thread lifecycle plus spawned threads.
#[derive(Debug, Clone)]
pub struct ProgramSpec {
    /// Locations present before the main thread starts; no records.
    pub initial_store: Store,
    /// Atomic writes performed by main right after it starts.
    pub init_writes: Vec<(LocationId, Value)>,
    /// Operations main runs sequentially before spawning.
    pub setup: Vec<Box<dyn ThreadProgram>>,
    /// Spawned threads, numbered `2..` in order.
    pub threads: Vec<Box<dyn ThreadProgram>>,
    /// Order in which main joins the spawned threads.
    pub join_order: Vec<ThreadId>,
    /// Operations main runs sequentially after joining.
    pub probe: Vec<Box<dyn ThreadProgram>>,
    /// Maximum emissions per thread.
    pub step_bound: usize,
}

impl ProgramSpec {
    /// Spec with the given spawned threads, joined in spawn order.
    pub fn new(threads: Vec<Box<dyn ThreadProgram>>) -> Self {
        let join_order = (0..threads.len()).map(|i| i as ThreadId + 2).collect();
        Self {
            initial_store: Store::new(),
            init_writes: Vec::new(),
            setup: Vec::new(),
            threads,
            join_order,
            probe: Vec::new(),
            step_bound: DEFAULT_STEP_BOUND,
        }
    }

    pub fn with_init_writes(mut self, writes: Vec<(LocationId, Value)>) -> Self {
        self.init_writes = writes;
        self
    }

    pub fn with_setup(mut self, setup: Vec<Box<dyn ThreadProgram>>) -> Self {
        self.setup = setup;
        self
    }

    pub fn with_probe(mut self, probe: Vec<Box<dyn ThreadProgram>>) -> Self {
        self.probe = probe;
        self
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len() + 1
    }

    pub(crate) fn main_driver(&self) -> MainDriver {
        MainDriver {
            init_writes: self.init_writes.clone(),
            setup: self.setup.clone(),
            spawned: self.threads.len() as ThreadId,
            join_order: self.join_order.clone(),
            probe: self.probe.clone(),
            stage: MainStage::Init(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MainStage {
    Init(usize),
    Setup(usize),
    Create(ThreadId),
    Join(usize),
    Probe(usize),
    Done,
}

/// The main thread's step function, assembled from a [`ProgramSpec`].
#[derive(Debug, Clone)]
pub(crate) struct MainDriver {
    init_writes: Vec<(LocationId, Value)>,
    setup: Vec<Box<dyn ThreadProgram>>,
    spawned: ThreadId,
    join_order: Vec<ThreadId>,
    probe: Vec<Box<dyn ThreadProgram>>,
    stage: MainStage,
}

impl MainDriver {
    /// Next emission and the phase its records belong to.
    pub(crate) fn resume(&mut self, previous: Option<&Value>) -> (Emission, Phase) {
        let mut previous = previous.cloned();
        loop {
            match self.stage {
                MainStage::Init(i) => {
                    if let Some((location, value)) = self.init_writes.get(i) {
                        self.stage = MainStage::Init(i + 1);
                        let action = AtomicAction::write(location.clone(), value.clone());
                        return (Emission::Atomic(action), Phase::Setup);
                    }
                    self.stage = MainStage::Setup(0);
                    previous = None;
                }
                MainStage::Setup(i) => {
                    let Some(program) = self.setup.get_mut(i) else {
                        self.stage = MainStage::Create(2);
                        continue;
                    };
                    match program.resume(previous.as_ref()) {
                        Emission::Finish => {
                            self.stage = MainStage::Setup(i + 1);
                            previous = None;
                        }
                        emission => return (emission, Phase::Setup),
                    }
                }
                MainStage::Create(t) => {
                    if t < self.spawned + 2 {
                        self.stage = MainStage::Create(t + 1);
                        return (Emission::Create(t), Phase::Lifecycle);
                    }
                    self.stage = MainStage::Join(0);
                }
                MainStage::Join(i) => {
                    if let Some(&t) = self.join_order.get(i) {
                        self.stage = MainStage::Join(i + 1);
                        return (Emission::Join(t), Phase::Lifecycle);
                    }
                    self.stage = MainStage::Probe(0);
                    previous = None;
                }
                MainStage::Probe(i) => {
                    let Some(program) = self.probe.get_mut(i) else {
                        self.stage = MainStage::Done;
                        continue;
                    };
                    match program.resume(previous.as_ref()) {
                        Emission::Finish => {
                            self.stage = MainStage::Probe(i + 1);
                            previous = None;
                        }
                        emission => return (emission, Phase::Probe),
                    }
                }
                MainStage::Done => return (Emission::Finish, Phase::Lifecycle),
            }
        }
    }
}

/// One event of a sequential replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayEvent {
    pub thread: ThreadId,
    pub emission: Emission,
    pub result: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequentialRun {
    pub events: Vec<ReplayEvent>,
    pub final_store: Store,
}

/// Replays `spec` emission by emission, taking the next emission from the
/// thread named by each schedule entry.
///
/// This is the single-schedule oracle: it shares nothing with the explorer
/// beyond [`apply_atomic`] and [`allocate`].
pub fn run_sequential(spec: &ProgramSpec, schedule: &[ThreadId]) -> Result<SequentialRun, ModelError> {
    #[derive(PartialEq)]
    enum Status {
        Waiting,
        Live,
        Done,
    }
    struct Slot {
        program: Option<Box<dyn ThreadProgram>>,
        status: Status,
        last: Option<Value>,
        emitted: usize,
        allocations: u32,
    }

    let mut store = spec.initial_store.clone();
    let mut main = spec.main_driver();
    let mut slots: Vec<Slot> = std::iter::once(None)
        .chain(spec.threads.iter().cloned().map(Some))
        .map(|program| Slot {
            status: if program.is_none() { Status::Live } else { Status::Waiting },
            program,
            last: None,
            emitted: 0,
            allocations: 0,
        })
        .collect();
    let mut events = Vec::new();

    for (position, &thread) in schedule.iter().enumerate() {
        let invalid = |reason: String| ModelError::InvalidSchedule { position, reason };
        let index = (thread as usize)
            .checked_sub(1)
            .filter(|&i| i < slots.len())
            .ok_or_else(|| invalid(format!("unknown thread {thread}")))?;
        if slots[index].status != Status::Live {
            return Err(invalid(format!("thread {thread} is not running")));
        }
        slots[index].emitted += 1;
        if slots[index].emitted > spec.step_bound {
            return Err(ModelError::StepBoundExceeded {
                thread,
                bound: spec.step_bound,
            });
        }
        let last = slots[index].last.take();
        let emission = match slots[index].program.as_mut() {
            Some(program) => program.resume(last.as_ref()),
            None => main.resume(last.as_ref()).0,
        };
        let result = match &emission {
            Emission::Atomic(action) => Some(apply_atomic(&mut store, thread, action)?.result),
            Emission::Allocate { fields } => {
                let counter = slots[index].allocations;
                slots[index].allocations += 1;
                let (node, _) = allocate(&mut store, thread, counter, fields);
                Some(Value::Ref {
                    target: node,
                    marked: false,
                })
            }
            Emission::Create(_) | Emission::Join(_) if index != 0 => {
                return Err(ModelError::IllegalEmission {
                    thread,
                    emission: emission.to_string(),
                });
            }
            Emission::Create(t) => {
                let target = slots
                    .get_mut(*t as usize - 1)
                    .ok_or_else(|| invalid(format!("create of unknown thread {t}")))?;
                target.status = Status::Live;
                None
            }
            Emission::Join(t) => {
                let done = slots.get(*t as usize - 1).map(|s| s.status == Status::Done);
                if done != Some(true) {
                    return Err(invalid(format!("join of unfinished thread {t}")));
                }
                None
            }
            Emission::Finish => {
                slots[index].status = Status::Done;
                None
            }
            Emission::Invoke { .. } | Emission::Respond { .. } => None,
        };
        slots[index].last = result.clone();
        events.push(ReplayEvent {
            thread,
            emission,
            result,
        });
    }
    Ok(SequentialRun {
        events,
        final_store: store,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let mut store = Store::new();
        apply_atomic(&mut store, 1, &AtomicAction::write("x", Value::Int(5))).unwrap();
        let out = apply_atomic(&mut store, 1, &AtomicAction::read("x")).unwrap();
        assert_eq!(out.result, Value::Int(5));
    }

    #[test]
    fn fetch_add_returns_old() {
        let mut store: Store = [(LocationId::from("x"), Value::Int(0))].into_iter().collect();
        let out = apply_atomic(&mut store, 1, &AtomicAction::rmw("x", RmwOp::FetchAdd(1))).unwrap();
        assert_eq!(out.result, Value::Int(0));
        assert_eq!(store.get(&"x".into()), Some(&Value::Int(1)));
    }

    #[test]
    fn cas_success_then_failure() {
        let n1 = Value::reference("n1");
        let n2 = Value::reference("n2");
        let mut store: Store = [(LocationId::from("p"), n1.clone())].into_iter().collect();
        let cas = AtomicAction::rmw(
            "p",
            RmwOp::CompareAndSwap {
                expected: n1.clone(),
                new: n2.clone(),
            },
        );
        let out = apply_atomic(&mut store, 2, &cas).unwrap();
        assert_eq!(out.result, Value::Bool(true));
        assert_eq!(store.get(&"p".into()), Some(&n2));

        let before = store.clone();
        let out = apply_atomic(&mut store, 2, &cas).unwrap();
        assert_eq!(out.result, Value::Bool(false));
        assert_eq!(out.written, Some(n2));
        assert_eq!(store, before);
    }

    #[test]
    fn exchange_returns_old() {
        let mut store: Store = [(LocationId::from("s"), Value::Int(7))].into_iter().collect();
        let out = apply_atomic(&mut store, 3, &AtomicAction::rmw("s", RmwOp::Exchange(Value::Null))).unwrap();
        assert_eq!(out.result, Value::Int(7));
        assert_eq!(store.get(&"s".into()), Some(&Value::Null));
    }

    #[test]
    fn uninitialized_and_type_errors() {
        let mut store = Store::new();
        assert!(matches!(
            apply_atomic(&mut store, 1, &AtomicAction::read("x")),
            Err(ModelError::UninitializedRead { .. })
        ));
        store.insert("x".into(), Value::Null);
        assert!(matches!(
            apply_atomic(&mut store, 1, &AtomicAction::rmw("x", RmwOp::FetchAdd(1))),
            Err(ModelError::Type { .. })
        ));
    }

    #[test]
    fn allocation_naming() {
        let mut store = Store::new();
        let fields = vec![
            ("key".to_string(), Value::Int(5)),
            ("next".to_string(), Value::reference("tail")),
        ];
        let (node, installed) = allocate(&mut store, 2, 0, &fields);
        assert_eq!(node.as_str(), "n2.0");
        assert_eq!(installed[0].0.as_str(), "n2.0.key");
        assert_eq!(store.get(&"n2.0.next".into()), Some(&Value::reference("tail")));

        let (second, _) = allocate(&mut store, 2, 1, &fields);
        assert_ne!(node, second);
        assert_eq!(store.len(), 4);
    }

    #[test]
    fn hex_rendering() {
        assert_eq!(Value::Int(100).to_string(), "0x64");
        assert_eq!(Value::Int(150).to_string(), "0x96");
        assert_eq!(Value::Int(0).to_string(), "0x0");
        assert_eq!(Value::Int(-3).to_string(), "-0x3");
        let marked = Value::Ref {
            target: NodeRef::new("n2.0"),
            marked: true,
        };
        assert_eq!(marked.to_string(), "&n2.0*");
    }

    #[test]
    fn single_writer_replay() {
        let spec = ProgramSpec::new(vec![]).with_init_writes(vec![("x".into(), Value::Int(1))]);
        let run = run_sequential(&spec, &[1, 1]).unwrap();
        assert_eq!(run.events.len(), 2);
        assert_eq!(run.events[0].result, Some(Value::Int(1)));
        assert_eq!(run.events[1].emission, Emission::Finish);
        assert_eq!(run_sequential(&spec, &[1, 1]).unwrap(), run);
    }

    #[test]
    fn schedule_must_respect_spawn() {
        let spec = ProgramSpec::new(vec![Box::new(Script::writes(["x"], 1))]);
        let err = run_sequential(&spec, &[2]).unwrap_err();
        assert!(matches!(err, ModelError::InvalidSchedule { position: 0, .. }));
        // main: Create(2), then Join(2) before 2 finished
        let err = run_sequential(&spec, &[1, 1]).unwrap_err();
        assert!(matches!(err, ModelError::InvalidSchedule { position: 1, .. }));
        let run = run_sequential(&spec, &[1, 2, 2, 1, 1]).unwrap();
        assert_eq!(run.final_store.get(&"x".into()), Some(&Value::Int(1)));
    }
}
