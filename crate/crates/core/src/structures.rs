//! Modeled concurrent objects.
//!
//! * A sorted linked-list set with logical deletion: `head.next` points at
//!   the first node, each node owns `key` and `next` locations, and the mark
//!   bit of `next` flags the node as removed. The tail sentinel is the node
//!   group `tail` and is recognised by reference, never read.
//! * The Herlihy-Wing array queue: a `tail` counter and `items[0..capacity)`
//!   slots. Enqueue fetch-and-increments `tail` and writes its slot; dequeue
//!   reads `tail` once and exchanges each slot below it with null, returning
//!   the first non-null value or `EMPTY` after one pass.

use crate::program::{
    AtomicAction, Emission, LocationId, NodeRef, ProgramSpec, RmwOp, Store, ThreadProgram, Value,
};
use crate::scenario::{Operation, Scenario, ScenarioError, Structure};

pub const HEAD_NEXT: &str = "head.next";
pub const TAIL_NODE: &str = "tail";
pub const QUEUE_TAIL: &str = "tail";

pub fn slot(index: usize) -> LocationId {
    LocationId::new(format!("items[{index}]"))
}

fn tail_ref() -> NodeRef {
    NodeRef::new(TAIL_NODE)
}

fn unmarked(node: &NodeRef) -> Value {
    Value::Ref {
        target: node.clone(),
        marked: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SetKind {
    Add,
    Remove,
    Contains,
}

impl SetKind {
    fn method(self) -> &'static str {
        match self {
            SetKind::Add => "add",
            SetKind::Remove => "remove",
            SetKind::Contains => "contains",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SetState {
    Start,
    ReadHead,
    AwaitCurr,
    AwaitKey,
    AwaitNext,
    AwaitHelp,
    AwaitAlloc,
    AwaitRelink,
    AwaitInsert,
    AwaitMark,
    AwaitUnlink,
    Respond(Value),
    Finished,
}

/// Thread program for one list-set operation.
///
/// Traversal reads `head.next`, then `key` and `next` of every node until it
/// reaches the tail or a node whose key is not below the target. A marked
/// node met on the way is unlinked with a CAS on its predecessor; a failed
/// CAS restarts the traversal. A remove whose own unlink fails traverses
/// again so that no marked node stays reachable once it responds.
#[derive(Debug, Clone)]
pub struct SetOpProgram {
    kind: SetKind,
    key: i64,
    state: SetState,
    /// `next` location of the predecessor.
    pred_next: LocationId,
    curr: NodeRef,
    curr_key: i64,
    succ: NodeRef,
    node: Option<NodeRef>,
    /// Set after a failed unlink: traverse once more to unlink the marked node.
    cleanup: bool,
}

impl SetOpProgram {
    fn new(kind: SetKind, key: i64) -> Self {
        Self {
            kind,
            key,
            state: SetState::Start,
            pred_next: LocationId::new(HEAD_NEXT),
            curr: tail_ref(),
            curr_key: 0,
            succ: tail_ref(),
            node: None,
            cleanup: false,
        }
    }

    fn restart(&mut self) -> Emission {
        self.pred_next = LocationId::new(HEAD_NEXT);
        self.state = SetState::AwaitCurr;
        Emission::Atomic(AtomicAction::read(HEAD_NEXT))
    }

    /// Continue traversal at `curr`.
    fn visit(&mut self, curr: NodeRef) -> Emission {
        self.curr = curr;
        if self.curr.as_str() == TAIL_NODE {
            return self.decide(false);
        }
        self.state = SetState::AwaitKey;
        Emission::Atomic(AtomicAction::read(self.curr.field("key")))
    }

    fn respond(&mut self, value: Value) -> Emission {
        self.state = SetState::Respond(value.clone());
        Emission::Respond {
            method: self.kind.method().into(),
            value,
        }
    }

    fn decide(&mut self, found: bool) -> Emission {
        if self.cleanup {
            return self.respond(Value::Bool(true));
        }
        match self.kind {
            SetKind::Contains => self.respond(Value::Bool(found)),
            SetKind::Add if found => self.respond(Value::Bool(false)),
            SetKind::Add => match &self.node {
                None => {
                    self.state = SetState::AwaitAlloc;
                    Emission::Allocate {
                        fields: vec![
                            ("key".into(), Value::Int(self.key)),
                            ("next".into(), unmarked(&self.curr)),
                        ],
                    }
                }
                Some(node) => {
                    self.state = SetState::AwaitRelink;
                    Emission::Atomic(AtomicAction::write(node.field("next"), unmarked(&self.curr)))
                }
            },
            SetKind::Remove if !found => self.respond(Value::Bool(false)),
            SetKind::Remove => {
                self.state = SetState::AwaitMark;
                Emission::Atomic(AtomicAction::rmw(
                    self.curr.field("next"),
                    RmwOp::CompareAndSwap {
                        expected: unmarked(&self.succ),
                        new: Value::Ref {
                            target: self.succ.clone(),
                            marked: true,
                        },
                    },
                ))
            }
        }
    }

    fn insert(&mut self) -> Emission {
        let node = self.node.clone().expect("node allocated before insertion");
        self.state = SetState::AwaitInsert;
        Emission::Atomic(AtomicAction::rmw(
            self.pred_next.clone(),
            RmwOp::CompareAndSwap {
                expected: unmarked(&self.curr),
                new: unmarked(&node),
            },
        ))
    }
}

fn expect_ref(previous: Option<&Value>) -> (NodeRef, bool) {
    match previous {
        Some(Value::Ref { target, marked }) => (target.clone(), *marked),
        other => panic!("list traversal expected a reference, got {other:?}"),
    }
}

fn expect_bool(previous: Option<&Value>) -> bool {
    match previous {
        Some(Value::Bool(b)) => *b,
        other => panic!("CAS result expected, got {other:?}"),
    }
}

impl ThreadProgram for SetOpProgram {
    fn resume(&mut self, previous: Option<&Value>) -> Emission {
        match self.state.clone() {
            SetState::Start => {
                self.state = SetState::ReadHead;
                Emission::Invoke {
                    method: self.kind.method().into(),
                    args: vec![Value::Int(self.key)],
                }
            }
            SetState::ReadHead => self.restart(),
            SetState::AwaitCurr => {
                let (curr, _) = expect_ref(previous);
                self.visit(curr)
            }
            SetState::AwaitKey => {
                self.curr_key = previous.and_then(Value::as_int).expect("node keys are scalars");
                self.state = SetState::AwaitNext;
                Emission::Atomic(AtomicAction::read(self.curr.field("next")))
            }
            SetState::AwaitNext => {
                let (succ, marked) = expect_ref(previous);
                self.succ = succ.clone();
                if marked {
                    self.state = SetState::AwaitHelp;
                    return Emission::Atomic(AtomicAction::rmw(
                        self.pred_next.clone(),
                        RmwOp::CompareAndSwap {
                            expected: unmarked(&self.curr),
                            new: unmarked(&succ),
                        },
                    ));
                }
                if self.curr_key >= self.key {
                    return self.decide(self.curr_key == self.key);
                }
                self.pred_next = self.curr.field("next");
                self.visit(succ)
            }
            SetState::AwaitHelp => {
                if expect_bool(previous) {
                    let succ = self.succ.clone();
                    self.visit(succ)
                } else {
                    self.restart()
                }
            }
            SetState::AwaitAlloc => {
                let (node, _) = expect_ref(previous);
                self.node = Some(node);
                self.insert()
            }
            SetState::AwaitRelink => self.insert(),
            SetState::AwaitInsert => {
                if expect_bool(previous) {
                    self.respond(Value::Bool(true))
                } else {
                    self.restart()
                }
            }
            SetState::AwaitMark => {
                if !expect_bool(previous) {
                    return self.restart();
                }
                self.state = SetState::AwaitUnlink;
                Emission::Atomic(AtomicAction::rmw(
                    self.pred_next.clone(),
                    RmwOp::CompareAndSwap {
                        expected: unmarked(&self.curr),
                        new: unmarked(&self.succ),
                    },
                ))
            }
            SetState::AwaitUnlink => {
                if expect_bool(previous) {
                    self.respond(Value::Bool(true))
                } else {
                    self.cleanup = true;
                    self.restart()
                }
            }
            SetState::Respond(_) => {
                self.state = SetState::Finished;
                Emission::Finish
            }
            SetState::Finished => Emission::Finish,
        }
    }

    fn clone_box(&self) -> Box<dyn ThreadProgram> {
        Box::new(self.clone())
    }
}

pub fn set_add(key: i64) -> SetOpProgram {
    SetOpProgram::new(SetKind::Add, key)
}

pub fn set_remove(key: i64) -> SetOpProgram {
    SetOpProgram::new(SetKind::Remove, key)
}

pub fn set_contains(key: i64) -> SetOpProgram {
    SetOpProgram::new(SetKind::Contains, key)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum QueueState {
    Start,
    Begin,
    AwaitTicket,
    AwaitStore,
    AwaitTail,
    AwaitSlot(usize),
    Done,
}

/// Thread program for one Herlihy-Wing queue operation.
#[derive(Debug, Clone)]
pub struct QueueOpProgram {
    enqueue: Option<i64>,
    capacity: usize,
    limit: usize,
    state: QueueState,
}

impl QueueOpProgram {
    fn method(&self) -> &'static str {
        if self.enqueue.is_some() {
            "enqueue"
        } else {
            "dequeue"
        }
    }

    fn respond(&mut self, value: Value) -> Emission {
        self.state = QueueState::Done;
        Emission::Respond {
            method: self.method().into(),
            value,
        }
    }

    fn exchange(&mut self, index: usize) -> Emission {
        if index >= self.limit {
            return self.respond(Value::Empty);
        }
        self.state = QueueState::AwaitSlot(index);
        Emission::Atomic(AtomicAction::rmw(slot(index), RmwOp::Exchange(Value::Null)))
    }
}

impl ThreadProgram for QueueOpProgram {
    fn resume(&mut self, previous: Option<&Value>) -> Emission {
        match self.state.clone() {
            QueueState::Start => {
                self.state = QueueState::Begin;
                Emission::Invoke {
                    method: self.method().into(),
                    args: self.enqueue.map(Value::Int).into_iter().collect(),
                }
            }
            QueueState::Begin => match self.enqueue {
                Some(_) => {
                    self.state = QueueState::AwaitTicket;
                    Emission::Atomic(AtomicAction::rmw(QUEUE_TAIL, RmwOp::FetchAdd(1)))
                }
                None => {
                    self.state = QueueState::AwaitTail;
                    Emission::Atomic(AtomicAction::read(QUEUE_TAIL))
                }
            },
            QueueState::AwaitTicket => {
                let ticket = previous.and_then(Value::as_int).expect("tail is a scalar");
                let value = self.enqueue.expect("enqueue holds its value");
                self.state = QueueState::AwaitStore;
                Emission::Atomic(AtomicAction::write(slot(ticket as usize), Value::Int(value)))
            }
            QueueState::AwaitStore => self.respond(Value::Ok),
            QueueState::AwaitTail => {
                let tail = previous.and_then(Value::as_int).expect("tail is a scalar");
                self.limit = (tail.max(0) as usize).min(self.capacity);
                self.exchange(0)
            }
            QueueState::AwaitSlot(index) => match previous {
                Some(Value::Null) | None => self.exchange(index + 1),
                Some(value) => self.respond(value.clone()),
            },
            QueueState::Done => Emission::Finish,
        }
    }

    fn clone_box(&self) -> Box<dyn ThreadProgram> {
        Box::new(self.clone())
    }
}

pub fn hwq_enqueue(value: i64, capacity: usize) -> QueueOpProgram {
    QueueOpProgram {
        enqueue: Some(value),
        capacity,
        limit: 0,
        state: QueueState::Start,
    }
}

pub fn hwq_dequeue(capacity: usize) -> QueueOpProgram {
    QueueOpProgram {
        enqueue: None,
        capacity,
        limit: 0,
        state: QueueState::Start,
    }
}

/// Thread program for `op`. The scenario must already be validated.
pub fn operation_program(op: Operation, capacity: usize) -> Box<dyn ThreadProgram> {
    match op {
        Operation::Add(k) => Box::new(set_add(k)),
        Operation::Remove(k) => Box::new(set_remove(k)),
        Operation::Contains(k) => Box::new(set_contains(k)),
        Operation::Enqueue(v) => Box::new(hwq_enqueue(v, capacity)),
        Operation::Dequeue => Box::new(hwq_dequeue(capacity)),
    }
}

/// Initial atomic writes main performs for `structure`.
pub fn init_writes(structure: Structure, capacity: usize) -> Vec<(LocationId, Value)> {
    match structure {
        Structure::ListSet => vec![(LocationId::new(HEAD_NEXT), unmarked(&tail_ref()))],
        Structure::HwQueue => std::iter::once((LocationId::new(QUEUE_TAIL), Value::Int(0)))
            .chain((0..capacity).map(|i| (slot(i), Value::Null)))
            .collect(),
    }
}

/// Lowers a scenario into a program: main initializes the object, runs the
/// setup operations, spawns one thread per concurrent operation (threads
/// `2..` in listed order), joins them and runs the probe operations.
pub fn build_program(scenario: &Scenario) -> Result<ProgramSpec, ScenarioError> {
    scenario.validate()?;
    let capacity = scenario.queue_capacity();
    let programs = |ops: &[Operation]| -> Vec<Box<dyn ThreadProgram>> {
        ops.iter().map(|&op| operation_program(op, capacity)).collect()
    };
    Ok(ProgramSpec::new(programs(&scenario.concurrent))
        .with_init_writes(init_writes(scenario.structure, capacity))
        .with_setup(programs(&scenario.setup))
        .with_probe(programs(&scenario.probe)))
}

/// Abstract contents of the list set: unmarked keys from head to tail.
pub fn list_contents(store: &Store) -> Option<Vec<i64>> {
    let mut keys = Vec::new();
    let mut current = store.get(&LocationId::new(HEAD_NEXT))?.as_ref_target()?.0.clone();
    let mut hops = 0;
    while current.as_str() != TAIL_NODE {
        hops += 1;
        if hops > store.len() {
            return None;
        }
        let key = store.get(&current.field("key"))?.as_int()?;
        let (next, marked) = store.get(&current.field("next"))?.as_ref_target()?;
        if !marked {
            keys.push(key);
        }
        current = next.clone();
    }
    Some(keys)
}

/// Abstract contents of the queue: non-null slots below `tail`, in order.
pub fn queue_contents(store: &Store, capacity: usize) -> Option<Vec<i64>> {
    let tail = store.get(&LocationId::new(QUEUE_TAIL))?.as_int()?;
    let mut items = Vec::new();
    for i in 0..(tail.max(0) as usize).min(capacity) {
        match store.get(&slot(i))? {
            Value::Int(v) => items.push(*v),
            Value::Null => {}
            _ => return None,
        }
    }
    Some(items)
}
