//! Oracles and fixtures shared by the integration tests. Nothing here calls
//! into the code under test except to build inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use commute_chart::explorer::{ActionRecord, ActionType, RecordValue};
use commute_chart::{Operation, Phase, Scenario, Value};

pub fn fig4() -> Scenario {
    Scenario::list_set()
        .concurrent([Operation::Add(5), Operation::Add(7)])
        .probe([Operation::Add(9)])
}

pub fn fig5() -> Scenario {
    Scenario::list_set()
        .concurrent([Operation::Add(5), Operation::Remove(5)])
        .probe([Operation::Add(9)])
}

pub fn fig6() -> Scenario {
    Scenario::hw_queue(3)
        .concurrent([Operation::Enqueue(100), Operation::Dequeue])
        .probe([Operation::Dequeue, Operation::Enqueue(1)])
}

pub fn nonempty_queue() -> Scenario {
    Scenario::hw_queue(3)
        .setup([Operation::Enqueue(42)])
        .concurrent([Operation::Enqueue(100), Operation::Dequeue])
        .probe([Operation::Dequeue, Operation::Enqueue(1)])
}

pub fn two_enqueues() -> Scenario {
    Scenario::hw_queue(3)
        .concurrent([Operation::Enqueue(100), Operation::Enqueue(150)])
        .probe([Operation::Dequeue, Operation::Dequeue])
}

pub fn distinct_keys() -> Scenario {
    Scenario::list_set()
        .concurrent([Operation::Remove(5), Operation::Add(7)])
        .probe([Operation::Add(9)])
}

pub fn fig7() -> Scenario {
    Scenario::hw_queue(3).concurrent([Operation::Enqueue(100), Operation::Dequeue])
}

pub fn acceptance_scenarios() -> Vec<(&'static str, Scenario)> {
    vec![
        ("commuting adds", fig4()),
        ("add/remove same key", fig5()),
        ("enqueue/dequeue on empty", fig6()),
        ("enqueue/dequeue on non-empty", nonempty_queue()),
        ("two enqueues", two_enqueues()),
        ("remove/add distinct keys", distinct_keys()),
        ("enqueue/dequeue without probe", fig7()),
    ]
}

pub fn factorial(n: u64) -> u128 {
    (1..=n as u128).product()
}

/// Number of interleavings of threads with the given step counts.
pub fn multinomial(lengths: &[u64]) -> u128 {
    let total: u64 = lengths.iter().sum();
    lengths
        .iter()
        .fold(factorial(total), |acc, &l| acc / factorial(l))
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut x = x;
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// All words of length `len` over `alphabet`.
pub fn words(alphabet: &[char], len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|w| alphabet.iter().map(move |&c| format!("{w}{c}")))
            .collect();
    }
    out
}

/// Partition of all words of length `len` into classes connected by one
/// adjacent swap of an independent pair.
pub fn union_find_classes(alphabet: &[char], len: usize, independent: &BTreeSet<(char, char)>) -> BTreeMap<String, BTreeSet<String>> {
    let all = words(alphabet, len);
    let index: BTreeMap<&str, usize> = all.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut uf = UnionFind::new(all.len());
    for (i, w) in all.iter().enumerate() {
        let chars: Vec<char> = w.chars().collect();
        for k in 0..chars.len().saturating_sub(1) {
            if independent.contains(&(chars[k], chars[k + 1])) {
                let mut swapped = chars.clone();
                swapped.swap(k, k + 1);
                let s: String = swapped.into_iter().collect();
                uf.union(i, index[s.as_str()]);
            }
        }
    }
    let mut by_root: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, w) in all.iter().enumerate() {
        by_root.entry(uf.find(i)).or_default().insert(w.clone());
    }
    let mut out = BTreeMap::new();
    for class in by_root.values() {
        for w in class {
            out.insert(w.clone(), class.clone());
        }
    }
    out
}

/// Every symmetric irreflexive relation over `alphabet`.
pub fn all_independencies(alphabet: &[char]) -> Vec<BTreeSet<(char, char)>> {
    let mut unordered = Vec::new();
    for (i, &a) in alphabet.iter().enumerate() {
        for &b in &alphabet[i + 1..] {
            unordered.push((a, b));
        }
    }
    (0..1u32 << unordered.len())
        .map(|mask| {
            unordered
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .flat_map(|(_, &(a, b))| [(a, b), (b, a)])
                .collect()
        })
        .collect()
}

/// Checks a Cypher import script: balanced delimiters outside string
/// literals, one node per variable, relationships only between created
/// nodes, and a single terminating semicolon.
pub fn cypher_lint(script: &str) -> Result<(), String> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in script.chars().enumerate() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '\'') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '\'' => in_string = true,
            '(' | '{' | '[' => stack.push(c),
            ')' | '}' | ']' => {
                let open = stack.pop().ok_or(format!("unbalanced '{c}' at {i}"))?;
                let expected = match c {
                    ')' => '(',
                    '}' => '{',
                    _ => '[',
                };
                if open != expected {
                    return Err(format!("'{open}' closed by '{c}' at {i}"));
                }
            }
            _ => {}
        }
    }
    if in_string || !stack.is_empty() {
        return Err("unterminated string or delimiter".into());
    }
    let lines: Vec<&str> = script.lines().collect();
    if lines.last() != Some(&";") || script.matches(';').count() != 1 {
        return Err("script must end with a single ';' line".into());
    }
    let mut created = BTreeSet::new();
    let mut seen_relationship = false;
    for line in &lines[..lines.len() - 1] {
        let body = line
            .strip_prefix("CREATE (")
            .ok_or(format!("not a CREATE clause: {line}"))?;
        if line.contains(")-[:NEXT") {
            seen_relationship = true;
            let from = &body[..body.find(')').unwrap()];
            let to_start = line.rfind("->(").ok_or("relationship without target")? + 3;
            let to = &line[to_start..line.len() - 1];
            for end in [from, to] {
                if !created.contains(end) {
                    return Err(format!("relationship endpoint {end} not created"));
                }
            }
        } else {
            if seen_relationship {
                return Err("node created after a relationship".into());
            }
            let var = &body[..body.find(':').ok_or("node without label")?];
            if !created.insert(var.to_string()) {
                return Err(format!("duplicate node variable {var}"));
            }
        }
    }
    Ok(())
}

/// Checks the structure of a DOT document: one digraph, balanced braces
/// and quotes, every statement terminated, edges between declared nodes.
pub fn dot_lint(text: &str) -> Result<(), String> {
    let body = text
        .strip_prefix("digraph statechart {\n")
        .and_then(|t| t.strip_suffix("}\n"))
        .ok_or("not a digraph block")?;
    let mut nodes = BTreeSet::new();
    for line in body.lines() {
        let line = line.trim();
        if !line.ends_with(';') {
            return Err(format!("unterminated statement: {line}"));
        }
        let unescaped_quotes = line.replace("\\\"", "").matches('"').count();
        if unescaped_quotes % 2 != 0 {
            return Err(format!("unbalanced quotes: {line}"));
        }
        let head = line.split(" [").next().unwrap();
        if let Some((a, b)) = head.split_once(" -> ") {
            if !nodes.contains(a) || !nodes.contains(b) {
                return Err(format!("edge between undeclared nodes: {line}"));
            }
        } else if head.starts_with('n') && head[1..].chars().all(|c| c.is_ascii_digit()) {
            nodes.insert(head.to_string());
        }
    }
    Ok(())
}

/// Applies every mutation of `records` in order to an empty memory.
pub fn replay_memory<'a>(records: impl IntoIterator<Item = &'a ActionRecord>) -> BTreeMap<String, Value> {
    let mut memory = BTreeMap::new();
    for record in records {
        let (Some(location), Some(value)) = (&record.location, &record.value) else {
            continue;
        };
        let written = match (record.action_type, value) {
            (ActionType::AtomicWrite, RecordValue::One(v)) => v.clone(),
            (ActionType::AtomicRmw, RecordValue::Rmw { written, .. }) => written.clone(),
            _ => continue,
        };
        memory.insert(location.as_str().to_string(), written);
    }
    memory
}

/// Nodes reachable from the list head: (key, marked) in list order.
pub fn list_nodes(memory: &BTreeMap<String, Value>) -> Vec<(i64, bool)> {
    let mut out = Vec::new();
    let mut next = memory.get("head.next").cloned();
    while let Some(Value::Ref { target, .. }) = next {
        if target.as_str() == "tail" || out.len() > memory.len() {
            break;
        }
        let key = match memory.get(&format!("{}.key", target.as_str())) {
            Some(Value::Int(k)) => *k,
            other => panic!("node without key: {other:?}"),
        };
        let link = memory.get(&format!("{}.next", target.as_str())).cloned();
        let marked = matches!(link, Some(Value::Ref { marked: true, .. }));
        out.push((key, marked));
        next = link;
    }
    out
}

pub fn list_set(memory: &BTreeMap<String, Value>) -> Vec<i64> {
    list_nodes(memory)
        .into_iter()
        .filter(|(_, marked)| !marked)
        .map(|(k, _)| k)
        .collect()
}

/// (tail counter, slot contents) of the array queue.
pub fn queue_slots(memory: &BTreeMap<String, Value>, capacity: usize) -> (i64, Vec<Value>) {
    let tail = match memory.get("tail") {
        Some(Value::Int(t)) => *t,
        other => panic!("queue without tail: {other:?}"),
    };
    let slots = (0..capacity)
        .map(|i| memory.get(&format!("items[{i}]")).cloned().unwrap_or(Value::Null))
        .collect();
    (tail, slots)
}

/// Queue contents in dequeue order.
pub fn queue_sequence(memory: &BTreeMap<String, Value>, capacity: usize) -> Vec<i64> {
    let (tail, slots) = queue_slots(memory, capacity);
    slots
        .into_iter()
        .take(tail.max(0) as usize)
        .filter_map(|v| match v {
            Value::Int(x) => Some(x),
            _ => None,
        })
        .collect()
}

pub fn before_probe(records: &[ActionRecord]) -> impl Iterator<Item = &ActionRecord> {
    records.iter().filter(|r| r.phase != Phase::Probe)
}

/// Responses of `thread`'s method calls in `phase`, in order.
pub fn responses(records: &[ActionRecord], phase: Phase) -> Vec<Value> {
    records
        .iter()
        .filter(|r| r.phase == phase && r.action_type == ActionType::MethodResponse)
        .filter_map(|r| match &r.value {
            Some(RecordValue::One(v)) => Some(v.clone()),
            _ => None,
        })
        .collect()
}
