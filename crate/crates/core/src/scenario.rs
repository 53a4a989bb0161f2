//! Commutativity experiments and their TOML file format.
//!
//! ```toml
//! structure = "hw_queue"
//! capacity = 3
//! setup = ["enqueue(42)"]
//! concurrent = ["enqueue(100)", "dequeue()"]
//! probe = ["dequeue()", "enqueue(1)"]
//!
//! [options]
//! footprint_mode = "canonical"
//! quotient = true
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Queue capacity used when a `hw_queue` scenario does not give one.
pub const DEFAULT_CAPACITY: usize = 3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    ListSet,
    HwQueue,
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::ListSet => "list_set",
            Structure::HwQueue => "hw_queue",
        })
    }
}

/// One operation on a modeled object, written `name(arg)` in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Operation {
    Add(i64),
    Remove(i64),
    Contains(i64),
    Enqueue(i64),
    Dequeue,
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::Add(_) => "add",
            Operation::Remove(_) => "remove",
            Operation::Contains(_) => "contains",
            Operation::Enqueue(_) => "enqueue",
            Operation::Dequeue => "dequeue",
        }
    }

    pub fn argument(&self) -> Option<i64> {
        match *self {
            Operation::Add(k) | Operation::Remove(k) | Operation::Contains(k) | Operation::Enqueue(k) => Some(k),
            Operation::Dequeue => None,
        }
    }

    pub fn structure(&self) -> Structure {
        match self {
            Operation::Add(_) | Operation::Remove(_) | Operation::Contains(_) => Structure::ListSet,
            Operation::Enqueue(_) | Operation::Dequeue => Structure::HwQueue,
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.argument() {
            Some(arg) => write!(f, "{}({arg})", self.name()),
            None => write!(f, "{}()", self.name()),
        }
    }
}

impl FromStr for Operation {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| ScenarioError::Parse(format!("operation '{s}': {why}"));
        let text = s.trim();
        let open = text.find('(').ok_or_else(|| bad("expected name(arg)"))?;
        let inner = text[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| bad("missing closing parenthesis"))?
            .trim();
        let name = text[..open].trim();
        let arg = || -> Result<i64, ScenarioError> {
            inner.parse::<i64>().map_err(|_| bad("argument must be an integer"))
        };
        match name {
            "add" => Ok(Operation::Add(arg()?)),
            "remove" => Ok(Operation::Remove(arg()?)),
            "contains" => Ok(Operation::Contains(arg()?)),
            "enqueue" => Ok(Operation::Enqueue(arg()?)),
            "dequeue" if inner.is_empty() => Ok(Operation::Dequeue),
            "dequeue" => Err(bad("dequeue takes no argument")),
            _ => Err(bad("unknown operation; expected add, remove, contains, enqueue or dequeue")),
        }
    }
}

impl TryFrom<String> for Operation {
    type Error = ScenarioError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Operation> for String {
    fn from(op: Operation) -> Self {
        op.to_string()
    }
}

/// How probe footprints name locations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FootprintMode {
    /// Locations and reference targets renamed by first appearance.
    #[default]
    Canonical,
    /// Raw location names.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOptions {
    #[serde(default)]
    pub footprint_mode: FootprintMode,
    #[serde(default = "default_true")]
    pub quotient: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            footprint_mode: FootprintMode::Canonical,
            quotient: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub structure: Structure,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    #[serde(default)]
    pub setup: Vec<Operation>,
    pub concurrent: Vec<Operation>,
    #[serde(default)]
    pub probe: Vec<Operation>,
    #[serde(default)]
    pub options: ScenarioOptions,
}

impl Scenario {
    pub fn new(structure: Structure) -> Self {
        Self {
            structure,
            capacity: None,
            setup: Vec::new(),
            concurrent: Vec::new(),
            probe: Vec::new(),
            options: ScenarioOptions::default(),
        }
    }

    pub fn list_set() -> Self {
        Self::new(Structure::ListSet)
    }

    pub fn hw_queue(capacity: usize) -> Self {
        Self {
            capacity: Some(capacity),
            ..Self::new(Structure::HwQueue)
        }
    }

    pub fn setup(mut self, ops: impl IntoIterator<Item = Operation>) -> Self {
        self.setup = ops.into_iter().collect();
        self
    }

    pub fn concurrent(mut self, ops: impl IntoIterator<Item = Operation>) -> Self {
        self.concurrent = ops.into_iter().collect();
        self
    }

    pub fn probe(mut self, ops: impl IntoIterator<Item = Operation>) -> Self {
        self.probe = ops.into_iter().collect();
        self
    }

    pub fn footprint_mode(mut self, mode: FootprintMode) -> Self {
        self.options.footprint_mode = mode;
        self
    }

    pub fn quotient(mut self, on: bool) -> Self {
        self.options.quotient = on;
        self
    }

    pub fn queue_capacity(&self) -> usize {
        self.capacity.unwrap_or(DEFAULT_CAPACITY)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenarios always serialize")
    }

    /// Checks operation kinds, thread count and queue capacity.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.concurrent.is_empty() {
            return invalid("at least one concurrent operation is required".into());
        }
        for op in self.setup.iter().chain(&self.concurrent).chain(&self.probe) {
            if op.structure() != self.structure {
                return invalid(format!("{op} is not an operation of {}", self.structure));
            }
        }
        match self.structure {
            Structure::ListSet if self.capacity.is_some() => {
                invalid("capacity applies to hw_queue only".into())
            }
            Structure::ListSet => Ok(()),
            Structure::HwQueue => {
                let capacity = self.queue_capacity();
                if capacity == 0 {
                    return invalid("capacity must be at least 1".into());
                }
                let enqueues = self
                    .setup
                    .iter()
                    .chain(&self.concurrent)
                    .chain(&self.probe)
                    .filter(|op| matches!(op, Operation::Enqueue(_)))
                    .count();
                if enqueues > capacity {
                    return invalid(format!(
                        "capacity exceeded: {enqueues} enqueues into a queue of capacity {capacity}"
                    ));
                }
                Ok(())
            }
        }
    }

    /// Label of the concurrent operation run by `thread`, e.g. `t2:add(5)`.
    pub fn concurrent_label(&self, thread: u32) -> Option<String> {
        let index = (thread as usize).checked_sub(2)?;
        self.concurrent.get(index).map(|op| format!("t{thread}:{op}"))
    }
}
