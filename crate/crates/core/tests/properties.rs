mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use commute_chart::commutativity::probe_footprint;
use commute_chart::graph_io::{emit_cypher, emit_dot, emit_json, load_json};
use commute_chart::program::{Script, ThreadProgram};
use commute_chart::statechart::{per_thread_slice, subgraph_by_trace};
use commute_chart::structures::build_program;
use commute_chart::trace_monoid::{are_equivalent, enumerate_trace_class, IndependencyRelation};
use commute_chart::{
    build_statechart, explore, quotient, run_scenario, ActionType, ExploreConfig, FootprintMode, Operation, Phase,
    ProgramSpec, Scenario, ScenarioRun, Value,
};
use common::*;

fn run(scenario: &Scenario) -> ScenarioRun {
    run_scenario(scenario, &ExploreConfig::default()).unwrap()
}

fn set_op() -> impl Strategy<Value = Operation> {
    (0..3u8, 1..5i64).prop_map(|(kind, key)| match kind {
        0 => Operation::Add(key),
        1 => Operation::Remove(key),
        _ => Operation::Contains(key),
    })
}

fn set_scenario() -> impl Strategy<Value = Scenario> {
    (
        prop::collection::btree_set(1..5i64, 0..3),
        set_op(),
        set_op(),
    )
        .prop_map(|(setup, a, b)| {
            Scenario::list_set()
                .setup(setup.into_iter().map(Operation::Add))
                .concurrent([a, b])
                .probe([Operation::Add(99)])
        })
}

fn queue_scenario() -> impl Strategy<Value = Scenario> {
    let op = prop_oneof![(1..9i64).prop_map(|v| Operation::Enqueue(v * 10)), Just(Operation::Dequeue)];
    (prop::collection::vec(op.clone(), 0..2), op.clone(), op).prop_map(|(setup, a, b)| {
        // Distinct values keep the abstract sequence informative.
        let mut next = 1;
        let mut relabel = |op: Operation| match op {
            Operation::Enqueue(_) => {
                next += 1;
                Operation::Enqueue(next * 11)
            }
            other => other,
        };
        let setup: Vec<Operation> = setup.into_iter().map(&mut relabel).collect();
        let concurrent = [relabel(a), relabel(b)];
        Scenario::hw_queue(4)
            .setup(setup)
            .concurrent(concurrent)
            .probe([Operation::Dequeue, Operation::Dequeue, Operation::Dequeue])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn list_probe_reveals_abstract_set(scenario in set_scenario()) {
        let r = run(&scenario);
        for trace in &r.traces.traces {
            let records = &trace.execution.records;
            let memory = replay_memory(before_probe(records));
            let nodes = list_nodes(&memory);
            prop_assert!(nodes.iter().all(|(_, marked)| !marked), "marked node survives quiescence");
            let set = list_set(&memory);
            let mut sorted = set.clone();
            sorted.sort_unstable();
            prop_assert_eq!(&set, &sorted);
            let footprint = probe_footprint(&trace.execution, FootprintMode::Canonical);
            prop_assert_eq!(footprint.reads(), 1 + 2 * set.len());
            prop_assert_eq!(responses(records, Phase::Probe), vec![Value::Bool(true)]);
            let after = list_set(&replay_memory(records.iter()));
            let mut expected = set.clone();
            expected.push(99);
            prop_assert_eq!(after, expected);
        }
    }

    #[test]
    fn queue_probe_reveals_abstract_sequence(scenario in queue_scenario()) {
        let r = run(&scenario);
        for trace in &r.traces.traces {
            let records = &trace.execution.records;
            let sequence = queue_sequence(&replay_memory(before_probe(records)), 4);
            let mut expected: Vec<Value> = sequence.iter().copied().map(Value::Int).collect();
            expected.resize(3, Value::Empty);
            expected.truncate(3);
            prop_assert_eq!(responses(records, Phase::Probe), expected);
        }
    }

    #[test]
    fn verdict_agrees_with_oracle_state(scenario in prop_oneof![set_scenario(), queue_scenario()]) {
        let r = run(&scenario);
        let capacity = scenario.queue_capacity();
        let state = |records: &[commute_chart::ActionRecord]| {
            let memory = replay_memory(before_probe(records));
            match scenario.structure {
                commute_chart::Structure::ListSet => format!("{:?}", list_set(&memory)),
                commute_chart::Structure::HwQueue => format!("{:?}", queue_slots(&memory, capacity)),
            }
        };
        let outcomes: BTreeSet<(String, Vec<Value>)> = r
            .traces
            .traces
            .iter()
            .map(|t| (state(&t.execution.records), responses(&t.execution.records, Phase::Concurrent)
                .into_iter()
                .collect()))
            .collect();
        let states: BTreeSet<&String> = outcomes.iter().map(|(s, _)| s).collect();
        if r.verdict.commutes {
            prop_assert_eq!(states.len(), 1);
            let per_op: Vec<BTreeSet<&Value>> = r.verdict.evidence[0]
                .responses
                .keys()
                .map(|label| r.verdict.evidence.iter().map(|e| &e.responses[label]).collect())
                .collect();
            prop_assert!(per_op.iter().all(|s| s.len() == 1));
        } else {
            let per_op_differs = r.verdict.evidence[0].responses.keys().any(|label| {
                r.verdict.evidence.iter().map(|e| &e.responses[label]).collect::<BTreeSet<_>>().len() > 1
            });
            prop_assert!(states.len() > 1 || per_op_differs, "non-commuting verdict without a differing state or response");
        }
    }

    #[test]
    fn verdict_ignores_listing_order(scenario in prop_oneof![set_scenario(), queue_scenario()]) {
        let mut swapped = scenario.clone();
        swapped.concurrent.reverse();
        prop_assert_eq!(run(&scenario).verdict.commutes, run(&swapped).verdict.commutes);
    }

    #[test]
    fn verdict_ignores_trace_relabeling(scenario in set_scenario()) {
        let r = run(&scenario);
        let mut evidence = r.verdict.evidence.clone();
        let n = evidence.len() as u32;
        for e in &mut evidence {
            e.trace = n + 1 - e.trace;
        }
        prop_assert_eq!(commute_chart::commutativity::decide(evidence).commutes, r.verdict.commutes);
    }

    #[test]
    fn exploration_is_deterministic(scenario in set_scenario()) {
        let a = run(&scenario);
        let b = run(&scenario);
        prop_assert_eq!(&a.traces, &b.traces);
        prop_assert_eq!(&a.chart, &b.chart);
        prop_assert_eq!(emit_cypher(&a.chart), emit_cypher(&b.chart));
    }

    #[test]
    fn charts_round_trip_and_lint(scenario in prop_oneof![set_scenario(), queue_scenario()]) {
        let r = run(&scenario);
        prop_assert_eq!(load_json(&emit_json(&r.chart, &r.verdict)).unwrap(), (r.chart.clone(), r.verdict.clone()));
        prop_assert!(cypher_lint(&emit_cypher(&r.chart)).is_ok());
        prop_assert!(dot_lint(&emit_dot(&r.chart, None).unwrap()).is_ok());
        for &t in &r.chart.traces {
            let sub = subgraph_by_trace(&r.chart, t).unwrap();
            let dot = emit_dot(&r.chart, Some(t)).unwrap();
            prop_assert!(dot_lint(&dot).is_ok());
            let rendered = dot
                .lines()
                .map(str::trim_start)
                .filter(|l| l.starts_with('n') && l[1..].starts_with(|c: char| c.is_ascii_digit()) && !l.contains("->"))
                .count();
            prop_assert_eq!(rendered, sub.nodes.len());
            let path: BTreeSet<_> = r.chart.trace_path(t).unwrap().into_iter().collect();
            let mut union = BTreeSet::new();
            for thread in r.chart.threads() {
                if let Ok(slice) = per_thread_slice(&r.chart, t, thread) {
                    let ids = slice.node_ids();
                    prop_assert!(union.is_disjoint(&ids));
                    union.extend(ids);
                }
            }
            prop_assert_eq!(union, path);
        }
    }

    #[test]
    fn merge_is_conservative(scenario in set_scenario()) {
        let r = run(&scenario);
        let total: usize = r.traces.traces.iter().map(|t| t.execution.records.len()).sum();
        prop_assert!(r.chart.nodes.len() <= total);
        let every_node_used: BTreeSet<_> = r.chart.traces.iter()
            .flat_map(|&t| r.chart.trace_path(t).unwrap())
            .collect();
        prop_assert_eq!(every_node_used.len(), r.chart.nodes.len());
    }

    #[test]
    fn quotient_members_share_stores(lengths in prop::collection::vec(1..3u64, 1..4), shared in any::<bool>()) {
        // Optionally make every thread write the same location to create conflicts.
        let threads: Vec<Box<dyn ThreadProgram>> = lengths
            .iter()
            .enumerate()
            .map(|(t, &len)| {
                let locations: Vec<String> = (0..len)
                    .map(|k| if shared { "x".to_string() } else { format!("x{t}_{k}") })
                    .collect();
                Box::new(Script::writes(locations.iter().map(String::as_str), t as i64)) as Box<dyn ThreadProgram>
            })
            .collect();
        let spec = ProgramSpec::new(threads);
        let raw = explore(&spec, &ExploreConfig::default()).unwrap();
        prop_assert_eq!(raw.len() as u128, multinomial(&lengths));
        let traces = quotient(raw);
        let members: usize = traces.traces.iter().map(|t| t.members.len()).sum();
        prop_assert_eq!(members, traces.raw.len());
        for t in &traces.traces {
            for &m in &t.members {
                prop_assert_eq!(&traces.raw[m].final_store, &t.execution.final_store);
            }
        }
        if !shared {
            prop_assert_eq!(traces.len(), 1);
        }
    }

    #[test]
    fn class_members_are_equivalent(word in "[abc]{0,7}", mask in 0u8..8) {
        let pairs: Vec<(char, char)> = [('a', 'b'), ('a', 'c'), ('b', 'c')]
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .flat_map(|(_, &(a, b))| [(a, b), (b, a)])
            .collect();
        let relation = IndependencyRelation::new(['a', 'b', 'c'], pairs).unwrap();
        let class = enumerate_trace_class(&word, &relation, 12).unwrap();
        prop_assert!(class.contains(&word));
        for member in &class.members {
            prop_assert!(are_equivalent(&word, member, &relation).unwrap());
        }
    }
}

#[test]
fn probe_is_deterministic_from_final_state() {
    // Re-running the probe on a fresh program with the same abstract contents
    // yields the same footprint as every trace.
    let r = run(&fig4());
    let sequential = run(&Scenario::list_set()
        .setup([Operation::Add(5), Operation::Add(7)])
        .concurrent([Operation::Contains(1)])
        .probe([Operation::Add(9)]));
    let expected = &sequential.verdict.evidence[0].footprint;
    for e in &r.verdict.evidence {
        assert_eq!(&e.footprint, expected);
    }
}

#[test]
fn statechart_rebuild_is_identical() {
    let spec = build_program(&fig7()).unwrap();
    let traces = quotient(explore(&spec, &ExploreConfig::default()).unwrap());
    assert_eq!(build_statechart(&traces), build_statechart(&traces));
}

#[test]
fn main_thread_slice_holds_init_and_lifecycle() {
    let r = run(&fig7());
    let slice = per_thread_slice(&r.chart, 1, 1).unwrap();
    let kinds: BTreeSet<ActionType> = slice.node_ids().iter().map(|id| r.chart.nodes[id].key.action_type).collect();
    assert_eq!(
        kinds,
        BTreeSet::from([
            ActionType::ThreadStart,
            ActionType::AtomicWrite,
            ActionType::ThreadCreate,
            ActionType::ThreadJoin,
            ActionType::ThreadFinish,
        ])
    );
    let writes = slice
        .node_ids()
        .iter()
        .filter(|id| r.chart.nodes[id].key.action_type == ActionType::AtomicWrite)
        .count();
    assert_eq!(writes, 4);
}

#[test]
fn dequeue_thread_slice_has_read_and_exchange() {
    let r = run(&fig7());
    let slice = per_thread_slice(&r.chart, 1, 3).unwrap();
    let atomics: Vec<ActionType> = slice
        .node_ids()
        .iter()
        .map(|id| r.chart.nodes[id].key.action_type)
        .filter(|t| t.is_atomic())
        .collect();
    assert_eq!(atomics, [ActionType::AtomicRead, ActionType::AtomicRmw]);
}

#[test]
fn conditional_states_follow_setup() {
    let r = run(&nonempty_queue());
    let cond = r.chart.conditional.as_ref().unwrap();
    let pre = &r.chart.nodes[&cond.preconditional];
    assert_eq!(pre.key.phase, Phase::Setup);
    assert_eq!(pre.key.action_type, ActionType::MethodResponse);
    assert!(cond.postconditional.iter().all(|id| r.chart.nodes[id].key.phase == Phase::Probe));
    assert!(!cond.postconditional.is_empty());

    let r = run(&fig7());
    let cond = r.chart.conditional.as_ref().unwrap();
    assert_eq!(r.chart.nodes[&cond.preconditional].key.action_type, ActionType::ThreadStart);
    assert!(cond.postconditional.is_empty());
}

#[test]
fn unquotiented_scenario_keeps_raw_executions() {
    let r = run(&fig7().quotient(false));
    assert_eq!(r.traces.len(), 4);
}
