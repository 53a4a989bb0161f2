//! Fixed workloads shared by the benchmarks.

use commute_chart::program::{Script, ThreadProgram};
use commute_chart::{Operation, ProgramSpec, Scenario};

/// `threads` straight-line threads of `len` writes to private locations.
pub fn straight_line(threads: usize, len: usize) -> ProgramSpec {
    let programs: Vec<Box<dyn ThreadProgram>> = (0..threads)
        .map(|t| {
            let locations: Vec<String> = (0..len).map(|k| format!("x{t}_{k}")).collect();
            Box::new(Script::writes(locations.iter().map(String::as_str), t as i64)) as Box<dyn ThreadProgram>
        })
        .collect();
    ProgramSpec::new(programs)
}

pub fn set_scenario(setup: usize) -> Scenario {
    Scenario::list_set()
        .setup((1..=setup as i64).map(|k| Operation::Add(k * 2)))
        .concurrent([Operation::Add(3), Operation::Remove(2)])
        .probe([Operation::Add(99)])
}

pub fn queue_scenario() -> Scenario {
    Scenario::hw_queue(3)
        .concurrent([Operation::Enqueue(100), Operation::Dequeue])
        .probe([Operation::Dequeue, Operation::Enqueue(1)])
}
