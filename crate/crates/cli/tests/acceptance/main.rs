//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 1 5`.

mod benchmark;
mod explanations;
mod interchange;
mod structure;
mod support;

use std::any::Any;
use std::process::ExitCode;
use std::time::Instant;

/// `Ok` and `Err` both carry the measured evidence.
pub type Outcome = Result<String, String>;

fn panic_text(p: Box<dyn Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "gradient fidelity", structure::gradient_fidelity),
        (2, "GCN propagation", structure::gcn_propagation),
        (3, "attention invariants", structure::attention_invariants),
        (4, "loss contracts", structure::loss_contracts),
        (5, "LOGO structure", structure::logo_structure),
        (6, "paradigm ordering", benchmark::paradigm_ordering),
        (7, "multi-task efficiency", benchmark::multi_task_efficiency),
        (8, "multi-task parity", benchmark::multi_task_parity),
        (9, "saliency correctness", explanations::saliency_correctness),
        (10, "counterfactual search", explanations::counterfactual_search),
        (11, "interchange robustness", interchange::interchange_robustness),
    ];
    // Panics are reported as failures, so keep the default hook quiet.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (n, name, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| Err(panic_text(p)));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                println!("criterion {n}: FAIL {name} ({secs:.1} s): {detail}");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
