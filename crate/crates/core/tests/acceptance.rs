//! Acceptance criteria at their stated tolerances and runtime budgets. One
//! line per criterion; the process exits non-zero if any fails.

use std::time::{Duration, Instant};

use riccomp::suites::{self, SuiteReport};

const SEED: u64 = 20_240_531;

struct Criterion {
    label: &'static str,
    budget: Duration,
    run: fn() -> SuiteReport,
}

fn main() {
    let criteria = [
        Criterion { label: "counterexample blow-up", budget: Duration::from_secs(1), run: suites::counterexample },
        Criterion {
            label: "determinant non-comparison",
            budget: Duration::from_secs(1),
            run: suites::determinant_noncomparison,
        },
        Criterion { label: "table rows", budget: Duration::from_secs(2), run: suites::table1_rows },
        Criterion { label: "comparison theorem", budget: Duration::from_secs(60), run: || suites::comparison_suite(SEED, 500) },
        Criterion { label: "two-sided domain", budget: Duration::from_secs(20), run: || suites::sandwich_suite(SEED, 50) },
        Criterion { label: "wedge comparison", budget: Duration::from_secs(60), run: || suites::wedge_suite(SEED, 200) },
        Criterion { label: "calabi profiles", budget: Duration::from_secs(10), run: || suites::calabi_suite(SEED, 200) },
        Criterion { label: "gauss-bonnet flux", budget: Duration::from_secs(120), run: || suites::gauss_bonnet_suite(SEED, 20) },
        Criterion { label: "geodesic length", budget: Duration::from_secs(5), run: suites::length_suite },
        Criterion { label: "gauss equation and trace", budget: Duration::from_secs(5), run: || suites::gauss_trace_suite(SEED, 100) },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let rep = (c.run)();
        let took = start.elapsed();
        let in_budget = took <= c.budget;
        let ok = rep.passed && in_budget;
        failed += usize::from(!ok);
        println!(
            "[{}] {:2} {:<28} {:>8.3}s (budget {}s) {}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            c.label,
            took.as_secs_f64(),
            c.budget.as_secs(),
            rep.summary()
        );
        for f in &rep.failures {
            println!("       - {f}");
        }
        if !in_budget {
            println!("       - over runtime budget");
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
