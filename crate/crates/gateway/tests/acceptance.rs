//! Runs every acceptance criterion and prints one verdict per line.

mod common;

use arwac_testkit::criteria;

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    if !rt.block_on(acceptance()) {
        std::process::exit(1);
    }
}

async fn acceptance() -> bool {
    let mut all = true;
    let checks: [(&str, fn() -> criteria::Report); 7] = [
        ("1", criteria::planner_optimality),
        ("2", criteria::planner_validator_coherence),
        ("3", criteria::contrastive_soundness),
        ("4", criteria::parser_robustness),
        ("5", criteria::simulator_statistics),
        ("6", criteria::replay_determinism),
        ("7", criteria::autonomy_table),
    ];
    for (n, check) in checks {
        let r = tokio::task::spawn_blocking(check).await.unwrap();
        all &= r.passed;
        println!("criterion {n}: {}", r.line());
    }
    let started = std::time::Instant::now();
    let eq = common::gateway_equivalence().await;
    all &= eq.passed;
    println!(
        "criterion 8: {} gateway equivalence ({:.1}s): {}",
        if eq.passed { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        eq.detail
    );
    all
}
