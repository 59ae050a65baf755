// One line per acceptance criterion, at full problem sizes, on a single
// worker thread. Run with `cargo test -p gencomm-cli --test acceptance -- --nocapture`
// to see the report.

use std::path::Path;
use std::process::Command;

use gencomm::verify::{self, Check};

const SEED: u64 = 7;

const PINNED: &str = "spec_version = 1
seed = 7
trials = 20

[channel]
kind = \"rayleigh\"
snr_db = 10.0
";

fn sweep_snr(config: &Path, out: &Path, threads: usize) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_gencomm"))
        .args(["sweep-snr", "--quiet", "--threads", &threads.to_string()])
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success(), "sweep-snr exited with {status}");
    std::fs::read(out).unwrap()
}

fn determinism_golden() -> Check {
    let start = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pinned.toml");
    std::fs::write(&cfg, PINNED).unwrap();
    let a = sweep_snr(&cfg, &dir.path().join("a.csv"), 1);
    let b = sweep_snr(&cfg, &dir.path().join("b.csv"), 1);
    let c = sweep_snr(&cfg, &dir.path().join("c.csv"), 4);
    Check {
        name: "sweep-snr determinism".into(),
        passed: a == b && a == c && !a.is_empty(),
        detail: format!(
            "{} bytes; run 1 vs run 2 identical: {}; --threads 1 vs 4 identical: {}",
            a.len(),
            a == b,
            a == c
        ),
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[test]
fn acceptance_criteria() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let checks: Vec<Check> = pool.install(|| {
        vec![
            verify::coefficient_identities(),
            verify::warm_start_coincidence(SEED, 1000),
            verify::exact_oracle_recovery(SEED, 100),
            verify::ddim_reduction(SEED, 1000),
            verify::bayes_refinement(SEED, 1000),
            verify::guidance(SEED, 100_000),
            {
                let g = verify::mlp_gradient(SEED, 20);
                let t = verify::mlp_training(SEED, 5000);
                Check {
                    name: format!("{} + {}", g.name, t.name),
                    passed: g.passed && t.passed,
                    detail: format!("{}; {}", g.detail, t.detail),
                    seconds: g.seconds + t.seconds,
                }
            },
            verify::channel_statistics(SEED, 1_000_000),
            {
                let parts = [
                    verify::source_coding(SEED, 10_000),
                    verify::ldpc_ber(SEED, 1_000_000),
                    verify::prompt_frames(SEED, 1000),
                ];
                let seconds: f64 = parts.iter().map(|c| c.seconds).sum();
                Check {
                    name: "side channel".into(),
                    passed: parts.iter().all(|c| c.passed) && seconds < 120.0,
                    detail: parts.iter().map(|c| c.detail.as_str()).collect::<Vec<_>>().join("; "),
                    seconds,
                }
            },
            verify::ns_table(),
            determinism_golden(),
            verify::trial_timing(SEED),
        ]
    });
    for (i, c) in checks.iter().enumerate() {
        println!("[{:>2}] {}", i + 1, c.line());
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    println!("{}/{} criteria passed", checks.len() - failed.len(), checks.len());
    assert!(failed.is_empty(), "failing: {failed:?}");
}
