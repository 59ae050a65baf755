// Pinned sweep output. Regenerate with GENCOMM_UPDATE_GOLDEN=1 after an
// intentional change to the numerics or the file layout.

use std::path::PathBuf;

use gencomm::pipeline::{metadata, sweep, write_rows_csv, Axis, ExperimentConfig, TrialContext};

fn pinned() -> ExperimentConfig {
    ExperimentConfig {
        seed: 7,
        trials: 4,
        ..Default::default()
    }
}

#[test]
fn snr_sweep_matches_golden_file() {
    let cfg = pinned();
    let ctx = TrialContext::new(cfg.clone()).unwrap();
    let out = sweep(&ctx, Axis::Snr, cfg.trials).unwrap();
    let mut buf = Vec::new();
    write_rows_csv(&out.rows, &metadata(&cfg, Axis::Snr, cfg.trials).unwrap(), &mut buf).unwrap();

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sweep_snr_seed7.csv");
    if std::env::var_os("GENCOMM_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &buf).unwrap();
    }
    let golden = std::fs::read(&path).unwrap();
    assert!(golden == buf, "sweep output differs from {}", path.display());
}
