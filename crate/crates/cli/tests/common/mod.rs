//! Helpers shared by the binary-level tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

pub const SMALL: &str = r#"
seed = 11

[stage1]
random_effects = "intercept_only"
sampler = { chains = 2, warmup = 300, iterations = 300 }

[validation]
bootstrap_replicates = 2

[stage2]
method = "intercept_and_slope"
sampler = { chains = 2, warmup = 300, iterations = 300 }

[comparison]
methods = ["intercept_only", "intercept_and_slope"]

[pseudo_ipd]
rows = 300
imputation = { chains = 2, warmup = 200, iterations = 200 }

[stage3]
reference = "P"
model = { constrain_within_equals_between = true, center_risk = true, sampler = { chains = 2, warmup = 300, iterations = 300 } }

[prediction]
grid_points = 21
anchor_sampler = { chains = 2, warmup = 200, iterations = 200 }

[simulation]
preset = "basic"
cohort_subjects = 300
studies = [
  { id = "ipd1", kind = "ipd", arms = ["P", "A"], n_per_arm = 150, latent_shift = [-0.4, -0.5, -0.3] },
  { id = "ipd2", kind = "ipd", arms = ["P", "B"], n_per_arm = 150 },
  { id = "ipd3", kind = "ipd", arms = ["P", "A", "B"], n_per_arm = 150, latent_shift = [0.4, 0.5, 0.3] },
  { id = "ad1", kind = "ad", arms = ["P", "A"], n_per_arm = 150, masked = ["prior"] },
]

[recovery]
replicates = 1
nma = { constrain_within_equals_between = true, center_risk = true, sampler = { chains = 2, warmup = 200, iterations = 200 } }
pseudo_ipd = { rows = 200, imputation = { chains = 2, warmup = 200, iterations = 200 } }
"#;

pub fn rbnma(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rbnma"))
        .args(args)
        .current_dir(dir)
        .env_remove("RBNMA_ARTIFACTS")
        .env("RBNMA_THREADS", "2")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

pub fn ok(dir: &Path, args: &[&str]) {
    let (code, stderr) = rbnma(dir, args);
    // 3 flags non-convergence, expected now and then with these short chains
    assert!(code == 0 || code == 3, "{args:?} exited {code}: {stderr}");
}

pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn run_pipeline(dir: &Path) {
    let cfg = "data/config.toml";
    ok(dir, &["simulate", "--config", "small.toml", "--out", "data"]);
    ok(dir, &["stage1", "fit", "--config", cfg]);
    ok(dir, &["stage1", "validate", "--config", cfg]);
    ok(dir, &["stage2", "recalibrate", "--config", cfg]);
    ok(dir, &["stage2", "compare", "--config", cfg]);
    ok(dir, &["stage3", "fit", "--config", cfg]);
    ok(dir, &["predict", "--config", cfg, "--covariates", r#"{"age": 50, "severity": 0.5, "prior": 1}"#]);
    ok(dir, &["curve", "--config", cfg, "--context", "cohort"]);
    ok(dir, &["strata", "--config", cfg]);
    ok(dir, &["recover", "--config", cfg]);
}
