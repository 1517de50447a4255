//! Run manifests and the single writer that produces every output file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use darkspec::config::RunConfig;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Files queued for writing plus per-stage timings.
pub struct Run {
    command: String,
    out: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    timings: Vec<(String, f64)>,
    stage: Option<(String, Instant)>,
    extra: Vec<(String, Value)>,
}

impl Run {
    pub fn new(command: &str, out: &Path) -> Self {
        Run { command: command.into(), out: out.into(), files: Vec::new(), timings: Vec::new(), stage: None, extra: Vec::new() }
    }

    pub fn stage(&mut self, name: &str) {
        self.end_stage();
        self.stage = Some((name.into(), Instant::now()));
    }

    fn end_stage(&mut self) {
        if let Some((n, t)) = self.stage.take() {
            self.timings.push((n, t.elapsed().as_secs_f64()));
        }
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn note(&mut self, key: &str, v: Value) {
        self.extra.push((key.into(), v));
    }

    /// Write every queued file and `manifest.json`.
    pub fn finish(mut self, cfg: Option<&RunConfig>) -> Result<()> {
        self.end_stage();
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let mut outputs = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.out.join(name);
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            outputs.push(json!({ "file": name, "bytes": bytes.len(), "sha256": sha256_hex(bytes) }));
        }
        let mut m = serde_json::Map::new();
        m.insert("command".into(), json!(self.command));
        m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        if let Some(c) = cfg {
            let g = &c.grids;
            m.insert("seed".into(), json!(c.system.rng_seed));
            m.insert("config".into(), json!(c.snapshot()));
            m.insert(
                "grids".into(),
                json!({
                    "n_t1": g.n1, "dt1_fs": g.dt1, "n_t3": g.n3, "dt3_fs": g.dt3, "t2_fs": g.t2,
                    "t_first_fs": g.t_first, "lattice_step_fs": g.lattice_step,
                    "n_linear": c.linear.n, "dt_linear_fs": c.linear.dt, "zero_pad": c.transform.zero_pad,
                }),
            );
        }
        m.insert("threads".into(), json!(rayon::current_num_threads()));
        m.insert("timings_s".into(), Value::Object(self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect()));
        m.insert("outputs".into(), json!(outputs));
        for (k, v) in self.extra {
            m.insert(k, v);
        }
        let path = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&Value::Object(m))? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
