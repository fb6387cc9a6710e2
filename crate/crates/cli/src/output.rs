//! Artifact files and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use raman_lc::trajectory::Integrator;
use raman_lc::Result;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One output file; `suffix` is appended to `<command>-<timestamp>`.
pub struct Artifact {
    pub suffix: String,
    pub body: Vec<u8>,
}

impl Artifact {
    /// A CSV whose header echoes the command and the resolved config.
    pub fn csv(suffix: &str, command: &str, cfg: &ExperimentConfig, body: Vec<u8>) -> Result<Self> {
        let mut out = format!(
            "# tool=raman-lc {VERSION}\n# command={command}\n# config={}\n",
            serde_json::to_string(cfg)?
        )
        .into_bytes();
        out.extend(body);
        Ok(Artifact { suffix: suffix.to_string(), body: out })
    }

    pub fn json(suffix: &str, command: &str, cfg: &ExperimentConfig, payload: Value) -> Result<Self> {
        let doc = json!({ "tool": "raman-lc", "version": VERSION, "command": command, "config": cfg, "result": payload });
        let mut body = serde_json::to_vec_pretty(&doc)?;
        body.push(b'\n');
        Ok(Artifact { suffix: suffix.to_string(), body })
    }
}

/// Modelling choices that shape every number the tool emits.
pub fn design_flags(cfg: &ExperimentConfig) -> Value {
    json!({
        "trion_decay": "total rate gamma per trion, gamma/2 per channel",
        "jump_integrator": match cfg.trajectory.integrator {
            Integrator::Exact => "exact propagator, binary search on the no-jump norm",
            Integrator::Rk4 => "fixed-step RK4 with norm bisection",
        },
        "initial_spin": "(|up> + |down>)/sqrt(2)",
        "success_trials": "disjoint n-bin blocks, P_s(k) = P_s(1)^k",
        "branch_relation": "Z on the last qubit maps S+ to -S-",
        "noise_model": "frozen Gaussian Overhauser field, one sample per protocol run",
        "noise_schedule": "fresh uniform tau_1 per bin and member",
        "g_h_z": if cfg.noise.g_h_z.is_some() { "configured" } else { "equal to g_h_x" },
        "fibonacci_lattice": "poles included",
        "tomography_grouping": "Fibonacci anchors snapped to record axes, then nearest-centroid refinement",
        "tomography_likelihood": "multinomial, Cholesky parameterisation, Nelder-Mead with restarts",
        "fusion_p_f_default": raman_lc::stats::DEFAULT_FUSION_SUCCESS,
        "number_format": "12 significant digits, scientific",
    })
}

/// Writes the artifacts and the manifest; returns the artifact paths.
pub fn write_run(
    out_dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    threads: usize,
    artifacts: &[Artifact],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.6fZ").to_string();
    let stem = format!("{command}-{stamp}");
    let mut paths = Vec::new();
    for a in artifacts {
        let path = out_dir.join(format!("{stem}{}", a.suffix));
        fs::write(&path, &a.body)?;
        paths.push(path);
    }
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let manifest = json!({
        "tool": "raman-lc",
        "version": VERSION,
        "command": command,
        "timestamp": stamp,
        "threads": threads,
        "config": cfg,
        "design_flags": design_flags(cfg),
        "artifacts": names,
    });
    let mut body = serde_json::to_vec_pretty(&manifest)?;
    body.push(b'\n');
    fs::write(out_dir.join(format!("{stem}.manifest.json")), body)?;
    Ok(paths)
}
