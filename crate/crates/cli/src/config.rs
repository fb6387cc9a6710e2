//! Experiment configuration: JSON file, defaults, and flag overrides.

use std::path::Path;

use raman_lc::noise::{HoleGFactor, OverhauserParams};
use raman_lc::system::PhysicalParams;
use raman_lc::tomography::PhaseLaw;
use raman_lc::trajectory::Integrator;
use raman_lc::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub physical: PhysicalParams,
    pub trajectory: TrajectorySection,
    pub noise: NoiseSection,
    pub options: Options,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub n_traj: usize,
    /// Unbinned run length for `rate` (ns).
    pub duration: f64,
    #[serde(rename = "T_B")]
    pub t_bin: f64,
    pub n_bins: usize,
    pub integrator: Integrator,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        TrajectorySection {
            n_traj: 200,
            duration: 1e5,
            t_bin: 500.0,
            n_bins: 10,
            integrator: Integrator::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub overhauser: OverhauserParams,
    /// Growth-axis hole g-factor; `null` means equal to `physical.g_h_x`.
    pub g_h_z: Option<f64>,
    pub n_samples: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { overhauser: OverhauserParams::new(14.0, 0.01), g_h_z: None, n_samples: 2000 }
    }
}

impl NoiseSection {
    pub fn g(&self, p: &PhysicalParams) -> HoleGFactor {
        HoleGFactor { x: p.g_h_x, z: self.g_h_z.unwrap_or(p.g_h_x) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    /// Photons in the string (`protocol`, `verify`, `fidelity`, `le`, `stats`).
    pub n: usize,
    /// `protocol`: draw uniform scattering times instead of `τ₁ = 0`.
    pub random_schedule: bool,
    /// Detector efficiency for `stats`.
    pub eta: f64,
    #[serde(rename = "T_B_grid")]
    pub t_bin_grid: Vec<f64>,
    /// Coherence time grid `[0, t_max]` with `t_points` samples (ns).
    pub t_max: f64,
    pub t_points: usize,
    /// Bloch points per measured qubit for `le`.
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub p_f: f64,
    pub events: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub law: PhaseLaw,
    /// Bloch angles of the simulated tomography state.
    pub theta: f64,
    pub phi: f64,
    /// Records CSV to reconstruct instead of simulating.
    pub records: Option<String>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            n: 4,
            random_schedule: true,
            eta: 1.0,
            t_bin_grid: (1..=16).map(|i| 125.0 * i as f64).collect(),
            t_max: 1000.0,
            t_points: 201,
            m: 5,
            l: 5,
            p_f: raman_lc::stats::DEFAULT_FUSION_SUCCESS,
            events: 10_000,
            k: 16,
            law: PhaseLaw::Uniform,
            theta: 1.0,
            phi: 0.5,
            records: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(ExperimentConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::InvalidParameter(format!("cannot read config {}: {e}", p.display()))
                })?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        self.noise.overhauser.validate()?;
        let t = &self.trajectory;
        if t.n_traj == 0 || t.n_bins == 0 || !(t.t_bin > 0.0) || !(t.duration > 0.0) {
            return Err(Error::InvalidParameter(
                "trajectory needs n_traj, n_bins >= 1 and T_B, duration > 0".into(),
            ));
        }
        if self.options.n == 0 {
            return Err(Error::InvalidParameter("options.n must be >= 1".into()));
        }
        Ok(())
    }
}
