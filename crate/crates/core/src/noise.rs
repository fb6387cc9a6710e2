//! Frozen Overhauser-field fluctuations acting on the hole pseudospin.
//!
//! The spin basis `{⇑, ⇓}` is quantised along the external field `x`. In that
//! basis the precession generator is `Ω·σ/2` with `σ_z ↔ x`, `σ_x ↔ z` and
//! `σ_y ↔ y`, so ideal precession is `diag(e^{−iφ/2}, e^{iφ/2})`.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::protocol::{run_protocol_with, u_p_matrix, ScatterSchedule};
use crate::rng;
use crate::system::MU_B_OVER_HBAR;
use crate::{overlap_fidelity, Error, Result, C64};

pub const MIN_SAMPLES: usize = 100;

fn all_active() -> [bool; 3] {
    [true; 3]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverhauserParams {
    /// Standard deviation of `B_z` (mT).
    pub delta_b_perp: f64,
    /// In-plane spread is `alpha·delta_b_perp`.
    pub alpha: f64,
    /// Mean field `(x, y, z)` in mT.
    #[serde(default)]
    pub mean: [f64; 3],
    /// Components that fluctuate at all; an inactive component is zero.
    #[serde(default = "all_active")]
    pub active: [bool; 3],
}

impl OverhauserParams {
    pub fn new(delta_b_perp: f64, alpha: f64) -> Self {
        OverhauserParams { delta_b_perp, alpha, mean: [0.0; 3], active: all_active() }
    }

    /// Keeps only the in-plane component parallel to the external field.
    pub fn parallel_only(mut self) -> Self {
        self.active = [true, false, false];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_b_perp >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta_B_perp = {}", self.delta_b_perp)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("non-finite mean field".into()));
        }
        Ok(())
    }

    /// Standard deviations `(σ_x, σ_y, σ_z)`.
    pub fn sigmas(&self) -> [f64; 3] {
        let par = self.alpha * self.delta_b_perp;
        [par, par, self.delta_b_perp]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverhauserSample {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl OverhauserSample {
    pub const ZERO: OverhauserSample = OverhauserSample { bx: 0.0, by: 0.0, bz: 0.0 };
}

/// Hole g-factor along the external field and along the growth axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleGFactor {
    pub x: f64,
    pub z: f64,
}

impl HoleGFactor {
    pub fn isotropic(g: f64) -> Self {
        HoleGFactor { x: g, z: g }
    }
}

pub fn sample_overhauser_with<R: Rng + ?Sized>(op: &OverhauserParams, rng: &mut R) -> OverhauserSample {
    let s = op.sigmas();
    let mut draw = |i: usize| {
        if !op.active[i] {
            return 0.0;
        }
        if s[i] == 0.0 {
            return op.mean[i];
        }
        Normal::new(op.mean[i], s[i]).expect("finite positive sigma").sample(rng)
    };
    let bx = draw(0);
    let by = draw(1);
    let bz = draw(2);
    OverhauserSample { bx, by, bz }
}

/// One frozen sample from stream 0 of `seed`.
pub fn sample_overhauser(op: &OverhauserParams, seed: u64) -> Result<OverhauserSample> {
    op.validate()?;
    Ok(sample_overhauser_with(op, &mut rng::stream(seed, 0)))
}

/// Exact precession `exp(−i t Ω·σ/2)` about the total field.
pub fn noisy_precession(
    omega_b: f64,
    sample: &OverhauserSample,
    g: HoleGFactor,
    duration: f64,
) -> Matrix2<C64> {
    let wz = omega_b + g.x * MU_B_OVER_HBAR * sample.bx; // along σ_z
    let wy = g.x * MU_B_OVER_HBAR * sample.by;
    let wx = g.z * MU_B_OVER_HBAR * sample.bz;
    let w = (wx * wx + wy * wy + wz * wz).sqrt();
    if w == 0.0 {
        return Matrix2::identity();
    }
    if wx == 0.0 && wy == 0.0 {
        return u_p_matrix(wz * duration);
    }
    let half = w * duration / 2.0;
    let (c, s) = (half.cos(), half.sin());
    let (nx, ny, nz) = (wx / w, wy / w, wz / w);
    let i = C64::new(0.0, 1.0);
    Matrix2::new(
        C64::new(c, 0.0) - i * s * nz,
        -i * s * C64::new(nx, -ny),
        -i * s * C64::new(nx, ny),
        C64::new(c, 0.0) + i * s * nz,
    )
}

/// `1/2 + √(2π)/(4x)·erf(x/√2)` with `x = T_B·δω`.
pub fn analytic_fidelity_n1(t_bin: f64, delta_omega: f64) -> f64 {
    let x = t_bin * delta_omega;
    if x < 1e-8 {
        return 1.0 - x * x / 12.0;
    }
    0.5 + (2.0 * std::f64::consts::PI).sqrt() / (4.0 * x) * libm::erf(x / std::f64::consts::SQRT_2)
}

/// How each ensemble member obtains its scattering times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSource {
    Fixed(ScatterSchedule),
    /// Fresh uniform `τ₁` per bin for every member.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityConfig {
    pub n: usize,
    /// External field (mT).
    pub b_ext: f64,
    /// Bin length (ns).
    pub t_bin: f64,
    pub g: HoleGFactor,
    pub schedule: ScheduleSource,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub fidelity: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ensemble-averaged overlap `⟨ψ_ideal|ρ̄|ψ_ideal⟩` of the joint spin–photon
/// state, one frozen field sample per protocol run.
///
/// With [`ScheduleSource::Uniform`] the ideal state is rebuilt for each member
/// from the same scattering times, and the result is the mean of the
/// per-member overlaps.
pub fn ensemble_fidelity(cfg: &FidelityConfig, op: &OverhauserParams) -> Result<FidelityEstimate> {
    op.validate()?;
    if cfg.n_samples < MIN_SAMPLES {
        return Err(Error::SampleBudgetTooSmall { got: cfg.n_samples, min: MIN_SAMPLES });
    }
    if cfg.n == 0 || !(cfg.t_bin > 0.0) || !(cfg.b_ext >= 0.0) {
        return Err(Error::InvalidParameter("need n >= 1, T_B > 0, B_ext >= 0".into()));
    }
    if let ScheduleSource::Fixed(s) = &cfg.schedule {
        s.validate(cfg.n, cfg.t_bin)?;
    }
    let omega_b = cfg.g.x * MU_B_OVER_HBAR * cfg.b_ext;
    let ideal_p = |sched: &ScatterSchedule| {
        run_protocol_with(cfg.n, sched, cfg.t_bin, |_, t| u_p_matrix(omega_b * t))
    };
    let fixed_ideal = match &cfg.schedule {
        ScheduleSource::Fixed(s) => Some(ideal_p(s)?),
        ScheduleSource::Uniform => None,
    };
    let values: Vec<f64> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i);
            let owned;
            let (sched, ideal) = match (&cfg.schedule, &fixed_ideal) {
                (ScheduleSource::Fixed(s), Some(ideal)) => (s, ideal.clone()),
                _ => {
                    owned = ScatterSchedule::uniform(cfg.n, cfg.t_bin, &mut r);
                    (&owned, ideal_p(&owned)?)
                }
            };
            let sample = sample_overhauser_with(op, &mut r);
            let noisy = run_protocol_with(cfg.n, sched, cfg.t_bin, |_, t| {
                noisy_precession(omega_b, &sample, cfg.g, t)
            })?;
            Ok(overlap_fidelity(ideal.amplitudes(), noisy.amplitudes()))
        })
        .collect::<Result<_>>()?;
    let (fidelity, stderr) = mean_and_stderr(&values);
    Ok(FidelityEstimate { fidelity, stderr, n_samples: cfg.n_samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub t: Vec<f64>,
    pub envelope: Vec<f64>,
    pub stderr: Vec<f64>,
    /// First `1/e` crossing, linearly interpolated.
    pub t2_star: Option<f64>,
    /// Spread of the crossing over independent batches.
    pub t2_stderr: Option<f64>,
}

const COHERENCE_BATCHES: usize = 20;

fn first_crossing(t: &[f64], env: &[f64]) -> Option<f64> {
    let level = (-1.0f64).exp();
    for i in 1..t.len() {
        if env[i] <= level {
            let (e0, e1) = (env[i - 1], env[i]);
            if e0 <= level {
                return Some(t[i - 1]);
            }
            return Some(t[i - 1] + (t[i] - t[i - 1]) * (e0 - level) / (e0 - e1));
        }
    }
    None
}

/// Transverse-coherence envelope `2|⟨ρ_{⇑⇓}(t)⟩|` of a spin prepared along
/// `(|⇑⟩ + |⇓⟩)/√2`.
///
/// The magnitude of the ensemble average is unchanged by going to the frame
/// rotating at `ω_B`, so no frame transformation is applied.
pub fn coherence_curve(
    b_ext: f64,
    op: &OverhauserParams,
    g: HoleGFactor,
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<CoherenceCurve> {
    op.validate()?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::SampleBudgetTooSmall { got: n_samples, min: MIN_SAMPLES });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] < 0.0 {
        return Err(Error::InvalidParameter("t_grid must be non-negative and ascending".into()));
    }
    let omega_b = g.x * MU_B_OVER_HBAR * b_ext;
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    // per-sample coherence trace ρ_{⇑⇓}(t)
    let traces: Vec<Vec<C64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let sample = sample_overhauser_with(op, &mut rng::stream(seed, i));
            t_grid
                .iter()
                .map(|&t| {
                    let u = noisy_precession(omega_b, &sample, g, t);
                    let up = u[(0, 0)] * h + u[(0, 1)] * h;
                    let down = u[(1, 0)] * h + u[(1, 1)] * h;
                    up * down.conj()
                })
                .collect()
        })
        .collect();
    let average = |rows: &[Vec<C64>]| -> Vec<f64> {
        let n = rows.len() as f64;
        (0..t_grid.len())
            .map(|j| 2.0 * (rows.iter().map(|r| r[j]).sum::<C64>() / n).norm())
            .collect()
    };
    let envelope = average(&traces);
    let batch = n_samples / COHERENCE_BATCHES;
    let batches: Vec<Vec<f64>> =
        traces.chunks(batch).take(COHERENCE_BATCHES).map(average).collect();
    let stderr = (0..t_grid.len())
        .map(|j| {
            let col: Vec<f64> = batches.iter().map(|b| b[j]).collect();
            mean_and_stderr(&col).1
        })
        .collect();
    let t2_star = first_crossing(t_grid, &envelope);
    let batch_t2: Vec<f64> = batches.iter().filter_map(|b| first_crossing(t_grid, b)).collect();
    let t2_stderr = (t2_star.is_some() && batch_t2.len() == batches.len())
        .then(|| mean_and_stderr(&batch_t2).1);
    Ok(CoherenceCurve { t: t_grid.to_vec(), envelope, stderr, t2_star, t2_stderr })
}

/// As [`coherence_curve`], failing with `NoCrossing` when the envelope never
/// falls to `1/e`.
pub fn coherence_envelope(
    b_ext: f64,
    op: &OverhauserParams,
    g: HoleGFactor,
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(CoherenceCurve, f64)> {
    let curve = coherence_curve(b_ext, op, g, t_grid, n_samples, seed)?;
    match curve.t2_star {
        Some(t2) => Ok((curve, t2)),
        None => Err(Error::NoCrossing),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> HoleGFactor {
        HoleGFactor::isotropic(0.1)
    }

    fn unitary_err(u: &Matrix2<C64>) -> f64 {
        (u.adjoint() * u - Matrix2::identity()).norm()
    }

    #[test]
    fn zero_spread_returns_mean() {
        let mut op = OverhauserParams::new(0.0, 0.5);
        op.mean = [1.0, -2.0, 3.5];
        let s = sample_overhauser(&op, 9).unwrap();
        assert_eq!((s.bx, s.by, s.bz), (1.0, -2.0, 3.5));
    }

    #[test]
    fn alpha_zero_freezes_in_plane() {
        let op = OverhauserParams::new(14.0, 0.0);
        let mut r = rng::stream(1, 0);
        for _ in 0..100 {
            let s = sample_overhauser_with(&op, &mut r);
            assert_eq!((s.bx, s.by), (0.0, 0.0));
        }
    }

    #[test]
    fn sample_spreads() {
        let op = OverhauserParams::new(14.0, 0.5);
        let mut r = rng::stream(2, 0);
        let n = 100_000;
        let samples: Vec<_> = (0..n).map(|_| sample_overhauser_with(&op, &mut r)).collect();
        let sd = |f: &dyn Fn(&OverhauserSample) -> f64| {
            let m = samples.iter().map(f).sum::<f64>() / n as f64;
            (samples.iter().map(|s| (f(s) - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        assert!((sd(&|s| s.bz) / 14.0 - 1.0).abs() < 0.01);
        assert!((sd(&|s| s.bx) / 7.0 - 1.0).abs() < 0.01);
        assert!((sd(&|s| s.by) / 7.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn precession_without_noise_is_u_p() {
        let u = noisy_precession(0.7, &OverhauserSample::ZERO, g(), 13.0);
        assert!((u - u_p_matrix(0.7 * 13.0)).norm() < 1e-15);
    }

    #[test]
    fn parallel_noise_shifts_rate() {
        let s = OverhauserSample { bx: 3.0, by: 0.0, bz: 0.0 };
        let u = noisy_precession(0.7, &s, g(), 13.0);
        let wn = 0.1 * MU_B_OVER_HBAR * 3.0;
        assert!((u - u_p_matrix((0.7 + wn) * 13.0)).norm() < 1e-15);
    }

    #[test]
    fn precession_is_unitary_and_composes() {
        let s = OverhauserSample { bx: 0.3, by: -4.0, bz: 11.0 };
        let gz = HoleGFactor { x: 0.1, z: 0.3 };
        let u = noisy_precession(1.3, &s, gz, 7.5);
        assert!(unitary_err(&u) < 1e-14);
        assert!((u.determinant().norm() - 1.0).abs() < 1e-14);
        let split = noisy_precession(1.3, &s, gz, 2.5) * noisy_precession(1.3, &s, gz, 5.0);
        assert!((split - u).norm() < 1e-13);
    }

    #[test]
    fn analytic_limits() {
        assert!((analytic_fidelity_n1(1e-3, 1e-7) - 1.0).abs() < 1e-12);
        assert!((analytic_fidelity_n1(1e6, 1.0) - 0.5).abs() < 1e-3);
        for x in [1e-6, 1e-3, 0.1, 1.0, 10.0, 1e3] {
            let f = analytic_fidelity_n1(x, 1.0);
            assert!(f > 0.5 && f <= 1.0);
        }
        // continuity across the series switch
        let below = analytic_fidelity_n1(0.999e-8, 1.0);
        let above = analytic_fidelity_n1(1.001e-8, 1.0);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn noiseless_ensemble_is_perfect() {
        let cfg = FidelityConfig {
            n: 3,
            b_ext: 100.0,
            t_bin: 500.0,
            g: g(),
            schedule: ScheduleSource::Uniform,
            n_samples: 100,
            seed: 1,
        };
        let f = ensemble_fidelity(&cfg, &OverhauserParams::new(0.0, 0.3)).unwrap();
        assert!((f.fidelity - 1.0).abs() < 1e-10);
        let small = FidelityConfig { n_samples: 50, ..cfg };
        assert!(matches!(
            ensemble_fidelity(&small, &OverhauserParams::new(0.0, 0.3)),
            Err(Error::SampleBudgetTooSmall { got: 50, min: 100 })
        ));
    }

    #[test]
    fn coherence_without_noise_never_decays() {
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 10.0).collect();
        let op = OverhauserParams::new(0.0, 0.1);
        let c = coherence_curve(100.0, &op, g(), &grid, 100, 3).unwrap();
        assert!(c.envelope.iter().all(|e| (e - 1.0).abs() < 1e-12));
        assert!(matches!(
            coherence_envelope(100.0, &op, g(), &grid, 100, 3),
            Err(Error::NoCrossing)
        ));
    }

    #[test]
    fn coherence_starts_at_one() {
        let grid = [0.0, 1.0, 2.0];
        let c = coherence_curve(50.0, &OverhauserParams::new(14.0, 0.1), g(), &grid, 200, 4).unwrap();
        assert!((c.envelope[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_only_coherence_is_gaussian() {
        // only B_x: envelope exp(−σ_ω² t² / 2)
        let op = OverhauserParams::new(14.0, 0.1).parallel_only();
        let sw = 0.1 * MU_B_OVER_HBAR * 1.4;
        let grid: Vec<f64> = (0..200).map(|i| i as f64 * 2.0).collect();
        let (_, t2) = coherence_envelope(200.0, &op, g(), &grid, 20_000, 5).unwrap();
        let expect = std::f64::consts::SQRT_2 / sw;
        assert!((t2 / expect - 1.0).abs() < 0.03, "{t2} vs {expect}");
    }

    #[test]
    fn crossing_interpolation() {
        let level = (-1.0f64).exp();
        let t = [0.0, 1.0, 2.0];
        let env = [1.0, 0.5, 0.25];
        let x = first_crossing(&t, &env).unwrap();
        assert!((x - (1.0 + (0.5 - level) / 0.25)).abs() < 1e-12);
        assert_eq!(first_crossing(&t, &[1.0, 0.9, 0.8]), None);
    }
}
