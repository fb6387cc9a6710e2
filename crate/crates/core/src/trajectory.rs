//! Quantum-jump (Monte Carlo wavefunction) unravelling of the driven dot.
//!
//! Between jumps the unnormalised state evolves under `H_eff`; a jump occurs
//! once `‖ψ‖²` falls to a uniform threshold `r ∈ (0, 1]`, the channel is drawn
//! with probability `∝ ‖Cₙψ‖²` and the state collapses. Because `H_eff` is
//! time independent and its anti-Hermitian part is negative semidefinite, the
//! no-jump norm is monotone in time and the crossing can be located by binary
//! search over cached propagators `exp(−iH_eff·dt·2ᵏ)`.

use std::io::Write;

use nalgebra::Matrix4;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::export::fmt_num;
use crate::rng;
use crate::system::{
    build_effective_hamiltonian, channel_rate, zeeman_frequencies, JumpChannel, LevelState,
    PhysicalParams, DOWN, TRION_DOWN, TRION_UP, UP,
};
use crate::{Error, Result, C64};

/// Refinement of the jump time below `dt_max`, as a power of two.
const FINE_LEVELS: usize = 20;
const NORM_ROUNDOFF: f64 = 1e-12;

/// No-jump propagation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Cached matrix exponentials with binary search on the norm.
    #[default]
    Exact,
    /// Fixed-step classical RK4 with norm bisection inside the crossing step.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Total simulated time (ns).
    pub duration: f64,
    /// Step cap (ns); also sets the jump-time tolerance `1e-6·dt_max`.
    pub dt_max: f64,
    pub seed: u64,
    /// Bin length (ns).
    #[serde(rename = "T_B")]
    pub t_bin: f64,
    /// Number of bins; zero disables bin bookkeeping.
    #[serde(default)]
    pub n_bins: usize,
    #[serde(default)]
    pub integrator: Integrator,
}

impl TrajectoryConfig {
    /// `n_bins` consecutive bins of length `t_bin`, default step cap `0.01/γ`.
    pub fn binned(t_bin: f64, n_bins: usize, seed: u64, gamma: f64) -> Self {
        TrajectoryConfig {
            duration: t_bin * n_bins as f64,
            dt_max: 0.01 / gamma,
            seed,
            t_bin,
            n_bins,
            integrator: Integrator::Exact,
        }
    }

    /// A single unbinned run of length `duration`.
    pub fn continuous(duration: f64, seed: u64, gamma: f64) -> Self {
        TrajectoryConfig {
            duration,
            dt_max: 0.01 / gamma,
            seed,
            t_bin: duration,
            n_bins: 0,
            integrator: Integrator::Exact,
        }
    }

    pub fn validate(&self, p: &PhysicalParams) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration = {}", self.duration)));
        }
        if !(self.dt_max > 0.0) || self.dt_max > 0.01 / p.gamma * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt_max = {} must lie in (0, 0.01/γ]",
                self.dt_max
            )));
        }
        if !(self.t_bin > 0.0) {
            return Err(Error::InvalidParameter(format!("T_B = {}", self.t_bin)));
        }
        if self.n_bins > 0 {
            let expect = self.t_bin * self.n_bins as f64;
            if (expect - self.duration).abs() > 1e-9 * self.duration {
                return Err(Error::InvalidParameter(format!(
                    "duration {} != n_bins·T_B = {}",
                    self.duration, expect
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterEvent {
    /// Emission time (ns).
    pub t: f64,
    pub channel: JumpChannel,
    pub bin_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub events: Vec<ScatterEvent>,
    /// Normalised state at the end of the run.
    pub final_state: LevelState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub stderr: f64,
    pub n_events: u64,
    pub total_time: f64,
}

impl RateEstimate {
    pub fn from_counts(n_events: u64, total_time: f64) -> Self {
        RateEstimate {
            rate: n_events as f64 / total_time,
            stderr: (n_events as f64).sqrt() / total_time,
            n_events,
            total_time,
        }
    }
}

/// `(|⇑⟩ + |⇓⟩)/√2`.
pub fn default_initial_state() -> LevelState {
    let a = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    LevelState::new(a, a, C64::from(0.0), C64::from(0.0))
}

/// Precomputed no-jump propagators for one parameter set and step cap.
///
/// Immutable once built and shared read-only across trajectories.
#[derive(Debug, Clone)]
pub struct JumpEngine {
    params: PhysicalParams,
    h_eff: Matrix4<C64>,
    dt: f64,
    /// `exp(−iH_eff·dt·2ᵏ)`, `k = 0..`.
    coarse: Vec<Matrix4<C64>>,
    /// `exp(−iH_eff·dt·2⁻ʲ)`, `j = 1..=FINE_LEVELS`.
    fine: Vec<Matrix4<C64>>,
}

impl JumpEngine {
    /// Builds propagators able to cover runs of up to `max_duration` ns.
    pub fn new(params: &PhysicalParams, dt_max: f64, max_duration: f64) -> Result<Self> {
        params.validate()?;
        if !(dt_max > 0.0) {
            return Err(Error::InvalidParameter(format!("dt_max = {dt_max}")));
        }
        let h_eff = build_effective_hamiltonian(params);
        let levels = ((max_duration / dt_max).max(1.0).log2().ceil() as usize) + 1;
        let prop = |tau: f64| (h_eff * C64::new(0.0, -tau)).exp();
        let coarse = (0..levels).map(|k| prop(dt_max * (1u64 << k) as f64)).collect();
        let fine = (1..=FINE_LEVELS)
            .map(|j| prop(dt_max / (1u64 << j) as f64))
            .collect();
        Ok(JumpEngine { params: *params, h_eff, dt: dt_max, coarse, fine })
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    /// Jump-time resolution (ns).
    pub fn resolution(&self) -> f64 {
        self.dt / (1u64 << FINE_LEVELS) as f64
    }

    fn propagate(&self, psi: &LevelState, tau: f64) -> LevelState {
        (self.h_eff * C64::new(0.0, -tau)).exp() * psi
    }

    /// Runs one trajectory on random stream `stream` of `config.seed`.
    pub fn run(
        &self,
        config: &TrajectoryConfig,
        initial: &LevelState,
        stream: u64,
    ) -> Result<Trajectory> {
        config.validate(&self.params)?;
        let max_cover = self.dt * ((1u64 << self.coarse.len()) as f64);
        if config.duration > max_cover {
            return Err(Error::InvalidParameter(format!(
                "duration {} exceeds engine coverage {}",
                config.duration, max_cover
            )));
        }
        if (config.dt_max - self.dt).abs() > 1e-15 * self.dt && config.integrator == Integrator::Exact {
            return Err(Error::InvalidParameter("engine built for a different dt_max".into()));
        }
        let mut rng = rng::stream(config.seed, stream);
        let n0 = initial.norm();
        if !(n0 > 0.0) {
            return Err(Error::InvalidParameter("zero initial state".into()));
        }
        let mut psi = initial / C64::from(n0);
        let mut t = 0.0;
        let mut events = Vec::new();
        loop {
            let threshold = 1.0 - rng.random::<f64>();
            let remaining = config.duration - t;
            let step = match config.integrator {
                Integrator::Exact => self.advance_exact(&psi, remaining, threshold, t)?,
                Integrator::Rk4 => self.advance_rk4(&psi, remaining, config.dt_max, threshold, t)?,
            };
            match step {
                Advance::Finished(end) => {
                    psi = end;
                    break;
                }
                Advance::Jump { elapsed, state } => {
                    t += elapsed;
                    let (channel, collapsed) = self.collapse(&state, rng.random::<f64>(), t)?;
                    psi = collapsed;
                    let bin_index = (t / config.t_bin).floor() as usize;
                    events.push(ScatterEvent { t, channel, bin_index });
                }
            }
        }
        let n = psi.norm();
        Ok(Trajectory { events, final_state: psi / C64::from(n) })
    }

    fn advance_exact(
        &self,
        psi: &LevelState,
        remaining: f64,
        threshold: f64,
        t: f64,
    ) -> Result<Advance> {
        let end = self.propagate(psi, remaining);
        let end_norm = end.norm_squared();
        if !end_norm.is_finite() {
            return Err(Error::NonConvergence { time: t, tolerance: self.resolution() });
        }
        if end_norm > threshold {
            return Ok(Advance::Finished(end));
        }
        // Largest lattice advance that keeps the norm above threshold.
        let mut advanced = 0.0;
        let mut phi = *psi;
        for (k, u) in self.coarse.iter().enumerate().rev() {
            let step = self.dt * (1u64 << k) as f64;
            if advanced + step >= remaining {
                continue;
            }
            let trial = u * phi;
            if trial.norm_squared() > threshold {
                phi = trial;
                advanced += step;
            }
        }
        for (j, u) in self.fine.iter().enumerate() {
            let step = self.dt / (1u64 << (j + 1)) as f64;
            if advanced + step >= remaining {
                continue;
            }
            let trial = u * phi;
            if trial.norm_squared() > threshold {
                phi = trial;
                advanced += step;
            }
        }
        let last = self.fine[FINE_LEVELS - 1] * phi;
        // Different products of cached propagators agree only to round-off.
        let n_last = last.norm_squared();
        if !n_last.is_finite() || n_last > threshold + NORM_ROUNDOFF {
            return Err(Error::NonConvergence { time: t + advanced, tolerance: self.resolution() });
        }
        Ok(Advance::Jump { elapsed: advanced + self.resolution(), state: last })
    }

    fn rk4_step(&self, psi: &LevelState, h: f64) -> LevelState {
        let a = self.h_eff * C64::new(0.0, -1.0);
        let k1 = a * psi;
        let k2 = a * (psi + k1 * C64::from(h / 2.0));
        let k3 = a * (psi + k2 * C64::from(h / 2.0));
        let k4 = a * (psi + k3 * C64::from(h));
        psi + (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(h / 6.0)
    }

    fn advance_rk4(
        &self,
        psi: &LevelState,
        remaining: f64,
        dt: f64,
        threshold: f64,
        t: f64,
    ) -> Result<Advance> {
        let tolerance = 1e-6 * dt;
        let mut elapsed = 0.0;
        let mut phi = *psi;
        while elapsed < remaining {
            let h = dt.min(remaining - elapsed);
            let next = self.rk4_step(&phi, h);
            let n2 = next.norm_squared();
            if !n2.is_finite() {
                return Err(Error::NonConvergence { time: t + elapsed, tolerance });
            }
            if n2 > threshold {
                phi = next;
                elapsed += h;
                continue;
            }
            let (mut lo, mut hi) = (0.0, h);
            let mut iterations = 0;
            while hi - lo > tolerance {
                iterations += 1;
                if iterations > 200 {
                    return Err(Error::NonConvergence { time: t + elapsed, tolerance });
                }
                let mid = 0.5 * (lo + hi);
                if self.rk4_step(&phi, mid).norm_squared() > threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(Advance::Jump { elapsed: elapsed + hi, state: self.rk4_step(&phi, hi) });
        }
        Ok(Advance::Finished(phi))
    }

    fn collapse(&self, psi: &LevelState, u: f64, t: f64) -> Result<(JumpChannel, LevelState)> {
        let rate = channel_rate(self.params.gamma);
        let weights: Vec<f64> = JumpChannel::ALL
            .iter()
            .map(|c| rate * psi[c.levels().1].norm_sqr())
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NonConvergence { time: t, tolerance: self.resolution() });
        }
        let mut acc = 0.0;
        let mut chosen = JumpChannel::ALL[3];
        for (c, w) in JumpChannel::ALL.iter().zip(&weights) {
            acc += w / total;
            if u < acc {
                chosen = *c;
                break;
            }
        }
        let (ground, trion) = chosen.levels();
        let amp = psi[trion];
        let mut out = LevelState::zeros();
        out[ground] = amp / amp.norm();
        Ok((chosen, out))
    }
}

enum Advance {
    Finished(LevelState),
    Jump { elapsed: f64, state: LevelState },
}

/// Single trajectory from `(|⇑⟩ + |⇓⟩)/√2` on stream 0.
pub fn run_trajectory(p: &PhysicalParams, c: &TrajectoryConfig) -> Result<Trajectory> {
    run_trajectory_from(p, c, &default_initial_state())
}

pub fn run_trajectory_from(
    p: &PhysicalParams,
    c: &TrajectoryConfig,
    initial: &LevelState,
) -> Result<Trajectory> {
    let engine = JumpEngine::new(p, c.dt_max, c.duration)?;
    engine.run(c, initial, 0)
}

/// Runs `n_traj` independent trajectories (streams `0..n_traj`).
pub fn run_ensemble(
    p: &PhysicalParams,
    c: &TrajectoryConfig,
    n_traj: usize,
) -> Result<Vec<Trajectory>> {
    let engine = JumpEngine::new(p, c.dt_max, c.duration)?;
    let init = default_initial_state();
    (0..n_traj as u64)
        .into_par_iter()
        .map(|i| engine.run(c, &init, i))
        .collect()
}

/// Rate of events accepted by `filter`, pooled over `n_traj` trajectories.
pub fn estimate_rate(
    p: &PhysicalParams,
    c: &TrajectoryConfig,
    n_traj: usize,
    filter: impl Fn(JumpChannel) -> bool + Sync,
) -> Result<RateEstimate> {
    let engine = JumpEngine::new(p, c.dt_max, c.duration)?;
    let init = default_initial_state();
    let counts: Vec<u64> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            engine
                .run(c, &init, i)
                .map(|tr| tr.events.iter().filter(|e| filter(e.channel)).count() as u64)
        })
        .collect::<Result<_>>()?;
    Ok(RateEstimate::from_counts(counts.iter().sum(), c.duration * n_traj as f64))
}

/// H-polarised (Raman) event rate.
pub fn estimate_raman_rate(
    p: &PhysicalParams,
    c: &TrajectoryConfig,
    n_traj: usize,
) -> Result<RateEstimate> {
    estimate_rate(p, c, n_traj, JumpChannel::is_raman)
}

/// Second-order Raman scattering rate `Ω_V² γ / (8 Δ²)`.
pub fn perturbative_rate(p: &PhysicalParams) -> Result<f64> {
    let delta = p.raman_detuning();
    if delta == 0.0 {
        return Err(Error::DegenerateDetuning);
    }
    Ok(p.omega_v * p.omega_v * p.gamma / (8.0 * delta * delta))
}

/// Second-order Raman-flip amplitudes `(⇓→⇑, ⇑→⇓)`.
///
/// Only the vertically driven path contributes: the drive element is `−Ω_V/2`,
/// the emission element `√(γ/2)` and the energy denominators are `δ_h + δ_e`
/// and `−δ_h − δ_e` respectively, so `|amp|²` equals [`perturbative_rate`].
pub fn raman_amplitudes(p: &PhysicalParams) -> Result<(f64, f64)> {
    let (dh, de) = zeeman_frequencies(p);
    let (denom_down_up, denom_up_down) = (dh + de, -dh - de);
    if denom_down_up == 0.0 || denom_up_down == 0.0 {
        return Err(Error::DegenerateDetuning);
    }
    let numerator = (-p.omega_v / 2.0) * channel_rate(p.gamma).sqrt();
    Ok((numerator / denom_down_up, numerator / denom_up_down))
}

/// Raman (H-polarised) counts per bin; events past the last bin are ignored.
pub fn bin_statistics(events: &[ScatterEvent], t_bin: f64, n_bins: usize) -> Vec<usize> {
    let mut counts = vec![0; n_bins];
    for e in events.iter().filter(|e| e.channel.is_raman()) {
        let b = (e.t / t_bin).floor() as usize;
        if b < n_bins {
            counts[b] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessEstimate {
    pub probability: f64,
    pub stderr: f64,
    pub successes: u64,
    pub trials: u64,
}

impl SuccessEstimate {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let p = successes as f64 / trials as f64;
        SuccessEstimate {
            probability: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
            successes,
            trials,
        }
    }
}

/// Probability that `n` consecutive bins each hold exactly one Raman event.
///
/// Every trajectory is one independent `n`-bin block started from
/// `(|⇑⟩ + |⇓⟩)/√2`.
pub fn success_probability(
    p: &PhysicalParams,
    t_bin: f64,
    n: usize,
    n_traj: usize,
    seed: u64,
) -> Result<SuccessEstimate> {
    if n == 0 || n_traj == 0 {
        return Err(Error::InvalidParameter("need n >= 1 and n_traj >= 1".into()));
    }
    let config = TrajectoryConfig::binned(t_bin, n, seed, p.gamma);
    let engine = JumpEngine::new(p, config.dt_max, config.duration)?;
    let init = default_initial_state();
    let hits: Vec<bool> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            engine
                .run(&config, &init, i)
                .map(|tr| bin_statistics(&tr.events, t_bin, n).iter().all(|&k| k == 1))
        })
        .collect::<Result<_>>()?;
    let successes = hits.iter().filter(|&&h| h).count() as u64;
    Ok(SuccessEstimate::from_counts(successes, n_traj as u64))
}

/// Streams event logs as CSV `(trajectory_id, t_ns, channel, bin_index)`.
pub fn write_events_csv<W: Write>(out: &mut W, trajectories: &[Trajectory]) -> Result<()> {
    writeln!(out, "trajectory_id,t_ns,channel,bin_index")?;
    for (id, tr) in trajectories.iter().enumerate() {
        for e in &tr.events {
            writeln!(out, "{},{},{},{}", id, fmt_num(e.t), e.channel, e.bin_index)?;
        }
    }
    Ok(())
}

/// Spin flips implied by a channel: `Some(new spin)` for Raman, `None` otherwise.
pub fn spin_after(channel: JumpChannel) -> Option<usize> {
    match channel {
        JumpChannel::RamanRed => Some(UP),
        JumpChannel::RamanBlue => Some(DOWN),
        _ => None,
    }
}

#[doc(hidden)]
pub fn trion_population(psi: &LevelState) -> f64 {
    psi[TRION_UP].norm_sqr() + psi[TRION_DOWN].norm_sqr()
}
