//! Single-qubit tomography when every shot carries a random but known phase.
//!
//! In the frame co-rotating with the state the phase becomes a rotation of
//! the measurement axis, so each record stores its own static-frame axis.
//! Records are grouped by proximity into effective projectors and the state
//! is reconstructed by maximum likelihood over a Cholesky parameterisation.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entanglement::{fibonacci_bloch_points, DensityMatrix};
use crate::export::{fmt_num, write_csv};
use crate::optim::{nelder_mead, Minimum, NelderMeadOptions};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result, C64};

const AXIS_TOL: f64 = 1e-12;
/// Accepted axis-norm error for ingested CSV, which carries 12 digits.
const CSV_AXIS_TOL: f64 = 1e-9;
const COMPLETENESS_TOL: f64 = 1e-9;
const STALL_TOL: f64 = 1e-8;
const MAX_LLOYD_ITERATIONS: usize = 2000;
const PROB_FLOOR: f64 = 1e-300;
const EIGEN_FLOOR: f64 = 1e-13;

/// Nominal Pauli measurement settings cycled by the simulated experiment.
pub const PAULI_AXES: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub axis: [f64; 3],
    /// `+1` or `−1`.
    pub outcome: i8,
}

impl MeasurementRecord {
    pub fn new(axis: [f64; 3], outcome: i8) -> Result<Self> {
        let r = MeasurementRecord { axis, outcome };
        r.validate(AXIS_TOL)?;
        Ok(r)
    }

    fn validate(&self, tol: f64) -> Result<()> {
        let norm = Vector3::from(self.axis).norm();
        if !((norm - 1.0).abs() <= tol) {
            return Err(Error::InvalidParameter(format!("axis norm {norm} is not 1")));
        }
        if self.outcome != 1 && self.outcome != -1 {
            return Err(Error::InvalidParameter(format!("outcome {} is not ±1", self.outcome)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorGroup {
    /// Normalised mean of the member axes.
    pub axis: [f64; 3],
    /// Indices into the record list.
    pub members: Vec<usize>,
    pub n_plus: usize,
    pub n_minus: usize,
}

impl ProjectorGroup {
    pub fn total(&self) -> usize {
        self.n_plus + self.n_minus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub groups: Vec<ProjectorGroup>,
    /// Anchors (by Fibonacci index) that ended up without records.
    pub dropped_anchors: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
#[derive(Default)]
pub enum PhaseLaw {
    /// Every shot sees the same phase.
    Fixed { phi: f64 },
    /// Phase uniform on `[0, 2π)`, rotating the nominal axis about z.
    #[default]
    Uniform,
    /// Static-frame axis uniform on the sphere, as for a random unitary per shot.
    Haar,
}


/// Bloch vector of a normalised qubit state.
pub fn bloch_vector(psi: &[C64; 2]) -> [f64; 3] {
    let c = psi[0].conj() * psi[1];
    [2.0 * c.re, 2.0 * c.im, psi[0].norm_sqr() - psi[1].norm_sqr()]
}

fn rotate_z(v: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// Simulated shots with the nominal setting drawn uniformly from
/// [`PAULI_AXES`].
pub fn simulate_random_phase_experiment(
    psi: &[C64; 2],
    n_events: usize,
    law: PhaseLaw,
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    simulate_with_settings(psi, n_events, law, &PAULI_AXES, seed)
}

/// A phase `φ` on `|1⟩` is equivalent to measuring the fixed state along the
/// nominal axis rotated by `−φ` about z.
pub fn simulate_with_settings(
    psi: &[C64; 2],
    n_events: usize,
    law: PhaseLaw,
    settings: &[[f64; 3]],
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    if n_events == 0 || settings.is_empty() {
        return Err(Error::InvalidParameter("need n_events >= 1 and a setting".into()));
    }
    let norm = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("state norm {norm} is not 1")));
    }
    for s in settings {
        MeasurementRecord::new(*s, 1)?;
    }
    let r = Vector3::from(bloch_vector(psi));
    let mut rng = stream(seed, 0);
    let records = (0..n_events)
        .map(|_| {
            let nominal = settings[rng.random_range(0..settings.len())];
            let axis = match law {
                PhaseLaw::Fixed { phi } => rotate_z(nominal, -phi),
                PhaseLaw::Uniform => {
                    rotate_z(nominal, -rng.random_range(0.0..std::f64::consts::TAU))
                }
                PhaseLaw::Haar => loop {
                    let v = Vector3::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    );
                    let n = v.norm();
                    if n > 1e-6 {
                        break (v / n).into();
                    }
                },
            };
            let p_plus = 0.5 * (1.0 + Vector3::from(axis).dot(&r));
            let outcome = if rng.random::<f64>() < p_plus { 1 } else { -1 };
            MeasurementRecord { axis, outcome }
        })
        .collect();
    Ok(records)
}

fn nearest(axis: &[f64; 3], anchors: &[[f64; 3]]) -> usize {
    let v = Vector3::from(*axis);
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (i, a) in anchors.iter().enumerate() {
        let d = v.dot(&Vector3::from(*a));
        if d > best_dot {
            best_dot = d;
            best = i;
        }
    }
    best
}

fn distinct_axes(records: &[MeasurementRecord]) -> Vec<[f64; 3]> {
    let mut seen = HashSet::new();
    records
        .iter()
        .filter(|r| seen.insert(r.axis.map(f64::to_bits)))
        .map(|r| r.axis)
        .collect()
}

/// Moves each anchor in turn onto the closest record axis not yet claimed.
fn snap_anchors(anchors: &mut [[f64; 3]], axes: &[[f64; 3]]) {
    let mut claimed = vec![false; axes.len()];
    for a in anchors.iter_mut() {
        let v = Vector3::from(*a);
        let mut best = None;
        let mut best_dot = f64::NEG_INFINITY;
        for (j, x) in axes.iter().enumerate() {
            if claimed[j] {
                continue;
            }
            let d = v.dot(&Vector3::from(*x));
            if d > best_dot {
                best_dot = d;
                best = Some(j);
            }
        }
        if let Some(j) = best {
            claimed[j] = true;
            *a = axes[j];
        }
    }
}

/// Seeds `k` anchors on a Fibonacci lattice, snaps each greedily onto the
/// nearest unclaimed record axis, then iterates nearest-centroid
/// reassignment until the partition is stable. Anchors that lose all records
/// are dropped and reported.
pub fn group_projectors(records: &[MeasurementRecord], k: usize) -> Result<Grouping> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    for r in records {
        r.validate(AXIS_TOL)?;
    }
    let axes = distinct_axes(records);
    if axes.len() < k {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds the number of distinct axes")));
    }
    let mut anchors = fibonacci_bloch_points(k)?.points;
    snap_anchors(&mut anchors, &axes);
    let mut labels: Vec<usize> = (0..anchors.len()).collect();
    let mut dropped = Vec::new();
    let mut assignment: Vec<usize> = records.iter().map(|r| nearest(&r.axis, &anchors)).collect();
    let mut iterations = 0;
    loop {
        // centroids of the current partition
        let mut sums = vec![Vector3::zeros(); anchors.len()];
        let mut counts = vec![0usize; anchors.len()];
        for (r, &a) in records.iter().zip(&assignment) {
            sums[a] += Vector3::from(r.axis);
            counts[a] += 1;
        }
        let mut kept_anchors = Vec::new();
        let mut kept_labels = Vec::new();
        for i in 0..anchors.len() {
            if counts[i] == 0 {
                dropped.push(labels[i]);
                continue;
            }
            let n = sums[i].norm();
            kept_anchors.push(if n > 1e-12 { (sums[i] / n).into() } else { anchors[i] });
            kept_labels.push(labels[i]);
        }
        anchors = kept_anchors;
        labels = kept_labels;
        let next: Vec<usize> = records.iter().map(|r| nearest(&r.axis, &anchors)).collect();
        let stable = counts.iter().all(|&c| c > 0) && next == assignment;
        assignment = next;
        iterations += 1;
        if stable || iterations >= MAX_LLOYD_ITERATIONS {
            break;
        }
    }
    dropped.sort_unstable();

    let mut groups: Vec<ProjectorGroup> = anchors
        .iter()
        .map(|_| ProjectorGroup { axis: [0.0; 3], members: Vec::new(), n_plus: 0, n_minus: 0 })
        .collect();
    for (i, (r, &a)) in records.iter().zip(&assignment).enumerate() {
        let g = &mut groups[a];
        g.members.push(i);
        if r.outcome > 0 {
            g.n_plus += 1;
        } else {
            g.n_minus += 1;
        }
    }
    for (g, anchor) in groups.iter_mut().zip(&anchors) {
        let sum: Vector3<f64> = g.members.iter().map(|&i| Vector3::from(records[i].axis)).sum();
        let n = sum.norm();
        g.axis = if n > 1e-12 { (sum / n).into() } else { *anchor };
    }
    // a final reassignment can empty an anchor once more
    let before = groups.len();
    let mut kept_labels = Vec::new();
    groups = groups
        .into_iter()
        .zip(labels)
        .filter_map(|(g, l)| {
            if g.members.is_empty() {
                dropped.push(l);
                None
            } else {
                kept_labels.push(l);
                Some(g)
            }
        })
        .collect();
    if groups.len() != before {
        dropped.sort_unstable();
    }
    Ok(Grouping { groups, dropped_anchors: dropped, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub restarts: usize,
    pub seed: u64,
    pub simplex: NelderMeadOptions,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { restarts: 20, seed: 0, simplex: NelderMeadOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub rho: DensityMatrix,
    pub log_likelihood: f64,
    /// 0 is the maximally mixed start, `1..=restarts` the random ones.
    pub best_start: usize,
}

/// `ρ = T†T / tr(T†T)` with `T = [[t₀, 0], [t₂ + i t₃, t₁]]`.
pub fn cholesky_state(t: &[f64]) -> DMatrix<C64> {
    let m = DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(t[0], 0.0),
            C64::new(0.0, 0.0),
            C64::new(t[2], t[3]),
            C64::new(t[1], 0.0),
        ],
    );
    let rho = m.adjoint() * &m;
    let tr = rho.trace().re;
    if tr > 0.0 { rho / C64::from(tr) } else { DMatrix::identity(2, 2) * C64::from(0.5) }
}

fn rho_bloch(rho: &DMatrix<C64>) -> Vector3<f64> {
    let c = rho[(1, 0)];
    Vector3::new(2.0 * c.re, 2.0 * c.im, (rho[(0, 0)] - rho[(1, 1)]).re)
}

/// Multinomial log-likelihood of grouped counts under `ρ`.
pub fn log_likelihood(rho: &DMatrix<C64>, groups: &[ProjectorGroup]) -> f64 {
    let r = rho_bloch(rho);
    groups
        .iter()
        .map(|g| {
            let p = (0.5 * (1.0 + Vector3::from(g.axis).dot(&r))).clamp(0.0, 1.0);
            let mut ll = 0.0;
            if g.n_plus > 0 {
                ll += g.n_plus as f64 * p.max(PROB_FLOOR).ln();
            }
            if g.n_minus > 0 {
                ll += g.n_minus as f64 * (1.0 - p).max(PROB_FLOOR).ln();
            }
            ll
        })
        .sum()
}

fn check_complete(groups: &[ProjectorGroup]) -> Result<()> {
    let used: Vec<&ProjectorGroup> = groups.iter().filter(|g| g.total() > 0).collect();
    if used.is_empty() {
        return Err(Error::NotInformationallyComplete);
    }
    let m: Matrix3<f64> = used
        .iter()
        .map(|g| {
            let v = Vector3::from(g.axis);
            v * v.transpose()
        })
        .sum::<Matrix3<f64>>()
        / used.len() as f64;
    let min = m.symmetric_eigenvalues().min();
    if min <= COMPLETENESS_TOL {
        return Err(Error::NotInformationallyComplete);
    }
    Ok(())
}

pub fn mle_reconstruct(groups: &[ProjectorGroup]) -> Result<MleResult> {
    mle_reconstruct_with(groups, &MleOptions::default())
}

/// Simplex descent from the maximally mixed start plus seeded random
/// restarts; the best run is polished once more and must not improve.
pub fn mle_reconstruct_with(groups: &[ProjectorGroup], opts: &MleOptions) -> Result<MleResult> {
    check_complete(groups)?;
    let total: usize = groups.iter().map(ProjectorGroup::total).sum();
    let scale = total as f64;
    // mean negative log-likelihood keeps the objective O(1)
    let objective = |t: &[f64]| -log_likelihood(&cholesky_state(t), groups) / scale;
    let mixed = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0, 0.0];
    let restart_seed = derive_seed(opts.seed, 0x7031);
    let runs: Vec<Minimum> = (0..=opts.restarts)
        .into_par_iter()
        .map(|i| {
            let x0: Vec<f64> = if i == 0 {
                mixed.to_vec()
            } else {
                let mut rng = stream(restart_seed, i as u64);
                (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            };
            nelder_mead(objective, &x0, &opts.simplex)
        })
        .collect();
    let (best_start, best) = runs
        .iter()
        .enumerate()
        .fold(None::<(usize, &Minimum)>, |acc, (i, m)| match acc {
            Some((_, b)) if b.value <= m.value => acc,
            _ => Some((i, m)),
        })
        .expect("at least one start");
    let polished = nelder_mead(objective, &best.x, &opts.simplex);
    let improvement = (best.value - polished.value) * scale;
    if best.converged && improvement > STALL_TOL {
        return Err(Error::OptimizerStall { improvement });
    }
    let rho = cholesky_state(&best.x);
    Ok(MleResult {
        log_likelihood: log_likelihood(&rho, groups),
        rho: DensityMatrix::new_unchecked(rho),
        best_start,
    })
}

fn hermitian_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from(l.max(0.0).sqrt())));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity `(tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: sigma.dim() });
    }
    let s = hermitian_sqrt(rho.matrix());
    let inner = &s * sigma.matrix() * &s;
    let inner = (&inner + inner.adjoint()) * C64::from(0.5);
    let ev = inner.symmetric_eigenvalues();
    // round-off in a vanishing eigenvalue would otherwise enter as its square root
    let floor = EIGEN_FLOOR * ev.amax().max(f64::MIN_POSITIVE);
    let tr: f64 = ev.iter().map(|&l| if l > floor { l.sqrt() } else { 0.0 }).sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

/// Placeholder for tomography of multi-qubit cluster states.
pub fn reconstruct_cluster_state(_records: &[Vec<MeasurementRecord>]) -> Result<DensityMatrix> {
    Err(Error::NotImplemented(
        "multi-qubit tomography; reconstruct single photonic qubits with mle_reconstruct",
    ))
}

pub fn write_records_csv<W: Write>(out: &mut W, records: &[MeasurementRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.axis.iter().map(|&x| fmt_num(x)).collect();
            row.push(r.outcome.to_string());
            row
        })
        .collect();
    write_csv(out, &[], &["axis_x", "axis_y", "axis_z", "outcome"], &rows)
}

/// Parses records written by [`write_records_csv`]; `#` lines are skipped and
/// axes are renormalised after a 1e-9 norm check.
pub fn read_records_csv<R: BufRead>(input: R) -> Result<Vec<MeasurementRecord>> {
    let bad = |line: usize, msg: &str| Error::InvalidParameter(format!("records line {line}: {msg}"));
    let mut records = Vec::new();
    let mut header_seen = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != "axis_x,axis_y,axis_z,outcome" {
                return Err(bad(i + 1, "unexpected header"));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(i + 1, "expected 4 fields"));
        }
        let mut axis = [0.0; 3];
        for (a, f) in axis.iter_mut().zip(&fields) {
            *a = f.parse().map_err(|_| bad(i + 1, "bad number"))?;
        }
        let outcome: i8 = fields[3].parse().map_err(|_| bad(i + 1, "bad outcome"))?;
        let r = MeasurementRecord { axis, outcome };
        r.validate(CSV_AXIS_TOL)?;
        let v = Vector3::from(axis).normalize();
        records.push(MeasurementRecord { axis: v.into(), outcome });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    /// Row-major `[re, im]` entries.
    pub rho: Vec<[f64; 2]>,
    pub log_likelihood: f64,
    pub n_groups: usize,
    pub dropped_anchors: Vec<usize>,
    pub n_events: usize,
    pub best_start: usize,
    pub fidelity: Option<f64>,
}

impl TomographyReport {
    pub fn new(grouping: &Grouping, mle: &MleResult, truth: Option<&DensityMatrix>) -> Result<Self> {
        let m = mle.rho.matrix();
        let rho = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
            .collect();
        Ok(TomographyReport {
            rho,
            log_likelihood: mle.log_likelihood,
            n_groups: grouping.groups.len(),
            dropped_anchors: grouping.dropped_anchors.clone(),
            n_events: grouping.groups.iter().map(ProjectorGroup::total).sum(),
            best_start: mle.best_start,
            fidelity: truth.map(|t| fidelity(&mle.rho, t)).transpose()?,
        })
    }
}
