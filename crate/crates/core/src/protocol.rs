//! Exact spin–photon algebra of the time-bin entangling sequence.
//!
//! A [`JointState`] stores `2·3ⁿ` amplitudes over spin `{⇑, ⇓}` times photon
//! slots `{B, R, Ray}ⁿ`; the spin is the most significant digit, then slot 1
//! through slot n. Each bin applies `Q⁽ᵏ⁾ = U_r U_p(φ₂) T_s⁽ᵏ⁾ U_p(φ₁)`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, Matrix2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

pub const MAX_SLOTS: usize = 8;

/// Photon slot basis index.
pub const SLOT_B: usize = 0;
pub const SLOT_R: usize = 1;
pub const SLOT_RAY: usize = 2;

const UNSCATTERED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    n_slots: usize,
    amps: Vec<C64>,
}

impl JointState {
    /// `(|⇑⟩ + |⇓⟩)/√2 ⊗ |Ray⟩^⊗n`.
    pub fn initial(n_slots: usize) -> Result<Self> {
        let a = C64::from(FRAC_1_SQRT_2);
        Self::with_spin(n_slots, [a, a])
    }

    /// `(c₀|⇑⟩ + c₁|⇓⟩) ⊗ |Ray⟩^⊗n`.
    pub fn with_spin(n_slots: usize, spin: [C64; 2]) -> Result<Self> {
        if n_slots > MAX_SLOTS {
            return Err(Error::InvalidParameter(format!(
                "{n_slots} photon slots exceed the cap of {MAX_SLOTS}"
            )));
        }
        let half = 3usize.pow(n_slots as u32);
        let mut amps = vec![C64::from(0.0); 2 * half];
        let all_ray = half - 1; // every slot digit is 2
        amps[all_ray] = spin[0];
        amps[half + all_ray] = spin[1];
        Ok(JointState { n_slots, amps })
    }

    pub fn from_amplitudes(n_slots: usize, amps: Vec<C64>) -> Result<Self> {
        let expected = 2 * 3usize.pow(n_slots as u32);
        if amps.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: amps.len() });
        }
        Ok(JointState { n_slots, amps })
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        crate::norm(&self.amps)
    }

    fn half(&self) -> usize {
        self.amps.len() / 2
    }

    fn stride(&self, k: usize) -> usize {
        3usize.pow((self.n_slots - k) as u32)
    }

    /// Slot digit of slot `k` (1-based) within a spin-half index.
    fn digit(&self, index: usize, k: usize) -> usize {
        (index / self.stride(k)) % 3
    }

    fn check_slot(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.n_slots {
            return Err(Error::SlotOutOfRange { slot: k, n_slots: self.n_slots });
        }
        Ok(())
    }

    /// Applies a 2×2 operator to the spin.
    pub fn apply_spin(&mut self, m: &Matrix2<C64>) {
        let half = self.half();
        let (up, down) = self.amps.split_at_mut(half);
        for (u, d) in up.iter_mut().zip(down.iter_mut()) {
            let (a, b) = (*u, *d);
            *u = m[(0, 0)] * a + m[(0, 1)] * b;
            *d = m[(1, 0)] * a + m[(1, 1)] * b;
        }
    }

    /// Raman scattering into slot `k`: `⇑,Ray → ⇓,B` and `⇓,Ray → ⇑,R`.
    ///
    /// Components with slot `k` already in `B` or `R` are annihilated, so the
    /// map is an isometry only on states where slot `k` is unscattered.
    pub fn apply_scatter(&mut self, k: usize) -> Result<()> {
        self.check_slot(k)?;
        let half = self.half();
        let stride = self.stride(k);
        let mut out = vec![C64::from(0.0); self.amps.len()];
        for i in 0..half {
            if self.digit(i, k) != SLOT_RAY {
                continue;
            }
            let to_b = i - (SLOT_RAY - SLOT_B) * stride;
            let to_r = i - (SLOT_RAY - SLOT_R) * stride;
            out[half + to_b] = self.amps[i];
            out[to_r] = self.amps[half + i];
        }
        self.amps = out;
        Ok(())
    }

    /// Largest amplitude left in `|Ray⟩` for slot `k`.
    pub fn rayleigh_amplitude(&self, k: usize) -> Result<f64> {
        self.check_slot(k)?;
        let half = self.half();
        Ok((0..self.amps.len())
            .filter(|&i| self.digit(i % half, k) == SLOT_RAY)
            .map(|i| self.amps[i].norm())
            .fold(0.0, f64::max))
    }

    /// Swaps the contents of slots `k` and `l`.
    pub fn swap_slots(&self, k: usize, l: usize) -> Result<JointState> {
        self.check_slot(k)?;
        self.check_slot(l)?;
        let half = self.half();
        let (sk, sl) = (self.stride(k), self.stride(l));
        let mut out = vec![C64::from(0.0); self.amps.len()];
        for i in 0..self.amps.len() {
            let j = i % half;
            let (dk, dl) = (self.digit(j, k), self.digit(j, l));
            let target = i - dk * sk - dl * sl + dl * sk + dk * sl;
            out[target] = self.amps[i];
        }
        Ok(JointState { n_slots: self.n_slots, amps: out })
    }

    /// Labels like `U:B-R-Ray` for every basis index.
    pub fn basis_labels(&self) -> Vec<String> {
        let half = self.half();
        (0..self.amps.len())
            .map(|i| {
                let spin = if i < half { "U" } else { "D" };
                let slots: Vec<&str> = (1..=self.n_slots)
                    .map(|k| ["B", "R", "Ray"][self.digit(i % half, k)])
                    .collect();
                format!("{spin}:{}", slots.join("-"))
            })
            .collect()
    }
}

/// Free precession `diag(e^{−iφ/2}, e^{iφ/2})`.
pub fn u_p_matrix(phi: f64) -> Matrix2<C64> {
    Matrix2::new(
        C64::from_polar(1.0, -phi / 2.0),
        C64::from(0.0),
        C64::from(0.0),
        C64::from_polar(1.0, phi / 2.0),
    )
}

/// `Y_{π/2} = exp(iπσ_y/4)`.
pub fn u_r_matrix() -> Matrix2<C64> {
    let a = C64::from(FRAC_1_SQRT_2);
    Matrix2::new(a, a, -a, a)
}

/// An operator on the joint spin–photon space.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Spin(Matrix2<C64>),
    Scatter(usize),
    /// Applied right to left: the last element acts first.
    Product(Vec<Operator>),
}

impl Operator {
    pub fn apply(&self, s: &JointState) -> Result<JointState> {
        let mut out = s.clone();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, s: &mut JointState) -> Result<()> {
        match self {
            Operator::Spin(m) => s.apply_spin(m),
            Operator::Scatter(k) => s.apply_scatter(*k)?,
            Operator::Product(ops) => {
                for op in ops.iter().rev() {
                    op.apply_in_place(s)?;
                }
            }
        }
        Ok(())
    }

    /// Dense matrix on `2·3ⁿ` dimensions; intended for small `n`.
    pub fn matrix(&self, n_slots: usize) -> Result<DMatrix<C64>> {
        let dim = 2 * 3usize.pow(n_slots as u32);
        let mut m = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let mut e = vec![C64::from(0.0); dim];
            e[col] = C64::from(1.0);
            let out = self.apply(&JointState::from_amplitudes(n_slots, e)?)?;
            for (row, a) in out.amps.iter().enumerate() {
                m[(row, col)] = *a;
            }
        }
        Ok(m)
    }
}

fn check_slot(k: usize, n_slots: usize) -> Result<()> {
    if k == 0 || k > n_slots {
        return Err(Error::SlotOutOfRange { slot: k, n_slots });
    }
    Ok(())
}

pub fn u_p(phi: f64) -> Operator {
    Operator::Spin(u_p_matrix(phi))
}

pub fn u_r() -> Operator {
    Operator::Spin(u_r_matrix())
}

pub fn t_s(k: usize, n_slots: usize) -> Result<Operator> {
    check_slot(k, n_slots)?;
    Ok(Operator::Scatter(k))
}

/// `Q⁽ᵏ⁾ = U_r U_p(φ₂) T_s⁽ᵏ⁾ U_p(φ₁)`.
pub fn q_op(k: usize, phi1: f64, phi2: f64, n_slots: usize) -> Result<Operator> {
    Ok(Operator::Product(vec![u_r(), u_p(phi2), t_s(k, n_slots)?, u_p(phi1)]))
}

/// Scattering times `τ₁⁽ᵏ⁾` measured from the start of each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScatterSchedule {
    pub tau1: Vec<f64>,
}

impl ScatterSchedule {
    pub fn new(tau1: Vec<f64>) -> Self {
        ScatterSchedule { tau1 }
    }

    pub fn zeros(n: usize) -> Self {
        ScatterSchedule { tau1: vec![0.0; n] }
    }

    /// Each `τ₁` uniform on `[0, T_B]`, the conditional law of a single arrival.
    pub fn uniform<R: Rng + ?Sized>(n: usize, t_bin: f64, rng: &mut R) -> Self {
        ScatterSchedule { tau1: (0..n).map(|_| rng.random::<f64>() * t_bin).collect() }
    }

    pub fn len(&self) -> usize {
        self.tau1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau1.is_empty()
    }

    pub fn validate(&self, n: usize, t_bin: f64) -> Result<()> {
        if self.tau1.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.tau1.len() });
        }
        if !(t_bin >= 0.0) {
            return Err(Error::InvalidParameter(format!("T_B = {t_bin}")));
        }
        if let Some(t) = self.tau1.iter().find(|t| !(**t >= 0.0 && **t <= t_bin)) {
            return Err(Error::InvalidParameter(format!("τ₁ = {t} outside [0, {t_bin}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLedger {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub chi: Vec<f64>,
}

impl PhaseLedger {
    pub fn from_schedule(schedule: &ScatterSchedule, omega_b: f64, t_bin: f64) -> Self {
        let phi1: Vec<f64> = schedule.tau1.iter().map(|t| omega_b * t).collect();
        let phi2: Vec<f64> = schedule.tau1.iter().map(|t| omega_b * (t_bin - t)).collect();
        let chi = phi1.iter().zip(&phi2).map(|(a, b)| a - b).collect();
        PhaseLedger { phi1, phi2, chi }
    }
}

/// Runs `n` bins from `(|⇑⟩ + |⇓⟩)/√2`, precession angles `ω_B·τ`.
pub fn run_protocol(
    n: usize,
    schedule: &ScatterSchedule,
    omega_b: f64,
    t_bin: f64,
) -> Result<(JointState, PhaseLedger)> {
    schedule.validate(n, t_bin)?;
    let ledger = PhaseLedger::from_schedule(schedule, omega_b, t_bin);
    let mut state = JointState::initial(n)?;
    for k in 1..=n {
        q_op(k, ledger.phi1[k - 1], ledger.phi2[k - 1], n)?.apply_in_place(&mut state)?;
    }
    Ok((state, ledger))
}

/// Same sequence with an arbitrary spin evolution `precession(k, duration)`
/// in place of `U_p`; used for frozen-noise runs.
pub fn run_protocol_with<F>(
    n: usize,
    schedule: &ScatterSchedule,
    t_bin: f64,
    mut precession: F,
) -> Result<JointState>
where
    F: FnMut(usize, f64) -> Matrix2<C64>,
{
    schedule.validate(n, t_bin)?;
    let mut state = JointState::initial(n)?;
    let ur = u_r_matrix();
    for k in 1..=n {
        let tau1 = schedule.tau1[k - 1];
        state.apply_spin(&precession(k, tau1));
        state.apply_scatter(k)?;
        state.apply_spin(&precession(k, t_bin - tau1));
        state.apply_spin(&ur);
    }
    Ok(state)
}

/// Undoes the timing phases: `B_k ← e^{iχ_k/2}·B_k`, `R_k ← e^{−iχ_k/2}·R_k`.
///
/// Only photon slots are touched; the spin is left alone.
pub fn phase_correct(state: &JointState, ledger: &PhaseLedger) -> Result<JointState> {
    let n = state.n_slots;
    if ledger.chi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: ledger.chi.len() });
    }
    let half = state.half();
    let corr: Vec<[C64; 3]> = ledger
        .chi
        .iter()
        .map(|c| [C64::from_polar(1.0, c / 2.0), C64::from_polar(1.0, -c / 2.0), C64::from(1.0)])
        .collect();
    let mut out = state.clone();
    for (i, a) in out.amps.iter_mut().enumerate() {
        let j = i % half;
        for (k, c) in corr.iter().enumerate() {
            *a *= c[state.digit(j, k + 1)];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinOutcome {
    /// `⇑`
    Plus,
    /// `⇓`
    Minus,
}

impl SpinOutcome {
    fn offset(self, half: usize) -> usize {
        match self {
            SpinOutcome::Plus => 0,
            SpinOutcome::Minus => half,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonicState {
    /// `2ⁿ` amplitudes, qubit 1 most significant, `|B⟩ = |1⟩`, `|R⟩ = |0⟩`.
    pub amps: Vec<C64>,
    /// Probability of the spin outcome.
    pub probability: f64,
}

fn check_scattered(s: &JointState) -> Result<()> {
    for k in 1..=s.n_slots {
        let a = s.rayleigh_amplitude(k)?;
        if a > UNSCATTERED_TOL {
            return Err(Error::SlotUnscattered { slot: k, amplitude: a });
        }
    }
    Ok(())
}

/// Spin-half index of the all-`{B,R}` configuration encoded by qubit word `q`.
fn slot_index(q: usize, n: usize) -> usize {
    (0..n).fold(0, |acc, bit| {
        let is_b = (q >> (n - 1 - bit)) & 1 == 1;
        acc * 3 + if is_b { SLOT_B } else { SLOT_R }
    })
}

/// Projects the spin, renormalises and relabels `B → 1`, `R → 0`.
pub fn encode_and_measure(s: &JointState, outcome: SpinOutcome) -> Result<PhotonicState> {
    check_scattered(s)?;
    let n = s.n_slots;
    let half = s.half();
    let off = outcome.offset(half);
    let mut amps: Vec<C64> = (0..1usize << n).map(|q| s.amps[off + slot_index(q, n)]).collect();
    let p: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if p > 0.0 {
        let inv = C64::from(1.0 / p.sqrt());
        amps.iter_mut().for_each(|a| *a *= inv);
    }
    Ok(PhotonicState { amps, probability: p })
}

/// Spin plus photons as an `(n+1)`-qubit vector; spin is qubit 1 with
/// `⇑ → |0⟩`, `⇓ → |1⟩`.
pub fn encode_joint(s: &JointState) -> Result<Vec<C64>> {
    check_scattered(s)?;
    let n = s.n_slots;
    let half = s.half();
    Ok((0..2usize << n)
        .map(|q| {
            let spin = q >> n;
            s.amps[spin * half + slot_index(q & ((1 << n) - 1), n)]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlap_fidelity;
    use rand::SeedableRng;

    fn c(x: f64) -> C64 {
        C64::from(x)
    }

    fn basis(n: usize, spin: usize, slots: &[usize]) -> JointState {
        let half = 3usize.pow(n as u32);
        let idx = slots.iter().fold(0, |a, d| a * 3 + d);
        let mut amps = vec![c(0.0); 2 * half];
        amps[spin * half + idx] = c(1.0);
        JointState::from_amplitudes(n, amps).unwrap()
    }

    fn assert_close(a: &JointState, b: &JointState, tol: f64) {
        for (x, y) in a.amps.iter().zip(&b.amps) {
            assert!((x - y).norm() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn u_p_zero_is_identity() {
        let m = u_p(0.0).matrix(1).unwrap();
        assert!((m - DMatrix::identity(6, 6)).norm() < 1e-15);
    }

    #[test]
    fn u_r_twice_flips_up_to_down() {
        let s = basis(1, 0, &[SLOT_RAY]);
        let out = Operator::Product(vec![u_r(), u_r()]).apply(&s).unwrap();
        assert!((overlap_fidelity(&out.amps, &basis(1, 1, &[SLOT_RAY]).amps) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scatter_maps_rayleigh_to_colours() {
        let t = t_s(1, 1).unwrap();
        assert_close(&t.apply(&basis(1, 0, &[SLOT_RAY])).unwrap(), &basis(1, 1, &[SLOT_B]), 1e-15);
        assert_close(&t.apply(&basis(1, 1, &[SLOT_RAY])).unwrap(), &basis(1, 0, &[SLOT_R]), 1e-15);
        assert!(matches!(t_s(2, 1), Err(Error::SlotOutOfRange { slot: 2, n_slots: 1 })));
        assert!(t_s(0, 3).is_err());
    }

    #[test]
    fn q_zero_phase_on_up() {
        let out = q_op(1, 0.0, 0.0, 1).unwrap().apply(&basis(1, 0, &[SLOT_RAY])).unwrap();
        let h = FRAC_1_SQRT_2;
        let mut expect = basis(1, 0, &[SLOT_B]);
        expect.amps[0] = c(h);
        expect.amps[3] = c(h);
        assert_close(&out, &expect, 1e-15);
    }

    #[test]
    fn q_with_phases_matches_closed_form() {
        let (p1, p2) = (0.7, -1.9);
        let out = q_op(1, p1, p2, 1).unwrap().apply(&basis(1, 1, &[SLOT_RAY])).unwrap();
        let ph = C64::from_polar(FRAC_1_SQRT_2, p1 / 2.0 - p2 / 2.0);
        // (|⇑⟩ − |⇓⟩)|R⟩ with phase e^{iφ₁/2}e^{−iφ₂/2}
        assert!((out.amps[SLOT_R] - ph).norm() < 1e-15);
        assert!((out.amps[3 + SLOT_R] + ph).norm() < 1e-15);
    }

    #[test]
    fn q_is_isometry_on_reachable_subspace() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for n in 1..=4 {
            let mut s = JointState::initial(n).unwrap();
            for k in 1..=n {
                s = q_op(k, rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0, n)
                    .unwrap()
                    .apply(&s)
                    .unwrap();
                assert!((s.norm() - 1.0).abs() < 1e-12);
                assert!(s.rayleigh_amplitude(k).unwrap() < 1e-15);
            }
        }
    }

    #[test]
    fn one_bin_zero_phase() {
        let (s, _) = run_protocol(1, &ScatterSchedule::zeros(1), 1.0, 0.0).unwrap();
        let a = s.amplitudes();
        // (1/2)(⇑(B+R) + ⇓(B−R))
        let expect = [0.5, 0.5, 0.0, 0.5, -0.5, 0.0];
        for (x, y) in a.iter().zip(expect) {
            assert!((x - c(y)).norm() < 1e-15);
        }
    }

    #[test]
    fn two_bins_eight_terms_with_phases() {
        let omega_b = 0.87;
        let t_bin = 5.0;
        let sched = ScatterSchedule::new(vec![1.3, 3.9]);
        let (s, ledger) = run_protocol(2, &sched, omega_b, t_bin).unwrap();
        let (c1, c2) = (ledger.chi[0], ledger.chi[1]);
        let ph = |colour: usize, chi: f64| {
            C64::from_polar(1.0, if colour == SLOT_B { -chi / 2.0 } else { chi / 2.0 })
        };
        for spin in 0..2 {
            for d1 in [SLOT_B, SLOT_R] {
                for d2 in [SLOT_B, SLOT_R] {
                    let expect_mag = 1.0 / 8f64.sqrt();
                    let amp = s.amps[spin * 9 + d1 * 3 + d2];
                    assert!((amp.norm() - expect_mag).abs() < 1e-14);
                    let stripped = amp / (ph(d1, c1) * ph(d2, c2));
                    assert!(stripped.im.abs() < 1e-14, "{stripped}");
                }
            }
        }
        // single minus sign on ⇑R₁R₂
        let zero = run_protocol(2, &ScatterSchedule::zeros(2), 0.0, 0.0).unwrap().0;
        let up_neg: Vec<_> = (0..4).filter(|&i| zero.amps[[0, 1, 3, 4][i]].re < 0.0).collect();
        assert_eq!(up_neg, vec![3]);
    }

    #[test]
    fn ledger_chi_definition() {
        let sched = ScatterSchedule::new(vec![0.0, 2.5, 10.0]);
        let l = PhaseLedger::from_schedule(&sched, 0.3, 10.0);
        for (t, chi) in sched.tau1.iter().zip(&l.chi) {
            assert!((chi - 0.3 * (2.0 * t - 10.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn encoded_two_photon_states() {
        let (s, _) = run_protocol(2, &ScatterSchedule::zeros(2), 0.0, 1.0).unwrap();
        let plus = encode_and_measure(&s, SpinOutcome::Plus).unwrap();
        let minus = encode_and_measure(&s, SpinOutcome::Minus).unwrap();
        // amplitude order |00⟩,|01⟩,|10⟩,|11⟩
        let ep = [-0.5, 0.5, 0.5, 0.5];
        let em = [0.5, 0.5, -0.5, 0.5];
        for q in 0..4 {
            assert!((plus.amps[q] - c(ep[q])).norm() < 1e-14);
            assert!((minus.amps[q] - c(em[q])).norm() < 1e-14);
        }
        assert!((plus.probability + minus.probability - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unscattered_slot_is_rejected() {
        let s = JointState::initial(2).unwrap();
        assert!(matches!(
            encode_and_measure(&s, SpinOutcome::Plus),
            Err(Error::SlotUnscattered { slot: 1, .. })
        ));
    }

    #[test]
    fn phase_correction_restores_zero_phase_state() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 1..=5 {
            let sched = ScatterSchedule::uniform(n, 400.0, &mut rng);
            let (s, ledger) = run_protocol(n, &sched, 0.88, 400.0).unwrap();
            let fixed = phase_correct(&s, &ledger).unwrap();
            let (zero, _) = run_protocol(n, &ScatterSchedule::zeros(n), 0.88, 0.0).unwrap();
            assert!(overlap_fidelity(&fixed.amps, &zero.amps) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn zero_ledger_correction_is_identity() {
        let (s, _) = run_protocol(3, &ScatterSchedule::new(vec![1.0, 2.0, 3.0]), 0.5, 4.0).unwrap();
        let l = PhaseLedger { phi1: vec![0.0; 3], phi2: vec![0.0; 3], chi: vec![0.0; 3] };
        assert_eq!(phase_correct(&s, &l).unwrap(), s);
    }

    #[test]
    fn distinct_slot_q_commute_up_to_relabelling() {
        let s = JointState::initial(2).unwrap();
        let (a, b) = ((0.3, 1.1), (2.0, -0.4));
        let q = |k, p: (f64, f64)| q_op(k, p.0, p.1, 2).unwrap();
        let one = q(2, b).apply(&q(1, a).apply(&s).unwrap()).unwrap();
        let two = q(1, b).apply(&q(2, a).apply(&s).unwrap()).unwrap();
        assert_close(&one, &two.swap_slots(1, 2).unwrap(), 1e-14);
    }

    #[test]
    fn noisy_route_with_ideal_precession_matches() {
        let sched = ScatterSchedule::new(vec![10.0, 70.0, 33.0]);
        let (a, _) = run_protocol(3, &sched, 0.9, 100.0).unwrap();
        let b = run_protocol_with(3, &sched, 100.0, |_, t| u_p_matrix(0.9 * t)).unwrap();
        assert_close(&a, &b, 1e-14);
    }

    #[test]
    fn joint_encoding_has_full_norm() {
        let (s, _) = run_protocol(3, &ScatterSchedule::zeros(3), 0.0, 0.0).unwrap();
        let v = encode_joint(&s).unwrap();
        assert_eq!(v.len(), 16);
        assert!((crate::norm(&v) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn labels() {
        let s = JointState::initial(2).unwrap();
        let l = s.basis_labels();
        assert_eq!(l[0], "U:B-B");
        assert_eq!(l[17], "D:Ray-Ray");
    }
}
