//! Driven four-level trion model in the Zeeman basis.
//!
//! Basis ordering is `(⇑, ⇓, T↑, T↓)` with indices `0..4`. Time is measured in
//! ns, angular frequencies in rad·ns⁻¹ and magnetic fields in mT; ℏ = 1.
//!
//! `gamma` is the spontaneous emission rate of each trion level. Every trion
//! decays through two channels (one Rayleigh, one Raman), each carrying
//! `gamma / 2`, so the saturation Rabi frequency is `gamma / √2` and the
//! second-order Raman rate is `Ω_V² γ / (8 Δ²)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Bohr magneton over ℏ in rad·ns⁻¹·mT⁻¹.
pub const MU_B_OVER_HBAR: f64 = 0.087941;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const TRION_UP: usize = 2;
pub const TRION_DOWN: usize = 3;

/// Amplitudes over `(⇑, ⇓, T↑, T↓)`.
pub type LevelState = nalgebra::Vector4<C64>;

/// Physical parameters of the driven quantum dot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// External Voigt field (mT).
    #[serde(rename = "B_ext")]
    pub b_ext: f64,
    /// In-plane hole g-factor.
    pub g_h_x: f64,
    /// In-plane electron g-factor.
    #[serde(default = "default_g_e")]
    pub g_e_x: f64,
    /// Trion spontaneous emission rate (ns⁻¹).
    pub gamma: f64,
    /// Rabi frequency of the vertically polarised transitions (rad·ns⁻¹).
    #[serde(rename = "omega_V")]
    pub omega_v: f64,
    /// Rabi frequency of the horizontally polarised transitions (rad·ns⁻¹).
    #[serde(rename = "omega_H", default)]
    pub omega_h: f64,
}

fn default_g_e() -> f64 {
    0.5
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            b_ext: 100.0,
            g_h_x: 0.1,
            g_e_x: default_g_e(),
            gamma: 1.0,
            omega_v: 0.2 / std::f64::consts::SQRT_2,
            omega_h: 0.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.b_ext, self.g_h_x, self.g_e_x, self.gamma, self.omega_v, self.omega_h]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite physical parameter".into()));
        }
        if self.b_ext < 0.0 {
            return Err(Error::InvalidParameter(format!("B_ext = {} < 0", self.b_ext)));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!("gamma = {} <= 0", self.gamma)));
        }
        if self.omega_v < 0.0 || self.omega_h < 0.0 {
            return Err(Error::InvalidParameter("Rabi frequencies must be >= 0".into()));
        }
        Ok(())
    }

    /// Weak-driving regime `Ω_V ≤ γ/√2`.
    pub fn is_sub_saturation(&self) -> bool {
        self.omega_v <= self.gamma / std::f64::consts::SQRT_2
    }

    /// Hole precession rate `ω_B = g_h μ_B B / ℏ` (rad·ns⁻¹).
    pub fn omega_b(&self) -> f64 {
        self.g_h_x * MU_B_OVER_HBAR * self.b_ext
    }

    /// Raman detuning `Δ = δ_e + δ_h`.
    pub fn raman_detuning(&self) -> f64 {
        let (dh, de) = zeeman_frequencies(self);
        dh + de
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: PhysicalParams = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

/// Half Zeeman splittings `(δ_h, δ_e)` in rad·ns⁻¹.
///
/// The ground-state gap `2δ_h` equals the precession rate `ω_B`.
pub fn zeeman_frequencies(p: &PhysicalParams) -> (f64, f64) {
    let k = MU_B_OVER_HBAR * p.b_ext / 2.0;
    (p.g_h_x * k, p.g_e_x * k)
}

/// Polarisation of an emitted photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

/// The four spontaneous-emission channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JumpChannel {
    /// `|⇑⟩⟨T↓|`, H-polarised, red-detuned.
    RamanRed,
    /// `|⇓⟩⟨T↑|`, H-polarised, blue-detuned.
    RamanBlue,
    /// `|⇑⟩⟨T↑|`, V-polarised.
    RayleighUp,
    /// `|⇓⟩⟨T↓|`, V-polarised.
    RayleighDown,
}

impl JumpChannel {
    pub const ALL: [JumpChannel; 4] = [
        JumpChannel::RamanRed,
        JumpChannel::RamanBlue,
        JumpChannel::RayleighUp,
        JumpChannel::RayleighDown,
    ];

    /// `(ground, trion)` indices of the operator `|ground⟩⟨trion|`.
    pub fn levels(self) -> (usize, usize) {
        match self {
            JumpChannel::RamanRed => (UP, TRION_DOWN),
            JumpChannel::RamanBlue => (DOWN, TRION_UP),
            JumpChannel::RayleighUp => (UP, TRION_UP),
            JumpChannel::RayleighDown => (DOWN, TRION_DOWN),
        }
    }

    pub fn polarization(self) -> Polarization {
        match self {
            JumpChannel::RamanRed | JumpChannel::RamanBlue => Polarization::H,
            JumpChannel::RayleighUp | JumpChannel::RayleighDown => Polarization::V,
        }
    }

    pub fn is_raman(self) -> bool {
        self.polarization() == Polarization::H
    }

    /// Jump operator `√(γ/2) |ground⟩⟨trion|`.
    pub fn operator(self, gamma: f64) -> Matrix4<C64> {
        let (g, t) = self.levels();
        let mut c = Matrix4::zeros();
        c[(g, t)] = C64::new(channel_rate(gamma).sqrt(), 0.0);
        c
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JumpChannel::RamanRed => "raman_red",
            JumpChannel::RamanBlue => "raman_blue",
            JumpChannel::RayleighUp => "rayleigh_up",
            JumpChannel::RayleighDown => "rayleigh_down",
        }
    }
}

impl fmt::Display for JumpChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JumpChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        JumpChannel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown channel {s:?}")))
    }
}

/// Rate carried by a single decay channel.
pub fn channel_rate(gamma: f64) -> f64 {
    gamma / 2.0
}

/// Rotating-frame Hamiltonian of the driven dot (laser resonant with the
/// unperturbed transition).
pub fn build_hamiltonian(p: &PhysicalParams) -> Matrix4<C64> {
    let (dh, de) = zeeman_frequencies(p);
    let mut h = Matrix4::<C64>::zeros();
    h[(UP, UP)] = C64::from(dh);
    h[(DOWN, DOWN)] = C64::from(-dh);
    h[(TRION_UP, TRION_UP)] = C64::from(-de);
    h[(TRION_DOWN, TRION_DOWN)] = C64::from(de);

    let couple = |h: &mut Matrix4<C64>, excited: usize, ground: usize, omega: f64| {
        let v = C64::from(-omega / 2.0);
        h[(excited, ground)] = v;
        h[(ground, excited)] = v.conj();
    };
    couple(&mut h, TRION_UP, DOWN, p.omega_h);
    couple(&mut h, TRION_DOWN, UP, p.omega_h);
    couple(&mut h, TRION_DOWN, DOWN, p.omega_v);
    couple(&mut h, TRION_UP, UP, p.omega_v);
    h
}

/// `H_eff = H − (i/2) Σₙ Cₙ†Cₙ`.
pub fn build_effective_hamiltonian(p: &PhysicalParams) -> Matrix4<C64> {
    let mut h = build_hamiltonian(p);
    let mut decay = Matrix4::<C64>::zeros();
    for c in JumpChannel::ALL {
        let op = c.operator(p.gamma);
        decay += op.adjoint() * op;
    }
    h -= decay * C64::new(0.0, 0.5);
    h
}
