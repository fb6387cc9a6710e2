//! Linear cluster states from the recursive construction, and their
//! verification against line-graph stabilizers `K⁽ᵃ⁾ = X_a ⊗ Z_{N(a)}`.
//!
//! Qubit 1 is the most significant bit of a basis index.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::protocol::SpinOutcome;
use crate::{Error, Result, C64};

pub const MAX_QUBITS: usize = 10;
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Phase picked up by `|bit⟩`.
    fn phase(self, bit: bool) -> C64 {
        match (self, bit) {
            (Pauli::I, _) | (Pauli::X, _) | (Pauli::Z, false) => C64::new(1.0, 0.0),
            (Pauli::Z, true) => C64::new(-1.0, 0.0),
            (Pauli::Y, false) => C64::new(0.0, 1.0),
            (Pauli::Y, true) => C64::new(0.0, -1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    pub factors: Vec<Pauli>,
    /// `+1` or `−1`.
    pub sign: i8,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString { factors: vec![Pauli::I; n], sign: 1 }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Applies the string to a `2ⁿ` state vector.
    pub fn apply(&self, psi: &[C64]) -> Result<Vec<C64>> {
        let n = self.factors.len();
        if psi.len() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, got: psi.len() });
        }
        let flip_mask = self
            .factors
            .iter()
            .enumerate()
            .filter(|(_, p)| p.flips())
            .fold(0usize, |m, (a, _)| m | 1 << (n - 1 - a));
        let sign = C64::from(self.sign as f64);
        let mut out = vec![C64::from(0.0); psi.len()];
        for (i, amp) in psi.iter().enumerate() {
            let phase = self
                .factors
                .iter()
                .enumerate()
                .fold(sign, |acc, (a, p)| acc * p.phase((i >> (n - 1 - a)) & 1 == 1));
            out[i ^ flip_mask] += phase * amp;
        }
        Ok(out)
    }

    /// Dense `2ⁿ × 2ⁿ` matrix.
    pub fn matrix(&self) -> DMatrix<C64> {
        let dim = 1 << self.factors.len();
        let mut m = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let mut e = vec![C64::from(0.0); dim];
            e[col] = C64::from(1.0);
            let out = self.apply(&e).expect("dimension matches by construction");
            for (row, a) in out.into_iter().enumerate() {
                m[(row, col)] = a;
            }
        }
        m
    }

    /// Symbolic commutation: strings commute iff they anticommute on an even
    /// number of sites.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let clashes = self
            .factors
            .iter()
            .zip(&other.factors)
            .filter(|(a, b)| **a != Pauli::I && **b != Pauli::I && a != b)
            .count();
        clashes % 2 == 0
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", if self.sign < 0 { '-' } else { '+' })?;
        for p in &self.factors {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (sign, body) = match s.chars().next() {
            Some('+') => (1, &s[1..]),
            Some('-') => (-1, &s[1..]),
            _ => (1, s),
        };
        let factors = body
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::InvalidParameter(format!("bad Pauli factor {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if factors.is_empty() {
            return Err(Error::InvalidParameter("empty Pauli string".into()));
        }
        Ok(PauliString { factors, sign })
    }
}

/// Which of the two recursive families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn other(self) -> Branch {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

impl From<SpinOutcome> for Branch {
    fn from(o: SpinOutcome) -> Self {
        match o {
            SpinOutcome::Plus => Branch::Plus,
            SpinOutcome::Minus => Branch::Minus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilizerGenerator {
    /// 1-based site.
    pub site: usize,
    pub pauli: PauliString,
    /// Expected eigenvalue is `(−1)^k`.
    pub k: u8,
}

impl StabilizerGenerator {
    pub fn eigenvalue(&self) -> f64 {
        if self.k.is_multiple_of(2) { 1.0 } else { -1.0 }
    }
}

/// `K⁽ᵃ⁾ = X_a ⊗ Z_{a±1}` on a line of `n` qubits.
pub fn line_generator(n: usize, a: usize) -> Result<PauliString> {
    if a == 0 || a > n {
        return Err(Error::InvalidParameter(format!("site {a} outside 1..={n}")));
    }
    let mut s = PauliString::identity(n);
    s.factors[a - 1] = Pauli::X;
    if a > 1 {
        s.factors[a - 2] = Pauli::Z;
    }
    if a < n {
        s.factors[a] = Pauli::Z;
    }
    Ok(s)
}

/// Sign exponents `k⁽ᵃ⁾`: `+` has `k = 1` at both ends, `−` only at site 1.
pub fn expected_signs(n: usize, branch: Branch) -> Vec<u8> {
    (1..=n)
        .map(|a| match branch {
            Branch::Plus => (a == 1 || a == n) as u8,
            Branch::Minus => (a == 1) as u8,
        })
        .collect()
}

pub fn generators(n: usize, branch: Branch) -> Result<Vec<StabilizerGenerator>> {
    expected_signs(n, branch)
        .into_iter()
        .enumerate()
        .map(|(i, k)| Ok(StabilizerGenerator { site: i + 1, pauli: line_generator(n, i + 1)?, k }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignTable {
    pub n: usize,
    pub branch: Branch,
    pub k: Vec<u8>,
}

pub fn sign_table(n: usize, branch: Branch) -> SignTable {
    SignTable { n, branch, k: expected_signs(n, branch) }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidParameter(format!("n = {n} outside 1..={MAX_QUBITS}")));
    }
    Ok(())
}

/// `S⁽ⁿ⁾_±` from `S⁽¹⁾_± = (|1⟩ ± |0⟩)/√2` and
/// `S⁽ⁿ⁾_± = S⁽ⁿ⁻¹⁾₊|1⟩ ± S⁽ⁿ⁻¹⁾₋|0⟩`, normalised.
pub fn build_lc_recursive(n: usize, branch: Branch) -> Result<Vec<C64>> {
    check_size(n)?;
    let h = C64::from(FRAC_1_SQRT_2);
    let mut plus = vec![h, h];
    let mut minus = vec![-h, h];
    for _ in 1..n {
        let dim = plus.len();
        let mut next_plus = vec![C64::from(0.0); 2 * dim];
        let mut next_minus = vec![C64::from(0.0); 2 * dim];
        for p in 0..dim {
            next_plus[2 * p + 1] = plus[p] * h;
            next_plus[2 * p] = minus[p] * h;
            next_minus[2 * p + 1] = plus[p] * h;
            next_minus[2 * p] = -minus[p] * h;
        }
        plus = next_plus;
        minus = next_minus;
    }
    Ok(match branch {
        Branch::Plus => plus,
        Branch::Minus => minus,
    })
}

/// Largest residual `‖K⁽ᵃ⁾ψ − (−1)^{k⁽ᵃ⁾}ψ‖` for an explicit sign vector.
pub fn stabilizer_residual(state: &[C64], n: usize, k: &[u8]) -> Result<f64> {
    check_size(n)?;
    if state.len() != 1 << n {
        return Err(Error::DimensionMismatch { expected: 1 << n, got: state.len() });
    }
    if k.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: k.len() });
    }
    let mut worst: f64 = 0.0;
    for a in 1..=n {
        let out = line_generator(n, a)?.apply(state)?;
        let ev = if k[a - 1].is_multiple_of(2) { 1.0 } else { -1.0 };
        let r = out
            .iter()
            .zip(state)
            .map(|(x, y)| (x - y * ev).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Residual against the sign table of `branch`.
pub fn verify_stabilizers(state: &[C64], n: usize, branch: Branch) -> Result<f64> {
    stabilizer_residual(state, n, &expected_signs(n, branch))
}

pub fn passes(residual: f64) -> bool {
    residual <= RESIDUAL_TOL
}

/// `σ_z` on qubit `a` (1-based).
pub fn apply_z(state: &[C64], n: usize, a: usize) -> Vec<C64> {
    let bit = n - a;
    state
        .iter()
        .enumerate()
        .map(|(i, x)| if (i >> bit) & 1 == 1 { -x } else { *x })
        .collect()
}

/// Applies `Z_b` wherever `k⁽ᵇ⁾ = 1`, mapping the state onto the all-`+1`
/// canonical cluster state.
pub fn to_canonical(state: &[C64], n: usize, branch: Branch) -> Vec<C64> {
    expected_signs(n, branch)
        .iter()
        .enumerate()
        .filter(|(_, k)| **k == 1)
        .fold(state.to_vec(), |s, (i, _)| apply_z(&s, n, i + 1))
}
