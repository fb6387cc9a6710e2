//! Density matrices over qubits, negativity, and localisable entanglement
//! bounded from below by exhaustive search over Bloch-basis measurements.
//!
//! Qubits are numbered from 1, qubit 1 being the most significant bit.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

pub const LE_BUDGET: f64 = 1e8;
pub const MAX_LE_QUBITS: usize = 6;
const SKIP_PROBABILITY: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    m: DMatrix<C64>,
}

fn qubits_of(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::DimensionMismatch { expected: dim.next_power_of_two(), got: dim });
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

impl DensityMatrix {
    /// Checks Hermiticity and trace to 1e-12, eigenvalues ≥ −1e-10.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let n_qubits = qubits_of(m.nrows())?;
        if (&m - m.adjoint()).camax() > 1e-12 {
            return Err(Error::InvalidParameter("density matrix is not Hermitian".into()));
        }
        if (m.trace() - C64::from(1.0)).norm() > 1e-12 {
            return Err(Error::InvalidParameter(format!("trace {} != 1", m.trace())));
        }
        if hermitian_eigenvalues(&m)[0] < -1e-10 {
            return Err(Error::InvalidParameter("density matrix is not positive".into()));
        }
        Ok(DensityMatrix { n_qubits, m })
    }

    /// Wraps a matrix without validation.
    pub fn new_unchecked(m: DMatrix<C64>) -> Self {
        let n_qubits = m.nrows().trailing_zeros() as usize;
        DensityMatrix { n_qubits, m }
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let n_qubits = qubits_of(psi.len())?;
        let norm2: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        if !(norm2 > 0.0) {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let v = DMatrix::from_column_slice(psi.len(), 1, psi);
        Ok(DensityMatrix { n_qubits, m: &v * v.adjoint() / C64::from(norm2) })
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1 << n_qubits;
        DensityMatrix { n_qubits, m: DMatrix::identity(d, d) / C64::from(d as f64) }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.m)
    }

    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }
}

fn check_qubit(q: usize, n: usize) -> Result<()> {
    if q == 0 || q > n {
        return Err(Error::InvalidParameter(format!("qubit {q} outside 1..={n}")));
    }
    Ok(())
}

/// Reduced state on `keep` (1-based, any order; output follows ascending order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_qubits;
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    for &q in &keep {
        check_qubit(q, n)?;
    }
    let traced: Vec<usize> = (1..=n).filter(|q| !keep.contains(q)).collect();
    let bit = |q: usize| n - q;
    let compose = |kept: usize, env: usize| -> usize {
        let mut idx = 0;
        for (i, &q) in keep.iter().enumerate() {
            if (kept >> (keep.len() - 1 - i)) & 1 == 1 {
                idx |= 1 << bit(q);
            }
        }
        for (i, &q) in traced.iter().enumerate() {
            if (env >> (traced.len() - 1 - i)) & 1 == 1 {
                idx |= 1 << bit(q);
            }
        }
        idx
    };
    let dk = 1 << keep.len();
    let de = 1 << traced.len();
    let mut out = DMatrix::zeros(dk, dk);
    for a in 0..dk {
        for b in 0..dk {
            let mut s = C64::from(0.0);
            for e in 0..de {
                s += rho.m[(compose(a, e), compose(b, e))];
            }
            out[(a, b)] = s;
        }
    }
    Ok(DensityMatrix { n_qubits: keep.len(), m: out })
}

/// Transpose on qubit `subsystem` (1-based).
pub fn partial_transpose(rho: &DensityMatrix, subsystem: usize) -> Result<DMatrix<C64>> {
    check_qubit(subsystem, rho.n_qubits)?;
    let mask = 1 << (rho.n_qubits - subsystem);
    let d = rho.dim();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            // swap the subsystem bits of row and column
            let (bi, bj) = (i & mask, j & mask);
            let (ni, nj) = ((i & !mask) | bj, (j & !mask) | bi);
            out[(ni, nj)] = rho.m[(i, j)];
        }
    }
    Ok(out)
}

/// Sum of the magnitudes of negative eigenvalues of `ρ^{T_1}`.
pub fn negativity(rho: &DensityMatrix) -> Result<f64> {
    negativity_across(rho, 1)
}

pub fn negativity_across(rho: &DensityMatrix, subsystem: usize) -> Result<f64> {
    let pt = partial_transpose(rho, subsystem)?;
    Ok(hermitian_eigenvalues(&pt).iter().filter(|&&e| e < 0.0).map(|e| -e).sum())
}

/// Negativity of the (unnormalised) pure two-qubit state, weighted by its norm:
/// `p·N(ψ/√p) = |ad − bc|`.
pub fn weighted_pure_negativity(v: &[C64; 4]) -> f64 {
    (v[0] * v[3] - v[1] * v[2]).norm()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochBasisSet {
    pub points: Vec<[f64; 3]>,
}

/// Fibonacci lattice with both poles included: `z_i = 1 − 2i/(m−1)`,
/// azimuth advancing by the golden angle.
pub fn fibonacci_bloch_points(m: usize) -> Result<BlochBasisSet> {
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one Bloch point".into()));
    }
    if m == 1 {
        return Ok(BlochBasisSet { points: vec![[0.0, 0.0, 1.0]] });
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let points = (0..m)
        .map(|i| {
            let z = 1.0 - 2.0 * i as f64 / (m - 1) as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect();
    Ok(BlochBasisSet { points })
}

impl BlochBasisSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest over smallest nearest-neighbour distance.
    pub fn spacing_ratio(&self) -> f64 {
        if self.points.len() < 2 {
            return 1.0;
        }
        let dist = |a: &[f64; 3], b: &[f64; 3]| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        };
        let nn: Vec<f64> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                self.points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| dist(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let max = nn.iter().copied().fold(0.0, f64::max);
        let min = nn.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// `(|v+⟩, |v−⟩)`, eigenvectors of `v·σ`.
    fn eigenbasis(v: &[f64; 3]) -> [[C64; 2]; 2] {
        let theta = v[2].clamp(-1.0, 1.0).acos();
        let phi = v[1].atan2(v[0]);
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        [
            [C64::from(c), C64::from_polar(s, phi)],
            [C64::from(-s), C64::from_polar(c, phi)],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeResult {
    pub le: f64,
    /// Index into the basis set for each measured qubit, in qubit order.
    pub best_assignment: Vec<usize>,
    pub n_assignments: usize,
}

/// Contracts the measured qubits of `state` with the chosen eigenvectors,
/// leaving the two-qubit vector on `(j, k)`.
fn project_pair(
    state: &[C64],
    n: usize,
    j: usize,
    k: usize,
    measured: &[usize],
    vectors: &[[C64; 2]],
) -> [C64; 4] {
    let mut out = [C64::from(0.0); 4];
    let (bj, bk) = (n - j, n - k);
    for (idx, amp) in state.iter().enumerate() {
        let mut w = *amp;
        for (q, v) in measured.iter().zip(vectors) {
            let b = (idx >> (n - q)) & 1;
            w *= v[b].conj();
            if w == C64::from(0.0) {
                break;
            }
        }
        let pair = (((idx >> bj) & 1) << 1) | ((idx >> bk) & 1);
        out[pair] += w;
    }
    out
}

fn le_setup(n: usize, j: usize, k: usize, m: usize) -> Result<(Vec<usize>, usize)> {
    if !(2..=MAX_LE_QUBITS).contains(&n) {
        return Err(Error::InvalidParameter(format!("N = {n} outside 2..={MAX_LE_QUBITS}")));
    }
    check_qubit(j, n)?;
    check_qubit(k, n)?;
    if j == k {
        return Err(Error::InvalidParameter("j and k must differ".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("empty basis set".into()));
    }
    let measured: Vec<usize> = (1..=n).filter(|&q| q != j && q != k).collect();
    let required = (m as f64).powi(measured.len() as i32) * 2f64.powi(measured.len() as i32);
    if required > LE_BUDGET {
        return Err(Error::BudgetExceeded { required, budget: LE_BUDGET });
    }
    Ok((measured.clone(), m.pow(measured.len() as u32)))
}

fn decode_assignment(mut a: usize, m: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = a % m;
        a /= m;
    }
    out
}

fn argmax(values: Vec<(usize, f64)>) -> (usize, f64) {
    values
        .into_iter()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// `max_M Σ_s p_{M,s} N(ρ_{M,s})` over one basis choice per measured qubit;
/// a lower bound on the localisable entanglement of qubits `j` and `k`.
pub fn localisable_entanglement(
    state: &[C64],
    j: usize,
    k: usize,
    basis: &BlochBasisSet,
) -> Result<LeResult> {
    let n = qubits_of(state.len())?;
    let (measured, n_assignments) = le_setup(n, j, k, basis.len())?;
    let norm2: f64 = state.iter().map(|a| a.norm_sqr()).sum();
    let eig: Vec<[[C64; 2]; 2]> = basis.points.iter().map(BlochBasisSet::eigenbasis).collect();
    let m = basis.len();
    let values: Vec<(usize, f64)> = (0..n_assignments)
        .into_par_iter()
        .map(|a| {
            let choice = decode_assignment(a, m, measured.len());
            let mut total = 0.0;
            for outcome in 0..1usize << measured.len() {
                let vectors: Vec<[C64; 2]> = choice
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| eig[c][(outcome >> (measured.len() - 1 - i)) & 1])
                    .collect();
                let v = project_pair(state, n, j, k, &measured, &vectors);
                let p: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>() / norm2;
                if p < SKIP_PROBABILITY {
                    continue;
                }
                total += weighted_pure_negativity(&v) / norm2;
            }
            (a, total)
        })
        .collect();
    let (best, le) = argmax(values);
    Ok(LeResult {
        le,
        best_assignment: decode_assignment(best, m, measured.len()),
        n_assignments,
    })
}

/// Same quantity via projected density matrices and partial-transpose
/// spectra; slower, used as an independent check.
pub fn localisable_entanglement_dm(
    state: &[C64],
    j: usize,
    k: usize,
    basis: &BlochBasisSet,
) -> Result<LeResult> {
    let n = qubits_of(state.len())?;
    let (measured, n_assignments) = le_setup(n, j, k, basis.len())?;
    let rho = DensityMatrix::from_pure(state)?;
    let m = basis.len();
    let mut values = Vec::with_capacity(n_assignments);
    for a in 0..n_assignments {
        let choice = decode_assignment(a, m, measured.len());
        let mut total = 0.0;
        for outcome in 0..1usize << measured.len() {
            // projector ⊗ over measured qubits, identity on j, k
            let d = 1 << n;
            let mut proj = DMatrix::<C64>::identity(d, d);
            for (i, (&q, &c)) in measured.iter().zip(&choice).enumerate() {
                let sign = if (outcome >> (measured.len() - 1 - i)) & 1 == 0 { 1.0 } else { -1.0 };
                let v = basis.points[c];
                let p1 = single_qubit_projector(v, sign);
                proj = embed(&p1, q, n) * proj;
            }
            let post = &proj * rho.matrix() * proj.adjoint();
            let p = post.trace().re;
            if p < SKIP_PROBABILITY {
                continue;
            }
            let reduced = partial_trace(&DensityMatrix::new_unchecked(post / C64::from(p)), &[j, k])?;
            let sub = if j < k { 1 } else { 2 };
            total += p * negativity_across(&reduced, sub)?;
        }
        values.push((a, total));
    }
    let (best, le) = argmax(values);
    Ok(LeResult { le, best_assignment: decode_assignment(best, m, measured.len()), n_assignments })
}

/// `(1 ± v·σ)/2`.
pub fn single_qubit_projector(v: [f64; 3], sign: f64) -> DMatrix<C64> {
    let h = 0.5 * sign;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::from(0.5 + h * v[2]),
            C64::new(h * v[0], -h * v[1]),
            C64::new(h * v[0], h * v[1]),
            C64::from(0.5 - h * v[2]),
        ],
    )
}

/// `1 ⊗ … ⊗ op_q ⊗ … ⊗ 1`.
pub fn embed(op: &DMatrix<C64>, q: usize, n: usize) -> DMatrix<C64> {
    let left = DMatrix::<C64>::identity(1 << (q - 1), 1 << (q - 1));
    let right = DMatrix::<C64>::identity(1 << (n - q), 1 << (n - q));
    left.kronecker(op).kronecker(&right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_lc_recursive, Branch};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn bell() -> Vec<C64> {
        let h = C64::from(FRAC_1_SQRT_2);
        vec![h, C64::from(0.0), C64::from(0.0), h]
    }

    #[test]
    fn bell_negativity() {
        let rho = DensityMatrix::from_pure(&bell()).unwrap();
        assert!((negativity(&rho).unwrap() - 0.5).abs() < 1e-12);
        assert!((weighted_pure_negativity(&[bell()[0], bell()[1], bell()[2], bell()[3]]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn product_state_has_no_negativity() {
        let a = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let b = [C64::new(0.28, 0.96), C64::from(0.0)];
        let psi: Vec<C64> = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        assert!(negativity(&rho).unwrap() < 1e-12);
    }

    #[test]
    fn lc2_marginal_is_maximally_mixed() {
        let s = build_lc_recursive(2, Branch::Plus).unwrap();
        let rho = DensityMatrix::from_pure(&s).unwrap();
        let r1 = partial_trace(&rho, &[1]).unwrap();
        assert!((r1.matrix() - DensityMatrix::maximally_mixed(1).matrix()).norm() < 1e-15);
    }

    #[test]
    fn partial_trace_keeps_order() {
        // |0⟩|1⟩|+⟩
        let h = FRAC_1_SQRT_2;
        let mut psi = vec![C64::from(0.0); 8];
        psi[0b010] = C64::from(h);
        psi[0b011] = C64::from(h);
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        let r = partial_trace(&rho, &[3, 1]).unwrap();
        // qubits (1, 3) = |0⟩|+⟩
        assert!((r.matrix()[(0, 1)].re - 0.5).abs() < 1e-15);
        assert!((r.matrix()[(2, 2)].norm()) < 1e-15);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(DMatrix::identity(2, 2)).is_err());
        assert!(DensityMatrix::new(DMatrix::identity(3, 3) / C64::from(3.0)).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[C64::from(1.5), C64::from(0.0), C64::from(0.0), C64::from(-0.5)]);
        assert!(DensityMatrix::new(bad).is_err());
        assert!(DensityMatrix::new(DensityMatrix::maximally_mixed(2).matrix().clone()).is_ok());
    }

    #[test]
    fn fibonacci_points() {
        let one = fibonacci_bloch_points(1).unwrap();
        assert_eq!(one.points, vec![[0.0, 0.0, 1.0]]);
        let two = fibonacci_bloch_points(2).unwrap();
        for p in &two.points {
            assert!(((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0).abs() < 1e-12);
        }
        assert!(fibonacci_bloch_points(10).unwrap().spacing_ratio() <= 2.0);
        assert!(fibonacci_bloch_points(0).is_err());
    }

    #[test]
    fn le_of_bell_is_negativity() {
        let basis = fibonacci_bloch_points(3).unwrap();
        let r = localisable_entanglement(&bell(), 1, 2, &basis).unwrap();
        assert!((r.le - 0.5).abs() < 1e-12);
        assert_eq!(r.n_assignments, 1);
    }

    #[test]
    fn le_lc3_end_pair_with_x_basis() {
        let s = build_lc_recursive(3, Branch::Plus).unwrap();
        let basis = BlochBasisSet { points: vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]] };
        let r = localisable_entanglement(&s, 1, 3, &basis).unwrap();
        assert!((r.le - 0.5).abs() < 1e-10);
        assert_eq!(r.best_assignment, vec![1]);
        // Z on the middle qubit disconnects the ends
        let z_only = BlochBasisSet { points: vec![[0.0, 0.0, 1.0]] };
        assert!(localisable_entanglement(&s, 1, 3, &z_only).unwrap().le < 1e-12);
    }

    #[test]
    fn pure_and_density_routes_agree() {
        let s = build_lc_recursive(4, Branch::Minus).unwrap();
        let basis = fibonacci_bloch_points(4).unwrap();
        for (j, k) in [(1, 2), (1, 4), (2, 3), (3, 1)] {
            let a = localisable_entanglement(&s, j, k, &basis).unwrap();
            let b = localisable_entanglement_dm(&s, j, k, &basis).unwrap();
            assert!((a.le - b.le).abs() < 1e-10, "{j}{k}: {} vs {}", a.le, b.le);
        }
    }

    #[test]
    fn budget_guard() {
        let s = vec![C64::from(0.125); 64];
        let big = fibonacci_bloch_points(200).unwrap();
        assert!(matches!(
            localisable_entanglement(&s, 1, 2, &big),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(localisable_entanglement(&s, 2, 2, &fibonacci_bloch_points(2).unwrap()).is_err());
    }

    #[test]
    fn projector_embedding() {
        let p = single_qubit_projector([0.0, 0.0, 1.0], 1.0);
        let e = embed(&p, 2, 3);
        assert_eq!(e.nrows(), 8);
        // projects qubit 2 onto |0⟩
        assert_eq!(e[(0b000, 0b000)], C64::from(1.0));
        assert_eq!(e[(0b010, 0b010)], C64::from(0.0));
    }
}
