use nalgebra::{DMatrix, Matrix3, Vector3};
use proptest::prelude::*;
use rand::Rng;
use raman_lc::entanglement::DensityMatrix;
use raman_lc::tomography::*;
use raman_lc::C64;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn random_pure<R: Rng>(rng: &mut R) -> [C64; 2] {
    let a = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    let b = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
    [a / n, b / n]
}

fn rho_from_bloch(r: Vector3<f64>) -> DMatrix<C64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[c((1.0 + r.z) / 2.0, 0.0), c(r.x / 2.0, -r.y / 2.0), c(r.x / 2.0, r.y / 2.0), c((1.0 - r.z) / 2.0, 0.0)],
    )
}

/// Least-squares Bloch vector from grouped ±1 frequencies.
fn linear_inversion(groups: &[ProjectorGroup]) -> Vector3<f64> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for g in groups {
        let v = Vector3::from(g.axis);
        let w = g.total() as f64;
        let m = (g.n_plus as f64 - g.n_minus as f64) / w;
        a += v * v.transpose() * w;
        b += v * (m * w);
    }
    a.try_inverse().unwrap() * b
}

/// `tr(ρσ) + 2√(det ρ · det σ)` for qubits.
fn qubit_fidelity(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let tr = (a * b).trace().re;
    tr + 2.0 * (a.determinant().re.max(0.0) * b.determinant().re.max(0.0)).sqrt()
}

const OCTAHEDRON: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

fn exact_groups(r: [f64; 3], axes: &[[f64; 3]], shots: usize) -> Vec<ProjectorGroup> {
    axes.iter()
        .map(|a| {
            let p = 0.5 * (1.0 + Vector3::from(*a).dot(&Vector3::from(r)));
            let n_plus = (p * shots as f64).round() as usize;
            ProjectorGroup { axis: *a, members: Vec::new(), n_plus, n_minus: shots - n_plus }
        })
        .collect()
}

#[test]
fn octahedral_noiseless_reconstruction() {
    let mut rng = raman_lc::rng::stream(40, 0);
    for _ in 0..10 {
        let psi = random_pure(&mut rng);
        let groups = exact_groups(bloch_vector(&psi), &OCTAHEDRON, 1_000_000_000);
        let mle = mle_reconstruct(&groups).unwrap();
        let oracle = rho_from_bloch(linear_inversion(&groups));
        let f = qubit_fidelity(mle.rho.matrix(), &oracle);
        assert!(f >= 1.0 - 1e-6, "fidelity to linear inversion {f}");
        let truth = DensityMatrix::from_pure(&psi).unwrap();
        assert!(fidelity(&mle.rho, &truth).unwrap() >= 1.0 - 1e-6);
    }
}

#[test]
fn one_group_per_axis_recovers_linear_inversion() {
    let mut rng = raman_lc::rng::stream(41, 0);
    let r = Vector3::new(0.3, -0.2, 0.5);
    let axes: Vec<[f64; 3]> = (0..24)
        .map(|_| {
            let v = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            v.normalize().into()
        })
        .collect();
    let per_axis = 4000;
    let mut records = Vec::new();
    for a in &axes {
        let p = 0.5 * (1.0 + Vector3::from(*a).dot(&r));
        let plus = (p * per_axis as f64).round() as usize;
        for i in 0..per_axis {
            records.push(MeasurementRecord::new(*a, if i < plus { 1 } else { -1 }).unwrap());
        }
    }
    let grouping = group_projectors(&records, axes.len()).unwrap();
    assert_eq!(grouping.groups.len(), axes.len());
    let mle = mle_reconstruct(&grouping.groups).unwrap();
    let lin = linear_inversion(&grouping.groups);
    let m = mle.rho.matrix();
    let mle_r = Vector3::new(2.0 * m[(1, 0)].re, 2.0 * m[(1, 0)].im, (m[(0, 0)] - m[(1, 1)]).re);
    assert!((mle_r - lin).norm() < 1e-3, "{mle_r} vs {lin}");
}

#[test]
fn born_frequencies_for_fixed_axis() {
    let psi = [c(0.6, 0.0), c(0.0, 0.8)];
    let n = 20_000;
    let recs = simulate_with_settings(&psi, n, PhaseLaw::Fixed { phi: 0.0 }, &[[0.0, 0.0, 1.0]], 2).unwrap();
    let plus = recs.iter().filter(|r| r.outcome == 1).count() as f64;
    let p = 0.36;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((plus - n as f64 * p).abs() <= 3.0 * sigma);
}

#[test]
fn uniform_phase_covers_equator() {
    let psi = [c(1.0, 0.0), c(0.0, 0.0)];
    let n = 10_000;
    let recs = simulate_with_settings(&psi, n, PhaseLaw::Uniform, &[[1.0, 0.0, 0.0]], 6).unwrap();
    let bins = 16;
    let mut hist = vec![0usize; bins];
    for r in &recs {
        assert!(r.axis[2].abs() < 1e-15);
        let phi = r.axis[1].atan2(r.axis[0]).rem_euclid(std::f64::consts::TAU);
        hist[((phi / std::f64::consts::TAU * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let e = n as f64 / bins as f64;
    let chi2: f64 = hist.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    assert!(chi2 < ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99));


    // refined anchors split the circle into near-equal arcs
    let grouping = group_projectors(&recs, 16).unwrap();
    assert_eq!(grouping.groups.len(), 16);
    assert_eq!(grouping.groups.iter().map(ProjectorGroup::total).sum::<usize>(), n);
    let mut centres: Vec<f64> = grouping.groups.iter().map(|g| g.axis[1].atan2(g.axis[0])).collect();
    centres.sort_by(f64::total_cmp);
    let tau = std::f64::consts::TAU;
    let arc = tau / 16.0;
    for i in 0..16 {
        let prev = centres[(i + 15) % 16] - if i == 0 { tau } else { 0.0 };
        let next = centres[(i + 1) % 16] + if i == 15 { tau } else { 0.0 };
        let width = (next - prev) / 2.0;
        assert!((width / arc - 1.0).abs() < 0.1, "arc {i}: {width}");
    }
}

#[test]
fn fidelity_grows_with_events() {
    let mut rng = raman_lc::rng::stream(42, 0);
    let states: Vec<[C64; 2]> = (0..30).map(|_| random_pure(&mut rng)).collect();
    let stats = |n_events: usize| {
        let f: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(i, psi)| {
                let recs = simulate_random_phase_experiment(psi, n_events, PhaseLaw::Uniform, i as u64).unwrap();
                let g = group_projectors(&recs, 16).unwrap();
                let mle = mle_reconstruct(&g.groups).unwrap();
                fidelity(&mle.rho, &DensityMatrix::from_pure(psi).unwrap()).unwrap()
            })
            .collect();
        let m = f.iter().sum::<f64>() / f.len() as f64;
        let var = f.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (f.len() - 1) as f64;
        (m, (var / f.len() as f64).sqrt())
    };
    let s: Vec<(f64, f64)> = [100, 1000, 10_000].into_iter().map(stats).collect();
    for w in s.windows(2) {
        let sigma = (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        assert!(w[1].0 >= w[0].0 - 2.0 * sigma, "{s:?}");
    }
}

#[test]
fn report_json() {
    let psi = [c(0.6, 0.0), c(0.0, 0.8)];
    let recs = simulate_random_phase_experiment(&psi, 2000, PhaseLaw::Uniform, 1).unwrap();
    let g = group_projectors(&recs, 8).unwrap();
    let mle = mle_reconstruct(&g.groups).unwrap();
    let truth = DensityMatrix::from_pure(&psi).unwrap();
    let report = TomographyReport::new(&g, &mle, Some(&truth)).unwrap();
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["rho"].as_array().unwrap().len(), 4);
    assert_eq!(json["n_events"], 2000);
    assert!(json["fidelity"].as_f64().unwrap() > 0.9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn uhlmann_matches_closed_form(
        a in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        b in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
    ) {
        let clip = |v: Vector3<f64>| if v.norm() > 1.0 { v / v.norm() } else { v };
        let ra = rho_from_bloch(clip(Vector3::new(a.0, a.1, a.2)));
        let rb = rho_from_bloch(clip(Vector3::new(b.0, b.1, b.2)));
        let f = fidelity(&DensityMatrix::new_unchecked(ra.clone()), &DensityMatrix::new_unchecked(rb.clone())).unwrap();
        prop_assert!((f - qubit_fidelity(&ra, &rb)).abs() < 1e-6);
    }

    #[test]
    fn mle_output_is_a_state(counts in prop::collection::vec((0usize..50, 0usize..50), 6)) {
        let groups: Vec<ProjectorGroup> = OCTAHEDRON
            .iter()
            .zip(&counts)
            .map(|(a, &(p, m))| ProjectorGroup { axis: *a, members: Vec::new(), n_plus: p, n_minus: m })
            .collect();
        prop_assume!(groups.iter().all(|g| g.total() > 0));
        let mle = mle_reconstruct(&groups).unwrap();
        prop_assert!(DensityMatrix::new(mle.rho.matrix().clone()).is_ok());
    }
}
