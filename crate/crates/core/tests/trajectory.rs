use std::f64::consts::SQRT_2;

use proptest::prelude::*;
use raman_lc::system::{JumpChannel, PhysicalParams, MU_B_OVER_HBAR};
use raman_lc::trajectory::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn weak(b: f64, omega_v: f64) -> PhysicalParams {
    PhysicalParams { b_ext: b, omega_v, ..Default::default() }
}

/// `Ω_V² γ / (8 Δ²)` with `Δ = (g_h + g_e) μ_B B / 2`.
fn eq7(p: &PhysicalParams) -> f64 {
    let delta = (p.g_h_x + p.g_e_x) * MU_B_OVER_HBAR * p.b_ext / 2.0;
    p.omega_v * p.omega_v * p.gamma / (8.0 * delta * delta)
}

#[test]
fn perturbative_rate_hand_value() {
    let omega = 0.14142f64;
    let delta = 2.6383f64;
    let hand = omega * omega / (8.0 * delta * delta);
    assert!((hand - 3.592e-4).abs() < 5e-8);
    let p = weak(100.0, 0.2 / SQRT_2);
    let r = perturbative_rate(&p).unwrap();
    assert!((r - eq7(&p)).abs() < 1e-15);
    assert!((r / 3.592e-4 - 1.0).abs() < 1e-3);
}

#[test]
fn doubling_detuning_quarters_rate_and_amplitude_power() {
    let a = weak(100.0, 0.1);
    let b = weak(200.0, 0.1);
    assert!((perturbative_rate(&a).unwrap() / perturbative_rate(&b).unwrap() - 4.0).abs() < 1e-12);
    let (a1, a2) = raman_amplitudes(&a).unwrap();
    let (b1, _) = raman_amplitudes(&b).unwrap();
    assert!(((a1 * a1) / (b1 * b1) - 4.0).abs() < 1e-12);
    assert!((a1 + a2).abs() < 1e-15);
    assert!(perturbative_rate(&weak(0.0, 0.1)).is_err());
}

#[test]
fn simulated_rate_matches_perturbation_theory() {
    let p = weak(100.0, 0.2 / SQRT_2);
    let c = TrajectoryConfig::continuous(1e5, 21, 1.0);
    let est = estimate_raman_rate(&p, &c, 200).unwrap();
    let want = eq7(&p);
    assert!(
        (est.rate - want).abs() <= 3.0 * est.stderr,
        "rate {} ± {} vs {}",
        est.rate,
        est.stderr,
        want
    );
}

#[test]
fn bin_counts_are_poisson() {
    let p = weak(100.0, 0.2 / SQRT_2);
    let t_bin = 500.0;
    let n_bins = 200;
    let c = TrajectoryConfig::binned(t_bin, n_bins, 4, 1.0);
    let trs = run_ensemble(&p, &c, 100).unwrap();
    let mut hist = [0u64; 4];
    for tr in &trs {
        for k in bin_statistics(&tr.events, t_bin, n_bins) {
            hist[k.min(3)] += 1;
        }
    }
    let total: u64 = hist.iter().sum();
    let pois = Poisson::new(eq7(&p) * t_bin).unwrap();
    let mut expected: Vec<f64> = (0..3).map(|k| pois.pmf(k) * total as f64).collect();
    expected.push(total as f64 - expected.iter().sum::<f64>());
    let chi2: f64 = hist
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.99);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}, hist {hist:?}, expected {expected:?}");
}

#[test]
fn two_bin_success_factorises() {
    let p = PhysicalParams { g_e_x: 0.15, ..weak(100.0, 0.2 / SQRT_2) };
    let one = success_probability(&p, 500.0, 1, 10_000, 8).unwrap();
    let two = success_probability(&p, 500.0, 2, 10_000, 9).unwrap();
    let product = one.probability * one.probability;
    let sigma = (two.stderr.powi(2) + (2.0 * one.probability * one.stderr).powi(2)).sqrt();
    assert!((two.probability - product).abs() <= 3.0 * sigma);
    assert!((0.10..=0.40).contains(&one.probability));
}

#[test]
fn ensemble_independent_of_thread_count() {
    let p = weak(100.0, 0.3);
    let c = TrajectoryConfig::binned(500.0, 20, 77, 1.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&p, &c, 24).unwrap())
    };
    let (a, b) = (run(1), run(4));
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    write_events_csv(&mut ca, &a).unwrap();
    write_events_csv(&mut cb, &b).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn rk4_route_agrees_on_rate() {
    let p = weak(100.0, 0.3);
    let mut c = TrajectoryConfig::continuous(2e4, 3, 1.0);
    let exact = estimate_raman_rate(&p, &c, 16).unwrap();
    c.integrator = Integrator::Rk4;
    let rk4 = estimate_raman_rate(&p, &c, 16).unwrap();
    assert!((exact.rate - rk4.rate).abs() <= exact.stderr);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn event_records_are_consistent(seed in any::<u64>(), b in 40.0..400.0f64, ov in 0.1..0.6f64) {
        let p = weak(b, ov);
        let c = TrajectoryConfig::binned(300.0, 10, seed, 1.0);
        let tr = run_trajectory(&p, &c).unwrap();
        for w in tr.events.windows(2) {
            prop_assert!(w[0].t < w[1].t);
        }
        for e in &tr.events {
            prop_assert!(e.t >= 0.0 && e.t <= c.duration);
            prop_assert_eq!(e.bin_index, (e.t / c.t_bin).floor() as usize);
        }
        let colours: Vec<JumpChannel> =
            tr.events.iter().map(|e| e.channel).filter(|c| c.is_raman()).collect();
        for w in colours.windows(2) {
            prop_assert_ne!(w[0], w[1]);
        }
        prop_assert!((tr.final_state.norm() - 1.0).abs() < 1e-9);
    }
}
