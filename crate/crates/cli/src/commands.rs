//! One pipeline per subcommand. Each returns a summary line and its artifacts.

use std::io::BufReader;

use raman_lc::cluster::{build_lc_recursive, generators, Branch};
use raman_lc::entanglement::{fibonacci_bloch_points, localisable_entanglement, DensityMatrix};
use raman_lc::export::{fmt_num, params_metadata, write_csv, write_state_csv};
use raman_lc::noise::{coherence_curve, ensemble_fidelity, FidelityConfig, ScheduleSource};
use raman_lc::protocol::{
    encode_and_measure, phase_correct, run_protocol, ScatterSchedule, SpinOutcome,
};
use raman_lc::rng::{derive_seed, stream};
use raman_lc::stats::{optimize_t_b, write_fusion_csv, write_optimum_csv};
use raman_lc::tomography::{
    group_projectors, mle_reconstruct_with, read_records_csv, simulate_random_phase_experiment,
    write_records_csv, MleOptions, TomographyReport,
};
use raman_lc::trajectory::{
    bin_statistics, estimate_raman_rate, perturbative_rate, run_ensemble, write_events_csv,
    TrajectoryConfig,
};
use raman_lc::{norm, overlap_fidelity, Error, Result, C64};

use crate::config::ExperimentConfig;
use crate::output::Artifact;

pub struct RunOutput {
    pub summary: String,
    pub artifacts: Vec<Artifact>,
}

fn meta(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn table(metadata: &[(String, String)], columns: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, metadata, columns, rows)?;
    Ok(buf)
}

pub fn rate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let p = &cfg.physical;
    let t = &cfg.trajectory;
    let mut c = TrajectoryConfig::continuous(t.duration, cfg.seed, p.gamma);
    c.integrator = t.integrator;
    let est = estimate_raman_rate(p, &c, t.n_traj)?;
    let eq7 = perturbative_rate(p)?;
    let row = vec![
        fmt_num(p.b_ext),
        fmt_num(p.omega_v),
        fmt_num(eq7),
        fmt_num(est.rate),
        fmt_num(est.stderr),
        est.n_events.to_string(),
    ];
    let body = table(
        &params_metadata(p),
        &["B_ext", "omega_V", "rate_perturbative", "rate_simulated", "stderr", "n_events"],
        &[row],
    )?;
    Ok(RunOutput {
        summary: format!("rate: simulated {:.6e} ± {:.2e} /ns, perturbative {eq7:.6e} /ns", est.rate, est.stderr),
        artifacts: vec![Artifact::csv(".csv", "rate", cfg, body)?],
    })
}

pub fn trajectory(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let p = &cfg.physical;
    let t = &cfg.trajectory;
    let mut c = TrajectoryConfig::binned(t.t_bin, t.n_bins, cfg.seed, p.gamma);
    c.integrator = t.integrator;
    let trs = run_ensemble(p, &c, t.n_traj)?;
    let mut body = Vec::new();
    write_events_csv(&mut body, &trs)?;
    let (mut single, mut raman) = (0usize, 0usize);
    for tr in &trs {
        let counts = bin_statistics(&tr.events, t.t_bin, t.n_bins);
        single += counts.iter().filter(|&&k| k == 1).count();
        raman += counts.iter().sum::<usize>();
    }
    let bins = t.n_traj * t.n_bins;
    Ok(RunOutput {
        summary: format!(
            "trajectory: {} trajectories, {raman} Raman events, {:.4} of {bins} bins hold exactly one",
            t.n_traj,
            single as f64 / bins as f64
        ),
        artifacts: vec![Artifact::csv(".csv", "trajectory", cfg, body)?],
    })
}

pub fn protocol(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.options.n;
    let t_bin = cfg.trajectory.t_bin;
    let schedule = if cfg.options.random_schedule {
        ScatterSchedule::uniform(n, t_bin, &mut stream(cfg.seed, 0))
    } else {
        ScatterSchedule::zeros(n)
    };
    let (state, ledger) = run_protocol(n, &schedule, cfg.physical.omega_b(), t_bin)?;
    let corrected = phase_correct(&state, &ledger)?;
    let mut fids = Vec::new();
    for (outcome, branch) in [(SpinOutcome::Plus, Branch::Plus), (SpinOutcome::Minus, Branch::Minus)] {
        let photons = encode_and_measure(&corrected, outcome)?;
        fids.push(overlap_fidelity(&photons.amps, &build_lc_recursive(n, branch)?));
    }
    let tau: Vec<String> = schedule.tau1.iter().map(|&x| fmt_num(x)).collect();
    let mut body = format!("# tau1={}\n", tau.join(";")).into_bytes();
    write_state_csv(&mut body, &corrected.basis_labels(), corrected.amplitudes())?;
    Ok(RunOutput {
        summary: format!(
            "protocol: n={n}, fidelity to LC after correction {:.12} (spin up), {:.12} (spin down)",
            fids[0], fids[1]
        ),
        artifacts: vec![Artifact::csv(".csv", "protocol", cfg, body)?],
    })
}

pub fn verify(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.options.n;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for branch in [Branch::Plus, Branch::Minus] {
        let psi = build_lc_recursive(n, branch)?;
        for g in generators(n, branch)? {
            let k_psi = g.pauli.apply(&psi)?;
            let lambda = C64::from(g.eigenvalue());
            let diff: Vec<C64> = k_psi.iter().zip(&psi).map(|(a, b)| a - lambda * b).collect();
            let r = norm(&diff);
            worst = worst.max(r);
            rows.push(vec![
                format!("{branch:?}").to_lowercase(),
                g.site.to_string(),
                g.pauli.to_string(),
                fmt_num(g.eigenvalue()),
                fmt_num(r),
                raman_lc::cluster::passes(r).to_string(),
            ]);
        }
    }
    let body = table(
        &meta(&[("n", n.to_string())]),
        &["branch", "site", "generator", "eigenvalue", "residual", "pass"],
        &rows,
    )?;
    Ok(RunOutput {
        summary: format!("verify: n={n}, {} generators, max residual {worst:.3e}", rows.len()),
        artifacts: vec![Artifact::csv(".csv", "verify", cfg, body)?],
    })
}

pub fn fidelity(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let p = &cfg.physical;
    let n = cfg.options.n;
    let t_bin = cfg.trajectory.t_bin;
    let fc = FidelityConfig {
        n,
        b_ext: p.b_ext,
        t_bin,
        g: cfg.noise.g(p),
        schedule: if cfg.options.random_schedule {
            ScheduleSource::Uniform
        } else {
            ScheduleSource::Fixed(ScatterSchedule::zeros(n))
        },
        n_samples: cfg.noise.n_samples,
        seed: cfg.seed,
    };
    let est = ensemble_fidelity(&fc, &cfg.noise.overhauser)?;
    let op = &cfg.noise.overhauser;
    let body = table(
        &meta(&[("delta_B_perp", fmt_num(op.delta_b_perp)), ("alpha", fmt_num(op.alpha))]),
        &["B_ext", "T_B", "n", "fidelity", "stderr", "n_samples"],
        &[vec![
            fmt_num(p.b_ext),
            fmt_num(t_bin),
            n.to_string(),
            fmt_num(est.fidelity),
            fmt_num(est.stderr),
            est.n_samples.to_string(),
        ]],
    )?;
    Ok(RunOutput {
        summary: format!(
            "fidelity: B={} mT, T_B={} ns, n={n}: F = {:.6} ± {:.6}",
            p.b_ext, t_bin, est.fidelity, est.stderr
        ),
        artifacts: vec![Artifact::csv(".csv", "fidelity", cfg, body)?],
    })
}

pub fn coherence(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let o = &cfg.options;
    if o.t_points < 2 || !(o.t_max > 0.0) {
        return Err(Error::InvalidParameter("need t_points >= 2 and t_max > 0".into()));
    }
    let grid: Vec<f64> =
        (0..o.t_points).map(|i| o.t_max * i as f64 / (o.t_points - 1) as f64).collect();
    let p = &cfg.physical;
    let curve = coherence_curve(p.b_ext, &cfg.noise.overhauser, cfg.noise.g(p), &grid, cfg.noise.n_samples, cfg.seed)?;
    let t2 = curve.t2_star.map_or("none".to_string(), fmt_num);
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| vec![fmt_num(curve.t[i]), fmt_num(curve.envelope[i]), fmt_num(curve.stderr[i])])
        .collect();
    let body = table(
        &meta(&[
            ("B_ext", fmt_num(p.b_ext)),
            ("T2_star", t2.clone()),
            ("T2_star_stderr", curve.t2_stderr.map_or("none".to_string(), fmt_num)),
        ]),
        &["t", "envelope", "stderr"],
        &rows,
    )?;
    Ok(RunOutput {
        summary: format!("coherence: B={} mT, T2* = {t2} ns", p.b_ext),
        artifacts: vec![Artifact::csv(".csv", "coherence", cfg, body)?],
    })
}

pub fn le(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.options.n;
    let (s, _) = run_protocol(n, &ScatterSchedule::zeros(n), 0.0, cfg.trajectory.t_bin)?;
    let psi = raman_lc::protocol::encode_joint(&s)?;
    let basis = fibonacci_bloch_points(cfg.options.m)?;
    let mut rows = Vec::new();
    let mut min_le = f64::INFINITY;
    for j in 1..=n + 1 {
        for k in j + 1..=n + 1 {
            let r = localisable_entanglement(&psi, j, k, &basis)?;
            min_le = min_le.min(r.le);
            let assign: Vec<String> = r.best_assignment.iter().map(usize::to_string).collect();
            rows.push(vec![j.to_string(), k.to_string(), fmt_num(r.le), assign.join(";")]);
        }
    }
    let body = table(
        &meta(&[("qubits", format!("spin + {n} photons")), ("m", cfg.options.m.to_string())]),
        &["j", "k", "LE", "best_assignment"],
        &rows,
    )?;
    Ok(RunOutput {
        summary: format!("le: spin + {n} photons, {} pairs, min LE {min_le:.6}", rows.len()),
        artifacts: vec![Artifact::csv(".csv", "le", cfg, body)?],
    })
}

pub fn stats(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let o = &cfg.options;
    let p = &cfg.physical;
    let n_traj = cfg.trajectory.n_traj;
    let opt = optimize_t_b(p, o.n, o.eta, &o.t_bin_grid, n_traj, cfg.seed)?;
    let mut body = Vec::new();
    write_optimum_csv(&mut body, p, o.n, o.eta, n_traj, cfg.seed, &opt)?;
    Ok(RunOutput {
        summary: format!("stats: n={}, optimal T_B = {} ns, score {:.6e} /h", o.n, opt.t_bin, opt.score),
        artifacts: vec![Artifact::csv(".csv", "stats", cfg, body)?],
    })
}

pub fn fusion(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let o = &cfg.options;
    let mut body = Vec::new();
    write_fusion_csv(&mut body, o.l, o.p_f)?;
    let ratio = raman_lc::stats::fusion_success(o.l, o.l * o.l, o.p_f)?
        / raman_lc::stats::fusion_success(o.l, 2, o.p_f)?;
    Ok(RunOutput {
        summary: format!("fusion: L={}, p_f={}, success(L²)/success(2) = {ratio:.6e}", o.l, o.p_f),
        artifacts: vec![Artifact::csv(".csv", "fusion", cfg, body)?],
    })
}

pub fn tomo(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let o = &cfg.options;
    let (records, truth) = match &o.records {
        Some(path) => {
            let f = std::fs::File::open(path)
                .map_err(|e| Error::InvalidParameter(format!("cannot open records {path}: {e}")))?;
            (read_records_csv(BufReader::new(f))?, None)
        }
        None => {
            let (s, c) = (o.theta / 2.0).sin_cos();
            let psi = [C64::from(c), C64::from_polar(s, o.phi)];
            let recs = simulate_random_phase_experiment(&psi, o.events, o.law, cfg.seed)?;
            (recs, Some(DensityMatrix::from_pure(&psi)?))
        }
    };
    let grouping = group_projectors(&records, o.k)?;
    let opts = MleOptions { seed: derive_seed(cfg.seed, 1), ..MleOptions::default() };
    let mle = mle_reconstruct_with(&grouping.groups, &opts)?;
    let report = TomographyReport::new(&grouping, &mle, truth.as_ref())?;
    let mut rec_csv = Vec::new();
    write_records_csv(&mut rec_csv, &records)?;
    let summary = match report.fidelity {
        Some(f) => format!("tomo: {} events in {} groups, fidelity {f:.6}", report.n_events, report.n_groups),
        None => format!("tomo: {} events in {} groups, log-likelihood {:.6e}", report.n_events, report.n_groups, report.log_likelihood),
    };
    Ok(RunOutput {
        summary,
        artifacts: vec![
            Artifact::csv("-records.csv", "tomo", cfg, rec_csv)?,
            Artifact::json("-report.json", "tomo", cfg, serde_json::to_value(&report)?)?,
        ],
    })
}
