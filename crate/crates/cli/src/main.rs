//! `raman-lc`: command-line front end for the cluster-state toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raman_lc::tomography::PhaseLaw;
use raman_lc::Error;
use serde_json::json;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "raman-lc", version, about = "Simulate and verify Raman-scattering linear cluster-state sources")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Physical {
    /// External field (mT).
    #[arg(long = "B")]
    b_ext: Option<f64>,
    /// Vertical Rabi frequency (rad/ns).
    #[arg(long = "omega-v")]
    omega_v: Option<f64>,
    #[arg(long = "g-e")]
    g_e: Option<f64>,
}

#[derive(Args, Default)]
struct Bins {
    /// Bin length (ns).
    #[arg(long = "TB")]
    t_bin: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Default)]
struct Noise {
    /// Out-of-plane Overhauser spread (mT).
    #[arg(long = "delta-b")]
    delta_b: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Raman rate from trajectories against perturbation theory.
    Rate {
        #[command(flatten)]
        phys: Physical,
        #[arg(long)]
        n_traj: Option<usize>,
        /// Length of each trajectory (ns).
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Binned quantum-jump trajectories and their event logs.
    Trajectory {
        #[command(flatten)]
        phys: Physical,
        #[arg(long = "TB")]
        t_bin: Option<f64>,
        #[arg(long)]
        n_bins: Option<usize>,
        #[arg(long)]
        n_traj: Option<usize>,
    },
    /// Ideal protocol run with phase correction.
    Protocol {
        #[command(flatten)]
        phys: Physical,
        #[command(flatten)]
        bins: Bins,
        /// Scatter at the start of every bin instead of at random times.
        #[arg(long)]
        zero_phase: bool,
    },
    /// Stabilizer residuals of the recursive linear cluster states.
    Verify {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Ensemble fidelity under frozen Overhauser noise.
    Fidelity {
        #[command(flatten)]
        phys: Physical,
        #[command(flatten)]
        bins: Bins,
        #[command(flatten)]
        noise: Noise,
    },
    /// Spin coherence envelope and T2*.
    Coherence {
        #[command(flatten)]
        phys: Physical,
        #[command(flatten)]
        noise: Noise,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Localisable entanglement of spin plus n photons.
    Le {
        #[arg(long)]
        n: Option<usize>,
        /// Bloch points per measured qubit.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Bin-length optimisation and false-positive statistics.
    Stats {
        #[command(flatten)]
        phys: Physical,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        n_traj: Option<usize>,
    },
    /// Fusion steps and success towards an L x L cluster.
    Fusion {
        #[arg(long = "L")]
        l: Option<usize>,
        #[arg(long)]
        pf: Option<f64>,
    },
    /// Random-phase single-qubit tomography.
    Tomo {
        /// Records CSV to reconstruct; simulates when absent.
        #[arg(long)]
        records: Option<String>,
        #[arg(long)]
        events: Option<usize>,
        #[arg(long = "K")]
        k: Option<usize>,
        /// fixed, uniform or haar
        #[arg(long)]
        law: Option<String>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        phi: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Rate { .. } => "rate",
            Command::Trajectory { .. } => "trajectory",
            Command::Protocol { .. } => "protocol",
            Command::Verify { .. } => "verify",
            Command::Fidelity { .. } => "fidelity",
            Command::Coherence { .. } => "coherence",
            Command::Le { .. } => "le",
            Command::Stats { .. } => "stats",
            Command::Fusion { .. } => "fusion",
            Command::Tomo { .. } => "tomo",
        }
    }
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

impl Physical {
    fn apply(&self, c: &mut ExperimentConfig) {
        set(&mut c.physical.b_ext, &self.b_ext);
        set(&mut c.physical.omega_v, &self.omega_v);
        set(&mut c.physical.g_e_x, &self.g_e);
    }
}

impl Bins {
    fn apply(&self, c: &mut ExperimentConfig) {
        set(&mut c.trajectory.t_bin, &self.t_bin);
        set(&mut c.options.n, &self.n);
    }
}

impl Noise {
    fn apply(&self, c: &mut ExperimentConfig) {
        set(&mut c.noise.overhauser.delta_b_perp, &self.delta_b);
        set(&mut c.noise.overhauser.alpha, &self.alpha);
        set(&mut c.noise.n_samples, &self.samples);
    }
}

fn parse_law(s: &str) -> Result<PhaseLaw, Error> {
    match s {
        "uniform" => Ok(PhaseLaw::Uniform),
        "haar" => Ok(PhaseLaw::Haar),
        "fixed" => Ok(PhaseLaw::Fixed { phi: 0.0 }),
        other => Err(Error::InvalidParameter(format!("unknown phase law {other:?}"))),
    }
}

fn apply_flags(cmd: &Command, c: &mut ExperimentConfig) -> Result<(), Error> {
    match cmd {
        Command::Rate { phys, n_traj, duration } => {
            phys.apply(c);
            set(&mut c.trajectory.n_traj, n_traj);
            set(&mut c.trajectory.duration, duration);
        }
        Command::Trajectory { phys, t_bin, n_bins, n_traj } => {
            phys.apply(c);
            set(&mut c.trajectory.t_bin, t_bin);
            set(&mut c.trajectory.n_bins, n_bins);
            set(&mut c.trajectory.n_traj, n_traj);
        }
        Command::Protocol { phys, bins, zero_phase } => {
            phys.apply(c);
            bins.apply(c);
            if *zero_phase {
                c.options.random_schedule = false;
            }
        }
        Command::Verify { n } => set(&mut c.options.n, n),
        Command::Fidelity { phys, bins, noise } => {
            phys.apply(c);
            bins.apply(c);
            noise.apply(c);
        }
        Command::Coherence { phys, noise, t_max, points } => {
            phys.apply(c);
            noise.apply(c);
            set(&mut c.options.t_max, t_max);
            set(&mut c.options.t_points, points);
        }
        Command::Le { n, m } => {
            set(&mut c.options.n, n);
            set(&mut c.options.m, m);
        }
        Command::Stats { phys, n, eta, n_traj } => {
            phys.apply(c);
            set(&mut c.options.n, n);
            set(&mut c.options.eta, eta);
            set(&mut c.trajectory.n_traj, n_traj);
        }
        Command::Fusion { l, pf } => {
            set(&mut c.options.l, l);
            set(&mut c.options.p_f, pf);
        }
        Command::Tomo { records, events, k, law, theta, phi } => {
            if records.is_some() {
                c.options.records = records.clone();
            }
            set(&mut c.options.events, events);
            set(&mut c.options.k, k);
            set(&mut c.options.theta, theta);
            set(&mut c.options.phi, phi);
            if let Some(l) = law {
                c.options.law = parse_law(l)?;
            }
        }
    }
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter(_) => "InvalidParameter",
        Error::DegenerateDetuning => "DegenerateDetuning",
        Error::NonConvergence { .. } => "NonConvergence",
        Error::SlotOutOfRange { .. } => "SlotOutOfRange",
        Error::SlotUnscattered { .. } => "SlotUnscattered",
        Error::DimensionMismatch { .. } => "DimensionMismatch",
        Error::SampleBudgetTooSmall { .. } => "SampleBudgetTooSmall",
        Error::NoCrossing => "NoCrossing",
        Error::BudgetExceeded { .. } => "BudgetExceeded",
        Error::InvalidSize { .. } => "InvalidSize",
        Error::NotInformationallyComplete => "NotInformationallyComplete",
        Error::OptimizerStall { .. } => "OptimizerStall",
        Error::NotImplemented(_) => "NotImplemented",
        Error::Json(_) => "Json",
        Error::Io(_) => "Io",
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message, "exit_code": code }));
    ExitCode::from(code)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    set(&mut cfg.seed, &cli.seed);
    apply_flags(&cli.command, &mut cfg)?;
    cfg.validate()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidParameter("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let threads = pool.current_num_threads();

    let out = pool.install(|| match &cli.command {
        Command::Rate { .. } => commands::rate(&cfg),
        Command::Trajectory { .. } => commands::trajectory(&cfg),
        Command::Protocol { .. } => commands::protocol(&cfg),
        Command::Verify { .. } => commands::verify(&cfg),
        Command::Fidelity { .. } => commands::fidelity(&cfg),
        Command::Coherence { .. } => commands::coherence(&cfg),
        Command::Le { .. } => commands::le(&cfg),
        Command::Stats { .. } => commands::stats(&cfg),
        Command::Fusion { .. } => commands::fusion(&cfg),
        Command::Tomo { .. } => commands::tomo(&cfg),
    })?;
    let paths = output::write_run(&cli.out_dir, cli.command.name(), &cfg, threads, &out.artifacts)?;
    println!("{}", out.summary);
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return fail("Usage", e.to_string(), 2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is_validation() { 2 } else { 3 };
            fail(error_kind(&e), e.to_string(), code)
        }
    }
}
