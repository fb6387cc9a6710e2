//! Closed-form protocol statistics: false positives, count rates, time-bin
//! optimisation and fusion scaling towards 2D clusters.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::export::{fmt_num, params_metadata, write_csv};
use crate::system::PhysicalParams;
use crate::trajectory::success_probability;
use crate::{Error, Result};

/// Nanoseconds per hour.
const NS_PER_HOUR: f64 = 3.6e12;

pub const DEFAULT_FUSION_SUCCESS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunBudget {
    /// Wall-clock time (s).
    pub wall_time: f64,
    #[serde(rename = "T_B")]
    pub t_bin: f64,
    pub n: usize,
    pub eta: f64,
}

impl RunBudget {
    pub fn validate(&self) -> Result<()> {
        check_probability("eta", self.eta)?;
        if self.n == 0 || !(self.t_bin > 0.0) || !(self.wall_time >= 0.0) {
            return Err(Error::InvalidParameter("need n >= 1, T_B > 0, wall_time >= 0".into()));
        }
        Ok(())
    }

    /// Expected number of successful `n`-photon strings in the budget.
    pub fn expected_successes(&self, p_s1: f64) -> Result<f64> {
        self.validate()?;
        Ok(counts_per_hour(self.n, self.t_bin, p_s1, self.eta)? * self.wall_time / 3600.0)
    }
}

fn check_probability(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("{name} = {x} outside [0, 1]")));
    }
    Ok(())
}

/// `(n+1)·(1−η)ⁿ·η·P_s(n+1)`: `n+1` photons produced, exactly one missed.
pub fn false_positive_prob(n: usize, eta: f64, p_s_next: f64) -> Result<f64> {
    check_probability("eta", eta)?;
    check_probability("P_s(n+1)", p_s_next)?;
    Ok((n as f64 + 1.0) * (1.0 - eta).powi(n as i32) * eta * p_s_next)
}

/// Successful `n`-photon strings per hour with disjoint `n`-bin trials.
pub fn counts_per_hour(n: usize, t_bin: f64, p_s1: f64, eta: f64) -> Result<f64> {
    check_probability("eta", eta)?;
    check_probability("P_s(1)", p_s1)?;
    if n == 0 || !(t_bin > 0.0) {
        return Err(Error::InvalidParameter("need n >= 1 and T_B > 0".into()));
    }
    Ok(NS_PER_HOUR / (n as f64 * t_bin) * (p_s1 * eta).powi(n as i32))
}

/// Penalised count rate `counts·(1 − P_fp(n)/P_s(n))` with `P_s(k) = P_s(1)ᵏ`.
pub fn score(n: usize, t_bin: f64, p_s1: f64, eta: f64) -> Result<f64> {
    let counts = counts_per_hour(n, t_bin, p_s1, eta)?;
    let p_n = p_s1.powi(n as i32);
    if p_n == 0.0 {
        return Ok(0.0);
    }
    let p_fp = false_positive_prob(n, eta, p_s1.powi(n as i32 + 1))?;
    Ok(counts * (1.0 - p_fp / p_n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub t_bin: f64,
    pub p_s1: f64,
    pub p_s1_stderr: f64,
    pub counts_per_hour: f64,
    pub p_fp: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBinOptimum {
    pub t_bin: f64,
    pub score: f64,
    pub grid: Vec<GridPoint>,
}

/// Grid search for the bin length maximising [`score`], with `P̂_s(1)` from
/// quantum-jump trajectories. Every grid point reuses `seed`, so the
/// comparison uses common random numbers. Ties go to the earliest point.
pub fn optimize_t_b(
    p: &PhysicalParams,
    n: usize,
    eta: f64,
    grid: &[f64],
    n_traj: usize,
    seed: u64,
) -> Result<TimeBinOptimum> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty T_B grid".into()));
    }
    check_probability("eta", eta)?;
    let points = grid
        .iter()
        .map(|&t_bin| {
            let est = success_probability(p, t_bin, 1, n_traj, seed)?;
            let p1 = est.probability;
            Ok(GridPoint {
                t_bin,
                p_s1: p1,
                p_s1_stderr: est.stderr,
                counts_per_hour: counts_per_hour(n, t_bin, p1, eta)?,
                p_fp: false_positive_prob(n, eta, p1.powi(n as i32 + 1))?,
                score: score(n, t_bin, p1, eta)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = points
        .iter()
        .fold(points[0], |b, g| if g.score > b.score { *g } else { b });
    Ok(TimeBinOptimum { t_bin: best.t_bin, score: best.score, grid: points })
}

/// Exports an optimisation grid with every input echoed as metadata.
pub fn write_optimum_csv<W: Write>(
    out: &mut W,
    p: &PhysicalParams,
    n: usize,
    eta: f64,
    n_traj: usize,
    seed: u64,
    opt: &TimeBinOptimum,
) -> Result<()> {
    let mut meta = params_metadata(p);
    meta.extend([
        ("n".to_string(), n.to_string()),
        ("eta".to_string(), fmt_num(eta)),
        ("n_traj".to_string(), n_traj.to_string()),
        ("seed".to_string(), seed.to_string()),
        ("trials".to_string(), "disjoint n-bin blocks, P_s(k)=P_s(1)^k".to_string()),
        ("T_B_opt".to_string(), fmt_num(opt.t_bin)),
    ]);
    let rows: Vec<Vec<String>> = opt
        .grid
        .iter()
        .map(|g| {
            [g.t_bin, g.p_s1, g.p_s1_stderr, g.counts_per_hour, g.p_fp, g.score]
                .iter()
                .map(|&x| fmt_num(x))
                .collect()
        })
        .collect();
    write_csv(
        out,
        &meta,
        &["T_B", "P_s1", "P_s1_stderr", "counts_per_hour", "P_fp", "score"],
        &rows,
    )
}

/// `(n, m_n, success)` for every admissible `n` at side length `l`.
pub fn write_fusion_csv<W: Write>(out: &mut W, l: usize, p_f: f64) -> Result<()> {
    let rows = (2..=l * l)
        .map(|n| {
            Ok(vec![
                n.to_string(),
                fmt_num(fusion_steps(l, n)?),
                fmt_num(fusion_success(l, n, p_f)?),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = [("L".to_string(), l.to_string()), ("p_f".to_string(), fmt_num(p_f))];
    write_csv(out, &meta, &["n", "m_n", "success"], &rows)
}

fn check_fusion(l: usize, n: usize) -> Result<()> {
    if n < 2 || n > l * l {
        return Err(Error::InvalidSize { l, n });
    }
    Ok(())
}

/// `m_n = (L² − n)/(n − 1)` fusions to reach an `L × L` cluster from LCₙ.
pub fn fusion_steps(l: usize, n: usize) -> Result<f64> {
    check_fusion(l, n)?;
    Ok((l * l - n) as f64 / (n - 1) as f64)
}

/// `p_f^⌈m_n⌉`.
pub fn fusion_success(l: usize, n: usize, p_f: f64) -> Result<f64> {
    check_fusion(l, n)?;
    check_probability("p_f", p_f)?;
    let steps = (l * l - n).div_ceil(n - 1);
    Ok(p_f.powi(steps as i32))
}
