//! Robust Heisenberg-limited frequency estimation by iterative interval
//! refinement.
//!
//! The frequency theta is known a priori to lie in [-phi, phi]. Each level
//! l probes the signal at time `t_l = (pi/2 phi)(3/2)^{l-1}`, long enough
//! that the phase `theta t_l` separates the lower two thirds of the
//! current interval from the upper two thirds; a median over `m_l` pairs
//! makes the decision robust to a constant fraction of corrupted samples,
//! and the interval shrinks by 2/3 per level. After
//! `L = ceil(log_{3/2}(3 phi / eps))` levels the midpoint is within
//! eps/3 of theta whenever every decision was correct, and the total
//! evolution time `sum m_l t_l` scales as 1/eps: the Heisenberg limit.

use crate::error::{Error, Result};
use crate::experiment::FrequencyOracle;
use crate::linalg::C64;
use serde::{Deserialize, Serialize};

/// Schedule and sampling parameters for one estimation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FreqEstConfig {
    /// Prior bound: |theta| <= phi.
    pub phi: f64,
    /// Target root-mean-square error.
    pub epsilon: f64,
    /// Base repetitions per level.
    pub c3: usize,
    /// Extra repetitions per remaining level; early (cheap) levels get
    /// more samples because their failures cost the most squared error.
    pub c4: usize,
    /// Shots behind each raw X/Y sample.
    pub inner_shots: usize,
}

impl FreqEstConfig {
    pub fn new(phi: f64, epsilon: f64) -> Result<FreqEstConfig> {
        let cfg = FreqEstConfig {
            phi,
            epsilon,
            c3: 5,
            c4: 3,
            inner_shots: 100,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.phi.is_finite() && self.phi > 0.0) {
            return Err(Error::Config(format!(
                "prior bound must be positive, got {}",
                self.phi
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon < self.phi) {
            return Err(Error::Config(format!(
                "target accuracy must lie in (0, phi), got {}",
                self.epsilon
            )));
        }
        if self.c3 < 1 {
            return Err(Error::Config("c3 must be at least 1".into()));
        }
        if self.inner_shots < 1 {
            return Err(Error::Config("inner_shots must be at least 1".into()));
        }
        Ok(())
    }
}

/// Evaluated time/repetition schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Schedule {
    pub levels: usize,
    pub times: Vec<f64>,
    pub reps: Vec<usize>,
    /// T = sum of m_l t_l, the total-evolution-time resource.
    pub total_time: f64,
    /// Gamma = sum of m_l, the experiment count.
    pub total_experiments: u64,
    pub max_time: f64,
}

/// Exact schedule arithmetic: L minimal with (2/3)^L <= eps/(3 phi),
/// times (pi/2 phi)(3/2)^{l-1}, repetitions c3 + c4 (L - l).
pub fn schedule(phi: f64, epsilon: f64, c3: usize, c4: usize) -> Result<Schedule> {
    if !(phi.is_finite() && phi > 0.0) {
        return Err(Error::Config(format!(
            "prior bound must be positive, got {phi}"
        )));
    }
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon < 3.0 * phi) {
        return Err(Error::Config(format!(
            "target accuracy must lie in (0, 3 phi), got {epsilon}"
        )));
    }
    if c3 < 1 {
        return Err(Error::Config("c3 must be at least 1".into()));
    }

    let target = epsilon / (3.0 * phi);
    let mut levels = ((1.0 / target).ln() / 1.5f64.ln()).ceil().max(1.0) as usize;
    // settle float edges by direct comparison
    while (2.0f64 / 3.0).powi(levels as i32) > target {
        levels += 1;
    }
    while levels > 1 && (2.0f64 / 3.0).powi(levels as i32 - 1) <= target {
        levels -= 1;
    }

    let mut times = Vec::with_capacity(levels);
    let mut reps = Vec::with_capacity(levels);
    let mut total_time = 0.0;
    let mut total_experiments = 0u64;
    let base = std::f64::consts::PI / (2.0 * phi);
    for l in 1..=levels {
        let t = base * 1.5f64.powi(l as i32 - 1);
        let m = c3 + c4 * (levels - l);
        total_time += m as f64 * t;
        total_experiments += m as u64;
        times.push(t);
        reps.push(m);
    }
    Ok(Schedule {
        levels,
        max_time: *times.last().expect("levels >= 1"),
        times,
        reps,
        total_time,
        total_experiments,
    })
}

/// One interval-refinement decision. `z` estimates `e^{i theta pi/(b-a)}`;
/// rotating by the midpoint phase puts the lower candidate strictly in the
/// lower half-plane, so the sign of the imaginary part picks the side.
/// Ties fall to the lower interval. The returned width is 2/3 of the old.
pub fn refine(a: f64, b: f64, z: C64) -> (f64, f64) {
    let rotated = (C64::new(0.0, -(a + b) * std::f64::consts::PI / (2.0 * (b - a)))).exp() * z;
    if rotated.im <= 0.0 {
        (a, (a + 2.0 * b) / 3.0)
    } else {
        ((2.0 * a + b) / 3.0, b)
    }
}

/// Per-level record of an estimation run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LevelTrace {
    pub level: usize,
    /// Interval before the decision.
    pub a: f64,
    pub b: f64,
    pub t: f64,
    pub reps: usize,
    pub z_re: f64,
    pub z_im: f64,
    /// Whether the decision kept the lower candidate.
    pub lower: bool,
}

/// Result of one estimation run. `total_time` and `total_experiments`
/// count one experiment of duration t_l per median repetition, the
/// resource the Heisenberg bound speaks about; the oracle's own ledger
/// additionally resolves inner shots.
#[derive(Clone, Debug, Serialize)]
pub struct Estimate {
    pub theta: f64,
    pub total_time: f64,
    pub total_experiments: u64,
    pub max_time: f64,
    pub trace: Vec<LevelTrace>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|p, q| p.partial_cmp(q).expect("samples are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Run the full refinement schedule against an oracle.
pub fn estimate(oracle: &mut dyn FrequencyOracle, cfg: &FreqEstConfig) -> Result<Estimate> {
    cfg.check()?;
    let sched = schedule(cfg.phi, cfg.epsilon, cfg.c3, cfg.c4)?;

    let mut a = -cfg.phi;
    let mut b = cfg.phi;
    let mut trace = Vec::with_capacity(sched.levels);
    for l in 1..=sched.levels {
        let t = sched.times[l - 1];
        let m = sched.reps[l - 1];
        let mut xs = Vec::with_capacity(m);
        let mut ys = Vec::with_capacity(m);
        for _ in 0..m {
            let (x, y) = oracle.sample_pair(t, cfg.inner_shots)?;
            xs.push(x);
            ys.push(y);
        }
        let z = C64::new(median(&mut xs), median(&mut ys));
        let (a2, b2) = refine(a, b, z);
        trace.push(LevelTrace {
            level: l,
            a,
            b,
            t,
            reps: m,
            z_re: z.re,
            z_im: z.im,
            lower: a2 == a,
        });
        a = a2;
        b = b2;
    }

    Ok(Estimate {
        theta: 0.5 * (a + b),
        total_time: sched.total_time,
        total_experiments: sched.total_experiments,
        max_time: sched.max_time,
        trace,
    })
}
