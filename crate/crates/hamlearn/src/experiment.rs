//! Ancilla interferometry: the controlled-displacement circuit, shot
//! sampling, and the frequency-oracle interface consumed by the estimator.
//!
//! The circuit prepares `(|0>|0> + |1>|alpha>)/sqrt(2)`, lets the modes
//! evolve under the dissipative generator for time `t` (the ancilla is
//! untouched), undoes the displacement on the `|1>` branch, and measures
//! the ancilla in X or Y. Because the generator never mixes ancilla
//! blocks, each block of the joint density matrix evolves independently,
//! and the two expectations come from the single coherence block:
//!
//! ```text
//! z(t) = tr( rho01(t) D(alpha) ),   <X> = 2 Re z,   <Y> = 2 Im z,
//! ```
//!
//! so `<X> + i<Y>` tracks `e^{i E t}` with `E` the projected energy,
//! which is the signal shape the frequency estimator consumes. (The Y
//! readout axis is chosen to give `+sin`; the opposite Pauli-Y sign
//! convention would flip it.) Oracles therefore evolve only `rho01`,
//! memoize it along the time grid, and continue forward from the nearest
//! cached point instead of restarting at zero.

use crate::error::{Error, Result};
use crate::fock::{self, FockOperator, FockSpace, FockState};
use crate::hamiltonian::BosonicHamiltonian;
use crate::linalg::{self, Banded, C64};
use crate::lindblad::{evolve_linear, DissipationSpec, Generator, RadauStepper};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Ancilla trace-pair tolerance: tr(rho00) + tr(rho11) must stay within
/// this of one.
pub const JOINT_TRACE_TOL: f64 = 1e-9;

/// Coherent-state truncation tolerance used when preparing circuit states.
/// Amplitude leakage at this level sits far below shot noise; adequacy of
/// the truncation for the evolved state is tracked post hoc through
/// [`CircuitOracle::max_edge_mass`].
pub const CIRCUIT_LEAK_TOL: f64 = 1e-6;

/// Conjugacy tolerance between the two coherence blocks.
pub const BLOCK_CONJ_TOL: f64 = 1e-10;

/// Measurement basis for the ancilla qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
}

// ---------------------------------------------------------------------------
// Evolution-time ledger
// ---------------------------------------------------------------------------

/// Per-stage tally of Hamiltonian evolution time and experiment count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTally {
    pub time: f64,
    pub count: u64,
}

/// Accumulated evolution time and experiment counts, broken down by stage.
/// Totals only ever grow; merging two ledgers adds them stage by stage.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvolutionLedger {
    total_time: f64,
    experiment_count: u64,
    stages: BTreeMap<String, StageTally>,
}

impl EvolutionLedger {
    pub fn new() -> EvolutionLedger {
        EvolutionLedger::default()
    }

    pub fn record(&mut self, stage: &str, time: f64, count: u64) {
        debug_assert!(time >= 0.0, "ledger time must be nonnegative");
        self.total_time += time;
        self.experiment_count += count;
        let entry = self.stages.entry(stage.to_string()).or_default();
        entry.time += time;
        entry.count += count;
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn experiment_count(&self) -> u64 {
        self.experiment_count
    }

    pub fn stages(&self) -> &BTreeMap<String, StageTally> {
        &self.stages
    }

    pub fn merge(&mut self, other: &EvolutionLedger) {
        self.total_time += other.total_time;
        self.experiment_count += other.experiment_count;
        for (name, tally) in &other.stages {
            let entry = self.stages.entry(name.clone()).or_default();
            entry.time += tally.time;
            entry.count += tally.count;
        }
    }
}

// ---------------------------------------------------------------------------
// Joint state blocks
// ---------------------------------------------------------------------------

/// Ancilla-indexed blocks of the joint qubit-plus-modes density matrix.
#[derive(Clone, Debug)]
pub struct AncillaJointState {
    pub rho00: Array2<C64>,
    pub rho01: Array2<C64>,
    pub rho10: Array2<C64>,
    pub rho11: Array2<C64>,
}

impl AncillaJointState {
    /// State right after the controlled displacement:
    /// `(|0>|0> + |1>|alpha>)/sqrt(2)`.
    pub fn prepared(space: &FockSpace, alphas: &[C64], leak_tol: f64) -> Result<AncillaJointState> {
        let vac = FockState::vacuum(space);
        let v0 = vac.as_ket().expect("vacuum is a ket").clone();
        let coh = fock::coherent_state(space, alphas, leak_tol)?;
        let vc = coh.as_ket().expect("coherent state is a ket").clone();
        let half = C64::new(0.5, 0.0);
        Ok(AncillaJointState {
            rho00: outer(&v0, &v0).mapv(|z| z * half),
            rho01: outer(&v0, &vc).mapv(|z| z * half),
            rho10: outer(&vc, &v0).mapv(|z| z * half),
            rho11: outer(&vc, &vc).mapv(|z| z * half),
        })
    }

    /// Structural invariants: unit joint trace and conjugate off-blocks.
    pub fn check(&self) -> Result<()> {
        let tr = linalg::trace(&self.rho00).re + linalg::trace(&self.rho11).re;
        if (tr - 1.0).abs() > JOINT_TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "joint trace {tr} deviates from one beyond {JOINT_TRACE_TOL:.0e}"
            )));
        }
        let dev = linalg::max_abs(&(&self.rho10 - &linalg::dagger(&self.rho01)));
        if dev > BLOCK_CONJ_TOL {
            return Err(Error::InvalidState(format!(
                "coherence blocks deviate from conjugacy by {dev:.3e}"
            )));
        }
        Ok(())
    }

    /// Evolve every block under the mode generator. The coherence block is
    /// not hermitian, so the linear flow is used and conjugacy is restored
    /// structurally (the generator commutes with taking adjoints).
    pub fn evolved(&self, gen: &Generator, t: f64, tol: f64) -> Result<AncillaJointState> {
        let (rho00, _) = evolve_linear(gen, &self.rho00, t, tol)?;
        let (rho01, _) = evolve_linear(gen, &self.rho01, t, tol)?;
        let (rho11, _) = evolve_linear(gen, &self.rho11, t, tol)?;
        let rho10 = linalg::dagger(&rho01);
        let out = AncillaJointState {
            rho00: linalg::hermitize(&rho00),
            rho01,
            rho10,
            rho11: linalg::hermitize(&rho11),
        };
        out.check()?;
        Ok(out)
    }

    /// Assemble the full `2n x 2n` joint density matrix, ancilla slowest.
    pub fn joint(&self) -> Array2<C64> {
        let n = self.rho00.nrows();
        let mut m = Array2::zeros((2 * n, 2 * n));
        for (a, b, block) in [
            (0, 0, &self.rho00),
            (0, 1, &self.rho01),
            (1, 0, &self.rho10),
            (1, 1, &self.rho11),
        ] {
            for i in 0..n {
                for j in 0..n {
                    m[[a * n + i, b * n + j]] = block[[i, j]];
                }
            }
        }
        m
    }
}

fn outer(a: &Array1<C64>, b: &Array1<C64>) -> Array2<C64> {
    let n = a.len();
    Array2::from_shape_fn((n, n), |(i, j)| a[i] * b[j].conj())
}

// ---------------------------------------------------------------------------
// Frequency oracle interface
// ---------------------------------------------------------------------------

/// One averaged X/Y measurement pair at evolution time `t`: each component
/// is the mean of `shots` two-outcome experiments. Implementations account
/// the spent evolution time in their ledger (two experiment batches per
/// pair, one for each basis).
pub trait FrequencyOracle {
    fn sample_pair(&mut self, t: f64, shots: usize) -> Result<(f64, f64)>;
    fn ledger(&self) -> &EvolutionLedger;
}

/// How a circuit oracle integrates the coherence block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvolutionBackend {
    /// Strong damping (`gamma > 50`) gets the implicit banded path with
    /// the default step; everything else runs the adaptive explicit path.
    Auto,
    Explicit { tol: f64 },
    Implicit { step: f64 },
}

pub const DEFAULT_EXPLICIT_TOL: f64 = 1e-8;
pub const DEFAULT_IMPLICIT_STEP: f64 = 1e-2;

/// One recorded measurement, for the optional debug trace.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SampleRecord {
    pub t: f64,
    pub basis: Basis,
    pub outcome: i8,
}

// ---------------------------------------------------------------------------
// Circuit oracle
// ---------------------------------------------------------------------------

enum Engine {
    Explicit {
        tol: f64,
    },
    Implicit {
        step: f64,
        superop: Banded,
        stepper: Option<RadauStepper>,
    },
}

/// Simulated interferometry oracle with a memoized coherence-block
/// trajectory: queries at increasing times extend the stored trajectory
/// instead of re-integrating from zero, and repeated times are free.
pub struct CircuitOracle {
    gen: Generator,
    disp: Array2<C64>,
    rho01_init: Array2<C64>,
    cache: BTreeMap<u64, Array2<C64>>,
    engine: Engine,
    rng: ChaCha8Rng,
    seed: u64,
    ledger: EvolutionLedger,
    max_edge_mass: f64,
    trace_log: Option<Vec<SampleRecord>>,
}

impl CircuitOracle {
    pub fn new(
        h: &FockOperator,
        spec: &DissipationSpec,
        alphas: &[C64],
        backend: EvolutionBackend,
        seed: u64,
    ) -> Result<CircuitOracle> {
        let space = h.space().clone();
        if alphas.len() != space.modes() {
            return Err(Error::DimensionMismatch(format!(
                "{} displacement amplitudes for a {}-mode space",
                alphas.len(),
                space.modes()
            )));
        }
        let gen = Generator::new(h, spec)?;

        let mut disp = FockOperator::identity(&space);
        for (q, &a) in alphas.iter().enumerate() {
            disp = disp.dot(&fock::displacement(&space, q, a)?);
        }

        let prepared = AncillaJointState::prepared(&space, alphas, CIRCUIT_LEAK_TOL)?;
        let rho01_init = prepared.rho01;

        let engine = match backend {
            EvolutionBackend::Explicit { tol } => Engine::Explicit { tol },
            EvolutionBackend::Implicit { step } => {
                if !(step.is_finite() && step > 0.0) {
                    return Err(Error::Config(format!(
                        "implicit step must be positive, got {step}"
                    )));
                }
                Engine::Implicit {
                    step,
                    superop: gen.banded_superoperator(),
                    stepper: None,
                }
            }
            EvolutionBackend::Auto => {
                if spec.gamma > 50.0 {
                    Engine::Implicit {
                        step: DEFAULT_IMPLICIT_STEP,
                        superop: gen.banded_superoperator(),
                        stepper: None,
                    }
                } else {
                    Engine::Explicit {
                        tol: DEFAULT_EXPLICIT_TOL,
                    }
                }
            }
        };

        Ok(CircuitOracle {
            gen,
            disp: disp.into_matrix(),
            rho01_init,
            cache: BTreeMap::new(),
            engine,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            ledger: EvolutionLedger::new(),
            max_edge_mass: 0.0,
            trace_log: None,
        })
    }

    /// Derive an oracle with an independent RNG stream; the trajectory
    /// cache is shared by value, the ledger starts empty.
    pub fn split(&self, tag: u64) -> CircuitOracle {
        let child_seed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(tag)
            .rotate_left(17)
            .wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        let engine = match &self.engine {
            Engine::Explicit { tol } => Engine::Explicit { tol: *tol },
            Engine::Implicit { step, superop, .. } => Engine::Implicit {
                step: *step,
                superop: superop.clone(),
                stepper: None,
            },
        };
        CircuitOracle {
            gen: self.gen.clone(),
            disp: self.disp.clone(),
            rho01_init: self.rho01_init.clone(),
            cache: self.cache.clone(),
            engine,
            rng: ChaCha8Rng::seed_from_u64(child_seed),
            seed: child_seed,
            ledger: EvolutionLedger::new(),
            max_edge_mass: self.max_edge_mass,
            trace_log: None,
        }
    }

    pub fn enable_trace(&mut self) {
        if self.trace_log.is_none() {
            self.trace_log = Some(Vec::new());
        }
    }

    pub fn trace_records(&self) -> &[SampleRecord] {
        self.trace_log.as_deref().unwrap_or(&[])
    }

    /// Dump the recorded trace as CSV (`t,basis,outcome`).
    pub fn write_trace_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,basis,outcome")?;
        for rec in self.trace_records() {
            let basis = match rec.basis {
                Basis::X => "X",
                Basis::Y => "Y",
            };
            writeln!(w, "{:.17e},{},{}", rec.t, basis, rec.outcome)?;
        }
        Ok(())
    }

    /// Worst boundary-row mass seen in the coherence block, a cheap
    /// truncation-adequacy indicator.
    pub fn max_edge_mass(&self) -> f64 {
        self.max_edge_mass
    }

    /// Exact simulated expectations `(<X>, <Y>)` at time `t`.
    pub fn expectation_pair(&mut self, t: f64) -> Result<(f64, f64)> {
        let z = self.coherence_trace(t)?;
        Ok((2.0 * z.re, 2.0 * z.im))
    }

    fn coherence_trace(&mut self, t: f64) -> Result<C64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Config(format!(
                "circuit time must be >= 0, got {t}"
            )));
        }
        let block = self.block_at(t)?;
        Ok(linalg::trace(&block.dot(&self.disp)))
    }

    fn block_at(&mut self, t: f64) -> Result<Array2<C64>> {
        let key = t.to_bits();
        if t == 0.0 {
            return Ok(self.rho01_init.clone());
        }
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        // continue from the latest cached time below t
        let (t0, start) = match self.cache.range(..key).next_back() {
            Some((&bits, block)) => (f64::from_bits(bits), block.clone()),
            None => (0.0, self.rho01_init.clone()),
        };
        let block = self.advance(start, t - t0)?;
        self.note_edge_mass(&block);
        self.cache.insert(key, block.clone());
        Ok(block)
    }

    fn advance(&mut self, start: Array2<C64>, dt: f64) -> Result<Array2<C64>> {
        match &mut self.engine {
            Engine::Explicit { tol } => {
                let (out, _) = evolve_linear(&self.gen, &start, dt, *tol)?;
                Ok(out)
            }
            Engine::Implicit {
                step,
                superop,
                stepper,
            } => {
                let n = start.nrows();
                let steps = ((dt / *step).ceil() as usize).max(1);
                let h = dt / steps as f64;
                let rebuild = match stepper {
                    Some(s) => (s.h() - h).abs() > 1e-12 * h,
                    None => true,
                };
                if rebuild {
                    *stepper = Some(RadauStepper::new(superop, h)?);
                }
                let s = stepper.as_mut().expect("just built");
                let mut v = crate::lindblad::vec_density(&start);
                for _ in 0..steps {
                    s.step(&mut v)?;
                }
                Ok(crate::lindblad::unvec_density(&v, n))
            }
        }
    }

    fn note_edge_mass(&mut self, block: &Array2<C64>) {
        let n = block.nrows();
        let mut edge = 0.0_f64;
        for j in 0..n {
            edge = edge.max(block[[n - 1, j]].norm()).max(block[[j, n - 1]].norm());
        }
        self.max_edge_mass = self.max_edge_mass.max(edge);
    }

    /// Draw `shots` two-outcome measurements of the given basis at time
    /// `t`. Bernoulli on the exact simulated expectation; the ledger gains
    /// `shots * t` evolution time and `shots` experiments.
    pub fn sample(&mut self, t: f64, basis: Basis, shots: usize) -> Result<Vec<i8>> {
        if shots == 0 {
            return Err(Error::Config("sampling needs at least one shot".into()));
        }
        let (x, y) = self.expectation_pair(t)?;
        let e = match basis {
            Basis::X => x,
            Basis::Y => y,
        };
        let p = (0.5 * (1.0 + e)).clamp(0.0, 1.0);
        let mut out = Vec::with_capacity(shots);
        for _ in 0..shots {
            let v: i8 = if self.rng.random::<f64>() < p { 1 } else { -1 };
            out.push(v);
            if let Some(log) = &mut self.trace_log {
                log.push(SampleRecord {
                    t,
                    basis,
                    outcome: v,
                });
            }
        }
        self.ledger.record("circuit", shots as f64 * t, shots as u64);
        Ok(out)
    }

    pub fn sample_mean(&mut self, t: f64, basis: Basis, shots: usize) -> Result<f64> {
        let draws = self.sample(t, basis, shots)?;
        Ok(draws.iter().map(|&v| v as f64).sum::<f64>() / draws.len() as f64)
    }
}

impl FrequencyOracle for CircuitOracle {
    fn sample_pair(&mut self, t: f64, shots: usize) -> Result<(f64, f64)> {
        let x = self.sample_mean(t, Basis::X, shots)?;
        let y = self.sample_mean(t, Basis::Y, shots)?;
        Ok((x, y))
    }

    fn ledger(&self) -> &EvolutionLedger {
        &self.ledger
    }
}

/// One-shot circuit expectation without building an oracle by hand.
pub fn run_circuit(
    h: &FockOperator,
    spec: &DissipationSpec,
    alphas: &[C64],
    t: f64,
    basis: Basis,
    tol: f64,
) -> Result<f64> {
    let mut oracle = CircuitOracle::new(h, spec, alphas, EvolutionBackend::Explicit { tol }, 0)?;
    let (x, y) = oracle.expectation_pair(t)?;
    Ok(match basis {
        Basis::X => x,
        Basis::Y => y,
    })
}

// ---------------------------------------------------------------------------
// Ideal oracle
// ---------------------------------------------------------------------------

/// Whether the ideal oracle returns exact expectations or shot averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdealNoise {
    Exact,
    Shot,
}

/// Corruption offset that keeps every corrupted value past the robust
/// estimator's tolerated error, uniformly in `t`.
pub const DEFAULT_CORRUPT_OFFSET: f64 = 0.5;

/// Dissipation-free oracle: the pair is exactly `(cos, sin)` of `theta t`,
/// optionally with shot noise and an adversarial corruption channel.
/// With probability `q` a queried pair is replaced by one whose components
/// are pushed toward the opposite sign by a fixed offset, so each
/// corrupted component sits at exactly that distance from the truth (and
/// still inside `[-1, 1]`), independent of `t`.
pub struct IdealOracle {
    theta: f64,
    noise: IdealNoise,
    corrupt_prob: f64,
    corrupt_offset: f64,
    rng: ChaCha8Rng,
    seed: u64,
    ledger: EvolutionLedger,
}

impl IdealOracle {
    pub fn new(theta: f64, noise: IdealNoise, seed: u64) -> IdealOracle {
        IdealOracle {
            theta,
            noise,
            corrupt_prob: 0.0,
            corrupt_offset: DEFAULT_CORRUPT_OFFSET,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            ledger: EvolutionLedger::new(),
        }
    }

    /// Frequency taken from the coherent expectation of `h` at `alphas`.
    pub fn from_hamiltonian(
        h: &BosonicHamiltonian,
        alphas: &[C64],
        noise: IdealNoise,
        seed: u64,
    ) -> Result<IdealOracle> {
        Ok(IdealOracle::new(
            h.coherent_expectation_multi(alphas)?,
            noise,
            seed,
        ))
    }

    pub fn with_corruption(mut self, prob: f64, offset: f64) -> IdealOracle {
        self.corrupt_prob = prob;
        self.corrupt_offset = offset;
        self
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn split(&self, tag: u64) -> IdealOracle {
        let child_seed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(tag)
            .rotate_left(17)
            .wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        IdealOracle {
            theta: self.theta,
            noise: self.noise,
            corrupt_prob: self.corrupt_prob,
            corrupt_offset: self.corrupt_offset,
            rng: ChaCha8Rng::seed_from_u64(child_seed),
            seed: child_seed,
            ledger: EvolutionLedger::new(),
        }
    }

    fn shot_mean(&mut self, e: f64, shots: usize) -> f64 {
        let p = (0.5 * (1.0 + e)).clamp(0.0, 1.0);
        let mut acc = 0i64;
        for _ in 0..shots {
            acc += if self.rng.random::<f64>() < p { 1 } else { -1 };
        }
        acc as f64 / shots as f64
    }
}

fn corrupt(value: f64, offset: f64) -> f64 {
    if value >= 0.0 {
        value - offset
    } else {
        value + offset
    }
}

impl FrequencyOracle for IdealOracle {
    fn sample_pair(&mut self, t: f64, shots: usize) -> Result<(f64, f64)> {
        if shots == 0 {
            return Err(Error::Config("sampling needs at least one shot".into()));
        }
        let phase = self.theta * t;
        let (mut x0, mut y0) = (phase.cos(), phase.sin());
        if self.corrupt_prob > 0.0 && self.rng.random::<f64>() < self.corrupt_prob {
            x0 = corrupt(x0, self.corrupt_offset);
            y0 = corrupt(y0, self.corrupt_offset);
        }
        let pair = match self.noise {
            IdealNoise::Exact => (x0, y0),
            IdealNoise::Shot => {
                let x = self.shot_mean(x0, shots);
                let y = self.shot_mean(y0, shots);
                (x, y)
            }
        };
        self.ledger
            .record("ideal", 2.0 * shots as f64 * t, 2 * shots as u64);
        Ok(pair)
    }

    fn ledger(&self) -> &EvolutionLedger {
        &self.ledger
    }
}
