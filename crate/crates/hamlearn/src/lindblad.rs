//! Engineered dissipation: jump operators, kernel projectors, and master
//! equation evolution.
//!
//! The generator acts on density matrices as
//!
//! ```text
//! L(rho) = -i[H, rho] + gamma * sum_a ( L_a rho L_a^+ - {L_a^+ L_a, rho}/2 )
//! ```
//!
//! with a single overall rate `gamma` shared by every jump. Superoperators
//! use the row-major vectorization `vec(A rho B) = (A (x) B^T) vec(rho)`,
//! which matches the memory layout of `Array2`, so `vec` is a plain flatten.
//!
//! Three integration paths are provided:
//! - [`evolve`]: adaptive explicit stepping (Dormand-Prince 5(4) for mild
//!   generators, damped second-order Runge-Kutta-Chebyshev once the spectral
//!   radius times the horizon gets large), with trace and positivity checks
//!   at the end of the run. Dissipation is never split from the Hamiltonian.
//! - [`RadauStepper`]: an L-stable implicit one-step map for the banded
//!   superoperator, intended for very stiff strong-damping runs where the
//!   same step is reused many times and the LU factorizations amortize.
//! - [`Generator::superoperator_matrix`]: the dense matrix, small systems
//!   only, used as an exactness oracle via `expm`.

use crate::error::{Error, Result};
use crate::fock::{self, FockOperator, FockSpace};
use crate::linalg::{self, Banded, BandedLu, C64, ONE, ZERO};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Singular values below this are treated as kernel directions in the
/// numerical fallback projector.
pub const KERNEL_NULL_TOL: f64 = 1e-8;

/// Relative Gram eigenvalue cutoff when orthonormalizing an analytic
/// kernel basis. Far below any physical overlap the basis can produce.
const GRAM_DROP_REL: f64 = 1e-12;

/// evolve aborts if the final trace differs from the initial one by more
/// than this factor times the requested tolerance.
pub const TRACE_TOL_FACTOR: f64 = 10.0;

/// evolve aborts if the most negative eigenvalue of the final state drops
/// below minus this factor times the requested tolerance.
pub const POSITIVITY_TOL_FACTOR: f64 = 100.0;

const MAX_STEPS: usize = 400_000;
const MAX_RKC_STAGES: usize = 512;

/// Boundary between the explicit schemes: estimated spectral radius times
/// integration horizon. Below it Dormand-Prince wins on accuracy per eval;
/// above it the Chebyshev scheme's quadratic stability range pays off.
const STIFFNESS_CROSSOVER: f64 = 400.0;

// ---------------------------------------------------------------------------
// Jump operators
// ---------------------------------------------------------------------------

/// Single-mode jump operator families.
///
/// `order` is the photon order `r`; every family requires `r >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum JumpKind {
    /// `b^r (b - alpha)`: photon loss regularized to also annihilate the
    /// target coherent state. Kernel `span{|0..r-1>, |alpha>}`.
    ModifiedPhotonLoss { order: usize, alpha: C64 },
    /// `b^r - alpha^r`: drives toward the r-component cat manifold
    /// spanned by `|alpha e^{i 2 pi j / r}>`.
    CatCode { order: usize, alpha: C64 },
    /// Plain `b^r`. Kernel `span{|0..r-1>}`.
    PhotonLoss { order: usize },
}

impl JumpKind {
    pub fn order(&self) -> usize {
        match self {
            JumpKind::ModifiedPhotonLoss { order, .. }
            | JumpKind::CatCode { order, .. }
            | JumpKind::PhotonLoss { order } => *order,
        }
    }

    fn check(&self) -> Result<()> {
        if self.order() == 0 {
            return Err(Error::Config(
                "jump operator order must be at least one".into(),
            ));
        }
        Ok(())
    }

    /// Dense matrix on a single mode of dimension `dim`.
    pub fn single_mode_matrix(&self, dim: usize) -> Result<Array2<C64>> {
        self.check()?;
        let space = FockSpace::single(dim)?;
        let b = fock::annihilation(&space, 0)?;
        let op = match self {
            JumpKind::ModifiedPhotonLoss { order, alpha } => {
                let shifted = b.sub(&FockOperator::identity(&space).scale(*alpha));
                b.pow(*order).dot(&shifted)
            }
            JumpKind::CatCode { order, alpha } => {
                let drive = FockOperator::identity(&space).scale(alpha.powu(*order as u32));
                b.pow(*order).sub(&drive)
            }
            JumpKind::PhotonLoss { order } => b.pow(*order),
        };
        Ok(op.into_matrix())
    }
}

/// A jump operator attached to one mode of a multimode space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub mode: usize,
    pub kind: JumpKind,
}

impl Jump {
    pub fn new(mode: usize, kind: JumpKind) -> Jump {
        Jump { mode, kind }
    }
}

/// Jump set with its shared rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationSpec {
    pub gamma: f64,
    pub jumps: Vec<Jump>,
}

impl DissipationSpec {
    pub fn new(gamma: f64, jumps: Vec<Jump>) -> Result<DissipationSpec> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::Config(format!(
                "dissipation rate must be finite and nonnegative, got {gamma}"
            )));
        }
        for j in &jumps {
            j.kind.check()?;
        }
        Ok(DissipationSpec { gamma, jumps })
    }

    /// Full-space matrices, one per jump, in declaration order.
    pub fn matrices(&self, space: &FockSpace) -> Result<Vec<Array2<C64>>> {
        self.jumps
            .iter()
            .map(|j| {
                space.check_mode(j.mode)?;
                let local = j.kind.single_mode_matrix(space.dim(j.mode))?;
                let single = FockSpace::single(space.dim(j.mode))?;
                let op = FockOperator::from_matrix(single, local)?;
                Ok(fock::embed(&op, space, &[j.mode])?.into_matrix())
            })
            .collect()
    }

    /// Orthogonal projector onto the joint kernel of all jumps.
    ///
    /// Modes carrying jumps get their kernel projector, untouched modes get
    /// the identity, and the factors are tensored in mode order.
    pub fn kernel_projector(&self, space: &FockSpace) -> Result<FockOperator> {
        for j in &self.jumps {
            space.check_mode(j.mode)?;
        }
        let mut factors = Vec::with_capacity(space.modes());
        for q in 0..space.modes() {
            let kinds: Vec<&JumpKind> = self
                .jumps
                .iter()
                .filter(|j| j.mode == q)
                .map(|j| &j.kind)
                .collect();
            let dim = space.dim(q);
            let single = FockSpace::single(dim)?;
            let m = if kinds.is_empty() {
                Array2::eye(dim)
            } else {
                let basis = mode_kernel_basis(&kinds, dim)?;
                projector_from_columns(&basis)?
            };
            factors.push(FockOperator::from_matrix(single, m)?);
        }
        let refs: Vec<&FockOperator> = factors.iter().collect();
        let p = fock::tensor(&refs)?;
        FockOperator::from_matrix(space.clone(), p.into_matrix())
    }
}

/// Regularization order for a degree-`degree` Hamiltonian: `ceil(d/2) - 1`,
/// clamped to one because the zeroth power would collapse the jump pair.
pub fn regularization_order(degree: usize) -> usize {
    (degree.div_ceil(2).saturating_sub(1)).max(1)
}

/// Standard engineered dissipation on one mode: `b(b - alpha)` plus
/// `b^r (b - alpha)`. For `r = 1` the two coincide and a single jump is
/// returned. Joint kernel `span{|0>, |alpha>}`.
pub fn standard_dissipation(mode: usize, order: usize, alpha: C64) -> Result<Vec<Jump>> {
    if order == 0 {
        return Err(Error::Config(
            "standard dissipation needs regularization order >= 1".into(),
        ));
    }
    let mut jumps = vec![Jump::new(mode, JumpKind::ModifiedPhotonLoss { order: 1, alpha })];
    if order > 1 {
        jumps.push(Jump::new(mode, JumpKind::ModifiedPhotonLoss { order, alpha }));
    }
    Ok(jumps)
}

/// Decoupling dissipation on one mode: `b` plus `b^{r+1}`, joint kernel
/// the vacuum. Used to freeze spectator modes.
pub fn decoupling_dissipation(mode: usize, order: usize) -> Vec<Jump> {
    let mut jumps = vec![Jump::new(mode, JumpKind::PhotonLoss { order: 1 })];
    if order >= 1 {
        jumps.push(Jump::new(mode, JumpKind::PhotonLoss { order: order + 1 }));
    }
    jumps
}

/// Columns spanning the joint kernel of the given single-mode jumps.
///
/// Analytic bases exist for the three pure families; anything mixed falls
/// back to the null space of the vertically stacked jump matrices.
fn mode_kernel_basis(kinds: &[&JumpKind], dim: usize) -> Result<Array2<C64>> {
    let space = FockSpace::single(dim)?;
    let all_mpl = kinds
        .iter()
        .all(|k| matches!(k, JumpKind::ModifiedPhotonLoss { .. }));
    let all_pl = kinds.iter().all(|k| matches!(k, JumpKind::PhotonLoss { .. }));
    let all_cat = kinds.iter().all(|k| matches!(k, JumpKind::CatCode { .. }));

    if all_mpl {
        let alphas: Vec<C64> = kinds
            .iter()
            .map(|k| match k {
                JumpKind::ModifiedPhotonLoss { alpha, .. } => *alpha,
                _ => unreachable!(),
            })
            .collect();
        if alphas.iter().all(|a| (a - alphas[0]).norm() <= 1e-12) {
            let rmin = kinds.iter().map(|k| k.order()).min().expect("nonempty");
            let mut cols = Vec::new();
            for k in 0..rmin.min(dim) {
                let mut e = Array1::zeros(dim);
                e[k] = ONE;
                cols.push(e);
            }
            cols.push(coherent_column(&space, alphas[0])?);
            return Ok(column_matrix(dim, &cols));
        }
    } else if all_pl {
        let rmin = kinds.iter().map(|k| k.order()).min().expect("nonempty");
        let mut cols = Vec::new();
        for k in 0..rmin.min(dim) {
            let mut e = Array1::zeros(dim);
            e[k] = ONE;
            cols.push(e);
        }
        return Ok(column_matrix(dim, &cols));
    } else if all_cat {
        let first = kinds[0];
        if kinds.iter().all(|k| *k == first) {
            let (order, alpha) = match first {
                JumpKind::CatCode { order, alpha } => (*order, *alpha),
                _ => unreachable!(),
            };
            let mut cols = Vec::new();
            for j in 0..order {
                let phase = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / order as f64);
                cols.push(coherent_column(&space, alpha * phase)?);
            }
            return Ok(column_matrix(dim, &cols));
        }
    }

    // Mixed families or mismatched amplitudes: stack the jump matrices and
    // take the numerical null space.
    let mut stacked = Array2::zeros((dim * kinds.len(), dim));
    for (a, kind) in kinds.iter().enumerate() {
        let m = kind.single_mode_matrix(dim)?;
        stacked
            .slice_mut(ndarray::s![a * dim..(a + 1) * dim, ..])
            .assign(&m);
    }
    linalg::null_space(&stacked, KERNEL_NULL_TOL)
}

fn coherent_column(space: &FockSpace, alpha: C64) -> Result<Array1<C64>> {
    let state = fock::coherent_state(space, &[alpha], fock::DEFAULT_LEAK_TOL)?;
    Ok(state.as_ket().expect("coherent_state returns a ket").clone())
}

fn column_matrix(dim: usize, cols: &[Array1<C64>]) -> Array2<C64> {
    let mut m = Array2::zeros((dim, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        m.column_mut(j).assign(c);
    }
    m
}

/// Orthogonal projector onto the column span of `b`.
///
/// The columns need not be orthogonal or independent: the Gram matrix is
/// diagonalized and directions with relative eigenvalue below
/// [`GRAM_DROP_REL`] are dropped, so nearly coincident kernel vectors
/// reduce the rank instead of blowing up.
fn projector_from_columns(b: &Array2<C64>) -> Result<Array2<C64>> {
    let m = b.ncols();
    if m == 0 {
        return Ok(Array2::zeros((b.nrows(), b.nrows())));
    }
    let gram = linalg::dagger(b).dot(b);
    let (vals, vecs) = linalg::eigh(&gram)?;
    let vmax = vals.iter().cloned().fold(0.0_f64, f64::max);
    if vmax <= 0.0 {
        return Ok(Array2::zeros((b.nrows(), b.nrows())));
    }
    let mut kept = Vec::new();
    for (k, &l) in vals.iter().enumerate() {
        if l > GRAM_DROP_REL * vmax {
            kept.push((k, l));
        }
    }
    let mut q = Array2::zeros((b.nrows(), kept.len()));
    for (out_col, &(k, l)) in kept.iter().enumerate() {
        let col = b.dot(&vecs.column(k).to_owned());
        let scale = C64::new(1.0 / l.sqrt(), 0.0);
        q.column_mut(out_col).assign(&col.mapv(|z| z * scale));
    }
    Ok(linalg::hermitize(&q.dot(&linalg::dagger(&q))))
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Precomputed Lindblad generator: Hamiltonian plus jump matrices on the
/// full space, with `L^+ L` cached per jump.
#[derive(Clone)]
pub struct Generator {
    space: FockSpace,
    h: Array2<C64>,
    gamma: f64,
    jumps: Vec<Array2<C64>>,
    jdagj: Vec<Array2<C64>>,
    radius: std::sync::OnceLock<f64>,
}

impl Generator {
    pub fn new(h: &FockOperator, spec: &DissipationSpec) -> Result<Generator> {
        if !h.is_hermitian() {
            return Err(Error::InvalidHamiltonian(
                "generator needs a hermitian Hamiltonian part".into(),
            ));
        }
        let jumps = spec.matrices(h.space())?;
        let jdagj = jumps.iter().map(|l| linalg::dagger(l).dot(l)).collect();
        Ok(Generator {
            space: h.space().clone(),
            h: h.matrix().clone(),
            gamma: spec.gamma,
            jumps,
            jdagj,
            radius: std::sync::OnceLock::new(),
        })
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn jump_matrices(&self) -> &[Array2<C64>] {
        &self.jumps
    }

    /// Action on a density matrix.
    pub fn apply(&self, rho: &Array2<C64>) -> Array2<C64> {
        let minus_i = C64::new(0.0, -1.0);
        let mut out = (self.h.dot(rho) - rho.dot(&self.h)).mapv(|z| z * minus_i);
        if self.gamma > 0.0 {
            let g = C64::new(self.gamma, 0.0);
            let half = C64::new(0.5, 0.0);
            for (l, ll) in self.jumps.iter().zip(&self.jdagj) {
                let sandwich = l.dot(rho).dot(&linalg::dagger(l));
                let anti = (ll.dot(rho) + rho.dot(ll)).mapv(|z| z * half);
                out = out + (sandwich - anti).mapv(|z| z * g);
            }
        }
        out
    }

    /// Dense superoperator in row-major vectorization. Size `n^2 x n^2`;
    /// meant for small oracles, not production evolution.
    pub fn superoperator_matrix(&self) -> Array2<C64> {
        let n = self.space.total_dim();
        let eye = Array2::eye(n);
        let minus_i = C64::new(0.0, -1.0);
        let i = C64::new(0.0, 1.0);
        let mut s = kron_scaled(&self.h, &eye, minus_i) + kron_scaled(&eye, &self.h.t().to_owned(), i);
        if self.gamma > 0.0 {
            let g = C64::new(self.gamma, 0.0);
            let gh = C64::new(-0.5 * self.gamma, 0.0);
            for (l, ll) in self.jumps.iter().zip(&self.jdagj) {
                let ldag_t = linalg::dagger(l).t().to_owned();
                s = s + kron_scaled(l, &ldag_t, g);
                s = s + kron_scaled(ll, &eye, gh);
                s = s + kron_scaled(&eye, &ll.t().to_owned(), gh);
            }
        }
        s
    }

    /// Banded assembly of the superoperator. Bandwidth is
    /// `(n + 1) * w` where `w` is the widest half-bandwidth among `H`,
    /// the jumps, and their `L^+ L`.
    pub fn banded_superoperator(&self) -> Banded {
        let n = self.space.total_dim();
        let mut w = half_bandwidth(&self.h);
        for (l, ll) in self.jumps.iter().zip(&self.jdagj) {
            w = w.max(half_bandwidth(l)).max(half_bandwidth(ll));
        }
        let bw = (n + 1) * w;
        let mut s = Banded::zeros(n * n, bw, bw);
        let minus_i = C64::new(0.0, -1.0);
        let i = C64::new(0.0, 1.0);
        let eye = Array2::eye(n);
        add_sandwich_term(&mut s, &self.h, &eye, minus_i);
        add_sandwich_term(&mut s, &eye, &self.h, i);
        if self.gamma > 0.0 {
            let g = C64::new(self.gamma, 0.0);
            let gh = C64::new(-0.5 * self.gamma, 0.0);
            for (l, ll) in self.jumps.iter().zip(&self.jdagj) {
                let ldag = linalg::dagger(l);
                add_sandwich_term(&mut s, l, &ldag, g);
                add_sandwich_term(&mut s, ll, &eye, gh);
                add_sandwich_term(&mut s, &eye, ll, gh);
            }
        }
        s
    }

    /// Power-iteration estimate of the spectral radius of the generator,
    /// with a 1.2x safety factor. Deterministic start vector; the result
    /// is computed once and cached for the generator's lifetime.
    pub fn spectral_radius_estimate(&self) -> f64 {
        *self.radius.get_or_init(|| {
            let n = self.space.total_dim();
            let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_11D8);
            let mut x = Array2::from_shape_fn((n, n), |_| {
                C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            let mut radius = 0.0;
            for _ in 0..20 {
                let norm = linalg::fro_norm(&x);
                if norm < 1e-300 {
                    return 0.0;
                }
                let inv = C64::new(1.0 / norm, 0.0);
                let y = self.apply(&x.mapv(|z| z * inv));
                radius = linalg::fro_norm(&y);
                x = y;
            }
            radius * 1.2
        })
    }
}

/// `out += scale * (A (x) B^T)` restricted to the band, via the entry rule
/// `S[i n + j, k n + l] += scale * A[i, k] * B[l, j]` for the map
/// `rho -> A rho B`.
fn add_sandwich_term(s: &mut Banded, a: &Array2<C64>, b: &Array2<C64>, scale: C64) {
    let n = a.nrows();
    for i in 0..n {
        for k in 0..n {
            let aik = a[[i, k]];
            if aik == ZERO {
                continue;
            }
            for l in 0..n {
                for j in 0..n {
                    let blj = b[[l, j]];
                    if blj == ZERO {
                        continue;
                    }
                    s.add(i * n + j, k * n + l, scale * aik * blj);
                }
            }
        }
    }
}

fn half_bandwidth(m: &Array2<C64>) -> usize {
    let mut w = 0usize;
    for ((i, j), &v) in m.indexed_iter() {
        if v != ZERO {
            w = w.max(i.abs_diff(j));
        }
    }
    w
}

fn kron_scaled(a: &Array2<C64>, b: &Array2<C64>, scale: C64) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let v = a[[i, j]] * scale;
            if v == ZERO {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[[i * br + p, j * bc + q]] = v * b[[p, q]];
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Adaptive explicit evolution
// ---------------------------------------------------------------------------

/// Which explicit scheme an [`evolve`] run settled on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Dopri5,
    Rkc2,
}

/// Diagnostics from one [`evolve`] run.
#[derive(Clone, Debug)]
pub struct EvolveStats {
    pub scheme: Scheme,
    pub accepted: usize,
    pub rejected: usize,
    pub f_evals: usize,
    pub spectral_radius: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

/// Integrate the linear flow `d m / dt = L(m)` for an arbitrary matrix.
///
/// This is `evolve` without the density-matrix contract: no hermitization
/// and no trace or positivity checks, so it also serves coherence blocks
/// and other non-hermitian inputs. `trace_error` and `min_eigenvalue` in
/// the returned stats are NaN; only [`evolve`] fills them.
///
/// For `gamma > 1` the generator is rescaled by `1/gamma` and the horizon
/// stretched to `gamma t`, so the controller works in dissipation time and
/// tolerances mean the same thing at every rate.
pub fn evolve_linear(
    gen: &Generator,
    m0: &Array2<C64>,
    t: f64,
    tol: f64,
) -> Result<(Array2<C64>, EvolveStats)> {
    let n = gen.space().total_dim();
    if m0.nrows() != n || m0.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "state is {}x{}, generator space has dimension {}",
            m0.nrows(),
            m0.ncols(),
            n
        )));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Config(format!("evolution time must be >= 0, got {t}")));
    }
    if !(tol.is_finite() && tol > 0.0 && tol <= 1e-2) {
        return Err(Error::Config(format!(
            "tolerance must lie in (0, 1e-2], got {tol}"
        )));
    }

    let scale = gen.gamma().max(1.0);
    let horizon = scale * t;
    let inv_scale = C64::new(1.0 / scale, 0.0);
    let f = |y: &Array2<C64>| gen.apply(y).mapv(|z| z * inv_scale);

    let nu = gen.spectral_radius_estimate() / scale;
    let scheme = if nu * horizon <= STIFFNESS_CROSSOVER {
        Scheme::Dopri5
    } else {
        Scheme::Rkc2
    };

    let mut state = m0.clone();
    let mut stats = EvolveStats {
        scheme,
        accepted: 0,
        rejected: 0,
        f_evals: 0,
        spectral_radius: nu * scale,
        trace_error: f64::NAN,
        min_eigenvalue: f64::NAN,
    };

    if horizon > 0.0 {
        match scheme {
            Scheme::Dopri5 => dopri5(&f, &mut state, horizon, nu, tol, &mut stats)?,
            Scheme::Rkc2 => rkc2(&f, &mut state, horizon, nu, tol, &mut stats)?,
        }
    }
    Ok((state, stats))
}

/// Integrate `d rho / dt = L(rho)` from `rho0` over `[0, t]`.
///
/// The final state is hermitized; the run aborts with an error if the
/// trace moved by more than `10 tol` or an eigenvalue fell below
/// `-100 tol`. Positivity is only ever monitored, never projected back.
pub fn evolve(
    gen: &Generator,
    rho0: &Array2<C64>,
    t: f64,
    tol: f64,
) -> Result<(Array2<C64>, EvolveStats)> {
    let trace0 = linalg::trace(rho0).re;
    let (raw, mut stats) = evolve_linear(gen, rho0, t, tol)?;
    let state = linalg::hermitize(&raw);
    stats.trace_error = (linalg::trace(&state).re - trace0).abs();
    let (eigs, _) = linalg::eigh(&state)?;
    stats.min_eigenvalue = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if stats.trace_error > TRACE_TOL_FACTOR * tol {
        return Err(Error::InvalidState(format!(
            "trace drifted by {:.3e} during evolution (allowed {:.3e})",
            stats.trace_error,
            TRACE_TOL_FACTOR * tol
        )));
    }
    if stats.min_eigenvalue < -POSITIVITY_TOL_FACTOR * tol {
        return Err(Error::InvalidState(format!(
            "state eigenvalue {:.3e} below the positivity floor {:.3e}",
            stats.min_eigenvalue,
            -POSITIVITY_TOL_FACTOR * tol
        )));
    }
    Ok((state, stats))
}

/// Weighted rms of `err` against `atol + rtol * max(|y0|, |y1|)`,
/// with `atol = rtol = tol`.
fn error_norm(err: &Array2<C64>, y0: &Array2<C64>, y1: &Array2<C64>, tol: f64) -> f64 {
    let mut acc = 0.0;
    for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
        let sc = tol * (1.0 + a.norm().max(b.norm()));
        let r = e.norm() / sc;
        acc += r * r;
    }
    (acc / err.len() as f64).sqrt()
}

fn step_underflow(t_now: f64, h: f64, horizon: f64) -> bool {
    h < 1e-12 * horizon.max(1.0) || t_now + h == t_now
}

fn dopri5<F>(
    f: &F,
    y: &mut Array2<C64>,
    horizon: f64,
    nu: f64,
    tol: f64,
    stats: &mut EvolveStats,
) -> Result<()>
where
    F: Fn(&Array2<C64>) -> Array2<C64>,
{
    // Dormand-Prince 5(4) tableau, FSAL.
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
    const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
    const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
    const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
    const E6: f64 = 11.0 / 84.0 - 187.0 / 2100.0;
    const E7: f64 = -1.0 / 40.0;

    let lc = |terms: &[(f64, &Array2<C64>)], h: f64| -> Array2<C64> {
        let mut out: Array2<C64> = Array2::zeros(terms[0].1.dim());
        for &(c, m) in terms {
            let ch = C64::new(c * h, 0.0);
            out = out + m.mapv(|z| z * ch);
        }
        out
    };

    let mut t_now = 0.0_f64;
    let mut k1 = f(y);
    stats.f_evals += 1;
    let mut h = (horizon / 10.0).min(0.5 / (nu + 1e-12)).min(horizon);
    let mut err_prev: f64 = 1.0;

    while t_now < horizon {
        if stats.accepted + stats.rejected > MAX_STEPS {
            return Err(Error::Stiffness { t: t_now, step: h });
        }
        if step_underflow(t_now, h, horizon) {
            return Err(Error::Stiffness { t: t_now, step: h });
        }
        h = h.min(horizon - t_now);

        let k2 = f(&(y.clone() + lc(&[(A21, &k1)], h)));
        let k3 = f(&(y.clone() + lc(&[(A31, &k1), (A32, &k2)], h)));
        let k4 = f(&(y.clone() + lc(&[(A41, &k1), (A42, &k2), (A43, &k3)], h)));
        let k5 = f(&(y.clone() + lc(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h)));
        let k6 = f(&(y.clone()
            + lc(
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                h,
            )));
        let y5 = y.clone()
            + lc(
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
                h,
            );
        let k7 = f(&y5);
        stats.f_evals += 5;

        let err_est = lc(
            &[
                (E1, &k1),
                (E3, &k3),
                (E4, &k4),
                (E5, &k5),
                (E6, &k6),
                (E7, &k7),
            ],
            h,
        );
        let err = error_norm(&err_est, y, &y5, tol).max(1e-10);

        if err <= 1.0 {
            t_now += h;
            *y = y5;
            k1 = k7;
            stats.accepted += 1;
            let fac = 0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 5.0);
            err_prev = err;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(())
}

/// Chebyshev stage coefficients for the damped second-order scheme.
struct RkcCoeffs {
    s: usize,
    // per-stage: mu, nu, mu_tilde, gamma_tilde
    mu: Vec<f64>,
    nu: Vec<f64>,
    mu_t: Vec<f64>,
    gamma_t: Vec<f64>,
    mu1_t: f64,
}

fn rkc_coeffs(s: usize) -> RkcCoeffs {
    let eps = 2.0 / 13.0;
    let sf = s as f64;
    let w0 = 1.0 + eps / (sf * sf);
    // Chebyshev values at w0 up to order s.
    let mut t = vec![0.0; s + 1];
    let mut tp = vec![0.0; s + 1];
    let mut tpp = vec![0.0; s + 1];
    t[0] = 1.0;
    t[1] = w0;
    tp[0] = 0.0;
    tp[1] = 1.0;
    tpp[0] = 0.0;
    tpp[1] = 0.0;
    for j in 2..=s {
        t[j] = 2.0 * w0 * t[j - 1] - t[j - 2];
        tp[j] = 2.0 * t[j - 1] + 2.0 * w0 * tp[j - 1] - tp[j - 2];
        tpp[j] = 4.0 * tp[j - 1] + 2.0 * w0 * tpp[j - 1] - tpp[j - 2];
    }
    let w1 = tp[s] / tpp[s];
    let mut b = vec![0.0; s + 1];
    for j in 2..=s {
        b[j] = tpp[j] / (tp[j] * tp[j]);
    }
    b[0] = b[2];
    b[1] = b[2];
    let a: Vec<f64> = (0..=s).map(|j| 1.0 - b[j] * t[j]).collect();

    let mut mu = vec![0.0; s + 1];
    let mut nu = vec![0.0; s + 1];
    let mut mu_t = vec![0.0; s + 1];
    let mut gamma_t = vec![0.0; s + 1];
    for j in 2..=s {
        mu[j] = 2.0 * b[j] * w0 / b[j - 1];
        nu[j] = -b[j] / b[j - 2];
        mu_t[j] = 2.0 * b[j] * w1 / b[j - 1];
        gamma_t[j] = -a[j - 1] * mu_t[j];
    }
    RkcCoeffs {
        s,
        mu,
        nu,
        mu_t,
        gamma_t,
        mu1_t: b[1] * w1,
    }
}

fn rkc2<F>(
    f: &F,
    y: &mut Array2<C64>,
    horizon: f64,
    nu: f64,
    tol: f64,
    stats: &mut EvolveStats,
) -> Result<()>
where
    F: Fn(&Array2<C64>) -> Array2<C64>,
{
    // Real-axis stability of the damped scheme is about 0.65 s^2.
    let beta = 0.65;
    let smax = MAX_RKC_STAGES;
    let nu_eff = nu.max(1e-12);
    let h_stab_cap = beta * (smax * smax) as f64 / nu_eff;

    let mut t_now = 0.0_f64;
    let mut f0 = f(y);
    stats.f_evals += 1;
    let mut h = (horizon / 10.0).min(h_stab_cap).min(10.0 / nu_eff);
    let mut coeffs: Option<RkcCoeffs> = None;

    while t_now < horizon {
        if stats.accepted + stats.rejected > MAX_STEPS {
            return Err(Error::Stiffness { t: t_now, step: h });
        }
        if step_underflow(t_now, h, horizon) {
            return Err(Error::Stiffness { t: t_now, step: h });
        }
        h = h.min(horizon - t_now).min(h_stab_cap);
        let s = ((1.0 + h * nu_eff / beta).sqrt().ceil() as usize).clamp(2, smax);
        if coeffs.as_ref().map(|c| c.s) != Some(s) {
            coeffs = Some(rkc_coeffs(s));
        }
        let c = coeffs.as_ref().expect("just set");

        // Three-term recurrence in the stage index.
        let hm = |x: &Array2<C64>, r: f64| x.mapv(|z| z * C64::new(r, 0.0));
        let mut y_jm2 = y.clone();
        let mut y_jm1 = y.clone() + hm(&f0, c.mu1_t * h);
        stats.f_evals += s - 1;
        for j in 2..=s {
            let fj = f(&y_jm1);
            let mut y_j = hm(y, 1.0 - c.mu[j] - c.nu[j]) + hm(&y_jm1, c.mu[j]) + hm(&y_jm2, c.nu[j]);
            y_j = y_j + hm(&fj, c.mu_t[j] * h) + hm(&f0, c.gamma_t[j] * h);
            y_jm2 = y_jm1;
            y_jm1 = y_j;
        }
        let y1 = y_jm1;
        let f1 = f(&y1);
        stats.f_evals += 1;

        let est = hm(&(y.clone() - &y1), 0.8) + hm(&(f0.clone() + &f1), 0.4 * h);
        let err = error_norm(&est, y, &y1, tol).max(1e-10);

        if err <= 1.0 {
            t_now += h;
            *y = y1;
            f0 = f1;
            stats.accepted += 1;
            h *= (0.8 * err.powf(-1.0 / 3.0)).clamp(0.3, 4.0);
        } else {
            stats.rejected += 1;
            h *= (0.8 * err.powf(-1.0 / 3.0)).clamp(0.1, 0.8);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Implicit banded stepper
// ---------------------------------------------------------------------------

/// Fixed-step L-stable map `v -> R(h S) v` for a banded superoperator `S`,
/// where `R` is the stability function of the two-stage Radau IIA method,
///
/// ```text
/// R(z) = (1 + z/3) / (1 - 2z/3 + z^2/6),
/// ```
///
/// applied through its partial-fraction form
/// `R(h S) = w (I - (h/z) S)^{-1} + conj pair` with poles `z = 2 +- i sqrt(2)`.
/// Third order in `h`, exact damping of the far-stable spectrum, two banded
/// LU solves per step with the factorizations held for the stepper's life.
pub struct RadauStepper {
    h: f64,
    lu_a: BandedLu,
    lu_b: BandedLu,
    w_a: C64,
    w_b: C64,
    buf_a: Vec<C64>,
    buf_b: Vec<C64>,
}

impl RadauStepper {
    pub fn new(s: &Banded, h: f64) -> Result<RadauStepper> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {h}")));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        let z_a = C64::new(2.0, sqrt2);
        let z_b = z_a.conj();
        let m_a = s.identity_minus_scaled(C64::new(h, 0.0) / z_a);
        let m_b = s.identity_minus_scaled(C64::new(h, 0.0) / z_b);
        let n = s.n;
        Ok(RadauStepper {
            h,
            lu_a: BandedLu::factor(&m_a)?,
            lu_b: BandedLu::factor(&m_b)?,
            w_a: C64::new(0.5, sqrt2),
            w_b: C64::new(0.5, -sqrt2),
            buf_a: vec![ZERO; n],
            buf_b: vec![ZERO; n],
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Advance the vectorized state by one step of size `h`.
    pub fn step(&mut self, state: &mut [C64]) -> Result<()> {
        self.buf_a.copy_from_slice(state);
        self.buf_b.copy_from_slice(state);
        self.lu_a.solve(&mut self.buf_a)?;
        self.lu_b.solve(&mut self.buf_b)?;
        for ((out, a), b) in state.iter_mut().zip(&self.buf_a).zip(&self.buf_b) {
            *out = self.w_a * a + self.w_b * b;
        }
        Ok(())
    }
}

/// Fixed-step implicit evolution over `[0, t]` with step near `h`
/// (rounded so the horizon divides evenly). Returns the hermitized state.
pub fn evolve_banded(gen: &Generator, rho0: &Array2<C64>, t: f64, h: f64) -> Result<Array2<C64>> {
    let n = gen.space().total_dim();
    if rho0.nrows() != n || rho0.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "state is {}x{}, generator space has dimension {}",
            rho0.nrows(),
            rho0.ncols(),
            n
        )));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Config(format!("evolution time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let steps = ((t / h).ceil() as usize).max(1);
    let h_eff = t / steps as f64;
    let s = gen.banded_superoperator();
    let mut stepper = RadauStepper::new(&s, h_eff)?;
    let mut v = vec_density(rho0);
    for _ in 0..steps {
        stepper.step(&mut v)?;
    }
    Ok(linalg::hermitize(&unvec_density(&v, n)))
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

/// Row-major flatten of a density matrix.
pub fn vec_density(rho: &Array2<C64>) -> Vec<C64> {
    rho.iter().cloned().collect()
}

/// Inverse of [`vec_density`].
pub fn unvec_density(v: &[C64], n: usize) -> Array2<C64> {
    Array2::from_shape_vec((n, n), v.to_vec()).expect("length is n^2")
}

/// Trace distance `|| a - b ||_1 / 2` for hermitian inputs.
pub fn trace_distance(a: &Array2<C64>, b: &Array2<C64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "trace distance needs equal shapes, got {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let diff = linalg::hermitize(&(a - b));
    let (eigs, _) = linalg::eigh(&diff)?;
    Ok(0.5 * eigs.iter().map(|l| l.abs()).sum::<f64>())
}
