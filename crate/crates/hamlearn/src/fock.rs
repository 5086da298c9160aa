//! Truncated Fock-space linear algebra: mode operators, coherent states,
//! displacements, tensor products, and leakage accounting.
//!
//! Mode order is fixed: mode 0 is the slowest-varying (leftmost) tensor factor,
//! matching `kron(A, B)` with A on mode 0. All operators built on the same
//! `FockSpace` share that order.

use ndarray::{linalg::kron, Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ONE, ZERO};

/// Per-entry tolerance for hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Ket norm / density trace tolerance.
pub const STATE_NORM_TOL: f64 = 1e-10;
/// Density eigenvalue floor.
pub const DENSITY_EIG_FLOOR: f64 = -1e-9;
/// Default coherent-state leakage tolerance.
pub const DEFAULT_LEAK_TOL: f64 = 1e-10;
/// D(alpha)|0> must match the closed-form coherent state this tightly.
pub const DISPLACEMENT_TOL: f64 = 1e-8;

/// Collection of truncated bosonic modes with a fixed ordering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockSpace {
    dims: Vec<usize>,
}

impl FockSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Config("a Fock space needs at least one mode".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::Config(format!(
                "per-mode truncation must be >= 2, got {d}"
            )));
        }
        Ok(FockSpace { dims })
    }

    pub fn single(dim: usize) -> Result<Self> {
        FockSpace::new(vec![dim])
    }

    pub fn modes(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, mode: usize) -> usize {
        self.dims[mode]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.modes() {
            Ok(())
        } else {
            Err(Error::ModeOutOfRange {
                mode,
                modes: self.modes(),
            })
        }
    }

    /// Flat index of an occupation-number tuple (mode 0 slowest).
    pub fn flat_index(&self, occ: &[usize]) -> usize {
        debug_assert_eq!(occ.len(), self.modes());
        occ.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&n, &d)| acc * d + n)
    }

    /// Occupation-number tuple of a flat index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut occ = vec![0; self.modes()];
        for (k, &d) in self.dims.iter().enumerate().rev() {
            occ[k] = flat % d;
            flat /= d;
        }
        occ
    }
}

/// Dense operator on a `FockSpace`.
#[derive(Clone, Debug)]
pub struct FockOperator {
    space: FockSpace,
    matrix: Array2<C64>,
}

impl FockOperator {
    pub fn from_matrix(space: FockSpace, matrix: Array2<C64>) -> Result<Self> {
        let n = space.total_dim();
        if matrix.dim() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "operator is {:?}, space total_dim is {n}",
                matrix.dim()
            )));
        }
        Ok(FockOperator { space, matrix })
    }

    pub fn identity(space: &FockSpace) -> Self {
        FockOperator {
            space: space.clone(),
            matrix: Array2::eye(space.total_dim()),
        }
    }

    pub fn zeros(space: &FockSpace) -> Self {
        FockOperator {
            space: space.clone(),
            matrix: Array2::zeros((space.total_dim(), space.total_dim())),
        }
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn dagger(&self) -> Self {
        FockOperator {
            space: self.space.clone(),
            matrix: linalg::dagger(&self.matrix),
        }
    }

    pub fn is_hermitian(&self) -> bool {
        linalg::is_hermitian(&self.matrix, HERMITICITY_TOL)
    }

    /// Operator product; panics on space mismatch (programming error).
    pub fn dot(&self, other: &FockOperator) -> FockOperator {
        assert_eq!(self.space, other.space, "operator product across spaces");
        FockOperator {
            space: self.space.clone(),
            matrix: self.matrix.dot(&other.matrix),
        }
    }

    pub fn scale(&self, c: C64) -> FockOperator {
        FockOperator {
            space: self.space.clone(),
            matrix: self.matrix.mapv(|z| z * c),
        }
    }

    pub fn add(&self, other: &FockOperator) -> FockOperator {
        assert_eq!(self.space, other.space, "operator sum across spaces");
        FockOperator {
            space: self.space.clone(),
            matrix: &self.matrix + &other.matrix,
        }
    }

    pub fn sub(&self, other: &FockOperator) -> FockOperator {
        assert_eq!(self.space, other.space, "operator difference across spaces");
        FockOperator {
            space: self.space.clone(),
            matrix: &self.matrix - &other.matrix,
        }
    }

    pub fn apply_ket(&self, v: &Array1<C64>) -> Array1<C64> {
        self.matrix.dot(v)
    }

    /// Integer power by repeated multiplication (exponents stay small here).
    pub fn pow(&self, k: usize) -> FockOperator {
        let mut out = FockOperator::identity(&self.space);
        for _ in 0..k {
            out = out.dot(self);
        }
        out
    }
}

/// Pure or mixed state on a `FockSpace`.
#[derive(Clone, Debug)]
pub enum StateData {
    Ket(Array1<C64>),
    Density(Array2<C64>),
}

#[derive(Clone, Debug)]
pub struct FockState {
    space: FockSpace,
    data: StateData,
}

impl FockState {
    pub fn ket(space: FockSpace, v: Array1<C64>) -> Result<Self> {
        if v.len() != space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "ket length {} vs total_dim {}",
                v.len(),
                space.total_dim()
            )));
        }
        let norm = linalg::norm_l2(&v);
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::InvalidState(format!(
                "ket norm {norm} deviates from 1 beyond {STATE_NORM_TOL:e}"
            )));
        }
        Ok(FockState {
            space,
            data: StateData::Ket(v),
        })
    }

    pub fn density(space: FockSpace, m: Array2<C64>) -> Result<Self> {
        let n = space.total_dim();
        if m.dim() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "density is {:?}, total_dim {n}",
                m.dim()
            )));
        }
        let tr = linalg::trace(&m);
        if (tr.re - 1.0).abs() > STATE_NORM_TOL || tr.im.abs() > STATE_NORM_TOL {
            return Err(Error::InvalidState(format!(
                "density trace {tr} deviates from 1 beyond {STATE_NORM_TOL:e}"
            )));
        }
        if !linalg::is_hermitian(&m, 1e-9) {
            return Err(Error::InvalidState("density not hermitian".into()));
        }
        let (vals, _) = linalg::eigh(&m)?;
        if let Some(&l) = vals.iter().find(|&&l| l < DENSITY_EIG_FLOOR) {
            return Err(Error::InvalidState(format!(
                "density eigenvalue {l} below floor {DENSITY_EIG_FLOOR:e}"
            )));
        }
        Ok(FockState {
            space,
            data: StateData::Density(m),
        })
    }

    pub fn vacuum(space: &FockSpace) -> Self {
        let mut v = Array1::zeros(space.total_dim());
        v[0] = ONE;
        FockState {
            space: space.clone(),
            data: StateData::Ket(v),
        }
    }

    pub fn number_basis(space: &FockSpace, occ: &[usize]) -> Result<Self> {
        if occ.len() != space.modes() {
            return Err(Error::DimensionMismatch(format!(
                "{} occupation numbers for {} modes",
                occ.len(),
                space.modes()
            )));
        }
        for (m, (&n, &d)) in occ.iter().zip(space.dims()).enumerate() {
            if n >= d {
                return Err(Error::InvalidState(format!(
                    "occupation {n} at mode {m} exceeds dim {d}"
                )));
            }
        }
        let mut v = Array1::zeros(space.total_dim());
        v[space.flat_index(occ)] = ONE;
        Ok(FockState {
            space: space.clone(),
            data: StateData::Ket(v),
        })
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn as_ket(&self) -> Option<&Array1<C64>> {
        match &self.data {
            StateData::Ket(v) => Some(v),
            StateData::Density(_) => None,
        }
    }

    pub fn to_density(&self) -> Array2<C64> {
        match &self.data {
            StateData::Ket(v) => {
                let n = v.len();
                let mut rho = Array2::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        rho[[i, j]] = v[i] * v[j].conj();
                    }
                }
                rho
            }
            StateData::Density(m) => m.clone(),
        }
    }

    pub fn expectation(&self, op: &FockOperator) -> C64 {
        assert_eq!(self.space, op.space, "expectation across spaces");
        match &self.data {
            StateData::Ket(v) => {
                let mv = op.matrix.dot(v);
                v.iter().zip(mv.iter()).map(|(a, b)| a.conj() * b).sum()
            }
            StateData::Density(m) => linalg::trace(&op.matrix.dot(m)),
        }
    }

    /// Overlap <self|other> for kets.
    pub fn overlap(&self, other: &FockState) -> Result<C64> {
        match (&self.data, &other.data) {
            (StateData::Ket(a), StateData::Ket(b)) => {
                if a.len() != b.len() {
                    return Err(Error::DimensionMismatch("overlap of unequal kets".into()));
                }
                Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
            }
            _ => Err(Error::InvalidState("overlap needs two kets".into())),
        }
    }

    /// Max over modes of the population on that mode's top two Fock levels.
    /// Truncation-artifact diagnostic; healthy states keep this tiny.
    pub fn top_level_population(&self) -> f64 {
        let probs: Vec<f64> = match &self.data {
            StateData::Ket(v) => v.iter().map(|z| z.norm_sqr()).collect(),
            StateData::Density(m) => m.diag().iter().map(|z| z.re).collect(),
        };
        let mut worst = 0.0_f64;
        for mode in 0..self.space.modes() {
            let d = self.space.dim(mode);
            let p: f64 = probs
                .iter()
                .enumerate()
                .filter(|(flat, _)| self.space.multi_index(*flat)[mode] >= d - 2)
                .map(|(_, &p)| p)
                .sum();
            worst = worst.max(p);
        }
        worst
    }
}

/// Annihilation operator on one mode, identity elsewhere.
pub fn annihilation(space: &FockSpace, mode: usize) -> Result<FockOperator> {
    space.check_mode(mode)?;
    let d = space.dim(mode);
    let mut b = Array2::zeros((d, d));
    for k in 1..d {
        b[[k - 1, k]] = C64::new((k as f64).sqrt(), 0.0);
    }
    embed_mode_matrix(space, mode, &b)
}

pub fn creation(space: &FockSpace, mode: usize) -> Result<FockOperator> {
    Ok(annihilation(space, mode)?.dagger())
}

pub fn number(space: &FockSpace, mode: usize) -> Result<FockOperator> {
    let b = annihilation(space, mode)?;
    Ok(b.dagger().dot(&b))
}

/// Truncation heuristic for a coherent amplitude: Poisson tail comfortably
/// below working precision.
pub fn required_dim(alpha_abs: f64) -> usize {
    (alpha_abs * alpha_abs + 6.0 * alpha_abs + 10.0).ceil() as usize
}

/// Weight of the coherent state beyond the truncation: sum of Poisson terms
/// e^{-|a|^2} |a|^{2n}/n! for n >= dim, summed directly to avoid cancellation.
pub fn coherent_leakage(dim: usize, alpha_abs: f64) -> f64 {
    let lam = alpha_abs * alpha_abs;
    if lam == 0.0 {
        return 0.0;
    }
    let mut p = (-lam).exp();
    let mut tail = 0.0;
    // Walk the pmf up to dim, then accumulate the tail until terms vanish.
    for n in 0..dim {
        p *= lam / (n + 1) as f64;
    }
    let mut n = dim;
    while p > 0.0 && (tail == 0.0 || p > tail * 1e-18) {
        tail += p;
        p *= lam / (n + 1) as f64;
        n += 1;
        if n > dim + 10_000 {
            break;
        }
    }
    tail
}

fn coherent_mode_ket(dim: usize, alpha: C64, leak_tol: f64) -> Result<Array1<C64>> {
    let leakage = coherent_leakage(dim, alpha.norm());
    if leakage > leak_tol {
        return Err(Error::Truncation {
            dim,
            alpha: alpha.norm(),
            leakage,
            tol: leak_tol,
        });
    }
    let mut v = Array1::zeros(dim);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..dim {
        v[n] = c;
        c *= alpha / C64::new(((n + 1) as f64).sqrt(), 0.0);
    }
    // Normalize away the truncated tail so the ket invariant holds even when a
    // loose leakage tolerance is configured.
    let norm = linalg::norm_l2(&v);
    Ok(v.mapv(|z| z / norm))
}

/// Coherent state |alpha_0, ..., alpha_{m-1}> with per-mode leakage checks.
pub fn coherent_state(space: &FockSpace, alphas: &[C64], leak_tol: f64) -> Result<FockState> {
    if alphas.len() != space.modes() {
        return Err(Error::DimensionMismatch(format!(
            "{} amplitudes for {} modes",
            alphas.len(),
            space.modes()
        )));
    }
    let mut v = Array1::from_elem(1, ONE);
    for (m, &a) in alphas.iter().enumerate() {
        let factor = coherent_mode_ket(space.dim(m), a, leak_tol)?;
        v = kron_vec(&v, &factor);
    }
    FockState::ket(space.clone(), v)
}

fn kron_vec(a: &Array1<C64>, b: &Array1<C64>) -> Array1<C64> {
    let mut out = Array1::zeros(a.len() * b.len());
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i * b.len() + j] = x * y;
        }
    }
    out
}

/// Displacement D(alpha) = exp(alpha b^dag - conj(alpha) b) on one mode,
/// identity elsewhere. Exact unitary via the eigendecomposition of the
/// hermitian generator; requires the truncation to reproduce the closed-form
/// coherent state from vacuum.
pub fn displacement(space: &FockSpace, mode: usize, alpha: C64) -> Result<FockOperator> {
    space.check_mode(mode)?;
    let d = space.dim(mode);
    let sub = FockSpace::single(d)?;
    let b = annihilation(&sub, 0)?.into_matrix();
    let bdag = linalg::dagger(&b);
    // alpha b† - conj(alpha) b = i M with M hermitian.
    let gen = &bdag * alpha - &b * alpha.conj();
    let m = gen.mapv(|z| z * C64::new(0.0, -1.0));
    let dmat = linalg::expi_hermitian(&m, 1.0)?;

    // Truncation gate: displaced vacuum must match the closed form.
    let vac = {
        let mut v = Array1::zeros(d);
        v[0] = ONE;
        v
    };
    let displaced = dmat.dot(&vac);
    // Compare against the unnormalized closed form; mismatch means truncation.
    let mut closed = Array1::zeros(d);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..d {
        closed[n] = c;
        c *= alpha / C64::new(((n + 1) as f64).sqrt(), 0.0);
    }
    let err = linalg::norm_l2(&(&displaced - &closed));
    if err > DISPLACEMENT_TOL {
        return Err(Error::Truncation {
            dim: d,
            alpha: alpha.norm(),
            leakage: err,
            tol: DISPLACEMENT_TOL,
        });
    }
    embed_mode_matrix(space, mode, &dmat)
}

fn embed_mode_matrix(space: &FockSpace, mode: usize, m: &Array2<C64>) -> Result<FockOperator> {
    let mut full = Array2::from_elem((1, 1), ONE);
    for k in 0..space.modes() {
        let factor = if k == mode {
            m.clone()
        } else {
            Array2::eye(space.dim(k))
        };
        full = kron(&full, &factor);
    }
    FockOperator::from_matrix(space.clone(), full)
}

/// Kronecker product of operators on disjoint spaces; the result lives on the
/// concatenation of their modes in argument order.
pub fn tensor(ops: &[&FockOperator]) -> Result<FockOperator> {
    if ops.is_empty() {
        return Err(Error::Config("tensor of zero operators".into()));
    }
    let mut dims = Vec::new();
    let mut m = Array2::from_elem((1, 1), ONE);
    for op in ops {
        dims.extend_from_slice(op.space.dims());
        m = kron(&m, &op.matrix);
    }
    FockOperator::from_matrix(FockSpace::new(dims)?, m)
}

/// Embed an operator acting on `modes` of `target` (in the listed order),
/// identity on the rest.
pub fn embed(op: &FockOperator, target: &FockSpace, modes: &[usize]) -> Result<FockOperator> {
    if modes.len() != op.space.modes() {
        return Err(Error::DimensionMismatch(format!(
            "operator touches {} modes, {} given",
            op.space.modes(),
            modes.len()
        )));
    }
    let mut seen = vec![false; target.modes()];
    for (k, &m) in modes.iter().enumerate() {
        target.check_mode(m)?;
        if seen[m] {
            return Err(Error::Config(format!("mode {m} listed twice in embed")));
        }
        seen[m] = true;
        if target.dim(m) != op.space.dim(k) {
            return Err(Error::DimensionMismatch(format!(
                "mode {m}: target dim {} vs operator dim {}",
                target.dim(m),
                op.space.dim(k)
            )));
        }
    }
    let rest: Vec<usize> = (0..target.modes()).filter(|&m| !seen[m]).collect();
    let n = target.total_dim();
    let mut full = Array2::zeros((n, n));
    let sub_dim = op.space.total_dim();

    // Enumerate the identity factor's occupation tuples once, then copy the
    // sub-block for each.
    let rest_dims: Vec<usize> = rest.iter().map(|&m| target.dim(m)).collect();
    let rest_total: usize = rest_dims.iter().product::<usize>().max(1);
    let mut occ = vec![0usize; target.modes()];
    for r in 0..rest_total {
        let mut rr = r;
        for (&m, &d) in rest.iter().zip(&rest_dims).rev() {
            occ[m] = rr % d;
            rr /= d;
        }
        for i_sub in 0..sub_dim {
            let oi = op.space.multi_index(i_sub);
            for (k, &m) in modes.iter().enumerate() {
                occ[m] = oi[k];
            }
            let gi = target.flat_index(&occ);
            for j_sub in 0..sub_dim {
                let v = op.matrix[[i_sub, j_sub]];
                if v == ZERO {
                    continue;
                }
                let oj = op.space.multi_index(j_sub);
                for (k, &m) in modes.iter().enumerate() {
                    occ[m] = oj[k];
                }
                let gj = target.flat_index(&occ);
                full[[gi, gj]] = v;
                // Restore row assignment for the next column.
                for (k, &m) in modes.iter().enumerate() {
                    occ[m] = oi[k];
                }
            }
        }
    }
    FockOperator::from_matrix(target.clone(), full)
}
