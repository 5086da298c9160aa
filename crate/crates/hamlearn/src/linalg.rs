//! Dense and banded complex linear algebra shared by every module.
//!
//! Dense eigendecomposition goes through LAPACK via `ndarray-linalg`; singular
//! values and null spaces are derived from it rather than a separate SVD path.
//! The banded LU (used by the implicit master-equation stepper) is a thin FFI
//! over `zgbtrf`/`zgbtrs`, which `ndarray-linalg` does not expose; the symbols
//! come from the same OpenBLAS library the rest of the crate already links.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Norm, Solve, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Conjugate transpose.
pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

pub fn fro_norm(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Max absolute column sum.
pub fn op_norm_1(a: &Array2<C64>) -> f64 {
    let mut best = 0.0_f64;
    for col in a.columns() {
        best = best.max(col.iter().map(|z| z.norm()).sum());
    }
    best
}

/// Max absolute row sum.
pub fn op_norm_inf(a: &Array2<C64>) -> f64 {
    let mut best = 0.0_f64;
    for row in a.rows() {
        best = best.max(row.iter().map(|z| z.norm()).sum());
    }
    best
}

/// Singular values, descending, via the eigendecomposition of a^dag a.
/// Everything singular-value-shaped in this crate routes through `eigh` to
/// keep a single, verified LAPACK convention.
pub fn singular_values(a: &Array2<C64>) -> Result<Array1<f64>> {
    let ata = dagger(a).dot(a);
    let (vals, _) = eigh(&ata)?;
    let mut s: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    s.reverse();
    Ok(Array1::from_vec(s))
}

/// Largest singular value.
pub fn spectral_norm(a: &Array2<C64>) -> Result<f64> {
    Ok(singular_values(a)?[0])
}

/// Orthonormal basis (columns) for the null space of `a`, where "null" means
/// singular value <= tol. Computed from the eigenvectors of a^dag a.
pub fn null_space(a: &Array2<C64>, tol: f64) -> Result<Array2<C64>> {
    let ata = dagger(a).dot(a);
    let (vals, vecs) = eigh(&ata)?;
    let cols: Vec<usize> = vals
        .iter()
        .enumerate()
        .filter(|(_, &l)| l.max(0.0).sqrt() <= tol)
        .map(|(i, _)| i)
        .collect();
    let n = a.dim().1;
    let mut out = Array2::zeros((n, cols.len()));
    for (k, &i) in cols.iter().enumerate() {
        out.column_mut(k).assign(&vecs.column(i));
    }
    Ok(out)
}

pub fn is_hermitian(a: &Array2<C64>, tol: f64) -> bool {
    let (n, m) = a.dim();
    if n != m {
        return false;
    }
    for i in 0..n {
        for j in i..n {
            if (a[[i, j]] - a[[j, i]].conj()).norm() > tol {
                return false;
            }
        }
    }
    true
}

pub fn hermitize(a: &Array2<C64>) -> Array2<C64> {
    (a + &dagger(a)) * C64::new(0.5, 0.0)
}

/// Eigendecomposition of a hermitian matrix; columns of the returned matrix are
/// orthonormal eigenvectors, eigenvalues ascending, a = V diag(vals) V^dag.
pub fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    if !is_hermitian(a, 1e-9 * (1.0 + max_abs(a))) {
        return Err(Error::Linalg("eigh called on non-hermitian matrix".into()));
    }
    let (vals, vecs) = hermitize(a).eigh(UPLO::Lower)?;
    // The backend hands the row-major array to LAPACK as if column-major, so it
    // diagonalizes the conjugate; undo that on the eigenvectors.
    Ok((vals, vecs.mapv(|z| z.conj())))
}

/// exp(i s H) for hermitian H, through the eigendecomposition; exactly unitary
/// up to roundoff.
pub fn expi_hermitian(h: &Array2<C64>, s: f64) -> Result<Array2<C64>> {
    let (vals, vecs) = eigh(h)?;
    let phases = Array1::from_iter(vals.iter().map(|&l| (I * (s * l)).exp()));
    let mut scaled = vecs.clone();
    for (mut col, p) in scaled.columns_mut().into_iter().zip(phases.iter()) {
        col.mapv_inplace(|z| z * p);
    }
    Ok(scaled.dot(&dagger(&vecs)))
}

/// Matrix exponential by scaling and squaring with a degree-13 Pade
/// approximant. Used as a small-dimension oracle and for short generator
/// factors; heavy evolution goes through the integrators instead.
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    const THETA_13: f64 = 5.371_920_351_148_152;
    const B: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::DimensionMismatch("expm needs a square matrix".into()));
    }
    let norm = op_norm_1(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.mapv(|z| z / 2f64.powi(s));

    let eye = Array2::<C64>::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let u_inner = &a6 * B[13] + &a4 * B[11] + &a2 * B[9];
    let u = a.dot(&(a6.dot(&u_inner) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &eye * B[1]));
    let v_inner = &a6 * B[12] + &a4 * B[10] + &a2 * B[8];
    let v = a6.dot(&v_inner) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &eye * B[0];

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut r = Array2::<C64>::zeros((n, n));
    for (j, col) in rhs.columns().into_iter().enumerate() {
        let x = lhs.solve(&col.to_owned())?;
        r.column_mut(j).assign(&x);
    }
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Frobenius norm through ndarray-linalg, for parity checks in tests.
pub fn norm_l2(v: &Array1<C64>) -> f64 {
    v.norm_l2()
}

// ---------------------------------------------------------------------------
// Banded storage and LU
// ---------------------------------------------------------------------------

/// Square banded complex matrix, `kl` subdiagonals and `ku` superdiagonals,
/// stored column-major in LAPACK band layout (row `ku + i - j`, column `j`).
#[derive(Clone, Debug)]
pub struct Banded {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    data: Vec<C64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Banded {
            n,
            kl,
            ku,
            data: vec![ZERO; (kl + ku + 1) * n],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n {
            return None;
        }
        let (i, j) = (i as isize, j as isize);
        let off = i - j;
        if off > self.kl as isize || -off > self.ku as isize {
            return None;
        }
        Some((self.ku as isize + off) as usize + (j as usize) * (self.kl + self.ku + 1))
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        match self.idx(i, j) {
            Some(k) => self.data[k] += v,
            None => {
                if v.norm() > 0.0 {
                    panic!(
                        "entry ({i},{j}) outside band kl={} ku={} of n={}",
                        self.kl, self.ku, self.n
                    )
                }
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.idx(i, j).map(|k| self.data[k]).unwrap_or(ZERO)
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut a = Array2::zeros((self.n, self.n));
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl + 1).min(self.n);
            for i in lo..hi {
                a[[i, j]] = self.get(i, j);
            }
        }
        a
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(ZERO);
        let w = self.kl + self.ku + 1;
        for j in 0..self.n {
            let xj = x[j];
            if xj == ZERO {
                continue;
            }
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl + 1).min(self.n);
            let col = &self.data[j * w..(j + 1) * w];
            for i in lo..hi {
                y[i] += col[self.ku + i - j] * xj;
            }
        }
    }

    /// `I - c * self`, same band profile.
    pub fn identity_minus_scaled(&self, c: C64) -> Banded {
        let mut out = Banded {
            n: self.n,
            kl: self.kl,
            ku: self.ku,
            data: self.data.iter().map(|&z| -c * z).collect(),
        };
        for j in 0..self.n {
            let k = out.idx(j, j).expect("diagonal always inside band");
            out.data[k] += ONE;
        }
        out
    }

    /// Gershgorin bound on the spectral radius: max over rows of
    /// sum of absolute entries.
    pub fn gershgorin_radius(&self) -> f64 {
        let mut sums = vec![0.0_f64; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl + 1).min(self.n);
            for i in lo..hi {
                sums[i] += self.get(i, j).norm();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }
}

// LAPACK banded LU. OpenBLAS (already linked through ndarray-linalg) exports
// these; ndarray-linalg itself has no banded API.
extern "C" {
    fn zgbtrf_(
        m: *const i32,
        n: *const i32,
        kl: *const i32,
        ku: *const i32,
        ab: *mut C64,
        ldab: *const i32,
        ipiv: *mut i32,
        info: *mut i32,
    );
    fn zgbtrs_(
        trans: *const u8,
        n: *const i32,
        kl: *const i32,
        ku: *const i32,
        nrhs: *const i32,
        ab: *const C64,
        ldab: *const i32,
        ipiv: *const i32,
        b: *mut C64,
        ldb: *const i32,
        info: *mut i32,
    );
}

/// LU factorization of a banded matrix, reusable across many solves.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<C64>,
    ipiv: Vec<i32>,
}

impl BandedLu {
    pub fn factor(a: &Banded) -> Result<Self> {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let ldab = 2 * kl + ku + 1;
        // Copy into the padded layout zgbtrf expects: matrix row i, col j at
        // ab[kl + ku + i - j, j], the extra kl rows absorb pivoting fill-in.
        let mut ab = vec![ZERO; ldab * n];
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl + 1).min(n);
            for i in lo..hi {
                ab[kl + ku + i - j + j * ldab] = a.get(i, j);
            }
        }
        let mut ipiv = vec![0i32; n];
        let mut info = 0i32;
        let (m_, n_, kl_, ku_, ldab_) = (n as i32, n as i32, kl as i32, ku as i32, ldab as i32);
        unsafe {
            zgbtrf_(
                &m_,
                &n_,
                &kl_,
                &ku_,
                ab.as_mut_ptr(),
                &ldab_,
                ipiv.as_mut_ptr(),
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Linalg(format!("zgbtrf failed with info = {info}")));
        }
        Ok(BandedLu { n, kl, ku, ab, ipiv })
    }

    /// Solve in place for a single right-hand side.
    pub fn solve(&self, b: &mut [C64]) -> Result<()> {
        assert_eq!(b.len(), self.n);
        let trans = b'N';
        let (n_, kl_, ku_) = (self.n as i32, self.kl as i32, self.ku as i32);
        let nrhs = 1i32;
        let ldab = (2 * self.kl + self.ku + 1) as i32;
        let ldb = self.n as i32;
        let mut info = 0i32;
        unsafe {
            zgbtrs_(
                &trans,
                &n_,
                &kl_,
                &ku_,
                &nrhs,
                self.ab.as_ptr(),
                &ldab,
                self.ipiv.as_ptr(),
                b.as_mut_ptr(),
                &ldb,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Linalg(format!("zgbtrs failed with info = {info}")));
        }
        Ok(())
    }
}
