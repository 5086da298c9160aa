//! Regression tests for the shared linear algebra layer. The eigendecomposition
//! reconstruction checks exist because the LAPACK backend's layout handling for
//! complex matrices is easy to get wrong in exactly one conjugation.

use approx::assert_abs_diff_eq;
use ndarray::{array, Array1, Array2};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use hamlearn::linalg::{
    dagger, eigh, expi_hermitian, expm, fro_norm, hermitize, max_abs, null_space, op_norm_1,
    op_norm_inf, singular_values, spectral_norm, trace, Banded, BandedLu, C64, ONE, ZERO,
};

fn random_complex(n: usize, rng: &mut ChaCha8Rng) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |_| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> Array2<C64> {
    hermitize(&random_complex(n, rng))
}

#[test]
fn eigh_reconstructs_the_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = random_hermitian(12, &mut rng);
    let (vals, vecs) = eigh(&h).unwrap();
    let lam = Array2::from_diag(&Array1::from_iter(vals.iter().map(|&l| C64::new(l, 0.0))));
    let back = vecs.dot(&lam).dot(&dagger(&vecs));
    assert!(fro_norm(&(&back - &h)) < 1e-12 * fro_norm(&h).max(1.0));
    // eigenvalues ascending
    for w in vals.windows(2) {
        assert!(w[0] <= w[1]);
    }
}

#[test]
fn eigh_columns_are_orthonormal_eigenvectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = random_hermitian(9, &mut rng);
    let (vals, vecs) = eigh(&h).unwrap();
    let gram = dagger(&vecs).dot(&vecs);
    assert!(fro_norm(&(&gram - &Array2::<C64>::eye(9))) < 1e-12);
    // H v_k = lambda_k v_k column by column, the direct statement of the
    // convention the rest of the crate relies on.
    let hv = h.dot(&vecs);
    for k in 0..9 {
        let resid: f64 = hv
            .column(k)
            .iter()
            .zip(vecs.column(k).iter())
            .map(|(a, b)| (a - b * vals[k]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(resid < 1e-12, "column {k} residual {resid}");
    }
}

#[test]
fn eigh_rejects_non_hermitian() {
    let a = array![[ZERO, ONE], [ZERO, ZERO]];
    assert!(eigh(&a).is_err());
}

#[test]
fn expi_pauli_y_quarter_turn() {
    // exp(i (pi/2) Y) = [[0, 1], [-1, 0]]
    let y = array![[ZERO, C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), ZERO]];
    let u = expi_hermitian(&y, std::f64::consts::FRAC_PI_2).unwrap();
    let want = array![[ZERO, ONE], [-ONE, ZERO]];
    assert!(fro_norm(&(&u - &want)) < 1e-12);
}

#[test]
fn expi_is_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h = random_hermitian(10, &mut rng);
    let u = expi_hermitian(&h, 0.7).unwrap();
    let gram = dagger(&u).dot(&u);
    assert!(fro_norm(&(&gram - &Array2::<C64>::eye(10))) < 1e-12);
}

#[test]
fn expm_of_zero_is_identity() {
    let z = Array2::<C64>::zeros((5, 5));
    let e = expm(&z).unwrap();
    assert!(fro_norm(&(&e - &Array2::<C64>::eye(5))) < 1e-14);
}

#[test]
fn expm_diagonal() {
    let a = Array2::from_diag(&array![C64::new(0.5, 0.0), C64::new(0.0, 1.0)]);
    let e = expm(&a).unwrap();
    assert_abs_diff_eq!(e[[0, 0]].re, 0.5f64.exp(), epsilon = 1e-13);
    assert_abs_diff_eq!(e[[0, 0]].im, 0.0, epsilon = 1e-13);
    assert_abs_diff_eq!(e[[1, 1]].re, 1.0f64.cos(), epsilon = 1e-13);
    assert_abs_diff_eq!(e[[1, 1]].im, 1.0f64.sin(), epsilon = 1e-13);
    assert!(e[[0, 1]].norm() < 1e-15 && e[[1, 0]].norm() < 1e-15);
}

#[test]
fn expm_times_expm_of_negation_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    // Scale up so the scaling-and-squaring branch actually squares.
    let a = random_complex(8, &mut rng) * C64::new(3.0, 0.0);
    assert!(op_norm_1(&a) > 5.372);
    let e = expm(&a).unwrap();
    let einv = expm(&a.mapv(|z| -z)).unwrap();
    let prod = e.dot(&einv);
    assert!(fro_norm(&(&prod - &Array2::<C64>::eye(8))) < 1e-10);
}

#[test]
fn expm_matches_reference_values() {
    let a = array![
        [C64::new(0.3, 0.1), C64::new(-0.2, 0.4), ZERO],
        [C64::new(0.1, -0.3), C64::new(-0.5, 0.0), C64::new(0.25, 0.25)],
        [C64::new(0.0, 0.2), C64::new(0.1, 0.0), C64::new(0.2, -0.6)],
    ];
    let want = array![
        [
            C64::new(1.3894936960565267, 0.18668704510727516),
            C64::new(-0.2174428263734242, 0.3639913669946899),
            C64::new(-0.0707809475505672, 0.037275916482353774),
        ],
        [
            C64::new(0.09495364603817183, -0.2474716834305705),
            C64::new(0.6547759543930267, 0.04585765833114607),
            C64::new(0.2770997256342804, 0.14191841730617027),
        ],
        [
            C64::new(0.05975231664165144, 0.2333290705889646),
            C64::new(0.040580882974921725, -0.04043827409290739),
            C64::new(1.0210506723098156, -0.6879323363042611),
        ],
    ];
    let e = expm(&a).unwrap();
    assert!(fro_norm(&(&e - &want)) < 1e-13);
}

#[test]
fn expm_agrees_with_expi_on_hermitian_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let h = random_hermitian(7, &mut rng);
    let via_pade = expm(&h.mapv(|z| C64::new(0.0, 1.0) * z)).unwrap();
    let via_eig = expi_hermitian(&h, 1.0).unwrap();
    assert!(fro_norm(&(&via_pade - &via_eig)) < 1e-12);
}

#[test]
fn singular_values_of_scaled_diagonal() {
    let a = Array2::from_diag(&array![
        C64::new(3.0, 0.0),
        C64::new(0.0, -2.0),
        C64::new(1.0, 0.0)
    ]);
    let s = singular_values(&a).unwrap();
    assert_abs_diff_eq!(s[0], 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s[1], 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s[2], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(spectral_norm(&a).unwrap(), 3.0, epsilon = 1e-12);
}

#[test]
fn singular_values_invariant_under_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let a = random_complex(6, &mut rng);
    let u = expi_hermitian(&random_hermitian(6, &mut rng), 1.0).unwrap();
    let s1 = singular_values(&a).unwrap();
    let s2 = singular_values(&u.dot(&a)).unwrap();
    for (x, y) in s1.iter().zip(s2.iter()) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-10);
    }
}

#[test]
fn null_space_of_engineered_rank_deficiency() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut a = random_complex(5, &mut rng);
    // Force column 4 = column 0 + 2i * column 1, so (1, 2i, 0, 0, -1) is null.
    let forced = &a.column(0) + &a.column(1).mapv(|z| C64::new(0.0, 2.0) * z);
    a.column_mut(4).assign(&forced);
    let ns = null_space(&a, 1e-10).unwrap();
    assert_eq!(ns.dim(), (5, 1));
    // A v = 0 and v lies along the engineered direction.
    let av = a.dot(&ns.column(0).to_owned());
    assert!(av.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() < 1e-10);
    let v = ns.column(0);
    let expect = [
        ONE,
        C64::new(0.0, 2.0),
        ZERO,
        ZERO,
        -ONE,
    ];
    let dot: C64 = v
        .iter()
        .zip(expect.iter())
        .map(|(a, b)| a.conj() * b)
        .sum();
    assert_abs_diff_eq!(dot.norm(), 6.0f64.sqrt(), epsilon = 1e-10);
}

#[test]
fn null_space_of_full_rank_is_empty() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let a = random_complex(6, &mut rng) + Array2::<C64>::eye(6) * C64::new(4.0, 0.0);
    let ns = null_space(&a, 1e-8).unwrap();
    assert_eq!(ns.dim().1, 0);
}

#[test]
fn norms_and_trace_basics() {
    let a = array![[C64::new(3.0, 4.0), ZERO], [ONE, C64::new(0.0, -6.0)]];
    assert_abs_diff_eq!(trace(&a).re, 3.0, epsilon = 0.0);
    assert_abs_diff_eq!(trace(&a).im, -2.0, epsilon = 0.0);
    assert_abs_diff_eq!(max_abs(&a), 6.0, epsilon = 0.0);
    assert_abs_diff_eq!(op_norm_1(&a), 6.0, epsilon = 1e-15);
    assert_abs_diff_eq!(op_norm_inf(&a), 7.0, epsilon = 1e-15);
    assert_abs_diff_eq!(fro_norm(&a), 62.0f64.sqrt(), epsilon = 1e-15);
}

// ---------------------------------------------------------------------------
// Banded
// ---------------------------------------------------------------------------

fn random_banded(n: usize, kl: usize, ku: usize, rng: &mut ChaCha8Rng) -> Banded {
    let mut b = Banded::zeros(n, kl, ku);
    for j in 0..n {
        let lo = j.saturating_sub(ku);
        let hi = (j + kl + 1).min(n);
        for i in lo..hi {
            b.add(
                i,
                j,
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            );
        }
        // Diagonal dominance keeps the factorization comfortably conditioned.
        b.add(j, j, C64::new(6.0, 0.0));
    }
    b
}

#[test]
fn banded_get_add_and_dense_agree() {
    let mut b = Banded::zeros(4, 1, 2);
    b.add(0, 0, ONE);
    b.add(0, 2, C64::new(2.0, 1.0));
    b.add(3, 2, -ONE);
    b.add(1, 0, C64::new(0.0, 3.0));
    assert_eq!(b.get(0, 2), C64::new(2.0, 1.0));
    assert_eq!(b.get(2, 0), ZERO);
    let d = b.to_dense();
    assert_eq!(d[[3, 2]], -ONE);
    assert_eq!(d[[1, 0]], C64::new(0.0, 3.0));
    assert_eq!(d[[0, 1]], ZERO);
}

#[test]
#[should_panic(expected = "outside band")]
fn banded_add_outside_band_panics() {
    let mut b = Banded::zeros(5, 1, 1);
    b.add(4, 0, ONE);
}

#[test]
fn banded_matvec_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let b = random_banded(30, 3, 5, &mut rng);
    let d = b.to_dense();
    let x: Vec<C64> = (0..30)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut y = vec![ZERO; 30];
    b.matvec(&x, &mut y);
    let xd = Array1::from_vec(x);
    let yd = d.dot(&xd);
    for (a, b) in y.iter().zip(yd.iter()) {
        assert!((a - b).norm() < 1e-13);
    }
}

#[test]
fn identity_minus_scaled_matches_dense_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let b = random_banded(12, 2, 2, &mut rng);
    let c = C64::new(0.3, -0.4);
    let m = b.identity_minus_scaled(c);
    let want = Array2::<C64>::eye(12) - b.to_dense().mapv(|z| c * z);
    assert!(fro_norm(&(&m.to_dense() - &want)) < 1e-14);
}

#[test]
fn gershgorin_bounds_the_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let b = random_banded(16, 2, 3, &mut rng);
    let r = b.gershgorin_radius();
    // Spectral radius of any matrix is bounded by the max absolute row sum.
    let s = spectral_norm(&b.to_dense()).unwrap();
    // spectral norm can exceed spectral radius, so compare against the row-sum
    // norm directly instead.
    assert_abs_diff_eq!(r, op_norm_inf(&b.to_dense()), epsilon = 1e-12);
    assert!(s <= op_norm_1(&b.to_dense()).max(r) * 4.0);
}

#[test]
fn banded_lu_solves_to_small_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let b = random_banded(80, 4, 7, &mut rng);
    let lu = BandedLu::factor(&b).unwrap();
    let rhs: Vec<C64> = (0..80)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut x = rhs.clone();
    lu.solve(&mut x).unwrap();
    // Residual check is independent of any layout convention in the backend.
    let mut ax = vec![ZERO; 80];
    b.matvec(&x, &mut ax);
    let resid: f64 = ax
        .iter()
        .zip(rhs.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    assert!(resid < 1e-10, "residual {resid}");
}

#[test]
fn banded_lu_reused_across_many_rhs() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let b = random_banded(40, 2, 2, &mut rng);
    let lu = BandedLu::factor(&b).unwrap();
    for _ in 0..5 {
        let rhs: Vec<C64> = (0..40)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut x = rhs.clone();
        lu.solve(&mut x).unwrap();
        let mut ax = vec![ZERO; 40];
        b.matvec(&x, &mut ax);
        let resid: f64 = ax
            .iter()
            .zip(rhs.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(resid < 1e-11);
    }
}
