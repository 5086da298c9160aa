//! Low-intersection bosonic Hamiltonians: sparse normal-ordered coefficient
//! storage, matrix realizations on truncated Fock spaces, closed-form coherent
//! expectations, projected effective Hamiltonians, and the cluster structure
//! that schedules dissipation colors.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation, coherent_state, embed, tensor, FockOperator, FockSpace};
use crate::linalg::{dagger, spectral_norm, C64, ZERO};

/// Coefficient comparisons (hermiticity, magnitude caps) use this tolerance.
pub const COEFF_TOL: f64 = 1e-12;

/// Exponent pair (creation, annihilation) over a term's support modes, normal
/// ordered with all daggers on the left.
pub type IndexPair = (Vec<u8>, Vec<u8>);

/// Monomial key with explicit mode labels, zero exponents dropped. Used to
/// compare Hamiltonians whose term structure differs.
pub type Monomial = (Vec<(usize, u8)>, Vec<(usize, u8)>);

/// One interaction: a support of at most a few modes and the coefficients of
/// the normal-ordered products living on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    support: Vec<usize>,
    coeffs: BTreeMap<IndexPair, C64>,
}

impl Term {
    /// Structural checks only: support strictly increasing, exponent vectors
    /// sized to the support, and no constant key. The constant is a global
    /// phase no experiment can see, so it is rejected rather than diagnosed.
    pub fn new(support: Vec<usize>, coeffs: BTreeMap<IndexPair, C64>) -> Result<Self> {
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidHamiltonian(
                "term support must be strictly increasing".into(),
            ));
        }
        let mut kept = BTreeMap::new();
        for ((j, jp), h) in coeffs {
            if j.len() != support.len() || jp.len() != support.len() {
                return Err(Error::InvalidHamiltonian(format!(
                    "exponent vectors must have length {}",
                    support.len()
                )));
            }
            let order: u32 = j.iter().chain(jp.iter()).map(|&e| e as u32).sum();
            if order == 0 {
                if h.norm() > 0.0 {
                    return Err(Error::InvalidHamiltonian(
                        "constant term (all exponents zero) is not representable".into(),
                    ));
                }
                continue;
            }
            if h.norm() > 0.0 {
                kept.insert((j, jp), h);
            }
        }
        Ok(Term {
            support,
            coeffs: kept,
        })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn coeffs(&self) -> &BTreeMap<IndexPair, C64> {
        &self.coeffs
    }

    /// Largest total exponent over stored keys.
    pub fn degree(&self) -> usize {
        self.coeffs
            .keys()
            .map(|(j, jp)| j.iter().chain(jp.iter()).map(|&e| e as usize).sum())
            .max()
            .unwrap_or(0)
    }
}

/// Validation report; construction never fails on physics-level problems so
/// that diagnostics can describe broken inputs.
#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub issues: Vec<String>,
    pub overlap_counts: Vec<usize>,
    pub max_overlap: usize,
}

impl Diagnostics {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HamiltonianModel", into = "HamiltonianModel")]
pub struct BosonicHamiltonian {
    modes: usize,
    max_degree: usize,
    max_support: usize,
    terms: Vec<Term>,
}

impl BosonicHamiltonian {
    pub fn new(
        modes: usize,
        max_degree: usize,
        max_support: usize,
        terms: Vec<Term>,
    ) -> Result<Self> {
        if modes == 0 || max_degree == 0 || max_support == 0 {
            return Err(Error::InvalidHamiltonian(
                "mode count, degree bound, and support bound must be positive".into(),
            ));
        }
        for t in &terms {
            if let Some(&q) = t.support.iter().find(|&&q| q >= modes) {
                return Err(Error::InvalidHamiltonian(format!(
                    "term touches mode {q} but only {modes} modes exist"
                )));
            }
        }
        Ok(BosonicHamiltonian {
            modes,
            max_degree,
            max_support,
            terms,
        })
    }

    /// One mode, one term on it.
    pub fn single_mode(
        max_degree: usize,
        coeffs: impl IntoIterator<Item = ((u8, u8), C64)>,
    ) -> Result<Self> {
        let map = coeffs
            .into_iter()
            .map(|((j, jp), h)| ((vec![j], vec![jp]), h))
            .collect();
        Self::new(1, max_degree, 1, vec![Term::new(vec![0], map)?])
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn max_support(&self) -> usize {
        self.max_support
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Coefficient of a single-mode monomial; zero when absent. Sums across
    /// terms so duplicated supports behave like their physical sum.
    pub fn single_coeff(&self, j: u8, jp: u8) -> C64 {
        let key: Monomial = (
            if j > 0 { vec![(0, j)] } else { vec![] },
            if jp > 0 { vec![(0, jp)] } else { vec![] },
        );
        self.monomials().get(&key).copied().unwrap_or(ZERO)
    }

    /// All coefficients keyed by mode-labeled monomials, summed across terms.
    pub fn monomials(&self) -> BTreeMap<Monomial, C64> {
        let mut out: BTreeMap<Monomial, C64> = BTreeMap::new();
        for t in &self.terms {
            for ((j, jp), &h) in &t.coeffs {
                let label = |exps: &[u8]| {
                    t.support
                        .iter()
                        .zip(exps)
                        .filter(|(_, &e)| e > 0)
                        .map(|(&q, &e)| (q, e))
                        .collect::<Vec<_>>()
                };
                *out.entry((label(j), label(jp))).or_insert(ZERO) += h;
            }
        }
        out.retain(|_, v| v.norm() > 0.0);
        out
    }

    /// Largest coefficient difference against another Hamiltonian, over the
    /// union of monomials. This is the error metric the learning targets.
    pub fn coefficient_distance(&self, other: &BosonicHamiltonian) -> f64 {
        let a = self.monomials();
        let b = other.monomials();
        let mut worst = 0.0_f64;
        for (k, &v) in &a {
            worst = worst.max((v - b.get(k).copied().unwrap_or(ZERO)).norm());
        }
        for (k, &v) in &b {
            if !a.contains_key(k) {
                worst = worst.max(v.norm());
            }
        }
        worst
    }

    pub fn validate(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        for (a, t) in self.terms.iter().enumerate() {
            if t.support.len() > self.max_support {
                d.issues.push(format!(
                    "term {a}: support size {} exceeds bound {}",
                    t.support.len(),
                    self.max_support
                ));
            }
            if t.degree() > self.max_degree {
                d.issues.push(format!(
                    "term {a}: degree {} exceeds bound {}",
                    t.degree(),
                    self.max_degree
                ));
            }
            for ((j, jp), &h) in &t.coeffs {
                if h.norm() > 1.0 + COEFF_TOL {
                    d.issues
                        .push(format!("term {a}: |h{:?},{:?}| = {} > 1", j, jp, h.norm()));
                }
                let mirror = t.coeffs.get(&(jp.clone(), j.clone())).copied();
                let want = h.conj();
                if mirror.map_or(true, |m| (m - want).norm() > COEFF_TOL) {
                    d.issues.push(format!(
                        "term {a}: hermitian partner of {:?},{:?} missing or wrong",
                        j, jp
                    ));
                }
            }
        }
        // Overlap counts: how many other terms share a mode with each term.
        d.overlap_counts = self
            .terms
            .iter()
            .enumerate()
            .map(|(a, t)| {
                self.terms
                    .iter()
                    .enumerate()
                    .filter(|(b, u)| *b != a && intersects(&t.support, &u.support))
                    .count()
            })
            .collect();
        d.max_overlap = d.overlap_counts.iter().copied().max().unwrap_or(0);
        d
    }

    /// Validation as a gate.
    pub fn validated(self) -> Result<Self> {
        let d = self.validate();
        if d.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidHamiltonian(d.issues.join("; ")))
        }
    }

    /// Dense matrix realization. With `restrict_to`, only terms fully inside
    /// the subset survive and `space` describes just those modes in order;
    /// that is the cluster Hamiltonian of the subset.
    pub fn to_operator(
        &self,
        space: &FockSpace,
        restrict_to: Option<&[usize]>,
    ) -> Result<FockOperator> {
        let map: Vec<usize> = match restrict_to {
            None => {
                if space.modes() != self.modes {
                    return Err(Error::Config(format!(
                        "space has {} modes, Hamiltonian has {}",
                        space.modes(),
                        self.modes
                    )));
                }
                (0..self.modes).collect()
            }
            Some(subset) => {
                if subset.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("restriction must be strictly increasing".into()));
                }
                if subset.iter().any(|&q| q >= self.modes) {
                    return Err(Error::Config("restriction names a missing mode".into()));
                }
                if space.modes() != subset.len() {
                    return Err(Error::Config(format!(
                        "space has {} modes, restriction has {}",
                        space.modes(),
                        subset.len()
                    )));
                }
                subset.to_vec()
            }
        };
        // position of each global mode inside the (restricted) space
        let local_of = |q: usize| map.iter().position(|&g| g == q);

        let mut acc = FockOperator::zeros(space);
        let mut cache: BTreeMap<(usize, u8, u8), FockOperator> = BTreeMap::new();
        for t in &self.terms {
            let locals: Option<Vec<usize>> = t.support.iter().map(|&q| local_of(q)).collect();
            let Some(locals) = locals else { continue };
            for ((j, jp), &h) in &t.coeffs {
                let mut factors = Vec::with_capacity(locals.len());
                for (p, &lq) in locals.iter().enumerate() {
                    let dim = space.dim(lq);
                    let op = cache
                        .entry((dim, j[p], jp[p]))
                        .or_insert_with(|| {
                            let single = FockSpace::single(dim).expect("dim >= 2");
                            let b = annihilation(&single, 0).expect("mode 0");
                            b.dagger().pow(j[p] as usize).dot(&b.pow(jp[p] as usize))
                        })
                        .clone();
                    factors.push(op);
                }
                let refs: Vec<&FockOperator> = factors.iter().collect();
                let small = tensor(&refs)?;
                let big = embed(&small, space, &locals)?;
                acc = acc.add(&big.scale(h));
            }
        }
        Ok(acc)
    }

    /// Closed-form single-mode coherent expectation, no truncation involved.
    /// Real up to rounding for hermitian coefficients.
    pub fn coherent_expectation(&self, alpha: C64) -> Result<C64> {
        if self.modes != 1 {
            return Err(Error::Config(
                "multi-mode Hamiltonian: use coherent_expectation_multi".into(),
            ));
        }
        Ok(self.coherent_sum(&[alpha]))
    }

    /// Closed-form coherent expectation with one amplitude per mode. The
    /// hermitian key pairs cancel the imaginary part exactly; what remains is
    /// rounding.
    pub fn coherent_expectation_multi(&self, alphas: &[C64]) -> Result<f64> {
        if alphas.len() != self.modes {
            return Err(Error::Config(format!(
                "{} amplitudes for {} modes",
                alphas.len(),
                self.modes
            )));
        }
        Ok(self.coherent_sum(alphas).re)
    }

    fn coherent_sum(&self, alphas: &[C64]) -> C64 {
        let mut total = ZERO;
        for t in &self.terms {
            for ((j, jp), &h) in &t.coeffs {
                let mut factor = C64::new(1.0, 0.0);
                for (p, &q) in t.support.iter().enumerate() {
                    factor *= alphas[q].conj().powu(j[p] as u32) * alphas[q].powu(jp[p] as u32);
                }
                total += h * factor;
            }
        }
        total
    }

    /// Effective Hamiltonian in the per-mode {vacuum, displaced} basis, plus
    /// its diagonal closed-form approximation and their spectral distance.
    pub fn projected(
        &self,
        alphas: &[C64],
        space: &FockSpace,
        leak_tol: f64,
    ) -> Result<ProjectedHamiltonian> {
        if alphas.len() != self.modes || space.modes() != self.modes {
            return Err(Error::Config(
                "projection needs one amplitude per mode of the space".into(),
            ));
        }
        let basis = projection_basis(space, alphas, leak_tol)?;
        let hmat = self.to_operator(space, None)?;
        let h_proj = dagger(&basis).dot(&hmat.matrix().dot(&basis));
        let nb = basis.dim().1;
        let mut h_diag: Array2<C64> = Array2::zeros((nb, nb));
        for u in 0..nb {
            let masked: Vec<C64> = (0..self.modes)
                .map(|q| if basis_bit(u, q, self.modes) { alphas[q] } else { ZERO })
                .collect();
            h_diag[[u, u]] = C64::new(self.coherent_expectation_multi(&masked)?, 0.0);
        }
        let deviation = spectral_norm(&(&h_proj - &h_diag))?;
        Ok(ProjectedHamiltonian {
            basis,
            h_proj,
            h_diag,
            deviation,
        })
    }

    /// Maximal supports: any support contained in another is dropped, equal
    /// supports collapse to one. Deterministic order.
    pub fn interacting_clusters(&self) -> Vec<Vec<usize>> {
        let mut supports: Vec<Vec<usize>> = self.terms.iter().map(|t| t.support.clone()).collect();
        supports.sort();
        supports.dedup();
        let dominated: Vec<bool> = supports
            .iter()
            .map(|s| {
                supports
                    .iter()
                    .any(|t| t.len() > s.len() && is_subset(s, t))
            })
            .collect();
        supports
            .into_iter()
            .zip(dominated)
            .filter(|(_, dom)| !dom)
            .map(|(s, _)| s)
            .collect()
    }

    /// Cluster Hamiltonian on its own index space: terms inside `subset`,
    /// modes relabeled 0..subset.len().
    pub fn restricted(&self, subset: &[usize]) -> Result<BosonicHamiltonian> {
        if subset.is_empty() || subset.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("restriction must be strictly increasing".into()));
        }
        let mut terms = Vec::new();
        for t in &self.terms {
            if !is_subset(&t.support, subset) {
                continue;
            }
            let remapped: Vec<usize> = t
                .support
                .iter()
                .map(|&q| subset.iter().position(|&g| g == q).expect("subset member"))
                .collect();
            terms.push(Term {
                support: remapped,
                coeffs: t.coeffs.clone(),
            });
        }
        BosonicHamiltonian::new(subset.len(), self.max_degree, self.max_support, terms)
    }

    /// Random hermitian coefficients on the given supports, every |h| <=
    /// `scale`. Diagonal keys are drawn real.
    pub fn random<R: Rng + ?Sized>(
        modes: usize,
        max_degree: usize,
        max_support: usize,
        supports: &[Vec<usize>],
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut terms = Vec::new();
        for support in supports {
            let s = support.len();
            let mut coeffs: BTreeMap<IndexPair, C64> = BTreeMap::new();
            for j in exponent_vectors(s, max_degree) {
                let used: usize = j.iter().map(|&e| e as usize).sum();
                for jp in exponent_vectors(s, max_degree - used) {
                    let key = (j.clone(), jp.clone());
                    let mirror = (jp.clone(), j.clone());
                    if used + jp.iter().map(|&e| e as usize).sum::<usize>() == 0
                        || coeffs.contains_key(&key)
                    {
                        continue;
                    }
                    let h = if key == mirror {
                        C64::new(rng.random_range(-scale..scale), 0.0)
                    } else {
                        // uniform on the disc of radius `scale`
                        let r = scale * rng.random_range(0.0..1.0_f64).sqrt();
                        let th = rng.random_range(0.0..std::f64::consts::TAU);
                        C64::new(r * th.cos(), r * th.sin())
                    };
                    coeffs.insert(key, h);
                    coeffs.insert(mirror, h.conj());
                }
            }
            terms.push(Term::new(support.clone(), coeffs)?);
        }
        BosonicHamiltonian::new(modes, max_degree, max_support, terms)
    }

    pub fn random_single_mode<R: Rng + ?Sized>(
        max_degree: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        Self::random(1, max_degree, 1, &[vec![0]], scale, rng).expect("valid by construction")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(file)?)
    }
}

/// Whether basis state `u` has the displaced component on mode `q`; mode 0 is
/// the most significant bit, matching the tensor-product ordering.
pub fn basis_bit(u: usize, q: usize, modes: usize) -> bool {
    (u >> (modes - 1 - q)) & 1 == 1
}

/// Columns are the orthonormalized tensor products of per-mode
/// {vacuum, normalized displaced-minus-vacuum} vectors.
pub fn projection_basis(
    space: &FockSpace,
    alphas: &[C64],
    leak_tol: f64,
) -> Result<Array2<C64>> {
    let modes = space.modes();
    if alphas.len() != modes {
        return Err(Error::Config("one amplitude per mode".into()));
    }
    let mut pairs: Vec<(Array1<C64>, Array1<C64>)> = Vec::with_capacity(modes);
    for q in 0..modes {
        let dim = space.dim(q);
        let single = FockSpace::single(dim)?;
        let coh = coherent_state(&single, &[alphas[q]], leak_tol)?;
        let coh = coh.as_ket().expect("coherent states are kets").to_owned();
        let mut e0: Array1<C64> = Array1::zeros(dim);
        e0[0] = C64::new(1.0, 0.0);
        let mut psi1 = &coh - &(&e0 * coh[0]);
        let norm = psi1.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::InvalidState(format!(
                "displaced basis vector on mode {q} is degenerate (alpha too small)"
            )));
        }
        psi1.mapv_inplace(|z| z / norm);
        pairs.push((e0, psi1));
    }
    let nb = 1usize << modes;
    let mut basis: Array2<C64> = Array2::zeros((space.total_dim(), nb));
    for u in 0..nb {
        let mut col: Array1<C64> = Array1::from_elem(1, C64::new(1.0, 0.0));
        for (q, pair) in pairs.iter().enumerate() {
            let v = if basis_bit(u, q, modes) { &pair.1 } else { &pair.0 };
            col = kron_ket(&col, v);
        }
        basis.column_mut(u).assign(&col);
    }
    // One modified Gram-Schmidt pass absorbs truncation-level rounding.
    for k in 0..nb {
        for j in 0..k {
            let proj: C64 = basis
                .column(j)
                .iter()
                .zip(basis.column(k).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let prev = basis.column(j).to_owned();
            basis
                .column_mut(k)
                .zip_mut_with(&prev, |x, &p| *x -= proj * p);
        }
        let norm = basis.column(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        basis.column_mut(k).mapv_inplace(|z| z / norm);
    }
    Ok(basis)
}

fn kron_ket(a: &Array1<C64>, b: &Array1<C64>) -> Array1<C64> {
    let mut out = Array1::zeros(a.len() * b.len());
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i * b.len() + j] = x * y;
        }
    }
    out
}

/// Projection of a Hamiltonian onto the dissipation-stabilized subspace.
#[derive(Clone, Debug)]
pub struct ProjectedHamiltonian {
    basis: Array2<C64>,
    h_proj: Array2<C64>,
    h_diag: Array2<C64>,
    deviation: f64,
}

impl ProjectedHamiltonian {
    /// Basis columns in the full truncated space.
    pub fn basis(&self) -> &Array2<C64> {
        &self.basis
    }

    /// Exact projection, expressed in the basis.
    pub fn matrix(&self) -> &Array2<C64> {
        &self.h_proj
    }

    /// Diagonal of closed-form coherent expectations.
    pub fn diagonal_approximation(&self) -> &Array2<C64> {
        &self.h_diag
    }

    /// Spectral norm of (exact - diagonal approximation).
    pub fn deviation(&self) -> f64 {
        self.deviation
    }
}

// ---------------------------------------------------------------------------
// Cluster graph
// ---------------------------------------------------------------------------

/// Clusters with the overlap-or-common-neighbor adjacency. Two clusters are
/// adjacent when they intersect or when some third cluster intersects both,
/// so a proper coloring separates clusters to distance three in the
/// intersection graph.
#[derive(Clone, Debug)]
pub struct ClusterGraph {
    clusters: Vec<Vec<usize>>,
    adjacency: Vec<Vec<usize>>,
    coloring: Option<Vec<usize>>,
}

impl ClusterGraph {
    pub fn new(mut clusters: Vec<Vec<usize>>) -> Self {
        clusters.sort();
        clusters.dedup();
        let n = clusters.len();
        let meets: Vec<Vec<bool>> = (0..n)
            .map(|u| {
                (0..n)
                    .map(|v| u != v && intersects(&clusters[u], &clusters[v]))
                    .collect()
            })
            .collect();
        let mut adjacency = vec![Vec::new(); n];
        for u in 0..n {
            for v in (u + 1)..n {
                let direct = meets[u][v];
                let via = (0..n).any(|w| w != u && w != v && meets[u][w] && meets[v][w]);
                if direct || via {
                    adjacency[u].push(v);
                    adjacency[v].push(u);
                }
            }
        }
        ClusterGraph {
            clusters,
            adjacency,
            coloring: None,
        }
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn coloring(&self) -> Option<&[usize]> {
        self.coloring.as_deref()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Greedy coloring in descending-degree order (ties by index); uses at
    /// most max_degree + 1 colors and is deterministic.
    pub fn greedy_color(&mut self) -> &[usize] {
        let n = self.clusters.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&u| (std::cmp::Reverse(self.adjacency[u].len()), u));
        let mut colors = vec![usize::MAX; n];
        for &u in &order {
            let taken: Vec<usize> = self.adjacency[u]
                .iter()
                .map(|&v| colors[v])
                .filter(|&c| c != usize::MAX)
                .collect();
            let mut c = 0;
            while taken.contains(&c) {
                c += 1;
            }
            colors[u] = c;
        }
        self.coloring = Some(colors);
        self.coloring.as_deref().expect("just set")
    }

    /// Number of colors in the stored coloring.
    pub fn color_count(&self) -> usize {
        self.coloring
            .as_ref()
            .map(|c| c.iter().copied().max().map_or(0, |m| m + 1))
            .unwrap_or(0)
    }

    /// Direct statement of the separation requirement: same-colored clusters
    /// are disjoint and no third cluster intersects both.
    pub fn coloring_is_valid(&self) -> bool {
        let Some(colors) = &self.coloring else {
            return false;
        };
        let n = self.clusters.len();
        for u in 0..n {
            for v in (u + 1)..n {
                if colors[u] != colors[v] {
                    continue;
                }
                if intersects(&self.clusters[u], &self.clusters[v]) {
                    return false;
                }
                let common = (0..n).any(|w| {
                    w != u
                        && w != v
                        && intersects(&self.clusters[u], &self.clusters[w])
                        && intersects(&self.clusters[v], &self.clusters[w])
                });
                if common {
                    return false;
                }
            }
        }
        true
    }
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    // both sorted
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// All exponent vectors of the given length with total at most `budget`.
fn exponent_vectors(len: usize, budget: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; len];
    fn rec(p: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if p == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[p] = e as u8;
            rec(p + 1, left - e, cur, out);
        }
        cur[p] = 0;
    }
    rec(0, budget, &mut cur, &mut out);
    out
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CoeffEntry {
    j: Vec<u8>,
    jp: Vec<u8>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct TermModel {
    support: Vec<usize>,
    coeffs: Vec<CoeffEntry>,
}

#[derive(Serialize, Deserialize)]
struct HamiltonianModel {
    m: usize,
    d: usize,
    k: usize,
    terms: Vec<TermModel>,
}

impl From<BosonicHamiltonian> for HamiltonianModel {
    fn from(h: BosonicHamiltonian) -> Self {
        HamiltonianModel {
            m: h.modes,
            d: h.max_degree,
            k: h.max_support,
            terms: h
                .terms
                .into_iter()
                .map(|t| TermModel {
                    support: t.support,
                    coeffs: t
                        .coeffs
                        .into_iter()
                        .map(|((j, jp), c)| CoeffEntry {
                            j,
                            jp,
                            re: c.re,
                            im: c.im,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<HamiltonianModel> for BosonicHamiltonian {
    type Error = Error;

    fn try_from(m: HamiltonianModel) -> Result<Self> {
        let terms = m
            .terms
            .into_iter()
            .map(|t| {
                let coeffs = t
                    .coeffs
                    .into_iter()
                    .map(|e| ((e.j, e.jp), C64::new(e.re, e.im)))
                    .collect();
                Term::new(t.support, coeffs)
            })
            .collect::<Result<Vec<_>>>()?;
        BosonicHamiltonian::new(m.m, m.d, m.k, terms)
    }
}
