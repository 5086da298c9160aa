//! Coefficient recovery: Chebyshev amplitude design, exact polynomial
//! interpolation with extrapolation to zero amplitude, and discrete Fourier
//! inversion over phase angles.
//!
//! At `alpha = A e^{i theta}` the frequency `f(A, theta) = <alpha|H|alpha>`
//! is a real polynomial `sum_l h_l(theta) A^l` whose coefficients are the
//! Fourier sums `h_l(theta) = sum_j h_{j,l-j} e^{i(l-2j) theta}`.
//! Interpolating over d+1 Chebyshev nodes in A recovers every `h_l(theta)`
//! at machine precision; evaluating level l at the l+1 phases
//! `theta_{u,l} = pi u/(l+1)` and inverting the Fourier sum recovers the
//! coefficients `h_{j,l-j}`. The constant term is gauge-fixed to zero, so
//! the design starts at l = 1. The multivariate path runs the same two
//! stages axis by axis over a tensor grid.
//!
//! Interpolation works in the Chebyshev basis internally (Gauss-Chebyshev
//! quadrature for the basis coefficients) and converts to monomials about
//! zero only at the end; the conversion is the extrapolation step and
//! dominates the noise amplification, which `amplification_rows` reports
//! as exact worst-case row sums.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Interval hypothesis enforced by an [`AmplitudeGrid`].
///
/// The single-mode regime requires `A+ - A- >= 4 A- > 0`; the multivariate
/// regime requires `b - a >= 2` and `b >= 2a > 0` per axis. Both keep the
/// extrapolation distance to zero comparable to the interval length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalRegime {
    SingleMode,
    Multivariate,
}

/// Chebyshev node design on an amplitude interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplitudeGrid {
    pub a_minus: f64,
    pub a_plus: f64,
    /// Polynomial degree in the amplitude; the grid has degree+1 nodes.
    pub degree: usize,
    /// Nodes in the paper's mu order: decreasing from near A+ to near A-.
    pub nodes: Vec<f64>,
    pub regime: IntervalRegime,
}

/// Roots of the degree-(d+1) Chebyshev polynomial mapped to `[a_minus, a_plus]`:
/// `A_mu = (A- + A+)/2 + ((A+ - A-)/2) cos((2 mu - 1) pi / (2d + 2))`.
pub fn chebyshev_nodes(a_minus: f64, a_plus: f64, degree: usize) -> Result<Vec<f64>> {
    if !(a_minus.is_finite() && a_plus.is_finite() && a_plus > a_minus && a_minus >= 0.0) {
        return Err(Error::Config(format!(
            "amplitude interval must satisfy A+ > A- >= 0, got [{a_minus}, {a_plus}]"
        )));
    }
    let mid = 0.5 * (a_minus + a_plus);
    let half = 0.5 * (a_plus - a_minus);
    let n = degree + 1;
    Ok((1..=n)
        .map(|mu| mid + half * ((2 * mu - 1) as f64 * PI / (2 * n) as f64).cos())
        .collect())
}

/// Phase angles for level l: `theta_{u,l} = pi u / (l + 1)`, u = 0..l.
pub fn phase_grid(l: usize) -> Vec<f64> {
    (0..=l).map(|u| PI * u as f64 / (l + 1) as f64).collect()
}

impl AmplitudeGrid {
    /// Grid under the single-mode learning condition `A+ - A- >= 4 A- > 0`.
    pub fn single_mode(a_minus: f64, a_plus: f64, degree: usize) -> Result<AmplitudeGrid> {
        if !(a_minus > 0.0 && a_plus - a_minus >= 4.0 * a_minus) {
            return Err(Error::Config(format!(
                "single-mode interval must satisfy A+ - A- >= 4 A- > 0, got [{a_minus}, {a_plus}]"
            )));
        }
        Ok(AmplitudeGrid {
            a_minus,
            a_plus,
            degree,
            nodes: chebyshev_nodes(a_minus, a_plus, degree)?,
            regime: IntervalRegime::SingleMode,
        })
    }

    /// Grid under the multivariate condition `b - a >= 2`, `b >= 2a > 0`.
    pub fn multivariate(a_minus: f64, a_plus: f64, degree: usize) -> Result<AmplitudeGrid> {
        if !(a_minus > 0.0 && a_plus - a_minus >= 2.0 && a_plus >= 2.0 * a_minus) {
            return Err(Error::Config(format!(
                "multivariate interval must satisfy b - a >= 2 and b >= 2a > 0, got [{a_minus}, {a_plus}]"
            )));
        }
        Ok(AmplitudeGrid {
            a_minus,
            a_plus,
            degree,
            nodes: chebyshev_nodes(a_minus, a_plus, degree)?,
            regime: IntervalRegime::Multivariate,
        })
    }

    /// Worst-case noise amplification per output coefficient: row sums of
    /// the absolute values-to-monomials map, so that node perturbations of
    /// size eps move coefficient l by at most `rows[l] * eps`, with equality
    /// at the worst sign pattern. Row l equals `K_l 2^l / (A+ - A-)^l` in
    /// the normalized error-bound form.
    pub fn amplification_rows(&self) -> Vec<f64> {
        let n = self.degree + 1;
        let mut rows = vec![0.0; n];
        for mu in 0..n {
            let mut unit = vec![C64::new(0.0, 0.0); n];
            unit[mu] = C64::new(1.0, 0.0);
            let coeffs = interp_core(&unit, self.a_minus, self.a_plus);
            for (row, c) in rows.iter_mut().zip(&coeffs) {
                *row += c.norm();
            }
        }
        rows
    }

    /// Largest amplification row: a table accurate to eps yields every
    /// coefficient to `amplification() * eps`.
    pub fn amplification(&self) -> f64 {
        self.amplification_rows()
            .into_iter()
            .fold(f64::MIN, f64::max)
    }
}

/// Values at the grid's Chebyshev nodes to monomial coefficients about 0.
/// Exact for polynomials of degree < values.len() by discrete orthogonality
/// of the Gauss-Chebyshev quadrature.
fn interp_core(values: &[C64], a_minus: f64, a_plus: f64) -> Vec<C64> {
    let n = values.len();
    let zero = C64::new(0.0, 0.0);

    // Chebyshev-basis coefficients: c_k = (2 - delta_{k0})/n sum_mu f_mu cos(k psi_mu)
    let mut cheb = vec![zero; n];
    for (k, c) in cheb.iter_mut().enumerate() {
        let mut acc = zero;
        for (mu, f) in values.iter().enumerate() {
            let psi = (2 * mu + 1) as f64 * PI / (2 * n) as f64;
            acc += f * (k as f64 * psi).cos();
        }
        *c = acc * (if k == 0 { 1.0 } else { 2.0 } / n as f64);
    }

    // q(s) = sum_k c_k T_k(s) in monomials of s via the Chebyshev recurrence
    let mut q = vec![zero; n];
    let mut t_prev = vec![zero; n];
    let mut t_cur = vec![zero; n];
    t_prev[0] = C64::new(1.0, 0.0);
    q[0] += cheb[0];
    if n > 1 {
        t_cur[1] = C64::new(1.0, 0.0);
        q[1] += cheb[1];
    }
    for k in 2..n {
        // T_k = 2 s T_{k-1} - T_{k-2}
        let mut t_next = vec![zero; n];
        for j in 1..n {
            t_next[j] = 2.0 * t_cur[j - 1];
        }
        for j in 0..n {
            t_next[j] -= t_prev[j];
        }
        for j in 0..n {
            q[j] += cheb[k] * t_next[j];
        }
        t_prev = t_cur;
        t_cur = t_next;
    }

    // substitute s = w A + v, w = 2/(A+ - A-), v = -(A+ + A-)/(A+ - A-)
    let w = 2.0 / (a_plus - a_minus);
    let v = -(a_plus + a_minus) / (a_plus - a_minus);
    let mut out = vec![zero; n];
    for k in (0..n).rev() {
        for j in (1..n).rev() {
            out[j] = out[j - 1] * w + out[j] * v;
        }
        out[0] = out[0] * v + q[k];
    }
    out
}

/// Interpolate real values at the interval's Chebyshev nodes into monomial
/// coefficients about 0. The degree is values.len() - 1.
pub fn interpolate_poly(values: &[f64], a_minus: f64, a_plus: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::DimensionMismatch(
            "interpolation needs at least one value".into(),
        ));
    }
    if !(a_minus.is_finite() && a_plus.is_finite() && a_plus > a_minus && a_minus >= 0.0) {
        return Err(Error::Config(format!(
            "amplitude interval must satisfy A+ > A- >= 0, got [{a_minus}, {a_plus}]"
        )));
    }
    let complex: Vec<C64> = values.iter().map(|v| C64::new(*v, 0.0)).collect();
    Ok(interp_core(&complex, a_minus, a_plus)
        .into_iter()
        .map(|c| c.re)
        .collect())
}

/// Invert the level-l Fourier sum: given `h_l(theta_{u,l})` for u = 0..l,
/// return `h_{j,l-j} = (1/(l+1)) sum_u e^{-i theta_{u,l} l} h_l e^{i 2 pi j u/(l+1)}`.
pub fn fourier_invert(values: &[C64], l: usize) -> Result<Vec<C64>> {
    if values.len() != l + 1 {
        return Err(Error::DimensionMismatch(format!(
            "level {l} needs {} phase values, got {}",
            l + 1,
            values.len()
        )));
    }
    let n = (l + 1) as f64;
    let mut out = Vec::with_capacity(l + 1);
    for j in 0..=l {
        let mut acc = C64::new(0.0, 0.0);
        for (u, value) in values.iter().enumerate() {
            let theta = PI * u as f64 / n;
            let phase = C64::new(0.0, -theta * l as f64 + 2.0 * PI * (j * u) as f64 / n).exp();
            acc += phase * value;
        }
        out.push(acc / n);
    }
    Ok(out)
}

/// Tensor product of the axes' node lists, axis 0 slowest.
pub fn multivariate_nodes(axes: &[AmplitudeGrid]) -> Vec<Vec<f64>> {
    let dims: Vec<usize> = axes.iter().map(|g| g.degree + 1).collect();
    cartesian(&dims)
        .into_iter()
        .map(|idx| idx.iter().zip(axes).map(|(i, g)| g.nodes[*i]).collect())
        .collect()
}

/// All index vectors with idx[i] in 0..dims[i], axis 0 slowest.
fn cartesian(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        out.push(idx.clone());
        for axis in (0..dims.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    out
}

fn check_multivariate_axes(axes: &[AmplitudeGrid]) -> Result<()> {
    if axes.is_empty() {
        return Err(Error::Config("at least one amplitude axis required".into()));
    }
    for (nu, g) in axes.iter().enumerate() {
        if !(g.a_minus > 0.0 && g.a_plus - g.a_minus >= 2.0 && g.a_plus >= 2.0 * g.a_minus) {
            return Err(Error::Config(format!(
                "axis {nu} violates the multivariate interval hypothesis \
                 (b - a >= 2, b >= 2a > 0): [{}, {}]",
                g.a_minus, g.a_plus
            )));
        }
    }
    Ok(())
}

/// Tensor-grid interpolation: values over `multivariate_nodes(axes)` in
/// row-major order (axis 0 slowest) to the coefficient tensor of
/// `prod_nu A_nu^{l_nu}` in the same layout. Exact for the multivariate
/// polynomial family of per-axis degree <= degree_nu.
pub fn interpolate_multi(values: &[C64], axes: &[AmplitudeGrid]) -> Result<Vec<C64>> {
    check_multivariate_axes(axes)?;
    let dims: Vec<usize> = axes.iter().map(|g| g.degree + 1).collect();
    let total: usize = dims.iter().product();
    if values.len() != total {
        return Err(Error::DimensionMismatch(format!(
            "tensor grid holds {total} values, got {}",
            values.len()
        )));
    }
    let mut data = values.to_vec();
    for (axis, g) in axes.iter().enumerate() {
        apply_axis(&mut data, &dims, axis, |slice| {
            let out = interp_core(slice, g.a_minus, g.a_plus);
            slice.copy_from_slice(&out);
        });
    }
    Ok(data)
}

/// Apply `f` to every 1-D slice along `axis` of a row-major tensor.
fn apply_axis(data: &mut [C64], dims: &[usize], axis: usize, mut f: impl FnMut(&mut [C64])) {
    let len = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let block = len * stride;
    let mut slice = vec![C64::new(0.0, 0.0); len];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * block + s;
            for (i, v) in slice.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            f(&mut slice);
            for (i, v) in slice.iter().enumerate() {
                data[base + i * stride] = *v;
            }
        }
    }
}

/// Product of per-axis worst-case amplifications; exact for the tensor map
/// because absolute row sums multiply under Kronecker products.
pub fn amplification_multi(axes: &[AmplitudeGrid]) -> f64 {
    axes.iter().map(|g| g.amplification()).product()
}

/// One measured table cell: the frequency estimate plus its accuracy target
/// and ledger share.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub value: f64,
    pub epsilon1: f64,
    pub time: f64,
    pub experiments: u64,
}

impl TableEntry {
    pub fn bare(value: f64) -> TableEntry {
        TableEntry {
            value,
            ..TableEntry::default()
        }
    }
}

/// One cell of the single-mode measurement design.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DesignPoint {
    /// Total degree l = 1..d.
    pub l: usize,
    /// Phase index u = 0..l into `phase_grid(l)`.
    pub u: usize,
    /// Node index mu = 1..d+1 in the paper's decreasing order.
    pub mu: usize,
    pub amplitude: f64,
    pub theta: f64,
}

/// Complete single-mode frequency table over the amplitude x phase design.
#[derive(Clone, Debug)]
pub struct FrequencyTable {
    grid: AmplitudeGrid,
    entries: BTreeMap<(usize, usize, usize), TableEntry>,
}

impl FrequencyTable {
    pub fn new(grid: AmplitudeGrid) -> FrequencyTable {
        FrequencyTable {
            grid,
            entries: BTreeMap::new(),
        }
    }

    pub fn grid(&self) -> &AmplitudeGrid {
        &self.grid
    }

    /// The full design: for each l = 1..d and u = 0..l, all d+1 amplitude
    /// nodes at phase theta_{u,l}. O(d^3) cells.
    pub fn design(&self) -> Vec<DesignPoint> {
        let d = self.grid.degree;
        let mut out = Vec::new();
        for l in 1..=d {
            for (u, theta) in phase_grid(l).into_iter().enumerate() {
                for (idx, amplitude) in self.grid.nodes.iter().enumerate() {
                    out.push(DesignPoint {
                        l,
                        u,
                        mu: idx + 1,
                        amplitude: *amplitude,
                        theta,
                    });
                }
            }
        }
        out
    }

    fn check_key(&self, l: usize, u: usize, mu: usize) -> Result<()> {
        let d = self.grid.degree;
        if l < 1 || l > d || u > l || mu < 1 || mu > d + 1 {
            return Err(Error::Config(format!(
                "table key (l={l}, u={u}, mu={mu}) outside the degree-{d} design"
            )));
        }
        Ok(())
    }

    pub fn insert(&mut self, l: usize, u: usize, mu: usize, entry: TableEntry) -> Result<()> {
        self.check_key(l, u, mu)?;
        self.entries.insert((l, u, mu), entry);
        Ok(())
    }

    pub fn get(&self, l: usize, u: usize, mu: usize) -> Option<&TableEntry> {
        self.entries.get(&(l, u, mu))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        let d = self.grid.degree;
        self.entries.len() == (d + 1) * (d * (d + 3) / 2)
    }

    /// CSV rows `l,u,mu,amplitude,theta,estimate,epsilon1,time,experiments`.
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "l,u,mu,amplitude,theta,estimate,epsilon1,time,experiments")?;
        for ((l, u, mu), e) in &self.entries {
            let amplitude = self.grid.nodes[mu - 1];
            let theta = PI * *u as f64 / (*l + 1) as f64;
            writeln!(
                w,
                "{l},{u},{mu},{amplitude:.17e},{theta:.17e},{:.17e},{:.17e},{:.17e},{}",
                e.value, e.epsilon1, e.time, e.experiments
            )?;
        }
        Ok(())
    }
}

fn missing(key: String) -> Error {
    Error::InvalidState(format!("frequency table is missing entry {key}"))
}

/// Average conjugate pairs so that conj(h[j,j']) == h[j',j] holds exactly.
fn hermitize<K: Ord + Clone>(map: &mut BTreeMap<(K, K), C64>) {
    let keys: Vec<(K, K)> = map.keys().cloned().collect();
    for (j, jp) in keys {
        if (j.clone(), jp.clone()) > (jp.clone(), j.clone()) {
            continue;
        }
        let here = map[&(j.clone(), jp.clone())];
        let there = map[&(jp.clone(), j.clone())];
        let avg = 0.5 * (here + there.conj());
        map.insert((j.clone(), jp.clone()), avg);
        map.insert((jp, j), avg.conj());
    }
}

/// Recover single-mode coefficients from a complete frequency table:
/// interpolate each phase column in the amplitude, extract the level-l
/// monomial coefficient, Fourier-invert each level, then hermitize. The
/// gauge entry (0,0) is returned as zero.
pub fn recover_coefficients(table: &FrequencyTable) -> Result<BTreeMap<(u8, u8), C64>> {
    let d = table.grid.degree;
    let (a_minus, a_plus) = (table.grid.a_minus, table.grid.a_plus);
    let mut out: BTreeMap<(u8, u8), C64> = BTreeMap::new();
    out.insert((0, 0), C64::new(0.0, 0.0));
    for l in 1..=d {
        let mut ring = Vec::with_capacity(l + 1);
        for u in 0..=l {
            let mut column = Vec::with_capacity(d + 1);
            for mu in 1..=d + 1 {
                let entry = table
                    .get(l, u, mu)
                    .ok_or_else(|| missing(format!("(l={l}, u={u}, mu={mu})")))?;
                column.push(entry.value);
            }
            let coeffs = interpolate_poly(&column, a_minus, a_plus)?;
            ring.push(C64::new(coeffs[l], 0.0));
        }
        let recovered = fourier_invert(&ring, l)?;
        for (j, h) in recovered.into_iter().enumerate() {
            out.insert((j as u8, (l - j) as u8), h);
        }
    }
    hermitize(&mut out);
    Ok(out)
}

/// One cell of the multivariate measurement design.
#[derive(Clone, Debug, Serialize)]
pub struct MultiDesignPoint {
    /// Target degree vector, one entry per mode; never all zero.
    pub levels: Vec<usize>,
    /// Phase indices u_nu = 0..l_nu.
    pub phase_idx: Vec<usize>,
    /// Node indices mu_nu = 1..d_nu+1.
    pub node_idx: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub thetas: Vec<f64>,
}

/// Frequency table over the tensor design of a mode cluster.
#[derive(Clone, Debug)]
pub struct MultiFrequencyTable {
    axes: Vec<AmplitudeGrid>,
    entries: BTreeMap<(Vec<usize>, Vec<usize>, Vec<usize>), TableEntry>,
}

impl MultiFrequencyTable {
    pub fn new(axes: Vec<AmplitudeGrid>) -> Result<MultiFrequencyTable> {
        check_multivariate_axes(&axes)?;
        Ok(MultiFrequencyTable {
            axes,
            entries: BTreeMap::new(),
        })
    }

    pub fn axes(&self) -> &[AmplitudeGrid] {
        &self.axes
    }

    /// Degree vectors iterated by the design: every combination except the
    /// all-zero gauge term, axis 0 slowest.
    pub fn level_vectors(&self) -> Vec<Vec<usize>> {
        let dims: Vec<usize> = self.axes.iter().map(|g| g.degree + 1).collect();
        cartesian(&dims)
            .into_iter()
            .filter(|l| l.iter().any(|x| *x > 0))
            .collect()
    }

    pub fn design(&self) -> Vec<MultiDesignPoint> {
        let mut out = Vec::new();
        for levels in self.level_vectors() {
            let phase_dims: Vec<usize> = levels.iter().map(|l| l + 1).collect();
            let node_dims: Vec<usize> = self.axes.iter().map(|g| g.degree + 1).collect();
            for phase_idx in cartesian(&phase_dims) {
                let thetas: Vec<f64> = phase_idx
                    .iter()
                    .zip(&levels)
                    .map(|(u, l)| PI * *u as f64 / (*l + 1) as f64)
                    .collect();
                for node0 in cartesian(&node_dims) {
                    let node_idx: Vec<usize> = node0.iter().map(|i| i + 1).collect();
                    let amplitudes: Vec<f64> = node0
                        .iter()
                        .zip(&self.axes)
                        .map(|(i, g)| g.nodes[*i])
                        .collect();
                    out.push(MultiDesignPoint {
                        levels: levels.clone(),
                        phase_idx: phase_idx.clone(),
                        node_idx,
                        amplitudes,
                        thetas: thetas.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn insert(
        &mut self,
        levels: &[usize],
        phase_idx: &[usize],
        node_idx: &[usize],
        entry: TableEntry,
    ) -> Result<()> {
        let k = self.axes.len();
        if levels.len() != k || phase_idx.len() != k || node_idx.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "table keys need {k} components"
            )));
        }
        if levels.iter().all(|l| *l == 0) {
            return Err(Error::Config("the all-zero level vector is gauge".into()));
        }
        for nu in 0..k {
            if levels[nu] > self.axes[nu].degree
                || phase_idx[nu] > levels[nu]
                || node_idx[nu] < 1
                || node_idx[nu] > self.axes[nu].degree + 1
            {
                return Err(Error::Config(format!(
                    "table key (l={levels:?}, u={phase_idx:?}, mu={node_idx:?}) \
                     outside the design on axis {nu}"
                )));
            }
        }
        self.entries.insert(
            (levels.to_vec(), phase_idx.to_vec(), node_idx.to_vec()),
            entry,
        );
        Ok(())
    }

    pub fn get(
        &self,
        levels: &[usize],
        phase_idx: &[usize],
        node_idx: &[usize],
    ) -> Option<&TableEntry> {
        self.entries
            .get(&(levels.to_vec(), phase_idx.to_vec(), node_idx.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV rows with per-mode columns, mirroring the single-mode format.
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> Result<()> {
        let k = self.axes.len();
        let mut header = String::new();
        for nu in 0..k {
            header.push_str(&format!("l{nu},u{nu},mu{nu},amplitude{nu},theta{nu},"));
        }
        header.push_str("estimate,epsilon1,time,experiments");
        writeln!(w, "{header}")?;
        for ((levels, phase_idx, node_idx), e) in &self.entries {
            let mut row = String::new();
            for nu in 0..k {
                let amplitude = self.axes[nu].nodes[node_idx[nu] - 1];
                let theta = PI * phase_idx[nu] as f64 / (levels[nu] + 1) as f64;
                row.push_str(&format!(
                    "{},{},{},{amplitude:.17e},{theta:.17e},",
                    levels[nu], phase_idx[nu], node_idx[nu]
                ));
            }
            row.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{}",
                e.value, e.epsilon1, e.time, e.experiments
            ));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Recover a mode cluster's coefficients from a complete tensor table.
/// Keys are (j_vec, j'_vec) with j_nu + j'_nu = l_nu per mode; conjugate
/// pairs are averaged so hermiticity holds exactly.
pub fn recover_coefficients_multi(
    table: &MultiFrequencyTable,
) -> Result<BTreeMap<(Vec<u8>, Vec<u8>), C64>> {
    let axes = &table.axes;
    let k = axes.len();
    let node_dims: Vec<usize> = axes.iter().map(|g| g.degree + 1).collect();
    let node_sets = cartesian(&node_dims);
    let mut out: BTreeMap<(Vec<u8>, Vec<u8>), C64> = BTreeMap::new();

    for levels in table.level_vectors() {
        let phase_dims: Vec<usize> = levels.iter().map(|l| l + 1).collect();
        let phase_sets = cartesian(&phase_dims);
        // coefficient of prod A_nu^{l_nu} at each phase vector
        let mut g = Vec::with_capacity(phase_sets.len());
        let coeff_pos: usize = levels
            .iter()
            .zip(&node_dims)
            .fold(0, |acc, (l, dim)| acc * dim + l);
        for phase_idx in &phase_sets {
            let mut block = Vec::with_capacity(node_sets.len());
            for node0 in &node_sets {
                let node_idx: Vec<usize> = node0.iter().map(|i| i + 1).collect();
                let entry = table.get(&levels, phase_idx, &node_idx).ok_or_else(|| {
                    missing(format!(
                        "(l={levels:?}, u={phase_idx:?}, mu={node_idx:?})"
                    ))
                })?;
                block.push(C64::new(entry.value, 0.0));
            }
            let coeffs = interpolate_multi(&block, axes)?;
            g.push(coeffs[coeff_pos]);
        }
        // invert the Fourier sum axis by axis
        for nu in 0..k {
            apply_axis(&mut g, &phase_dims, nu, |slice| {
                let inv = fourier_invert(slice, phase_dims[nu] - 1).expect("slice length matches");
                slice.copy_from_slice(&inv);
            });
        }
        for (pos, j_vec) in cartesian(&phase_dims).into_iter().enumerate() {
            let j: Vec<u8> = j_vec.iter().map(|x| *x as u8).collect();
            let jp: Vec<u8> = j_vec
                .iter()
                .zip(&levels)
                .map(|(x, l)| (l - x) as u8)
                .collect();
            out.insert((j, jp), g[pos]);
        }
    }
    hermitize(&mut out);
    Ok(out)
}
