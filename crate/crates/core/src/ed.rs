//! Dense exact-diagonalization reference for small chains.
//!
//! Basis states are indexed as `Σ_i s_i 3^{N−i}` (site 1 most significant),
//! the same ordering as the Kronecker embedding. Because every Hamiltonian
//! here commutes with the parity `P = ∏ τ_j`, the fast paths work inside the
//! three charge sectors `Σ_i s_i mod 3`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{dual_parafermion, parafermion, parity, ChainGeometry, Omega, OperatorString};
use crate::error::{Error, Result};
use faer::Scale;

use crate::linalg::{eigh, frobenius, hermitian_residual, kron, CMat, C64, ZERO};
use crate::model::{AlternatingModelParams, BondTermSet, ModelParams};

/// Largest chain handled densely unless a caller raises the cap.
pub const DEFAULT_SPIN_CAP: usize = 8;

/// Minimum number of levels for spacing statistics.
pub const MIN_LEVELS: usize = 50;

/// Relative tolerance for grouping resonant energy differences.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub matrix: CMat,
    pub n_spins: usize,
}

impl DenseOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn check_cap(n_spins: usize, cap: usize) -> Result<()> {
    if n_spins > cap {
        return Err(Error::CapExceeded { n_spins, cap });
    }
    Ok(())
}

fn pow3(n: usize) -> usize {
    3usize.pow(n as u32)
}

/// Kronecker-product realization of an operator string.
pub fn dense_embed(s: &OperatorString, cap: usize) -> Result<DenseOperator> {
    check_cap(s.n_sites(), cap)?;
    let mut m = CMat::from_fn(1, 1, |_, _| s.phase());
    for site in 1..=s.n_sites() {
        m = kron(m.as_ref(), s.local(site).to_mat().as_ref());
    }
    Ok(DenseOperator { matrix: m, n_spins: s.n_sites() })
}

/// Sum of bond blocks embedded on the full chain.
pub fn dense_embed_terms(terms: &BondTermSet, cap: usize) -> Result<DenseOperator> {
    let n = terms.n_spins();
    check_cap(n, cap)?;
    let d = pow3(n);
    let mut m = CMat::zeros(d, d);
    for b in 1..n {
        let h = terms.bond(b);
        let low = pow3(n - b - 1);
        let high = pow3(b - 1);
        for pre in 0..high {
            for post in 0..low {
                let base = pre * 9 * low + post;
                for r in 0..9 {
                    for c in 0..9 {
                        let z = h[(r, c)];
                        if z != ZERO {
                            m[(base + r * low, base + c * low)] += z;
                        }
                    }
                }
            }
        }
    }
    Ok(DenseOperator { matrix: m, n_spins: n })
}

/// Hamiltonian assembled directly from products of parafermion strings,
/// independent of the clock-form bond blocks.
pub fn dense_hamiltonian(params: &ModelParams, cap: usize) -> Result<DenseOperator> {
    params.validate()?;
    let geom = params.geometry()?;
    let n = geom.n_spins();
    check_cap(n, cap)?;
    let d = pow3(n);
    let mut h = CMat::zeros(d, d);
    for (c, a, b) in params.parafermion_terms() {
        let term = parafermion(a, geom)?.dagger().mul(&parafermion(b, geom)?)?;
        let t = dense_embed(&term, cap)?.matrix * Scale(c);
        h += &t + t.adjoint();
    }
    Ok(DenseOperator { matrix: h, n_spins: n })
}

fn check_hermitian(h: &DenseOperator) -> Result<()> {
    let r = hermitian_residual(h.matrix.as_ref());
    if r > 1e-10 * frobenius(h.matrix.as_ref()).max(1.0) {
        return Err(Error::NotHermitian(r));
    }
    Ok(())
}

/// `e^{iHt} · op · e^{−iHt}` through the eigendecomposition of `H`.
pub fn heisenberg_exact(op: &DenseOperator, h: &DenseOperator, t: f64) -> Result<DenseOperator> {
    check_hermitian(h)?;
    let (vals, vecs) = eigh(h.matrix.as_ref())?;
    let u = crate::linalg::scaled_by_spectrum(&vecs, &vals, |e| C64::from_polar(1.0, e * t));
    Ok(DenseOperator { matrix: &u * &op.matrix * u.adjoint(), n_spins: op.n_spins })
}

/// Computational basis split into Z3 charge sectors.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    n_spins: usize,
    states: [Vec<usize>; 3],
    position: Vec<usize>,
}

impl SectorBasis {
    pub fn new(n_spins: usize) -> Self {
        let d = pow3(n_spins);
        let mut states: [Vec<usize>; 3] = Default::default();
        let mut position = vec![0; d];
        for x in 0..d {
            let q = Self::charge_of(x);
            position[x] = states[q].len();
            states[q].push(x);
        }
        Self { n_spins, states, position }
    }

    pub fn charge_of(mut x: usize) -> usize {
        let mut q = 0;
        while x > 0 {
            q += x % 3;
            x /= 3;
        }
        q % 3
    }

    pub fn states(&self, q: usize) -> &[usize] {
        &self.states[q]
    }

    pub fn dim(&self) -> usize {
        pow3(self.n_spins)
    }

    fn digit(&self, x: usize, site: usize) -> usize {
        (x / pow3(self.n_spins - site)) % 3
    }

    fn with_digit(&self, x: usize, site: usize, d: usize) -> usize {
        let p = pow3(self.n_spins - site);
        x - self.digit(x, site) * p + d * p
    }

    /// `s|x⟩` as a sparse list of `(y, amplitude)`.
    fn apply_string(&self, s: &OperatorString, x: usize) -> Vec<(usize, C64)> {
        let mut out = vec![(x, s.phase())];
        for (&site, op) in s.factors() {
            let mut next = Vec::with_capacity(out.len());
            for (y, amp) in out {
                let d = self.digit(y, site);
                for r in 0..3 {
                    let z = op.entry(r, d);
                    if z != ZERO {
                        next.push((self.with_digit(y, site, r), amp * z));
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Block of a definite-charge string mapping sector `q` to `q + charge`.
    fn string_block(&self, s: &OperatorString, charge: usize, q: usize) -> CMat {
        let target = (q + charge) % 3;
        let mut m = CMat::zeros(self.states[target].len(), self.states[q].len());
        for (col, &x) in self.states[q].iter().enumerate() {
            for (y, amp) in self.apply_string(s, x) {
                m[(self.position[y], col)] += amp;
            }
        }
        m
    }
}

/// Eigenvalues (and optionally eigenvectors in the computational basis of the
/// sector) of one parity sector. `label` q stands for the parity eigenvalue ω^q.
#[derive(Clone, Debug)]
pub struct SectorSpectrum {
    pub label: u8,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<CMat>,
}

/// Sector-resolved eigensystem of a parity-conserving Hamiltonian.
#[derive(Clone, Debug)]
pub struct ExactDynamics {
    basis: SectorBasis,
    vals: [Vec<f64>; 3],
    vecs: [CMat; 3],
}

/// An operator of definite charge `c` in the energy eigenbasis:
/// `blocks[q]` maps sector `q` to sector `q + c`.
#[derive(Clone, Debug)]
pub struct EigenOperator {
    charge: usize,
    blocks: [CMat; 3],
}

impl ExactDynamics {
    fn from_blocks(basis: SectorBasis, blocks: [CMat; 3]) -> Result<Self> {
        let [d0, d1, d2] = blocks.map(|b| eigh(b.as_ref()));
        let ((e0, v0), (e1, v1), (e2, v2)) = (d0?, d1?, d2?);
        Ok(Self { basis, vals: [e0, e1, e2], vecs: [v0, v1, v2] })
    }

    /// Builds sector blocks straight from bond terms, never forming the full
    /// matrix.
    pub fn from_terms(terms: &BondTermSet, cap: usize) -> Result<Self> {
        let n = terms.n_spins();
        check_cap(n, cap)?;
        if !terms.conserves_parity() {
            return Err(Error::ParityBroken(f64::NAN));
        }
        let basis = SectorBasis::new(n);
        let blocks = [0, 1, 2].map(|q| {
            let states = basis.states(q);
            let mut m = CMat::zeros(states.len(), states.len());
            for (col, &x) in states.iter().enumerate() {
                for b in 1..n {
                    let h = terms.bond(b);
                    let c = 3 * basis.digit(x, b) + basis.digit(x, b + 1);
                    for r in 0..9 {
                        let z = h[(r, c)];
                        if z != ZERO {
                            let y = basis.with_digit(basis.with_digit(x, b, r / 3), b + 1, r % 3);
                            m[(basis.position[y], col)] += z;
                        }
                    }
                }
            }
            m
        });
        Self::from_blocks(basis, blocks)
    }

    pub fn from_params(params: &ModelParams, cap: usize) -> Result<Self> {
        Self::from_terms(&params.bond_terms()?, cap)
    }

    pub fn from_dense(h: &DenseOperator) -> Result<Self> {
        check_hermitian(h)?;
        let basis = SectorBasis::new(h.n_spins);
        let r = parity_residual(h, &basis);
        if r > 1e-10 {
            return Err(Error::ParityBroken(r));
        }
        let blocks = [0, 1, 2].map(|q| {
            let s = basis.states(q);
            CMat::from_fn(s.len(), s.len(), |i, j| h.matrix[(s[i], s[j])])
        });
        Self::from_blocks(basis, blocks)
    }

    pub fn n_spins(&self) -> usize {
        self.basis.n_spins
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn geometry(&self) -> ChainGeometry {
        ChainGeometry::from_spins(self.n_spins()).expect("at least one spin")
    }

    pub fn energies(&self, q: usize) -> &[f64] {
        &self.vals[q]
    }

    pub fn spectrum(&self, with_vectors: bool) -> Vec<SectorSpectrum> {
        (0..3)
            .map(|q| SectorSpectrum {
                label: q as u8,
                eigenvalues: self.vals[q].clone(),
                eigenvectors: with_vectors.then(|| self.vecs[q].clone()),
            })
            .collect()
    }

    pub fn operator(&self, s: &OperatorString) -> Result<EigenOperator> {
        if s.n_sites() != self.n_spins() {
            return Err(Error::Precondition("operator and Hamiltonian sizes differ".into()));
        }
        let charge = s
            .charge()
            .ok_or_else(|| Error::Precondition("operator has no definite Z3 charge".into()))?
            as usize;
        let blocks = [0, 1, 2].map(|q| {
            let raw = self.basis.string_block(s, charge, q);
            self.vecs[(q + charge) % 3].adjoint() * raw * &self.vecs[q]
        });
        Ok(EigenOperator { charge, blocks })
    }

    fn evolved_block(&self, op: &EigenOperator, q: usize, t: f64) -> CMat {
        let b = &op.blocks[q];
        if t == 0.0 {
            return b.clone();
        }
        let (eo, ei) = (&self.vals[(q + op.charge) % 3], &self.vals[q]);
        CMat::from_fn(b.nrows(), b.ncols(), |m, n| b[(m, n)] * C64::from_polar(1.0, (eo[m] - ei[n]) * t))
    }

    /// `⟨A†(ta) B†(tb) A(ta) B(tb)⟩ = Tr(·)/3^N`.
    pub fn four_point(&self, a: &EigenOperator, ta: f64, b: &EigenOperator, tb: f64) -> C64 {
        let ab: [CMat; 3] = [0, 1, 2].map(|q| self.evolved_block(a, q, ta));
        let bb: [CMat; 3] = [0, 1, 2].map(|q| self.evolved_block(b, q, tb));
        let mut total = ZERO;
        for q in 0..3 {
            let x = &bb[(q + a.charge) % 3] * &ab[q];
            let y = &ab[(q + b.charge) % 3] * &bb[q];
            for j in 0..x.ncols() {
                for i in 0..x.nrows() {
                    total += x[(i, j)].conj() * y[(i, j)];
                }
            }
        }
        total / self.dim() as f64
    }

    /// `F_{j,k}(t)` including the `ω^{sgn(j−k)}` factor.
    pub fn otoc(&self, j: usize, k: usize, times: &[f64]) -> Result<Vec<C64>> {
        let geom = self.geometry();
        let a = self.operator(&parafermion(j, geom)?)?;
        let b = self.operator(&parafermion(k, geom)?)?;
        let phase = Omega::pow_sign(j as i64 - k as i64);
        Ok(times.par_iter().map(|&t| self.four_point(&a, t, &b, 0.0) * phase).collect())
    }

    /// Parity-inserted correlator exactly as written: the dual string sits on
    /// the evolving operator for `j ≥ k` and on the static one for `j < k`.
    /// No `ω` phase is attached.
    pub fn parity_inserted(&self, j: usize, k: usize, times: &[f64]) -> Result<Vec<C64>> {
        let geom = self.geometry();
        let p = parity(geom);
        let (a, b) = if j >= k {
            (dual_parafermion(j, geom, &p)?, parafermion(k, geom)?)
        } else {
            (parafermion(j, geom)?, dual_parafermion(k, geom, &p)?)
        };
        let (a, b) = (self.operator(&a)?, self.operator(&b)?);
        Ok(times.par_iter().map(|&t| self.four_point(&a, t, &b, 0.0)).collect())
    }

    /// Time-split form `⟨α_j†(t/2) α̃_k†(−t/2) α_j(t/2) α̃_k(−t/2)⟩` (dual on
    /// the left operator when `j ≥ k`), raw.
    pub fn time_split(&self, j: usize, k: usize, times: &[f64]) -> Result<Vec<C64>> {
        let geom = self.geometry();
        let p = parity(geom);
        let (a, b) = if j >= k {
            (dual_parafermion(j, geom, &p)?, parafermion(k, geom)?)
        } else {
            (parafermion(j, geom)?, dual_parafermion(k, geom, &p)?)
        };
        let (a, b) = (self.operator(&a)?, self.operator(&b)?);
        Ok(times.par_iter().map(|&t| self.four_point(&a, t / 2.0, &b, -t / 2.0)).collect())
    }
}

fn parity_residual(h: &DenseOperator, basis: &SectorBasis) -> f64 {
    let d = h.dim();
    let charges: Vec<usize> = (0..d).map(SectorBasis::charge_of).collect();
    let mut off = 0.0;
    for j in 0..d {
        for i in 0..d {
            if charges[i] != charges[j] {
                off += h.matrix[(i, j)].norm_sqr();
            }
        }
    }
    debug_assert_eq!(basis.dim(), d);
    (3.0 * off).sqrt()
}

/// `F_{j,k}(t)` at one time, normalized by the Hilbert-space dimension.
pub fn otoc_exact(j: usize, k: usize, t: f64, h: &DenseOperator, geom: ChainGeometry) -> Result<C64> {
    if geom.n_spins() != h.n_spins {
        return Err(Error::Precondition("geometry and Hamiltonian sizes differ".into()));
    }
    geom.check_index(j)?;
    geom.check_index(k)?;
    Ok(ExactDynamics::from_dense(h)?.otoc(j, k, &[t])?[0])
}

/// Spectra of the three parity sectors. Fails when `[H, P] ≠ 0`.
pub fn parity_sectors(h: &DenseOperator, geom: ChainGeometry) -> Result<Vec<SectorSpectrum>> {
    if geom.n_spins() != h.n_spins {
        return Err(Error::Precondition("geometry and Hamiltonian sizes differ".into()));
    }
    Ok(ExactDynamics::from_dense(h)?.spectrum(true))
}

/// Normalized spacings, their histogram and the mean gap ratio.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpacingStats {
    pub spacings: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub mean_ratio: f64,
}

pub const HISTOGRAM_BINS: usize = 40;
pub const HISTOGRAM_MAX: f64 = 4.0;

pub fn level_statistics(spectrum: &SectorSpectrum) -> Result<SpacingStats> {
    spacing_statistics(&spectrum.eigenvalues)
}

/// Spacing statistics of a sorted or unsorted list of levels.
pub fn spacing_statistics(levels: &[f64]) -> Result<SpacingStats> {
    if levels.len() < MIN_LEVELS {
        return Err(Error::TooFewLevels { got: levels.len(), need: MIN_LEVELS });
    }
    let mut e = levels.to_vec();
    e.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    if mean <= 0.0 {
        return Err(Error::Precondition("spectrum is fully degenerate".into()));
    }
    let spacings: Vec<f64> = gaps.iter().map(|g| g / mean).collect();
    let ratios: Vec<f64> = gaps
        .windows(2)
        .filter(|w| w[0].max(w[1]) > 0.0)
        .map(|w| w[0].min(w[1]) / w[0].max(w[1]))
        .collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let width = HISTOGRAM_MAX / HISTOGRAM_BINS as f64;
    let bin_edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| i as f64 * width).collect();
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &s in &spacings {
        let b = (s / width).floor() as usize;
        if b < HISTOGRAM_BINS {
            counts[b] += 1;
        } else if s == HISTOGRAM_MAX {
            counts[HISTOGRAM_BINS - 1] += 1;
        }
    }
    let norm = spacings.len() as f64 * width;
    let densities = counts.iter().map(|&c| c as f64 / norm).collect();
    Ok(SpacingStats { spacings, bin_edges, densities, mean_ratio })
}

/// Long-time limit of `F_{1,L}` keeping only the resonant terms
/// `E_s + E_m − E_l − E_n = 0` of the eigenbasis expansion.
pub fn spectral_otoc_longtime(h: &DenseOperator, geom: ChainGeometry) -> Result<C64> {
    let dynamics = ExactDynamics::from_dense(h)?;
    spectral_longtime_pair(&dynamics, 1, geom.n_parafermions(), DEGENERACY_TOL)
}

/// Resonant part of `F_{j,k}`; energies closer than `rel_tol·max|E|` count as
/// degenerate.
pub fn spectral_longtime_pair(d: &ExactDynamics, j: usize, k: usize, rel_tol: f64) -> Result<C64> {
    let geom = d.geometry();
    let a = d.operator(&parafermion(j, geom)?)?;
    let b = d.operator(&parafermion(k, geom)?)?;
    // global eigenbasis: (sector, index) flattened sector by sector
    let offsets = [0, d.vals[0].len(), d.vals[0].len() + d.vals[1].len()];
    let dim = d.dim();
    let mut energy = Vec::with_capacity(dim);
    for q in 0..3 {
        energy.extend_from_slice(&d.vals[q]);
    }
    let full = |op: &EigenOperator| {
        let mut m = CMat::zeros(dim, dim);
        for q in 0..3 {
            let t = (q + op.charge) % 3;
            let blk = &op.blocks[q];
            for c in 0..blk.ncols() {
                for r in 0..blk.nrows() {
                    m[(offsets[t] + r, offsets[q] + c)] = blk[(r, c)];
                }
            }
        }
        m
    };
    let (am, bm) = (full(&a), full(&b));
    let scale = energy.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(1.0);
    let tol = rel_tol * scale;

    // energy clusters
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| energy[x].total_cmp(&energy[y]));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut centers: Vec<f64> = Vec::new();
    for &i in &order {
        match clusters.last_mut() {
            Some(c) if energy[i] - energy[*c.last().unwrap()] <= tol => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    for c in &clusters {
        centers.push(c.iter().map(|&i| energy[i]).sum::<f64>() / c.len() as f64);
    }
    let kc = clusters.len();

    // ordered cluster pairs grouped by energy difference
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(kc * kc);
    for x in 0..kc {
        for y in 0..kc {
            pairs.push((centers[x] - centers[y], x, y));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new(); // (value, start, end)
    let mut start = 0;
    for i in 1..=pairs.len() {
        if i == pairs.len() || pairs[i].0 - pairs[i - 1].0 > 2.0 * tol {
            let v = pairs[start..i].iter().map(|p| p.0).sum::<f64>() / (i - start) as f64;
            groups.push((v, start, i));
            start = i;
        }
    }

    let mut total = ZERO;
    for &(v, s0, s1) in &groups {
        // partner group with difference −v
        let idx = groups.partition_point(|g| g.0 < -v - 2.0 * tol);
        let Some(&(w, t0, t1)) = groups.get(idx) else { continue };
        if (w + v).abs() > 2.0 * tol {
            continue;
        }
        for &(_, cs, cl) in &pairs[s0..s1] {
            for &(_, cm, cn) in &pairs[t0..t1] {
                for &s in &clusters[cs] {
                    for &l in &clusters[cl] {
                        let x = am[(l, s)].conj();
                        if x == ZERO {
                            continue;
                        }
                        for &m in &clusters[cm] {
                            let y = x * bm[(m, l)].conj();
                            if y == ZERO {
                                continue;
                            }
                            for &n in &clusters[cn] {
                                total += y * am[(m, n)] * bm[(n, s)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(total / dim as f64 * Omega::pow_sign(j as i64 - k as i64))
}

/// Time at which `Re F_{1,L}` first drops below the threshold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScramblingTime {
    pub n_parafermions: usize,
    pub t_star: f64,
    pub reached: bool,
    pub times: Vec<f64>,
    pub re_f: Vec<f64>,
}

pub const DEFAULT_HORIZON: f64 = 1e5;
/// Default level for the first drop of `Re F_{1,L}`.
pub const DEFAULT_SCRAMBLING_THRESHOLD: f64 = 0.99;

/// Logarithmic time scan of `Re F_{1,L}` with bisection refinement of the
/// first crossing. Unreached crossings report `t* = horizon`.
pub fn zero_mode_scrambling_time(
    params: &AlternatingModelParams,
    lengths: &[usize],
    threshold: f64,
    horizon: f64,
) -> Result<Vec<ScramblingTime>> {
    let per_decade = 25usize;
    let t_min: f64 = 1e-2;
    let decades = (horizon / t_min).log10();
    let n_points = (decades * per_decade as f64).ceil() as usize + 1;
    let mut grid: Vec<f64> = (0..n_points)
        .map(|i| (t_min * 10f64.powf(i as f64 / per_decade as f64)).min(horizon))
        .collect();
    grid.insert(0, 0.0);

    lengths
        .par_iter()
        .map(|&l| {
            let geom = ChainGeometry::new(l)?;
            let mut p = params.clone();
            p.n_spins = geom.n_spins();
            let d = ExactDynamics::from_params(&ModelParams::Alternating(p), DEFAULT_SPIN_CAP)?;
            let a = d.operator(&parafermion(1, geom)?)?;
            let b = d.operator(&parafermion(l, geom)?)?;
            let phase = Omega::pow(-1);
            let f = |t: f64| (d.four_point(&a, t, &b, 0.0) * phase).re;
            let re_f: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
            let first = re_f.iter().position(|&v| v < threshold);
            let (t_star, reached) = match first {
                None => (horizon, false),
                Some(0) => (0.0, true),
                Some(i) => {
                    let (mut lo, mut hi) = (grid[i - 1], grid[i]);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if f(mid) < threshold {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    (hi, true)
                }
            };
            Ok(ScramblingTime { n_parafermions: l, t_star, reached, times: grid.clone(), re_f })
        })
        .collect()
}
