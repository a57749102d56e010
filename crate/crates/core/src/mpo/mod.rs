//! Matrix product operators for Heisenberg-evolved strings.
//!
//! Site tensors are indexed `(left bond, out, in, right bond)` and stored
//! row-major with the two physical legs fused into `p = 3·out + in`. An MPO is
//! treated as a vector in operator space: the stored tensors have unit
//! Frobenius norm when the represented operator `O` satisfies
//! `Tr(O†O)/3^N = 1`, and any deviation is kept in `log_scale`.
//!
//! Bond indices carry Z3 charges: a tensor entry is nonzero only when
//! `q_right = q_left + (out − in) mod 3`. Parity-conserving gates preserve
//! this structure, which makes every factorization block diagonal.

mod checkpoint;
mod contract;
mod evolve;
pub(crate) mod split;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use contract::{otoc_contract, otoc_contract_full, timesplit_contract};

use serde::{Deserialize, Serialize};

use crate::algebra::{LocalOperator, OperatorString, LOCAL_DIM};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ONE, ZERO};
use split::{qr_split, Absorb};

/// Number of fused physical indices per site.
pub const PHYS: usize = LOCAL_DIM * LOCAL_DIM;

/// Default relative singular-value cutoff.
pub const DEFAULT_CUTOFF: f64 = 1e-12;

/// Charge `(out − in) mod 3` of a fused physical index.
pub(crate) const fn phys_charge(p: usize) -> u8 {
    ((p / 3 + 3 - p % 3) % 3) as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CanonicalForm {
    None,
    /// Sites `1..=m` satisfy the left-canonical condition.
    LeftUpTo(usize),
    /// Sites left of `center` are left-canonical, sites right of it are
    /// right-canonical.
    Mixed { center: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor {
    pub dl: usize,
    pub dr: usize,
    pub data: Vec<C64>,
}

impl SiteTensor {
    pub fn zeros(dl: usize, dr: usize) -> Self {
        Self { dl, dr, data: vec![ZERO; dl * PHYS * dr] }
    }

    #[inline]
    pub fn idx(&self, l: usize, p: usize, r: usize) -> usize {
        (l * PHYS + p) * self.dr + r
    }

    pub fn get(&self, l: usize, out: usize, inp: usize, r: usize) -> C64 {
        self.data[self.idx(l, 3 * out + inp, r)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `Σ_{l,p} conj(T[l,p,r']) T[l,p,r]` as a `dr × dr` matrix.
    pub fn left_gram(&self) -> Vec<C64> {
        split::adj_matmul_rm(&self.data, &self.data, self.dl * PHYS, self.dr, self.dr)
    }

    /// `Σ_{p,r} T[l,p,r] conj(T[l',p,r])` as a `dl × dl` matrix.
    pub fn right_gram(&self) -> Vec<C64> {
        let n = PHYS * self.dr;
        let mut g = vec![ZERO; self.dl * self.dl];
        for a in 0..self.dl {
            for b in 0..self.dl {
                let (ra, rb) = (&self.data[a * n..(a + 1) * n], &self.data[b * n..(b + 1) * n]);
                g[a * self.dl + b] = ra.iter().zip(rb).map(|(x, y)| x * y.conj()).sum();
            }
        }
        g
    }
}

fn identity_residual(g: &[C64], n: usize) -> f64 {
    let mut r = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = if i == j { ONE } else { ZERO };
            r += (g[i * n + j] - e).norm_sqr();
        }
    }
    r.sqrt()
}

/// Discarded singular-value weight.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    /// Accumulated weight per bond, `per_bond[b-1]` for bond `(b, b+1)`.
    pub per_bond: Vec<f64>,
    pub max: f64,
    pub cumulative: f64,
}

impl TruncationReport {
    pub fn new(n_bonds: usize) -> Self {
        Self { per_bond: vec![0.0; n_bonds], max: 0.0, cumulative: 0.0 }
    }

    pub(crate) fn record(&mut self, bond: usize, w: f64) {
        self.per_bond[bond - 1] += w;
        self.max = self.max.max(self.per_bond[bond - 1]);
        self.cumulative += w;
    }

    pub fn merge(&mut self, other: &TruncationReport) {
        if self.per_bond.len() < other.per_bond.len() {
            self.per_bond.resize(other.per_bond.len(), 0.0);
        }
        for (a, b) in self.per_bond.iter_mut().zip(&other.per_bond) {
            *a += b;
        }
        self.max = self.per_bond.iter().copied().fold(0.0, f64::max);
        self.cumulative += other.cumulative;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mpo {
    tensors: Vec<SiteTensor>,
    /// `charges[b]` labels the indices of bond `b` (bond 0 and bond N are the
    /// one-dimensional boundaries).
    charges: Vec<Vec<u8>>,
    symmetric: bool,
    canonical: CanonicalForm,
    log_scale: f64,
    discarded: f64,
}

impl Mpo {
    /// Bond-dimension-one MPO of an operator string. The scalar phase is
    /// absorbed into the first tensor and any norm into `log_scale`.
    pub fn from_string(s: &OperatorString) -> Self {
        let n = s.n_sites();
        let symmetric = s.factors().values().all(|op| op.charge().is_some());
        let mut tensors = Vec::with_capacity(n);
        let mut charges = vec![vec![0u8]];
        let mut log_scale = 0.0;
        let mut acc = 0u8;
        for site in 1..=n {
            let op = s.local(site);
            let norm = op.matrix().iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let mut t = SiteTensor::zeros(1, 1);
            if norm > 0.0 {
                for o in 0..3 {
                    for i in 0..3 {
                        t.data[3 * o + i] = op.entry(o, i) / norm;
                    }
                }
                log_scale += (norm / 3f64.sqrt()).ln();
            }
            if site == 1 {
                let ph = s.phase();
                if ph.norm() > 0.0 {
                    t.data.iter_mut().for_each(|z| *z *= ph / ph.norm());
                    log_scale += ph.norm().ln();
                }
            }
            if symmetric {
                acc = (acc + op.charge().unwrap_or(0)) % 3;
            }
            charges.push(vec![acc]);
            tensors.push(t);
        }
        Self { tensors, charges, symmetric, canonical: CanonicalForm::Mixed { center: 1 }, log_scale, discarded: 0.0 }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_string(&OperatorString::identity(n))
    }

    /// MPO from raw tensors; no canonical form or charge structure assumed.
    pub fn from_tensors(tensors: Vec<SiteTensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Precondition("an MPO needs at least one site".into()));
        }
        if tensors[0].dl != 1 || tensors.last().unwrap().dr != 1 {
            return Err(Error::Precondition("boundary bonds must be one-dimensional".into()));
        }
        for w in tensors.windows(2) {
            if w[0].dr != w[1].dl {
                return Err(Error::Precondition("adjacent bond dimensions differ".into()));
            }
        }
        for t in &tensors {
            if t.data.len() != t.dl * PHYS * t.dr {
                return Err(Error::Precondition("tensor payload has the wrong length".into()));
            }
        }
        let mut charges = vec![vec![0u8]];
        charges.extend(tensors.iter().map(|t| vec![0u8; t.dr]));
        Ok(Self { tensors, charges, symmetric: false, canonical: CanonicalForm::None, log_scale: 0.0, discarded: 0.0 })
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn tensor(&self, site: usize) -> &SiteTensor {
        &self.tensors[site - 1]
    }

    pub fn tensors(&self) -> &[SiteTensor] {
        &self.tensors
    }

    /// Dimensions of bonds `1..N-1`.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.n_sites() - 1].iter().map(|t| t.dr).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn canonical_form(&self) -> CanonicalForm {
        self.canonical
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn bond_charges(&self, bond: usize) -> &[u8] {
        &self.charges[bond]
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Cumulative discarded weight over the lifetime of this MPO.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded
    }

    /// `Tr(O†O)/3^N` of the represented operator, tracked through truncation.
    pub fn norm_proxy(&self) -> f64 {
        (2.0 * self.log_scale).exp() * self.vector_norm_sqr()
    }

    /// Squared Frobenius norm of the stored tensor network.
    pub fn vector_norm_sqr(&self) -> f64 {
        contract::overlap(self, self).re
    }

    pub(crate) fn center(&self) -> Option<usize> {
        match self.canonical {
            CanonicalForm::Mixed { center } => Some(center),
            _ => None,
        }
    }

    fn pch(&self, p: usize) -> u8 {
        if self.symmetric {
            phys_charge(p)
        } else {
            0
        }
    }

    /// Drops charge bookkeeping, e.g. before applying gates that break parity.
    pub fn drop_symmetry(&mut self) {
        self.symmetric = false;
        for c in &mut self.charges {
            c.iter_mut().for_each(|q| *q = 0);
        }
    }

    fn row_charges_left(&self, site: usize) -> Vec<u8> {
        let t = &self.tensors[site - 1];
        let ql = &self.charges[site - 1];
        let mut out = Vec::with_capacity(t.dl * PHYS);
        for l in 0..t.dl {
            for p in 0..PHYS {
                out.push((ql[l] + self.pch(p)) % 3);
            }
        }
        out
    }

    fn col_charges_right(&self, site: usize) -> Vec<u8> {
        let t = &self.tensors[site - 1];
        let qr = &self.charges[site];
        let mut out = Vec::with_capacity(PHYS * t.dr);
        for p in 0..PHYS {
            for r in 0..t.dr {
                out.push((qr[r] + 3 - self.pch(p)) % 3);
            }
        }
        out
    }

    /// Moves the orthogonality center one site to the right.
    fn shift_right(&mut self, site: usize) {
        let rq = self.row_charges_left(site);
        let t = &self.tensors[site - 1];
        let (nr, nc) = (t.dl * PHYS, t.dr);
        let s = qr_split(&t.data, nr, nc, &rq, &self.charges[site], Absorb::Right);
        let k = s.charges.len();
        let next = &self.tensors[site];
        let merged = split::matmul_rm(&s.right, &next.data, k, next.dl, PHYS * next.dr);
        let dl = t.dl;
        let ndr = next.dr;
        self.tensors[site - 1] = SiteTensor { dl, dr: k, data: s.left };
        self.tensors[site] = SiteTensor { dl: k, dr: ndr, data: merged };
        self.charges[site] = s.charges;
    }

    /// Moves the orthogonality center one site to the left.
    fn shift_left(&mut self, site: usize) {
        let cq = self.col_charges_right(site);
        let t = &self.tensors[site - 1];
        let (nr, nc) = (t.dl, PHYS * t.dr);
        let s = qr_split(&t.data, nr, nc, &self.charges[site - 1], &cq, Absorb::Left);
        let k = s.charges.len();
        let prev = &self.tensors[site - 2];
        let merged = split::matmul_rm(&prev.data, &s.left, prev.dl * PHYS, prev.dr, k);
        let (pdl, dr) = (prev.dl, t.dr);
        self.tensors[site - 2] = SiteTensor { dl: pdl, dr: k, data: merged };
        self.tensors[site - 1] = SiteTensor { dl: k, dr, data: s.right };
        self.charges[site - 1] = s.charges;
    }

    /// Brings the MPO into mixed canonical form with the given center.
    pub fn move_center(&mut self, target: usize) {
        let n = self.n_sites();
        let target = target.clamp(1, n);
        let current = match self.canonical {
            CanonicalForm::Mixed { center } => center,
            CanonicalForm::LeftUpTo(m) => {
                let m = m.min(n);
                for site in ((m + 2)..=n).rev() {
                    self.shift_left(site);
                }
                (m + 1).min(n)
            }
            CanonicalForm::None => {
                for site in (2..=n).rev() {
                    self.shift_left(site);
                }
                1
            }
        };
        let mut c = current;
        while c < target {
            self.shift_right(c);
            c += 1;
        }
        while c > target {
            self.shift_left(c);
            c -= 1;
        }
        self.canonical = CanonicalForm::Mixed { center: target };
    }

    /// Makes sites `1..=up_to` left-canonical. Already canonical prefixes are
    /// left untouched; `up_to = N` folds the norm into `log_scale`.
    pub fn left_canonicalize(&mut self, up_to: usize) {
        let n = self.n_sites();
        let up_to = up_to.min(n);
        match self.canonical {
            CanonicalForm::Mixed { center } if center > up_to => return,
            CanonicalForm::LeftUpTo(m) if m >= up_to => return,
            _ => {}
        }
        if up_to < n {
            self.move_center(up_to + 1);
            return;
        }
        self.move_center(n);
        let t = &mut self.tensors[n - 1];
        let norm = t.norm_sqr().sqrt();
        if norm > 0.0 {
            t.data.iter_mut().for_each(|z| *z /= norm);
            self.log_scale += norm.ln();
        }
        self.canonical = CanonicalForm::LeftUpTo(n);
    }

    /// Residual of the left-canonical condition at `site`.
    pub fn left_canonical_residual(&self, site: usize) -> f64 {
        let t = self.tensor(site);
        identity_residual(&t.left_gram(), t.dr)
    }

    /// Residual of the right-canonical condition at `site`.
    pub fn right_canonical_residual(&self, site: usize) -> f64 {
        let t = self.tensor(site);
        identity_residual(&t.right_gram(), t.dl)
    }

    /// Rescales the stored network to unit norm, moving the factor into
    /// `log_scale`.
    pub fn normalize(&mut self) {
        if self.center().is_none() {
            self.move_center(1);
        }
        let c = self.center().unwrap();
        let t = &mut self.tensors[c - 1];
        let norm = t.norm_sqr().sqrt();
        if norm > 0.0 {
            t.data.iter_mut().for_each(|z| *z /= norm);
            self.log_scale += norm.ln();
        }
    }

    /// Left-multiplies by an operator string: `O → S·O` (acts on the output
    /// legs). Canonical form survives when every factor is unitary.
    pub fn apply_string_top(&mut self, s: &OperatorString) -> Result<()> {
        if s.n_sites() != self.n_sites() {
            return Err(Error::Precondition("string and MPO lengths differ".into()));
        }
        let definite = s.factors().values().all(|op| op.charge().is_some());
        if self.symmetric && !definite {
            self.drop_symmetry();
        }
        let mut unitary = true;
        let mut shift = 0u8;
        for site in 1..=self.n_sites() {
            let op = s.local(site);
            if self.symmetric {
                shift = (shift + op.charge().unwrap_or(0)) % 3;
                if shift != 0 {
                    self.charges[site].iter_mut().for_each(|q| *q = (*q + shift) % 3);
                }
            }
            if op.is_identity() {
                continue;
            }
            unitary &= op.is_unitary(1e-12);
            apply_local_top(&mut self.tensors[site - 1], &op);
        }
        let ph = s.phase();
        let first = &mut self.tensors[0];
        first.data.iter_mut().for_each(|z| *z *= ph / ph.norm());
        self.log_scale += ph.norm().ln();
        if !unitary {
            self.canonical = CanonicalForm::None;
        }
        Ok(())
    }

    /// Dense matrix of the represented operator (including `log_scale` and
    /// the `3^{N/2}` normalization).
    pub fn to_dense(&self, cap: usize) -> Result<CMat> {
        let n = self.n_sites();
        if n > cap {
            return Err(Error::CapExceeded { n_spins: n, cap });
        }
        // x[(O, I), r] with O, I multi-indices of the sites processed so far
        let mut dim = 1usize;
        let mut x: Vec<C64> = vec![ONE];
        let mut dr = 1usize;
        for t in &self.tensors {
            let nd = dim * 3;
            let mut y = vec![ZERO; nd * nd * t.dr];
            for oo in 0..dim {
                for ii in 0..dim {
                    for l in 0..dr {
                        let v = x[(oo * dim + ii) * dr + l];
                        if v == ZERO {
                            continue;
                        }
                        for o in 0..3 {
                            for i in 0..3 {
                                let row = oo * 3 + o;
                                let col = ii * 3 + i;
                                let base = (row * nd + col) * t.dr;
                                let src = t.idx(l, 3 * o + i, 0);
                                for r in 0..t.dr {
                                    y[base + r] += v * t.data[src + r];
                                }
                            }
                        }
                    }
                }
            }
            x = y;
            dim = nd;
            dr = t.dr;
        }
        let scale = (self.log_scale + 0.5 * n as f64 * 3f64.ln()).exp();
        Ok(CMat::from_fn(dim, dim, |i, j| x[i * dim + j] * scale))
    }

    /// Largest deviation of the tensor at `site` from a multiple of the
    /// identity, after removing the best-fit multiple; zero for a trivial
    /// site with bond dimensions one.
    pub fn deviation_from_identity(&self, site: usize) -> f64 {
        let t = self.tensor(site);
        if t.dl != 1 || t.dr != 1 {
            return f64::INFINITY;
        }
        let c = (t.data[0] + t.data[4] + t.data[8]) / 3.0;
        (0..PHYS)
            .map(|p| {
                let e = if p % 4 == 0 { c } else { ZERO };
                (t.data[p] - e).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn apply_local_top(t: &mut SiteTensor, op: &LocalOperator) {
    let m = op.matrix();
    let mut out = vec![ZERO; t.data.len()];
    for l in 0..t.dl {
        for o in 0..3 {
            for a in 0..3 {
                let z = m[o][a];
                if z == ZERO {
                    continue;
                }
                for i in 0..3 {
                    let dst = t.idx(l, 3 * o + i, 0);
                    let src = t.idx(l, 3 * a + i, 0);
                    for r in 0..t.dr {
                        out[dst + r] += z * t.data[src + r];
                    }
                }
            }
        }
    }
    t.data = out;
}
