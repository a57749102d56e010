//! Z3 clock operators, parafermion strings and the parity operator.
//!
//! Parafermions on a chain of `L = 2N` sites are represented through the
//! generalized Jordan–Wigner map
//!
//! ```text
//! α_{2j-1} = (τ_1 ⋯ τ_{j-1}) σ_j
//! α_{2j}   = ω (τ_1 ⋯ τ_{j-1}) σ_j τ_j
//! ```
//!
//! Strings are stored sparsely as `site -> LocalOperator` with a scalar phase.
//! Sites are 1-based throughout, matching parafermion and spin labels.

use std::collections::BTreeMap;
use std::fmt;

use faer::Scale;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ONE, ZERO};

/// Local Hilbert-space dimension of a clock site.
pub const LOCAL_DIM: usize = 3;

const EXACT_TOL: f64 = 1e-13;

/// ω = exp(2πi/3) and its integer powers, computed from a lookup so that
/// ω³ = 1 holds exactly.
pub struct Omega;

impl Omega {
    pub const VALUE: C64 = C64::new(-0.5, 0.866_025_403_784_438_6);

    pub fn pow(n: i64) -> C64 {
        match n.rem_euclid(3) {
            0 => ONE,
            1 => Self::VALUE,
            _ => Self::VALUE.conj(),
        }
    }

    /// ω^{sgn(d)} with sgn(0) = 0.
    pub fn pow_sign(d: i64) -> C64 {
        Self::pow(d.signum())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpLabel {
    Identity,
    Sigma,
    SigmaDagger,
    Tau,
    TauDagger,
    Product(String),
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpLabel::Identity => f.write_str("1"),
            OpLabel::Sigma => f.write_str("σ"),
            OpLabel::SigmaDagger => f.write_str("σ†"),
            OpLabel::Tau => f.write_str("τ"),
            OpLabel::TauDagger => f.write_str("τ†"),
            OpLabel::Product(s) => f.write_str(s),
        }
    }
}

/// A 3×3 operator on one clock site.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    matrix: [[C64; 3]; 3],
    label: OpLabel,
}

impl LocalOperator {
    pub fn identity() -> Self {
        let mut m = [[ZERO; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = ONE;
        }
        Self { matrix: m, label: OpLabel::Identity }
    }

    /// Cyclic shift, σ|s⟩ = |s−1 mod 3⟩.
    pub fn sigma() -> Self {
        let mut m = [[ZERO; 3]; 3];
        m[0][1] = ONE;
        m[1][2] = ONE;
        m[2][0] = ONE;
        Self { matrix: m, label: OpLabel::Sigma }
    }

    /// τ = diag(1, ω, ω²).
    pub fn tau() -> Self {
        let mut m = [[ZERO; 3]; 3];
        for (s, row) in m.iter_mut().enumerate() {
            row[s] = Omega::pow(s as i64);
        }
        Self { matrix: m, label: OpLabel::Tau }
    }

    pub fn sigma_dagger() -> Self {
        Self::sigma().dagger()
    }

    pub fn tau_dagger() -> Self {
        Self::tau().dagger()
    }

    pub fn from_matrix(matrix: [[C64; 3]; 3], label: OpLabel) -> Self {
        Self { matrix, label }
    }

    pub fn matrix(&self) -> &[[C64; 3]; 3] {
        &self.matrix
    }

    pub fn label(&self) -> &OpLabel {
        &self.label
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[row][col]
    }

    pub fn to_mat(&self) -> CMat {
        CMat::from_fn(3, 3, |i, j| self.matrix[i][j])
    }

    pub fn dagger(&self) -> Self {
        let mut m = [[ZERO; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, z) in row.iter_mut().enumerate() {
                *z = self.matrix[j][i].conj();
            }
        }
        let label = match &self.label {
            OpLabel::Identity => OpLabel::Identity,
            OpLabel::Sigma => OpLabel::SigmaDagger,
            OpLabel::SigmaDagger => OpLabel::Sigma,
            OpLabel::Tau => OpLabel::TauDagger,
            OpLabel::TauDagger => OpLabel::Tau,
            OpLabel::Product(s) => OpLabel::Product(format!("({s})†")),
        };
        Self { matrix: m, label }
    }

    /// Matrix product `self · rhs` (rhs acts first).
    pub fn mul(&self, rhs: &Self) -> Self {
        let mut m = [[ZERO; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, z) in row.iter_mut().enumerate() {
                *z = (0..3).map(|k| self.matrix[i][k] * rhs.matrix[k][j]).sum();
            }
        }
        let label = OpLabel::Product(format!("{}·{}", self.label, rhs.label));
        Self { matrix: m, label }.canonical_label()
    }

    pub fn scale(&self, z: C64) -> Self {
        let mut m = self.matrix;
        m.iter_mut().flatten().for_each(|x| *x *= z);
        Self { matrix: m, label: OpLabel::Product(format!("({z})·{}", self.label)) }.canonical_label()
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.matrix
            .iter()
            .flatten()
            .zip(other.matrix.iter().flatten())
            .all(|(a, b)| (a - b).norm() <= tol)
    }

    fn canonical_label(self) -> Self {
        let named = [
            Self::identity(),
            Self::sigma(),
            Self::sigma_dagger(),
            Self::tau(),
            Self::tau_dagger(),
        ];
        for n in named {
            if self.approx_eq(&n, EXACT_TOL) {
                return Self { matrix: self.matrix, label: n.label };
            }
        }
        self
    }

    pub fn is_identity(&self) -> bool {
        self.approx_eq(&Self::identity(), EXACT_TOL)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.mul(&self.dagger()).approx_eq(&Self::identity(), tol)
    }

    /// Z3 charge q such that τ·O·τ† = ω^q O, i.e. every nonzero entry sits at
    /// (row − col) ≡ q mod 3. `None` when the operator mixes charges.
    pub fn charge(&self) -> Option<u8> {
        let mut found: Option<u8> = None;
        for (i, row) in self.matrix.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                if z.norm() > EXACT_TOL {
                    let q = ((i + 3 - j) % 3) as u8;
                    match found {
                        None => found = Some(q),
                        Some(p) if p != q => return None,
                        _ => {}
                    }
                }
            }
        }
        Some(found.unwrap_or(0))
    }
}

pub fn sigma() -> LocalOperator {
    LocalOperator::sigma()
}

pub fn tau() -> LocalOperator {
    LocalOperator::tau()
}

pub fn identity() -> LocalOperator {
    LocalOperator::identity()
}

/// If `u · m · u† = λ m`, returns λ.
pub fn local_conjugation_phase(u: &LocalOperator, m: &LocalOperator) -> Option<C64> {
    let conj = u.mul(m).mul(&u.dagger());
    let (mut best, mut best_abs) = ((0, 0), 0.0);
    for i in 0..3 {
        for j in 0..3 {
            let a = m.entry(i, j).norm();
            if a > best_abs {
                best = (i, j);
                best_abs = a;
            }
        }
    }
    if best_abs == 0.0 {
        return Some(ONE);
    }
    let lambda = conj.entry(best.0, best.1) / m.entry(best.0, best.1);
    let scaled = m.scale(lambda);
    conj.approx_eq(&scaled, 1e-12).then_some(lambda)
}

/// Number of parafermions `L` and clock sites `N = L / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainGeometry {
    n_parafermions: usize,
}

impl ChainGeometry {
    pub fn new(n_parafermions: usize) -> Result<Self> {
        if n_parafermions == 0 || n_parafermions % 2 != 0 {
            return Err(Error::InvalidGeometry(format!(
                "parafermion count must be even and positive, got {n_parafermions}"
            )));
        }
        Ok(Self { n_parafermions })
    }

    pub fn from_spins(n_spins: usize) -> Result<Self> {
        Self::new(2 * n_spins)
    }

    pub fn n_parafermions(&self) -> usize {
        self.n_parafermions
    }

    pub fn n_spins(&self) -> usize {
        self.n_parafermions / 2
    }

    /// Clock site ⌈p/2⌉ hosting parafermion `p`.
    pub fn spin_site(&self, p: usize) -> usize {
        p.div_ceil(2)
    }

    pub fn check_index(&self, p: usize) -> Result<()> {
        if p == 0 || p > self.n_parafermions {
            return Err(Error::IndexOutOfRange { index: p, max: self.n_parafermions });
        }
        Ok(())
    }
}

/// Ordered product of on-site operators with a scalar phase. Identity factors
/// are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorString {
    n_sites: usize,
    factors: BTreeMap<usize, LocalOperator>,
    phase: C64,
}

impl OperatorString {
    pub fn identity(n_sites: usize) -> Self {
        Self { n_sites, factors: BTreeMap::new(), phase: ONE }
    }

    pub fn from_factors(
        n_sites: usize,
        factors: impl IntoIterator<Item = (usize, LocalOperator)>,
        phase: C64,
    ) -> Result<Self> {
        let mut s = Self { n_sites, factors: BTreeMap::new(), phase };
        for (site, op) in factors {
            if site == 0 || site > n_sites {
                return Err(Error::Precondition(format!("site {site} outside 1..={n_sites}")));
            }
            let combined = match s.factors.remove(&site) {
                Some(prev) => prev.mul(&op),
                None => op,
            };
            s.insert(site, combined);
        }
        Ok(s)
    }

    fn insert(&mut self, site: usize, op: LocalOperator) {
        if !op.is_identity() {
            self.factors.insert(site, op);
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn phase(&self) -> C64 {
        self.phase
    }

    pub fn factors(&self) -> &BTreeMap<usize, LocalOperator> {
        &self.factors
    }

    /// Operator on `site`, identity when the string has no factor there.
    pub fn local(&self, site: usize) -> LocalOperator {
        self.factors.get(&site).cloned().unwrap_or_else(LocalOperator::identity)
    }

    pub fn support(&self) -> Vec<usize> {
        self.factors.keys().copied().collect()
    }

    /// (first, last) non-identity site.
    pub fn support_range(&self) -> Option<(usize, usize)> {
        Some((*self.factors.keys().next()?, *self.factors.keys().next_back()?))
    }

    pub fn with_phase(mut self, phase: C64) -> Self {
        self.phase = phase;
        self
    }

    pub fn dagger(&self) -> Self {
        Self {
            n_sites: self.n_sites,
            factors: self.factors.iter().map(|(&k, v)| (k, v.dagger())).collect(),
            phase: self.phase.conj(),
        }
    }

    /// Site-wise product `self · rhs`; factors that telescope to the identity
    /// are dropped.
    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        if self.n_sites != rhs.n_sites {
            return Err(Error::Precondition(format!(
                "string lengths differ: {} vs {}",
                self.n_sites, rhs.n_sites
            )));
        }
        let mut out = Self::identity(self.n_sites);
        out.phase = self.phase * rhs.phase;
        let sites: std::collections::BTreeSet<usize> =
            self.factors.keys().chain(rhs.factors.keys()).copied().collect();
        for site in sites {
            let op = self.local(site).mul(&rhs.local(site));
            out.insert(site, op);
        }
        Ok(out)
    }

    /// Total Z3 charge, if every factor carries a definite one.
    pub fn charge(&self) -> Option<u8> {
        self.factors
            .values()
            .try_fold(0u8, |acc, op| op.charge().map(|q| (acc + q) % 3))
    }

    /// True when every factor is unitary.
    pub fn is_unitary(&self) -> bool {
        (self.phase.norm() - 1.0).abs() < 1e-12 && self.factors.values().all(|op| op.is_unitary(1e-12))
    }
}

impl fmt::Display for OperatorString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}{:+.6}i)", self.phase.re, self.phase.im)?;
        for (site, op) in &self.factors {
            write!(f, " {}_{}", op.label(), site)?;
        }
        Ok(())
    }
}

/// Parafermion α_p as a left string.
pub fn parafermion(p: usize, geom: ChainGeometry) -> Result<OperatorString> {
    geom.check_index(p)?;
    let n = geom.n_spins();
    let site = geom.spin_site(p);
    let strings = (1..site).map(|k| (k, LocalOperator::tau()));
    if p % 2 == 1 {
        OperatorString::from_factors(n, strings.chain([(site, LocalOperator::sigma())]), ONE)
    } else {
        let head = LocalOperator::sigma().mul(&LocalOperator::tau());
        OperatorString::from_factors(n, strings.chain([(site, head)]), Omega::VALUE)
    }
}

/// Global parity P = ∏_j τ_j.
pub fn parity(geom: ChainGeometry) -> OperatorString {
    let n = geom.n_spins();
    OperatorString {
        n_sites: n,
        factors: (1..=n).map(|k| (k, LocalOperator::tau())).collect(),
        phase: ONE,
    }
}

fn check_on_site(symmetry: &OperatorString, n_sites: usize) -> Result<()> {
    if symmetry.n_sites() != n_sites {
        return Err(Error::NonOnSiteSymmetry(format!(
            "symmetry spans {} sites, chain has {n_sites}",
            symmetry.n_sites()
        )));
    }
    if !symmetry.is_unitary() {
        return Err(Error::NonOnSiteSymmetry("a local factor is not unitary".into()));
    }
    Ok(())
}

/// Dual parafermion S† · α_p. With the default parity symmetry the result is
/// a right string anchored at site ⌈p/2⌉.
pub fn dual_parafermion(
    p: usize,
    geom: ChainGeometry,
    symmetry: &OperatorString,
) -> Result<OperatorString> {
    check_on_site(symmetry, geom.n_spins())?;
    symmetry.dagger().mul(&parafermion(p, geom)?)
}

/// λ with S · O · S† = λ O for an on-site symmetry S; `None` when `op` is not
/// an eigen-operator of the conjugation.
pub fn conjugation_phase(symmetry: &OperatorString, op: &OperatorString) -> Option<C64> {
    op.factors().iter().try_fold(ONE, |acc, (site, m)| {
        local_conjugation_phase(&symmetry.local(*site), m).map(|l| acc * l)
    })
}

/// ‖α_p α_q − ω^{sgn(q−p)} α_q α_p‖_F, evaluated densely.
pub fn commutation_check(p: usize, q: usize, geom: ChainGeometry) -> Result<f64> {
    if p == q {
        return Err(Error::Precondition("commutation check needs p ≠ q".into()));
    }
    let cap = crate::ed::DEFAULT_SPIN_CAP;
    let a = crate::ed::dense_embed(&parafermion(p, geom)?, cap)?;
    let b = crate::ed::dense_embed(&parafermion(q, geom)?, cap)?;
    let phase = Omega::pow_sign(q as i64 - p as i64);
    let lhs = &a.matrix * &b.matrix;
    let rhs = (&b.matrix * &a.matrix) * Scale(phase);
    Ok((lhs - rhs).norm_l2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::dense_embed;
    use crate::linalg::{distance, identity as eye};

    fn mat_close(a: &LocalOperator, b: &LocalOperator) -> bool {
        distance(a.to_mat().as_ref(), b.to_mat().as_ref()) < 1e-14
    }

    #[test]
    fn omega_identities() {
        let w = Omega::VALUE;
        assert!((w * w * w - ONE).norm() < 1e-15);
        assert!((ONE + w + w * w).norm() < 1e-15);
        assert_eq!(Omega::pow(-1), Omega::pow(2));
        assert_eq!(Omega::pow_sign(0), ONE);
    }

    #[test]
    fn clock_matrices_match_reference_form() {
        let s = sigma();
        // σ = [[0,1,0],[0,0,1],[1,0,0]]
        assert_eq!(s.entry(0, 1), ONE);
        assert_eq!(s.entry(1, 2), ONE);
        assert_eq!(s.entry(2, 0), ONE);
        let t = tau();
        assert_eq!(t.entry(1, 1), Omega::VALUE);
    }

    #[test]
    fn tau_cubed_is_identity() {
        let t = tau();
        assert!(t.mul(&t).mul(&t).is_identity());
        let s = sigma();
        assert!(s.mul(&s).mul(&s).is_identity());
    }

    #[test]
    fn sigma_tau_omega_commutation() {
        let st = sigma().mul(&tau());
        let ts = tau().mul(&sigma()).scale(Omega::VALUE);
        assert!(mat_close(&st, &ts));
    }

    #[test]
    fn sigma_dagger_is_sigma_squared() {
        let s = sigma();
        assert!(mat_close(&s.dagger(), &s.mul(&s)));
        assert_eq!(s.dagger().label(), &OpLabel::SigmaDagger);
    }

    #[test]
    fn charges_of_clock_operators() {
        assert_eq!(sigma().charge(), Some(2));
        assert_eq!(sigma_dagger_charge(), Some(1));
        assert_eq!(tau().charge(), Some(0));
        let mixed = LocalOperator::from_matrix(
            [[ONE, ONE, ZERO], [ZERO, ONE, ZERO], [ZERO, ZERO, ONE]],
            OpLabel::Product("x".into()),
        );
        assert_eq!(mixed.charge(), None);
    }

    fn sigma_dagger_charge() -> Option<u8> {
        LocalOperator::sigma_dagger().charge()
    }

    #[test]
    fn first_parafermions_have_expected_strings() {
        let g = ChainGeometry::new(6).unwrap();
        let a1 = parafermion(1, g).unwrap();
        assert_eq!(a1.support(), vec![1]);
        assert_eq!(a1.local(1).label(), &OpLabel::Sigma);
        assert_eq!(a1.phase(), ONE);

        let a2 = parafermion(2, g).unwrap();
        assert_eq!(a2.support(), vec![1]);
        assert!(mat_close(&a2.local(1), &sigma().mul(&tau())));
        assert_eq!(a2.phase(), Omega::VALUE);

        let a5 = parafermion(5, g).unwrap();
        assert_eq!(a5.support(), vec![1, 2, 3]);
        assert_eq!(a5.local(1).label(), &OpLabel::Tau);
        assert_eq!(a5.local(2).label(), &OpLabel::Tau);
        assert_eq!(a5.local(3).label(), &OpLabel::Sigma);
    }

    #[test]
    fn parafermion_index_out_of_range() {
        let g = ChainGeometry::new(4).unwrap();
        assert!(matches!(parafermion(0, g), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(parafermion(5, g), Err(Error::IndexOutOfRange { .. })));
        assert!(ChainGeometry::new(5).is_err());
    }

    #[test]
    fn parity_single_site_and_cube() {
        let g1 = ChainGeometry::from_spins(1).unwrap();
        let p1 = parity(g1);
        assert_eq!(p1.support(), vec![1]);
        assert_eq!(p1.local(1).label(), &OpLabel::Tau);

        let g = ChainGeometry::from_spins(3).unwrap();
        let p = dense_embed(&parity(g), 8).unwrap().matrix;
        let p3 = &p * &p * &p;
        assert!(distance(p3.as_ref(), eye(27).as_ref()) < 1e-12);
    }

    #[test]
    fn dual_of_thirteenth_parafermion_is_right_string() {
        let g = ChainGeometry::from_spins(10).unwrap();
        let d = dual_parafermion(13, g, &parity(g)).unwrap();
        assert_eq!(d.support(), vec![7, 8, 9, 10]);
        assert_eq!(d.local(7).charge(), Some(2));
        for site in 8..=10 {
            assert_eq!(d.local(site).label(), &OpLabel::TauDagger);
        }
    }

    #[test]
    fn dual_of_last_parafermion_is_single_site() {
        for n in 1..=5 {
            let g = ChainGeometry::from_spins(n).unwrap();
            let d = dual_parafermion(2 * n, g, &parity(g)).unwrap();
            assert_eq!(d.support(), vec![n]);
        }
    }

    #[test]
    fn dual_matches_dense_product() {
        let g = ChainGeometry::from_spins(4).unwrap();
        let pd = dense_embed(&parity(g), 8).unwrap().matrix;
        for p in 1..=8 {
            let a = dense_embed(&parafermion(p, g).unwrap(), 8).unwrap().matrix;
            let d = dense_embed(&dual_parafermion(p, g, &parity(g)).unwrap(), 8).unwrap().matrix;
            let expect = pd.adjoint() * &a;
            assert!(distance(d.as_ref(), expect.as_ref()) < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn dual_rejects_non_unitary_symmetry() {
        let g = ChainGeometry::from_spins(2).unwrap();
        let bad = OperatorString::from_factors(
            2,
            [(1, LocalOperator::from_matrix([[ONE, ONE, ZERO], [ZERO, ONE, ZERO], [ZERO, ZERO, ONE]], OpLabel::Product("b".into())))],
            ONE,
        )
        .unwrap();
        assert!(matches!(dual_parafermion(1, g, &bad), Err(Error::NonOnSiteSymmetry(_))));
        let wrong_len = parity(ChainGeometry::from_spins(3).unwrap());
        assert!(dual_parafermion(1, g, &wrong_len).is_err());
    }

    #[test]
    fn parity_conjugation_phase_is_omega_squared() {
        let g = ChainGeometry::from_spins(4).unwrap();
        let p = parity(g);
        for j in 1..=8 {
            let a = parafermion(j, g).unwrap();
            let lam = conjugation_phase(&p, &a).unwrap();
            assert!((lam - Omega::pow(2)).norm() < 1e-14);
        }
    }

    #[test]
    fn commutation_residuals_small() {
        let g2 = ChainGeometry::from_spins(2).unwrap();
        assert!(commutation_check(1, 2, g2).unwrap() < 1e-12);
        let g4 = ChainGeometry::from_spins(4).unwrap();
        assert!(commutation_check(5, 7, g4).unwrap() < 1e-12);
        assert!(commutation_check(3, 3, g4).is_err());
    }
}
