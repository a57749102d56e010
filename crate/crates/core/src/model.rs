//! Parafermion Hamiltonians in clock form and their Trotter gate layers.

use faer::Scale;
use serde::{Deserialize, Serialize};

use crate::algebra::{ChainGeometry, LocalOperator, Omega};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_exp, hermitian_residual, kron, CMat, C64, I, ONE, ZERO};

/// Nearest and next-nearest neighbour hopping chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoppingModelParams {
    #[serde(default = "unit")]
    pub t1: f64,
    pub t2: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
    pub n_spins: usize,
}

fn unit() -> f64 {
    1.0
}

/// Chain with alternating inter-site (J1) and on-site (J2) couplings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternatingModelParams {
    #[serde(default = "unit")]
    pub j1: f64,
    pub j2: f64,
    #[serde(default)]
    pub varphi: f64,
    pub n_spins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Hopping(HoppingModelParams),
    Alternating(AlternatingModelParams),
}

impl HoppingModelParams {
    pub fn new(t2: f64, theta: f64, phi: f64, n_spins: usize) -> Self {
        Self { t1: 1.0, t2, theta, phi, n_spins }
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(&[("t1", self.t1), ("t2", self.t2), ("theta", self.theta), ("phi", self.phi)])?;
        check_spins(self.n_spins)
    }
}

impl AlternatingModelParams {
    pub fn new(j2: f64, varphi: f64, n_spins: usize) -> Self {
        Self { j1: 1.0, j2, varphi, n_spins }
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(&[("j1", self.j1), ("j2", self.j2), ("varphi", self.varphi)])?;
        check_spins(self.n_spins)
    }
}

impl ModelParams {
    pub fn n_spins(&self) -> usize {
        match self {
            ModelParams::Hopping(p) => p.n_spins,
            ModelParams::Alternating(p) => p.n_spins,
        }
    }

    pub fn with_spins(&self, n_spins: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            ModelParams::Hopping(p) => p.n_spins = n_spins,
            ModelParams::Alternating(p) => p.n_spins = n_spins,
        }
        out
    }

    pub fn geometry(&self) -> Result<ChainGeometry> {
        ChainGeometry::from_spins(self.n_spins())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::Hopping(p) => p.validate(),
            ModelParams::Alternating(p) => p.validate(),
        }
    }

    pub fn bond_terms(&self) -> Result<BondTermSet> {
        match self {
            ModelParams::Hopping(p) => clock_hamiltonian(p),
            ModelParams::Alternating(p) => alternating_hamiltonian(p),
        }
    }

    /// Parafermion hopping terms `(coefficient, a, b)` for `c·α_a† α_b + h.c.`.
    pub fn parafermion_terms(&self) -> Vec<(C64, usize, usize)> {
        match self {
            ModelParams::Hopping(p) => {
                let l = 2 * p.n_spins;
                let nn = C64::from_polar(-p.t1, p.theta);
                let nnn = C64::from_polar(p.t2, p.phi);
                let mut out: Vec<_> = (1..l).map(|a| (nn, a, a + 1)).collect();
                out.extend((1..l - 1).map(|a| (nnn, a, a + 2)));
                out
            }
            ModelParams::Alternating(p) => {
                let n = p.n_spins;
                let inter = C64::from_polar(-p.j1, p.varphi);
                let onsite = C64::new(-p.j2, 0.0);
                let mut out: Vec<_> = (1..n).map(|j| (inter, 2 * j, 2 * j + 1)).collect();
                out.extend((1..=n).map(|j| (onsite, 2 * j - 1, 2 * j)));
                out
            }
        }
    }
}

fn check_finite(fields: &[(&str, f64)]) -> Result<()> {
    for (name, v) in fields {
        if !v.is_finite() {
            return Err(Error::InvalidParams(format!("{name} is not finite")));
        }
    }
    Ok(())
}

fn check_spins(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 spins, got {n}")));
    }
    Ok(())
}

/// Two-site Hermitian blocks `h_{j,j+1}` on the 9-dimensional pair space
/// (left site on the more significant index). `blocks[b]` acts on sites
/// `b+1, b+2`.
#[derive(Clone, Debug)]
pub struct BondTermSet {
    n_spins: usize,
    blocks: Vec<CMat>,
}

impl BondTermSet {
    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn n_bonds(&self) -> usize {
        self.blocks.len()
    }

    /// Block on bond `(site, site + 1)`, 1-based.
    pub fn bond(&self, site: usize) -> &CMat {
        &self.blocks[site - 1]
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn max_hermitian_residual(&self) -> f64 {
        self.blocks.iter().map(|b| hermitian_residual(b.as_ref())).fold(0.0, f64::max)
    }

    /// True when every block commutes with τ⊗τ.
    pub fn conserves_parity(&self) -> bool {
        self.blocks.iter().all(|b| block_conserves_parity(b, 1e-12))
    }
}

fn block_conserves_parity(m: &CMat, tol: f64) -> bool {
    let charge = |x: usize| (x / 3 + x % 3) % 3;
    (0..9).all(|r| (0..9).all(|c| charge(r) == charge(c) || m[(r, c)].norm() <= tol))
}

fn mat3(op: &LocalOperator) -> CMat {
    op.to_mat()
}

fn pair(a: &LocalOperator, b: &LocalOperator) -> CMat {
    kron(mat3(a).as_ref(), mat3(b).as_ref())
}

fn plus_hc(m: &CMat) -> CMat {
    m + m.adjoint()
}

/// Weight of the on-site term of `site` carried by bond `(b, b+1)`.
fn onsite_weight(site: usize, n: usize) -> f64 {
    if site == 1 || site == n {
        1.0
    } else {
        0.5
    }
}

fn assemble(n: usize, bond: impl Fn(usize) -> CMat, onsite: &CMat) -> BondTermSet {
    let id = crate::linalg::identity(3);
    let blocks = (1..n)
        .map(|b| {
            let left = kron(onsite.as_ref(), id.as_ref()) * Scale(C64::from(onsite_weight(b, n)));
            let right = kron(id.as_ref(), onsite.as_ref()) * Scale(C64::from(onsite_weight(b + 1, n)));
            bond(b) + left + right
        })
        .collect();
    BondTermSet { n_spins: n, blocks }
}

/// Clock form of the hopping chain:
///
/// ```text
/// H = −t1 Σ e^{iθ} ω σ_j† σ_{j+1} − t1 Σ e^{iθ} ω τ_j
///     + t2 Σ e^{iφ} (σ_j† τ_{j+1} σ_{j+1} + σ_j† τ_j σ_{j+1}) + h.c.
/// ```
pub fn clock_hamiltonian(p: &HoppingModelParams) -> Result<BondTermSet> {
    p.validate()?;
    let (s, t) = (LocalOperator::sigma(), LocalOperator::tau());
    let sd = s.dagger();
    let w = Omega::VALUE;
    let nn = C64::from_polar(-p.t1, p.theta) * w;
    let nnn = C64::from_polar(p.t2, p.phi);
    let hop = pair(&sd, &s) * Scale(nn);
    let next = (pair(&sd, &t.mul(&s)) + pair(&sd.mul(&t), &s)) * Scale(nnn);
    let bond = plus_hc(&(hop + next));
    let onsite = plus_hc(&(mat3(&t) * Scale(nn)));
    Ok(assemble(p.n_spins, |_| bond.clone(), &onsite))
}

/// Clock form of the alternating chain:
/// `H = −J1 Σ e^{iφ} ω σ_j† σ_{j+1} − J2 Σ ω τ_j + h.c.`
pub fn alternating_hamiltonian(p: &AlternatingModelParams) -> Result<BondTermSet> {
    p.validate()?;
    let (s, t) = (LocalOperator::sigma(), LocalOperator::tau());
    let w = Omega::VALUE;
    let bond = plus_hc(&(pair(&s.dagger(), &s) * Scale(C64::from_polar(-p.j1, p.varphi) * w)));
    let onsite = plus_hc(&(mat3(&t) * Scale(w * -p.j2)));
    Ok(assemble(p.n_spins, |_| bond.clone(), &onsite))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Gates `exp(+i h δ)` on the output legs, i.e. `W → e^{iHt} W e^{−iHt}`.
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BondParity {
    /// Bonds `(1,2), (3,4), …`
    Odd,
    /// Bonds `(2,3), (4,5), …`
    Even,
}

/// One layer of commuting two-site gates. Each gate is the unitary applied to
/// the output legs; its adjoint goes on the input legs.
#[derive(Clone, Debug)]
pub struct GateLayer {
    pub parity: BondParity,
    pub step: f64,
    pub direction: Direction,
    /// `(left site, 9×9 gate)`
    pub gates: Vec<(usize, CMat)>,
    pub conserves_parity: bool,
}

impl GateLayer {
    pub fn build(terms: &BondTermSet, parity: BondParity, step: f64, direction: Direction) -> Result<Self> {
        let first = match parity {
            BondParity::Odd => 1,
            BondParity::Even => 2,
        };
        let coeff = I * (direction.sign() * step);
        let gates = (first..terms.n_spins())
            .step_by(2)
            .map(|b| Ok((b, hermitian_exp(terms.bond(b).as_ref(), coeff)?)))
            .collect::<Result<Vec<_>>>()?;
        let conserves_parity = gates.iter().all(|(_, g)| block_conserves_parity(g, 1e-12));
        Ok(Self { parity, step, direction, gates, conserves_parity })
    }

    pub fn inverse(&self) -> Self {
        Self {
            parity: self.parity,
            step: self.step,
            direction: self.direction.reversed(),
            gates: self.gates.iter().map(|(b, g)| (*b, g.adjoint().to_owned())).collect(),
            conserves_parity: self.conserves_parity,
        }
    }

    pub fn max_unitarity_residual(&self) -> f64 {
        self.gates
            .iter()
            .map(|(_, g)| crate::linalg::unitarity_residual(g.as_ref()))
            .fold(0.0, f64::max)
    }
}

/// Second-order splitting for one step: odd(dt/2), even(dt), odd(dt/2).
pub fn trotter_layers(terms: &BondTermSet, dt: f64, direction: Direction) -> Result<Vec<GateLayer>> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::InvalidParams(format!("Trotter step must be finite and nonzero, got {dt}")));
    }
    let half = GateLayer::build(terms, BondParity::Odd, dt / 2.0, direction)?;
    let even = GateLayer::build(terms, BondParity::Even, dt, direction)?;
    Ok(vec![half.clone(), even, half])
}

/// Cached layers for repeated second-order steps. Consecutive odd half steps
/// are merged into one full odd layer.
#[derive(Clone, Debug)]
pub struct TrotterSchedule {
    pub dt: f64,
    pub direction: Direction,
    half_odd: GateLayer,
    full_odd: GateLayer,
    even: GateLayer,
}

impl TrotterSchedule {
    pub fn new(terms: &BondTermSet, dt: f64, direction: Direction) -> Result<Self> {
        let layers = trotter_layers(terms, dt, direction)?;
        Ok(Self {
            dt,
            direction,
            half_odd: layers[0].clone(),
            full_odd: GateLayer::build(terms, BondParity::Odd, dt, direction)?,
            even: layers[1].clone(),
        })
    }

    pub fn conserves_parity(&self) -> bool {
        self.half_odd.conserves_parity && self.even.conserves_parity
    }

    /// Layer sequence equivalent to `n_steps` second-order steps.
    pub fn layers(&self, n_steps: usize) -> Vec<&GateLayer> {
        if n_steps == 0 {
            return Vec::new();
        }
        let mut out = vec![&self.half_odd];
        for i in 0..n_steps {
            out.push(&self.even);
            out.push(if i + 1 == n_steps { &self.half_odd } else { &self.full_odd });
        }
        out.retain(|l| !l.gates.is_empty());
        out
    }
}

/// Embeds a two-site operator (or identity padding) as a 9×9 block; handy for
/// tests and for assembling custom bond terms.
pub fn two_site(a: &LocalOperator, b: &LocalOperator) -> CMat {
    pair(a, b)
}

pub fn zero_block() -> CMat {
    CMat::from_fn(9, 9, |_, _| ZERO)
}

pub fn identity_block() -> CMat {
    CMat::from_fn(9, 9, |i, j| if i == j { ONE } else { ZERO })
}
