//! Infinite-temperature OTOCs of parafermions on a time grid.
//!
//! `F_{j,k}(t) = ⟨α_j†(t) α_k† α_j(t) α_k⟩ ω^{sgn(j−k)}` and
//! `C_{j,k}(t) = 2(1 − Re F_{j,k}(t))`.
//!
//! The MPO methods always evolve the plain `α_j`. When `k > j` the static
//! partner is the right-string dual `α̃_k = P†α_k`, whose support lies to the
//! right of the evolving operator's light cone; the parity-inserted
//! correlator then equals `F` with no extra phase. When `k ≤ j` the plain
//! left string `α_k` already sits on the left and `F` is obtained by
//! attaching `ω^{sgn(j−k)}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{dual_parafermion, parafermion, parity, ChainGeometry, Omega, OperatorString};
use crate::ed::{ExactDynamics, DEFAULT_SPIN_CAP};
use crate::error::{Error, Result};
use crate::linalg::{C64, ONE};
use crate::model::{Direction, ModelParams, TrotterSchedule};
use crate::mpo::{otoc_contract, timesplit_contract, Mpo, DEFAULT_CUTOFF};

/// Default Trotter step.
pub const DEFAULT_DT: f64 = 0.002;
/// Default spacing between recorded times.
pub const DEFAULT_STRIDE: f64 = 0.1;
/// Cumulative discarded weight beyond which results are flagged.
pub const DEFAULT_BUDGET: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "direct")]
    DirectMpo,
    #[serde(rename = "timesplit")]
    TimeSplitMpo,
    #[serde(rename = "ed")]
    ExactEd,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::DirectMpo => "direct",
            Method::TimeSplitMpo => "timesplit",
            Method::ExactEd => "ed",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Method::DirectMpo),
            "timesplit" => Ok(Method::TimeSplitMpo),
            "ed" => Ok(Method::ExactEd),
            other => Err(Error::InvalidParams(format!("unknown method `{other}` (direct|timesplit|ed)"))),
        }
    }
}

/// Records at `t = n·stride` for `n = 0, 1, …` up to `t_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub dt: f64,
    pub stride: f64,
}

impl TimeGrid {
    pub fn new(t_max: f64, dt: f64, stride: f64) -> Result<Self> {
        let g = Self { t_max, dt, stride };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(Error::InvalidParams(format!("t_max = {} must be finite and ≥ 0", self.t_max)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.stride.is_finite() && self.stride > 0.0) {
            return Err(Error::InvalidParams(format!("stride = {} must be positive", self.stride)));
        }
        self.steps_per_record(1)?;
        Ok(())
    }

    /// Trotter steps of size `dt` between records when each record advances
    /// the evolution by `stride / divisor`.
    pub fn steps_per_record(&self, divisor: usize) -> Result<usize> {
        let x = self.stride / (self.dt * divisor as f64);
        let n = x.round();
        if n < 1.0 || (x - n).abs() > 1e-9 * x.max(1.0) {
            return Err(Error::InvalidParams(format!(
                "stride {} is not a multiple of {}·dt = {}",
                self.stride,
                divisor,
                divisor as f64 * self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn n_records(&self) -> usize {
        (self.t_max / self.stride + 1e-9).floor() as usize + 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_records()).map(|n| n as f64 * self.stride).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtocRequest {
    pub model: ModelParams,
    pub j: usize,
    pub k: usize,
    pub grid: TimeGrid,
    pub chi: usize,
    pub cutoff: f64,
    pub method: Method,
    pub budget: f64,
}

impl OtocRequest {
    pub fn new(model: ModelParams, j: usize, k: usize, grid: TimeGrid, chi: usize, method: Method) -> Self {
        Self { model, j, k, grid, chi, cutoff: DEFAULT_CUTOFF, method, budget: DEFAULT_BUDGET }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let geom = self.model.geometry()?;
        geom.check_index(self.j)?;
        geom.check_index(self.k)?;
        self.grid.validate()?;
        if self.method == Method::TimeSplitMpo {
            self.grid.steps_per_record(2)?;
        }
        if self.method != Method::ExactEd && self.chi == 0 {
            return Err(Error::InvalidParams("bond dimension must be at least 1".into()));
        }
        if !(self.cutoff >= 0.0 && self.cutoff < 1.0) {
            return Err(Error::InvalidParams(format!("cutoff {} outside [0, 1)", self.cutoff)));
        }
        if !(self.budget > 0.0) {
            return Err(Error::InvalidParams("truncation budget must be positive".into()));
        }
        Ok(())
    }
}

/// Truncation state at one recorded time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationSummary {
    /// Cumulative discarded weight of all evolved operators.
    pub cumulative: f64,
    /// Largest per-bond accumulated weight.
    pub max_bond: f64,
    pub max_bond_dim: usize,
    /// `Tr(O†O)/3^N` tracked through truncation (1 without truncation).
    pub norm_proxy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtocSeries {
    pub j: usize,
    pub k: usize,
    pub times: Vec<f64>,
    pub f: Vec<C64>,
    pub c: Vec<f64>,
    pub truncation: Vec<TruncationSummary>,
    pub method: Method,
    pub chi: usize,
    pub dt: f64,
    pub budget: f64,
}

impl OtocSeries {
    fn new(req: &OtocRequest, k: usize) -> Self {
        Self {
            j: req.j,
            k,
            times: Vec::new(),
            f: Vec::new(),
            c: Vec::new(),
            truncation: Vec::new(),
            method: req.method,
            chi: req.chi,
            dt: req.grid.dt,
            budget: req.budget,
        }
    }

    fn push(&mut self, t: f64, f: C64, trunc: TruncationSummary) {
        self.times.push(t);
        self.f.push(f);
        self.c.push(squared_commutator(f));
        self.truncation.push(trunc);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn re_f(&self) -> Vec<f64> {
        self.f.iter().map(|z| z.re).collect()
    }

    /// First recorded time whose cumulative truncation exceeds the budget.
    pub fn budget_exceeded_at(&self) -> Option<f64> {
        self.truncation.iter().zip(&self.times).find(|(s, _)| s.cumulative > self.budget).map(|(_, &t)| t)
    }

    /// Number of leading records within the truncation budget.
    pub fn trusted_len(&self) -> usize {
        self.truncation.iter().take_while(|s| s.cumulative <= self.budget).count()
    }
}

/// `C = 2(1 − Re F)`.
pub fn squared_commutator(f: C64) -> f64 {
    2.0 * (1.0 - f.re)
}

/// The static partner of `α_j(t)` and the phase turning the contraction
/// into `F_{j,k}`.
pub fn static_partner(j: usize, k: usize, geom: ChainGeometry) -> Result<(OperatorString, C64)> {
    if k > j {
        Ok((dual_parafermion(k, geom, &parity(geom))?, ONE))
    } else {
        Ok((parafermion(k, geom)?, Omega::pow_sign(j as i64 - k as i64)))
    }
}

fn summary(mpos: &[&Mpo], report_max: f64) -> TruncationSummary {
    TruncationSummary {
        cumulative: mpos.iter().map(|m| m.discarded_weight()).sum(),
        max_bond: report_max,
        max_bond_dim: mpos.iter().map(|m| m.max_bond_dim()).max().unwrap_or(1),
        norm_proxy: mpos.iter().map(|m| m.norm_proxy()).fold(1.0, f64::min),
    }
}

/// Dispatches on `req.method`.
pub fn run(req: &OtocRequest) -> Result<OtocSeries> {
    match req.method {
        Method::DirectMpo => otoc_direct(req),
        Method::TimeSplitMpo => otoc_timesplit(req),
        Method::ExactEd => otoc_ed(req),
    }
}

pub fn otoc_direct(req: &OtocRequest) -> Result<OtocSeries> {
    if req.method != Method::DirectMpo {
        return Err(Error::Precondition("otoc_direct needs method = direct".into()));
    }
    Ok(scan(req, &[req.k])?.pop().unwrap())
}

pub fn otoc_timesplit(req: &OtocRequest) -> Result<OtocSeries> {
    if req.method != Method::TimeSplitMpo {
        return Err(Error::Precondition("otoc_timesplit needs method = timesplit".into()));
    }
    Ok(scan(req, &[req.k])?.pop().unwrap())
}

pub fn otoc_ed(req: &OtocRequest) -> Result<OtocSeries> {
    if req.method != Method::ExactEd {
        return Err(Error::Precondition("otoc_ed needs method = ed".into()));
    }
    Ok(scan(req, &[req.k])?.pop().unwrap())
}

/// OTOCs of one source `req.j` against every target in `ks` (`req.k` is
/// ignored). The direct method shares each forward-evolved snapshot across
/// all targets.
pub fn lightcone_scan(req: &OtocRequest, ks: &[usize]) -> Result<Vec<OtocSeries>> {
    scan(req, ks)
}

fn scan(req: &OtocRequest, ks: &[usize]) -> Result<Vec<OtocSeries>> {
    let mut probe = req.clone();
    for &k in ks {
        probe.k = k;
        probe.validate()?;
    }
    if ks.is_empty() {
        return Err(Error::InvalidParams("no target indices".into()));
    }
    match req.method {
        Method::DirectMpo => scan_direct(req, ks),
        Method::TimeSplitMpo => scan_timesplit(req, ks),
        Method::ExactEd => scan_ed(req, ks),
    }
}

fn scan_direct(req: &OtocRequest, ks: &[usize]) -> Result<Vec<OtocSeries>> {
    let geom = req.model.geometry()?;
    let terms = req.model.bond_terms()?;
    let sched = TrotterSchedule::new(&terms, req.grid.dt, Direction::Forward)?;
    let steps = req.grid.steps_per_record(1)?;
    let layers = sched.layers(steps);
    let partners = ks.iter().map(|&k| static_partner(req.j, k, geom)).collect::<Result<Vec<_>>>()?;
    let mut out: Vec<OtocSeries> = ks.iter().map(|&k| OtocSeries::new(req, k)).collect();
    let mut w = Mpo::from_string(&parafermion(req.j, geom)?);
    let mut max_bond = 0.0f64;
    for (n, t) in req.grid.times().into_iter().enumerate() {
        if n > 0 {
            let rep = w.apply_heisenberg_step(&layers, req.chi, req.cutoff)?;
            max_bond = max_bond.max(rep.max);
        }
        let values = partners
            .par_iter()
            .map(|(v, phase)| otoc_contract(&w, v, geom).map(|f| f * phase))
            .collect::<Result<Vec<_>>>()?;
        let s = summary(&[&w], max_bond);
        for (series, f) in out.iter_mut().zip(values) {
            series.push(t, f, s);
        }
    }
    Ok(out)
}

fn scan_timesplit(req: &OtocRequest, ks: &[usize]) -> Result<Vec<OtocSeries>> {
    let geom = req.model.geometry()?;
    let terms = req.model.bond_terms()?;
    let steps = req.grid.steps_per_record(2)?;
    let fwd = TrotterSchedule::new(&terms, req.grid.dt, Direction::Forward)?;
    let bwd = TrotterSchedule::new(&terms, req.grid.dt, Direction::Backward)?;
    let (fl, bl) = (fwd.layers(steps), bwd.layers(steps));
    let mut a = Mpo::from_string(&parafermion(req.j, geom)?);
    let mut bs = Vec::with_capacity(ks.len());
    let mut phases = Vec::with_capacity(ks.len());
    for &k in ks {
        let (v, ph) = static_partner(req.j, k, geom)?;
        bs.push(Mpo::from_string(&v));
        phases.push(ph);
    }
    let mut out: Vec<OtocSeries> = ks.iter().map(|&k| OtocSeries::new(req, k)).collect();
    let mut max_a = 0.0f64;
    let mut max_b = vec![0.0f64; ks.len()];
    for (n, t) in req.grid.times().into_iter().enumerate() {
        if n > 0 {
            max_a = max_a.max(a.apply_heisenberg_step(&fl, req.chi, req.cutoff)?.max);
            let reps = bs
                .par_iter_mut()
                .map(|b| b.apply_heisenberg_step(&bl, req.chi, req.cutoff).map(|r| r.max))
                .collect::<Result<Vec<_>>>()?;
            for (m, r) in max_b.iter_mut().zip(reps) {
                *m = m.max(r);
            }
        }
        let values =
            bs.par_iter().zip(&phases).map(|(b, ph)| timesplit_contract(&a, b).map(|f| f * ph)).collect::<Result<Vec<_>>>()?;
        for (i, f) in values.into_iter().enumerate() {
            let s = summary(&[&a, &bs[i]], max_a.max(max_b[i]));
            out[i].push(t, f, s);
        }
    }
    Ok(out)
}

fn scan_ed(req: &OtocRequest, ks: &[usize]) -> Result<Vec<OtocSeries>> {
    let ed = ExactDynamics::from_params(&req.model, DEFAULT_SPIN_CAP)?;
    let times = req.grid.times();
    let exact = TruncationSummary { cumulative: 0.0, max_bond: 0.0, max_bond_dim: 0, norm_proxy: 1.0 };
    ks.iter()
        .map(|&k| {
            let f = ed.otoc(req.j, k, &times)?;
            let mut s = OtocSeries::new(req, k);
            for (&t, &z) in times.iter().zip(&f) {
                s.push(t, z, exact);
            }
            Ok(s)
        })
        .collect()
}
