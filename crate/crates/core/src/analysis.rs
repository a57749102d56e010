//! Post-processing of OTOC series: light-cone grids, wavefront arrivals,
//! butterfly velocities, the `φ → π − φ` reflection check and the
//! zero-mode boundary profile.

use serde::{Deserialize, Serialize};

use crate::ed::{ExactDynamics, DEFAULT_SPIN_CAP};
use crate::error::{Error, Result};
use crate::model::{AlternatingModelParams, HoppingModelParams, ModelParams};
use crate::otoc::{lightcone_scan, squared_commutator, Method, OtocRequest, OtocSeries, TimeGrid};

/// Default relative drop of `Re F` that marks the wavefront.
pub const DEFAULT_THRESHOLD: f64 = 0.01;
/// Discarded-weight budget of the time-split boundary trace. Up to this
/// weight the trace stays within about 0.02 of exact dynamics.
pub const BOUNDARY_BUDGET: f64 = 0.1;
/// Slack allowed on `|Re F| ≤ 1`.
pub const RE_F_SLACK: f64 = 1e-6;

/// How a grid was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridProvenance {
    pub model: ModelParams,
    pub method: Method,
    pub chi: usize,
    pub dt: f64,
}

/// `Re F_{j,k}(t)` for one source `j` and several targets, row per target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightConeGrid {
    pub j: usize,
    pub ks: Vec<usize>,
    pub times: Vec<f64>,
    pub re_f: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// Leading records of each row within the truncation budget.
    pub trusted: Vec<usize>,
    pub provenance: Option<GridProvenance>,
}

impl LightConeGrid {
    pub fn new(j: usize, ks: Vec<usize>, times: Vec<f64>, re_f: Vec<Vec<f64>>) -> Result<Self> {
        let c = re_f.iter().map(|row| row.iter().map(|&x| 2.0 * (1.0 - x)).collect()).collect();
        let trusted = vec![times.len(); ks.len()];
        let g = Self { j, ks, times, re_f, c, trusted, provenance: None };
        g.validate()?;
        Ok(g)
    }

    /// Assembles a grid from series sharing the source and time axis.
    pub fn from_series(series: &[OtocSeries], model: Option<&ModelParams>) -> Result<Self> {
        let first = series.first().ok_or_else(|| Error::InvalidParams("no series".into()))?;
        if series.iter().any(|s| s.j != first.j || s.times != first.times) {
            return Err(Error::Precondition("series differ in source or time axis".into()));
        }
        let g = Self {
            j: first.j,
            ks: series.iter().map(|s| s.k).collect(),
            times: first.times.clone(),
            re_f: series.iter().map(OtocSeries::re_f).collect(),
            c: series.iter().map(|s| s.f.iter().map(|&z| squared_commutator(z)).collect()).collect(),
            trusted: series.iter().map(OtocSeries::trusted_len).collect(),
            provenance: model
                .map(|m| GridProvenance { model: m.clone(), method: first.method, chi: first.chi, dt: first.dt }),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let nt = self.times.len();
        let nk = self.ks.len();
        if self.re_f.len() != nk || self.c.len() != nk || self.trusted.len() != nk {
            return Err(Error::Precondition("row count differs from target count".into()));
        }
        if self.re_f.iter().chain(&self.c).any(|r| r.len() != nt) {
            return Err(Error::Precondition("row length differs from time axis".into()));
        }
        if self.trusted.iter().any(|&n| n > nt) {
            return Err(Error::Precondition("trusted window longer than the row".into()));
        }
        if let Some(x) = self.re_f.iter().flatten().find(|x| !(x.abs() <= 1.0 + RE_F_SLACK)) {
            return Err(Error::Precondition(format!("Re F = {x} outside [-1, 1]")));
        }
        Ok(())
    }

    pub fn row(&self, k: usize) -> Option<&[f64]> {
        self.ks.iter().position(|&x| x == k).map(|i| self.re_f[i].as_slice())
    }

    /// Copy with every row cut to the shortest trusted window.
    pub fn trusted_only(&self) -> Self {
        let n = self.trusted.iter().copied().min().unwrap_or(0);
        Self {
            j: self.j,
            ks: self.ks.clone(),
            times: self.times[..n].to_vec(),
            re_f: self.re_f.iter().map(|r| r[..n].to_vec()).collect(),
            c: self.c.iter().map(|r| r[..n].to_vec()).collect(),
            trusted: vec![n; self.ks.len()],
            provenance: self.provenance.clone(),
        }
    }
}

/// Wavefront arrival at one target. `time` is `None` when the drop is never
/// reached on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub k: usize,
    /// Signed distance `k − j` in parafermion sites.
    pub distance: i64,
    pub time: Option<f64>,
}

/// First time each row falls to `(1 − fraction)·F(0)` with `F(0) = 1`,
/// linearly interpolated between the bracketing samples. Noisy rows that
/// recross the threshold keep their first crossing.
pub fn wavefront_times(grid: &LightConeGrid, threshold_fraction: f64) -> Result<Vec<Arrival>> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 2.0) {
        return Err(Error::InvalidParams(format!("threshold fraction {threshold_fraction} outside (0, 2)")));
    }
    if grid.times.first() != Some(&0.0) {
        return Err(Error::Precondition("grid must start at t = 0".into()));
    }
    let level = 1.0 - threshold_fraction;
    Ok(grid
        .ks
        .iter()
        .zip(&grid.re_f)
        .map(|(&k, row)| Arrival { k, distance: k as i64 - grid.j as i64, time: crossing(&grid.times, row, level) })
        .collect())
}

fn crossing(times: &[f64], row: &[f64], level: f64) -> Option<f64> {
    let i = row.iter().position(|&x| x <= level)?;
    if i == 0 {
        return Some(times[0]);
    }
    let (t0, t1, f0, f1) = (times[i - 1], times[i], row[i - 1], row[i]);
    Some(t0 + (f0 - level) / (f0 - f1) * (t1 - t0))
}

/// Least-squares line `distance = v·t + b` for one side of the cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    /// `(distance, time)` points used.
    pub points: Vec<(f64, f64)>,
    pub velocity: f64,
    pub stderr: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButterflyFit {
    pub left: LineFit,
    pub right: LineFit,
    /// `V_b^r / V_b^l`.
    pub ratio: f64,
    pub ratio_stderr: f64,
}

pub const MIN_FIT_POINTS: usize = 3;

pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    let n = points.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::Fit(format!("{n} arrivals, need at least {MIN_FIT_POINTS}")));
    }
    let nf = n as f64;
    let tm = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let dm = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let stt: f64 = points.iter().map(|p| (p.1 - tm).powi(2)).sum();
    let std: f64 = points.iter().map(|p| (p.1 - tm) * (p.0 - dm)).sum();
    if !(stt > 1e-300) {
        return Err(Error::Fit(format!("all {n} arrival times coincide at t = {tm}")));
    }
    let velocity = std / stt;
    let intercept = dm - velocity * tm;
    if !(velocity > 0.0) {
        return Err(Error::Fit(format!("non-positive slope {velocity}")));
    }
    let ssr: f64 = points.iter().map(|p| (p.0 - intercept - velocity * p.1).powi(2)).sum();
    let stderr = if n > 2 { (ssr / (nf - 2.0) / stt).sqrt() } else { 0.0 };
    Ok(LineFit { points: points.to_vec(), velocity, stderr, intercept })
}

/// Fits each side of the cone separately; unreached targets and `k = j` are
/// skipped.
pub fn butterfly_fit(arrivals: &[Arrival]) -> Result<ButterflyFit> {
    let side = |right: bool| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = arrivals
            .iter()
            .filter(|a| if right { a.distance > 0 } else { a.distance < 0 })
            .filter_map(|a| a.time.map(|t| (a.distance.unsigned_abs() as f64, t)))
            .collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        v
    };
    let left = fit_line(&side(false)).map_err(|e| Error::Fit(format!("left side: {e}")))?;
    let right = fit_line(&side(true)).map_err(|e| Error::Fit(format!("right side: {e}")))?;
    let ratio = right.velocity / left.velocity;
    let ratio_stderr =
        ratio * ((right.stderr / right.velocity).powi(2) + (left.stderr / left.velocity).powi(2)).sqrt();
    Ok(ButterflyFit { left, right, ratio, ratio_stderr })
}

/// MPO settings used when a chain is too long for exact dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpoSettings {
    pub chi: usize,
    pub method: Method,
}

/// `max_t |C^φ_{j,k}(t) − C^{π−φ}_{k,j}(t)|`. The identity holds at
/// `θ = π/6`; other θ are accepted and simply give a large residual.
pub fn symmetry_residual(
    params: &HoppingModelParams,
    j: usize,
    k: usize,
    grid: &TimeGrid,
    mpo: Option<MpoSettings>,
) -> Result<f64> {
    let mut mirror = params.clone();
    mirror.phi = std::f64::consts::PI - params.phi;
    let (a, b) = (ModelParams::Hopping(params.clone()), ModelParams::Hopping(mirror));
    let (ca, cb) = if params.n_spins <= DEFAULT_SPIN_CAP {
        let times = grid.times();
        let fa = ExactDynamics::from_params(&a, DEFAULT_SPIN_CAP)?.otoc(j, k, &times)?;
        let fb = ExactDynamics::from_params(&b, DEFAULT_SPIN_CAP)?.otoc(k, j, &times)?;
        (fa.into_iter().map(squared_commutator).collect::<Vec<_>>(), fb.into_iter().map(squared_commutator).collect())
    } else {
        let s = mpo.ok_or_else(|| Error::Precondition("chain exceeds the dense cap and no MPO settings given".into()))?;
        let ra = OtocRequest::new(a, j, k, *grid, s.chi, s.method);
        let rb = OtocRequest::new(b, k, j, *grid, s.chi, s.method);
        (crate::otoc::run(&ra)?.c, crate::otoc::run(&rb)?.c)
    };
    Ok(ca.iter().zip(&cb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// `F_{1,L}(t)` of the alternating chain from the time-split method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrace {
    pub times: Vec<f64>,
    pub re_f: Vec<f64>,
    pub c: Vec<f64>,
    /// Cumulative discarded weight at each record.
    pub truncation: Vec<f64>,
    /// `min_t Re F_{1,L}(t)` over the trusted records.
    pub peak_metric: f64,
    /// Last record whose discarded weight is within the budget.
    pub trusted_until: f64,
}

/// Evolves both end operators for `t/2`; far more accurate at late times
/// than the direct scan. Records beyond `budget` are kept but excluded
/// from `peak_metric`.
pub fn boundary_otoc(
    params: &AlternatingModelParams,
    length: usize,
    grid: &TimeGrid,
    chi: usize,
    budget: f64,
) -> Result<BoundaryTrace> {
    let model = alternating_chain(params, length)?;
    let mut req = OtocRequest::new(model, 1, length, *grid, chi, Method::TimeSplitMpo);
    req.budget = budget;
    let s = crate::otoc::run(&req)?;
    let n = s.trusted_len().max(1);
    let re_f = s.re_f();
    Ok(BoundaryTrace {
        peak_metric: re_f[..n].iter().copied().fold(f64::INFINITY, f64::min),
        trusted_until: s.times[n - 1],
        truncation: s.truncation.iter().map(|t| t.cumulative).collect(),
        times: s.times,
        c: s.c,
        re_f,
    })
}

fn alternating_chain(params: &AlternatingModelParams, length: usize) -> Result<ModelParams> {
    if length % 2 != 0 {
        return Err(Error::InvalidParams(format!("chain length {length} must be even")));
    }
    let mut p = params.clone();
    p.n_spins = length / 2;
    Ok(ModelParams::Alternating(p))
}

/// Light cone of `α_1` in the alternating chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroModeProfile {
    /// Direct-method scan of `Re F_{1,k}` over every `k`.
    pub grid: LightConeGrid,
    pub boundary: BoundaryTrace,
}

/// Runs `F_{1,k}` for every `k = 1..=length` with the direct MPO method
/// and the boundary pair again with the time-split method.
pub fn zero_mode_profile(
    params: &AlternatingModelParams,
    length: usize,
    grid: &TimeGrid,
    chi: usize,
    budget: f64,
) -> Result<ZeroModeProfile> {
    let model = alternating_chain(params, length)?;
    let req = OtocRequest::new(model.clone(), 1, length, *grid, chi, Method::DirectMpo);
    let ks: Vec<usize> = (1..=length).collect();
    let series = lightcone_scan(&req, &ks)?;
    Ok(ZeroModeProfile {
        grid: LightConeGrid::from_series(&series, Some(&model))?,
        boundary: boundary_otoc(params, length, grid, chi, budget)?,
    })
}

/// First time `c` reaches `level · max(c)`, linearly interpolated.
pub fn saturation_time(times: &[f64], c: &[f64], level: f64) -> Option<f64> {
    let top = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return None;
    }
    let neg: Vec<f64> = c.iter().map(|x| -x).collect();
    crossing(times, &neg, -level * top)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;

    fn grid_of(rows: Vec<Vec<f64>>, ks: Vec<usize>, j: usize, dt: f64) -> LightConeGrid {
        let times = (0..rows[0].len()).map(|i| i as f64 * dt).collect();
        LightConeGrid::new(j, ks, times, rows).unwrap()
    }

    #[test]
    fn constant_row_is_absent() {
        let g = grid_of(vec![vec![1.0; 20]], vec![5], 1, 0.5);
        assert_eq!(wavefront_times(&g, 0.01).unwrap()[0].time, None);
    }

    #[test]
    fn step_row_arrives_at_step() {
        let row: Vec<f64> = (0..21).map(|i| if i < 10 { 1.0 } else { 0.9 }).collect();
        let g = grid_of(vec![row], vec![7], 3, 0.5);
        let a = wavefront_times(&g, 0.01).unwrap()[0];
        assert_eq!(a.distance, 4);
        // the drop happens between the samples at 4.5 and 5; the 1% level is
        // crossed a tenth of the way in
        assert!((a.time.unwrap() - 4.55).abs() < 1e-12);
        let g = grid_of(vec![(0..21).map(|i| if i < 10 { 1.0 } else { 0.9 }).collect()], vec![7], 3, 0.5);
        assert!((wavefront_times(&g, 0.1).unwrap()[0].time.unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_grids() {
        assert!(LightConeGrid::new(1, vec![2], vec![0.0, 1.0], vec![vec![1.0]]).is_err());
        assert!(LightConeGrid::new(1, vec![2], vec![0.0, 1.0], vec![vec![1.0, 1.5]]).is_err());
        let g = LightConeGrid::new(1, vec![2], vec![1.0, 2.0], vec![vec![1.0, 0.5]]).unwrap();
        assert!(wavefront_times(&g, 0.01).is_err());
    }

    #[test]
    fn exact_line_gives_its_slope() {
        let pts: Vec<(f64, f64)> = (1..6).map(|t| (2.0 * t as f64, t as f64)).collect();
        let f = fit_line(&pts).unwrap();
        assert!((f.velocity - 2.0).abs() < 1e-14);
        assert!(f.stderr < 1e-14);
    }

    #[test]
    fn degenerate_fits_fail() {
        assert!(matches!(fit_line(&[(1.0, 2.0), (2.0, 2.0), (3.0, 2.0)]), Err(Error::Fit(_))));
        assert!(matches!(fit_line(&[(1.0, 1.0), (2.0, 2.0)]), Err(Error::Fit(_))));
        assert!(matches!(fit_line(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)]), Err(Error::Fit(_))));
    }

    #[test]
    fn sides_are_fitted_separately() {
        let arrivals: Vec<Arrival> = (1..=5)
            .flat_map(|d| {
                [
                    Arrival { k: 20 + d, distance: d as i64, time: Some(d as f64 / 3.0) },
                    Arrival { k: 20 - d, distance: -(d as i64), time: Some(d as f64 / 2.0) },
                ]
            })
            .chain([Arrival { k: 30, distance: 10, time: None }])
            .collect();
        let fit = butterfly_fit(&arrivals).unwrap();
        assert!((fit.right.velocity - 3.0).abs() < 1e-12);
        assert!((fit.left.velocity - 2.0).abs() < 1e-12);
        assert!((fit.ratio - 1.5).abs() < 1e-12);
        assert_eq!(fit.right.points.len(), 5);
    }

    #[test]
    fn saturation_time_interpolates() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let c = [0.0, 1.0, 2.0, 2.0];
        assert!((saturation_time(&t, &c, 0.75).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(saturation_time(&t, &[0.0; 4], 0.5), None);
    }

    #[test]
    fn reflection_identity_holds_at_sixth_pi() {
        let grid = TimeGrid::new(3.0, 0.01, 0.25).unwrap();
        for phi in [PI / 2.0, PI / 4.0] {
            let p = HoppingModelParams::new(0.5, PI / 6.0, phi, 4);
            for (j, k) in [(2, 7), (3, 5), (8, 1)] {
                let r = symmetry_residual(&p, j, k, &grid, None).unwrap();
                assert!(r <= 1e-8, "phi={phi} ({j},{k}): {r}");
            }
        }
    }

    #[test]
    fn reflection_identity_fails_away_from_sixth_pi() {
        let grid = TimeGrid::new(4.0, 0.01, 0.25).unwrap();
        let p = HoppingModelParams::new(0.5, 0.0, PI / 4.0, 4);
        let r = symmetry_residual(&p, 3, 6, &grid, None).unwrap();
        assert!(r > 0.1, "{r}");
    }

    #[test]
    fn boundary_trace_matches_exact_dynamics() {
        let p = AlternatingModelParams::new(0.6, -PI / 6.0, 3);
        let grid = TimeGrid::new(6.0, 0.01, 0.2).unwrap();
        let trace = boundary_otoc(&p, 6, &grid, 81, BOUNDARY_BUDGET).unwrap();
        let model = ModelParams::Alternating(p);
        let ed = ExactDynamics::from_params(&model, DEFAULT_SPIN_CAP).unwrap().otoc(1, 6, &grid.times()).unwrap();
        for (a, b) in trace.re_f.iter().zip(&ed) {
            assert!((a - b.re).abs() < 1e-3, "{a} vs {}", b.re);
        }
        assert_eq!(trace.trusted_until, 6.0);
        assert!(trace.peak_metric < 0.9);
    }

    #[test]
    fn decoupled_boundary_never_scrambles() {
        let p = AlternatingModelParams::new(0.0, -PI / 6.0, 3);
        let prof = zero_mode_profile(&p, 6, &TimeGrid::new(2.0, 0.01, 0.1).unwrap(), 32, 1e-6).unwrap();
        assert!((prof.boundary.peak_metric - 1.0).abs() < 1e-10, "{}", prof.boundary.peak_metric);
        assert!(prof.boundary.c.iter().all(|c| c.abs() < 1e-10));
        assert!(prof.grid.re_f.last().unwrap().iter().all(|x| (x - 1.0).abs() < 1e-10));
        assert_eq!(prof.grid.ks.len(), 6);
    }

    proptest! {
        #[test]
        fn larger_threshold_never_arrives_earlier(
            steps in prop::collection::vec(0.0f64..0.2, 2..40),
            lo in 0.001f64..0.5,
            extra in 0.0f64..0.5,
        ) {
            let mut row = vec![1.0];
            for s in &steps {
                let last = *row.last().unwrap();
                row.push((last - s).max(-1.0));
            }
            let g = grid_of(vec![row], vec![4], 1, 0.1);
            let a = wavefront_times(&g, lo).unwrap()[0].time;
            let b = wavefront_times(&g, lo + extra).unwrap()[0].time;
            match (a, b) {
                (Some(x), Some(y)) => prop_assert!(y >= x - 1e-12),
                (None, Some(_)) => prop_assert!(false, "larger threshold reached first"),
                _ => {}
            }
        }

        #[test]
        fn rescaling_time_rescales_velocity(
            ts in prop::collection::vec(0.1f64..10.0, 3..8),
            c in 0.01f64..100.0,
            p in -8i32..8,
        ) {
            let pts: Vec<(f64, f64)> = ts
                .iter()
                .scan(0.0, |acc, &t| {
                    *acc += t;
                    Some(*acc)
                })
                .enumerate()
                .map(|(i, t)| ((i + 1) as f64, t))
                .collect();
            let base = fit_line(&pts).unwrap();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(d, t)| (d, c * t)).collect();
            let f = fit_line(&scaled).unwrap();
            prop_assert!((f.velocity * c / base.velocity - 1.0).abs() < 1e-12);
            // powers of two rescale without rounding
            let s = 2f64.powi(p);
            let exact: Vec<(f64, f64)> = pts.iter().map(|&(d, t)| (d, s * t)).collect();
            prop_assert_eq!(fit_line(&exact).unwrap().velocity, base.velocity / s);
        }
    }
}
