//! Run configuration: one flat `key = value` section per subcommand.
//!
//! ```toml
//! [otoc]
//! model = "hopping"
//! length = 14
//! t2 = 0.5
//! j = 9
//! k = 3
//! method = "timesplit"
//! chi = 48
//! dt = 0.002
//! t_max = 10.0
//! stride = 0.5
//! ```
//!
//! Keys missing from the section take the defaults of [`RunConfig`].
//! Command-line flags override file values.

use std::path::{Path, PathBuf};

use parafermion_otoc::analysis::BOUNDARY_BUDGET;
use parafermion_otoc::ed::{DEFAULT_HORIZON, DEFAULT_SCRAMBLING_THRESHOLD, DEFAULT_SPIN_CAP};
use parafermion_otoc::model::{AlternatingModelParams, HoppingModelParams, ModelParams};
use parafermion_otoc::mpo::DEFAULT_CUTOFF;
use parafermion_otoc::otoc::{Method, OtocRequest, TimeGrid, DEFAULT_BUDGET};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Otoc,
    Lightcone,
    Butterfly,
    Levels,
    Zeromode,
    BenchEd,
}

impl Command {
    pub fn section(self) -> &'static str {
        match self {
            Command::Otoc => "otoc",
            Command::Lightcone => "lightcone",
            Command::Butterfly => "butterfly",
            Command::Levels => "levels",
            Command::Zeromode => "zeromode",
            Command::BenchEd => "bench-ed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hopping,
    Alternating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    T2,
    Phi,
    Theta,
}

/// Every tunable of every subcommand. Unused keys are ignored by the
/// commands that do not need them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Number of parafermions `L` (twice the number of clock spins).
    pub length: usize,
    pub t1: f64,
    pub t2: f64,
    pub theta: f64,
    pub phi: f64,
    pub j1: f64,
    pub j2: f64,
    pub varphi: f64,

    /// Defaults to `timesplit` for `otoc`/`bench-ed` and `direct` for the
    /// light-cone commands.
    pub method: Option<Method>,
    pub chi: usize,
    pub dt: f64,
    pub t_max: f64,
    pub stride: f64,
    pub cutoff: f64,
    pub budget: f64,

    pub j: usize,
    pub k: usize,
    /// Targets of a light-cone scan; empty means every site.
    pub ks: Vec<usize>,

    pub sweep: SweepParam,
    pub sweep_values: Vec<f64>,
    /// Distances `|k − j|` used in the velocity fits.
    pub fit_distances: Vec<usize>,
    pub threshold_fraction: f64,

    /// Parity sector for level statistics.
    pub sector: usize,

    /// `J2` values of a zero-mode sweep; empty means just `j2`.
    pub j2_values: Vec<f64>,
    /// Chain lengths of the exact scrambling-time table.
    pub ed_lengths: Vec<usize>,
    pub scrambling_threshold: f64,
    pub horizon: f64,
    /// Discarded-weight budget of the time-split boundary trace.
    pub boundary_budget: f64,

    /// `(j, k)` pairs compared by `bench-ed`; empty means a default set.
    pub pairs: Vec<[usize; 2]>,
    /// Largest tolerated relative error of `Re F` in `bench-ed`.
    pub tolerance: f64,

    pub workers: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Hopping,
            length: 14,
            t1: 1.0,
            t2: 0.5,
            theta: 0.0,
            phi: 0.0,
            j1: 1.0,
            j2: 0.4,
            varphi: -std::f64::consts::FRAC_PI_6,
            method: None,
            chi: 48,
            dt: 0.002,
            t_max: 10.0,
            stride: 0.1,
            cutoff: DEFAULT_CUTOFF,
            budget: DEFAULT_BUDGET,
            j: 1,
            k: 2,
            ks: Vec::new(),
            sweep: SweepParam::T2,
            sweep_values: Vec::new(),
            fit_distances: vec![4, 8, 12, 16],
            threshold_fraction: 0.01,
            sector: 0,
            j2_values: Vec::new(),
            ed_lengths: Vec::new(),
            scrambling_threshold: DEFAULT_SCRAMBLING_THRESHOLD,
            horizon: DEFAULT_HORIZON,
            boundary_budget: BOUNDARY_BUDGET,
            pairs: Vec::new(),
            tolerance: 0.01,
            workers: 1,
            out: PathBuf::from("out"),
        }
    }
}

/// Values given on the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub chi: Option<usize>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub workers: Option<usize>,
    pub method: Option<Method>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl RunConfig {
    /// Reads the subcommand's section of `text`; a missing section gives
    /// the defaults.
    pub fn from_toml(text: &str, command: Command) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = text.parse().map_err(|e| bad(format!("config parse error: {e}")))?;
        for key in doc.keys() {
            if !ALL.iter().any(|c| c.section() == key) {
                return Err(bad(format!("unknown config section [{key}]")));
            }
        }
        match doc.remove(command.section()) {
            None => Ok(Self::default()),
            Some(toml::Value::Table(t)) => {
                t.try_into().map_err(|e| bad(format!("[{}]: {e}", command.section())))
            }
            Some(_) => Err(bad(format!("`{}` must be a section", command.section()))),
        }
    }

    pub fn load(path: Option<&Path>, command: Command) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| bad(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text, command)
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.chi {
            self.chi = v;
        }
        if let Some(v) = o.dt {
            self.dt = v;
        }
        if let Some(v) = o.t_max {
            self.t_max = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = o.method {
            self.method = Some(v);
        }
    }

    /// The config as its own section, parseable by [`RunConfig::from_toml`].
    pub fn to_toml(&self, command: Command) -> String {
        let mut doc = toml::Table::new();
        doc.insert(
            command.section().to_string(),
            toml::Value::try_from(self).expect("config serializes to a table"),
        );
        toml::to_string(&doc).expect("config serializes")
    }

    pub fn method_for(&self, command: Command) -> Method {
        self.method.unwrap_or(match command {
            Command::Otoc | Command::BenchEd => Method::TimeSplitMpo,
            _ => Method::DirectMpo,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.length / 2
    }

    pub fn model_params(&self) -> ModelParams {
        match self.model {
            ModelKind::Hopping => ModelParams::Hopping(HoppingModelParams {
                t1: self.t1,
                t2: self.t2,
                theta: self.theta,
                phi: self.phi,
                n_spins: self.n_spins(),
            }),
            ModelKind::Alternating => ModelParams::Alternating(AlternatingModelParams {
                j1: self.j1,
                j2: self.j2,
                varphi: self.varphi,
                n_spins: self.n_spins(),
            }),
        }
    }

    pub fn alternating(&self) -> AlternatingModelParams {
        AlternatingModelParams { j1: self.j1, j2: self.j2, varphi: self.varphi, n_spins: self.n_spins() }
    }

    pub fn grid(&self) -> Result<TimeGrid, ConfigError> {
        TimeGrid::new(self.t_max, self.dt, self.stride).map_err(|e| bad(e.to_string()))
    }

    pub fn request(&self, command: Command, j: usize, k: usize) -> Result<OtocRequest, ConfigError> {
        let mut r = OtocRequest::new(self.model_params(), j, k, self.grid()?, self.chi, self.method_for(command));
        r.cutoff = self.cutoff;
        r.budget = self.budget;
        r.validate().map_err(|e| bad(e.to_string()))?;
        Ok(r)
    }

    pub fn targets(&self) -> Vec<usize> {
        if self.ks.is_empty() {
            (1..=self.length).collect()
        } else {
            self.ks.clone()
        }
    }

    pub fn zero_mode_couplings(&self) -> Vec<f64> {
        if self.j2_values.is_empty() {
            vec![self.j2]
        } else {
            self.j2_values.clone()
        }
    }

    pub fn bench_pairs(&self) -> Vec<(usize, usize)> {
        if self.pairs.is_empty() {
            let l = self.length;
            let mid = l / 2 + 1;
            vec![(mid, mid - 2), (mid, mid + 2), (1, l), (l, 1)]
        } else {
            self.pairs.iter().map(|p| (p[0], p[1])).collect()
        }
    }

    /// Checks everything the chosen command will use before any work starts.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        if self.length < 2 || self.length % 2 != 0 {
            return Err(bad(format!("length = {} must be even and at least 2", self.length)));
        }
        if self.workers == 0 {
            return Err(bad("workers must be at least 1"));
        }
        self.model_params().validate().map_err(|e| bad(e.to_string()))?;
        let method = self.method_for(command);
        let ed_ok = |n_spins: usize| {
            if n_spins > DEFAULT_SPIN_CAP {
                Err(bad(format!("{n_spins} spins exceed the exact-diagonalization cap of {DEFAULT_SPIN_CAP}")))
            } else {
                Ok(())
            }
        };
        if method == Method::ExactEd && command != Command::Levels {
            ed_ok(self.n_spins())?;
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return Err(bad("threshold_fraction must lie in (0, 1)"));
        }
        match command {
            Command::Otoc => {
                self.request(command, self.j, self.k)?;
            }
            Command::Lightcone => {
                for &k in &self.targets() {
                    self.request(command, self.j, k)?;
                }
            }
            Command::Butterfly => {
                if self.sweep_values.is_empty() {
                    return Err(bad("sweep_values is empty"));
                }
                if self.model != ModelKind::Hopping {
                    return Err(bad("butterfly sweeps need model = \"hopping\""));
                }
                if self.fit_distances.len() < 3 {
                    return Err(bad("fit_distances needs at least 3 entries per side"));
                }
                for &d in &self.fit_distances {
                    if d == 0 || self.j <= d || self.j + d > self.length {
                        return Err(bad(format!("fit distance {d} leaves the chain around j = {}", self.j)));
                    }
                }
                for v in &self.sweep_values {
                    let mut c = self.clone();
                    c.set_sweep(*v);
                    c.model_params().validate().map_err(|e| bad(e.to_string()))?;
                }
                self.request(command, self.j, self.j)?;
            }
            Command::Levels => {
                ed_ok(self.n_spins())?;
                if self.sector > 2 {
                    return Err(bad(format!("sector = {} must be 0, 1 or 2", self.sector)));
                }
            }
            Command::Zeromode => {
                if self.model != ModelKind::Alternating {
                    return Err(bad("zeromode needs model = \"alternating\""));
                }
                for &l in &self.ed_lengths {
                    if l < 2 || l % 2 != 0 {
                        return Err(bad(format!("ed length {l} must be even and at least 2")));
                    }
                    ed_ok(l / 2)?;
                }
                if !(self.scrambling_threshold > -1.0 && self.scrambling_threshold < 1.0) {
                    return Err(bad("scrambling_threshold must lie in (-1, 1)"));
                }
                if !(self.horizon > 0.0) {
                    return Err(bad("horizon must be positive"));
                }
                for g in self.zero_mode_couplings() {
                    let mut c = self.clone();
                    c.j2 = g;
                    c.model_params().validate().map_err(|e| bad(e.to_string()))?;
                }
                if method != Method::DirectMpo {
                    return Err(bad("zeromode light cones use method = \"direct\""));
                }
                if !(self.boundary_budget > 0.0) {
                    return Err(bad("boundary_budget must be positive"));
                }
                self.request(command, 1, self.length)?;
                let mut split = self.clone();
                split.method = Some(Method::TimeSplitMpo);
                split.request(command, 1, self.length)?;
            }
            Command::BenchEd => {
                ed_ok(self.n_spins())?;
                if method == Method::ExactEd {
                    return Err(bad("bench-ed compares an MPO method against exact dynamics"));
                }
                if !(self.tolerance > 0.0) {
                    return Err(bad("tolerance must be positive"));
                }
                for (j, k) in self.bench_pairs() {
                    self.request(command, j, k)?;
                }
            }
        }
        Ok(())
    }

    pub fn set_sweep(&mut self, v: f64) {
        match self.sweep {
            SweepParam::T2 => self.t2 = v,
            SweepParam::Phi => self.phi = v,
            SweepParam::Theta => self.theta = v,
        }
    }
}

pub const ALL: [Command; 6] =
    [Command::Otoc, Command::Lightcone, Command::Butterfly, Command::Levels, Command::Zeromode, Command::BenchEd];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_section_gives_defaults() {
        let c = RunConfig::from_toml("[levels]\nsector = 1\n", Command::Otoc).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(RunConfig::from_toml("[otoc]\nbogus = 1\n", Command::Otoc).is_err());
        assert!(RunConfig::from_toml("[other]\nchi = 1\n", Command::Otoc).is_err());
        assert!(RunConfig::from_toml("[otoc]\nchi = \"many\"\n", Command::Otoc).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::from_toml(
            "[butterfly]\nt2 = 0.3\nsweep_values = [0.1, 0.2]\npairs = [[1, 2]]\nmethod = \"direct\"\nphi = 0.7853981633974483\n",
            Command::Butterfly,
        )
        .unwrap();
        c.apply(&Overrides { chi: Some(7), dt: Some(0.01), ..Default::default() });
        let back = RunConfig::from_toml(&c.to_toml(Command::Butterfly), Command::Butterfly).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flags_override_file_values() {
        let mut c = RunConfig::from_toml("[otoc]\nchi = 12\nt_max = 3.0\n", Command::Otoc).unwrap();
        c.apply(&Overrides { chi: Some(20), method: Some(Method::ExactEd), ..Default::default() });
        assert_eq!(c.chi, 20);
        assert_eq!(c.t_max, 3.0);
        assert_eq!(c.method_for(Command::Otoc), Method::ExactEd);
    }

    #[test]
    fn validation_catches_bad_values() {
        let ok = RunConfig { length: 6, j: 2, k: 5, t_max: 1.0, dt: 0.01, ..Default::default() };
        assert!(ok.validate(Command::Otoc).is_ok());
        assert!(RunConfig { length: 7, ..ok.clone() }.validate(Command::Otoc).is_err());
        assert!(RunConfig { k: 9, ..ok.clone() }.validate(Command::Otoc).is_err());
        assert!(RunConfig { dt: 0.03, ..ok.clone() }.validate(Command::Otoc).is_err());
        assert!(RunConfig { chi: 0, ..ok.clone() }.validate(Command::Otoc).is_err());
        assert!(RunConfig { length: 20, method: Some(Method::ExactEd), ..ok.clone() }.validate(Command::Otoc).is_err());
        assert!(ok.validate(Command::Butterfly).is_err());
        assert!(ok.validate(Command::Zeromode).is_err());
        assert!(RunConfig { workers: 0, ..ok }.validate(Command::Otoc).is_err());
    }
}
