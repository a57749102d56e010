//! CSV tables, metadata JSON and generated plot scripts.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};

/// Twelve significant digits in scientific notation; non-finite values are
/// written as `nan`, `inf` or `-inf`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 {
        // drop the sign of negative zero
        format!("{:.11e}", 0.0)
    } else {
        format!("{x:.11e}")
    }
}

/// A CSV file with a header row, LF line endings and UTF-8 text.
pub struct Table {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> io::Result<Self> {
        let path = dir.join(name);
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path)?;
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        Ok(self.writer.write_record(fields)?)
    }

    pub fn finish(mut self) -> io::Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Metadata written next to the CSV files.
pub struct Metadata {
    pub command: Command,
    pub config: RunConfig,
    pub outputs: Vec<PathBuf>,
    pub extra: serde_json::Map<String, Value>,
    pub failure: Option<String>,
}

impl Metadata {
    pub fn new(command: Command, config: &RunConfig) -> Self {
        Self { command, config: config.clone(), outputs: Vec::new(), extra: Default::default(), failure: None }
    }

    pub fn insert(&mut self, key: &str, value: impl Serialize) {
        self.extra.insert(key.to_string(), serde_json::to_value(value).expect("metadata serializes"));
    }

    pub fn write(&self, wall_seconds: f64) -> io::Result<PathBuf> {
        let names: Vec<String> = self
            .outputs
            .iter()
            .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
            .collect();
        let doc = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command.section(),
            "status": if self.failure.is_some() { "FAILED" } else { "ok" },
            "error": self.failure,
            "wall_time_seconds": wall_seconds,
            "config": self.config,
            "config_toml": self.config.to_toml(self.command),
            "outputs": names,
            "results": self.extra,
        });
        let path = self.config.out.join("metadata.json");
        let mut text = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

pub fn write_script(dir: &Path, name: &str, body: &str) -> io::Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

const SCRIPT_HEAD: &str = "#!/usr/bin/env python3\n# Generated by pfotoc. Requires numpy and matplotlib.\nimport argparse\nimport csv\nfrom pathlib import Path\n\nimport matplotlib.pyplot as plt\nimport numpy as np\n\nHERE = Path(__file__).resolve().parent\n\n\ndef read(name):\n    with open(HERE / name, newline=\"\") as f:\n        rows = list(csv.DictReader(f))\n    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}\n\n\n";

pub fn otoc_script() -> String {
    format!(
        "{SCRIPT_HEAD}d = read(\"otoc.csv\")\nfig, ax = plt.subplots(1, 2, figsize=(9, 3.5))\nax[0].plot(d[\"t\"], d[\"re_f\"])\nax[0].set_xlabel(\"t\")\nax[0].set_ylabel(\"Re F\")\nax[1].plot(d[\"t\"], d[\"c\"])\nax[1].set_xlabel(\"t\")\nax[1].set_ylabel(\"C\")\nfig.tight_layout()\nfig.savefig(HERE / \"otoc.png\", dpi=150)\n"
    )
}

pub fn lightcone_script(csv_name: &str, png_name: &str) -> String {
    format!(
        "{SCRIPT_HEAD}p = argparse.ArgumentParser()\np.add_argument(\"--interpolate\", action=\"store_true\", help=\"smooth the color map\")\nargs = p.parse_args()\nd = read(\"{csv_name}\")\nts = np.unique(d[\"t\"])\nks = np.unique(d[\"k\"])\ngrid = np.full((len(ts), len(ks)), np.nan)\nti = np.searchsorted(ts, d[\"t\"])\nki = np.searchsorted(ks, d[\"k\"])\ngrid[ti, ki] = d[\"re_f\"]\nfig, ax = plt.subplots(figsize=(5, 4))\nim = ax.imshow(grid, origin=\"lower\", aspect=\"auto\", cmap=\"viridis\",\n               interpolation=\"bilinear\" if args.interpolate else \"none\",\n               extent=[ks[0] - 0.5, ks[-1] + 0.5, ts[0], ts[-1]])\nax.set_xlabel(\"k\")\nax.set_ylabel(\"t\")\nfig.colorbar(im, label=\"Re F\")\nfig.tight_layout()\nfig.savefig(HERE / \"{png_name}\", dpi=150)\n"
    )
}

pub fn butterfly_script(sweep: &str) -> String {
    format!(
        "{SCRIPT_HEAD}d = read(\"butterfly.csv\")\nfig, ax = plt.subplots(1, 2, figsize=(9, 3.5))\nax[0].errorbar(d[\"sweep_value\"], d[\"v_left\"], yerr=d[\"stderr_l\"], marker=\"o\", label=\"left\")\nax[0].errorbar(d[\"sweep_value\"], d[\"v_right\"], yerr=d[\"stderr_r\"], marker=\"s\", label=\"right\")\nax[0].set_xlabel(\"{sweep}\")\nax[0].set_ylabel(\"butterfly velocity\")\nax[0].legend()\nax[1].plot(d[\"sweep_value\"], d[\"ratio\"], marker=\"o\")\nax[1].axhline(1.0, color=\"gray\", lw=0.8)\nax[1].set_xlabel(\"{sweep}\")\nax[1].set_ylabel(\"R = V_r / V_l\")\nfig.tight_layout()\nfig.savefig(HERE / \"butterfly.png\", dpi=150)\n"
    )
}

pub fn levels_script() -> String {
    format!(
        "{SCRIPT_HEAD}h = read(\"histogram.csv\")\ns = np.linspace(0, 4, 400)\nfig, ax = plt.subplots(figsize=(5, 3.5))\nax.bar(h[\"bin_lo\"], h[\"density\"], width=h[\"bin_hi\"] - h[\"bin_lo\"], align=\"edge\", alpha=0.6)\nax.plot(s, np.exp(-s), label=\"Poisson\")\nax.plot(s, np.pi / 2 * s * np.exp(-np.pi * s**2 / 4), label=\"Wigner-Dyson\")\nax.set_xlabel(\"s\")\nax.set_ylabel(\"P(s)\")\nax.legend()\nfig.tight_layout()\nfig.savefig(HERE / \"levels.png\", dpi=150)\n"
    )
}

pub fn zeromode_script() -> String {
    format!(
        "{SCRIPT_HEAD}b = read(\"boundary.csv\")\nfig, ax = plt.subplots(figsize=(5, 3.5))\nfor g in np.unique(b[\"j2\"]):\n    m = b[\"j2\"] == g\n    ax.plot(b[\"t\"][m], b[\"c\"][m], label=f\"J2={{g:g}}\")\nax.set_xlabel(\"t\")\nax.set_ylabel(\"C_1L\")\nax.legend()\nfig.tight_layout()\nfig.savefig(HERE / \"boundary.png\", dpi=150)\n"
    )
}
