//! Command-line front end: flat key = value configs, design / sweep /
//! validate pipelines, plain-text controller files, CSV results and a
//! generated plot script.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lti::DiscreteStateSpace;
use crate::ofdm::{ideal_ber_bpsk, OfdmConfig, Pulse};
use crate::relay::{design_canceler, lifted_design_plant, loop_gain, RelayParams};
use crate::sdh::{certify, Controller, GammaStep};
use crate::sim::{sweep_ebn0, sweep_gain_redesign, BerCurve, SimConfig};
use crate::validate::{run_all, CheckResult};
use crate::lti::ContinuousStateSpace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

const REQUIRED_KEYS: &[&str] = &[
    "name",
    "h",
    "carrier_freq",
    "delay",
    "coupling",
    "lna_gain",
    "pa_gain",
    "w_tau",
    "w_order",
    "f_order",
    "p_tau",
    "p_order",
    "n_fsfh",
    "n_subcarriers",
    "cp_len",
    "pulse",
    "symbol_period",
    "n_blocks",
    "seed",
];

const OPTIONAL_KEYS: &[&str] = &[
    "f_tau",
    "rolloff",
    "rrc_span",
    "oversample",
    "discard_blocks",
    "ebn0_db_list",
    "gain_sweep",
    "gain_ebn0_db",
    "n_blocks_gain",
    "out_dir",
];

/// Parsed experiment description; all flat scalars, validated on load.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !REQUIRED_KEYS.contains(&key.as_str()) && !OPTIONAL_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
        }
        for key in REQUIRED_KEYS {
            if !entries.contains_key(*key) {
                return Err(Error::Config(format!("missing required key `{key}`")));
            }
        }
        let cfg = Self {
            name: entries["name"].clone(),
            out_dir: PathBuf::from(entries.get("out_dir").map(String::as_str).unwrap_or("out")),
            seed: parse_u64(&entries, "seed")?,
            entries,
        };
        // Fail early on anything structurally invalid.
        cfg.relay_params()?.validate()?;
        cfg.ofdm_config()?.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    /// Stable hash over the semantic key/value pairs (canonical key order).
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in &self.entries {
            for byte in k.bytes().chain([b'='].into_iter()).chain(v.bytes()).chain([b'\n']) {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100_0000_01b3);
            }
        }
        h
    }

    pub fn relay_params(&self) -> Result<RelayParams> {
        let f_order = parse_usize(&self.entries, "f_order")?;
        let f_tau = if f_order > 0 {
            parse_f64(&self.entries, "f_tau")?
        } else {
            0.0
        };
        if f_order > 0 && !(f_tau > 0.0) {
            return Err(Error::Config("f_tau must be > 0 when f_order > 0".into()));
        }
        let params = RelayParams {
            carrier_freq: parse_f64(&self.entries, "carrier_freq")?,
            sample_period: parse_f64(&self.entries, "h")?,
            loop_delay: parse_f64(&self.entries, "delay")?,
            coupling: parse_f64(&self.entries, "coupling")?,
            lna_gain: parse_f64(&self.entries, "lna_gain")?,
            pa_gain: parse_f64(&self.entries, "pa_gain")?,
            n_fsfh: parse_usize(&self.entries, "n_fsfh")?,
            shaping: lowpass(&self.entries, "w_tau", "w_order")?,
            antialias: if f_order == 0 {
                ContinuousStateSpace::identity(1)
            } else {
                ContinuousStateSpace::lowpass_cascade(f_tau, f_order)
                    .map_err(|e| Error::Config(format!("f filter: {e}")))?
            },
            post_filter: lowpass(&self.entries, "p_tau", "p_order")?,
        };
        params.validate().map_err(|e| Error::Config(format!("{e}")))?;
        Ok(params)
    }

    pub fn ofdm_config(&self) -> Result<OfdmConfig> {
        let symbol_period = parse_usize(&self.entries, "symbol_period")?;
        let pulse = match self.entries["pulse"].as_str() {
            "squared" => Pulse::Squared {
                symbol_periods: symbol_period,
            },
            "rrc" => Pulse::RootRaisedCosine {
                symbol_periods: symbol_period,
                rolloff: parse_f64_required(&self.entries, "rolloff")?,
                span_symbols: self
                    .entries
                    .get("rrc_span")
                    .map(|_| parse_usize(&self.entries, "rrc_span"))
                    .transpose()?
                    .unwrap_or(48),
            },
            other => {
                return Err(Error::Config(format!(
                    "pulse must be `squared` or `rrc`, got `{other}`"
                )))
            }
        };
        let n_fsfh = parse_usize(&self.entries, "n_fsfh")?;
        Ok(OfdmConfig {
            n_sub: parse_usize(&self.entries, "n_subcarriers")?,
            cp_len: parse_usize(&self.entries, "cp_len")?,
            pulse,
            oversample: self
                .entries
                .get("oversample")
                .map(|_| parse_usize(&self.entries, "oversample"))
                .transpose()?
                .unwrap_or(n_fsfh),
            sample_period: parse_f64(&self.entries, "h")?,
        })
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::defaults(self.relay_params()?, self.ofdm_config()?);
        cfg.n_blocks = parse_usize(&self.entries, "n_blocks")?;
        cfg.seed = self.seed;
        if self.entries.contains_key("discard_blocks") {
            cfg.discard_blocks = parse_usize(&self.entries, "discard_blocks")?;
        }
        if let Some(list) = self.entries.get("ebn0_db_list") {
            cfg.ebn0_db = parse_list(list).map_err(|e| Error::Config(format!("ebn0_db_list: {e}")))?;
        }
        if let Some(list) = self.entries.get("gain_sweep") {
            cfg.a2_sweep = parse_list(list).map_err(|e| Error::Config(format!("gain_sweep: {e}")))?;
        }
        if self.entries.contains_key("gain_ebn0_db") {
            cfg.gain_ebn0_db = parse_f64(&self.entries, "gain_ebn0_db")?;
        }
        if self.entries.contains_key("n_blocks_gain") {
            cfg.n_blocks_gain = parse_usize(&self.entries, "n_blocks_gain")?;
        }
        cfg.validate().map_err(|e| Error::Config(format!("{e}")))?;
        Ok(cfg)
    }
}

fn lowpass(map: &BTreeMap<String, String>, tau_key: &str, order_key: &str) -> Result<ContinuousStateSpace> {
    let tau = parse_f64(map, tau_key)?;
    let order = parse_usize(map, order_key)?;
    if order == 0 {
        return Ok(ContinuousStateSpace::identity(1));
    }
    ContinuousStateSpace::lowpass_cascade(tau, order)
        .map_err(|e| Error::Config(format!("{tau_key}/{order_key}: {e}")))
}

fn parse_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    map[key]
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("key `{key}`: `{}` is not a number", map[key])))
}

fn parse_f64_required(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let v = map
        .get(key)
        .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))?;
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number")))
}

fn parse_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    map[key]
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("key `{key}`: `{}` is not a nonnegative integer", map[key])))
}

fn parse_u64(map: &BTreeMap<String, String>, key: &str) -> Result<u64> {
    map[key]
        .parse::<u64>()
        .map_err(|_| Error::Config(format!("key `{key}`: `{}` is not a u64", map[key])))
}

fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect()
}

/// Controller serialization: header line, then one section per matrix,
/// row-major with full round-trip precision.
pub fn controller_to_text(ctrl: &Controller) -> String {
    let k = &ctrl.system;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# period={:.17e} gamma={:.17e} n={}",
        k.period,
        ctrl.gamma,
        k.n_states()
    );
    for (name, m) in [("Ad", &k.a), ("Bd", &k.b), ("Cd", &k.c), ("Dd", &k.d)] {
        let _ = writeln!(out, "# {name} {} {}", m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.17e}", m[(r, c)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

pub fn controller_from_text(text: &str) -> Result<Controller> {
    let mut lines = text.lines().peekable();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty controller file".into()))?;
    let header = header
        .strip_prefix("# ")
        .ok_or_else(|| Error::Parse("controller header must start with `# `".into()))?;
    let mut period = None;
    let mut gamma = None;
    let mut n_states = None;
    for field in header.split_whitespace() {
        if let Some(v) = field.strip_prefix("period=") {
            period = Some(v.parse::<f64>().map_err(|_| Error::Parse("bad period".into()))?);
        } else if let Some(v) = field.strip_prefix("gamma=") {
            gamma = Some(v.parse::<f64>().map_err(|_| Error::Parse("bad gamma".into()))?);
        } else if let Some(v) = field.strip_prefix("n=") {
            n_states = Some(v.parse::<usize>().map_err(|_| Error::Parse("bad n".into()))?);
        }
    }
    let period = period.ok_or_else(|| Error::Parse("header missing period=".into()))?;
    let gamma = gamma.ok_or_else(|| Error::Parse("header missing gamma=".into()))?;
    let n_states = n_states.ok_or_else(|| Error::Parse("header missing n=".into()))?;

    let mut matrices = Vec::new();
    let mut current: Option<(String, usize, usize, Vec<f64>)> = None;
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(m) = current.take() {
                matrices.push(m);
            }
            let mut parts = rest.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| Error::Parse("matrix section missing name".into()))?
                .to_string();
            let rows: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("matrix {name}: bad row count")))?;
            let cols: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("matrix {name}: bad column count")))?;
            current = Some((name, rows, cols, Vec::with_capacity(rows * cols)));
        } else {
            let slot = current
                .as_mut()
                .ok_or_else(|| Error::Parse("data before any matrix section".into()))?;
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("matrix {}: `{tok}` is not a number", slot.0)))?;
                slot.3.push(v);
            }
        }
    }
    if let Some(m) = current.take() {
        matrices.push(m);
    }
    let find = |want: &str| -> Result<nalgebra::DMatrix<f64>> {
        let (_, rows, cols, data) = matrices
            .iter()
            .find(|(name, ..)| name == want)
            .ok_or_else(|| Error::Parse(format!("missing matrix section {want}")))?;
        if data.len() != rows * cols {
            return Err(Error::Parse(format!(
                "matrix {want}: expected {} values, found {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(nalgebra::DMatrix::from_row_slice(*rows, *cols, data))
    };
    let a = find("Ad")?;
    let b = find("Bd")?;
    let c = find("Cd")?;
    let d = find("Dd")?;
    if a.nrows() != n_states {
        return Err(Error::Parse(format!(
            "header says n={n_states} but Ad is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let system = DiscreteStateSpace::new(a, b, c, d, period).map_err(|e| Error::Parse(format!("{e}")))?;
    Ok(Controller {
        system,
        gamma,
        n_fsfh: 0,
        history: Vec::<GammaStep>::new(),
    })
}

fn write_if_changed(path: &Path, content: &str) -> Result<()> {
    if let Ok(existing) = std::fs::read_to_string(path) {
        if existing == content {
            return Ok(());
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn manifest_text(cfg: &ExperimentConfig, outputs: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "config_hash = {:016x}", cfg.hash());
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let _ = writeln!(out, "created_unix = {created}");
    for o in outputs {
        let _ = writeln!(out, "output = {o}");
    }
    out
}

pub struct DesignOutput {
    pub controller_path: PathBuf,
    pub report_path: PathBuf,
    pub gamma: f64,
}

/// Synthesize the canceler for a config and persist it with a report.
pub fn cmd_design(cfg: &ExperimentConfig) -> Result<DesignOutput> {
    let params = cfg.relay_params()?;
    let ctrl = design_canceler(&params)?;
    let raw = lifted_design_plant(&params)?;
    let cert = certify(&raw, &ctrl.system)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let controller_path = cfg.out_dir.join(format!("{}.controller.txt", cfg.name));
    write_if_changed(&controller_path, &controller_to_text(&ctrl))?;

    let mut report = String::new();
    let _ = writeln!(report, "experiment: {}", cfg.name);
    let _ = writeln!(report, "loop gain alpha = {}", loop_gain(&params));
    let _ = writeln!(report, "fsfh N = {}", ctrl.n_fsfh);
    let _ = writeln!(report, "plant states (lifted) = {}", raw.n_states());
    let _ = writeln!(report, "controller states = {}", ctrl.system.n_states());
    let _ = writeln!(report, "gamma = {:.6e}", ctrl.gamma);
    let _ = writeln!(
        report,
        "certificate: stable = {}, closed-loop norm = {:.6e}",
        cert.stable, cert.norm
    );
    let _ = writeln!(report, "gamma iteration:");
    for step in &ctrl.history {
        let _ = writeln!(
            report,
            "  gamma = {:.6e} -> {}",
            step.gamma,
            if step.feasible { "feasible" } else { "infeasible" }
        );
    }
    let report_path = cfg.out_dir.join(format!("{}.design.txt", cfg.name));
    write_if_changed(&report_path, &report)?;

    let manifest = manifest_text(
        cfg,
        &[
            controller_path.display().to_string(),
            report_path.display().to_string(),
        ],
    );
    std::fs::write(cfg.out_dir.join(format!("{}.manifest.txt", cfg.name)), manifest)?;

    Ok(DesignOutput {
        controller_path,
        report_path,
        gamma: ctrl.gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Ebn0,
    Gain,
}

fn curve_to_csv(curve: &BerCurve) -> String {
    let mut out = String::from("x,ber,bits,errors,stderr,diverged\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt(p.x),
            fmt(p.ber),
            p.bits,
            p.errors,
            fmt(p.std_err),
            p.diverged
        );
    }
    out
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.10e}")
    }
}

pub struct SweepOutput {
    pub csv_path: PathBuf,
    pub curve: BerCurve,
}

/// Run a BER sweep and persist CSV results plus a plot script. The ebn0
/// mode also writes `ideal.csv` with the closed-form reference curve. The
/// gain mode re-synthesizes the canceler at each operating point.
pub fn cmd_sweep(cfg: &ExperimentConfig, mode: SweepMode, design_first: bool) -> Result<SweepOutput> {
    let sim_cfg = cfg.sim_config()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let controller_path = cfg.out_dir.join(format!("{}.controller.txt", cfg.name));
    let ctrl = if controller_path.exists() {
        controller_from_text(&std::fs::read_to_string(&controller_path)?)?
    } else if design_first {
        cmd_design(cfg)?;
        controller_from_text(&std::fs::read_to_string(&controller_path)?)?
    } else {
        return Err(Error::Config(format!(
            "controller file {} not found (run `design` first or pass --design)",
            controller_path.display()
        )));
    };

    let (curve, suffix) = match mode {
        SweepMode::Ebn0 => (sweep_ebn0(&sim_cfg, &ctrl)?, "ebn0"),
        SweepMode::Gain => (sweep_gain_redesign(&sim_cfg)?, "gain"),
    };

    if !curve.points.is_empty() && curve.points.iter().all(|p| p.diverged) {
        return Err(Error::Diverged(f64::INFINITY));
    }

    let csv_path = cfg.out_dir.join(format!("{}.{}.csv", cfg.name, suffix));
    write_if_changed(&csv_path, &curve_to_csv(&curve))?;

    let mut outputs = vec![csv_path.display().to_string()];
    if mode == SweepMode::Ebn0 {
        let mut ideal = String::from("x,ber\n");
        for p in &curve.points {
            let b = ideal_ber_bpsk(10f64.powf(p.x / 10.0))?;
            let _ = writeln!(ideal, "{},{}", fmt(p.x), fmt(b));
        }
        let ideal_path = cfg.out_dir.join("ideal.csv");
        write_if_changed(&ideal_path, &ideal)?;
        outputs.push(ideal_path.display().to_string());
    }

    let plot_path = cfg.out_dir.join(format!("plot_{suffix}.py"));
    write_if_changed(&plot_path, &plot_script(cfg, mode))?;
    outputs.push(plot_path.display().to_string());

    let manifest = manifest_text(cfg, &outputs);
    std::fs::write(cfg.out_dir.join(format!("{}.manifest.txt", cfg.name)), manifest)?;

    Ok(SweepOutput { csv_path, curve })
}

fn plot_script(cfg: &ExperimentConfig, mode: SweepMode) -> String {
    let name = &cfg.name;
    match mode {
        SweepMode::Ebn0 => format!(
            r#"#!/usr/bin/env python3
"""Redraws the BER vs Eb/N0 curve from the sweep CSVs."""
import csv
import matplotlib.pyplot as plt

def read(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return rows

meas = read("{name}.ebn0.csv")
ideal = read("ideal.csv")
x = [float(r["x"]) for r in meas if r["ber"] != "nan"]
y = [float(r["ber"]) for r in meas if r["ber"] != "nan"]
xi = [float(r["x"]) for r in ideal]
yi = [float(r["ber"]) for r in ideal]
plt.semilogy(xi, yi, "k-.", label="ideal")
plt.semilogy(x, y, "bo-", label="simulated")
plt.xlabel("Eb/N0 [dB]")
plt.ylabel("BER")
plt.grid(True, which="both")
plt.legend()
plt.title("{name}: BER vs Eb/N0")
plt.savefig("{name}_ebn0.png", dpi=160)
print("wrote {name}_ebn0.png")
"#
        ),
        SweepMode::Gain => format!(
            r#"#!/usr/bin/env python3
"""Redraws the BER vs relay gain curve from the sweep CSV."""
import csv
import matplotlib.pyplot as plt

with open("{name}.gain.csv") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["x"]) for r in rows if r["ber"] != "nan"]
y = [float(r["ber"]) for r in rows if r["ber"] != "nan"]
ideal = {ideal}
plt.plot(x, [ideal] * len(x), "k-.", label="ideal")
plt.plot(x, y, "bo-", label="simulated")
plt.xlabel("relay gain a2")
plt.ylabel("BER")
plt.grid(True)
plt.legend()
plt.title("{name}: BER vs a2")
plt.savefig("{name}_gain.png", dpi=160)
print("wrote {name}_gain.png")
"#,
            ideal = {
                let e = cfg
                    .get("gain_ebn0_db")
                    .and_then(|s| s.parse::<f64>().ok())
                    .unwrap_or(2.0);
                format!("{:.10e}", ideal_ber_bpsk(10f64.powf(e / 10.0)).unwrap_or(f64::NAN))
            }
        ),
    }
}

/// Run the oracle suite; with a config and controller file, also parse and
/// re-certify the stored canceler.
pub fn cmd_validate(
    strict: bool,
    reference: Option<(&ExperimentConfig, &Path)>,
) -> Result<Vec<CheckResult>> {
    let mut results = run_all(strict);
    if let Some((cfg, controller_path)) = reference {
        let name = "stored controller certificate";
        let outcome = (|| -> Result<String> {
            let ctrl = controller_from_text(&std::fs::read_to_string(controller_path)?)?;
            let raw = lifted_design_plant(&cfg.relay_params()?)?;
            let cert = certify(&raw, &ctrl.system)?;
            if !cert.stable {
                return Err(Error::Structural("stored controller does not stabilize".into()));
            }
            if cert.norm > ctrl.gamma * 1.001 {
                return Err(Error::Structural(format!(
                    "certified norm {:.4e} exceeds stored gamma {:.4e}",
                    cert.norm, ctrl.gamma
                )));
            }
            Ok(format!(
                "stable, norm {:.4e} <= gamma {:.4e}",
                cert.norm, ctrl.gamma
            ))
        })();
        results.push(match outcome {
            Ok(detail) => CheckResult {
                name: name.into(),
                pass: true,
                detail,
            },
            Err(e) => CheckResult {
                name: name.into(),
                pass: false,
                detail: format!("{e}"),
            },
        });
    }
    Ok(results)
}

/// Parsed command line for the thin binary.
pub struct CliArgs {
    pub command: String,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_fsfh: Option<usize>,
    pub mode: Option<String>,
    pub design: bool,
    pub strict: bool,
    pub controller: Option<PathBuf>,
}

pub fn parse_args(argv: &[String]) -> std::result::Result<CliArgs, String> {
    if argv.is_empty() {
        return Err("missing command (design | sweep | validate)".into());
    }
    let mut args = CliArgs {
        command: argv[0].clone(),
        config: None,
        out: None,
        seed: None,
        n_fsfh: None,
        mode: None,
        design: false,
        strict: false,
        controller: None,
    };
    let mut it = argv[1..].iter();
    while let Some(flag) = it.next() {
        let mut take = || {
            it.next()
                .map(String::clone)
                .ok_or_else(|| format!("flag {flag} needs a value"))
        };
        match flag.as_str() {
            "--config" => args.config = Some(PathBuf::from(take()?)),
            "--out" => args.out = Some(PathBuf::from(take()?)),
            "--seed" => {
                args.seed = Some(take()?.parse().map_err(|_| "--seed needs a u64".to_string())?)
            }
            "--n-fsfh" => {
                args.n_fsfh = Some(take()?.parse().map_err(|_| "--n-fsfh needs an integer".to_string())?)
            }
            "--mode" => args.mode = Some(take()?),
            "--design" => args.design = true,
            "--strict" => args.strict = true,
            "--controller" => args.controller = Some(PathBuf::from(take()?)),
            other => return Err(format!("unknown flag {other}")),
        }
    }
    Ok(args)
}

fn load_config(args: &CliArgs) -> Result<ExperimentConfig> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.set("seed", seed.to_string());
    }
    if let Some(n) = args.n_fsfh {
        cfg.set("n_fsfh", n.to_string());
        cfg.relay_params()?.validate()?;
    }
    Ok(cfg)
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Diverged(_) => EXIT_DIVERGED,
        _ => EXIT_VALIDATION,
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run(argv: &[String]) -> i32 {
    let args = match parse_args(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            eprintln!("{USAGE}");
            return EXIT_CONFIG;
        }
    };
    match args.command.as_str() {
        "design" => match load_config(&args).and_then(|cfg| cmd_design(&cfg)) {
            Ok(out) => {
                println!(
                    "designed canceler: gamma = {:.6e} -> {}",
                    out.gamma,
                    out.controller_path.display()
                );
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        },
        "sweep" => {
            let mode = match args.mode.as_deref() {
                Some("ebn0") => SweepMode::Ebn0,
                Some("gain") => SweepMode::Gain,
                other => {
                    eprintln!("error: --mode must be ebn0 or gain (got {other:?})");
                    return EXIT_CONFIG;
                }
            };
            match load_config(&args).and_then(|cfg| cmd_sweep(&cfg, mode, args.design)) {
                Ok(out) => {
                    for p in &out.curve.points {
                        println!(
                            "x = {:>10}: ber = {}  ({} errors / {} bits){}",
                            p.x,
                            fmt(p.ber),
                            p.errors,
                            p.bits,
                            if p.diverged { "  DIVERGED" } else { "" }
                        );
                    }
                    println!("wrote {}", out.csv_path.display());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        "validate" => {
            let reference = match (&args.config, &args.controller) {
                (Some(_), Some(ctrl)) => match load_config(&args) {
                    Ok(cfg) => Some((cfg, ctrl.clone())),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return exit_code_for(&e);
                    }
                },
                _ => None,
            };
            let results = match cmd_validate(
                args.strict,
                reference.as_ref().map(|(cfg, path)| (cfg, path.as_path())),
            ) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_code_for(&e);
                }
            };
            let mut all_pass = true;
            for r in &results {
                println!("{} {:<28} {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
                all_pass &= r.pass;
            }
            if all_pass {
                EXIT_OK
            } else {
                EXIT_VALIDATION
            }
        }
        other => {
            eprintln!("error: unknown command `{other}`");
            eprintln!("{USAGE}");
            EXIT_CONFIG
        }
    }
}

const USAGE: &str = "usage:
  loopcancel design   --config PATH [--out DIR] [--seed U64] [--n-fsfh N]
  loopcancel sweep    --mode {ebn0|gain} --config PATH [--out DIR] [--seed U64] [--n-fsfh N] [--design]
  loopcancel validate [--strict] [--config PATH --controller PATH]";

#[cfg(test)]
mod tests {
    use super::*;

    pub(super) const SAMPLE: &str = "\
name = demo
h = 1.0
carrier_freq = 10000.0
delay = 1.0
coupling = 0.15
lna_gain = 1.0
pa_gain = 2000.0
w_tau = 2.0
w_order = 1
f_order = 0
p_tau = 0.001
p_order = 1
n_fsfh = 16
n_subcarriers = 64
cp_len = 16
pulse = squared
symbol_period = 2
n_blocks = 150
seed = 1
ebn0_db_list = 0, 2, 4, 6, 8
";

    #[test]
    fn parse_sample_config() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.name, "demo");
        assert_eq!(cfg.seed, 1);
        let sim = cfg.sim_config().unwrap();
        assert_eq!(sim.ebn0_db, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(sim.n_blocks, 150);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{SAMPLE}bogus = 1\n");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(format!("{err}").contains("bogus"));
    }

    #[test]
    fn missing_key_rejected() {
        let text = SAMPLE.replace("coupling = 0.15\n", "");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(format!("{err}").contains("coupling"));
    }

    #[test]
    fn invalid_value_names_offending_key() {
        let text = SAMPLE.replace("pa_gain = 2000.0", "pa_gain = -3");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(format!("{err}").contains("a2"), "{err}");
    }

    #[test]
    fn hash_stable_under_reordering_and_comments() {
        let cfg1 = ExperimentConfig::parse(SAMPLE).unwrap();
        let mut lines: Vec<&str> = SAMPLE.lines().collect();
        lines.reverse();
        let reordered = format!("# a comment\n{}\n", lines.join("\n"));
        let cfg2 = ExperimentConfig::parse(&reordered).unwrap();
        assert_eq!(cfg1.hash(), cfg2.hash());
        let cfg3 =
            ExperimentConfig::parse(&SAMPLE.replace("seed = 1", "seed = 2")).unwrap();
        assert_ne!(cfg1.hash(), cfg3.hash());
    }

    #[test]
    fn controller_roundtrip_bytes() {
        use crate::lti::DiscreteStateSpace;
        use nalgebra::DMatrix;
        let ctrl = Controller {
            system: DiscreteStateSpace::new(
                DMatrix::from_row_slice(2, 2, &[0.25, -1.5e-7, 3.0, 0.125]),
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]),
                DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]),
                DMatrix::zeros(2, 2),
                1.0,
            )
            .unwrap(),
            gamma: 0.2745,
            n_fsfh: 16,
            history: vec![],
        };
        let text = controller_to_text(&ctrl);
        let back = controller_from_text(&text).unwrap();
        assert_eq!(back.system.a, ctrl.system.a);
        assert_eq!(back.system.b, ctrl.system.b);
        assert_eq!(back.gamma, ctrl.gamma);
        // Re-serialization is byte-identical.
        assert_eq!(controller_to_text(&back), text);
    }

    #[test]
    fn corrupted_controller_gives_parse_diagnostic() {
        let err = controller_from_text("# period=1 gamma=0.5 n=2\n# Ad 2 2\n1 2\n3 oops\n# Bd 2 2\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn args_parse() {
        let argv: Vec<String> = ["sweep", "--mode", "ebn0", "--config", "x.cfg", "--seed", "7", "--design"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let args = parse_args(&argv).unwrap();
        assert_eq!(args.command, "sweep");
        assert_eq!(args.mode.as_deref(), Some("ebn0"));
        assert_eq!(args.seed, Some(7));
        assert!(args.design);
    }
}
