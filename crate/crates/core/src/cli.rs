//! Flat `key = value` run configuration plus the drivers and report
//! writers behind the `minmax-fem` binary.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::analysis::{
    dmax_scan, run_ladder, run_shift_study, scatter, solve_rung, LadderOutcome, PerObservable, Rung,
    SequenceResult, Study,
};
use crate::basis::reference_shapes;
use crate::error::{Error, Result};
use crate::geometry::{Mode, PhysicalSystem, TransformSpec, ALPHA_CODATA2018};
use crate::mesh::Diagonal;
use crate::solver::{schroedinger_solve, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Ladder,
    Shift,
    DmaxScan,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Ladder => "ladder",
            Command::Shift => "shift",
            Command::DmaxScan => "dmax-scan",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "solve" => Command::Solve,
            "ladder" => Command::Ladder,
            "shift" => Command::Shift,
            "dmax-scan" => Command::DmaxScan,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

/// A validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub system: PhysicalSystem,
    pub nu: u32,
    pub d_max: f64,
    pub p: usize,
    pub m_list: Vec<usize>,
    /// `D_max` values of a scan.
    pub d_list: Vec<f64>,
    pub diagonal: Diagonal,
    pub solver: SolverConfig,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub workers: usize,
}

impl RunConfig {
    pub fn study(&self) -> Study {
        Study {
            system: self.system,
            nu: self.nu,
            d_max: self.d_max,
            p: self.p,
            diagonal: self.diagonal,
            solver: self.solver.clone(),
        }
    }

    /// Checks every parameter against the constraints of the modules that
    /// will consume it.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(config_error(0, format!("{key}: {msg}")));
        self.system.validate()?;
        if !(self.system.two_jz == 1 || self.system.two_jz == -1) {
            return bad("jz", "only jz = ±1/2 is supported");
        }
        if !(self.nu % 2 == 0 && (2..=10).contains(&self.nu)) {
            return bad("nu", "nu must be even in 2..10");
        }
        TransformSpec::new(self.nu, self.d_max, self.system.r)?;
        for &d in &self.d_list {
            TransformSpec::new(self.nu, d, self.system.r)?;
        }
        reference_shapes(self.p)?;
        if self.m_list.is_empty() || self.m_list.contains(&0) {
            return bad("m_list", "needs at least one positive m");
        }
        if self.m_list.windows(2).any(|w| w[1] <= w[0]) {
            return bad("m_list", "rungs must be strictly increasing");
        }
        if self.command == Command::DmaxScan && self.d_list.is_empty() {
            return bad("D_list", "dmax-scan needs at least one D_max");
        }
        if self.workers == 0 {
            return bad("workers", "must be at least 1");
        }
        self.solver.validate()
    }
}

fn config_error(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

const KEYS: &[&str] = &[
    "command", "Z1", "Z2", "R", "alpha", "jz", "mode", "nu", "D_max", "D_list", "p", "m",
    "m_list", "n_I", "k_max", "eps0", "tol_outer", "max_outer", "tol_inner", "max_inner",
    "shift_offset", "accelerate", "diagonal", "format", "out", "workers",
];

/// Parses the flat configuration format. Defaults: `α = 1/137.035999084`,
/// `p = 10`, `k_max = 9`, `n_I = 25`, `jz = 1/2`, relativistic mode,
/// rising diagonals, CSV output.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut seen: Vec<(&str, &str, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(config_error(i + 1, format!("expected `key = value`, got `{line}`")));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(config_error(i + 1, format!("unknown key `{k}`")));
        }
        if seen.iter().any(|s| s.0 == k) {
            return Err(config_error(i + 1, format!("duplicate key `{k}`")));
        }
        seen.push((k, v, i + 1));
    }
    let get = |k: &str| seen.iter().find(|s| s.0 == k).map(|s| (s.1, s.2));
    fn num<T: std::str::FromStr>(k: &str, v: (&str, usize)) -> Result<T> {
        v.0.parse()
            .map_err(|_| config_error(v.1, format!("{k}: malformed value `{}`", v.0)))
    }
    fn list<T: std::str::FromStr>(k: &str, v: (&str, usize)) -> Result<Vec<T>> {
        v.0.split(',').map(|x| num(k, (x.trim(), v.1))).collect()
    }
    let req = |k: &str| get(k).ok_or_else(|| config_error(0, format!("{k}: required key missing")));
    let opt_num = |k: &str, d: f64| get(k).map_or(Ok(d), |v| num(k, v));

    let command = match get("command") {
        Some(v) => Command::parse(v.0)
            .ok_or_else(|| config_error(v.1, "command: must be solve, ladder, shift or dmax-scan"))?,
        None => Command::Ladder,
    };
    let mode = match get("mode") {
        None => Mode::Relativistic,
        Some(("relativistic", _)) => Mode::Relativistic,
        Some(("nonrelativistic", _)) => Mode::Nonrelativistic,
        Some((_, l)) => return Err(config_error(l, "mode: must be relativistic or nonrelativistic")),
    };
    let two_jz = match get("jz") {
        None => 1,
        Some(v) => {
            let jz: f64 = num("jz", v)?;
            let t = 2.0 * jz;
            if t.fract() != 0.0 || (t as i64) % 2 == 0 {
                return Err(config_error(v.1, "jz: must be a half-odd integer"));
            }
            t as i32
        }
    };
    let system = PhysicalSystem {
        z1: num("Z1", req("Z1")?)?,
        z2: num("Z2", req("Z2")?)?,
        r: num("R", req("R")?)?,
        alpha: opt_num("alpha", ALPHA_CODATA2018)?,
        two_jz,
        mode,
    };
    let nu: u32 = num("nu", req("nu")?)?;
    let d_max: f64 = num("D_max", req("D_max")?)?;
    let m_list = match (get("m"), get("m_list")) {
        (Some(_), Some((_, l))) => return Err(config_error(l, "m_list: give either m or m_list")),
        (Some(v), None) => vec![num("m", v)?],
        (None, Some(v)) => list("m_list", v)?,
        (None, None) => return Err(config_error(0, "m_list: required key missing")),
    };
    let d_list = get("D_list").map_or(Ok(Vec::new()), |v| list("D_list", v))?;
    let defaults = SolverConfig::default();
    let opt_f = |k: &str| get(k).map(|v| num::<f64>(k, v)).transpose();
    let opt_u = |k: &str, d: usize| get(k).map_or(Ok(d), |v| num(k, v));
    let solver = SolverConfig {
        eps0: opt_f("eps0")?,
        k_max: opt_u("k_max", defaults.k_max)?,
        tol_outer: opt_f("tol_outer")?,
        max_outer: opt_u("max_outer", defaults.max_outer)?,
        tol_inner: opt_num("tol_inner", defaults.tol_inner)?,
        max_inner: opt_u("max_inner", defaults.max_inner)?,
        shift_offset: opt_f("shift_offset")?,
        n_i: opt_u("n_I", defaults.n_i)?,
        accelerate: get("accelerate").map_or(Ok(defaults.accelerate), |v| num("accelerate", v))?,
    };
    let diagonal = match get("diagonal") {
        None | Some(("rising", _)) => Diagonal::Rising,
        Some(("falling", _)) => Diagonal::Falling,
        Some((_, l)) => return Err(config_error(l, "diagonal: must be rising or falling")),
    };
    let format = match get("format") {
        None => Format::Csv,
        Some(v) => Format::parse(v.0).ok_or_else(|| config_error(v.1, "format: must be csv or json"))?,
    };
    let cfg = RunConfig {
        command,
        system,
        nu,
        d_max,
        p: opt_u("p", 10)?,
        m_list,
        d_list,
        diagonal,
        solver,
        format,
        out: get("out").map(|v| PathBuf::from(v.0)),
        workers: opt_u("workers", 1)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Writes every key explicitly; [`parse_config`] reads it back unchanged.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let join = |v: Vec<String>| v.join(",");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("command", cfg.command.as_str().into());
    kv("Z1", cfg.system.z1.to_string());
    kv("Z2", cfg.system.z2.to_string());
    kv("R", cfg.system.r.to_string());
    kv("alpha", cfg.system.alpha.to_string());
    kv("jz", (cfg.system.two_jz as f64 / 2.0).to_string());
    kv("mode", cfg.system.mode.as_str().into());
    kv("nu", cfg.nu.to_string());
    kv("D_max", cfg.d_max.to_string());
    if !cfg.d_list.is_empty() {
        kv("D_list", join(cfg.d_list.iter().map(f64::to_string).collect()));
    }
    kv("p", cfg.p.to_string());
    kv("m_list", join(cfg.m_list.iter().map(usize::to_string).collect()));
    kv("n_I", cfg.solver.n_i.to_string());
    kv("k_max", cfg.solver.k_max.to_string());
    if let Some(e) = cfg.solver.eps0 {
        kv("eps0", e.to_string());
    }
    if let Some(t) = cfg.solver.tol_outer {
        kv("tol_outer", t.to_string());
    }
    kv("max_outer", cfg.solver.max_outer.to_string());
    kv("tol_inner", cfg.solver.tol_inner.to_string());
    kv("max_inner", cfg.solver.max_inner.to_string());
    if let Some(o) = cfg.solver.shift_offset {
        kv("shift_offset", o.to_string());
    }
    kv("accelerate", cfg.solver.accelerate.to_string());
    let diag = match cfg.diagonal {
        Diagonal::Rising => "rising",
        Diagonal::Falling => "falling",
    };
    kv("diagonal", diag.into());
    kv("format", cfg.format.as_str().into());
    if let Some(o) = &cfg.out {
        kv("out", o.display().to_string());
    }
    kv("workers", cfg.workers.to_string());
    s
}

/// Energy with 18 significant digits.
pub fn fmt_energy(x: f64) -> String {
    format!("{x:.17e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_energy)
}

pub const RUNG_HEADER: &str = "m,Ne,N,E_rel,E_nrel,shift,outer_iters";

fn rung_row(r: &Rung) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.m,
        r.ne,
        r.n,
        fmt_energy(r.e_rel),
        fmt_energy(r.e_nrel),
        fmt_energy(r.shift),
        r.outer_iters
    )
}

/// Single solve in the configured mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRecord {
    pub m: usize,
    #[serde(rename = "Ne")]
    pub ne: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub mode: &'static str,
    pub energy: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Serialize)]
struct Failure {
    m: usize,
    error: String,
}

#[derive(Debug, Serialize)]
struct LadderReport<'a> {
    #[serde(flatten)]
    result: &'a SequenceResult,
    failure: Option<Failure>,
}

#[derive(Debug, Serialize)]
struct ScanRow {
    #[serde(rename = "D_max")]
    d_max: f64,
    #[serde(flatten)]
    rung: Option<Rung>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct ScanReport {
    rows: Vec<ScanRow>,
    /// Largest minus smallest value over the successful rows.
    scatter: PerObservable,
}

/// A finished run: report text and whether every solve succeeded.
#[derive(Debug)]
pub struct Report {
    pub text: String,
    pub ok: bool,
}

/// Executes `cfg` and renders its report.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    match cfg.command {
        Command::Solve => run_solve(cfg),
        Command::Ladder => Ok(render_ladder(
            &run_ladder(&cfg.study(), &cfg.m_list, cfg.workers)?,
            cfg.format,
        )),
        Command::Shift => Ok(render_ladder(
            &run_shift_study(&cfg.study(), &cfg.m_list, cfg.workers)?,
            cfg.format,
        )),
        Command::DmaxScan => run_scan(cfg),
    }
}

fn run_solve(cfg: &RunConfig) -> Result<Report> {
    let study = cfg.study();
    let m = *cfg.m_list.last().expect("validated");
    let mesh = study.mesh(m)?;
    let (energy, outer, inner, residual) = match cfg.system.mode {
        Mode::Relativistic => {
            let s = solve_rung(&study, m, None)?;
            (s.rel.energy, s.rel.outer_iters, s.rel.inner_iters, s.rel.residual_norm)
        }
        Mode::Nonrelativistic => {
            let r = schroedinger_solve(&mesh, &cfg.system, &study.transform()?, &cfg.solver)?;
            (r.energy, r.outer_iters, r.inner_iters, r.residual_norm)
        }
    };
    let rec = SolveRecord {
        m,
        ne: mesh.ne(),
        n: mesh.n_nodes(),
        mode: cfg.system.mode.as_str(),
        energy,
        outer_iters: outer,
        inner_iters: inner,
        residual,
    };
    let text = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&rec).expect("serializable") + "\n",
        Format::Csv => format!(
            "m,Ne,N,mode,energy,outer_iters,inner_iters,residual\n{},{},{},{},{},{},{},{:e}\n",
            rec.m, rec.ne, rec.n, rec.mode, fmt_energy(rec.energy), rec.outer_iters,
            rec.inner_iters, rec.residual
        ),
    };
    Ok(Report { text, ok: true })
}

/// Ladder rows followed by `#` footer lines with fits, extrapolated
/// limits, uncertainties and any failure marker.
pub fn render_ladder(outcome: &LadderOutcome, format: Format) -> Report {
    let res = &outcome.result;
    let failure = outcome.failure.as_ref().map(|(m, e)| Failure {
        m: *m,
        error: e.to_string(),
    });
    let ok = failure.is_none();
    let text = match format {
        Format::Json => {
            let rep = LadderReport { result: res, failure };
            serde_json::to_string_pretty(&rep).expect("serializable") + "\n"
        }
        Format::Csv => {
            let mut s = String::from(RUNG_HEADER);
            s.push('\n');
            for r in &res.rungs {
                s.push_str(&rung_row(r));
                s.push('\n');
            }
            for (name, v) in [("q_fit", &res.q_fit), ("E_extrap", &res.e_extrap), ("uncertainty", &res.uncertainty)] {
                let _ = writeln!(s, "# {name},{},{},{}", fmt_opt(v.rel), fmt_opt(v.nrel), fmt_opt(v.shift));
            }
            if let Some(f) = failure {
                let _ = writeln!(s, "# FAILED m={}: {}", f.m, f.error);
            }
            s
        }
    };
    Report { text, ok }
}

fn run_scan(cfg: &RunConfig) -> Result<Report> {
    let m = *cfg.m_list.last().expect("validated");
    let rows: Vec<ScanRow> = dmax_scan(&cfg.study(), &cfg.d_list, m, cfg.workers)
        .into_iter()
        .map(|(d, r)| match r {
            Ok(rung) => ScanRow { d_max: d, rung: Some(rung), error: None },
            Err(e) => ScanRow { d_max: d, rung: None, error: Some(e.to_string()) },
        })
        .collect();
    let good: Vec<&Rung> = rows.iter().filter_map(|r| r.rung.as_ref()).collect();
    let spread = |f: fn(&Rung) -> f64| {
        (!good.is_empty()).then(|| scatter(&good.iter().map(|r| f(r)).collect::<Vec<_>>()))
    };
    let report = ScanReport {
        scatter: PerObservable {
            rel: spread(|r| r.e_rel),
            nrel: spread(|r| r.e_nrel),
            shift: spread(|r| r.shift),
        },
        rows,
    };
    let ok = report.rows.iter().all(|r| r.error.is_none());
    let text = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&report).expect("serializable") + "\n",
        Format::Csv => {
            let mut s = format!("D_max,{RUNG_HEADER}\n");
            for row in &report.rows {
                match (&row.rung, &row.error) {
                    (Some(r), _) => {
                        let _ = writeln!(s, "{},{}", row.d_max, rung_row(r));
                    }
                    (None, e) => {
                        let _ = writeln!(s, "# FAILED D_max={}: {}", row.d_max, e.as_deref().unwrap_or(""));
                    }
                }
            }
            let sc = &report.scatter;
            let _ = writeln!(s, "# scatter,{},{},{}", fmt_opt(sc.rel), fmt_opt(sc.nrel), fmt_opt(sc.shift));
            s
        }
    };
    Ok(Report { text, ok })
}
