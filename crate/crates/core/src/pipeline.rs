//! Run orchestration: config in, manifest and artifacts out.
//!
//! Each run lives in `<output root>/<run_id>/`. Multi-entry commands
//! (sweep, masscurve, lf-check) record every entry in the manifest as it
//! finishes, so an interrupted run resumes where it stopped.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::dynamics::{self, classify, evolve, gaussian_datum, EvolveOptions, MeiParams};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::frequency::{
    find_omega_star, solve_beta, solve_branches, solve_gamma, sweep_entry, GroundState,
    SolverOptions, SweepRecord, SWEEP_CSV_HEADER,
};
use crate::functionals::{gn_ratio, rho_lower_bound, rho_test};
use crate::grid::Grid;
use crate::init;
use crate::mass::{lf_check, mass_record, solve_m_c, MassCurveRecord, MassInit, MASS_CSV_HEADER};
use crate::params::{DomainPolicy, DomainSpec, ModelParams};
use crate::reference::reference_constants;
use crate::snapshot;

pub const OUTPUT_ROOT_ENV: &str = "WGNLS_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "wgnls-out";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Groundstate,
    Sweep,
    Threshold,
    Masscurve,
    LfCheck,
    Evolve,
    GnTest,
    RhoTest,
    Reference,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Self::Groundstate,
        Self::Sweep,
        Self::Threshold,
        Self::Masscurve,
        Self::LfCheck,
        Self::Evolve,
        Self::GnTest,
        Self::RhoTest,
        Self::Reference,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Groundstate => "groundstate",
            Self::Sweep => "sweep",
            Self::Threshold => "threshold",
            Self::Masscurve => "masscurve",
            Self::LfCheck => "lf-check",
            Self::Evolve => "evolve",
            Self::GnTest => "gn-test",
            Self::RhoTest => "rho-test",
            Self::Reference => "reference",
        }
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    Partial,
    Failed,
}

impl RunStatus {
    /// 0 complete, 2 partial, 1 failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Complete => 0,
            Self::Partial => 2,
            Self::Failed => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryStatus {
    Pending,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub key: String,
    pub status: EntryStatus,
    pub error: Option<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: Command,
    pub code_version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub status: RunStatus,
    pub entries: Vec<EntryRecord>,
    pub outputs: Vec<OutputFile>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Outputs whose file is missing or whose checksum does not match.
    pub fn corrupted(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| fs::read(dir.join(&o.path)).map(|b| sha256_hex(&b) != o.sha256).unwrap_or(true))
            .map(|o| o.path.clone())
            .collect()
    }

    pub fn failed_entries(&self) -> Vec<&EntryRecord> {
        self.entries.iter().filter(|e| e.status == EntryStatus::Failed).collect()
    }

    fn record_output(&mut self, path: &str, bytes: &[u8]) {
        let sha = sha256_hex(bytes);
        match self.outputs.iter_mut().find(|o| o.path == path) {
            Some(o) => o.sha256 = sha,
            None => self.outputs.push(OutputFile {
                path: path.to_string(),
                sha256: sha,
            }),
        }
    }

    fn entry_output_valid(&self, dir: &Path, e: &EntryRecord) -> bool {
        e.outputs.iter().all(|p| {
            self.outputs
                .iter()
                .find(|o| &o.path == p)
                .is_some_and(|o| fs::read(dir.join(p)).is_ok_and(|b| sha256_hex(&b) == o.sha256))
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Content hash of the canonical config, the seed and the code version.
pub fn run_id(config: &Config, seed: u64) -> String {
    let text = format!("{}\nseed={seed}\nversion={CODE_VERSION}\n", config.canonical());
    sha256_hex(text.as_bytes())[..16].to_string()
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_root: PathBuf,
    /// Stop after this many entries are recorded (fault injection).
    pub stop_after: Option<usize>,
}

impl RunOptions {
    /// Output root from the environment, else `./wgnls-out`.
    pub fn from_env() -> Self {
        Self {
            output_root: std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT)),
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub dir: PathBuf,
    /// Entry keys computed by this invocation.
    pub computed: Vec<String>,
}

/// Parsed settings shared by all commands.
#[derive(Debug, Clone)]
pub struct Settings {
    pub command: Command,
    pub seed: u64,
    pub jobs: usize,
    pub params: ModelParams,
    pub policy: DomainPolicy,
    pub opts: SolverOptions,
}

impl Settings {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let command: Command = cfg.require_str("run", "command")?.parse()?;
        let seed = cfg.get_or("run", "seed", 0u64)?;
        let jobs = match cfg.get::<usize>("run", "jobs")? {
            Some(0) | None => thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            Some(n) => n,
        };
        let params = ModelParams::new(
            cfg.get_or("model", "d", 1usize)?,
            cfg.get_or("model", "m", 1usize)?,
            cfg.get_or("model", "alpha", 4.0f64)?,
        )?;
        let with_torus = params.m > 0;
        let desk = DomainSpec::desk();
        let policy = match cfg.get_str("domain", "policy").unwrap_or("fixed") {
            "per-frequency" => DomainPolicy::PerFrequency,
            "fixed" => DomainPolicy::Fixed(DomainSpec::new(
                cfg.get_or("domain", "half_length", desk.half_length)?,
                cfg.get_or("domain", "n_x", desk.n_x)?,
                if with_torus {
                    Some(cfg.get_or("domain", "n_y", desk.n_y.unwrap_or(64))?)
                } else {
                    None
                },
            )?),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "domain policy `{other}` (expected fixed or per-frequency)"
                )))
            }
        };
        let d = SolverOptions::default();
        let opts = SolverOptions {
            tol: cfg.get_or("solver", "tol", d.tol)?,
            max_iter: cfg.get_or("solver", "max_iter", d.max_iter)?,
            constraint_tol: cfg.get_or("solver", "constraint_tol", d.constraint_tol)?,
            modulus: cfg.get_or("solver", "modulus", d.modulus)?,
            natural_gauge: cfg.get_or("solver", "natural_gauge", d.natural_gauge)?,
        };
        Ok(Self {
            command,
            seed,
            jobs,
            params,
            policy,
            opts,
        })
    }

    fn fixed_grid(&self) -> Result<Arc<Grid>> {
        match self.policy {
            DomainPolicy::Fixed(d) => Grid::new(self.params, d),
            DomainPolicy::PerFrequency => Err(Error::InvalidArgument(format!(
                "{} needs a fixed domain",
                self.command.as_str()
            ))),
        }
    }
}

/// Files produced by one entry, relative to the run directory.
#[derive(Debug, Default)]
pub struct EntryOutput {
    files: Vec<(String, Vec<u8>)>,
}

impl EntryOutput {
    fn add(&mut self, path: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }
}

pub fn run_path(path: &Path, opts: &RunOptions) -> Result<RunReport> {
    run(&Config::load(path)?, opts)
}

pub fn run(cfg: &Config, opts: &RunOptions) -> Result<RunReport> {
    let s = Settings::from_config(cfg)?;
    let id = run_id(cfg, s.seed);
    let dir = opts.output_root.join(&id);
    fs::create_dir_all(&dir)?;
    let keys = entry_keys(cfg, &s)?;
    let mut manifest = match RunManifest::load(&dir) {
        Ok(m) if m.run_id == id => m,
        _ => RunManifest {
            run_id: id.clone(),
            command: s.command,
            code_version: CODE_VERSION.to_string(),
            seed: s.seed,
            config: cfg.flatten(),
            status: RunStatus::Partial,
            entries: keys
                .iter()
                .map(|k| EntryRecord {
                    key: k.clone(),
                    status: EntryStatus::Pending,
                    error: None,
                    outputs: vec![],
                })
                .collect(),
            outputs: vec![],
            timings: BTreeMap::new(),
        },
    };
    if manifest.status == RunStatus::Complete && manifest.corrupted(&dir).is_empty() {
        return Ok(RunReport {
            manifest,
            dir,
            computed: vec![],
        });
    }
    let pending: Vec<usize> = (0..manifest.entries.len())
        .filter(|&i| {
            let e = &manifest.entries[i];
            !(e.status == EntryStatus::Complete && manifest.entry_output_valid(&dir, e))
        })
        .collect();
    let sequential = s.jobs <= 1 || sweep_warm_start(cfg, &s)? || pending.len() <= 1;
    let compute = |i: usize| -> Result<EntryOutput> { compute_entry(cfg, &s, &dir, &keys, i) };
    let mut computed = Vec::new();
    let mut interrupted = false;
    {
        let mut on_done = |i: usize, r: Result<EntryOutput>, secs: f64| -> Result<bool> {
            let key = keys[i].clone();
            let entry_outputs = match r {
                Ok(out) => {
                    let mut paths = vec![];
                    for (rel, bytes) in &out.files {
                        write_atomic(&dir.join(rel), bytes)?;
                        manifest.record_output(rel, bytes);
                        paths.push(rel.clone());
                    }
                    manifest.entries[i].status = EntryStatus::Complete;
                    manifest.entries[i].error = None;
                    paths
                }
                Err(e) => {
                    manifest.entries[i].status = EntryStatus::Failed;
                    manifest.entries[i].error = Some(e.to_string());
                    vec![]
                }
            };
            manifest.entries[i].outputs = entry_outputs;
            manifest.timings.insert(format!("entry:{key}"), secs);
            computed.push(key);
            save_manifest(&dir, &manifest)?;
            Ok(opts.stop_after.is_none_or(|k| computed.len() < k))
        };
        if sequential {
            for &i in &pending {
                let t = Instant::now();
                let r = compute(i);
                if !on_done(i, r, t.elapsed().as_secs_f64())? {
                    interrupted = computed.len() < pending.len();
                    break;
                }
            }
        } else {
            interrupted = run_parallel(&pending, s.jobs, &compute, &mut on_done)?;
        }
    }
    let all_done = manifest.entries.iter().all(|e| e.status != EntryStatus::Pending);
    if !interrupted && all_done {
        let t = Instant::now();
        let out = assemble(&s, &dir, &manifest)?;
        for (rel, bytes) in &out.files {
            write_atomic(&dir.join(rel), bytes)?;
            manifest.record_output(rel, bytes);
        }
        manifest.timings.insert("assemble".into(), t.elapsed().as_secs_f64());
    }
    let failed = manifest.entries.iter().filter(|e| e.status == EntryStatus::Failed).count();
    manifest.status = if interrupted || !all_done {
        RunStatus::Partial
    } else if failed == 0 {
        RunStatus::Complete
    } else if failed == manifest.entries.len() {
        RunStatus::Failed
    } else {
        RunStatus::Partial
    };
    save_manifest(&dir, &manifest)?;
    Ok(RunReport {
        manifest,
        dir,
        computed,
    })
}

/// Workers pull entries from a shared counter; results come back to the
/// calling thread, which is the only writer. Returns true if stopped early.
fn run_parallel(
    pending: &[usize],
    jobs: usize,
    compute: &(dyn Fn(usize) -> Result<EntryOutput> + Sync),
    on_done: &mut dyn FnMut(usize, Result<EntryOutput>, f64) -> Result<bool>,
) -> Result<bool> {
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel();
    thread::scope(|sc| -> Result<bool> {
        for _ in 0..jobs.min(pending.len()) {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            sc.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(k) else { break };
                let t = Instant::now();
                let r = compute(i);
                if tx.send((i, r, t.elapsed().as_secs_f64())).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut done = 0;
        let mut result = Ok(false);
        for (i, r, secs) in rx {
            if stop.load(Ordering::SeqCst) {
                continue;
            }
            done += 1;
            match on_done(i, r, secs) {
                Ok(true) => {}
                Ok(false) => {
                    stop.store(true, Ordering::SeqCst);
                    result = Ok(done < pending.len());
                }
                Err(e) => {
                    stop.store(true, Ordering::SeqCst);
                    result = Err(e);
                }
            }
        }
        result
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn save_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

fn sweep_warm_start(cfg: &Config, s: &Settings) -> Result<bool> {
    Ok(s.command == Command::Sweep
        && matches!(s.policy, DomainPolicy::Fixed(_))
        && cfg.get_or("sweep", "warm_start", true)?)
}

fn sorted_list(cfg: &Config, section: &str, key: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = cfg.get_list(section, key)?.unwrap_or_default();
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "[{section}] {key} must be strictly increasing"
        )));
    }
    Ok(v)
}

fn entry_keys(cfg: &Config, s: &Settings) -> Result<Vec<String>> {
    Ok(match s.command {
        Command::Sweep => sorted_list(cfg, "sweep", "omegas")?
            .iter()
            .map(|w| format!("omega_{w}"))
            .collect(),
        Command::LfCheck => sorted_list(cfg, "lf-check", "omegas")?
            .iter()
            .map(|w| format!("omega_{w}"))
            .collect(),
        Command::Masscurve => sorted_list(cfg, "masscurve", "masses")?
            .iter()
            .map(|c| format!("c_{c}"))
            .collect(),
        c => vec![c.as_str().to_string()],
    })
}

fn entry_value(key: &str) -> f64 {
    key.split_once('_')
        .and_then(|(_, v)| v.parse().ok())
        .expect("entry keys are built from numbers")
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn compute_entry(cfg: &Config, s: &Settings, dir: &Path, keys: &[String], i: usize) -> Result<EntryOutput> {
    let key = &keys[i];
    let mut out = EntryOutput::default();
    match s.command {
        Command::Sweep => {
            let w = entry_value(key);
            let grid = Grid::new(s.params, s.policy.domain_for(w, s.params.m > 0))?;
            let warm = if sweep_warm_start(cfg, s)? {
                warm_source(dir, keys, i, &grid)?
            } else {
                None
            };
            let (rec, gs) = sweep_entry(&grid, w, warm.as_ref().map(|(f, o)| (f, *o)), &s.opts)?;
            out.add(format!("entries/{key}.json"), json_bytes(&rec)?);
            out.add(format!("snapshots/{key}.wgnls"), snapshot::encode(&gs.field));
        }
        Command::LfCheck => {
            let w = entry_value(key);
            let grid = Grid::new(s.params, s.policy.domain_for(w, s.params.m > 0))?;
            let (rec, _, ms) = lf_check(&grid, w, s.seed, &s.opts)?;
            out.add(format!("entries/{key}.json"), json_bytes(&rec)?);
            out.add(format!("snapshots/{key}.wgnls"), snapshot::encode(&ms.state.field));
        }
        Command::Masscurve => {
            let c = entry_value(key);
            let grid = s.fixed_grid()?;
            let init = match cfg.get_str("masscurve", "init").unwrap_or("surgery") {
                "surgery" => MassInit::Surgery,
                "random" => MassInit::Random {
                    seed: s.seed,
                    stream: i as u64,
                },
                other => return Err(Error::InvalidArgument(format!("masscurve init `{other}`"))),
            };
            let ms = solve_m_c(&grid, c, &init, &s.opts)?;
            out.add(format!("entries/{key}.json"), json_bytes(&mass_record(c, &ms))?);
            out.add(format!("snapshots/{key}.wgnls"), snapshot::encode(&ms.state.field));
        }
        Command::Groundstate => groundstate(cfg, s, &mut out)?,
        Command::Threshold => {
            let lo: f64 = cfg.require("threshold", "lo")?;
            let hi: f64 = cfg.require("threshold", "hi")?;
            let tol = cfg.get_or("threshold", "tol", 0.02 * lo)?;
            let domain = s.policy.domain_for(lo, true);
            let r = find_omega_star(&s.params, &domain, (lo, hi), tol, &s.opts)?;
            let mut csv = String::from("omega,gamma,rd_reference,y_fraction,below_reference,y_dependent,converged\n");
            for p in &r.probes {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    p.omega, p.gamma, p.rd_reference, p.y_fraction, p.below_reference, p.y_dependent, p.converged
                );
            }
            out.add("threshold.json", json_bytes(&r)?);
            out.add("threshold.csv", csv.into_bytes());
        }
        Command::Evolve => evolve_entry(cfg, s, &mut out)?,
        Command::GnTest => {
            let grid = s.fixed_grid()?;
            let n: usize = cfg.get_or("gn-test", "samples", 200)?;
            let mut csv = String::from("sample,ratio\n");
            let mut sup: f64 = 0.0;
            for k in 0..n {
                let mut r = init::rng(s.seed, k as u64);
                let u = init::random_smooth(&grid, &mut r, true);
                let q = gn_ratio(&u)?;
                sup = sup.max(q);
                let _ = writeln!(csv, "{k},{q}");
            }
            #[derive(Serialize)]
            struct GnSummary {
                samples: usize,
                sup_ratio: f64,
            }
            out.add("gn.csv", csv.into_bytes());
            out.add("gn.json", json_bytes(&GnSummary { samples: n, sup_ratio: sup })?);
        }
        Command::RhoTest => {
            let alpha = s.params.alpha;
            let lb = rho_lower_bound(alpha).max(0.0);
            let a = cfg.get_or("rho-test", "a", 0.5 * (lb + std::f64::consts::PI))?;
            let n_y = cfg.get_or("rho-test", "n_y", 4096usize)?;
            let rho = rho_test(a, alpha, n_y)?;
            #[derive(Serialize)]
            struct RhoSummary {
                a: f64,
                alpha: f64,
                n_y: usize,
                l2_squared: f64,
                power_alpha_plus_2: f64,
                torus_length: f64,
            }
            out.add(
                "rho.json",
                json_bytes(&RhoSummary {
                    a,
                    alpha,
                    n_y,
                    l2_squared: rho.l2_squared(),
                    power_alpha_plus_2: rho.lp_power(alpha + 2.0),
                    torus_length: 2.0 * std::f64::consts::PI,
                })?,
            );
        }
        Command::Reference => {
            let d = cfg.get_or("reference", "d", s.params.d)?;
            out.add("reference.json", json_bytes(&reference_constants(d, s.params.alpha)?)?);
        }
    }
    Ok(out)
}

/// Last earlier entry that converged, as a warm start on `grid`.
fn warm_source(dir: &Path, keys: &[String], i: usize, grid: &Arc<Grid>) -> Result<Option<(Field, f64)>> {
    for j in (0..i).rev() {
        let rec_path = dir.join(format!("entries/{}.json", keys[j]));
        let Ok(text) = fs::read_to_string(&rec_path) else {
            continue;
        };
        let rec: SweepRecord = serde_json::from_str(&text)?;
        if !rec.converged {
            continue;
        }
        let f = snapshot::load(&dir.join(format!("snapshots/{}.wgnls", keys[j])))?;
        if f.domain() != grid.domain() {
            return Ok(None);
        }
        return Ok(Some((Field::new(grid.clone(), f.values().to_vec())?, rec.omega)));
    }
    Ok(None)
}

fn groundstate(cfg: &Config, s: &Settings, out: &mut EntryOutput) -> Result<()> {
    let w: f64 = cfg.require("groundstate", "omega")?;
    let grid = Grid::new(s.params, s.policy.domain_for(w, s.params.m > 0))?;
    let m = init::modulated(&grid, w);
    let flat = grid.has_torus().then(|| init::flat(&grid, w));
    let b = match cfg.get_str("groundstate", "constraint").unwrap_or("pohozaev") {
        "pohozaev" | "K" => solve_branches(&m, flat.as_ref(), |u| solve_gamma(u, w, &s.opts))?,
        "nehari" | "N" => solve_branches(&m, flat.as_ref(), |u| solve_beta(u, w, &s.opts))?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "constraint `{other}` (expected pohozaev/K or nehari/N)"
            )))
        }
    };
    let gs: &GroundState = b.best();
    out.add("groundstate.json", json_bytes(&gs.summary())?);
    out.add("groundstate.wgnls", snapshot::encode(&gs.field));
    out.add("profile.csv", profile_csv(&gs.field).into_bytes());
    Ok(())
}

/// `x, |u(x, 0)|, |u(x, pi)|` (the last two equal without a torus).
fn profile_csv(u: &Field) -> String {
    let n = u.domain().n_x;
    let inner = u.len() / n;
    let mut s = String::from("x,abs_y0,abs_ypi\n");
    for j in 0..n {
        let x = u.grid().axis_coords(0)[j];
        let a = u.values()[j * inner].norm();
        let b = u.values()[j * inner + inner / 2].norm();
        let _ = writeln!(s, "{x},{a},{b}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveSummary {
    pub status: dynamics::TraceStatus,
    pub steps: usize,
    pub valid_len: usize,
    pub t_end: f64,
    pub dt: f64,
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
    pub grad_growth: f64,
    pub classification: Option<dynamics::ClassifyReport>,
}

fn evolve_entry(cfg: &Config, s: &Settings, out: &mut EntryOutput) -> Result<()> {
    let u0 = match cfg.get_str("evolve", "init").unwrap_or("gaussian") {
        "gaussian" => {
            let grid = s.fixed_grid()?;
            gaussian_datum(
                &grid,
                cfg.get_or("evolve", "mass", 4.0)?,
                cfg.get_or("evolve", "sigma", 1.0)?,
                cfg.get_or("evolve", "modulation", 0.0)?,
            )
        }
        path => snapshot::load(Path::new(path))?,
    };
    let grid = u0.grid().clone();
    let t_end: f64 = cfg.require("evolve", "t_end")?;
    let dt = cfg.get_or("evolve", "dt", dynamics::default_dt(&grid))?;
    let d = EvolveOptions::default();
    let eo = EvolveOptions {
        sample_every: cfg.get_or("evolve", "sample_every", d.sample_every)?,
        adaptive: cfg.get_or("evolve", "adaptive", d.adaptive)?,
        grad_cutoff: cfg.get_or("evolve", "grad_cutoff", d.grad_cutoff)?,
        ..d
    };
    let mut trace = evolve(&u0, t_end, dt, &eo)?;
    let classification = match cfg.get::<f64>("evolve", "classify_c")? {
        Some(c) => {
            let nu = cfg.get_or("evolve", "classify_nu", 0.0)?;
            let m_c = match cfg.get::<f64>("evolve", "m_c")? {
                Some(v) => v,
                None => solve_m_c(&grid, c, &MassInit::Surgery, &s.opts)?.state.value,
            };
            Some(classify(&mut trace, &MeiParams { c, m_c: Some(m_c), nu })?)
        }
        None => None,
    };
    let summary = EvolveSummary {
        status: trace.status,
        steps: trace.steps,
        valid_len: trace.valid_len,
        t_end,
        dt,
        max_mass_drift: trace.max_mass_drift(),
        max_energy_drift: trace.max_energy_drift(),
        grad_growth: trace.grad_growth(),
        classification,
    };
    out.add("trace.csv", trace.csv().into_bytes());
    out.add("evolve.json", json_bytes(&summary)?);
    Ok(())
}

/// Whole-run tables built from the per-entry records.
fn assemble(s: &Settings, dir: &Path, m: &RunManifest) -> Result<EntryOutput> {
    let mut out = EntryOutput::default();
    let read = |key: &str| -> Result<String> {
        let p = dir.join(format!("entries/{key}.json"));
        fs::read_to_string(&p).map_err(|_| Error::MissingOutput(p))
    };
    let complete = m.entries.iter().filter(|e| e.status == EntryStatus::Complete);
    match s.command {
        Command::Sweep => {
            let mut csv = format!("{SWEEP_CSV_HEADER}\n");
            for e in complete {
                let r: SweepRecord = serde_json::from_str(&read(&e.key)?)?;
                let _ = writeln!(csv, "{}", r.csv_row());
            }
            out.add("sweep.csv", csv.into_bytes());
        }
        Command::Masscurve | Command::LfCheck => {
            let mut csv = format!("{MASS_CSV_HEADER}\n");
            for e in complete {
                let r: MassCurveRecord = serde_json::from_str(&read(&e.key)?)?;
                let _ = writeln!(csv, "{}", r.csv_row());
            }
            let name = if s.command == Command::Masscurve { "masscurve.csv" } else { "lfcheck.csv" };
            out.add(name, csv.into_bytes());
        }
        _ => {}
    }
    Ok(out)
}

/// Reads a CSV written by this module into named columns.
fn read_columns(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|_| Error::MissingOutput(path.to_path_buf()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let mut cols: BTreeMap<String, Vec<f64>> = header.iter().map(|h| (h.to_string(), vec![])).collect();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        for (h, v) in header.iter().zip(line.split(',')) {
            let x = match v {
                "true" => 1.0,
                "false" => 0.0,
                "" => f64::NAN,
                _ => v.parse().unwrap_or(f64::NAN),
            };
            cols.get_mut(*h).expect("header key").push(x);
        }
    }
    Ok(cols)
}

fn series(path: &Path, names: &[&str], cols: &BTreeMap<String, Vec<f64>>) -> Result<PathBuf> {
    let mut s = format!("# {}\n", names.join(" "));
    let n = cols.get(names[0]).map_or(0, |c| c.len());
    for i in 0..n {
        let row: Vec<String> = names.iter().map(|k| cols[*k][i].to_string()).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    write_atomic(path, s.as_bytes())?;
    Ok(path.to_path_buf())
}

/// Plain whitespace-separated series under `<dir>/plots/`.
pub fn emit_plots(m: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    let plots = dir.join("plots");
    let mut files = vec![];
    let source = |name: &str| -> Result<BTreeMap<String, Vec<f64>>> {
        if !m.outputs.iter().any(|o| o.path == name) {
            return Err(Error::MissingOutput(dir.join(name)));
        }
        read_columns(&dir.join(name))
    };
    match m.command {
        Command::Sweep => {
            let c = source("sweep.csv")?;
            files.push(series(&plots.join("gamma.dat"), &["omega", "gamma", "rd_reference"], &c)?);
            files.push(series(&plots.join("mass.dat"), &["omega", "mass_c"], &c)?);
        }
        Command::Threshold => {
            let c = source("threshold.csv")?;
            files.push(series(&plots.join("threshold.dat"), &["omega", "gamma", "rd_reference"], &c)?);
        }
        Command::Masscurve => {
            let c = source("masscurve.csv")?;
            files.push(series(&plots.join("m_c.dat"), &["c", "m_c"], &c)?);
        }
        Command::LfCheck => {
            let c = source("lfcheck.csv")?;
            files.push(series(&plots.join("lf.dat"), &["c", "m_c", "lf_discrepancy"], &c)?);
        }
        Command::Evolve => {
            let c = source("trace.csv")?;
            files.push(series(&plots.join("J.dat"), &["t", "J"], &c)?);
        }
        Command::Groundstate => {
            let c = source("profile.csv")?;
            files.push(series(&plots.join("profile.dat"), &["x", "abs_y0", "abs_ypi"], &c)?);
        }
        Command::GnTest | Command::RhoTest | Command::Reference => {}
    }
    Ok(files)
}
