use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wgnls_core::pipeline::{self, emit_plots, EntryStatus, RunOptions};
use wgnls_core::{Config, Error, Result};

#[derive(Parser)]
#[command(name = "wgnls", version, about = "Ground states and dynamics of the focusing NLS on R^d x T^m")]
struct Cli {
    /// Output root (default: $WGNLS_OUTPUT_ROOT or ./wgnls-out).
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    /// Skip writing plots/*.dat.
    #[arg(long, global = true)]
    no_plots: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct Common {
    /// Base configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent entries (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `fixed` or `per-frequency`.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    half_length: Option<f64>,
    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    n_y: Option<usize>,
    /// Projected-gradient tolerance of the solvers.
    #[arg(long)]
    solver_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configuration file.
    Run { config: PathBuf },
    /// Minimize the action on the Pohozaev or Nehari manifold.
    Groundstate {
        #[arg(long)]
        omega: f64,
        /// `pohozaev` (or `K`) or `nehari` (or `N`).
        #[arg(long, default_value = "pohozaev")]
        constraint: String,
        #[command(flatten)]
        common: Common,
    },
    /// Frequency sweep of both minimization problems.
    Sweep {
        /// Comma-separated list, or a file of numbers.
        #[arg(long)]
        omegas: String,
        #[arg(long)]
        no_warm_start: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Bracket the frequency where minimizers start to depend on y.
    Threshold {
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], required = true)]
        bracket: Vec<f64>,
        /// Absolute bracket width to stop at.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Minimal energy on the virial manifold at fixed mass.
    Masscurve {
        /// Comma-separated list, or a file of numbers.
        #[arg(long, visible_alias = "masses")]
        c_list: String,
        /// `surgery` or `random`.
        #[arg(long, default_value = "surgery")]
        init: String,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-check of the mass curve against the frequency problem.
    LfCheck {
        /// One frequency, a comma-separated list, or a file of numbers.
        #[arg(long, visible_alias = "omegas")]
        omega: String,
        #[command(flatten)]
        common: Common,
    },
    /// Time evolution with conservation and virial diagnostics.
    Evolve {
        /// Snapshot file, or `gaussian`.
        #[arg(long, default_value = "gaussian")]
        init: String,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        modulation: Option<f64>,
        /// `c,nu`: classify against the set with mass below c.
        #[arg(long, value_delimiter = ',', num_args = 1..=2)]
        classify: Option<Vec<f64>>,
        /// Known m_c for the classification (solved for otherwise).
        #[arg(long)]
        m_c: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Sampled Gagliardo-Nirenberg ratio.
    GnTest {
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Torus profile norms.
    RhoTest {
        #[arg(long)]
        a: Option<f64>,
        /// Torus grid points.
        #[arg(long)]
        n_y: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Whole-space reference constants.
    Reference {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// `a,b,c`, or the path of a file holding numbers separated by commas or
/// whitespace (`#` starts a comment).
fn values(arg: &str) -> Result<String> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        std::fs::read_to_string(path)?
    } else {
        arg.to_string()
    };
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            out.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("`{tok}` is not a number")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("no values in `{arg}`")));
    }
    Ok(join(&out))
}

fn apply(cfg: &mut Config, c: &Common) -> Result<()> {
    macro_rules! put {
        ($sec:literal, $key:literal, $v:expr) => {
            if let Some(v) = &$v {
                cfg.set($sec, $key, v)?;
            }
        };
    }
    put!("run", "seed", c.seed);
    put!("run", "jobs", c.jobs);
    put!("model", "d", c.d);
    put!("model", "m", c.m);
    put!("model", "alpha", c.alpha);
    put!("domain", "policy", c.domain);
    put!("domain", "half_length", c.half_length);
    put!("domain", "n_x", c.n_x);
    put!("domain", "n_y", c.n_y);
    put!("solver", "tol", c.solver_tol);
    put!("solver", "max_iter", c.max_iter);
    Ok(())
}

fn build(cmd: Cmd) -> Result<Config> {
    let mut set: Vec<(&str, &str, String)> = Vec::new();
    let common = match cmd {
        Cmd::Run { config } => return Config::load(&config),
        Cmd::Groundstate { omega, constraint, common } => {
            set.push(("run", "command", "groundstate".into()));
            set.push(("groundstate", "omega", omega.to_string()));
            set.push(("groundstate", "constraint", constraint));
            common
        }
        Cmd::Sweep {
            omegas,
            no_warm_start,
            common,
        } => {
            set.push(("run", "command", "sweep".into()));
            set.push(("sweep", "omegas", values(&omegas)?));
            set.push(("sweep", "warm_start", (!no_warm_start).to_string()));
            common
        }
        Cmd::Threshold { bracket, tol, common } => {
            set.push(("run", "command", "threshold".into()));
            set.push(("threshold", "lo", bracket[0].to_string()));
            set.push(("threshold", "hi", bracket[1].to_string()));
            if let Some(t) = tol {
                set.push(("threshold", "tol", t.to_string()));
            }
            common
        }
        Cmd::Masscurve { c_list, init, common } => {
            set.push(("run", "command", "masscurve".into()));
            set.push(("masscurve", "masses", values(&c_list)?));
            set.push(("masscurve", "init", init));
            common
        }
        Cmd::LfCheck { omega, common } => {
            set.push(("run", "command", "lf-check".into()));
            set.push(("lf-check", "omegas", values(&omega)?));
            common
        }
        Cmd::Evolve {
            init,
            t_end,
            dt,
            mass,
            sigma,
            modulation,
            classify,
            m_c,
            common,
        } => {
            set.push(("run", "command", "evolve".into()));
            set.push(("evolve", "init", init));
            set.push(("evolve", "t_end", t_end.to_string()));
            for (k, v) in [("dt", dt), ("mass", mass), ("sigma", sigma), ("modulation", modulation), ("m_c", m_c)] {
                if let Some(v) = v {
                    set.push(("evolve", k, v.to_string()));
                }
            }
            if let Some(cn) = classify {
                set.push(("evolve", "classify_c", cn[0].to_string()));
                if let Some(nu) = cn.get(1) {
                    set.push(("evolve", "classify_nu", nu.to_string()));
                }
            }
            common
        }
        Cmd::GnTest { samples, common } => {
            set.push(("run", "command", "gn-test".into()));
            if let Some(n) = samples {
                set.push(("gn-test", "samples", n.to_string()));
            }
            common
        }
        Cmd::RhoTest { a, n_y, alpha } => {
            set.push(("run", "command", "rho-test".into()));
            if let Some(a) = a {
                set.push(("rho-test", "a", a.to_string()));
            }
            if let Some(n) = n_y {
                set.push(("rho-test", "n_y", n.to_string()));
            }
            Common {
                alpha,
                ..Common::default()
            }
        }
        Cmd::Reference { d, alpha } => {
            set.push(("run", "command", "reference".into()));
            if let Some(d) = d {
                set.push(("reference", "d", d.to_string()));
            }
            Common {
                alpha,
                ..Common::default()
            }
        }
    };
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::empty(),
    };
    for (sec, key, v) in set {
        cfg.set(sec, key, v)?;
    }
    apply(&mut cfg, &common)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut opts = RunOptions::from_env();
    if let Some(root) = cli.output_root {
        opts.output_root = root;
    }
    let report = match build(cli.cmd).and_then(|cfg| pipeline::run(&cfg, &opts)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let m = &report.manifest;
    println!("run {} ({}) -> {}", m.run_id, m.command.as_str(), report.dir.display());
    if report.computed.is_empty() {
        println!("already complete; nothing recomputed");
    }
    for e in &m.entries {
        if e.status == EntryStatus::Failed {
            eprintln!("entry {} failed: {}", e.key, e.error.as_deref().unwrap_or("?"));
        }
    }
    for o in &m.outputs {
        if !o.path.contains('/') {
            println!("  {}", o.path);
        }
    }
    if !cli.no_plots && m.status != pipeline::RunStatus::Failed {
        match emit_plots(m, &report.dir) {
            Ok(files) => {
                for f in files {
                    println!("  {}", f.strip_prefix(&report.dir).unwrap_or(&f).display());
                }
            }
            Err(e) => eprintln!("plots: {e}"),
        }
    }
    println!("status: {:?}", m.status);
    ExitCode::from(m.status.exit_code() as u8)
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
