// `!(x > 0.0)` is the NaN-rejecting guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;
use crate::output::{write_run, Artifacts, RunInfo};
use crate::settings::Settings;

#[derive(Parser, Debug)]
#[command(
    name = "pcap",
    version,
    about = "Pointwise p-capacity solver and verification harness"
)]
struct Cli {
    /// Flat TOML file of `key = value` settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $PCAP_OUT, then ./pcap-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for concurrent solves.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write a gnuplot script next to the data.
    #[arg(long, global = true)]
    emit_plot: bool,
    /// Write the mesh as `v`/`e`/`pole`/`bnd` lines.
    #[arg(long, global = true)]
    dump_mesh: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for one pole and one exponent.
    Solve(Params),
    /// Tabulate s_p over a pole grid.
    Field(Params),
    /// Follow s_p at one pole over increasing exponents.
    Sweep(Params),
    /// Run property checks and report pass/fail.
    Verify(Params),
    /// Print closed-form values.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
struct Params {
    /// `interval:a,b`, `polygon:x1,y1;x2,y2;...` or `disk:cx,cy,R`.
    #[arg(long)]
    domain: Option<String>,
    /// Exponent or comma-separated increasing exponents.
    #[arg(long)]
    p: Option<String>,
    /// Exponents for sweeps and large-p checks.
    #[arg(long)]
    p_list: Option<String>,
    /// `x` or `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    pole: Option<String>,
    /// `grid:nx[,ny][,margin]` or `x,y;x,y;...`.
    #[arg(long, allow_hyphen_values = true)]
    poles: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    grading: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    /// Segment count for intervals.
    #[arg(long)]
    n: Option<String>,
    /// `auto`, `numeric` or `oracle`.
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    suite: Option<String>,
    /// Random fields per solve in the pointwise check.
    #[arg(long)]
    trials: Option<String>,
    /// Lattice spacing for the infinity-Laplace solve.
    #[arg(long)]
    lattice_h: Option<String>,
    /// A `result.json` from `solve` to compare with the lattice solution.
    #[arg(long)]
    compare_with: Option<String>,
    #[arg(long)]
    eps_start: Option<String>,
    #[arg(long)]
    eps_end: Option<String>,
    #[arg(long)]
    eps_factor: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    rel_energy_tol: Option<String>,
    #[arg(long)]
    grad_tol: Option<String>,
    #[arg(long)]
    step_tol: Option<String>,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// `interval` or `ball`.
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Dimension of the ball.
    #[arg(long = "N")]
    big_n: Option<String>,
    /// Radius of the ball.
    #[arg(long = "R")]
    big_r: Option<String>,
}

impl Params {
    fn apply(self, s: &mut Settings) -> Result<(), CliError> {
        let pairs = [
            ("domain", self.domain),
            ("p", self.p),
            ("p_list", self.p_list),
            ("pole", self.pole),
            ("poles", self.poles),
            ("h", self.h),
            ("grading", self.grading),
            ("levels", self.levels),
            ("n", self.n),
            ("source", self.source),
            ("suite", self.suite),
            ("trials", self.trials),
            ("lattice_h", self.lattice_h),
            ("compare_with", self.compare_with),
            ("eps_start", self.eps_start),
            ("eps_end", self.eps_end),
            ("eps_factor", self.eps_factor),
            ("max_iters", self.max_iters),
            ("rel_energy_tol", self.rel_energy_tol),
            ("grad_tol", self.grad_tol),
            ("step_tol", self.step_tol),
        ];
        for (k, v) in pairs {
            s.set(k, v);
        }
        for t in self.tol {
            let (name, value) = t
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--tol expects NAME=VALUE, got `{t}`")))?;
            s.set(
                &format!("tol_{}", name.trim()),
                Some(value.trim().to_string()),
            );
        }
        Ok(())
    }
}

impl OracleArgs {
    fn apply(self, s: &mut Settings) {
        s.set("case", self.case);
        s.set("p", self.p);
        s.set("a", self.a);
        s.set("b", self.b);
        s.set("x", self.x);
        s.set("N", self.big_n);
        s.set("R", self.big_r);
    }
}

fn settings(cli: Cli) -> Result<(Settings, &'static str), CliError> {
    let mut s = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    s.set("out", cli.out.map(|p| p.display().to_string()));
    s.set("seed", cli.seed.map(|v| v.to_string()));
    s.set("threads", cli.threads.map(|v| v.to_string()));
    s.set_flag("emit_plot", cli.emit_plot);
    s.set_flag("dump_mesh", cli.dump_mesh);
    let name = match cli.command {
        Command::Solve(p) => p.apply(&mut s).map(|_| "solve")?,
        Command::Field(p) => p.apply(&mut s).map(|_| "field")?,
        Command::Sweep(p) => p.apply(&mut s).map(|_| "sweep")?,
        Command::Verify(p) => p.apply(&mut s).map(|_| "verify")?,
        Command::Oracle(o) => {
            o.apply(&mut s);
            "oracle"
        }
    };
    Ok((s, name))
}

fn run(s: &Settings, command: &str) -> Result<commands::Outcome, CliError> {
    // Validate shared settings before any work.
    s.seed()?;
    s.flag("emit_plot")?;
    s.flag("dump_mesh")?;
    if let Some(n) = s.usize("threads")? {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match command {
        "solve" => commands::solve(s),
        "field" => commands::field(s),
        "sweep" => commands::sweep(s),
        "verify" => commands::verify(s),
        _ => commands::oracle(s),
    }
}

fn main() -> ExitCode {
    let started = chrono::Utc::now();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (s, name) = match settings(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let (artifacts, status) = match run(&s, name) {
        Ok(outcome) => (outcome.artifacts, outcome.exit),
        Err(e) => {
            eprintln!("error: {e}");
            (Artifacts::default(), e.exit_code())
        }
    };
    let info = RunInfo {
        command: name,
        config: s.values(),
        started,
        exit_status: status,
    };
    let out = s.out_dir();
    if let Err(e) = write_run(&out, &artifacts, &info) {
        eprintln!("error: writing to {}: {e}", out.display());
        return ExitCode::from(1);
    }
    let written: Vec<&str> = artifacts.names().collect();
    if !written.is_empty() {
        eprintln!("wrote {} to {}", written.join(", "), out.display());
    }
    ExitCode::from(status)
}
