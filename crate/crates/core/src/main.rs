use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use locpriv::harness::audit::DEFAULT_AUDIT_TRIALS;
use locpriv::harness::{
    audit, ingest_traces, run_cells, run_lemma_battery, run_sweep, write_rows, ExperimentConfig,
    LemmaBattery, ResultRow, TraceModel,
};
use locpriv::markov::MobilityGraph;
use locpriv::proofcheck::LemmaParams;
use locpriv::{Error, Result};

/// Anonymization-based location privacy lab.
#[derive(Parser)]
#[command(name = "locpriv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the first cell of a config's n grid.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every cell of a config's n grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overridden by LOCPRIV_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Two-state lemma battery.
    Lemma {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        phi: f64,
        #[arg(long = "m-grid", value_delimiter = ',', required = true)]
        m_grid: Vec<u64>,
        #[arg(long = "n-grid", value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recommend a pseudonym lifetime for a trace dataset.
    Audit {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, value_enum)]
        model: AuditModel,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long = "alpha-margin")]
        alpha_margin: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AuditModel {
    Iid,
    Markov,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("locpriv: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let (cfg, out) = load_config(&config, seed, out)?;
            let rows = run_cells(&cfg, 1)?;
            emit_rows(out.as_deref(), &rows)
        }
        Command::Sweep {
            config,
            seed,
            out,
            threads,
        } => {
            let (cfg, out) = load_config(&config, seed, out)?;
            let threads = thread_count(threads)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            let rows = pool.install(|| run_sweep(&cfg))?;
            emit_rows(out.as_deref(), &rows)
        }
        Command::Lemma {
            alpha,
            theta,
            phi,
            m_grid,
            n_grid,
            trials,
            seed,
            out,
        } => {
            let params = LemmaParams::new(alpha, theta, phi).map_err(|e| Error::Config(e.to_string()))?;
            let rows = run_lemma_battery(&LemmaBattery {
                params,
                m_grid,
                n_grid,
                trials,
                seed,
            })?;
            emit_rows(Some(&out), &rows)
        }
        Command::Audit {
            traces,
            model,
            r,
            graph,
            n,
            alpha_margin,
            out,
        } => {
            let model = match (model, graph) {
                (AuditModel::Iid, None) => TraceModel::Iid { r },
                (AuditModel::Iid, Some(_)) => {
                    return Err(Error::Config("--graph only applies to --model markov".into()))
                }
                (AuditModel::Markov, Some(g)) => TraceModel::Markov(
                    MobilityGraph::load(&g, r).map_err(|e| Error::Config(format!("{}: {e}", g.display())))?,
                ),
                (AuditModel::Markov, None) => {
                    return Err(Error::Config("--model markov needs --graph".into()))
                }
            };
            let (data, laws) = ingest_traces(&traces, &model).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("{}: {io}", traces.display())),
                other => other,
            })?;
            let report = audit(&data, &laws, &model, n, alpha_margin, DEFAULT_AUDIT_TRIALS, 0)?;
            let text = report.to_string();
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => io::stdout().write_all(text.as_bytes())?,
            }
            Ok(())
        }
    }
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(locpriv::harness::ResolvedConfig, Option<PathBuf>)> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let resolved = cfg.resolve()?;
    let out = out.or_else(|| resolved.out_path.clone());
    for n in resolved.n_grid.iter().filter(|&&n| n > locpriv::adversary::PERMANENT_FEASIBILITY_BOUND) {
        if resolved.metrics.mi {
            eprintln!("locpriv: warning: n = {n} is above the exact-posterior bound; mi skipped");
        }
    }
    Ok((resolved, out))
}

/// `LOCPRIV_THREADS` wins over `--threads`.
fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let parse = |s: &str| -> Result<usize> {
        match s.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k),
            _ => Err(Error::Config(format!("thread count must be a positive integer, got `{s}`"))),
        }
    };
    match std::env::var("LOCPRIV_THREADS") {
        Ok(v) => parse(&v).map(Some),
        Err(_) => match flag {
            Some(0) => Err(Error::Config("--threads must be at least 1".into())),
            other => Ok(other),
        },
    }
}

fn emit_rows(out: Option<&Path>, rows: &[ResultRow]) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_rows(&mut w, rows)?;
            w.flush()?;
        }
        None => write_rows(io::stdout().lock(), rows)?,
    }
    Ok(())
}
