use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use weakanno::error::{Error, Result};
use weakanno::pipeline::{
    cmd_annotate_oracle, cmd_cluster, cmd_report, cmd_train, finalize_annotation, finish_session, open_session,
    RunConfig,
};
use weakanno::synth::{embedding_suite, participant_name, sensor_suite, write_dataset, EmbeddingSuiteConfig, SensorSuiteConfig};
use weakanno_annoserve::{run_blocking, SessionHandle, DEFAULT_PORT};

#[derive(Parser)]
#[command(name = "weakanno", version, about = "Cluster, annotate one clip per cluster, propagate, train")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "weakanno.toml")]
    config: PathBuf,
    /// Comma-separated seeds overriding `run.seeds`.
    #[arg(long, global = true, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Parallel (participant, seed) jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a mixture per participant and seed.
    Cluster,
    /// Label every cluster's centroid clip and propagate.
    Annotate {
        #[arg(long, value_enum, default_value_t = Mode::Oracle)]
        mode: Mode,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Directory served under /assets.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Train and evaluate every configured scenario.
    Train,
    /// Write sweep CSVs and summary tables.
    Report,
    /// Generate a synthetic dataset and a matching config.
    Synth {
        #[arg(long, value_enum, default_value_t = Suite::Sensor)]
        suite: Suite,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        participants: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oracle,
    Serve,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    /// Clip embeddings only.
    Embedding,
    /// Embeddings with heavily overlapping classes.
    Overlap,
    /// Embeddings plus sensor streams.
    Sensor,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = if cli.config.exists() {
        RunConfig::load(&cli.config)?
    } else if cli.print_config || matches!(cli.command, Some(Command::Synth { .. })) {
        RunConfig::default()
    } else {
        return Err(Error::Config(format!("config file {} not found", cli.config.display())));
    };
    if let Some(seeds) = &cli.seed_list {
        cfg.run.seeds = seeds.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.run.jobs = jobs;
    }
    Ok(cfg)
}

fn serve(cfg: &RunConfig, port: u16, assets: Option<PathBuf>) -> Result<()> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    for p in &cfg.dataset.participants {
        for &seed in &cfg.run.seeds {
            let (session, artifacts) = open_session(cfg, p, seed)?;
            let handle = SessionHandle::new(session);
            if !handle.is_complete() {
                let state = handle.lock().state();
                eprintln!(
                    "{p} seed {seed}: {} of {} clusters labeled, serving on http://{addr}",
                    state.labeled, state.total_clusters
                );
                run_blocking(handle.clone(), addr, assets.clone()).map_err(|err| Error::Config(err.to_string()))?;
            }
            let labels = handle.lock().close();
            let weak = finish_session(cfg, seed, &artifacts, &labels)?;
            eprintln!("{p} seed {seed}: {} clusters labeled", weak.annotation_budget);
        }
    }
    finalize_annotation(cfg)?;
    Ok(())
}

fn synth(cfg: RunConfig, suite: Suite, out: &Path, participants: Option<usize>, seed: u64) -> Result<()> {
    let data = match suite {
        Suite::Sensor => {
            let mut s = SensorSuiteConfig::default().with_seed(seed);
            s.participants = participants.unwrap_or(s.participants);
            sensor_suite(&s)?
        }
        Suite::Embedding | Suite::Overlap => {
            let base = match suite {
                Suite::Overlap => EmbeddingSuiteConfig::overlap_heavy(),
                _ => EmbeddingSuiteConfig::default(),
            };
            let mut s = base.with_seed(seed);
            s.participants = participants.unwrap_or(s.participants);
            embedding_suite(&s)?
        }
    };
    write_dataset(&out.join("data"), &data)?;
    let mut cfg = cfg;
    cfg.dataset.root = PathBuf::from("data");
    cfg.dataset.participants = (0..data.len()).map(participant_name).collect();
    cfg.run.output = PathBuf::from("run");
    let path = out.join("weakanno.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|err| Error::io(&path, err))?;
    println!("wrote {} participants and {}", data.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match cli.command {
        None => Err(Error::Config("no subcommand given; see --help".into())),
        Some(Command::Cluster) => {
            let m = cmd_cluster(&cfg)?;
            println!("cluster: {} artifacts", m.artifacts.len());
            Ok(())
        }
        Some(Command::Annotate { mode: Mode::Oracle, .. }) => {
            let m = cmd_annotate_oracle(&cfg)?;
            println!("annotate: {} artifacts", m.artifacts.len());
            Ok(())
        }
        Some(Command::Annotate { mode: Mode::Serve, port, assets }) => serve(&cfg, port, assets),
        Some(Command::Train) => {
            print!("{}", cmd_train(&cfg)?.summary_table());
            Ok(())
        }
        Some(Command::Report) => {
            let r = cmd_report(&cfg)?;
            print!("{}\n{}", r.clusters.summary_table(), r.thresholds.summary_table());
            if let Some(s) = r.scenarios {
                print!("\n{}", s.summary_table());
            }
            Ok(())
        }
        Some(Command::Synth { suite, ref out, participants, seed }) => synth(cfg, suite, out, participants, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
