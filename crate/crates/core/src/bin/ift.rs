use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ift_core::config::{load_topology, parse_tau, ConfigFile};
use ift_core::harness::{
    compare_variants, format_tau, run_mean, sweep, write_surface, write_timeseries, SweepGrid,
};
use ift_core::io::{read_reports, write_reports, write_truth, SnapshotWriter};
use ift_core::sim::{run_experiment, ExperimentConfig, TopologySource};
use ift_core::{Engine, EngineConfig, LogScale, Variant};

#[derive(Parser)]
#[command(
    name = "ift",
    version,
    about = "Deduce node forwarding behavior from delivery reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sessions and write the report, truth and topology files.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run an engine over a report file and write per-node snapshots.
    Deduce {
        /// Report file (`seq,pdr,packets,transit`).
        #[arg(long)]
        reports: PathBuf,
        /// Number of nodes in the network.
        #[arg(long, default_value_t = 15)]
        nodes: usize,
        #[arg(long, value_enum, default_value_t = VariantArg::Reactive)]
        variant: VariantArg,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value = "snapshots.csv")]
        out: PathBuf,
    },
    /// Sweep penalty and history over simulated runs.
    Sweep {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, default_value_t = GridArg::Full)]
        grid: GridArg,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, default_value = "surface.csv")]
        out: PathBuf,
    },
    /// Drive the reactive and plain engines with the same stream.
    Compare {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value = "timeseries.csv")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Reactive,
    Plain,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    /// 21 penalties x 23 histories.
    Full,
    /// 5 x 5 subset.
    Reduced,
}

/// Simulation settings. Flags override values from `--config`.
#[derive(Args)]
struct SimArgs {
    /// `key = value` experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Change time constant; `inf` disables changes.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    packets: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for random node placement.
    #[arg(long)]
    topology_seed: Option<u64>,
    /// Target mean degree of the random topology.
    #[arg(long)]
    mean_degree: Option<f64>,
    /// Fixed topology file; overrides the random topology.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    loss_baseline_max: Option<f64>,
    #[arg(long)]
    loss_spike_max: Option<f64>,
    #[arg(long)]
    loss_spike_prob: Option<f64>,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, default_value_t = 0.85)]
    penalty: f64,
    #[arg(long, default_value_t = 325)]
    history: usize,
    #[arg(long, default_value_t = std::f64::consts::E)]
    base: f64,
    #[arg(long, default_value_t = 1e-4)]
    pdr_floor: f64,
}

type CliResult<T> = Result<T, String>;

impl SimArgs {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
            None => ConfigFile::default(),
        };
        let tau = match &self.tau {
            Some(s) => Some(
                parse_tau(s)
                    .ok_or_else(|| format!("--tau: `{s}` is not a positive number or `inf`"))?,
            ),
            None => file.tau,
        };
        let overrides = ConfigFile {
            nodes: self.nodes.or(file.nodes),
            tau,
            sessions: self.sessions.or(file.sessions),
            packets: self.packets.or(file.packets),
            concurrency: self.concurrency.or(file.concurrency),
            seed: self.seed.or(file.seed),
            loss_baseline_max: self.loss_baseline_max.or(file.loss_baseline_max),
            loss_spike_max: self.loss_spike_max.or(file.loss_spike_max),
            loss_spike_prob: self.loss_spike_prob.or(file.loss_spike_prob),
            topology_file: None,
        };
        let mut base = ExperimentConfig::default();
        if let Some(s) = self.topology_seed {
            base.topology_seed = s;
        }
        if let Some(d) = self.mean_degree {
            if !(d > 0.0) {
                return Err(format!("mean degree must be positive, got {d}"));
            }
            base.topology = TopologySource::Random { mean_degree: d };
        }
        if let Some(path) = self.topology.as_ref().or(file.topology_file.as_ref()) {
            base.topology = TopologySource::Fixed(load_topology(path).map_err(|e| e.to_string())?);
        }
        overrides.apply(base).map_err(|e| e.to_string())
    }
}

impl EngineArgs {
    fn resolve(&self) -> CliResult<EngineConfig<f64>> {
        let scale = LogScale::new(self.base, self.pdr_floor).map_err(|e| e.to_string())?;
        EngineConfig::new(self.penalty, self.history, scale).map_err(|e| e.to_string())
    }

    fn describe(cfg: &EngineConfig<f64>) -> String {
        format!(
            "penalty = {}\nhistory = {}\nbase = {}\npdr_floor = {}\n",
            cfg.decision_penalty, cfg.history, cfg.scale.base, cfg.scale.pdr_floor
        )
    }
}

fn describe_sim(cfg: &ExperimentConfig) -> String {
    let topology = match &cfg.topology {
        TopologySource::Random { mean_degree } => {
            format!(
                "random geometric, mean degree {mean_degree}, topology_seed {}",
                cfg.topology_seed
            )
        }
        TopologySource::Fixed(t) => format!("fixed, {} edges", t.edges().len()),
    };
    format!(
        "nodes = {}\ntau = {}\nsessions = {}\npackets = {}\nconcurrency = {}\nseed = {}\n\
         loss_baseline_max = {}\nloss_spike_max = {}\nloss_spike_prob = {}\ntopology = {}\n",
        cfg.nodes,
        format_tau(cfg.change.tau),
        cfg.sessions,
        cfg.packets,
        cfg.concurrency,
        cfg.seed,
        cfg.loss.baseline_max,
        cfg.loss.spike_max,
        cfg.loss.spike_prob,
        topology,
    )
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { sim, out } => {
            let cfg = sim.resolve()?;
            print!("# simulate\n{}", describe_sim(&cfg));
            let exp = run_experiment(&cfg).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out)
                .map_err(|e| format!("cannot create {}: {e}", out.display()))?;
            write_reports(
                create(&out.join("reports.csv"))?,
                exp.observations.iter().map(|o| &o.report),
            )
            .map_err(|e| e.to_string())?;
            write_truth(
                create(&out.join("truth.csv"))?,
                exp.observations.iter().map(|o| (o.report.seq, &o.truth)),
            )
            .map_err(|e| e.to_string())?;
            std::fs::write(out.join("topology.txt"), exp.topology.to_text())
                .map_err(|e| e.to_string())?;
            println!(
                "wrote {} reports, {} behavior changes to {}",
                exp.observations.len(),
                exp.changes.len(),
                out.display()
            );
        }
        Command::Deduce {
            reports,
            nodes,
            variant,
            engine,
            out,
        } => {
            let cfg = engine.resolve()?;
            let variant = match variant {
                VariantArg::Reactive => Variant::Reactive,
                VariantArg::Plain => Variant::Plain,
            };
            print!(
                "# deduce\nreports = {}\nnodes = {nodes}\nvariant = {}\n{}seed = none (deterministic)\n",
                reports.display(),
                variant.name(),
                EngineArgs::describe(&cfg)
            );
            let file = File::open(&reports)
                .map_err(|e| format!("cannot open {}: {e}", reports.display()))?;
            let stream = read_reports(file).map_err(|e| format!("{}: {e}", reports.display()))?;
            let mut eng = Engine::new(variant, cfg, nodes);
            let mut w = SnapshotWriter::new(create(&out)?).map_err(|e| e.to_string())?;
            for r in stream {
                let seq = r.seq;
                let snap = eng.process(r).map_err(|e| format!("report {seq}: {e}"))?;
                w.write(snap).map_err(|e| e.to_string())?;
            }
            w.finish().map_err(|e| e.to_string())?;
            println!("removals = {}", eng.state().removals().len());
        }
        Command::Sweep {
            sim,
            grid,
            runs,
            out,
        } => {
            let cfg = sim.resolve()?;
            let grid = match grid {
                GridArg::Full => SweepGrid::full(),
                GridArg::Reduced => SweepGrid::reduced(),
            };
            print!(
                "# sweep\n{}grid = {} penalties x {} histories\nruns = {runs}\n",
                describe_sim(&cfg),
                grid.penalties.len(),
                grid.histories.len()
            );
            let surface =
                sweep(&cfg, &grid, runs, &EngineConfig::default()).map_err(|e| e.to_string())?;
            write_surface(create(&out)?, &surface).map_err(|e| e.to_string())?;
            if let Some(best) = surface.best() {
                println!(
                    "best: penalty {} history {} avg_abs_acc {:.5}",
                    best.penalty, best.history, best.avg_abs_acc
                );
            }
        }
        Command::Compare { sim, engine, out } => {
            let cfg = sim.resolve()?;
            let ecfg = engine.resolve()?;
            print!(
                "# compare\n{}{}",
                describe_sim(&cfg),
                EngineArgs::describe(&ecfg)
            );
            let cmp = compare_variants(&cfg, &ecfg).map_err(|e| e.to_string())?;
            write_timeseries(
                create(&out)?,
                [
                    (Variant::Reactive, &cmp.reactive[..]),
                    (Variant::Plain, &cmp.plain[..]),
                ],
            )
            .map_err(|e| e.to_string())?;
            println!(
                "run mean avg_abs_acc: reactive {:.5}, plain {:.5}",
                run_mean(&cmp.reactive),
                run_mean(&cmp.plain)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.render().to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", line);
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
