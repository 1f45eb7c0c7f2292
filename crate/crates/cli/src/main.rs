use anyhow::{bail, Context, Result};
use cfris::channel::{ChannelSampler, RisPhase};
use cfris::estimation::PilotNoise;
use cfris::harness::{emit_plot_data, read_raw_csv, run_experiment, write_outputs, ExperimentSpec, Scheme, SweepAxis};
use cfris::optimizer::{dinkelbach_solve, initial_state, Mode};
use cfris::par::Execution;
use cfris::scenario::{generate_topology, rng_from_seed, sample_large_scale, ScenarioConfig};
use cfris::system::BlockModel;
use clap::{Args, Parser, Subcommand};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "cfris", version, about = "Energy-efficiency experiments for RIS-aided cell-free massive MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over K, M or L; writes raw.csv, aggregate.csv,
    /// timing.csv and manifest.toml
    Run(RunArgs),
    /// Optimize one coherence block and write the per-iteration trace
    Solve(SolveArgs),
    /// Print the AP/UE/RIS positions of one topology
    Topology(ScenarioArgs),
    /// Write one channel realization in the binary dump format
    Channels {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output file
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the default configuration as TOML
    DefaultConfig,
    /// Recompute the aggregate table from a raw CSV
    Aggregate {
        raw: PathBuf,
        /// Output file; stdout when omitted
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Flat TOML scenario file; defaults are used when omitted
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Seed; overrides rng_seed from the config
    #[arg(short, long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut config = match &self.config {
            Some(path) => ScenarioConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.rng_seed = seed;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Sweep axis: none, K, M or L
    #[arg(long, default_value = "none")]
    axis: String,
    /// Comma-separated sweep values
    #[arg(long, value_delimiter = ',')]
    values: Vec<usize>,
    #[arg(short, long, default_value_t = 10)]
    trials: usize,
    /// RIS optimizer mode of the all-active-optimized-ris baseline
    #[arg(long)]
    mode: Option<Mode>,
    /// Comma-separated subset of schemes; all when omitted
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<String>,
    /// Output directory
    #[arg(short, long, default_value = "results")]
    out: PathBuf,
    /// Worker threads; 0 uses every core
    #[arg(short, long, default_value_t = 0)]
    workers: usize,
    /// Run everything on the calling thread
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "near-optimal")]
    mode: Mode,
    /// Trace CSV; stdout when omitted
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = args.scenario.load()?;
    if let Some(mode) = args.mode {
        config.solver.mode = mode;
    }
    let mut spec = ExperimentSpec::new(config);
    spec.axis = args.axis.parse()?;
    if spec.axis != SweepAxis::None && args.values.is_empty() {
        bail!("--values is required with --axis {}", args.axis);
    }
    spec.values = args.values;
    spec.trials = args.trials;
    if !args.schemes.is_empty() {
        spec.schemes = args.schemes.iter().map(|s| s.parse::<Scheme>()).collect::<cfris::Result<_>>()?;
    }
    spec.exec = execution(args.sequential);
    spec.workers = (args.workers > 0).then_some(args.workers);
    spec.validate()?;
    let results = run_experiment(&spec)?;
    let rows = write_outputs(&spec, &results, &args.out)?;
    println!("{:<26} {:>6} {:>7} {:>11} {:>14}", "scheme", "value", "trials", "infeasible", "mean EE (b/J)");
    for r in rows {
        println!("{:<26} {:>6} {:>7} {:>11} {:>14.5e}", r.scheme, r.axis_value, r.trials, r.infeasible, r.mean_ee);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn block(config: &ScenarioConfig) -> Result<(BlockModel, RisPhase)> {
    let mut rng = rng_from_seed(config.rng_seed);
    let topo = generate_topology(config, &mut rng)?;
    let stats = sample_large_scale(config, &topo, &mut rng)?;
    let real = ChannelSampler::new(config, &topo, &stats)?.draw(&mut rng);
    let noise = PilotNoise::draw(config.num_aps, config.num_ues, &mut rng);
    let phase = RisPhase::random(config.num_ris, config.ris_elements(), &mut rng);
    Ok((BlockModel::new(config, real, noise)?, phase))
}

fn solve(args: SolveArgs) -> Result<()> {
    let config = args.scenario.load()?;
    let (model, phase) = block(&config)?;
    let init = initial_state(&model, phase, &config.solver)?;
    let sol = dinkelbach_solve(&model, init, &config.solver, args.mode.steps(), execution(args.sequential), config.rng_seed)?;
    sol.trace.write_csv(output(args.out.as_deref())?)?;
    eprintln!(
        "EE {:.6e} bit/J, sum rate {:.6e} bit/s, power {:.4} W, active APs {} ({})",
        sol.evaluation.ee,
        sol.evaluation.sum_rate,
        sol.evaluation.total_power,
        sol.state.activation.num_active(),
        sol.state.activation.to_bit_string()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Solve(args) => solve(args),
        Command::Topology(args) => {
            let config = args.load()?;
            let topo = generate_topology(&config, &mut rng_from_seed(config.rng_seed))?;
            print!("{}", topo.to_table());
            Ok(())
        }
        Command::Channels { scenario, out } => {
            let config = scenario.load()?;
            let (model, _) = block(&config)?;
            model.real.write_binary(BufWriter::new(File::create(&out)?))?;
            Ok(())
        }
        Command::DefaultConfig => {
            print!("{}", ScenarioConfig::default().to_toml_string());
            Ok(())
        }
        Command::Aggregate { raw, out } => {
            let results = read_raw_csv(File::open(&raw).with_context(|| format!("reading {}", raw.display()))?)?;
            emit_plot_data(&results, output(out.as_deref())?)?;
            Ok(())
        }
    }
}
