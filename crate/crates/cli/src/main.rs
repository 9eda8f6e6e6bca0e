//! `desvn` command-line front end.
//!
//! Errors are printed as `error[<category>]: <message>` on stderr and map to
//! a fixed exit code per category (see [`Category`]).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use desvn_core::harness::instances::compare_with_oracle;
use desvn_core::harness::plot::sweep_table;
use desvn_core::harness::scenario::{metrics_line, Identities, METRICS_HEADER};
use desvn_core::harness::{emit_plot_data, run_recipe, run_scenario, run_sweep, Figure, ScenarioConfig, SweepParam, SweepSpec};
use desvn_core::ledger::{Address, ChainFault, EntityKind, EntityRecord, LedgerChain, Rejection};

#[derive(Parser, Debug)]
#[command(name = "desvn", version, about = "Drone-aided vehicular network simulator")]
struct Cli {
    /// Scenario config file (flat `section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `run.replications`.
    #[arg(long, global = true)]
    reps: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "DESVN_OUT", default_value = "out")]
    out: PathBuf,

    /// Config override as `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its per-stage artifacts.
    Run,
    /// Sweep one parameter, or run a figure recipe.
    Sweep(SweepArgs),
    /// Operate on a ledger state file.
    Ledger(LedgerArgs),
    /// Compare greedy association with exhaustive search on small instances.
    OracleCompare {
        /// Number of random instances.
        #[arg(long, default_value_t = 100)]
        count: u64,
    },
    /// Print the effective config.
    Config,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Parameter to sweep: bandwidth, drones, backhaul, tau, density, gas_limit.
    #[arg(long, requires = "values", conflicts_with = "recipe")]
    param: Option<String>,

    /// Comma-separated sweep values; `inf` is accepted.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,

    /// Figure recipe: fig2, fig3, fig4, fig5 or fig8.
    #[arg(long)]
    recipe: Option<String>,
}

#[derive(Args, Debug)]
struct LedgerArgs {
    /// Chain export file; created on first write.
    #[arg(long, default_value = "ledger.txt")]
    state: PathBuf,

    #[command(subcommand)]
    action: LedgerAction,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Drone,
    Rsu,
    Sv,
}

impl From<KindArg> for EntityKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Drone => EntityKind::Drone,
            KindArg::Rsu => EntityKind::Rsu,
            KindArg::Sv => EntityKind::Sv,
        }
    }
}

#[derive(Subcommand, Debug)]
enum LedgerAction {
    /// Queue a registration transaction.
    Register {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        address: Address,
        #[arg(long, default_value = "")]
        drone_id: String,
        #[arg(long, default_value = "")]
        area_code: String,
        /// Sending address; defaults to the chain's C&C.
        #[arg(long)]
        sender: Option<Address>,
    },
    /// Look an address up among registered entities of one kind.
    Auth {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        address: Address,
    },
    /// Pack pending transactions into one block.
    Mine {
        /// Defaults to `ledger.block_gas_limit`.
        #[arg(long)]
        gas_limit: Option<u64>,
    },
    /// Check hashes, links, gas totals and the registry replay.
    Verify,
    /// Print chain statistics.
    Stats,
}

/// Exit categories. The numeric codes are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Usage,
    Config,
    InvalidArgument,
    Parse,
    Io,
    Rejected,
    Chain,
}

impl Category {
    fn name(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Config => "config",
            Category::InvalidArgument => "invalid-argument",
            Category::Parse => "parse",
            Category::Io => "io",
            Category::Rejected => "rejected",
            Category::Chain => "chain",
        }
    }

    fn code(self) -> u8 {
        match self {
            Category::Usage => 2,
            Category::Config => 3,
            Category::InvalidArgument => 4,
            Category::Parse => 5,
            Category::Io => 6,
            Category::Rejected => 7,
            Category::Chain => 8,
        }
    }

    fn of(err: &anyhow::Error) -> Self {
        for cause in err.chain() {
            if let Some(e) = cause.downcast_ref::<desvn_core::Error>() {
                return match e.category() {
                    "config" => Category::Config,
                    "invalid-argument" => Category::InvalidArgument,
                    "parse" => Category::Parse,
                    _ => Category::Io,
                };
            }
            if cause.is::<Rejection>() {
                return Category::Rejected;
            }
            if cause.is::<ChainFault>() {
                return Category::Chain;
            }
            if cause.is::<std::io::Error>() {
                return Category::Io;
            }
        }
        Category::InvalidArgument
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[{}]: {first}", Category::Usage.name());
            return ExitCode::from(Category::Usage.code());
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let cat = Category::of(&err);
            eprintln!("error[{}]: {err:#}", cat.name());
            ExitCode::from(cat.code())
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ScenarioConfig> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    for item in &cli.overrides {
        let Some((key, value)) = item.split_once('=') else {
            bail!(desvn_core::Error::InvalidArgument(format!("override {item:?} is not KEY=VALUE")));
        };
        config = config.with_override(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(reps) = cli.reps {
        config.run.replications = reps;
    }
    config.validate()?;
    Ok(config)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Run => cmd_run(&config, &cli.out),
        Command::Sweep(args) => cmd_sweep(&config, &cli.out, args),
        Command::Ledger(args) => cmd_ledger(&config, args),
        Command::OracleCompare { count } => cmd_oracle(&config, &cli.out, *count),
        Command::Config => {
            print!("{}", config.to_flat_string());
            Ok(())
        }
    }
}

fn cmd_run(config: &ScenarioConfig, out: &Path) -> anyhow::Result<()> {
    let outcome = run_scenario(config, config.run.seed)?;
    create_dir(out)?;
    outcome.write_artifacts(out)?;
    println!("{METRICS_HEADER}");
    println!("{}", metrics_line(outcome.seed, &outcome.metrics));
    Ok(())
}

fn cmd_sweep(config: &ScenarioConfig, out: &Path, args: &SweepArgs) -> anyhow::Result<()> {
    let table = match (&args.param, &args.recipe) {
        (Some(param), None) => {
            let param: SweepParam = param.parse()?;
            let spec = SweepSpec::new(param, args.values.clone(), config.run.replications)?;
            let rows = run_sweep(config, &spec)?;
            sweep_table(&format!("sweep_{}", param.short_name()), param, &rows)?
        }
        (None, Some(recipe)) => run_recipe(Figure::from_name(recipe)?, config, config.run.replications)?,
        _ => bail!(desvn_core::Error::InvalidArgument(
            "sweep needs either --param with --values, or --recipe".into()
        )),
    };
    create_dir(out)?;
    for path in emit_plot_data(&table, out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn open_chain(config: &ScenarioConfig, state: &Path) -> anyhow::Result<LedgerChain> {
    match fs::read_to_string(state) {
        Ok(text) => Ok(LedgerChain::import(&text).with_context(|| format!("reading {}", state.display()))?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let cc = Identities::new(config, config.run.seed).cc();
            Ok(LedgerChain::new(cc, config.gas_schedule()))
        }
        Err(e) => Err(e).with_context(|| format!("reading {}", state.display())),
    }
}

fn save_chain(chain: &LedgerChain, state: &Path) -> anyhow::Result<()> {
    fs::write(state, chain.export()).with_context(|| format!("writing {}", state.display()))
}

fn cmd_ledger(config: &ScenarioConfig, args: &LedgerArgs) -> anyhow::Result<()> {
    let mut chain = open_chain(config, &args.state)?;
    if matches!(args.action, LedgerAction::Register { .. } | LedgerAction::Mine { .. }) {
        // Never extend a chain that fails verification.
        chain.verify().with_context(|| format!("{} is corrupt", args.state.display()))?;
    }
    match &args.action {
        LedgerAction::Register {
            kind,
            address,
            drone_id,
            area_code,
            sender,
        } => {
            let record = match kind {
                KindArg::Drone => EntityRecord::drone(*address, drone_id.clone(), area_code.clone()),
                KindArg::Rsu => EntityRecord::rsu(*address, area_code.clone()),
                KindArg::Sv => EntityRecord::sv(*address),
            };
            let sender = sender.unwrap_or_else(|| chain.cc_address());
            chain.register_entity(sender, record)?;
            let gas = chain.pending().last().map_or(0, |t| t.gas_used);
            save_chain(&chain, &args.state)?;
            println!("queued {} {address} gas={gas}", EntityKind::from(*kind).name());
        }
        LedgerAction::Auth { kind, address } => {
            let auth = chain.authenticate((*kind).into(), address);
            let verdict = if auth.authenticated { "authenticated" } else { "unknown" };
            println!("{verdict} comparisons={}", auth.comparisons);
        }
        LedgerAction::Mine { gas_limit } => {
            let report = chain.mine_block(gas_limit.unwrap_or(config.ledger.block_gas_limit));
            save_chain(&chain, &args.state)?;
            println!(
                "block {} txs={} gas={} dropped={} pending={}",
                report.index,
                report.tx_count,
                report.gas_total,
                report.dropped.len(),
                chain.pending().len()
            );
            for (tx, why) in &report.dropped {
                eprintln!("dropped {}: {why}", tx.record.address());
            }
        }
        LedgerAction::Verify => {
            chain.verify()?;
            println!("ok blocks={}", chain.blocks().len());
        }
        LedgerAction::Stats => {
            let mut s = String::new();
            writeln!(s, "cc {}", chain.cc_address())?;
            writeln!(s, "blocks {}", chain.blocks().len())?;
            writeln!(s, "pending {}", chain.pending().len())?;
            writeln!(s, "committed_gas {}", chain.committed_gas())?;
            for kind in EntityKind::ALL {
                writeln!(s, "registered_{} {}", kind.name(), chain.registered_count(kind))?;
            }
            print!("{s}");
        }
    }
    Ok(())
}

fn cmd_oracle(config: &ScenarioConfig, out: &Path, count: u64) -> anyhow::Result<()> {
    if count == 0 {
        bail!(desvn_core::Error::InvalidArgument("--count must be positive".into()));
    }
    let mut csv = String::from("seed,greedy_bps,optimal_bps,ratio,greedy_violations\n");
    let mut optimal_hits = 0;
    let mut ratio_sum = 0.0;
    let mut violations = 0;
    for k in 0..count {
        let c = compare_with_oracle(config.run.seed.wrapping_add(k))?;
        let ratio = if c.optimal_bps > 0.0 { c.greedy_bps / c.optimal_bps } else { 1.0 };
        if c.greedy_bps >= c.optimal_bps {
            optimal_hits += 1;
        }
        ratio_sum += ratio;
        violations += c.greedy_violations;
        writeln!(csv, "{},{},{},{},{}", c.seed, c.greedy_bps, c.optimal_bps, ratio, c.greedy_violations)?;
    }
    create_dir(out)?;
    let path = out.join("oracle.csv");
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "instances={count} greedy_optimal={optimal_hits} mean_ratio={:.6} violations={violations}",
        ratio_sum / count as f64
    );
    Ok(())
}
