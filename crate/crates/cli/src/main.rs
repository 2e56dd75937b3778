use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use f3::costmodel::ArchSpec;
use f3_cli::{config::RawConfig, cost, experiment, CliError};

#[derive(Parser)]
#[command(
    name = "f3",
    version,
    about = "Train fully-connected networks with delayed error feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its metrics.
    Run(ConfigArgs),
    /// Train the Cartesian product of one or more axes.
    Grid {
        #[command(flatten)]
        config: ConfigArgs,
        /// `name=v1,v2,…` over lr, depth, width, algorithm, feedback_init or seed.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
    },
    /// Print the analytical FMA and memory report.
    Cost(CostArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long = "batch-size")]
    batch_size: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "data-dir")]
    data_dir: Option<String>,
    #[arg(long)]
    output: Option<String>,
    /// Any other config key, as key=value (repeatable).
    #[arg(long = "set")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn raw(&self) -> Result<RawConfig, CliError> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        let named = [
            ("dataset", &self.dataset),
            ("algorithm", &self.algorithm),
            ("depth", &self.depth),
            ("width", &self.width),
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("seed", &self.seed),
            ("data_dir", &self.data_dir),
            ("output", &self.output),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                raw.set(key, v)?;
            }
        }
        for pair in &self.set {
            raw.set_pair(pair)?;
        }
        Ok(raw)
    }
}

#[derive(Args)]
struct CostArgs {
    /// Number of weight layers K.
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 100)]
    input: u64,
    #[arg(long, default_value_t = 10)]
    classes: u64,
    /// Hidden width (all hidden layers equal).
    #[arg(long, default_value_t = 500)]
    width: u64,
    /// Explicit `n_0,…,n_K`, replacing --layers/--input/--classes/--width.
    #[arg(long)]
    widths: Option<String>,
    #[arg(long, default_value_t = 1)]
    batch: u64,
    #[arg(long, default_value_t = 0)]
    samples: u64,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.raw()?.resolve()?;
            let out = experiment::run(&cfg)?;
            println!("metrics={}", out.dir.join("metrics.csv").display());
            println!(
                "best_test_loss={}",
                out.best_test_loss.map_or("none".into(), |v| v.to_string())
            );
            if let Some(acc) = out.best_test_accuracy {
                println!("best_test_accuracy={acc}");
            }
        }
        Command::Grid { config, axes } => {
            let axes = axes
                .iter()
                .map(|a| experiment::parse_axis(a))
                .collect::<Result<Vec<_>, _>>()?;
            let results = experiment::grid(&config.raw()?, &axes)?;
            if let Some((p, _)) = results.first() {
                let root = p.config.output.parent().map(|d| d.join("index.csv"));
                if let Some(index) = root {
                    println!("index={}", index.display());
                }
            }
        }
        Command::Cost(args) => {
            let arch = match &args.widths {
                Some(w) => ArchSpec::new(cost::parse_widths(w)?, args.batch, args.samples)?,
                None => ArchSpec::equal_width(
                    args.layers,
                    args.input,
                    args.width,
                    args.classes,
                    args.batch,
                    args.samples,
                )?,
            };
            print!("{}", cost::report(&arch));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
            eprintln!("error: category=usage message={first}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(if e.category() == "usage" { 2 } else { 1 })
        }
    }
}
