use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use overquant::cli::{
    self, cmd_alphabet, cmd_design, cmd_dropout_relearn, cmd_entropy, cmd_learn, cmd_partition,
    cmd_plot, cmd_reproduce_table1, cmd_simulate, cmd_verify, ExperimentConfig, RunReport,
};

#[derive(Parser)]
#[command(name = "overquant", version, about = "Resilient observer design and quantized field emulation experiments")]
struct Cli {
    /// JSON experiment config; defaults apply if omitted where possible
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override for every randomized step
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for artifacts (CSV, SVG, JSON)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report format: json or pretty
    #[arg(long, global = true, default_value = "pretty")]
    format: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct resilient gains K and E and verify the dropout lattice
    Design,
    /// Verify resilience of the configured design over the dropout lattice
    Verify,
    /// Simulate the observer cascade under a dropout schedule
    Simulate,
    /// Enumerate the ternary quantization alphabet
    Alphabet,
    /// Entropy figures of the learned partition
    Entropy,
    /// Learn the state-space partition and export it
    Partition,
    /// Run one learner (oracle, hebb, dqn) at a single anchor state
    Learn,
    /// Rebuild the published planar example and diff it against golden values
    #[command(name = "reproduce-table1")]
    ReproduceTable1,
    /// Relearn the field with one channel removed and compare
    #[command(name = "dropout-relearn")]
    DropoutRelearn,
    /// Render an exported artifact as SVG
    Plot {
        /// Artifact to render
        input: PathBuf,
        /// One of: partition, trajectory, weights, quiver
        #[arg(long, default_value = "partition")]
        kind: String,
    },
}

fn run(cli: &Cli) -> overquant::Result<RunReport> {
    let (mut cfg, base) = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => (ExperimentConfig::default(), None),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.as_deref();
    let base = base.as_deref();
    match &cli.command {
        Command::Design => cmd_design(&cfg, base, out),
        Command::Verify => cmd_verify(&cfg, base, out),
        Command::Simulate => cmd_simulate(&cfg, base, out),
        Command::Alphabet => cmd_alphabet(&cfg, base, out),
        Command::Entropy => cmd_entropy(&cfg, base, out),
        Command::Partition => cmd_partition(&cfg, base, out),
        Command::Learn => cmd_learn(&cfg, base, out),
        Command::ReproduceTable1 => cmd_reproduce_table1(&cfg, base, out),
        Command::DropoutRelearn => cmd_dropout_relearn(&cfg, base, out),
        Command::Plot { input, kind } => cmd_plot(&cfg, input, kind, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let text = if cli.format == "json" {
                serde_json::to_string(&report).expect("report serializes")
            } else {
                serde_json::to_string_pretty(&report).expect("report serializes")
            };
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code(&err) as u8)
        }
    }
}
