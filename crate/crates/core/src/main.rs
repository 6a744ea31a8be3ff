use clap::{Args, Parser, Subcommand};
use sensorcoord::experiment::{
    cmd_compare_affine, cmd_evaluate, cmd_generate, cmd_plot, cmd_train, ExperimentConfig, Profile,
};
use sensorcoord::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sensorcoord", version, about = "State estimation from sensor data with reduced ResNet lifting maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "desk", value_parser = ["desk", "paper"])]
    profile: String,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and measure the snapshot set.
    Generate(Common),
    /// Fit the lifting network on the cached snapshots.
    Train(Common),
    /// Error table on the ghost samples.
    Evaluate(Common),
    /// POD-PBDW against the network across sensor counts.
    CompareAffine(Common),
    /// SVG chart of loss histories or a comparison table.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn load(c: &Common) -> Result<(ExperimentConfig, Profile, PathBuf)> {
    let profile: Profile = c.profile.parse()?;
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    let cfg = cfg.resolve(profile)?;
    let out = cfg.out.clone();
    Ok((cfg, profile, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let (cfg, profile, out) = load(&c)?;
            let snaps = cmd_generate(&cfg, profile, &out)?;
            println!("wrote {} snapshots to {}", snaps.len(), out.display());
        }
        Command::Train(c) => {
            let (cfg, profile, out) = load(&c)?;
            let s = cmd_train(&cfg, profile, &out)?;
            println!("k = {} (energy {:.4}), {} parameters", s.k, s.energy_kept, s.net.count_params());
            match s.final_loss {
                Some(l) => println!("final loss {l:.6e}"),
                None => println!("no loss recorded"),
            }
        }
        Command::Evaluate(c) => {
            let (cfg, profile, out) = load(&c)?;
            let r = cmd_evaluate(&cfg, profile, &out)?;
            println!(
                "ehat {:.4}  rel L2 {:.4}  rel H1 {:.4}  max H1 {:.3e}",
                r.ehat, r.rel_l2, r.rel_h1, r.max_h1
            );
        }
        Command::CompareAffine(c) => {
            let (cfg, profile, out) = load(&c)?;
            let rows = cmd_compare_affine(&cfg, profile, &out)?;
            println!("wrote {} rows", rows.len());
        }
        Command::Plot { csv, out } => {
            let path = cmd_plot(&csv, &out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}
