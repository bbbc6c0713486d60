use clap::{Parser, Subcommand};
use rbpf_svgp_cli::config::{Mode, Overrides, RunConfig};
use rbpf_svgp_cli::pipeline::{cmd_eval, cmd_run, cmd_simulate, interrupt_flag};
use rbpf_svgp_cli::{CliError, Result};

/// Particle-filter SLAM with online sparse GP bathymetry maps.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic survey log.
    Simulate(Overrides),
    /// Run mapping-only or SLAM on a simulated or recorded survey.
    Run(Overrides),
    /// Recompute the reports of a run directory (given by --out).
    Eval(Overrides),
    /// Print the default configuration as TOML.
    Config,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(o) => {
            let (log, path) = cmd_simulate(RunConfig::from_overrides(&o)?)?;
            println!("{} ({} pings, {} beams)", path.display(), log.len(), log.num_beams());
        }
        Command::Run(o) => {
            let cfg = RunConfig::from_overrides(&o)?;
            let out = cfg.out.clone();
            let eval = cmd_run(cfg, Some(interrupt_flag()))?;
            println!("{}: map RMSE {:.4} m", out.display(), eval.report.map_rmse);
        }
        Command::Eval(o) => {
            let cfg = RunConfig::from_overrides(&o)?;
            if o.mode.is_some_and(|m| m != Mode::Eval) {
                return Err(CliError::Config("eval takes no other mode".into()));
            }
            let eval = cmd_eval(&cfg.out)?;
            println!("{}: map RMSE {:.4} m", cfg.out.display(), eval.report.map_rmse);
        }
        Command::Config => print!("{}", RunConfig::default().to_toml_string()),
    }
    Ok(())
}
