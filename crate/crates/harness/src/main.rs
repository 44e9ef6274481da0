use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uob_reps::config::ExperimentConfig;
use uob_reps::error::{HarnessError, Result};
use uob_reps::mdp_file::{load_cumulative_losses, load_mdp};
use uob_reps::output::{execute, float};
use uob_reps_core::regret::best_in_hindsight;

#[derive(Parser)]
#[command(name = "uob-reps", version, about = "Online learning in adversarial layered MDPs with unknown transitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write per-seed regret curves.
    Run {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run the experiment at several horizons and summarise final regret.
    Sweep {
        /// Experiment configuration (JSON); its `episodes` is ignored.
        #[arg(long)]
        config: PathBuf,
        /// Horizons to run, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        episodes: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Check that an MDP file describes a valid layered MDP.
    Validate {
        #[arg(long)]
        mdp: PathBuf,
    },
    /// Print the best fixed policy in hindsight for a loss file.
    Oracle {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        losses: PathBuf,
    },
}

#[derive(Args)]
struct RunFlags {
    /// Seed to run; repeat to run several. Replaces the config's seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Learner: uob-reps, full-info or uniform.
    #[arg(long)]
    algo: Option<String>,
    /// Write the confidence set of every epoch as JSON.
    #[arg(long)]
    dump_confidence: bool,
    /// Write the four-term regret decomposition per episode.
    #[arg(long)]
    decomposition: bool,
    /// Use the expected episode loss of the learner instead of the sampled one.
    #[arg(long)]
    expected_learner_loss: bool,
}

impl RunFlags {
    fn apply(self, config: &mut ExperimentConfig) {
        if !self.seeds.is_empty() {
            config.seeds = self.seeds;
        }
        if let Some(a) = self.algo {
            config.algorithm = a;
        }
        config.dump_confidence |= self.dump_confidence;
        config.decomposition |= self.decomposition;
        config.expected_learner_loss |= self.expected_learner_loss;
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn experiment(config_path: &Path, out: Option<PathBuf>, flags: RunFlags, budgets: Option<Vec<usize>>) -> Result<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    flags.apply(&mut config);
    let base = base_dir(config_path);
    let setup = config.instantiate(&base)?;
    let budgets = budgets.unwrap_or_else(|| vec![config.episodes]);
    if budgets.contains(&0) {
        return Err(HarnessError::config("every horizon must be at least 1"));
    }
    let out_dir = out.unwrap_or_else(|| base.join(&config.output));
    let rows = execute(&config, &setup, &out_dir, &budgets)?;
    println!("T,algo,mean_regret,stderr,runs");
    for r in rows {
        println!("{r}");
    }
    eprintln!("results written to {}", out_dir.display());
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out, flags } => experiment(&config, out, flags, None),
        Command::Sweep {
            config,
            episodes,
            out,
            flags,
        } => experiment(&config, out, flags, Some(episodes)),
        Command::Validate { mdp } => {
            let file = load_mdp(&mdp)?;
            let space = file.space();
            println!(
                "{}: valid; layers {:?}, {} actions, {} states",
                mdp.display(),
                space.layer_sizes(),
                space.num_actions(),
                space.num_states()
            );
            Ok(())
        }
        Command::Oracle { mdp, losses } => {
            let file = load_mdp(&mdp)?;
            let cumulative = load_cumulative_losses(&losses, file.space())?;
            let (policy, value) = best_in_hindsight(&file.kernel, &cumulative)?;
            println!("value,{}", float(value));
            println!("state,action");
            for x in 0..file.space().terminal_state() {
                let a = (0..file.space().num_actions())
                    .find(|&a| policy.prob(x, a) == 1.0)
                    .expect("comparator policies are deterministic");
                println!("{},{}", file.state_names[x], file.action_names[a]);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
