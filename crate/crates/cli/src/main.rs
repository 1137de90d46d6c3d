//! latefit: reproducible pipelines for calibrated brief/profile scoring.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    cmd_bench, cmd_embed, cmd_evaluate, cmd_gen_data, cmd_import_teacher, cmd_rank, cmd_score,
    cmd_train, BenchOpts, EmbedOpts, EvaluateOpts, GenDataOpts, ImportTeacherOpts, RankOpts,
    ScoreOpts, TrainOpts,
};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "latefit", version, about = "Calibrated late-interaction scoring pipelines")]
struct Cli {
    /// JSON config file with command-scoped sections; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic skill-world dataset (documents + interactions).
    GenData(GenDataOpts),
    /// Precompute backbone embeddings into a binary cache.
    Embed(EmbedOpts),
    /// Train the scoring model by distilling teacher scores.
    Train(TrainOpts),
    /// Score every interaction pair and write scored-pairs JSONL.
    Score(ScoreOpts),
    /// Rank cached profiles for one brief.
    Rank(RankOpts),
    /// Compute the metrics report (optionally sliced and with OOD rows).
    Evaluate(EvaluateOpts),
    /// Measure cached-profile scoring throughput.
    Bench(BenchOpts),
    /// Validate and merge externally produced teacher scores.
    ImportTeacher(ImportTeacherOpts),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not failures
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let file_config = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
        },
        None => RunConfig::default(),
    };

    let result = match cli.command {
        Command::GenData(opts) => cmd_gen_data(opts, file_config.gen_data),
        Command::Embed(opts) => cmd_embed(opts, file_config.embed),
        Command::Train(opts) => cmd_train(opts, file_config.train),
        Command::Score(opts) => cmd_score(opts, file_config.score),
        Command::Rank(opts) => cmd_rank(opts, file_config.rank),
        Command::Evaluate(opts) => cmd_evaluate(opts, file_config.evaluate),
        Command::Bench(opts) => cmd_bench(opts, file_config.bench),
        Command::ImportTeacher(opts) => cmd_import_teacher(opts, file_config.import_teacher),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<latefit_core::Error>()
                .map(latefit_core::Error::exit_code)
                .unwrap_or_else(|| {
                    // missing required flags and bad enum values are usage
                    let msg = e.to_string();
                    if msg.contains("is required") || msg.contains("unknown loss") {
                        1
                    } else {
                        2
                    }
                });
            ExitCode::from(code as u8)
        }
    }
}
