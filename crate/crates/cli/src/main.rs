use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uos_core::Error;

mod commands;
mod params;

/// Subspace clustering, hierarchical subspace learning and
/// subspace-sequence classification.
///
/// Results go to stdout as JSON lines; diagnostics go to stderr.
/// Exit status: 0 success, 2 configuration or input error, 3 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "uos", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Random seed (overrides the `seed` key).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print solver residuals for every iteration to stderr.
    #[arg(long)]
    pub trace: bool,
    /// Disable data parallelism.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lrr,
    Sclrr,
    Cslrr,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (`kind = uos` or `kind = sequences`).
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for the representation and cluster it spectrally.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "cslrr")]
        method: Method,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        clusters: Option<usize>,
        /// Write the cluster labels, one per line.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-iteration residuals as CSV.
        #[arg(long, value_name = "FILE")]
        emit_csv: Option<PathBuf>,
    },
    /// Learn the subspace hierarchy.
    Hierarchy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        levels: Option<usize>,
        /// Write the tree in binary form.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the human-readable tree summary.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Write leaf labels, one per sample.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Train and evaluate a sequence classifier, or apply a saved bundle.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Training sequence manifest.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Test sequence manifest.
        #[arg(long)]
        test: PathBuf,
        /// Use the leaves of a saved tree instead of learning them.
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Predict with a saved model bundle (no training).
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        save_bundle: Option<PathBuf>,
        /// Write predictions, one per line (`new` for rejected sequences).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score saved predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::NotSymmetric(_) | Error::DegenerateData(_) | Error::Training(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { common, out } => commands::synth(&common, &out),
        Command::Cluster { common, data, method, alpha, beta, lambda, clusters, out, emit_csv } => {
            let overrides = commands::ClusterOverrides { alpha, beta, lambda, clusters };
            commands::cluster(&common, &data, method, overrides, out.as_deref(), emit_csv.as_deref())
        }
        Command::Hierarchy { common, data, levels, out, summary, labels } => {
            commands::hierarchy(&common, &data, levels, out.as_deref(), summary.as_deref(), labels.as_deref())
        }
        Command::Classify { common, train, test, tree, bundle, save_bundle, out } => commands::classify(
            &common,
            &commands::ClassifyPaths {
                train: train.as_deref(),
                test: &test,
                tree: tree.as_deref(),
                bundle: bundle.as_deref(),
                save_bundle: save_bundle.as_deref(),
                out: out.as_deref(),
            },
        ),
        Command::Eval { pred, truth } => commands::eval(&pred, &truth),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Format { what: "tree", reason: "x".into() }), 2);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 3);
        assert_eq!(exit_code(&Error::NotSymmetric(1.0)), 3);
        assert_eq!(exit_code(&Error::Training("x".into())), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
