//! `irtkit` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "irtkit", version, about = "Student proficiency models and the online response-prediction benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Preprocess a raw export into a canonical dataset and summary.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Fit a model on a whole dataset and write its parameters.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Cross-validated online prediction.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Hyperparameter sweep scored on the parameter-selection holdout.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// `evaluate` with the windowed percent-correct baseline.
    Baseline {
        #[command(flatten)]
        data: DataArgs,
        /// Window length.
        #[arg(long = "w")]
        w: Option<usize>,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Merge evaluation runs into one comparison table.
    Report {
        /// Run directories or metrics.csv files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset.
    #[arg(long = "in", value_name = "PATH")]
    input: Option<PathBuf>,
    /// assistments, kdd or canonical (default canonical).
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    item_field: Option<String>,
    /// Group label column; pass an empty string for none.
    #[arg(long)]
    group_field: Option<String>,
    /// Keep duplicated rows instead of removing them.
    #[arg(long)]
    keep_duplicates: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// irt, hirt, tirt, dkt, window or constant.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long)]
    gamma2: Option<f64>,
    #[arg(long = "w")]
    w: Option<usize>,
    #[arg(long)]
    compressed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    dropout_p: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    minibatch_students: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed for DKT initialization and training.
    #[arg(long)]
    dkt_seed: Option<u64>,
    #[arg(long)]
    max_unroll: Option<usize>,
    /// item or group.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    identity_projection: bool,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    gradient_tolerance: Option<f64>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Seed of the student split.
    #[arg(long)]
    seed: Option<u64>,
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl DataArgs {
    fn resolve(self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.dataset.path, self.input);
        set(&mut cfg.dataset.format, self.format);
        set(&mut cfg.dataset.item_field, self.item_field);
        set(&mut cfg.dataset.group_field, self.group_field);
        cfg.dataset.keep_duplicates |= self.keep_duplicates;
        set(&mut cfg.out_dir, self.out_dir);
        Ok(cfg)
    }
}

impl ModelArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        if self.model.is_some() && self.model != m.family {
            // A different family from the command line starts from a clean slate.
            *m = Default::default();
        }
        set(&mut m.family, self.model);
        set(&mut m.sigma2, self.sigma2);
        set(&mut m.tau2, self.tau2);
        set(&mut m.gamma2, self.gamma2);
        set(&mut m.w, self.w);
        set(&mut m.compressed_dim, self.compressed_dim);
        set(&mut m.hidden_dim, self.hidden_dim);
        set(&mut m.dropout_p, self.dropout_p);
        set(&mut m.step_size, self.step_size);
        set(&mut m.minibatch_students, self.minibatch_students);
        set(&mut m.epochs, self.epochs);
        set(&mut m.seed, self.dkt_seed);
        set(&mut m.max_unroll, self.max_unroll);
        set(&mut m.labels, self.labels);
        if self.identity_projection {
            m.identity_projection = Some(true);
        }
        set(&mut cfg.fit.max_iterations, self.max_iterations);
        set(&mut cfg.fit.gradient_tolerance, self.gradient_tolerance);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { data } => commands::ingest(&data.resolve()?),
        Command::Fit { data, model } => {
            let mut cfg = data.resolve()?;
            model.apply(&mut cfg);
            commands::fit(&cfg)
        }
        Command::Evaluate { data, model, split } => {
            let mut cfg = data.resolve()?;
            model.apply(&mut cfg);
            set(&mut cfg.seed, split.seed);
            commands::evaluate(&cfg, "evaluate")
        }
        Command::Sweep { data, model, split } => {
            let mut cfg = data.resolve()?;
            model.apply(&mut cfg);
            set(&mut cfg.seed, split.seed);
            commands::sweep_cmd(&cfg)
        }
        Command::Baseline { data, w, split } => {
            let mut cfg = data.resolve()?;
            set(&mut cfg.model.w, w);
            set(&mut cfg.seed, split.seed);
            commands::baseline(&cfg)
        }
        Command::Report { inputs, out_dir } => commands::report(&inputs, out_dir.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err.chain().find_map(|e| e.downcast_ref::<irtkit::Error>());
    match core {
        Some(e) if e.is_numerical() => 3,
        Some(e) if e.is_data_error() => 2,
        Some(irtkit::Error::UndefinedMetric(_)) => 2,
        Some(irtkit::Error::Fold { source, .. }) if matches!(**source, irtkit::Error::UndefinedMetric(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
