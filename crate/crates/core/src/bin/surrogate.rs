use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use surrogate_core::dataset::{
    generate_synthetic, load_dir, save_dir, split_holdout, Standardizer, SyntheticSpec,
};
use surrogate_core::featsel::{fit_pca, FeatureSelection, DEFAULT_THRESHOLD};
use surrogate_core::harness::{
    cases_csv, cases_file_name, evaluate_holdout, group_correlations, make_report,
    report_file_name, resolve_plan, train_from_report, FinalReport, TrainedModel,
    DEFAULT_PCA_COMPONENTS,
};
use surrogate_core::model::{FeatureMode, FeaturePlan, ModelKind};
use surrogate_core::persist::{read_json, write_json, write_text};
use surrogate_core::tuning::{nested_cv, CvReport, NestedCvConfig, ParamSpace};
use surrogate_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "surrogate",
    version,
    about = "Surrogate regression experiments on tabular simulation data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (data.csv + manifest.json).
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated indices of features the targets ignore.
        #[arg(long, value_delimiter = ',', default_value = "7,8")]
        dead: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
    },
    /// Pearson correlations between features and one target group (training rows).
    Correlate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        group: String,
        /// Matrix CSV; a long-format copy is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop features whose strongest correlation with the group is below a threshold.
    Reduce {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        group: String,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Principal components of the standardized training features.
    Pca {
        #[arg(long)]
        data: PathBuf,
        #[arg(short, long, default_value_t = DEFAULT_PCA_COMPONENTS)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nested cross-validated randomized search.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        group: String,
        #[arg(long, default_value_t = FeatureMode::All)]
        features: FeatureMode,
        /// FeatureSelection JSON from `reduce`; computed from the training rows when absent.
        #[arg(long)]
        selection: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(short, long, default_value_t = DEFAULT_PCA_COMPONENTS)]
        k: usize,
        /// ParamSpace JSON; the built-in space for the model kind when absent.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the best tuned candidate on the full training partition.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        cv_report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained model on the hold-out partition.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect every evaluation JSON in a directory into summary tables.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn training_rows(data: &Path) -> Result<surrogate_core::dataset::Dataset> {
    Ok(split_holdout(&load_dir(data)?)?.0)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            n,
            seed,
            out,
            dead,
            noise,
        } => {
            let spec = SyntheticSpec {
                n_records: n,
                seed,
                dead_features: dead,
                noise_sigma: noise,
                ..SyntheticSpec::default()
            };
            save_dir(&generate_synthetic(&spec)?, &out)
        }
        Command::Correlate { data, group, out } => {
            group_correlations(&training_rows(&data)?, &group)?.export(&out)
        }
        Command::Reduce {
            data,
            group,
            threshold,
            out,
        } => {
            let train = training_rows(&data)?;
            let selection = match resolve_plan(FeatureMode::Reduced, &train, &group, threshold, 0)?
            {
                FeaturePlan::Reduced { selection } => selection,
                _ => unreachable!("reduced mode yields a selection"),
            };
            write_json(&selection, &out)
        }
        Command::Pca { data, k, out } => {
            let train = training_rows(&data)?;
            let z = Standardizer::fit(&train.x)?.transform(&train.x)?;
            write_json(&fit_pca(&z, k)?, &out)
        }
        Command::Tune {
            data,
            model,
            group,
            features,
            selection,
            threshold,
            k,
            space,
            iters,
            seed,
            out,
        } => {
            let train = training_rows(&data)?;
            let plan = match (features, selection) {
                (FeatureMode::Reduced, Some(path)) => FeaturePlan::Reduced {
                    selection: read_json::<FeatureSelection>(path)?,
                },
                (_, Some(_)) => {
                    return Err(Error::validation(
                        "--selection only applies to --features reduced",
                    ))
                }
                (mode, None) => resolve_plan(mode, &train, &group, threshold, k)?,
            };
            let space = match space {
                Some(path) => read_json::<ParamSpace>(path)?,
                None => ParamSpace::default_for(model),
            };
            if space.model_kind != model {
                return Err(Error::validation(format!(
                    "search space is for {}, not {model}",
                    space.model_kind
                )));
            }
            let cfg = NestedCvConfig {
                space: &space,
                n_iter: iters,
                group: &group,
                plan: &plan,
                seed,
            };
            write_json(&nested_cv(&cfg, &train)?, &out)
        }
        Command::Train {
            data,
            cv_report,
            out,
        } => {
            let report: CvReport = read_json(cv_report)?;
            write_json(&train_from_report(&report, &training_rows(&data)?)?, &out)
        }
        Command::Evaluate {
            data,
            model_file,
            out,
        } => {
            let (train, test) = split_holdout(&load_dir(&data)?)?;
            let model: TrainedModel = read_json(model_file)?;
            if model.train_digest != train.digest() {
                return Err(Error::validation(
                    "model was trained on a different training partition",
                ));
            }
            let report = evaluate_holdout(&model, &test)?;
            write_json(&report, out.join(report_file_name(&report)))?;
            write_text(out.join(cases_file_name(&report)), &cases_csv(&report))
        }
        Command::Report { input, out } => {
            let reports = json_files(&input)?
                .into_iter()
                .map(read_json::<FinalReport>)
                .collect::<Result<Vec<_>>>()?;
            make_report(&reports, &out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
