use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use shrinkda::{
    compute_scores, cross_validate, fit, generate_synthetic, hotelling_t2, load_dataset, select,
    selection, CvPlan, FdrBasis, LabeledDataset, LoadOptions, MissingPolicy, Mode, Pipeline,
    RankingScore, SelectionRule, ShrinkageModel, SyntheticSpec,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "shrinkda",
    version,
    about = "Shrinkage discriminant analysis: train, rank, select, and cross-validate"
)]
pub struct Cli {
    /// Worker threads (default: SHRINKDA_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Delimited matrix file (tab or comma; first row feature ids, first
    /// column sample ids).
    #[arg(long)]
    matrix: PathBuf,
    /// Two-column file mapping sample id to class.
    #[arg(long)]
    labels: PathBuf,
    /// The matrix file has features as rows and samples as columns.
    #[arg(long)]
    transpose: bool,
    /// Replace missing cells by the feature mean instead of failing.
    #[arg(long)]
    impute: bool,
}

impl InputArgs {
    fn load(&self) -> Result<LabeledDataset> {
        let options = LoadOptions {
            transpose: self.transpose,
            missing: if self.impute {
                MissingPolicy::ImputeMean
            } else {
                MissingPolicy::Reject
            },
            delimiter: None,
        };
        let (dataset, _report) = load_dataset(&self.matrix, &self.labels, &options)?;
        Ok(dataset)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Lda,
    Dda,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Lda => Mode::Lda,
            ModeArg::Dda => Mode::Dda,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Fndr,
    Fdr,
    Hc,
    Top,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Local,
    Tail,
}

impl From<BasisArg> for FdrBasis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Local => FdrBasis::Local,
            BasisArg::Tail => FdrBasis::Tail,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    /// Sum of squared decorrelated t-scores.
    Cat,
    /// Max absolute t-score (supports the `top` rule only).
    Pam,
}

#[derive(Args)]
struct RuleArgs {
    /// Retention rule.
    #[arg(long, value_enum, default_value = "fndr")]
    rule: RuleArg,
    /// Cutoff for the fndr/fdr rules.
    #[arg(long, default_value_t = 0.2)]
    cutoff: f64,
    /// Top fraction searched by higher criticism.
    #[arg(long, default_value_t = 0.1)]
    hc_fraction: f64,
    /// Feature count for the top rule.
    #[arg(long, default_value_t = 100)]
    top: usize,
    /// Threshold the local fdr or the tail-area Fdr.
    #[arg(long, value_enum, default_value = "local")]
    basis: BasisArg,
}

impl RuleArgs {
    fn rule(&self) -> Option<SelectionRule> {
        match self.rule {
            RuleArg::Fndr => Some(SelectionRule::Fndr {
                cutoff: self.cutoff,
            }),
            RuleArg::Fdr => Some(SelectionRule::Fdr {
                cutoff: self.cutoff,
            }),
            RuleArg::Hc => Some(SelectionRule::Hc {
                fraction: self.hc_fraction,
            }),
            RuleArg::Top => Some(SelectionRule::Top { count: self.top }),
            RuleArg::None => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and serialize it to a JSON file.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "lda")]
        mode: ModeArg,
        /// Output model path.
        #[arg(long)]
        output: PathBuf,
    },
    /// Predict classes (with posteriors) for a matrix using a saved model.
    Predict {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Matrix of samples to classify.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        transpose: bool,
        #[arg(long)]
        impute: bool,
        /// Output TSV (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export the per-feature score table.
    Rank {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "lda")]
        mode: ModeArg,
        /// Also print the Hotelling-type statistic of the top-ranked set
        /// of this size (two-class data only).
        #[arg(long)]
        set_statistic: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run feature selection and export the per-feature report.
    Select {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "lda")]
        mode: ModeArg,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cross-validated error estimation with in-fold selection.
    Crossval {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "lda")]
        mode: ModeArg,
        #[command(flatten)]
        rule: RuleArgs,
        /// Ranking statistic for the `top` rule.
        #[arg(long, value_enum, default_value = "cat")]
        score: ScoreArg,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Disable per-class stratification of the folds.
        #[arg(long)]
        unbalanced: bool,
        /// Output JSON report (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic benchmark dataset.
    Simulate {
        /// Comma-separated samples per class, e.g. 50,50.
        #[arg(long, value_delimiter = ',')]
        n_per_class: Vec<usize>,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0.1)]
        nonnull_fraction: f64,
        #[arg(long, default_value_t = 1.0)]
        effect: f64,
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
        #[arg(long, default_value_t = 10)]
        block_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output matrix file.
        #[arg(long)]
        matrix_out: PathBuf,
        /// Output labels file.
        #[arg(long)]
        labels_out: PathBuf,
        /// Optional file recording the truly informative feature ids.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Train {
            input,
            mode,
            output,
        } => {
            let data = input.load()?;
            let model = fit(&data, mode.into())?;
            model.save(&output)?;
            eprintln!(
                "trained {} model on n={} p={} K={}; wrote {}",
                Mode::from(mode),
                data.n_samples(),
                data.n_features(),
                data.n_classes(),
                output.display()
            );
            Ok(())
        }
        Command::Predict {
            model,
            matrix,
            transpose,
            impute,
            output,
        } => predict(&model, &matrix, transpose, impute, output.as_deref()),
        Command::Rank {
            input,
            mode,
            set_statistic,
            output,
        } => {
            let data = input.load()?;
            let model = fit(&data, mode.into())?;
            let table = compute_scores(&model)?;
            let mut comments = config_comments(&[
                ("command", "rank".into()),
                ("mode", Mode::from(mode).to_string()),
                ("n", data.n_samples().to_string()),
                ("p", data.n_features().to_string()),
                ("classes", data.class_names().join(",")),
            ]);
            if let Some(size) = set_statistic {
                let ranking = table.ranking_by_summary();
                let set: Vec<usize> = ranking.into_iter().take(size.max(1)).collect();
                let t2 = hotelling_t2(&table, &set)?;
                comments.push(format!("set_statistic_top{}={t2}", set.len()));
            }
            with_writer(output.as_deref(), |w| Ok(table.write_tsv(w, &comments)?))
        }
        Command::Select {
            input,
            mode,
            rule,
            output,
        } => {
            let Some(selection_rule) = rule.rule() else {
                bail!("select needs a rule other than `none`");
            };
            let data = input.load()?;
            let model = fit(&data, mode.into())?;
            let table = compute_scores(&model)?;
            let est = table.fdr_estimate()?;
            let result = select(&est, &table.summary, selection_rule, rule.basis.into())?;
            let comments = config_comments(&[
                ("command", "select".into()),
                ("mode", Mode::from(mode).to_string()),
                ("rule", result.rule.to_string()),
                (
                    "basis",
                    format!("{:?}", FdrBasis::from(rule.basis)).to_lowercase(),
                ),
                ("kept", result.kept.len().to_string()),
                ("threshold_score", result.threshold_value.to_string()),
                ("pi0", est.pi0.to_string()),
                (
                    "null",
                    format!(
                        "location={} scale={}",
                        est.null_params.location, est.null_params.scale
                    ),
                ),
            ]);
            with_writer(output.as_deref(), |w| {
                Ok(selection::write_selection_tsv(
                    w,
                    data.feature_ids(),
                    &table.summary,
                    &result,
                    &comments,
                )?)
            })
        }
        Command::Crossval {
            input,
            mode,
            rule,
            score,
            folds,
            reps,
            seed,
            unbalanced,
            output,
        } => {
            let data = input.load()?;
            let mut pipeline = Pipeline::new(mode.into(), rule.rule());
            pipeline.basis = rule.basis.into();
            pipeline.score = match score {
                ScoreArg::Cat => RankingScore::CatSummary,
                ScoreArg::Pam => RankingScore::PamMax,
            };
            let plan = CvPlan {
                folds,
                repetitions: reps,
                seed,
                balanced: !unbalanced,
            };
            let report = cross_validate(&data, &pipeline, &plan)?;
            eprintln!(
                "mean error {:.4} (se {:.4}) over {} splits",
                report.mean_error,
                report.std_error,
                report.split_errors.len()
            );
            with_writer(output.as_deref(), |w| {
                writeln!(w, "{}", report.to_json()?)?;
                Ok(())
            })
        }
        Command::Simulate {
            n_per_class,
            p,
            nonnull_fraction,
            effect,
            rho,
            block_size,
            seed,
            matrix_out,
            labels_out,
            truth_out,
        } => {
            let spec = SyntheticSpec {
                n_per_class,
                p,
                nonnull_fraction,
                effect_size: effect,
                block_rho: rho,
                block_size,
            };
            let generated = generate_synthetic(&spec, seed)?;
            generated.dataset.save_matrix(&matrix_out)?;
            generated.dataset.save_labels(&labels_out)?;
            if let Some(path) = truth_out {
                let mut w = BufWriter::new(File::create(&path)?);
                for &i in &generated.nonnull {
                    writeln!(w, "{}", generated.dataset.feature_ids()[i])?;
                }
            }
            eprintln!(
                "simulated n={} p={} with {} informative feature(s), seed {}",
                generated.dataset.n_samples(),
                p,
                generated.nonnull.len(),
                seed
            );
            Ok(())
        }
    }
}

fn predict(
    model_path: &Path,
    matrix_path: &Path,
    transpose: bool,
    impute: bool,
    output: Option<&Path>,
) -> Result<()> {
    let model = ShrinkageModel::load(model_path)?;
    let table = read_unlabeled_matrix(matrix_path, transpose, impute, &model)?;
    let outputs = model.predict(table.matrix.view())?;
    let comments = config_comments(&[
        ("command", "predict".into()),
        ("model", model_path.display().to_string()),
        ("mode", model.mode().to_string()),
        ("p", model.n_features().to_string()),
    ]);
    with_writer(output, |w| {
        for c in &comments {
            writeln!(w, "# {c}")?;
        }
        write!(w, "sample_id\tpredicted")?;
        for class in model.class_names() {
            write!(w, "\tposterior.{class}")?;
        }
        writeln!(w)?;
        for (sid, out) in table.sample_ids.iter().zip(&outputs) {
            write!(w, "{sid}\t{}", model.class_names()[out.predicted])?;
            for p in &out.posteriors {
                write!(w, "\t{p}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

struct UnlabeledMatrix {
    matrix: ndarray::Array2<f64>,
    sample_ids: Vec<String>,
}

type UnlabeledCell = Box<dyn Fn(usize, usize) -> f64>;

/// Reads a prediction matrix and aligns its columns to the model's
/// feature ids (the file may hold extra features in any order).
fn read_unlabeled_matrix(
    path: &Path,
    transpose: bool,
    impute: bool,
    model: &ShrinkageModel,
) -> Result<UnlabeledMatrix> {
    // Reuse the dataset parser by pairing the matrix with synthetic labels,
    // then reorder columns by feature id.
    let content =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let delim = if content.lines().next().unwrap_or("").matches('\t').count()
        >= content.lines().next().unwrap_or("").matches(',').count()
    {
        '\t'
    } else {
        ','
    };
    let mut lines = content.lines();
    let header: Vec<&str> = lines
        .next()
        .context("empty matrix file")?
        .split(delim)
        .collect();
    if header.len() < 2 {
        bail!("matrix header needs an id column plus data columns");
    }
    let (col_ids, row_data): (Vec<String>, Vec<(String, Vec<f64>)>) = {
        let cols: Vec<String> = header[1..].iter().map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(delim);
            let id = parts.next().unwrap_or("").trim().to_string();
            let mut values = Vec::with_capacity(cols.len());
            for (j, cell) in parts.enumerate() {
                let cell = cell.trim();
                let v: f64 = if cell.is_empty()
                    || cell.eq_ignore_ascii_case("na")
                    || cell.eq_ignore_ascii_case("nan")
                {
                    if impute {
                        f64::NAN
                    } else {
                        bail!(
                            "missing value at line {} column {} (use --impute to allow)",
                            idx + 2,
                            j + 2
                        );
                    }
                } else {
                    cell.parse()
                        .with_context(|| format!("non-numeric cell {cell:?} at line {}", idx + 2))?
                };
                values.push(v);
            }
            if values.len() != cols.len() {
                bail!(
                    "line {} has {} fields, expected {}",
                    idx + 2,
                    values.len() + 1,
                    cols.len() + 1
                );
            }
            rows.push((id, values));
        }
        (cols, rows)
    };

    let (feature_ids, sample_ids, cell): (Vec<String>, Vec<String>, UnlabeledCell) = if transpose {
        let data: Vec<Vec<f64>> = row_data.iter().map(|(_, v)| v.clone()).collect();
        (
            row_data.iter().map(|(id, _)| id.clone()).collect(),
            col_ids,
            Box::new(move |s, f| data[f][s]),
        )
    } else {
        let data: Vec<Vec<f64>> = row_data.iter().map(|(_, v)| v.clone()).collect();
        (
            col_ids,
            row_data.iter().map(|(id, _)| id.clone()).collect(),
            Box::new(move |s, f| data[s][f]),
        )
    };

    // Column positions of each model feature.
    let mut positions = Vec::with_capacity(model.n_features());
    for id in model.feature_ids() {
        let pos = feature_ids
            .iter()
            .position(|f| f == id)
            .with_context(|| format!("prediction matrix lacks model feature {id:?}"))?;
        positions.push(pos);
    }
    let n = sample_ids.len();
    let mut matrix = ndarray::Array2::<f64>::zeros((n, positions.len()));
    for (fi, &pos) in positions.iter().enumerate() {
        let observed: Vec<f64> = (0..n)
            .map(|s| cell(s, pos))
            .filter(|v| v.is_finite())
            .collect();
        if observed.is_empty() {
            bail!(
                "feature {:?} has no observed values",
                model.feature_ids()[fi]
            );
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for s in 0..n {
            let v = cell(s, pos);
            matrix[(s, fi)] = if v.is_finite() { v } else { mean };
        }
    }
    Ok(UnlabeledMatrix { matrix, sample_ids })
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let from_env = std::env::var("SHRINKDA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(threads) = flag.or(from_env) {
        if threads == 0 {
            bail!("thread count must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing the worker pool")?;
    }
    Ok(())
}

fn config_comments(pairs: &[(&str, String)]) -> Vec<String> {
    let mut out = vec![format!("shrinkda {VERSION}")];
    out.extend(pairs.iter().map(|(k, v)| format!("{k}={v}")));
    out
}

fn with_writer<F>(path: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let mut w = BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            );
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}
