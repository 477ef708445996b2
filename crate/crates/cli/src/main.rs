use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fraganon::attacks::{audit, sample_subjects, AuditOptions};
use fraganon::metrics::{information_loss, weighted_f_measure, write_metrics, MetricsRow, DEFAULT_NEIGHBORS};
use fraganon::model::{load_csv, load_csv_aligned, Dataset, Schema};
use fraganon::pipeline::{run, Model, PipelineConfig, Publication};
use fraganon::publish::{load_publication, write_publication, write_violations, LoadedPublication};
use fraganon::reconstruct::Strategy;
use fraganon::Error;

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "fraganon", version, about = "Fragmentation-based anonymization of classification data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fragment, anonymize and protect a table, writing the publication to a directory.
    Anonymize(AnonymizeArgs),
    /// Audit a publication; exits 1 when any check fails.
    Verify(VerifyArgs),
    /// Audit a publication and sample membership likelihoods.
    Attack(AttackArgs),
    /// Measure a publication's information loss and classification accuracy.
    Eval(EvalArgs),
    /// Run a grid of dimensionalities, anonymity levels and strategies.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Schema file with one `name=kind,role` line per column.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct AnonymizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "k-anon")]
    model: Model,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    l: Option<usize>,
    /// Join protection for k-anonymity [default: dgbe].
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = fraganon::infotheory::DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2)]
    fragments: usize,
    /// Also write debug copies of the fragments with their segment ids.
    #[arg(long)]
    debug: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Publication directory.
    #[arg(long)]
    dir: PathBuf,
    /// Write violating pairs to this CSV.
    #[arg(long)]
    violations: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Table to draw member subjects from, usually the original input.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 100)]
    members: usize,
    #[arg(long, default_value_t = 100)]
    non_members: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Held-out table for the weighted F-measure.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    neighbors: usize,
    /// Metrics CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Held-out table; a seeded 70/30 split of the input otherwise.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    #[arg(long, default_value = "k-anon")]
    model: Model,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "naive,dgbe,delta")]
    strategies: Vec<Strategy>,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = fraganon::infotheory::DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    neighbors: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A command outcome that is not a plain success.
#[derive(Debug)]
enum Failure {
    Violation,
    Usage(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let internal = matches!(
            e.downcast_ref::<Error>(),
            Some(Error::Internal(_) | Error::EnforcementStuck { .. } | Error::CountOverflow)
        );
        if internal {
            Failure::Internal(e)
        } else {
            Failure::Usage(e)
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Anonymize(a) => anonymize(a),
        Command::Verify(a) => verify(a),
        Command::Attack(a) => attack(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation) => ExitCode::from(EXIT_VIOLATION),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn load_input(input: &InputArgs) -> anyhow::Result<Dataset> {
    let schema = Schema::load(&input.schema)?;
    let data = load_csv(&input.input, &schema).with_context(|| format!("loading {}", input.input.display()))?;
    log::info!("{} rows, {} features", data.row_count(), data.feature_count());
    Ok(data)
}

fn config_for(model: Model, k: usize, l: Option<usize>, strategy: Option<Strategy>) -> anyhow::Result<PipelineConfig> {
    if k < 2 {
        bail!("--k must be at least 2");
    }
    match model {
        Model::LDiversity => {
            if strategy.is_some() {
                bail!("--strategy does not apply to l-diversity, whose segments already keep joins safe");
            }
            if l.is_none() {
                bail!("--model l-div needs --l");
            }
        }
        Model::KAnonymity => {
            if l.is_some() {
                bail!("--l applies only to --model l-div");
            }
        }
    }
    Ok(PipelineConfig {
        model,
        k,
        l,
        strategy: strategy.unwrap_or(Strategy::Dgbe),
        ..PipelineConfig::default()
    })
}

fn anonymize(args: AnonymizeArgs) -> Outcome {
    let config = PipelineConfig {
        delta: args.delta,
        bins: args.bins,
        seed: args.seed,
        fragments: args.fragments,
        ..config_for(args.model, args.k, args.l, args.strategy)?
    };
    config.validate()?;
    let data = load_input(&args.input)?;
    let publication = run(&data, &config)?;
    write_publication(&args.out_dir, &publication, &data, args.debug)?;
    println!(
        "wrote {} fragments to {}",
        publication.fragments.len(),
        args.out_dir.display()
    );
    if let Some(report) = &publication.report {
        println!(
            "{}: {} class values changed, {} removed",
            report.strategy, report.distorted_class_values, report.removed_class_values
        );
    }
    Ok(())
}

fn audit_options(published: &LoadedPublication) -> AuditOptions {
    let config = &published.manifest.config;
    AuditOptions {
        k: config.k,
        l: (config.model == Model::LDiversity).then_some(config.l).flatten(),
        delta: (config.model == Model::KAnonymity && config.strategy == Strategy::Delta).then_some(config.delta),
        segments: published.segment_of.clone(),
        subjects: Vec::new(),
    }
}

fn open(dir: &Path) -> anyhow::Result<LoadedPublication> {
    load_publication(dir).with_context(|| format!("loading publication from {}", dir.display()))
}

fn verify(args: VerifyArgs) -> Outcome {
    let published = open(&args.dir)?;
    let report = audit(&published.fragments, &audit_options(&published))?;
    print!("{}", report.to_text());
    if let Some(path) = &args.violations {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_violations(file, &report.violations)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Violation)
    }
}

fn attack(args: AttackArgs) -> Outcome {
    let published = open(&args.dir)?;
    let table = published.manifest.load_table(&args.input)?;
    let mut options = audit_options(&published);
    options.subjects = sample_subjects(&table, args.members, args.non_members, args.seed);
    let report = audit(&published.fragments, &options)?;
    print!("{}", report.to_text());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Violation)
    }
}

/// Feature ranges of the released table, taken from the envelopes of its
/// classes.
fn published_ranges(published: &LoadedPublication) -> Vec<(f64, f64)> {
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); published.fragmentation.feature_count()];
    for fragment in &published.fragments {
        for eq in &fragment.classes {
            for (g, &f) in eq.qi_box.iter().zip(fragment.fragment.features()) {
                ranges[f].0 = ranges[f].0.min(g.lower);
                ranges[f].1 = ranges[f].1.max(g.upper);
            }
        }
    }
    ranges
}

fn eval(args: EvalArgs) -> Outcome {
    let published = open(&args.dir)?;
    let config = &published.manifest.config;
    let weighted_f = match &args.test {
        Some(path) => {
            let test = published.manifest.load_table(path)?;
            Some(weighted_f_measure(&published.fragments, &test, args.neighbors)?)
        }
        None => None,
    };
    let row = MetricsRow {
        run_id: args.dir.file_name().map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned()),
        k: config.k,
        l: config.l,
        delta: (config.strategy == Strategy::Delta && config.model == Model::KAnonymity).then_some(config.delta),
        dims: published.manifest.schema.feature_count(),
        strategy: strategy_label(config),
        info_loss: information_loss(&published.fragments, &published_ranges(&published))?,
        weighted_f,
        distortions: published.report.as_ref().map_or(0, |r| r.total()),
    };
    emit_metrics(args.out.as_deref(), &[row])
}

fn strategy_label(config: &PipelineConfig) -> String {
    match (config.model, config.fragments) {
        (_, 1) => "unfragmented".into(),
        (Model::LDiversity, _) => "l-div".into(),
        (Model::KAnonymity, _) => config.strategy.to_string(),
    }
}

fn emit_metrics(out: Option<&Path>, rows: &[MetricsRow]) -> Outcome {
    match out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_metrics(file, rows)?;
        }
        None => write_metrics(std::io::stdout().lock(), rows)?,
    }
    Ok(())
}

struct Cell {
    dims: usize,
    config: PipelineConfig,
}

fn sweep(args: SweepArgs) -> Outcome {
    let base = config_for(args.model, 2, args.l, None)?;
    if let Some(&k) = args.k.iter().find(|&&k| k < 2) {
        return Err(Failure::Usage(anyhow!("--k must be at least 2, got {k}")));
    }
    let data = load_input(&args.input)?;
    if let Some(&d) = args.dims.iter().find(|&&d| d == 0 || d > data.feature_count()) {
        return Err(Failure::Usage(anyhow!(
            "--dims {d} is outside 1..={}",
            data.feature_count()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (train, test) = match &args.test {
        Some(path) => {
            let test = load_csv_aligned(path, data.schema(), &data)?;
            if test.schema() != data.schema() {
                return Err(Failure::Usage(anyhow!("test table columns differ from the input's")));
            }
            (data, test)
        }
        None => {
            let mut rows: Vec<usize> = (0..data.row_count()).collect();
            rows.shuffle(&mut rng);
            let cut = data.row_count() * 7 / 10;
            (data.select_rows(&rows[..cut]), data.select_rows(&rows[cut..]))
        }
    };
    let mut features: Vec<usize> = (0..train.feature_count()).collect();
    features.shuffle(&mut rng);

    let mut cells = Vec::new();
    for &dims in &args.dims {
        for &k in &args.k {
            let config = PipelineConfig {
                k,
                delta: args.delta,
                bins: args.bins,
                seed: args.seed,
                ..base.clone()
            };
            match args.model {
                Model::KAnonymity => {
                    for &strategy in &args.strategies {
                        cells.push(Cell {
                            dims,
                            config: PipelineConfig { strategy, ..config.clone() },
                        });
                    }
                }
                Model::LDiversity => cells.push(Cell { dims, config: config.clone() }),
            }
            cells.push(Cell {
                dims,
                config: PipelineConfig { fragments: 1, ..config },
            });
        }
    }

    let rows: Vec<anyhow::Result<MetricsRow>> = cells
        .par_iter()
        .map(|cell| {
            let chosen = &features[..cell.dims];
            let train = train.select_features(chosen)?;
            let test = test.select_features(chosen)?;
            let publication = run(&train, &cell.config)
                .with_context(|| format!("dims {} k {} {}", cell.dims, cell.config.k, strategy_label(&cell.config)))?;
            metrics_row(cell, &publication, &train, &test, args.neighbors)
        })
        .collect();
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    emit_metrics(args.out.as_deref(), &rows)
}

fn metrics_row(
    cell: &Cell,
    publication: &Publication,
    train: &Dataset,
    test: &Dataset,
    neighbors: usize,
) -> anyhow::Result<MetricsRow> {
    let config = &cell.config;
    let strategy = strategy_label(config);
    Ok(MetricsRow {
        run_id: format!("d{}-k{}-{strategy}", cell.dims, config.k),
        k: config.k,
        l: config.l,
        delta: (strategy == "delta").then_some(config.delta),
        dims: cell.dims,
        strategy,
        info_loss: information_loss(&publication.fragments, &train.feature_ranges())?,
        weighted_f: Some(weighted_f_measure(&publication.fragments, test, neighbors)?),
        distortions: publication.report.as_ref().map_or(0, |r| r.total()),
    })
}
