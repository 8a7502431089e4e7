//! `flnip` command-line tool.
//!
//! Machine-readable output goes to stdout; configuration echoes, timings that
//! are not the command's product, and diagnostics go to stderr.
//!
//! Exit codes: 0 success, 2 bad input (corpus, database, weights, flags),
//! 3 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flnip::datasets::{generate_synthetic, load_corpus, write_corpus, CorpusSpec, Labeling, SynthSpec};
use flnip::evolver::{evolve, precompute_tensor, read_weights, write_weights, GaConfig, TopK};
use flnip::patterns::{extract_feature, histogram, pattern_map, Coder};
use flnip::pixelgrid::decode_pgm;
use flnip::retrieval::{build_index, evaluate, query_with, read_db, write_db, EvalOptions};
use flnip::{format_sig9, Error, MetricId, ScaleBank, WeightVector};

#[derive(Debug, Parser)]
#[command(name = "flnip", version, about = "FLNIP texture retrieval")]
struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract features from a PGM tree into a database file.
    Index(IndexArgs),
    /// Learn fusion weights with the genetic algorithm.
    Train(TrainArgs),
    /// Rank the database against one query image.
    Query(QueryArgs),
    /// Precision / recall / F-score report over every record as a query.
    Evaluate(EvaluateArgs),
    /// Write a seeded synthetic texture corpus as a PGM tree.
    Synth(SynthArgs),
    /// Time feature extraction and retrieval on a corpus.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelingArg {
    Folder,
    Prefix,
}

impl From<LabelingArg> for Labeling {
    fn from(l: LabelingArg) -> Self {
        match l {
            LabelingArg::Folder => Labeling::Folder,
            LabelingArg::Prefix => Labeling::Prefix,
        }
    }
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "folder")]
    labeling: LabelingArg,
    /// Cut every image into non-overlapping NxN tiles.
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long, default_value = "0.5,0.8,1", value_parser = parse_bank)]
    sigmas: ScaleBank,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long, default_value_t = 20)]
    pop: usize,
    #[arg(long, default_value_t = 50)]
    gens: usize,
    #[arg(long, default_value_t = 0.01)]
    mutation: f64,
    #[arg(long, default_value_t = 0.9)]
    crossover: f64,
    /// Individuals copied unchanged into the next generation (0 disables elitism).
    #[arg(long, default_value_t = 1)]
    elite: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Retrieve a fixed count per query instead of the query's category size.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    exclude_self: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
#[group(id = "weighting", multiple = false)]
struct Weighting {
    /// Weights file written by `train`.
    #[arg(long, group = "weighting")]
    weights: Option<PathBuf>,
    /// Equal weights on all four blocks.
    #[arg(long, group = "weighting")]
    uniform: bool,
    /// Raw-image block only.
    #[arg(long, group = "weighting")]
    raw_only: bool,
}

impl Weighting {
    fn resolve(&self) -> Result<WeightVector, Error> {
        match &self.weights {
            Some(p) => read_weights(p),
            None if self.raw_only => Ok(WeightVector::raw_only()),
            None => Ok(WeightVector::uniform()),
        }
    }
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    weighting: Weighting,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value = "d1", value_parser = parse_metric)]
    metric: MetricId,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    db: PathBuf,
    #[command(flatten)]
    weighting: Weighting,
    /// Comma-separated retrieved counts, e.g. 10,20,30.
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, default_value = "d1", value_parser = parse_metric)]
    metric: MetricId,
    #[arg(long)]
    exclude_self: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 20.0)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Queries to time (taken from the start of the corpus).
    #[arg(long, default_value_t = 50)]
    queries: usize,
}

fn parse_bank(s: &str) -> Result<ScaleBank, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<MetricId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    eprintln!("# config: {cli:?}");
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot configure thread pool: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Train(a) => cmd_train(a),
        Command::Query(a) => cmd_query(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(corpus: &CorpusArgs) -> Result<Vec<flnip::LabeledImage>, Error> {
    let spec = CorpusSpec {
        root: corpus.input.clone(),
        labeling: corpus.labeling.into(),
        tile: corpus.tile,
    };
    let loaded = load_corpus(&spec)?;
    for skipped in &loaded.skipped {
        eprintln!("warning: {skipped}");
    }
    Ok(loaded.images)
}

fn cmd_index(a: &IndexArgs) -> Result<(), Error> {
    let images = load(&a.corpus)?;
    let start = Instant::now();
    let db = build_index(&images, &a.corpus.sigmas)?;
    let elapsed = start.elapsed();
    write_db(&db, &a.output)?;
    println!("records\t{}", db.len());
    println!(
        "extraction_ms_per_image\t{}",
        format_sig9(elapsed.as_secs_f64() * 1e3 / db.len() as f64)
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<(), Error> {
    let db = read_db(&a.db)?;
    let config = GaConfig {
        population_size: a.pop,
        generations: a.gens,
        mutation_rate: a.mutation,
        crossover_rate: a.crossover,
        elite_count: a.elite,
        seed: a.seed,
        top_k: a.top_k.map_or(TopK::CategorySize, TopK::Fixed),
        exclude_self: a.exclude_self,
    };
    config.validate()?;
    eprintln!("# ga: {config:?}");
    let tensor = precompute_tensor(&db)?;
    let ev = evolve(&tensor, db.labels(), &config)?;
    println!("generation\tbest_fitness");
    for (g, f) in ev.history.iter().enumerate() {
        println!("{g}\t{}", format_sig9(*f));
    }
    let w = ev.best.genes();
    println!(
        "weights\t{}",
        w.iter().map(|v| format_sig9(*v)).collect::<Vec<_>>().join("\t")
    );
    write_weights(w, &a.output)
}

fn cmd_query(a: &QueryArgs) -> Result<(), Error> {
    let db = read_db(&a.db)?;
    let w = a.weighting.resolve()?;
    let bytes = std::fs::read(&a.image).map_err(|e| Error::Io {
        path: a.image.clone(),
        reason: e.to_string(),
    })?;
    let start = Instant::now();
    let image = decode_pgm(&bytes)?;
    let feature = extract_feature(&image, db.bank(), "query", "query")?;
    let extracted = start.elapsed();
    let result = query_with(&db, &feature.feature, &w, a.top_k, a.metric)?;
    let total = start.elapsed();
    eprintln!(
        "# extraction_ms\t{}\tretrieval_ms\t{}",
        format_sig9(extracted.as_secs_f64() * 1e3),
        format_sig9((total - extracted).as_secs_f64() * 1e3)
    );
    println!("rank\tid\tcategory\tdistance");
    for (rank, hit) in result.ranked.iter().enumerate() {
        println!("{}\t{}\t{}\t{}", rank + 1, hit.id, hit.category, format_sig9(hit.distance));
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), Error> {
    let db = read_db(&a.db)?;
    let w = a.weighting.resolve()?;
    let opts = EvalOptions {
        metric: a.metric,
        exclude_self: a.exclude_self,
    };
    let report = evaluate(&db, &w, &a.n_list, opts)?;
    print!("{}", report.to_tsv());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), Error> {
    let spec = SynthSpec {
        class_count: a.classes,
        samples_per_class: a.samples,
        image_size: a.size,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let images = generate_synthetic(&spec)?;
    write_corpus(&images, &a.output)?;
    println!("images\t{}", images.len());
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<(), Error> {
    let images = load(&a.corpus)?;
    let n = images.len() as f64;

    // single-threaded per-image timings, like a feature-extraction table
    let start = Instant::now();
    for li in &images {
        let h = histogram(&pattern_map(&li.image, Coder::Flnip), true)?;
        std::hint::black_box(h);
    }
    let raw_only = start.elapsed().as_secs_f64() * 1e3 / n;

    let start = Instant::now();
    let mut records = Vec::with_capacity(images.len());
    for li in &images {
        records.push(extract_feature(&li.image, &a.corpus.sigmas, li.id.clone(), li.category.clone())?);
    }
    let full = start.elapsed().as_secs_f64() * 1e3 / n;

    let db = flnip::FeatureDatabase::new(records, a.corpus.sigmas.clone())?;
    let queries = a.queries.clamp(1, db.len());
    let w = WeightVector::uniform();
    let start = Instant::now();
    for r in &db.records()[..queries] {
        std::hint::black_box(query_with(&db, &r.feature, &w, db.len(), MetricId::D1)?);
    }
    let retrieval = start.elapsed().as_secs_f64() * 1e3 / queries as f64;

    println!("images\t{}", db.len());
    println!("feature_length\t{}", flnip::FEATURE_LEN);
    println!("raw_flnip_ms_per_image\t{}", format_sig9(raw_only));
    println!("extraction_ms_per_image\t{}", format_sig9(full));
    println!("retrieval_ms_per_query\t{}", format_sig9(retrieval));
    Ok(())
}
