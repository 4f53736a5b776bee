use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use metatask::fewshot::{generate_synthetic_corpus, ingest_directory, ClassStore, DatasetManifest, SyntheticSpec};
use metatask::maml::{evaluate, meta_train, EvalConfig, EvalSummary, MamlConfig, TrainReport};
use metatask::nn::{load_params, save_params, Activation, MetaModule, MetaSequential};
use metatask::tasks::{binomial, ClassSplitter, CombinationDataset, SplitDataset};
use metatask::toy::{sinusoid_dataset, ToyConfig, ToyDataset};
use metatask::{MetaDataset, MetaSplit};

#[derive(Parser)]
#[command(name = "metatask", version, about = "Gradient-based meta-learning on few-shot task distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train a regressor on sinusoid tasks.
    TrainSinusoid(TrainSinusoid),
    /// Meta-train a classifier on N-way tasks from an image directory.
    TrainFewshot(TrainFewshot),
    /// Evaluate a saved checkpoint on held-out tasks.
    Eval(Eval),
    /// Print split sizes and task counts of an image dataset.
    InspectDataset(Inspect),
    /// Write a procedural glyph corpus with its manifest.
    GenSynthetic(GenSynthetic),
}

#[derive(Args, Clone)]
struct Training {
    #[arg(long, default_value_t = 0.01)]
    inner_lr: f64,
    #[arg(long, default_value_t = 0.001)]
    outer_lr: f64,
    #[arg(long, default_value_t = 1)]
    inner_steps: usize,
    #[arg(long, default_value_t = 4)]
    meta_batch: usize,
    #[arg(long, default_value_t = 2000)]
    outer_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop second-order terms from the meta-gradient.
    #[arg(long)]
    first_order: bool,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "40,40")]
    hidden: Vec<usize>,
    /// Held-out tasks used for the final evaluation.
    #[arg(long, default_value_t = 100)]
    eval_tasks: usize,
    /// Per-step CSV report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Where to save the meta-trained parameters.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Training {
    fn config(&self) -> MamlConfig {
        MamlConfig {
            inner_lr: self.inner_lr,
            outer_lr: self.outer_lr,
            inner_steps: self.inner_steps,
            first_order: self.first_order,
            meta_batch_size: self.meta_batch,
            total_outer_steps: self.outer_steps,
            seed: self.seed,
        }
    }

    fn eval(&self) -> EvalConfig {
        EvalConfig {
            num_tasks: self.eval_tasks,
            seed: self.seed,
        }
    }

    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        std::iter::once(input).chain(self.hidden.iter().copied()).chain([output]).collect()
    }
}

#[derive(Args)]
struct TrainSinusoid {
    /// Support examples per task.
    #[arg(long, default_value_t = 5)]
    shots: usize,
    /// Query examples per task; defaults to `--shots`.
    #[arg(long)]
    query_shots: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[command(flatten)]
    training: Training,
}

#[derive(Args, Clone)]
struct ImageData {
    #[arg(long)]
    data: PathBuf,
    /// Defaults to `<data>/manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    ways: usize,
    #[arg(long, default_value_t = 1)]
    shots: usize,
    #[arg(long, default_value_t = 15)]
    test_shots: usize,
    /// Resize images to this square size (nearest neighbour).
    #[arg(long)]
    size: Option<usize>,
    /// Replicate grayscale images to this many channels.
    #[arg(long)]
    channels: Option<usize>,
}

impl ImageData {
    fn manifest(&self) -> Result<DatasetManifest> {
        let path = self.manifest.clone().unwrap_or_else(|| self.data.join(metatask::fewshot::MANIFEST_FILE));
        DatasetManifest::load(&path).with_context(|| format!("loading manifest {}", path.display()))
    }

    fn split(&self, manifest: &DatasetManifest, split: MetaSplit) -> Result<SplitDataset<CombinationDataset>> {
        let mut store = ingest_directory(&self.data, manifest, split)?;
        if let Some(size) = self.size {
            store = store.resized(size);
        }
        if let Some(c) = self.channels {
            store = store.with_channels(c)?;
        }
        let ds = CombinationDataset::new(Arc::new(store), self.ways)
            .with_context(|| format!("building {}-way tasks over the {split} classes", self.ways))?;
        Ok(SplitDataset::new(ds, ClassSplitter::new(self.shots, self.test_shots)))
    }
}

#[derive(Args)]
struct TrainFewshot {
    #[command(flatten)]
    data: ImageData,
    #[command(flatten)]
    training: Training,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskFamily {
    Sinusoid,
    Fewshot,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "sinusoid")]
    task: TaskFamily,
    /// Hidden activation; defaults to tanh for sinusoid and relu for fewshot.
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long, default_value_t = 0.01)]
    inner_lr: f64,
    #[arg(long, default_value_t = 1)]
    inner_steps: usize,
    #[arg(long, default_value_t = 100)]
    eval_tasks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sinusoid support examples per task.
    #[arg(long, default_value_t = 5)]
    shots: usize,
    #[arg(long)]
    query_shots: Option<usize>,
    /// Image dataset root, for `--task fewshot`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    ways: usize,
    #[arg(long, default_value_t = 15)]
    test_shots: usize,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
}

#[derive(Args)]
struct Inspect {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Task sizes to count combinations for.
    #[arg(long, value_delimiter = ',', default_value = "5,20")]
    ways: Vec<usize>,
}

#[derive(Args)]
struct GenSynthetic {
    #[arg(long, default_value_t = 100)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 28)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn sinusoid_split(shots: usize, query: usize, noise_std: Option<f64>, split: MetaSplit) -> Result<SplitDataset<ToyDataset>> {
    let toy = sinusoid_dataset(ToyConfig {
        num_samples_per_task: shots + query,
        noise_std,
        meta_split: split,
        ..ToyConfig::default()
    })?;
    Ok(SplitDataset::new(toy, ClassSplitter::new(shots, query)))
}

fn print_summary(label: &str, s: &EvalSummary) {
    print!(
        "{label}: query loss {:.4} ± {:.4} before adaptation, {:.4} ± {:.4} after",
        s.pre_loss.mean, s.pre_loss.std, s.post_loss.mean, s.post_loss.std
    );
    if let (Some(pre), Some(post)) = (s.pre_accuracy, s.post_accuracy) {
        print!("; accuracy {:.1}% before, {:.1}% ± {:.1}% after", 100.0 * pre.mean, 100.0 * post.mean, 100.0 * post.std);
    }
    println!(
        " ({} tasks, {:.0}% improved)",
        s.tasks.len(),
        100.0 * s.improved_fraction
    );
}

fn write_report(path: &Path, report: &TrainReport) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    report.write_csv(BufWriter::new(file))?;
    Ok(())
}

fn train<D: MetaDataset>(train: &SplitDataset<D>, test: &SplitDataset<D>, net: MetaSequential, opts: &Training) -> Result<()> {
    let config = opts.config();
    config.validate()?;
    let baseline = evaluate(test, &net, &config, &opts.eval())?;
    print_summary("random init", &baseline);
    let (trained, mut report) = meta_train(train, net, &config)?;
    let last = report.records.last().map(|r| r.outer_loss).unwrap_or(f64::NAN);
    println!("{} outer steps, final outer loss {last:.4}", report.records.len());
    let summary = evaluate(test, &trained, &config, &opts.eval())?;
    print_summary("meta-trained", &summary);
    report.evaluation = Some(summary);
    if let Some(path) = &opts.report {
        write_report(path, &report)?;
    }
    if let Some(path) = &opts.checkpoint {
        save_params(&trained.named_parameters(), path)?;
        println!("saved {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainSinusoid(args) => {
            let query = args.query_shots.unwrap_or(args.shots);
            let train_set = sinusoid_split(args.shots, query, args.noise_std, MetaSplit::Train)?;
            let test_set = sinusoid_split(args.shots, query, args.noise_std, MetaSplit::Test)?;
            let net = MetaSequential::mlp(&args.training.sizes(1, 1), Activation::Tanh, args.training.seed)?;
            train(&train_set, &test_set, net, &args.training)
        }
        Command::TrainFewshot(args) => {
            let manifest = args.data.manifest()?;
            let train_set = args.data.split(&manifest, MetaSplit::Train)?;
            let test_set = args.data.split(&manifest, MetaSplit::Test)?;
            let features = train_set.inner().store().input_shape().iter().product();
            let sizes = args.training.sizes(features, args.data.ways);
            let net = MetaSequential::mlp(&sizes, Activation::Relu, args.training.seed)?;
            train(&train_set, &test_set, net, &args.training)
        }
        Command::Eval(args) => eval(args),
        Command::InspectDataset(args) => {
            let manifest = ImageData {
                data: args.data.clone(),
                manifest: args.manifest,
                ways: 1,
                shots: 1,
                test_shots: 1,
                size: None,
                channels: None,
            }
            .manifest()?;
            let [c, h, w] = manifest.image_shape;
            println!("image shape {c}×{h}×{w}, {} classes", manifest.classes.len());
            for split in MetaSplit::ALL {
                let store: ClassStore = ingest_directory(&args.data, &manifest, split)?;
                let counts: String = args
                    .ways
                    .iter()
                    .map(|&n| match binomial(store.num_classes(), n) {
                        Some(t) => format!("C({}, {n}) = {t}", store.num_classes()),
                        None => format!("C({}, {n}) exceeds 2^64", store.num_classes()),
                    })
                    .collect::<Vec<_>>()
                    .join(", ");
                println!(
                    "{split}: {} classes, {} examples; {counts}",
                    store.num_classes(),
                    store.total_examples()
                );
            }
            Ok(())
        }
        Command::GenSynthetic(args) => {
            let spec = SyntheticSpec {
                num_classes: args.classes,
                examples_per_class: args.per_class,
                image_size: args.size,
                seed: args.seed,
            };
            let manifest = generate_synthetic_corpus(&args.out, &spec)?;
            println!(
                "wrote {} classes × {} images to {} (train {}, val {}, test {})",
                manifest.classes.len(),
                args.per_class,
                args.out.display(),
                manifest.splits.train.len(),
                manifest.splits.val.len(),
                manifest.splits.test.len()
            );
            Ok(())
        }
    }
}

fn eval(args: Eval) -> Result<()> {
    let params = load_params(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let activation = args.activation.unwrap_or(match args.task {
        TaskFamily::Sinusoid => Activation::Tanh,
        TaskFamily::Fewshot => Activation::Relu,
    });
    let net = MetaSequential::mlp_from_parameters(&params, activation)?;
    let config = MamlConfig {
        inner_lr: args.inner_lr,
        inner_steps: args.inner_steps,
        ..MamlConfig::default()
    };
    let eval = EvalConfig {
        num_tasks: args.eval_tasks,
        seed: args.seed,
    };
    let summary = match args.task {
        TaskFamily::Sinusoid => {
            let query = args.query_shots.unwrap_or(args.shots);
            evaluate(&sinusoid_split(args.shots, query, None, MetaSplit::Test)?, &net, &config, &eval)?
        }
        TaskFamily::Fewshot => {
            let Some(data) = args.data else {
                bail!("--task fewshot needs --data");
            };
            let images = ImageData {
                data,
                manifest: args.manifest,
                ways: args.ways,
                shots: args.shots,
                test_shots: args.test_shots,
                size: args.size,
                channels: args.channels,
            };
            let test = images.split(&images.manifest()?, MetaSplit::Test)?;
            evaluate(&test, &net, &config, &eval)?
        }
    };
    print_summary("checkpoint", &summary);
    Ok(())
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
