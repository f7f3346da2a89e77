//! `vladkit` command line: dataset utilities, the individual pipeline stages,
//! the cached end-to-end pipeline and the benchmark grid.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vladkit::assignment::{AssignConfig, AssignMode};
use vladkit::classifier::{predict, split_per_class, train_ovr, EvalReport, TrainHyper};
use vladkit::codebook::{kmeans_train, subsample_rows, KmeansParams};
use vladkit::io::*;
use vladkit::pipeline::{manifest_descriptors, run_bench, run_pipeline, PipelineConfig};
use vladkit::preprocess::{default_epsilon, fit_whitening};
use vladkit::synth::{synth_dataset, SynthMode, SynthSpec};
use vladkit::{
    Dictionary, Encoder, EncoderConfig, Error, FeatureMap, LinearModel, NormScheme, PyramidSpec,
    WhiteningTransform,
};

#[derive(Parser)]
#[command(
    name = "vladkit",
    version,
    about = "VLAD-family encoding of dense feature maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Synth(SynthArgs),
    /// Split a manifest into n-per-class train and test manifests.
    Split(SplitArgs),
    /// Fit or apply PCA whitening.
    #[command(subcommand)]
    Preprocess(PreprocessCmd),
    /// Learn a k-means dictionary.
    #[command(subcommand)]
    Codebook(CodebookCmd),
    /// Encode one feature map.
    Encode(EncodeArgs),
    /// Train a one-vs-rest linear classifier on encoded manifest entries.
    Train(TrainArgs),
    /// Evaluate a trained model; prints accuracy and a confusion CSV.
    Evaluate(EvaluateArgs),
    /// Accuracy and timing for every (mode, pyramid) pair.
    Bench(BenchArgs),
    /// Run the cached end-to-end pipeline.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "descriptor")]
    mode: SynthMode,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 6)]
    height: usize,
    #[arg(long, default_value_t = 6)]
    width: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_test: PathBuf,
}

#[derive(Subcommand)]
enum PreprocessCmd {
    /// Fit a whitening transform on every descriptor of a manifest.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Retained dimension; defaults to the input dimension.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Fit on at most this many randomly chosen descriptors.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Whiten and L2-normalize every cell of a feature map.
    Apply {
        #[arg(long)]
        transform: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CodebookCmd {
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        transform: Option<PathBuf>,
        #[arg(long, default_value_t = vladkit::codebook::DEFAULT_NUM_WORDS)]
        words: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = vladkit::codebook::DEFAULT_MAX_ITERS)]
        max_iters: usize,
        #[arg(long, default_value_t = vladkit::codebook::DEFAULT_TOL)]
        tol: f64,
        /// Train on at most this many descriptors (default 256 per word).
        #[arg(long)]
        subsample: Option<usize>,
    },
}

#[derive(Args, Clone)]
struct EncoderArgs {
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    transform: Option<PathBuf>,
    #[arg(long, default_value = "hard")]
    mode: AssignMode,
    #[arg(long, default_value_t = vladkit::assignment::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = vladkit::assignment::DEFAULT_KNN)]
    knn: usize,
    #[arg(long, default_value_t = vladkit::assignment::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = vladkit::assignment::DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long)]
    llc_center_dist: bool,
    /// intra, global or ssr.
    #[arg(long, default_value = "intra")]
    norm: NormScheme,
    /// a, b, c or a level list such as 1x1,2x2,3x1.
    #[arg(long)]
    pyramid: Option<PyramidSpec>,
    #[arg(long, requires = "pyramid")]
    level_weights: bool,
}

impl EncoderArgs {
    fn build(&self) -> vladkit::Result<Encoder> {
        let dictionary: Dictionary = read_dictionary(&self.dict)?;
        let transform: Option<WhiteningTransform> =
            self.transform.as_ref().map(read_whitening).transpose()?;
        let config = EncoderConfig {
            assign: AssignConfig {
                mode: self.mode,
                beta: self.beta,
                k_nn: self.knn,
                lambda: self.lambda,
                sigma: self.sigma,
                center_dist: self.llc_center_dist,
            },
            norm_scheme: self.norm,
        };
        let pyramid = self.pyramid.clone().map(|mut p| {
            p.level_weights = self.level_weights;
            p
        });
        Encoder::new(dictionary, transform, config, pyramid)
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    encoder: EncoderArgs,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[arg(long, default_value_t = vladkit::classifier::DEFAULT_REG)]
    reg: f64,
    #[arg(long, default_value_t = vladkit::classifier::DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> vladkit::Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        for pair in &self.set {
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("--set expects KEY=VALUE, got {pair:?}"))
            })?;
            config.set(k.trim(), v.trim())?;
        }
        if let Some(c) = &self.cache {
            config.cache_dir = c.clone();
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(t) = self.threads {
            config.threads = t;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated assignment modes.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "hard,sa,lsa,llc,llc-approx"
    )]
    modes: Vec<AssignMode>,
    /// Semicolon-separated pyramids; `none` encodes without SPM.
    #[arg(long, value_delimiter = ';', default_value = "none;a;b;c")]
    pyramids: Vec<String>,
    #[command(flatten)]
    config: ConfigArgs,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
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
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(command: Command) -> vladkit::Result<()> {
    match command {
        Command::Synth(a) => {
            let spec = SynthSpec {
                num_classes: a.classes,
                images_per_class: a.per_class,
                grid_h: a.height,
                grid_w: a.width,
                dim: a.dim,
                mode: a.mode,
                noise_sigma: a.noise,
                seed: a.seed,
            };
            let manifest = synth_dataset(&spec, &a.out)?;
            println!("wrote {} maps to {}", manifest.len(), a.out.display());
        }
        Command::Split(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let (train, test) = split_per_class(&manifest, a.per_class, a.seed)?;
            write_manifest(&train, &a.out_train)?;
            write_manifest(&test, &a.out_test)?;
            println!("train={} test={}", train.len(), test.len());
        }
        Command::Preprocess(PreprocessCmd::Fit {
            manifest,
            out,
            dim,
            epsilon,
            subsample,
            seed,
        }) => {
            let data = manifest_descriptors::<f64>(&load_manifest(&manifest)?)?;
            let data = match subsample {
                Some(cap) => subsample_rows(&data, cap, seed),
                None => data,
            };
            let eps = match epsilon {
                Some(e) => e,
                None => default_epsilon(&data)?,
            };
            let t = fit_whitening(&data, dim.unwrap_or(data.cols()), eps)?;
            write_whitening(&t, &out)?;
        }
        Command::Preprocess(PreprocessCmd::Apply {
            transform,
            input,
            out,
        }) => {
            let t: WhiteningTransform = read_whitening(&transform)?;
            let map = read_feature_map(&input)?;
            let rows = t.apply_rows(&map.to_matrix::<f64>())?;
            let data = rows.as_slice().iter().map(|&v| v as f32).collect();
            write_feature_map(
                &FeatureMap::new(map.height(), map.width(), t.output_dim(), data)?,
                &out,
            )?;
        }
        Command::Codebook(CodebookCmd::Train {
            manifest,
            transform,
            words,
            out,
            seed,
            max_iters,
            tol,
            subsample,
        }) => {
            let data = manifest_descriptors::<f64>(&load_manifest(&manifest)?)?;
            let cap = subsample.unwrap_or(vladkit::codebook::DEFAULT_SUBSAMPLE_PER_WORD * words);
            let mut sample = subsample_rows(&data, cap, seed);
            if let Some(p) = transform {
                let t: WhiteningTransform = read_whitening(p)?;
                sample = t.apply_rows(&sample)?;
            }
            let params = KmeansParams {
                num_words: words,
                max_iters,
                tol,
                seed,
            };
            let (dict, report) = kmeans_train(&sample, &params)?;
            write_dictionary(&dict, &out)?;
            println!(
                "iterations={} objective={} converged={}",
                report.iterations,
                report.final_objective(),
                report.converged
            );
        }
        Command::Encode(a) => {
            let encoder = a.encoder.build()?;
            let values = encoder.encode(&read_feature_map(&a.input)?)?;
            write_encoding(&values, &a.out)?;
        }
        Command::Train(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let encoder = a.encoder.build()?;
            let x = encoder.encode_manifest(&manifest, a.threads)?;
            let hyper = TrainHyper {
                reg: a.reg,
                epochs: a.epochs,
                seed: a.seed,
                ..TrainHyper::default()
            };
            let model = train_ovr(&x, &manifest.labels(), &hyper)?;
            write_model(&model, &a.out)?;
        }
        Command::Evaluate(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let model: LinearModel = read_model(&a.model)?;
            let encoder = a.encoder.build()?;
            if encoder.encoding_len() != model.dim() {
                return Err(Error::DimMismatch {
                    expected: model.dim(),
                    got: encoder.encoding_len(),
                });
            }
            let x = encoder.encode_manifest(&manifest, a.threads)?;
            let predicted = x
                .iter_rows()
                .map(|r| predict(&model, r).map(|(l, _)| l))
                .collect::<vladkit::Result<Vec<_>>>()?;
            let classes = model.num_classes().max(manifest.num_classes());
            print_report(&EvalReport::from_predictions(
                classes,
                &manifest.labels(),
                &predicted,
            ));
        }
        Command::Bench(a) => {
            let config = a.config.load()?;
            let pyramids = a
                .pyramids
                .iter()
                .map(|p| parse_pyramid(p, &config))
                .collect::<vladkit::Result<Vec<_>>>()?;
            let report = run_bench::<f64>(
                &a.modes,
                &pyramids,
                &load_manifest(&a.train)?,
                &load_manifest(&a.test)?,
                &config,
            )?;
            let csv = report.to_csv();
            match a.out {
                Some(p) => write_text(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Pipeline(a) => {
            let config = a.config.load()?;
            let run =
                run_pipeline::<f64>(&config, &load_manifest(&a.train)?, &load_manifest(&a.test)?)?;
            print_report(&run.report);
        }
    }
    Ok(())
}

fn parse_pyramid(text: &str, config: &PipelineConfig) -> vladkit::Result<Option<PyramidSpec>> {
    let text = text.trim();
    if text == "none" {
        return Ok(None);
    }
    let mut p: PyramidSpec = text.parse()?;
    p.level_weights = config.pyramid.as_ref().is_some_and(|q| q.level_weights);
    Ok(Some(p))
}

fn print_report(report: &EvalReport) {
    println!("accuracy={}", report.accuracy);
    print!("{}", report.confusion_csv());
}

fn write_text(path: &Path, text: &str) -> vladkit::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}
