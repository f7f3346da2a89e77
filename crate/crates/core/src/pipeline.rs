//! End-to-end orchestration: whitening fit, codebook training, encoding,
//! classifier training and evaluation, with every intermediate artifact
//! cached on disk under a content-derived key.
//!
//! Artifacts are always round-tripped through their `f32` containers before
//! use, so a run that reads them back from the cache computes exactly what a
//! fresh run computes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::assignment::{AssignConfig, AssignMode};
use crate::classifier::{predict, train_ovr, EvalReport, LinearModel, TrainHyper};
use crate::codebook::{
    kmeans_train, subsample_rows, Dictionary, KmeansParams, DEFAULT_SUBSAMPLE_PER_WORD,
};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::io::{
    dictionary_from_bytes, dictionary_to_bytes, encoding_from_bytes, encoding_to_bytes,
    feature_map_from_bytes, model_from_bytes, model_to_bytes, whitening_from_bytes,
    whitening_to_bytes, DatasetManifest,
};
use crate::matrix::RowMatrix;
use crate::preprocess::{default_epsilon, fit_whitening, WhiteningTransform};
use crate::scalar::Real;
use crate::spm::PyramidSpec;
use crate::vlad::EncoderConfig;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Whitening file to reuse, or to create when missing.
    pub transform: Option<PathBuf>,
    pub whiten: bool,
    pub pca_dim: Option<usize>,
    pub epsilon: Option<f64>,
    pub pca_subsample: Option<usize>,
    /// Dictionary file to reuse, or to create when missing.
    pub dictionary: Option<PathBuf>,
    pub words: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub kmeans_subsample: Option<usize>,
    pub encoder: EncoderConfig,
    pub pyramid: Option<PyramidSpec>,
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
    pub threads: usize,
    pub cache_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            transform: None,
            whiten: true,
            pca_dim: None,
            epsilon: None,
            pca_subsample: None,
            dictionary: None,
            words: crate::codebook::DEFAULT_NUM_WORDS,
            kmeans_max_iters: crate::codebook::DEFAULT_MAX_ITERS,
            kmeans_tol: crate::codebook::DEFAULT_TOL,
            kmeans_subsample: None,
            encoder: EncoderConfig::default(),
            pyramid: None,
            reg: crate::classifier::DEFAULT_REG,
            epochs: crate::classifier::DEFAULT_EPOCHS,
            seed: 0,
            threads: 1,
            cache_dir: PathBuf::from("vladkit-cache"),
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "transform",
    "whiten",
    "pca_dim",
    "epsilon",
    "pca_subsample",
    "dictionary",
    "words",
    "kmeans_max_iters",
    "kmeans_tol",
    "kmeans_subsample",
    "mode",
    "beta",
    "knn",
    "lambda",
    "sigma",
    "llc_center_dist",
    "norm",
    "pyramid",
    "level_weights",
    "reg",
    "epochs",
    "seed",
    "threads",
    "cache_dir",
];

fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for key {key}")))
}

fn parse_opt<V: std::str::FromStr>(key: &str, value: &str) -> Result<Option<V>> {
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn show_opt<V: std::fmt::Display>(v: &Option<V>) -> String {
    v.as_ref()
        .map_or_else(|| "none".to_owned(), |v| v.to_string())
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map_or_else(|| "none".to_owned(), |p| p.display().to_string())
}

impl PipelineConfig {
    /// Sets one key from its text form. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "transform" => self.transform = parse_opt::<String>(key, value)?.map(PathBuf::from),
            "whiten" => self.whiten = parse_value(key, value)?,
            "pca_dim" => self.pca_dim = parse_opt(key, value)?,
            "epsilon" => self.epsilon = parse_opt(key, value)?,
            "pca_subsample" => self.pca_subsample = parse_opt(key, value)?,
            "dictionary" => self.dictionary = parse_opt::<String>(key, value)?.map(PathBuf::from),
            "words" => self.words = parse_value(key, value)?,
            "kmeans_max_iters" => self.kmeans_max_iters = parse_value(key, value)?,
            "kmeans_tol" => self.kmeans_tol = parse_value(key, value)?,
            "kmeans_subsample" => self.kmeans_subsample = parse_opt(key, value)?,
            "mode" => self.encoder.assign.mode = value.parse()?,
            "beta" => self.encoder.assign.beta = parse_value(key, value)?,
            "knn" => self.encoder.assign.k_nn = parse_value(key, value)?,
            "lambda" => self.encoder.assign.lambda = parse_value(key, value)?,
            "sigma" => self.encoder.assign.sigma = parse_value(key, value)?,
            "llc_center_dist" => self.encoder.assign.center_dist = parse_value(key, value)?,
            "norm" => self.encoder.norm_scheme = value.parse()?,
            "pyramid" => {
                let weights = self.pyramid.as_ref().is_some_and(|p| p.level_weights);
                self.pyramid = if value.is_empty() || value == "none" {
                    None
                } else {
                    let mut p: PyramidSpec = value.parse()?;
                    p.level_weights = weights;
                    Some(p)
                };
            }
            "level_weights" => {
                let on: bool = parse_value(key, value)?;
                if let Some(p) = &mut self.pyramid {
                    p.level_weights = on;
                } else if on {
                    return Err(Error::InvalidArgument(
                        "level_weights requires a pyramid (set pyramid first)".into(),
                    ));
                }
            }
            "reg" => self.reg = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "threads" => self.threads = parse_value(key, value)?,
            "cache_dir" => self.cache_dir = PathBuf::from(value),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let a = &self.encoder.assign;
        Ok(match key {
            "transform" => show_path(&self.transform),
            "whiten" => self.whiten.to_string(),
            "pca_dim" => show_opt(&self.pca_dim),
            "epsilon" => show_opt(&self.epsilon),
            "pca_subsample" => show_opt(&self.pca_subsample),
            "dictionary" => show_path(&self.dictionary),
            "words" => self.words.to_string(),
            "kmeans_max_iters" => self.kmeans_max_iters.to_string(),
            "kmeans_tol" => self.kmeans_tol.to_string(),
            "kmeans_subsample" => show_opt(&self.kmeans_subsample),
            "mode" => a.mode.to_string(),
            "beta" => a.beta.to_string(),
            "knn" => a.k_nn.to_string(),
            "lambda" => a.lambda.to_string(),
            "sigma" => a.sigma.to_string(),
            "llc_center_dist" => a.center_dist.to_string(),
            "norm" => self.encoder.norm_scheme.to_string(),
            "pyramid" => show_opt(&self.pyramid),
            "level_weights" => self
                .pyramid
                .as_ref()
                .is_some_and(|p| p.level_weights)
                .to_string(),
            "reg" => self.reg.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "threads" => self.threads.to_string(),
            "cache_dir" => self.cache_dir.display().to_string(),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key {other:?}"
                )))
            }
        })
    }

    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        // pyramid before level_weights, whatever the file order
        let mut deferred = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("config line {}: expected key = value", i + 1))
            })?;
            let key = key.trim();
            if key == "level_weights" {
                deferred = Some(value.to_owned());
                continue;
            }
            self.set(key, value)?;
        }
        if let Some(v) = deferred {
            self.set("level_weights", &v)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Every key in canonical order.
    pub fn to_text(&self) -> String {
        self.canonical(CONFIG_KEYS)
    }

    fn canonical(&self, keys: &[&str]) -> String {
        let mut out = String::new();
        for key in keys {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn hyper(&self) -> TrainHyper {
        TrainHyper {
            reg: self.reg,
            epochs: self.epochs,
            seed: self.seed,
            ..TrainHyper::default()
        }
    }
}

/// Paths of the artifacts a pipeline run used or produced.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub report: EvalReport,
    pub transform_path: Option<PathBuf>,
    pub dictionary_path: PathBuf,
    pub encoding_dir: PathBuf,
    pub model_path: PathBuf,
}

/// Content key of a manifest: labels plus the bytes of every file.
fn manifest_key(manifest: &DatasetManifest) -> Result<u64> {
    let mut text = String::new();
    for e in manifest.entries() {
        let _ = writeln!(text, "{:016x}\t{}", fnv1a(&fs::read(&e.path)?), e.label);
    }
    Ok(fnv1a(text.as_bytes()))
}

fn stage_key(parent: u64, stage: &str, config_text: &str) -> u64 {
    fnv1a(format!("{parent:016x}\n{stage}\n{config_text}").as_bytes())
}

/// Every descriptor of every manifest entry, stacked in manifest order.
pub fn manifest_descriptors<T: Real>(manifest: &DatasetManifest) -> Result<RowMatrix<T>> {
    let mut data = Vec::new();
    let mut rows = 0;
    let mut dim = None;
    for e in manifest.entries() {
        let map = feature_map_from_bytes(&fs::read(&e.path)?)?;
        if *dim.get_or_insert(map.dim()) != map.dim() {
            return Err(Error::DimMismatch {
                expected: dim.unwrap_or_default(),
                got: map.dim(),
            });
        }
        rows += map.num_descriptors();
        data.extend(map.data().iter().map(|&v| T::widen(v)));
    }
    RowMatrix::from_vec(rows, dim.unwrap_or(0), data)
}

/// Writes `bytes`, creating parent directories.
fn store(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

struct Stages<'a, T> {
    config: &'a PipelineConfig,
    train: &'a DatasetManifest,
    train_key: u64,
    input_dim: usize,
    descriptors: Option<RowMatrix<T>>,
}

impl<'a, T: Real> Stages<'a, T> {
    fn new(config: &'a PipelineConfig, train: &'a DatasetManifest) -> Result<Self> {
        let first = train
            .entries()
            .first()
            .ok_or_else(|| Error::Parse("empty manifest".into()))?;
        let input_dim = feature_map_from_bytes(&fs::read(&first.path)?)?.dim();
        Ok(Self {
            config,
            train,
            train_key: manifest_key(train)?,
            input_dim,
            descriptors: None,
        })
    }

    fn descriptors(&mut self) -> Result<&RowMatrix<T>> {
        if self.descriptors.is_none() {
            self.descriptors = Some(manifest_descriptors(self.train)?);
        }
        Ok(self.descriptors.as_ref().expect("loaded"))
    }

    fn transform_key(&self) -> u64 {
        let text =
            self.config
                .canonical(&["whiten", "pca_dim", "epsilon", "pca_subsample", "seed"]);
        stage_key(self.train_key, "transform", &text)
    }

    fn transform(&mut self) -> Result<(Option<WhiteningTransform<T>>, Option<PathBuf>)> {
        if !self.config.whiten {
            return Ok((None, None));
        }
        let path = match &self.config.transform {
            Some(p) => p.clone(),
            None => self
                .config
                .cache_dir
                .join(format!("transform-{:016x}.vlw", self.transform_key())),
        };
        let out_dim = self.config.pca_dim.unwrap_or(self.input_dim);
        if path.is_file() {
            let t: WhiteningTransform<T> = whitening_from_bytes(&fs::read(&path)?)?;
            if t.input_dim() != self.input_dim
                || (self.config.pca_dim.is_some() && t.output_dim() != out_dim)
            {
                return Err(Error::CacheMismatch(format!(
                    "{}: transform is {}->{}, data has dimension {} and pca_dim {}",
                    path.display(),
                    t.input_dim(),
                    t.output_dim(),
                    self.input_dim,
                    show_opt(&self.config.pca_dim),
                )));
            }
            return Ok((Some(t), Some(path)));
        }
        let seed = self.config.seed;
        let cap = self.config.pca_subsample;
        let data = self.descriptors()?;
        let data = match cap {
            Some(cap) => subsample_rows(data, cap, seed),
            None => data.clone(),
        };
        let epsilon = match self.config.epsilon {
            Some(e) => T::lit(e),
            None => default_epsilon(&data)?,
        };
        let fitted = fit_whitening(&data, out_dim, epsilon)?;
        let bytes = whitening_to_bytes(&fitted)?;
        store(&path, &bytes)?;
        Ok((Some(whitening_from_bytes(&bytes)?), Some(path)))
    }

    fn dictionary_key(&self) -> u64 {
        let text = self.config.canonical(&[
            "words",
            "kmeans_max_iters",
            "kmeans_tol",
            "kmeans_subsample",
            "seed",
        ]);
        stage_key(self.transform_key(), "dictionary", &text)
    }

    fn dictionary(
        &mut self,
        transform: Option<&WhiteningTransform<T>>,
    ) -> Result<(Dictionary<T>, PathBuf)> {
        let dim = transform.map_or(self.input_dim, |t| t.output_dim());
        let path = match &self.config.dictionary {
            Some(p) => p.clone(),
            None => self
                .config
                .cache_dir
                .join(format!("dict-{:016x}.vld", self.dictionary_key())),
        };
        if path.is_file() {
            let dict: Dictionary<T> = dictionary_from_bytes(&fs::read(&path)?)?;
            if dict.dim() != dim || dict.num_words() != self.config.words {
                return Err(Error::CacheMismatch(format!(
                    "{}: dictionary has {} words of dimension {}, configuration needs {} words of dimension {dim}",
                    path.display(),
                    dict.num_words(),
                    dict.dim(),
                    self.config.words,
                )));
            }
            return Ok((dict, path));
        }
        let params = KmeansParams {
            num_words: self.config.words,
            max_iters: self.config.kmeans_max_iters,
            tol: self.config.kmeans_tol,
            seed: self.config.seed,
        };
        let cap = self
            .config
            .kmeans_subsample
            .unwrap_or(DEFAULT_SUBSAMPLE_PER_WORD * self.config.words);
        let seed = self.config.seed;
        let raw = self.descriptors()?;
        let sample = subsample_rows(raw, cap, seed);
        let sample = match transform {
            None => sample,
            Some(t) => t.apply_rows(&sample)?,
        };
        let (dict, _) = kmeans_train(&sample, &params)?;
        let bytes = dictionary_to_bytes(&dict)?;
        store(&path, &bytes)?;
        Ok((dictionary_from_bytes(&bytes)?, path))
    }

    fn encoder(&mut self) -> Result<(Encoder<T>, Option<PathBuf>, PathBuf)> {
        let (transform, tpath) = self.transform()?;
        let (dict, dpath) = self.dictionary(transform.as_ref())?;
        let encoder = Encoder::new(
            dict,
            transform,
            self.config.encoder,
            self.config.pyramid.clone(),
        )?;
        Ok((encoder, tpath, dpath))
    }

    fn encoding_key(&self, dict_path: &Path) -> Result<u64> {
        let text = self.config.canonical(&[
            "mode",
            "beta",
            "knn",
            "lambda",
            "sigma",
            "llc_center_dist",
            "norm",
            "pyramid",
            "level_weights",
        ]);
        // key on the dictionary bytes so an explicitly supplied file counts
        let dict_key = fnv1a(&fs::read(dict_path)?);
        Ok(stage_key(
            stage_key(self.transform_key(), "dict", &format!("{dict_key:016x}")),
            "encoding",
            &text,
        ))
    }
}

/// Encodes every entry, reusing per-image cache files named by the hash of
/// the feature-map bytes.
fn encode_cached<T: Real>(
    encoder: &Encoder<T>,
    manifest: &DatasetManifest,
    dir: &Path,
    threads: usize,
) -> Result<RowMatrix<T>> {
    fs::create_dir_all(dir)?;
    let len = encoder.encoding_len();
    let mut rows: Vec<Option<Vec<T>>> = Vec::with_capacity(manifest.len());
    let mut missing = Vec::new();
    let mut names = Vec::with_capacity(manifest.len());
    for (i, e) in manifest.entries().iter().enumerate() {
        let name = dir.join(format!("{:016x}.vle", fnv1a(&fs::read(&e.path)?)));
        if name.is_file() {
            let v: Vec<T> = encoding_from_bytes(&fs::read(&name)?)?;
            if v.len() != len {
                return Err(Error::CacheMismatch(format!(
                    "{}: cached encoding has length {}, expected {len}",
                    name.display(),
                    v.len()
                )));
            }
            rows.push(Some(v));
        } else {
            rows.push(None);
            missing.push(i);
        }
        names.push(name);
    }
    if !missing.is_empty() {
        let subset = DatasetManifest::new(
            missing
                .iter()
                .map(|&i| manifest.entries()[i].clone())
                .collect(),
        )?;
        let fresh = encoder.encode_manifest(&subset, threads)?;
        for (k, &i) in missing.iter().enumerate() {
            let bytes = encoding_to_bytes(fresh.row(k))?;
            store(&names[i], &bytes)?;
            rows[i] = Some(encoding_from_bytes(&bytes)?);
        }
    }
    let rows: Vec<Vec<T>> = rows.into_iter().map(|r| r.expect("filled")).collect();
    RowMatrix::from_vec(manifest.len(), len, rows.concat())
}

/// Runs whitening → codebook → encoding → training → evaluation.
pub fn run_pipeline<T: Real>(
    config: &PipelineConfig,
    train: &DatasetManifest,
    test: &DatasetManifest,
) -> Result<PipelineRun> {
    let mut stages = Stages::<T>::new(config, train)?;
    let (encoder, transform_path, dictionary_path) = stages.encoder()?;
    let enc_key = stages.encoding_key(&dictionary_path)?;
    let encoding_dir = config.cache_dir.join(format!("enc-{enc_key:016x}"));
    let train_x = encode_cached(&encoder, train, &encoding_dir, config.threads)?;
    let test_x = encode_cached(&encoder, test, &encoding_dir, config.threads)?;

    let model_key = stage_key(
        stage_key(enc_key, "train-set", &format!("{:016x}", stages.train_key)),
        "model",
        &config.canonical(&["reg", "epochs", "seed"]),
    );
    let model_path = config.cache_dir.join(format!("model-{model_key:016x}.vlm"));
    let model: LinearModel<T> = if model_path.is_file() {
        let m: LinearModel<T> = model_from_bytes(&fs::read(&model_path)?)?;
        if m.dim() != encoder.encoding_len() || m.num_classes() != train.num_classes() {
            return Err(Error::CacheMismatch(format!(
                "{}: model is {}x{}, expected {}x{}",
                model_path.display(),
                m.num_classes(),
                m.dim(),
                train.num_classes(),
                encoder.encoding_len()
            )));
        }
        m
    } else {
        let m = train_ovr(&train_x, &train.labels(), &config.hyper())?;
        let bytes = model_to_bytes(&m)?;
        store(&model_path, &bytes)?;
        model_from_bytes(&bytes)?
    };

    let report = evaluate_rows(&model, &test_x, &test.labels())?;
    Ok(PipelineRun {
        report,
        transform_path,
        dictionary_path,
        encoding_dir,
        model_path,
    })
}

fn evaluate_rows<T: Real>(
    model: &LinearModel<T>,
    x: &RowMatrix<T>,
    labels: &[usize],
) -> Result<EvalReport> {
    let classes = model
        .num_classes()
        .max(labels.iter().map(|&l| l + 1).max().unwrap_or(0));
    let predicted = x
        .iter_rows()
        .map(|r| predict(model, r).map(|(l, _)| l))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_predictions(classes, labels, &predicted))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub mode: AssignMode,
    /// `None` for a plain (single-region) encoding.
    pub pyramid: Option<PyramidSpec>,
    pub accuracy: f64,
    /// Mean over test images of the median of five timed encodings.
    pub encode_us: f64,
    pub encoding_len: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,pyramid,accuracy,encode_us,length\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.3},{}",
                r.mode,
                r.pyramid
                    .as_ref()
                    .map_or_else(|| "none".to_owned(), |p| p.to_string().replace(',', " ")),
                r.accuracy,
                r.encode_us,
                r.encoding_len
            );
        }
        out
    }
}

const TIMING_REPS: usize = 5;

/// Evaluates every (mode, pyramid) pair with one shared whitening transform
/// and dictionary. Hyperparameters other than the mode come from `base`.
pub fn run_bench<T: Real>(
    modes: &[AssignMode],
    pyramids: &[Option<PyramidSpec>],
    train: &DatasetManifest,
    test: &DatasetManifest,
    base: &PipelineConfig,
) -> Result<BenchReport> {
    if modes.is_empty() || pyramids.is_empty() {
        return Err(Error::InvalidArgument(
            "bench needs at least one mode and one pyramid".into(),
        ));
    }
    let mut stages = Stages::<T>::new(base, train)?;
    let (transform, _) = stages.transform()?;
    let (dict, _) = stages.dictionary(transform.as_ref())?;
    let test_maps = test
        .entries()
        .iter()
        .map(|e| feature_map_from_bytes(&fs::read(&e.path)?))
        .collect::<Result<Vec<_>>>()?;

    let mut report = BenchReport::default();
    for &mode in modes {
        for pyramid in pyramids {
            let config = EncoderConfig {
                assign: AssignConfig {
                    mode,
                    ..base.encoder.assign
                },
                norm_scheme: base.encoder.norm_scheme,
            };
            let encoder = Encoder::new(dict.clone(), transform.clone(), config, pyramid.clone())?;
            let train_x = encoder.encode_manifest(train, base.threads)?;
            let model = train_ovr(&train_x, &train.labels(), &base.hyper())?;

            let mut rows = Vec::with_capacity(test_maps.len() * encoder.encoding_len());
            let mut total_us = 0.0;
            for map in &test_maps {
                let mut times = [0.0f64; TIMING_REPS];
                let mut encoded = None;
                for t in &mut times {
                    let start = Instant::now();
                    let v = encoder.encode(map)?;
                    *t = start.elapsed().as_secs_f64() * 1e6;
                    encoded = Some(v);
                }
                times.sort_by(f64::total_cmp);
                total_us += times[TIMING_REPS / 2];
                rows.extend(encoded.expect("at least one repetition"));
            }
            let test_x = RowMatrix::from_vec(test_maps.len(), encoder.encoding_len(), rows)?;
            let eval = evaluate_rows(&model, &test_x, &test.labels())?;
            report.rows.push(BenchRow {
                mode,
                pyramid: pyramid.clone(),
                accuracy: eval.accuracy,
                encode_us: total_us / test_maps.len().max(1) as f64,
                encoding_len: encoder.encoding_len(),
            });
        }
    }
    Ok(report)
}
