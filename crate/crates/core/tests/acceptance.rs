//! Acceptance suite. Each test prints one `A<n> PASS|FAIL ...` line.
//! Run with `cargo test -p vladkit --test acceptance -- --nocapture` to see
//! the lines.

mod common;

use std::time::Instant;

use common::*;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use vladkit::assignment::{assign, AssignConfig, AssignMode};
use vladkit::classifier::{split_per_class, train_ovr, EvalReport};
use vladkit::codebook::{kmeans_train, Dictionary, KmeansParams};
use vladkit::io::*;
use vladkit::matrix::RowMatrix;
use vladkit::pipeline::{run_bench, run_pipeline, PipelineConfig};
use vladkit::preprocess::{default_epsilon, fit_whitening, WhiteningTransform};
use vladkit::spm::{encode_spm, PyramidSpec};
use vladkit::synth::{synth_dataset, SynthMode, SynthSpec};
use vladkit::vlad::{encode, vlad_aggregate, EncoderConfig, NormScheme};
use vladkit::FeatureMap;

fn dict_of(words: &[Vec<f64>]) -> Dictionary<f64> {
    Dictionary::new(RowMatrix::from_rows(words).unwrap()).unwrap()
}

fn lib_config(mode: OracleMode) -> AssignConfig {
    let mut c = AssignConfig::default();
    match mode {
        OracleMode::Hard => c.mode = AssignMode::Hard,
        OracleMode::Soft { beta } => {
            c.mode = AssignMode::Soft;
            c.beta = beta;
        }
        OracleMode::Lsa { beta, k } => {
            c.mode = AssignMode::LocalizedSoft;
            c.beta = beta;
            c.k_nn = k;
        }
        OracleMode::LlcExact { lambda, sigma } => {
            c.mode = AssignMode::LlcExact;
            c.lambda = lambda;
            c.sigma = sigma;
        }
        OracleMode::LlcApprox { k } => {
            c.mode = AssignMode::LlcApprox;
            c.k_nn = k;
        }
    }
    c
}

fn modes_for(rng: &mut impl Rng, m: usize) -> [OracleMode; 5] {
    let k = rng.random_range(1..=m);
    [
        OracleMode::Hard,
        OracleMode::Soft {
            beta: rng.random_range(0.1..3.0),
        },
        OracleMode::Lsa {
            beta: rng.random_range(0.1..3.0),
            k,
        },
        OracleMode::LlcExact {
            lambda: rng.random_range(1e-4..1e-1),
            sigma: rng.random_range(0.5..2.0),
        },
        OracleMode::LlcApprox { k },
    ]
}

fn weights_of(words: &[Vec<f64>], x: &[f64], mode: OracleMode) -> Vec<f64> {
    assign(&dict_of(words), x, &lib_config(mode))
        .unwrap()
        .weights()
        .to_vec()
}

#[test]
fn a1_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = rng(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=50);
        let m = rng.random_range(1..=4);
        let d = rng.random_range(1..=8);
        let words = random_rows(&mut rng, m, d, 1.0);
        let xs = random_rows(&mut rng, n, d, 1.5);
        let dict = dict_of(&words);
        let data = RowMatrix::from_rows(&xs).unwrap();
        for mode in modes_for(&mut rng, m) {
            let got = vlad_aggregate(&dict, &data, &lib_config(mode)).unwrap();
            let want = naive_vlad(&words, &xs, mode);
            for (g, w) in got.values().iter().zip(&want) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    criterion(
        "A1",
        worst <= 1e-9 && secs < 10.0,
        &format!("oracle equivalence: 200 instances x 5 modes, max |diff| = {worst:.3e} (tol 1e-9), {secs:.2}s"),
    );
}

#[test]
fn a2_assignment_laws() {
    let start = Instant::now();
    let mut rng = rng(202);
    let mut sum_err = 0.0f64;
    let mut lsa_err = 0.0f64;
    let mut sharp_err = 0.0f64;
    let mut llc_excess = f64::NEG_INFINITY;
    let mut instances = 0;
    while instances < 100 {
        let m = rng.random_range(2..=5);
        let d = rng.random_range(1..=4);
        let words = random_rows(&mut rng, m, d, 1.0);
        let x = random_rows(&mut rng, 1, d, 1.5).remove(0);

        // Law (iii) is stated for distinct distances; redraw near-ties so the
        // β = 1e6 tail is below the tolerance.
        let mut sq: Vec<f64> = words.iter().map(|w| sq_dist(&x, w)).collect();
        sq.sort_by(f64::total_cmp);
        if sq[1] - sq[0] < 1e-3 {
            continue;
        }
        instances += 1;

        for mode in modes_for(&mut rng, m) {
            let s: f64 = weights_of(&words, &x, mode).iter().sum();
            sum_err = sum_err.max((s - 1.0).abs());
        }

        let beta = rng.random_range(0.1..3.0);
        let sa = weights_of(&words, &x, OracleMode::Soft { beta });
        let lsa = weights_of(&words, &x, OracleMode::Lsa { beta, k: m });
        for (a, b) in sa.iter().zip(&lsa) {
            lsa_err = lsa_err.max((a - b).abs());
        }

        let hard = weights_of(&words, &x, OracleMode::Hard);
        let sharp = weights_of(&words, &x, OracleMode::Soft { beta: 1e6 });
        for (a, b) in hard.iter().zip(&sharp) {
            sharp_err = sharp_err.max((a - b).abs());
        }

        let (lambda, sigma) = (rng.random_range(1e-4..1e-1), rng.random_range(0.5..2.0));
        let pen = llc_penalty(&words, &x, lambda, sigma);
        let code = weights_of(&words, &x, OracleMode::LlcExact { lambda, sigma });
        let best = llc_objective(&words, &x, &code, &pen);
        let mut best_random = f64::INFINITY;
        for t in 0..100_000 {
            let scale = [1e-3, 1e-2, 1e-1, 1.0, 10.0][t % 5];
            let mut a: Vec<f64> = (0..m)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect();
            if t % 2 == 0 {
                for (ai, ci) in a.iter_mut().zip(&code) {
                    *ai += ci;
                }
            }
            let shift = (1.0 - a.iter().sum::<f64>()) / m as f64;
            a.iter_mut().for_each(|v| *v += shift);
            best_random = best_random.min(llc_objective(&words, &x, &a, &pen));
        }
        llc_excess = llc_excess.max(best - best_random);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = sum_err <= 1e-6
        && lsa_err <= 1e-12
        && sharp_err <= 1e-6
        && llc_excess <= 1e-9
        && secs < 60.0;
    criterion(
        "A2",
        pass,
        &format!(
            "assignment laws on 100 instances: |sum-1| {sum_err:.1e} (1e-6), |LSA(K=M)-SA| {lsa_err:.1e} (1e-12), \
             |SA(1e6)-hard| {sharp_err:.1e} (1e-6), LLC objective minus best of 1e5 feasible {llc_excess:.1e} (<= 1e-9), {secs:.2}s"
        ),
    );
}

#[test]
fn a3_whitening_identity_covariance() {
    let start = Instant::now();
    let mut rng = rng(303);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = rng.random_range(2..=32);
        let mixing: Vec<Vec<f64>> = (0..d)
            .map(|_| {
                (0..2 * d)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect()
            })
            .collect();
        let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let z: Vec<f64> = (0..2 * d)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                (0..d)
                    .map(|i| offset[i] + (0..2 * d).map(|j| mixing[i][j] * z[j]).sum::<f64>())
                    .collect()
            })
            .collect();
        let data = RowMatrix::from_rows(&rows).unwrap();
        let eps = default_epsilon(&data).unwrap();
        let t = fit_whitening(&data, d, eps).unwrap();
        let projected: Vec<Vec<f64>> = rows.iter().map(|r| t.project(r).unwrap()).collect();
        let cov = covariance(&projected);
        for (i, row) in cov.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    criterion(
        "A3",
        worst <= 1e-3 && secs < 10.0,
        &format!("whitening: 20 datasets, max |cov - I| = {worst:.2e} (tol 1e-3), {secs:.2}s"),
    );
}

fn synth_split(
    mode: SynthMode,
    classes: usize,
    grid: (usize, usize),
    noise: f64,
    seed: u64,
    dir: &std::path::Path,
) -> (DatasetManifest, DatasetManifest) {
    let spec = SynthSpec {
        num_classes: classes,
        images_per_class: 100,
        grid_h: grid.0,
        grid_w: grid.1,
        dim: 8,
        mode,
        noise_sigma: noise,
        seed,
    };
    let all = synth_dataset(&spec, dir).unwrap();
    split_per_class(&all, 50, seed).unwrap()
}

fn small_config(cache: &std::path::Path) -> PipelineConfig {
    PipelineConfig {
        words: 8,
        cache_dir: cache.to_path_buf(),
        seed: 5,
        ..PipelineConfig::default()
    }
}

#[test]
fn a4_spatial_signal_needs_pyramid() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (train, test) = synth_split(
        SynthMode::SpatialSignal,
        4,
        (6, 6),
        0.1,
        44,
        &tmp.path().join("data"),
    );
    let config = small_config(&tmp.path().join("cache"));
    let report = run_bench::<f64>(
        &[AssignMode::Hard, AssignMode::LlcApprox],
        &[None, Some(PyramidSpec::preset_a())],
        &train,
        &test,
        &config,
    )
    .unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for row in &report.rows {
        let ok = match row.pyramid {
            None => row.accuracy <= 0.35,
            Some(_) => row.accuracy >= 0.90,
        };
        pass &= ok;
        detail.push(format!(
            "{}/{}={:.3}",
            row.mode,
            row.pyramid
                .as_ref()
                .map_or("none".to_owned(), |p| p.to_string()),
            row.accuracy
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    criterion(
        "A4",
        pass && secs < 180.0,
        &format!(
            "spatial signal (none <= 0.35, a >= 0.90): {}, {secs:.1}s",
            detail.join(" ")
        ),
    );
}

fn mean_descriptor_accuracy(
    train: &DatasetManifest,
    test: &DatasetManifest,
    config: &PipelineConfig,
) -> f64 {
    let means = |m: &DatasetManifest| -> RowMatrix<f64> {
        let rows: Vec<Vec<f64>> = m
            .entries()
            .iter()
            .map(|e| {
                let map = read_feature_map(&e.path).unwrap();
                let n = map.num_descriptors() as f64;
                let mut mean = vec![0.0; map.dim()];
                for x in map.descriptors() {
                    for (acc, &v) in mean.iter_mut().zip(x) {
                        *acc += v as f64 / n;
                    }
                }
                mean
            })
            .collect();
        RowMatrix::from_rows(&rows).unwrap()
    };
    let model = train_ovr(&means(train), &train.labels(), &config.hyper()).unwrap();
    let test_x = means(test);
    let predicted: Vec<usize> = test_x
        .iter_rows()
        .map(|r| vladkit::classifier::predict(&model, r).unwrap().0)
        .collect();
    EvalReport::from_predictions(model.num_classes(), &test.labels(), &predicted).accuracy
}

#[test]
fn a5_descriptor_signal_all_modes() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (train, test) = synth_split(
        SynthMode::DescriptorSignal,
        5,
        (4, 4),
        0.1,
        55,
        &tmp.path().join("data"),
    );
    let config = small_config(&tmp.path().join("cache"));
    let report = run_bench::<f64>(&AssignMode::ALL, &[None], &train, &test, &config).unwrap();
    let baseline = mean_descriptor_accuracy(&train, &test, &config);
    let mut pass = true;
    let mut detail = Vec::new();
    for row in &report.rows {
        pass &= row.accuracy >= 0.95 && row.accuracy >= baseline;
        detail.push(format!("{}={:.3}", row.mode, row.accuracy));
    }
    let secs = start.elapsed().as_secs_f64();
    criterion(
        "A5",
        pass && secs < 180.0,
        &format!(
            "descriptor signal (>= 0.95 and >= baseline {baseline:.3}): {}, {secs:.1}s",
            detail.join(" ")
        ),
    );
}

#[test]
fn a6_kmeans_monotone_and_consistent() {
    let start = Instant::now();
    let mut rng = rng(606);
    let mut monotone = true;
    let mut consistent = true;
    let mut converged_runs = 0;
    for _ in 0..50 {
        let n = rng.random_range(10..=200);
        let d = rng.random_range(1..=6);
        let m = rng.random_range(1..=8.min(n));
        let rows = random_rows(&mut rng, n, d, 1.0);
        let data = RowMatrix::from_rows(&rows).unwrap();
        let params = KmeansParams {
            num_words: m,
            max_iters: 1000,
            tol: 0.0,
            seed: rng.next_u64(),
        };
        let (dict, report) = kmeans_train(&data, &params).unwrap();
        monotone &= report
            .objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        if !report.converged {
            continue;
        }
        converged_runs += 1;
        let words: Vec<Vec<f64>> = (0..m).map(|i| dict.word(i).to_vec()).collect();
        // Brute-force nearest-center partition; every nonempty cell's mean
        // must coincide with its center and the objective must match.
        let mut sums = vec![vec![0.0; d]; m];
        let mut counts = vec![0usize; m];
        let mut objective = 0.0;
        for x in &rows {
            let best = argmin_scan(&words, x);
            objective += sq_dist(x, &words[best]);
            counts[best] += 1;
            for j in 0..d {
                sums[best][j] += x[j];
            }
        }
        for c in 0..m {
            if counts[c] == 0 {
                continue;
            }
            for j in 0..d {
                consistent &= (sums[c][j] / counts[c] as f64 - words[c][j]).abs() <= 1e-9;
            }
        }
        consistent &= (objective - report.final_objective()).abs() <= 1e-9 * objective.max(1.0);
    }
    let secs = start.elapsed().as_secs_f64();
    criterion(
        "A6",
        monotone && consistent && converged_runs == 50 && secs < 30.0,
        &format!(
            "k-means: 50 instances, trace non-increasing={monotone}, {converged_runs}/50 converged, \
             nearest-center consistent={consistent}, {secs:.2}s"
        ),
    );
}

fn finite_f32(rng: &mut impl Rng) -> f32 {
    loop {
        let v = f32::from_bits(rng.next_u32());
        if v.is_finite() {
            return v;
        }
    }
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn a7_determinism_and_round_trip() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();

    let spec = SynthSpec {
        num_classes: 3,
        images_per_class: 10,
        grid_h: 4,
        grid_w: 4,
        dim: 8,
        mode: SynthMode::DescriptorSignal,
        noise_sigma: 0.2,
        seed: 7,
    };
    let mut artifacts = Vec::new();
    for run in 0..2 {
        let root = tmp.path().join(format!("run{run}"));
        let manifest = synth_dataset(&spec, root.join("data")).unwrap();
        let (train, test) = split_per_class(&manifest, 5, 3).unwrap();
        let mut config = small_config(&root.join("cache"));
        config.pyramid = Some(PyramidSpec::preset_a());
        config.threads = 1;
        let out = run_pipeline::<f64>(&config, &train, &test).unwrap();
        artifacts.push((dir_bytes(&root), out.report));
    }
    let deterministic = artifacts[0] == artifacts[1];

    let mut rng = rng(707);
    let mut round_trip = true;
    for _ in 0..100 {
        let (h, w, d) = (
            rng.random_range(1..5),
            rng.random_range(1..5),
            rng.random_range(1..6),
        );
        let data: Vec<f32> = (0..h * w * d).map(|_| finite_f32(&mut rng)).collect();
        let bytes = feature_map_to_bytes(&FeatureMap::new(h, w, d, data).unwrap()).unwrap();
        round_trip &=
            feature_map_to_bytes(&feature_map_from_bytes(&bytes).unwrap()).unwrap() == bytes;

        let rows: Vec<Vec<f32>> = (0..rng.random_range(1..5))
            .map(|_| (0..d).map(|_| finite_f32(&mut rng)).collect())
            .collect();
        let dict = Dictionary::<f32>::new(RowMatrix::from_rows(&rows).unwrap()).unwrap();
        let bytes = dictionary_to_bytes(&dict).unwrap();
        round_trip &=
            dictionary_to_bytes(&dictionary_from_bytes::<f32>(&bytes).unwrap()).unwrap() == bytes;

        let dout = rng.random_range(1..=d);
        let mean: Vec<f32> = (0..d).map(|_| finite_f32(&mut rng)).collect();
        let proj: Vec<f32> = (0..dout * d).map(|_| finite_f32(&mut rng)).collect();
        let t = WhiteningTransform::from_parts(mean, RowMatrix::from_vec(dout, d, proj).unwrap())
            .unwrap();
        let bytes = whitening_to_bytes(&t).unwrap();
        round_trip &=
            whitening_to_bytes(&whitening_from_bytes::<f32>(&bytes).unwrap()).unwrap() == bytes;

        let enc: Vec<f32> = (0..rng.random_range(0..40))
            .map(|_| finite_f32(&mut rng))
            .collect();
        let bytes = encoding_to_bytes(&enc).unwrap();
        round_trip &=
            encoding_to_bytes(&encoding_from_bytes::<f32>(&bytes).unwrap()).unwrap() == bytes;

        let c = rng.random_range(1..4);
        let wts: Vec<f32> = (0..c * d).map(|_| finite_f32(&mut rng)).collect();
        let biases: Vec<f32> = (0..c).map(|_| finite_f32(&mut rng)).collect();
        let model = vladkit::classifier::LinearModel::from_parts(
            RowMatrix::from_vec(c, d, wts).unwrap(),
            biases,
        )
        .unwrap();
        let bytes = model_to_bytes(&model).unwrap();
        round_trip &= model_to_bytes(&model_from_bytes::<f32>(&bytes).unwrap()).unwrap() == bytes;
    }
    let secs = start.elapsed().as_secs_f64();
    criterion(
        "A7",
        deterministic && round_trip && secs < 10.0,
        &format!(
            "determinism (two full pipeline runs byte-identical)={deterministic}, \
             100 payloads x 5 containers bit-exact={round_trip}, {secs:.2}s"
        ),
    );
}

#[test]
fn a8_shapes_and_degenerate_inputs() {
    let mut rng = rng(808);
    let (m, d) = (4, 3);
    let words = random_rows(&mut rng, m, d, 1.0);
    let dict = dict_of(&words);
    let data: Vec<f32> = (0..5 * 6 * d)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let map = FeatureMap::new(5, 6, d, data).unwrap();
    let zero = FeatureMap::new(3, 3, d, vec![0.0; 9 * d]).unwrap();
    let single = FeatureMap::new(1, 1, d, vec![0.25, -0.5, 1.0]).unwrap();
    let schemes = [
        NormScheme::IntraThenGlobal,
        NormScheme::GlobalOnly,
        NormScheme::SignedSqrtThenGlobal,
    ];
    let pyramids = [
        PyramidSpec::single(),
        PyramidSpec::preset_a(),
        PyramidSpec::preset_b(),
        PyramidSpec::preset_c(),
    ];

    let mut bitwise = true;
    let mut lengths = true;
    let mut finite = true;
    for mode in AssignMode::ALL {
        for scheme in schemes {
            let config = EncoderConfig {
                assign: AssignConfig {
                    k_nn: 2,
                    ..AssignConfig::with_mode(mode)
                },
                norm_scheme: scheme,
            };
            let plain = encode(&dict, &map, None, &config).unwrap();
            let spm = encode_spm(&map, &dict, None, &config, &PyramidSpec::single()).unwrap();
            bitwise &= plain
                .values()
                .iter()
                .zip(&spm.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
                && plain.len() == spm.values.len();
            for p in &pyramids {
                let e = encode_spm(&map, &dict, None, &config, p).unwrap();
                lengths &= e.values.len() == m * d * p.total_regions();
                for edge in [&zero, &single] {
                    let e = encode_spm(edge, &dict, None, &config, p).unwrap();
                    finite &= e.values.iter().all(|v| v.is_finite());
                }
            }
            for edge in [&zero, &single] {
                finite &= encode(&dict, edge, None, &config)
                    .unwrap()
                    .values()
                    .iter()
                    .all(|v| v.is_finite());
            }
        }
    }
    criterion(
        "A8",
        bitwise && lengths && finite,
        &format!("SPM[(1,1)] == encode bitwise={bitwise}, lengths M*D*regions={lengths}, edge cases finite={finite}"),
    );
}
