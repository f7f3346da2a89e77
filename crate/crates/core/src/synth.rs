//! Synthetic feature-map datasets with a known source of class signal.
//!
//! Every prototype is a tight pair of components `p ± offset`, so a single
//! codeword sits between them and the split of mass inside a pair shows up
//! in the residuals, not only in the counts.
//!
//! * descriptor-signal: every class draws descriptors from the shared
//!   components with class-specific proportions, placed at random cells.
//! * spatial-signal: image `i` of every class holds the same bag of
//!   descriptors; classes differ only in which cells the bag is written to.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io::{write_feature_map, write_manifest, DatasetManifest, FeatureMap, ManifestEntry};

/// Prototypes shared by all classes in spatial-signal mode.
const SPATIAL_PROTOTYPES: usize = 8;
pub const MANIFEST_NAME: &str = "manifest.tsv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SynthMode {
    DescriptorSignal,
    SpatialSignal,
}

impl fmt::Display for SynthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthMode::DescriptorSignal => "descriptor",
            SynthMode::SpatialSignal => "spatial",
        })
    }
}

impl FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descriptor" | "descriptor-signal" => Ok(SynthMode::DescriptorSignal),
            "spatial" | "spatial-signal" => Ok(SynthMode::SpatialSignal),
            other => Err(Error::InvalidArgument(format!(
                "unknown synth mode {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub images_per_class: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    pub mode: SynthMode,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_classes", self.num_classes),
            ("images_per_class", self.images_per_class),
            ("grid_h", self.grid_h),
            ("grid_w", self.grid_w),
            ("dim", self.dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(
                "noise_sigma must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// One generated image before it is written out.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthImage {
    pub label: usize,
    pub index: usize,
    pub map: FeatureMap,
}

const PROTOTYPE_SCALE: f64 = 2.0;
const PAIR_HALF_GAP: f64 = 0.5;

/// Components `2p` and `2p + 1` are prototype `p` shifted by ± a random
/// offset of length `PAIR_HALF_GAP`.
fn components(rng: &mut ChaCha8Rng, prototypes: usize, dim: usize) -> Vec<Vec<f32>> {
    let normal = Normal::new(0.0f64, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(2 * prototypes);
    for _ in 0..prototypes {
        let center: Vec<f64> = (0..dim)
            .map(|_| PROTOTYPE_SCALE * normal.sample(rng))
            .collect();
        let dir: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let len = dir
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        for sign in [1.0, -1.0] {
            out.push(
                center
                    .iter()
                    .zip(&dir)
                    .map(|(c, u)| (c + sign * PAIR_HALF_GAP * u / len) as f32)
                    .collect(),
            );
        }
    }
    out
}

fn noisy(proto: &[f32], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    if sigma == 0.0 {
        return proto.to_vec();
    }
    let normal = Normal::new(0.0f64, sigma).expect("valid sigma");
    proto
        .iter()
        .map(|&p| (p as f64 + normal.sample(rng)) as f32)
        .collect()
}

/// Cell counts per component for class `c`: half on the first component of
/// prototype `c`, a quarter on the second component of prototype `c + 1`,
/// the remainder spread over the four components of the two background
/// prototypes.
fn class_counts(c: usize, classes: usize, cells: usize) -> Vec<usize> {
    let mut counts = vec![0; 2 * (classes + 2)];
    let main = cells / 2;
    let second = cells / 4;
    counts[2 * c] += main;
    counts[2 * ((c + 1) % classes) + 1] += second;
    let rest = cells - main - second;
    for k in 0..rest {
        counts[2 * classes + k % 4] += 1;
    }
    counts
}

/// Cell visiting order for class `c`: one of four traversals (row-major,
/// column-major and their reversals), cyclically shifted for classes ≥ 4.
pub fn class_cell_order(c: usize, classes: usize, h: usize, w: usize) -> Vec<usize> {
    let n = h * w;
    let mut order: Vec<usize> = match c % 4 {
        0 => (0..n).collect(),
        1 => (0..w)
            .flat_map(|col| (0..h).map(move |row| row * w + col))
            .collect(),
        2 => (0..n).rev().collect(),
        _ => (0..w)
            .rev()
            .flat_map(|col| (0..h).rev().map(move |row| row * w + col))
            .collect(),
    };
    let groups = classes.div_ceil(4);
    order.rotate_left((c / 4) * n / groups);
    order
}

/// Generates the dataset in memory, class-major.
pub fn generate(spec: &SynthSpec) -> Result<Vec<SynthImage>> {
    spec.validate()?;
    let cells = spec.grid_h * spec.grid_w;
    let mut images = Vec::with_capacity(spec.num_classes * spec.images_per_class);
    match spec.mode {
        SynthMode::DescriptorSignal => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let protos = components(&mut rng, spec.num_classes + 2, spec.dim);
            for c in 0..spec.num_classes {
                let counts = class_counts(c, spec.num_classes, cells);
                for index in 0..spec.images_per_class {
                    let mut ids: Vec<usize> = counts
                        .iter()
                        .enumerate()
                        .flat_map(|(p, &k)| std::iter::repeat_n(p, k))
                        .collect();
                    ids.shuffle(&mut rng);
                    let data = ids
                        .iter()
                        .flat_map(|&p| noisy(&protos[p], spec.noise_sigma, &mut rng))
                        .collect();
                    let map = FeatureMap::new(spec.grid_h, spec.grid_w, spec.dim, data)?;
                    images.push(SynthImage {
                        label: c,
                        index,
                        map,
                    });
                }
            }
        }
        SynthMode::SpatialSignal => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let protos = components(&mut rng, SPATIAL_PROTOTYPES, spec.dim);
            let bags: Vec<Vec<Vec<f32>>> = (0..spec.images_per_class)
                .map(|_| {
                    let mut bag: Vec<(usize, Vec<f32>)> = (0..cells)
                        .map(|_| {
                            let p = rng.random_range(0..2 * SPATIAL_PROTOTYPES);
                            (p, noisy(&protos[p], spec.noise_sigma, &mut rng))
                        })
                        .collect();
                    // First components of every pair, then second ones, so
                    // each traversal puts them in opposite parts of the grid.
                    bag.sort_by_key(|(p, _)| (p % 2, p / 2));
                    bag.into_iter().map(|(_, d)| d).collect()
                })
                .collect();
            for c in 0..spec.num_classes {
                let order = class_cell_order(c, spec.num_classes, spec.grid_h, spec.grid_w);
                for (index, bag) in bags.iter().enumerate() {
                    let mut data = vec![0.0f32; cells * spec.dim];
                    for (descriptor, &cell) in bag.iter().zip(&order) {
                        data[cell * spec.dim..(cell + 1) * spec.dim].copy_from_slice(descriptor);
                    }
                    let map = FeatureMap::new(spec.grid_h, spec.grid_w, spec.dim, data)?;
                    images.push(SynthImage {
                        label: c,
                        index,
                        map,
                    });
                }
            }
        }
    }
    Ok(images)
}

pub fn image_file_name(label: usize, index: usize) -> String {
    format!("c{label:03}_{index:05}.vlf")
}

/// Writes every image plus `manifest.tsv` into `out_dir` (created if needed)
/// and returns the manifest.
pub fn synth_dataset(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let images = generate(spec)?;
    let mut entries = Vec::with_capacity(images.len());
    for img in &images {
        let path = out_dir.join(image_file_name(img.label, img.index));
        write_feature_map(&img.map, &path)?;
        entries.push(ManifestEntry {
            path,
            label: img.label,
        });
    }
    let manifest = DatasetManifest::new(entries)?;
    write_manifest(&manifest, out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
