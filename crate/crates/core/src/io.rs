//! Binary containers and dataset manifests.
//!
//! Every container is a 4-byte ASCII magic, a short header of little-endian
//! `u32` fields and a payload of little-endian IEEE-754 `f32` values:
//!
//! | magic  | header         | payload                                   |
//! |--------|----------------|-------------------------------------------|
//! | `VLF1` | `H, W, D`      | `H*W*D` descriptor values, row-major      |
//! | `VLD1` | `M, D`         | `M*D` centroid values                     |
//! | `VLW1` | `D_in, D_out`  | `D_in` mean values, `D_out*D_in` matrix   |
//! | `VLE1` | `len`          | `len` encoding values                     |
//! | `VLM1` | `C, dim`       | per class: `dim` weights then the bias    |

use std::fs;
use std::path::{Path, PathBuf};

use crate::classifier::LinearModel;
use crate::codebook::Dictionary;
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::preprocess::WhiteningTransform;
use crate::scalar::Real;

pub const FEATURE_MAP_MAGIC: [u8; 4] = *b"VLF1";
pub const DICTIONARY_MAGIC: [u8; 4] = *b"VLD1";
pub const WHITENING_MAGIC: [u8; 4] = *b"VLW1";
pub const ENCODING_MAGIC: [u8; 4] = *b"VLE1";
pub const MODEL_MAGIC: [u8; 4] = *b"VLM1";

/// H×W grid of D-dimensional local descriptors, stored row-major as
/// (row, col, channel).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature map extents must be positive, got {height}x{width}x{dim}"
            )));
        }
        if data.len() != height * width * dim {
            return Err(Error::DimMismatch {
                expected: height * width * dim,
                got: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self {
            height,
            width,
            dim,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn num_descriptors(&self) -> usize {
        self.height * self.width
    }

    /// Descriptor at flat cell index `row * width + col`.
    pub fn descriptor(&self, cell: usize) -> &[f32] {
        &self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        self.descriptor(row * self.width + col)
    }

    pub fn descriptors(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        (0..self.num_descriptors()).map(move |i| self.descriptor(i))
    }

    /// All descriptors widened to `T`, one row per cell.
    pub fn to_matrix<T: Real>(&self) -> RowMatrix<T> {
        let data = self.data.iter().map(|&v| T::widen(v)).collect();
        RowMatrix::from_vec(self.num_descriptors(), self.dim, data)
            .expect("feature map shape is consistent")
    }
}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn to_f32_checked<T: Real>(values: &[T]) -> Result<Vec<f32>> {
    let out: Vec<f32> = values.iter().map(|v| v.as_f32()).collect();
    check_finite(&out)?;
    Ok(out)
}

fn u32_field(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit in u32")))
}

fn encode_container(magic: [u8; 4], header: &[u32], payload: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(4 + 4 * header.len() + 4 * payload.len());
    bytes.extend_from_slice(&magic);
    for h in header {
        bytes.extend_from_slice(&h.to_le_bytes());
    }
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Parses a container whose payload length is a function of its header.
fn decode_container(
    bytes: &[u8],
    magic: [u8; 4],
    header_len: usize,
    payload_len: impl Fn(&[u32]) -> Option<u64>,
) -> Result<(Vec<u32>, Vec<f32>)> {
    if bytes.len() < 4 || bytes[..4] != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    let header_end = 4 + 4 * header_len;
    if bytes.len() < header_end {
        return Err(Error::TruncatedFile {
            expected: header_end as u64,
            found: bytes.len() as u64,
        });
    }
    let header: Vec<u32> = bytes[4..header_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let expected = payload_len(&header)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(header_end as u64))
        .ok_or_else(|| Error::Parse("container header overflows".into()))?;
    if bytes.len() as u64 != expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len() as u64,
        });
    }
    let payload: Vec<f32> = bytes[header_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    check_finite(&payload)?;
    Ok((header, payload))
}

fn product(fields: &[u32]) -> Option<u64> {
    fields
        .iter()
        .try_fold(1u64, |acc, &f| acc.checked_mul(f as u64))
}

pub fn feature_map_to_bytes(map: &FeatureMap) -> Result<Vec<u8>> {
    check_finite(&map.data)?;
    let header = [
        u32_field(map.height, "height")?,
        u32_field(map.width, "width")?,
        u32_field(map.dim, "dim")?,
    ];
    Ok(encode_container(FEATURE_MAP_MAGIC, &header, &map.data))
}

pub fn feature_map_from_bytes(bytes: &[u8]) -> Result<FeatureMap> {
    let (h, data) = decode_container(bytes, FEATURE_MAP_MAGIC, 3, product)?;
    FeatureMap::new(h[0] as usize, h[1] as usize, h[2] as usize, data)
}

pub fn write_feature_map(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let bytes = feature_map_to_bytes(map)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    feature_map_from_bytes(&fs::read(path)?)
}

pub fn dictionary_to_bytes<T: Real>(dict: &Dictionary<T>) -> Result<Vec<u8>> {
    let payload = to_f32_checked(dict.centers().as_slice())?;
    let header = [
        u32_field(dict.num_words(), "num_words")?,
        u32_field(dict.dim(), "dim")?,
    ];
    Ok(encode_container(DICTIONARY_MAGIC, &header, &payload))
}

pub fn dictionary_from_bytes<T: Real>(bytes: &[u8]) -> Result<Dictionary<T>> {
    let (h, data) = decode_container(bytes, DICTIONARY_MAGIC, 2, product)?;
    let data = data.into_iter().map(T::widen).collect();
    Dictionary::new(RowMatrix::from_vec(h[0] as usize, h[1] as usize, data)?)
}

pub fn write_dictionary<T: Real>(dict: &Dictionary<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dictionary_to_bytes(dict)?)?;
    Ok(())
}

pub fn read_dictionary<T: Real>(path: impl AsRef<Path>) -> Result<Dictionary<T>> {
    dictionary_from_bytes(&fs::read(path)?)
}

pub fn whitening_to_bytes<T: Real>(t: &WhiteningTransform<T>) -> Result<Vec<u8>> {
    let mut payload = to_f32_checked(t.mean())?;
    payload.extend(to_f32_checked(t.projection().as_slice())?);
    let header = [
        u32_field(t.input_dim(), "input_dim")?,
        u32_field(t.output_dim(), "output_dim")?,
    ];
    Ok(encode_container(WHITENING_MAGIC, &header, &payload))
}

pub fn whitening_from_bytes<T: Real>(bytes: &[u8]) -> Result<WhiteningTransform<T>> {
    let (h, data) = decode_container(bytes, WHITENING_MAGIC, 2, |h| {
        let (din, dout) = (h[0] as u64, h[1] as u64);
        din.checked_mul(dout)?.checked_add(din)
    })?;
    let (din, dout) = (h[0] as usize, h[1] as usize);
    let mut values = data.into_iter().map(T::widen);
    let mean: Vec<T> = values.by_ref().take(din).collect();
    let projection = RowMatrix::from_vec(dout, din, values.collect())?;
    WhiteningTransform::from_parts(mean, projection)
}

pub fn write_whitening<T: Real>(t: &WhiteningTransform<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, whitening_to_bytes(t)?)?;
    Ok(())
}

pub fn read_whitening<T: Real>(path: impl AsRef<Path>) -> Result<WhiteningTransform<T>> {
    whitening_from_bytes(&fs::read(path)?)
}

pub fn encoding_to_bytes<T: Real>(values: &[T]) -> Result<Vec<u8>> {
    let payload = to_f32_checked(values)?;
    let header = [u32_field(values.len(), "length")?];
    Ok(encode_container(ENCODING_MAGIC, &header, &payload))
}

pub fn encoding_from_bytes<T: Real>(bytes: &[u8]) -> Result<Vec<T>> {
    let (_, data) = decode_container(bytes, ENCODING_MAGIC, 1, |h| Some(h[0] as u64))?;
    Ok(data.into_iter().map(T::widen).collect())
}

pub fn write_encoding<T: Real>(values: &[T], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encoding_to_bytes(values)?)?;
    Ok(())
}

pub fn read_encoding<T: Real>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    encoding_from_bytes(&fs::read(path)?)
}

pub fn model_to_bytes<T: Real>(model: &LinearModel<T>) -> Result<Vec<u8>> {
    let mut payload = Vec::with_capacity(model.num_classes() * (model.dim() + 1));
    for c in 0..model.num_classes() {
        payload.extend(to_f32_checked(model.weights().row(c))?);
        payload.extend(to_f32_checked(&model.biases()[c..=c])?);
    }
    let header = [
        u32_field(model.num_classes(), "num_classes")?,
        u32_field(model.dim(), "dim")?,
    ];
    Ok(encode_container(MODEL_MAGIC, &header, &payload))
}

pub fn model_from_bytes<T: Real>(bytes: &[u8]) -> Result<LinearModel<T>> {
    let (h, data) = decode_container(bytes, MODEL_MAGIC, 2, |h| {
        (h[0] as u64).checked_mul(h[1] as u64 + 1)
    })?;
    let (classes, dim) = (h[0] as usize, h[1] as usize);
    let mut weights = Vec::with_capacity(classes * dim);
    let mut biases = Vec::with_capacity(classes);
    for chunk in data.chunks_exact(dim + 1) {
        weights.extend(chunk[..dim].iter().map(|&v| T::widen(v)));
        biases.push(T::widen(chunk[dim]));
    }
    LinearModel::from_parts(RowMatrix::from_vec(classes, dim, weights)?, biases)
}

pub fn write_model<T: Real>(model: &LinearModel<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model)?)?;
    Ok(())
}

pub fn read_model<T: Real>(path: impl AsRef<Path>) -> Result<LinearModel<T>> {
    model_from_bytes(&fs::read(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
}

/// Ordered list of labelled feature-map files. Labels are dense from 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    num_classes: usize,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let num_classes = entries
            .iter()
            .map(|e| e.label + 1)
            .max()
            .ok_or_else(|| Error::Parse("empty manifest".into()))?;
        Ok(Self {
            entries,
            num_classes,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }

    /// Canonical text form used for content hashing.
    pub fn canonical_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.path.display(), e.label))
            .collect()
    }
}

/// Parses manifest text; relative paths are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Err(Error::Parse("empty manifest".into()));
    }
    let mut entries = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let line_no = i + 1;
        let (path, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("line {line_no}: expected path<TAB>label")))?;
        if path.is_empty() {
            return Err(Error::Parse(format!("line {line_no}: empty path")));
        }
        let label: i64 = label
            .trim_end_matches('\r')
            .parse()
            .map_err(|_| Error::Parse(format!("line {line_no}: bad label {label:?}")))?;
        if label < 0 {
            return Err(Error::NegativeLabel { line: line_no });
        }
        let path = Path::new(path);
        let path = if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        };
        entries.push(ManifestEntry {
            path,
            label: label as usize,
        });
    }
    DatasetManifest::new(entries)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let manifest = parse_manifest(&text, base)?;
    if let Some(missing) = manifest.entries.iter().find(|e| !e.path.is_file()) {
        return Err(Error::MissingFile(missing.path.clone()));
    }
    Ok(manifest)
}

/// Writes `path<TAB>label` lines. Entries living under the manifest's own
/// directory are written relative to it, everything else absolute.
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    let dir_abs = absolute(dir)?;
    let mut text = String::new();
    for e in &manifest.entries {
        let entry_abs = absolute(&e.path)?;
        let shown = match entry_abs.strip_prefix(&dir_abs) {
            Ok(rel) => rel.to_path_buf(),
            Err(_) => entry_abs,
        };
        let shown = shown
            .to_str()
            .ok_or_else(|| Error::InvalidArgument(format!("non UTF-8 path {}", shown.display())))?
            .to_owned();
        if shown.contains('\t') || shown.contains('\n') {
            return Err(Error::InvalidArgument(format!(
                "path {shown:?} contains TAB or LF"
            )));
        }
        text.push_str(&shown);
        text.push('\t');
        text.push_str(&e.label.to_string());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn absolute(p: &Path) -> Result<PathBuf> {
    let p = if p.as_os_str().is_empty() {
        Path::new(".")
    } else {
        p
    };
    Ok(std::path::absolute(p)?)
}
