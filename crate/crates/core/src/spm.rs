//! Spatial pyramid: split the cell grid into regions, encode each region on
//! its own and concatenate.

use std::fmt;
use std::str::FromStr;

use crate::codebook::Dictionary;
use crate::error::{Error, Result};
use crate::io::FeatureMap;
use crate::preprocess::{l2_normalize_in_place, WhiteningTransform};
use crate::scalar::Real;
use crate::vlad::{encode_subset, prepare_descriptors, EncoderConfig};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PyramidSpec {
    levels: Vec<(usize, usize)>,
    /// Scale level segments by the classic pyramid-match weights before the
    /// final normalization; off by default.
    pub level_weights: bool,
}

impl PyramidSpec {
    pub fn new(levels: Vec<(usize, usize)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument(
                "pyramid needs at least one level".into(),
            ));
        }
        if let Some(&(r, c)) = levels.iter().find(|&&(r, c)| r == 0 || c == 0) {
            return Err(Error::InvalidArgument(format!(
                "pyramid level {r}x{c} must have positive extents"
            )));
        }
        Ok(Self {
            levels,
            level_weights: false,
        })
    }

    /// 1×1, 2×2, 3×1 (horizontal bands).
    pub fn preset_a() -> Self {
        Self::new(vec![(1, 1), (2, 2), (3, 1)]).expect("valid preset")
    }

    /// 1×1, 2×2, 1×3 (vertical bands).
    pub fn preset_b() -> Self {
        Self::new(vec![(1, 1), (2, 2), (1, 3)]).expect("valid preset")
    }

    /// 1×1, 2×2, 4×4.
    pub fn preset_c() -> Self {
        Self::new(vec![(1, 1), (2, 2), (4, 4)]).expect("valid preset")
    }

    pub fn single() -> Self {
        Self::new(vec![(1, 1)]).expect("valid preset")
    }

    pub fn levels(&self) -> &[(usize, usize)] {
        &self.levels
    }

    pub fn total_regions(&self) -> usize {
        self.levels.iter().map(|&(r, c)| r * c).sum()
    }

    /// Weight of level `l`: 1/2^L for the coarsest, 1/2^(L-l+1) otherwise,
    /// L being the index of the finest level.
    pub fn level_weight(&self, level: usize) -> f64 {
        if !self.level_weights {
            return 1.0;
        }
        let top = self.levels.len() - 1;
        let exp = if level == 0 { top } else { top - level + 1 };
        0.5f64.powi(exp as i32)
    }
}

impl fmt::Display for PyramidSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (r, c)) in self.levels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}x{c}")?;
        }
        Ok(())
    }
}

impl FromStr for PyramidSpec {
    type Err = Error;

    /// `a`, `b`, `c` or a list such as `1x1,2x2,3x1`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => return Ok(Self::preset_a()),
            "b" => return Ok(Self::preset_b()),
            "c" => return Ok(Self::preset_c()),
            _ => {}
        }
        let bad = || Error::InvalidArgument(format!("bad pyramid spec {s:?}"));
        let levels = s
            .split(',')
            .map(|level| {
                let (r, c) = level.trim().split_once(['x', 'X', '×']).ok_or_else(bad)?;
                let r = r.trim().parse().map_err(|_| bad())?;
                let c = c.trim().parse().map_err(|_| bad())?;
                Ok((r, c))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub level: usize,
    pub row: usize,
    pub col: usize,
    /// Flat cell indices (`row * width + col`) in row-major order.
    pub cells: Vec<usize>,
}

/// Regions ordered level by level, row-major within a level. Region `(i, j)`
/// of an `r×c` level covers rows `[⌊iH/r⌋, ⌊(i+1)H/r⌋)` and columns
/// `[⌊jW/c⌋, ⌊(j+1)W/c⌋)`; it is empty when the grid is too small.
pub fn partition_grid(height: usize, width: usize, spec: &PyramidSpec) -> Vec<Region> {
    let mut regions = Vec::with_capacity(spec.total_regions());
    for (level, &(r, c)) in spec.levels.iter().enumerate() {
        for i in 0..r {
            let (r0, r1) = (i * height / r, (i + 1) * height / r);
            for j in 0..c {
                let (c0, c1) = (j * width / c, (j + 1) * width / c);
                let cells = (r0..r1)
                    .flat_map(|row| (c0..c1).map(move |col| row * width + col))
                    .collect();
                regions.push(Region {
                    level,
                    row: i,
                    col: j,
                    cells,
                });
            }
        }
    }
    regions
}

pub fn partition(map: &FeatureMap, spec: &PyramidSpec) -> Vec<Region> {
    partition_grid(map.height(), map.width(), spec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpmEncoding<T> {
    pub pyramid: PyramidSpec,
    /// M·D, the length of one region's segment.
    pub segment_len: usize,
    pub values: Vec<T>,
}

/// Encodes every region independently (normalized per the config), scales by
/// level weights when enabled, concatenates and applies one global L2.
pub fn encode_spm<T: Real>(
    map: &FeatureMap,
    dict: &Dictionary<T>,
    transform: Option<&WhiteningTransform<T>>,
    config: &EncoderConfig,
    spec: &PyramidSpec,
) -> Result<SpmEncoding<T>> {
    let descriptors = prepare_descriptors(map, transform)?;
    if descriptors.cols() != dict.dim() {
        return Err(Error::DimMismatch {
            expected: dict.dim(),
            got: descriptors.cols(),
        });
    }
    let segment_len = dict.num_words() * dict.dim();
    let regions = partition(map, spec);
    let mut values = Vec::with_capacity(regions.len() * segment_len);
    for region in &regions {
        let segment = encode_subset(dict, &descriptors, &region.cells, config)?;
        let weight = spec.level_weight(region.level);
        if weight == 1.0 {
            values.extend_from_slice(segment.values());
        } else {
            let w = T::lit(weight);
            values.extend(segment.values().iter().map(|&v| v * w));
        }
    }
    l2_normalize_in_place(&mut values);
    Ok(SpmEncoding {
        pyramid: spec.clone(),
        segment_len,
        values,
    })
}
