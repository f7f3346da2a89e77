use rayon::prelude::*;

use crate::codebook::Dictionary;
use crate::error::{Error, Result};
use crate::io::{read_feature_map, DatasetManifest, FeatureMap};
use crate::matrix::RowMatrix;
use crate::preprocess::WhiteningTransform;
use crate::scalar::Real;
use crate::spm::{encode_spm, PyramidSpec};
use crate::vlad::{encode, EncoderConfig};

/// Everything needed to turn a feature map into its final encoding.
#[derive(Clone, Debug)]
pub struct Encoder<T> {
    pub dictionary: Dictionary<T>,
    pub transform: Option<WhiteningTransform<T>>,
    pub config: EncoderConfig,
    /// `None` encodes the whole map as one region.
    pub pyramid: Option<PyramidSpec>,
}

impl<T: Real> Encoder<T> {
    pub fn new(
        dictionary: Dictionary<T>,
        transform: Option<WhiteningTransform<T>>,
        config: EncoderConfig,
        pyramid: Option<PyramidSpec>,
    ) -> Result<Self> {
        if let Some(t) = &transform {
            if t.output_dim() != dictionary.dim() {
                return Err(Error::DimMismatch {
                    expected: dictionary.dim(),
                    got: t.output_dim(),
                });
            }
        }
        Ok(Self {
            dictionary,
            transform,
            config,
            pyramid,
        })
    }

    /// Descriptor dimension expected in input feature maps.
    pub fn input_dim(&self) -> usize {
        self.transform
            .as_ref()
            .map_or(self.dictionary.dim(), |t| t.input_dim())
    }

    pub fn encoding_len(&self) -> usize {
        let regions = self.pyramid.as_ref().map_or(1, |p| p.total_regions());
        regions * self.dictionary.num_words() * self.dictionary.dim()
    }

    pub fn encode(&self, map: &FeatureMap) -> Result<Vec<T>> {
        match &self.pyramid {
            None => Ok(
                encode(&self.dictionary, map, self.transform.as_ref(), &self.config)?.into_values(),
            ),
            Some(spec) => Ok(encode_spm(
                map,
                &self.dictionary,
                self.transform.as_ref(),
                &self.config,
                spec,
            )?
            .values),
        }
    }

    /// Encodes every manifest entry, one row each, on `threads` workers.
    /// Rows come back in manifest order whatever the thread count.
    pub fn encode_manifest(
        &self,
        manifest: &DatasetManifest,
        threads: usize,
    ) -> Result<RowMatrix<T>> {
        let work = |i: usize| -> Result<Vec<T>> {
            let map = read_feature_map(&manifest.entries()[i].path)?;
            self.encode(&map)
        };
        let rows: Vec<Vec<T>> = if threads <= 1 {
            (0..manifest.len()).map(work).collect::<Result<_>>()?
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(|| {
                (0..manifest.len())
                    .into_par_iter()
                    .map(work)
                    .collect::<Result<_>>()
            })?
        };
        RowMatrix::from_rows(&rows)
    }
}
