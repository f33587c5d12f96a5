//! Datasets and per-example gradient sources.

use super::model::Model;
use super::FedsimError;
use crate::codec::{sidecar_path, GradientFileReader, ShapeManifest};
use crate::sampler::{derive_seed, Prg, Seed};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self, FedsimError> {
        if features.len() != labels.len() {
            return Err(FedsimError::Config(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        if let Some(i) = features.iter().position(|x| x.len() != dim) {
            return Err(FedsimError::Config(format!(
                "row {i} has {} features, expected {dim}",
                features[i].len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(FedsimError::Config(format!(
                "row {i} has label {}, expected 0 or 1",
                labels[i]
            )));
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn accuracy(&self, model: &Model, theta: &[f64]) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        let hits = self
            .features
            .iter()
            .zip(&self.labels)
            .filter(|(x, &y)| model.predict(theta, x) == y)
            .count();
        hits as f64 / self.len() as f64
    }

    /// Splits off the last `fraction` of rows.
    pub fn split(mut self, fraction: f64) -> (Dataset, Dataset) {
        let cut = self.len() - (self.len() as f64 * fraction).round() as usize;
        let features = self.features.split_off(cut);
        let labels = self.labels.split_off(cut);
        (self, Dataset { features, labels })
    }
}

/// Linearly separable two-class data: standard normal features labelled by
/// the sign of a hidden direction, with points inside a margin resampled.
pub fn synthetic(n: usize, dim: usize, margin: f64, seed: &Seed) -> Dataset {
    let mut rng = Prg::new(derive_seed(seed, "synthetic", 0), 0);
    let w: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while features.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / norm;
        if s.abs() >= margin {
            labels.push((s > 0.0) as u8);
            features.push(x);
        }
    }
    Dataset { features, labels }
}

/// Yields disjoint batches of raw per-example gradients, epoch by epoch.
pub trait GradientSource {
    fn dim(&self) -> usize;
    fn examples(&self) -> usize;
    fn start_epoch(&mut self, epoch: usize) -> Result<(), FedsimError>;
    /// The next `b` gradients at parameters `theta`, or `None` when fewer
    /// than `b` examples remain in the epoch.
    fn next_batch(&mut self, theta: &[f64], b: usize)
        -> Result<Option<Vec<Vec<f64>>>, FedsimError>;
}

/// Gradients computed on the fly by a built-in model; each epoch visits a
/// fresh seeded permutation of the data.
pub struct LocalModel {
    pub model: Model,
    pub data: Dataset,
    seed: Seed,
    order: Vec<usize>,
    cursor: usize,
}

impl LocalModel {
    pub fn new(model: Model, data: Dataset, seed: Seed) -> Result<Self, FedsimError> {
        if data.dim() != model.features {
            return Err(FedsimError::Config(format!(
                "data has {} features, model expects {}",
                data.dim(),
                model.features
            )));
        }
        Ok(LocalModel {
            model,
            data,
            seed,
            order: Vec::new(),
            cursor: 0,
        })
    }
}

impl GradientSource for LocalModel {
    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn examples(&self) -> usize {
        self.data.len()
    }

    fn start_epoch(&mut self, epoch: usize) -> Result<(), FedsimError> {
        self.order = (0..self.data.len()).collect();
        self.order.shuffle(&mut Prg::new(
            derive_seed(&self.seed, "epoch-order", epoch as u64),
            0,
        ));
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(
        &mut self,
        theta: &[f64],
        b: usize,
    ) -> Result<Option<Vec<Vec<f64>>>, FedsimError> {
        if self.cursor + b > self.order.len() {
            return Ok(None);
        }
        let batch = self.order[self.cursor..self.cursor + b]
            .iter()
            .map(|&i| {
                self.model
                    .gradient(theta, &self.data.features[i], self.data.labels[i])
            })
            .collect();
        self.cursor += b;
        Ok(Some(batch))
    }
}

/// Replays precomputed per-example gradients from a gradient file, in file
/// order, one record in memory at a time. Every epoch rereads the file.
pub struct GradientFile {
    path: PathBuf,
    reader: GradientFileReader<BufReader<File>>,
    manifest: Option<ShapeManifest>,
    buf: Vec<f32>,
}

/// Opens a gradient file and its optional `.shapes` sidecar.
pub fn ingest_gradients(path: &Path) -> Result<GradientFile, FedsimError> {
    let reader = GradientFileReader::open(path)?;
    let side = sidecar_path(path);
    let manifest = if side.exists() {
        let m = ShapeManifest::from_text(&std::fs::read_to_string(&side)?)?;
        if m.total() != reader.m() {
            return Err(FedsimError::Config(format!(
                "{} describes {} parameters, gradient file has {}",
                side.display(),
                m.total(),
                reader.m()
            )));
        }
        Some(m)
    } else {
        None
    };
    Ok(GradientFile {
        path: path.to_path_buf(),
        reader,
        manifest,
        buf: Vec::new(),
    })
}

impl GradientFile {
    pub fn manifest(&self) -> Option<&ShapeManifest> {
        self.manifest.as_ref()
    }

    /// Next record, widened to f64.
    pub fn next_record(&mut self) -> Result<Option<Vec<f64>>, FedsimError> {
        if self.reader.read_into(&mut self.buf)? {
            Ok(Some(self.buf.iter().map(|&x| x as f64).collect()))
        } else {
            Ok(None)
        }
    }
}

impl GradientSource for GradientFile {
    fn dim(&self) -> usize {
        self.reader.m()
    }

    fn examples(&self) -> usize {
        self.reader.record_count()
    }

    fn start_epoch(&mut self, epoch: usize) -> Result<(), FedsimError> {
        if epoch > 0 || self.reader.remaining() != self.reader.record_count() {
            self.reader = GradientFileReader::open(&self.path)?;
        }
        Ok(())
    }

    fn next_batch(
        &mut self,
        _theta: &[f64],
        b: usize,
    ) -> Result<Option<Vec<Vec<f64>>>, FedsimError> {
        if self.reader.remaining() < b {
            return Ok(None);
        }
        let mut batch = Vec::with_capacity(b);
        for _ in 0..b {
            batch.push(self.next_record()?.expect("remaining count checked"));
        }
        Ok(Some(batch))
    }
}
