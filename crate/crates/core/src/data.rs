//! Labeled datasets and a seeded synthetic image generator.
//!
//! Images are flattened channel-major (`c, y, x`) with pixel values in `[0, 1]`.
//! Labels are zero-based class indices.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub fn dim(&self) -> usize {
        self.height * self.width * self.channels
    }
}

impl fmt::Display for ImageShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

impl FromStr for ImageShape {
    type Err = Error;

    /// Parses `HxWxC`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidArgument(format!("bad shape {s:?}, expected HxWxC")))?;
        match parts[..] {
            [h, w, c] if h > 0 && w > 0 && c > 0 => Ok(Self::new(h, w, c)),
            _ => Err(Error::InvalidArgument(format!("bad shape {s:?}, expected HxWxC"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        check_dim(inputs.nrows(), labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self { inputs, labels, num_classes })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            check_dim(dim, row.len())?;
            flat.extend_from_slice(row);
        }
        let inputs = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(inputs, labels, num_classes)
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn input(&self, i: usize) -> ArrayView1<'_, f64> {
        self.inputs.row(i)
    }

    /// First `n` examples (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            inputs: self.inputs.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }
}

/// One Gaussian blob of a class template, in unit-square coordinates.
#[derive(Debug, Clone, Copy)]
struct Blob {
    cx: f64,
    cy: f64,
    width: f64,
    amplitude: f64,
    channel: usize,
}

/// Resolution-independent description of one example; rendering it at
/// several sizes gives "the same image" at different resolutions.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub label: usize,
    blobs: Vec<Blob>,
}

/// Seeded toy classification task: each class is a fixed arrangement of
/// Gaussian blobs; instances jitter positions, widths and intensities and add
/// a class-independent distractor blob.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    channels: usize,
    templates: Vec<Vec<Blob>>,
}

const BACKGROUND: f64 = 0.1;

impl SyntheticTask {
    pub fn new(num_classes: usize, channels: usize, seed: u64) -> Result<Self> {
        if num_classes < 2 || channels == 0 {
            return Err(Error::InvalidArgument(
                "need at least two classes and one channel".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let templates = (0..num_classes)
            .map(|_| {
                (0..3)
                    .map(|_| Blob {
                        cx: rng.random_range(0.2..0.8),
                        cy: rng.random_range(0.2..0.8),
                        width: rng.random_range(0.12..0.25),
                        amplitude: rng.random_range(0.5..0.8),
                        channel: rng.random_range(0..channels),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { channels, templates })
    }

    pub fn num_classes(&self) -> usize {
        self.templates.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Draws `count` instances with labels cycling through the classes.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<SyntheticInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let label = i % self.templates.len();
                let mut blobs: Vec<Blob> = self.templates[label]
                    .iter()
                    .map(|b| Blob {
                        cx: b.cx + rng.random_range(-0.08..0.08),
                        cy: b.cy + rng.random_range(-0.08..0.08),
                        width: b.width * rng.random_range(0.8..1.25),
                        amplitude: b.amplitude * rng.random_range(0.6..1.2),
                        channel: b.channel,
                    })
                    .collect();
                blobs.push(Blob {
                    cx: rng.random_range(0.0..1.0),
                    cy: rng.random_range(0.0..1.0),
                    width: rng.random_range(0.1..0.3),
                    amplitude: rng.random_range(0.0..0.4),
                    channel: rng.random_range(0..self.channels),
                });
                SyntheticInstance { label, blobs }
            })
            .collect()
    }

    /// Renders one instance by sampling the blob field at pixel centers.
    pub fn render_one(&self, instance: &SyntheticInstance, shape: ImageShape) -> Result<Vec<f64>> {
        check_dim(self.channels, shape.channels)?;
        let mut pixels = vec![BACKGROUND; shape.dim()];
        let plane = shape.height * shape.width;
        for y in 0..shape.height {
            let py = (y as f64 + 0.5) / shape.height as f64;
            for x in 0..shape.width {
                let px = (x as f64 + 0.5) / shape.width as f64;
                for b in &instance.blobs {
                    let d2 = (px - b.cx).powi(2) + (py - b.cy).powi(2);
                    pixels[b.channel * plane + y * shape.width + x] +=
                        b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp();
                }
            }
        }
        for p in &mut pixels {
            *p = p.clamp(0.0, 1.0);
        }
        Ok(pixels)
    }

    pub fn render(&self, instances: &[SyntheticInstance], shape: ImageShape) -> Result<LabeledDataset> {
        let rows = instances
            .iter()
            .map(|inst| self.render_one(inst, shape))
            .collect::<Result<Vec<_>>>()?;
        let labels = instances.iter().map(|i| i.label).collect();
        if rows.is_empty() {
            return LabeledDataset::new(Array2::zeros((0, shape.dim())), labels, self.num_classes());
        }
        LabeledDataset::from_rows(&rows, labels, self.num_classes())
    }

    pub fn generate(&self, count: usize, shape: ImageShape, seed: u64) -> Result<LabeledDataset> {
        self.render(&self.sample(count, seed), shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_parses() {
        let s: ImageShape = "8x6x3".parse().unwrap();
        assert_eq!(s, ImageShape::new(8, 6, 3));
        assert_eq!(s.dim(), 144);
        assert_eq!(s.to_string(), "8x6x3");
        assert!("8x6".parse::<ImageShape>().is_err());
        assert!("0x6x1".parse::<ImageShape>().is_err());
    }

    #[test]
    fn dataset_invariants_enforced() {
        let inputs = Array2::zeros((2, 3));
        assert!(LabeledDataset::new(inputs.clone(), vec![0], 2).is_err());
        assert!(LabeledDataset::new(inputs.clone(), vec![0, 2], 2).is_err());
        assert!(LabeledDataset::new(inputs, vec![0, 1], 2).is_ok());
        assert!(LabeledDataset::from_rows(&[vec![1.0], vec![1.0, 2.0]], vec![0, 0], 1).is_err());
    }

    #[test]
    fn generator_is_seeded_and_in_range() {
        let task = SyntheticTask::new(4, 2, 3).unwrap();
        let shape = ImageShape::new(6, 6, 2);
        let a = task.generate(20, shape, 9).unwrap();
        let b = task.generate(20, shape, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.inputs().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(a.labels()[..5], [0, 1, 2, 3, 0]);
        assert_ne!(a, task.generate(20, shape, 10).unwrap());
    }

    #[test]
    fn same_instance_renders_consistently_across_resolutions() {
        let task = SyntheticTask::new(3, 1, 1).unwrap();
        let inst = &task.sample(1, 4)[0];
        let coarse = task.render_one(inst, ImageShape::new(4, 4, 1)).unwrap();
        let fine = task.render_one(inst, ImageShape::new(8, 8, 1)).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&coarse) - mean(&fine)).abs() < 0.05);
    }
}
