//! Dense feed-forward ReLU networks.
//!
//! An [`AffineNetwork`] is a chain of [`AffineLayer`]s with a ReLU between
//! every pair of consecutive layers and no activation after the last one.
//! Convolutions are expected to be materialized as dense layers before they
//! reach this module, so every layer shares the same code path for inference,
//! training, bound propagation and spectral-norm estimation.

mod rescale;
mod train;

pub use rescale::bilinear_rescale_matrix;
pub use train::{
    loss_and_gradients, train_classifier, EpochStats, Gradients, NoRegularizer, Regularizer,
    TrainConfig, Trainer,
};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{check_dim, Error, Result};

/// One affine map `x -> W x + b` with `W` of shape `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl AffineLayer {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        check_dim(weight.nrows(), bias.len())?;
        if weight.ncols() == 0 || weight.nrows() == 0 {
            return Err(Error::InvalidArgument("layer dimensions must be positive".into()));
        }
        if !weight.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("layer parameters must be finite".into()));
        }
        Ok(Self { weight, bias })
    }

    /// Layer with zero bias.
    pub fn linear(weight: Array2<f64>) -> Result<Self> {
        let bias = Array1::zeros(weight.nrows());
        Self::new(weight, bias)
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let weight = Array2::from_shape_fn((out_dim, in_dim), |_| dist.sample(rng));
        Self { weight, bias: Array1::zeros(out_dim) }
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weight, &mut self.bias)
    }

    /// Returns the layer `x -> W (P x)` for a bias-free linear map `P`.
    pub fn precompose(&self, prefix: &Array2<f64>) -> Result<Self> {
        check_dim(self.in_dim(), prefix.nrows())?;
        Self::new(self.weight.dot(prefix), self.bias.clone())
    }
}

/// Affine layers with ReLU between consecutive layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineNetwork {
    layers: Vec<AffineLayer>,
}

impl AffineNetwork {
    pub fn new(layers: Vec<AffineLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].out_dim(), pair[1].in_dim())?;
        }
        Ok(Self { layers })
    }

    /// Randomly initialized network with layer widths `dims[0] -> dims[1] -> ...`.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer widths {dims:?}")));
        }
        let layers = dims.windows(2).map(|w| AffineLayer::glorot(w[0], w[1], rng)).collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [AffineLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<AffineLayer> {
        self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Splits off the last layer: `(body, head)`. The body's output is the
    /// pre-activation the head's ReLU would see.
    pub fn split_head(mut self) -> Result<(AffineNetwork, AffineLayer)> {
        if self.layers.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least two layers to split off a head".into(),
            ));
        }
        let head = self.layers.pop().expect("non-empty");
        Ok((self, head))
    }

    /// Stacks `other` after `self` with a ReLU between them.
    pub fn then(mut self, other: AffineNetwork) -> Result<Self> {
        check_dim(self.output_dim(), other.input_dim())?;
        self.layers.extend(other.layers);
        Ok(self)
    }

    /// `other ∘ self` with no activation at the seam: the last layer of `self`
    /// and the first of `other` are multiplied into one affine layer.
    pub fn compose(mut self, other: AffineNetwork) -> Result<Self> {
        check_dim(self.output_dim(), other.input_dim())?;
        let mut rest = other.layers.into_iter();
        let first = rest.next().expect("networks are non-empty");
        let last = self.layers.pop().expect("networks are non-empty");
        let weight = first.weight.dot(&last.weight);
        let bias = first.weight.dot(&last.bias) + &first.bias;
        self.layers.push(AffineLayer::new(weight, bias)?);
        self.layers.extend(rest);
        Ok(self)
    }

    /// Folds a fixed linear input transform into the first layer.
    pub fn precompose(&self, prefix: &Array2<f64>) -> Result<Self> {
        let mut layers = self.layers.clone();
        layers[0] = layers[0].precompose(prefix)?;
        Self::new(layers)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.forward_view(ArrayView1::from(x)).to_vec())
    }

    pub(crate) fn forward_view(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut h = self.layers[0].apply(x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(relu);
            h = layer.apply(h.view());
        }
        h
    }

    /// Row-wise forward pass over a `(batch, input_dim)` matrix.
    pub fn forward_batch(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        check_dim(self.input_dim(), inputs.ncols())?;
        let mut h = affine_rows(&self.layers[0], inputs);
        for layer in &self.layers[1..] {
            h.mapv_inplace(relu);
            h = affine_rows(layer, &h);
        }
        Ok(h)
    }

    /// Index of the largest output, ties broken toward the smaller index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Gradient of `cotangent · net(x)` with respect to `x`.
    pub fn input_gradient(&self, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.output_dim(), cotangent.len())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = self.layers[0].apply(ArrayView1::from(x));
        for layer in &self.layers[1..] {
            pre.push(h.clone());
            h.mapv_inplace(relu);
            h = layer.apply(h.view());
        }
        let mut g = Array1::from(cotangent.to_vec());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            g = layer.weight.t().dot(&g);
            if k > 0 {
                g.zip_mut_with(&pre[k - 1], |gi, &z| {
                    if z <= 0.0 {
                        *gi = 0.0
                    }
                });
            }
        }
        Ok(g.to_vec())
    }
}

pub(crate) fn affine_rows(layer: &AffineLayer, inputs: &Array2<f64>) -> Array2<f64> {
    let mut out = inputs.dot(&layer.weight.t());
    out += &layer.bias.view().insert_axis(Axis(0));
    out
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Index of the maximum, smallest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_forward(net: &AffineNetwork, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (k, layer) in net.layers().iter().enumerate() {
            if k > 0 {
                for v in h.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            let w = layer.weight();
            let mut next = vec![0.0; layer.out_dim()];
            for (i, out) in next.iter_mut().enumerate() {
                let mut acc = layer.bias()[i];
                for (j, &xj) in h.iter().enumerate() {
                    acc += w[[i, j]] * xj;
                }
                *out = acc;
            }
            h = next;
        }
        h
    }

    #[test]
    fn compose_merges_the_seam_without_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = AffineNetwork::random(&[4, 6, 3], &mut rng).unwrap();
        let clf = AffineNetwork::random(&[3, 5, 2], &mut rng).unwrap();
        let joined = enc.clone().compose(clf.clone()).unwrap();
        assert_eq!(joined.depth(), 3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let direct = clf.forward(&enc.forward(&x).unwrap()).unwrap();
            let merged = joined.forward(&x).unwrap();
            for (a, b) in direct.iter().zip(&merged) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_layer_passes_through() {
        let net = AffineNetwork::new(vec![AffineLayer::linear(Array2::eye(2)).unwrap()]).unwrap();
        assert_eq!(net.forward(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn relu_kills_negative_preactivation() {
        let l1 = AffineLayer::linear(Array2::eye(1)).unwrap();
        let l2 = AffineLayer::linear(array![[-1.0]]).unwrap();
        let net = AffineNetwork::new(vec![l1, l2]).unwrap();
        let out = net.forward(&[-5.0]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn matches_straight_line_reevaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut net = AffineNetwork::random(&[5, 9, 7, 3], &mut rng).unwrap();
            for layer in net.layers_mut() {
                let (_, b) = layer.params_mut();
                b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = net.forward(&x).unwrap();
            let slow = naive_forward(&net, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
            }
            let batch = Array2::from_shape_vec((1, 5), x.clone()).unwrap();
            let rows = net.forward_batch(&batch).unwrap();
            for (a, b) in rows.row(0).iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn rejects_wrong_input_length() {
        let net = AffineNetwork::new(vec![AffineLayer::linear(Array2::eye(3)).unwrap()]).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn rejects_unchained_layers() {
        let a = AffineLayer::linear(Array2::zeros((3, 2))).unwrap();
        let b = AffineLayer::linear(Array2::zeros((1, 4))).unwrap();
        assert!(AffineNetwork::new(vec![a, b]).is_err());
    }

    #[test]
    fn rejects_nonfinite_parameters() {
        assert!(AffineLayer::linear(array![[f64::NAN]]).is_err());
        assert!(AffineLayer::new(array![[1.0]], array![1.0, 2.0]).is_err());
    }

    #[test]
    fn glorot_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = AffineLayer::glorot(10, 20, &mut rng);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(layer.weight().iter().all(|w| w.abs() <= limit));
        assert!(layer.bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = AffineNetwork::random(&[4, 6, 2], &mut rng).unwrap();
        let x = [0.3, -0.2, 0.5, 0.1];
        let c = [1.0, -1.0];
        let g = net.input_gradient(&x, &c).unwrap();
        let f = |x: &[f64]| {
            let y = net.forward(x).unwrap();
            y[0] - y[1]
        };
        for i in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (f(&xp) - f(&xm)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6, "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn positively_homogeneous_without_bias(seed in 0u64..1000, a in 0.0f64..5.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let net = AffineNetwork::random(&[3, 5, 4, 2], &mut rng).unwrap();
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
                let lhs = net.forward(&scaled).unwrap();
                let rhs = net.forward(&x).unwrap();
                for (l, r) in lhs.iter().zip(&rhs) {
                    prop_assert!((l - a * r).abs() <= 1e-9 * (1.0 + r.abs() * a));
                }
            }

            #[test]
            fn finite_on_finite_inputs(seed in 0u64..1000, scale in -1e3f64..1e3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let net = AffineNetwork::random(&[3, 8, 2], &mut rng).unwrap();
                let x = [scale, -scale, 0.5 * scale];
                prop_assert!(net.forward(&x).unwrap().iter().all(|v| v.is_finite()));
            }
        }
    }
}
