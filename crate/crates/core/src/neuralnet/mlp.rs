use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense network with ReLU hidden layers and an identity output layer.
/// Parameters live in a caller-owned flat slice: for each layer the weight
/// matrix (out x in, row-major) followed by the bias.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    /// `[input, hidden..., output]`.
    pub sizes: Vec<usize>,
}

/// Layer inputs and pre-activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.pre.last().expect("at least one layer")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s >= 1), "bad layer sizes {sizes:?}");
        Self { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layer<'a>(&self, params: &'a [f64], k: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let offset: usize = self.sizes[..=k].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
        let w = ArrayView2::from_shape((fan_out, fan_in), &params[offset..offset + fan_in * fan_out]).unwrap();
        let b = ArrayView1::from(&params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out]);
        (w, b)
    }

    fn layer_offset(&self, k: usize) -> usize {
        self.sizes[..=k].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// He-uniform hidden layers; the output layer is additionally scaled by `output_gain`.
    pub fn init(&self, params: &mut [f64], output_gain: f64, rng: &mut impl Rng) {
        assert_eq!(params.len(), self.num_params());
        for k in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
            let offset = self.layer_offset(k);
            let mut bound = (6.0 / fan_in as f64).sqrt();
            if k + 1 == self.num_layers() {
                bound *= output_gain;
            }
            for p in &mut params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-bound..=bound);
            }
            params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out].fill(0.0);
        }
    }

    pub fn forward(&self, params: &[f64], x: ArrayView2<f64>) -> MlpCache {
        assert_eq!(params.len(), self.num_params());
        assert_eq!(x.ncols(), self.input_dim());
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut pre = Vec::with_capacity(self.num_layers());
        let mut a = x.to_owned();
        for k in 0..self.num_layers() {
            let (w, b) = self.layer(params, k);
            let z = a.dot(&w.t()) + &b;
            let next = if k + 1 < self.num_layers() { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        MlpCache { inputs, pre }
    }

    /// Accumulates d(loss)/d(params) into `grad` and returns d(loss)/d(input).
    pub fn backward(&self, params: &[f64], cache: &MlpCache, grad_out: ArrayView2<f64>, grad: &mut [f64]) -> Array2<f64> {
        assert_eq!(grad.len(), self.num_params());
        let mut dz = grad_out.to_owned();
        for k in (0..self.num_layers()).rev() {
            if k + 1 < self.num_layers() {
                dz.zip_mut_with(&cache.pre[k], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let (w, _) = self.layer(params, k);
            let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
            let offset = self.layer_offset(k);
            let dw = dz.t().dot(&cache.inputs[k]);
            let db: Array1<f64> = dz.sum_axis(Axis(0));
            for (g, v) in grad[offset..offset + fan_in * fan_out].iter_mut().zip(dw.iter()) {
                *g += v;
            }
            for (g, v) in grad[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out].iter_mut().zip(db.iter()) {
                *g += v;
            }
            dz = dz.dot(&w);
        }
        dz
    }
}
