//! Feedforward networks, interval bound propagation and affine relaxations.
//!
//! Network file format (`"version": 1`):
//!
//! ```json
//! {
//!   "version": 1,
//!   "input_dim": 2,
//!   "layers": [
//!     { "weights": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], "bias": [0.0, 0.0, 0.0], "activation": "relu" },
//!     { "weights": [[1.0, -1.0, 0.5]], "bias": [0.1], "activation": "identity" }
//!   ]
//! }
//! ```
//!
//! `weights` lists rows; row `i` has one entry per output of the previous
//! layer (or per input for the first layer). The last layer must use the
//! identity activation.

mod crown;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{elem_minimal, real_mul_vec, ElemFn, Interval, IntervalError, IntervalMatrix, IntervalVector};

pub use crown::{crown_affine_bounds, ibp_relaxation, nn_inclusion, AffineRelaxation, NeuronRelaxation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("network shape error: {0}")]
    Shape(String),
    #[error("network file error: {0}")]
    Format(String),
    #[error("box {box_} is not inside the relaxation region {region}")]
    Localization { box_: String, region: String },
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => ElemFn::Sigmoid.eval(z),
            Activation::Identity => z,
        }
    }

    fn elem(&self) -> Option<ElemFn> {
        match self {
            Activation::Relu => Some(ElemFn::Relu),
            Activation::Tanh => Some(ElemFn::Tanh),
            Activation::Sigmoid => Some(ElemFn::Sigmoid),
            Activation::Identity => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: Activation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NetworkFile {
    version: u32,
    input_dim: usize,
    layers: Vec<LayerFile>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedforwardNetwork {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl FeedforwardNetwork {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Shape("a network needs at least one layer".into()));
        }
        let mut dim = input_dim;
        for (k, l) in layers.iter().enumerate() {
            if l.weights.ncols() != dim {
                return Err(NnError::Shape(format!(
                    "layer {k}: weights have {} columns but the incoming dimension is {dim}",
                    l.weights.ncols()
                )));
            }
            if l.bias.len() != l.weights.nrows() {
                return Err(NnError::Shape(format!(
                    "layer {k}: bias has length {} but weights have {} rows",
                    l.bias.len(),
                    l.weights.nrows()
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(NnError::Format(format!("layer {k}: non-finite parameter")));
            }
            dim = l.weights.nrows();
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(NnError::Shape("the last layer must use the identity activation".into()));
        }
        Ok(FeedforwardNetwork { input_dim, layers })
    }

    /// A network with no outputs, for systems without a control input.
    pub fn zero_output(input_dim: usize) -> Self {
        FeedforwardNetwork {
            input_dim,
            layers: vec![Layer { weights: DMatrix::zeros(0, input_dim), bias: vec![], activation: Activation::Identity }],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| NnError::Format(e.to_string()))?;
        if file.version != 1 {
            return Err(NnError::Format(format!("unsupported network version {}", file.version)));
        }
        let mut dim = file.input_dim;
        let mut layers = Vec::with_capacity(file.layers.len());
        for (k, l) in file.layers.into_iter().enumerate() {
            if let Some(bad) = l.weights.iter().position(|r| r.len() != dim) {
                return Err(NnError::Shape(format!(
                    "layer {k}: row {bad} has {} entries, expected {dim}",
                    l.weights[bad].len()
                )));
            }
            let rows = l.weights.len();
            let flat: Vec<f64> = l.weights.into_iter().flatten().collect();
            layers.push(Layer {
                weights: DMatrix::from_row_slice(rows, dim, &flat),
                bias: l.bias,
                activation: l.activation,
            });
            dim = rows;
        }
        FeedforwardNetwork::new(file.input_dim, layers)
    }

    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            version: 1,
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    bias: l.bias.clone(),
                    activation: l.activation,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("network serialization")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| NnError::Format(format!("{}: {e}", path.display())))?;
        FeedforwardNetwork::from_json(&text)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_dim {
            return Err(NnError::Shape(format!("input has length {}, expected {}", x.len(), self.input_dim)));
        }
        let mut xi = x.to_vec();
        for l in &self.layers {
            xi = (0..l.weights.nrows())
                .map(|i| {
                    let mut acc = 0.0;
                    for (j, v) in xi.iter().enumerate() {
                        acc += l.weights[(i, j)] * v;
                    }
                    l.activation.eval(acc + l.bias[i])
                })
                .collect();
        }
        Ok(xi)
    }

    /// Interval bounds on every pre-activation vector over `region`.
    pub fn preactivation_bounds(&self, region: &IntervalVector) -> Result<Vec<IntervalVector>, NnError> {
        if region.dim() != self.input_dim {
            return Err(NnError::Shape(format!(
                "box has dimension {}, expected {}",
                region.dim(),
                self.input_dim
            )));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut xi = region.clone();
        // Identity layers since `base` was materialized: `xi ∈ A · base + c`.
        let mut base = region.clone();
        let mut chain: Option<(IntervalMatrix, IntervalVector)> = None;
        for l in &self.layers {
            let bias = IntervalVector::point(&l.bias)?;
            let w = IntervalMatrix::from_real(&l.weights)?;
            let mut z = real_mul_vec(&l.weights, &xi)?.add(&bias)?;
            let next = match &chain {
                Some((a, c)) => {
                    let (wa, wc) = (w.matmul(a)?, w.mul_vec(c)?.add(&bias)?);
                    if let Some(tight) = z.intersect(&wa.mul_vec(&base)?.add(&wc)?)? {
                        z = tight;
                    }
                    (wa, wc)
                }
                None => (w, bias),
            };
            xi = match l.activation.elem() {
                Some(f) => {
                    chain = None;
                    let post: IntervalVector =
                        z.iter().map(|a| elem_minimal(f, a)).collect::<Result<Vec<Interval>, _>>()?.into();
                    base = post.clone();
                    post
                }
                None => {
                    chain = Some(next);
                    z.clone()
                }
            };
            out.push(z);
        }
        Ok(out)
    }

    /// Interval bound propagation.
    pub fn interval_forward(&self, region: &IntervalVector) -> Result<IntervalVector, NnError> {
        Ok(self.preactivation_bounds(region)?.pop().expect("at least one layer"))
    }
}

/// Single identity layer computing `Kx`; its relaxation is exact.
pub fn build_linear_net(k: &DMatrix<f64>) -> FeedforwardNetwork {
    let (p, n) = k.shape();
    FeedforwardNetwork {
        input_dim: n,
        layers: vec![Layer { weights: k.clone(), bias: vec![0.0; p], activation: Activation::Identity }],
    }
}

/// One-hidden-layer ReLU network computing `Kx` via `relu(Kx) - relu(-Kx)`.
pub fn build_linear_relu_net(k: &DMatrix<f64>) -> FeedforwardNetwork {
    let (p, n) = k.shape();
    let mut w0 = DMatrix::zeros(2 * p, n);
    w0.rows_mut(0, p).copy_from(k);
    w0.rows_mut(p, p).copy_from(&(-k));
    let mut w1 = DMatrix::zeros(p, 2 * p);
    for i in 0..p {
        w1[(i, i)] = 1.0;
        w1[(i, p + i)] = -1.0;
    }
    FeedforwardNetwork {
        input_dim: n,
        layers: vec![
            Layer { weights: w0, bias: vec![0.0; 2 * p], activation: Activation::Relu },
            Layer { weights: w1, bias: vec![0.0; p], activation: Activation::Identity },
        ],
    }
}

/// `N'(y) = N(T⁻¹ y)`, realized by prepending a linear layer with weights `T⁻¹`.
pub fn compose_input_transform(net: &FeedforwardNetwork, tinv: &DMatrix<f64>) -> Result<FeedforwardNetwork, NnError> {
    let n = net.input_dim;
    if tinv.shape() != (n, n) {
        return Err(NnError::Shape(format!(
            "transform is {}x{}, expected {n}x{n}",
            tinv.nrows(),
            tinv.ncols()
        )));
    }
    let mut layers = Vec::with_capacity(net.layers.len() + 1);
    layers.push(Layer { weights: tinv.clone(), bias: vec![0.0; n], activation: Activation::Identity });
    layers.extend(net.layers.iter().cloned());
    FeedforwardNetwork::new(n, layers)
}

#[cfg(test)]
mod tests {
    use nalgebra::dmatrix;

    use super::*;

    fn hand_net() -> FeedforwardNetwork {
        FeedforwardNetwork::from_json(
            r#"{"version":1,"input_dim":2,"layers":[
                {"weights":[[1,2],[-1,0.5],[0,-3]],"bias":[0.5,0,1],"activation":"relu"},
                {"weights":[[1,-2,0.25]],"bias":[-1],"activation":"identity"}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn identity_network() {
        let net = FeedforwardNetwork::new(
            3,
            vec![Layer { weights: DMatrix::identity(3, 3), bias: vec![0.0; 3], activation: Activation::Identity }],
        )
        .unwrap();
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
        let b = IntervalVector::from_pairs(&[[-1.0, 1.0], [0.0, 2.0], [3.0, 3.5]]).unwrap();
        assert_eq!(net.interval_forward(&b).unwrap(), b);
    }

    #[test]
    fn hand_computed_forward() {
        // x = (1, -1): pre = (1 - 2 + 0.5, -1 - 0.5, 3 + 1) = (-0.5, -1.5, 4)
        // relu = (0, 0, 4); out = 0.25 * 4 - 1 = 0
        assert_eq!(hand_net().forward(&[1.0, -1.0]).unwrap(), vec![0.0]);
        // x = (2, 1): pre = (4.5, -1.5, -2) -> (4.5, 0, 0); out = 3.5
        assert_eq!(hand_net().forward(&[2.0, 1.0]).unwrap(), vec![3.5]);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let net = hand_net();
        assert_eq!(FeedforwardNetwork::from_json(&net.to_json()).unwrap(), net);
        let bad_act = r#"{"version":1,"input_dim":1,"layers":[{"weights":[[1]],"bias":[0],"activation":"gelu"}]}"#;
        assert!(matches!(FeedforwardNetwork::from_json(bad_act), Err(NnError::Format(_))));
        let bad_shape = r#"{"version":1,"input_dim":2,"layers":[{"weights":[[1]],"bias":[0],"activation":"identity"}]}"#;
        assert!(matches!(FeedforwardNetwork::from_json(bad_shape), Err(NnError::Shape(_))));
        let last_relu = r#"{"version":1,"input_dim":1,"layers":[{"weights":[[1]],"bias":[0],"activation":"relu"}]}"#;
        assert!(FeedforwardNetwork::from_json(last_relu).is_err());
        let version = r#"{"version":2,"input_dim":1,"layers":[{"weights":[[1]],"bias":[0],"activation":"identity"}]}"#;
        assert!(FeedforwardNetwork::from_json(version).is_err());
    }

    #[test]
    fn linear_relu_net_reproduces_gain() {
        let k = dmatrix![6.0, 7.0];
        let net = build_linear_relu_net(&k);
        for x in [[0.3, -1.1], [-2.0, 0.5], [0.0, 0.0], [1e-3, 4.0]] {
            let kx = 6.0 * x[0] + 7.0 * x[1];
            assert_eq!(net.forward(&x).unwrap(), vec![kx]);
        }
        let zero = build_linear_relu_net(&DMatrix::zeros(2, 3));
        assert_eq!(zero.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn input_transform_composes() {
        let net = hand_net();
        let same = compose_input_transform(&net, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(same.forward(&[0.7, -0.2]).unwrap(), net.forward(&[0.7, -0.2]).unwrap());
        let t = dmatrix![2.0, 1.0; 0.0, 4.0];
        let tinv = t.clone().try_inverse().unwrap();
        let composed = compose_input_transform(&net, &tinv).unwrap();
        let x = [0.25, -0.5];
        let y = &t * nalgebra::DVector::from_column_slice(&x);
        let a = composed.forward(y.as_slice()).unwrap()[0];
        let b = net.forward(&x).unwrap()[0];
        assert!((a - b).abs() <= 1e-12);
        assert!(compose_input_transform(&net, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn zero_output_network() {
        let net = FeedforwardNetwork::zero_output(3);
        assert_eq!(net.output_dim(), 0);
        assert!(net.forward(&[1.0, 2.0, 3.0]).unwrap().is_empty());
    }

    #[test]
    fn identity_layers_are_bounded_through_the_product() {
        // K M = [2, 0]: the second input cancels
        let net = build_linear_relu_net(&dmatrix![1.0, 1.0]);
        let composed = compose_input_transform(&net, &dmatrix![1.0, 1.0; 1.0, -1.0]).unwrap();
        let y = IntervalVector::from_pairs(&[[-0.5, 1.0], [-3.0, 3.0]]).unwrap();
        let pre = composed.preactivation_bounds(&y).unwrap();
        assert_eq!((pre[1][0].lo(), pre[1][0].hi()), (-1.0, 2.0));
        assert_eq!((pre[1][1].lo(), pre[1][1].hi()), (-2.0, 1.0));
        let out = composed.interval_forward(&y).unwrap();
        assert!(out[0].contains(2.0) && out[0].contains(-1.0));
    }
}
