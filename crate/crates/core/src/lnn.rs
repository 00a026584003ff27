//! Layered sigmoid networks trained by L1-regularized stochastic backpropagation.
//!
//! Layers are indexed from 0 (input) to `depth() - 1` (output). `weights[l]`
//! connects layer `l` to layer `l + 1` and is stored row-major with one row per
//! source unit. `biases[l]` belongs to the units of layer `l + 1`, i.e. a bias
//! is owned by the unit whose pre-activation it shifts.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::features::UnitRef;
use crate::rng;
use crate::{Error, Result};

/// Version tag written into serialized networks.
pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// Variance of the Gaussian used for initial weights and biases.
pub const INIT_VARIANCE: f64 = 0.5;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sign with `sgn(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// A weight that survived [`Network::prune_view`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Source layer; the target unit lives in `layer + 1`.
    pub layer: usize,
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Per-sample derivative of the regularized objective.
///
/// A step moves every parameter by `-eta` times the matching entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

fn check_architecture(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 3 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least 3 layers, got {}",
            layer_sizes.len()
        )));
    }
    if let Some(pos) = layer_sizes.iter().position(|&n| n == 0) {
        return Err(Error::InvalidArchitecture(format!("layer {pos} has no units")));
    }
    Ok(())
}

impl Network {
    /// Draws every weight and bias i.i.d. from N(0, 0.5) (variance 0.5).
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_architecture(layer_sizes)?;
        let mut rng = rng::seeded(seed);
        let normal = Normal::new(0.0, INIT_VARIANCE.sqrt()).expect("valid normal");
        let weights = layer_sizes
            .windows(2)
            .map(|w| (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let biases = layer_sizes[1..]
            .iter()
            .map(|&n| (0..n).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        Ok(Network {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// A network with every parameter set to zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_architecture(layer_sizes)?;
        Ok(Network {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// Builds a network from explicit row-major weights and per-layer biases,
    /// validating every shape.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_architecture(&layer_sizes)?;
        if weights.len() != layer_sizes.len() - 1 {
            return Err(Error::DimensionMismatch {
                what: "weight matrices",
                expected: layer_sizes.len() - 1,
                actual: weights.len(),
            });
        }
        if biases.len() != layer_sizes.len() - 1 {
            return Err(Error::DimensionMismatch {
                what: "bias vectors",
                expected: layer_sizes.len() - 1,
                actual: biases.len(),
            });
        }
        for (l, w) in weights.iter().enumerate() {
            let expected = layer_sizes[l] * layer_sizes[l + 1];
            if w.len() != expected {
                return Err(Error::DimensionMismatch {
                    what: "weight matrix entries",
                    expected,
                    actual: w.len(),
                });
            }
        }
        for (l, b) in biases.iter().enumerate() {
            if b.len() != layer_sizes[l + 1] {
                return Err(Error::DimensionMismatch {
                    what: "bias entries",
                    expected: layer_sizes[l + 1],
                    actual: b.len(),
                });
            }
        }
        let net = Network {
            layer_sizes,
            weights,
            biases,
        };
        if !net.is_finite() {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn depth(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_weights(&self) -> usize {
        self.weights.iter().map(Vec::len).sum()
    }

    pub fn n_biases(&self) -> usize {
        self.biases.iter().map(Vec::len).sum()
    }

    /// Total number of hidden units across all hidden layers.
    pub fn n_hidden(&self) -> usize {
        self.layer_sizes[1..self.depth() - 1].iter().sum()
    }

    /// Hidden units in layer-major order (shallowest layer first).
    pub fn hidden_units(&self) -> Vec<UnitRef> {
        (1..self.depth() - 1)
            .flat_map(|layer| {
                (0..self.layer_sizes[layer]).map(move |position| UnitRef { layer, position })
            })
            .collect()
    }

    /// Row-major weights from layer `l` to layer `l + 1`.
    pub fn weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    /// Biases of the units in layer `l + 1`.
    pub fn biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    pub fn weight(&self, l: usize, from: usize, to: usize) -> f64 {
        self.weights[l][from * self.layer_sizes[l + 1] + to]
    }

    pub fn set_weight(&mut self, l: usize, from: usize, to: usize, value: f64) {
        let n = self.layer_sizes[l + 1];
        self.weights[l][from * n + to] = value;
    }

    pub fn set_bias(&mut self, l: usize, unit: usize, value: f64) {
        self.biases[l][unit] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flatten()
            .all(|v| v.is_finite())
    }

    /// Outputs of every layer; entry 0 is the input itself.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                what: "input vector",
                expected: self.n_inputs(),
                actual: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("input vector"));
        }
        let mut outs = Vec::with_capacity(self.depth());
        outs.push(x.to_vec());
        for l in 0..self.depth() - 1 {
            let next = self.layer_sizes[l + 1];
            let mut pre = self.biases[l].clone();
            let prev = &outs[l];
            for (i, &o) in prev.iter().enumerate() {
                let row = &self.weights[l][i * next..(i + 1) * next];
                for (p, &w) in pre.iter_mut().zip(row) {
                    *p += w * o;
                }
            }
            outs.push(pre.into_iter().map(sigmoid).collect());
        }
        Ok(outs)
    }

    /// Network output `f(x, w)`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.pop().unwrap())
    }

    /// Every weight with `|w| >= threshold`, in layer, source, target order.
    pub fn prune_view(&self, threshold: f64) -> Vec<Edge> {
        let mut edges = Vec::new();
        for (layer, w) in self.weights.iter().enumerate() {
            let next = self.layer_sizes[layer + 1];
            for (idx, &weight) in w.iter().enumerate() {
                if weight.abs() >= threshold {
                    edges.push(Edge {
                        layer,
                        from: idx / next,
                        to: idx % next,
                        weight,
                    });
                }
            }
        }
        edges
    }

    /// Sum of absolute connection weights; biases are not penalized.
    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w.abs()).sum()
    }

    /// Derivative of the per-sample objective `½‖y − f(x)‖² + λ Σ|ω|` as used by
    /// backpropagation, with `ε₁` added to every sigmoid derivative.
    ///
    /// All deltas are computed from the current parameters.
    pub fn gradient(&self, x: &[f64], y: &[f64], lambda: f64, epsilon1: f64) -> Result<Gradient> {
        if y.len() != self.n_outputs() {
            return Err(Error::DimensionMismatch {
                what: "target vector",
                expected: self.n_outputs(),
                actual: y.len(),
            });
        }
        let outs = self.forward(x)?;
        let last = self.depth() - 1;

        // deltas[d] holds the deltas of layer d; layer 0 has none.
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); self.depth()];
        deltas[last] = outs[last]
            .iter()
            .zip(y)
            .map(|(&o, &t)| (o - t) * (o * (1.0 - o) + epsilon1))
            .collect();
        for d in (1..last).rev() {
            let next = self.layer_sizes[d + 1];
            let w = &self.weights[d];
            deltas[d] = outs[d]
                .iter()
                .enumerate()
                .map(|(j, &o)| {
                    let back: f64 = w[j * next..(j + 1) * next]
                        .iter()
                        .zip(&deltas[d + 1])
                        .map(|(w, dk)| w * dk)
                        .sum();
                    back * (o * (1.0 - o) + epsilon1)
                })
                .collect();
        }

        let weights = (0..last)
            .map(|l| {
                let next = self.layer_sizes[l + 1];
                self.weights[l]
                    .iter()
                    .enumerate()
                    .map(|(idx, &w)| deltas[l + 1][idx % next] * outs[l][idx / next] + lambda * sgn(w))
                    .collect()
            })
            .collect();
        let biases = deltas.into_iter().skip(1).collect();
        Ok(Gradient { weights, biases })
    }

    /// One stochastic steepest-descent update on a single sample.
    ///
    /// Parameters are only replaced if every updated value is finite.
    pub fn backprop_step(
        &mut self,
        x: &[f64],
        y: &[f64],
        eta: f64,
        lambda: f64,
        epsilon1: f64,
    ) -> Result<()> {
        if !(eta > 0.0) {
            return Err(Error::param(format!("step size must be positive, got {eta}")));
        }
        let grad = self.gradient(x, y, lambda, epsilon1)?;
        let step = |params: &[Vec<f64>], g: &[Vec<f64>]| -> Vec<Vec<f64>> {
            params
                .iter()
                .zip(g)
                .map(|(p, g)| p.iter().zip(g).map(|(p, g)| p - eta * g).collect())
                .collect()
        };
        let weights = step(&self.weights, &grad.weights);
        let biases = step(&self.biases, &grad.biases);
        if !weights.iter().chain(&biases).flatten().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                step: 0,
                trace: Vec::new(),
            });
        }
        self.weights = weights;
        self.biases = biases;
        Ok(())
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.n_inputs() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                what: "dataset inputs",
                expected: self.n_inputs(),
                actual: data.n_inputs(),
            });
        }
        if data.n_outputs() != self.n_outputs() {
            return Err(Error::DimensionMismatch {
                what: "dataset outputs",
                expected: self.n_outputs(),
                actual: data.n_outputs(),
            });
        }
        Ok(())
    }

    /// Mean squared Euclidean output error `E(w)` over the dataset.
    pub fn training_error(&self, data: &Dataset) -> Result<f64> {
        self.check_dataset(data)?;
        let mut total = 0.0;
        for (x, y) in data.samples() {
            let f = self.predict(x)?;
            total += f.iter().zip(y).map(|(f, y)| (y - f) * (y - f)).sum::<f64>();
        }
        Ok(total / data.len() as f64)
    }

    /// `H(w) = (n₁/2)·E(w) + λ·Σ|ω|`.
    pub fn objective(&self, data: &Dataset, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::param(format!("lambda must be >= 0, got {lambda}")));
        }
        let e = self.training_error(data)?;
        Ok(data.len() as f64 / 2.0 * e + lambda * self.l1_norm())
    }

    /// Trains with single-sample updates for the configured number of steps.
    ///
    /// The returned trace holds `E(w)` after every `n₁` steps.
    pub fn train(&mut self, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
        cfg.validate()?;
        self.check_dataset(data)?;
        let n1 = data.len();
        let total = cfg.total_steps(n1);
        let mut order = SampleOrder::new(cfg.order, data, cfg.seed)?;
        let mut trace = Vec::new();
        for t in 1..=total {
            let n = order.next_index();
            let (x, y) = data.sample(n);
            let eta = cfg.eta(t, n1);
            match self.backprop_step(x, y, eta, cfg.lambda, cfg.epsilon1) {
                Ok(()) => {}
                Err(Error::Diverged { .. }) => return Err(Error::Diverged { step: t, trace }),
                Err(e) => return Err(e),
            }
            if t % n1 as u64 == 0 {
                let e = self.training_error(data)?;
                if !e.is_finite() {
                    return Err(Error::Diverged { step: t, trace });
                }
                trace.push(e);
            }
        }
        Ok(trace)
    }

    pub fn to_document(&self, training: Option<TrainingMeta>) -> NetworkDocument {
        NetworkDocument {
            version: NETWORK_FORMAT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            weights: self
                .weights
                .iter()
                .enumerate()
                .map(|(l, w)| w.chunks(self.layer_sizes[l + 1]).map(<[f64]>::to_vec).collect())
                .collect(),
            biases: self.biases.clone(),
            training,
        }
    }

    pub fn from_document(doc: NetworkDocument) -> Result<Self> {
        if doc.version != NETWORK_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported network format version {}",
                doc.version
            )));
        }
        let weights = doc.weights.into_iter().map(|rows| rows.concat()).collect();
        Network::from_parts(doc.layer_sizes, weights, doc.biases)
    }
}

/// Serialized form of a [`Network`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    /// `weights[l][i][j]`: from unit `i` of layer `l` to unit `j` of layer `l + 1`.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `biases[l][j]`: bias of unit `j` in layer `l + 1`.
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub config: TrainConfig,
    pub steps: u64,
    pub final_error: f64,
    pub error_trace: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPolicy {
    /// Samples drawn i.i.d. uniformly.
    UniformRandom,
    /// One sample of every class in turn: class 1 sample 1, class 2 sample 1,
    /// ..., class 1 sample 2, ...; wraps around per class.
    CyclicByClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epsilon1: f64,
    /// Mean number of updates per training sample.
    pub a1: f64,
    pub eta0: f64,
    pub seed: u64,
    /// Defaults to `a1 · n1` when unset.
    #[serde(default)]
    pub total_steps: Option<u64>,
    pub order: OrderPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.0,
            epsilon1: 0.001,
            a1: 100.0,
            eta0: 0.7,
            seed: 0,
            total_steps: None,
            order: OrderPolicy::UniformRandom,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.epsilon1 > 0.0) {
            return Err(Error::param(format!("epsilon1 must be > 0, got {}", self.epsilon1)));
        }
        if !(self.a1 > 0.0) || !self.a1.is_finite() {
            return Err(Error::param(format!("a1 must be > 0, got {}", self.a1)));
        }
        if !(self.eta0 > 0.0) || !self.eta0.is_finite() {
            return Err(Error::param(format!("eta0 must be > 0, got {}", self.eta0)));
        }
        Ok(())
    }

    pub fn total_steps(&self, n1: usize) -> u64 {
        self.total_steps
            .unwrap_or_else(|| (self.a1 * n1 as f64).round() as u64)
    }

    /// Step size at iteration `t` (1-based): `η₀·a₁n₁ / (a₁n₁ + 5t)`.
    pub fn eta(&self, t: u64, n1: usize) -> f64 {
        let scale = self.a1 * n1 as f64;
        self.eta0 * scale / (scale + 5.0 * t as f64)
    }
}

enum SampleOrder {
    Uniform { rng: Box<rng::Rng>, n: usize },
    Cyclic { classes: Vec<Vec<usize>>, step: usize },
}

impl SampleOrder {
    fn new(policy: OrderPolicy, data: &Dataset, seed: u64) -> Result<Self> {
        match policy {
            OrderPolicy::UniformRandom => Ok(SampleOrder::Uniform {
                rng: Box::new(rng::seeded(seed)),
                n: data.len(),
            }),
            OrderPolicy::CyclicByClass => {
                let labels = data.labels().ok_or_else(|| {
                    Error::param("cyclic-by-class order requires class labels")
                })?;
                let n_classes = labels.iter().max().map_or(0, |m| m + 1);
                let mut classes = vec![Vec::new(); n_classes];
                for (idx, &label) in labels.iter().enumerate() {
                    classes[label].push(idx);
                }
                classes.retain(|c| !c.is_empty());
                Ok(SampleOrder::Cyclic { classes, step: 0 })
            }
        }
    }

    fn next_index(&mut self) -> usize {
        match self {
            SampleOrder::Uniform { rng, n } => rng.random_range(0..*n),
            SampleOrder::Cyclic { classes, step } => {
                let class = &classes[*step % classes.len()];
                let idx = class[(*step / classes.len()) % class.len()];
                *step += 1;
                idx
            }
        }
    }
}
