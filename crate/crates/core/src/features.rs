//! Correlation feature vectors of hidden units and their sign alignment.
//!
//! Row `k` of a [`FeatureMatrix`] describes hidden unit `k`: its Pearson
//! correlation with every input dimension followed by its correlation with
//! every output dimension. Hidden units of all hidden layers are pooled,
//! shallowest layer first.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::lnn::Network;
use crate::rng;
use crate::{Error, Result};

/// Location of a hidden unit: layer index (input layer is 0) and position
/// within the layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitRef {
    pub layer: usize,
    pub position: usize,
}

/// Mean-centred sample vector.
struct Centered {
    dev: Vec<f64>,
    norm: f64,
}

impl Centered {
    /// `None` when every sample is identical (zero variance).
    fn new(values: impl ExactSizeIterator<Item = f64> + Clone) -> Option<Self> {
        let n = values.len();
        if n < 2 {
            return None;
        }
        let mut it = values.clone();
        let first = it.next().unwrap();
        if it.all(|v| v == first) {
            return None;
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let dev: Vec<f64> = values.map(|v| v - mean).collect();
        let norm = dev.iter().map(|d| d * d).sum::<f64>().sqrt();
        (norm > 0.0 && norm.is_finite()).then_some(Centered { dev, norm })
    }

    fn correlation(&self, other: &Centered) -> f64 {
        let cov: f64 = self.dev.iter().zip(&other.dev).map(|(a, b)| a * b).sum();
        (cov / (self.norm * other.norm)).clamp(-1.0, 1.0)
    }
}

/// Pearson correlation with population moments.
///
/// Returns `None` when either argument has zero variance or fewer than two
/// samples.
///
/// # Panics
/// If the lengths differ.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson arguments must have equal length");
    let a = Centered::new(a.iter().copied())?;
    let b = Centered::new(b.iter().copied())?;
    Some(a.correlation(&b))
}

/// Activations of all hidden units, one row per sample, one column per unit in
/// [`Network::hidden_units`] order.
pub fn unit_outputs(net: &Network, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    if data.n_inputs() != net.n_inputs() {
        return Err(Error::DimensionMismatch {
            what: "dataset inputs",
            expected: net.n_inputs(),
            actual: data.n_inputs(),
        });
    }
    data.inputs()
        .iter()
        .map(|x| {
            let outs = net.forward(x)?;
            Ok(outs[1..net.depth() - 1].concat())
        })
        .collect()
}

/// Which output values the output-side correlations are taken against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputSource {
    /// The network's own output units.
    #[default]
    Model,
    /// The dataset targets.
    Targets,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_inputs: usize,
    n_outputs: usize,
    units: Vec<UnitRef>,
    rows: Vec<Vec<f64>>,
    /// `true` where the correlation was undefined and the entry set to 0.
    zero_variance: Vec<Vec<bool>>,
}

impl FeatureMatrix {
    /// Wraps arbitrary rows; units are numbered `(1, k)` and nothing is flagged.
    pub fn from_rows(rows: Vec<Vec<f64>>, n_inputs: usize) -> Result<Self> {
        let dim = rows.first().map_or(n_inputs, Vec::len);
        if dim < n_inputs {
            return Err(Error::DimensionMismatch {
                what: "feature row length",
                expected: n_inputs,
                actual: dim,
            });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "feature row length",
                expected: dim,
                actual: r.len(),
            });
        }
        let units = (0..rows.len()).map(|position| UnitRef { layer: 1, position }).collect();
        let zero_variance = rows.iter().map(|r| vec![false; r.len()]).collect();
        Ok(FeatureMatrix {
            n_inputs,
            n_outputs: dim - n_inputs,
            units,
            rows,
            zero_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn dim(&self) -> usize {
        self.n_inputs + self.n_outputs
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn units(&self) -> &[UnitRef] {
        &self.units
    }

    pub fn zero_variance(&self) -> &[Vec<bool>] {
        &self.zero_variance
    }

    pub fn flagged_count(&self) -> usize {
        self.zero_variance.iter().flatten().filter(|&&f| f).count()
    }

    /// Entrywise absolute values, the non-negative input of the NNMF baseline.
    pub fn abs_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|v| v.abs()).collect())
            .collect()
    }

    pub fn cosine_sum(&self) -> f64 {
        cosine_sum(&self.rows)
    }

    /// CSV with `layer,position,in_1..,out_1..` columns, one row per unit.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header = ["layer".to_string(), "position".to_string()]
            .into_iter()
            .chain((1..=self.n_inputs).map(|i| format!("in_{i}")))
            .chain((1..=self.n_outputs).map(|j| format!("out_{j}")));
        w.write_record(header)?;
        for (unit, row) in self.units.iter().zip(&self.rows) {
            w.write_record(
                [unit.layer.to_string(), unit.position.to_string()]
                    .into_iter()
                    .chain(row.iter().map(f64::to_string)),
            )?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Correlation feature vectors with outputs taken from the network itself.
pub fn feature_vectors(net: &Network, data: &Dataset) -> Result<FeatureMatrix> {
    feature_vectors_with(net, data, OutputSource::Model)
}

pub fn feature_vectors_with(net: &Network, data: &Dataset, source: OutputSource) -> Result<FeatureMatrix> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.n_outputs() != net.n_outputs() {
        return Err(Error::DimensionMismatch {
            what: "dataset outputs",
            expected: net.n_outputs(),
            actual: data.n_outputs(),
        });
    }
    let hidden = unit_outputs(net, data)?;
    let model_outputs;
    let outputs: &[Vec<f64>] = match source {
        OutputSource::Targets => data.outputs(),
        OutputSource::Model => {
            model_outputs = data
                .inputs()
                .iter()
                .map(|x| net.predict(x))
                .collect::<Result<Vec<_>>>()?;
            &model_outputs
        }
    };

    let column = |rows: &[Vec<f64>], c: usize| Centered::new(rows.iter().map(move |r| r[c]));
    let inputs: Vec<_> = (0..net.n_inputs()).map(|i| column(data.inputs(), i)).collect();
    let outs: Vec<_> = (0..net.n_outputs()).map(|j| column(outputs, j)).collect();

    let k0 = net.n_hidden();
    let mut rows = Vec::with_capacity(k0);
    let mut zero_variance = Vec::with_capacity(k0);
    for k in 0..k0 {
        let unit = column(&hidden, k);
        let (row, flags): (Vec<f64>, Vec<bool>) = inputs
            .iter()
            .chain(&outs)
            .map(|other| match (&unit, other) {
                (Some(u), Some(o)) => (u.correlation(o), false),
                _ => (0.0, true),
            })
            .unzip();
        rows.push(row);
        zero_variance.push(flags);
    }
    Ok(FeatureMatrix {
        n_inputs: net.n_inputs(),
        n_outputs: net.n_outputs(),
        units: net.hidden_units(),
        rows,
        zero_variance,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let unit: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let n = norm(r);
            if n > 0.0 {
                r.iter().map(|v| v / n).collect()
            } else {
                vec![0.0; r.len()]
            }
        })
        .collect();
    unit.iter()
        .map(|a| {
            unit.iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect()
}

/// Sum of cosine similarities over unordered pairs of rows; zero rows
/// contribute nothing.
pub fn cosine_sum(rows: &[Vec<f64>]) -> f64 {
    let c = cosine_matrix(rows);
    let mut total = 0.0;
    for k in 0..c.len() {
        for l in k + 1..c.len() {
            total += c[k][l];
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub iteration: usize,
    pub unit: usize,
    pub flipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTrace {
    pub iterations: usize,
    pub initial: f64,
    /// Pairwise cosine sum after each iteration.
    pub cosine_sum_series: Vec<f64>,
    pub flips: Vec<FlipRecord>,
}

impl AlignmentTrace {
    pub fn flip_count(&self) -> usize {
        self.flips.iter().filter(|f| f.flipped).count()
    }

    pub fn final_sum(&self) -> f64 {
        self.cosine_sum_series.last().copied().unwrap_or(self.initial)
    }

    /// `iteration,cosine_sum` rows; iteration 0 is the starting value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "cosine_sum"])?;
        w.write_record(["0".to_string(), self.initial.to_string()])?;
        for (a, s) in self.cosine_sum_series.iter().enumerate() {
            w.write_record([(a + 1).to_string(), s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Randomized sign alignment.
///
/// Each of `iterations` rounds picks a unit uniformly at random and negates
/// its feature vector if the sum of its cosine similarities to all other
/// vectors is negative. All-zero rows are never flipped.
pub fn align_signs(fm: &FeatureMatrix, iterations: usize, seed: u64) -> (FeatureMatrix, AlignmentTrace) {
    let k0 = fm.len();
    let mut rows = fm.rows.clone();
    let mut cos = cosine_matrix(&rows);
    let zero: Vec<bool> = rows.iter().map(|r| r.iter().all(|&v| v == 0.0)).collect();
    let initial = cosine_sum(&rows);
    let mut total = initial;
    let mut series = Vec::with_capacity(iterations);
    let mut flips = Vec::with_capacity(iterations);
    let mut rng = rng::seeded(seed);

    for iteration in 1..=iterations {
        if k0 == 0 {
            series.push(total);
            continue;
        }
        let k = rng.random_range(0..k0);
        let s: f64 = (0..k0).filter(|&l| l != k).map(|l| cos[k][l]).sum();
        let flipped = !zero[k] && s < 0.0;
        if flipped {
            for v in rows[k].iter_mut() {
                *v = -*v;
            }
            for l in 0..k0 {
                if l != k {
                    cos[k][l] = -cos[k][l];
                    cos[l][k] = -cos[l][k];
                }
            }
            total -= 2.0 * s;
        }
        series.push(total);
        flips.push(FlipRecord {
            iteration,
            unit: k,
            flipped,
        });
    }

    let aligned = FeatureMatrix {
        rows,
        ..fm.clone()
    };
    let trace = AlignmentTrace {
        iterations,
        initial,
        cosine_sum_series: series,
        flips,
    };
    (aligned, trace)
}
