//! Small trainable models used as stand-ins for real AI models.
//!
//! All three share one contract: `predict` maps a record to an output
//! record, `train` fits on (input, output) pairs either from scratch
//! ([`TrainInit::Fresh`]) or by continuing from the current parameters
//! ([`TrainInit::Incremental`]). Everything is deterministic given the seed
//! and the order of the training pairs.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::value::{Record, Value, RESERVED_PREFIX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    Constant { value: Value },
    NearestCentroid,
    OnlineLinear { learning_rate: f64, epochs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainInit {
    #[default]
    Fresh,
    Incremental,
}

/// Loss after each pass over the data, plus the loss before training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub initial_loss: Option<f64>,
    pub losses: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassCentroid {
    label: Value,
    sums: Vec<f64>,
    count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct CentroidState {
    features: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    classes: Vec<ClassCentroid>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct LinearState {
    features: Vec<String>,
    /// One weight row per output parameter.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "params", rename_all = "snake_case")]
enum ModelState {
    Constant,
    Centroid(CentroidState),
    Linear(LinearState),
}

/// A toy trainable model with serializable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    kind: ModelKind,
    outputs: Vec<String>,
    seed: u64,
    state: ModelState,
}

impl ToyModel {
    pub fn new(kind: ModelKind, outputs: Vec<String>, seed: u64) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::Model("model needs at least one output parameter".into()));
        }
        let state = match &kind {
            ModelKind::Constant { .. } => ModelState::Constant,
            ModelKind::NearestCentroid => {
                if outputs.len() != 1 {
                    return Err(Error::Model("nearest centroid predicts exactly one output".into()));
                }
                ModelState::Centroid(CentroidState::default())
            }
            ModelKind::OnlineLinear { learning_rate, epochs } => {
                if !(learning_rate.is_finite() && *learning_rate > 0.0) || *epochs == 0 {
                    return Err(Error::Model(format!(
                        "online linear needs learning_rate > 0 and epochs >= 1, got {learning_rate} and {epochs}"
                    )));
                }
                ModelState::Linear(LinearState::default())
            }
        };
        Ok(Self { kind, outputs, seed, state })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn predict(&self, input: &Record) -> Result<Record> {
        match (&self.kind, &self.state) {
            (ModelKind::Constant { value }, _) => {
                Ok(self.outputs.iter().map(|o| (o.clone(), value.clone())).collect())
            }
            (_, ModelState::Centroid(st)) => {
                if st.classes.is_empty() {
                    return Err(Error::Model("nearest centroid has not been trained".into()));
                }
                let x = st.scaled(&features_of(input, &st.features)?);
                let mut best: Option<(f64, &Value)> = None;
                for c in &st.classes {
                    let centroid: Vec<f64> = c.sums.iter().map(|s| s / c.count as f64).collect();
                    let d: f64 = x.iter().zip(st.scaled(&centroid)).map(|(a, b)| (a - b) * (a - b)).sum();
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, &c.label));
                    }
                }
                let label = best.expect("non-empty classes").1.clone();
                Ok(Record::new().with(self.outputs[0].clone(), label))
            }
            (_, ModelState::Linear(st)) => {
                let x = if st.features.is_empty() { Vec::new() } else { features_of(input, &st.features)? };
                let mut out = Record::new();
                for (j, name) in self.outputs.iter().enumerate() {
                    let y = st.bias.get(j).copied().unwrap_or(0.0)
                        + st.weights.get(j).map_or(0.0, |w| dot(w, &x));
                    out.insert(name.clone(), y);
                }
                Ok(out)
            }
            (ModelKind::NearestCentroid | ModelKind::OnlineLinear { .. }, ModelState::Constant) => {
                unreachable!("state matches kind by construction")
            }
        }
    }

    /// Resets learned parameters.
    pub fn reinit(&mut self) {
        self.state = match self.state {
            ModelState::Constant => ModelState::Constant,
            ModelState::Centroid(_) => ModelState::Centroid(CentroidState::default()),
            ModelState::Linear(_) => ModelState::Linear(LinearState::default()),
        };
    }

    pub fn train(&mut self, data: &[(Record, Record)], init: TrainInit) -> Result<TrainTrace> {
        if data.is_empty() {
            return Err(Error::Model("empty training set".into()));
        }
        if init == TrainInit::Fresh {
            self.reinit();
        }
        let seed = self.seed;
        let outputs = self.outputs.clone();
        match (&self.kind, &mut self.state) {
            (ModelKind::Constant { .. }, _) => Ok(TrainTrace { initial_loss: None, losses: Vec::new(), samples: data.len() }),
            (_, ModelState::Centroid(st)) => {
                let initial_loss = (!st.classes.is_empty()).then(|| centroid_error(st, data, &outputs[0]));
                st.fit(data, &outputs[0])?;
                let loss = centroid_error(st, data, &outputs[0]);
                Ok(TrainTrace { initial_loss, losses: alloc::vec![loss], samples: data.len() })
            }
            (ModelKind::OnlineLinear { learning_rate, epochs }, ModelState::Linear(st)) => {
                st.fit(data, &outputs, *learning_rate, *epochs, seed)
            }
            _ => unreachable!("state matches kind by construction"),
        }
    }

    /// FNV-1a hash over every learned parameter.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        match &self.state {
            ModelState::Constant => h.write(b"constant"),
            ModelState::Centroid(st) => {
                st.features.iter().for_each(|f| h.write(f.as_bytes()));
                st.lo.iter().chain(&st.hi).for_each(|x| h.write(&x.to_bits().to_le_bytes()));
                for c in &st.classes {
                    c.sums.iter().for_each(|x| h.write(&x.to_bits().to_le_bytes()));
                    h.write(&(c.count as u64).to_le_bytes());
                }
            }
            ModelState::Linear(st) => {
                st.features.iter().for_each(|f| h.write(f.as_bytes()));
                st.weights.iter().flatten().chain(&st.bias).for_each(|x| h.write(&x.to_bits().to_le_bytes()));
            }
        }
        h.finish()
    }
}

/// Numeric, non-reserved inputs in record order.
fn numeric_features(input: &Record) -> Vec<String> {
    input
        .iter()
        .filter(|(k, v)| !k.starts_with(RESERVED_PREFIX) && matches!(v, Value::Number(_)))
        .map(|(k, _)| k.to_string())
        .collect()
}

fn features_of(input: &Record, names: &[String]) -> Result<Vec<f64>> {
    names
        .iter()
        .map(|n| input.number(n).ok_or_else(|| Error::Model(format!("missing numeric feature `{n}`"))))
        .collect()
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

impl CentroidState {
    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let span = self.hi[i] - self.lo[i];
                if span > 0.0 {
                    (v - self.lo[i]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn fit(&mut self, data: &[(Record, Record)], output: &str) -> Result<()> {
        if self.features.is_empty() {
            self.features = numeric_features(&data[0].0);
            self.lo = alloc::vec![f64::INFINITY; self.features.len()];
            self.hi = alloc::vec![f64::NEG_INFINITY; self.features.len()];
        }
        for (input, desired) in data {
            let x = features_of(input, &self.features)?;
            let label = desired
                .get(output)
                .ok_or_else(|| Error::Model(format!("training output lacks `{output}`")))?;
            for (i, v) in x.iter().enumerate() {
                self.lo[i] = self.lo[i].min(*v);
                self.hi[i] = self.hi[i].max(*v);
            }
            let pos = match self.classes.iter().position(|c| &c.label == label) {
                Some(p) => p,
                None => {
                    self.classes.push(ClassCentroid {
                        label: label.clone(),
                        sums: alloc::vec![0.0; x.len()],
                        count: 0,
                    });
                    self.classes.sort_by(|a, b| a.label.canonical_cmp(&b.label));
                    self.classes.iter().position(|c| &c.label == label).expect("just inserted")
                }
            };
            let c = &mut self.classes[pos];
            c.sums.iter_mut().zip(&x).for_each(|(s, v)| *s += v);
            c.count += 1;
        }
        Ok(())
    }
}

fn centroid_error(st: &CentroidState, data: &[(Record, Record)], output: &str) -> f64 {
    let probe = ToyModel {
        kind: ModelKind::NearestCentroid,
        outputs: alloc::vec![output.to_string()],
        seed: 0,
        state: ModelState::Centroid(st.clone()),
    };
    let wrong = data
        .iter()
        .filter(|(x, y)| probe.predict(x).ok().as_ref() != Some(y))
        .count();
    wrong as f64 / data.len() as f64
}

impl LinearState {
    fn init(&mut self, features: Vec<String>, outputs: usize, seed: u64) {
        let mut rng = SeededRng::new(seed);
        self.weights = (0..outputs)
            .map(|_| features.iter().map(|_| (rng.next_f64() - 0.5) * 0.02).collect())
            .collect();
        self.bias = alloc::vec![0.0; outputs];
        self.features = features;
    }

    fn targets(data: &[(Record, Record)], outputs: &[String]) -> Result<Vec<Vec<f64>>> {
        data.iter()
            .map(|(_, y)| {
                outputs
                    .iter()
                    .map(|o| y.number(o).ok_or_else(|| Error::Model(format!("training output `{o}` is not numeric"))))
                    .collect()
            })
            .collect()
    }

    fn mse(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            for (j, target) in y.iter().enumerate() {
                let e = self.bias[j] + dot(&self.weights[j], x) - target;
                total += e * e;
            }
        }
        total / (xs.len() * ys[0].len()) as f64
    }

    fn fit(
        &mut self,
        data: &[(Record, Record)],
        outputs: &[String],
        learning_rate: f64,
        epochs: usize,
        seed: u64,
    ) -> Result<TrainTrace> {
        let fresh = self.features.is_empty();
        if fresh {
            self.init(numeric_features(&data[0].0), outputs.len(), seed);
        }
        let xs: Vec<Vec<f64>> = data.iter().map(|(x, _)| features_of(x, &self.features)).collect::<Result<_>>()?;
        let ys = Self::targets(data, outputs)?;
        let initial_loss = Some(self.mse(&xs, &ys));
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            for (x, y) in xs.iter().zip(&ys) {
                for (j, target) in y.iter().enumerate() {
                    let err = self.bias[j] + dot(&self.weights[j], x) - target;
                    for (w, xi) in self.weights[j].iter_mut().zip(x) {
                        *w -= learning_rate * err * xi;
                    }
                    self.bias[j] -= learning_rate * err;
                }
            }
            let loss = self.mse(&xs, &ys);
            if !loss.is_finite() {
                return Err(Error::Model("training diverged; lower the learning rate".into()));
            }
            losses.push(loss);
        }
        Ok(TrainTrace { initial_loss, losses, samples: data.len() })
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(x: f64, y: f64) -> (Record, Record) {
        (Record::new().with("x", x), Record::new().with("y", y))
    }

    fn linear(lr: f64, epochs: usize) -> ToyModel {
        ToyModel::new(ModelKind::OnlineLinear { learning_rate: lr, epochs }, alloc::vec!["y".into()], 7).unwrap()
    }

    #[test]
    fn constant_ignores_input() {
        let m = ToyModel::new(ModelKind::Constant { value: Value::from(0.5) }, alloc::vec!["p".into()], 0).unwrap();
        assert_eq!(m.predict(&Record::new().with("q", 123)).unwrap(), Record::new().with("p", 0.5));
    }

    #[test]
    fn centroid_picks_nearest_class() {
        let mut m = ToyModel::new(ModelKind::NearestCentroid, alloc::vec!["c".into()], 0).unwrap();
        let data = [
            (Record::new().with("v", 0), Record::new().with("c", "A")),
            (Record::new().with("v", 10), Record::new().with("c", "B")),
        ];
        m.train(&data, TrainInit::Fresh).unwrap();
        assert_eq!(m.predict(&Record::new().with("v", 1)).unwrap(), Record::new().with("c", "A"));
    }

    #[test]
    fn untrained_centroid_errors() {
        let m = ToyModel::new(ModelKind::NearestCentroid, alloc::vec!["c".into()], 0).unwrap();
        assert!(m.predict(&Record::new().with("v", 1)).is_err());
    }

    #[test]
    fn invalid_hyperparameters() {
        let kind = ModelKind::OnlineLinear { learning_rate: 0.0, epochs: 10 };
        assert!(ToyModel::new(kind, alloc::vec!["y".into()], 0).is_err());
        assert!(ToyModel::new(ModelKind::NearestCentroid, alloc::vec!["a".into(), "b".into()], 0).is_err());
    }

    #[test]
    fn fresh_resets_incremental_continues() {
        let mut m = linear(0.05, 5);
        m.train(&[pair(1.0, 2.0)], TrainInit::Fresh).unwrap();
        let after_one = m.fingerprint();
        m.train(&[pair(1.0, 2.0)], TrainInit::Incremental).unwrap();
        assert_ne!(m.fingerprint(), after_one);
        m.train(&[pair(1.0, 2.0)], TrainInit::Fresh).unwrap();
        assert_eq!(m.fingerprint(), after_one);
    }

    #[test]
    fn reserved_and_text_inputs_are_not_features() {
        let r = Record::new().with("a", 1).with("__mc_id", "mc-1").with("region", "EU").with("__mc_x", 2);
        assert_eq!(numeric_features(&r), alloc::vec![String::from("a")]);
    }
}
