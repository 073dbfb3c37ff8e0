use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureSelection, Sample, TrainConfig};
use crate::error::{Result, SmrError};
use crate::labeling::CLASS_COUNT;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Dense feed-forward network. `weights[l]` has shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    pub selection: FeatureSelection,
    pub train_config: TrainConfig,
    pub trained_on: String,
    /// Mean training loss per completed epoch.
    pub loss_curve: Vec<f64>,
}

/// Loss gradients with the same layout as the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        Self {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let lr_t = cfg.learning_rate * (1.0 - b2.powi(self.step)).sqrt() / (1.0 - b1.powi(self.step));
        let eps = cfg.adam_eps;
        for l in 0..model.weights.len() {
            Zip::from(&mut model.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .and(&grads.weights[l])
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr_t * *m / (v.sqrt() + eps);
                });
            Zip::from(&mut model.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .and(&grads.biases[l])
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr_t * *m / (v.sqrt() + eps);
                });
        }
    }
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn log_sum_exp(row: ndarray::ArrayView1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + row.fold(0.0, |s, &v| s + (v - max).exp()).ln()
}

impl MlpModel {
    /// All-zero parameters; predicts the uniform distribution.
    pub fn zeros(layer_dims: Vec<usize>) -> Result<Self> {
        Self::check_dims(&layer_dims)?;
        let selection = FeatureSelection((0..layer_dims[0]).collect());
        Ok(Self {
            weights: layer_dims.windows(2).map(|d| Array2::zeros((d[0], d[1]))).collect(),
            biases: layer_dims.windows(2).map(|d| Array1::zeros(d[1])).collect(),
            layer_dims,
            selection,
            train_config: TrainConfig::default(),
            trained_on: String::new(),
            loss_curve: Vec::new(),
        })
    }

    /// Uniform He initialisation `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn initialized(layer_dims: Vec<usize>, rng: &mut impl Rng) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        for w in &mut model.weights {
            let bound = (6.0 / w.nrows() as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(model)
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(SmrError::Config(format!("invalid layer dims {dims:?}")));
        }
        if *dims.last().unwrap() != CLASS_COUNT {
            return Err(SmrError::Config(format!("output layer must have {CLASS_COUNT} units")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn with_selection(mut self, selection: FeatureSelection) -> Result<Self> {
        selection.validate()?;
        if selection.len() != self.input_dim() {
            return Err(SmrError::Config(format!(
                "selection of {} attributes does not fit input width {}",
                selection.len(),
                self.input_dim()
            )));
        }
        self.selection = selection;
        Ok(self)
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize, row: usize, col: usize) -> f64 {
        self.weights[layer][[row, col]]
    }

    pub fn set_weight(&mut self, layer: usize, row: usize, col: usize, value: f64) {
        self.weights[layer][[row, col]] = value;
    }

    pub fn weight_shape(&self, layer: usize) -> (usize, usize) {
        self.weights[layer].dim()
    }

    pub fn bias(&self, layer: usize, unit: usize) -> f64 {
        self.biases[layer][unit]
    }

    /// Activations per layer: input, hidden ReLU outputs, and (last) the
    /// pre-softmax logits.
    fn forward(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w);
            z += b;
            if l + 1 < self.weights.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    fn penalty(&self, alpha: f64) -> f64 {
        alpha * self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
    }

    fn check_batch(&self, samples: &[Sample]) -> Result<()> {
        if samples.is_empty() {
            return Err(SmrError::Data("empty sample set".into()));
        }
        for s in samples {
            if s.features.len() != self.input_dim() {
                return Err(SmrError::Data(format!(
                    "sample has {} features, model expects {}",
                    s.features.len(),
                    self.input_dim()
                )));
            }
            if s.class >= CLASS_COUNT {
                return Err(SmrError::Data(format!("class {} out of range", s.class)));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(SmrError::Data("non-finite feature value".into()));
            }
        }
        Ok(())
    }

    fn batch_matrix(&self, samples: &[Sample]) -> Array2<f64> {
        let mut x = Array2::zeros((samples.len(), self.input_dim()));
        for (mut row, s) in x.rows_mut().into_iter().zip(samples) {
            row.iter_mut().zip(&s.features).for_each(|(d, &v)| *d = v);
        }
        x
    }

    fn loss_from_logits(logits: &Array2<f64>, labels: &[usize]) -> f64 {
        let total: f64 = logits
            .rows()
            .into_iter()
            .zip(labels)
            .map(|(row, &c)| log_sum_exp(row) - row[c])
            .sum();
        total / labels.len() as f64
    }

    /// Mean cross-entropy plus `alpha * sum(W^2)`.
    pub fn loss(&self, samples: &[Sample], alpha: f64) -> Result<f64> {
        self.check_batch(samples)?;
        let acts = self.forward(self.batch_matrix(samples).view());
        let labels: Vec<usize> = samples.iter().map(|s| s.class).collect();
        Ok(Self::loss_from_logits(acts.last().unwrap(), &labels) + self.penalty(alpha))
    }

    /// Loss and its exact gradient by backpropagation.
    pub fn loss_and_gradients(&self, samples: &[Sample], alpha: f64) -> Result<(f64, Gradients)> {
        self.check_batch(samples)?;
        let labels: Vec<usize> = samples.iter().map(|s| s.class).collect();
        Ok(self.backprop(self.batch_matrix(samples).view(), &labels, alpha))
    }

    fn backprop(&self, x: ArrayView2<f64>, labels: &[usize], alpha: f64) -> (f64, Gradients) {
        let n = labels.len() as f64;
        let acts = self.forward(x);
        let logits = acts.last().unwrap();
        let loss = Self::loss_from_logits(logits, labels) + self.penalty(alpha);

        let mut delta = logits.clone();
        softmax_rows(&mut delta);
        for (mut row, &c) in delta.rows_mut().into_iter().zip(labels) {
            row[c] -= 1.0;
        }
        delta /= n;

        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        for l in (0..layers).rev() {
            let mut g = acts[l].t().dot(&delta);
            g.scaled_add(2.0 * alpha, &self.weights[l]);
            gw.push(g);
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l].t());
                Zip::from(&mut prev).and(&acts[l]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        (loss, Gradients { weights: gw, biases: gb })
    }

    /// Sign pattern of every hidden unit over `samples`; a finite-difference
    /// probe is only valid if this is unchanged across the probe.
    pub fn relu_pattern(&self, samples: &[Sample]) -> Vec<bool> {
        let acts = self.forward(self.batch_matrix(samples).view());
        acts[1..acts.len() - 1]
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
            .collect()
    }

    pub fn probabilities(&self, features: &[f64]) -> [f64; CLASS_COUNT] {
        let x = ArrayView2::from_shape((1, features.len()), features).expect("feature width");
        let mut logits = self.forward(x).pop().unwrap();
        softmax_rows(&mut logits);
        let mut out = [0.0; CLASS_COUNT];
        out.iter_mut().zip(logits.iter()).for_each(|(o, &p)| *o = p);
        out
    }

    pub fn predict_class(&self, features: &[f64]) -> usize {
        let p = self.probabilities(features);
        (0..CLASS_COUNT).fold(0, |best, i| if p[i] > p[best] { i } else { best })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(super) fn train(samples: &[Sample], cfg: &TrainConfig) -> Result<MlpModel> {
    cfg.validate()?;
    let dim = samples
        .first()
        .ok_or_else(|| SmrError::Data("cannot train on an empty sample set".into()))?
        .features
        .len();
    let mut dims = vec![dim];
    dims.extend(&cfg.hidden_layers);
    dims.push(CLASS_COUNT);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::initialized(dims, &mut rng)?;
    model.check_batch(samples)?;
    model.train_config = cfg.clone();

    let x_all = model.batch_matrix(samples);
    let batch = match cfg.batch_size {
        0 => samples.len(),
        b => b.min(samples.len()),
    };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut adam = Adam::new(&model);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let labels_all: Vec<usize> = samples.iter().map(|s| s.class).collect();
    let mut labels: Vec<usize> = Vec::with_capacity(batch);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            labels.clear();
            labels.extend(chunk.iter().map(|&i| labels_all[i]));
            let xb = x_all.select(Axis(0), chunk);
            let (loss, grads) = model.backprop(xb.view(), &labels, cfg.l2_alpha);
            if !loss.is_finite() {
                return Err(SmrError::Numerics(format!("loss became {loss} in epoch {epoch}")));
            }
            total += loss * chunk.len() as f64;
            adam.update(&mut model, &grads, cfg);
        }
        let epoch_loss = total / samples.len() as f64;
        model.loss_curve.push(epoch_loss);
        if epoch_loss < best - cfg.min_delta {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(model)
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ModelFile {
    version: u32,
    layer_dims: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    input_attributes: Vec<usize>,
    train_config: TrainConfig,
    trained_on: String,
    #[serde(default)]
    loss_curve: Vec<f64>,
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            layer_dims: m.layer_dims.clone(),
            weights: m
                .weights
                .iter()
                .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
            input_attributes: m.selection.0.clone(),
            train_config: m.train_config.clone(),
            trained_on: m.trained_on.clone(),
            loss_curve: m.loss_curve.clone(),
        }
    }
}

impl TryFrom<ModelFile> for MlpModel {
    type Error = SmrError;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.version != MODEL_FORMAT_VERSION {
            return Err(SmrError::Format(format!("unsupported model version {}", f.version)));
        }
        let mut model = MlpModel::zeros(f.layer_dims.clone())?;
        if f.weights.len() != model.weights.len() || f.biases.len() != model.biases.len() {
            return Err(SmrError::Format("layer count does not match layerDims".into()));
        }
        for (l, rows) in f.weights.into_iter().enumerate() {
            let (r, c) = model.weights[l].dim();
            if rows.len() != r || rows.iter().any(|row| row.len() != c) {
                return Err(SmrError::Format(format!("weights of layer {l} are not {r}x{c}")));
            }
            model.weights[l] = Array2::from_shape_vec((r, c), rows.concat())
                .map_err(|e| SmrError::Format(e.to_string()))?;
        }
        for (l, b) in f.biases.into_iter().enumerate() {
            if b.len() != model.biases[l].len() {
                return Err(SmrError::Format(format!("biases of layer {l} have wrong length")));
            }
            model.biases[l] = Array1::from(b);
        }
        model.train_config = f.train_config;
        model.trained_on = f.trained_on;
        model.loss_curve = f.loss_curve;
        model.with_selection(FeatureSelection(f.input_attributes))
    }
}
