use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{ActivationKind, LayerKind, LayerSpec, Neighborhood};
use super::model::{check_stack, Model};
use super::GnnError;
use crate::eval::macro_f1_pairs;
use crate::graph::InteractionGraph;
use crate::stance::{Assignment, Provenance, Stance, StanceAssignment};
use crate::tensor::{row_softmax, Matrix, Tape, Target};

const MIN_LABELS_PER_STANCE: usize = 2;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Shorthand for a uniform stack: `hidden_dims` layers of `kind` followed
/// by a two-logit output layer of the same kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub kind: LayerKind,
    pub hidden_dims: Vec<usize>,
    pub activation: ActivationKind,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            kind: LayerKind::Gat,
            hidden_dims: vec![64],
            activation: ActivationKind::Relu,
        }
    }
}

impl Architecture {
    pub fn stack(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(2);
        let last = dims.len() - 2;
        (0..dims.len() - 1)
            .map(|i| {
                let act = if i == last { ActivationKind::Identity } else { self.activation };
                LayerSpec::new(self.kind, dims[i], dims[i + 1], act)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    /// Explicit layer stack; overrides `architecture` when set.
    pub layers: Option<Vec<LayerSpec>>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Fraction of the labeled users used for training; the rest validates.
    pub train_fraction: f64,
    pub class_weighting: bool,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub sentiment_weighted_mean: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            layers: None,
            learning_rate: 1e-3,
            epochs: 200,
            optimizer: OptimizerKind::Adam,
            seed: 42,
            train_fraction: 0.9,
            class_weighting: true,
            patience: 20,
            sentiment_weighted_mean: false,
        }
    }
}

impl TrainConfig {
    pub fn with_kind(mut self, kind: LayerKind) -> Self {
        self.architecture.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GnnError::Config(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(GnnError::Config("epochs must be ≥ 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(GnnError::Config(format!(
                "train fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if self.architecture.hidden_dims.contains(&0) {
            return Err(GnnError::Config("hidden dims must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn layer_stack(&self, input_dim: usize) -> Vec<LayerSpec> {
        match &self.layers {
            Some(l) => l.clone(),
            None => self.architecture.stack(input_dim),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_size: usize,
    pub val_size: usize,
}

/// Per-node stance labels and `[p(S1), p(S2)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: StanceAssignment,
    pub probabilities: Vec<[f64; 2]>,
}

fn graph_features(graph: &InteractionGraph) -> Result<Matrix<f32>, GnnError> {
    let m = Matrix::from_vec(graph.n_nodes(), graph.dim(), graph.features().to_vec());
    if !m.all_finite() {
        return Err(GnnError::NonFiniteInput);
    }
    Ok(m)
}

/// Trains the configured stack on the labeled users of `graph`.
pub fn train(
    graph: &InteractionGraph,
    labels: &StanceAssignment,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory), GnnError> {
    let features = graph_features(graph)?;
    let layers = cfg.layer_stack(graph.dim());
    let nbhd = layers
        .iter()
        .any(LayerSpec::uses_graph)
        .then(|| Neighborhood::from_graph(graph, cfg.sentiment_weighted_mean));
    fit(&features, nbhd.as_ref(), labels, cfg, layers)
}

/// Trains a dense-only stack on node features alone.
pub fn mlp_baseline(
    features: &Matrix<f32>,
    labels: &StanceAssignment,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory), GnnError> {
    if !features.all_finite() {
        return Err(GnnError::NonFiniteInput);
    }
    let layers = match &cfg.layers {
        Some(l) => l.clone(),
        None => Architecture {
            kind: LayerKind::Dense,
            ..cfg.architecture.clone()
        }
        .stack(features.cols()),
    };
    if layers.iter().any(LayerSpec::uses_graph) {
        return Err(GnnError::Config("mlp baseline takes dense layers only".into()));
    }
    fit(features, None, labels, cfg, layers)
}

/// Stratified split of the labeled ids into training and validation sets.
fn split(labels: &StanceAssignment, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> (Vec<Target>, Vec<(u32, Stance)>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for stance in Stance::ALL {
        let mut ids: Vec<u32> = labels.iter().filter(|(_, a)| a.stance == stance).map(|(id, _)| id).collect();
        ids.shuffle(rng);
        let n_val = ((1.0 - cfg.train_fraction) * ids.len() as f64).floor() as usize;
        let n_val = n_val.min(ids.len() - 1);
        for (k, id) in ids.into_iter().enumerate() {
            if k < n_val {
                val.push((id, stance));
            } else {
                train.push(Target {
                    row: id,
                    class: stance.index() as u32,
                    weight: 1.0,
                });
            }
        }
    }
    train.sort_by_key(|t| t.row);
    val.sort_by_key(|&(id, _)| id);
    if cfg.class_weighting {
        let mut counts = [0usize; 2];
        for t in &train {
            counts[t.class as usize] += 1;
        }
        let total = train.len() as f64;
        for t in &mut train {
            t.weight = total / (2.0 * counts[t.class as usize] as f64);
        }
    }
    (train, val)
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, model: &Model) -> Self {
        let sizes: Vec<usize> = model
            .params()
            .iter()
            .flat_map(|p| p.tensors())
            .map(|m| m.data().len())
            .collect();
        Self {
            kind,
            lr,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn apply(&mut self, model: &mut Model, grads: &[Matrix<f32>]) {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step);
        let tensors = model.params_mut().iter_mut().flat_map(|p| p.tensors_mut());
        for (k, (param, grad)) in tensors.zip(grads).enumerate() {
            for (i, (w, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
                let g = g as f64;
                let delta = match self.kind {
                    OptimizerKind::Sgd => self.lr * g,
                    OptimizerKind::Adam => {
                        let m = &mut self.m[k][i];
                        let v = &mut self.v[k][i];
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        self.lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS)
                    }
                };
                *w = (*w as f64 - delta) as f32;
            }
        }
    }
}

fn fit(
    features: &Matrix<f32>,
    nbhd: Option<&Neighborhood>,
    labels: &StanceAssignment,
    cfg: &TrainConfig,
    layers: Vec<LayerSpec>,
) -> Result<(Model, TrainHistory), GnnError> {
    cfg.validate()?;
    check_stack(&layers)?;
    let n = features.rows();
    if labels.domain() != n {
        return Err(GnnError::LabelDomain {
            labels: labels.domain(),
            nodes: n,
        });
    }
    if layers[0].input_dim != features.cols() {
        return Err(GnnError::Dimension {
            expected: layers[0].input_dim,
            found: features.cols(),
        });
    }
    let counts = labels.count_by_stance();
    for stance in Stance::ALL {
        if counts[stance.index()] < MIN_LABELS_PER_STANCE {
            return Err(GnnError::TooFewLabels {
                stance,
                needed: MIN_LABELS_PER_STANCE,
                found: counts[stance.index()],
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_targets, val) = split(labels, cfg, &mut rng);
    let train_targets = Arc::new(train_targets);
    let val_targets: Arc<Vec<Target>> = Arc::new(
        val.iter()
            .map(|&(id, s)| Target {
                row: id,
                class: s.index() as u32,
                weight: 1.0,
            })
            .collect(),
    );
    let init_seed = crate::eval::derive_seed(cfg.seed, u64::MAX);
    let mut model = Model::init(layers, cfg.sentiment_weighted_mean, init_seed)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &model);

    let mut history = TrainHistory {
        train_size: train_targets.len(),
        val_size: val.len(),
        ..TrainHistory::default()
    };
    let mut best: Option<(Model, f64, f64)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(features.clone());
        let (logits, vars) = model.record(&mut tape, x, nbhd)?;
        let loss = tape.softmax_cross_entropy(logits, train_targets.clone());
        let train_loss = tape.value(loss).get(0, 0) as f64;
        if !train_loss.is_finite() {
            return Err(GnnError::Divergence { epoch, loss: train_loss });
        }

        let (val_loss, val_f1) = if val.is_empty() {
            (None, None)
        } else {
            let vl = tape.softmax_cross_entropy(logits, val_targets.clone());
            let vl = tape.value(vl).get(0, 0) as f64;
            let out = tape.value(logits);
            let f1 = macro_f1_pairs(val.iter().map(|&(id, s)| (s, argmax(out.row(id as usize)))));
            (Some(vl), Some(f1))
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_f1,
        });

        // Selection key: validation F1 then validation loss, or training
        // loss when there is no validation set.
        let key = match (val_f1, val_loss) {
            (Some(f), Some(l)) => (f, -l),
            _ => (0.0, -train_loss),
        };
        let improved = best.as_ref().map_or(true, |&(_, f, l)| key.0 > f || (key.0 == f && key.1 > l));
        if improved {
            best = Some((model.clone(), key.0, key.1));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }

        let grads_all = tape.backward(loss);
        let grads: Vec<Matrix<f32>> = vars
            .iter()
            .flatten()
            .map(|&v| {
                let (r, c) = tape.value(v).shape();
                grads_all.get_or_zeros(v, r, c)
            })
            .collect();
        opt.apply(&mut model, &grads);
        if model.params().iter().flat_map(|p| p.tensors()).any(|m| !m.all_finite()) {
            return Err(GnnError::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
    }
    let (model, _, _) = best.expect("at least one epoch runs");
    Ok((model, history))
}

fn argmax(row: &[f32]) -> Stance {
    if row[1] > row[0] {
        Stance::S2
    } else {
        Stance::S1
    }
}

/// Labels every node with the argmax stance and its class probabilities.
pub fn predict(model: &Model, graph: &InteractionGraph) -> Result<Prediction, GnnError> {
    if graph.dim() != model.input_dim() {
        return Err(GnnError::Dimension {
            expected: model.input_dim(),
            found: graph.dim(),
        });
    }
    let features = graph_features(graph)?;
    let nbhd = (!model.is_dense_only()).then(|| Neighborhood::from_graph(graph, model.sentiment_weighted()));
    predict_with(model, &features, nbhd.as_ref())
}

/// Prediction from features alone; the model must be dense-only.
pub fn predict_features(model: &Model, features: &Matrix<f32>) -> Result<Prediction, GnnError> {
    if !model.is_dense_only() {
        return Err(GnnError::Config("model passes messages and needs a graph".into()));
    }
    if features.cols() != model.input_dim() {
        return Err(GnnError::Dimension {
            expected: model.input_dim(),
            found: features.cols(),
        });
    }
    predict_with(model, features, None)
}

fn predict_with(model: &Model, features: &Matrix<f32>, nbhd: Option<&Neighborhood>) -> Result<Prediction, GnnError> {
    let logits = model.logits(features, nbhd)?;
    let probs = row_softmax(&logits.cast::<f64>());
    let mut labels = StanceAssignment::new(features.rows());
    let mut probabilities = Vec::with_capacity(features.rows());
    for v in 0..features.rows() {
        let p = [probs.get(v, 0), probs.get(v, 1)];
        let stance = if p[1] > p[0] { Stance::S2 } else { Stance::S1 };
        labels
            .assign(v as u32, Assignment::new(stance, Provenance::Predicted, 0))
            .expect("fresh assignment");
        probabilities.push(p);
    }
    Ok(Prediction { labels, probabilities })
}
