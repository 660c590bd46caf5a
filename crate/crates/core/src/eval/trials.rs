use serde::{Deserialize, Serialize};

use super::{derive_seed, score_trial, weighted_random_predictions, EvalError, EvalReport, TrialMetrics};
use crate::gnn::{self, LayerKind, Model, TrainConfig};
use crate::graph::{build_bipartite, BipartiteGraph, InteractionGraph, Interner, Post};
use crate::ingest::{build_interaction_graph, pool_user_features, TweetRecord};
use crate::label_prop::{run_propagation, PropagationConfig, PropagationOutcome};
use crate::stance::{Assignment, Provenance, Stance, StanceAssignment};
use crate::synth::{generate, SynthConfig, SynthDataset};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Sage,
    Gat,
    Mlp,
    WeightedRandom,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Sage => "sage",
            ModelKind::Gat => "gat",
            ModelKind::Mlp => "mlp",
            ModelKind::WeightedRandom => "weighted-random",
        }
    }

    pub fn layer_kind(self) -> Option<LayerKind> {
        match self {
            ModelKind::Sage => Some(LayerKind::SageMean),
            ModelKind::Gat => Some(LayerKind::Gat),
            ModelKind::Mlp => Some(LayerKind::Dense),
            ModelKind::WeightedRandom => None,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "sage" | "graphsage" => ModelKind::Sage,
            "gat" => ModelKind::Gat,
            "mlp" => ModelKind::Mlp,
            "weighted-random" | "random" => ModelKind::WeightedRandom,
            other => return Err(format!("unknown model {other:?}")),
        })
    }
}

/// Which users count towards the score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalScope {
    /// Every user with a truth label.
    #[default]
    All,
    /// Only users that stage one left unlabeled.
    HeldOut,
}

/// One experiment: a dataset, the two stages' configuration and a model.
/// `dataset` is only read by [`run_trials`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub model: ModelKind,
    pub dataset: SynthConfig,
    /// Stage-one settings. Empty seed lists are filled from the dataset.
    pub propagation: PropagationConfig,
    pub train: TrainConfig,
    pub scope: EvalScope,
    pub base_seed: u64,
}

impl ExperimentSpec {
    pub fn new(model: ModelKind, dataset: SynthConfig) -> Self {
        Self {
            name: model.as_str().to_string(),
            model,
            dataset,
            propagation: PropagationConfig::default(),
            train: TrainConfig::default(),
            scope: EvalScope::All,
            base_seed: 42,
        }
    }
}

/// Both graphs of one dataset, its seed hashtags and any known truth.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub bipartite: BipartiteGraph,
    pub interaction: InteractionGraph,
    /// Seeds used when a propagation config leaves a seed list empty.
    pub seeds: [Vec<String>; 2],
    /// Known stances by user name, sorted. May be empty.
    pub truth: Vec<(String, Stance)>,
}

impl PreparedData {
    pub fn from_config(cfg: &SynthConfig) -> Result<Self, EvalError> {
        let dataset = generate(cfg).map_err(|e| EvalError::Trial {
            trial: 0,
            message: e.to_string(),
        })?;
        Self::from_dataset(&dataset)
    }

    pub fn from_dataset(dataset: &SynthDataset) -> Result<Self, EvalError> {
        Self::from_parts(
            &dataset.posts,
            &dataset.tweets,
            dataset.config.dim,
            dataset.seeds.clone(),
            dataset.truth.clone(),
        )
    }

    /// Builds both graphs from raw posts and tweet records.
    pub fn from_parts(
        posts: &[Post],
        tweets: &[TweetRecord],
        dim: usize,
        seeds: [Vec<String>; 2],
        mut truth: Vec<(String, Stance)>,
    ) -> Result<Self, EvalError> {
        let fail = |message: String| EvalError::Trial { trial: 0, message };
        let bipartite = build_bipartite(posts.iter().cloned()).map_err(|e| fail(e.to_string()))?;
        let table = pool_user_features(tweets, dim).map_err(|e| fail(e.to_string()))?;
        let (interaction, _) = build_interaction_graph(tweets, &table).map_err(|e| fail(e.to_string()))?;
        truth.sort();
        truth.dedup_by(|a, b| a.0 == b.0);
        Ok(Self {
            bipartite,
            interaction,
            seeds,
            truth,
        })
    }

    /// Truth projected onto `users`; names not in `users` are skipped.
    pub fn truth_on(&self, users: &Interner) -> StanceAssignment {
        let mut a = StanceAssignment::new(users.len());
        for (name, stance) in &self.truth {
            if let Some(id) = users.get(name) {
                a.assign(id, Assignment::new(*stance, Provenance::Annotated, 0))
                    .expect("id within domain");
            }
        }
        a
    }

    /// Stage-one run with the prepared seeds filling any empty seed list.
    pub fn propagate(&self, cfg: &PropagationConfig) -> Result<PropagationOutcome, EvalError> {
        let mut cfg = cfg.clone();
        for (slot, seeds) in cfg.seeds.iter_mut().zip(&self.seeds) {
            if slot.is_empty() {
                *slot = seeds.clone();
            }
        }
        run_propagation(&self.bipartite, &cfg).map_err(|e| EvalError::Trial {
            trial: 0,
            message: e.to_string(),
        })
    }

    /// Stage-one labels re-keyed onto the interaction graph.
    pub fn soft_labels(&self, outcome: &PropagationOutcome) -> StanceAssignment {
        outcome.users.transfer(self.bipartite.users(), self.interaction.users())
    }

    pub fn feature_matrix(&self) -> Matrix<f32> {
        Matrix::from_vec(
            self.interaction.n_nodes(),
            self.interaction.dim(),
            self.interaction.features().to_vec(),
        )
    }
}

/// Stage-one quality on hashtag-using users.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageOneQuality {
    /// Labeled hashtag users over all hashtag users.
    pub coverage: f64,
    /// Correct labels over labeled hashtag users with a known truth.
    pub accuracy: f64,
    pub iterations: u32,
    pub converged: bool,
}

pub fn stage_one_quality(data: &PreparedData, outcome: &PropagationOutcome) -> StageOneQuality {
    let truth = data.truth_on(data.bipartite.users());
    let (mut labeled, mut judged, mut correct) = (0usize, 0usize, 0usize);
    let total = data.bipartite.n_users();
    for u in 0..total as u32 {
        if let Some(s) = outcome.users.stance(u) {
            labeled += 1;
            if let Some(t) = truth.stance(u) {
                judged += 1;
                correct += usize::from(t == s);
            }
        }
    }
    StageOneQuality {
        coverage: labeled as f64 / total.max(1) as f64,
        accuracy: if judged == 0 { 0.0 } else { correct as f64 / judged as f64 },
        iterations: outcome.iterations,
        converged: outcome.converged,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    /// `None` when no user in scope has a known truth.
    pub metrics: Option<TrialMetrics>,
    pub stage_one: StageOneQuality,
    pub training_labels: usize,
}

/// Everything one trial produced.
#[derive(Clone, Debug)]
pub struct TrialRun {
    pub outcome: TrialOutcome,
    /// Labels for every interaction-graph user.
    pub predictions: StanceAssignment,
    /// Class probabilities per user; absent for the random baseline.
    pub probabilities: Option<Vec<[f64; 2]>>,
    pub model: Option<Model>,
}

/// Trains and scores one trial given a finished stage-one run. The trial
/// seed drives both the split and the initialisation.
pub fn run_model_trial(
    data: &PreparedData,
    stage_one: &PropagationOutcome,
    spec: &ExperimentSpec,
    trial: usize,
) -> Result<TrialRun, EvalError> {
    let fail = |message: String| EvalError::Trial { trial, message };
    let seed = derive_seed(spec.base_seed, trial as u64);
    let soft = data.soft_labels(stage_one);

    let mut truth = data.truth_on(data.interaction.users());
    if spec.scope == EvalScope::HeldOut {
        for (id, _) in soft.iter() {
            truth.clear(id);
        }
    }
    let train_cfg = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let (predictions, probabilities, model) = match spec.model {
        ModelKind::WeightedRandom => {
            let dist = super::class_distribution(&soft).ok_or_else(|| fail("no stage-one labels".into()))?;
            let n = data.interaction.n_nodes();
            let p = weighted_random_predictions(n, 0..n as u32, dist, seed).map_err(|e| fail(e.to_string()))?;
            (p, None, None)
        }
        ModelKind::Mlp => {
            let features = data.feature_matrix();
            let (model, _) = gnn::mlp_baseline(&features, &soft, &train_cfg).map_err(|e| fail(e.to_string()))?;
            let p = gnn::predict_features(&model, &features).map_err(|e| fail(e.to_string()))?;
            (p.labels, Some(p.probabilities), Some(model))
        }
        ModelKind::Sage | ModelKind::Gat => {
            let cfg = train_cfg.with_kind(spec.model.layer_kind().expect("graph model"));
            let (model, _) = gnn::train(&data.interaction, &soft, &cfg).map_err(|e| fail(e.to_string()))?;
            let p = gnn::predict(&model, &data.interaction).map_err(|e| fail(e.to_string()))?;
            (p.labels, Some(p.probabilities), Some(model))
        }
    };
    let metrics = if truth.is_empty() {
        None
    } else {
        Some(score_trial(&predictions, &truth).map_err(|e| fail(e.to_string()))?)
    };
    Ok(TrialRun {
        outcome: TrialOutcome {
            trial,
            seed,
            metrics,
            stage_one: stage_one_quality(data, stage_one),
            training_labels: soft.len(),
        },
        predictions,
        probabilities,
        model,
    })
}

/// Runs one trial on prepared data: stage one, then the model trained on
/// its labels, scored against the known truth.
pub fn run_trial_on(data: &PreparedData, spec: &ExperimentSpec, trial: usize) -> Result<TrialOutcome, EvalError> {
    let stage_one = data.propagate(&spec.propagation).map_err(|e| EvalError::Trial {
        trial,
        message: e.to_string(),
    })?;
    Ok(run_model_trial(data, &stage_one, spec, trial)?.outcome)
}

/// Runs `n_trials` seeded trials over one prepared dataset. Stage one is
/// deterministic and runs once; each trial reseeds the train/validation
/// split and the model initialisation.
pub fn run_trials_on(
    data: &PreparedData,
    spec: &ExperimentSpec,
    n_trials: usize,
) -> Result<(EvalReport, Vec<TrialOutcome>), EvalError> {
    if n_trials == 0 {
        return Err(EvalError::NoTrials);
    }
    let stage_one = data.propagate(&spec.propagation)?;
    let outcomes = (0..n_trials)
        .map(|t| run_model_trial(data, &stage_one, spec, t).map(|r| r.outcome))
        .collect::<Result<Vec<_>, _>>()?;
    let metrics = outcomes
        .iter()
        .map(|o| o.metrics.clone().ok_or(EvalError::EmptyTruth))
        .collect::<Result<Vec<_>, _>>()?;
    let report = EvalReport::from_trials(&spec.name, metrics)?;
    Ok((report, outcomes))
}

/// Generates the spec's dataset and runs `n_trials` trials on it.
pub fn run_trials(spec: &ExperimentSpec, n_trials: usize) -> Result<EvalReport, EvalError> {
    let data = PreparedData::from_config(&spec.dataset)?;
    Ok(run_trials_on(&data, spec, n_trials)?.0)
}
