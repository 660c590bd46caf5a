use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use super::manifest::{manifest_path, sha256_bytes, sha256_file, Outputs, RunManifest};
use super::{
    AnnotateArgs, BuildGraphArgs, CliError, Command, EvaluateArgs, IngestArgs, PipelineArgs, PredictArgs,
    PropagateArgs, ReplayArgs, SynthArgs, TrainArgs, DEFAULT_SEED,
};
use crate::annotate::{
    annotate_batch, write_results, AnnotateError, AnnotationRequest, BatchOptions, EndpointConfig, HttpBackend,
    SystemClock, Topic,
};
use crate::eval::{
    run_model_trial, score_trial, stage_one_quality, write_table, EvalError, EvalReport, EvalScope, ExperimentSpec,
    ModelKind, PreparedData,
};
use crate::gnn::{self, GnnError, LayerKind, Model, TrainConfig};
use crate::graph::{build_bipartite, read_interactions, read_posts, write_posts, BipartiteGraph, InteractionGraph, Interner};
use crate::ingest::{
    build_interaction_graph, graph_from_interactions, pool_user_features, read_tweets_any, write_tweet_jsonl,
};
use crate::label_prop::{
    climate_seeds, gun_control_seeds, read_seed_file, run_propagation, write_seed_file, PropagationConfig,
    PropagationError,
};
use crate::stance::{assignment_from_records, read_label_records, Provenance, StanceNames};
use crate::synth::{generate, SynthConfig, SynthError, SynthFiles};
use crate::tensor::Matrix;

pub(crate) fn dispatch(cmd: Command, args: Vec<String>) -> Result<(), CliError> {
    match cmd {
        Command::BuildGraph(a) => build_graph(a, args),
        Command::Propagate(a) => propagate(a, args),
        Command::Ingest(a) => ingest(a, args),
        Command::Train(a) => train(a, args),
        Command::Predict(a) => predict(a, args),
        Command::Evaluate(a) => evaluate(a, args),
        Command::Synth(a) => synth(a, args),
        Command::Annotate(a) => annotate(a, args),
        Command::Pipeline(a) => pipeline(a, args),
        Command::Replay(a) => replay(a),
    }
}

/// Bookkeeping shared by every subcommand: input digests, staged outputs
/// and the manifest.
struct Run {
    subcommand: &'static str,
    args: Vec<String>,
    inputs: BTreeMap<String, String>,
    outputs: Outputs,
    started: Instant,
}

impl Run {
    fn new(subcommand: &'static str, args: Vec<String>) -> Self {
        Self {
            subcommand,
            args,
            inputs: BTreeMap::new(),
            outputs: Outputs::new(),
            started: Instant::now(),
        }
    }

    /// Reads a whole input file and records its digest.
    fn input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::config(format!("{}: no such file", path.display())),
            _ => CliError::runtime(format!("{}: {e}", path.display())),
        })?;
        self.inputs.insert(path.display().to_string(), sha256_bytes(&bytes));
        Ok(bytes)
    }

    fn write<F>(&mut self, path: &Path, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        self.outputs.write(path, |w| write(w))
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        self.write(path, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(CliError::runtime)?;
            writeln!(w).map_err(io_err(path))
        })
    }

    /// Moves every output into place, then writes the manifest for `primary`.
    fn finish(self, primary: &Path, config: Value, seed: Option<u64>) -> Result<(), CliError> {
        let outputs = self.outputs.commit()?;
        let manifest = RunManifest {
            tool: "stancegraph".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: self.subcommand.into(),
            args: self.args,
            config,
            seed,
            inputs: self.inputs,
            outputs,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(primary);
        let mut staged = Outputs::new();
        staged.write(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest).map_err(CliError::runtime)?;
            writeln!(w).map_err(io_err(&path))
        })?;
        staged.commit()?;
        info!("manifest written to {}", path.display());
        Ok(())
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::runtime(format!("{}: {e}", path.display()))
}

fn bad_input(path: &Path, e: impl Display) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

fn stance_names(arg: &Option<String>, fallback: StanceNames) -> Result<StanceNames, CliError> {
    let Some(spec) = arg else {
        return Ok(fallback);
    };
    let (a, b) = spec
        .split_once(',')
        .ok_or_else(|| CliError::config(format!("--stances expects `s1,s2`, got {spec:?}")))?;
    StanceNames::new(a.trim(), b.trim()).map_err(CliError::config)
}

/// Applies `key=value` overrides to a JSON config. Dotted keys address
/// nested fields and array elements (`seeds.0`); values are parsed as JSON
/// and fall back to plain strings. Unknown keys are rejected.
pub(crate) fn apply_sets(mut config: Value, sets: &[String]) -> Result<Value, CliError> {
    for set in sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--set expects key=value, got {set:?}")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let pointer = format!("/{}", key.trim().replace('.', "/"));
        match config.pointer_mut(&pointer) {
            Some(slot) => *slot = value,
            None => return Err(CliError::config(format!("unknown config key {key:?}"))),
        }
    }
    Ok(config)
}

/// Resolves a typed config from an optional JSON file, a fallback, and
/// `--set` overrides.
fn load_config<T: Serialize + DeserializeOwned>(
    run: &mut Run,
    path: Option<&Path>,
    fallback: T,
    sets: &[String],
) -> Result<T, CliError> {
    let base = match path {
        Some(p) => {
            let bytes = run.input(p)?;
            serde_json::from_slice::<T>(&bytes).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => fallback,
    };
    let value = serde_json::to_value(&base).map_err(CliError::runtime)?;
    let value = apply_sets(value, sets)?;
    serde_json::from_value(value).map_err(|e| CliError::config(format!("config: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn propagation_error(e: PropagationError) -> CliError {
    match e {
        PropagationError::EmptySeedSet(_)
        | PropagationError::OverlappingSeeds(_)
        | PropagationError::ZeroIterations
        | PropagationError::BadMultiplier(_) => CliError::config(e),
        _ => CliError::data(e),
    }
}

fn gnn_error(e: GnnError) -> CliError {
    match e {
        GnnError::Config(_) | GnnError::Dimension { .. } => CliError::config(e),
        GnnError::Divergence { .. } | GnnError::Io(_) => CliError::runtime(e),
        _ => CliError::data(e),
    }
}

fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::Config(_) | SynthError::UnknownPreset(_) => CliError::config(e),
        _ => CliError::runtime(e),
    }
}

fn annotate_error(e: AnnotateError) -> CliError {
    match e {
        AnnotateError::MissingCredential(_) => CliError::config(e),
        AnnotateError::InvalidRequest { .. } | AnnotateError::Journal { .. } | AnnotateError::Results { .. } => {
            CliError::data(e)
        }
        _ => CliError::runtime(e),
    }
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::EmptyTruth | EvalError::DomainMismatch { .. } | EvalError::DegenerateDistribution(_) => {
            CliError::data(e)
        }
        EvalError::NoTrials => CliError::config(e),
        _ => CliError::runtime(e),
    }
}

fn read_seeds(run: &mut Run, path: &Path) -> Result<Vec<String>, CliError> {
    let bytes = run.input(path)?;
    read_seed_file(&bytes[..]).map_err(|e| bad_input(path, e))
}

fn feature_matrix(graph: &InteractionGraph) -> Matrix<f32> {
    Matrix::from_vec(graph.n_nodes(), graph.dim(), graph.features().to_vec())
}

fn build_graph(a: BuildGraphArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("build-graph", args);
    let bytes = run.input(&a.posts)?;
    let posts = read_posts(&bytes[..]).map_err(|e| bad_input(&a.posts, e))?;
    let graph = build_bipartite(posts).map_err(|e| bad_input(&a.posts, e))?;
    run.write(&a.out, |w| graph.write_snapshot(w).map_err(CliError::runtime))?;
    println!(
        "users {} hashtags {} edges {} total weight {}",
        graph.n_users(),
        graph.n_hashtags(),
        graph.n_edges(),
        graph.total_weight()
    );
    run.finish(&a.out, json!({}), None)
}

fn propagate(a: PropagateArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("propagate", args);
    let graph = match (&a.graph, &a.posts) {
        (Some(path), _) => {
            let bytes = run.input(path)?;
            BipartiteGraph::read_snapshot(&bytes[..]).map_err(|e| bad_input(path, e))?
        }
        (None, Some(path)) => {
            let bytes = run.input(path)?;
            let posts = read_posts(&bytes[..]).map_err(|e| bad_input(path, e))?;
            build_bipartite(posts).map_err(|e| bad_input(path, e))?
        }
        (None, None) => return Err(CliError::config("pass --graph or --posts")),
    };

    let mut fallback = PropagationConfig::default();
    let mut default_names = StanceNames::default();
    if let Some(topic) = &a.topic {
        let topic: Topic = topic.parse().map_err(CliError::config)?;
        fallback = match topic {
            Topic::ClimateChange => climate_seeds(),
            Topic::GunControl => gun_control_seeds(),
        };
        default_names = topic.stance_names();
    }
    let names = stance_names(&a.stances, default_names)?;
    let mut cfg = load_config(&mut run, a.config.as_deref(), fallback.clone(), &[])?;
    if a.topic.is_some() && a.config.is_some() {
        cfg.seeds = fallback.seeds;
    }
    if let (Some(p1), Some(p2)) = (&a.seeds_s1, &a.seeds_s2) {
        cfg.seeds = [read_seeds(&mut run, p1)?, read_seeds(&mut run, p2)?];
    }
    let mut cfg: PropagationConfig = serde_json::from_value(apply_sets(to_value(&cfg), &a.sets)?)
        .map_err(|e| CliError::config(format!("config: {e}")))?;
    if let Some(n) = a.max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(k) = a.std_multiplier {
        cfg.std_multiplier = k;
    }
    cfg.validate().map_err(propagation_error)?;

    let outcome = run_propagation(&graph, &cfg).map_err(propagation_error)?;
    for tag in &outcome.dropped_seeds {
        warn!("seed hashtag {tag:?} does not occur in the graph");
    }
    run.write(&a.out, |w| {
        outcome.users.write_tsv(w, graph.users(), &names).map_err(io_err(&a.out))
    })?;
    if let Some(path) = &a.hashtags_out {
        run.write(path, |w| {
            outcome.hashtags.write_tsv(w, graph.hashtags(), &names).map_err(io_err(path))
        })?;
    }
    let [u1, u2] = outcome.users.count_by_stance();
    let [h1, h2] = outcome.hashtags.count_by_stance();
    println!(
        "{}",
        json!({
            "iterations": outcome.iterations,
            "converged": outcome.converged,
            "users": { names.name(crate::Stance::S1): u1, names.name(crate::Stance::S2): u2, "total": graph.n_users() },
            "hashtags": { names.name(crate::Stance::S1): h1, names.name(crate::Stance::S2): h2, "total": graph.n_hashtags() },
            "dropped_seeds": outcome.dropped_seeds,
        })
    );
    run.finish(&a.out, to_value(&cfg), None)
}

fn ingest(a: IngestArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("ingest", args);
    let bytes = run.input(&a.tweets)?;
    let records = read_tweets_any(&bytes).map_err(|e| bad_input(&a.tweets, e))?;
    let dim = match (a.dim, records.first()) {
        (Some(d), _) => d,
        (None, Some(r)) => r.embedding.len(),
        (None, None) => return Err(bad_input(&a.tweets, "no tweet records")),
    };
    if dim == 0 {
        return Err(CliError::config("embedding dimension must be positive"));
    }
    let table = pool_user_features(&records, dim).map_err(|e| bad_input(&a.tweets, e))?;
    let (graph, stats) = match &a.interactions {
        Some(path) => {
            let bytes = run.input(path)?;
            let list = read_interactions(&bytes[..]).map_err(|e| bad_input(path, e))?;
            graph_from_interactions(list, &table).map_err(|e| bad_input(path, e))?
        }
        None => build_interaction_graph(&records, &table).map_err(|e| bad_input(&a.tweets, e))?,
    };
    run.write(&a.out, |w| graph.write_binary(w).map_err(CliError::runtime))?;
    println!("{}", to_value(&stats));
    run.finish(&a.out, json!({ "dim": dim }), None)
}

fn train(a: TrainArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("train", args);
    let names = stance_names(&a.stances, StanceNames::default())?;
    let bytes = run.input(&a.graph)?;
    let graph = InteractionGraph::read_binary(&bytes[..]).map_err(|e| bad_input(&a.graph, e))?;
    let bytes = run.input(&a.labels)?;
    let records = read_label_records(&bytes[..], &names, Provenance::Propagated).map_err(|e| bad_input(&a.labels, e))?;
    let (labels, unknown) = assignment_from_records(&records, graph.users());
    if unknown > 0 {
        warn!("{unknown} labeled users are not in the interaction graph");
    }

    let mut cfg = load_config(&mut run, a.config.as_deref(), TrainConfig::default(), &a.sets)?;
    if let Some(model) = &a.model {
        let kind: ModelKind = model.parse().map_err(CliError::config)?;
        let layer = kind
            .layer_kind()
            .ok_or_else(|| CliError::config("weighted-random has nothing to train"))?;
        cfg = cfg.with_kind(layer);
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    cfg.validate().map_err(gnn_error)?;

    let (model, history) = if cfg.architecture.kind == LayerKind::Dense && cfg.layers.is_none() {
        gnn::mlp_baseline(&feature_matrix(&graph), &labels, &cfg)
    } else {
        gnn::train(&graph, &labels, &cfg)
    }
    .map_err(gnn_error)?;

    run.write(&a.out, |w| model.write_checkpoint(w).map_err(gnn_error))?;
    if let Some(path) = &a.history {
        run.write_json(path, &history)?;
    }
    println!(
        "trained on {} users, validated on {}; best epoch {} of {}{}",
        history.train_size,
        history.val_size,
        history.best_epoch,
        history.epochs.len(),
        if history.stopped_early { " (stopped early)" } else { "" }
    );
    run.finish(&a.out, to_value(&cfg), Some(cfg.seed))
}

fn predict(a: PredictArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("predict", args);
    let names = stance_names(&a.stances, StanceNames::default())?;
    let bytes = run.input(&a.model)?;
    let model = Model::read_checkpoint(&bytes[..]).map_err(|e| bad_input(&a.model, e))?;
    let bytes = run.input(&a.graph)?;
    let graph = InteractionGraph::read_binary(&bytes[..]).map_err(|e| bad_input(&a.graph, e))?;
    let pred = if model.is_dense_only() {
        gnn::predict_features(&model, &feature_matrix(&graph))
    } else {
        gnn::predict(&model, &graph)
    }
    .map_err(gnn_error)?;
    run.write(&a.out, |w| {
        pred.labels.write_tsv(w, graph.users(), &names).map_err(io_err(&a.out))
    })?;
    if let Some(path) = &a.probabilities {
        run.write(path, |w| write_probabilities(w, graph.users(), &pred.probabilities).map_err(io_err(path)))?;
    }
    let [n1, n2] = pred.labels.count_by_stance();
    println!(
        "{}: {n1}, {}: {n2}",
        names.name(crate::Stance::S1),
        names.name(crate::Stance::S2)
    );
    run.finish(&a.out, json!({}), None)
}

fn write_probabilities(w: &mut dyn Write, users: &Interner, probs: &[[f64; 2]]) -> std::io::Result<()> {
    for (name, [p1, p2]) in users.names().iter().zip(probs) {
        writeln!(w, "{name}\t{p1:.6}\t{p2:.6}")?;
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("evaluate", args);
    let names = stance_names(&a.stances, StanceNames::default())?;
    let bytes = run.input(&a.truth)?;
    let truth_records =
        read_label_records(&bytes[..], &names, Provenance::Annotated).map_err(|e| bad_input(&a.truth, e))?;
    let bytes = run.input(&a.pred)?;
    let pred_records =
        read_label_records(&bytes[..], &names, Provenance::Predicted).map_err(|e| bad_input(&a.pred, e))?;

    let mut entities: Vec<&str> = truth_records
        .iter()
        .filter(|r| r.stance.is_some())
        .map(|r| r.entity.as_str())
        .collect();
    entities.sort_unstable();
    entities.dedup();
    let domain = Interner::from_names(entities);
    let (truth, _) = assignment_from_records(&truth_records, &domain);
    let (pred, extra) = assignment_from_records(&pred_records, &domain);
    if extra > 0 {
        info!("{extra} predictions have no truth label and are ignored");
    }
    let missing = truth.iter().filter(|(id, _)| pred.stance(*id).is_none()).count();
    if missing > 0 {
        warn!("{missing} truth entities have no prediction; counted as errors");
    }
    let metrics = score_trial(&pred, &truth).map_err(eval_error)?;
    let report = EvalReport::from_trials(a.name.clone(), vec![metrics]).map_err(eval_error)?;

    match &a.out {
        Some(path) => run.write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(CliError::runtime)?),
    }
    if let Some(path) = &a.table {
        run.write(path, |w| {
            write_table(w, &["labels"], &[(a.name.as_str(), vec![&report])]).map_err(eval_error)
        })?;
    }
    eprintln!(
        "F1 {:.4} precision {:.4} recall {:.4} accuracy {:.4} over {} users",
        report.mean.f1,
        report.mean.precision,
        report.mean.recall,
        report.mean.accuracy,
        truth.len()
    );
    match a.out.as_ref().or(a.table.as_ref()) {
        Some(primary) => {
            let primary = primary.clone();
            run.finish(&primary, json!({ "name": a.name }), None)
        }
        None => {
            run.outputs.commit()?;
            Ok(())
        }
    }
}

/// Stages the generator's files into `dir`.
fn stage_dataset(
    run: &mut Run,
    dir: &Path,
    ds: &crate::synth::SynthDataset,
    names: &StanceNames,
) -> Result<SynthFiles, CliError> {
    let files = SynthFiles::in_dir(dir);
    run.write(&files.posts, |w| write_posts(w, &ds.posts).map_err(io_err(&files.posts)))?;
    run.write(&files.tweets, |w| write_tweet_jsonl(w, &ds.tweets).map_err(CliError::runtime))?;
    run.write(&files.truth, |w| ds.write_truth(w, names).map_err(io_err(&files.truth)))?;
    for (path, seeds) in files.seeds.iter().zip(&ds.seeds) {
        run.write(path, |w| write_seed_file(w, seeds).map_err(io_err(path)))?;
    }
    run.write_json(&dir.join("config.json"), &ds.config)?;
    Ok(files)
}

fn synth(a: SynthArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("synth", args);
    let names = stance_names(&a.stances, StanceNames::default())?;
    let preset = SynthConfig::preset(&a.preset).map_err(synth_error)?;
    let mut cfg = load_config(&mut run, a.config.as_deref(), preset, &a.sets)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(synth_error)?;
    let ds = generate(&cfg).map_err(synth_error)?;
    stage_dataset(&mut run, &a.out_dir, &ds, &names)?;
    println!(
        "users {} posts {} tweets {} cross-community interactions {:.4}",
        ds.truth.len(),
        ds.posts.len(),
        ds.tweets.len(),
        ds.cross_fraction()
    );
    run.finish(&a.out_dir, to_value(&cfg), Some(cfg.seed))
}

fn annotate(a: AnnotateArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("annotate", args);
    let default_topic: Option<Topic> = a.topic.as_deref().map(str::parse).transpose().map_err(CliError::config)?;
    let bytes = run.input(&a.requests)?;
    let text = String::from_utf8(bytes).map_err(|e| bad_input(&a.requests, e))?;
    let mut requests = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: &dyn Display| bad_input(&a.requests, format!("line {}: {e}", i + 1));
        let mut v: Value = serde_json::from_str(line).map_err(|e| at(&e))?;
        let obj = v.as_object_mut().ok_or_else(|| at(&"expected a JSON object"))?;
        if !obj.contains_key("topic") {
            let topic = default_topic.ok_or_else(|| {
                CliError::config(format!("request on line {} has no topic; pass --topic", i + 1))
            })?;
            obj.insert("topic".into(), to_value(&topic));
        }
        let req: AnnotationRequest = serde_json::from_value(v).map_err(|e| at(&e))?;
        requests.push(req);
    }

    let mut endpoint = load_config(&mut run, a.endpoint_config.as_deref(), EndpointConfig::default(), &[])?;
    if let Some(url) = &a.url {
        endpoint.url = url.clone();
    }
    if let Some(model) = &a.model {
        endpoint.model = model.clone();
    }
    if a.concurrency == 0 {
        return Err(CliError::config("--concurrency must be at least 1"));
    }
    if matches!(a.rate, Some(r) if !(r.is_finite() && r > 0.0)) {
        return Err(CliError::config("--rate must be positive"));
    }
    let opts = BatchOptions {
        rate_per_second: a.rate,
        concurrency: a.concurrency,
        journal: a.journal.clone(),
        max_attempts: endpoint.max_attempts,
        backoff: Duration::from_millis(endpoint.backoff_ms),
        cancel: None,
    };
    let config = json!({
        "endpoint": endpoint,
        "rate_per_second": a.rate,
        "concurrency": a.concurrency,
        "journal": a.journal,
    });
    let backend = HttpBackend::from_env(endpoint).map_err(annotate_error)?;
    let report = annotate_batch(&requests, &backend, &opts, &SystemClock::new()).map_err(annotate_error)?;

    for f in &report.failed {
        warn!("user {}: {}", f.user_id, f.error);
    }
    if report.results.is_empty() && !report.failed.is_empty() {
        return Err(CliError::runtime(format!(
            "all {} users failed; first error: {}",
            report.failed.len(),
            report.failed[0].error
        )));
    }
    run.write(&a.out, |w| write_results(w, &report.results).map_err(io_err(&a.out)))?;
    if !report.failed.is_empty() {
        let mut name = a.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".failed");
        let path = a.out.with_file_name(name);
        run.write(&path, |w| {
            for f in &report.failed {
                writeln!(w, "{}\t{}", f.user_id, f.error.replace(['\t', '\n'], " ")).map_err(io_err(&path))?;
            }
            Ok(())
        })?;
    }
    println!(
        "annotated {} users ({} from journal), {} failed, {} calls in {:.1}s",
        report.results.len(),
        report.resumed,
        report.failed.len(),
        report.calls,
        report.elapsed.as_secs_f64()
    );
    run.finish(&a.out, config, None)
}

/// Splits on commas outside brackets, so JSON arrays survive as values.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// Parses `preset=NAME[,key=value...]` into a generator config.
fn parse_synth_spec(spec: &str) -> Result<SynthConfig, CliError> {
    let mut preset = "default";
    let mut sets = Vec::new();
    for part in split_top_level(spec).into_iter().map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('=') {
            Some(("preset", name)) => preset = name,
            Some(_) => sets.push(part.to_string()),
            None => return Err(CliError::config(format!("--synth expects key=value items, got {part:?}"))),
        }
    }
    let base = SynthConfig::preset(preset).map_err(synth_error)?;
    let value = apply_sets(to_value(&base), &sets)?;
    let cfg: SynthConfig = serde_json::from_value(value).map_err(|e| CliError::config(format!("--synth: {e}")))?;
    cfg.validate().map_err(synth_error)?;
    Ok(cfg)
}

#[derive(Serialize, serde::Deserialize)]
struct PipelineConfig {
    propagation: PropagationConfig,
    train: TrainConfig,
}

fn pipeline(a: PipelineArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("pipeline", args);
    let names = stance_names(&a.stances, StanceNames::default())?;
    let model: ModelKind = a.model.parse().map_err(CliError::config)?;
    if a.trials == 0 {
        return Err(CliError::config("--trials must be at least 1"));
    }

    let (data, dataset_cfg) = match (&a.synth, &a.posts) {
        (Some(spec), _) => {
            let cfg = parse_synth_spec(spec)?;
            let ds = generate(&cfg).map_err(synth_error)?;
            stage_dataset(&mut run, &a.out_dir.join("data"), &ds, &names)?;
            (PreparedData::from_dataset(&ds).map_err(eval_error)?, Some(cfg))
        }
        (None, Some(posts_path)) => {
            let (Some(tweets_path), Some(s1), Some(s2)) = (&a.tweets, &a.seeds_s1, &a.seeds_s2) else {
                return Err(CliError::config("--posts needs --tweets, --seeds-s1 and --seeds-s2"));
            };
            let bytes = run.input(posts_path)?;
            let posts = read_posts(&bytes[..]).map_err(|e| bad_input(posts_path, e))?;
            let bytes = run.input(tweets_path)?;
            let tweets = read_tweets_any(&bytes).map_err(|e| bad_input(tweets_path, e))?;
            let dim = tweets
                .first()
                .map(|r| r.embedding.len())
                .ok_or_else(|| bad_input(tweets_path, "no tweet records"))?;
            let seeds = [read_seeds(&mut run, s1)?, read_seeds(&mut run, s2)?];
            let truth = match &a.truth {
                Some(path) => {
                    let bytes = run.input(path)?;
                    read_label_records(&bytes[..], &names, Provenance::Annotated)
                        .map_err(|e| bad_input(path, e))?
                        .into_iter()
                        .filter_map(|r| r.stance.map(|s| (r.entity, s)))
                        .collect()
                }
                None => Vec::new(),
            };
            let data = PreparedData::from_parts(&posts, &tweets, dim, seeds, truth).map_err(|e| match e {
                EvalError::Trial { message, .. } => CliError::data(message),
                e => eval_error(e),
            })?;
            (data, None)
        }
        (None, None) => return Err(CliError::config("pass --synth or --posts")),
    };

    let train = match &a.train_config {
        Some(path) => {
            let bytes = run.input(path)?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    let mut propagation = PropagationConfig::default();
    propagation.seeds = data.seeds.clone();
    let resolved = apply_sets(to_value(&PipelineConfig { propagation, train }), &a.sets)?;
    let cfg: PipelineConfig =
        serde_json::from_value(resolved).map_err(|e| CliError::config(format!("config: {e}")))?;
    cfg.propagation.validate().map_err(propagation_error)?;
    cfg.train.validate().map_err(gnn_error)?;
    let base_seed = a.seed.unwrap_or(DEFAULT_SEED);

    let spec = ExperimentSpec {
        name: model.as_str().to_string(),
        model,
        dataset: dataset_cfg.clone().unwrap_or_default(),
        propagation: cfg.propagation.clone(),
        train: cfg.train.clone(),
        scope: if a.held_out { EvalScope::HeldOut } else { EvalScope::All },
        base_seed,
    };

    let stage_one = run_propagation(&data.bipartite, &spec.propagation).map_err(propagation_error)?;
    let quality = stage_one_quality(&data, &stage_one);
    let dir = &a.out_dir;
    let users_path = dir.join("stage1_users.tsv");
    run.write(&users_path, |w| {
        stage_one.users.write_tsv(w, data.bipartite.users(), &names).map_err(io_err(&users_path))
    })?;
    let tags_path = dir.join("stage1_hashtags.tsv");
    run.write(&tags_path, |w| {
        stage_one.hashtags.write_tsv(w, data.bipartite.hashtags(), &names).map_err(io_err(&tags_path))
    })?;

    let mut outcomes = Vec::with_capacity(a.trials);
    for trial in 0..a.trials {
        let result = run_model_trial(&data, &stage_one, &spec, trial).map_err(eval_error)?;
        if trial == 0 {
            let path = dir.join("predictions.tsv");
            run.write(&path, |w| {
                result.predictions.write_tsv(w, data.interaction.users(), &names).map_err(io_err(&path))
            })?;
            if let Some(probs) = &result.probabilities {
                let path = dir.join("probabilities.tsv");
                run.write(&path, |w| write_probabilities(w, data.interaction.users(), probs).map_err(io_err(&path)))?;
            }
            if let Some(m) = &result.model {
                run.write(&dir.join("model.sgm"), |w| m.write_checkpoint(w).map_err(gnn_error))?;
            }
        }
        if let Some(m) = &result.outcome.metrics {
            info!("trial {trial}: F1 {:.4}", m.f1);
        }
        outcomes.push(result.outcome);
    }

    let metrics: Option<Vec<_>> = outcomes.iter().map(|o| o.metrics.clone()).collect();
    let report = match metrics {
        Some(m) => Some(EvalReport::from_trials(spec.name.clone(), m).map_err(eval_error)?),
        None => None,
    };
    if let Some(r) = &report {
        run.write_json(&dir.join("report.json"), r)?;
        let path = dir.join("report.tsv");
        run.write(&path, |w| {
            write_table(w, &["stage-one labels"], &[(spec.name.as_str(), vec![r])]).map_err(eval_error)
        })?;
    }
    let summary = json!({
        "model": spec.name,
        "users": data.interaction.n_nodes(),
        "hashtag_users": data.bipartite.n_users(),
        "hashtags": data.bipartite.n_hashtags(),
        "stage_one": quality,
        "trials": outcomes,
    });
    run.write_json(&dir.join("summary.json"), &summary)?;

    println!(
        "stage one: {} iterations, coverage {:.4}, accuracy {:.4}",
        quality.iterations, quality.coverage, quality.accuracy
    );
    match &report {
        Some(r) => println!(
            "{}: F1 {:.4} ± {:.4} over {} trial(s)",
            spec.name, r.mean.f1, r.stdev.f1, r.trial_count
        ),
        None => println!("{}: no truth labels, predictions only", spec.name),
    }
    let config = json!({ "dataset": dataset_cfg, "pipeline": to_value(&cfg), "held_out": a.held_out, "trials": a.trials });
    run.finish(dir, config, Some(base_seed))
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    let manifest = RunManifest::read(&a.manifest)?;
    for (path, digest) in &manifest.inputs {
        let now = sha256_file(Path::new(path)).map_err(|e| CliError::config(format!("{path}: {e}")))?;
        if &now != digest {
            return Err(CliError::data(format!("input {path} changed since the recorded run")));
        }
    }
    let argv = std::iter::once("stancegraph".to_string()).chain(manifest.args.iter().cloned());
    super::run_from(argv)?;
    let mut mismatched: Vec<&str> = Vec::new();
    for (path, digest) in &manifest.outputs {
        match sha256_file(&PathBuf::from(path)) {
            Ok(d) if &d == digest => {}
            _ => mismatched.push(path),
        }
    }
    if !mismatched.is_empty() {
        return Err(CliError::runtime(format!("outputs differ from the recorded run: {}", mismatched.join(", "))));
    }
    println!("replay reproduced {} output(s) byte for byte", manifest.outputs.len());
    Ok(())
}
