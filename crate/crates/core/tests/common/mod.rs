//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stancegraph::gnn::{loss_and_gradients, ActivationKind, LayerKind, LayerParams, LayerSpec, Neighborhood};
use stancegraph::graph::{build_bipartite, BipartiteGraph, Interner, Post, SignedEdge};
use stancegraph::tensor::{Matrix, Target};
use stancegraph::{InteractionGraph, Stance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// u1:{h1×3,h3}, u2:{h2×2,h3×2}, u3:{h3×5}; seeds h1 for S1, h2 for S2.
pub fn hand_trace_graph() -> BipartiteGraph {
    let posts = vec![
        Post::new("u1", ["h1", "h1", "h1", "h3"]),
        Post::new("u2", ["h2", "h2", "h3", "h3"]),
        Post::new("u3", ["h3", "h3", "h3", "h3", "h3"]),
    ];
    build_bipartite(posts).unwrap()
}

/// Random directed graph on `n` nodes with sentiment weights and Gaussian-ish
/// features.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, dim: usize, p: f64) -> InteractionGraph {
    let users = Interner::from_names((0..n).map(|i| format!("n{i:02}")));
    let mut edges = Vec::new();
    for s in 0..n as u32 {
        for t in 0..n as u32 {
            if s != t && rng.gen_bool(p) {
                edges.push(SignedEdge {
                    source: s,
                    target: t,
                    weight: rng.gen_range(-1.0..=1.0),
                    count: 1,
                });
            }
        }
    }
    let features = (0..n * dim).map(|_| rng.gen_range(-1.5f32..1.5)).collect();
    InteractionGraph::new(users, edges, features, dim, vec![1; n]).unwrap()
}

pub fn features(g: &InteractionGraph) -> Matrix<f64> {
    Matrix::from_vec(g.n_nodes(), g.dim(), g.features().iter().map(|&x| x as f64).collect())
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f32> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
}

pub fn random_params(rng: &mut ChaCha8Rng, spec: &LayerSpec) -> LayerParams {
    LayerParams {
        weight: random_matrix(rng, spec.input_dim, spec.output_dim),
        bias: spec.bias.then(|| random_matrix(rng, 1, spec.output_dim)),
        attention: (spec.kind == LayerKind::Gat).then(|| random_matrix(rng, spec.output_dim, 2)),
    }
}

/// Dense `Ã = A + I` of the undirected view, built straight from the edge list.
pub fn dense_adjacency(g: &InteractionGraph) -> Vec<Vec<f64>> {
    let n = g.n_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (v, row) in a.iter_mut().enumerate() {
        row[v] = 1.0;
    }
    for e in g.edges() {
        a[e.source as usize][e.target as usize] = 1.0;
        a[e.target as usize][e.source as usize] = 1.0;
    }
    a
}

fn act(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Relu => x.max(0.0),
        ActivationKind::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp_m1()
            }
        }
        ActivationKind::Identity => x,
    }
}

fn mat(m: &Matrix<f32>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).iter().map(|&x| x as f64).collect()).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

/// `σ(D̃⁻¹ Ã H W + b)` with dense matrices.
pub fn sage_oracle(h: &Matrix<f64>, adj: &[Vec<f64>], spec: &LayerSpec, p: &LayerParams) -> Vec<Vec<f64>> {
    let hv: Vec<Vec<f64>> = (0..h.rows()).map(|r| h.row(r).to_vec()).collect();
    let norm: Vec<Vec<f64>> = adj
        .iter()
        .map(|row| {
            let d: f64 = row.iter().sum();
            row.iter().map(|x| x / d).collect()
        })
        .collect();
    let out = matmul(&matmul(&norm, &hv), &mat(&p.weight));
    finish(out, spec, p)
}

fn finish(mut out: Vec<Vec<f64>>, spec: &LayerSpec, p: &LayerParams) -> Vec<Vec<f64>> {
    for row in &mut out {
        for (j, x) in row.iter_mut().enumerate() {
            let b = p.bias.as_ref().map_or(0.0, |b| b.get(0, j) as f64);
            *x = act(spec.activation, *x + b);
        }
    }
    out
}

/// Per-edge recomputation of a single-head attention layer. Returns the
/// output and, per destination, `(source, coefficient)` pairs.
pub fn gat_oracle(
    h: &Matrix<f64>,
    adj: &[Vec<f64>],
    spec: &LayerSpec,
    p: &LayerParams,
) -> (Vec<Vec<f64>>, Vec<Vec<(usize, f64)>>) {
    let hv: Vec<Vec<f64>> = (0..h.rows()).map(|r| h.row(r).to_vec()).collect();
    let z = matmul(&hv, &mat(&p.weight));
    let a = mat(p.attention.as_ref().unwrap());
    let dot = |v: &[f64], col: usize| v.iter().enumerate().map(|(k, x)| x * a[k][col]).sum::<f64>();
    let lrelu = |x: f64| if x > 0.0 { x } else { spec.negative_slope * x };
    let n = hv.len();
    let mut out = vec![vec![0.0; spec.output_dim]; n];
    let mut coefs = Vec::with_capacity(n);
    for v in 0..n {
        let nbrs: Vec<usize> = (0..n).filter(|&u| adj[v][u] > 0.0).collect();
        let scores: Vec<f64> = nbrs.iter().map(|&u| lrelu(dot(&z[v], 0) + dot(&z[u], 1))).collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let total: f64 = exps.iter().sum();
        let mut row = Vec::new();
        for (&u, e) in nbrs.iter().zip(&exps) {
            let alpha = e / total;
            for j in 0..spec.output_dim {
                out[v][j] += alpha * z[u][j];
            }
            row.push((u, alpha));
        }
        coefs.push(row);
    }
    (finish(out, spec, p), coefs)
}

/// Largest relative error, over all parameter tensors, between the analytic
/// gradient and central finite differences. Relative error is measured per
/// tensor as `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖)`.
pub fn gradient_check(
    layers: &[LayerSpec],
    params: &[Vec<Matrix<f64>>],
    x: &Matrix<f64>,
    nbhd: Option<&Neighborhood>,
    targets: &[Target],
    step: f64,
) -> f64 {
    let (_, grads) = loss_and_gradients(layers, params, x, nbhd, targets).unwrap();
    let mut worst = 0.0f64;
    for (li, group) in params.iter().enumerate() {
        for (ti, tensor) in group.iter().enumerate() {
            let mut diff2 = 0.0;
            let mut a2 = 0.0;
            let mut n2 = 0.0;
            for k in 0..tensor.data().len() {
                let eval = |delta: f64| {
                    let mut p = params.to_vec();
                    p[li][ti].data_mut()[k] += delta;
                    loss_and_gradients(layers, &p, x, nbhd, targets).unwrap().0
                };
                let numeric = (eval(step) - eval(-step)) / (2.0 * step);
                let analytic = grads[li][ti].data()[k];
                diff2 += (numeric - analytic).powi(2);
                a2 += analytic * analytic;
                n2 += numeric * numeric;
            }
            let scale = a2.sqrt().max(n2.sqrt());
            if scale > 1e-12 {
                worst = worst.max(diff2.sqrt() / scale);
            }
        }
    }
    worst
}

/// Macro F1 straight from its definition, with the zero-denominator
/// convention (0).
pub fn macro_f1_oracle(pairs: &[(Stance, Option<Stance>)]) -> f64 {
    let mut f1 = 0.0;
    for class in [Stance::S1, Stance::S2] {
        let tp = pairs.iter().filter(|(t, p)| *t == class && *p == Some(class)).count() as f64;
        let predicted = pairs.iter().filter(|(_, p)| *p == Some(class)).count() as f64;
        let support = pairs.iter().filter(|(t, _)| *t == class).count() as f64;
        let prec = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let rec = if support > 0.0 { tp / support } else { 0.0 };
        f1 += if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
    }
    f1 / 2.0
}

/// Expected macro F1 of sampling each label as S1 with probability `p1`,
/// estimated by simulation with an unrelated generator.
pub fn weighted_random_oracle(truth: &[Stance], p1: f64, draws: usize, seed: u64) -> f64 {
    use rand::rngs::StdRng;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..draws {
        let pairs: Vec<_> = truth
            .iter()
            .map(|&t| (t, Some(if rng.gen::<f64>() < p1 { Stance::S1 } else { Stance::S2 })))
            .collect();
        total += macro_f1_oracle(&pairs);
    }
    total / draws as f64
}

/// Weighted targets on every node, classes drawn at random.
pub fn random_targets(rng: &mut ChaCha8Rng, n: usize) -> Vec<Target> {
    (0..n as u32)
        .map(|row| Target {
            row,
            class: rng.gen_range(0..2),
            weight: rng.gen_range(0.5..2.0),
        })
        .collect()
}

pub fn stack(kind: LayerKind, input: usize, hidden: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(kind, input, hidden, ActivationKind::Elu),
        LayerSpec::new(kind, hidden, 2, ActivationKind::Identity),
    ]
}

pub fn params_f64(rng: &mut ChaCha8Rng, layers: &[LayerSpec]) -> Vec<Vec<Matrix<f64>>> {
    layers
        .iter()
        .map(|s| random_params(rng, s).tensors().into_iter().map(|m| m.cast()).collect())
        .collect()
}
