use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::GnnError;
use crate::graph::InteractionGraph;
use crate::tensor::{Activation, EdgeIndex, Matrix, Scalar, Tape, Var};

/// Floor applied to sentiment strengths before they weight messages.
const MIN_STRENGTH: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    SageMean,
    Gat,
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Elu,
    Identity,
}

impl ActivationKind {
    pub fn to_activation(self) -> Activation {
        match self {
            ActivationKind::Relu => Activation::Relu,
            ActivationKind::Elu => Activation::Elu(1.0),
            ActivationKind::Identity => Activation::Identity,
        }
    }
}

/// Shape and kind of one layer. Weights are applied as `H · W` with `W` of
/// shape `input_dim × output_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: ActivationKind,
    #[serde(default = "default_true")]
    pub bias: bool,
    /// Slope of the leaky ReLU applied to attention scores (GAT only).
    #[serde(default = "default_slope")]
    pub negative_slope: f64,
}

fn default_true() -> bool {
    true
}

fn default_slope() -> f64 {
    0.2
}

impl LayerSpec {
    pub fn new(kind: LayerKind, input_dim: usize, output_dim: usize, activation: ActivationKind) -> Self {
        Self {
            kind,
            input_dim,
            output_dim,
            activation,
            bias: true,
            negative_slope: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(GnnError::Config(format!("layer dims must be ≥ 1: {self:?}")));
        }
        if !self.negative_slope.is_finite() {
            return Err(GnnError::Config("negative slope must be finite".into()));
        }
        Ok(())
    }

    pub fn uses_graph(&self) -> bool {
        self.kind != LayerKind::Dense
    }
}

/// Trainable parameters of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weight: Matrix<f32>,
    pub bias: Option<Matrix<f32>>,
    /// `output_dim × 2`: column 0 scores the destination node, column 1 the
    /// source (the two halves of the concatenated attention vector).
    pub attention: Option<Matrix<f32>>,
}

impl LayerParams {
    pub fn check(&self, spec: &LayerSpec) -> Result<(), GnnError> {
        let ok = self.weight.shape() == (spec.input_dim, spec.output_dim)
            && self.bias.as_ref().map(Matrix::shape) == spec.bias.then_some((1, spec.output_dim))
            && self.attention.as_ref().map(Matrix::shape)
                == (spec.kind == LayerKind::Gat).then_some((spec.output_dim, 2));
        if ok {
            Ok(())
        } else {
            Err(GnnError::Config(format!("parameter shapes do not match {spec:?}")))
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix<f32>> {
        let mut v = vec![&self.weight];
        v.extend(self.bias.as_ref());
        v.extend(self.attention.as_ref());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<f32>> {
        let mut v = vec![&mut self.weight];
        v.extend(self.bias.as_mut());
        v.extend(self.attention.as_mut());
        v
    }
}

/// Message-passing structure: for every node `v`, the sources `Ñ(v)` (the
/// undirected neighbours plus `v` itself), with mean-aggregation
/// coefficients and optional attention offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    edges: Arc<EdgeIndex>,
    mean_coef: Vec<f64>,
    /// `ln(strength)` per edge when messages are sentiment weighted.
    score_offsets: Option<Vec<f64>>,
}

impl Neighborhood {
    /// With `sentiment_weighted`, the mean becomes a weighted mean by
    /// absolute sentiment strength (self-loops weigh 1) and attention
    /// softmax weights are rescaled by the same strengths.
    pub fn from_graph(graph: &InteractionGraph, sentiment_weighted: bool) -> Self {
        let adj = graph.undirected();
        let n = adj.n_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut sources = Vec::with_capacity(adj.neighbors.len() + n);
        let mut strengths = Vec::with_capacity(adj.neighbors.len() + n);
        for v in 0..n {
            let mut row: Vec<(u32, f64)> = adj
                .neighbors(v)
                .iter()
                .copied()
                .zip(adj.strengths(v).iter().copied())
                .collect();
            row.push((v as u32, 1.0));
            row.sort_by_key(|&(u, _)| u);
            for (u, s) in row {
                sources.push(u);
                strengths.push(s.max(MIN_STRENGTH));
            }
            offsets.push(sources.len());
        }
        Self::from_parts(EdgeIndex { offsets, sources }, sentiment_weighted.then_some(strengths))
    }

    /// Self-loops only.
    pub fn isolated(n: usize) -> Self {
        Self::from_parts(
            EdgeIndex {
                offsets: (0..=n).collect(),
                sources: (0..n as u32).collect(),
            },
            None,
        )
    }

    /// Builds from an explicit edge index that must already contain the
    /// self-loops. `strengths`, when given, holds one positive weight per edge.
    pub fn from_parts(edges: EdgeIndex, strengths: Option<Vec<f64>>) -> Self {
        let n = edges.n_dst();
        let mut mean_coef = vec![0.0; edges.n_edges()];
        for v in 0..n {
            let r = edges.offsets[v]..edges.offsets[v + 1];
            match &strengths {
                Some(s) => {
                    let total: f64 = s[r.clone()].iter().sum();
                    for k in r {
                        mean_coef[k] = s[k] / total;
                    }
                }
                None => {
                    let c = 1.0 / r.len() as f64;
                    for k in r {
                        mean_coef[k] = c;
                    }
                }
            }
        }
        let score_offsets = strengths.map(|s| s.iter().map(|x| x.ln()).collect());
        Self {
            edges: Arc::new(edges),
            mean_coef,
            score_offsets,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.edges.n_dst()
    }

    pub fn edge_index(&self) -> &EdgeIndex {
        &self.edges
    }

    /// Sources of `Ñ(v)`, sorted, including `v`.
    pub fn sources(&self, v: usize) -> &[u32] {
        &self.edges.sources[self.edges.offsets[v]..self.edges.offsets[v + 1]]
    }

    pub fn mean_coefficients(&self) -> &[f64] {
        &self.mean_coef
    }
}

/// Records one layer on the tape. `params` are the layer's weight, then bias
/// and attention when present.
pub(crate) fn layer_forward<T: Scalar>(
    tape: &mut Tape<T>,
    spec: &LayerSpec,
    params: &[Var],
    h: Var,
    nbhd: Option<&Neighborhood>,
) -> Result<Var, GnnError> {
    let (rows, cols) = tape.value(h).shape();
    if cols != spec.input_dim {
        return Err(GnnError::Dimension {
            expected: spec.input_dim,
            found: cols,
        });
    }
    let nbhd = match (spec.uses_graph(), nbhd) {
        (false, _) => None,
        (true, Some(n)) if n.n_nodes() == rows => Some(n),
        (true, Some(n)) => {
            return Err(GnnError::Dimension {
                expected: n.n_nodes(),
                found: rows,
            })
        }
        (true, None) => return Err(GnnError::Config("message passing layer needs a graph".into())),
    };
    let mut p = params.iter().copied();
    let weight = p.next().expect("weight parameter");
    let bias = if spec.bias { p.next() } else { None };
    let attention = if spec.kind == LayerKind::Gat { p.next() } else { None };

    let out = match spec.kind {
        LayerKind::Dense => tape.matmul(h, weight),
        LayerKind::SageMean => {
            let nb = nbhd.expect("checked above");
            let coef = Arc::new(nb.mean_coef.iter().map(|&c| T::from_f64(c)).collect());
            let agg = tape.aggregate(h, nb.edges.clone(), coef);
            tape.matmul(agg, weight)
        }
        LayerKind::Gat => {
            let nb = nbhd.expect("checked above");
            let z = tape.matmul(h, weight);
            let s = tape.matmul(z, attention.expect("attention parameter"));
            let e = tape.edge_scores(s, nb.edges.clone());
            let mut e = tape.activate(e, Activation::LeakyRelu(spec.negative_slope));
            if let Some(off) = &nb.score_offsets {
                let off = Matrix::from_vec(off.len(), 1, off.iter().map(|&x| T::from_f64(x)).collect());
                e = tape.add_constant(e, &off);
            }
            let alpha = tape.edge_softmax(e, nb.edges.clone());
            tape.attend_aggregate(alpha, z, nb.edges.clone())
        }
    };
    let out = match bias {
        Some(b) => tape.add_row_bias(out, b),
        None => out,
    };
    Ok(tape.activate(out, spec.activation.to_activation()))
}

fn single_layer<T: Scalar>(
    h: &Matrix<T>,
    nbhd: Option<&Neighborhood>,
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<(Tape<T>, Var), GnnError> {
    spec.validate()?;
    params.check(spec)?;
    let mut tape = Tape::new();
    let x = tape.leaf(h.clone());
    let vars: Vec<Var> = params.tensors().into_iter().map(|m| tape.leaf(m.cast())).collect();
    let out = layer_forward(&mut tape, spec, &vars, x, nbhd)?;
    Ok((tape, out))
}

/// GraphSAGE mean layer: `σ((mean_{u ∈ Ñ(v)} h_u) · W + b)`.
pub fn sage_forward<T: Scalar>(
    h: &Matrix<T>,
    nbhd: &Neighborhood,
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<Matrix<T>, GnnError> {
    if spec.kind != LayerKind::SageMean {
        return Err(GnnError::Config("sage_forward needs a sage-mean layer".into()));
    }
    let (tape, out) = single_layer(h, Some(nbhd), spec, params)?;
    Ok(tape.value(out).clone())
}

/// Single-head attention layer: `σ(Σ_u a_vu · (h_u · W) + b)` with
/// `a_vu = softmax_u(leaky_relu(a_dst·Wh_v + a_src·Wh_u))` over `Ñ(v)`.
pub fn gat_forward<T: Scalar>(
    h: &Matrix<T>,
    nbhd: &Neighborhood,
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<Matrix<T>, GnnError> {
    if spec.kind != LayerKind::Gat {
        return Err(GnnError::Config("gat_forward needs a gat layer".into()));
    }
    let (tape, out) = single_layer(h, Some(nbhd), spec, params)?;
    Ok(tape.value(out).clone())
}

/// Attention coefficients of a GAT layer, one per edge of the neighbourhood
/// in edge-index order.
pub fn gat_attention<T: Scalar>(
    h: &Matrix<T>,
    nbhd: &Neighborhood,
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<Vec<T>, GnnError> {
    if spec.kind != LayerKind::Gat {
        return Err(GnnError::Config("gat_attention needs a gat layer".into()));
    }
    spec.validate()?;
    params.check(spec)?;
    if h.cols() != spec.input_dim || h.rows() != nbhd.n_nodes() {
        return Err(GnnError::Dimension {
            expected: spec.input_dim,
            found: h.cols(),
        });
    }
    let mut tape = Tape::new();
    let x = tape.leaf(h.clone());
    let w = tape.leaf(params.weight.cast());
    let a = tape.leaf(params.attention.as_ref().expect("checked").cast());
    let z = tape.matmul(x, w);
    let s = tape.matmul(z, a);
    let e = tape.edge_scores(s, nbhd.edges.clone());
    let mut e = tape.activate(e, Activation::LeakyRelu(spec.negative_slope));
    if let Some(off) = &nbhd.score_offsets {
        let off = Matrix::from_vec(off.len(), 1, off.iter().map(|&x| T::from_f64(x)).collect());
        e = tape.add_constant(e, &off);
    }
    let alpha = tape.edge_softmax(e, nbhd.edges.clone());
    Ok(tape.value(alpha).data().to_vec())
}
