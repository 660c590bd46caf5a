use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{layer_forward, ActivationKind, LayerKind, LayerParams, LayerSpec, Neighborhood};
use super::GnnError;
use crate::binio;
use std::sync::Arc;

use crate::tensor::{Matrix, Scalar, Tape, Target, Var};

pub const MODEL_MAGIC: &[u8; 4] = b"SGM1";
pub const MODEL_VERSION: u32 = 1;

const MAX_LAYERS: u64 = 64;
const MAX_DIM: u64 = 1 << 20;

/// A layer stack with its parameters. The final layer emits two logits per
/// node, one per stance.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    layers: Vec<LayerSpec>,
    params: Vec<LayerParams>,
    sentiment_weighted: bool,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Matrix<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit) as f32).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Weighted cross-entropy of a layer stack under explicit parameters, and
/// its gradient with respect to every parameter tensor. `params[i]` holds
/// layer `i`'s weight, then bias and attention when present.
pub fn loss_and_gradients<T: Scalar>(
    layers: &[LayerSpec],
    params: &[Vec<Matrix<T>>],
    features: &Matrix<T>,
    nbhd: Option<&Neighborhood>,
    targets: &[Target],
) -> Result<(f64, Vec<Vec<Matrix<T>>>), GnnError> {
    if layers.len() != params.len() {
        return Err(GnnError::Config(format!(
            "{} layers but {} parameter groups",
            layers.len(),
            params.len()
        )));
    }
    let mut tape = Tape::new();
    let mut h = tape.leaf(features.clone());
    let mut vars = Vec::with_capacity(layers.len());
    for (spec, p) in layers.iter().zip(params) {
        let expected = 1 + usize::from(spec.bias) + usize::from(spec.kind == LayerKind::Gat);
        if p.len() != expected {
            return Err(GnnError::Config(format!("layer needs {expected} tensors, got {}", p.len())));
        }
        let pv: Vec<Var> = p.iter().map(|m| tape.leaf(m.clone())).collect();
        h = layer_forward(&mut tape, spec, &pv, h, nbhd)?;
        vars.push(pv);
    }
    let loss = tape.softmax_cross_entropy(h, Arc::new(targets.to_vec()));
    let grads = tape.backward(loss);
    let out = vars
        .iter()
        .zip(params)
        .map(|(pv, p)| {
            pv.iter()
                .zip(p)
                .map(|(&v, m)| grads.get_or_zeros(v, m.rows(), m.cols()))
                .collect()
        })
        .collect();
    Ok((tape.value(loss).get(0, 0).to_f64(), out))
}

pub(crate) fn check_stack(layers: &[LayerSpec]) -> Result<(), GnnError> {
    let Some(last) = layers.last() else {
        return Err(GnnError::Config("layer stack is empty".into()));
    };
    for l in layers {
        l.validate()?;
    }
    for pair in layers.windows(2) {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(GnnError::Config(format!(
                "layer output {} does not feed next input {}",
                pair[0].output_dim, pair[1].input_dim
            )));
        }
    }
    if last.output_dim != 2 {
        return Err(GnnError::Config(format!(
            "final layer must emit 2 logits, not {}",
            last.output_dim
        )));
    }
    Ok(())
}

impl Model {
    /// Glorot-uniform weights and attention vectors, zero biases.
    pub fn init(layers: Vec<LayerSpec>, sentiment_weighted: bool, seed: u64) -> Result<Self, GnnError> {
        check_stack(&layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layers
            .iter()
            .map(|l| LayerParams {
                weight: glorot(&mut rng, l.input_dim, l.output_dim, l.input_dim, l.output_dim),
                bias: l.bias.then(|| Matrix::zeros(1, l.output_dim)),
                attention: (l.kind == LayerKind::Gat)
                    .then(|| glorot(&mut rng, l.output_dim, 2, 2 * l.output_dim, 1)),
            })
            .collect();
        Ok(Self {
            layers,
            params,
            sentiment_weighted,
        })
    }

    pub fn from_parts(
        layers: Vec<LayerSpec>,
        params: Vec<LayerParams>,
        sentiment_weighted: bool,
    ) -> Result<Self, GnnError> {
        check_stack(&layers)?;
        if layers.len() != params.len() {
            return Err(GnnError::Config("one parameter set per layer is required".into()));
        }
        for (l, p) in layers.iter().zip(&params) {
            p.check(l)?;
        }
        Ok(Self {
            layers,
            params,
            sentiment_weighted,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn sentiment_weighted(&self) -> bool {
        self.sentiment_weighted
    }

    /// True when no layer passes messages (the MLP case).
    pub fn is_dense_only(&self) -> bool {
        self.layers.iter().all(|l| !l.uses_graph())
    }

    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .flat_map(|p| p.tensors())
            .map(|m| m.data().len())
            .sum()
    }

    /// Records the full forward pass. Returns the logits and, per layer, the
    /// variables holding its parameters (in [`LayerParams::tensors`] order).
    pub(crate) fn record<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        nbhd: Option<&Neighborhood>,
    ) -> Result<(Var, Vec<Vec<Var>>), GnnError> {
        let mut h = x;
        let mut vars = Vec::with_capacity(self.layers.len());
        for (spec, p) in self.layers.iter().zip(&self.params) {
            let pv: Vec<Var> = p.tensors().into_iter().map(|m| tape.leaf(m.cast())).collect();
            h = layer_forward(tape, spec, &pv, h, nbhd)?;
            vars.push(pv);
        }
        Ok((h, vars))
    }

    /// Logits for every node, `N × 2`.
    pub fn logits<T: Scalar>(&self, features: &Matrix<T>, nbhd: Option<&Neighborhood>) -> Result<Matrix<T>, GnnError> {
        let mut tape = Tape::new();
        let x = tape.leaf(features.clone());
        let (out, _) = self.record(&mut tape, x, nbhd)?;
        Ok(tape.value(out).clone())
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), GnnError> {
        w.write_all(MODEL_MAGIC)?;
        binio::write_u32(&mut w, MODEL_VERSION)?;
        binio::write_u8(&mut w, self.sentiment_weighted as u8)?;
        binio::write_u64(&mut w, self.layers.len() as u64)?;
        for (l, p) in self.layers.iter().zip(&self.params) {
            let kind = match l.kind {
                LayerKind::SageMean => 0,
                LayerKind::Gat => 1,
                LayerKind::Dense => 2,
            };
            let act = match l.activation {
                ActivationKind::Relu => 0,
                ActivationKind::Elu => 1,
                ActivationKind::Identity => 2,
            };
            binio::write_u8(&mut w, kind)?;
            binio::write_u8(&mut w, act)?;
            binio::write_u8(&mut w, l.bias as u8)?;
            binio::write_u64(&mut w, l.input_dim as u64)?;
            binio::write_u64(&mut w, l.output_dim as u64)?;
            binio::write_f64(&mut w, l.negative_slope)?;
            for m in p.tensors() {
                for &x in m.data() {
                    binio::write_f32(&mut w, x)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, GnnError> {
        let fmt = |e: std::io::Error| GnnError::Format(e.to_string());
        binio::read_magic(&mut r, MODEL_MAGIC).map_err(fmt)?;
        let version = binio::read_u32(&mut r).map_err(fmt)?;
        if version != MODEL_VERSION {
            return Err(GnnError::Format(format!("unsupported version {version}")));
        }
        let sentiment_weighted = match binio::read_u8(&mut r).map_err(fmt)? {
            0 => false,
            1 => true,
            b => return Err(GnnError::Format(format!("bad flag byte {b}"))),
        };
        let n = binio::read_len(&mut r, MAX_LAYERS, "layer count").map_err(fmt)?;
        let mut layers = Vec::with_capacity(n);
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let kind = match binio::read_u8(&mut r).map_err(fmt)? {
                0 => LayerKind::SageMean,
                1 => LayerKind::Gat,
                2 => LayerKind::Dense,
                b => return Err(GnnError::Format(format!("unknown layer kind {b}"))),
            };
            let activation = match binio::read_u8(&mut r).map_err(fmt)? {
                0 => ActivationKind::Relu,
                1 => ActivationKind::Elu,
                2 => ActivationKind::Identity,
                b => return Err(GnnError::Format(format!("unknown activation {b}"))),
            };
            let bias = binio::read_u8(&mut r).map_err(fmt)? != 0;
            let input_dim = binio::read_len(&mut r, MAX_DIM, "input dim").map_err(fmt)?;
            let output_dim = binio::read_len(&mut r, MAX_DIM, "output dim").map_err(fmt)?;
            let negative_slope = binio::read_f64(&mut r).map_err(fmt)?;
            let spec = LayerSpec {
                kind,
                input_dim,
                output_dim,
                activation,
                bias,
                negative_slope,
            };
            let mut read_matrix = |rows: usize, cols: usize| -> Result<Matrix<f32>, GnnError> {
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    data.push(binio::read_f32(&mut r).map_err(fmt)?);
                }
                Ok(Matrix::from_vec(rows, cols, data))
            };
            let weight = read_matrix(input_dim, output_dim)?;
            let bias_m = if bias { Some(read_matrix(1, output_dim)?) } else { None };
            let attention = if kind == LayerKind::Gat {
                Some(read_matrix(output_dim, 2)?)
            } else {
                None
            };
            layers.push(spec);
            params.push(LayerParams {
                weight,
                bias: bias_m,
                attention,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(GnnError::Format("trailing bytes".into()));
        }
        Self::from_parts(layers, params, sentiment_weighted).map_err(|e| GnnError::Format(e.to_string()))
    }
}
