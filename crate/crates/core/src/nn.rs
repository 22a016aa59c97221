//! Fully connected SELU network with hand-written backprop and Adam.

use std::path::Path;

use base64::Engine as _;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene::write_file;

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Hidden-layer nonlinearity. `Identity` exists for closed-form tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Selu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Selu => selu(x),
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `z`, given `a = apply(z)`; SELU's negative
    /// branch is `a + λα`, which saves an `exp` per element.
    fn derivative_given(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Selu if z > 0.0 => SELU_LAMBDA,
            Activation::Selu => a + SELU_LAMBDA * SELU_ALPHA,
            Activation::Identity => 1.0,
        }
    }
}

/// Weights are stored `fan_in × fan_out` so a batch multiplies as `X·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub init_seed: u64,
    pub activation: Activation,
}

/// Parameter-shaped gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Pre-activations and activations from a forward pass.
pub struct ForwardCache {
    /// `pre[k]` is the input to activation k (hidden layers only).
    pre: Vec<Array2<f64>>,
    /// `post[0]` is the input batch; `post[k]` the k-th hidden output.
    post: Vec<Array2<f64>>,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::invalid(format!(
            "layer sizes {layer_sizes:?} need at least two positive entries"
        )));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::invalid("the output layer must have width 1"));
    }
    Ok(())
}

impl MlpParams {
    /// LeCun-normal weights (variance 1/fan_in) and zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("valid std");
            weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(&mut rng)));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            init_seed: seed,
            activation: Activation::Selu,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes
                .windows(2)
                .map(|p| Array2::zeros((p[0], p[1])))
                .collect(),
            biases: layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect(),
            init_seed: 0,
            activation: Activation::Selu,
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn d_in(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Parameters as one vector: per layer, weights row-major then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.num_params()),
                actual: format!("{}", flat.len()),
            });
        }
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.d_in() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input columns", self.d_in()),
                actual: format!("{}", x.ncols()),
            });
        }
        Ok(())
    }

    /// One energy per input row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        let last = self.weights.len() - 1;
        let mut h: Array2<f64> = x.to_owned();
        for k in 0..=last {
            let mut z = h.dot(&self.weights[k]);
            z += &self.biases[k];
            if k < last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            h = z;
        }
        Ok(h.index_axis_move(Axis(1), 0))
    }

    pub fn forward_with_cache(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let last = self.weights.len() - 1;
        let mut pre = Vec::with_capacity(last);
        let mut post = Vec::with_capacity(last + 1);
        post.push(x.to_owned());
        for k in 0..last {
            let mut z = post[k].dot(&self.weights[k]);
            z += &self.biases[k];
            let act = self.activation;
            let a = z.mapv(|v| act.apply(v));
            pre.push(z);
            post.push(a);
        }
        let mut out = post[last].dot(&self.weights[last]);
        out += &self.biases[last];
        Ok((out.index_axis_move(Axis(1), 0), ForwardCache { pre, post }))
    }

    /// Reverse-mode gradient of `Σ_i upstream[i] · energy_i`.
    pub fn backward_cached(&self, cache: &ForwardCache, upstream: ArrayView1<f64>) -> Result<Gradients> {
        let n = cache.post[0].nrows();
        if upstream.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} upstream values"),
                actual: format!("{}", upstream.len()),
            });
        }
        let last = self.weights.len() - 1;
        let mut gw = vec![Array2::zeros((0, 0)); last + 1];
        let mut gb = vec![Array1::zeros(0); last + 1];
        let mut delta: Array2<f64> = upstream.to_owned().insert_axis(Axis(1));
        for k in (0..=last).rev() {
            gw[k] = cache.post[k].t().dot(&delta);
            gb[k] = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.weights[k].t());
                let act = self.activation;
                ndarray::Zip::from(&mut back)
                    .and(&cache.pre[k - 1])
                    .and(&cache.post[k])
                    .for_each(|d, &z, &a| *d *= act.derivative_given(z, a));
                delta = back;
            }
        }
        Ok(Gradients {
            weights: gw,
            biases: gb,
        })
    }

    pub fn backward(&self, x: ArrayView2<f64>, upstream: ArrayView1<f64>) -> Result<Gradients> {
        let (_, cache) = self.forward_with_cache(x)?;
        self.backward_cached(&cache, upstream)
    }
}

impl Gradients {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &MlpParams) -> Self {
        Self::with_config(params, AdamConfig::default())
    }

    pub fn with_config(params: &MlpParams, config: AdamConfig) -> Self {
        let zeros = Gradients {
            weights: params.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: params.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        };
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// Bias-corrected Adam. Rejects non-finite or mis-shaped gradients before
/// touching any state.
pub fn optimizer_step(
    params: &mut MlpParams,
    grads: &Gradients,
    state: &mut OptimState,
    lr: f64,
) -> Result<()> {
    if grads.weights.len() != params.weights.len()
        || grads
            .weights
            .iter()
            .zip(&params.weights)
            .any(|(g, w)| g.dim() != w.dim())
        || grads
            .biases
            .iter()
            .zip(&params.biases)
            .any(|(g, b)| g.dim() != b.dim())
    {
        return Err(Error::ShapeMismatch {
            expected: format!("gradients for layers {:?}", params.layer_sizes),
            actual: "differently shaped gradients".into(),
        });
    }
    if !grads.is_finite() {
        let bad = grads.to_flat().iter().filter(|v| !v.is_finite()).count();
        return Err(Error::NonFinite {
            context: format!("gradient ({bad} of {} entries) at step {}", params.num_params(), state.step + 1),
        });
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.step += 1;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for k in 0..params.weights.len() {
        ndarray::Zip::from(&mut params.weights[k])
            .and(&grads.weights[k])
            .and(&mut state.m.weights[k])
            .and(&mut state.v.weights[k])
            .for_each(|p, &g, m, v| update(p, g, m, v));
        ndarray::Zip::from(&mut params.biases[k])
            .and(&grads.biases[k])
            .and(&mut state.m.biases[k])
            .and(&mut state.v.biases[k])
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    Ok(())
}

/// Provenance carried alongside checkpointed parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    /// "feasibility" or "shared".
    pub kind: String,
    pub candidate_set_hash: String,
    pub train_config_digest: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    activation: Activation,
    init_seed: u64,
    #[serde(flatten)]
    meta: CheckpointMeta,
    param_count: usize,
    payload_sha256: String,
}

const CKPT_FORMAT: &str = "grasp-ebm-checkpoint";

/// Header line (JSON) followed by base64 little-endian f64 parameters.
pub fn checkpoint_to_string(params: &MlpParams, meta: &CheckpointMeta) -> Result<String> {
    let bytes: Vec<u8> = params.to_flat().iter().flat_map(|v| v.to_le_bytes()).collect();
    let header = CheckpointHeader {
        format: CKPT_FORMAT.into(),
        version: 1,
        layer_sizes: params.layer_sizes.clone(),
        activation: params.activation,
        init_seed: params.init_seed,
        meta: meta.clone(),
        param_count: params.num_params(),
        payload_sha256: hex::encode(Sha256::digest(&bytes)),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    out.push_str(&base64::engine::general_purpose::STANDARD.encode(&bytes));
    out.push('\n');
    Ok(out)
}

pub fn checkpoint_from_str(text: &str) -> Result<(MlpParams, CheckpointMeta)> {
    let mut lines = text.lines();
    let header: CheckpointHeader = serde_json::from_str(lines.next().unwrap_or(""))?;
    if header.format != CKPT_FORMAT {
        return Err(Error::invalid(format!("not a checkpoint: format {}", header.format)));
    }
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(lines.next().unwrap_or("").trim())
        .map_err(|e| Error::invalid(format!("checkpoint payload: {e}")))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    if digest != header.payload_sha256 {
        return Err(Error::DigestMismatch {
            what: "checkpoint payload".into(),
            expected: header.payload_sha256,
            found: digest,
        });
    }
    let mut params = MlpParams::zeros(&header.layer_sizes)?;
    if bytes.len() % 8 != 0 || bytes.len() / 8 != params.num_params() || header.param_count != params.num_params() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} parameters for layers {:?}", params.num_params(), header.layer_sizes),
            actual: format!("{} bytes, header count {}", bytes.len(), header.param_count),
        });
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params.set_flat(&flat)?;
    params.init_seed = header.init_seed;
    params.activation = header.activation;
    if !params.is_finite() {
        return Err(Error::NonFinite {
            context: "checkpoint parameters".into(),
        });
    }
    Ok((params, header.meta))
}

pub fn save_checkpoint(path: &Path, params: &MlpParams, meta: &CheckpointMeta) -> Result<()> {
    write_file(path, checkpoint_to_string(params, meta)?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpParams, CheckpointMeta)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text).map_err(|e| match e {
        Error::Json(j) => Error::malformed(path, j.to_string()),
        Error::InvalidInput(m) => Error::malformed(path, m),
        other => other,
    })
}
