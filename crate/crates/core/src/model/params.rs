use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::tensor::{Graph, NamedTensors, Tensor, Var};

pub const EMBEDDING: &str = "embedding";
pub const INPUT_ROLE_W: &str = "input_role.w";
pub const INPUT_ROLE_B: &str = "input_role.b";

/// Attention sublayer prefixes: `enc.{l}.self`, `dec.{l}.self`, `dec.{l}.cross`.
pub fn attn_prefix(stack: &str, layer: usize, site: &str) -> String {
    format!("{stack}.{layer}.{site}")
}

/// Every learned array of the model, keyed by name.
///
/// Per-head projections are stored stacked: `w_q`, `w_k`, `w_v`, `w_r` are
/// `[heads·d_head, d_model]` with rows `h·d_head..(h+1)·d_head` belonging to
/// head `h`; `w_o` is `[d_model, heads·d_head]` with head `h` owning the
/// matching column block; `b_o` is `[heads, d_model]`, one bias per head.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    tensors: NamedTensors,
}

impl ModelParams {
    pub fn from_named(tensors: NamedTensors) -> Self {
        Self { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn named(&self) -> &NamedTensors {
        &self.tensors
    }

    pub fn named_mut(&mut self) -> &mut NamedTensors {
        &mut self.tensors
    }

    pub fn into_named(self) -> NamedTensors {
        self.tensors
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Checks that exactly the expected names are present with the expected
    /// shapes for `config`.
    pub fn check_layout(&self, config: &ModelConfig) -> Result<()> {
        let expected = layout(config);
        if expected.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "parameter count mismatch: expected {} arrays, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for spec in &expected {
            match self.tensors.get(&spec.name) {
                Some(t) if t.shape() == spec.shape.as_slice() => {}
                Some(t) => return Err(Error::dim("parameter layout", &spec.shape, t.shape())),
                None => return Err(Error::Config(format!("missing parameter `{}`", spec.name))),
            }
        }
        Ok(())
    }
}

/// Parameters bound into a graph for one forward pass.
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    /// Binds every parameter as a trainable leaf (`trainable`) or as a
    /// constant.
    pub fn bind(g: &mut Graph, params: &ModelParams, trainable: bool) -> Self {
        let vars = params
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    g.param(name.clone(), t.clone())
                } else {
                    g.input(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Self { vars }
    }

    pub fn from_vars(vars: BTreeMap<String, Var>) -> Self {
        Self { vars }
    }

    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not bound"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    Normal { mean: f64 },
    Xavier { bound: f64 },
    Zeros,
    Ones,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn xavier(fan_in: usize, fan_out: usize) -> Init {
    Init::Xavier {
        bound: (6.0 / (fan_in + fan_out) as f64).sqrt(),
    }
}

fn spec(name: String, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        name,
        shape: shape.to_vec(),
        init,
    }
}

fn attention_layout(out: &mut Vec<ParamSpec>, prefix: &str, c: &ModelConfig) {
    let (dz, dk, h) = (c.d_model, c.d_head(), c.heads);
    // per-head fan sizes: a d_head×d_model map in, a d_model×d_head map out
    let head_init = xavier(dz, dk);
    for m in ["q", "k", "v", "r"] {
        out.push(spec(format!("{prefix}.w_{m}"), &[h * dk, dz], head_init));
        // a key bias shifts every logit of a query row equally, which the
        // softmax cancels, so keys carry none
        if m != "k" {
            out.push(spec(format!("{prefix}.b_{m}"), &[h * dk], Init::Zeros));
        }
    }
    out.push(spec(format!("{prefix}.w_o"), &[dz, h * dk], head_init));
    out.push(spec(format!("{prefix}.b_o"), &[h, dz], Init::Zeros));
}

fn layer_norm_layout(out: &mut Vec<ParamSpec>, prefix: &str, c: &ModelConfig) {
    out.push(spec(format!("{prefix}.gain"), &[c.d_model], Init::Ones));
    out.push(spec(format!("{prefix}.bias"), &[c.d_model], Init::Zeros));
}

fn ff_layout(out: &mut Vec<ParamSpec>, prefix: &str, c: &ModelConfig) {
    let (dz, df) = (c.d_model, c.d_ff);
    out.push(spec(format!("{prefix}.w_f"), &[df, dz], xavier(dz, df)));
    out.push(spec(format!("{prefix}.b_f"), &[df], Init::Zeros));
    out.push(spec(format!("{prefix}.w_g"), &[dz, df], xavier(df, dz)));
    out.push(spec(format!("{prefix}.b_g"), &[dz], Init::Zeros));
}

/// Parameter names, shapes and initializers in generation order.
fn layout(c: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    out.push(spec(
        EMBEDDING.into(),
        &[c.d_model, c.vocab_size],
        Init::Normal { mean: 0.0 },
    ));
    out.push(spec(
        INPUT_ROLE_W.into(),
        &[c.d_model, c.d_model],
        Init::Normal { mean: 1.0 },
    ));
    out.push(spec(INPUT_ROLE_B.into(), &[c.d_model], Init::Zeros));
    for l in 0..c.layers {
        layer_norm_layout(&mut out, &format!("enc.{l}.ln_attn"), c);
        attention_layout(&mut out, &attn_prefix("enc", l, "self"), c);
        layer_norm_layout(&mut out, &format!("enc.{l}.ln_ff"), c);
        ff_layout(&mut out, &format!("enc.{l}.ff"), c);
        layer_norm_layout(&mut out, &format!("enc.{l}.ln_out"), c);
    }
    for l in 0..c.layers {
        layer_norm_layout(&mut out, &format!("dec.{l}.ln_self"), c);
        attention_layout(&mut out, &attn_prefix("dec", l, "self"), c);
        layer_norm_layout(&mut out, &format!("dec.{l}.ln_cross"), c);
        attention_layout(&mut out, &attn_prefix("dec", l, "cross"), c);
        layer_norm_layout(&mut out, &format!("dec.{l}.ln_ff"), c);
        ff_layout(&mut out, &format!("dec.{l}.ff"), c);
        layer_norm_layout(&mut out, &format!("dec.{l}.ln_out"), c);
    }
    out
}

/// Fresh parameters: embedding `N(0,1)`, input-role matrix `N(1,1)`, every
/// other matrix Xavier-uniform, biases zero, layer-norm gains one.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = rng::stream(seed, streams::INIT);
    let mut tensors = NamedTensors::new();
    for p in layout(config) {
        let n: usize = p.shape.iter().product();
        let data: Vec<f64> = match p.init {
            Init::Normal { mean } => {
                let dist = Normal::new(mean, 1.0).expect("unit variance");
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            }
            Init::Xavier { bound } => {
                let dist = Uniform::new_inclusive(-bound, bound);
                (0..n).map(|_| rng.sample(dist)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        tensors.insert(p.name, Tensor::new(p.shape, data)?);
    }
    Ok(ModelParams { tensors })
}

/// A generic, well-conditioned parameter point with the layout of `config`:
/// every entry `N(0, 0.3²)`, layer-norm gains `1 + N(0, 0.3²)`.
///
/// Useful for finite-difference checks, where the fresh initialization puts
/// the residual stream at a scale that drowns small gradients in roundoff.
pub fn random_point(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = rng::stream(seed, streams::ANALYSIS);
    let dist = Normal::new(0.0, 0.3).expect("positive std");
    let mut tensors = NamedTensors::new();
    for p in layout(config) {
        let n: usize = p.shape.iter().product();
        let offset = if p.init == Init::Ones { 1.0 } else { 0.0 };
        let data = (0..n).map(|_| offset + dist.sample(&mut rng)).collect();
        tensors.insert(p.name, Tensor::new(p.shape, data)?);
    }
    Ok(ModelParams { tensors })
}
