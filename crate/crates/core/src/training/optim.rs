use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::{NamedTensors, Tensor};

/// Global L2 norm over every gradient.
pub fn global_norm(grads: &NamedTensors) -> f64 {
    grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// Rescales all gradients by `max_norm / g` when their global norm `g`
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut NamedTensors, max_norm: f64) -> Result<f64> {
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
        return Err(Error::Numerical {
            param: name.clone(),
            detail: "non-finite gradient".into(),
        });
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= scale);
        }
    }
    Ok(norm)
}

/// Adam moments for every parameter plus the number of steps taken.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: NamedTensors,
    pub v: NamedTensors,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: NamedTensors = params
            .named()
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update:
/// `θ ← θ − lr · m̂ / (√v̂ + eps)` with `m̂ = m/(1−β1ᵗ)`, `v̂ = v/(1−β2ᵗ)`.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &NamedTensors,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (name, theta) in params.named_mut() {
        let (Some(g), Some(m), Some(v)) = (
            grads.get(name),
            state.m.get_mut(name),
            state.v.get_mut(name),
        ) else {
            return Err(Error::Config(format!(
                "no gradient or moments for `{name}`"
            )));
        };
        if g.shape() != theta.shape() {
            return Err(Error::dim("adam", theta.shape(), g.shape()));
        }
        let it = theta
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut()));
        for ((p, &g), (m, v)) in it {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}
