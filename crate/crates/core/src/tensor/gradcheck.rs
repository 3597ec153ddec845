use std::collections::BTreeMap;

use super::{Graph, NamedTensors, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub coordinates: usize,
}

/// Compares reverse-mode gradients of `f` against central differences
/// `(f(θ+eps) − f(θ−eps)) / 2eps`, coordinate by coordinate.
///
/// The relative error of a coordinate is `|a − n| / max(|a|, |n|, 1e-8)`.
/// `f` receives a fresh graph and one `Var` per named parameter and must
/// return a scalar.
pub fn grad_check<F>(params: &NamedTensors, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &BTreeMap<String, Var>) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: BTreeMap<String, Var> = params
        .iter()
        .map(|(name, t)| (name.clone(), g.param(name.clone(), t.clone())))
        .collect();
    let loss = f(&mut g, &vars)?;
    let analytic = g.backward(loss)?.into_named();

    let eval = |work: &NamedTensors, name: &str| -> Result<f64> {
        let mut g = Graph::new();
        let vars: BTreeMap<String, Var> = work
            .iter()
            .map(|(n, t)| (n.clone(), g.input(t.clone())))
            .collect();
        let out = f(&mut g, &vars).map_err(|e| match e {
            Error::Numerical { detail, .. } => Error::Numerical {
                param: name.to_string(),
                detail,
            },
            other => other,
        })?;
        Ok(g.value(out).data()[0])
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        coordinates: 0,
    };
    for (name, tensor) in params {
        let grad = &analytic[name];
        for i in 0..tensor.numel() {
            let orig = tensor.data()[i];
            work.get_mut(name).unwrap().data_mut()[i] = orig + eps;
            let plus = eval(&work, name)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig - eps;
            let minus = eval(&work, name)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[i];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::Numerical {
                    param: name.clone(),
                    detail: format!("non-finite gradient estimate at index {i}"),
                });
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
