//! Why sums of attended fillers lose their pairing, and how role binding
//! keeps it.
//!
//! Stack of attention-only cells (no feed-forward, no layer norm, no biases):
//! `a` attends to `b` and `c` to `d`, then `e` attends to `a` and `c` with
//! weight ½ each. Swapping the pairing to `a→d`, `c→b` leaves the standard
//! result unchanged; binding each filler to its subject's role does not.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Square linear map stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub dim: usize,
    pub w: Vec<f64>,
}

impl Linear {
    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim * dim];
        (0..dim).for_each(|i| w[i * dim + i] = 1.0);
        Self { dim, w }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .chunks(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Cell states and maps of one scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub z_a: Vec<f64>,
    pub z_b: Vec<f64>,
    pub z_c: Vec<f64>,
    pub z_d: Vec<f64>,
    pub z_e: Vec<f64>,
    /// Output and value maps of the lower cell.
    pub o: Linear,
    pub v: Linear,
    /// Output and value maps of the upper cell.
    pub o_up: Linear,
    pub v_up: Linear,
}

impl Scenario {
    /// The upper cell's value-map argument `z_a + z_c + f_a + f_c`, where
    /// `f_x` is the filler cell `x` retrieved: `o(v(z_b))` for `a` unless
    /// `swapped`, in which case `a` retrieved `d`. With `roles = (r_a, r_c)`
    /// each filler is bound to its subject's role before `o`.
    pub fn upper_input(&self, swapped: bool, roles: Option<(&[f64], &[f64])>) -> Vec<f64> {
        let (from_a, from_c) = if swapped {
            (&self.z_d, &self.z_b)
        } else {
            (&self.z_b, &self.z_d)
        };
        let filler = |z: &[f64], role: Option<&[f64]>| {
            let v = self.v.apply(z);
            let bound = match role {
                Some(r) => hadamard(&v, r),
                None => v,
            };
            self.o.apply(&bound)
        };
        let f_a = filler(from_a, roles.map(|r| r.0));
        let f_c = filler(from_c, roles.map(|r| r.1));
        // fillers are summed on their own so both pairings add the same pair
        add(&add(&self.z_a, &self.z_c), &add(&f_a, &f_c))
    }

    /// `z_e + o_up(v_up(upper_input)) / 2`.
    pub fn output(&self, swapped: bool, roles: Option<(&[f64], &[f64])>) -> Vec<f64> {
        let up = self
            .o_up
            .apply(&self.v_up.apply(&self.upper_input(swapped, roles)));
        self.z_e.iter().zip(up).map(|(z, u)| z + u / 2.0).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BindingReport {
    pub dim: usize,
    pub trials: usize,
    /// Largest `‖z_e(pairing) − z_e(swapped)‖` under standard attention.
    pub standard_max_diff: f64,
    /// Trials where the standard outputs coincide exactly.
    pub standard_collisions: usize,
    /// Smallest output difference under role binding.
    pub tp_min_diff: f64,
    /// Trials where the role-bound outputs differ by at most `tolerance`.
    pub tp_collisions: usize,
    pub tolerance: f64,
}

impl BindingReport {
    pub fn standard_collision_rate(&self) -> f64 {
        self.standard_collisions as f64 / self.trials as f64
    }

    pub fn tp_collision_rate(&self) -> f64 {
        self.tp_collisions as f64 / self.trials as f64
    }
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Random scenarios with Gaussian states, maps and roles.
pub fn binding_ambiguity_demo(dim: usize, seed: u64, trials: usize) -> Result<BindingReport> {
    if dim < 2 || trials == 0 {
        return Err(Error::Config(
            "binding demo needs dim ≥ 2 and at least one trial".into(),
        ));
    }
    let tolerance = 1e-9;
    let mut rng = rng::stream(seed, streams::ANALYSIS);
    let mut draw =
        |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut report = BindingReport {
        dim,
        trials,
        standard_max_diff: 0.0,
        standard_collisions: 0,
        tp_min_diff: f64::INFINITY,
        tp_collisions: 0,
        tolerance,
    };
    for _ in 0..trials {
        let s = Scenario {
            z_a: draw(dim),
            z_b: draw(dim),
            z_c: draw(dim),
            z_d: draw(dim),
            z_e: draw(dim),
            o: Linear {
                dim,
                w: draw(dim * dim),
            },
            v: Linear {
                dim,
                w: draw(dim * dim),
            },
            o_up: Linear {
                dim,
                w: draw(dim * dim),
            },
            v_up: Linear {
                dim,
                w: draw(dim * dim),
            },
        };
        let (r_a, r_c) = (draw(dim), draw(dim));
        let std_diff = l2_diff(&s.output(false, None), &s.output(true, None));
        report.standard_max_diff = report.standard_max_diff.max(std_diff);
        report.standard_collisions += usize::from(std_diff == 0.0);
        let roles = Some((r_a.as_slice(), r_c.as_slice()));
        let tp_diff = l2_diff(&s.output(false, roles), &s.output(true, roles));
        report.tp_min_diff = report.tp_min_diff.min(tp_diff);
        report.tp_collisions += usize::from(tp_diff <= tolerance);
    }
    Ok(report)
}
