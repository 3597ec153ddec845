use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{oracle, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, streams, Rng};

/// The toy problem families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Module {
    AddSub,
    Multiply,
    Compare,
    NestedFraction,
}

impl Module {
    pub const ALL: [Module; 4] = [
        Module::AddSub,
        Module::Multiply,
        Module::Compare,
        Module::NestedFraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Module::AddSub => "add_sub",
            Module::Multiply => "multiply",
            Module::Compare => "compare",
            Module::NestedFraction => "nested_fraction",
        }
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Module {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Module::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Module::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!(
                    "unknown module `{s}` (known: {})",
                    known.join(", ")
                ))
            })
    }
}

const CALC_TEMPLATES: [(&str, &str); 4] = [
    ("Calculate ", "."),
    ("What is ", "?"),
    ("Work out ", "."),
    ("Evaluate ", "."),
];

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// `n/d` in lowest terms, sign on the numerator.
fn fraction(n: i64, d: i64) -> String {
    let g = gcd(n, d);
    let (n, d) = if d < 0 {
        (-n / g, -d / g)
    } else {
        (n / g, d / g)
    };
    if d == 1 {
        n.to_string()
    } else {
        format!("{n}/{d}")
    }
}

fn calc(rng: &mut Rng, expr: String) -> String {
    let (pre, post) = CALC_TEMPLATES.choose(rng).expect("non-empty");
    format!("{pre}{expr}{post}")
}

fn draw(module: Module, rng: &mut Rng) -> (String, String) {
    match module {
        Module::AddSub => {
            let (a, b) = (rng.gen_range(0..=99i64), rng.gen_range(0..=99i64));
            if rng.gen_bool(0.5) {
                (calc(rng, format!("{a} + {b}")), (a + b).to_string())
            } else {
                (calc(rng, format!("{a} - {b}")), (a - b).to_string())
            }
        }
        Module::Multiply => {
            let (a, b) = (rng.gen_range(-20..=20i64), rng.gen_range(0..=20i64));
            (calc(rng, format!("{a}*{b}")), (a * b).to_string())
        }
        Module::Compare => {
            let a = rng.gen_range(-99..=99i64);
            let mut b = rng.gen_range(-99..=99i64);
            while b == a {
                b = rng.gen_range(-99..=99i64);
            }
            if rng.gen_bool(0.5) {
                (
                    format!("Which is bigger: {a} or {b}?"),
                    a.max(b).to_string(),
                )
            } else {
                (
                    format!("Which is smaller: {a} or {b}?"),
                    a.min(b).to_string(),
                )
            }
        }
        Module::NestedFraction => {
            let mut part = || (rng.gen_range(1..=12i64), rng.gen_range(1..=12i64));
            let ((a, b), (c, d)) = (part(), part());
            if rng.gen_bool(0.5) {
                let q = calc(rng, format!("({a}/{b})/({c}/{d})"));
                (q, fraction(a * d, b * c))
            } else {
                let q = calc(rng, format!("({a}/{b})*({c}/{d})"));
                (q, fraction(a * c, b * d))
            }
        }
    }
}

fn checked(module: Module, question: String, answer: String) -> Result<Sample> {
    match oracle::answer(&question) {
        Some(expected) if expected == answer => Ok(Sample {
            question,
            answer,
            module: module.name().to_string(),
        }),
        other => Err(Error::Contract(format!(
            "generated `{question}` → `{answer}` but the evaluator gives {other:?}"
        ))),
    }
}

/// `n` problems of one family, deterministic in `seed`; every answer is
/// re-derived by an independent exact evaluator before it is emitted.
pub fn generate_dataset(module: &str, n: usize, seed: u64) -> Result<Vec<Sample>> {
    generate_excluding(module, n, seed, &HashSet::new())
}

/// Like [`generate_dataset`] but never emits a question in `exclude`, so a
/// held-out split can be made disjoint from a training split.
pub fn generate_excluding(
    module: &str,
    n: usize,
    seed: u64,
    exclude: &HashSet<String>,
) -> Result<Vec<Sample>> {
    let module: Module = module.parse()?;
    if n == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let mut rng = rng::stream(seed, streams::DATA);
    let mut out = Vec::with_capacity(n);
    let mut rejected = 0usize;
    while out.len() < n {
        let (q, a) = draw(module, &mut rng);
        if exclude.contains(&q) {
            rejected += 1;
            if rejected > 100 * n + 10_000 {
                return Err(Error::Config(format!(
                    "cannot draw {n} `{module}` questions outside the excluded set"
                )));
            }
            continue;
        }
        out.push(checked(module, q, a)?);
    }
    Ok(out)
}
