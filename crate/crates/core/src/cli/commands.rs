use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::Serialize;

use tp_transformer::analysis::{
    binding_ambiguity_demo, collect_traces, export_attention_maps, hadamard_compression_check,
    kmeans, reconstruction_probe, REFERENCE_MSE_BASELINE, REFERENCE_MSE_TP,
};
use tp_transformer::data::{self, encode_samples, Sample, Vocabulary};
use tp_transformer::model::TpTransformer;
use tp_transformer::rng::{self, streams};
use tp_transformer::training::{
    evaluate_exact_match, greedy_decode, load_checkpoint, save_checkpoint, tiny_grad_check, train,
    Checkpoint, Control, Trainer,
};

use super::config::RunConfig;
use super::{
    AnalyzeCommand, Command, DecodeArgs, EvalArgs, Failure, GenDataArgs, GradcheckArgs, TraceArgs,
    TrainArgs,
};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

type Outcome = Result<(), Failure>;

pub fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Decode(a) => decode(a),
        Command::Analyze(a) => analyze(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn read_samples(path: &Path) -> Result<Vec<Sample>, Failure> {
    Ok(data::read_jsonl(path)?)
}

fn write_text(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write_report<T: Serialize>(path: Option<&PathBuf>, report: &T) -> Outcome {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    match path {
        Some(p) => write_text(p, &(json + "\n")),
        None => Ok(()),
    }
}

fn gen_data(a: GenDataArgs) -> Outcome {
    let exclude: HashSet<String> = match &a.exclude {
        Some(p) => read_samples(p)?.into_iter().map(|s| s.question).collect(),
        None => HashSet::new(),
    };
    let samples = data::generate_excluding(&a.module, a.n, a.seed, &exclude)?;
    data::write_jsonl(&a.out, &samples)?;
    println!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

fn resolve(a: &TrainArgs) -> Result<RunConfig, Failure> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($field:expr, $flag:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(c.model.role_binding, a.role_binding);
    set!(c.model.d_model, a.d_model);
    set!(c.model.d_ff, a.d_ff);
    set!(c.model.heads, a.heads);
    set!(c.model.layers, a.layers);
    set!(c.train.max_steps, a.max_steps);
    set!(c.train.batch_size, a.batch_size);
    set!(c.train.learning_rate, a.learning_rate);
    set!(c.train.eval_every, a.eval_every);
    set!(c.train.seed, a.seed);
    if a.data.is_some() {
        c.paths.data = a.data.clone();
    }
    if a.eval_data.is_some() {
        c.paths.eval_data = a.eval_data.clone();
    }
    if a.out.is_some() {
        c.paths.out = a.out.clone();
    }
    if a.resume.is_some() {
        c.paths.resume = a.resume.clone();
    }
    Ok(c)
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let run = resolve(&a)?;
    let data_path = run
        .paths
        .data
        .clone()
        .ok_or_else(|| Failure::usage("no training data given"))?;
    let out = run
        .paths
        .out
        .clone()
        .ok_or_else(|| Failure::usage("no output directory given"))?;
    let train_set = read_samples(&data_path)?;
    let eval_set = match &run.paths.eval_data {
        Some(p) => Some(read_samples(p)?),
        None => None,
    };
    fs::create_dir_all(&out).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    write_text(&out.join("config.toml"), &run.to_toml())?;

    let (model, vocab, optimizer) = match &run.paths.resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            (ck.model, ck.vocab, Some(ck.optimizer))
        }
        None => {
            let mut corpus = train_set.clone();
            corpus.extend(eval_set.iter().flatten().cloned());
            let vocab = Vocabulary::build(&corpus)?;
            let cfg = run.model.with_vocab(vocab.len());
            (TpTransformer::new(cfg, run.train.seed)?, vocab, None)
        }
    };
    let encoded = encode_samples(&train_set, &vocab, &model.config)?;
    let mut trainer = match optimizer {
        Some(opt) => Trainer::resume(model, opt, run.train.clone(), encoded)?,
        None => Trainer::new(model, run.train.clone(), encoded)?,
    };

    let run_json = serde_json::to_value(&run).expect("run config serializes");
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = fs::File::create(&metrics_path)
        .map_err(|e| Failure::usage(format!("{}: {e}", metrics_path.display())))?;
    let io_err = |e: std::io::Error| Failure::usage(format!("{}: {e}", metrics_path.display()));
    writeln!(metrics, "{}", serde_json::json!({ "config": run_json })).map_err(io_err)?;

    let eval = eval_set.as_deref().map(|s| (&vocab, s));
    let result = train(&mut trainer, eval, |_, record| {
        match record.accuracy {
            Some(acc) => println!(
                "step {} loss {:.5} accuracy {:.4}",
                record.step, record.loss, acc
            ),
            None => println!("step {} loss {:.5}", record.step, record.loss),
        }
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(metrics, "{line}").map_err(|e| tp_transformer::Error::Contract(e.to_string()))?;
        Ok(Control::Continue)
    });

    let ckpt = Checkpoint {
        model: trainer.model.clone(),
        vocab,
        optimizer: trainer.optimizer.clone(),
        run: run_json,
    };
    let ckpt_path = out.join("model.ckpt");
    save_checkpoint(&ckpt_path, &ckpt)?;
    match result {
        Ok(_) => {
            println!("saved {} at step {}", ckpt_path.display(), trainer.step());
            Ok(())
        }
        Err(e) => Err(Failure::check(format!(
            "training aborted at step {}: {e}; last good state saved to {}",
            trainer.step(),
            ckpt_path.display()
        ))),
    }
}

fn eval(a: EvalArgs) -> Outcome {
    let ck = load_checkpoint(&a.ckpt)?;
    let samples = read_samples(&a.data)?;
    let acc = evaluate_exact_match(&ck.model, &ck.vocab, &samples)?;
    println!(
        "exact-match accuracy {acc:.4} over {} samples",
        samples.len()
    );
    Ok(())
}

fn decode(a: DecodeArgs) -> Outcome {
    let ck = load_checkpoint(&a.ckpt)?;
    let d = greedy_decode(&ck.model, &ck.vocab, &a.question, a.max_steps)?;
    println!("{}", d.text);
    if d.truncated {
        eprintln!(
            "warning: stopped after {} steps without an end symbol",
            a.max_steps
        );
    }
    Ok(())
}

/// Checkpoint, vocabulary and a seeded subsample of a dataset.
fn trace_inputs(t: &TraceArgs) -> Result<(Checkpoint, Vec<Sample>, usize), Failure> {
    let ck = load_checkpoint(&t.ckpt)?;
    let mut samples = read_samples(&t.data)?;
    samples.shuffle(&mut rng::stream(t.seed, streams::ANALYSIS));
    samples.truncate(t.n);
    let layer = t.layer.unwrap_or(ck.model.config.layers - 1);
    Ok((ck, samples, layer))
}

#[derive(Serialize)]
struct RoleReport<'a> {
    layer: usize,
    head: usize,
    k: usize,
    inertia: f64,
    history: &'a [f64],
    positions: Vec<PositionCluster<'a>>,
}

#[derive(Serialize)]
struct PositionCluster<'a> {
    sample: usize,
    position: usize,
    symbol: &'a str,
    cluster: usize,
}

fn analyze(cmd: AnalyzeCommand) -> Outcome {
    match cmd {
        AnalyzeCommand::Roles {
            trace,
            k,
            restarts,
            out,
        } => {
            let (ck, samples, layer) = trace_inputs(&trace)?;
            let set = collect_traces(&ck.model, &ck.vocab, &samples, layer, trace.head)?;
            let c = kmeans(&set.roles(), k, trace.seed, restarts)?;
            let report = RoleReport {
                layer,
                head: trace.head,
                k,
                inertia: c.inertia,
                history: &c.history,
                positions: set
                    .records
                    .iter()
                    .zip(&c.assignments)
                    .map(|(r, &cluster)| PositionCluster {
                        sample: r.sample,
                        position: r.position,
                        symbol: &r.symbol,
                        cluster,
                    })
                    .collect(),
            };
            write_report(Some(&out), &report)?;
            println!(
                "clustered {} role vectors into {k} clusters, inertia {:.6}; wrote {}",
                set.records.len(),
                c.inertia,
                out.display()
            );
            Ok(())
        }
        AnalyzeCommand::Attention { trace, k, out } => {
            let (ck, samples, layer) = trace_inputs(&trace)?;
            let set = collect_traces(&ck.model, &ck.vocab, &samples, layer, trace.head)?;
            let norm = set.trace.normalization();
            let clusters = if k > 0 {
                Some(kmeans(&set.roles(), k, trace.seed, 10)?)
            } else {
                None
            };
            let n = export_attention_maps(&set, clusters.as_ref(), &out)?;
            println!(
                "wrote {n} attention maps to {}; max row-sum error {:.3e}, masked non-zeros {}",
                out.display(),
                norm.max_row_error,
                norm.masked_nonzero
            );
            if norm.holds(1e-6) {
                Ok(())
            } else {
                Err(Failure::check("attention weights are not normalized"))
            }
        }
        AnalyzeCommand::Probe { ckpt, data, n, out } => {
            let ck = load_checkpoint(&ckpt)?;
            let samples = read_samples(&data)?;
            let r = reconstruction_probe(&ck.model, &ck.vocab, &samples, n)?;
            for (h, e) in r.per_head.iter().enumerate() {
                println!("head {h}: mse {e:.6}");
            }
            println!("mean mse {:.6} over {} positions", r.mean, r.positions);
            println!(
                "full-scale references: TP-Transformer ~{REFERENCE_MSE_TP}, Transformer ~{REFERENCE_MSE_BASELINE}"
            );
            write_report(out.as_ref(), &r)?;
            if r.per_head.iter().all(|e| e.is_finite()) {
                Ok(())
            } else {
                Err(Failure::check("non-finite probe error"))
            }
        }
        AnalyzeCommand::Binding {
            dim,
            trials,
            seed,
            out,
        } => {
            let r = binding_ambiguity_demo(dim, seed, trials)?;
            println!(
                "standard attention: collision rate {:.4} (max difference {:.3e})",
                r.standard_collision_rate(),
                r.standard_max_diff
            );
            println!(
                "role binding: collision rate {:.4} (min difference {:.3e})",
                r.tp_collision_rate(),
                r.tp_min_diff
            );
            write_report(out.as_ref(), &r)?;
            if r.standard_collisions == r.trials && r.tp_collisions == 0 {
                Ok(())
            } else {
                Err(Failure::check(
                    "binding demonstration did not separate the pairings",
                ))
            }
        }
        AnalyzeCommand::Appendix {
            d_model,
            d_head,
            trials,
            seed,
            out,
        } => {
            let r = hadamard_compression_check(d_model, d_head, seed, trials)?;
            println!(
                "max deviation {:.3e} (orthonormal maps {:.3e}, orthonormality error {:.3e})",
                r.max_deviation, r.max_deviation_orthonormal, r.max_orthonormality_error
            );
            write_report(out.as_ref(), &r)?;
            if r.max_deviation.max(r.max_deviation_orthonormal) < 1e-12
                && r.max_orthonormality_error < 1e-10
            {
                Ok(())
            } else {
                Err(Failure::check("identity violated beyond tolerance"))
            }
        }
    }
}

fn gradcheck(a: GradcheckArgs) -> Outcome {
    if !a.tiny {
        return Err(Failure::usage(
            "only the tiny configuration is supported; pass --tiny",
        ));
    }
    let r = tiny_grad_check(a.seed, !a.no_role_binding)?;
    println!(
        "max relative error {:.3e} over {} coordinates (worst: {}[{}], analytic {:.6e}, numeric {:.6e})",
        r.max_rel_error, r.coordinates, r.worst_param, r.worst_index, r.worst_analytic, r.worst_numeric
    );
    if r.max_rel_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::check(format!(
            "relative error above {GRADCHECK_TOLERANCE}"
        )))
    }
}
