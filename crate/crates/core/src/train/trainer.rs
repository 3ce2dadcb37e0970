use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adamw_step, clip_grad_norm, AdamWHyper, OptimState};
use crate::corpus::{decode_result, encode_operands, ArithSample, FormatSpec, SplitSet};
use crate::error::{Error, Result};
use crate::model::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::model::{batch_loss, generate_answers, loss_and_grads, LossMask, Params};
use crate::oracle::{oracle_match, OracleSpec};

pub const WARMUP_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub grad_norm_clip: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub eval_interval: usize,
    pub eval_subset_size: usize,
    pub milestones: Vec<f64>,
    pub rng_seed: u64,
    pub loss_mask: LossMaskKind,
    /// Linear warmup over the first [`WARMUP_STEPS`] steps.
    pub warmup: bool,
    pub early_stop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMaskKind {
    Full,
    AnswerOnly,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            betas: (0.9, 0.95),
            weight_decay: 0.1,
            grad_norm_clip: 1.0,
            batch_size: 64,
            max_iterations: 50_000,
            eval_interval: 250,
            eval_subset_size: 1_000,
            milestones: vec![0.14, 0.51, 1.0],
            rng_seed: 0,
            loss_mask: LossMaskKind::Full,
            warmup: false,
            early_stop: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_interval == 0 || self.eval_subset_size == 0 {
            return Err(Error::Config(
                "batch size, eval interval and eval subset size must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 || self.grad_norm_clip <= 0.0 {
            return Err(Error::Config("learning rate and clip norm must be positive".into()));
        }
        if self.milestones.iter().any(|m| !(0.0..=1.0).contains(m))
            || self.milestones.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Config("milestones must be sorted values in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn hyper(&self) -> AdamWHyper {
        AdamWHyper {
            learning_rate: self.learning_rate,
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }

    pub fn mask(&self, format: &FormatSpec) -> LossMask {
        match self.loss_mask {
            LossMaskKind::Full => LossMask::Full,
            LossMaskKind::AnswerOnly => LossMask::AnswerOnly {
                result_width: format.result_width,
            },
        }
    }

    fn lr_at(&self, step: usize) -> f64 {
        if self.warmup && step < WARMUP_STEPS {
            self.learning_rate * (step + 1) as f64 / WARMUP_STEPS as f64
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub id_acc: f64,
    pub ood_acc: f64,
    pub oracle_match_rate: f64,
    pub wall_clock_seconds: f64,
}

pub const METRICS_HEADER: &str = "iter,train_loss,train_acc,id_acc,ood_acc,oracle_match_rate,seconds";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.3}",
            r.iteration, r.train_loss, r.train_acc, r.id_acc, r.ood_acc, r.oracle_match_rate, r.wall_clock_seconds
        );
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Data("metrics CSV header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(Error::Data(format!("bad metrics row `{l}`")));
            }
            let num = |i: usize| {
                f[i].parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad number `{}` in `{l}`", f[i])))
            };
            Ok(MetricsRow {
                iteration: f[0]
                    .parse()
                    .map_err(|_| Error::Data(format!("bad iteration in `{l}`")))?,
                train_loss: num(1)?,
                train_acc: num(2)?,
                id_acc: num(3)?,
                ood_acc: num(4)?,
                oracle_match_rate: num(5)?,
                wall_clock_seconds: num(6)?,
            })
        })
        .collect()
}

/// Greedy answers for each operand pair, decoded to integers.
pub fn predict_results(params: &Params<f32>, pairs: &[(u64, u64)], format: &FormatSpec) -> Result<Vec<u64>> {
    let prefixes = pairs
        .iter()
        .map(|&(a, b)| encode_operands(a, b, format))
        .collect::<Result<Vec<_>>>()?;
    generate_answers(params, &prefixes, format.result_width)?
        .iter()
        .map(|ans| decode_result(ans, format))
        .collect()
}

/// Fraction of samples whose every generated answer token matches the truth.
pub fn evaluate_exact_match(params: &Params<f32>, samples: &[ArithSample], format: &FormatSpec) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let prefixes: Vec<&[u8]> = samples.iter().map(|s| s.operand_tokens(format)).collect();
    let answers = generate_answers(params, &prefixes, format.result_width)?;
    let hits = answers
        .iter()
        .zip(samples)
        .filter(|(ans, s)| ans.as_slice() == s.answer_tokens(format))
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Exact-match accuracy and the oracle-match rate on one sample set.
pub fn evaluate_with_oracle(
    params: &Params<f32>,
    samples: &[ArithSample],
    format: &FormatSpec,
    oracle: &OracleSpec,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let pairs: Vec<(u64, u64)> = samples.iter().map(|s| (s.a, s.b)).collect();
    let preds = predict_results(params, &pairs, format)?;
    let (mut exact, mut oracle_hits) = (0usize, 0usize);
    for (p, s) in preds.iter().zip(samples) {
        exact += usize::from(*p == s.c);
        oracle_hits += usize::from(oracle_match(*p as u128, oracle, s.a, s.b));
    }
    let n = samples.len() as f64;
    Ok((exact as f64 / n, oracle_hits as f64 / n))
}

#[derive(Debug, Clone)]
pub struct Milestone {
    pub threshold: f64,
    pub iteration: usize,
    /// Full-D2 accuracy at the time the milestone was hit.
    pub full_id_acc: f64,
    pub params: Params<f32>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    EarlyStop,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub initial: Params<f32>,
    pub final_params: Params<f32>,
    pub iterations: usize,
    pub milestones: Vec<Milestone>,
    pub metrics: Vec<MetricsRow>,
    pub stop: StopReason,
}

pub fn milestone_file_name(threshold: f64) -> String {
    format!("phase_{threshold:.2}.ckpt")
}

pub const INITIAL_CHECKPOINT: &str = "initial.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";

struct Run<'a> {
    config: &'a TrainConfig,
    format: FormatSpec,
    oracle: OracleSpec,
    out_dir: Option<&'a Path>,
}

impl Run<'_> {
    fn meta(&self, iteration: usize, metrics: &[(&str, f64)]) -> CheckpointMeta {
        CheckpointMeta {
            iteration: iteration as u64,
            rng_seed: self.config.rng_seed,
            format: Some(self.format),
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn save(&self, name: &str, params: &Params<f32>, meta: &CheckpointMeta) -> Result<Option<PathBuf>> {
        match self.out_dir {
            Some(dir) => {
                let path = dir.join(name);
                save_checkpoint(&path, params, meta)?;
                Ok(Some(path))
            }
            None => Ok(None),
        }
    }

    fn write_metrics(&self, rows: &[MetricsRow]) -> Result<()> {
        if let Some(dir) = self.out_dir {
            let path = dir.join(METRICS_FILE);
            fs::write(&path, metrics_csv(rows)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Minibatch AdamW training on D1 with periodic evaluation on fixed subsets of
/// D1/D2/D3, milestone checkpoints, and early stopping once the full D2 set is
/// solved at two consecutive evaluation points.
///
/// When `out_dir` is given, writes `initial.ckpt`, `phase_<t>.ckpt`,
/// `final.ckpt` and `metrics.csv` there.
pub fn train(
    initial: Params<f32>,
    splits: &SplitSet,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let format = splits.spec.format;
    if initial.config.context_window != format.context_window {
        return Err(Error::Config(format!(
            "model context window {} does not match the data format's {}",
            initial.config.context_window, format.context_window
        )));
    }
    if splits.d1.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let run = Run {
        config,
        format,
        oracle: OracleSpec::symmetric(format.op, splits.spec.n),
        out_dir,
    };
    run.save(INITIAL_CHECKPOINT, &initial, &run.meta(0, &[]))?;

    let mut params = initial.clone();
    let mut metrics = Vec::new();
    let mut milestones: Vec<Milestone> = Vec::new();
    if config.max_iterations == 0 {
        run.write_metrics(&metrics)?;
        return Ok(TrainOutcome {
            initial,
            final_params: params,
            iterations: 0,
            milestones,
            metrics,
            stop: StopReason::MaxIterations,
        });
    }

    let subset = |d: &[ArithSample]| d[..config.eval_subset_size.min(d.len())].to_vec();
    let (train_eval, id_eval, ood_eval) = (subset(&splits.d1), subset(&splits.d2), subset(&splits.d3));

    let hyper = config.hyper();
    let mask = config.mask(&format);
    let mut state = OptimState::new(&params);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x5eed_d20b_0000_0001);
    let start = Instant::now();
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut perfect_streak = 0;
    let mut stop = StopReason::MaxIterations;
    let mut iteration = 0;

    loop {
        if iteration % config.eval_interval == 0 || iteration == config.max_iterations {
            let train_acc = evaluate_exact_match(&params, &train_eval, &format)?;
            let id_acc = evaluate_exact_match(&params, &id_eval, &format)?;
            let (ood_acc, oracle_rate) = evaluate_with_oracle(&params, &ood_eval, &format, &run.oracle)?;
            let train_loss = if loss_count > 0 {
                loss_sum / loss_count as f64
            } else {
                let probe: Vec<&[u8]> = train_eval
                    .iter()
                    .take(config.batch_size)
                    .map(|s| s.tokens.as_slice())
                    .collect();
                batch_loss(&params, &probe, mask)?
            };
            loss_sum = 0.0;
            loss_count = 0;
            metrics.push(MetricsRow {
                iteration,
                train_loss,
                train_acc,
                id_acc,
                ood_acc,
                oracle_match_rate: oracle_rate,
                wall_clock_seconds: start.elapsed().as_secs_f64(),
            });
            run.write_metrics(&metrics)?;

            let mut full_id = None;
            for &threshold in &config.milestones {
                if milestones.iter().any(|m| m.threshold == threshold) || id_acc < threshold {
                    continue;
                }
                let acc = *full_id.get_or_insert(evaluate_exact_match(&params, &splits.d2, &format)?);
                let meta = run.meta(iteration, &[("id_acc_subset", id_acc), ("id_acc", acc)]);
                let path = run.save(&milestone_file_name(threshold), &params, &meta)?;
                milestones.push(Milestone {
                    threshold,
                    iteration,
                    full_id_acc: acc,
                    params: params.clone(),
                    path,
                });
            }

            if config.early_stop && id_acc >= 1.0 {
                let acc = match full_id {
                    Some(a) => a,
                    None => evaluate_exact_match(&params, &splits.d2, &format)?,
                };
                perfect_streak = if acc >= 1.0 { perfect_streak + 1 } else { 0 };
            } else {
                perfect_streak = 0;
            }
            if perfect_streak >= 2 {
                stop = StopReason::EarlyStop;
                break;
            }
        }
        if iteration == config.max_iterations {
            break;
        }

        let batch: Vec<&[u8]> = (0..config.batch_size)
            .map(|_| splits.d1[batch_rng.random_range(0..splits.d1.len())].tokens.as_slice())
            .collect();
        let step = loss_and_grads(&params, &batch, mask, Some(&mut dropout_rng)).and_then(|(loss, mut grads)| {
            clip_grad_norm(&mut grads, config.grad_norm_clip);
            let mut next = params.clone();
            adamw_step(&mut next, &grads, &mut state, &hyper, config.lr_at(iteration))?;
            Ok((loss, next))
        });
        match step {
            Ok((loss, next)) => {
                params = next;
                loss_sum += loss;
                loss_count += 1;
            }
            Err(Error::NonFiniteLoss { .. } | Error::NonFiniteUpdate { .. }) => {
                let path = run
                    .save(LAST_GOOD_CHECKPOINT, &params, &run.meta(iteration, &[]))?
                    .unwrap_or_default();
                run.write_metrics(&metrics)?;
                return Err(Error::Diverged {
                    iteration,
                    last_good: path,
                });
            }
            Err(e) => return Err(e),
        }
        iteration += 1;
    }

    let last = metrics.last().cloned();
    let final_id = evaluate_exact_match(&params, &splits.d2, &format)?;
    let final_ood = evaluate_exact_match(&params, &splits.d3, &format)?;
    let mut snapshot = vec![("id_acc", final_id), ("ood_acc", final_ood)];
    if let Some(r) = &last {
        snapshot.push(("train_loss", r.train_loss));
    }
    run.save(FINAL_CHECKPOINT, &params, &run.meta(iteration, &snapshot))?;
    Ok(TrainOutcome {
        initial,
        final_params: params,
        iterations: iteration,
        milestones,
        metrics,
        stop,
    })
}
