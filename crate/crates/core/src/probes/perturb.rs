//! Next-token distribution shifts under perturbation of an untrained digit place.

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_operands, pow10, tokens_to_string, FormatSpec};
use crate::error::{Error, Result};
use crate::model::{argmax, generate_answers, next_token_distributions, Params};

use super::PROBE_SCHEMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbTarget {
    A,
    B,
    Both,
}

impl PerturbTarget {
    pub const ALL: [PerturbTarget; 3] = [PerturbTarget::A, PerturbTarget::B, PerturbTarget::Both];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbCase {
    pub base: (u64, u64),
    pub perturbed: (u64, u64),
    pub target: PerturbTarget,
    /// Total-variation distance between base and variant rows, one per input position.
    pub tv: Vec<f64>,
    pub base_answer: String,
    pub perturbed_answer: String,
    pub argmax_equal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub schema: String,
    pub digit_position: u32,
    pub digit_values: Vec<(u8, u8)>,
    /// Rows whose argmax forms the answer.
    pub answer_rows: (usize, usize),
    pub cases: Vec<PerturbCase>,
    pub argmax_equal_fraction: f64,
    pub median_tv: Vec<f64>,
    pub max_tv: Vec<f64>,
}

impl PerturbReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn cases_for(&self, base: (u64, u64)) -> impl Iterator<Item = &PerturbCase> {
        self.cases.iter().filter(move |c| c.base == base)
    }

    pub fn fraction_for(&self, target: PerturbTarget) -> f64 {
        let (hit, n) = self
            .cases
            .iter()
            .filter(|c| c.target == target)
            .fold((0usize, 0usize), |(h, n), c| (h + c.argmax_equal as usize, n + 1));
        if n == 0 {
            0.0
        } else {
            hit as f64 / n as f64
        }
    }
}

/// `0.5 · Σ |p_v − q_v|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum();
    (0.5 * s).clamp(0.0, 1.0)
}

fn set_digit(x: u64, position: u32, value: u8) -> u64 {
    let place = pow10(position);
    x - (x / place % 10) * place + value as u64 * place
}

fn variant(base: (u64, u64), target: PerturbTarget, position: u32, (da, db): (u8, u8)) -> (u64, u64) {
    let (a, b) = base;
    match target {
        PerturbTarget::A => (set_digit(a, position, da), b),
        PerturbTarget::B => (a, set_digit(b, position, db)),
        PerturbTarget::Both => (set_digit(a, position, da), set_digit(b, position, db)),
    }
}

/// The answer-region rows `[prefix_len − 1, prefix_len − 1 + result_width)`.
pub fn answer_rows(format: &FormatSpec) -> (usize, usize) {
    let start = format.prefix_len() - 1;
    (start, start + format.result_width)
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Each sequence is run on its own greedy completion, so the answer-region argmax of
/// a row is exactly the digit the model emits there.
pub fn perturb_probe(
    params: &Params<f32>,
    format: &FormatSpec,
    base_pairs: &[(u64, u64)],
    digit_position: u32,
    digit_values: &[(u8, u8)],
) -> Result<PerturbReport> {
    if (digit_position as usize) < format.n_train_digits as usize
        || digit_position as usize >= format.operand_width
    {
        return Err(Error::Range(format!(
            "digit position {digit_position} must lie in [{}, {})",
            format.n_train_digits, format.operand_width
        )));
    }
    if digit_values.is_empty() {
        return Err(Error::Empty("digit values"));
    }
    if let Some(v) = digit_values.iter().find(|(a, b)| !(1..=9).contains(a) || !(1..=9).contains(b)) {
        return Err(Error::Range(format!("digit values {v:?} must lie in [1, 9]")));
    }

    let mut pairs = Vec::with_capacity(base_pairs.len() * (1 + 3 * digit_values.len()));
    for &base in base_pairs {
        pairs.push(base);
        for &dv in digit_values {
            for t in PerturbTarget::ALL {
                pairs.push(variant(base, t, digit_position, dv));
            }
        }
    }
    let prefixes = pairs
        .iter()
        .map(|&(a, b)| encode_operands(a, b, format))
        .collect::<Result<Vec<_>>>()?;
    let answers = generate_answers(params, &prefixes, format.result_width)?;
    let ctx = params.config.context_window;
    let inputs: Vec<Vec<u8>> = prefixes
        .iter()
        .zip(&answers)
        .map(|(p, ans)| {
            let mut s = p.clone();
            s.extend_from_slice(ans);
            s.truncate(ctx);
            s
        })
        .collect();
    let dists = next_token_distributions(params, &inputs)?;

    let (r0, r1) = answer_rows(format);
    let arg_rows = |d: &[Vec<f64>]| -> Vec<usize> { d[r0..r1].iter().map(|r| argmax(r)).collect() };
    let stride = 1 + 3 * digit_values.len();
    let mut cases = Vec::with_capacity(base_pairs.len() * 3 * digit_values.len());
    for (i, &base) in base_pairs.iter().enumerate() {
        let bi = i * stride;
        let base_arg = arg_rows(&dists[bi]);
        for (j, &dv) in digit_values.iter().enumerate() {
            for (k, t) in PerturbTarget::ALL.into_iter().enumerate() {
                let vi = bi + 1 + 3 * j + k;
                let tv = dists[bi]
                    .iter()
                    .zip(&dists[vi])
                    .map(|(p, q)| total_variation(p, q))
                    .collect();
                cases.push(PerturbCase {
                    base,
                    perturbed: variant(base, t, digit_position, dv),
                    target: t,
                    tv,
                    base_answer: tokens_to_string(&answers[bi]),
                    perturbed_answer: tokens_to_string(&answers[vi]),
                    argmax_equal: arg_rows(&dists[vi]) == base_arg,
                });
            }
        }
    }

    let rows = inputs.first().map_or(0, Vec::len);
    let column = |t: usize| cases.iter().map(|c| c.tv[t]).collect::<Vec<_>>();
    let median_tv = (0..rows).map(|t| median(column(t))).collect();
    let max_tv = (0..rows)
        .map(|t| column(t).into_iter().fold(0.0, f64::max))
        .collect();
    let hits = cases.iter().filter(|c| c.argmax_equal).count();
    Ok(PerturbReport {
        schema: PROBE_SCHEMA.to_string(),
        digit_position,
        digit_values: digit_values.to_vec(),
        answer_rows: (r0, r1),
        argmax_equal_fraction: if cases.is_empty() { 0.0 } else { hits as f64 / cases.len() as f64 },
        cases,
        median_tv,
        max_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_replacement() {
        assert_eq!(set_digit(349, 3, 1), 1349);
        assert_eq!(set_digit(5349, 3, 2), 2349);
        assert_eq!(variant((128, 256), PerturbTarget::Both, 3, (3, 4)), (3128, 4256));
        assert_eq!(variant((349, 705), PerturbTarget::B, 3, (1, 2)), (349, 2705));
    }

    #[test]
    fn tv_axioms() {
        let p = [0.2, 0.3, 0.5];
        let q = [0.5, 0.5, 0.0];
        assert_eq!(total_variation(&p, &p), 0.0);
        assert_eq!(total_variation(&p, &q), total_variation(&q, &p));
        assert!((total_variation(&p, &q) - 0.5).abs() < 1e-12);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![]), 0.0);
    }
}
