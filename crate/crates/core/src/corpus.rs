//! Arithmetic datasets: fixed-width digit encoding with a reversed answer,
//! and the train / ID-test / OOD-test partition.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle;

/// Vocabulary: the ten digit characters, token id = digit value.
pub const VOCAB_SIZE: usize = 10;

pub const CORPUS_FORMAT_VERSION: &str = "modlens-corpus/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Add,
    Mul,
}

impl OpKind {
    pub fn symbol(self) -> char {
        match self {
            OpKind::Add => '+',
            OpKind::Mul => '×',
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpKind::Add => f.write_str("add"),
            OpKind::Mul => f.write_str("mul"),
        }
    }
}

pub fn pow10(k: u32) -> u64 {
    10u64.pow(k)
}

/// Layout of one encoded sample: `a` and `b` zero-padded to `operand_width`,
/// then the result zero-padded to `result_width` and written least-significant
/// digit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSpec {
    pub op: OpKind,
    pub n_train_digits: u32,
    pub operand_width: usize,
    pub result_width: usize,
    pub context_window: usize,
}

impl FormatSpec {
    pub fn new(op: OpKind, n_train_digits: u32, operand_width: usize) -> Result<Self> {
        let result_width = match op {
            OpKind::Add => operand_width + 1,
            OpKind::Mul => 2 * operand_width,
        };
        let spec = FormatSpec {
            op,
            n_train_digits,
            operand_width,
            result_width,
            context_window: 2 * operand_width + result_width - 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 3-digit addition padded to width 5: context window 15.
    pub fn addition() -> Self {
        FormatSpec::new(OpKind::Add, 3, 5).expect("valid preset")
    }

    /// 3-digit multiplication padded to width 5: context window 19.
    pub fn multiplication() -> Self {
        FormatSpec::new(OpKind::Mul, 3, 5).expect("valid preset")
    }

    pub fn preset(op: OpKind) -> Self {
        match op {
            OpKind::Add => Self::addition(),
            OpKind::Mul => Self::multiplication(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.operand_width == 0 || self.n_train_digits == 0 {
            return Err(Error::Config("operand width and n must be positive".into()));
        }
        // 2·w + r must stay within u64 digit range for decoding.
        if self.operand_width > 9 {
            return Err(Error::Config(format!(
                "operand width {} exceeds the supported maximum of 9",
                self.operand_width
            )));
        }
        if self.n_train_digits as usize > self.operand_width {
            return Err(Error::Config(format!(
                "n = {} exceeds operand width {}",
                self.n_train_digits, self.operand_width
            )));
        }
        let expected_result = match self.op {
            OpKind::Add => self.operand_width + 1,
            OpKind::Mul => 2 * self.operand_width,
        };
        if self.result_width != expected_result {
            return Err(Error::Config(format!(
                "result width {} does not match {} for {}",
                self.result_width, expected_result, self.op
            )));
        }
        if self.context_window != 2 * self.operand_width + self.result_width - 1 {
            return Err(Error::Config(format!(
                "context window {} must equal 2·operand_width + result_width − 1",
                self.context_window
            )));
        }
        Ok(())
    }

    /// Full encoded length, `context_window + 1`.
    pub fn sequence_len(&self) -> usize {
        2 * self.operand_width + self.result_width
    }

    /// Number of operand tokens preceding the answer.
    pub fn prefix_len(&self) -> usize {
        2 * self.operand_width
    }

    /// Position whose hidden state feeds the first answer digit.
    pub fn last_operand_position(&self) -> usize {
        self.prefix_len() - 1
    }

    pub fn operand_limit(&self) -> u64 {
        pow10(self.operand_width as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArithSample {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub tokens: Vec<u8>,
}

impl ArithSample {
    pub fn operand_tokens(&self, format: &FormatSpec) -> &[u8] {
        &self.tokens[..format.prefix_len()]
    }

    pub fn answer_tokens(&self, format: &FormatSpec) -> &[u8] {
        &self.tokens[format.prefix_len()..]
    }

    /// The digit-character line used in dataset files.
    pub fn to_line(&self) -> String {
        self.tokens.iter().map(|&t| char::from(b'0' + t)).collect()
    }

    /// Parses a dataset line and checks that its answer field is the true result.
    pub fn from_line(line: &str, format: &FormatSpec) -> Result<Self> {
        let tokens = parse_digits(line)?;
        if tokens.len() != format.sequence_len() {
            return Err(Error::Data(format!(
                "line `{line}` has {} digits, expected {}",
                tokens.len(),
                format.sequence_len()
            )));
        }
        let w = format.operand_width;
        let a = digits_to_int(&tokens[..w]);
        let b = digits_to_int(&tokens[w..2 * w]);
        let sample = encode_sample(a, b, format)?;
        if sample.tokens != tokens {
            return Err(Error::Data(format!("line `{line}` has a wrong answer field")));
        }
        Ok(sample)
    }
}

pub fn parse_digits(s: &str) -> Result<Vec<u8>> {
    s.bytes()
        .map(|ch| {
            if ch.is_ascii_digit() {
                Ok(ch - b'0')
            } else {
                Err(Error::Data(format!("non-digit character {:?} in `{s}`", ch as char)))
            }
        })
        .collect()
}

pub fn tokens_to_string(tokens: &[u8]) -> String {
    tokens.iter().map(|&t| char::from(b'0' + t)).collect()
}

fn digits_to_int(digits: &[u8]) -> u64 {
    digits.iter().fold(0u64, |acc, &d| acc * 10 + d as u64)
}

fn push_padded(out: &mut Vec<u8>, mut value: u64, width: usize) {
    let start = out.len();
    out.resize(start + width, 0);
    for slot in out[start..].iter_mut().rev() {
        *slot = (value % 10) as u8;
        value /= 10;
    }
}

pub fn encode_operands(a: u64, b: u64, format: &FormatSpec) -> Result<Vec<u8>> {
    let limit = format.operand_limit();
    if a >= limit || b >= limit {
        return Err(Error::Range(format!(
            "operands ({a}, {b}) do not fit in {} digits",
            format.operand_width
        )));
    }
    let mut tokens = Vec::with_capacity(format.sequence_len());
    push_padded(&mut tokens, a, format.operand_width);
    push_padded(&mut tokens, b, format.operand_width);
    Ok(tokens)
}

pub fn encode_sample(a: u64, b: u64, format: &FormatSpec) -> Result<ArithSample> {
    let mut tokens = encode_operands(a, b, format)?;
    let c = oracle::ground_truth(format.op, a, b);
    if c >= pow10(format.result_width as u32) as u128 {
        return Err(Error::Range(format!(
            "result {c} does not fit in {} digits",
            format.result_width
        )));
    }
    let c = c as u64;
    let start = tokens.len();
    push_padded(&mut tokens, c, format.result_width);
    tokens[start..].reverse();
    Ok(ArithSample { a, b, c, tokens })
}

/// Inverse of the answer reversal: the first token is the least-significant digit.
pub fn decode_result(answer_tokens: &[u8], format: &FormatSpec) -> Result<u64> {
    if answer_tokens.len() != format.result_width {
        return Err(Error::Structure(format!(
            "answer has {} tokens, expected {}",
            answer_tokens.len(),
            format.result_width
        )));
    }
    if let Some(&t) = answer_tokens.iter().find(|&&t| t > 9) {
        return Err(Error::Range(format!("token {t} is not a digit")));
    }
    Ok(answer_tokens
        .iter()
        .rev()
        .fold(0u64, |acc, &d| acc * 10 + d as u64))
}

/// True iff at least one operand has a non-zero digit at or above position `n`.
pub fn is_ood(a: u64, b: u64, n: u32) -> bool {
    a.max(b) >= pow10(n)
}

fn in_d3(a: u64, b: u64, n: u32, both: bool) -> bool {
    if both {
        a.min(b) >= pow10(n)
    } else {
        is_ood(a, b, n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub format: FormatSpec,
    pub n: u32,
    pub m: u32,
    pub d1_size: usize,
    pub d2_size: usize,
    pub d3_size: usize,
    pub rng_seed: u64,
    /// Require both operands (not just one) to be at least `10^n` in D3.
    #[serde(default)]
    pub ood_both_operands: bool,
}

impl CorpusSpec {
    pub fn preset(op: OpKind, rng_seed: u64) -> Self {
        let d1_size = match op {
            OpKind::Add => 10_000,
            OpKind::Mul => 50_000,
        };
        CorpusSpec {
            format: FormatSpec::preset(op),
            n: 3,
            m: 5,
            d1_size,
            d2_size: 10_000,
            d3_size: 10_000,
            rng_seed,
            ood_both_operands: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.format.validate()?;
        if self.m <= self.n {
            return Err(Error::Config(format!("m = {} must exceed n = {}", self.m, self.n)));
        }
        if self.n != self.format.n_train_digits {
            return Err(Error::Config(format!(
                "n = {} disagrees with the format's n = {}",
                self.n, self.format.n_train_digits
            )));
        }
        if self.m as usize > self.format.operand_width {
            return Err(Error::Config(format!(
                "m = {} exceeds operand width {}",
                self.m, self.format.operand_width
            )));
        }
        if self.d1_size == 0 || self.d2_size == 0 || self.d3_size == 0 {
            return Err(Error::Config("all split sizes must be at least 1".into()));
        }
        let id_pairs = (pow10(self.n) as u128).pow(2);
        let requested = (self.d1_size + self.d2_size) as u128;
        if requested > id_pairs {
            return Err(Error::Capacity {
                what: "ID pairs for d1 + d2",
                requested,
                available: id_pairs,
            });
        }
        let ood = self.ood_population();
        if self.d3_size as u128 > ood {
            return Err(Error::Capacity {
                what: "OOD pairs for d3",
                requested: self.d3_size as u128,
                available: ood,
            });
        }
        Ok(())
    }

    fn ood_population(&self) -> u128 {
        let lo = pow10(self.n) as u128;
        let hi = pow10(self.m) as u128;
        if self.ood_both_operands {
            (hi - lo) * (hi - lo)
        } else {
            hi * hi - lo * lo
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub d1: Vec<ArithSample>,
    pub d2: Vec<ArithSample>,
    pub d3: Vec<ArithSample>,
    pub spec: CorpusSpec,
}

pub fn generate_splits(spec: &CorpusSpec) -> Result<SplitSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let format = &spec.format;

    let side = pow10(spec.n);
    let population = (side * side) as usize;
    let picks = index::sample(&mut rng, population, spec.d1_size + spec.d2_size).into_vec();
    let to_sample = |i: usize| {
        let i = i as u64;
        encode_sample(i / side, i % side, format)
    };
    let d1 = picks[..spec.d1_size]
        .iter()
        .map(|&i| to_sample(i))
        .collect::<Result<Vec<_>>>()?;
    let d2 = picks[spec.d1_size..]
        .iter()
        .map(|&i| to_sample(i))
        .collect::<Result<Vec<_>>>()?;

    let d3 = sample_ood_pairs(spec, &mut rng)?
        .into_iter()
        .map(|(a, b)| encode_sample(a, b, format))
        .collect::<Result<Vec<_>>>()?;

    Ok(SplitSet {
        d1,
        d2,
        d3,
        spec: spec.clone(),
    })
}

fn sample_ood_pairs(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Result<Vec<(u64, u64)>> {
    let hi = pow10(spec.m);
    let population = spec.ood_population();
    if (spec.d3_size as u128) * 2 > population {
        // Dense request: enumerate the eligible lattice and sample indices.
        let eligible: Vec<(u64, u64)> = (0..hi)
            .flat_map(|a| (0..hi).map(move |b| (a, b)))
            .filter(|&(a, b)| in_d3(a, b, spec.n, spec.ood_both_operands))
            .collect();
        let picks = index::sample(rng, eligible.len(), spec.d3_size);
        return Ok(picks.into_iter().map(|i| eligible[i]).collect());
    }
    let mut seen = HashSet::with_capacity(spec.d3_size);
    let mut out = Vec::with_capacity(spec.d3_size);
    while out.len() < spec.d3_size {
        let a = rng.random_range(0..hi);
        let b = rng.random_range(0..hi);
        if in_d3(a, b, spec.n, spec.ood_both_operands) && seen.insert((a, b)) {
            out.push((a, b));
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusMetadata {
    format_version: String,
    #[serde(flatten)]
    spec: CorpusSpec,
}

pub const SPLIT_FILES: [&str; 3] = ["d1.txt", "d2.txt", "d3.txt"];
pub const CORPUS_METADATA_FILE: &str = "corpus.json";

pub fn write_samples(path: &Path, samples: &[ArithSample]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in samples {
        out.write_all(s.to_line().as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path, format: &FormatSpec) -> Result<Vec<ArithSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| ArithSample::from_line(l, format))
        .collect()
}

/// Writes `d1.txt`, `d2.txt`, `d3.txt` and the `corpus.json` sidecar into `dir`.
pub fn write_splits(dir: &Path, splits: &SplitSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, samples) in SPLIT_FILES.iter().zip([&splits.d1, &splits.d2, &splits.d3]) {
        write_samples(&dir.join(name), samples)?;
    }
    let meta = CorpusMetadata {
        format_version: CORPUS_FORMAT_VERSION.to_string(),
        spec: splits.spec.clone(),
    };
    let path = dir.join(CORPUS_METADATA_FILE);
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_splits(dir: &Path) -> Result<SplitSet> {
    let path = dir.join(CORPUS_METADATA_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: CorpusMetadata = serde_json::from_str(&text)?;
    if meta.format_version != CORPUS_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "unsupported corpus format `{}`",
            meta.format_version
        )));
    }
    meta.spec.validate()?;
    let format = meta.spec.format;
    let mut parts = SPLIT_FILES
        .iter()
        .map(|name| read_samples(&dir.join(name), &format));
    let d1 = parts.next().unwrap()?;
    let d2 = parts.next().unwrap()?;
    let d3 = parts.next().unwrap()?;
    Ok(SplitSet {
        d1,
        d2,
        d3,
        spec: meta.spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: u64, b: u64, f: &FormatSpec) -> String {
        encode_sample(a, b, f).unwrap().to_line()
    }

    #[test]
    fn preset_formats_match_table() {
        let add = FormatSpec::addition();
        assert_eq!((add.operand_width, add.result_width, add.context_window), (5, 6, 15));
        let mul = FormatSpec::multiplication();
        assert_eq!((mul.operand_width, mul.result_width, mul.context_window), (5, 10, 19));
    }

    #[test]
    fn encodes_worked_examples() {
        assert_eq!(line(349, 705, &FormatSpec::addition()), "0034900705450100");
        assert_eq!(line(0, 0, &FormatSpec::addition()), "0000000000000000");
        assert_eq!(line(128, 256, &FormatSpec::multiplication()), "00128002568672300000");
    }

    #[test]
    fn decodes_reversed_answers() {
        let f = FormatSpec::addition();
        assert_eq!(decode_result(&parse_digits("450100").unwrap(), &f).unwrap(), 1054);
        assert_eq!(decode_result(&parse_digits("000000").unwrap(), &f).unwrap(), 0);
        assert_eq!(decode_result(&parse_digits("899991").unwrap(), &f).unwrap(), 199998);
        assert!(matches!(
            decode_result(&parse_digits("45010").unwrap(), &f),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn rejects_overwide_operands() {
        let f = FormatSpec::addition();
        assert!(matches!(encode_sample(100_000, 1, &f), Err(Error::Range(_))));
        assert!(encode_sample(99_999, 99_999, &f).is_ok());
    }

    #[test]
    fn ood_predicate() {
        assert!(is_ood(1349, 2705, 3));
        assert!(!is_ood(349, 705, 3));
        assert!(is_ood(999, 1000, 3));
    }

    #[test]
    fn from_line_rejects_wrong_answer() {
        let f = FormatSpec::addition();
        assert!(ArithSample::from_line("0034900705450100", &f).is_ok());
        assert!(ArithSample::from_line("0034900705450101", &f).is_err());
        assert!(ArithSample::from_line("00349007054501", &f).is_err());
    }

    #[test]
    fn small_splits_are_sound() {
        let spec = CorpusSpec {
            format: FormatSpec::new(OpKind::Add, 1, 3).unwrap(),
            n: 1,
            m: 2,
            d1_size: 60,
            d2_size: 40,
            d3_size: 9_000,
            rng_seed: 3,
            ood_both_operands: false,
        };
        let s = generate_splits(&spec).unwrap();
        // d1 ∪ d2 exhausts the 1-digit lattice.
        let mut ids: Vec<_> = s.d1.iter().chain(&s.d2).map(|x| (x.a, x.b)).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 100);
        assert!(s.d3.iter().all(|x| is_ood(x.a, x.b, 1) && x.a < 100 && x.b < 100));
        let d3: HashSet<_> = s.d3.iter().map(|x| (x.a, x.b)).collect();
        assert_eq!(d3.len(), 9_000);
    }

    #[test]
    fn strict_ood_flag() {
        let mut spec = CorpusSpec::preset(OpKind::Add, 5);
        spec.d1_size = 10;
        spec.d2_size = 10;
        spec.d3_size = 500;
        spec.ood_both_operands = true;
        let s = generate_splits(&spec).unwrap();
        assert!(s.d3.iter().all(|x| x.a >= 1000 && x.b >= 1000));
    }

    #[test]
    fn capacity_errors() {
        let mut spec = CorpusSpec::preset(OpKind::Add, 1);
        spec.d1_size = 600_000;
        spec.d2_size = 400_001;
        assert!(matches!(generate_splits(&spec), Err(Error::Capacity { .. })));
        spec.d2_size = 0;
        assert!(matches!(generate_splits(&spec), Err(Error::Config(_))));
    }
}
