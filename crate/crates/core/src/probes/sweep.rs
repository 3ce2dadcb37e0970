//! Lattice sweeps: model output vs ground truth vs the mod-p oracle.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_ood, FormatSpec};
use crate::error::{Error, Result};
use crate::model::Params;
use crate::oracle::{ground_truth, oracle_eval, OracleSpec};
use crate::train::predict_results;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseBlock {
    pub origin: (u64, u64),
    pub edge: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Half-open `[start, end)`.
    pub a_range: (u64, u64),
    pub b_range: (u64, u64),
    pub stride: u64,
    pub dense_blocks: Vec<DenseBlock>,
    pub sample_count: usize,
    pub rng_seed: u64,
}

impl LatticeSpec {
    /// Stride-37 grid over `[0, 10⁴)²`, one dense 100×100 block per ID/OOD
    /// quadrant combination, and 10⁵ uniform random pairs.
    pub fn four_digit(rng_seed: u64) -> Self {
        LatticeSpec {
            a_range: (0, 10_000),
            b_range: (0, 10_000),
            stride: 37,
            dense_blocks: vec![
                DenseBlock { origin: (400, 600), edge: 100 },
                DenseBlock { origin: (4_400, 600), edge: 100 },
                DenseBlock { origin: (400, 5_600), edge: 100 },
                DenseBlock { origin: (7_400, 2_600), edge: 100 },
            ],
            sample_count: 100_000,
            rng_seed,
        }
    }

    /// Every pair of `[0, 10⁴)²`.
    pub fn exhaustive_four_digit() -> Self {
        LatticeSpec {
            a_range: (0, 10_000),
            b_range: (0, 10_000),
            stride: 1,
            dense_blocks: Vec::new(),
            sample_count: 0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a0, a1) = self.a_range;
        let (b0, b1) = self.b_range;
        if a0 >= a1 || b0 >= b1 {
            return Err(Error::Config("lattice ranges must be non-empty".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if self.stride > 1 && (self.stride % 2 == 0 || self.stride % 5 == 0) {
            return Err(Error::Config(format!(
                "stride {} shares a factor with 10; digit structure would alias",
                self.stride
            )));
        }
        for blk in &self.dense_blocks {
            let (x, y) = blk.origin;
            if blk.edge == 0 || x < a0 || y < b0 || x + blk.edge > a1 || y + blk.edge > b1 {
                return Err(Error::Config(format!("dense block {blk:?} leaves the lattice ranges")));
            }
        }
        Ok(())
    }

    pub fn grid_axes(&self) -> (Vec<u64>, Vec<u64>) {
        let s = self.stride as usize;
        (
            (self.a_range.0..self.a_range.1).step_by(s).collect(),
            (self.b_range.0..self.b_range.1).step_by(s).collect(),
        )
    }

    fn on_grid(&self, a: u64, b: u64) -> bool {
        (a - self.a_range.0) % self.stride == 0 && (b - self.b_range.0) % self.stride == 0
    }

    /// Streams the selected pairs in chunks: strided grid first (row-major in `b`,
    /// then `a`), then dense blocks, then random samples. Points already emitted are skipped.
    pub fn for_each_chunk(
        &self,
        chunk: usize,
        mut f: impl FnMut(&[(u64, u64)]) -> Result<()>,
    ) -> Result<()> {
        self.validate()?;
        let chunk = chunk.max(1);
        let mut buf = Vec::with_capacity(chunk);
        let mut flush = |buf: &mut Vec<(u64, u64)>, force: bool| -> Result<()> {
            if buf.len() >= chunk || (force && !buf.is_empty()) {
                f(buf)?;
                buf.clear();
            }
            Ok(())
        };
        let (xs, ys) = self.grid_axes();
        for &b in &ys {
            for &a in &xs {
                buf.push((a, b));
                flush(&mut buf, false)?;
            }
        }
        let mut seen = HashSet::new();
        for blk in &self.dense_blocks {
            for b in blk.origin.1..blk.origin.1 + blk.edge {
                for a in blk.origin.0..blk.origin.0 + blk.edge {
                    if !self.on_grid(a, b) && seen.insert((a, b)) {
                        buf.push((a, b));
                        flush(&mut buf, false)?;
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        for _ in 0..self.sample_count {
            let a = rng.random_range(self.a_range.0..self.a_range.1);
            let b = rng.random_range(self.b_range.0..self.b_range.1);
            if !self.on_grid(a, b) && seen.insert((a, b)) {
                buf.push((a, b));
                flush(&mut buf, false)?;
            }
        }
        flush(&mut buf, true)
    }

    pub fn points(&self) -> Result<Vec<(u64, u64)>> {
        let mut out = Vec::new();
        self.for_each_chunk(1 << 16, |c| {
            out.extend_from_slice(c);
            Ok(())
        })?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub a: u64,
    pub b: u64,
    pub model_c: u64,
    pub truth_c: u128,
    pub oracle_c: u128,
    pub exact_hit: bool,
    pub oracle_hit: bool,
    pub is_ood: bool,
}

pub const SWEEP_HEADER: &str = "a,b,model_c,truth_c,oracle_c,exact_hit,oracle_hit,is_ood";

impl SweepRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.a,
            self.b,
            self.model_c,
            self.truth_c,
            self.oracle_c,
            self.exact_hit as u8,
            self.oracle_hit as u8,
            self.is_ood as u8
        )
    }
}

/// Aggregate hit rates, split by domain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub points: usize,
    pub id_points: usize,
    pub ood_points: usize,
    pub id_exact_hits: usize,
    pub id_oracle_hits: usize,
    pub ood_exact_hits: usize,
    pub ood_oracle_hits: usize,
}

impl SweepSummary {
    pub fn add(&mut self, r: &SweepRecord) {
        self.points += 1;
        if r.is_ood {
            self.ood_points += 1;
            self.ood_exact_hits += r.exact_hit as usize;
            self.ood_oracle_hits += r.oracle_hit as usize;
        } else {
            self.id_points += 1;
            self.id_exact_hits += r.exact_hit as usize;
            self.id_oracle_hits += r.oracle_hit as usize;
        }
    }

    fn rate(hits: usize, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            hits as f64 / n as f64
        }
    }

    pub fn id_exact_rate(&self) -> f64 {
        Self::rate(self.id_exact_hits, self.id_points)
    }

    pub fn ood_oracle_rate(&self) -> f64 {
        Self::rate(self.ood_oracle_hits, self.ood_points)
    }

    pub fn ood_exact_rate(&self) -> f64 {
        Self::rate(self.ood_exact_hits, self.ood_points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub summary: SweepSummary,
}

pub fn sweep_pairs(
    params: &Params<f32>,
    format: &FormatSpec,
    pairs: &[(u64, u64)],
    oracle: &OracleSpec,
) -> Result<Vec<SweepRecord>> {
    let preds = predict_results(params, pairs, format)?;
    Ok(pairs
        .iter()
        .zip(preds)
        .map(|(&(a, b), model_c)| {
            let truth_c = ground_truth(format.op, a, b);
            let oracle_c = oracle_eval(oracle, a, b);
            SweepRecord {
                a,
                b,
                model_c,
                truth_c,
                oracle_c,
                exact_hit: model_c as u128 == truth_c,
                oracle_hit: model_c as u128 == oracle_c,
                is_ood: is_ood(a, b, format.n_train_digits),
            }
        })
        .collect())
}

const SWEEP_CHUNK: usize = 8_192;

/// Streaming sweep: `sink` sees every record in selection order.
pub fn lattice_sweep_with(
    params: &Params<f32>,
    format: &FormatSpec,
    spec: &LatticeSpec,
    oracle: &OracleSpec,
    mut sink: impl FnMut(&SweepRecord) -> Result<()>,
) -> Result<SweepSummary> {
    let mut summary = SweepSummary::default();
    spec.for_each_chunk(SWEEP_CHUNK, |pairs| {
        for r in sweep_pairs(params, format, pairs, oracle)? {
            summary.add(&r);
            sink(&r)?;
        }
        Ok(())
    })?;
    Ok(summary)
}

pub fn lattice_sweep(
    params: &Params<f32>,
    format: &FormatSpec,
    spec: &LatticeSpec,
    oracle: &OracleSpec,
) -> Result<SweepResult> {
    let mut records = Vec::new();
    let summary = lattice_sweep_with(params, format, spec, oracle, |r| {
        records.push(*r);
        Ok(())
    })?;
    Ok(SweepResult { records, summary })
}

/// Value grid over the strided lattice, `values[row(b)][col(a)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub xs: Vec<u64>,
    pub ys: Vec<u64>,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.xs.len() + col]
    }

    /// Keeps every `k`-th row and column so neither axis exceeds `max_cells`.
    pub fn downsample(&self, max_cells: usize) -> Grid {
        let k = self.xs.len().max(self.ys.len()).div_ceil(max_cells.max(1)).max(1);
        let cols: Vec<usize> = (0..self.xs.len()).step_by(k).collect();
        let rows: Vec<usize> = (0..self.ys.len()).step_by(k).collect();
        Grid {
            xs: cols.iter().map(|&c| self.xs[c]).collect(),
            ys: rows.iter().map(|&r| self.ys[r]).collect(),
            values: rows
                .iter()
                .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
                .map(|(r, c)| self.get(c, r))
                .collect(),
        }
    }
}

/// Grids of (truth, oracle, model) values for the strided part of a sweep.
pub fn sweep_grids(spec: &LatticeSpec, records: &[SweepRecord]) -> [Grid; 3] {
    let (xs, ys) = spec.grid_axes();
    let n = xs.len() * ys.len();
    let take = &records[..n.min(records.len())];
    let grid = |f: &dyn Fn(&SweepRecord) -> f64| Grid {
        xs: xs.clone(),
        ys: ys.clone(),
        values: take.iter().map(f).collect(),
    };
    [
        grid(&|r| r.truth_c as f64),
        grid(&|r| r.oracle_c as f64),
        grid(&|r| r.model_c as f64),
    ]
}

/// Oracle-only grid, no model required.
pub fn oracle_grid(spec: &LatticeSpec, oracle: &OracleSpec) -> Grid {
    let (xs, ys) = spec.grid_axes();
    let values = ys
        .iter()
        .flat_map(|&b| xs.iter().map(move |&a| (a, b)))
        .map(|(a, b)| oracle_eval(oracle, a, b) as f64)
        .collect();
    Grid { xs, ys, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::OpKind;

    #[test]
    fn default_spec_is_valid_and_deduplicated() {
        let spec = LatticeSpec::four_digit(0);
        let pts = spec.points().unwrap();
        let unique: HashSet<_> = pts.iter().collect();
        assert_eq!(unique.len(), pts.len());
        assert!(pts.iter().all(|&(a, b)| a < 10_000 && b < 10_000));
        let (xs, ys) = spec.grid_axes();
        assert_eq!(xs.len(), 271);
        assert!(pts.len() > xs.len() * ys.len() + 30_000);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = LatticeSpec::four_digit(0);
        spec.stride = 40;
        assert!(spec.validate().is_err());
        let mut spec = LatticeSpec::four_digit(0);
        spec.dense_blocks.push(DenseBlock { origin: (9_950, 0), edge: 100 });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn oracle_grid_is_periodic() {
        let spec = LatticeSpec {
            a_range: (0, 3_000),
            b_range: (0, 3_000),
            stride: 1,
            dense_blocks: vec![],
            sample_count: 0,
            rng_seed: 0,
        };
        // evaluate a strided subset to keep the test light
        let oracle = OracleSpec::symmetric(OpKind::Add, 3);
        for a in (0..2_000).step_by(13) {
            for b in (0..3_000).step_by(29) {
                assert_eq!(oracle_eval(&oracle, a + 1000, b), oracle_eval(&oracle, a, b));
                assert_eq!(oracle_eval(&oracle, a, (b + 1000) % 3000), oracle_eval(&oracle, a, b));
            }
        }
        let g = oracle_grid(&LatticeSpec { stride: 7, ..spec }, &oracle);
        assert_eq!(g.values.len(), g.xs.len() * g.ys.len());
    }
}
