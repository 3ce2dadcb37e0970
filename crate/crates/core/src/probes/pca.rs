//! Principal components of representation matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{encode_operands, FormatSpec};
use crate::error::{Error, Result};
use crate::model::{hidden_representations, Params};
use crate::oracle::ground_truth;

use super::PROBE_SCHEMA;

/// Row-major `[rows × cols]` matrix of representations with per-row labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSet {
    pub pairs: Vec<(u64, u64)>,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// True result of each pair.
    pub c: Vec<u128>,
    pub units_digit: Vec<u8>,
}

impl RepresentationSet {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Hidden representation at `position` (the last operand token when `None`) for every pair.
pub fn collect_representations(
    params: &Params<f32>,
    format: &FormatSpec,
    pairs: &[(u64, u64)],
    position: Option<usize>,
) -> Result<RepresentationSet> {
    let position = position.unwrap_or_else(|| format.last_operand_position());
    let inputs = pairs
        .iter()
        .map(|&(a, b)| encode_operands(a, b, format))
        .collect::<Result<Vec<_>>>()?;
    let reps = hidden_representations(params, &inputs, position)?;
    let cols = params.config.d_model;
    let c: Vec<u128> = pairs.iter().map(|&(a, b)| ground_truth(format.op, a, b)).collect();
    Ok(RepresentationSet {
        pairs: pairs.to_vec(),
        rows: pairs.len(),
        cols,
        data: reps.into_iter().flatten().map(f64::from).collect(),
        units_digit: c.iter().map(|&v| (v % 10) as u8).collect(),
        c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub k: usize,
    pub dim: usize,
    pub mean: Vec<f64>,
    /// Row-major `[k × dim]`, orthonormal rows.
    pub components: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub explained_variance_ratios: Vec<f64>,
    /// Row-major `[rows × k]`.
    pub projections: Vec<f64>,
    /// Total variance is zero; every ratio is reported as 0.
    pub degenerate: bool,
}

impl PcaResult {
    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.dim..(i + 1) * self.dim]
    }

    pub fn projection(&self, row: usize) -> &[f64] {
        &self.projections[row * self.k..(row + 1) * self.k]
    }

    pub fn ratio_sum(&self) -> f64 {
        self.explained_variance_ratios.iter().sum()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|i| {
                self.component(i)
                    .iter()
                    .zip(x)
                    .zip(&self.mean)
                    .map(|((w, v), m)| w * (v - m))
                    .sum()
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Extends `basis` with unit vectors orthogonal to it (modified Gram-Schmidt
/// against the standard basis) until it holds `k` vectors.
fn pad_orthonormal(basis: &mut Vec<Vec<f64>>, k: usize, dim: usize) {
    for e in 0..dim {
        if basis.len() >= k {
            break;
        }
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        for _ in 0..2 {
            for u in basis.iter() {
                let d = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
}

/// Largest-magnitude entry made positive; the first such entry wins ties.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// PCA of a row-major `[rows × dim]` matrix via SVD of the centered data.
pub fn pca(data: &[f64], rows: usize, dim: usize, k: usize) -> Result<PcaResult> {
    if rows < 2 {
        return Err(Error::Structure(format!("pca needs at least two rows, got {rows}")));
    }
    if data.len() != rows * dim {
        return Err(Error::Structure(format!(
            "matrix has {} values, expected {rows}×{dim}",
            data.len()
        )));
    }
    if k == 0 || k > rows.min(dim) {
        return Err(Error::Structure(format!(
            "k = {k} must lie in [1, {}]",
            rows.min(dim)
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("representation matrix has non-finite entries".into()));
    }
    let mut mean = vec![0.0; dim];
    for r in data.chunks(dim) {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let centered = DMatrix::from_fn(rows, dim, |i, j| data[i * dim + j] - mean[j]);

    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let eigen: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
    let total: f64 = eigen.iter().sum();
    let scale = eigen.first().copied().unwrap_or(0.0);
    let degenerate = total <= 0.0 || scale <= f64::MIN_POSITIVE;
    let rank_tol = scale * (10.0 * rows.max(dim) as f64 * f64::EPSILON).powi(2);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut singular_values = Vec::with_capacity(k);
    let mut explained_variance_ratios = Vec::with_capacity(k);
    for (slot, &idx) in order.iter().take(k).enumerate() {
        if degenerate || eigen[slot] <= rank_tol {
            break;
        }
        let mut v: Vec<f64> = v_t.row(idx).iter().copied().collect();
        fix_sign(&mut v);
        basis.push(v);
        singular_values.push(eigen[slot].sqrt());
        explained_variance_ratios.push(eigen[slot] / total);
    }
    let from = basis.len();
    pad_orthonormal(&mut basis, k, dim);
    for v in &mut basis[from..] {
        fix_sign(v);
    }
    singular_values.resize(k, 0.0);
    explained_variance_ratios.resize(k, 0.0);

    let components: Vec<f64> = basis.into_iter().flatten().collect();
    let comp = DMatrix::from_row_slice(k, dim, &components);
    let proj = centered * comp.transpose();
    let projections = (0..rows)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| proj[(i, j)])
        .collect();
    Ok(PcaResult {
        k,
        dim,
        mean,
        components,
        singular_values,
        explained_variance_ratios,
        projections,
        degenerate,
    })
}

pub fn pca_of(set: &RepresentationSet, k: usize) -> Result<PcaResult> {
    pca(&set.data, set.rows, set.cols, k)
}

pub const COORDINATES_HEADER_PREFIX: &str = "a,b";

/// `a,b,pc1..pcK,c,units_digit`.
pub fn coordinates_csv(set: &RepresentationSet, result: &PcaResult) -> String {
    let mut out = String::from(COORDINATES_HEADER_PREFIX);
    for i in 1..=result.k {
        out.push_str(&format!(",pc{i}"));
    }
    out.push_str(",c,units_digit\n");
    for (i, &(a, b)) in set.pairs.iter().enumerate() {
        out.push_str(&format!("{a},{b}"));
        for v in result.projection(i) {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push_str(&format!(",{},{}\n", set.c[i], set.units_digit[i]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub schema: String,
    pub position: usize,
    pub rows: usize,
    pub k: usize,
    pub explained_variance_ratios: Vec<f64>,
    pub ratio_sum: f64,
    pub singular_values: Vec<f64>,
    pub degenerate: bool,
}

impl PcaReport {
    pub fn new(result: &PcaResult, rows: usize, position: usize) -> Self {
        PcaReport {
            schema: PROBE_SCHEMA.to_string(),
            position,
            rows,
            k: result.k,
            explained_variance_ratios: result.explained_variance_ratios.clone(),
            ratio_sum: result.ratio_sum(),
            singular_values: result.singular_values.clone(),
            degenerate: result.degenerate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.9, 0.3];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(pca(&[1.0, 2.0], 1, 2, 1).is_err());
        assert!(pca(&[1.0, 2.0, 3.0], 2, 2, 1).is_err());
        assert!(pca(&[1.0, 2.0, 3.0, 4.0], 2, 2, 3).is_err());
    }

    #[test]
    fn degenerate_input() {
        let r = pca(&[2.0; 12], 4, 3, 2).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.explained_variance_ratios, vec![0.0, 0.0]);
        for i in 0..2 {
            for j in 0..2 {
                let d = dot(r.component(i), r.component(j));
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
