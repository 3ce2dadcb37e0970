//! Representation structure across training checkpoints.

use serde::{Deserialize, Serialize};

use crate::corpus::FormatSpec;
use crate::error::{Error, Result};
use crate::model::Params;

use super::pca::{collect_representations, pca_of, PcaReport, PcaResult, RepresentationSet};
use super::PROBE_SCHEMA;

pub const PURITY_DIMS: usize = 3;

/// Nearest-centroid accuracy of `labels` using the first `dims` projected coordinates.
/// Centroids are fit on all points; classes absent from the data are ignored.
pub fn nearest_centroid_purity(result: &PcaResult, labels: &[u8], dims: usize) -> Result<f64> {
    let rows = result.projections.len() / result.k.max(1);
    if labels.len() != rows {
        return Err(Error::Structure(format!(
            "{} labels for {rows} projected rows",
            labels.len()
        )));
    }
    if rows == 0 {
        return Err(Error::Empty("projected rows"));
    }
    let dims = dims.min(result.k);
    let classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut sums = vec![0.0; classes * dims];
    let mut counts = vec![0usize; classes];
    for (i, &l) in labels.iter().enumerate() {
        let l = l as usize;
        counts[l] += 1;
        for d in 0..dims {
            sums[l * dims + d] += result.projection(i)[d];
        }
    }
    for (l, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums[l * dims..(l + 1) * dims].iter_mut().for_each(|s| *s /= n as f64);
        }
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| {
            let p = &result.projection(i)[..dims];
            let nearest = (0..classes)
                .filter(|&c| counts[c] > 0)
                .min_by(|&x, &y| {
                    let dx: f64 = p.iter().zip(&sums[x * dims..]).map(|(a, b)| (a - b) * (a - b)).sum();
                    let dy: f64 = p.iter().zip(&sums[y * dims..]).map(|(a, b)| (a - b) * (a - b)).sum();
                    dx.total_cmp(&dy)
                })
                .expect("at least one class");
            nearest == l as usize
        })
        .count();
    Ok(hits as f64 / rows as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub label: String,
    pub pca: PcaReport,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub schema: String,
    pub phases: Vec<PhaseRecord>,
}

impl PhaseReport {
    pub fn purities(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.purity).collect()
    }

    pub fn purity_non_decreasing(&self) -> bool {
        self.purities().windows(2).all(|w| w[1] >= w[0])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Full output for one checkpoint: representations, PCA, and purity.
#[derive(Debug, Clone)]
pub struct PhaseAnalysis {
    pub label: String,
    pub representations: RepresentationSet,
    pub pca: PcaResult,
    pub purity: f64,
}

pub fn analyze_phase(
    label: &str,
    params: &Params<f32>,
    format: &FormatSpec,
    pairs: &[(u64, u64)],
    k: usize,
    position: Option<usize>,
) -> Result<PhaseAnalysis> {
    let representations = collect_representations(params, format, pairs, position)?;
    let pca = pca_of(&representations, k)?;
    let purity = nearest_centroid_purity(&pca, &representations.units_digit, PURITY_DIMS)?;
    Ok(PhaseAnalysis { label: label.to_string(), representations, pca, purity })
}

pub fn phase_analysis(
    checkpoints: &[(String, Params<f32>)],
    format: &FormatSpec,
    pairs: &[(u64, u64)],
    k: usize,
) -> Result<(PhaseReport, Vec<PhaseAnalysis>)> {
    let first = checkpoints.first().ok_or(Error::Empty("checkpoints"))?;
    if let Some((label, _)) = checkpoints.iter().find(|(_, p)| p.config != first.1.config) {
        return Err(Error::Config(format!(
            "checkpoint {label} has a different model configuration"
        )));
    }
    let position = format.last_operand_position();
    let analyses = checkpoints
        .iter()
        .map(|(label, p)| analyze_phase(label, p, format, pairs, k, Some(position)))
        .collect::<Result<Vec<_>>>()?;
    let report = PhaseReport {
        schema: PROBE_SCHEMA.to_string(),
        phases: analyses
            .iter()
            .map(|a| PhaseRecord {
                label: a.label.clone(),
                pca: PcaReport::new(&a.pca, a.representations.rows, position),
                purity: a.purity,
            })
            .collect(),
    };
    Ok((report, analyses))
}

#[cfg(test)]
mod tests {
    use super::super::pca::pca;
    use super::*;

    #[test]
    fn separated_clusters_are_pure() {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for l in 0..4u8 {
            for j in 0..5 {
                let jitter = j as f64 * 0.01;
                data.extend_from_slice(&[l as f64 * 10.0 + jitter, (l % 2) as f64 * 7.0, jitter, 0.0]);
                labels.push(l);
            }
        }
        let r = pca(&data, 20, 4, 3).unwrap();
        assert_eq!(nearest_centroid_purity(&r, &labels, 3).unwrap(), 1.0);
        let shuffled: Vec<u8> = (0..20).map(|i| (i % 4) as u8).collect();
        assert!(nearest_centroid_purity(&r, &shuffled, 3).unwrap() < 0.6);
    }
}
