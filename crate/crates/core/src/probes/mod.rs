//! Mechanistic probes: lattice sweeps, perturbation of untrained digits, and
//! representation PCA.

pub mod pca;
pub mod perturb;
pub mod phases;
pub mod sweep;

pub use pca::{collect_representations, coordinates_csv, pca, pca_of, PcaReport, PcaResult, RepresentationSet};
pub use perturb::{answer_rows, perturb_probe, total_variation, PerturbCase, PerturbReport, PerturbTarget};
pub use phases::{analyze_phase, nearest_centroid_purity, phase_analysis, PhaseAnalysis, PhaseRecord, PhaseReport};
pub use sweep::{
    lattice_sweep, lattice_sweep_with, oracle_grid, sweep_grids, sweep_pairs, DenseBlock, Grid, LatticeSpec,
    SweepRecord, SweepResult, SweepSummary, SWEEP_HEADER,
};

pub const PROBE_SCHEMA: &str = "modlens-probe/1";
