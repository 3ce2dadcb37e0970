use modlens::config::{Preset, RunConfig};
use modlens::pipeline::{self, FigureId};
use modlens::probes::LatticeSpec;
use modlens::report::Palette;
use modlens::Error;

fn tiny_run(dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::preset(Preset::Add3, 1);
    cfg.run.out_dir = dir.to_path_buf();
    cfg.corpus.d1_size = 1_000;
    cfg.corpus.d2_size = 200;
    cfg.corpus.d3_size = 200;
    cfg.train.max_iterations = 60;
    cfg.train.eval_interval = 30;
    cfg.train.eval_subset_size = 50;
    cfg.probe.perturb_base_pairs = 10;
    cfg.probe.pca_pairs = 100;
    cfg.probe.heatmap_stride = 120;
    cfg.train.milestones = vec![0.0, 0.0, 0.0];
    cfg.probe.lattice = LatticeSpec {
        a_range: (0, 1_200),
        b_range: (0, 1_200),
        stride: 101,
        dense_blocks: vec![],
        sample_count: 50,
        rng_seed: 1,
    };
    cfg
}

#[test]
fn training_requires_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_run(dir.path());
    assert!(matches!(pipeline::train_run(&cfg), Err(Error::Io { .. })));
    pipeline::gen_data(&cfg).unwrap();
    let mut other = cfg.clone();
    other.corpus.rng_seed = 99;
    assert!(matches!(pipeline::train_run(&other), Err(Error::Data(_))));
}

#[test]
fn full_pipeline_on_a_tiny_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_run(dir.path());
    pipeline::gen_data(&cfg).unwrap();
    pipeline::train_run(&cfg).unwrap();
    let figs = pipeline::figure_dir(&cfg);
    assert!(figs.join("fig1_curves.svg").exists());

    let eval = pipeline::eval(&cfg).unwrap();
    assert!((0.0..=1.0).contains(&eval.id_acc));

    let lattice = pipeline::probe_lattice(&cfg).unwrap();
    assert_eq!(lattice.summary.points, 144 + 50);
    let csv = std::fs::read_to_string(pipeline::probe_dir(&cfg).join("lattice.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 194);

    // Figures re-render byte-identically from their data files.
    let data = figs.join("fig2_oracle.csv");
    let again = pipeline::render_heatmap_file("add: equivalence-class oracle", &data, Palette::Viridis).unwrap();
    assert_eq!(again, std::fs::read_to_string(figs.join("fig2_oracle.svg")).unwrap());

    let perturb = pipeline::probe_perturb(&cfg).unwrap();
    assert_eq!(perturb.cases.len(), 12 * 6);
    let bars = pipeline::render_prob_bars_file("349 + 705", &figs.join("fig3_a.csv")).unwrap();
    assert_eq!(bars, std::fs::read_to_string(figs.join("fig3_a.svg")).unwrap());

    let pca = pipeline::probe_pca(&cfg).unwrap();
    assert_eq!((pca.rows, pca.k), (100, 4));
    let phases = pipeline::probe_phases(&cfg).unwrap();
    assert_eq!(phases.phases.len(), 4);
    assert_eq!(phases.phases[0].label, "initial");

    let heat = pipeline::probe_pc_heatmaps(&cfg).unwrap();
    assert_eq!(heat.rows, 100);
    assert!(figs.join("fig5_pc4.svg").exists());

    let table = pipeline::reproduce(&cfg, FigureId::Table2).unwrap();
    assert_eq!(table.checks.len(), 2);
    let text = std::fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert!(text.contains("1349 + 2705"));
    assert!(text.contains("3128 × 4256,-,13312768,32768"));
}
