use modlens::corpus::{FormatSpec, OpKind};
use modlens::model::{ModelConfig, Params};
use modlens::oracle::OracleSpec;
use modlens::probes::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn untrained() -> Params<f32> {
    Params::init(&ModelConfig::addition(), 9).unwrap()
}

#[test]
fn untrained_perturbation_report_is_well_formed() {
    let p = untrained();
    let f = FormatSpec::addition();
    let r = perturb_probe(&p, &f, &[(349, 705), (128, 256), (7, 0)], 3, &[(1, 2), (3, 4)]).unwrap();
    assert_eq!(r.cases.len(), 3 * 2 * 3);
    assert_eq!(r.answer_rows, (9, 15));
    assert_eq!(r.median_tv.len(), 15);
    assert!(r.cases.iter().all(|c| c.tv.len() == 15 && c.tv.iter().all(|&t| (0.0..=1.0).contains(&t))));
    // Rows before the perturbed token cannot move.
    assert!(r.cases.iter().all(|c| c.tv[..1].iter().all(|&t| t == 0.0)));
    assert!((0.0..=1.0).contains(&r.argmax_equal_fraction));
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(json["schema"], "modlens-probe/1");
}

#[test]
fn perturbation_preconditions() {
    let p = untrained();
    let f = FormatSpec::addition();
    assert!(perturb_probe(&p, &f, &[(1, 2)], 2, &[(1, 1)]).is_err());
    assert!(perturb_probe(&p, &f, &[(1, 2)], 5, &[(1, 1)]).is_err());
    assert!(perturb_probe(&p, &f, &[(1, 2)], 3, &[(0, 1)]).is_err());
    assert!(perturb_probe(&p, &f, &[(1, 2)], 3, &[]).is_err());
    assert!(perturb_probe(&p, &f, &[(100_000, 2)], 3, &[(1, 1)]).is_err());
}

#[test]
fn representation_contract() {
    let p = untrained();
    let f = FormatSpec::addition();
    let set = collect_representations(&p, &f, &[(349, 705), (1, 2), (349, 705)], None).unwrap();
    assert_eq!((set.rows, set.cols), (3, 48));
    assert_eq!(set.row(0), set.row(2));
    assert_ne!(set.row(0), set.row(1));
    assert_eq!(set.c[0], 1054);
    assert_eq!(set.units_digit[0], 4);
}

#[test]
fn sweep_records_are_consistent() {
    let p = untrained();
    let f = FormatSpec::addition();
    let spec = LatticeSpec {
        a_range: (900, 1_300),
        b_range: (0, 400),
        stride: 23,
        dense_blocks: vec![DenseBlock { origin: (990, 0), edge: 20 }],
        sample_count: 100,
        rng_seed: 1,
    };
    let oracle = OracleSpec::symmetric(OpKind::Add, 3);
    let r = lattice_sweep(&p, &f, &spec, &oracle).unwrap();
    assert_eq!(r.records.len(), r.summary.points);
    for rec in &r.records {
        if rec.oracle_hit {
            assert_eq!(rec.model_c as u128, rec.oracle_c);
        }
        if !rec.is_ood {
            assert_eq!(rec.truth_c, rec.oracle_c);
            assert_eq!(rec.oracle_hit, rec.exact_hit);
        }
    }
    assert!(r.summary.id_points > 0 && r.summary.ood_points > 0);
    let [truth, _, model] = sweep_grids(&spec, &r.records);
    assert_eq!(truth.values.len(), truth.xs.len() * truth.ys.len());
    assert_eq!(model.xs, truth.xs);
}

#[test]
fn oracle_grid_has_period_1000() {
    let spec = LatticeSpec::four_digit(0);
    let g = oracle_grid(&spec, &OracleSpec::symmetric(OpKind::Add, 3));
    // Stride 37 is coprime with 1000, so compare exact lattice points directly.
    let oracle = OracleSpec::symmetric(OpKind::Add, 3);
    for (r, &b) in g.ys.iter().enumerate().step_by(17) {
        for (c, &a) in g.xs.iter().enumerate().step_by(13) {
            assert_eq!(g.get(c, r), modlens::oracle::oracle_eval(&oracle, a % 1000, b % 1000) as f64);
        }
    }
}

fn random_matrix(rows: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pca_invariants(rows in 2usize..60, dim in 1usize..12, seed in 0u64..1000, kf in 0.0f64..1.0) {
        let data = random_matrix(rows, dim, seed);
        let kmax = rows.min(dim);
        let k = 1 + ((kmax - 1) as f64 * kf) as usize;
        let r = pca(&data, rows, dim, k).unwrap();
        for i in 0..k {
            for j in 0..k {
                let d: f64 = r.component(i).iter().zip(r.component(j)).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((d - want).abs() < 1e-6, "gram[{}][{}] = {}", i, j, d);
            }
        }
        prop_assert!(r.explained_variance_ratios.iter().all(|&v| v >= 0.0));
        prop_assert!(r.explained_variance_ratios.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        prop_assert!(r.ratio_sum() <= 1.0 + 1e-9);
        for i in 0..k {
            let c = r.component(i);
            let top = c.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            prop_assert!(top > 0.0);
        }
        let x = &data[..dim];
        let p = r.project(x);
        for (a, b) in p.iter().zip(r.projection(0)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn rank_deficient_input_pads_orthonormally() {
    // Three distinct points span a plane: ratios beyond rank 2 are zero.
    let data = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0];
    let r = pca(&data, 3, 4, 3).unwrap();
    assert!(!r.degenerate);
    assert!((r.explained_variance_ratios[0] + r.explained_variance_ratios[1] - 1.0).abs() < 1e-12);
    assert_eq!(r.explained_variance_ratios[2], 0.0);
    for i in 0..3 {
        let n: f64 = r.component(i).iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn phase_analysis_rejects_mixed_configs() {
    let f = FormatSpec::addition();
    let mut other = ModelConfig::addition();
    other.d_model = 24;
    let cks = vec![
        ("a".to_string(), untrained()),
        ("b".to_string(), Params::init(&other, 0).unwrap()),
    ];
    assert!(phase_analysis(&cks, &f, &[(1, 2), (3, 4), (5, 6)], 3).is_err());
    assert!(phase_analysis(&[], &f, &[(1, 2)], 3).is_err());
}
