//! End-to-end commands: data generation, training, evaluation, probes, and
//! figure reproduction. Every figure is rendered from a data file written first,
//! so re-rendering that file reproduces the figure byte for byte.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{encode_operands, generate_splits, read_splits, write_splits, FormatSpec, OpKind, SplitSet};
use crate::error::{Error, Result};
use crate::model::checkpoint::load_checkpoint_for;
use crate::model::{generate_answers, next_token_distribution, Params};
use crate::oracle::{ground_truth, oracle_eval, OracleSpec};
use crate::probes::{
    analyze_phase, coordinates_csv, lattice_sweep_with, perturb_probe, phase_analysis, sweep::Grid,
    LatticeSpec, PcaReport, PerturbReport, PerturbTarget, PhaseReport, SweepSummary, PROBE_SCHEMA,
    SWEEP_HEADER,
};
use crate::report::{render_curve_svg, render_heatmap_svg, render_prob_bars_svg, render_scatter3d_svg, Palette, Series};
use crate::train::{
    evaluate_with_oracle, milestone_file_name, parse_metrics_csv, predict_results, train, TrainOutcome,
    INITIAL_CHECKPOINT, METRICS_FILE,
};

pub const DATA_DIR: &str = "data";
pub const PROBE_DIR: &str = "probes";
pub const FIGURE_DIR: &str = "figures";

/// The worked perturbation families: base pair and the thousands digits set on (a, b).
pub const WORKED_EXAMPLES: [((u64, u64), (u8, u8)); 2] = [((349, 705), (1, 2)), ((128, 256), (3, 4))];

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn oracle_for(format: &FormatSpec) -> OracleSpec {
    OracleSpec::symmetric(format.op, format.n_train_digits)
}

pub fn data_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run.out_dir.join(DATA_DIR)
}

pub fn probe_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run.out_dir.join(PROBE_DIR)
}

pub fn figure_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run.out_dir.join(FIGURE_DIR)
}

pub fn gen_data(cfg: &RunConfig) -> Result<SplitSet> {
    let splits = generate_splits(&cfg.corpus_spec()?)?;
    write_splits(&data_dir(cfg), &splits)?;
    Ok(splits)
}

pub fn load_data(cfg: &RunConfig) -> Result<SplitSet> {
    let dir = data_dir(cfg);
    let splits = read_splits(&dir)?;
    if splits.spec != cfg.corpus_spec()? {
        return Err(Error::Data(format!(
            "datasets in {} were generated from a different corpus configuration",
            dir.display()
        )));
    }
    Ok(splits)
}

fn load_or_generate(cfg: &RunConfig) -> Result<SplitSet> {
    if data_dir(cfg).join(crate::corpus::CORPUS_METADATA_FILE).exists() {
        load_data(cfg)
    } else {
        gen_data(cfg)
    }
}

/// Trains from a fresh seeded initialization on the stored datasets.
pub fn train_run(cfg: &RunConfig) -> Result<TrainOutcome> {
    let splits = load_data(cfg)?;
    let initial = Params::<f32>::init(&cfg.model, cfg.run.seed)?;
    fs::create_dir_all(&cfg.run.out_dir).map_err(|e| Error::io(&cfg.run.out_dir, e))?;
    let outcome = train(initial, &splits, &cfg.train, Some(&cfg.run.out_dir))?;
    render_training_curves(cfg)?;
    Ok(outcome)
}

pub fn render_training_curves(cfg: &RunConfig) -> Result<()> {
    let rows = parse_metrics_csv(&read(&cfg.run.out_dir.join(METRICS_FILE))?)?;
    if rows.is_empty() {
        return Ok(());
    }
    let series = |label: &str, f: fn(&crate::train::MetricsRow) -> f64| Series {
        label: label.to_string(),
        points: rows.iter().map(|r| (r.iteration as f64, f(r))).collect(),
    };
    let svg = render_curve_svg(
        &format!("{} training curves", cfg.run.preset),
        "iteration",
        "accuracy",
        &[
            series("train", |r| r.train_acc),
            series("ID test", |r| r.id_acc),
            series("OOD test", |r| r.ood_acc),
            series("OOD oracle match", |r| r.oracle_match_rate),
        ],
    )?;
    write(&figure_dir(cfg).join("fig1_curves.svg"), svg)
}

fn load_params(cfg: &RunConfig, path: &Path) -> Result<Params<f32>> {
    Ok(load_checkpoint_for(path, &cfg.model)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub train_acc: f64,
    pub id_acc: f64,
    pub ood_acc: f64,
    pub ood_oracle_match: f64,
}

pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    let splits = load_data(cfg)?;
    let path = cfg.checkpoint_path();
    let params = load_params(cfg, &path)?;
    let format = cfg.format()?;
    let oracle = oracle_for(&format);
    let (train_acc, _) = evaluate_with_oracle(&params, &splits.d1, &format, &oracle)?;
    let (id_acc, _) = evaluate_with_oracle(&params, &splits.d2, &format, &oracle)?;
    let (ood_acc, ood_oracle_match) = evaluate_with_oracle(&params, &splits.d3, &format, &oracle)?;
    let report = EvalReport {
        checkpoint: path.strip_prefix(&cfg.run.out_dir).unwrap_or(&path).display().to_string(),
        train_acc,
        id_acc,
        ood_acc,
        ood_oracle_match,
    };
    write(&cfg.run.out_dir.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Writes `x,y,value` rows in row-major order over `ys` then `xs`.
pub fn grid_csv(grid: &Grid) -> String {
    let mut out = String::from("x,y,value\n");
    for (r, y) in grid.ys.iter().enumerate() {
        for (c, x) in grid.xs.iter().enumerate() {
            out.push_str(&format!("{x},{y},{}\n", grid.get(c, r)));
        }
    }
    out
}

pub fn parse_grid_csv(text: &str) -> Result<Grid> {
    let mut xs = Vec::new();
    let mut ys: Vec<u64> = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Data(format!("grid line {}: {line:?}", i + 1));
        if f.len() != 3 {
            return Err(bad());
        }
        let x: u64 = f[0].parse().map_err(|_| bad())?;
        let y: u64 = f[1].parse().map_err(|_| bad())?;
        values.push(f[2].parse::<f64>().map_err(|_| bad())?);
        if ys.last() != Some(&y) {
            ys.push(y);
        }
        if ys.len() == 1 {
            xs.push(x);
        }
    }
    if values.len() != xs.len() * ys.len() {
        return Err(Error::Data("grid CSV is not a complete rectangle".into()));
    }
    Ok(Grid { xs, ys, values })
}

/// Renders a heatmap from a grid CSV written by [`grid_csv`].
pub fn render_heatmap_file(title: &str, data: &Path, palette: Palette) -> Result<String> {
    let grid = parse_grid_csv(&read(data)?)?;
    render_heatmap_svg(title, &grid.xs, &grid.ys, &grid.values, palette)
}

fn emit_heatmap(dir: &Path, stem: &str, title: &str, grid: &Grid, palette: Palette) -> Result<PathBuf> {
    let data = dir.join(format!("{stem}.csv"));
    write(&data, grid_csv(grid))?;
    let svg = dir.join(format!("{stem}.svg"));
    write(&svg, render_heatmap_file(title, &data, palette)?)?;
    Ok(svg)
}

/// Cap on heatmap cells per axis; keeps SVG sizes reasonable.
const HEATMAP_CELLS: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeReport {
    pub schema: String,
    pub spec: LatticeSpec,
    pub summary: SweepSummary,
    pub id_exact_rate: f64,
    pub ood_exact_rate: f64,
    pub ood_oracle_rate: f64,
}

pub fn probe_lattice(cfg: &RunConfig) -> Result<LatticeReport> {
    let format = cfg.format()?;
    let params = load_params(cfg, &cfg.checkpoint_path())?;
    let spec = if cfg.probe.exhaustive {
        LatticeSpec::exhaustive_four_digit()
    } else {
        cfg.probe.lattice.clone()
    };
    let oracle = oracle_for(&format);
    let dir = probe_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let (xs, ys) = spec.grid_axes();
    let grid_points = xs.len() * ys.len();
    let mut grids = [Vec::new(), Vec::new(), Vec::new()];
    let csv_path = dir.join("lattice.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut csv = std::io::BufWriter::new(file);
    use std::io::Write as _;
    writeln!(csv, "{SWEEP_HEADER}").map_err(|e| Error::io(&csv_path, e))?;
    let mut seen = 0usize;
    let summary = lattice_sweep_with(&params, &format, &spec, &oracle, |r| {
        writeln!(csv, "{}", r.csv_line()).map_err(|e| Error::io(&csv_path, e))?;
        if seen < grid_points {
            grids[0].push(r.truth_c as f64);
            grids[1].push(r.oracle_c as f64);
            grids[2].push(r.model_c as f64);
        }
        seen += 1;
        Ok(())
    })?;
    csv.flush().map_err(|e| Error::io(&csv_path, e))?;

    let figs = figure_dir(cfg);
    let op = format.op;
    for (values, (stem, label)) in grids.into_iter().zip([
        ("fig2_truth", "ground truth"),
        ("fig2_oracle", "equivalence-class oracle"),
        ("fig2_model", "model output"),
    ]) {
        let grid = Grid { xs: xs.clone(), ys: ys.clone(), values }.downsample(HEATMAP_CELLS);
        emit_heatmap(&figs, stem, &format!("{op}: {label}"), &grid, Palette::Viridis)?;
    }
    let report = LatticeReport {
        schema: PROBE_SCHEMA.to_string(),
        spec,
        id_exact_rate: summary.id_exact_rate(),
        ood_exact_rate: summary.ood_exact_rate(),
        ood_oracle_rate: summary.ood_oracle_rate(),
        summary,
    };
    write(&dir.join("lattice.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn random_pairs(count: usize, limit: u64, seed: u64) -> Vec<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (rng.random_range(0..limit), rng.random_range(0..limit)))
        .collect()
}

/// Base pairs for the perturbation probe: the worked examples followed by
/// seeded random in-distribution pairs.
pub fn perturb_base_pairs(cfg: &RunConfig, format: &FormatSpec) -> Vec<(u64, u64)> {
    let mut pairs: Vec<(u64, u64)> = WORKED_EXAMPLES.iter().map(|(p, _)| *p).collect();
    pairs.extend(random_pairs(cfg.probe.perturb_base_pairs, format.operand_limit().min(crate::corpus::pow10(format.n_train_digits)), cfg.probe.perturb_seed));
    pairs
}

/// Whether every variant of each worked family reproduces its base answer.
pub fn worked_examples_match(report: &PerturbReport) -> bool {
    WORKED_EXAMPLES.iter().all(|&(base, (da, db))| {
        let place = crate::corpus::pow10(report.digit_position);
        let want = |t: PerturbTarget| match t {
            PerturbTarget::A => (base.0 + da as u64 * place, base.1),
            PerturbTarget::B => (base.0, base.1 + db as u64 * place),
            PerturbTarget::Both => (base.0 + da as u64 * place, base.1 + db as u64 * place),
        };
        let family: Vec<_> = report
            .cases_for(base)
            .filter(|c| c.perturbed == want(c.target))
            .collect();
        family.len() == 3 && family.iter().all(|c| c.argmax_equal)
    })
}

pub fn probe_perturb(cfg: &RunConfig) -> Result<PerturbReport> {
    let format = cfg.format()?;
    let params = load_params(cfg, &cfg.checkpoint_path())?;
    let bases = perturb_base_pairs(cfg, &format);
    let report = perturb_probe(&params, &format, &bases, cfg.probe.digit_position, &cfg.probe.digit_values)?;
    write(&probe_dir(cfg).join("perturb.json"), report.to_json()?)?;

    // Probability bars for each worked family, panels a-d and e-h.
    let place = crate::corpus::pow10(cfg.probe.digit_position);
    let figs = figure_dir(cfg);
    for (idx, &((a, b), (da, db))) in WORKED_EXAMPLES.iter().enumerate() {
        let variants = [
            (a, b),
            (a + da as u64 * place, b),
            (a, b + db as u64 * place),
            (a + da as u64 * place, b + db as u64 * place),
        ];
        for (v, &(x, y)) in variants.iter().enumerate() {
            let stem = format!("fig3_{}", ["abcd", "efgh"][idx].as_bytes()[v] as char);
            let data = figs.join(format!("{stem}.csv"));
            write(&data, answer_distribution_csv(&params, &format, x, y)?)?;
            let title = format!("{x} {} {y}", format.op.symbol());
            write(&figs.join(format!("{stem}.svg")), render_prob_bars_file(&title, &data)?)?;
        }
    }
    Ok(report)
}

/// `label,p0..p9` rows: next-token distributions over the greedy completion.
pub fn answer_distribution_csv(params: &Params<f32>, format: &FormatSpec, a: u64, b: u64) -> Result<String> {
    let prefix = encode_operands(a, b, format)?;
    let answer = generate_answers(params, &[prefix.clone()], format.result_width)?.remove(0);
    let mut seq = prefix;
    seq.extend_from_slice(&answer);
    seq.truncate(params.config.context_window);
    let dists = next_token_distribution(params, &seq)?;
    let (r0, r1) = crate::probes::answer_rows(format);
    let mut out = String::from("label");
    for v in 0..params.config.vocab_size {
        out.push_str(&format!(",p{v}"));
    }
    out.push('\n');
    for (i, row) in dists[r0..r1].iter().enumerate() {
        out.push_str(&format!("c{i}={}", answer[i]));
        for p in row {
            out.push_str(&format!(",{p:.6}"));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn render_prob_bars_file(title: &str, data: &Path) -> Result<String> {
    let text = read(data)?;
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut f = line.split(',');
        labels.push(f.next().unwrap_or_default().to_string());
        rows.push(
            f.map(|v| v.parse::<f64>().map_err(|_| Error::Data(format!("line {}: {line:?}", i + 1))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    render_prob_bars_svg(title, &labels, &rows)
}

/// Renders the first three projected coordinates of a coordinates CSV, colored by units digit.
pub fn render_scatter_file(title: &str, data: &Path) -> Result<String> {
    let text = read(data)?;
    let mut points = Vec::new();
    let mut classes = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Data(format!("coordinates line {}: {line:?}", i + 1));
        if f.len() < 7 {
            return Err(bad());
        }
        let pc = |j: usize| f[2 + j].parse::<f64>().map_err(|_| bad());
        points.push([pc(0)?, pc(1)?, pc(2)?]);
        classes.push(f[f.len() - 1].parse::<u8>().map_err(|_| bad())?);
    }
    render_scatter3d_svg(title, &points, &classes)
}

pub fn pca_pairs(cfg: &RunConfig, format: &FormatSpec) -> Vec<(u64, u64)> {
    random_pairs(cfg.probe.pca_pairs, crate::corpus::pow10(format.n_train_digits), cfg.probe.pca_seed)
}

pub fn probe_pca(cfg: &RunConfig) -> Result<PcaReport> {
    let format = cfg.format()?;
    let params = load_params(cfg, &cfg.checkpoint_path())?;
    let pairs = pca_pairs(cfg, &format);
    let analysis = analyze_phase("final", &params, &format, &pairs, cfg.probe.pca_k, Some(cfg.probe.position))?;
    let dir = probe_dir(cfg);
    let report = PcaReport::new(&analysis.pca, analysis.representations.rows, cfg.probe.position);
    write(&dir.join("pca.json"), serde_json::to_string_pretty(&report)?)?;
    let data = dir.join("pca_coordinates.csv");
    write(&data, coordinates_csv(&analysis.representations, &analysis.pca))?;
    if analysis.pca.k >= 3 {
        write(
            &figure_dir(cfg).join("fig4_final.svg"),
            render_scatter_file("representations: top-3 principal components", &data)?,
        )?;
    }
    Ok(report)
}

/// Initial checkpoint followed by one checkpoint per milestone, in threshold order.
pub fn phase_checkpoints(cfg: &RunConfig) -> Vec<(String, PathBuf)> {
    let mut out = vec![("initial".to_string(), cfg.run.out_dir.join(INITIAL_CHECKPOINT))];
    for &t in &cfg.train.milestones {
        let name = milestone_file_name(t);
        out.push((name.trim_end_matches(".ckpt").to_string(), cfg.run.out_dir.join(name)));
    }
    out
}

pub fn probe_phases(cfg: &RunConfig) -> Result<PhaseReport> {
    let format = cfg.format()?;
    let mut checkpoints = Vec::new();
    for (label, path) in phase_checkpoints(cfg) {
        checkpoints.push((label, load_params(cfg, &path)?));
    }
    let pairs = pca_pairs(cfg, &format);
    let k = cfg.probe.pca_k.max(3);
    let (report, analyses) = phase_analysis(&checkpoints, &format, &pairs, k)?;
    let dir = probe_dir(cfg);
    write(&dir.join("phases.json"), report.to_json()?)?;
    for a in &analyses {
        let data = dir.join(format!("phase_coordinates_{}.csv", a.label));
        write(&data, coordinates_csv(&a.representations, &a.pca))?;
        write(
            &figure_dir(cfg).join(format!("fig4_{}.svg", a.label)),
            render_scatter_file(&format!("{}: purity {:.3}", a.label, a.purity), &data)?,
        )?;
    }
    Ok(report)
}

/// Principal-component heatmaps over a strided grid of the four-digit lattice.
pub fn probe_pc_heatmaps(cfg: &RunConfig) -> Result<PcaReport> {
    let format = cfg.format()?;
    let params = load_params(cfg, &cfg.checkpoint_path())?;
    let s = cfg.probe.heatmap_stride;
    let limit = cfg.probe.lattice.a_range.1.min(format.operand_limit());
    let axis: Vec<u64> = (0..limit).step_by(s as usize).collect();
    let pairs: Vec<(u64, u64)> = axis.iter().flat_map(|&b| axis.iter().map(move |&a| (a, b))).collect();
    let analysis = analyze_phase("lattice", &params, &format, &pairs, cfg.probe.pca_k, Some(cfg.probe.position))?;
    let figs = figure_dir(cfg);
    for pc in 0..analysis.pca.k {
        let grid = Grid {
            xs: axis.clone(),
            ys: axis.clone(),
            values: (0..pairs.len()).map(|i| analysis.pca.projection(i)[pc]).collect(),
        };
        emit_heatmap(&figs, &format!("fig5_pc{}", pc + 1), &format!("principal component {}", pc + 1), &grid, Palette::Viridis)?;
    }
    let report = PcaReport::new(&analysis.pca, pairs.len(), cfg.probe.position);
    write(&probe_dir(cfg).join("pca_lattice.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub op: OpKind,
    pub a: u64,
    pub b: u64,
    /// `None` when no model for this operation was probed.
    pub model_c: Option<u64>,
    pub truth_c: u128,
    pub oracle_c: u128,
}

pub const TABLE2_PAIRS: [(OpKind, u64, u64); 4] = [
    (OpKind::Add, 349, 705),
    (OpKind::Add, 1_349, 2_705),
    (OpKind::Mul, 128, 256),
    (OpKind::Mul, 3_128, 4_256),
];

pub fn table2(cfg: &RunConfig) -> Result<Vec<Table2Row>> {
    let format = cfg.format()?;
    let params = load_params(cfg, &cfg.checkpoint_path())?;
    let mut rows = Vec::new();
    for &(op, a, b) in &TABLE2_PAIRS {
        let model_c = if op == format.op {
            Some(predict_results(&params, &[(a, b)], &format)?[0])
        } else {
            None
        };
        rows.push(Table2Row {
            op,
            a,
            b,
            model_c,
            truth_c: ground_truth(op, a, b),
            oracle_c: oracle_eval(&OracleSpec::symmetric(op, format.n_train_digits), a, b),
        });
    }
    let mut csv = String::from("operands,model_output,correct_result,oracle_output\n");
    for r in &rows {
        let model = r.model_c.map_or("-".to_string(), |c| c.to_string());
        csv.push_str(&format!("{} {} {},{model},{},{}\n", r.a, r.op.symbol(), r.b, r.truth_c, r.oracle_c));
    }
    write(&cfg.run.out_dir.join("table2.csv"), csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Table2,
}

impl FigureId {
    pub const ALL: [FigureId; 6] =
        [FigureId::Fig1, FigureId::Fig2, FigureId::Fig3, FigureId::Fig4, FigureId::Fig5, FigureId::Table2];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::Table2 => "table2",
        }
    }

    pub fn valid_ids() -> String {
        Self::ALL.iter().map(|f| f.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown figure id {s:?}; valid ids: {}", Self::valid_ids())))
    }
}

/// One named threshold comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    pub fn at_least(name: &str, value: f64, min: f64) -> Self {
        Check { name: name.into(), value, threshold: format!(">= {min}"), passed: value >= min }
    }

    pub fn at_most(name: &str, value: f64, max: f64) -> Self {
        Check { name: name.into(), value, threshold: format!("<= {max}"), passed: value <= max }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Check { name: name.into(), value: ok as u8 as f64, threshold: "true".into(), passed: ok }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {:.4} (want {})",
            if self.passed { "pass" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reproduction {
    pub figure: FigureId,
    pub checks: Vec<Check>,
    pub outputs: Vec<String>,
}

impl Reproduction {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Generates data and trains when the run directory lacks them.
pub fn ensure_trained(cfg: &RunConfig) -> Result<()> {
    load_or_generate(cfg)?;
    if !cfg.checkpoint_path().exists() {
        train_run(cfg)?;
    }
    Ok(())
}

pub fn reproduce(cfg: &RunConfig, figure: FigureId) -> Result<Reproduction> {
    ensure_trained(cfg)?;
    let add = cfg.run.preset.op() == OpKind::Add;
    let mut checks = Vec::new();
    let outputs: Vec<String>;
    match figure {
        FigureId::Fig1 => {
            let rows = parse_metrics_csv(&read(&cfg.run.out_dir.join(METRICS_FILE))?)?;
            let last = rows.last().ok_or(Error::Empty("metrics rows"))?;
            render_training_curves(cfg)?;
            if add {
                checks.push(Check::at_least("final ID exact match", last.id_acc, 0.99));
                checks.push(Check::at_most("final OOD exact match", last.ood_acc, 0.01));
            } else {
                checks.push(Check::at_least("final ID exact match", last.id_acc, 0.95));
                checks.push(Check::at_least("final OOD oracle match", last.oracle_match_rate, 0.90));
            }
            outputs = vec![METRICS_FILE.into(), format!("{FIGURE_DIR}/fig1_curves.svg")];
        }
        FigureId::Fig2 => {
            let r = probe_lattice(cfg)?;
            checks.push(Check::at_least("OOD oracle match", r.ood_oracle_rate, 0.95));
            checks.push(Check::at_least("ID exact match", r.id_exact_rate, 0.99));
            outputs = vec![format!("{PROBE_DIR}/lattice.csv"), format!("{PROBE_DIR}/lattice.json")];
        }
        FigureId::Fig3 => {
            let r = probe_perturb(cfg)?;
            checks.push(Check::at_least("answer argmax unchanged", r.argmax_equal_fraction, 0.95));
            checks.push(Check::holds("worked examples unchanged", worked_examples_match(&r)));
            outputs = vec![format!("{PROBE_DIR}/perturb.json")];
        }
        FigureId::Fig4 => {
            let pca = probe_pca(cfg)?;
            let phases = probe_phases(cfg)?;
            checks.push(Check::at_least("top-4 explained variance", pca.ratio_sum, 0.90));
            let last = phases.purities().last().copied().unwrap_or(0.0);
            checks.push(Check::at_least("final units-digit purity", last, 0.9));
            checks.push(Check::holds("purity non-decreasing", phases.purity_non_decreasing()));
            outputs = vec![format!("{PROBE_DIR}/pca.json"), format!("{PROBE_DIR}/phases.json")];
        }
        FigureId::Fig5 => {
            let r = probe_pc_heatmaps(cfg)?;
            checks.push(Check::holds("components computed", !r.degenerate));
            outputs = (1..=r.k).map(|i| format!("{FIGURE_DIR}/fig5_pc{i}.svg")).collect();
        }
        FigureId::Table2 => {
            let rows = table2(cfg)?;
            for r in rows.iter().filter(|r| r.model_c.is_some()) {
                checks.push(Check::holds(
                    &format!("{} {} {} matches oracle", r.a, r.op.symbol(), r.b),
                    r.model_c.map(u128::from) == Some(r.oracle_c),
                ));
            }
            outputs = vec!["table2.csv".into()];
        }
    }
    let rep = Reproduction { figure, checks, outputs };
    write(
        &cfg.run.out_dir.join(format!("reproduce_{figure}.json")),
        serde_json::to_string_pretty(&rep)?,
    )?;
    Ok(rep)
}
