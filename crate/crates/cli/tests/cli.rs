use std::path::Path;
use std::process::{Command, Output};

fn modlens(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modlens"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("MODLENS_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_data_writes_three_splits() {
    let dir = tempfile::tempdir().unwrap();
    let o = modlens(&["gen-data"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["d1.txt", "d2.txt", "d3.txt"] {
        let text = std::fs::read_to_string(dir.path().join("data").join(name)).unwrap();
        assert_eq!(text.lines().count(), 10_000);
        assert!(text.lines().all(|l| l.len() == 16));
    }
    let first = std::fs::read(dir.path().join("data/d1.txt")).unwrap();
    let o = modlens(&["gen-data"], dir.path());
    assert!(o.status.success());
    assert_eq!(std::fs::read(dir.path().join("data/d1.txt")).unwrap(), first);
}

#[test]
fn zero_iterations_writes_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(modlens(&["gen-data"], dir.path()).status.success());
    let o = modlens(&["train", "--max-iterations", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("initial.ckpt").exists());
    assert!(!dir.path().join("final.ckpt").exists());
}

#[test]
fn unknown_figure_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = modlens(&["reproduce", "fig9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fig1, fig2, fig3, fig4, fig5, table2"));
}

#[test]
fn exit_codes_distinguish_config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nlearning_rat = 1.0\n").unwrap();
    let o = modlens(&["--config", cfg.to_str().unwrap(), "show-config"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = modlens(&["eval"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn config_file_and_flags_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[run]\npreset = \"mul3\"\n[train]\nbatch_size = 32\n").unwrap();
    let o = modlens(&["--config", cfg.to_str().unwrap(), "--seed", "7", "show-config"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("preset = \"mul3\""));
    assert!(text.contains("batch_size = 32"));
    assert!(text.contains("seed = 7"));
    assert!(text.contains("d_model = 192"));

    let o = modlens(&["--config", cfg.to_str().unwrap(), "--preset", "add3", "show-config"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
