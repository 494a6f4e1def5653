use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctrkd::experiment::ExperimentConfig;

fn ctrkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrkd"))
        .args(args)
        .output()
        .unwrap()
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.conf");
    std::fs::write(
        &path,
        format!("{body}experiment.output = {}\n", dir.join("out").display()),
    )
    .unwrap();
    path.display().to_string()
}

const SMALL: &str = "\
data.source = synthetic
synthetic.samples = 800
synthetic.field_values = 4,5,6
synthetic.num_numeric = 1
model.fm.wide = fm
model.fm.embedding_dim = 3
model.dnn.deep = mlp:4
model.dnn.embedding_dim = 2
train.batch_size = 100
train.max_epochs = 2
experiment.teachers = fm
experiment.student = dnn
";

#[test]
fn missing_config_exits_with_one() {
    let out = ctrkd(&["preprocess"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn unknown_key_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "data.source = synthetic\ntrain.learning_rate = 0.1\n",
    );
    let out = ctrkd(&["-c", &cfg, "preprocess"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn preprocess_on_fixture_writes_vocabulary_summary() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = manifest_dir().join("tests/fixtures/criteo_10k.tsv.gz");
    let cfg = write_config(
        dir.path(),
        &format!(
            "data.source = file\ndata.path = {}\ndata.format = criteo\ndata.split = random:1,0,0\n",
            fixture.display()
        ),
    );
    let out = ctrkd(&["-c", &cfg, "preprocess"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = std::fs::read_to_string(dir.path().join("out/preprocess.txt")).unwrap();
    assert!(summary.contains("train_rows = 10000"));
    assert!(summary.contains(
        "vocab_sizes = 4,10,32,62,121,214,353,236,176,57,9,16,41,91,201,354,303,65,129,85,6,13,27,51,101,64"
    ));
    assert!(dir.path().join("out/vocab.txt").exists());
}

#[test]
fn distill_before_teachers_fails_and_leaves_marker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = ctrkd(&["-c", &cfg, "distill"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("preflight"));
    assert!(dir.path().join("out/FAILED").exists());
}

#[test]
fn staged_verbs_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for verb in ["preprocess", "train-teacher", "distill", "evaluate"] {
        let out = ctrkd(&["-c", &cfg, verb]);
        assert!(
            out.status.success(),
            "{verb}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = ctrkd(&["-c", &cfg, "report", "--baseline", "fm"]);
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    for model in ["fm ", "dnn ", "dnn+kd "] {
        assert!(table.lines().any(|l| l.starts_with(model)), "{table}");
    }
    assert!(table.contains("+0.0‰"));

    let out = ctrkd(&["-c", &cfg, "report", "--baseline", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn make_ensemble_lists_one_checkpoint_per_copy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = ctrkd(&["-c", &cfg, "--set", "ensemble.copies=2", "make-ensemble"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let paths: Vec<String> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(str::to_string)
        .collect();
    assert_eq!(paths.len(), 2);
    assert!(paths.iter().all(|p| Path::new(p).exists()));
}

#[test]
fn bundled_recipes_parse_and_validate() {
    for name in ["criteo", "avazu", "synthetic"] {
        let text =
            std::fs::read_to_string(manifest_dir().join(format!("configs/{name}.conf"))).unwrap();
        let cfg = ExperimentConfig::parse(&text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
