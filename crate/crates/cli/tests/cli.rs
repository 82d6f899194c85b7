use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
corpus.train_count=12
corpus.dev_count=4
corpus.test_count=6
corpus.max_len=3
encoder.layers=1
asr_train.epochs=1
asr_train.batch_size=4
refiner_train.epochs=1
refiner_train.batch_size=4
";

fn latentfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latentfm")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.cfg");
    std::fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_without_asr_checkpoint_is_a_usage_error() {
    let o = latentfm(&["eval"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--asr-ckpt"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = latentfm(&["gen-data", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let o = latentfm(&["selftest"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{out}\n{}", stderr(&o));
    assert!(out.lines().count() >= 6 && out.lines().all(|l| l.starts_with("PASS")), "{out}");
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = latentfm(&["gen-data", "--config", &cfg, "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("corpus.seed="), "resolved config is logged");
    }
    for name in ["train.lfds", "dev.lfds", "test.lfds"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn invalid_config_has_its_own_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "corpus.no_such_key=1\n").unwrap();
    let o = latentfm(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("error: invalid config"), "{}", stderr(&o));

    std::fs::write(&cfg, "flow.steps=0\n").unwrap();
    assert_eq!(latentfm(&["gen-data", "--config", s(&cfg)]).status.code(), Some(3));
}

#[test]
fn missing_files_have_their_own_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let o = latentfm(&["gen-data", "--config", s(&missing)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("error: missing file"), "{}", stderr(&o));

    let o = latentfm(&["eval", "--data", s(dir.path()), "--asr-ckpt", s(&dir.path().join("asr.ckpt"))]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn corrupt_checkpoint_is_reported_as_unreadable() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("asr.ckpt");
    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    let o = latentfm(&["eval", "--data", s(dir.path()), "--asr-ckpt", s(&ckpt)]);
    assert_eq!(o.status.code(), Some(6));
    assert!(stderr(&o).contains("error: unreadable file"), "{}", stderr(&o));
}

#[test]
fn stages_chain_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let asr = run.join("asr.ckpt");
    let refiner = run.join("refiner.ckpt");
    let steps: Vec<Vec<&str>> = vec![
        vec!["gen-data", "--config", &cfg, "--out", s(&data)],
        vec!["train-asr", "--config", &cfg, "--data", s(&data), "--out", s(&asr)],
        vec!["train-refiner", "--config", &cfg, "--data", s(&data), "--asr-ckpt", s(&asr), "--out", s(&refiner)],
        vec!["eval", "--config", &cfg, "--data", s(&data), "--asr-ckpt", s(&asr), "--refiner-ckpt", s(&refiner), "--out", s(&run)],
    ];
    for args in &steps {
        let o = latentfm(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let csv = std::fs::read_to_string(run.join("report.csv")).unwrap();
    assert!(csv.starts_with("condition,snr_db,n_utts,wer\n"));
    for c in ["unprocessed,", "unprocessed+refiner,", "SE,", "SE+refiner,"] {
        assert!(csv.lines().any(|l| l.starts_with(c)), "{c} missing from\n{csv}");
    }
    let table = std::fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(table.contains("Avg."));

    // an asr checkpoint where a refiner is expected
    let o = latentfm(&["eval", "--config", &cfg, "--data", s(&data), "--asr-ckpt", s(&asr), "--refiner-ckpt", s(&asr)]);
    assert_eq!(o.status.code(), Some(6));
    assert!(stderr(&o).contains("wrong checkpoint kind"), "{}", stderr(&o));
}
