use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wtal::stages::{REPORT_MAP, REPORT_ERRORS};
use wtal::text::{read_eval_kv, write_predictions};
use wtal::RunConfig;
use wtal_core::ActionInstance;

const SMALL: &str = "\
# small and quick
synth_n_train 10
synth_n_test 5
synth_segments 24
wtal_epochs 10
tspca_epochs 10
";

fn wtal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wtal")).args(args).output().unwrap()
}

fn config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("cfg.txt");
    fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_all_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&wtal(&["run-all", "--config", cfg, "--seed", "0", "--out", a.to_str().unwrap()]));
    ok(&wtal(&["run-all", "--config", cfg, "--seed", "0", "--out", b.to_str().unwrap()]));
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() > 20);
    assert_eq!(ta, tb);
    // A different seed changes the data.
    let c = dir.path().join("c");
    ok(&wtal(&["run-all", "--config", cfg, "--seed", "1", "--out", c.to_str().unwrap()]));
    assert_ne!(tree(&c)[Path::new("train.manifest")], ta[Path::new("train.manifest")]);
}

#[test]
fn stages_reproduce_run_all() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    let whole = dir.path().join("whole");
    let staged = dir.path().join("staged");
    ok(&wtal(&["run-all", "--config", cfg, "--out", whole.to_str().unwrap()]));
    for stage in ["gen", "train-wtal", "train-tspca", "calibrate", "localize", "eval", "report"] {
        ok(&wtal(&[stage, "--config", cfg, "--out", staged.to_str().unwrap()]));
    }
    let (tw, ts) = (tree(&whole), tree(&staged));
    assert_eq!(tw.keys().collect::<Vec<_>>(), ts.keys().collect::<Vec<_>>());
    for (k, v) in &tw {
        assert!(ts[k] == *v, "{} differs", k.display());
    }
    // Rerunning a stage reproduces its files.
    ok(&wtal(&["localize", "--config", cfg, "--out", staged.to_str().unwrap()]));
    assert_eq!(tree(&staged), ts);
}

#[test]
fn zero_gamma_gives_zero_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("o");
    ok(&wtal(&["run-all", "--config", cfg.to_str().unwrap(), "--gamma", "0", "--out", out.to_str().unwrap()]));
    let report = fs::read_to_string(out.join(REPORT_MAP)).unwrap();
    let rows: Vec<&str> = report.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1]["baseline".len()..], rows[2]["+TP".len()..]);
    assert!(rows[3].starts_with("Abs. Improve,"));
    assert!(rows[3].split(',').skip(1).all(|v| v == "0.00"), "{}", rows[3]);
    assert_eq!(
        fs::read(out.join("cas_raw.txt")).unwrap(),
        fs::read(out.join("cas_calibrated.txt")).unwrap()
    );
    let errors = fs::read_to_string(out.join(REPORT_ERRORS)).unwrap();
    let (base, cal): (Vec<&str>, Vec<&str>) = errors.lines().skip(1).partition(|l| l.starts_with("baseline"));
    for (b, c) in base.iter().zip(&cal) {
        assert_eq!(b["baseline".len()..], c["calibrated".len()..]);
    }
}

#[test]
fn report_has_one_column_per_threshold() {
    for (preset, n) in [("thumos", 9), ("activitynet", 10)] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &format!("eval_preset {preset}\n"));
        let out = dir.path().join("o");
        ok(&wtal(&["run-all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
        let report = fs::read_to_string(out.join(REPORT_MAP)).unwrap();
        for line in report.lines() {
            assert_eq!(line.split(',').count(), 1 + n, "{line}");
        }
        let traces = fs::read_dir(out.join("traces")).unwrap().count();
        assert_eq!(traces, 5);
        let trace = fs::read_to_string(out.join("traces/test_0000.csv")).unwrap();
        assert_eq!(trace.lines().next().unwrap(), "t,max_class_cas,z,max_class_calibrated");
        assert_eq!(trace.lines().count(), 1 + 24);
    }
}

#[test]
fn eval_of_ground_truth_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let base = config(dir.path(), "");
    let out = dir.path().join("o");
    ok(&wtal(&["gen", "--config", base.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let mut rc = RunConfig::from_file(&base).unwrap();
    rc.out = out.clone();
    let test = wtal::stages::load_test(&rc).unwrap();
    let preds: Vec<ActionInstance> = test
        .ground_truth
        .iter()
        .map(|g| ActionInstance {
            video_id: g.video_id.clone(),
            class_index: g.class_index,
            start_sec: g.start_sec,
            end_sec: g.end_sec,
            score: 1.0,
        })
        .collect();
    write_predictions(&preds, &dir.path().join("gt_preds.txt")).unwrap();
    let cfg = config(dir.path(), "predictions gt_preds.txt\n");
    ok(&wtal(&["eval", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let res = read_eval_kv(&out.join("eval_custom.kv")).unwrap();
    assert_eq!(res.map.len(), 9);
    assert!(res.map.iter().all(|&m| m == 1.0), "{:?}", res.map);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();

    let r = wtal(&["frobnicate"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("Usage"));
    assert_eq!(wtal(&["run-all", "--bogus"]).status.code(), Some(1));
    assert_eq!(wtal(&["--help"]).status.code(), Some(0));

    // Missing upstream stage names the stage.
    let r = wtal(&["report", "--out", o]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("stage `eval`"));
    let r = wtal(&["train-wtal", "--out", o]);
    assert!(String::from_utf8_lossy(&r.stderr).contains("stage `gen`"));

    // Unreadable config is an I/O error; a malformed one is a validation error.
    let r = wtal(&["gen", "--config", dir.path().join("absent.txt").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "synth_dim 5\n").unwrap();
    let r = wtal(&["gen", "--config", bad.to_str().unwrap(), "--out", o]);
    assert_eq!(r.status.code(), Some(1));
    fs::write(&bad, "nonsense 5\n").unwrap();
    assert_eq!(wtal(&["gen", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}
