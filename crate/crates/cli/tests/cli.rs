use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evrec_core::dataio::{load_model, load_report};
use evrec_core::experiments::Series;
use evrec_core::regression::Regime;
use tempfile::TempDir;

fn evrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evrec"))
        .args(args)
        .env_remove("EVREC_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn copy_fixture(name: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    for f in fs::read_dir(fixture(name)).unwrap() {
        let f = f.unwrap().path();
        fs::copy(&f, dir.path().join(f.file_name().unwrap())).unwrap();
    }
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_reports_counts_and_exit_codes() {
    let o = evrec(&["ingest", s(&fixture("salone_events"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "30 events, 2 users, 0 rejects");

    let empty = TempDir::new().unwrap();
    assert_eq!(evrec(&["ingest", s(empty.path())]).status.code(), Some(2));
    assert_eq!(evrec(&["ingest", s(&empty.path().join("nope"))]).status.code(), Some(2));

    let broken = copy_fixture("worked_example");
    fs::write(broken.path().join("responses.csv"), "user_id,event_id,score_init,score_fin\nsusan,ghost,,4\n").unwrap();
    let o = evrec(&["ingest", s(broken.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ghost"));
}

#[test]
fn ingest_exits_one_when_rows_are_rejected() {
    let dir = copy_fixture("worked_example");
    // drop one of Susan's interests so the only response cannot be scored
    let interests = fs::read_to_string(dir.path().join("interests.csv")).unwrap();
    let kept: Vec<&str> = interests.lines().filter(|l| !l.contains(",beer,")).collect();
    fs::write(dir.path().join("interests.csv"), kept.join("\n") + "\n").unwrap();
    let o = evrec(&["ingest", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).ends_with("1 rejects\n"), "{}", stdout(&o));
}

#[test]
fn unknown_regime_is_a_usage_error() {
    let o = evrec(&["train", "--regime", "ia_y", "--train", s(&fixture("worked_example"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ia_xd_tyi") && err.contains("ia0_fin"), "{err}");
}

#[test]
fn train_is_deterministic_and_writes_models() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let test = tmp.path().join("test");
    assert!(evrec(&["synth", "--out", s(&data), "--seed", "7", "--users", "40"]).status.success());
    assert!(evrec(&["synth", "--out", s(&test), "--seed", "8", "--users", "20"]).status.success());
    let run = |out: &Path| {
        evrec(&[
            "train", "--regime", "ia0_fin,ia_x", "--regime", "ia_xd_tyi", "--seed", "11", "--train", s(&data),
            "--test", s(&test), "--out", s(out),
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (oa, ob) = (run(&a), run(&b));
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    assert!(ob.status.success());
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("report.txt")).unwrap(), fs::read(b.join("report.txt")).unwrap());
    assert_eq!(stdout(&oa), fs::read_to_string(a.join("report.txt")).unwrap());

    let report = load_report(a.join("report.json")).unwrap();
    let ids: Vec<Regime> = report.regimes.iter().map(|r| r.regime).collect();
    assert_eq!(ids, [Regime::Ia0Fin, Regime::IaX, Regime::IaXdTyi]);
    assert!(report.test_row(Regime::IaX).unwrap().mean.is_some());
    assert!(report.comparison(Series::Test, Regime::Ia0Fin, Regime::IaX).is_some());
    for r in ids {
        let m = load_model(a.join("models").join(format!("{}.json", r.name()))).unwrap();
        assert_eq!(m.regime, Some(r));
        assert_eq!(Some(m.function), report.averaged_model(r));
    }
    let run_json = fs::read_to_string(a.join("run.json")).unwrap();
    assert!(run_json.contains("\"completed\""));
}

#[test]
fn score_orders_events_and_respects_top() {
    let tmp = TempDir::new().unwrap();
    assert!(evrec(&["export-presets", s(tmp.path())]).status.success());
    let model = tmp.path().join("sigma_x.json");
    let data = fixture("salone_events");
    let full = evrec(&["score", "--user", "susan", "--model", s(&model), "--data", s(&data)]);
    assert!(full.status.success());
    let again = evrec(&["score", "--user", "susan", "--model", s(&model), "--data", s(&data)]);
    assert_eq!(full.stdout, again.stdout);

    let text = stdout(&full);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let scored: Vec<f64> = rows
        .iter()
        .filter(|l| !l.trim_start().starts_with('-'))
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(scored.windows(2).all(|w| w[0] >= w[1]));
    assert!(text.contains("oil"), "the o12 failure is listed");

    let top = evrec(&["score", "--user", "susan", "--model", s(&model), "--data", s(&data), "--top", "1"]);
    let top_text = stdout(&top);
    assert_eq!(top_text.lines().count(), 2);
    assert_eq!(top_text.lines().nth(1), text.lines().nth(1));
}

#[test]
fn score_error_exit_codes() {
    let data = fixture("salone_events");
    let o = evrec(&["score", "--user", "susan", "--model", "/nonexistent/m.json", "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(2));
    let tmp = TempDir::new().unwrap();
    evrec(&["export-presets", s(tmp.path())]);
    let model = tmp.path().join("sigma_x.json");
    let o = evrec(&["score", "--user", "nobody", "--model", s(&model), "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn data_dir_can_come_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    evrec(&["export-presets", s(tmp.path())]);
    let o = Command::new(env!("CARGO_BIN_EXE_evrec"))
        .args(["score", "--user", "guest", "--model", s(&tmp.path().join("sigma_xu_abs.json"))])
        .env("EVREC_DATA_DIR", fixture("salone_events"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
