use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isf::model_file::ModelFile;
use isf::TimeGrid;
use tempfile::TempDir;

fn isf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = isf(args);
    assert!(
        out.status.success(),
        "isf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_NET: [&str; 4] = ["--encoder-widths", "8,8", "--head-widths", "8"];

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, name: &str, n: usize, seed: u64, horizon: f64) -> PathBuf {
        let p = self.path(name);
        ok(&[
            "synth",
            "--n",
            &n.to_string(),
            "--dim",
            "3",
            "--seed",
            &seed.to_string(),
            "--censor-horizon",
            &horizon.to_string(),
            "--out",
            s(&p),
        ]);
        p
    }

    fn train_small(&self, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let p = self.path(name);
        let mut args = vec!["train", "--data", s(data), "--out", s(&p), "--tmax", "100", "--epochs", "2"];
        args.extend(SMALL_NET);
        args.extend(extra);
        ok(&args);
        p
    }
}

#[test]
fn synth_writes_header_plus_rows_deterministically() {
    let f = Fixture::new();
    let a = f.path("a.csv");
    let b = f.path("b.csv");
    let out = ok(&["synth", "--n", "2000", "--dim", "4", "--seed", "7", "--out", s(&a)]);
    ok(&["synth", "--n", "2000", "--dim", "4", "--seed", "7", "--out", s(&b)]);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 2001);
    assert_eq!(text.lines().next().unwrap(), "f0,f1,f2,f3,time,event");
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(out.contains("censoring rate"));
}

#[test]
fn huge_horizon_means_no_censoring() {
    let f = Fixture::new();
    let p = f.path("d.csv");
    let out = ok(&["synth", "--n", "500", "--censor-horizon", "1e9", "--out", s(&p)]);
    assert!(out.contains("censoring rate 0.0000"), "{out}");
}

#[test]
fn unwritable_output_fails_cleanly() {
    let out = isf(&["synth", "--n", "10", "--out", "/nonexistent-dir/d.csv"]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn bad_flags_are_usage_errors() {
    let out = isf(&["train", "--data", "x.csv", "--out", "m.json", "--lr", "fast"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_with_defaults_produces_a_loadable_model() {
    let f = Fixture::new();
    let data = f.synth("d.csv", 200, 1, 100.0);
    let model = f.path("m.json");
    let out = ok(&["train", "--data", s(&data), "--epochs", "5", "--out", s(&model)]);
    assert!(out.contains("final epoch loss"));
    assert!(out.contains("wall time"));
    let file = ModelFile::load(&model).unwrap();
    assert_eq!(file.epsilon_train, 1.0);
    assert_eq!(file.t_max, 400.0);
    assert_eq!(file.encoder_widths, [256, 512, 256]);
    assert_eq!(file.head_widths, [256, 256, 1]);
    assert_eq!(file.seed, Some(0));
    assert_eq!(file.train_config.unwrap().epochs, 5);
}

#[test]
fn times_past_the_horizon_name_the_row() {
    let f = Fixture::new();
    let data = f.synth("d.csv", 50, 1, 100.0);
    let out = isf(&["train", "--data", s(&data), "--tmax", "1", "--out", s(&f.path("m.json"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("data row"), "{err}");
    assert!(!f.path("m.json").exists());
}

#[test]
fn saved_models_reproduce_predictions_bit_for_bit() {
    let f = Fixture::new();
    let data_path = f.synth("d.csv", 80, 2, 60.0);
    let model_path = f.train_small(&data_path, "m.json", &[]);

    let text = fs::read_to_string(&model_path).unwrap();
    let file = ModelFile::from_text(&text).unwrap();
    assert_eq!(file.to_text(), text);

    let params = file.to_params().unwrap();
    let resaved = ModelFile::from_params(&params, file.train_config.as_ref());
    let reloaded = ModelFile::from_text(&resaved.to_text()).unwrap().to_params().unwrap();
    let data = isf::data::load_csv(&data_path).unwrap();
    let grid = TimeGrid::new(100.0, 1.0).unwrap();
    let bits = |p: &isf::ModelParams| -> Vec<u64> {
        p.survival_curves(&data, &grid)
            .unwrap()
            .iter()
            .flat_map(|c| c.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect()
    };
    assert_eq!(bits(&params), bits(&reloaded));
}

fn read_curves(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn predict_writes_one_curve_per_row() {
    let f = Fixture::new();
    let data = f.synth("d.csv", 30, 3, 60.0);
    let model = f.train_small(&data, "m.json", &["--epsilon", "2"]);

    let default = f.path("c1.csv");
    ok(&["predict", "--model", s(&model), "--data", s(&data), "--out", s(&default)]);
    let (header, rows) = read_curves(&default);
    // t_max = 100 at ε = 2: K = 50.
    assert_eq!(header.len(), 1 + 51);
    assert_eq!(header[0], "id");
    assert_eq!(header[1], "S@0");
    assert_eq!(header[2], "S@2");
    assert_eq!(rows.len(), 30);

    let fine = f.path("c2.csv");
    ok(&["predict", "--model", s(&model), "--data", s(&data), "--epsilon-infer", "1", "--out", s(&fine)]);
    let (header, rows) = read_curves(&fine);
    assert_eq!(header.len(), 1 + 2 * 50 + 1);
    for row in &rows {
        assert_eq!(row[0], 1.0);
        assert_eq!(*row.last().unwrap(), 0.0);
    }
}

#[test]
fn feature_mismatch_reports_both_dimensions() {
    let f = Fixture::new();
    let data = f.synth("d.csv", 30, 3, 60.0);
    let model = f.train_small(&data, "m.json", &[]);
    let other = f.path("o.csv");
    ok(&["synth", "--n", "10", "--dim", "5", "--censor-horizon", "50", "--out", s(&other)]);
    let out = isf(&["predict", "--model", s(&model), "--data", s(&other), "--out", s(&f.path("c.csv"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('3') && err.contains('5'), "{err}");
    assert!(!f.path("c.csv").exists());
}

#[test]
fn eval_reports_both_variants() {
    let f = Fixture::new();
    let data = f.synth("d.csv", 120, 4, 60.0);
    let model = f.train_small(&data, "m.json", &[]);
    let out = ok(&["eval", "--model", s(&model), "--data", s(&data)]);
    assert!(out.contains("literal CI"));
    assert!(out.contains("antolini CI"));
    let machine = out.lines().last().unwrap();
    let fields: Vec<&str> = machine.split(' ').collect();
    assert_eq!(fields.len(), 3, "{machine}");
    assert!(fields[0].starts_with("ci_literal="));
    assert!(fields[1].starts_with("ci_antolini="));
    assert!(fields[2].starts_with("pairs="));
    for field in &fields[..2] {
        let v: f64 = field.split('=').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    let single = ok(&["eval", "--model", s(&model), "--data", s(&data), "--metric", "antolini"]);
    assert!(single.lines().last().unwrap().starts_with("ci_antolini="));
}

#[test]
fn eval_without_comparable_pairs_is_undefined() {
    let f = Fixture::new();
    let data = f.synth("d.csv", 60, 5, 60.0);
    let model = f.train_small(&data, "m.json", &[]);
    let censored = f.path("c.csv");
    fs::write(&censored, "f0,f1,f2,time,event\n0.1,0.2,0.3,5,0\n0.4,0.5,0.6,7,0\n").unwrap();
    let out = isf(&["eval", "--model", s(&model), "--data", s(&censored)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ci=undefined"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn ablation_emits_a_train_by_infer_matrix() {
    let f = Fixture::new();
    let data = f.synth("d.csv", 150, 6, 60.0);
    let table = f.path("t.csv");
    let mut args = vec![
        "ablate-epsilon", "--data", s(&data), "--train-eps", "0.5,1,2", "--infer-eps", "1,0.5",
        "--tmax", "100", "--epochs", "2", "--out", s(&table),
    ];
    args.extend(SMALL_NET);
    ok(&args);
    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "train_eps,infer_1,infer_0.5");
    for line in &lines[1..] {
        let cells: Vec<f64> = line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 2);
        assert!(cells.iter().all(|c| (0.0..=1.0).contains(c)));
    }
}

#[test]
fn cross_validation_reports_folds_and_pooled() {
    let f = Fixture::new();
    let data = f.synth("d.csv", 100, 7, 60.0);
    let mut args = vec!["cv", "--data", s(&data), "--folds", "4", "--tmax", "100", "--epochs", "1"];
    args.extend(SMALL_NET);
    let out = ok(&args);
    assert_eq!(out.lines().filter(|l| l.starts_with("fold ")).count(), 4);
    assert!(out.contains("mean CI"));
    assert!(out.contains("pooled CI"));
    assert_eq!(out, ok(&args));
}
