use std::path::{Path, PathBuf};

use agrisent::cli;
use agrisent::corpus::{shuffle_split, write_csv};
use agrisent::embeddings::{read_feature_cache, write_embeddings};
use agrisent::experiments::parse_report_json;
use agrisent::synthetic::{generate, SyntheticSpec};

struct Inputs {
    dir: tempfile::TempDir,
}

impl Inputs {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&SyntheticSpec {
            examples: 150,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let (rest, test) = shuffle_split(&data.corpus, 0.2, 1).unwrap();
        let (train, dev) = shuffle_split(&rest, 0.15, 2).unwrap();
        write_csv(&data.corpus, dir.path().join("all.csv")).unwrap();
        write_csv(&train, dir.path().join("train.csv")).unwrap();
        write_csv(&dev, dir.path().join("dev.csv")).unwrap();
        write_csv(&test, dir.path().join("test.csv")).unwrap();
        write_embeddings(&data.table, dir.path().join("glove.txt")).unwrap();
        std::fs::write(dir.path().join("cnn.txt"), "kind = textcnn\nepochs = 2\nnum_filters_per_size = 8\n").unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn run(args: &[&str]) -> i32 {
    let _ = env_logger::builder().is_test(true).filter_level(log::LevelFilter::Warn).try_init();
    let mut argv = vec!["agrisent"];
    argv.extend_from_slice(args);
    cli::main(argv)
}

fn train(inp: &Inputs, out: &str, seed: &str) -> i32 {
    run(&[
        "train", "--config", &inp.p("cnn.txt"), "--train", &inp.p("train.csv"), "--dev", &inp.p("dev.csv"),
        "--test", &inp.p("test.csv"), "--glove", &inp.p("glove.txt"), "--out", &inp.p(out), "--seed", seed,
    ])
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["train", "--config", "x.txt"]), 1);
    assert_eq!(run(&["report", "--runs", "a", "--out", "b", "--bogus", "1"]), 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn data_and_config_errors_exit_2() {
    let inp = Inputs::new();
    assert_eq!(
        run(&["evaluate", "--model", &inp.p("none.bin"), "--data", &inp.p("all.csv"), "--glove", &inp.p("glove.txt"), "--out", &inp.p("e.json")]),
        2
    );
    std::fs::write(inp.path("bad.txt"), "kind = transformer\n").unwrap();
    std::fs::copy(inp.path("bad.txt"), inp.path("cnn.txt")).unwrap();
    assert_eq!(train(&inp, "run", "1"), 2);
}

#[test]
fn non_finite_loss_exits_3() {
    let inp = Inputs::new();
    std::fs::write(inp.path("cnn.txt"), "kind = logreg\noptimizer = sgd\nlr = 1e38\nmax_grad_norm = 1e38\nepochs = 5\n").unwrap();
    assert_eq!(train(&inp, "run", "1"), 3);
}

#[test]
fn train_evaluate_predict_featurize() {
    let inp = Inputs::new();
    assert_eq!(train(&inp, "run", "7"), 0);
    let model = inp.path("run/model.bin");
    let doc = parse_report_json(&read(&inp.path("run/report.json"))).unwrap();
    assert_eq!(doc.reports.len(), 1);

    // Same seed, same bytes.
    assert_eq!(train(&inp, "run2", "7"), 0);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(inp.path("run2/model.bin")).unwrap());

    let code = run(&[
        "evaluate", "--model", &model.display().to_string(), "--data", &inp.p("test.csv"), "--glove",
        &inp.p("glove.txt"), "--out", &inp.p("eval.json"),
    ]);
    assert_eq!(code, 0);
    let eval: serde_json::Value = serde_json::from_str(&read(&inp.path("eval.json"))).unwrap();
    let acc = eval["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(eval["confusion"]["counts"].as_array().unwrap().len(), 3);

    std::fs::write(inp.path("new.csv"), "text\nw00 w01 w02\n\"w10, w11\"\n\n").unwrap();
    let code = run(&[
        "predict", "--model", &model.display().to_string(), "--input", &inp.p("new.csv"), "--glove",
        &inp.p("glove.txt"), "--out", &inp.p("preds.csv"),
    ]);
    assert_eq!(code, 0);
    let preds = read(&inp.path("preds.csv"));
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("text,predicted,prob_neg,prob_neu,prob_pos"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let fields: Vec<&str> = row.rsplitn(4, ',').collect();
        let total: f64 = fields[..3].iter().map(|p| p.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-5);
    }

    let code = run(&[
        "featurize", "--input", &inp.p("all.csv"), "--glove", &inp.p("glove.txt"), "--max-len", "20", "--out",
        &inp.p("all.ftz"),
    ]);
    assert_eq!(code, 0);
    let (header, examples) = read_feature_cache(inp.path("all.ftz")).unwrap();
    assert_eq!((header.max_len, header.dim), (20, 50));
    assert_eq!(examples.len(), header.count as usize);
}

#[test]
fn binary_model_predicts_two_columns() {
    let inp = Inputs::new();
    std::fs::write(inp.path("cnn.txt"), "scheme = binary\ninput_scheme = ternary\nepochs = 1\nnum_filters_per_size = 4\n").unwrap();
    assert_eq!(train(&inp, "run", "3"), 0);
    std::fs::write(inp.path("new.csv"), "text\nw00 w01\n").unwrap();
    let code = run(&[
        "predict", "--model", &inp.p("run/model.bin"), "--input", &inp.p("new.csv"), "--glove", &inp.p("glove.txt"),
        "--out", &inp.p("preds.csv"),
    ]);
    assert_eq!(code, 0);
    assert!(read(&inp.path("preds.csv")).starts_with("text,predicted,prob_neg,prob_pos\n"));
}

#[test]
fn sweep_infuse_compare_and_report() {
    let inp = Inputs::new();
    std::fs::write(inp.path("grid.txt"), "dropout_keep = 0.5, 1.0\nnum_filters_per_size = 4\nepochs = 1\ncv_folds = 2\n").unwrap();
    let code = run(&[
        "sweep", "--grid", &inp.p("grid.txt"), "--data", &inp.p("all.csv"), "--glove", &inp.p("glove.txt"), "--out",
        &inp.p("runs/sweep"), "--threads", "2",
    ]);
    assert_eq!(code, 0);
    let sweep = parse_report_json(&read(&inp.path("runs/sweep/sweep.json"))).unwrap();
    assert_eq!(sweep.reports.len(), 2);
    assert!(inp.path("runs/sweep/sweep.csv").exists());

    std::fs::write(inp.path("infuse.txt"), "epochs = 1\nval_size = 10\nnum_filters_per_size = 4\n").unwrap();
    let code = run(&[
        "infuse", "--config", &inp.p("infuse.txt"), "--source", &inp.p("train.csv"), "--ag", &inp.p("test.csv"),
        "--fraction", "0.5", "--glove", &inp.p("glove.txt"), "--out", &inp.p("runs/infuse"),
    ]);
    assert_eq!(code, 0);
    let infuse = read(&inp.path("runs/infuse/report.json"));
    assert!(infuse.contains("\"val_from_target\": 5"));

    let code = run(&[
        "compare23", "--config", &inp.p("infuse.txt"), "--data", &inp.p("all.csv"), "--glove", &inp.p("glove.txt"),
        "--out", &inp.p("runs/compare"),
    ]);
    assert_eq!(code, 0);
    let cmp = parse_report_json(&read(&inp.path("runs/compare/report.json"))).unwrap();
    assert_eq!(cmp.reports.len(), 2);

    assert_eq!(run(&["report", "--runs", &inp.p("runs"), "--out", &inp.p("all.csv.out")]), 0);
    let table = read(&inp.path("all.csv.out"));
    // header + 2 sweep summaries + 1 infusion run + 2 comparison runs
    assert_eq!(table.lines().count(), 6);
    assert!(inp.path("all.csv.confusion.csv").exists());
}
