use std::path::Path;
use std::process::{Command, Output};

fn awtlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_awtlab")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn subcommands_chain_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |name: &str| d.join(name).to_str().unwrap().to_owned();

    let v = json(&awtlab(&[
        "gen-data",
        "--seed",
        "2",
        "--n-train",
        "100",
        "--n-test",
        "20",
        "--out",
        &p(""),
    ]));
    assert_eq!(v["train"], 100);
    assert!(Path::new(&p("test.awtd")).exists());

    let hyper = p("hyper.toml");
    std::fs::write(&hyper, "epochs = 1\nbatch = 20\nlr = 0.05\nmomentum = 0.9\nseed = 0\n").unwrap();
    for (arch, seed, out) in [("mlp-small", "1", "s.awtc"), ("mlp-wide", "2", "t.awtc")] {
        let v = json(&awtlab(&[
            "train",
            "--arch",
            arch,
            "--seed",
            seed,
            "--data",
            &p(""),
            "--out",
            &p(out),
            "--config",
            &hyper,
        ]));
        assert_eq!(v["arch"], arch);
    }

    let v = json(&awtlab(&[
        "attack",
        "--method",
        "vmi",
        "--surrogate",
        &p("s.awtc"),
        "--data",
        &p("test.awtd"),
        "--samples",
        "5",
        "--n",
        "2",
        "--out",
        &p("b.awta"),
    ]));
    assert_eq!(v["samples"], 5);
    assert!(v["max_perturbation"].as_f64().unwrap() <= 16.0 / 255.0 + 1e-6);

    let v = json(&awtlab(&[
        "evaluate",
        "--batch",
        &p("b.awta"),
        "--target",
        &p("t.awtc"),
        &p("s.awtc"),
    ]));
    assert_eq!(v["targets"].as_array().unwrap().len(), 2);

    let v = json(&awtlab(&[
        "metric",
        "--batch",
        &p("b.awta"),
        "--surrogate",
        &p("s.awtc"),
        "--eps-list",
        "0,0.01",
        "--samples",
        "2",
    ]));
    assert_eq!(v["scores"][0]["t_score"], 0.0);
    assert!(v["scores"][1]["t_score"].as_f64().unwrap() > 0.0);

    let v = json(&awtlab(&[
        "correlate",
        "--model",
        &p("s.awtc"),
        "--data",
        &p("test.awtd"),
        "--samples",
        "20",
        "--out",
        &p("g.csv"),
    ]));
    assert_eq!(v["samples"], 20);
    assert_eq!(csv::Reader::from_path(p("g.csv")).unwrap().records().count(), 20);

    let v = json(&awtlab(&[
        "prop1",
        "--model",
        &p("s.awtc"),
        "--data",
        &p("test.awtd"),
        "--probes",
        "2",
        "--steps",
        "20",
    ]));
    assert_eq!(v["probes"], 2);
}

#[test]
fn exit_codes_separate_config_from_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "global_seed = 0\nnot_a_key = 1\n").unwrap();
    let out = awtlab(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));

    let out = awtlab(&["gen-data", "--n-train", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("missing.awta");
    let out = awtlab(&["evaluate", "--batch", missing.to_str().unwrap(), "--target", "x.awtc"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.awta"));

    let out = awtlab(&["experiment", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
