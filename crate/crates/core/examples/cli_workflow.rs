//! The command-line workflow driven in-process: gen-data, train, parse, eval.
//! Equivalent shell commands are printed before each step.
//!
//! cargo run --release --example cli_workflow

fn step(args: &[&str]) -> i32 {
    println!("$ spanparse {}", args.join(" "));
    let code = spanparse::cli::run(std::iter::once("spanparse").chain(args.iter().copied()).map(std::ffi::OsString::from));
    println!("exit {code}\n");
    code
}

fn main() {
    let dir = std::env::temp_dir().join("spanparse-cli-workflow");
    let data = dir.join("scan-sp");
    let run = dir.join("run");
    let (data, run) = (data.to_str().unwrap(), run.to_str().unwrap());
    let model = format!("{run}/model.json");
    let test = format!("{data}/iid/test.jsonl");
    let report = format!("{run}/report.json");

    assert_eq!(step(&["gen-data", "--domain", "scan", "--split", "iid,right", "--out", data]), 0);
    assert_eq!(step(&["train", "--data", data, "--split", "iid", "--out", run, "--max-train", "1000", "--max-epochs", "2"]), 0);
    assert_eq!(step(&["parse", "--checkpoint", &model, "walk", "right", "after", "turn", "opposite", "left", "twice"]), 0);
    assert_eq!(step(&["eval", "--checkpoint", &model, "--test", &test, "--report", &report]), 0);
    // an input whose best program does not execute, and a bad flag value
    step(&["parse", "--checkpoint", &model, "and"]);
    step(&["train", "--data", data, "--out", run, "--batch-size", "0"]);
    println!("outputs under {}", dir.display());
}
