//! End-to-end tests of the binary: every subcommand, the documented exit
//! codes, and reproducibility of runs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corefine"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("corefine-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn gen_train_predict_score_pipeline() {
    let dir = tmp_dir("pipeline");
    let gen_dir = dir.join("gen");
    let out = run(&[
        "gen",
        "--output",
        &path(&gen_dir),
        "--seed",
        "5",
        "--n-docs",
        "6",
        "--doc-len",
        "15,25",
        "--entities",
        "1,2",
        "--mention-len",
        "1,2",
    ]);
    assert_success(&out);
    let corpus = gen_dir.join("corpus.jsonl");
    assert!(corpus.exists());
    assert!(gen_dir.join("corpus.conll").exists());
    // the resolved config sits next to the outputs
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(gen_dir.join("run_config.json")).unwrap())
            .unwrap();
    assert_eq!(config["seed"], 5);
    assert_eq!(config["n_docs"], 6);

    // same seed, same files
    let gen_dir2 = dir.join("gen2");
    let out = run(&[
        "gen",
        "--output",
        &path(&gen_dir2),
        "--seed",
        "5",
        "--n-docs",
        "6",
        "--doc-len",
        "15,25",
        "--entities",
        "1,2",
        "--mention-len",
        "1,2",
    ]);
    assert_success(&out);
    assert_eq!(
        std::fs::read_to_string(&corpus).unwrap(),
        std::fs::read_to_string(gen_dir2.join("corpus.jsonl")).unwrap()
    );

    let train_dir = dir.join("train");
    let out = run(&[
        "train",
        "--input",
        &path(&corpus),
        "--output",
        &path(&train_dir),
        "--layers",
        "1",
        "--heads",
        "2",
        "--d-model",
        "16",
        "--d-ff",
        "32",
        "--max-positions",
        "64",
        "--steps",
        "50",
        "--optimizer",
        "adam",
        "--seed",
        "3",
    ]);
    assert_success(&out);
    let checkpoint = train_dir.join("checkpoint.json");
    assert!(checkpoint.exists());
    // the log is JSON lines with the documented fields
    let log = std::fs::read_to_string(train_dir.join("train_log.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for field in ["step", "doc_id", "iteration", "loss_m", "loss_c", "total", "t_stop"] {
        assert!(first.get(field).is_some(), "missing log field {field}");
    }

    let predict_dir = dir.join("predict");
    let out = run(&[
        "predict",
        "--input",
        &path(&gen_dir.join("corpus.conll")),
        "--checkpoint",
        &path(&checkpoint),
        "--output",
        &path(&predict_dir),
        "--jobs",
        "2",
    ]);
    assert_success(&out);
    let system = predict_dir.join("system.conll");
    let text = std::fs::read_to_string(&system).unwrap();
    assert_eq!(text.matches("#begin document").count(), 6);

    // scoring the key against itself gives perfect scores
    let out = run(&[
        "score",
        "--key",
        &path(&gen_dir.join("corpus.conll")),
        "--response",
        &path(&gen_dir.join("corpus.conll")),
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("MUC"), "{stdout}");
    assert!(stdout.contains("CEAF_phi4"), "{stdout}");
    assert!(stdout.contains("100.00"), "{stdout}");

    // and the system output is scoreable
    let score_dir = dir.join("score");
    let out = run(&[
        "score",
        "--key",
        &path(&gen_dir.join("corpus.conll")),
        "--response",
        &path(&system),
        "--output",
        &path(&score_dir),
    ]);
    assert_success(&out);
    let scores: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(score_dir.join("scores.json")).unwrap())
            .unwrap();
    assert_eq!(scores["documents"], 6);

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let dir = tmp_dir("resume");
    let gen_dir = dir.join("gen");
    assert_success(&run(&[
        "gen",
        "--output",
        &path(&gen_dir),
        "--seed",
        "9",
        "--n-docs",
        "4",
        "--doc-len",
        "12,18",
        "--entities",
        "1,2",
        "--mention-len",
        "1,1",
    ]));
    let corpus = path(&gen_dir.join("corpus.jsonl"));
    let model_flags = [
        "--layers",
        "1",
        "--heads",
        "2",
        "--d-model",
        "8",
        "--d-ff",
        "16",
        "--max-positions",
        "32",
        "--seed",
        "4",
        "--optimizer",
        "adam",
    ];

    // one uninterrupted run of 40 steps
    let full_dir = dir.join("full");
    let full_out = path(&full_dir);
    let mut args = vec!["train", "--input", &corpus, "--output", &full_out];
    args.extend_from_slice(&model_flags);
    args.extend_from_slice(&["--steps", "40"]);
    assert_success(&run(&args));

    // the same 40 steps as 15 + resume 25
    let part_dir = dir.join("part");
    let part_out = path(&part_dir);
    let mut args = vec!["train", "--input", &corpus, "--output", &part_out];
    args.extend_from_slice(&model_flags);
    args.extend_from_slice(&["--steps", "15"]);
    assert_success(&run(&args));
    let resumed_dir = dir.join("resumed");
    let resumed_out = path(&resumed_dir);
    let part_ckpt = path(&part_dir.join("checkpoint.json"));
    let mut args = vec![
        "train",
        "--input",
        &corpus,
        "--output",
        &resumed_out,
        "--resume",
        &part_ckpt,
    ];
    args.extend_from_slice(&model_flags);
    args.extend_from_slice(&["--steps", "25"]);
    assert_success(&run(&args));

    let load = |p: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
    };
    let full = load(&full_dir.join("checkpoint.json"));
    let resumed = load(&resumed_dir.join("checkpoint.json"));
    assert_eq!(full["coref"], resumed["coref"], "parameters diverged");
    assert_eq!(
        full["train_state"]["step"],
        resumed["train_state"]["step"]
    );

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn truncated_strategy_warns_about_dropped_spans() {
    let dir = tmp_dir("truncate");
    let gen_dir = dir.join("gen");
    assert_success(&run(&[
        "gen",
        "--output",
        &path(&gen_dir),
        "--seed",
        "2",
        "--n-docs",
        "2",
        "--doc-len",
        "60,70",
        "--entities",
        "2,3",
        "--mention-len",
        "1,2",
    ]));
    let corpus = path(&gen_dir.join("corpus.jsonl"));
    let train_dir = dir.join("train");
    assert_success(&run(&[
        "train",
        "--input",
        &corpus,
        "--output",
        &path(&train_dir),
        "--strategy",
        "truncated",
        "--window",
        "32",
        "--layers",
        "1",
        "--heads",
        "2",
        "--d-model",
        "8",
        "--d-ff",
        "16",
        "--max-positions",
        "64",
        "--steps",
        "5",
    ]));
    let out = run(&[
        "predict",
        "--input",
        &path(&gen_dir.join("corpus.conll")),
        "--checkpoint",
        &path(&train_dir.join("checkpoint.json")),
        "--output",
        &path(&dir.join("predict")),
        "--strategy",
        "truncated",
        "--window",
        "32",
    ]);
    assert_success(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("dropped by truncation"),
        "no truncation warning in: {stderr}"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn convert_round_trips_and_matrix_dump() {
    let dir = tmp_dir("convert");
    let conll = dir.join("in.conll");
    std::fs::write(
        &conll,
        "#begin document (conv); part 000\n\
         c The (0\n\
         c cat 0)\n\
         c sat -\n\
         c ; -\n\
         c it (0)\n\
         c purred -\n\
         #end document\n",
    )
    .unwrap();

    // clusters -> graph dump -> clusters, file level
    let graph = dir.join("out.graph");
    assert_success(&run(&["convert", "--input", &path(&conll), "--to", &path(&graph)]));
    let text = std::fs::read_to_string(&graph).unwrap();
    assert!(text.starts_with("#graph conv kind=output n=6"));
    let back = dir.join("back.conll");
    assert_success(&run(&["convert", "--input", &path(&graph), "--to", &path(&back)]));
    let docs = corefine::corpus::parse_conll(&std::fs::read_to_string(&back).unwrap()).unwrap();
    assert_eq!(
        docs[0].gold.as_ref().unwrap().canonical(),
        vec![vec![(0, 1), (4, 4)]]
    );

    // dense matrix dump matches the hand-written layout: mention cells at
    // (1,0) and (4,4), coreference cell between heads 0 and 4
    let matrix = dir.join("out.matrix");
    assert_success(&run(&["convert", "--input", &path(&conll), "--to", &path(&matrix)]));
    let dump = std::fs::read_to_string(&matrix).unwrap();
    let expected_output_matrix = "\
0 0 0 0 0 0
1 0 0 0 0 0
0 0 0 0 0 0
0 0 0 0 0 0
2 0 0 0 1 0
0 0 0 0 0 0
";
    assert!(
        dump.contains(expected_output_matrix),
        "matrix dump:\n{dump}"
    );

    // jsonl round trip through convert
    let jsonl = dir.join("out.jsonl");
    assert_success(&run(&["convert", "--input", &path(&conll), "--to", &path(&jsonl)]));
    let docs = corefine::corpus::from_jsonl(&std::fs::read_to_string(&jsonl).unwrap()).unwrap();
    assert_eq!(docs[0].tokens.len(), 6);

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn bootstrap_flag_emits_p_values() {
    let dir = tmp_dir("bootstrap");
    let gen_dir = dir.join("gen");
    assert_success(&run(&[
        "gen",
        "--output",
        &path(&gen_dir),
        "--seed",
        "8",
        "--n-docs",
        "5",
    ]));
    let key = path(&gen_dir.join("corpus.conll"));
    let out = run(&[
        "score",
        "--key",
        &key,
        "--response",
        &key,
        "--response-b",
        &key,
        "--bootstrap",
        "200",
        "--seed",
        "1",
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("bootstrap (200 iterations)"), "{stdout}");
    assert!(stdout.contains("avg=1.0000"), "{stdout}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn exit_codes_follow_the_contract() {
    // usage error: unknown flag
    let out = bin().arg("score").arg("--no-such-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // usage error: unknown subcommand
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // data error: missing input file
    let out = bin()
        .args(["score", "--key", "/nonexistent.conll", "--response", "/nonexistent.conll"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // data error: malformed coreference brackets
    let dir = tmp_dir("exit");
    let bad = dir.join("bad.conll");
    std::fs::write(
        &bad,
        "#begin document (bad); part 000\nb word 3)\n#end document\n",
    )
    .unwrap();
    let out = bin()
        .args(["convert", "--input", &path(&bad), "--to", &path(&dir.join("x.jsonl"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");

    // success is zero
    let out = bin().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn score_matches_hand_derived_fixture() {
    let dir = tmp_dir("fixture");
    // key {a,b,c}; response {a,b} {c}
    let key = dir.join("key.conll");
    std::fs::write(
        &key,
        "#begin document (fx); part 000\nk a (0)\nk b (0)\nk c (0)\n#end document\n",
    )
    .unwrap();
    let response = dir.join("response.conll");
    std::fs::write(
        &response,
        "#begin document (fx); part 000\nk a (0)\nk b (0)\nk c (1)\n#end document\n",
    )
    .unwrap();
    let out = run(&["score", "--key", &path(&key), "--response", &path(&response)]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    // MUC F1 = 2/3, B3 F1 = 10/14, CEAF F1 = 8/15
    assert!(stdout.contains("66.67"), "{stdout}");
    assert!(stdout.contains("71.43"), "{stdout}");
    assert!(stdout.contains("53.33"), "{stdout}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_file_is_merged_and_flags_override() {
    let dir = tmp_dir("config");
    let config = dir.join("run.json");
    std::fs::write(&config, r#"{"n_docs": 4, "seed": 11, "vocab_size": 24}"#).unwrap();
    let gen_dir = dir.join("gen");
    // --seed overrides the file, n_docs comes from the file
    assert_success(&run(&[
        "gen",
        "--config",
        &path(&config),
        "--seed",
        "12",
        "--output",
        &path(&gen_dir),
    ]));
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(gen_dir.join("run_config.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["n_docs"], 4);
    assert_eq!(resolved["seed"], 12);
    assert_eq!(resolved["vocab_size"], 24);
    let docs =
        corefine::corpus::from_jsonl(&std::fs::read_to_string(gen_dir.join("corpus.jsonl")).unwrap())
            .unwrap();
    assert_eq!(docs.len(), 4);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn checkpoint_every_writes_intermediate_files() {
    let dir = tmp_dir("ckptevery");
    let gen_dir = dir.join("gen");
    assert_success(&run(&["gen", "--output", &path(&gen_dir), "--seed", "1", "--n-docs", "3"]));
    let train_dir = dir.join("train");
    assert_success(&run(&[
        "train",
        "--input",
        &path(&gen_dir.join("corpus.jsonl")),
        "--output",
        &path(&train_dir),
        "--layers",
        "1",
        "--heads",
        "2",
        "--d-model",
        "8",
        "--d-ff",
        "16",
        "--steps",
        "10",
        "--checkpoint-every",
        "4",
    ]));
    assert!(train_dir.join("model-step4.json").exists());
    assert!(train_dir.join("model-step8.json").exists());
    assert!(train_dir.join("checkpoint.json").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn divergence_exits_with_numerical_failure_code() {
    let dir = tmp_dir("diverge");
    let gen_dir = dir.join("gen");
    assert_success(&run(&["gen", "--output", &path(&gen_dir), "--seed", "2", "--n-docs", "3"]));
    let out = run(&[
        "train",
        "--input",
        &path(&gen_dir.join("corpus.jsonl")),
        "--output",
        &path(&dir.join("train")),
        "--layers",
        "1",
        "--heads",
        "2",
        "--d-model",
        "8",
        "--d-ff",
        "16",
        "--steps",
        "20",
        "--optimizer",
        "momentum",
        "--learning-rate",
        "1e18",
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn train_steps_zero_writes_initial_checkpoint() {
    let dir = tmp_dir("zerosteps");
    let gen_dir = dir.join("gen");
    assert_success(&run(&[
        "gen",
        "--output",
        &path(&gen_dir),
        "--seed",
        "3",
        "--n-docs",
        "3",
    ]));
    let train_dir = dir.join("train");
    assert_success(&run(&[
        "train",
        "--input",
        &path(&gen_dir.join("corpus.jsonl")),
        "--output",
        &path(&train_dir),
        "--layers",
        "1",
        "--heads",
        "2",
        "--d-model",
        "8",
        "--d-ff",
        "16",
        "--steps",
        "0",
    ]));
    let ckpt = corefine::checkpoint::Checkpoint::load(&train_dir.join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.train_state.as_ref().unwrap().step, 0);
    let log = std::fs::read_to_string(train_dir.join("train_log.jsonl")).unwrap();
    assert!(log.is_empty());
    let _ = std::fs::remove_dir_all(&dir);
}
