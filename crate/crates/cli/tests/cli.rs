use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_anchorscope"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn tokenizer_fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/gpt2")
}

fn discover_toy(dir: &Path) {
    ok(&["discover", "--model", "toy", "--heatmap", "--out", s(dir)]);
}

#[test]
fn discover_writes_every_artifact_and_finds_the_planted_locus() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    discover_toy(&d);
    for f in [
        "mlp_diff.csv",
        "head_diff.csv",
        "loci.json",
        "circuit.json",
        "report_toy.json",
        "heatmap_mlp.svg",
        "heatmap_heads.svg",
        "run_manifest.json",
    ] {
        assert!(d.join(f).is_file(), "missing {f}");
    }
    let loci: serde_json::Value = serde_json::from_str(&read(d.join("loci.json"))).unwrap();
    let ds = &loci["datasets"][0];
    assert_eq!(
        ds["loci"][0]["locus"],
        serde_json::json!({"layer": 2, "dim": 5})
    );
    assert_eq!(ds["argmax_layer"], 2);
    assert_eq!(
        ds["top_heads"][0]["head"],
        serde_json::json!({"layer": 1, "head": 1})
    );

    // the default toy has 3 layers and 2 heads
    let mlp = read(d.join("mlp_diff.csv"));
    assert_eq!(mlp.lines().count(), 1 + 3);
    let heads = read(d.join("head_diff.csv"));
    assert_eq!(heads.lines().next().unwrap(), "layer,h0,h1");
    assert_eq!(
        read(d.join("heatmap_heads.svg")).matches("<title>").count(),
        3 * 2
    );
    assert_eq!(
        read(d.join("heatmap_mlp.svg")).matches("<title>").count(),
        3
    );
}

#[test]
fn reruns_and_manifest_replays_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let (a, b, c) = (t.path().join("a"), t.path().join("b"), t.path().join("c"));
    discover_toy(&a);
    discover_toy(&b);
    let manifest = a.join("run_manifest.json");
    ok(&[
        "discover",
        "--config",
        s(&manifest),
        "--heatmap",
        "--out",
        s(&c),
    ]);
    for f in [
        "loci.json",
        "circuit.json",
        "mlp_diff.csv",
        "head_diff.csv",
        "heatmap_heads.svg",
    ] {
        assert_eq!(
            read(a.join(f)),
            read(b.join(f)),
            "{f} differs between reruns"
        );
        assert_eq!(
            read(a.join(f)),
            read(c.join(f)),
            "{f} differs after manifest replay"
        );
    }
}

#[test]
fn empty_anchored_subset_fails_and_leaves_nothing_behind() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("all_a.jsonl");
    std::fs::write(
        &data,
        "{\"question\":\"dog sun\",\"choices\":[\"rock\",\"moon\"],\"gold\":\"A\"}\n\
         {\"question\":\"sun dog\",\"choices\":[\"blue\",\"green\"],\"gold\":\"A\"}\n",
    )
    .unwrap();
    let before = read(data.clone());
    let out = t.path().join("run");
    let spec = format!("jsonl:{}", s(&data));
    // the first dataset succeeds and writes its report before the second fails
    let err = fails(&[
        "discover",
        "--model",
        "toy",
        "--dataset",
        "toy",
        "--dataset",
        &spec,
        "--out",
        s(&out),
    ]);
    assert!(err.contains("no anchored samples"), "{err}");
    assert!(!out.exists(), "partial outputs were left in place");
    assert_eq!(read(data), before);
}

#[test]
fn mitigate_edit_sweep_and_swap() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    discover_toy(&d);
    let m = t.path().join("m");
    ok(&[
        "mitigate",
        "--model",
        "toy",
        "--from",
        s(&d),
        "--lambda2",
        "4",
        "--out",
        s(&m),
    ]);
    let csv = read(m.join("accuracy.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    // baseline + one sweep point, for Infer and Eva
    assert_eq!(rows.len(), 4, "{csv}");
    assert!(
        rows[0].starts_with("toy,infer,baseline,90,0.000000"),
        "{csv}"
    );
    assert!(
        rows[1].starts_with("toy,infer,edit[2:5] l1=1 l2=4,90,100.000000"),
        "{csv}"
    );
    assert!(rows[3].starts_with("toy,eva,"), "{csv}");

    let sw = t.path().join("s");
    let stdout = ok(&[
        "mitigate",
        "--model",
        "toy",
        "--mode",
        "swap",
        "--head",
        "L1H1",
        "--out",
        s(&sw),
    ]);
    assert!(stdout.contains("swap[L1H1]"), "{stdout}");
    let lit = t.path().join("lit");
    ok(&[
        "mitigate",
        "--model",
        "toy",
        "--mode",
        "swap-literal",
        "--head",
        "1:1",
        "--out",
        s(&lit),
    ]);
    let csv = read(lit.join("accuracy.csv"));
    // the literal swap leaves the head output unchanged, so nothing is fixed
    for row in csv.lines().skip(1) {
        assert!(row.contains(",0.000000,"), "{row}");
    }
}

#[test]
fn mitigate_rejects_bad_locus_and_missing_targets() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("m");
    let err = fails(&[
        "mitigate",
        "--model",
        "toy",
        "--locus",
        "nine",
        "--out",
        s(&out),
    ]);
    assert!(err.contains("LAYER:DIM"), "{err}");
    let err = fails(&["mitigate", "--model", "toy", "--out", s(&out)]);
    assert!(err.contains("no loci"), "{err}");
    assert!(!out.exists());
}

#[test]
fn report_renders_and_refuses_bad_inputs() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    ok(&["discover", "--model", "toy", "--out", s(&d)]);
    let stdout = ok(&["report", s(&d)]);
    assert!(stdout.contains("(2, 5)"), "{stdout}");
    assert!(stdout.contains("L1H1"), "{stdout}");
    let first = read(d.join("heatmap_heads.svg"));
    ok(&["report", s(&d)]);
    assert_eq!(first, read(d.join("heatmap_heads.svg")));

    let bumped =
        read(d.join("loci.json")).replacen("\"schema_version\": 1", "\"schema_version\": 99", 1);
    std::fs::write(d.join("loci.json"), bumped).unwrap();
    let err = fails(&["report", s(&d)]);
    assert!(
        err.contains("schema version 99") && err.contains("regenerate"),
        "{err}"
    );

    std::fs::remove_file(d.join("head_diff.csv")).unwrap();
    std::fs::remove_file(d.join("mlp_diff.csv")).unwrap();
    std::fs::remove_file(d.join("loci.json")).unwrap();
    let err = fails(&["report", s(&d)]);
    assert!(err.contains("mlp_diff.csv"), "{err}");
}

#[test]
fn eval_baseline_and_few_shot() {
    let t = tempfile::tempdir().unwrap();
    let e = t.path().join("e");
    ok(&["eval", "--model", "toy", "--k-shot", "2", "--out", s(&e)]);
    let csv = read(e.join("eval.csv"));
    assert!(
        csv.lines().nth(1).unwrap().starts_with("toy,2-shot,100,"),
        "{csv}"
    );
    let err = fails(&["eval", "--model", "toy", "--k-shot", "3", "--out", s(&e)]);
    assert!(err.contains("3"), "{err}");
}

#[test]
fn synth_uses_only_the_tokenizer() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("data");
    ok(&[
        "synth",
        "--tokenizer",
        s(&tokenizer_fixture()),
        "--dataset",
        "ioi:25",
        "--dataset",
        "greater:10",
        "--dataset",
        "random-chars:8",
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    let ioi = read(out.join("ioi.jsonl"));
    assert_eq!(ioi.lines().count(), 25);
    let first: serde_json::Value = serde_json::from_str(ioi.lines().next().unwrap()).unwrap();
    assert_eq!(first["gold"], "B");
    assert_eq!(read(out.join("greater.jsonl")).lines().count(), 10);
    assert_eq!(read(out.join("random-characters.jsonl")).lines().count(), 8);
}

#[test]
fn missing_checkpoint_points_at_fetch() {
    let t = tempfile::tempdir().unwrap();
    let out = bin()
        .env("ANCHORSCOPE_CACHE", t.path())
        .args([
            "discover",
            "--model",
            "small",
            "--tokenizer",
            s(&tokenizer_fixture()),
            "--out",
        ])
        .arg(t.path().join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("no checkpoint") && err.contains("anchorscope fetch"),
        "{err}"
    );
}
