use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kiwi(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kiwi"))
        .current_dir(cwd)
        .env_remove("KIWI_LOG")
        .args(args)
        .output()
        .expect("kiwi binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "kiwi failed: {}", stderr(&o));
    o
}

fn files_under(root: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path.clone());
            }
            out.insert(path.strip_prefix(root).unwrap().to_path_buf());
        }
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn label_writes_tags_and_hter() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "in.src", "s1 s2 s3\nu1\n");
    write(d, "in.mt", "a b c\nx\n");
    write(d, "in.pe", "a x c d\nx\n");
    write(d, "in.align", "0-0 1-1 2-2\n0-0\n");
    let before = files_under(d);
    ok(kiwi(
        d,
        &["label", "--mt", "in.mt", "--pe", "in.pe", "--source", "in.src", "--alignments", "in.align", "--output-dir", "out"],
    ));
    let read = |f: &str| fs::read_to_string(d.join("out").join(f)).unwrap();
    assert_eq!(read("mt.tags"), "OK BAD OK\nOK\n");
    assert_eq!(read("gap.tags"), "OK OK OK BAD\nOK OK\n");
    assert_eq!(read("source.tags"), "OK BAD OK\nOK\n");
    let hter: Vec<f64> = read("hter").lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(hter, vec![0.5, 0.0]);

    let created: BTreeSet<_> = files_under(d).difference(&before).cloned().collect();
    assert!(created.iter().all(|p| p.starts_with("out")), "wrote outside out/: {created:?}");
}

#[test]
fn label_without_alignments_skips_source_tags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "in.mt", "a b\n");
    write(d, "in.pe", "a b\n");
    ok(kiwi(d, &["label", "--mt", "in.mt", "--pe", "in.pe", "--output-dir", "out"]));
    assert!(!d.join("out/source.tags").exists());
    assert_eq!(fs::read_to_string(d.join("out/mt.tags")).unwrap(), "OK OK\n");
}

#[test]
fn evaluate_prints_every_available_metric() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "gold.tags", "OK BAD OK\nOK\n");
    write(d, "pred.tags", "OK BAD BAD\nOK\n");
    write(d, "gold.hter", "0.1\n0.4\n0.2\n");
    write(d, "pred.hter", "0.2\n0.5\n0.1\n");
    write(d, "flat.hter", "0.3\n0.3\n0.3\n");
    let o = ok(kiwi(d, &["evaluate", "--gold-mt", "gold.tags", "--pred-mt", "pred.tags", "--gold-hter", "gold.hter", "--pred-sentence", "pred.hter"]));
    let text = stdout(&o);
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("{key}="))).unwrap_or_else(|| panic!("{key} missing in {text}"));
        line.split_once('=').unwrap().1.parse().unwrap()
    };
    // OK: P=1, R=2/3; BAD: P=1/2, R=1.
    assert!((value("mt_f1_ok") - 0.8).abs() < 1e-6);
    assert!((value("mt_f1_bad") - 2.0 / 3.0).abs() < 1e-6);
    assert!((value("mt_f1_mult") - 0.8 * 2.0 / 3.0).abs() < 1e-6);
    assert!((value("spearman") - 0.5).abs() < 1e-6);
    assert!(value("pearson") > 0.0);

    let o = ok(kiwi(d, &["evaluate", "--gold-hter", "gold.hter", "--pred-sentence", "flat.hter"]));
    assert!(stdout(&o).contains("pearson=undefined"), "{}", stdout(&o));
}

#[test]
fn evaluate_rejects_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "gold.tags", "OK BAD OK\n");
    write(d, "pred.tags", "OK BAD\n");
    let o = kiwi(d, &["evaluate", "--gold-mt", "gold.tags", "--pred-mt", "pred.tags"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gold has 3 entries, predictions have 2"), "{}", stderr(&o));
}

#[test]
fn render_marks_bad_words_and_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "in.mt", "a <b> c\n");
    write(d, "mt.tags", "OK BAD OK\n");
    write(d, "gap.probs", "0.1 0.2 0.9 0.0\n");
    let o = ok(kiwi(d, &["render", "--mt", "in.mt", "--mt-tags", "mt.tags", "--gap-tags", "gap.probs", "--format", "html"]));
    let html = stdout(&o);
    assert!(html.contains("<span class=\"bad\">&lt;b&gt;</span>"), "{html}");
    assert!(html.contains("<span class=\"bad-gap\">_</span> c"), "{html}");

    let o = ok(kiwi(d, &["render", "--mt", "in.mt", "--mt-tags", "mt.tags"]));
    assert!(stdout(&o).contains("\x1b[31m<b>\x1b[0m"));

    ok(kiwi(d, &["render", "--mt", "in.mt", "--mt-tags", "mt.tags", "--output", "shown.txt"]));
    assert!(fs::read_to_string(d.join("shown.txt")).unwrap().contains("<b>"));
}

#[test]
fn errors_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = kiwi(d, &["label", "--mt", "missing.mt", "--pe", "missing.pe", "--output-dir", "out"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
    assert!(stderr(&o).contains("missing.mt"));

    write(d, "in.mt", "a b\n");
    write(d, "short.tags", "OK\n");
    let o = kiwi(d, &["render", "--mt", "in.mt", "--mt-tags", "short.tags"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expected 2"), "{}", stderr(&o));

    // Usage errors come from the argument parser.
    let o = kiwi(d, &["train"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "bad.yml",
        "seed: 1\noutput_dir: run\ndata:\n  train:\n    mt: x.mt\nmodel:\n  kind: quetch\n  task: mt\n  windw: 3\n",
    );
    let o = kiwi(d, &["train", "--config", "bad.yml"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.yml") && err.contains("windw"), "{err}");
    assert!(!d.join("run").exists());
}

#[test]
fn train_and_predict_stay_inside_their_output_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let src = "s1 s2 s3\ns2 s3\ns1 s4\ns3 s3 s1\n".repeat(3);
    let mt = "a b c\nb c\na d\nc c a\n".repeat(3);
    let pe = "a b c\nb x\na d e\nc a\n".repeat(3);
    let align = "0-0 1-1 2-2\n0-0 1-1\n0-0 1-1\n0-0 1-1 2-2\n".repeat(3);
    write(d, "in.src", &src);
    write(d, "in.mt", &mt);
    write(d, "in.pe", &pe);
    write(d, "in.align", &align);
    ok(kiwi(d, &["label", "--mt", "in.mt", "--pe", "in.pe", "--output-dir", "labels"]));
    write(
        d,
        "train.yml",
        "seed: 3\noutput_dir: run\ndata:\n  train:\n    source: in.src\n    mt: in.mt\n    alignments: in.align\n    mt_tags: labels/mt.tags\n\
         model:\n  kind: quetch\n  task: mt\n  window: 3\n  embedding_dim: 4\n  hidden_dim: 6\ntraining:\n  epochs: 2\n  batch_size: 4\n",
    );
    let before = files_under(d);
    ok(kiwi(d, &["train", "--config", "train.yml"]));
    ok(kiwi(
        d,
        &["predict", "--model", "run", "--source", "in.src", "--mt", "in.mt", "--alignments", "in.align", "--output-dir", "pred"],
    ));
    let created: BTreeSet<_> = files_under(d).difference(&before).cloned().collect();
    assert!(
        created.iter().all(|p| p.starts_with("run") || p.starts_with("pred")),
        "unexpected files: {created:?}"
    );
    assert!(d.join("run/history.jsonl").exists());
    let tags = fs::read_to_string(d.join("pred/mt.tags")).unwrap();
    let lengths: Vec<usize> = tags.lines().map(|l| l.split_whitespace().count()).collect();
    let expected: Vec<usize> = mt.lines().map(|l| l.split_whitespace().count()).collect();
    assert_eq!(lengths, expected);

    // A second train into the same directory is refused.
    let o = kiwi(d, &["train", "--config", "train.yml"]);
    assert_eq!(o.status.code(), Some(1));
}
