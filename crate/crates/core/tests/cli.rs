use std::path::Path;
use std::process::{Command, Output};

fn bugscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bugscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CAPTIONS: &str = "start\ttext\n\
0:00\tokay let's start the match\n\
0:06\tnice pass\n\
0:08\twait the ball went through the goalkeeper\n\
0:15\tthat's a glitch\n\
0:17\tanyway\n\
0:24\tgoal\n";

#[test]
fn segment_writes_merged_segments() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir(root.join("t")).unwrap();
    std::fs::write(root.join("t/clip.tsv"), CAPTIONS).unwrap();
    std::fs::write(root.join("meta.csv"), "video_id,duration_seconds,genre,game_title\nclip,30,Sports,FIFA 17\n").unwrap();
    let out = root.join("segments.csv");
    let o = bugscope(&["segment", "--transcripts", p(&root.join("t")), "--meta", p(&root.join("meta.csv")), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rows = csv::Reader::from_path(&out).unwrap();
    let bounds: Vec<(f64, f64)> = rows
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[2].parse().unwrap(), r[3].parse().unwrap())
        })
        .collect();
    // Pieces 6, 2, 7, 2, 7, 6: the first 2-second piece joins the shorter
    // neighbour on its left, the second one ties and goes left too.
    assert_eq!(bounds, vec![(0.0, 8.0), (8.0, 17.0), (17.0, 24.0), (24.0, 30.0)]);
}

#[test]
fn synth_validate_and_run_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = bugscope(&["-q", "synth", "--videos", "20", "--out", p(&corpus)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let seg = dir.path().join("segments.csv");
    let o = bugscope(&[
        "segment", "--transcripts", p(&corpus.join("transcripts")), "--meta", p(&corpus.join("meta.csv")),
        "--labels", p(&corpus.join("labels.csv")), "--out", p(&seg),
    ]);
    assert!(o.status.success());
    let validate = |frames: &Path| {
        bugscope(&["validate", "--segments", p(&seg), "--frames", p(frames), "--texts", p(&corpus.join("texts.jsonl"))])
    };
    assert_eq!(validate(&corpus.join("frames.jsonl")).status.code(), Some(0));

    // One extra component on the first frame.
    let frames = std::fs::read_to_string(corpus.join("frames.jsonl")).unwrap();
    let bad = frames.replacen("\"vector\":[", "\"vector\":[0.0,", 1);
    let bad_path = dir.path().join("bad.jsonl");
    std::fs::write(&bad_path, bad).unwrap();
    let o = validate(&bad_path);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("65"));

    let out = dir.path().join("run");
    let o = bugscope(&["-q", "run", "--config", p(&corpus.join("run.toml")), "--out", p(&out), "--k", "8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "predictions.csv", "attributes.csv", "manifest.json", "codebook.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let o = bugscope(&["-q", "run", "--replay", p(&out.join("manifest.json")), "--out", p(&dir.path().join("again"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(out.join("report.csv")).unwrap(),
        std::fs::read(dir.path().join("again/report.csv")).unwrap()
    );
}

#[test]
fn missing_models_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("features.jsonl");
    std::fs::write(&features, "").unwrap();
    let models = dir.path().join("nomodels");
    let o = bugscope(&["evaluate", "--features", p(&features), "--models", p(&models)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bugscope(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(bugscope(&["segment"]).status.code(), Some(2));
    assert_eq!(bugscope(&["run"]).status.code(), Some(2));
}
