use std::path::Path;

use bugscope::codebook::{CodebookMode, IdfForm};
use bugscope::embedding::{load_embeddings, synthetic_embed, FrameEmbedding, FRAME_DIM};
use bugscope::pipeline::{build_codebook, featurize, load_segments};
use bugscope::segmentation::{Label, Segment};
use bugscope::synth::{generate, SynthConfig};
use bugscope::Error;

fn segments() -> Vec<Segment> {
    let bounds = [(0.0, 6.0), (6.0, 12.5), (12.5, 20.0)];
    bounds
        .iter()
        .enumerate()
        .map(|(i, &(start, end))| Segment {
            video_id: "v".into(),
            index: i,
            start,
            end,
            text: format!("caption {i}"),
            label: Some(if i == 1 { Label::Buggy } else { Label::Clean }),
        })
        .collect()
}

fn write_lines(path: &Path, lines: &[String]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn jsonl_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (f, t) = (dir.path().join("frames.jsonl"), dir.path().join("texts.jsonl"));
    let data = synthetic_embed(segments(), 5, 3.0).unwrap();
    assert!(data.warnings().is_empty(), "{:?}", data.warnings());
    data.write(&f, &t).unwrap();
    let back = load_embeddings(&f, &t, segments()).unwrap();
    assert_eq!(back, data);
    assert_eq!(read_lines(&f).len(), data.frames().len());
}

#[test]
fn mutated_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (f, t) = (dir.path().join("frames.jsonl"), dir.path().join("texts.jsonl"));
    synthetic_embed(segments(), 5, 3.0).unwrap().write(&f, &t).unwrap();
    let frames = read_lines(&f);
    let texts = read_lines(&t);

    let mut frame: FrameEmbedding = serde_json::from_str(&frames[0]).unwrap();
    let mutate = |edit: &dyn Fn(&mut Vec<String>)| {
        let mut lines = frames.clone();
        edit(&mut lines);
        write_lines(&f, &lines);
        load_embeddings(&f, &t, segments())
    };

    frame.vector.push(0.0);
    let long = serde_json::to_string(&frame).unwrap();
    match mutate(&|l| l[0] = long.clone()) {
        Err(Error::Dimension { expected, found, .. }) => assert_eq!((expected, found), (FRAME_DIM, FRAME_DIM + 1)),
        other => panic!("expected a dimension error, got {other:?}"),
    }

    frame.vector.truncate(FRAME_DIM);
    frame.segment_index = 9;
    let dangling = serde_json::to_string(&frame).unwrap();
    assert!(matches!(mutate(&|l| l.push(dangling.clone())), Err(Error::Integrity(_))));

    let duplicate = frames[0].clone();
    assert!(matches!(mutate(&|l| l.push(duplicate.clone())), Err(Error::Data(_))));

    assert!(matches!(mutate(&|l| l[1] = "{not json".into()), Err(Error::Parse { line: 2, .. })));

    let nan = frames[0].replacen("[", "[NaN,", 1);
    assert!(matches!(mutate(&|l| l[0] = nan.clone()), Err(Error::Parse { line: 1, .. })));

    // Missing frames for a segment only warn.
    write_lines(&f, &frames[6..]);
    write_lines(&t, &texts);
    let data = load_embeddings(&f, &t, segments()).unwrap();
    assert!(data.warnings().iter().any(|w| w.contains("no frames")), "{:?}", data.warnings());
}

#[test]
fn feature_rows_cover_labeled_segments_with_frames() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig { videos: 6, ..SynthConfig::default() };
    let summary = generate(dir.path(), &config).unwrap();
    let root = dir.path();
    let (_, segs) = load_segments(&root.join("transcripts"), &root.join("meta.csv"), Some(&root.join("labels.csv"))).unwrap();
    assert_eq!(segs.len(), summary.segments);
    let data = load_embeddings(&root.join("frames.jsonl"), &root.join("texts.jsonl"), segs).unwrap();
    let codebook = build_codebook(&data, CodebookMode::Automatic, 8, 42, None).unwrap();
    let rows = featurize(&data, &codebook, IdfForm::Smooth);
    let expected = data
        .segments()
        .iter()
        .filter(|s| s.label.is_some() && data.frame_count(&s.key()) > 0)
        .count();
    assert_eq!(rows.len(), expected);
    assert_eq!(rows.len(), summary.segments);
    for r in &rows {
        assert_eq!(r.visual.len(), 8);
        // Term frequencies sum to one before IDF weighting, so the row is non-zero.
        assert!(r.visual.iter().any(|&x| x > 0.0));
    }
}
