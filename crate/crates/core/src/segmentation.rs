//! Caption transcript parsing and caption-aligned video segmentation.
//!
//! A video is first cut at every cue start timestamp, the last piece running
//! to the end of the video. Pieces shorter than [`MIN_SEGMENT_SECONDS`] are
//! then merged, one at a time, into their shorter neighbour until none remain.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum segment length in seconds.
pub const MIN_SEGMENT_SECONDS: f64 = 5.0;

// Absorbs float noise from decimal timestamps such as 10.1 - 5.1.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptCue {
    pub start: f64,
    pub end: f64,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Genre {
    Action,
    Sports,
    Other,
}

impl FromStr for Genre {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "action" => Ok(Genre::Action),
            "sports" | "sport" => Ok(Genre::Sports),
            "other" => Ok(Genre::Other),
            other => Err(Error::Data(format!("unknown genre {other:?}"))),
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Genre::Action => "Action",
            Genre::Sports => "Sports",
            Genre::Other => "Other",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    pub video_id: String,
    pub duration: f64,
    pub genre: Genre,
    pub game_title: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Clean,
    Buggy,
}

impl Label {
    pub fn from_flag(flag: u8) -> Result<Self> {
        match flag {
            0 => Ok(Label::Clean),
            1 => Ok(Label::Buggy),
            other => Err(Error::Data(format!("label must be 0 or 1, got {other}"))),
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Label::Clean => 0,
            Label::Buggy => 1,
        }
    }

    pub fn is_buggy(self) -> bool {
        self == Label::Buggy
    }
}

/// Identifies a segment within a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentKey {
    pub video_id: String,
    pub index: usize,
}

impl SegmentKey {
    pub fn new(video_id: impl Into<String>, index: usize) -> Self {
        Self {
            video_id: video_id.into(),
            index,
        }
    }
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.video_id, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub video_id: String,
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub text: String,
    pub label: Option<Label>,
}

impl Segment {
    pub fn key(&self) -> SegmentKey {
        SegmentKey::new(self.video_id.clone(), self.index)
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// True for the single segment of a video shorter than the minimum length.
    pub fn is_short(&self) -> bool {
        self.length() < MIN_SEGMENT_SECONDS - TIME_EPS
    }

    /// Frames expected at one frame per second.
    pub fn expected_frames(&self) -> usize {
        (self.length() + TIME_EPS).floor().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptFormat {
    Srt,
    WebVtt,
    Tsv,
}

impl TranscriptFormat {
    pub fn from_extension(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "srt" => Some(TranscriptFormat::Srt),
            "vtt" => Some(TranscriptFormat::WebVtt),
            "tsv" => Some(TranscriptFormat::Tsv),
            _ => None,
        }
    }
}

/// Parses a transcript document into normalized cues.
///
/// TSV documents carry only start times (plain seconds or `M:SS`, as in
/// caption exports), so each cue ends where the next one starts and the last
/// one ends at `video_duration`. Cues are sorted by start and clamped so none
/// starts before the previous one ends; a cue left empty by clamping folds
/// its text into its predecessor.
pub fn parse_transcript(
    raw: &str,
    format: TranscriptFormat,
    video_duration: f64,
) -> Result<Vec<TranscriptCue>> {
    let cues = match format {
        TranscriptFormat::Srt | TranscriptFormat::WebVtt => parse_timed_blocks(raw, format)?,
        TranscriptFormat::Tsv => parse_tsv(raw, video_duration)?,
    };
    Ok(normalize_cues(cues))
}

fn parse_tsv(raw: &str, video_duration: f64) -> Result<Vec<TranscriptCue>> {
    let mut starts = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (first, text) = match line.split_once('\t') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (line.trim(), ""),
        };
        if lineno == 0 && first.eq_ignore_ascii_case("start") {
            continue;
        }
        let start = parse_seconds(first).or_else(|| parse_clock(first)).ok_or_else(|| Error::Parse {
            line: lineno + 1,
            message: format!("malformed start time {first:?}"),
        })?;
        starts.push((start, text.to_string()));
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cues = Vec::with_capacity(starts.len());
    for i in 0..starts.len() {
        let end = match starts.get(i + 1) {
            Some(next) => next.0,
            None => video_duration.max(starts[i].0),
        };
        cues.push(TranscriptCue {
            start: starts[i].0,
            end,
            text: starts[i].1.clone(),
        });
    }
    Ok(cues)
}

fn parse_timed_blocks(raw: &str, format: TranscriptFormat) -> Result<Vec<TranscriptCue>> {
    let lines: Vec<&str> = raw.lines().map(|l| l.trim_end_matches('\r')).collect();
    let mut cues = Vec::new();
    let mut i = 0;

    if format == TranscriptFormat::WebVtt {
        let first = lines.first().map(|l| l.trim_start_matches('\u{feff}').trim());
        match first {
            None => return Ok(cues),
            Some(l) if l.starts_with("WEBVTT") => i = 1,
            Some(_) => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing WEBVTT header".into(),
                })
            }
        }
    }

    while i < lines.len() {
        let line = lines[i].trim();
        if line.is_empty() {
            i += 1;
            continue;
        }
        if format == TranscriptFormat::WebVtt
            && (line.starts_with("NOTE") || line == "STYLE" || line == "REGION")
        {
            while i < lines.len() && !lines[i].trim().is_empty() {
                i += 1;
            }
            continue;
        }
        // An identifier (SRT counter or optional VTT id) precedes the timing line.
        let timing_line = if line.contains("-->") {
            i
        } else {
            i + 1
        };
        let Some(timing) = lines.get(timing_line) else {
            return Err(Error::Parse {
                line: i + 1,
                message: "cue without timing line".into(),
            });
        };
        let (start, end) = parse_timing(timing).ok_or_else(|| Error::Parse {
            line: timing_line + 1,
            message: format!("malformed timestamp line {:?}", timing.trim()),
        })?;
        let mut text_lines = Vec::new();
        i = timing_line + 1;
        while i < lines.len() && !lines[i].trim().is_empty() {
            text_lines.push(lines[i].trim());
            i += 1;
        }
        if end > start {
            cues.push(TranscriptCue {
                start,
                end,
                text: text_lines.join(" "),
            });
        } else {
            return Err(Error::Parse {
                line: timing_line + 1,
                message: "cue end precedes its start".into(),
            });
        }
    }
    Ok(cues)
}

fn parse_timing(line: &str) -> Option<(f64, f64)> {
    let (a, b) = line.split_once("-->")?;
    let start = parse_clock(a.trim())?;
    // WebVTT cue settings follow the end timestamp.
    let end = parse_clock(b.split_whitespace().next()?)?;
    Some((start, end))
}

/// Parses `HH:MM:SS,mmm`, `HH:MM:SS.mmm` or `MM:SS.mmm`.
fn parse_clock(s: &str) -> Option<f64> {
    let s = s.replace(',', ".");
    let parts: Vec<&str> = s.split(':').collect();
    let (h, m, sec) = match parts.as_slice() {
        [h, m, sec] => (h.parse::<u64>().ok()?, m.parse::<u64>().ok()?, *sec),
        [m, sec] => (0, m.parse::<u64>().ok()?, *sec),
        _ => return None,
    };
    if m >= 60 {
        return None;
    }
    let sec = parse_seconds(sec)?;
    if sec >= 60.0 {
        return None;
    }
    Some((h * 3600 + m * 60) as f64 + sec)
}

fn parse_seconds(s: &str) -> Option<f64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
        return None;
    }
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

fn normalize_cues(mut cues: Vec<TranscriptCue>) -> Vec<TranscriptCue> {
    cues.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out: Vec<TranscriptCue> = Vec::with_capacity(cues.len());
    for mut cue in cues {
        if let Some(prev) = out.last_mut() {
            if cue.start < prev.end {
                cue.start = prev.end;
            }
            if cue.end <= cue.start + TIME_EPS {
                append_text(&mut prev.text, &cue.text);
                continue;
            }
        } else if cue.end <= cue.start {
            continue;
        }
        out.push(cue);
    }
    out
}

fn append_text(acc: &mut String, text: &str) {
    let text = text.trim();
    if text.is_empty() {
        return;
    }
    if !acc.is_empty() {
        acc.push(' ');
    }
    acc.push_str(text);
}

#[derive(Debug, Clone)]
struct Piece {
    start: f64,
    end: f64,
    text: String,
}

impl Piece {
    fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Splits one video into caption-aligned segments of at least five seconds.
///
/// A video shorter than five seconds yields a single segment for which
/// [`Segment::is_short`] is true.
pub fn segment_video(cues: &[TranscriptCue], meta: &VideoMeta) -> Result<Vec<Segment>> {
    let duration = meta.duration;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Data(format!(
            "video {} has non-positive duration {duration}",
            meta.video_id
        )));
    }
    if let Some(last) = cues.last() {
        if last.end > duration + TIME_EPS {
            return Err(Error::Data(format!(
                "video {}: cue ends at {} beyond duration {duration}",
                meta.video_id, last.end
            )));
        }
    }

    let mut pieces = vec![Piece {
        start: 0.0,
        end: duration,
        text: String::new(),
    }];
    for cue in cues {
        let last = pieces.last_mut().expect("at least one piece");
        if cue.start > last.start + TIME_EPS && cue.start < duration - TIME_EPS {
            last.end = cue.start;
            pieces.push(Piece {
                start: cue.start,
                end: duration,
                text: String::new(),
            });
        }
        append_text(&mut pieces.last_mut().unwrap().text, &cue.text);
    }

    merge_short_pieces(&mut pieces);
    Ok(pieces_to_segments(&meta.video_id, pieces))
}

/// Runs the short-segment merge loop over existing segments of one video.
///
/// Applied to the output of [`segment_video`] this is the identity.
pub fn merge_pass(segments: &[Segment]) -> Vec<Segment> {
    let Some(first) = segments.first() else {
        return Vec::new();
    };
    let mut pieces: Vec<Piece> = segments
        .iter()
        .map(|s| Piece {
            start: s.start,
            end: s.end,
            text: s.text.clone(),
        })
        .collect();
    let before = pieces.len();
    merge_short_pieces(&mut pieces);
    if pieces.len() == before {
        return segments.to_vec();
    }
    pieces_to_segments(&first.video_id, pieces)
}

fn merge_short_pieces(pieces: &mut Vec<Piece>) {
    while pieces.len() > 1 {
        // Leftmost shortest piece under the minimum.
        let mut target: Option<usize> = None;
        for (i, p) in pieces.iter().enumerate() {
            if p.length() < MIN_SEGMENT_SECONDS - TIME_EPS
                && target.is_none_or(|t| p.length() < pieces[t].length())
            {
                target = Some(i);
            }
        }
        let Some(t) = target else { break };

        let left = t.checked_sub(1);
        let right = (t + 1 < pieces.len()).then_some(t + 1);
        let neighbour = match (left, right) {
            (Some(l), Some(r)) => {
                if pieces[r].length() < pieces[l].length() {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!("more than one piece"),
        };
        let (a, b) = if neighbour < t { (neighbour, t) } else { (t, neighbour) };
        let absorbed = pieces.remove(b);
        let kept = &mut pieces[a];
        kept.end = absorbed.end;
        append_text(&mut kept.text, &absorbed.text);
    }
}

fn pieces_to_segments(video_id: &str, pieces: Vec<Piece>) -> Vec<Segment> {
    pieces
        .into_iter()
        .enumerate()
        .map(|(index, p)| Segment {
            video_id: video_id.to_string(),
            index,
            start: p.start,
            end: p.end,
            text: p.text,
            label: None,
        })
        .collect()
}

pub type LabelTable = BTreeMap<SegmentKey, Label>;

/// Attaches binary labels; segments without an entry stay unlabeled.
pub fn attach_labels(mut segments: Vec<Segment>, labels: &LabelTable) -> Result<Vec<Segment>> {
    let mut matched = 0usize;
    for seg in &mut segments {
        if let Some(label) = labels.get(&seg.key()) {
            seg.label = Some(*label);
            matched += 1;
        }
    }
    if matched != labels.len() {
        let known: std::collections::BTreeSet<SegmentKey> =
            segments.iter().map(Segment::key).collect();
        let dangling: Vec<String> = labels
            .keys()
            .filter(|k| !known.contains(*k))
            .map(ToString::to_string)
            .collect();
        return Err(Error::Integrity(format!(
            "labels reference missing segments: {}",
            dangling.join(", ")
        )));
    }
    Ok(segments)
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    video_id: String,
    segment_index: usize,
    label: u8,
}

pub fn read_labels(path: &Path) -> Result<LabelTable> {
    let mut reader = csv_reader(path)?;
    let mut table = LabelTable::new();
    for row in reader.deserialize() {
        let row: LabelRow = row?;
        let key = SegmentKey::new(row.video_id, row.segment_index);
        if table.insert(key.clone(), Label::from_flag(row.label)?).is_some() {
            return Err(Error::Data(format!("duplicate label for {key}")));
        }
    }
    Ok(table)
}

pub fn write_labels(path: &Path, labels: &LabelTable) -> Result<()> {
    let mut writer = csv_writer(path)?;
    for (key, label) in labels {
        writer.serialize(LabelRow {
            video_id: key.video_id.clone(),
            segment_index: key.index,
            label: label.flag(),
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaRow {
    video_id: String,
    duration_seconds: f64,
    genre: String,
    game_title: String,
}

/// Reads video metadata, preserving file order.
pub fn read_meta(path: &Path) -> Result<Vec<VideoMeta>> {
    let mut reader = csv_reader(path)?;
    let mut metas: Vec<VideoMeta> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for row in reader.deserialize() {
        let row: MetaRow = row?;
        if !(row.duration_seconds.is_finite() && row.duration_seconds > 0.0) {
            return Err(Error::Data(format!(
                "video {} has non-positive duration",
                row.video_id
            )));
        }
        if !seen.insert(row.video_id.clone()) {
            return Err(Error::Data(format!("duplicate video id {}", row.video_id)));
        }
        metas.push(VideoMeta {
            video_id: row.video_id,
            duration: row.duration_seconds,
            genre: row.genre.parse()?,
            game_title: row.game_title,
        });
    }
    Ok(metas)
}

pub fn write_meta(path: &Path, metas: &[VideoMeta]) -> Result<()> {
    let mut writer = csv_writer(path)?;
    for m in metas {
        writer.serialize(MetaRow {
            video_id: m.video_id.clone(),
            duration_seconds: m.duration,
            genre: m.genre.to_string(),
            game_title: m.game_title.clone(),
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRow {
    video_id: String,
    segment_index: usize,
    start: f64,
    end: f64,
    label: Option<u8>,
    text: String,
}

pub fn write_segments(path: &Path, segments: &[Segment]) -> Result<()> {
    let mut writer = csv_writer(path)?;
    for s in segments {
        writer.serialize(SegmentRow {
            video_id: s.video_id.clone(),
            segment_index: s.index,
            start: s.start,
            end: s.end,
            label: s.label.map(Label::flag),
            text: s.text.clone(),
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_segments(path: &Path) -> Result<Vec<Segment>> {
    let mut reader = csv_reader(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: SegmentRow = row?;
        out.push(Segment {
            video_id: row.video_id,
            index: row.segment_index,
            start: row.start,
            end: row.end,
            text: row.text,
            label: row.label.map(Label::from_flag).transpose()?,
        });
    }
    Ok(out)
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}
