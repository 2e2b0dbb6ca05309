//! Subtitle ingestion: WebVTT / SRT parsing and token normalization.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaptionError {
    #[error("line {line}: malformed timestamp line {text:?}")]
    MalformedTimestamp { line: usize, text: String },
    #[error("line {line}: cue ends at {end}s but starts at {start}s")]
    InvalidSpan { line: usize, start: f64, end: f64 },
    #[error("line {line}: malformed cue dump row")]
    MalformedDump { line: usize },
}

/// Whether a caption track was written by a person or produced by ASR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionSource {
    Edited,
    #[default]
    Auto,
}

impl FromStr for CaptionSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "edited" => Ok(Self::Edited),
            "auto" => Ok(Self::Auto),
            other => Err(format!("unknown caption source {other:?}")),
        }
    }
}

/// One timed subtitle block.
#[derive(Debug, Clone, PartialEq)]
pub struct Cue {
    pub start: f64,
    pub end: f64,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Cue {
    pub fn new(start: f64, end: f64, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = normalize_text(&text);
        Self {
            start,
            end,
            text,
            tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubtitleTrack {
    pub video_id: String,
    pub source: CaptionSource,
    pub cues: Vec<Cue>,
}

impl SubtitleTrack {
    /// Builds a track, sorting cues by start time (stable for equal starts).
    pub fn new(video_id: impl Into<String>, source: CaptionSource, mut cues: Vec<Cue>) -> Self {
        cues.sort_by(|a, b| a.start.total_cmp(&b.start));
        Self {
            video_id: video_id.into(),
            source,
            cues,
        }
    }

    pub fn with_source(mut self, source: CaptionSource) -> Self {
        self.source = source;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }
}

/// Parses a WebVTT subset. Header, NOTE/STYLE/REGION blocks, cue identifiers
/// and cue settings are discarded. Source defaults to [`CaptionSource::Auto`].
pub fn parse_webvtt(file_text: &str, video_id: &str) -> Result<SubtitleTrack, CaptionError> {
    parse_blocks(file_text, video_id)
}

/// Parses an SRT subset. The numeric index line is optional; both `,` and `.`
/// are accepted as the millisecond separator.
pub fn parse_srt(file_text: &str, video_id: &str) -> Result<SubtitleTrack, CaptionError> {
    parse_blocks(file_text, video_id)
}

// WebVTT and SRT share the same block grammar once the separator and the
// optional header/index lines are tolerated.
fn parse_blocks(file_text: &str, video_id: &str) -> Result<SubtitleTrack, CaptionError> {
    let text = file_text.strip_prefix('\u{feff}').unwrap_or(file_text);
    let mut cues = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();

    let mut flush = |block: &mut Vec<(usize, &str)>| -> Result<(), CaptionError> {
        if let Some(cue) = parse_block(block)? {
            cues.push(cue);
        }
        block.clear();
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut block)?;
        } else {
            block.push((idx + 1, line));
        }
    }
    flush(&mut block)?;

    Ok(SubtitleTrack::new(video_id, CaptionSource::Auto, cues))
}

fn parse_block(block: &[(usize, &str)]) -> Result<Option<Cue>, CaptionError> {
    let Some(timing_pos) = block.iter().position(|(_, l)| l.contains("-->")) else {
        // header, NOTE, STYLE, or stray text without timing
        return Ok(None);
    };
    let first = block[0].1.trim_start();
    if timing_pos > 0 && (first.starts_with("NOTE") || first.starts_with("STYLE")) {
        return Ok(None);
    }
    let (line_no, timing) = block[timing_pos];
    let (start, end) = parse_timing_line(timing).ok_or_else(|| CaptionError::MalformedTimestamp {
        line: line_no,
        text: timing.to_string(),
    })?;
    if start >= end {
        return Err(CaptionError::InvalidSpan {
            line: line_no,
            start,
            end,
        });
    }
    let text = block[timing_pos + 1..]
        .iter()
        .map(|(_, l)| strip_markup(l.trim()))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Some(Cue::new(start, end, text)))
}

fn parse_timing_line(line: &str) -> Option<(f64, f64)> {
    let (lhs, rhs) = line.split_once("-->")?;
    let start = parse_timestamp(lhs.trim())?;
    // cue settings (position, align, ...) follow the end timestamp
    let end = parse_timestamp(rhs.split_whitespace().next()?)?;
    Some((start, end))
}

/// Parses `HH:MM:SS.mmm`, `HH:MM:SS,mmm` or `MM:SS.mmm` into seconds.
pub fn parse_timestamp(ts: &str) -> Option<f64> {
    let (clock, millis) = match ts.rfind(['.', ',']) {
        Some(i) => (&ts[..i], &ts[i + 1..]),
        None => (ts, ""),
    };
    let parts: Vec<&str> = clock.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return None;
    }
    let mut secs: u64 = 0;
    for p in &parts {
        if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        secs = secs * 60 + p.parse::<u64>().ok()?;
    }
    let (min, sec) = (parts[parts.len() - 2], parts[parts.len() - 1]);
    if min.parse::<u64>().ok()? > 59 && parts.len() == 3 || sec.parse::<u64>().ok()? > 59 {
        return None;
    }
    if !millis.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // one decimal parse rounds once, so "00:01.398" equals 1398.0 / 1000.0
    format!("{secs}.{millis}0").parse::<f64>().ok()
}

/// Removes `<...>` inline tags (voice spans, karaoke timestamps of ASR tracks).
fn strip_markup(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut depth = 0usize;
    for ch in line.chars() {
        match ch {
            '<' => depth += 1,
            '>' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(ch),
            _ => {}
        }
    }
    out.trim().to_string()
}

/// Words that end in `s` but are not plurals, or irregular plurals.
const SINGULAR_EXCEPTIONS: &[(&str, &str)] = &[
    ("always", "always"),
    ("across", "across"),
    ("afterwards", "afterwards"),
    ("brownies", "brownie"),
    ("christmas", "christmas"),
    ("cookies", "cookie"),
    ("glass", "glass"),
    ("lens", "lens"),
    ("molasses", "molasses"),
    ("news", "news"),
    ("perhaps", "perhaps"),
    ("series", "series"),
    ("shoes", "shoe"),
    ("species", "species"),
    ("this", "this"),
    ("towards", "towards"),
    ("veggies", "veggie"),
    ("whereas", "whereas"),
];

/// Rule-based plural reduction. Stable: `singularize(singularize(w)) == singularize(w)`.
pub fn singularize(word: &str) -> String {
    if let Some((_, s)) = SINGULAR_EXCEPTIONS.iter().find(|(w, _)| *w == word) {
        return (*s).to_string();
    }
    if word.len() <= 3 || !word.ends_with('s') {
        return word.to_string();
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return word.to_string();
    }
    if word.len() > 4 {
        if let Some(stem) = word.strip_suffix("ies") {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = word.strip_suffix("es") {
        let takes_es = stem.ends_with("ss")
            || stem.ends_with("sh")
            || stem.ends_with("ch")
            || stem.ends_with('x')
            || stem.ends_with("zz")
            || stem.ends_with('o');
        if takes_es && stem.len() >= 2 {
            return stem.to_string();
        }
    }
    word[..word.len() - 1].to_string()
}

/// Lowercases, splits on anything that is not an ASCII letter, digit or
/// apostrophe, drops apostrophes, and singularizes each word.
pub fn normalize_text(raw: &str) -> Vec<String> {
    raw.split(|c: char| !(c.is_ascii_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .filter_map(|word| {
            let w: String = word
                .chars()
                .filter(char::is_ascii_alphanumeric)
                .map(|c| c.to_ascii_lowercase())
                .collect();
            (!w.is_empty()).then(|| singularize(&w))
        })
        .collect()
}

/// `HH:MM:SS.mmm`, rounded to the nearest millisecond.
pub fn format_timestamp(seconds: f64) -> String {
    let ms = (seconds * 1000.0).round().max(0.0) as u64;
    format!(
        "{:02}:{:02}:{:02}.{:03}",
        ms / 3_600_000,
        ms / 60_000 % 60,
        ms / 1000 % 60,
        ms % 1000
    )
}

/// Writes a minimal WebVTT file (header, one block per cue, raw text).
pub fn to_webvtt(track: &SubtitleTrack) -> String {
    let mut out = String::from("WEBVTT\n");
    for cue in &track.cues {
        let _ = write!(
            out,
            "\n{} --> {}\n{}\n",
            format_timestamp(cue.start),
            format_timestamp(cue.end),
            cue.text
        );
    }
    out
}

/// Canonical dump: one `start\tend\ttokens` line per cue.
pub fn to_cue_dump(track: &SubtitleTrack) -> String {
    let mut out = String::new();
    for cue in &track.cues {
        let _ = writeln!(out, "{}\t{}\t{}", cue.start, cue.end, cue.tokens.join(" "));
    }
    out
}

pub fn parse_cue_dump(
    text: &str,
    video_id: &str,
    source: CaptionSource,
) -> Result<SubtitleTrack, CaptionError> {
    let mut cues = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut fields = line.splitn(3, '\t');
        let (Some(s), Some(e), Some(t)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(CaptionError::MalformedDump { line: line_no });
        };
        let (Ok(start), Ok(end)) = (s.parse::<f64>(), e.parse::<f64>()) else {
            return Err(CaptionError::MalformedDump { line: line_no });
        };
        if !(start >= 0.0 && start < end) {
            return Err(CaptionError::InvalidSpan {
                line: line_no,
                start,
                end,
            });
        }
        cues.push(Cue::new(start, end, t));
    }
    Ok(SubtitleTrack::new(video_id, source, cues))
}
