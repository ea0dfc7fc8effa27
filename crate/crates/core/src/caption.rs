//! WebVTT caption tracks and sentence assembly.
//!
//! Parsing keeps only what sentence segmentation needs: cue timing, plain
//! text, and the settings remainder of the timing line (kept opaque). Styling,
//! regions and comments are skipped.

use std::borrow::Cow;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Diagnostic;

const MAGIC: &str = "WEBVTT";

/// One timed caption fragment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionCue {
    pub index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_settings: Option<String>,
}

impl CaptionCue {
    pub fn new(index: usize, start_ms: u64, end_ms: u64, text: impl Into<String>) -> Self {
        Self {
            index,
            start_ms,
            end_ms,
            text: text.into(),
            raw_settings: None,
        }
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms.saturating_sub(self.start_ms)
    }
}

/// A sentence made of one or more consecutive cues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub text: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub cue_indices: Vec<usize>,
    /// `true` when the span ended on sentence-terminal punctuation, `false`
    /// when it was flushed by a gap, the length cap or the end of the track.
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaptionError {
    #[error("missing WEBVTT header")]
    MissingHeader,
    #[error("cue {index}: {reason}")]
    InvalidCue { index: usize, reason: String },
}

/// Result of a document-level parse: the cues plus everything that was skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedCaptions {
    pub cues: Vec<CaptionCue>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses a WebVTT document.
///
/// Cues come back sorted by start time (document order breaks ties) with
/// dense indices. Malformed cues are skipped and reported in
/// [`ParsedCaptions::diagnostics`]; only a missing header fails the whole
/// document.
pub fn parse_webvtt(document: &[u8]) -> Result<ParsedCaptions, CaptionError> {
    let mut diagnostics = Vec::new();
    let decoded = match std::str::from_utf8(document) {
        Ok(text) => Cow::Borrowed(text),
        Err(err) => {
            let line = 1 + document[..err.valid_up_to()]
                .iter()
                .filter(|&&b| b == b'\n')
                .count();
            diagnostics.push(Diagnostic::new(
                line,
                "invalid UTF-8 sequence replaced with U+FFFD",
            ));
            String::from_utf8_lossy(document)
        }
    };
    let text = decoded.strip_prefix('\u{feff}').unwrap_or(&decoded);
    let lines = split_lines(text);

    match lines.first() {
        Some(first) if is_header(first) => {}
        _ => return Err(CaptionError::MissingHeader),
    }

    // Header block: everything up to the first blank line.
    let mut i = 1;
    while i < lines.len() && !lines[i].is_empty() && !lines[i].contains("-->") {
        i += 1;
    }

    let mut cues = Vec::new();
    while i < lines.len() {
        if lines[i].is_empty() {
            i += 1;
            continue;
        }
        let first = lines[i];
        let timing_idx = if first.contains("-->") {
            i
        } else if ["NOTE", "STYLE", "REGION"]
            .iter()
            .any(|kw| starts_block(first, kw))
        {
            i = skip_block(&lines, i);
            continue;
        } else if lines.get(i + 1).is_some_and(|l| l.contains("-->")) {
            // cue identifier
            i + 1
        } else {
            diagnostics.push(Diagnostic::new(i + 1, "unrecognised block skipped"));
            i = skip_block(&lines, i);
            continue;
        };

        let mut end = timing_idx + 1;
        while end < lines.len() && !lines[end].is_empty() && !lines[end].contains("-->") {
            end += 1;
        }
        let payload = &lines[timing_idx + 1..end];
        i = end;

        let line_no = timing_idx + 1;
        let (start_ms, end_ms, raw_settings) = match parse_timing_line(lines[timing_idx]) {
            Ok(timing) => timing,
            Err(reason) => {
                diagnostics.push(Diagnostic::new(line_no, reason));
                continue;
            }
        };
        if start_ms >= end_ms {
            diagnostics.push(Diagnostic::new(
                line_no,
                format!("cue end {end_ms} ms is not after start {start_ms} ms"),
            ));
            continue;
        }
        let text = cue_text(payload);
        if text.is_empty() {
            diagnostics.push(Diagnostic::new(line_no, "cue has no text"));
            continue;
        }
        cues.push(CaptionCue {
            index: 0,
            start_ms,
            end_ms,
            text,
            raw_settings,
        });
    }

    // stable: equal start times keep document order
    cues.sort_by_key(|c| c.start_ms);
    for (index, cue) in cues.iter_mut().enumerate() {
        cue.index = index;
    }
    Ok(ParsedCaptions { cues, diagnostics })
}

/// Writes cues in canonical form: header, blank-line separated cues,
/// `HH:MM:SS.mmm` timestamps, no identifiers.
///
/// Text is escaped so that parsing the output gives back the same cues.
pub fn serialize_webvtt(cues: &[CaptionCue]) -> Result<String, CaptionError> {
    validate_cues(cues)?;
    let mut out = String::from(MAGIC);
    out.push('\n');
    for cue in cues {
        out.push('\n');
        out.push_str(&format_timestamp(cue.start_ms));
        out.push_str(" --> ");
        out.push_str(&format_timestamp(cue.end_ms));
        if let Some(settings) = &cue.raw_settings {
            out.push(' ');
            out.push_str(settings);
        }
        out.push('\n');
        escape_text_into(&cue.text, &mut out);
        out.push('\n');
    }
    Ok(out)
}

/// Checks the invariants a cue list must satisfy to be serialized: dense
/// indices in start order, `start < end`, and whitespace-normalized,
/// non-empty text.
pub fn validate_cues(cues: &[CaptionCue]) -> Result<(), CaptionError> {
    let invalid = |index: usize, reason: &str| CaptionError::InvalidCue {
        index,
        reason: reason.to_owned(),
    };
    let mut prev_start = 0;
    for (pos, cue) in cues.iter().enumerate() {
        if cue.index != pos {
            return Err(invalid(pos, "index is not its position in the list"));
        }
        if cue.start_ms >= cue.end_ms {
            return Err(invalid(pos, "start_ms must be before end_ms"));
        }
        if cue.start_ms < prev_start {
            return Err(invalid(pos, "cues are not sorted by start time"));
        }
        prev_start = cue.start_ms;
        if cue.text.is_empty() || collapse_whitespace(&cue.text) != cue.text {
            return Err(invalid(pos, "text is empty or not whitespace-normalized"));
        }
        if let Some(settings) = &cue.raw_settings {
            if settings.is_empty()
                || settings.trim() != settings
                || settings.contains(['\n', '\r'])
            {
                return Err(invalid(pos, "settings must be a trimmed single line"));
            }
        }
    }
    Ok(())
}

static BRACKETED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[[^\]]*\]").unwrap());

// Optional `>>` speaker-change marker, then an all-caps label such as
// `ANCHOR:` or `DR. SMITH:` followed by whitespace or the end of the text.
static SPEAKER_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:>>+\s*)?(?:\p{Lu}[\p{Lu}\p{Nd}.'\- ]*:(?:\s+|$))?").unwrap()
});

/// Cleans a caption fragment for sentence assembly: drops bracketed
/// non-verbal annotations and musical-note glyphs, strips a leading speaker
/// label, and collapses whitespace. May return an empty string.
pub fn normalize_caption_text(raw: &str) -> String {
    let without_brackets = BRACKETED.replace_all(raw, " ");
    let without_notes: String = without_brackets
        .chars()
        .map(|c| if is_music_glyph(c) { ' ' } else { c })
        .collect();
    let collapsed = collapse_whitespace(&without_notes);
    let unlabelled = SPEAKER_PREFIX.replace(&collapsed, "");
    collapse_whitespace(&unlabelled)
}

fn is_music_glyph(c: char) -> bool {
    matches!(c, '♪' | '♫' | '♬' | '♩')
}

/// Knobs for [`assemble_sentences`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssemblyPolicy {
    pub terminal_punctuation: Vec<char>,
    pub max_gap_ms: u64,
    pub max_sentence_ms: u64,
    pub flush_on_gap: bool,
}

impl Default for AssemblyPolicy {
    fn default() -> Self {
        Self {
            terminal_punctuation: vec!['.', '?', '!'],
            max_gap_ms: 2000,
            max_sentence_ms: 30_000,
            flush_on_gap: true,
        }
    }
}

/// Merges caption fragments into sentences.
///
/// Cues are taken in `(start_ms, index)` order and normalized with
/// [`normalize_caption_text`]; cues that normalize to nothing are dropped
/// before merging. A span closes when its text ends a sentence, and is
/// flushed unterminated when the next cue starts more than `max_gap_ms`
/// after it (if `flush_on_gap`), when adding the next cue would stretch it
/// past `max_sentence_ms`, or at the end of the track.
pub fn assemble_sentences(cues: &[CaptionCue], policy: &AssemblyPolicy) -> Vec<SentenceSpan> {
    let mut ordered: Vec<&CaptionCue> = cues.iter().collect();
    ordered.sort_by_key(|c| (c.start_ms, c.index));

    let mut spans = Vec::new();
    let mut open: Option<SentenceSpan> = None;
    for cue in ordered {
        let text = normalize_caption_text(&cue.text);
        if text.is_empty() {
            continue;
        }
        if let Some(span) = open.take() {
            let gap_break =
                policy.flush_on_gap && cue.start_ms > span.end_ms.saturating_add(policy.max_gap_ms);
            let hull_end = span.end_ms.max(cue.end_ms);
            let too_long = hull_end - span.start_ms > policy.max_sentence_ms;
            if gap_break || too_long {
                spans.push(span);
            } else {
                open = Some(span);
            }
        }
        match open.as_mut() {
            Some(span) => {
                span.text.push(' ');
                span.text.push_str(&text);
                span.end_ms = span.end_ms.max(cue.end_ms);
                span.cue_indices.push(cue.index);
            }
            None => {
                open = Some(SentenceSpan {
                    text,
                    start_ms: cue.start_ms,
                    end_ms: cue.end_ms,
                    cue_indices: vec![cue.index],
                    terminal: false,
                })
            }
        }
        if let Some(mut span) = open.take_if(|s| ends_sentence(&s.text, &policy.terminal_punctuation)) {
            span.terminal = true;
            spans.push(span);
        }
    }
    spans.extend(open);
    spans
}

/// Whether `text` ends with sentence-terminal punctuation.
///
/// Trailing closing quotes and brackets are looked through. An ellipsis does
/// not end a sentence, nor does a `.` after a lone capital letter (`J.`,
/// `U.S.`).
pub fn ends_sentence(text: &str, terminals: &[char]) -> bool {
    let trimmed = text.trim_end_matches(['"', '\'', '”', '’', ')']);
    let mut rev = trimmed.chars().rev();
    let Some(last) = rev.next() else {
        return false;
    };
    if !terminals.contains(&last) {
        return false;
    }
    if last == '.' {
        let before = rev.next();
        if before == Some('.') {
            return false;
        }
        if let Some(c) = before {
            let prior = rev.next();
            if c.is_uppercase() && prior.is_none_or(|p| p.is_whitespace() || p == '.') {
                return false;
            }
        }
    }
    true
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn split_lines(text: &str) -> Vec<&str> {
    let mut lines = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find(['\r', '\n']) {
        lines.push(&rest[..pos]);
        let skip = if rest[pos..].starts_with("\r\n") { 2 } else { 1 };
        rest = &rest[pos + skip..];
    }
    if !rest.is_empty() {
        lines.push(rest);
    }
    lines
}

fn is_header(line: &str) -> bool {
    line.strip_prefix(MAGIC)
        .is_some_and(|rest| rest.is_empty() || rest.starts_with([' ', '\t']))
}

fn starts_block(line: &str, keyword: &str) -> bool {
    line.strip_prefix(keyword)
        .is_some_and(|rest| rest.is_empty() || rest.starts_with([' ', '\t']))
}

fn skip_block(lines: &[&str], mut i: usize) -> usize {
    while i < lines.len() && !lines[i].is_empty() {
        i += 1;
    }
    i
}

fn parse_timing_line(line: &str) -> Result<(u64, u64, Option<String>), String> {
    let (left, right) = line
        .split_once("-->")
        .ok_or_else(|| "timing line has no `-->`".to_owned())?;
    let start = parse_timestamp(left.trim())
        .ok_or_else(|| format!("malformed start timestamp `{}`", left.trim()))?;
    let right = right.trim_start();
    let (end_str, settings) = match right.find(char::is_whitespace) {
        Some(pos) => (&right[..pos], right[pos..].trim()),
        None => (right, ""),
    };
    let end =
        parse_timestamp(end_str).ok_or_else(|| format!("malformed end timestamp `{end_str}`"))?;
    let settings = (!settings.is_empty()).then(|| settings.to_owned());
    Ok((start, end, settings))
}

/// Parses `HH:MM:SS.mmm` or `MM:SS.mmm` into milliseconds.
pub fn parse_timestamp(s: &str) -> Option<u64> {
    let parts: Vec<&str> = s.split(':').collect();
    let (hours, minutes, sec_frac) = match parts.as_slice() {
        [h, m, s] => (Some(*h), *m, *s),
        [m, s] => (None, *m, *s),
        _ => return None,
    };
    let digits = |d: &str| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit());

    let hours = match hours {
        Some(h) if digits(h) => h.parse::<u64>().ok()?,
        Some(_) => return None,
        None => 0,
    };
    if minutes.len() != 2 || !digits(minutes) {
        return None;
    }
    let (secs, millis) = sec_frac.split_once('.')?;
    if secs.len() != 2 || !digits(secs) || millis.len() != 3 || !digits(millis) {
        return None;
    }
    let minutes: u64 = minutes.parse().ok()?;
    let secs: u64 = secs.parse().ok()?;
    let millis: u64 = millis.parse().ok()?;
    if minutes > 59 || secs > 59 {
        return None;
    }
    hours
        .checked_mul(3_600_000)?
        .checked_add(minutes * 60_000 + secs * 1000 + millis)
}

pub fn format_timestamp(ms: u64) -> String {
    let hours = ms / 3_600_000;
    let minutes = (ms / 60_000) % 60;
    let secs = (ms / 1000) % 60;
    format!("{hours:02}:{minutes:02}:{secs:02}.{:03}", ms % 1000)
}

/// Joins payload lines with spaces, strips markup tags, decodes character
/// references and collapses whitespace.
fn cue_text(payload: &[&str]) -> String {
    let joined = payload.join(" ");
    let mut out = String::with_capacity(joined.len());
    let mut chars = joined.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        match c {
            '<' => {
                for (_, t) in chars.by_ref() {
                    if t == '>' {
                        break;
                    }
                }
            }
            '&' => match decode_reference(&joined[pos..]) {
                Some((decoded, consumed)) => {
                    out.push(decoded);
                    // the `&` itself was already consumed
                    for _ in 1..consumed {
                        chars.next();
                    }
                }
                None => out.push('&'),
            },
            _ => out.push(c),
        }
    }
    collapse_whitespace(&out)
}

/// Decodes a character reference at the start of `s`, returning the
/// character and how many chars of `s` it spans.
fn decode_reference(s: &str) -> Option<(char, usize)> {
    let end = s.find(';')?;
    let name = &s[1..end];
    let decoded = match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        "lrm" => '\u{200e}',
        "rlm" => '\u{200f}',
        _ => {
            let code = if let Some(hex) = name.strip_prefix("#x").or(name.strip_prefix("#X")) {
                u32::from_str_radix(hex, 16).ok()?
            } else {
                name.strip_prefix('#')?.parse().ok()?
            };
            char::from_u32(code)?
        }
    };
    Some((decoded, s[..=end].chars().count()))
}

fn escape_text_into(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
}
