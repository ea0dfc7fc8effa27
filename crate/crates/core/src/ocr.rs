//! Caption-track reconstruction from burned-in captions.
//!
//! Input is a per-frame dump of OCR results for the caption band. Filtering
//! removes low-confidence reads, non-verbal text and frames where the
//! detected band jumps away from where it usually sits; what remains is
//! grouped into runs of near-identical text, and each run becomes one cue.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption::{normalize_caption_text, CaptionCue};
use crate::Diagnostic;

/// Number of observations in the centred running-median window.
pub const MEDIAN_WINDOW: usize = 31;

/// Pixel rectangle of the detected caption region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct BBox {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl BBox {
    pub fn new(x: i32, y: i32, w: i32, h: i32) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (
            f64::from(self.x) + f64::from(self.w) / 2.0,
            f64::from(self.y) + f64::from(self.h) / 2.0,
        )
    }
}

impl From<[i32; 4]> for BBox {
    fn from([x, y, w, h]: [i32; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BBox> for [i32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// One OCR read of the caption band, as found in the dump JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrObservation {
    #[serde(rename = "frame")]
    pub frame_index: u64,
    #[serde(rename = "ts_ms")]
    pub timestamp_ms: u64,
    pub text: String,
    pub bbox: BBox,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OcrError {
    #[error("invalid track config: {0}")]
    InvalidConfig(&'static str),
    #[error("reading OCR dump: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackConfig {
    pub min_confidence: f64,
    pub bbox_tolerance_px: u32,
    pub max_bridge_frames: u64,
    pub min_cue_frames: u64,
    /// Normalized edit similarity in `[0, 1]`.
    pub text_similarity_threshold: f64,
    pub frame_duration_ms: f64,
}

impl TrackConfig {
    /// Default thresholds for a clip at `fps` frames per second.
    pub fn for_fps(fps: f64) -> Result<Self, OcrError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(OcrError::InvalidConfig("fps must be positive"));
        }
        let cfg = Self {
            min_confidence: 0.6,
            bbox_tolerance_px: 12,
            max_bridge_frames: 3,
            min_cue_frames: 4,
            text_similarity_threshold: 0.85,
            frame_duration_ms: 1000.0 / fps,
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), OcrError> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(OcrError::InvalidConfig("min_confidence must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.text_similarity_threshold) {
            return Err(OcrError::InvalidConfig(
                "text_similarity_threshold must be in [0, 1]",
            ));
        }
        if self.min_cue_frames < 1 {
            return Err(OcrError::InvalidConfig("min_cue_frames must be at least 1"));
        }
        if !(self.frame_duration_ms.is_finite() && self.frame_duration_ms > 0.0) {
            return Err(OcrError::InvalidConfig("frame_duration_ms must be positive"));
        }
        Ok(())
    }
}

/// Reads an OCR dump. Lines that fail to parse or break stream ordering are
/// skipped with a diagnostic.
pub fn read_ocr_dump(
    reader: impl BufRead,
) -> Result<(Vec<OcrObservation>, Vec<Diagnostic>), OcrError> {
    let mut observations: Vec<OcrObservation> = Vec::new();
    let mut diagnostics = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| OcrError::Io(e.to_string()))?;
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let obs: OcrObservation = match serde_json::from_str(&line) {
            Ok(obs) => obs,
            Err(e) => {
                diagnostics.push(Diagnostic::new(line_no, format!("malformed observation: {e}")));
                continue;
            }
        };
        if let Some(prev) = observations.last() {
            if obs.frame_index <= prev.frame_index || obs.timestamp_ms < prev.timestamp_ms {
                diagnostics.push(Diagnostic::new(line_no, "frame or timestamp out of order"));
                continue;
            }
        }
        if !obs.text.trim().is_empty() && (obs.bbox.w <= 0 || obs.bbox.h <= 0) {
            diagnostics.push(Diagnostic::new(line_no, "empty bounding box around text"));
            continue;
        }
        if !(0.0..=1.0).contains(&obs.confidence) {
            diagnostics.push(Diagnostic::new(line_no, "confidence outside [0, 1]"));
            continue;
        }
        observations.push(obs);
    }
    Ok((observations, diagnostics))
}

/// Drops low-confidence reads, non-verbal text, and reads whose caption box
/// strays more than `bbox_tolerance_px` (Euclidean, box centres) from the
/// running median centre over a window of [`MEDIAN_WINDOW`] observations.
///
/// The median pass repeats until nothing more is dropped, which makes the
/// whole function idempotent. Texts are passed through unmodified.
pub fn stabilize_observations(stream: &[OcrObservation], cfg: &TrackConfig) -> Vec<OcrObservation> {
    split_displaced(stream, cfg).0
}

/// [`stabilize_observations`], also returning the reads dropped only
/// because their box was displaced.
fn split_displaced(
    stream: &[OcrObservation],
    cfg: &TrackConfig,
) -> (Vec<OcrObservation>, Vec<OcrObservation>) {
    let mut kept: Vec<OcrObservation> = stream
        .iter()
        .filter(|o| o.confidence >= cfg.min_confidence)
        .filter(|o| !normalize_caption_text(&o.text).is_empty())
        .cloned()
        .collect();
    let mut displaced = Vec::new();

    let tolerance = f64::from(cfg.bbox_tolerance_px);
    loop {
        let centers: Vec<(f64, f64)> = kept.iter().map(|o| o.bbox.center()).collect();
        let keep: Vec<bool> = (0..centers.len())
            .map(|i| {
                let (mx, my) = window_median(&centers, i);
                let (cx, cy) = centers[i];
                (cx - mx).hypot(cy - my) <= tolerance
            })
            .collect();
        if keep.iter().all(|&k| k) {
            displaced.sort_by_key(|o: &OcrObservation| o.frame_index);
            return (kept, displaced);
        }
        let (stay, gone): (Vec<_>, Vec<_>) = kept
            .into_iter()
            .zip(keep)
            .partition(|(_, k)| *k);
        kept = stay.into_iter().map(|(o, _)| o).collect();
        displaced.extend(gone.into_iter().map(|(o, _)| o));
    }
}

fn window_median(centers: &[(f64, f64)], i: usize) -> (f64, f64) {
    let half = MEDIAN_WINDOW / 2;
    let lo = i.saturating_sub(half);
    let hi = (i + half + 1).min(centers.len());
    let window = &centers[lo..hi];
    let mut xs: Vec<f64> = window.iter().map(|c| c.0).collect();
    let mut ys: Vec<f64> = window.iter().map(|c| c.1).collect();
    (median(&mut xs), median(&mut ys))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Normalized Levenshtein similarity: `1 - distance / max_len`.
pub fn text_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(a, b)
}

struct Run<'a> {
    members: Vec<usize>,
    counts: HashMap<&'a str, usize>,
    mode: &'a str,
    mode_count: usize,
}

impl<'a> Run<'a> {
    fn new(index: usize, text: &'a str) -> Self {
        Self {
            members: vec![index],
            counts: HashMap::from([(text, 1)]),
            mode: text,
            mode_count: 1,
        }
    }

    fn push(&mut self, index: usize, text: &'a str) {
        self.members.push(index);
        let count = self.counts.entry(text).or_insert(0);
        *count += 1;
        // ties keep the earlier mode
        if *count > self.mode_count {
            self.mode = text;
            self.mode_count = *count;
        }
    }
}

struct Reading<'a> {
    frame: u64,
    timestamp_ms: u64,
    text: &'a str,
}

/// Groups a stabilized stream into cues.
///
/// A run grows while each read is within `max_bridge_frames` missing frames
/// of the previous member and at least `text_similarity_threshold` similar
/// to the run's most common text. A read that does not match is treated as
/// a glitch if the run resumes within the bridge window, and otherwise
/// starts the next run. Runs spanning fewer than `min_cue_frames` frames are
/// dropped. Each run's text is a per-position character vote over its reads.
pub fn reconstruct_cues(stream: &[OcrObservation], cfg: &TrackConfig) -> Vec<CaptionCue> {
    build_cues(stream, &[], cfg)
}

/// Stabilizes a raw stream and reconstructs its cues.
///
/// Unlike calling [`stabilize_observations`] and [`reconstruct_cues`] in
/// turn, a read dropped only for a displaced box still counts as evidence
/// that a matching caption was on screen in that frame, so a dropout next
/// to it is bridged as if the frame had been read. Such reads never vote on
/// text or move cue boundaries.
pub fn track_cues(raw: &[OcrObservation], cfg: &TrackConfig) -> Vec<CaptionCue> {
    let (stable, displaced) = split_displaced(raw, cfg);
    build_cues(&stable, &displaced, cfg)
}

fn build_cues(stream: &[OcrObservation], support: &[OcrObservation], cfg: &TrackConfig) -> Vec<CaptionCue> {
    let normalized: Vec<String> = stream.iter().map(|o| normalize_caption_text(&o.text)).collect();
    let reads: Vec<Reading<'_>> = stream
        .iter()
        .zip(&normalized)
        .filter(|(_, text)| !text.is_empty())
        .map(|(o, text)| Reading {
            frame: o.frame_index,
            timestamp_ms: o.timestamp_ms,
            text,
        })
        .collect();

    let support: Vec<(u64, String)> = support
        .iter()
        .map(|o| (o.frame_index, normalize_caption_text(&o.text)))
        .collect();
    let bridge = cfg.max_bridge_frames;

    // Last frame at or before `until` in which the run's caption is known to
    // be on screen: its last member, extended through supporting reads.
    let reach = |run: &Run<'_>, until: u64| {
        let mut reach = reads[*run.members.last().expect("runs are never empty")].frame;
        let from = support.partition_point(|s| s.0 <= reach);
        for (frame, text) in &support[from..] {
            if *frame >= until || frame - reach - 1 > bridge {
                break;
            }
            if text_similarity(text, run.mode) >= cfg.text_similarity_threshold {
                reach = *frame;
            }
        }
        reach
    };
    let accepts = |run: &Run<'_>, read: &Reading<'_>| {
        let last = &reads[*run.members.last().expect("runs are never empty")];
        read.frame > last.frame
            && read.frame - reach(run, read.frame) - 1 <= bridge
            && text_similarity(read.text, run.mode) >= cfg.text_similarity_threshold
    };

    let mut runs = Vec::new();
    let mut i = 0;
    while i < reads.len() {
        let mut run = Run::new(i, reads[i].text);
        let mut j = i + 1;
        'grow: while j < reads.len() {
            if accepts(&run, &reads[j]) {
                run.push(j, reads[j].text);
                j += 1;
                continue;
            }
            let mut k = j + 1;
            while k < reads.len()
                && reads[k].frame.saturating_sub(reach(&run, reads[k].frame) + 1) <= bridge
            {
                if accepts(&run, &reads[k]) {
                    run.push(k, reads[k].text);
                    j = k + 1;
                    continue 'grow;
                }
                k += 1;
            }
            break;
        }
        runs.push(run);
        i = j;
    }

    let mut cues: Vec<CaptionCue> = Vec::new();
    for run in runs {
        let first = &reads[run.members[0]];
        let last = &reads[*run.members.last().unwrap()];
        if last.frame - first.frame + 1 < cfg.min_cue_frames {
            continue;
        }
        let texts: Vec<&str> = run.members.iter().map(|&m| reads[m].text).collect();
        let end_ms = (last.timestamp_ms as f64 + cfg.frame_duration_ms).round() as u64;
        cues.push(CaptionCue::new(cues.len(), first.timestamp_ms, end_ms, majority_vote(&texts)));
    }

    // Rounding can push a cue's end past the next start.
    let mut i = 0;
    while i + 1 < cues.len() {
        let next_start = cues[i + 1].start_ms;
        if cues[i].end_ms > next_start {
            cues[i].end_ms = next_start;
        }
        if cues[i].start_ms >= cues[i].end_ms {
            cues.remove(i);
        } else {
            i += 1;
        }
    }
    for (index, cue) in cues.iter_mut().enumerate() {
        cue.index = index;
    }
    cues
}

/// Per-position character plurality.
///
/// The output length is the most common read length (ties go to the longer
/// length). At each position the most common character wins; on a tie the
/// longest read's character is preferred, then the tied character seen first.
pub fn majority_vote(texts: &[&str]) -> String {
    let chars: Vec<Vec<char>> = texts.iter().map(|t| t.chars().collect()).collect();
    let Some(longest) = chars
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
        .map(|(i, _)| i)
    else {
        return String::new();
    };

    let mut length_counts: HashMap<usize, usize> = HashMap::new();
    for c in &chars {
        *length_counts.entry(c.len()).or_insert(0) += 1;
    }
    let target_len = length_counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
        .map_or(0, |(len, _)| len);

    (0..target_len)
        .map(|pos| {
            // (char, count) in first-seen order
            let mut tally: Vec<(char, usize)> = Vec::new();
            for text in &chars {
                if let Some(&c) = text.get(pos) {
                    match tally.iter_mut().find(|(t, _)| *t == c) {
                        Some(entry) => entry.1 += 1,
                        None => tally.push((c, 1)),
                    }
                }
            }
            let best = tally.iter().map(|t| t.1).max().unwrap_or(0);
            let preferred = chars[longest].get(pos).copied();
            tally
                .iter()
                .filter(|t| t.1 == best)
                .map(|t| t.0)
                .find(|&c| Some(c) == preferred)
                .or_else(|| tally.iter().find(|t| t.1 == best).map(|t| t.0))
                .expect("the longest read covers every position")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(frame: u64, text: &str) -> OcrObservation {
        OcrObservation {
            frame_index: frame,
            timestamp_ms: (frame as f64 * 1000.0 / 30.0).round() as u64,
            text: text.to_owned(),
            bbox: BBox::new(100, 600, 400, 40),
            confidence: 0.9,
        }
    }

    fn cfg() -> TrackConfig {
        TrackConfig::for_fps(30.0).unwrap()
    }

    #[test]
    fn stable_stream_is_kept() {
        let stream: Vec<_> = (0..100).map(|f| obs(f, "HELLO")).collect();
        assert_eq!(stabilize_observations(&stream, &cfg()), stream);
    }

    #[test]
    fn shifted_box_is_dropped() {
        let mut stream: Vec<_> = (0..100).map(|f| obs(f, "HELLO")).collect();
        stream[50].bbox.x += 200;
        let out = stabilize_observations(&stream, &cfg());
        assert_eq!(out.len(), 99);
        assert!(out.iter().all(|o| o.frame_index != 50));
    }

    #[test]
    fn non_verbal_and_low_confidence_dropped() {
        let mut stream = vec![obs(0, "[MUSIC]"), obs(1, "HELLO"), obs(2, "HELLO")];
        stream[2].confidence = 0.3;
        let out = stabilize_observations(&stream, &cfg());
        assert_eq!(out, vec![obs(1, "HELLO")]);
        assert!(stabilize_observations(&[], &cfg()).is_empty());
    }

    #[test]
    fn one_second_cue() {
        let stream: Vec<_> = (0..30).map(|f| obs(f, "HELLO")).collect();
        assert_eq!(reconstruct_cues(&stream, &cfg()), vec![CaptionCue::new(0, 0, 1000, "HELLO")]);
    }

    #[test]
    fn dropout_is_bridged() {
        let stream: Vec<_> = (0..30).filter(|f| !(14..16).contains(f)).map(|f| obs(f, "HELLO")).collect();
        assert_eq!(reconstruct_cues(&stream, &cfg()), vec![CaptionCue::new(0, 0, 1000, "HELLO")]);
        // four missing frames is one too many
        let stream: Vec<_> = (0..30).filter(|f| !(10..14).contains(f)).map(|f| obs(f, "HELLO")).collect();
        assert_eq!(reconstruct_cues(&stream, &cfg()).len(), 2);
    }

    #[test]
    fn adjacent_texts_give_adjacent_cues() {
        let stream: Vec<_> = (0..60)
            .map(|f| obs(f, if f < 30 { "FIRST CAPTION" } else { "SECOND ONE HERE" }))
            .collect();
        let cues = reconstruct_cues(&stream, &cfg());
        assert_eq!(cues.len(), 2);
        assert_eq!((cues[0].start_ms, cues[0].end_ms), (0, 1000));
        assert_eq!((cues[1].start_ms, cues[1].end_ms), (1000, 2000));
        assert_eq!(cues[1].text, "SECOND ONE HERE");
    }

    #[test]
    fn flash_text_is_discarded_and_glitch_skipped() {
        let mut stream: Vec<_> = (0..40).map(|f| obs(f, "THE NEWS AT SIX TONIGHT")).collect();
        stream[20].text = "XQZ".into();
        stream.push(obs(45, "FLASH"));
        let cues = reconstruct_cues(&stream, &cfg());
        assert_eq!(cues.len(), 1);
        assert_eq!(cues[0].text, "THE NEWS AT SIX TONIGHT");
    }

    #[test]
    fn vote_recovers_text() {
        let texts = ["HELLO WORLD", "HELL0 WORLD", "HELLO W0RLD", "HELLO WORLD"];
        assert_eq!(majority_vote(&texts), "HELLO WORLD");
        // tie goes to the longest read
        assert_eq!(majority_vote(&["AB", "AC", "ADE", "ADE"]), "ADE");
        assert_eq!(majority_vote(&["AB", "AC"]), "AB");
        assert_eq!(majority_vote(&[]), "");
    }

    #[test]
    fn dump_reading() {
        let dump = concat!(
            r#"{"frame": 0, "ts_ms": 0, "text": "HI", "bbox": [1, 2, 3, 4], "conf": 0.9}"#, "\n",
            "not json\n",
            r#"{"frame": 0, "ts_ms": 40, "text": "HI", "bbox": [1, 2, 3, 4], "conf": 0.9}"#, "\n",
            r#"{"frame": 1, "ts_ms": 33, "text": "HI", "bbox": [1, 2, 0, 4], "conf": 0.9}"#, "\n",
        );
        let (obs, diags) = read_ocr_dump(dump.as_bytes()).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].bbox, BBox::new(1, 2, 3, 4));
        assert_eq!(diags.iter().map(|d| d.line).collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn config_validation() {
        assert!(TrackConfig::for_fps(0.0).is_err());
        let mut c = cfg();
        c.min_cue_frames = 0;
        assert!(c.validate().is_err());
        assert!(cfg().validate().is_ok());
    }
}
