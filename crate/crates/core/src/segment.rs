//! Clip manifests and sentence cut plans.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption::SentenceSpan;

pub const CUTLIST_HEADER: &str = "# sdw-cutlist v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptionSource {
    Vtt,
    EmbeddedOcr,
}

/// Identity and timing of one source video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub clip_id: String,
    pub media_uri: String,
    pub duration_ms: u64,
    pub fps: f64,
    pub caption_source: CaptionSource,
    pub signer_id: String,
    pub channel_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("invalid manifest field `{field}`: {reason}")]
    InvalidManifest { field: &'static str, reason: String },
    #[error("sentence {sentence_id} lies outside the clip ({start_ms}..{end_ms} ms, clip is {duration_ms} ms)")]
    OutOfBounds {
        sentence_id: String,
        start_ms: u64,
        end_ms: u64,
        duration_ms: u64,
    },
    #[error("invalid plan parameters: {0}")]
    InvalidParams(&'static str),
}

pub fn is_valid_clip_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

pub fn validate_manifest(manifest: ClipManifest) -> Result<ClipManifest, SegmentError> {
    let invalid = |field, reason: &str| SegmentError::InvalidManifest {
        field,
        reason: reason.to_owned(),
    };
    if !is_valid_clip_id(&manifest.clip_id) {
        return Err(invalid("clip_id", "must match [A-Za-z0-9_-]+"));
    }
    if manifest.duration_ms == 0 {
        return Err(invalid("duration_ms", "must be positive"));
    }
    if !(manifest.fps.is_finite() && manifest.fps > 0.0) {
        return Err(invalid("fps", "must be positive"));
    }
    Ok(manifest)
}

/// `<clip_id>-<ordinal>` with a zero-padded, 0-based ordinal.
pub fn sentence_id(clip_id: &str, ordinal: usize) -> String {
    format!("{clip_id}-{ordinal:04}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentFlag {
    Clamped,
    TooShort,
    TooLong,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutEntry {
    pub sentence_id: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub start_frame: u64,
    pub end_frame: u64,
    pub flags: BTreeSet<SegmentFlag>,
}

impl CutEntry {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    pub fn has(&self, flag: SegmentFlag) -> bool {
        self.flags.contains(&flag)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutPlan {
    pub entries: Vec<CutEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanParams {
    pub pad_ms: u64,
    pub min_ms: u64,
    pub max_ms: u64,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            pad_ms: 200,
            min_ms: 500,
            max_ms: 30_000,
        }
    }
}

/// Pads each span, clamps it to the clip and converts it to outer frame
/// bounds. Sentence ids follow span order.
pub fn plan_segments(
    spans: &[SentenceSpan],
    manifest: &ClipManifest,
    params: PlanParams,
) -> Result<CutPlan, SegmentError> {
    if params.min_ms > params.max_ms {
        return Err(SegmentError::InvalidParams("min_ms exceeds max_ms"));
    }
    let duration = manifest.duration_ms;
    let mut entries = Vec::with_capacity(spans.len());
    for (ordinal, span) in spans.iter().enumerate() {
        let id = sentence_id(&manifest.clip_id, ordinal);
        if span.start_ms >= duration || span.end_ms <= span.start_ms {
            return Err(SegmentError::OutOfBounds {
                sentence_id: id,
                start_ms: span.start_ms,
                end_ms: span.end_ms,
                duration_ms: duration,
            });
        }
        let mut flags = BTreeSet::new();
        let padded_start = span.start_ms.checked_sub(params.pad_ms);
        let padded_end = span.end_ms.saturating_add(params.pad_ms);
        let start_ms = padded_start.unwrap_or(0);
        let end_ms = padded_end.min(duration);
        if padded_start.is_none() || padded_end > duration {
            flags.insert(SegmentFlag::Clamped);
        }
        let length = end_ms - start_ms;
        if length < params.min_ms {
            flags.insert(SegmentFlag::TooShort);
        }
        if length > params.max_ms {
            flags.insert(SegmentFlag::TooLong);
        }
        entries.push(CutEntry {
            sentence_id: id,
            start_ms,
            end_ms,
            start_frame: start_frame(start_ms, manifest.fps),
            end_frame: end_frame(end_ms, manifest.fps),
            flags,
        });
    }
    entries.sort_by_key(|e| e.start_ms);
    Ok(CutPlan { entries })
}

// Exact multiples of the frame period must not drift across a frame
// boundary through floating-point noise.
const FRAME_EPS: f64 = 1e-9;

pub fn start_frame(ms: u64, fps: f64) -> u64 {
    let frames = ms as f64 * fps / 1000.0;
    (frames + FRAME_EPS).floor() as u64
}

pub fn end_frame(ms: u64, fps: f64) -> u64 {
    let frames = ms as f64 * fps / 1000.0;
    (frames - FRAME_EPS).ceil().max(0.0) as u64
}

/// Renders the tab-separated cut list, one line per entry in plan order.
pub fn emit_cut_commands(plan: &CutPlan, manifest: &ClipManifest) -> String {
    let mut out = String::from(CUTLIST_HEADER);
    out.push('\n');
    for entry in &plan.entries {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            manifest.media_uri, entry.start_ms, entry.end_ms, entry.sentence_id
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> ClipManifest {
        ClipManifest {
            clip_id: "news_2022-03-01".into(),
            media_uri: "media/news_2022-03-01.mp4".into(),
            duration_ms: 570_000,
            fps: 30.0,
            caption_source: CaptionSource::Vtt,
            signer_id: "anchor-a".into(),
            channel_id: "channel-1".into(),
        }
    }

    fn span(start_ms: u64, end_ms: u64) -> SentenceSpan {
        SentenceSpan {
            text: "x.".into(),
            start_ms,
            end_ms,
            cue_indices: vec![0],
            terminal: true,
        }
    }

    #[test]
    fn manifest_validation() {
        assert_eq!(validate_manifest(manifest()), Ok(manifest()));
        let mut m = manifest();
        m.fps = 0.0;
        assert!(matches!(
            validate_manifest(m),
            Err(SegmentError::InvalidManifest { field: "fps", .. })
        ));
        let mut m = manifest();
        m.clip_id = "two words".into();
        assert!(matches!(
            validate_manifest(m),
            Err(SegmentError::InvalidManifest { field: "clip_id", .. })
        ));
        let mut m = manifest();
        m.duration_ms = 0;
        assert!(validate_manifest(m).is_err());
    }

    #[test]
    fn manifest_json_shape() {
        let json = serde_json::to_value(manifest()).unwrap();
        assert_eq!(json["caption_source"], "vtt");
        let mut m = manifest();
        m.caption_source = CaptionSource::EmbeddedOcr;
        assert_eq!(serde_json::to_value(m).unwrap()["caption_source"], "embedded-ocr");
    }

    #[test]
    fn padding() {
        let plan = plan_segments(&[span(1000, 6000)], &manifest(), PlanParams::default()).unwrap();
        let e = &plan.entries[0];
        assert_eq!((e.start_ms, e.end_ms), (800, 6200));
        assert!(e.flags.is_empty());
        assert_eq!((e.start_frame, e.end_frame), (24, 186));
        assert_eq!(e.sentence_id, "news_2022-03-01-0000");
    }

    #[test]
    fn clamping() {
        let plan = plan_segments(&[span(50, 4000)], &manifest(), PlanParams::default()).unwrap();
        let e = &plan.entries[0];
        assert_eq!((e.start_ms, e.end_ms), (0, 4200));
        assert!(e.has(SegmentFlag::Clamped));

        let plan = plan_segments(&[span(569_000, 569_950)], &manifest(), PlanParams::default()).unwrap();
        assert_eq!(plan.entries[0].end_ms, 570_000);
        assert!(plan.entries[0].has(SegmentFlag::Clamped));
    }

    #[test]
    fn twenty_six_second_sentence_passes() {
        let plan = plan_segments(&[span(10_000, 36_000)], &manifest(), PlanParams::default()).unwrap();
        assert!(plan.entries[0].flags.is_empty());
    }

    #[test]
    fn duration_gates() {
        let plan =
            plan_segments(&[span(1000, 1050), span(2000, 40_000)], &manifest(), PlanParams::default())
                .unwrap();
        assert!(plan.entries[0].has(SegmentFlag::TooShort));
        assert!(plan.entries[1].has(SegmentFlag::TooLong));
    }

    #[test]
    fn span_outside_clip() {
        let err = plan_segments(&[span(1000, 2000), span(600_000, 601_000)], &manifest(), PlanParams::default())
            .unwrap_err();
        assert!(matches!(err, SegmentError::OutOfBounds { ref sentence_id, .. } if sentence_id == "news_2022-03-01-0001"));
    }

    #[test]
    fn frame_bounds_are_outer() {
        // NTSC: 1001 ms is exactly 30 frames
        let ntsc = 30_000.0 / 1001.0;
        assert_eq!(start_frame(1001, ntsc), 30);
        assert_eq!(end_frame(1001, ntsc), 30);
        assert_eq!(start_frame(1000, ntsc), 29);
        assert_eq!(start_frame(1000, 30.0), 30);
        assert_eq!(end_frame(1000, 30.0), 30);
        assert_eq!(end_frame(1001, 30.0), 31);
        assert_eq!(end_frame(0, 25.0), 0);
    }

    #[test]
    fn cutlist() {
        let m = manifest();
        assert_eq!(emit_cut_commands(&CutPlan::default(), &m), "# sdw-cutlist v1\n");
        let plan = plan_segments(&[span(1000, 6000)], &m, PlanParams::default()).unwrap();
        assert_eq!(
            emit_cut_commands(&plan, &m),
            "# sdw-cutlist v1\nmedia/news_2022-03-01.mp4\t800\t6200\tnews_2022-03-01-0000\n"
        );
    }
}
