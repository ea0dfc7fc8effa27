//! Condensed pose sequences.
//!
//! A frame holds 534 landmarks: 24 body points, 21 per hand and 468 face
//! mesh points. Each point is `(x, y, z)` with `x`/`y` normalized to the
//! video frame and `z` the backend's relative depth, stored verbatim.
//!
//! Sequences arrive as JSON lines from the landmark backend, go through
//! [`bbox_filter`] and [`outlier_filter`], and are stored with
//! [`encode_pose`] in the `SDWP` v1 layout:
//!
//! ```text
//! header (22 bytes, little-endian)
//!   "SDWP" | version u16 | body u16 | hand u16 | face u16 | fps f32 | frame_count u32 | 2 zero bytes
//! frame (6416 bytes)
//!   timestamp_ms u32 | presence u8 | 3 zero bytes | 534 x (x f32, y f32, z f32)
//! ```
//!
//! Presence bits are body, left hand, right hand, face from bit 0 up. Absent
//! groups are zero-filled. The layout carries landmark coordinates only.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Diagnostic;

pub const SCHEMA_VERSION: u16 = 1;
pub const BODY_POINTS: usize = 24;
pub const HAND_POINTS: usize = 21;
pub const FACE_POINTS: usize = 468;
pub const POINTS_PER_FRAME: usize = BODY_POINTS + 2 * HAND_POINTS + FACE_POINTS;

pub const MAGIC: [u8; 4] = *b"SDWP";
pub const HEADER_BYTES: usize = 22;
pub const FRAME_HEADER_BYTES: usize = 8;
pub const FRAME_BYTES: usize = FRAME_HEADER_BYTES + POINTS_PER_FRAME * 12;

/// Allowed range for `x` and `y` of present landmarks.
pub const COORD_RANGE: std::ops::RangeInclusive<f32> = -0.5..=1.5;

pub type Point = [f32; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Body,
    LeftHand,
    RightHand,
    Face,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Body, Group::LeftHand, Group::RightHand, Group::Face];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn len(self) -> usize {
        match self {
            Group::Body => BODY_POINTS,
            Group::LeftHand | Group::RightHand => HAND_POINTS,
            Group::Face => FACE_POINTS,
        }
    }

    /// Position of this group's points within a frame.
    pub fn range(self) -> Range<usize> {
        let start = match self {
            Group::Body => 0,
            Group::LeftHand => BODY_POINTS,
            Group::RightHand => BODY_POINTS + HAND_POINTS,
            Group::Face => BODY_POINTS + 2 * HAND_POINTS,
        };
        start..start + self.len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Body => "body",
            Group::LeftHand => "left_hand",
            Group::RightHand => "right_hand",
            Group::Face => "face",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("not an SDWP stream (magic {found:?})")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported SDWP version {0}")]
    UnsupportedVersion(u16),
    #[error("landmark counts {body}/{hand}/{face} do not match schema version 1")]
    SchemaMismatch { body: u16, hand: u16, face: u16 },
    #[error("truncated at byte {offset}: needed {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{count} unexpected bytes after the last frame at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("frame {frame}: {reason}")]
    Invariant { frame: usize, reason: String },
    #[error("invalid header: {0}")]
    InvalidHeader(&'static str),
    #[error("pose stream has no valid frames")]
    EmptySequence,
    #[error("frame range {from}..={to} is outside 0..{frame_count}")]
    FrameRange { from: u32, to: u32, frame_count: u32 },
    #[error("invalid filter config: {0}")]
    InvalidConfig(&'static str),
    #[error("i/o: {0}")]
    Io(String),
}

impl PoseError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            PoseError::BadMagic { .. } => "bad_magic",
            PoseError::UnsupportedVersion(_) => "unsupported_version",
            PoseError::SchemaMismatch { .. } => "schema_mismatch",
            PoseError::Truncated { .. } => "truncated",
            PoseError::TrailingBytes { .. } => "trailing_bytes",
            PoseError::Invariant { .. } => "invariant",
            PoseError::InvalidHeader(_) => "invalid_header",
            PoseError::EmptySequence => "empty_sequence",
            PoseError::FrameRange { .. } => "frame_range",
            PoseError::InvalidConfig(_) => "invalid_config",
            PoseError::Io(_) => "io",
        }
    }
}

/// One frame of landmarks.
///
/// An absent group has all-zero points and zero quality.
#[derive(Clone, PartialEq)]
pub struct PoseFrame {
    pub timestamp_ms: u32,
    points: Vec<Point>,
    presence: [bool; 4],
    quality: [f32; 4],
}

impl fmt::Debug for PoseFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let centroids: Vec<_> = Group::ALL.iter().map(|&g| self.centroid(g)).collect();
        f.debug_struct("PoseFrame")
            .field("timestamp_ms", &self.timestamp_ms)
            .field("presence", &self.presence)
            .field("quality", &self.quality)
            .field("centroids", &centroids)
            .finish_non_exhaustive()
    }
}

impl PoseFrame {
    /// A frame with every group absent.
    pub fn empty(timestamp_ms: u32) -> Self {
        Self {
            timestamp_ms,
            points: vec![[0.0; 3]; POINTS_PER_FRAME],
            presence: [false; 4],
            quality: [0.0; 4],
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn group(&self, group: Group) -> &[Point] {
        &self.points[group.range()]
    }

    pub fn is_present(&self, group: Group) -> bool {
        self.presence[group.index()]
    }

    pub fn presence(&self) -> [bool; 4] {
        self.presence
    }

    pub fn quality(&self) -> [f32; 4] {
        self.quality
    }

    /// Marks `group` present with the given points.
    ///
    /// # Panics
    /// If `points.len()` differs from the group size.
    pub fn set_group(&mut self, group: Group, points: &[Point], quality: f32) {
        assert_eq!(points.len(), group.len(), "{} point count", group.name());
        self.points[group.range()].copy_from_slice(points);
        self.presence[group.index()] = true;
        self.quality[group.index()] = quality;
    }

    /// Marks `group` absent and zeroes it.
    pub fn clear_group(&mut self, group: Group) {
        self.points[group.range()].fill([0.0; 3]);
        self.presence[group.index()] = false;
        self.quality[group.index()] = 0.0;
    }

    /// Mean `(x, y)` of a present group.
    pub fn centroid(&self, group: Group) -> Option<(f64, f64)> {
        if !self.is_present(group) {
            return None;
        }
        let pts = self.group(group);
        let n = pts.len() as f64;
        let (sx, sy) = pts
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + f64::from(p[0]), sy + f64::from(p[1])));
        Some((sx / n, sy / n))
    }

    fn presence_bits(&self) -> u8 {
        self.presence
            .iter()
            .enumerate()
            .fold(0, |bits, (i, &p)| bits | (u8::from(p) << i))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.points.len() != POINTS_PER_FRAME {
            return Err(format!("expected {POINTS_PER_FRAME} points, found {}", self.points.len()));
        }
        for group in Group::ALL {
            let pts = self.group(group);
            let q = self.quality[group.index()];
            if self.is_present(group) {
                if !(0.0..=1.0).contains(&q) {
                    return Err(format!("{} quality {q} outside [0, 1]", group.name()));
                }
                let in_range = pts.iter().all(|p| {
                    COORD_RANGE.contains(&p[0]) && COORD_RANGE.contains(&p[1]) && p[2].is_finite()
                });
                if !in_range {
                    return Err(format!("{} has coordinates out of range", group.name()));
                }
            } else if q != 0.0 || pts.iter().flatten().any(|&v| v != 0.0) {
                return Err(format!("absent {} has non-zero data", group.name()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub sentence_id: String,
    pub fps: f32,
    pub frames: Vec<PoseFrame>,
    pub schema_version: u16,
}

impl PoseSequence {
    pub fn new(sentence_id: impl Into<String>, fps: f32) -> Self {
        Self {
            sentence_id: sentence_id.into(),
            fps,
            frames: Vec::new(),
            schema_version: SCHEMA_VERSION,
        }
    }

    pub fn validate(&self) -> Result<(), PoseError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(PoseError::InvalidHeader("fps must be positive"));
        }
        let mut prev: Option<u32> = None;
        for (i, frame) in self.frames.iter().enumerate() {
            frame
                .validate()
                .map_err(|reason| PoseError::Invariant { frame: i, reason })?;
            if prev.is_some_and(|p| frame.timestamp_ms <= p) {
                return Err(PoseError::Invariant {
                    frame: i,
                    reason: "timestamps not strictly increasing".into(),
                });
            }
            prev = Some(frame.timestamp_ms);
        }
        Ok(())
    }

    /// The sequence as it reads back from `SDWP`: quality is not stored, so
    /// each group's quality becomes 1 when present and 0 when absent.
    pub fn canonicalized(&self) -> Self {
        let mut out = self.clone();
        for frame in &mut out.frames {
            for g in Group::ALL {
                frame.quality[g.index()] = if frame.is_present(g) { 1.0 } else { 0.0 };
            }
        }
        out
    }

    pub fn present_group_count(&self) -> usize {
        self.frames
            .iter()
            .map(|f| f.presence.iter().filter(|&&p| p).count())
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

/// One frame of the backend's JSON-lines stream. A missing or `null` group
/// is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub ts_ms: u32,
    #[serde(default)]
    pub body: Option<Vec<Point>>,
    #[serde(default)]
    pub lh: Option<Vec<Point>>,
    #[serde(default)]
    pub rh: Option<Vec<Point>>,
    #[serde(default)]
    pub face: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<[f32; 4]>,
}

impl WireFrame {
    fn group(&self, group: Group) -> Option<&Vec<Point>> {
        match group {
            Group::Body => self.body.as_ref(),
            Group::LeftHand => self.lh.as_ref(),
            Group::RightHand => self.rh.as_ref(),
            Group::Face => self.face.as_ref(),
        }
    }
}

impl From<&PoseFrame> for WireFrame {
    fn from(frame: &PoseFrame) -> Self {
        let group = |g: Group| frame.is_present(g).then(|| frame.group(g).to_vec());
        WireFrame {
            ts_ms: frame.timestamp_ms,
            body: group(Group::Body),
            lh: group(Group::LeftHand),
            rh: group(Group::RightHand),
            face: group(Group::Face),
            q: Some(frame.quality),
        }
    }
}

/// Builds a frame from the wire form. Groups with out-of-range coordinates
/// are dropped and reported in the returned notes; structural problems
/// reject the frame.
pub fn frame_from_wire(wire: &WireFrame) -> Result<(PoseFrame, Vec<String>), String> {
    let mut frame = PoseFrame::empty(wire.ts_ms);
    let mut notes = Vec::new();
    if let Some(q) = wire.q {
        if q.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("quality values must lie in [0, 1]".into());
        }
    }
    for group in Group::ALL {
        let Some(points) = wire.group(group) else {
            continue;
        };
        if points.len() != group.len() {
            return Err(format!(
                "{} has {} points, expected {}",
                group.name(),
                points.len(),
                group.len()
            ));
        }
        let in_range = points
            .iter()
            .all(|p| COORD_RANGE.contains(&p[0]) && COORD_RANGE.contains(&p[1]));
        if !in_range {
            notes.push(format!("{} dropped: coordinates out of range", group.name()));
            continue;
        }
        let quality = wire.q.map_or(1.0, |q| q[group.index()]);
        frame.set_group(group, points, quality);
    }
    Ok((frame, notes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedPose {
    pub sequence: PoseSequence,
    pub diagnostics: Vec<Diagnostic>,
}

/// Reads a wire-format stream into a sequence, keeping frames in arrival
/// order. Malformed lines and frames whose timestamp does not increase are
/// skipped with a diagnostic.
pub fn ingest_pose_stream(
    reader: impl BufRead,
    sentence_id: &str,
    fps: f32,
) -> Result<IngestedPose, PoseError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(PoseError::InvalidHeader("fps must be positive"));
    }
    let mut sequence = PoseSequence::new(sentence_id, fps);
    let mut diagnostics = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PoseError::Io(e.to_string()))?;
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireFrame = match serde_json::from_str(&line) {
            Ok(w) => w,
            Err(e) => {
                diagnostics.push(Diagnostic::new(line_no, format!("malformed frame: {e}")));
                continue;
            }
        };
        let (frame, notes) = match frame_from_wire(&wire) {
            Ok(parsed) => parsed,
            Err(reason) => {
                diagnostics.push(Diagnostic::new(line_no, format!("malformed frame: {reason}")));
                continue;
            }
        };
        if let Some(prev) = sequence.frames.last() {
            if frame.timestamp_ms <= prev.timestamp_ms {
                diagnostics.push(Diagnostic::new(
                    line_no,
                    format!("timestamp {} does not increase; frame dropped", frame.timestamp_ms),
                ));
                continue;
            }
        }
        diagnostics.extend(notes.into_iter().map(|m| Diagnostic::new(line_no, m)));
        sequence.frames.push(frame);
    }
    if sequence.frames.is_empty() {
        return Err(PoseError::EmptySequence);
    }
    Ok(IngestedPose {
        sequence,
        diagnostics,
    })
}

pub fn write_wire_frames<'a>(
    frames: impl IntoIterator<Item = &'a PoseFrame>,
    mut out: impl Write,
) -> std::io::Result<()> {
    for frame in frames {
        serde_json::to_writer(&mut out, &WireFrame::from(frame))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

/// Expected signer region in normalized coordinates, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub region: Region,
    /// Normalized units per frame.
    pub max_velocity: f64,
    /// Longest run of flagged frames that is interpolated rather than dropped.
    pub max_repair_gap: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            region: Region {
                x_min: 0.05,
                x_max: 0.95,
                y_min: 0.05,
                y_max: 0.95,
            },
            max_velocity: 0.20,
            max_repair_gap: 5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), PoseError> {
        let r = &self.region;
        if !(r.x_min < r.x_max && r.y_min < r.y_max) {
            return Err(PoseError::InvalidConfig("region bounds are not ordered"));
        }
        if !(self.max_velocity.is_finite() && self.max_velocity > 0.0) {
            return Err(PoseError::InvalidConfig("max_velocity must be positive"));
        }
        Ok(())
    }
}

/// Drops every group whose centroid falls outside `cfg.region`.
pub fn bbox_filter(seq: &PoseSequence, cfg: &FilterConfig) -> PoseSequence {
    let mut out = seq.clone();
    for frame in &mut out.frames {
        for group in Group::ALL {
            if frame.centroid(group).is_some_and(|c| !cfg.region.contains(c)) {
                frame.clear_group(group);
            }
        }
    }
    out
}

/// Frames whose `group` centroid moves too fast.
///
/// Each present frame is compared with the last accepted present frame: it
/// is flagged when the centroid moved more than `max_velocity` times the
/// number of frames between them, and accepted otherwise. The first present
/// frame has nothing before it, so it is flagged only when it disagrees with
/// the second present frame while the second agrees with the third.
pub fn outlier_flags(seq: &PoseSequence, group: Group, max_velocity: f64) -> Vec<bool> {
    let mut flags = vec![false; seq.frames.len()];
    let present: Vec<(usize, (f64, f64))> = seq
        .frames
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.centroid(group).map(|c| (i, c)))
        .collect();
    if present.len() < 2 {
        return flags;
    }
    let consistent = |a: (usize, (f64, f64)), b: (usize, (f64, f64))| {
        let dist = (b.1 .0 - a.1 .0).hypot(b.1 .1 - a.1 .1);
        dist <= max_velocity * (b.0 - a.0) as f64
    };

    let mut anchor = present[0];
    let mut rest = &present[1..];
    if !consistent(present[0], present[1])
        && present.get(2).is_some_and(|&third| consistent(present[1], third))
    {
        flags[present[0].0] = true;
        anchor = present[1];
        rest = &present[2..];
    }
    for &p in rest {
        if consistent(anchor, p) {
            anchor = p;
        } else {
            flags[p.0] = true;
        }
    }
    flags
}

/// Repairs or drops fast-moving groups.
///
/// For each group, runs of flagged frames (see [`outlier_flags`]) with an
/// accepted present frame on both sides and at most `max_repair_gap` frames
/// are replaced by per-point linear interpolation between those neighbours.
/// Other flagged frames lose the group. Absent frames stay absent.
pub fn outlier_filter(seq: &PoseSequence, cfg: &FilterConfig) -> PoseSequence {
    let mut out = seq.clone();
    for group in Group::ALL {
        let flags = outlier_flags(seq, group, cfg.max_velocity);
        let present: Vec<usize> = (0..seq.frames.len())
            .filter(|&i| seq.frames[i].is_present(group))
            .collect();

        let mut k = 0;
        while k < present.len() {
            if !flags[present[k]] {
                k += 1;
                continue;
            }
            let run_start = k;
            while k < present.len() && flags[present[k]] {
                k += 1;
            }
            let run = &present[run_start..k];
            let left = run_start.checked_sub(1).map(|j| present[j]);
            let right = present.get(k).copied();
            match (left, right) {
                (Some(l), Some(r)) if run.len() <= cfg.max_repair_gap => {
                    for &f in run {
                        let t = (f - l) as f64 / (r - l) as f64;
                        let interpolated = lerp_group(&seq.frames[l], &seq.frames[r], group, t);
                        let quality = out.frames[f].quality[group.index()];
                        out.frames[f].set_group(group, &interpolated, quality);
                    }
                }
                _ => {
                    for &f in run {
                        out.frames[f].clear_group(group);
                    }
                }
            }
        }
    }
    out
}

fn lerp_group(a: &PoseFrame, b: &PoseFrame, group: Group, t: f64) -> Vec<Point> {
    a.group(group)
        .iter()
        .zip(b.group(group))
        .map(|(pa, pb)| {
            std::array::from_fn(|d| {
                let (va, vb) = (f64::from(pa[d]), f64::from(pb[d]));
                (va + (vb - va) * t) as f32
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// SDWP codec
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdwpHeader {
    pub version: u16,
    pub fps: f32,
    pub frame_count: u32,
}

impl SdwpHeader {
    /// Nominal duration from frame count and rate.
    pub fn duration_ms(&self) -> u64 {
        (f64::from(self.frame_count) * 1000.0 / f64::from(self.fps)).round() as u64
    }

    /// Exact byte length of a stream with this header.
    pub fn stream_len(&self) -> usize {
        HEADER_BYTES + self.frame_count as usize * FRAME_BYTES
    }
}

pub fn encode_pose(seq: &PoseSequence) -> Result<Vec<u8>, PoseError> {
    if seq.schema_version != SCHEMA_VERSION {
        return Err(PoseError::UnsupportedVersion(seq.schema_version));
    }
    seq.validate()?;
    let frame_count = u32::try_from(seq.frames.len())
        .map_err(|_| PoseError::InvalidHeader("too many frames"))?;

    let mut buf = Vec::with_capacity(HEADER_BYTES + seq.frames.len() * FRAME_BYTES);
    buf.extend_from_slice(&MAGIC);
    for v in [SCHEMA_VERSION, BODY_POINTS as u16, HAND_POINTS as u16, FACE_POINTS as u16] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&seq.fps.to_le_bytes());
    buf.extend_from_slice(&frame_count.to_le_bytes());
    buf.extend_from_slice(&[0, 0]);

    for frame in &seq.frames {
        buf.extend_from_slice(&frame.timestamp_ms.to_le_bytes());
        buf.extend_from_slice(&[frame.presence_bits(), 0, 0, 0]);
        for group in Group::ALL {
            let present = frame.is_present(group);
            for point in frame.group(group) {
                for v in point {
                    let v = if present { *v } else { 0.0 };
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    Ok(buf)
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Reads and checks the 22-byte header. `bytes` may be just the header.
pub fn read_header(bytes: &[u8]) -> Result<SdwpHeader, PoseError> {
    let magic_len = bytes.len().min(MAGIC.len());
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(PoseError::BadMagic {
            found: bytes[..magic_len].to_vec(),
        });
    }
    if bytes.len() < HEADER_BYTES {
        return Err(PoseError::Truncated {
            offset: 0,
            needed: HEADER_BYTES,
            available: bytes.len(),
        });
    }
    let version = u16_at(bytes, 4);
    if version != SCHEMA_VERSION {
        return Err(PoseError::UnsupportedVersion(version));
    }
    let (body, hand, face) = (u16_at(bytes, 6), u16_at(bytes, 8), u16_at(bytes, 10));
    if (body as usize, hand as usize, face as usize) != (BODY_POINTS, HAND_POINTS, FACE_POINTS) {
        return Err(PoseError::SchemaMismatch { body, hand, face });
    }
    let fps = f32_at(bytes, 12);
    if !(fps.is_finite() && fps > 0.0) {
        return Err(PoseError::InvalidHeader("fps must be positive"));
    }
    if bytes[20..HEADER_BYTES] != [0, 0] {
        return Err(PoseError::InvalidHeader("reserved header bytes are not zero"));
    }
    Ok(SdwpHeader {
        version,
        fps,
        frame_count: u32_at(bytes, 16),
    })
}

/// Decodes one frame record. `index` is only used for error reporting.
pub fn decode_frame(record: &[u8], index: usize) -> Result<PoseFrame, PoseError> {
    assert_eq!(record.len(), FRAME_BYTES, "frame record size");
    let invariant = |reason: String| PoseError::Invariant {
        frame: index,
        reason,
    };
    let bits = record[4];
    if bits & 0xF0 != 0 {
        return Err(invariant(format!("unknown presence bits {bits:#04x}")));
    }
    if record[5..8] != [0, 0, 0] {
        return Err(invariant("reserved bytes are not zero".into()));
    }
    let mut frame = PoseFrame::empty(u32_at(record, 0));
    for group in Group::ALL {
        let present = bits & (1 << group.index()) != 0;
        let range = group.range();
        let base = FRAME_HEADER_BYTES + range.start * 12;
        let raw = &record[base..base + range.len() * 12];
        if present {
            let points: Vec<Point> = raw
                .chunks_exact(12)
                .map(|c| [f32_at(c, 0), f32_at(c, 4), f32_at(c, 8)])
                .collect();
            frame.set_group(group, &points, 1.0);
        } else if raw.iter().any(|&b| b != 0) {
            return Err(invariant(format!("absent {} has non-zero data", group.name())));
        }
    }
    frame.validate().map_err(invariant)?;
    Ok(frame)
}

/// Inverse of [`encode_pose`]. `SDWP` does not store the sentence id, so the
/// caller supplies it (normally from the file name).
pub fn decode_pose(bytes: &[u8], sentence_id: impl Into<String>) -> Result<PoseSequence, PoseError> {
    let header = read_header(bytes)?;
    let frame_count = header.frame_count as usize;
    let expected = header.stream_len();
    if bytes.len() < expected {
        let complete = (bytes.len() - HEADER_BYTES) / FRAME_BYTES;
        let offset = HEADER_BYTES + complete * FRAME_BYTES;
        return Err(PoseError::Truncated {
            offset,
            needed: FRAME_BYTES,
            available: bytes.len() - offset,
        });
    }
    if bytes.len() > expected {
        return Err(PoseError::TrailingBytes {
            offset: expected,
            count: bytes.len() - expected,
        });
    }
    let mut seq = PoseSequence::new(sentence_id, header.fps);
    seq.frames.reserve(frame_count);
    for (i, record) in bytes[HEADER_BYTES..].chunks_exact(FRAME_BYTES).enumerate() {
        let frame = decode_frame(record, i)?;
        if let Some(prev) = seq.frames.last() {
            if frame.timestamp_ms <= prev.timestamp_ms {
                return Err(PoseError::Invariant {
                    frame: i,
                    reason: "timestamps not strictly increasing".into(),
                });
            }
        }
        seq.frames.push(frame);
    }
    Ok(seq)
}
