//! Seeded synthetic data and independent reference implementations used by
//! the test suites. Nothing here is used by the shipping crates.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand::rngs::StdRng;

use sdw_core::caption::CaptionCue;
use sdw_core::ocr::{BBox, OcrObservation};
use sdw_core::pose::{Group, PoseFrame, PoseSequence, Point};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

const WORDS: &[&str] = &[
    "the", "change", "will", "happen", "in", "third", "quarter", "of", "this", "year", "markets",
    "rallied", "after", "news", "that", "inflation", "slowed", "rain", "is", "expected", "across",
    "north", "tonight", "officials", "said", "new", "school", "opens", "next", "week", "players",
    "won", "their", "game", "on", "sunday", "well-known", "it's", "city", "council", "voted",
    "for", "a", "budget", "plan", "we", "don't", "know", "yet", "president", "spoke", "with",
];

/// A lowercase sentence of `3..=max_words` words, capitalised, with commas
/// sprinkled in and a terminal `.`, `?` or `!`.
pub fn random_sentence(rng: &mut impl Rng, max_words: usize) -> String {
    let n = rng.random_range(3..=max_words.max(3));
    let mut words: Vec<String> = (0..n)
        .map(|_| WORDS.choose(rng).unwrap().to_string())
        .collect();
    for w in words.iter_mut().take(n - 1) {
        if rng.random_bool(0.1) {
            w.push(',');
        }
    }
    let mut first = words[0].chars();
    let head = first.next().unwrap().to_uppercase().collect::<String>();
    words[0] = head + first.as_str();
    let mut sentence = words.join(" ");
    sentence.push(*['.', '?', '!'].choose(rng).unwrap());
    sentence
}

/// Splits each sentence at random word boundaries into cues with gaps of at
/// most `max_gap_ms`. Returns the cues and, per sentence, its hull
/// `(start_ms, end_ms)`.
pub fn fragment_sentences(
    rng: &mut impl Rng,
    sentences: &[String],
    max_gap_ms: u64,
) -> (Vec<CaptionCue>, Vec<(u64, u64)>) {
    let mut cues = Vec::new();
    let mut hulls = Vec::new();
    let mut t = rng.random_range(0..5_000);
    for sentence in sentences {
        let words: Vec<&str> = sentence.split(' ').collect();
        let pieces = rng.random_range(1..=words.len().min(6));
        let mut cuts: Vec<usize> = (1..words.len()).collect();
        cuts.shuffle(rng);
        let mut cuts: Vec<usize> = cuts.into_iter().take(pieces - 1).collect();
        cuts.sort_unstable();
        cuts.push(words.len());
        let start = t;
        let mut from = 0;
        for to in cuts {
            let end = t + rng.random_range(200..=1_500);
            cues.push(CaptionCue::new(cues.len(), t, end, words[from..to].join(" ")));
            from = to;
            t = end + rng.random_range(0..=max_gap_ms);
        }
        hulls.push((start, cues.last().unwrap().end_ms));
    }
    (cues, hulls)
}

/// Random valid cue lists for serialization round trips: sorted starts,
/// normalized text including characters that need escaping, optional
/// settings.
pub fn random_cue_list(rng: &mut impl Rng) -> Vec<CaptionCue> {
    const PIECES: &[&str] = &[
        "hello", "A&B", "<b>", "x > y", "-->", "café", "♪", "[MUSIC]", "&amp;", "NOTE", "WEBVTT",
        "Dr.", "it's", "\"quoted\"", "1 < 2", "ünïcödé", "a;b", "end.", "…",
    ];
    let n = rng.random_range(0..40);
    let mut start = 0u64;
    (0..n)
        .map(|index| {
            start += rng.random_range(0..4_000);
            let words = rng.random_range(1..8);
            let text = (0..words)
                .map(|_| *PIECES.choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ");
            let mut cue = CaptionCue::new(index, start, start + rng.random_range(1..10_000), text);
            if rng.random_bool(0.2) {
                cue.raw_settings = Some(
                    ["align:start", "position:10% line:0", "region:lower size:80%"]
                        .choose(rng)
                        .unwrap()
                        .to_string(),
                );
            }
            cue
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Zipf corpus
// ---------------------------------------------------------------------------

/// Sentences drawn from a Zipf(`s`) distribution over a synthetic
/// vocabulary, together with the exact count of every emitted token.
pub struct ZipfCorpus {
    pub sentences: Vec<String>,
    pub counts: BTreeMap<String, u64>,
}

pub fn zipf_vocabulary(size: usize) -> Vec<String> {
    const SYLLABLES: &[&str] = &["ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "de", "vu"];
    (0..size)
        .map(|i| {
            let mut word = String::new();
            let mut n = i + 1;
            while n > 0 {
                word.push_str(SYLLABLES[n % 10]);
                n /= 10;
            }
            if i % 7 == 3 {
                word.push_str("-ba");
            }
            word
        })
        .collect()
}

pub fn zipf_corpus(rng: &mut impl Rng, n_sentences: usize, vocab: usize, s: f64) -> ZipfCorpus {
    let words = zipf_vocabulary(vocab);
    let weights: Vec<f64> = (1..=vocab).map(|r| 1.0 / (r as f64).powf(s)).collect();
    let dist = WeightedIndex::new(&weights).unwrap();
    let mut counts = BTreeMap::new();
    let sentences = (0..n_sentences)
        .map(|_| {
            let n = rng.random_range(3..=20);
            let tokens: Vec<&str> = (0..n).map(|_| words[dist.sample(rng)].as_str()).collect();
            for t in &tokens {
                *counts.entry(t.to_string()).or_insert(0) += 1;
            }
            // decorate so the tokenizer has something to strip
            let mut text = tokens.join(" ");
            let mut first = text.chars();
            let head = first.next().unwrap().to_uppercase().collect::<String>();
            text = head + first.as_str();
            text.push('.');
            text
        })
        .collect();
    ZipfCorpus { sentences, counts }
}

// ---------------------------------------------------------------------------
// OCR
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TruthCue {
    pub text: String,
    pub first_frame: u64,
    pub last_frame: u64,
}

pub struct NoisyTrack {
    pub fps: f64,
    pub truth: Vec<TruthCue>,
    pub stream: Vec<OcrObservation>,
}

impl NoisyTrack {
    pub fn ts(&self, frame: u64) -> u64 {
        (frame as f64 * 1000.0 / self.fps).round() as u64
    }
}

const OCR_WORDS: &[&str] = &[
    "the", "change", "will", "happen", "in", "third", "quarter", "of", "this", "year", "storm",
    "warning", "remains", "for", "coastal", "areas", "until", "friday", "morning", "mayor",
    "announced", "plans", "to", "expand", "public", "transit",
];

/// Noise levels for [`noisy_track`].
#[derive(Debug, Clone, Copy)]
pub struct OcrNoise {
    pub substitution_rate: f64,
    pub dropout_rate: f64,
    pub max_dropout: u64,
    pub jitter_rate: f64,
    pub spurious_rate: f64,
}

impl Default for OcrNoise {
    fn default() -> Self {
        Self {
            substitution_rate: 0.05,
            dropout_rate: 0.02,
            max_dropout: 3,
            jitter_rate: 0.02,
            spurious_rate: 0.5,
        }
    }
}

/// A caption track of 3–10 cues (texts of at least 20 characters) and the
/// observation stream an OCR engine might produce for it.
///
/// Noise: single-character substitutions, interior dropouts of up to
/// `max_dropout` frames, one-frame spurious reads in the gaps between
/// captions, and caption boxes displaced well beyond the tracking tolerance.
pub fn noisy_track(rng: &mut impl Rng, fps: f64, noise: OcrNoise) -> NoisyTrack {
    let band = BBox::new(120, 620, 1040, 64);
    let n = rng.random_range(3..=10);
    let mut truth: Vec<TruthCue> = Vec::new();
    let mut frame = rng.random_range(0..30);
    for _ in 0..n {
        let text = loop {
            let words = rng.random_range(4..=9);
            let t = (0..words)
                .map(|_| *OCR_WORDS.choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ");
            if t.len() >= 20 && truth.last().is_none_or(|p| p.text != t) {
                break t;
            }
        };
        let len = rng.random_range(20..=120);
        truth.push(TruthCue {
            text,
            first_frame: frame,
            last_frame: frame + len - 1,
        });
        frame += len + rng.random_range(6..=40);
    }

    let track = NoisyTrack {
        fps,
        truth,
        stream: Vec::new(),
    };
    let mut stream = Vec::new();
    let read = |frame: u64, text: String, bbox: BBox, conf: f64| OcrObservation {
        frame_index: frame,
        timestamp_ms: track.ts(frame),
        text,
        bbox,
        confidence: conf,
    };
    for (k, cue) in track.truth.iter().enumerate() {
        let len = cue.last_frame - cue.first_frame + 1;
        let mut dropped = vec![false; len as usize];
        let mut pos = 2;
        while pos + 3 < len {
            if rng.random_bool(noise.dropout_rate) {
                let run = rng.random_range(1..=noise.max_dropout).min(len - 3 - pos);
                for d in pos..pos + run {
                    dropped[d as usize] = true;
                }
                pos += run + 2;
            } else {
                pos += 1;
            }
        }
        for offset in 0..len {
            if dropped[offset as usize] {
                continue;
            }
            let mut text = cue.text.clone();
            if rng.random_bool(noise.substitution_rate) {
                text = substitute_one(rng, &text);
            }
            let mut bbox = band;
            if rng.random_bool(noise.jitter_rate) {
                bbox.x += rng.random_range(40..120) * if rng.random_bool(0.5) { 1 } else { -1 };
                bbox.y += rng.random_range(-30..30);
            } else {
                bbox.x += rng.random_range(-2..=2);
                bbox.y += rng.random_range(-2..=2);
            }
            let conf = rng.random_range(0.75..0.99);
            stream.push(read(cue.first_frame + offset, text, bbox, conf));
        }
        // a one-frame scene-transition read between this caption and the next
        if let Some(next) = track.truth.get(k + 1) {
            if rng.random_bool(noise.spurious_rate) {
                let f = rng.random_range(cue.last_frame + 1..next.first_frame);
                let junk = ["BREAKING NEWS LIVE", "il1l |l1i", "WEATHER 7 DAY", "SPORTS TONIGHT"]
                    .choose(rng)
                    .unwrap()
                    .to_lowercase();
                stream.push(read(f, junk, band, rng.random_range(0.6..0.95)));
            }
        }
    }
    stream.sort_by_key(|o| o.frame_index);
    NoisyTrack { stream, ..track }
}

fn substitute_one(rng: &mut impl Rng, text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let positions: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_alphabetic()).collect();
    let &i = positions.choose(rng).unwrap();
    let replacement = loop {
        let c = *b"abcdefghijklmnopqrstuvwxyz01".choose(rng).unwrap() as char;
        if c != chars[i] {
            break c;
        }
    };
    chars[i] = replacement;
    chars.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| {
            [
                rng.random_range(-0.5f32..=1.5),
                rng.random_range(-0.5f32..=1.5),
                rng.random_range(-3.0f32..3.0),
            ]
        })
        .collect()
}

/// Arbitrary valid sequence: random presence, coordinates anywhere in the
/// allowed range, random quality, strictly increasing timestamps.
pub fn random_sequence(rng: &mut impl Rng, sentence_id: &str, frames: usize) -> PoseSequence {
    let fps = *[24.0f32, 25.0, 29.97, 30.0, 50.0, 60.0].choose(rng).unwrap();
    let mut seq = PoseSequence::new(sentence_id, fps);
    let mut ts = rng.random_range(0..1_000u32);
    for _ in 0..frames {
        let mut frame = PoseFrame::empty(ts);
        for group in Group::ALL {
            if rng.random_bool(0.7) {
                let pts = random_points(rng, group.len());
                frame.set_group(group, &pts, rng.random_range(0.0..=1.0));
            }
        }
        seq.frames.push(frame);
        ts += rng.random_range(1..80);
    }
    seq
}

/// Every group present in every frame, each group translating as a rigid
/// body by at most `max_step` per frame inside `[0.2, 0.8]²`.
pub fn smooth_sequence(rng: &mut impl Rng, sentence_id: &str, frames: usize, max_step: f64) -> PoseSequence {
    let mut seq = PoseSequence::new(sentence_id, 30.0);
    let shapes: Vec<Vec<Point>> = Group::ALL
        .iter()
        .map(|g| {
            (0..g.len())
                .map(|_| {
                    [
                        rng.random_range(-0.05f32..0.05),
                        rng.random_range(-0.05f32..0.05),
                        rng.random_range(-0.5f32..0.5),
                    ]
                })
                .collect()
        })
        .collect();
    let mut centres: Vec<(f64, f64)> = Group::ALL
        .iter()
        .map(|_| (rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)))
        .collect();
    for i in 0..frames {
        let mut frame = PoseFrame::empty(i as u32 * 33);
        for (g, group) in Group::ALL.iter().enumerate() {
            if i > 0 {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let step = rng.random_range(0.0..=max_step);
                let (x, y) = centres[g];
                centres[g] = (
                    (x + step * angle.cos()).clamp(0.2, 0.8),
                    (y + step * angle.sin()).clamp(0.2, 0.8),
                );
            }
            let (cx, cy) = centres[g];
            let pts: Vec<Point> = shapes[g]
                .iter()
                .map(|p| [p[0] + cx as f32, p[1] + cy as f32, p[2]])
                .collect();
            frame.set_group(*group, &pts, 0.9);
        }
        seq.frames.push(frame);
    }
    seq
}

/// Displaces the `group` in randomly chosen frames (single frames and short
/// bursts) by `offset` and blanks a few frames. Returns the displaced frame
/// indices.
pub fn inject_jumps(rng: &mut impl Rng, seq: &mut PoseSequence, group: Group, offset: f64) -> Vec<usize> {
    let n = seq.frames.len();
    let mut injected = Vec::new();
    let events = rng.random_range(1..=6);
    for _ in 0..events {
        let start = rng.random_range(0..n);
        let len = rng.random_range(1..=3).min(n - start);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let (dx, dy) = ((offset * angle.cos()) as f32, (offset * angle.sin()) as f32);
        for i in start..start + len {
            let frame = &mut seq.frames[i];
            if !frame.is_present(group) || injected.contains(&i) {
                continue;
            }
            let pts: Vec<Point> = frame.group(group).iter().map(|p| [p[0] + dx, p[1] + dy, p[2]]).collect();
            let q = frame.quality()[group.index()];
            frame.set_group(group, &pts, q);
            injected.push(i);
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let i = rng.random_range(0..n);
        if !injected.contains(&i) {
            seq.frames[i].clear_group(group);
        }
    }
    injected.sort_unstable();
    injected
}

/// Reference outlier scan.
///
/// Walks the frames keeping the index of the last accepted frame in which
/// the group is present. A frame is flagged when the group's mean position
/// is further from that frame's than `max_velocity` per elapsed frame. The
/// first present frame is flagged only when it is too far from the second
/// present frame while the second and third agree.
pub fn brute_force_flags(seq: &PoseSequence, group: Group, max_velocity: f64) -> Vec<bool> {
    let mean = |i: usize| -> Option<(f64, f64)> {
        let f = &seq.frames[i];
        if !f.is_present(group) {
            return None;
        }
        let pts = f.group(group);
        let x: f64 = pts.iter().map(|p| p[0] as f64).sum::<f64>() / pts.len() as f64;
        let y: f64 = pts.iter().map(|p| p[1] as f64).sum::<f64>() / pts.len() as f64;
        Some((x, y))
    };
    let ok = |a: usize, b: usize| {
        let (pa, pb) = (mean(a).unwrap(), mean(b).unwrap());
        ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt() <= max_velocity * (b - a) as f64
    };
    let n = seq.frames.len();
    let mut flags = vec![false; n];
    let present: Vec<usize> = (0..n).filter(|&i| mean(i).is_some()).collect();
    if present.len() < 2 {
        return flags;
    }
    if present.len() >= 3 && !ok(present[0], present[1]) && ok(present[1], present[2]) {
        flags[present[0]] = true;
    }
    for (k, &i) in present.iter().enumerate().skip(1) {
        // scan back for the most recent accepted present frame
        let last_accepted = present[..k].iter().rev().find(|&&j| !flags[j]);
        if let Some(&j) = last_accepted {
            flags[i] = !ok(j, i);
        }
    }
    flags
}
