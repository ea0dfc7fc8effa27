//! Building blocks for turning captioned signing video into English-labelled
//! pose-sequence sentence records.
//!
//! The pipeline runs roughly in module order:
//!
//! * [`caption`] parses WebVTT tracks and merges caption fragments into sentences.
//! * [`ocr`] rebuilds a caption track from per-frame OCR observations when the
//!   captions are burned into the video.
//! * [`segment`] turns sentence spans into a cut plan for an external media tool.
//! * [`pose`] holds the landmark schema, the bounding-box and outlier filters,
//!   and the `SDWP` binary codec.
//! * [`store`] persists sentence records, computes statistics and exports releases.

pub mod caption;
pub mod ocr;
pub mod pose;
pub mod segment;
pub mod store;

use std::fmt;

/// A recoverable problem found while reading an input stream.
///
/// Parsers skip the offending item and keep going; diagnostics let the caller
/// report what was skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line number in the input.
    pub line: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}
