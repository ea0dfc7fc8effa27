//! On-disk dataset store.
//!
//! Everything lives in plain files under one data directory:
//!
//! ```text
//! manifests/<clip_id>.json     clip manifest
//! captions/<clip_id>.vtt       caption track
//! sentences/<clip_id>.jsonl    sentence records
//! pose/<sentence_id>.sdwp      pose sequence
//! audit/<clip_id>.jsonl        append-only review log
//! stats/stats.json             last computed statistics
//! ```
//!
//! [`Store`] keeps the records and manifests in memory behind a lock.
//! Writers go through the revision check in [`apply_review_edit`]; readers
//! get consistent snapshots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption::SentenceSpan;
use crate::pose::{self, PoseError, PoseFrame, PoseSequence, SdwpHeader};
use crate::segment::{self, ClipManifest, CutPlan, SegmentError, SegmentFlag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Good,
    Bad,
    Undecided,
}

impl ReviewStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewStatus::Good => "good",
            ReviewStatus::Bad => "bad",
            ReviewStatus::Undecided => "undecided",
        }
    }
}

impl fmt::Display for ReviewStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReviewStatus {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "good" => Ok(ReviewStatus::Good),
            "bad" => Ok(ReviewStatus::Bad),
            "undecided" => Ok(ReviewStatus::Undecided),
            other => Err(StoreError::Validation(format!("unknown status `{other}`"))),
        }
    }
}

/// Which review statuses a computation or export covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusSet(BTreeSet<ReviewStatus>);

impl StatusSet {
    pub fn new(statuses: impl IntoIterator<Item = ReviewStatus>) -> Self {
        Self(statuses.into_iter().collect())
    }

    pub fn all() -> Self {
        Self::new([ReviewStatus::Good, ReviewStatus::Bad, ReviewStatus::Undecided])
    }

    pub fn contains(&self, status: ReviewStatus) -> bool {
        self.0.contains(&status)
    }

    pub fn iter(&self) -> impl Iterator<Item = ReviewStatus> + '_ {
        self.0.iter().copied()
    }
}

/// Good and undecided records; only records marked bad are left out.
impl Default for StatusSet {
    fn default() -> Self {
        Self::new([ReviewStatus::Good, ReviewStatus::Undecided])
    }
}

/// Parses a comma-separated list such as `good,undecided`.
impl FromStr for StatusSet {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .filter(|part| !part.trim().is_empty())
            .map(str::parse)
            .collect::<Result<BTreeSet<_>, _>>()
            .map(Self)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("sentence {0} not found")]
    NotFound(String),
    #[error("revision conflict on {sentence_id}: current revision is {current_revision}")]
    Conflict {
        sentence_id: String,
        current_revision: u64,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("pose files missing for {}", .0.join(", "))]
    MissingPose(Vec<String>),
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Lowercased words with surrounding punctuation removed.
///
/// Text is split on whitespace and each piece is trimmed of leading and
/// trailing characters that are not letters or digits, so apostrophes and
/// hyphens survive only inside a word (`it's`, `well-known`). A typographic
/// apostrophe is folded to `'`. Pieces with nothing left are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|piece| {
            let lowered = piece.to_lowercase().replace('\u{2019}', "'");
            let token = lowered.trim_matches(|c: char| !c.is_alphanumeric());
            (!token.is_empty()).then(|| token.to_owned())
        })
        .collect()
}

pub fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

/// One English sentence of the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sentence_id: String,
    pub clip_id: String,
    pub english_text: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub status: ReviewStatus,
    pub terminal: bool,
    pub pose_path: Option<String>,
    pub word_count: usize,
    pub revision: u64,
}

impl SentenceRecord {
    pub fn new(
        sentence_id: impl Into<String>,
        clip_id: impl Into<String>,
        english_text: impl Into<String>,
        start_ms: u64,
        end_ms: u64,
        terminal: bool,
    ) -> Self {
        let english_text = english_text.into();
        Self {
            sentence_id: sentence_id.into(),
            clip_id: clip_id.into(),
            word_count: word_count(&english_text),
            english_text,
            start_ms,
            end_ms,
            status: ReviewStatus::Undecided,
            terminal,
            pose_path: None,
            revision: 1,
        }
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms.saturating_sub(self.start_ms)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let fail = |m: String| Err(StoreError::Validation(format!("{}: {m}", self.sentence_id)));
        if !segment::is_valid_clip_id(&self.sentence_id) {
            return fail("sentence_id must match [A-Za-z0-9_-]+".into());
        }
        if !segment::is_valid_clip_id(&self.clip_id) {
            return fail("clip_id must match [A-Za-z0-9_-]+".into());
        }
        if self.start_ms >= self.end_ms {
            return fail("start_ms must be before end_ms".into());
        }
        if self.english_text.trim().is_empty() {
            return fail("english_text is empty".into());
        }
        if self.word_count != word_count(&self.english_text) {
            return fail(format!("word_count {} does not match the text", self.word_count));
        }
        if self.revision < 1 {
            return fail("revision starts at 1".into());
        }
        Ok(())
    }
}

/// Builds undecided records for a clip from its spans and cut plan.
///
/// Segment bounds come from the plan (padded and clamped). Entries flagged
/// `too_short` are left out.
pub fn records_from_plan(
    clip_id: &str,
    spans: &[SentenceSpan],
    plan: &CutPlan,
) -> Vec<SentenceRecord> {
    let by_id: BTreeMap<String, &SentenceSpan> = spans
        .iter()
        .enumerate()
        .map(|(i, span)| (segment::sentence_id(clip_id, i), span))
        .collect();
    plan.entries
        .iter()
        .filter(|e| !e.has(SegmentFlag::TooShort))
        .filter_map(|e| {
            let span = by_id.get(&e.sentence_id)?;
            Some(SentenceRecord::new(
                e.sentence_id.clone(),
                clip_id,
                span.text.clone(),
                e.start_ms,
                e.end_ms,
                span.terminal,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub token: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_hours: f64,
    pub n_sentences: u64,
    pub n_words: u64,
    pub vocab_size: u64,
    pub n_signers: u64,
    /// Count descending, then token ascending.
    pub histogram: Vec<HistogramEntry>,
}

impl DatasetStats {
    pub fn empty() -> Self {
        Self {
            total_hours: 0.0,
            n_sentences: 0,
            n_words: 0,
            vocab_size: 0,
            n_signers: 0,
            histogram: Vec::new(),
        }
    }
}

/// Aggregates the records whose status is in `include`.
///
/// `signers` maps clip ids to signer ids; clips missing from it do not
/// contribute a signer.
pub fn compute_stats<'a>(
    records: impl IntoIterator<Item = &'a SentenceRecord>,
    include: &StatusSet,
    signers: &BTreeMap<String, String>,
) -> DatasetStats {
    let mut total_ms: u64 = 0;
    let mut n_sentences = 0;
    let mut n_words = 0;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut signer_ids: BTreeSet<&str> = BTreeSet::new();
    for record in records.into_iter().filter(|r| include.contains(r.status)) {
        total_ms += record.duration_ms();
        n_sentences += 1;
        for token in tokenize(&record.english_text) {
            n_words += 1;
            *counts.entry(token).or_insert(0) += 1;
        }
        if let Some(signer) = signers.get(&record.clip_id) {
            signer_ids.insert(signer);
        }
    }
    let mut histogram: Vec<HistogramEntry> = counts
        .into_iter()
        .map(|(token, count)| HistogramEntry { token, count })
        .collect();
    // counts came out token-ascending; a stable sort keeps that for ties
    histogram.sort_by(|a, b| b.count.cmp(&a.count));
    DatasetStats {
        total_hours: total_ms as f64 / 3.6e6,
        n_sentences,
        n_words,
        vocab_size: histogram.len() as u64,
        n_signers: signer_ids.len() as u64,
        histogram,
    }
}

/// `rank,token,count` rows in histogram order, 1-based ranks.
pub fn vocab_histogram_csv(stats: &DatasetStats) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer
        .write_record(["rank", "token", "count"])
        .expect("writing to memory");
    for (rank, entry) in stats.histogram.iter().enumerate() {
        writer
            .write_record([(rank + 1).to_string(), entry.token.clone(), entry.count.to_string()])
            .expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("flushing to memory")).expect("csv of utf-8 fields")
}

/// A reviewer's change to one record. At least one field must be set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEdit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<ReviewStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub english_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change<T> {
    pub from: T,
    pub to: T,
}

/// One line of `audit/<clip_id>.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub ts_ms: u64,
    pub sentence_id: String,
    pub from_revision: u64,
    pub to_revision: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Change<ReviewStatus>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub english_text: Option<Change<String>>,
}

/// Applies a review edit if `expected_revision` matches, returning the new
/// record and the audit entry describing the change.
///
/// Edited text is trimmed and must not be empty; the word count follows
/// the text. The revision goes up by one on every accepted edit.
pub fn apply_review_edit(
    record: &SentenceRecord,
    edit: &ReviewEdit,
    expected_revision: u64,
) -> Result<(SentenceRecord, AuditEntry), StoreError> {
    if expected_revision != record.revision {
        return Err(StoreError::Conflict {
            sentence_id: record.sentence_id.clone(),
            current_revision: record.revision,
        });
    }
    if edit.status.is_none() && edit.english_text.is_none() {
        return Err(StoreError::Validation(
            "an edit needs a status or english_text".into(),
        ));
    }
    let mut updated = record.clone();
    let mut entry = AuditEntry {
        ts_ms: now_ms(),
        sentence_id: record.sentence_id.clone(),
        from_revision: record.revision,
        to_revision: record.revision + 1,
        status: None,
        english_text: None,
    };
    if let Some(text) = &edit.english_text {
        let text = text.trim();
        if text.is_empty() {
            return Err(StoreError::Validation("english_text must not be empty".into()));
        }
        entry.english_text = Some(Change {
            from: record.english_text.clone(),
            to: text.to_owned(),
        });
        updated.english_text = text.to_owned();
        updated.word_count = word_count(text);
    }
    if let Some(status) = edit.status {
        entry.status = Some(Change {
            from: record.status,
            to: status,
        });
        updated.status = status;
    }
    updated.revision += 1;
    Ok((updated, entry))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Paths inside a data directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self, clip_id: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{clip_id}.json"))
    }

    pub fn captions(&self, clip_id: &str) -> PathBuf {
        self.root.join("captions").join(format!("{clip_id}.vtt"))
    }

    pub fn sentences(&self, clip_id: &str) -> PathBuf {
        self.root.join("sentences").join(format!("{clip_id}.jsonl"))
    }

    pub fn pose(&self, sentence_id: &str) -> PathBuf {
        self.root.join(pose_rel_path(sentence_id))
    }

    pub fn audit(&self, clip_id: &str) -> PathBuf {
        self.root.join("audit").join(format!("{clip_id}.jsonl"))
    }

    pub fn stats(&self) -> PathBuf {
        self.root.join("stats").join("stats.json")
    }
}

/// Relative path of a sentence's pose file, as stored in `pose_path`.
pub fn pose_rel_path(sentence_id: &str) -> String {
    format!("pose/{sentence_id}.sdwp")
}

/// Writes through a temporary file and a rename so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), StoreError> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let tmp = parent.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("write")
    ));
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("serializing to memory");
        out.push(b'\n');
    }
    out
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_owned(),
            message: format!("line {}: {e}", n + 1),
        })?;
        items.push(item);
    }
    Ok(items)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, StoreError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == ext) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

#[derive(Debug, Default)]
struct StoreState {
    records: BTreeMap<String, SentenceRecord>,
    manifests: BTreeMap<String, ClipManifest>,
}

impl StoreState {
    fn signers(&self) -> BTreeMap<String, String> {
        self.manifests
            .values()
            .map(|m| (m.clip_id.clone(), m.signer_id.clone()))
            .collect()
    }

    fn clip_records(&self, clip_id: &str) -> Vec<&SentenceRecord> {
        let mut records: Vec<_> = self.records.values().filter(|r| r.clip_id == clip_id).collect();
        records.sort_by(|a, b| record_order(a, b));
        records
    }

    fn sorted(&self) -> Vec<&SentenceRecord> {
        let mut records: Vec<_> = self.records.values().collect();
        records.sort_by(|a, b| record_order(a, b));
        records
    }
}

/// Browse order: clip, then start time.
pub fn record_order(a: &SentenceRecord, b: &SentenceRecord) -> std::cmp::Ordering {
    (&a.clip_id, a.start_ms, &a.sentence_id).cmp(&(&b.clip_id, b.start_ms, &b.sentence_id))
}

/// Counts written by [`Store::export_release`], also saved as `release.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseManifest {
    pub include: StatusSet,
    pub n_sentences: u64,
    pub n_pose_files: u64,
    pub clips: Vec<String>,
}

pub struct Store {
    dir: DataDir,
    state: RwLock<StoreState>,
}

impl Store {
    /// Opens a data directory, creating it if needed, and loads every
    /// manifest and sentence file.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = DataDir::new(root);
        fs::create_dir_all(dir.root()).map_err(io_err(dir.root()))?;
        let mut state = StoreState::default();
        for path in files_with_extension(&dir.root().join("manifests"), "json")? {
            let manifest: ClipManifest = read_json(&path)?;
            let manifest = segment::validate_manifest(manifest)?;
            state.manifests.insert(manifest.clip_id.clone(), manifest);
        }
        for path in files_with_extension(&dir.root().join("sentences"), "jsonl")? {
            for record in read_jsonl::<SentenceRecord>(&path)? {
                record.validate()?;
                let id = record.sentence_id.clone();
                if state.records.insert(id.clone(), record).is_some() {
                    return Err(StoreError::Corrupt {
                        path,
                        message: format!("duplicate sentence id {id}"),
                    });
                }
            }
        }
        Ok(Self {
            dir,
            state: RwLock::new(state),
        })
    }

    pub fn dir(&self) -> &DataDir {
        &self.dir
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, StoreState> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, StoreState> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn manifest(&self, clip_id: &str) -> Option<ClipManifest> {
        self.read().manifests.get(clip_id).cloned()
    }

    pub fn put_manifest(&self, manifest: ClipManifest) -> Result<(), StoreError> {
        let manifest = segment::validate_manifest(manifest)?;
        let json = serde_json::to_vec_pretty(&manifest).expect("serializing manifest");
        let mut state = self.write();
        write_atomic(&self.dir.manifest(&manifest.clip_id), &json)?;
        state.manifests.insert(manifest.clip_id.clone(), manifest);
        Ok(())
    }

    /// Replaces every record of `clip_id`. Pose references to files that
    /// already exist are filled in.
    pub fn replace_clip_records(
        &self,
        clip_id: &str,
        mut records: Vec<SentenceRecord>,
    ) -> Result<(), StoreError> {
        let mut ids = BTreeSet::new();
        for record in &mut records {
            record.validate()?;
            if record.clip_id != clip_id {
                return Err(StoreError::Validation(format!(
                    "{} belongs to clip {}, not {clip_id}",
                    record.sentence_id, record.clip_id
                )));
            }
            if !ids.insert(record.sentence_id.clone()) {
                return Err(StoreError::Validation(format!(
                    "duplicate sentence id {}",
                    record.sentence_id
                )));
            }
            if record.pose_path.is_none() && self.dir.pose(&record.sentence_id).exists() {
                record.pose_path = Some(pose_rel_path(&record.sentence_id));
            }
        }
        let mut state = self.write();
        if let Some(other) = state
            .records
            .values()
            .find(|r| r.clip_id != clip_id && ids.contains(&r.sentence_id))
        {
            return Err(StoreError::Validation(format!(
                "sentence id {} already used by clip {}",
                other.sentence_id, other.clip_id
            )));
        }
        records.sort_by(record_order);
        write_atomic(&self.dir.sentences(clip_id), &write_jsonl(&records))?;
        state.records.retain(|_, r| r.clip_id != clip_id);
        for record in records {
            state.records.insert(record.sentence_id.clone(), record);
        }
        Ok(())
    }

    fn persist_clip(&self, state: &StoreState, clip_id: &str) -> Result<(), StoreError> {
        write_atomic(&self.dir.sentences(clip_id), &write_jsonl(state.clip_records(clip_id)))
    }

    pub fn get(&self, sentence_id: &str) -> Option<SentenceRecord> {
        self.read().records.get(sentence_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records in browse order.
    pub fn records(&self) -> Vec<SentenceRecord> {
        self.read().sorted().into_iter().cloned().collect()
    }

    /// Applies a review edit under the revision check, persists the clip's
    /// sentence file and appends to its audit log.
    pub fn update(
        &self,
        sentence_id: &str,
        edit: &ReviewEdit,
        expected_revision: u64,
    ) -> Result<SentenceRecord, StoreError> {
        let mut state = self.write();
        let current = state
            .records
            .get(sentence_id)
            .ok_or_else(|| StoreError::NotFound(sentence_id.to_owned()))?;
        let (updated, audit) = apply_review_edit(current, edit, expected_revision)?;
        let previous = state.records.insert(sentence_id.to_owned(), updated.clone());
        if let Err(e) = self.persist_clip(&state, &updated.clip_id) {
            if let Some(previous) = previous {
                state.records.insert(sentence_id.to_owned(), previous);
            }
            return Err(e);
        }
        self.append_audit(&updated.clip_id, &audit)?;
        Ok(updated)
    }

    fn append_audit(&self, clip_id: &str, entry: &AuditEntry) -> Result<(), StoreError> {
        let path = self.dir.audit(clip_id);
        let parent = path.parent().expect("audit path has a parent");
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.write_all(&write_jsonl([entry])).map_err(io_err(&path))
    }

    pub fn audit_log(&self, clip_id: &str) -> Result<Vec<AuditEntry>, StoreError> {
        let path = self.dir.audit(clip_id);
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_jsonl(&path)
    }

    /// Encodes and stores a pose sequence under its sentence id, and points
    /// the matching record (if any) at it.
    pub fn attach_pose(&self, seq: &PoseSequence) -> Result<PathBuf, StoreError> {
        if !segment::is_valid_clip_id(&seq.sentence_id) {
            return Err(StoreError::Validation(format!(
                "sentence id `{}` is not usable as a file name",
                seq.sentence_id
            )));
        }
        let bytes = pose::encode_pose(seq)?;
        let path = self.dir.pose(&seq.sentence_id);
        let mut state = self.write();
        write_atomic(&path, &bytes)?;
        let clip = match state.records.get_mut(&seq.sentence_id) {
            Some(record) if record.pose_path.is_none() => {
                record.pose_path = Some(pose_rel_path(&seq.sentence_id));
                Some(record.clip_id.clone())
            }
            _ => None,
        };
        if let Some(clip) = clip {
            self.persist_clip(&state, &clip)?;
        }
        Ok(path)
    }

    fn pose_file(&self, sentence_id: &str) -> Result<PathBuf, StoreError> {
        let record = self
            .get(sentence_id)
            .ok_or_else(|| StoreError::NotFound(sentence_id.to_owned()))?;
        record
            .pose_path
            .map(|p| self.dir.root().join(p))
            .ok_or_else(|| StoreError::NotFound(format!("{sentence_id} pose")))
    }

    pub fn load_pose(&self, sentence_id: &str) -> Result<PoseSequence, StoreError> {
        let path = self.pose_file(sentence_id)?;
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        Ok(pose::decode_pose(&bytes, sentence_id)?)
    }

    /// Reads only the `SDWP` header of a record's pose file. `None` when
    /// the record has no pose.
    pub fn pose_header(&self, sentence_id: &str) -> Result<Option<SdwpHeader>, StoreError> {
        let record = self
            .get(sentence_id)
            .ok_or_else(|| StoreError::NotFound(sentence_id.to_owned()))?;
        let Some(rel) = record.pose_path else {
            return Ok(None);
        };
        let path = self.dir.root().join(rel);
        let mut header = [0u8; pose::HEADER_BYTES];
        let mut file = File::open(&path).map_err(io_err(&path))?;
        let read = read_up_to(&mut file, &mut header).map_err(io_err(&path))?;
        Ok(Some(pose::read_header(&header[..read])?))
    }

    /// Decodes frames `from..=to` without reading the rest of the file.
    pub fn pose_frames(
        &self,
        sentence_id: &str,
        from: u32,
        to: u32,
    ) -> Result<Vec<PoseFrame>, StoreError> {
        let path = self.pose_file(sentence_id)?;
        let mut file = File::open(&path).map_err(io_err(&path))?;
        let mut header = [0u8; pose::HEADER_BYTES];
        let read = read_up_to(&mut file, &mut header).map_err(io_err(&path))?;
        let header = pose::read_header(&header[..read])?;
        if from > to || to >= header.frame_count {
            return Err(PoseError::FrameRange {
                from,
                to,
                frame_count: header.frame_count,
            }
            .into());
        }
        let offset = pose::HEADER_BYTES + from as usize * pose::FRAME_BYTES;
        file.seek(SeekFrom::Start(offset as u64)).map_err(io_err(&path))?;
        let count = (to - from + 1) as usize;
        let mut buf = vec![0u8; count * pose::FRAME_BYTES];
        let read = read_up_to(&mut file, &mut buf).map_err(io_err(&path))?;
        if read < buf.len() {
            let complete = read / pose::FRAME_BYTES;
            return Err(PoseError::Truncated {
                offset: offset + complete * pose::FRAME_BYTES,
                needed: pose::FRAME_BYTES,
                available: read - complete * pose::FRAME_BYTES,
            }
            .into());
        }
        let mut frames: Vec<PoseFrame> = Vec::with_capacity(count);
        for (i, record) in buf.chunks_exact(pose::FRAME_BYTES).enumerate() {
            let index = from as usize + i;
            let frame = pose::decode_frame(record, index)?;
            if frames.last().is_some_and(|p| frame.timestamp_ms <= p.timestamp_ms) {
                return Err(PoseError::Invariant {
                    frame: index,
                    reason: "timestamps not strictly increasing".into(),
                }
                .into());
            }
            frames.push(frame);
        }
        Ok(frames)
    }

    pub fn stats(&self, include: &StatusSet) -> DatasetStats {
        let state = self.read();
        compute_stats(state.records.values(), include, &state.signers())
    }

    /// Computes statistics and saves them to `stats/stats.json`.
    pub fn write_stats(&self, include: &StatusSet) -> Result<DatasetStats, StoreError> {
        let stats = self.stats(include);
        let json = serde_json::to_vec_pretty(&stats).expect("serializing stats");
        write_atomic(&self.dir.stats(), &json)?;
        Ok(stats)
    }

    /// Writes a release to `out_dir`, which must be empty or absent:
    /// `sentences.jsonl`, the referenced pose files under `pose/`, the
    /// manifests of the exported clips, `stats.json` over exactly the
    /// exported records, and `release.json`.
    ///
    /// Records without a pose are exported text-only. If any included
    /// record points at a pose file that does not exist, nothing is written.
    pub fn export_release(
        &self,
        out_dir: &Path,
        include: &StatusSet,
    ) -> Result<ReleaseManifest, StoreError> {
        let state = self.read();
        let records: Vec<&SentenceRecord> = state
            .sorted()
            .into_iter()
            .filter(|r| include.contains(r.status))
            .collect();

        let missing: Vec<String> = records
            .iter()
            .filter(|r| {
                r.pose_path
                    .as_ref()
                    .is_some_and(|p| !self.dir.root().join(p).is_file())
            })
            .map(|r| r.sentence_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(StoreError::MissingPose(missing));
        }
        if out_dir.exists()
            && fs::read_dir(out_dir)
                .map_err(io_err(out_dir))?
                .next()
                .is_some()
        {
            return Err(StoreError::Validation(format!(
                "release directory {} is not empty",
                out_dir.display()
            )));
        }

        let mut n_pose_files = 0;
        for record in &records {
            if let Some(rel) = &record.pose_path {
                let target = out_dir.join(rel);
                let parent = target.parent().expect("pose path has a parent");
                fs::create_dir_all(parent).map_err(io_err(parent))?;
                let source = self.dir.root().join(rel);
                fs::copy(&source, &target).map_err(io_err(&source))?;
                n_pose_files += 1;
            }
        }

        let clips: BTreeSet<&str> = records.iter().map(|r| r.clip_id.as_str()).collect();
        let release_dir = DataDir::new(out_dir);
        for clip in &clips {
            if let Some(manifest) = state.manifests.get(*clip) {
                let json = serde_json::to_vec_pretty(manifest).expect("serializing manifest");
                write_atomic(&release_dir.manifest(clip), &json)?;
            }
        }
        write_atomic(&out_dir.join("sentences.jsonl"), &write_jsonl(&records))?;
        let stats = compute_stats(records.iter().copied(), include, &state.signers());
        write_atomic(
            &out_dir.join("stats.json"),
            &serde_json::to_vec_pretty(&stats).expect("serializing stats"),
        )?;
        let manifest = ReleaseManifest {
            include: include.clone(),
            n_sentences: records.len() as u64,
            n_pose_files,
            clips: clips.into_iter().map(str::to_owned).collect(),
        };
        write_atomic(
            &out_dir.join("release.json"),
            &serde_json::to_vec_pretty(&manifest).expect("serializing release manifest"),
        )?;
        Ok(manifest)
    }
}

fn read_up_to(reader: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// Checks a release directory against itself: every record is valid,
/// every referenced pose file decodes, and `stats.json` matches statistics
/// recomputed from `sentences.jsonl` and the bundled manifests.
pub fn verify_release(dir: &Path) -> Result<DatasetStats, StoreError> {
    let manifest: ReleaseManifest = read_json(&dir.join("release.json"))?;
    let records: Vec<SentenceRecord> = read_jsonl(&dir.join("sentences.jsonl"))?;
    let corrupt = |message: String| StoreError::Corrupt {
        path: dir.to_owned(),
        message,
    };
    if records.len() as u64 != manifest.n_sentences {
        return Err(corrupt(format!(
            "release.json lists {} sentences, sentences.jsonl has {}",
            manifest.n_sentences,
            records.len()
        )));
    }
    let mut n_pose = 0;
    for record in &records {
        record.validate()?;
        if !manifest.include.contains(record.status) {
            return Err(corrupt(format!("{} has excluded status", record.sentence_id)));
        }
        if let Some(rel) = &record.pose_path {
            let path = dir.join(rel);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            pose::decode_pose(&bytes, &record.sentence_id)?;
            n_pose += 1;
        }
    }
    if n_pose != manifest.n_pose_files {
        return Err(corrupt(format!(
            "release.json lists {} pose files, found {n_pose}",
            manifest.n_pose_files
        )));
    }
    let mut signers = BTreeMap::new();
    for path in files_with_extension(&dir.join("manifests"), "json")? {
        let m: ClipManifest = read_json(&path)?;
        signers.insert(m.clip_id, m.signer_id);
    }
    let recomputed = compute_stats(&records, &manifest.include, &signers);
    let saved: DatasetStats = read_json(&dir.join("stats.json"))?;
    if saved != recomputed {
        return Err(corrupt("stats.json does not match the exported records".into()));
    }
    Ok(recomputed)
}
