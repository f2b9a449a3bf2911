//! The storage mediator: a content-addressed dataset store with run-scoped
//! history, checkpoints and rollback.
//!
//! On-disk layout under the store root:
//!
//! ```text
//! store/<sha256-hex>      canonical dataset bytes, written once
//! index                   append-only journal, one record per line
//! runs/<run>/<file>       per-run documents (manifest, record)
//! ```
//!
//! Journal records:
//!
//! ```text
//! key <run> <activity> <seq> <hash>
//! ckpt <run> <activity> <seq> <hash>
//! rollback <run> <activity>
//! status <run> <active|failed|completed|rolled-back>
//! ```

mod service;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::quantities::{is_token, ContentId, Dataset};

pub use service::{StorageService, STORAGE_RESOURCE};

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("integrity error for {key}: stored bytes hash to {actual}")]
    Integrity { key: String, actual: String },
    #[error("unknown run {0:?}")]
    UnknownRun(String),
    #[error("run {run:?} has no committed checkpoint for {activity:?}")]
    UnknownCheckpoint { run: String, activity: String },
    #[error("store full: {needed} bytes would exceed the cap of {cap}")]
    StorageFull { needed: u64, cap: u64 },
    #[error("invalid name {0:?}: must be a whitespace-free token")]
    InvalidName(String),
    #[error("corrupt index at line {line}: {reason}")]
    CorruptIndex { line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.display().to_string(), source }
}

/// Address of one stored result: content hash plus its place in a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResultKey {
    pub run: String,
    pub activity: String,
    pub seq: u32,
    pub hash: String,
}

impl ResultKey {
    pub fn content_id(&self) -> Option<ContentId> {
        ContentId::parse(&self.hash)
    }
}

impl fmt::Display for ResultKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let short = self.hash.get(..12).unwrap_or(&self.hash);
        write!(f, "{}/{}#{}@{}", self.run, self.activity, self.seq, short)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Active,
    Failed,
    Completed,
    RolledBack,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Active => "active",
            RunStatus::Failed => "failed",
            RunStatus::Completed => "completed",
            RunStatus::RolledBack => "rolled-back",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "active" => RunStatus::Active,
            "failed" => RunStatus::Failed,
            "completed" => RunStatus::Completed,
            "rolled-back" => RunStatus::RolledBack,
            _ => return None,
        })
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub activity: String,
    pub key: ResultKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunState {
    pub run: String,
    pub checkpoints: Vec<Checkpoint>,
    pub status: RunStatus,
}

impl RunState {
    fn new(run: &str) -> Self {
        RunState { run: run.to_string(), checkpoints: Vec::new(), status: RunStatus::Active }
    }

    /// Committed checkpoints of `activity`, in commit order.
    pub fn checkpoints_of<'a>(&'a self, activity: &'a str) -> impl Iterator<Item = &'a ResultKey> {
        self.checkpoints
            .iter()
            .filter(move |c| c.activity == activity)
            .map(|c| &c.key)
    }
}

#[derive(Default)]
struct Index {
    keys: BTreeMap<(String, String, u32), String>,
    history: BTreeMap<String, Vec<ResultKey>>,
    runs: BTreeMap<String, RunState>,
    blob_bytes: u64,
}

impl Index {
    fn record_key(&mut self, key: &ResultKey) {
        self.keys.insert(
            (key.run.clone(), key.activity.clone(), key.seq),
            key.hash.clone(),
        );
        self.history.entry(key.run.clone()).or_default().push(key.clone());
        self.runs
            .entry(key.run.clone())
            .or_insert_with(|| RunState::new(&key.run));
    }

    fn next_seq(&self, run: &str, activity: &str) -> u32 {
        self.keys
            .range((run.to_string(), activity.to_string(), 0)..=(run.to_string(), activity.to_string(), u32::MAX))
            .next_back()
            .map_or(0, |((_, _, s), _)| s + 1)
    }

    fn contains(&self, key: &ResultKey) -> bool {
        self.keys
            .get(&(key.run.clone(), key.activity.clone(), key.seq))
            .is_some_and(|h| *h == key.hash)
    }

    fn apply_checkpoint(&mut self, key: &ResultKey) -> Result<&RunState, StorageError> {
        let state = self
            .runs
            .get_mut(&key.run)
            .ok_or_else(|| StorageError::UnknownRun(key.run.clone()))?;
        state.checkpoints.push(Checkpoint { activity: key.activity.clone(), key: key.clone() });
        state.status = RunStatus::Active;
        Ok(state)
    }

    fn apply_rollback(&mut self, run: &str, activity: &str) -> Result<&RunState, StorageError> {
        let state = self
            .runs
            .get_mut(run)
            .ok_or_else(|| StorageError::UnknownRun(run.to_string()))?;
        let pos = state
            .checkpoints
            .iter()
            .rposition(|c| c.activity == activity)
            .ok_or_else(|| StorageError::UnknownCheckpoint {
                run: run.to_string(),
                activity: activity.to_string(),
            })?;
        state.checkpoints.truncate(pos + 1);
        state.status = RunStatus::RolledBack;
        Ok(state)
    }
}

/// Directory-backed dataset store. Safe to share between threads.
pub struct Store {
    root: PathBuf,
    max_bytes: Option<u64>,
    index: Mutex<Index>,
    tmp_counter: AtomicU64,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

fn check_name(s: &str) -> Result<(), StorageError> {
    if is_token(s) && !s.contains('#') && !s.contains('@') {
        Ok(())
    } else {
        Err(StorageError::InvalidName(s.to_string()))
    }
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`, replaying its
    /// journal.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StorageError> {
        let root = root.into();
        for dir in [root.join("store"), root.join("runs"), root.join("tmp")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let index_path = root.join("index");
        let mut index = Index::default();
        if index_path.exists() {
            let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
            for (i, line) in text.lines().enumerate() {
                replay(&mut index, i + 1, line)?;
            }
        }
        let blobs = root.join("store");
        for entry in fs::read_dir(&blobs).map_err(io_err(&blobs))? {
            let entry = entry.map_err(io_err(&blobs))?;
            index.blob_bytes += entry.metadata().map_err(io_err(&entry.path()))?.len();
        }
        Ok(Store { root, max_bytes: None, index: Mutex::new(index), tmp_counter: AtomicU64::new(0) })
    }

    /// Caps the total size of stored blobs.
    pub fn with_capacity(mut self, max_bytes: u64) -> Self {
        self.max_bytes = Some(max_bytes);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn blob_path(&self, hash: &str) -> PathBuf {
        self.root.join("store").join(hash)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Index> {
        self.index.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn append_journal(&self, line: &str) -> Result<(), StorageError> {
        let path = self.root.join("index");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        writeln!(f, "{line}").map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))
    }

    fn write_atomic(&self, dest: &Path, bytes: &[u8]) -> Result<(), StorageError> {
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self.root.join("tmp").join(format!("{}.{}", std::process::id(), n));
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(bytes).map_err(io_err(&tmp))?;
            f.sync_data().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, dest).map_err(io_err(dest))
    }

    /// Registers a run with no checkpoints. Idempotent.
    pub fn begin_run(&self, run: &str) -> Result<RunState, StorageError> {
        check_name(run)?;
        let mut index = self.lock();
        if let Some(state) = index.runs.get(run) {
            return Ok(state.clone());
        }
        self.append_journal(&format!("status {run} active"))?;
        let state = RunState::new(run);
        index.runs.insert(run.to_string(), state.clone());
        Ok(state)
    }

    /// Stores `ds` as the next result of (`run`, `activity`).
    pub fn put(&self, ds: &Dataset, run: &str, activity: &str) -> Result<ResultKey, StorageError> {
        check_name(run)?;
        check_name(activity)?;
        let bytes = ds.to_canonical_bytes();
        let hash = ContentId::of_bytes(&bytes).to_string();
        let path = self.blob_path(&hash);
        let mut index = self.lock();
        if !path.exists() {
            let needed = index.blob_bytes + bytes.len() as u64;
            if let Some(cap) = self.max_bytes {
                if needed > cap {
                    return Err(StorageError::StorageFull { needed, cap });
                }
            }
            self.write_atomic(&path, &bytes)?;
            index.blob_bytes = needed;
        }
        let seq = index.next_seq(run, activity);
        let key = ResultKey { run: run.into(), activity: activity.into(), seq, hash };
        if !index.runs.contains_key(run) {
            self.append_journal(&format!("status {run} active"))?;
        }
        self.append_journal(&format!("key {run} {activity} {seq} {}", key.hash))?;
        index.record_key(&key);
        Ok(key)
    }

    /// Reads a result, verifying the stored bytes still hash to `key.hash`.
    pub fn get(&self, key: &ResultKey) -> Result<Dataset, StorageError> {
        if !self.lock().contains(key) {
            return Err(StorageError::UnknownKey(key.to_string()));
        }
        let bytes = self.read_blob(key)?;
        let actual = ContentId::of_bytes(&bytes);
        if actual.as_str() != key.hash {
            return Err(StorageError::Integrity { key: key.to_string(), actual: actual.to_string() });
        }
        Dataset::from_canonical_bytes(&bytes).map_err(|e| StorageError::Integrity {
            key: key.to_string(),
            actual: format!("{actual} (undecodable: {e})"),
        })
    }

    fn read_blob(&self, key: &ResultKey) -> Result<Vec<u8>, StorageError> {
        let path = self.blob_path(&key.hash);
        match fs::read(&path) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StorageError::Integrity {
                key: key.to_string(),
                actual: "<missing blob>".into(),
            }),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Commits `key` as the latest checkpoint of its run.
    pub fn checkpoint(&self, run: &str, activity: &str, key: &ResultKey) -> Result<RunState, StorageError> {
        let mut index = self.lock();
        if !index.runs.contains_key(run) {
            return Err(StorageError::UnknownRun(run.to_string()));
        }
        if key.run != run || key.activity != activity || !index.contains(key) {
            return Err(StorageError::UnknownKey(key.to_string()));
        }
        self.append_journal(&format!("ckpt {run} {activity} {} {}", key.seq, key.hash))?;
        Ok(index.apply_checkpoint(key)?.clone())
    }

    /// Drops checkpoints committed after the latest checkpoint of
    /// `activity`. The datasets stay readable.
    pub fn rollback(&self, run: &str, activity: &str) -> Result<RunState, StorageError> {
        let mut index = self.lock();
        // Validate first so a failing rollback never reaches the journal.
        {
            let state = index
                .runs
                .get(run)
                .ok_or_else(|| StorageError::UnknownRun(run.to_string()))?;
            if !state.checkpoints.iter().any(|c| c.activity == activity) {
                return Err(StorageError::UnknownCheckpoint {
                    run: run.to_string(),
                    activity: activity.to_string(),
                });
            }
        }
        self.append_journal(&format!("rollback {run} {activity}"))?;
        Ok(index.apply_rollback(run, activity)?.clone())
    }

    pub fn set_status(&self, run: &str, status: RunStatus) -> Result<RunState, StorageError> {
        let mut index = self.lock();
        if !index.runs.contains_key(run) {
            return Err(StorageError::UnknownRun(run.to_string()));
        }
        self.append_journal(&format!("status {run} {status}"))?;
        let state = index.runs.get_mut(run).expect("checked above");
        state.status = status;
        Ok(state.clone())
    }

    pub fn run_state(&self, run: &str) -> Result<RunState, StorageError> {
        self.lock()
            .runs
            .get(run)
            .cloned()
            .ok_or_else(|| StorageError::UnknownRun(run.to_string()))
    }

    /// Every key ever stored for `run`, in put order.
    pub fn keys_of(&self, run: &str) -> Result<Vec<ResultKey>, StorageError> {
        let index = self.lock();
        if !index.runs.contains_key(run) {
            return Err(StorageError::UnknownRun(run.to_string()));
        }
        Ok(index.history.get(run).cloned().unwrap_or_default())
    }

    pub fn runs(&self) -> Vec<String> {
        self.lock().runs.keys().cloned().collect()
    }

    /// A fresh `run-NNNNNN` id not used in this store.
    pub fn new_run_id(&self) -> String {
        let index = self.lock();
        let next = index
            .runs
            .keys()
            .filter_map(|r| r.strip_prefix("run-")?.parse::<u64>().ok())
            .max()
            .map_or(1, |n| n + 1);
        format!("run-{next:06}")
    }

    pub fn write_run_file(&self, run: &str, name: &str, bytes: &[u8]) -> Result<(), StorageError> {
        check_name(run)?;
        check_name(name)?;
        let dir = self.root.join("runs").join(run);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        self.write_atomic(&dir.join(name), bytes)
    }

    pub fn read_run_file(&self, run: &str, name: &str) -> Result<Vec<u8>, StorageError> {
        check_name(run)?;
        check_name(name)?;
        let path = self.root.join("runs").join(run).join(name);
        fs::read(&path).map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                StorageError::UnknownRun(run.to_string())
            } else {
                io_err(&path)(e)
            }
        })
    }

    /// Hashes every blob and returns those whose bytes no longer match
    /// their name.
    pub fn audit(&self) -> Result<Vec<String>, StorageError> {
        let dir = self.root.join("store");
        let mut bad = Vec::new();
        let mut names: Vec<_> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect();
        names.sort();
        for name in names {
            let path = dir.join(&name);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if ContentId::of_bytes(&bytes).as_str() != name {
                bad.push(name);
            }
        }
        Ok(bad)
    }
}

fn replay(index: &mut Index, line_no: usize, line: &str) -> Result<(), StorageError> {
    let corrupt = |reason: &str| StorageError::CorruptIndex { line: line_no, reason: reason.to_string() };
    let fields: Vec<&str> = line.split(' ').collect();
    let parse_key = |f: &[&str]| -> Result<ResultKey, StorageError> {
        let seq = f[2].parse().map_err(|_| corrupt("bad sequence number"))?;
        ContentId::parse(f[3]).ok_or_else(|| corrupt("bad hash"))?;
        Ok(ResultKey { run: f[0].into(), activity: f[1].into(), seq, hash: f[3].into() })
    };
    match fields.as_slice() {
        ["key", rest @ ..] if rest.len() == 4 => {
            let key = parse_key(rest)?;
            index.record_key(&key);
        }
        ["ckpt", rest @ ..] if rest.len() == 4 => {
            let key = parse_key(rest)?;
            if !index.contains(&key) {
                return Err(corrupt("checkpoint of unrecorded key"));
            }
            index.apply_checkpoint(&key).map_err(|e| corrupt(&e.to_string()))?;
        }
        ["rollback", run, activity] => {
            index
                .apply_rollback(run, activity)
                .map_err(|e| corrupt(&e.to_string()))?;
        }
        ["status", run, status] => {
            let status = RunStatus::parse(status).ok_or_else(|| corrupt("bad status"))?;
            index
                .runs
                .entry(run.to_string())
                .or_insert_with(|| RunState::new(run))
                .status = status;
        }
        [""] => {}
        _ => return Err(corrupt("unrecognized record")),
    }
    Ok(())
}
