//! Append-only JSONL session store.
//!
//! Every write appends one JSON line holding the full record; on reload the
//! last line for a session id wins. A torn final line (crash mid-append) is
//! dropped and truncated away on open; malformed lines anywhere else are
//! reported as corruption.
//!
//! Writes are serialized through a single writer lock. Reads only touch the
//! in-memory index and never wait on file I/O.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use indexmap::IndexMap;
use thiserror::Error;

use crate::session::{now_ms, InvariantError, SessionQuadruple};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("duplicate session id `{0}`")]
    Duplicate(String),
    #[error("unknown session id `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Invalid(#[from] InvariantError),
    #[error("store file {path}: malformed record on line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("store I/O: {0}")]
    Io(#[from] io::Error),
    #[error("serialize: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// What the recovery pass found when the store was opened.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecoveryReport {
    /// Lines successfully read (including superseded versions).
    pub lines_read: usize,
    pub dropped_trailing_line: bool,
}

/// Which records a purge removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PurgeFilter {
    All,
    /// Records created at or before `now - older_than_ms`.
    OlderThanMs(u64),
}

pub struct SessionStore {
    path: Option<PathBuf>,
    index: RwLock<IndexMap<String, SessionQuadruple>>,
    writer: Mutex<Option<File>>,
    sync: bool,
    recovery: RecoveryReport,
}

impl std::fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionStore")
            .field("path", &self.path)
            .field("len", &self.len())
            .finish()
    }
}

impl SessionStore {
    /// A store with no backing file.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            index: RwLock::new(IndexMap::new()),
            writer: Mutex::new(None),
            sync: false,
            recovery: RecoveryReport::default(),
        }
    }

    /// Open (or create) the store file and rebuild the index from it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let (records, recovery) = recover(&path)?;
        let mut index = IndexMap::new();
        for q in records {
            index.insert(q.session_id.clone(), q);
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            index: RwLock::new(index),
            writer: Mutex::new(Some(file)),
            sync: true,
            recovery,
        })
    }

    /// Skip `fsync` after each append (flush only). Useful for bulk tests.
    pub fn without_fsync(mut self) -> Self {
        self.sync = false;
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn recovery(&self) -> &RecoveryReport {
        &self.recovery
    }

    /// Insert a new record. Rejects ids already present.
    pub fn put(&self, q: SessionQuadruple) -> Result<(), StoreError> {
        q.validate()?;
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if self.read_index().contains_key(&q.session_id) {
            return Err(StoreError::Duplicate(q.session_id));
        }
        self.append(&mut writer, &q)?;
        self.write_index().insert(q.session_id.clone(), q);
        Ok(())
    }

    /// Replace an existing record with a newer version.
    pub fn update(&self, q: SessionQuadruple) -> Result<(), StoreError> {
        q.validate()?;
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if !self.read_index().contains_key(&q.session_id) {
            return Err(StoreError::NotFound(q.session_id));
        }
        self.append(&mut writer, &q)?;
        self.write_index().insert(q.session_id.clone(), q);
        Ok(())
    }

    pub fn get(&self, session_id: &str) -> Option<SessionQuadruple> {
        self.read_index().get(session_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.read_index().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records in first-insertion order.
    pub fn snapshot(&self) -> Vec<SessionQuadruple> {
        self.read_index().values().cloned().collect()
    }

    /// The `limit` most recently inserted records, newest first.
    pub fn recent(&self, limit: usize) -> Vec<SessionQuadruple> {
        self.read_index()
            .values()
            .rev()
            .take(limit)
            .cloned()
            .collect()
    }

    /// Most recent record matching `pred`.
    pub fn find_latest(&self, pred: impl Fn(&SessionQuadruple) -> bool) -> Option<SessionQuadruple> {
        self.read_index().values().rev().find(|q| pred(q)).cloned()
    }

    /// Remove matching records and compact the backing file.
    pub fn purge(&self, filter: PurgeFilter) -> Result<usize, StoreError> {
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let cutoff = match filter {
            PurgeFilter::All => None,
            PurgeFilter::OlderThanMs(age) => Some(now_ms().saturating_sub(age)),
        };
        let retained: IndexMap<String, SessionQuadruple> = self
            .read_index()
            .iter()
            .filter(|(_, q)| cutoff.is_some_and(|c| q.created_at > c))
            .map(|(k, q)| (k.clone(), q.clone()))
            .collect();
        let removed = self.len() - retained.len();

        if let Some(path) = &self.path {
            let tmp = path.with_extension("compact.tmp");
            {
                let mut out = File::create(&tmp)?;
                for q in retained.values() {
                    let line = serde_json::to_string(q)?;
                    out.write_all(line.as_bytes())?;
                    out.write_all(b"\n")?;
                }
                out.sync_all()?;
            }
            fs::rename(&tmp, path)?;
            *writer = Some(OpenOptions::new().append(true).open(path)?);
        }
        *self.write_index() = retained;
        Ok(removed)
    }

    fn append(&self, writer: &mut Option<File>, q: &SessionQuadruple) -> Result<(), StoreError> {
        let Some(file) = writer.as_mut() else {
            return Ok(());
        };
        let mut line = serde_json::to_string(q)?;
        line.push('\n');
        file.write_all(line.as_bytes())?;
        if self.sync {
            file.sync_data()?;
        } else {
            file.flush()?;
        }
        Ok(())
    }

    fn read_index(&self) -> std::sync::RwLockReadGuard<'_, IndexMap<String, SessionQuadruple>> {
        self.index.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_index(&self) -> std::sync::RwLockWriteGuard<'_, IndexMap<String, SessionQuadruple>> {
        self.index.write().unwrap_or_else(|e| e.into_inner())
    }
}

/// Read every record, truncating a torn final line in place.
fn recover(path: &Path) -> Result<(Vec<SessionQuadruple>, RecoveryReport), StoreError> {
    let mut bytes = Vec::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes)?;
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Ok((Vec::new(), RecoveryReport::default()));
        }
        Err(e) => return Err(e.into()),
    }

    let mut records = Vec::new();
    let mut report = RecoveryReport::default();
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut truncate_at = None;
    let mut needs_newline = false;

    while offset < bytes.len() {
        line_no += 1;
        let (line, next, terminated) = match bytes[offset..].iter().position(|b| *b == b'\n') {
            Some(p) => (&bytes[offset..offset + p], offset + p + 1, true),
            None => (&bytes[offset..], bytes.len(), false),
        };
        let is_last = next >= bytes.len();
        if line.iter().all(u8::is_ascii_whitespace) {
            offset = next;
            continue;
        }
        let parsed = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<SessionQuadruple>(s).map_err(|e| e.to_string()))
            .and_then(|q| q.validate().map(|_| q).map_err(|e| e.to_string()));
        match parsed {
            Ok(q) => {
                records.push(q);
                report.lines_read += 1;
                needs_newline = !terminated;
            }
            Err(reason) if is_last => {
                tracing::warn!(
                    path = %path.display(),
                    line = line_no,
                    %reason,
                    "dropping malformed trailing record"
                );
                report.dropped_trailing_line = true;
                truncate_at = Some(offset);
            }
            Err(reason) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason,
                });
            }
        }
        offset = next;
    }

    if let Some(len) = truncate_at {
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(len as u64)?;
        f.sync_all()?;
    } else if needs_newline {
        let mut f = OpenOptions::new().append(true).open(path)?;
        f.write_all(b"\n")?;
    }
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(id: &str) -> SessionQuadruple {
        SessionQuadruple::new(id, format!("text for {id}"))
    }

    #[test]
    fn read_your_write() {
        let store = SessionStore::in_memory();
        let q = quad("s1");
        store.put(q.clone()).unwrap();
        assert_eq!(store.get("s1"), Some(q));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let store = SessionStore::in_memory();
        store.put(quad("s1")).unwrap();
        match store.put(quad("s1")) {
            Err(StoreError::Duplicate(id)) => assert_eq!(id, "s1"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn durability_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sessions.jsonl");
        {
            let store = SessionStore::open(&path).unwrap();
            store.put(quad("a")).unwrap();
            store.put(quad("b")).unwrap();
        }
        let store = SessionStore::open(&path).unwrap();
        assert!(store.get("a").is_some());
        assert!(store.get("b").is_some());
        assert!(!store.recovery().dropped_trailing_line);
    }

    #[test]
    fn update_supersedes_on_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let store = SessionStore::open(&path).unwrap();
        let mut q = quad("a");
        store.put(q.clone()).unwrap();
        store.put(quad("b")).unwrap();
        q.t_hat_o = Some("other".into());
        store.update(q.clone()).unwrap();
        assert!(matches!(store.update(quad("zzz")), Err(StoreError::NotFound(_))));
        drop(store);
        let reloaded = SessionStore::open(&path).unwrap();
        assert_eq!(reloaded.get("a"), Some(q));
        let ids: Vec<_> = reloaded.snapshot().into_iter().map(|q| q.session_id).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn torn_trailing_line_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        {
            let store = SessionStore::open(&path).unwrap();
            store.put(quad("a")).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"session_id":"b","t_o":"x","crea"#).unwrap();
        drop(f);

        let store = SessionStore::open(&path).unwrap();
        assert!(store.recovery().dropped_trailing_line);
        assert_eq!(store.len(), 1);
        store.put(quad("c")).unwrap();
        drop(store);
        let store = SessionStore::open(&path).unwrap();
        assert!(!store.recovery().dropped_trailing_line);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn mid_file_corruption_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let good = serde_json::to_string(&quad("a")).unwrap();
        fs::write(&path, format!("{good}\nnot json\n{good}\n")).unwrap();
        match SessionStore::open(&path) {
            Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn unterminated_valid_final_line_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let good = serde_json::to_string(&quad("a")).unwrap();
        fs::write(&path, &good).unwrap();
        let store = SessionStore::open(&path).unwrap();
        store.put(quad("b")).unwrap();
        drop(store);
        let store = SessionStore::open(&path).unwrap();
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn purge_variants() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let store = SessionStore::open(&path).unwrap();
        assert_eq!(store.purge(PurgeFilter::All).unwrap(), 0);
        for i in 0..5 {
            store.put(quad(&format!("s{i}"))).unwrap();
        }
        let mut old = quad("old");
        old.created_at = 1_000;
        store.put(old).unwrap();
        assert_eq!(store.purge(PurgeFilter::OlderThanMs(60_000)).unwrap(), 1);
        assert_eq!(store.len(), 5);
        assert_eq!(store.purge(PurgeFilter::OlderThanMs(0)).unwrap(), 5);
        assert!(store.is_empty());
        drop(store);
        assert!(SessionStore::open(&path).unwrap().is_empty());
    }

    #[test]
    fn recent_is_newest_first() {
        let store = SessionStore::in_memory();
        for i in 0..5 {
            store.put(quad(&format!("s{i}"))).unwrap();
        }
        let ids: Vec<_> = store.recent(2).into_iter().map(|q| q.session_id).collect();
        assert_eq!(ids, ["s4", "s3"]);
    }

    #[test]
    fn concurrent_puts_all_land() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let store = std::sync::Arc::new(SessionStore::open(&path).unwrap().without_fsync());
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let store = store.clone();
                std::thread::spawn(move || {
                    for i in 0..25 {
                        store.put(quad(&format!("t{t}-{i}"))).unwrap();
                        assert!(store.get(&format!("t{t}-{i}")).is_some());
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let in_memory = store.snapshot();
        drop(store);
        let reloaded = SessionStore::open(&path).unwrap().snapshot();
        assert_eq!(in_memory.len(), 200);
        assert_eq!(reloaded, in_memory);
    }
}
