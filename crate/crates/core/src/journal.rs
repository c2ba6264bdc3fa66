//! Append-only interaction journal, undo and deterministic replay.
//!
//! The on-disk journal is newline-delimited JSON, one object per record:
//!
//! ```text
//! {"id":1,"ts":"2024-05-01T12:00:00Z","kind":"refit","base_version":0,"result_version":1,"payload":{...}}
//! ```
//!
//! Refit payloads carry the complete spec and solver parameters plus a
//! digest of the produced vectors, so a journal can be re-executed against
//! its base space and checked record by record.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::refit::{refit, AttractSpec, RefitOutcome, RefitParams};
use crate::scalar::Scalar;
use crate::similarity::{top_k, SearchResult};
use crate::store::{EmbeddingSpace, Store, VersionId};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Search,
    Refit,
    Snapshot,
    Undo,
}

impl RecordKind {
    /// Everything but search takes part in the version chain.
    pub fn is_mutating(self) -> bool {
        self != RecordKind::Search
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchPayload {
    pub query: String,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RefitPayload<T> {
    #[serde(flatten)]
    pub spec: AttractSpec<T>,
    #[serde(flatten)]
    pub params: RefitParams<T>,
    /// Digest of the committed update set.
    pub result_digest: String,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SnapshotPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UndoPayload {
    pub target_version: VersionId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload<T> {
    Search(SearchPayload),
    Refit(RefitPayload<T>),
    Snapshot(SnapshotPayload),
    Undo(UndoPayload),
}

impl<T> Payload<T> {
    pub fn kind(&self) -> RecordKind {
        match self {
            Payload::Search(_) => RecordKind::Search,
            Payload::Refit(_) => RecordKind::Refit,
            Payload::Snapshot(_) => RecordKind::Snapshot,
            Payload::Undo(_) => RecordKind::Undo,
        }
    }
}

/// One journaled user action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "RecordWire", try_from = "RecordWire", bound = "T: Scalar")]
pub struct InteractionRecord<T> {
    pub id: u64,
    pub ts: DateTime<Utc>,
    pub base_version: VersionId,
    pub result_version: VersionId,
    pub payload: Payload<T>,
}

impl<T> InteractionRecord<T> {
    pub fn kind(&self) -> RecordKind {
        self.payload.kind()
    }
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    id: u64,
    ts: DateTime<Utc>,
    kind: RecordKind,
    base_version: VersionId,
    result_version: VersionId,
    payload: Value,
}

impl<T: Scalar> From<InteractionRecord<T>> for RecordWire {
    fn from(r: InteractionRecord<T>) -> Self {
        let kind = r.kind();
        let payload = match r.payload {
            Payload::Search(p) => serde_json::to_value(p),
            Payload::Refit(p) => serde_json::to_value(p),
            Payload::Snapshot(p) => serde_json::to_value(p),
            Payload::Undo(p) => serde_json::to_value(p),
        }
        .expect("payloads serialize to JSON");
        RecordWire {
            id: r.id,
            ts: r.ts,
            kind,
            base_version: r.base_version,
            result_version: r.result_version,
            payload,
        }
    }
}

impl<T: Scalar> TryFrom<RecordWire> for InteractionRecord<T> {
    type Error = serde_json::Error;

    fn try_from(w: RecordWire) -> std::result::Result<Self, Self::Error> {
        let payload = match w.kind {
            RecordKind::Search => Payload::Search(serde_json::from_value(w.payload)?),
            RecordKind::Refit => Payload::Refit(serde_json::from_value(w.payload)?),
            RecordKind::Snapshot => Payload::Snapshot(serde_json::from_value(w.payload)?),
            RecordKind::Undo => Payload::Undo(serde_json::from_value(w.payload)?),
        };
        Ok(InteractionRecord {
            id: w.id,
            ts: w.ts,
            base_version: w.base_version,
            result_version: w.result_version,
            payload,
        })
    }
}

/// Record contents before an id and timestamp are assigned.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry<T> {
    pub base_version: VersionId,
    pub result_version: VersionId,
    pub payload: Payload<T>,
}

/// Ordered records, optionally mirrored to an NDJSON file.
#[derive(Debug)]
pub struct Journal<T> {
    records: Vec<InteractionRecord<T>>,
    file: Option<(PathBuf, File)>,
}

impl<T: Scalar> Journal<T> {
    pub fn in_memory() -> Self {
        Journal {
            records: Vec::new(),
            file: None,
        }
    }

    /// Opens (creating if needed) a journal file and loads its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let records = if path.exists() {
            read_records(BufReader::new(File::open(path)?))?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Journal {
            records,
            file: Some((path.to_path_buf(), file)),
        })
    }

    pub fn records(&self) -> &[InteractionRecord<T>] {
        &self.records
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn next_id(&self) -> u64 {
        self.records.last().map_or(1, |r| r.id + 1)
    }

    /// Appends `entry`; the line is flushed and synced before returning.
    pub fn append(&mut self, entry: Entry<T>) -> Result<u64> {
        let record = InteractionRecord {
            id: self.next_id(),
            ts: Utc::now(),
            base_version: entry.base_version,
            result_version: entry.result_version,
            payload: entry.payload,
        };
        if let Some((_, file)) = &mut self.file {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        let id = record.id;
        self.records.push(record);
        Ok(id)
    }
}

/// Parses NDJSON records; blank lines are ignored.
pub fn read_records<T: Scalar, R: BufRead>(reader: R) -> Result<Vec<InteractionRecord<T>>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| Error::JournalFormat { line: i + 1, source })?;
        out.push(record);
    }
    Ok(out)
}

/// Checks id ordering and that each mutating record starts where the
/// previous mutating record ended.
pub fn verify_chain<T>(records: &[InteractionRecord<T>], base: VersionId) -> Result<()> {
    let mut last_id = 0;
    let mut current = base;
    for r in records {
        if r.id <= last_id {
            return Err(Error::ChainMismatch(format!("record id {} follows {last_id}", r.id)));
        }
        last_id = r.id;
        if !r.kind().is_mutating() {
            continue;
        }
        if r.base_version != current {
            return Err(Error::ChainMismatch(format!(
                "record {} starts at version {} but the chain is at {current}",
                r.id, r.base_version
            )));
        }
        current = r.result_version;
    }
    Ok(())
}

/// A live session: the version store, its journal and the undo stack.
#[derive(Debug)]
pub struct Workbench<T> {
    store: Store<T>,
    journal: Journal<T>,
    undo_stack: Vec<VersionId>,
}

impl<T: Scalar> Workbench<T> {
    /// Starts a session on `base`. Records already in `journal` are
    /// re-executed first, so a reopened journal resumes where it stopped.
    pub fn new(base: EmbeddingSpace<T>, journal: Journal<T>) -> Result<Self> {
        let mut wb = Workbench {
            store: Store::new(base),
            journal: Journal::in_memory(),
            undo_stack: Vec::new(),
        };
        verify_chain(journal.records(), wb.version())?;
        for record in journal.records() {
            wb.reapply(record)?;
        }
        wb.journal = journal;
        Ok(wb)
    }

    pub fn current(&self) -> Arc<EmbeddingSpace<T>> {
        self.store.current()
    }

    pub fn version(&self) -> VersionId {
        self.store.current_version()
    }

    pub fn store(&self) -> &Store<T> {
        &self.store
    }

    pub fn records(&self) -> &[InteractionRecord<T>] {
        self.journal.records()
    }

    pub fn can_undo(&self) -> bool {
        !self.undo_stack.is_empty()
    }

    /// Searches the current version and journals the query.
    pub fn search(&mut self, query: &str, k: usize) -> Result<SearchResult<T>> {
        let result = top_k(&self.current(), query, k)?;
        self.record_search(query, k, self.version())?;
        Ok(result)
    }

    /// Journals a search that was computed against `version`.
    pub fn record_search(&mut self, query: &str, k: usize, version: VersionId) -> Result<u64> {
        self.journal.append(Entry {
            base_version: version,
            result_version: version,
            payload: Payload::Search(SearchPayload {
                query: query.to_string(),
                k,
            }),
        })
    }

    /// Runs a refit against `base_version` (which must be current) and commits it.
    pub fn refit(
        &mut self,
        spec: &AttractSpec<T>,
        params: &RefitParams<T>,
        base_version: VersionId,
    ) -> Result<(RefitOutcome<T>, VersionId)> {
        self.ensure_current(base_version)?;
        let outcome = refit(&self.current(), spec, params)?;
        let version = self.commit_refit(spec, params, &outcome)?;
        Ok((outcome, version))
    }

    /// Commits an outcome computed elsewhere. Fails with a version mismatch
    /// when the store moved on since the outcome's base version.
    pub fn commit_refit(
        &mut self,
        spec: &AttractSpec<T>,
        params: &RefitParams<T>,
        outcome: &RefitOutcome<T>,
    ) -> Result<VersionId> {
        let base = outcome.updates.base_version;
        self.ensure_current(base)?;
        let next = self.store.prepare(&outcome.updates)?;
        self.journal.append(Entry {
            base_version: base,
            result_version: next.version(),
            payload: Payload::Refit(RefitPayload {
                spec: spec.clone(),
                params: params.clone(),
                result_digest: outcome.updates.digest(),
            }),
        })?;
        let version = self.store.install(next);
        self.undo_stack.push(base);
        Ok(version)
    }

    /// Reverts to the version before the most recent refit that has not
    /// been undone. The undo itself is journaled.
    pub fn undo(&mut self) -> Result<VersionId> {
        let target = *self.undo_stack.last().ok_or(Error::NothingToUndo)?;
        self.journal.append(Entry {
            base_version: self.version(),
            result_version: target,
            payload: Payload::Undo(UndoPayload {
                target_version: target,
            }),
        })?;
        self.undo_stack.pop();
        self.store.checkout(target)?;
        Ok(target)
    }

    /// Pins the current version under an optional label.
    pub fn snapshot(&mut self, label: Option<String>) -> Result<VersionId> {
        let v = self.version();
        self.journal.append(Entry {
            base_version: v,
            result_version: v,
            payload: Payload::Snapshot(SnapshotPayload { label }),
        })?;
        Ok(v)
    }

    fn ensure_current(&self, base: VersionId) -> Result<()> {
        if base != self.version() {
            return Err(Error::VersionMismatch {
                expected: base,
                current: self.version(),
            });
        }
        Ok(())
    }

    /// Re-executes one record without journaling it.
    fn reapply(&mut self, record: &InteractionRecord<T>) -> Result<()> {
        let mismatch = |what: String| Err(Error::ChainMismatch(format!("record {}: {what}", record.id)));
        if record.kind().is_mutating() && record.base_version != self.version() {
            return mismatch(format!(
                "expected base version {}, replay is at {}",
                record.base_version,
                self.version()
            ));
        }
        match &record.payload {
            Payload::Search(_) => {}
            Payload::Snapshot(_) => {
                if record.result_version != record.base_version {
                    return mismatch("snapshot changes the version".into());
                }
            }
            Payload::Refit(p) => {
                let outcome = refit(&self.current(), &p.spec, &p.params)?;
                if outcome.updates.digest() != p.result_digest {
                    return mismatch("re-executed refit produced different vectors".into());
                }
                let next = self.store.prepare(&outcome.updates)?;
                if next.version() != record.result_version {
                    return mismatch(format!(
                        "refit produced version {}, journal says {}",
                        next.version(),
                        record.result_version
                    ));
                }
                self.store.install(next);
                self.undo_stack.push(record.base_version);
            }
            Payload::Undo(p) => {
                let target = self.undo_stack.pop();
                if target != Some(p.target_version) || p.target_version != record.result_version {
                    return mismatch(format!("undo to {} does not match the undo stack", p.target_version));
                }
                self.store.checkout(p.target_version)?;
            }
        }
        Ok(())
    }
}

/// Re-executes every refit and undo in `records` on top of `base` and
/// returns the resulting space. Searches are skipped.
pub fn replay<T: Scalar>(records: &[InteractionRecord<T>], base: EmbeddingSpace<T>) -> Result<Arc<EmbeddingSpace<T>>> {
    verify_chain(records, base.version())?;
    let mut wb = Workbench {
        store: Store::new(base),
        journal: Journal::in_memory(),
        undo_stack: Vec::new(),
    };
    for record in records {
        wb.reapply(record)?;
    }
    Ok(wb.current())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refit::{build_spec, Mode};
    use crate::store::{load_str, TextFormat};

    fn base() -> EmbeddingSpace<f64> {
        load_str("3 2\na 1 0\nb 0 1\nc 1 1", TextFormat::Word2VecText).unwrap()
    }

    fn clique(words: &[&str]) -> AttractSpec<f64> {
        let words: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        build_spec(Mode::Clique, &words, None, &RefitParams::default()).unwrap()
    }

    #[test]
    fn ids_start_at_one_and_increase() {
        let mut j = Journal::<f64>::in_memory();
        let entry = Entry {
            base_version: VersionId::BASE,
            result_version: VersionId::BASE,
            payload: Payload::Snapshot(SnapshotPayload::default()),
        };
        assert_eq!(j.append(entry.clone()).unwrap(), 1);
        assert_eq!(j.append(entry).unwrap(), 2);
    }

    #[test]
    fn refit_then_undo_restores_version() {
        let mut wb = Workbench::new(base(), Journal::in_memory()).unwrap();
        let (_, v1) = wb.refit(&clique(&["a", "b"]), &RefitParams::default(), VersionId::BASE).unwrap();
        assert_eq!(v1, VersionId(1));
        assert_ne!(*wb.current(), base());
        assert_eq!(wb.undo().unwrap(), VersionId::BASE);
        assert_eq!(wb.version(), VersionId::BASE);
        assert_eq!(*wb.current(), base());
        let kinds: Vec<_> = wb.records().iter().map(|r| r.kind()).collect();
        assert_eq!(kinds, [RecordKind::Refit, RecordKind::Undo]);
    }

    #[test]
    fn undo_on_fresh_session_fails() {
        let mut wb = Workbench::new(base(), Journal::in_memory()).unwrap();
        assert!(matches!(wb.undo(), Err(Error::NothingToUndo)));
        assert!(wb.records().is_empty());
    }

    #[test]
    fn stale_base_is_rejected() {
        let mut wb = Workbench::new(base(), Journal::in_memory()).unwrap();
        let p = RefitParams::default();
        wb.refit(&clique(&["a", "b"]), &p, VersionId::BASE).unwrap();
        assert!(matches!(
            wb.refit(&clique(&["a", "c"]), &p, VersionId::BASE),
            Err(Error::VersionMismatch { .. })
        ));
        assert_eq!(wb.records().len(), 1);
    }

    #[test]
    fn replay_reproduces_redo() {
        let mut wb = Workbench::new(base(), Journal::in_memory()).unwrap();
        let p = RefitParams::default();
        wb.refit(&clique(&["a", "b", "c"]), &p, VersionId::BASE).unwrap();
        let after = wb.current();
        wb.undo().unwrap();
        // redo by replaying only the refit record
        let refit_only = &wb.records()[..1];
        assert_eq!(*replay(refit_only, base()).unwrap(), *after);
        assert_eq!(*replay(wb.records(), base()).unwrap(), base());
    }

    #[test]
    fn searches_are_journaled_but_not_replayed() {
        let mut wb = Workbench::new(base(), Journal::in_memory()).unwrap();
        let hits = wb.search("a", 1).unwrap();
        assert_eq!(hits.hits[0].word, "c");
        assert_eq!(wb.records()[0].kind(), RecordKind::Search);
        assert!(wb.search("nope", 1).is_err());
        assert_eq!(wb.records().len(), 1);
        assert_eq!(*replay(wb.records(), base()).unwrap(), base());
    }

    #[test]
    fn replay_detects_foreign_base() {
        let mut wb = Workbench::new(base(), Journal::in_memory()).unwrap();
        wb.refit(&clique(&["a", "b"]), &RefitParams::default(), VersionId::BASE).unwrap();
        let other = load_str::<f64>("3 2\na 2 0\nb 0 1\nc 1 1", TextFormat::Word2VecText).unwrap();
        assert!(matches!(replay(wb.records(), other), Err(Error::ChainMismatch(_))));
    }

    #[test]
    fn chain_verification() {
        let mut wb = Workbench::new(base(), Journal::in_memory()).unwrap();
        let p = RefitParams::default();
        wb.refit(&clique(&["a", "b"]), &p, VersionId::BASE).unwrap();
        wb.snapshot(Some("checkpoint".into())).unwrap();
        wb.refit(&clique(&["b", "c"]), &p, VersionId(1)).unwrap();
        let mut records = wb.records().to_vec();
        verify_chain(&records, VersionId::BASE).unwrap();
        records.remove(0);
        assert!(verify_chain(&records, VersionId::BASE).is_err());
    }

    #[test]
    fn file_round_trip_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.ndjson");
        let p = RefitParams::default();
        let final_space = {
            let mut wb = Workbench::new(base(), Journal::open(&path).unwrap()).unwrap();
            wb.refit(&clique(&["a", "b"]), &p, VersionId::BASE).unwrap();
            wb.search("c", 2).unwrap();
            wb.current()
        };
        let text = std::fs::read_to_string(&path).unwrap();
        let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["id", "ts", "kind", "base_version", "result_version", "payload"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        for key in ["members", "mode", "edges", "alpha", "beta", "max_sweeps", "tolerance"] {
            assert!(first["payload"].get(key).is_some(), "payload missing {key}");
        }
        assert!(DateTime::parse_from_rfc3339(first["ts"].as_str().unwrap()).is_ok());

        let mut wb = Workbench::new(base(), Journal::open(&path).unwrap()).unwrap();
        assert_eq!(*wb.current(), *final_space);
        assert_eq!(wb.version(), VersionId(1));
        assert_eq!(wb.snapshot(None).unwrap(), VersionId(1));
        assert_eq!(wb.records().last().unwrap().id, 3);
        // the reopened session still knows how to undo the first refit
        assert_eq!(wb.undo().unwrap(), VersionId::BASE);
    }
}
