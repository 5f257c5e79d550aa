//! Scene persistence: an in-memory index backed by an append-only log and a
//! periodically rewritten snapshot in one directory.
//!
//! `scenes.snapshot.json` holds every live record at the time it was written;
//! `scenes.log` holds one JSON entry per write since then. Opening replays
//! both. A torn final log line (crash mid-append) is ignored.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::OpError;

const SNAPSHOT: &str = "scenes.snapshot.json";
const LOG: &str = "scenes.log";
/// Log entries written before the snapshot is rewritten.
const COMPACT_AFTER: usize = 512;
pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub revision: u64,
    /// Unix milliseconds.
    pub created_at: u64,
    pub updated_at: u64,
    pub scene: Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum LogEntry {
    Put { record: SceneRecord },
    Delete { id: String },
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Snapshot {
    records: Vec<SceneRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Page {
    pub items: Vec<SceneRecord>,
    /// Pass as `cursor` to fetch the next page; absent on the last page.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_cursor: Option<String>,
}

struct State {
    records: BTreeMap<String, SceneRecord>,
    log: File,
    pending: usize,
}

pub struct SceneStore {
    dir: PathBuf,
    state: Mutex<State>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl SceneStore {
    pub fn open(dir: &Path) -> Result<Self, OpError> {
        fs::create_dir_all(dir).map_err(OpError::internal)?;
        let mut records = BTreeMap::new();
        let snap = dir.join(SNAPSHOT);
        if snap.exists() {
            let text = fs::read_to_string(&snap).map_err(OpError::internal)?;
            let s: Snapshot = serde_json::from_str(&text).map_err(OpError::internal)?;
            for r in s.records {
                records.insert(r.id.clone(), r);
            }
        }
        let log_path = dir.join(LOG);
        let mut pending = 0;
        let mut torn = false;
        if log_path.exists() {
            let bytes = fs::read(&log_path).map_err(OpError::internal)?;
            torn = bytes.last().is_some_and(|b| *b != b'\n');
            for line in bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
                let Ok(entry) = serde_json::from_slice::<LogEntry>(line) else {
                    tracing::warn!("ignoring unreadable scene log line");
                    continue;
                };
                pending += 1;
                match entry {
                    LogEntry::Put { record } => {
                        records.insert(record.id.clone(), record);
                    }
                    LogEntry::Delete { id } => {
                        records.remove(&id);
                    }
                }
            }
        }
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(OpError::internal)?;
        if torn {
            // Terminate the partial line so the next entry starts cleanly.
            log.write_all(b"\n").map_err(OpError::internal)?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            state: Mutex::new(State { records, log, pending }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn append(&self, state: &mut State, entry: &LogEntry) -> Result<(), OpError> {
        let mut line = serde_json::to_vec(entry).map_err(OpError::internal)?;
        line.push(b'\n');
        state.log.write_all(&line).map_err(OpError::internal)?;
        state.log.sync_data().map_err(OpError::internal)?;
        state.pending += 1;
        Ok(())
    }

    /// Call after the in-memory records reflect every logged entry. The
    /// write is already durable, so a failed compaction is only logged.
    fn maybe_compact(&self, state: &mut State) {
        if state.pending >= COMPACT_AFTER {
            if let Err(e) = self.compact(state) {
                tracing::warn!(error = %e, "scene store compaction failed");
            }
        }
    }

    /// Writes a fresh snapshot (via rename) and truncates the log.
    fn compact(&self, state: &mut State) -> Result<(), OpError> {
        let snap = Snapshot {
            records: state.records.values().cloned().collect(),
        };
        let tmp = self.dir.join(format!("{SNAPSHOT}.tmp"));
        fs::write(&tmp, serde_json::to_vec(&snap).map_err(OpError::internal)?).map_err(OpError::internal)?;
        File::open(&tmp).and_then(|f| f.sync_all()).map_err(OpError::internal)?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT)).map_err(OpError::internal)?;
        state.log = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(self.dir.join(LOG))
            .map_err(OpError::internal)?;
        state.pending = 0;
        Ok(())
    }

    pub fn create(&self, scene: Value) -> Result<SceneRecord, OpError> {
        let now = now_ms();
        let record = SceneRecord {
            id: uuid::Uuid::new_v4().simple().to_string(),
            revision: 1,
            created_at: now,
            updated_at: now,
            scene,
        };
        let mut state = self.lock();
        self.append(
            &mut state,
            &LogEntry::Put {
                record: record.clone(),
            },
        )?;
        state.records.insert(record.id.clone(), record.clone());
        self.maybe_compact(&mut state);
        Ok(record)
    }

    pub fn get(&self, id: &str) -> Result<SceneRecord, OpError> {
        self.lock()
            .records
            .get(id)
            .cloned()
            .ok_or_else(|| OpError::NotFound(format!("scene `{id}`")))
    }

    /// Records in id order, strictly after `cursor`.
    pub fn list(&self, cursor: Option<&str>, limit: usize) -> Page {
        let limit = limit.clamp(1, MAX_PAGE);
        let state = self.lock();
        let iter: Box<dyn Iterator<Item = &SceneRecord>> = match cursor {
            Some(c) => Box::new(
                state
                    .records
                    .range::<str, _>((std::ops::Bound::Excluded(c), std::ops::Bound::Unbounded))
                    .map(|(_, r)| r),
            ),
            None => Box::new(state.records.values()),
        };
        let mut items: Vec<SceneRecord> = iter.take(limit + 1).cloned().collect();
        let next_cursor = if items.len() > limit {
            items.truncate(limit);
            items.last().map(|r| r.id.clone())
        } else {
            None
        };
        Page { items, next_cursor }
    }

    /// Replaces the document if `revision` is current.
    pub fn update(&self, id: &str, revision: u64, scene: Value) -> Result<SceneRecord, OpError> {
        let mut state = self.lock();
        let current = state
            .records
            .get(id)
            .ok_or_else(|| OpError::NotFound(format!("scene `{id}`")))?;
        if current.revision != revision {
            return Err(OpError::Conflict {
                expected: revision,
                current: current.revision,
            });
        }
        let record = SceneRecord {
            revision: current.revision + 1,
            updated_at: now_ms().max(current.updated_at),
            scene,
            ..current.clone()
        };
        self.append(
            &mut state,
            &LogEntry::Put {
                record: record.clone(),
            },
        )?;
        state.records.insert(id.to_string(), record.clone());
        self.maybe_compact(&mut state);
        Ok(record)
    }

    pub fn delete(&self, id: &str) -> Result<(), OpError> {
        let mut state = self.lock();
        if !state.records.contains_key(id) {
            return Err(OpError::NotFound(format!("scene `{id}`")));
        }
        self.append(&mut state, &LogEntry::Delete { id: id.to_string() })?;
        state.records.remove(id);
        self.maybe_compact(&mut state);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
