//! Persistent response cache.
//!
//! Layout: `entries.jsonl` is append-only, one schema-tagged [`CacheEntry`]
//! per line; `index.json` maps each key to the byte offset of its line and
//! is rewritten (via rename) after every insert. The index is advisory:
//! opening a cache always rescans the entries file.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatResponse, LlmError};
use crate::versioned::Versioned;
use crate::SCHEMA_VERSION;

pub const ENTRIES_FILE: &str = "entries.jsonl";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub response: ChatResponse,
    pub created_at: String,
    pub provider_model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
    pub by_model: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexFile {
    schema: u32,
    entries: BTreeMap<CacheKey, u64>,
}

#[derive(Debug, Default)]
struct CacheState {
    entries: HashMap<CacheKey, CacheEntry>,
    offsets: BTreeMap<CacheKey, u64>,
    file_len: u64,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    state: Mutex<CacheState>,
}

fn io_err(path: &Path, e: std::io::Error) -> LlmError {
    LlmError::Cache(format!("{}: {e}", path.display()))
}

impl ResponseCache {
    /// Cache that lives only as long as the value.
    pub fn in_memory() -> Self {
        ResponseCache { dir: None, state: Mutex::default() }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self, LlmError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let path = dir.join(ENTRIES_FILE);
        let mut state = CacheState::default();
        if path.exists() {
            let file = File::open(&path).map_err(|e| io_err(&path, e))?;
            let mut reader = BufReader::new(file);
            let mut line = String::new();
            let mut offset = 0u64;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(|e| io_err(&path, e))?;
                if n == 0 {
                    break;
                }
                if !line.ends_with('\n') {
                    // Torn write from an interrupted run; dropped on the next append.
                    log::warn!("{}: ignoring incomplete final line", path.display());
                    break;
                }
                match serde_json::from_str::<Versioned<CacheEntry>>(&line) {
                    Ok(v) if v.schema == SCHEMA_VERSION => {
                        state.offsets.insert(v.inner.key.clone(), offset);
                        state.entries.insert(v.inner.key.clone(), v.inner);
                    }
                    Ok(v) => log::warn!("{}: skipping entry with schema {}", path.display(), v.schema),
                    Err(e) => log::warn!("{}: skipping unreadable entry at byte {offset}: {e}", path.display()),
                }
                offset += n as u64;
            }
            state.file_len = offset;
        }
        let cache = ResponseCache { dir: Some(dir), state: Mutex::new(state) };
        {
            let st = cache.state.lock().unwrap();
            cache.write_index(&st)?;
        }
        Ok(cache)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get(&self, key: &CacheKey) -> Option<ChatResponse> {
        self.state.lock().unwrap().entries.get(key).map(|e| e.response.clone())
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.state.lock().unwrap().entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `entry` unless its key is already present.
    pub fn insert(&self, entry: CacheEntry) -> Result<(), LlmError> {
        let mut st = self.state.lock().unwrap();
        if st.entries.contains_key(&entry.key) {
            return Ok(());
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(ENTRIES_FILE);
            let mut file = OpenOptions::new().create(true).write(true).truncate(false).open(&path).map_err(|e| io_err(&path, e))?;
            // Drop any torn tail before appending.
            file.set_len(st.file_len).map_err(|e| io_err(&path, e))?;
            use std::io::Seek;
            file.seek(std::io::SeekFrom::Start(st.file_len)).map_err(|e| io_err(&path, e))?;
            let mut line = serde_json::to_string(&Versioned::new(&entry)).expect("cache entry serializes");
            line.push('\n');
            file.write_all(line.as_bytes()).and_then(|_| file.flush()).map_err(|e| io_err(&path, e))?;
            let offset = st.file_len;
            st.offsets.insert(entry.key.clone(), offset);
            st.file_len += line.len() as u64;
        }
        st.entries.insert(entry.key.clone(), entry);
        self.write_index(&st)
    }

    fn write_index(&self, st: &CacheState) -> Result<(), LlmError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let index = IndexFile { schema: SCHEMA_VERSION, entries: st.offsets.clone() };
        let tmp = dir.join(format!("{INDEX_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(&index).expect("index serializes")).map_err(|e| io_err(&tmp, e))?;
        std::fs::rename(&tmp, dir.join(INDEX_FILE)).map_err(|e| io_err(&tmp, e))
    }

    pub fn stats(&self) -> CacheStats {
        let st = self.state.lock().unwrap();
        let mut by_model = BTreeMap::new();
        for e in st.entries.values() {
            *by_model.entry(e.provider_model.clone()).or_insert(0) += 1;
        }
        CacheStats { entries: st.entries.len(), bytes: st.file_len, by_model }
    }

    /// Removes the cache files in `dir`; returns how many entries they held.
    pub fn clear(dir: impl AsRef<Path>) -> Result<usize, LlmError> {
        let dir = dir.as_ref();
        if !dir.join(ENTRIES_FILE).exists() {
            return Ok(0);
        }
        let n = Self::open(dir)?.len();
        for name in [ENTRIES_FILE, INDEX_FILE] {
            let path = dir.join(name);
            if path.exists() {
                std::fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
            }
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{cache_key, ChatRequest, FinishReason, Usage};

    fn entry(i: u32) -> CacheEntry {
        let req = ChatRequest::single_turn("m", "s", format!("q{i}"), 0.0, 10);
        CacheEntry {
            key: cache_key(&req),
            response: ChatResponse {
                content: format!("answer {i}"),
                finish_reason: FinishReason::Stop,
                usage: Usage { prompt_tokens: 3, completion_tokens: 2, estimated: true },
                latency_ms: 0,
            },
            created_at: "2024-01-01T00:00:00Z".into(),
            provider_model: "m".into(),
        }
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let c = ResponseCache::open(dir.path()).unwrap();
            c.insert(entry(1)).unwrap();
            c.insert(entry(2)).unwrap();
            c.insert(entry(1)).unwrap();
        }
        let c = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(&entry(2).key).unwrap().content, "answer 2");
        let text = std::fs::read_to_string(dir.path().join(ENTRIES_FILE)).unwrap();
        assert_eq!(text.lines().count(), 2);
        let index: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap()).unwrap();
        let second = index["entries"][entry(2).key.as_str()].as_u64().unwrap() as usize;
        assert!(text[second..].contains("answer 2"));
        assert_eq!(c.stats().by_model["m"], 2);
    }

    #[test]
    fn torn_tail_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        {
            let c = ResponseCache::open(dir.path()).unwrap();
            c.insert(entry(1)).unwrap();
        }
        let path = dir.path().join(ENTRIES_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"schema\":1,\"key\":\"ab").unwrap();
        drop(f);
        let c = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(c.len(), 1);
        c.insert(entry(3)).unwrap();
        let c = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(c.len(), 2);
        assert!(std::fs::read_to_string(&path).unwrap().lines().all(|l| l.ends_with('}')));
    }

    #[test]
    fn clear_removes_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::open(dir.path()).unwrap();
        c.insert(entry(1)).unwrap();
        drop(c);
        assert_eq!(ResponseCache::clear(dir.path()).unwrap(), 1);
        assert!(!dir.path().join(ENTRIES_FILE).exists());
        assert_eq!(ResponseCache::clear(dir.path()).unwrap(), 0);
    }
}
