use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub prompt_sha256: String,
    pub response_text: String,
}

pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Recorded prompt-hash to response mapping. Read-only during runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayLog {
    entries: HashMap<String, String>,
}

impl ReplayLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.entries.insert(prompt_sha256(prompt), response.into());
    }

    pub fn lookup(&self, prompt: &str) -> Option<&str> {
        self.entries.get(&prompt_sha256(prompt)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads JSON lines of `{prompt_sha256, response_text}`. Later lines win.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry =
                serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?;
            entries.insert(entry.prompt_sha256, entry.response_text);
        }
        Ok(ReplayLog { entries })
    }

    /// Writes entries sorted by hash.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        let mut out = Vec::new();
        for k in keys {
            let entry = ReplayEntry {
                prompt_sha256: k.clone(),
                response_text: self.entries[k].clone(),
            };
            serde_json::to_writer(&mut out, &entry).expect("entry serializes");
            out.push(b'\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha_is_hex_of_prompt() {
        assert_eq!(
            prompt_sha256("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        let mut log = ReplayLog::new();
        log.insert("p1", "4");
        log.insert("p2", "I'd say 2");
        log.save(&path).unwrap();
        let loaded = ReplayLog::load(&path).unwrap();
        assert_eq!(loaded, log);
        assert_eq!(loaded.lookup("p2"), Some("I'd say 2"));
        assert_eq!(loaded.lookup("p3"), None);
    }

    #[test]
    fn malformed_line_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        let err = ReplayLog::load(&path).unwrap_err();
        assert!(err.to_string().contains("bad.jsonl"));
    }
}
