//! Append-only JSON-lines transcript store.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use grounding_core::corpus::Transcript;

pub const STORE_FILE: &str = "transcripts.jsonl";

#[derive(Debug)]
pub struct TranscriptStore {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptStore {
    /// Open (creating if needed) `dir/transcripts.jsonl`.
    pub fn open(dir: &Path) -> io::Result<TranscriptStore> {
        fs::create_dir_all(dir)?;
        let path = dir.join(STORE_FILE);
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if ends_mid_line(&path)? {
            file.write_all(b"\n")?;
            file.sync_data()?;
        }
        Ok(TranscriptStore {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Write one line and fsync before returning.
    pub fn append(&self, t: &Transcript) -> io::Result<()> {
        let mut line = serde_json::to_string(t).map_err(io::Error::other)?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes())?;
        f.sync_data()
    }

    /// [`append`](Self::append), retrying with doubling delays.
    pub fn append_with_retry(
        &self,
        t: &Transcript,
        attempts: u32,
        first_delay: Duration,
    ) -> io::Result<()> {
        let mut delay = first_delay;
        let mut last = None;
        for i in 0..attempts.max(1) {
            match self.append(t) {
                Ok(()) => return Ok(()),
                Err(e) => {
                    tracing::warn!(attempt = i + 1, error = %e, dialogue = %t.dialogue_id, "transcript append failed");
                    last = Some(e);
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Every stored transcript, first occurrence per id kept. Unparseable
    /// lines (e.g. a torn final write) are skipped and counted.
    pub fn load(&self) -> io::Result<Loaded> {
        load_file(&self.path)
    }
}

fn ends_mid_line(path: &Path) -> io::Result<bool> {
    let mut f = File::open(path)?;
    if f.metadata()?.len() == 0 {
        return Ok(false);
    }
    f.seek(SeekFrom::End(-1))?;
    let mut last = [0u8; 1];
    f.read_exact(&mut last)?;
    Ok(last[0] != b'\n')
}

#[derive(Debug, Default)]
pub struct Loaded {
    pub transcripts: Vec<Transcript>,
    pub duplicates: usize,
    pub unreadable: usize,
}

pub fn load_file(path: &Path) -> io::Result<Loaded> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(e),
    };
    let mut seen = HashSet::new();
    let mut out = Loaded::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<Transcript>(line) {
            Ok(t) => {
                if seen.insert(t.dialogue_id.clone()) {
                    out.transcripts.push(t);
                } else {
                    out.duplicates += 1;
                }
            }
            Err(_) => out.unreadable += 1,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use grounding_core::synth;

    #[test]
    fn append_then_load_dedups_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let c = synth::corpus(3, 1);
        for t in &c {
            store.append(t).unwrap();
        }
        store.append(&c[1]).unwrap();
        let loaded = store.load().unwrap();
        assert_eq!(loaded.transcripts, c);
        assert_eq!(loaded.duplicates, 1);
    }

    #[test]
    fn reopen_keeps_count_and_skips_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        let c = synth::corpus(4, 2);
        {
            let store = TranscriptStore::open(dir.path()).unwrap();
            for t in &c {
                store.append(t).unwrap();
            }
        }
        let path = dir.path().join(STORE_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"format\":\"oc-tr").unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        store.append(&synth::corpus(5, 2)[4]).unwrap();
        let loaded = store.load().unwrap();
        assert_eq!(loaded.transcripts.len(), 5);
        assert_eq!(loaded.unreadable, 1);
    }

    #[test]
    fn missing_file_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_file(&dir.path().join("nope.jsonl"))
            .unwrap()
            .transcripts
            .is_empty());
    }
}
