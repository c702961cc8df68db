//! Append-only JSON-lines checkpoint of finished candidates.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use crate::llm::Judgment;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub key: String,
    pub judgment: Judgment,
}

/// Judgments by candidate key. A missing file is an empty journal; lines that
/// do not parse (a write cut short by a crash) are skipped. Later entries for
/// the same key win.
pub fn read_journal(path: &Path) -> io::Result<HashMap<String, Judgment>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(e),
    };
    let mut out = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JournalEntry>(&line) {
            Ok(e) => {
                out.insert(e.key, e.judgment);
            }
            Err(e) => log::warn!("{}: skipping journal line {}: {e}", path.display(), n + 1),
        }
    }
    Ok(out)
}

/// Single serialized sink; every entry is flushed and synced before the next.
pub struct JournalWriter {
    file: File,
}

impl JournalWriter {
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        // Terminate a torn last line so the next entry starts clean.
        let len = file.metadata()?.len();
        if len > 0 {
            file.seek(SeekFrom::Start(len - 1))?;
            let mut last = [0u8; 1];
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        Ok(JournalWriter { file })
    }

    pub fn append(&mut self, entry: &JournalEntry) -> io::Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        self.file.sync_data()
    }

    /// Move the writer onto a blocking task fed by a channel. The handle
    /// resolves to the number of entries written once every sender is gone.
    pub fn spawn(mut self, capacity: usize) -> (mpsc::Sender<JournalEntry>, JoinHandle<io::Result<usize>>) {
        let (tx, mut rx) = mpsc::channel::<JournalEntry>(capacity.max(1));
        let handle = tokio::task::spawn_blocking(move || {
            let mut n = 0;
            while let Some(entry) = rx.blocking_recv() {
                self.append(&entry)?;
                n += 1;
            }
            Ok(n)
        });
        (tx, handle)
    }
}
