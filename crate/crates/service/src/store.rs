//! Append-only JSONL store: one [`ReadingRecord`] per accepted frame.
//! Schema in docs/store.md.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use floc_core::datamodel::{SensorFrame, Severity};

/// One accepted reading with its prediction and alerting outcome.
/// `alert_sent` means the alert gate passed and dispatch was attempted;
/// delivery itself is best-effort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingRecord {
    /// Wall-clock Unix seconds at ingestion.
    pub received_at: u64,
    pub frame: SensorFrame,
    /// DO class index 0–3, as in the webhook payload.
    pub predicted_class: u8,
    pub class_label: String,
    pub probabilities: [f64; 4],
    pub severity: Severity,
    pub alert_sent: bool,
}

/// Writer half. Writes are line-atomic (single buffered `writeln` +
/// flush) under an internal lock.
pub struct JsonlStore {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl JsonlStore {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<JsonlStore> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(JsonlStore { path, writer: Mutex::new(BufWriter::new(file)) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &ReadingRecord) -> std::io::Result<()> {
        let line = serde_json::to_string(record)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let mut writer = self.writer.lock().expect("store lock");
        writeln!(writer, "{line}")?;
        writer.flush()
    }

    /// Flush buffers and fsync; called on graceful shutdown.
    pub fn sync(&self) -> std::io::Result<()> {
        let mut writer = self.writer.lock().expect("store lock");
        writer.flush()?;
        writer.get_ref().sync_all()
    }
}

/// Read an entire store file back. Test and tooling helper.
pub fn read_all(path: impl AsRef<Path>) -> std::io::Result<Vec<ReadingRecord>> {
    let file = File::open(path.as_ref())?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        records.push(record);
    }
    Ok(records)
}
