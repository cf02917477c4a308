//! Crash-safe snapshots of [`SessionState`].
//!
//! A snapshot file has two lines: the SHA-256 of the second line in hex, then
//! the state as compact JSON. Files are replaced atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use vcm_core::log::complete_rounds_on_disk;

use crate::state::SessionState;
use crate::{Error, Result};

pub fn encode(state: &SessionState) -> String {
    let body = serde_json::to_string(state).expect("session state serializes");
    format!("{}\n{body}\n", hex::encode(Sha256::digest(body.as_bytes())))
}

pub fn decode(text: &str) -> std::result::Result<SessionState, String> {
    let mut lines = text.lines();
    let sum = lines.next().ok_or("empty snapshot")?;
    let body = lines.next().ok_or("missing state line")?;
    if lines.next().is_some() {
        return Err("trailing data after state line".into());
    }
    let actual = hex::encode(Sha256::digest(body.as_bytes()));
    if sum != actual {
        return Err(format!("checksum mismatch: recorded {sum}, computed {actual}"));
    }
    serde_json::from_str(body).map_err(|e| e.to_string())
}

/// Writes to a sibling temp file, syncs it, then renames over `path`.
pub fn write(path: &Path, state: &SessionState) -> Result<()> {
    let tmp = temp_path(path);
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::Io { path: p, source: e }
    };
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(encode(state).as_bytes()).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io(path))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        // Persist the rename itself; not every platform lets a directory be opened.
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Reads a snapshot. When it is unreadable, the error names the last round the
/// streaming log at `log` holds in full, if that log is given and readable.
pub fn read(path: &Path, log: Option<&Path>) -> Result<SessionState> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    decode(&text).map_err(|detail| Error::CorruptSnapshot {
        path: path.to_path_buf(),
        detail,
        last_valid_round: log.and_then(|l| complete_rounds_on_disk(l).ok()),
    })
}
