//! Exit-code aware errors and atomic file output.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use d2d_core::trace::{parse_event_log, parse_relationships, ParsedLog, TierIndex, Trace};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn invariant(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVARIANT,
            message: message.into(),
        }
    }

    /// Wraps a library error, naming the file it concerns.
    pub fn at(path: &Path, err: d2d_core::Error) -> Self {
        let mut f = Failure::from(err);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<d2d_core::Error> for Failure {
    fn from(err: d2d_core::Error) -> Self {
        Failure {
            code: if err.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_INVARIANT
            },
            message: err.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

/// Parses an event log; strict mode aborts on the first malformed line.
pub fn load_log(path: &Path, strict: bool) -> CliResult<ParsedLog> {
    parse_event_log(open(path)?, strict).map_err(|e| Failure::at(path, e))
}

pub fn load_trace(path: &Path) -> CliResult<Trace> {
    Ok(load_log(path, true)?.trace)
}

/// Relationship tiers from `path`, or an empty index (everyone a stranger).
pub fn load_tiers(path: Option<&Path>) -> CliResult<TierIndex> {
    match path {
        None => Ok(TierIndex::default()),
        Some(p) => {
            let records = parse_relationships(open(p)?).map_err(|e| Failure::at(p, e))?;
            TierIndex::new(&records).map_err(|e| Failure::at(p, e))
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Failure::input(format!("{}: invalid JSON: {e}", path.display())))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let fail = |e: std::io::Error| Failure::input(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)
        .map_err(|e| Failure::invariant(format!("serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, &json_bytes(value)?)
}

/// CSV text with the given header followed by one record per row.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> CliResult<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let fail = |e: csv::Error| Failure::invariant(format!("csv encoding failed: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| Failure::invariant(format!("csv encoding failed: {e}")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
