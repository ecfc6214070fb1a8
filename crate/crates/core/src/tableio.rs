//! Versioned CSV containers for the inter-stage file contracts.
//!
//! Every table starts with a `# waveflow <name> v<N>` comment line so a
//! stage can refuse an incompatible input instead of misreading it.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Creates a table file with its schema line written; the caller appends
/// CSV content.
pub(crate) fn write_table(path: &Path, schema: &str) -> Result<File> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "# {schema}").map_err(|e| Error::io(path, e))?;
    Ok(file)
}

/// Opens a table, validates the schema line, and returns a reader
/// positioned at the CSV header.
pub(crate) fn open_table(path: &Path, expected: &str) -> Result<impl Read> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let found = first.trim_start_matches('#').trim();
    if found != expected {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found: if found.is_empty() {
                "<empty>".to_string()
            } else {
                found.to_string()
            },
        });
    }
    Ok(reader)
}
