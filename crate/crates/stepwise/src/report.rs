//! CSV emission with a stable, replayable layout.
//!
//! Every file starts with one `#` comment line carrying the artifact version
//! and the full configuration that produced it, then a header row, then data
//! rows. Numbers are formatted with the shortest round-trip representation,
//! so identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Writes a CSV file: one comment line, a header, then rows.
pub fn write_csv<P, I>(path: P, comment: &str, header: &str, rows: I) -> Result<()>
where
    P: AsRef<Path>,
    I: IntoIterator<Item = String>,
{
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# {comment}")?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// Rule spec sanitized for file names (`:`/`=`/`,` become `-`).
pub fn file_label(spec: &str) -> String {
    spec.chars()
        .map(|c| if c == ':' || c == '=' || c == ',' { '-' } else { c })
        .collect()
}
