//! Small filesystem helpers.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Write via a temp file in the same directory plus rename, so readers
/// never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile_path(path);
    // In the unlikely case of a collision, keep extending.
    while tmp.exists() {
        tmp.set_extension(format!(
            "{}x",
            tmp.extension().and_then(|e| e.to_str()).unwrap_or("tmp")
        ));
    }
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tempfile_path(path: &Path) -> std::path::PathBuf {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("out");
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}
