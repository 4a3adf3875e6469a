//! Run directories and atomic file emission. Batch outputs land in
//! <root>/<spec stem>/ where root is --out-dir, then $RINGPOSE_RUN_DIR,
//! then ./runs.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::Failure;

pub const RUN_DIR_ENV: &str = "RINGPOSE_RUN_DIR";

pub fn resolve(flag: Option<PathBuf>, spec_path: &Path) -> PathBuf {
    let root = flag.unwrap_or_else(|| {
        std::env::var_os(RUN_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
    });
    let stem = spec_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("run");
    root.join(stem)
}

/// Write-then-rename keeps half-written files out of the run directory
/// even if the process dies mid-emission.
pub fn write_atomic(dir: &Path, file_name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    let path = dir.join(file_name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    tmp.persist(&path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn write_file_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Failure::input(format!("{}: not a file path", path.display())))?;
    write_atomic(dir, name, contents)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dir_prefers_the_flag() {
        let dir = resolve(Some(PathBuf::from("/tmp/x")), Path::new("specs/batch.spec"));
        assert_eq!(dir, PathBuf::from("/tmp/x/batch"));
    }

    #[test]
    fn atomic_writes_replace_whole_files() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", "one").unwrap();
        write_atomic(dir.path(), "a.txt", "two").unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("a.txt")).unwrap(), "two");
        write_file_atomic(&dir.path().join("nested").join("b.txt"), "x").unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("nested/b.txt")).unwrap(),
            "x"
        );
    }
}
