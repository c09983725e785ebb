use std::path::{Component, Path, PathBuf};

use anyhow::Result;

use crate::usage;

/// Output root: `$BNF_OUT_DIR`, else `./runs`.
pub fn out_root() -> PathBuf {
    std::env::var_os("BNF_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

/// Resolves `rel` under the output root. Absolute paths and `..` are
/// refused so nothing lands outside it.
pub fn under_root(rel: &Path) -> Result<PathBuf> {
    if rel.as_os_str().is_empty() {
        return Err(usage("empty output path"));
    }
    for c in rel.components() {
        match c {
            Component::Normal(_) | Component::CurDir => {}
            _ => return Err(usage(format!("output path {} must stay inside the output root", rel.display()))),
        }
    }
    Ok(out_root().join(rel))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_refused() {
        assert!(under_root(Path::new("../x")).is_err());
        assert!(under_root(Path::new("/tmp/x")).is_err());
        assert!(under_root(Path::new("a/../../x")).is_err());
        assert!(under_root(Path::new("")).is_err());
        assert!(under_root(Path::new("a/b.bnt")).unwrap().ends_with("a/b.bnt"));
    }
}
