//! Workspace snapshots as git tree objects.
//!
//! A private index file (inside the git directory) tracks the full working
//! tree, including files the agent created. A snapshot is `git add -A` +
//! `git write-tree`; a rollback re-adds the current state and then resets
//! the private index and working tree to the snapshot tree, which deletes
//! files that did not exist at snapshot time. The user's own index and HEAD
//! are never touched.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_INDEX: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("{0} is not the top level of a git checkout")]
    NotVersionControlled(PathBuf),
    #[error("unknown snapshot `{0}`")]
    SnapshotMissing(String),
    #[error("git {args} failed: {stderr}")]
    Git { args: String, stderr: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SnapshotId(pub String);

impl std::fmt::Display for SnapshotId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug)]
pub struct GitSnapshots {
    root: PathBuf,
    index_file: PathBuf,
}

impl GitSnapshots {
    pub fn open(root: &Path) -> Result<Self, SnapshotError> {
        let top = git_raw(root, None, &["rev-parse", "--show-toplevel"])
            .map_err(|_| SnapshotError::NotVersionControlled(root.to_path_buf()))?;
        let top = PathBuf::from(top.trim()).canonicalize()?;
        if top != root.canonicalize()? {
            return Err(SnapshotError::NotVersionControlled(root.to_path_buf()));
        }
        let git_dir = PathBuf::from(git_raw(root, None, &["rev-parse", "--absolute-git-dir"])?.trim());
        let index_file = git_dir.join(format!(
            "avr-index-{}-{}",
            std::process::id(),
            NEXT_INDEX.fetch_add(1, Ordering::Relaxed)
        ));
        let this = Self {
            root: root.to_path_buf(),
            index_file,
        };
        if this.git(&["rev-parse", "--verify", "--quiet", "HEAD"]).is_ok() {
            this.git(&["read-tree", "HEAD"])?;
        } else {
            let _ = std::fs::remove_file(&this.index_file);
        }
        Ok(this)
    }

    fn git(&self, args: &[&str]) -> Result<String, SnapshotError> {
        git_raw(&self.root, Some(&self.index_file), args)
    }

    pub fn snapshot(&self) -> Result<SnapshotId, SnapshotError> {
        self.git(&["add", "-A", "."])?;
        let tree = self.git(&["write-tree"])?;
        Ok(SnapshotId(tree.trim().to_string()))
    }

    fn check_exists(&self, id: &SnapshotId) -> Result<(), SnapshotError> {
        match self.git(&["cat-file", "-t", &id.0]) {
            Ok(t) if t.trim() == "tree" => Ok(()),
            _ => Err(SnapshotError::SnapshotMissing(id.0.clone())),
        }
    }

    pub fn rollback(&self, id: &SnapshotId) -> Result<(), SnapshotError> {
        self.check_exists(id)?;
        self.git(&["add", "-A", "."])?;
        self.git(&["read-tree", "--reset", "-u", &id.0])?;
        Ok(())
    }

    /// Unified diff from snapshot `from` to the current working tree.
    pub fn diff_from(&self, from: &SnapshotId) -> Result<String, SnapshotError> {
        self.check_exists(from)?;
        let now = self.snapshot()?;
        self.diff_between(from, &now)
    }

    pub fn diff_between(&self, from: &SnapshotId, to: &SnapshotId) -> Result<String, SnapshotError> {
        self.check_exists(from)?;
        self.check_exists(to)?;
        self.git(&["diff", "--no-color", "--no-ext-diff", "--no-renames", &from.0, &to.0])
    }
}

impl Drop for GitSnapshots {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.index_file);
    }
}

fn git_raw(root: &Path, index: Option<&Path>, args: &[&str]) -> Result<String, SnapshotError> {
    let mut cmd = Command::new("git");
    cmd.arg("-C").arg(root).args(["-c", "core.autocrlf=false", "-c", "core.safecrlf=false"]);
    cmd.args(args);
    if let Some(index) = index {
        cmd.env("GIT_INDEX_FILE", index);
    }
    let out = cmd.output()?;
    if !out.status.success() {
        return Err(SnapshotError::Git {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// `git init` a directory if it is not already a checkout. Used when a task
/// points at a plain source tree.
pub fn ensure_git_repo(root: &Path) -> Result<(), SnapshotError> {
    if root.join(".git").exists() {
        return Ok(());
    }
    git_raw(root, None, &["init", "-q"])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn repo() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        ensure_git_repo(dir.path()).unwrap();
        fs::write(dir.path().join("a.txt"), "one\n").unwrap();
        fs::create_dir(dir.path().join("src")).unwrap();
        fs::write(dir.path().join("src/b.c"), "int b;\n").unwrap();
        dir
    }

    #[test]
    fn rejects_plain_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(GitSnapshots::open(dir.path()), Err(SnapshotError::NotVersionControlled(_))));
    }

    #[test]
    fn rollback_restores_edits_and_deletes_new_files() {
        let dir = repo();
        let s = GitSnapshots::open(dir.path()).unwrap();
        let snap = s.snapshot().unwrap();
        fs::write(dir.path().join("a.txt"), "two\n").unwrap();
        fs::write(dir.path().join("src/new.c"), "x").unwrap();
        fs::create_dir_all(dir.path().join("deep/er")).unwrap();
        fs::write(dir.path().join("deep/er/c.txt"), "c").unwrap();
        fs::remove_file(dir.path().join("src/b.c")).unwrap();
        s.rollback(&snap).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("a.txt")).unwrap(), "one\n");
        assert_eq!(fs::read_to_string(dir.path().join("src/b.c")).unwrap(), "int b;\n");
        assert!(!dir.path().join("src/new.c").exists());
        assert!(!dir.path().join("deep/er/c.txt").exists());
    }

    #[test]
    fn missing_snapshot() {
        let dir = repo();
        let s = GitSnapshots::open(dir.path()).unwrap();
        let bogus = SnapshotId("0123456789abcdef0123456789abcdef01234567".into());
        assert!(matches!(s.rollback(&bogus), Err(SnapshotError::SnapshotMissing(_))));
    }

    #[test]
    fn diff_from_snapshot() {
        let dir = repo();
        let s = GitSnapshots::open(dir.path()).unwrap();
        let snap = s.snapshot().unwrap();
        assert_eq!(s.diff_from(&snap).unwrap(), "");
        fs::write(dir.path().join("a.txt"), "uno\n").unwrap();
        let d = s.diff_from(&snap).unwrap();
        assert!(d.contains("a/a.txt") && d.contains("-one") && d.contains("+uno"));
    }

    #[test]
    fn user_index_untouched() {
        let dir = repo();
        let s = GitSnapshots::open(dir.path()).unwrap();
        s.snapshot().unwrap();
        let status = git_raw(dir.path(), None, &["status", "--porcelain"]).unwrap();
        assert!(status.lines().all(|l| l.starts_with("??")), "{status}");
    }
}
