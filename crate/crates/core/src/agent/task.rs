use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::memory::{normalize_cwe, RetrievalKeys};
use crate::oracle::{OracleSpec, PassPredicates};

/// On-disk `task.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFile {
    /// Repository path, relative to the task file's directory.
    pub repo: String,
    #[serde(default)]
    pub build_command: Option<String>,
    pub poc_command: String,
    pub regression_command: String,
    #[serde(default)]
    pub pass_predicates: PassPredicates,
    pub description: String,
    pub project: String,
    pub cwe: String,
    pub language: String,
    pub instance_id: String,
    /// Files touched by the reference fix, for localization reporting.
    #[serde(default)]
    pub ground_truth_files: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("cannot read task file {0}: {1}")]
    Unreadable(PathBuf, std::io::Error),
    #[error("task file {0} is invalid: {1}")]
    Invalid(PathBuf, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairTask {
    pub root: PathBuf,
    pub oracle: OracleSpec,
    pub keys: RetrievalKeys,
    pub ground_truth_files: Vec<String>,
}

impl RepairTask {
    pub fn from_task_file(file: TaskFile, base_dir: &Path) -> Self {
        let repo = Path::new(&file.repo);
        let root = if repo.is_absolute() { repo.to_path_buf() } else { base_dir.join(repo) };
        Self {
            root,
            oracle: OracleSpec {
                poc_command: file.poc_command,
                regression_command: file.regression_command,
                build_command: file.build_command.filter(|b| !b.trim().is_empty()),
                pass_predicates: file.pass_predicates,
            },
            keys: RetrievalKeys {
                project: file.project,
                cwe: normalize_cwe(&file.cwe),
                language: file.language.to_ascii_lowercase(),
                instance_id: file.instance_id,
                description: file.description,
            },
            ground_truth_files: file.ground_truth_files,
        }
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let text = std::fs::read_to_string(path).map_err(|e| TaskError::Unreadable(path.to_path_buf(), e))?;
        let file: TaskFile =
            serde_json::from_str(&text).map_err(|e| TaskError::Invalid(path.to_path_buf(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let task = Self::from_task_file(file, base);
        task.keys
            .validate()
            .map_err(|e| TaskError::Invalid(path.to_path_buf(), e.to_string()))?;
        if task.oracle.poc_command.trim().is_empty() {
            return Err(TaskError::Invalid(path.to_path_buf(), "poc_command is empty".into()));
        }
        Ok(task)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("task.json");
        std::fs::write(
            &p,
            r#"{"repo":"repo","poc_command":"./poc.sh","regression_command":"./tests.sh",
                "pass_predicates":{"poc":"sanitizer_clean"},"description":"d","project":"demo",
                "cwe":"cwe-787","language":"C","instance_id":"demo.cve-2024-1"}"#,
        )
        .unwrap();
        let t = RepairTask::load(&p).unwrap();
        assert_eq!(t.root, dir.path().join("repo"));
        assert_eq!(t.keys.cwe, "CWE-787");
        assert_eq!(t.keys.language, "c");
        assert_eq!(t.oracle.build_command, None);
    }

    #[test]
    fn missing_file_and_bad_json() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(RepairTask::load(&dir.path().join("none.json")), Err(TaskError::Unreadable(..))));
        let p = dir.path().join("bad.json");
        std::fs::write(&p, "{").unwrap();
        assert!(matches!(RepairTask::load(&p), Err(TaskError::Invalid(..))));
    }
}
