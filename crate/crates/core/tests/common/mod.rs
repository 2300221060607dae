#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use avr_core::agent::{Agent, AgentConfig, RepairTask, SessionReport};
use avr_core::gateway::ScriptedGateway;
use avr_core::memory::{MemoryStore, SharedMemory};
use avr_core::ops::prepare_workspace;
use avr_core::retrieval::embed::DeterministicEmbedder;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn safe_copy_dir() -> PathBuf {
    fixtures().join("safe_copy")
}

/// Loads the safe_copy task with its repository copied into `scratch`.
pub fn safe_copy_task(scratch: &Path) -> RepairTask {
    let mut task = RepairTask::load(&safe_copy_dir().join("task.json")).expect("fixture task loads");
    task.root = prepare_workspace(&safe_copy_dir().join("repo"), &scratch.join("repo")).expect("fixture copy");
    task
}

pub fn transcript(name: &str) -> ScriptedGateway {
    let path = match name {
        "default" => safe_copy_dir().join("transcript.jsonl"),
        other => safe_copy_dir().join("transcripts").join(format!("{other}.jsonl")),
    };
    ScriptedGateway::from_file(&path).expect("transcript parses")
}

/// Runs one scripted session on a fresh copy of the fixture.
pub fn run_fixture(transcript_name: &str, store: &SharedMemory) -> SessionReport {
    let scratch = tempfile::tempdir().unwrap();
    let task = safe_copy_task(scratch.path());
    let mut gw = transcript(transcript_name);
    let emb = DeterministicEmbedder::default();
    let mut agent = Agent::new(&mut gw, &emb, AgentConfig::default());
    agent.run_session(&task, store).expect("session starts")
}

pub fn empty_store() -> SharedMemory {
    MemoryStore::new().into_shared()
}

/// SHA-256 over every regular file below `root` except `.git`, in path
/// order, covering both names and contents.
pub fn tree_hash(root: &Path) -> String {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_entry(|e| e.file_name() != ".git")
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .collect();
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&f).unwrap());
        h.update([0]);
    }
    format!("{:x}", h.finalize())
}

const STOP: [&str; 23] = [
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "is", "it", "of", "on", "or", "that", "the",
    "this", "to", "via", "was", "with",
];

/// Hashing embedder written from its description: lowercase `[a-z0-9_]`
/// words minus stop words, FNV-1a per word, bucket `h % dim`, sign from
/// bit 32, L2-normalized.
pub fn oracle_embed(text: &str, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if text.trim().is_empty() {
        return out;
    }
    let mut word = String::new();
    let mut flush = |word: &mut String| {
        if !word.is_empty() && !STOP.contains(&word.as_str()) {
            let mut h: u64 = 14695981039346656037;
            for b in word.bytes() {
                h = (h ^ b as u64).wrapping_mul(1099511628211);
            }
            out[(h % dim as u64) as usize] += if h & (1 << 32) == 0 { 1.0 } else { -1.0 };
        }
        word.clear();
    };
    for c in text.chars() {
        if c.is_ascii_alphanumeric() || c == '_' {
            word.push(c.to_ascii_lowercase());
        } else {
            flush(&mut word);
        }
    }
    flush(&mut word);
    let n: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        out.iter_mut().for_each(|x| *x /= n);
    }
    out
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

pub fn oracle_similarity(a: &str, b: &str) -> f64 {
    oracle_cosine(&oracle_embed(a, 384), &oracle_embed(b, 384))
}

/// `(year, sequence)` of the first `cve-YYYY-NNNN` in an id, found by a
/// plain scan.
pub fn oracle_cve(id: &str) -> Option<(u32, u64)> {
    let lower = id.to_ascii_lowercase();
    let b = lower.as_bytes();
    for i in 0..b.len() {
        if !b[i..].starts_with(b"cve-") {
            continue;
        }
        let y = &b[i + 4..];
        if y.len() >= 9 && y[..4].iter().all(u8::is_ascii_digit) && y[4] == b'-' {
            let seq: String = y[5..].iter().take_while(|c| c.is_ascii_digit()).map(|&c| c as char).collect();
            if seq.len() >= 4 {
                let year = std::str::from_utf8(&y[..4]).unwrap().parse().unwrap();
                return Some((year, seq.parse().unwrap()));
            }
        }
    }
    None
}

/// A unified diff adding `lines` to `file`.
pub fn diff_adding(file: &str, lines: &[String]) -> String {
    let mut d = format!("--- a/{file}\n+++ b/{file}\n@@ -1,1 +1,{} @@\n ctx\n", lines.len() + 1);
    for l in lines {
        d.push('+');
        d.push_str(l);
        d.push('\n');
    }
    d
}
