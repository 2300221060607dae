use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub file: String,
    pub line: usize,
    pub function: String,
}

/// Structured sanitizer report: the crashing stack, innermost frame first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashReport {
    pub frames: Vec<Frame>,
    pub fault_kind: String,
    pub raw: String,
}

impl CrashReport {
    pub fn crash_site(&self) -> &Frame {
        &self.frames[0]
    }
}

fn frame_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*#(\d+)\s+0x[0-9a-fA-F]+\s+in\s+(.+?)\s+(\S+?):(\d+)(?::\d+)?\s*$").unwrap()
    })
}

fn any_frame_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*#(\d+)\s+0x[0-9a-fA-F]+").unwrap())
}

fn fault_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?:ERROR|SUMMARY): [A-Za-z]*Sanitizer: ([A-Za-z0-9_-]+)").unwrap()
    })
}

/// Runtime frames that belong to the sanitizer itself rather than the
/// program under test.
fn is_runtime_frame(function: &str, file: &str) -> bool {
    const PREFIXES: [&str; 7] = [
        "__interceptor_",
        "___interceptor_",
        "__asan_",
        "__asan::",
        "__sanitizer",
        "__msan",
        "__ubsan",
    ];
    PREFIXES.iter().any(|p| function.starts_with(p))
        || file.contains("compiler-rt/")
        || file.contains("libsanitizer/")
}

/// Extracts the first stack of an AddressSanitizer-style report.
///
/// Frames without a `file:line` location and sanitizer-runtime frames are
/// dropped; the remaining frames keep their relative order. Returns `None`
/// when no source-located frame is found.
pub fn parse_crash_report(text: &str) -> Option<CrashReport> {
    let mut frames = Vec::new();
    let mut in_stack = false;
    let mut last_index: Option<u64> = None;
    for line in text.lines() {
        let Some(any) = any_frame_re().captures(line) else {
            if in_stack && line.trim().is_empty() {
                break;
            }
            continue;
        };
        let idx: u64 = any[1].parse().unwrap_or(0);
        if let Some(prev) = last_index {
            if idx <= prev {
                // A second stack (e.g. "allocated by thread T0 here:") began.
                break;
            }
        }
        in_stack = true;
        last_index = Some(idx);
        let Some(caps) = frame_re().captures(line) else {
            continue;
        };
        let function = caps[2].trim().to_string();
        let file = caps[3].to_string();
        if is_runtime_frame(&function, &file) {
            continue;
        }
        let Ok(line_no) = caps[4].parse() else {
            continue;
        };
        frames.push(Frame {
            file,
            line: line_no,
            function,
        });
    }
    if frames.is_empty() {
        return None;
    }
    let fault_kind = fault_re()
        .captures(text)
        .map(|c| c[1].to_string())
        .unwrap_or_else(|| "unknown".to_string());
    Some(CrashReport {
        frames,
        fault_kind,
        raw: text.to_string(),
    })
}
