use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::session::{Attempt, Outcome};
use crate::gateway::{ChatTurn, PromptPhase, Usage};
use crate::workspace::{ToolCall, ToolResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    /// USD per million prompt tokens.
    pub input_per_million: f64,
    /// USD per million completion tokens.
    pub output_per_million: f64,
}

pub type PriceTable = BTreeMap<String, ModelPrice>;

pub fn cost_usd(prices: &PriceTable, model: &str, usage: Usage) -> Option<f64> {
    prices.get(model).map(|p| {
        usage.prompt_tokens as f64 * p.input_per_million / 1e6 + usage.completion_tokens as f64 * p.output_per_million / 1e6
    })
}

/// Rough token count used when a backend reports no usage.
pub fn estimate_tokens(text_chars: usize) -> u64 {
    text_chars.div_ceil(4) as u64
}

/// One line of `trajectory.jsonl`. Chat turns use the same shape as the
/// scripted transcript format, so a trajectory can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrajectoryRecord {
    Turn {
        phase: PromptPhase,
        attempt: u32,
        #[serde(flatten)]
        turn: ChatTurn,
    },
    Tool {
        phase: PromptPhase,
        attempt: u32,
        call: ToolCall,
        result: ToolResult,
    },
    Event {
        phase: PromptPhase,
        attempt: u32,
        event: String,
        detail: serde_json::Value,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryUpdate {
    pub l2: Option<String>,
    pub l3: Option<String>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub instance_id: String,
    pub outcome: Outcome,
    pub failed_attempts: u32,
    pub oracle_calls: u32,
    pub final_diff: String,
    pub attempts: Vec<Attempt>,
    /// File-level containment of the ground-truth files; absent without
    /// ground truth.
    pub localization_success: Option<bool>,
    pub usage: Usage,
    pub usage_estimated: bool,
    pub cost_usd: Option<f64>,
    pub elapsed_secs: f64,
    pub memory_update: Option<MemoryUpdate>,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryRecord>,
}

impl SessionReport {
    pub fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }

    /// Writes `report.json` and `trajectory.jsonl` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let report = dir.join("report.json");
        std::fs::write(&report, serde_json::to_string_pretty(self).map_err(std::io::Error::other)? + "\n")?;
        let traj = dir.join("trajectory.jsonl");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&traj)?);
        for r in &self.trajectory {
            serde_json::to_writer(&mut f, r).map_err(std::io::Error::other)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok((report, traj))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::ToolName;

    #[test]
    fn cost_from_table() {
        let mut t = PriceTable::new();
        t.insert("m".into(), ModelPrice { input_per_million: 2.0, output_per_million: 8.0 });
        let c = cost_usd(&t, "m", Usage { prompt_tokens: 1_000_000, completion_tokens: 500_000 }).unwrap();
        assert!((c - 6.0).abs() < 1e-12);
        assert_eq!(cost_usd(&t, "other", Usage::default()), None);
        assert_eq!(estimate_tokens(9), 3);
    }

    #[test]
    fn trajectory_line_shapes() {
        let tool = TrajectoryRecord::Tool {
            phase: PromptPhase::Patcher,
            attempt: 1,
            call: ToolCall::new(ToolName::View, &[("path", "a.c")]),
            result: ToolResult::ok("x"),
        };
        let v = serde_json::to_value(&tool).unwrap();
        assert_eq!(v["call"]["name"], "view");
        assert_eq!(v["result"]["ok"], true);
        let turn = TrajectoryRecord::Turn {
            phase: PromptPhase::Locator,
            attempt: 2,
            turn: ChatTurn::assistant("done"),
        };
        let v = serde_json::to_value(&turn).unwrap();
        assert_eq!(v["role"], "assistant");
        assert_eq!(v["phase"], "locator");
        let back: TrajectoryRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, turn);
    }
}
