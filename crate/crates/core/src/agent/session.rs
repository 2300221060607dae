use serde::{Deserialize, Serialize};

use crate::localizer::LocalizationObject;
use crate::memory::RetrievalKeys;
use crate::oracle::VerificationVerdict;
use crate::workspace::CompressedContext;

pub const DEFAULT_MAX_FAILED_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Locate,
    Patch,
    Verify,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Success,
    Relocate,
    Regenerate,
}

impl Transition {
    /// A persisting vulnerability always sends the session back to
    /// localization, whatever the regression status.
    pub fn from_verdict(v: &VerificationVerdict) -> Self {
        match (v.vuln_mitigated, v.functionality_preserved) {
            (true, true) => Transition::Success,
            (false, _) => Transition::Relocate,
            (true, false) => Transition::Regenerate,
        }
    }

    pub fn next_phase(self) -> Phase {
        match self {
            Transition::Success => Phase::Done,
            Transition::Relocate => Phase::Locate,
            Transition::Regenerate => Phase::Patch,
        }
    }
}

pub fn decide_transition(verdict: &VerificationVerdict) -> Transition {
    Transition::from_verdict(verdict)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Exhausted { reason: String },
}

/// One candidate patch and what happened to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub number: u32,
    pub localization: Option<LocalizationObject>,
    /// Diff against the pristine checkout; empty for an empty patch.
    pub patch: String,
    pub transition: Transition,
    /// Absent when the oracle was not run (empty patch, oracle error).
    pub verdict: Option<VerificationVerdict>,
    pub failure_reason: Option<String>,
}

impl Attempt {
    pub fn failed(&self) -> bool {
        self.transition != Transition::Success
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairSession {
    pub keys: RetrievalKeys,
    pub phase: Phase,
    pub attempts: Vec<Attempt>,
    pub outcome: Option<Outcome>,
    pub current_loc: Option<LocalizationObject>,
    pub compressed: Option<CompressedContext>,
    /// Diff between the working trees of the last failed candidate and the
    /// accepted one, filled in on success.
    pub correction_delta: Option<String>,
}

impl RepairSession {
    pub fn new(keys: RetrievalKeys) -> Self {
        Self {
            keys,
            phase: Phase::Locate,
            attempts: Vec::new(),
            outcome: None,
            current_loc: None,
            compressed: None,
            correction_delta: None,
        }
    }

    pub fn failed_attempts(&self) -> u32 {
        self.attempts.iter().filter(|a| a.failed()).count() as u32
    }

    pub fn accepted_patch(&self) -> Option<&str> {
        match self.outcome {
            Some(Outcome::Success) => self
                .attempts
                .iter()
                .rev()
                .find(|a| !a.failed())
                .map(|a| a.patch.as_str()),
            _ => None,
        }
    }

    /// Last failed attempt that produced a non-empty candidate.
    pub fn last_failed(&self) -> Option<&Attempt> {
        self.attempts.iter().rev().find(|a| a.failed() && !a.patch.trim().is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(v: bool, f: bool) -> VerificationVerdict {
        VerificationVerdict {
            vuln_mitigated: v,
            functionality_preserved: f,
            build_ok: true,
            logs: String::new(),
        }
    }

    #[test]
    fn tri_state_table() {
        assert_eq!(decide_transition(&verdict(true, true)), Transition::Success);
        assert_eq!(decide_transition(&verdict(false, true)), Transition::Relocate);
        assert_eq!(decide_transition(&verdict(true, false)), Transition::Regenerate);
        assert_eq!(decide_transition(&verdict(false, false)), Transition::Relocate);
    }

    #[test]
    fn outcome_json() {
        let s = serde_json::to_string(&Outcome::Exhausted { reason: "cap".into() }).unwrap();
        assert_eq!(s, r#"{"status":"exhausted","reason":"cap"}"#);
        assert_eq!(serde_json::to_string(&Outcome::Success).unwrap(), r#"{"status":"success"}"#);
    }
}
