//! Verification oracle: build, PoC, and regression suite on the current
//! workspace state.
//!
//! The regression suite is scored per test. Lines of the form
//! `PASS: name` / `FAIL: name` or TAP `ok N - name` / `not ok N - name` name
//! individual tests; a suite that prints neither is treated as a single test
//! that passes iff the command satisfies its predicate. Only tests that pass
//! on the pristine checkout count toward functionality preservation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::workspace::exec::{run_shell, CommandOutput};
use crate::workspace::truncate_middle;

pub const DEFAULT_COMMAND_TIMEOUT: Duration = Duration::from_secs(600);
pub const DEFAULT_TOTAL_TIMEOUT: Duration = Duration::from_secs(1800);
pub const DEFAULT_LOG_CAP: usize = 20_000;
const WHOLE_SUITE: &str = "<regression suite>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassPredicate {
    ExitZero,
    /// Exit code 0 and no sanitizer fault marker in the output.
    SanitizerClean,
}

impl PassPredicate {
    pub fn holds(self, out: &CommandOutput) -> bool {
        match self {
            PassPredicate::ExitZero => out.success(),
            PassPredicate::SanitizerClean => out.success() && !has_sanitizer_marker(&out.output),
        }
    }
}

pub fn has_sanitizer_marker(text: &str) -> bool {
    text.lines().any(|l| {
        (l.contains("ERROR: AddressSanitizer")
            || l.contains("ERROR: LeakSanitizer")
            || l.contains("ERROR: MemorySanitizer")
            || l.contains("ERROR: ThreadSanitizer")
            || l.contains("runtime error:"))
            || (l.starts_with("SUMMARY:") && l.contains("Sanitizer"))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PassPredicates {
    pub build: PassPredicate,
    pub poc: PassPredicate,
    pub regression: PassPredicate,
}

impl Default for PassPredicates {
    fn default() -> Self {
        Self {
            build: PassPredicate::ExitZero,
            poc: PassPredicate::SanitizerClean,
            regression: PassPredicate::ExitZero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub poc_command: String,
    pub regression_command: String,
    #[serde(default)]
    pub build_command: Option<String>,
    #[serde(default)]
    pub pass_predicates: PassPredicates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub vuln_mitigated: bool,
    pub functionality_preserved: bool,
    pub build_ok: bool,
    pub logs: String,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    pub command_timeout: Duration,
    pub total_timeout: Duration,
    pub log_cap: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            command_timeout: DEFAULT_COMMAND_TIMEOUT,
            total_timeout: DEFAULT_TOTAL_TIMEOUT,
            log_cap: DEFAULT_LOG_CAP,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("{0} command timed out")]
    OracleTimeout(String),
    #[error("{0} command could not find its tool (exit 127): {1}")]
    BuildToolMissing(String, String),
    #[error("invalid oracle spec: {0}")]
    InvalidSpec(String),
    #[error("the PoC does not fail on the pristine checkout")]
    PocPassesOnPristine,
    #[error("oracle was not validated against the pristine checkout")]
    NotValidated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-test outcomes of one regression run.
pub fn parse_test_results(output: &str) -> BTreeMap<String, bool> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"^\s*(?:(PASS|FAIL):\s*(\S.*?)|(ok|not ok)\s+\d+(?:\s*-\s*|\s+)?(.*?))\s*$").unwrap()
    });
    let mut out = BTreeMap::new();
    for (i, line) in output.lines().enumerate() {
        let Some(c) = re.captures(line) else { continue };
        let (pass, name) = match (c.get(1), c.get(3)) {
            (Some(tag), _) => (tag.as_str() == "PASS", c[2].to_string()),
            (None, Some(tag)) => {
                let name = c.get(4).map(|m| m.as_str()).unwrap_or("");
                let name = if name.is_empty() { format!("test #{i}") } else { name.to_string() };
                (tag.as_str() == "ok", name)
            }
            _ => continue,
        };
        // A test reported twice passes only if every report passes.
        let e = out.entry(name).or_insert(true);
        *e = *e && pass;
    }
    out
}

/// Runs check_vul for one task. Holds the baseline regression pass set,
/// computed once by [`Oracle::validate_pristine`].
#[derive(Debug)]
pub struct Oracle {
    spec: OracleSpec,
    limits: OracleLimits,
    baseline: Option<BTreeSet<String>>,
    calls: u32,
}

struct Budget {
    start: Instant,
    total: Duration,
    per_command: Duration,
}

impl Budget {
    fn next(&self, what: &str) -> Result<Duration, OracleError> {
        let left = self.total.saturating_sub(self.start.elapsed());
        if left.is_zero() {
            return Err(OracleError::OracleTimeout(what.to_string()));
        }
        Ok(left.min(self.per_command))
    }
}

impl Oracle {
    pub fn new(spec: OracleSpec, limits: OracleLimits) -> Result<Self, OracleError> {
        if spec.poc_command.trim().is_empty() {
            return Err(OracleError::InvalidSpec("poc_command is empty".into()));
        }
        if spec.regression_command.trim().is_empty() {
            return Err(OracleError::InvalidSpec("regression_command is empty".into()));
        }
        Ok(Self {
            spec,
            limits,
            baseline: None,
            calls: 0,
        })
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn baseline(&self) -> Option<&BTreeSet<String>> {
        self.baseline.as_ref()
    }

    /// Number of check_vul runs on candidates so far.
    pub fn calls(&self) -> u32 {
        self.calls
    }

    fn run(&self, what: &str, cmd: &str, root: &Path, budget: &Budget) -> Result<CommandOutput, OracleError> {
        let out = run_shell(cmd, root, budget.next(what)?)?;
        if out.timed_out {
            return Err(OracleError::OracleTimeout(what.to_string()));
        }
        Ok(out)
    }

    fn suite_results(&self, out: &CommandOutput) -> BTreeMap<String, bool> {
        let mut results = parse_test_results(&out.output);
        if results.is_empty() {
            results.insert(WHOLE_SUITE.to_string(), self.spec.pass_predicates.regression.holds(out));
        }
        results
    }

    fn budget(&self) -> Budget {
        Budget {
            start: Instant::now(),
            total: self.limits.total_timeout,
            per_command: self.limits.command_timeout,
        }
    }

    /// Runs only the PoC (fresh crash report for localization).
    pub fn run_poc(&self, root: &Path) -> Result<CommandOutput, OracleError> {
        let budget = self.budget();
        if let Some(build) = &self.spec.build_command {
            let out = self.run("build", build, root, &budget)?;
            if !self.spec.pass_predicates.build.holds(&out) {
                return Ok(out);
            }
        }
        self.run("poc", &self.spec.poc_command, root, &budget)
    }

    /// Checks the pristine precondition (the PoC fails) and records the
    /// baseline set of passing regression tests.
    pub fn validate_pristine(&mut self, root: &Path) -> Result<VerificationVerdict, OracleError> {
        let (verdict, results) = self.evaluate(root, true)?;
        if !verdict.build_ok {
            return Err(OracleError::InvalidSpec(format!(
                "build fails on the pristine checkout:\n{}",
                verdict.logs
            )));
        }
        if verdict.vuln_mitigated {
            return Err(OracleError::PocPassesOnPristine);
        }
        self.baseline = Some(results.into_iter().filter(|(_, ok)| *ok).map(|(n, _)| n).collect());
        Ok(VerificationVerdict {
            functionality_preserved: true,
            ..verdict
        })
    }

    /// The check_vul tool: build, PoC, regression suite.
    pub fn check_vul(&mut self, root: &Path) -> Result<VerificationVerdict, OracleError> {
        if self.baseline.is_none() {
            return Err(OracleError::NotValidated);
        }
        self.calls += 1;
        self.evaluate(root, false).map(|(v, _)| v)
    }

    fn evaluate(&self, root: &Path, pristine: bool) -> Result<(VerificationVerdict, BTreeMap<String, bool>), OracleError> {
        let budget = self.budget();
        let preds = self.spec.pass_predicates;
        let mut logs = String::new();
        let missing_tool = |what: &str, out: &CommandOutput| {
            if out.exit_code == Some(127) {
                Err(OracleError::BuildToolMissing(what.to_string(), truncate_middle(&out.output, 2000)))
            } else {
                Ok(())
            }
        };

        if let Some(build) = &self.spec.build_command {
            let out = self.run("build", build, root, &budget)?;
            missing_tool("build", &out)?;
            section(&mut logs, "build", &out);
            if !preds.build.holds(&out) {
                let verdict = VerificationVerdict {
                    vuln_mitigated: false,
                    functionality_preserved: false,
                    build_ok: false,
                    logs: truncate_middle(&logs, self.limits.log_cap),
                };
                return Ok((verdict, BTreeMap::new()));
            }
        }

        let poc = self.run("poc", &self.spec.poc_command, root, &budget)?;
        if pristine {
            missing_tool("poc", &poc)?;
        }
        section(&mut logs, "poc", &poc);
        let vuln_mitigated = preds.poc.holds(&poc);

        let reg = self.run("regression", &self.spec.regression_command, root, &budget)?;
        if pristine {
            missing_tool("regression", &reg)?;
        }
        section(&mut logs, "regression", &reg);
        let results = self.suite_results(&reg);
        let functionality_preserved = match &self.baseline {
            Some(base) => base.iter().all(|t| results.get(t).copied().unwrap_or(false)),
            None => true,
        };
        let verdict = VerificationVerdict {
            vuln_mitigated,
            functionality_preserved,
            build_ok: true,
            logs: truncate_middle(&logs, self.limits.log_cap),
        };
        Ok((verdict, results))
    }
}

fn section(logs: &mut String, name: &str, out: &CommandOutput) {
    let code = out.exit_code.map(|c| c.to_string()).unwrap_or_else(|| "signal".into());
    logs.push_str(&format!("=== {name} (exit {code}) ===\n"));
    logs.push_str(&out.output);
    if !out.output.ends_with('\n') {
        logs.push('\n');
    }
}
