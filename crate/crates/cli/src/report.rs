//! Run report: stage status, timings, key figures and verdicts.

use std::fmt::Write as _;
use std::path::PathBuf;

use biotplate::verify::{CheckOutcome, Verdict};

#[derive(Clone, Debug, PartialEq)]
pub enum StageStatus {
    Done,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct StageReport {
    pub name: &'static str,
    pub status: StageStatus,
    pub seconds: f64,
    pub entries: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
    /// Stage-level verdict for stages that carry a pass condition.
    pub verdict: Option<Verdict>,
}

impl StageReport {
    pub fn new(name: &'static str) -> Self {
        Self { name, status: StageStatus::Done, seconds: 0.0, entries: Vec::new(), artifacts: Vec::new(), verdict: None }
    }

    pub fn entry(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }
}

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    ConfigError = 1,
    SolverFailure = 2,
    AcceptanceFailure = 3,
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub command: String,
    pub stages: Vec<StageReport>,
    pub checks: Vec<CheckOutcome>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self { command: command.to_string(), ..Self::default() }
    }

    pub fn push(&mut self, stage: StageReport) {
        debug_assert!(self.stages.iter().all(|s| s.name != stage.name), "stage {} reported twice", stage.name);
        self.stages.push(stage);
    }

    pub fn verdicts(&self) -> impl Iterator<Item = Verdict> + '_ {
        self.stages.iter().filter_map(|s| s.verdict).chain(self.checks.iter().map(|c| c.verdict))
    }

    pub fn exit_status(&self) -> ExitStatus {
        if self.stages.iter().any(|s| s.status != StageStatus::Done) {
            ExitStatus::SolverFailure
        } else if self.verdicts().any(|v| v == Verdict::Fail) {
            ExitStatus::AcceptanceFailure
        } else {
            ExitStatus::Pass
        }
    }

    /// Plain-text rendering, `key = value` per line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        for st in &self.stages {
            let status = match &st.status {
                StageStatus::Done => "done".to_string(),
                StageStatus::Failed(why) => format!("failed: {why}"),
            };
            let _ = writeln!(s, "[{}]\nstatus = {status}\nseconds = {:.3}", st.name, st.seconds);
            if let Some(v) = st.verdict {
                let _ = writeln!(s, "verdict = {v}");
            }
            for (k, v) in &st.entries {
                let _ = writeln!(s, "{k} = {v}");
            }
            for a in &st.artifacts {
                let _ = writeln!(s, "artifact = {}", a.display());
            }
        }
        if !self.checks.is_empty() {
            let _ = writeln!(s, "[checks]");
            for c in &self.checks {
                let _ = writeln!(s, "{c}");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use biotplate::verify::skipped;

    #[test]
    fn exit_status_precedence() {
        let mut r = RunReport::new("verify-all");
        r.checks.push(skipped(3, "not selected"));
        assert_eq!(r.exit_status(), ExitStatus::Pass);
        let mut fail = skipped(5, "");
        fail.verdict = Verdict::Fail;
        r.checks.push(fail);
        assert_eq!(r.exit_status(), ExitStatus::AcceptanceFailure);
        let mut st = StageReport::new("cell");
        st.status = StageStatus::Failed("singular".into());
        r.push(st);
        assert_eq!(r.exit_status(), ExitStatus::SolverFailure);
        let text = r.render();
        assert!(text.contains("[cell]\nstatus = failed: singular"));
        assert!(text.contains("C3  skipped"));
    }
}
