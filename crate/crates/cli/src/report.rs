//! Run reports and manifests.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    Equal,
}

impl Relation {
    fn holds(self, measured: f64, tolerance: f64) -> bool {
        match self {
            Self::AtMost => measured <= tolerance,
            Self::AtLeast => measured >= tolerance,
            Self::Equal => measured == tolerance,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Self::AtMost => "<=",
            Self::AtLeast => ">=",
            Self::Equal => "==",
        }
    }
}

/// One measured quantity against its threshold. NaN never passes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, relation: Relation, tolerance: f64) -> Self {
        let passed = relation.holds(measured, tolerance);
        Self {
            name: name.into(),
            measured,
            relation,
            tolerance,
            passed,
        }
    }

    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::new(name, measured, Relation::AtMost, tolerance)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::new(name, measured, Relation::AtLeast, tolerance)
    }

    /// Boolean condition recorded as `1 == 1`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Relation::Equal, 1.0)
    }

    /// A step that errored out; recorded as a failing check carrying the message.
    pub fn error(name: impl Into<String>, err: impl fmt::Display) -> Self {
        Self {
            name: format!("{}: {err}", name.into()),
            measured: f64::NAN,
            relation: Relation::AtMost,
            tolerance: 0.0,
            passed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Criterion {
    pub fn new(id: impl Into<String>, title: impl Into<String>, checks: Vec<Check>) -> Self {
        let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
        Self {
            id: id.into(),
            title: title.into(),
            passed,
            checks,
        }
    }

    /// First failing check, or the tightest one when all pass.
    pub fn headline(&self) -> Option<&Check> {
        self.checks
            .iter()
            .find(|c| !c.passed)
            .or_else(|| self.checks.first())
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title
        )?;
        if let Some(c) = self.headline() {
            write!(
                f,
                " [{}: {:e} {} {:e}]",
                c.name,
                c.measured,
                c.relation.symbol(),
                c.tolerance
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
    pub criteria: Vec<Criterion>,
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            seed,
            ..Self::default()
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// One line per criterion.
    pub fn summary(&self) -> String {
        self.criteria.iter().map(|c| format!("{c}\n")).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    pub artifacts: Vec<String>,
    /// Command-specific run parameters (solver and LP settings, measured constants).
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_never_passes() {
        assert!(!Check::at_most("x", f64::NAN, 1.0).passed);
        assert!(!Check::at_least("x", f64::NAN, 1.0).passed);
        assert!(Check::at_most("x", 1.0, 1.0).passed);
    }

    #[test]
    fn empty_criterion_fails() {
        assert!(!Criterion::new("c0", "nothing", vec![]).passed);
        let c = Criterion::new(
            "c1",
            "two",
            vec![Check::holds("a", true), Check::at_most("b", 2.0, 1.0)],
        );
        assert!(!c.passed);
        assert_eq!(c.headline().unwrap().name, "b");
        assert!(c.to_string().starts_with("FAIL c1 two [b:"));
    }
}
