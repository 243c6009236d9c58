use dtnlab_core::io::Table;
use serde::{Deserialize, Serialize};

/// One checked claim: a measured value against a limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    /// The mathematical statement the check exercises.
    pub anchor: String,
    pub value: f64,
    pub limit: f64,
    /// `"<="`, `">="` or `"holds"` (value 1 for true).
    pub relation: String,
    pub passed: bool,
}

impl Assertion {
    pub fn at_most(name: impl Into<String>, anchor: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), anchor: anchor.into(), value, limit, relation: "<=".into(), passed: value <= limit }
    }

    pub fn at_least(name: impl Into<String>, anchor: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), anchor: anchor.into(), value, limit, relation: ">=".into(), passed: value >= limit }
    }

    /// `|value − target| ≤ band`, recorded as the distance against the band.
    pub fn within(name: impl Into<String>, anchor: &str, value: f64, target: f64, band: f64) -> Self {
        let mut a = Self::at_most(name, anchor, (value - target).abs(), band);
        a.relation = format!("|x - {target}| <=");
        a
    }

    pub fn holds(name: impl Into<String>, anchor: &str, ok: bool) -> Self {
        Self { name: name.into(), anchor: anchor.into(), value: f64::from(u8::from(ok)), limit: 1.0, relation: "holds".into(), passed: ok }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "pass" } else { "FAIL" };
        match self.relation.as_str() {
            "holds" => format!("{}: {verdict}", self.name),
            rel => format!("{}: {verdict} ({:.3e} {rel} {:.3e})", self.name, self.value, self.limit),
        }
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub assertions: Vec<Assertion>,
    pub tables: Vec<(String, Table)>,
    /// Extra machine-readable results for the summary.
    pub details: serde_json::Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    /// File names of the CSV tables next to the summary.
    pub tables: Vec<String>,
    pub details: serde_json::Value,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations() {
        assert!(Assertion::at_most("x", "", 1.0, 1.0).passed);
        assert!(!Assertion::at_most("x", "", f64::NAN, 1.0).passed);
        assert!(!Assertion::at_least("x", "", 0.5, 0.8).passed);
        assert!(Assertion::within("slope", "", -1.1, -1.0, 0.2).passed);
        assert!(!Assertion::within("slope", "", -1.3, -1.0, 0.2).passed);
        assert_eq!(Assertion::holds("monotone", "", true).line(), "monotone: pass");
    }
}
