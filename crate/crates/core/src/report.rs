//! Key/value reports shared by the experiments.

use std::fmt::{self, Display};

/// Ordered `key = value` block with an optional verdict.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub entries: Vec<(String, String)>,
    pub pass: Option<bool>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report {
            title: title.into(),
            entries: Vec::new(),
            pass: None,
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    /// Pushes a float with 17 significant digits.
    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.push(key, format_f64(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Records a verdict; a report passes only if every recorded verdict passed.
    pub fn verdict(&mut self, pass: bool) -> &mut Self {
        self.pass = Some(self.pass.unwrap_or(true) && pass);
        self
    }

    pub fn passed(&self) -> bool {
        self.pass.unwrap_or(true)
    }

    /// Appends another report's entries under `prefix.`.
    pub fn merge(&mut self, prefix: &str, other: &Report) -> &mut Self {
        for (k, v) in &other.entries {
            self.entries.push((format!("{prefix}.{k}"), v.clone()));
        }
        if let Some(p) = other.pass {
            self.verdict(p);
        }
        self
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}]", self.title)?;
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        if let Some(p) = self.pass {
            writeln!(f, "pass = {p}")?;
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits, which round-trips exactly.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
