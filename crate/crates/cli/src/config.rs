//! Line-oriented `key = value` format with `[section]` headers.
//!
//! * Blank lines and lines starting with `#` are ignored; `#` also starts a
//!   trailing comment.
//! * Keys before the first header belong to the root section `""`.
//! * Keys are unique within a section. Values are kept as raw strings; lists
//!   are comma-separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Document {
    pub fn parse(text: &str, path: &str) -> Result<Self, CliError> {
        let err = |line: usize, message: String| CliError::Parse { path: path.to_string(), line, message };
        let mut doc = Document::default();
        let mut current = String::new();
        doc.sections.insert(current.clone(), BTreeMap::new());
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name =
                    rest.strip_suffix(']').ok_or_else(|| err(line_no, "unterminated section header".into()))?.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(err(line_no, format!("bad section name `{name}`")));
                }
                current = name.to_string();
                doc.sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(line_no, format!("bad key `{key}`")));
            }
            let section = doc.sections.get_mut(&current).expect("section inserted above");
            if section.insert(key.to_string(), value.to_string()).is_some() {
                return Err(err(line_no, format!("duplicate key `{key}`")));
            }
        }
        Ok(doc)
    }

    pub fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// Serialise with the root section first and keys in sorted order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(root) = self.sections.get("") {
            for (k, v) in root {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        for (name, keys) in self.sections.iter().filter(|(n, _)| !n.is_empty()) {
            let _ = writeln!(out, "\n[{name}]");
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    value.trim().parse::<f64>().map_err(|_| CliError::Config(format!("`{key}`: expected a number, got `{value}`")))
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_f64(key, s)).collect()
}

pub fn format_list(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}
