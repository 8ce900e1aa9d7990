use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binio::atomic_write;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Era {
    Old,
    New,
}

/// One image record. Serialised as a single JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_label: Option<String>,
    pub era: Era,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub distractor: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub per_era: BTreeMap<Era, usize>,
    pub per_class: BTreeMap<String, usize>,
    pub distractors: usize,
}

impl Manifest {
    pub fn summary(&self) -> ManifestSummary {
        let mut s = ManifestSummary::default();
        for e in &self.entries {
            *s.per_era.entry(e.era).or_default() += 1;
            match &e.class_label {
                Some(c) => *s.per_class.entry(c.clone()).or_default() += 1,
                None => s.distractors += 1,
            }
        }
        s
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn era(&self, era: Era) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.era == era)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries serialise"));
            out.push('\n');
        }
        out
    }
}

/// Parse manifest text; errors carry 1-based line numbers. Blank lines are skipped.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema { line: line_no, message };
        let raw: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| schema(format!("not valid JSON: {e}")))?;
        if let Some(era) = raw.get("era") {
            if !matches!(era.as_str(), Some("old" | "new")) {
                return Err(schema(format!("unknown era {era}; expected \"old\" or \"new\"")));
            }
        }
        let entry: ManifestEntry = serde_json::from_value(raw).map_err(|e| schema(e.to_string()))?;
        if entry.id.is_empty() {
            return Err(schema("empty id".into()));
        }
        if entry.class_label.is_none() && !entry.distractor {
            return Err(schema(format!("entry '{}' has no class_label and is not a distractor", entry.id)));
        }
        if !seen.insert(entry.id.clone()) {
            return Err(schema(format!("duplicate id '{}'", entry.id)));
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::Schema { line: 0, message: "manifest has no entries".into() });
    }
    Ok(Manifest { entries })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m = parse_manifest(&text)?;
    let s = m.summary();
    tracing::info!(
        path = %path.display(),
        old = s.per_era.get(&Era::Old).copied().unwrap_or(0),
        new = s.per_era.get(&Era::New).copied().unwrap_or(0),
        classes = s.per_class.len(),
        distractors = s.distractors,
        "loaded manifest"
    );
    Ok(m)
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let text = manifest.to_jsonl();
    atomic_write(path.as_ref(), |w| w.write_all(text.as_bytes()))
}
