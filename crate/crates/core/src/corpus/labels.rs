use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpretation of an answer to a yes-no question.
///
/// Variant order is the fixed class order used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Yes,
    No,
    Middle,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Yes, Label::No, Label::Middle];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Yes => "yes",
            Label::No => "no",
            Label::Middle => "middle",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "yes" => Ok(Label::Yes),
            "no" => Ok(Label::No),
            "middle" => Ok(Label::Middle),
            _ => Err(Error::UnmappedLabel(s.to_string())),
        }
    }
}

/// Target of a fine-grained source label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mapped {
    Label(Label),
    Discard,
}

/// Collapses corpus-specific interpretation labels onto [`Label`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FineLabelMap {
    entries: BTreeMap<String, Mapped>,
}

const BUNDLED: &str = include_str!("../../data/label_map.tsv");

impl FineLabelMap {
    /// The bundled map covering the Circa and SWDA-IA label sets.
    pub fn bundled() -> Self {
        Self::parse_tsv(BUNDLED).expect("bundled label map is well formed")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    /// Two tab-separated columns: source label and one of
    /// `yes`, `no`, `middle`, `discard`. Blank lines and `#` comments are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (source, target) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected two tab-separated columns".into(),
            })?;
            let mapped = match target.trim() {
                "discard" => Mapped::Discard,
                other => Mapped::Label(other.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("unknown target `{other}`"),
                })?),
            };
            entries.insert(source.trim().to_string(), mapped);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, source: impl Into<String>, mapped: Mapped) {
        self.entries.insert(source.into(), mapped);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Mapped)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

pub fn normalize_label(source_label: &str, map: &FineLabelMap) -> Result<Mapped> {
    map.entries
        .get(source_label.trim())
        .copied()
        .ok_or_else(|| Error::UnmappedLabel(source_label.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_examples() {
        let map = FineLabelMap::bundled();
        let get = |s| normalize_label(s, &map).unwrap();
        assert_eq!(get("Probably yes / sometimes yes"), Mapped::Label(Label::Yes));
        assert_eq!(get("Probably no"), Mapped::Label(Label::No));
        assert_eq!(get("In the middle, neither yes nor no"), Mapped::Label(Label::Middle));
        assert_eq!(get("Yes, subject to some conditions"), Mapped::Label(Label::Yes));
        assert_eq!(get("Other"), Mapped::Discard);
    }

    #[test]
    fn bundled_is_total_over_declared_sets() {
        let map = FineLabelMap::bundled();
        let circa = [
            "Yes",
            "No",
            "Probably yes / sometimes yes",
            "Yes, subject to some conditions",
            "Probably no",
            "In the middle, neither yes nor no",
            "I am not sure how X will interpret Y's answer",
            "Other",
            "NA",
        ];
        let swda_ia = ["yes", "no", "probably yes", "probably no", "middle"];
        for label in circa.iter().chain(swda_ia.iter()) {
            assert!(normalize_label(label, &map).is_ok(), "{label}");
        }
        for (source, mapped) in map.iter() {
            let lower = source.to_lowercase();
            if lower.starts_with("probably yes") {
                assert_eq!(mapped, Mapped::Label(Label::Yes));
            }
            if lower.starts_with("probably no") {
                assert_eq!(mapped, Mapped::Label(Label::No));
            }
        }
    }

    #[test]
    fn unknown_label_is_an_error() {
        let err = normalize_label("Definitely", &FineLabelMap::bundled()).unwrap_err();
        assert!(matches!(err, Error::UnmappedLabel(ref l) if l == "Definitely"));
    }

    #[test]
    fn bad_tsv_reports_line() {
        let err = FineLabelMap::parse_tsv("# header\nYes\tyes\nOdd\tperhaps\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn label_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&Label::Middle).unwrap(), "\"middle\"");
        assert_eq!("Yes".parse::<Label>().unwrap(), Label::Yes);
    }
}
