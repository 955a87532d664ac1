use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// High-level rhetorical section a sentence was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SectionClass {
    Introduction,
    RelatedWork,
    Methods,
    Results,
    Discussions,
    Conclusion,
    Other,
}

impl SectionClass {
    /// All classes in one-hot order.
    pub const ALL: [SectionClass; 7] = [
        SectionClass::Introduction,
        SectionClass::RelatedWork,
        SectionClass::Methods,
        SectionClass::Results,
        SectionClass::Discussions,
        SectionClass::Conclusion,
        SectionClass::Other,
    ];

    /// Resolution order when a title matches keywords of several classes.
    pub const PRIORITY: [SectionClass; 6] = [
        SectionClass::Results,
        SectionClass::Conclusion,
        SectionClass::Discussions,
        SectionClass::Methods,
        SectionClass::RelatedWork,
        SectionClass::Introduction,
    ];

    pub fn one_hot_index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f64; 7] {
        let mut v = [0.0; 7];
        v[self.one_hot_index()] = 1.0;
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            SectionClass::Introduction => "Introduction",
            SectionClass::RelatedWork => "RelatedWork",
            SectionClass::Methods => "Methods",
            SectionClass::Results => "Results",
            SectionClass::Discussions => "Discussions",
            SectionClass::Conclusion => "Conclusion",
            SectionClass::Other => "Other",
        }
    }
}

impl fmt::Display for SectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SectionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        Ok(match key.as_str() {
            "introduction" => SectionClass::Introduction,
            "relatedwork" => SectionClass::RelatedWork,
            "methods" | "method" => SectionClass::Methods,
            "results" | "result" => SectionClass::Results,
            "discussions" | "discussion" => SectionClass::Discussions,
            "conclusion" | "conclusions" => SectionClass::Conclusion,
            "other" => SectionClass::Other,
            _ => return Err(format!("unknown section class {s:?}")),
        })
    }
}

const DEFAULT_GAZETTEER: &str = include_str!("../../resources/sections.tsv");

/// Keyword table mapping lowercase title substrings to section classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gazetteer {
    entries: Vec<(String, SectionClass)>,
}

impl Gazetteer {
    pub fn new(entries: Vec<(String, SectionClass)>) -> Result<Self, CorpusError> {
        if entries.is_empty() {
            return Err(CorpusError::Gazetteer { line: 0, message: "gazetteer is empty".into() });
        }
        let entries = entries.into_iter().map(|(k, c)| (k.to_lowercase(), c)).collect();
        Ok(Gazetteer { entries })
    }

    /// Parses the `keyword<TAB>class` format; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (keyword, class) = line.split_once('\t').ok_or_else(|| CorpusError::Gazetteer {
                line: i + 1,
                message: "expected keyword<TAB>class".into(),
            })?;
            let keyword = keyword.trim();
            if keyword.is_empty() {
                return Err(CorpusError::Gazetteer { line: i + 1, message: "empty keyword".into() });
            }
            let class = class
                .trim()
                .parse::<SectionClass>()
                .map_err(|message| CorpusError::Gazetteer { line: i + 1, message })?;
            entries.push((keyword.to_string(), class));
        }
        Gazetteer::new(entries)
    }

    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Gazetteer::parse(&text)
    }

    pub fn entries(&self) -> &[(String, SectionClass)] {
        &self.entries
    }

    pub fn classify(&self, section_title: &str) -> SectionClass {
        classify_section(section_title, self)
    }
}

impl Default for Gazetteer {
    fn default() -> Self {
        Gazetteer::parse(DEFAULT_GAZETTEER).expect("bundled gazetteer is valid")
    }
}

/// Maps a section title to its class: the highest-priority class with a
/// keyword occurring in the lowercased title, or `Other`.
pub fn classify_section(section_title: &str, gazetteer: &Gazetteer) -> SectionClass {
    let title = section_title.to_lowercase();
    for class in SectionClass::PRIORITY {
        let hit = gazetteer
            .entries
            .iter()
            .any(|(keyword, c)| *c == class && title.contains(keyword.as_str()));
        if hit {
            return class;
        }
    }
    SectionClass::Other
}
