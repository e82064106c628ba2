use std::collections::HashSet;
use std::path::Path;

use crate::binio::{read_text, write_file};
use crate::error::{Error, Result};

/// Ordered caption list. Entries are unique after trimming and lowercasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabularyList {
    captions: Vec<String>,
}

impl VocabularyList {
    pub fn new(captions: Vec<String>) -> Result<Self> {
        if captions.is_empty() {
            return Err(Error::InvalidParameter(
                "vocabulary must contain at least one caption".into(),
            ));
        }
        let mut seen = HashSet::new();
        for c in &captions {
            if !seen.insert(c.trim().to_lowercase()) {
                return Err(Error::DuplicateClass(c.clone()));
            }
        }
        Ok(Self { captions })
    }

    pub fn captions(&self) -> &[String] {
        &self.captions
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.captions.get(index).map(String::as_str)
    }

    /// One caption per line; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.captions.join("\n");
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}
