//! Word-to-command bindings read from `word = shell command` lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use swar_core::store::is_valid_word;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read command table {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("quit word '{0}' must not be bound to a command")]
    QuitWordBound(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTable {
    bindings: BTreeMap<String, String>,
    quit_word: String,
}

impl CommandTable {
    pub fn new(bindings: BTreeMap<String, String>, quit_word: &str) -> Result<Self, TableError> {
        let quit_word = quit_word.to_lowercase();
        if bindings.contains_key(&quit_word) {
            return Err(TableError::QuitWordBound(quit_word));
        }
        Ok(Self { bindings, quit_word })
    }

    pub fn parse(text: &str, quit_word: &str) -> Result<Self, TableError> {
        let mut bindings = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| TableError::Parse { line: i + 1, message };
            let (word, command) = line
                .split_once('=')
                .ok_or_else(|| err("expected 'word = command'".into()))?;
            let word = word.trim().to_lowercase();
            let command = command.trim();
            if !is_valid_word(&word) {
                return Err(err(format!("invalid word '{word}'")));
            }
            if command.is_empty() {
                return Err(err(format!("no command for '{word}'")));
            }
            if bindings.insert(word.clone(), command.to_string()).is_some() {
                return Err(err(format!("'{word}' bound twice")));
            }
        }
        Self::new(bindings, quit_word)
    }

    pub fn load(path: &Path, quit_word: &str) -> Result<Self, TableError> {
        let text = fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, quit_word)
    }

    /// Command bound to `word`, matched case-insensitively.
    pub fn command_for(&self, word: &str) -> Option<&str> {
        self.bindings.get(&word.to_lowercase()).map(String::as_str)
    }

    pub fn is_quit(&self, word: &str) -> bool {
        word.eq_ignore_ascii_case(&self.quit_word)
    }

    pub fn quit_word(&self) -> &str {
        &self.quit_word
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }
}
