use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, RcdError, Result};

use super::tokenizer::Tokenizer;

/// First line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub tokenizer: String,
    pub vocab: usize,
    /// Token that closes the prompt; the first block to denoise starts right
    /// after its first occurrence. `None` means records have no prompt.
    #[serde(default)]
    pub prompt_end: Option<u32>,
}

/// Token-id records plus the header describing them.
///
/// On disk: the header as a one-line JSON object, then one record per line as
/// space-separated decimal ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<Vec<u32>>,
}

impl Dataset {
    pub fn new(tokenizer: &Tokenizer, prompt_end: Option<char>, records: Vec<Vec<u32>>) -> Self {
        Self {
            header: DatasetHeader {
                tokenizer: tokenizer.name().to_string(),
                vocab: tokenizer.vocab(),
                prompt_end: prompt_end.and_then(|c| tokenizer.id_of(c)),
            },
            records,
        }
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        let t = Tokenizer::from_name(&self.header.tokenizer)?;
        if t.vocab() != self.header.vocab {
            return Err(RcdError::DimensionMismatch(format!(
                "tokenizer {} has vocab {}, header says {}",
                t.name(),
                t.vocab(),
                self.header.vocab
            )));
        }
        Ok(t)
    }

    /// Length of the prompt of `record`: one past the first `prompt_end`
    /// token, or 0.
    pub fn prompt_len(&self, record: &[u32]) -> usize {
        self.header
            .prompt_end
            .and_then(|p| record.iter().position(|&t| t == p))
            .map_or(0, |i| i + 1)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Splits off the last `holdout` records.
    pub fn split_holdout(&self, holdout: usize) -> (Dataset, Dataset) {
        let cut = self.records.len().saturating_sub(holdout);
        let head = Dataset { header: self.header.clone(), records: self.records[..cut].to_vec() };
        let tail = Dataset { header: self.header.clone(), records: self.records[cut..].to_vec() };
        (head, tail)
    }

    pub fn to_text(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            let line: Vec<String> = r.iter().map(u32::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header_line = lines.next().ok_or_else(|| RcdError::Parse("empty dataset file".into()))?;
        let header: DatasetHeader = serde_json::from_str(header_line)
            .map_err(|e| RcdError::Parse(format!("dataset header: {e}")))?;
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let ids = line
                .split_ascii_whitespace()
                .map(|tok| {
                    tok.parse::<u32>().map_err(|_| {
                        RcdError::Parse(format!("record {}: bad token id {tok:?}", n + 1))
                    })
                })
                .collect::<Result<Vec<u32>>>()?;
            if let Some(bad) = ids.iter().find(|&&id| id as usize >= header.vocab) {
                return invalid(format!("record {}: token id {bad} outside vocab {}", n + 1, header.vocab));
            }
            records.push(ids);
        }
        Ok(Self { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
