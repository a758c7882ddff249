use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_DF: usize = 5;

/// Sparse document-term counts. Row `i` lists `(term index, count)` pairs in
/// increasing term order; the vocabulary is sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTermMatrix {
    pub vocabulary: Vec<String>,
    pub doc_ids: Vec<String>,
    pub rows: Vec<Vec<(u32, u32)>>,
}

impl DocTermMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn get(&self, doc: usize, term: usize) -> u32 {
        self.rows[doc]
            .binary_search_by_key(&(term as u32), |&(t, _)| t)
            .map(|k| self.rows[doc][k].1)
            .unwrap_or(0)
    }

    pub fn row_sum(&self, doc: usize) -> u64 {
        self.rows[doc].iter().map(|&(_, c)| u64::from(c)).sum()
    }
}

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Builds the document-term matrix, keeping tokens that occur in at least
/// `min_df` documents. With `binary`, counts become presence indicators.
pub fn bow_vectorize<I, S>(docs: &[(I, S)], min_df: usize, binary: bool) -> Result<DocTermMatrix>
where
    I: AsRef<str>,
    S: AsRef<str>,
{
    if docs.is_empty() {
        return Err(Error::InvalidInput("cannot vectorize an empty corpus".into()));
    }
    let counted: Vec<HashMap<String, u32>> = docs
        .iter()
        .map(|(_, text)| {
            let mut m = HashMap::new();
            for tok in tokenize(text.as_ref()) {
                *m.entry(tok).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &counted {
        for tok in m.keys() {
            *df.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    let vocabulary: Vec<String> = df.into_iter().filter(|&(_, n)| n >= min_df).map(|(t, _)| t.to_string()).collect();
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary { min_df });
    }
    let index: HashMap<&str, u32> = vocabulary.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();
    let rows = counted
        .iter()
        .map(|m| {
            let mut row: Vec<(u32, u32)> = m
                .iter()
                .filter_map(|(tok, &c)| index.get(tok.as_str()).map(|&i| (i, if binary { 1 } else { c })))
                .collect();
            row.sort_unstable();
            row
        })
        .collect();
    Ok(DocTermMatrix {
        vocabulary,
        doc_ids: docs.iter().map(|(id, _)| id.as_ref().to_string()).collect(),
        rows,
    })
}
