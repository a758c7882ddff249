use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::Result;
use crate::estimate::Outcome;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CountKey {
    pub topic: String,
    pub treated: bool,
    pub original: bool,
}

/// Evaluation counts by topic x treatment x original/edit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub cells: BTreeMap<CountKey, usize>,
}

impl CountTable {
    pub fn get(&self, topic: &str, treated: bool, original: bool) -> usize {
        let key = CountKey { topic: topic.to_string(), treated, original };
        self.cells.get(&key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.cells.values().sum()
    }

    /// Writes `before` and `after` side by side:
    /// `topic,ih,original,raw_evaluations,final_evaluations`.
    pub fn write_comparison<W: Write>(before: &CountTable, after: &CountTable, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["topic", "ih", "original", "raw_evaluations", "final_evaluations"])?;
        let yes_no = |b: bool| if b { "yes" } else { "no" };
        let keys: std::collections::BTreeSet<&CountKey> = before.cells.keys().chain(after.cells.keys()).collect();
        for k in keys {
            w.write_record([
                k.topic.as_str(),
                yes_no(k.treated),
                yes_no(k.original),
                &before.cells.get(k).copied().unwrap_or(0).to_string(),
                &after.cells.get(k).copied().unwrap_or(0).to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Counts every evaluation row.
pub fn summarize_counts(corpus: &Corpus) -> CountTable {
    count(corpus, None)
}

/// Counts evaluation rows of a single outcome label.
pub fn summarize_counts_for(corpus: &Corpus, outcome: Outcome) -> CountTable {
    count(corpus, Some(outcome))
}

fn count(corpus: &Corpus, outcome: Option<Outcome>) -> CountTable {
    let mut cells = BTreeMap::new();
    for u in corpus.units() {
        for treated in [false, true] {
            for original in [false, true] {
                cells.entry(CountKey { topic: u.topic.clone(), treated, original }).or_insert(0);
            }
        }
    }
    for e in corpus.evaluations().iter().filter(|e| outcome.is_none_or(|o| e.outcome == o)) {
        // referential integrity is checked at construction
        let u = corpus.unit(&e.text_id).expect("evaluation references a known text");
        let key = CountKey { topic: u.topic.clone(), treated: u.treatment, original: u.is_original() };
        *cells.entry(key).or_insert(0) += 1;
    }
    CountTable { cells }
}
