//! CSV interchange for corpora.
//!
//! ```text
//! units.csv:       text_id,pair_id,version_index,treatment,topic,body
//! evaluations.csv: eval_id,text_id,evaluator_id,outcome,value
//! ratings.csv:     text_id,rater_id,feature,value
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{Corpus, Evaluation, LatentRating, TextUnit, ValueScale, EVALS_FILE, RATINGS_FILE, UNITS_FILE};
use crate::error::{Error, Result};

const UNIT_COLUMNS: [&str; 6] = ["text_id", "pair_id", "version_index", "treatment", "topic", "body"];
const EVAL_COLUMNS: [&str; 5] = ["eval_id", "text_id", "evaluator_id", "outcome", "value"];
const RATING_COLUMNS: [&str; 4] = ["text_id", "rater_id", "feature", "value"];

struct Table {
    file: String,
    columns: Vec<usize>,
    records: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> Result<Table> {
        let file = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::Parse { file: file.clone(), row: 0, message: format!("{other:?}") },
            })?;
        let headers: HashMap<String, usize> = reader
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        let columns = required
            .iter()
            .map(|c| {
                headers
                    .get(*c)
                    .copied()
                    .ok_or_else(|| Error::MissingColumn { file: file.clone(), column: c.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut records = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { file: file.clone(), row: i + 1, message: e.to_string() })?;
            records.push(rec);
        }
        Ok(Table { file, columns, records })
    }

    fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.records.iter().enumerate().map(move |(i, rec)| Row { table: self, rec, row: i + 1 })
    }
}

struct Row<'a> {
    table: &'a Table,
    rec: &'a csv::StringRecord,
    row: usize,
}

impl Row<'_> {
    fn field(&self, col: usize) -> Result<&str> {
        self.rec.get(self.table.columns[col]).ok_or_else(|| self.error("row has too few fields".into()))
    }

    fn string(&self, col: usize) -> Result<String> {
        self.field(col).map(str::to_string)
    }

    fn parse<T: FromStr>(&self, col: usize, what: &str) -> Result<T> {
        let raw = self.field(col)?;
        raw.trim().parse().map_err(|_| self.error(format!("cannot parse {what} from `{raw}`")))
    }

    fn error(&self, message: String) -> Error {
        Error::Parse { file: self.table.file.clone(), row: self.row, message }
    }
}

fn parse_treatment(row: &Row<'_>) -> Result<bool> {
    match row.field(3)?.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(row.error(format!("treatment must be 0 or 1, found `{other}`"))),
    }
}

/// Reads and validates a corpus from the three CSV files.
pub fn parse_corpus(
    units_path: impl AsRef<Path>,
    evals_path: impl AsRef<Path>,
    ratings_path: impl AsRef<Path>,
    scale: ValueScale,
) -> Result<Corpus> {
    let units_table = Table::read(units_path.as_ref(), &UNIT_COLUMNS)?;
    let evals_table = Table::read(evals_path.as_ref(), &EVAL_COLUMNS)?;
    let ratings_table = Table::read(ratings_path.as_ref(), &RATING_COLUMNS)?;

    let units = units_table
        .rows()
        .map(|r| {
            Ok(TextUnit {
                text_id: r.string(0)?,
                pair_id: r.string(1)?,
                version_index: r.parse(2, "version_index")?,
                treatment: parse_treatment(&r)?,
                topic: r.string(4)?,
                body: r.string(5)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let evaluations = evals_table
        .rows()
        .map(|r| {
            Ok(Evaluation {
                eval_id: r.string(0)?,
                text_id: r.string(1)?,
                evaluator_id: r.string(2)?,
                outcome: r.field(3)?.trim().parse().map_err(|e: Error| r.error(e.to_string()))?,
                value: r.parse(4, "value")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratings = ratings_table
        .rows()
        .map(|r| {
            Ok(LatentRating {
                text_id: r.string(0)?,
                rater_id: r.string(1)?,
                feature: r.field(2)?.trim().parse().map_err(|e: Error| r.error(e.to_string()))?,
                value: r.parse(3, "value")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Corpus::new(units, evaluations, ratings, scale)
        .map_err(|err| relabel(err, [&units_table.file, &evals_table.file, &ratings_table.file]))
}

/// Swaps the generic collection label in a validation error for the real path.
fn relabel(err: Error, paths: [&String; 3]) -> Error {
    let path = |label: String| -> String {
        match label.as_str() {
            UNITS_FILE => paths[0].clone(),
            EVALS_FILE => paths[1].clone(),
            RATINGS_FILE => paths[2].clone(),
            _ => label,
        }
    };
    match err {
        Error::DanglingReference { file, row, id } => Error::DanglingReference { file: path(file), row, id },
        Error::DuplicateId { file, row, what, id } => Error::DuplicateId { file: path(file), row, what, id },
        Error::InvariantViolation { file, row, message } => {
            Error::InvariantViolation { file: path(file), row, message }
        }
        other => other,
    }
}

/// Reads `units.csv`, `evaluations.csv` and `ratings.csv` from `dir`.
pub fn read_corpus_dir(dir: impl AsRef<Path>, scale: ValueScale) -> Result<Corpus> {
    let dir = dir.as_ref();
    parse_corpus(dir.join(UNITS_FILE), dir.join(EVALS_FILE), dir.join(RATINGS_FILE), scale)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_corpus(
    corpus: &Corpus,
    units_path: impl AsRef<Path>,
    evals_path: impl AsRef<Path>,
    ratings_path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = writer(units_path.as_ref())?;
    w.write_record(UNIT_COLUMNS)?;
    for u in corpus.units() {
        w.write_record([
            u.text_id.as_str(),
            &u.pair_id,
            &u.version_index.to_string(),
            if u.treatment { "1" } else { "0" },
            &u.topic,
            &u.body,
        ])?;
    }
    w.flush().map_err(|e| Error::io(units_path.as_ref(), e))?;

    let mut w = writer(evals_path.as_ref())?;
    w.write_record(EVAL_COLUMNS)?;
    for e in corpus.evaluations() {
        w.write_record([
            e.eval_id.as_str(),
            &e.text_id,
            &e.evaluator_id,
            e.outcome.as_str(),
            &e.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(evals_path.as_ref(), e))?;

    let mut w = writer(ratings_path.as_ref())?;
    w.write_record(RATING_COLUMNS)?;
    for r in corpus.latent_ratings() {
        w.write_record([r.text_id.as_str(), &r.rater_id, r.feature.as_str(), &r.value.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(ratings_path.as_ref(), e))?;
    Ok(())
}

pub fn write_corpus_dir(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_corpus(corpus, dir.join(UNITS_FILE), dir.join(EVALS_FILE), dir.join(RATINGS_FILE))
}
