//! On-disk forms of the intermediate pipeline artifacts.
//!
//! * cleaned corpus: CSV `label,tokens` with binary labels and tokens joined
//!   by single spaces;
//! * labeled corpus: CSV `label,score,tokens` with labels in {−1, 0, 1};
//! * split manifest: CSV `index` listing rows of the labeled corpus.
//!
//! Tokens never contain whitespace, so the space join is lossless.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::corpus::{BinaryLabel, CleanPost};
use crate::error::{Error, Result};
use crate::labeler::{SentimentScore, TriLabel};
use crate::sampler::LabeledExample;

/// A relabeled post as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRow {
    pub label: TriLabel,
    pub score: SentimentScore,
    pub tokens: Vec<String>,
}

impl LabeledRow {
    pub fn example(&self) -> LabeledExample {
        LabeledExample {
            tokens: self.tokens.clone(),
            label: self.label,
        }
    }
}

fn csv_err(name: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::parse(name, line, e.to_string())
}

fn write_file(path: &Path, bytes: Vec<u8>) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, name: &str, want: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_err(name, e))?;
    if header.iter().collect::<Vec<_>>() != want {
        return Err(Error::parse(name, 1, format!("expected header `{}`", want.join(","))));
    }
    Ok(())
}

fn tokens_field(name: &str, line: u64, field: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = field.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(Error::parse(name, line, "empty token list"));
    }
    Ok(tokens)
}

pub fn write_cleaned(posts: &[CleanPost]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "tokens"]).expect("in-memory write");
    for p in posts {
        w.write_record([p.label().to_string(), p.tokens().join(" ")])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn read_cleaned<R: Read>(r: R, name: &str) -> Result<Vec<CleanPost>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, name, &["label", "tokens"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let label = BinaryLabel::parse(&rec[0])
            .ok_or_else(|| Error::parse(name, line, format!("bad label {:?}", &rec[0])))?;
        let post = CleanPost::new(label, tokens_field(name, line, &rec[1])?)
            .ok_or_else(|| Error::parse(name, line, "invalid token"))?;
        out.push(post);
    }
    Ok(out)
}

pub fn save_cleaned(path: &Path, posts: &[CleanPost]) -> Result<()> {
    write_file(path, write_cleaned(posts))
}

pub fn load_cleaned(path: &Path) -> Result<Vec<CleanPost>> {
    read_cleaned(open(path)?, &path.display().to_string())
}

pub fn write_labeled(rows: &[LabeledRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "score", "tokens"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.label.to_string(), format!("{:?}", r.score.value()), r.tokens.join(" ")])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn read_labeled<R: Read>(r: R, name: &str) -> Result<Vec<LabeledRow>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, name, &["label", "score", "tokens"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let label = rec[0]
            .parse::<i64>()
            .ok()
            .and_then(TriLabel::from_value)
            .ok_or_else(|| Error::parse(name, line, format!("bad label {:?}", &rec[0])))?;
        let score = rec[1]
            .parse::<f64>()
            .ok()
            .and_then(SentimentScore::new)
            .ok_or_else(|| Error::parse(name, line, format!("bad score {:?}", &rec[1])))?;
        out.push(LabeledRow {
            label,
            score,
            tokens: tokens_field(name, line, &rec[2])?,
        });
    }
    Ok(out)
}

pub fn save_labeled(path: &Path, rows: &[LabeledRow]) -> Result<()> {
    write_file(path, write_labeled(rows))
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledRow>> {
    read_labeled(open(path)?, &path.display().to_string())
}

pub fn write_indices(indices: &[usize]) -> Vec<u8> {
    let mut out = String::from("index\n");
    for i in indices {
        out.push_str(&format!("{i}\n"));
    }
    out.into_bytes()
}

pub fn read_indices<R: Read>(r: R, name: &str) -> Result<Vec<usize>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, name, &["index"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push(
            rec[0]
                .parse()
                .map_err(|_| Error::parse(name, line, format!("bad index {:?}", &rec[0])))?,
        );
    }
    Ok(out)
}

pub fn save_indices(path: &Path, indices: &[usize]) -> Result<()> {
    write_file(path, write_indices(indices))
}

pub fn load_indices(path: &Path) -> Result<Vec<usize>> {
    read_indices(open(path)?, &path.display().to_string())
}
