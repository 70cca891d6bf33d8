//! Vocabulary fitting, integer encoding, padding and one-hot labels.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::labeler::TriLabel;
use crate::sampler::LabeledExample;

pub const DEFAULT_CAPACITY: usize = 5000;
pub const DEFAULT_MAXLEN: usize = 400;

/// Frequency-ranked word index. Index 0 is reserved for padding, so a
/// capacity of `V` keeps at most `V − 1` words at indices `1..V`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    index_of: HashMap<String, u32>,
    words: Vec<String>,
    capacity: usize,
    documents: usize,
}

/// Counts token frequencies over `docs` and ranks by descending count,
/// breaking ties by first occurrence.
pub fn fit_vocab<I, D>(docs: I, capacity: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = D>,
    D: AsRef<[String]>,
{
    if capacity < 2 {
        return Err(Error::InvalidArgument(format!("vocabulary capacity {capacity} < 2")));
    }
    // word -> (count, first occurrence)
    let mut stats: HashMap<&str, (u64, usize)> = HashMap::new();
    let mut seen = 0usize;
    let mut documents = 0usize;
    let docs: Vec<D> = docs.into_iter().collect();
    for doc in &docs {
        documents += 1;
        for token in doc.as_ref() {
            let entry = stats.entry(token.as_str()).or_insert((0, seen));
            entry.0 += 1;
            seen += 1;
        }
    }
    if documents == 0 {
        return Err(Error::Empty("cannot fit a vocabulary on an empty corpus".into()));
    }
    let mut ranked: Vec<(&str, u64, usize)> = stats.into_iter().map(|(w, (c, f))| (w, c, f)).collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(capacity - 1);
    let words: Vec<String> = ranked.into_iter().map(|(w, _, _)| w.to_string()).collect();
    Ok(Vocabulary::from_ranked(words, capacity, documents))
}

impl Vocabulary {
    fn from_ranked(words: Vec<String>, capacity: usize, documents: usize) -> Self {
        let index_of = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + 1))
            .collect();
        Vocabulary {
            index_of,
            words,
            capacity,
            documents,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of indexed words (excluding padding).
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Documents the vocabulary was fitted on.
    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn index(&self, word: &str) -> Option<u32> {
        self.index_of.get(word).copied()
    }

    pub fn word(&self, index: u32) -> Option<&str> {
        (index as usize).checked_sub(1).and_then(|i| self.words.get(i)).map(String::as_str)
    }

    /// Maps tokens to indices, dropping out-of-vocabulary tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.index(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().filter_map(|&i| self.word(i)).map(str::to_string).collect()
    }

    /// Tab-separated `word<TAB>index` in index order under a
    /// `#capacity=V<TAB>documents=N` header.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#capacity={}\tdocuments={}", self.capacity, self.documents)?;
        for (i, word) in self.words.iter().enumerate() {
            writeln!(w, "{word}\t{}", i + 1)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R, name: &str) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::parse(name, 1, e.to_string()))?,
            None => return Err(Error::parse(name, 1, "missing header")),
        };
        let field = |key: &str| -> Option<usize> {
            header
                .trim_start_matches('#')
                .split('\t')
                .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
        };
        let (Some(capacity), Some(documents)) = (field("capacity"), field("documents")) else {
            return Err(Error::parse(name, 1, "expected `#capacity=V<TAB>documents=N`"));
        };
        let mut words = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i as u64 + 2;
            let line = line.map_err(|e| Error::parse(name, line_no, e.to_string()))?;
            let Some((word, index)) = line.split_once('\t') else {
                return Err(Error::parse(name, line_no, "expected `word<TAB>index`"));
            };
            if index.parse::<usize>().ok() != Some(words.len() + 1) {
                return Err(Error::parse(name, line_no, format!("index {index:?} out of sequence")));
            }
            words.push(word.to_string());
        }
        if words.len() >= capacity.max(1) {
            return Err(Error::parse(name, 1, "more words than capacity allows"));
        }
        Ok(Vocabulary::from_ranked(words, capacity, documents))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file, &path.display().to_string())
    }
}

/// Fixed-length id sequence; padding zeros only ever form a prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedSequence(Vec<u32>);

impl PaddedSequence {
    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Left-pads with zeros, or keeps the last `maxlen` ids.
pub fn pad(seq: &[u32], maxlen: usize) -> Result<PaddedSequence> {
    if maxlen == 0 {
        return Err(Error::InvalidArgument("maxlen must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(maxlen);
    if seq.len() >= maxlen {
        out.extend_from_slice(&seq[seq.len() - maxlen..]);
    } else {
        out.resize(maxlen - seq.len(), 0);
        out.extend_from_slice(seq);
    }
    Ok(PaddedSequence(out))
}

/// Categorical target in class order (−1, 0, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneHotLabel(pub [f32; 3]);

pub fn one_hot(label: TriLabel) -> OneHotLabel {
    let mut v = [0f32; 3];
    v[label.index()] = 1.0;
    OneHotLabel(v)
}

/// Padded ids for a whole dataset, flattened row-major, with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset {
    pub seq_len: usize,
    pub ids: Vec<u32>,
    pub labels: Vec<TriLabel>,
}

impl EncodedDataset {
    pub fn new(seq_len: usize, ids: Vec<u32>, labels: Vec<TriLabel>) -> Result<Self> {
        if seq_len == 0 || ids.len() != seq_len * labels.len() {
            return Err(Error::Shape(format!(
                "{} ids do not form {} rows of length {seq_len}",
                ids.len(),
                labels.len()
            )));
        }
        Ok(EncodedDataset { seq_len, ids, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.seq_len..(i + 1) * self.seq_len]
    }

    /// Rows `order` gathered into a new dataset.
    pub fn select(&self, order: &[usize]) -> EncodedDataset {
        let mut ids = Vec::with_capacity(order.len() * self.seq_len);
        for &i in order {
            ids.extend_from_slice(self.row(i));
        }
        EncodedDataset {
            seq_len: self.seq_len,
            ids,
            labels: order.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

pub fn encode_dataset(vocab: &Vocabulary, examples: &[LabeledExample], maxlen: usize) -> Result<EncodedDataset> {
    let mut ids = Vec::with_capacity(examples.len() * maxlen);
    for ex in examples {
        ids.extend_from_slice(pad(&vocab.encode(&ex.tokens), maxlen)?.ids());
    }
    EncodedDataset::new(maxlen, ids, examples.iter().map(|e| e.label).collect())
}
