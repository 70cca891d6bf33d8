//! Corpus ingestion and the text-cleaning pipeline: mention stripping,
//! punctuation stripping, dictionary segmentation, stopword removal and
//! pruning of posts left empty.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;

use crate::error::{Error, Result};

/// Original binary sentiment annotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinaryLabel {
    Negative = 0,
    Positive = 1,
}

impl BinaryLabel {
    pub const ALL: [BinaryLabel; 2] = [BinaryLabel::Negative, BinaryLabel::Positive];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Option<Self> {
        match v {
            0 => Some(BinaryLabel::Negative),
            1 => Some(BinaryLabel::Positive),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "0" => Some(BinaryLabel::Negative),
            "1" => Some(BinaryLabel::Positive),
            _ => None,
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawPost {
    pub label: BinaryLabel,
    pub text: String,
}

/// A cleaned, segmented post. Never has an empty token list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CleanPost {
    label: BinaryLabel,
    tokens: Vec<String>,
}

impl CleanPost {
    /// Returns `None` for an empty token list or a token that is empty or
    /// contains whitespace or punctuation.
    pub fn new(label: BinaryLabel, tokens: Vec<String>) -> Option<Self> {
        let valid = !tokens.is_empty()
            && tokens
                .iter()
                .all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace) && !PUNCTUATION.is_match(t));
        valid.then_some(CleanPost { label, tokens })
    }

    pub fn label(&self) -> BinaryLabel {
        self.label
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Word list for forward maximum matching.
#[derive(Clone, Debug)]
pub struct SegDictionary {
    words: HashSet<String>,
    freqs: HashMap<String, u64>,
    max_len: usize,
}

impl SegDictionary {
    pub fn from_words<I, W>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = W>,
        W: Into<String>,
    {
        let words: HashSet<String> = words
            .into_iter()
            .map(Into::into)
            .filter(|w: &String| !w.is_empty())
            .collect();
        Self::build(words, HashMap::new())
    }

    fn build(words: HashSet<String>, freqs: HashMap<String, u64>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::Empty("segmentation dictionary".into()));
        }
        let max_len = words.iter().map(|w| w.chars().count()).max().unwrap_or(1);
        Ok(SegDictionary {
            words,
            freqs,
            max_len,
        })
    }

    /// Parses `word` or `word frequency` lines. A trailing part-of-speech
    /// column, as found in common segmenter dictionaries, is ignored.
    pub fn from_reader<R: Read>(reader: R, name: &str) -> Result<Self> {
        let mut words = HashSet::new();
        let mut freqs = HashMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = line.map_err(|e| Error::parse(name, line_no, e.to_string()))?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            if let Some(freq) = fields.next() {
                let freq: u64 = freq
                    .parse()
                    .map_err(|_| Error::parse(name, line_no, format!("bad frequency {freq:?}")))?;
                freqs.insert(word.to_string(), freq);
            }
            words.insert(word.to_string());
        }
        Self::build(words, freqs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.freqs.get(word).copied()
    }

    /// Length in characters of the longest entry.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn read_stopwords<R: Read>(reader: R, name: &str) -> Result<HashSet<String>> {
    let mut set = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::parse(name, i as u64 + 1, e.to_string()))?;
        let word = line.trim();
        if !word.is_empty() {
            set.insert(word.to_string());
        }
    }
    Ok(set)
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_stopwords(file, &path.display().to_string())
}

/// Reads a `label,review` CSV. Errors carry the 1-based line number.
pub fn read_corpus<R: Read>(reader: R, name: &str) -> Result<Vec<RawPost>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut posts = Vec::new();
    let mut record = csv::ByteRecord::new();
    let mut first = true;
    loop {
        let more = csv.read_byte_record(&mut record).map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(name, line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fields = record
            .iter()
            .map(std::str::from_utf8)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(name, line, "invalid UTF-8"))?;
        if first {
            first = false;
            let header: Vec<&str> = fields.iter().map(|f| f.trim_start_matches('\u{feff}').trim()).collect();
            if header != ["label", "review"] {
                return Err(Error::parse(
                    name,
                    line,
                    format!("expected header `label,review`, found {:?}", fields.join(",")),
                ));
            }
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::parse(
                name,
                line,
                format!("expected 2 columns, found {}", fields.len()),
            ));
        }
        let label = BinaryLabel::parse(fields[0])
            .ok_or_else(|| Error::parse(name, line, format!("label {:?} is not 0 or 1", fields[0])))?;
        posts.push(RawPost {
            label,
            text: fields[1].to_string(),
        });
    }
    if first {
        return Err(Error::parse(name, 1, "missing header `label,review`"));
    }
    Ok(posts)
}

pub fn load_corpus(path: &Path) -> Result<Vec<RawPost>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file, &path.display().to_string())
}

/// Per-label counts; both labels are always present.
pub fn class_counts(posts: &[RawPost]) -> BTreeMap<BinaryLabel, usize> {
    let mut counts: BTreeMap<BinaryLabel, usize> = BinaryLabel::ALL.iter().map(|&l| (l, 0)).collect();
    for post in posts {
        *counts.entry(post.label).or_default() += 1;
    }
    counts
}

/// Removes every `@` run up to the next whitespace character, together with
/// that one whitespace character. A mention at the end of the text is
/// removed as well.
pub fn strip_mentions(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '@' {
            out.push(c);
            continue;
        }
        while chars.next_if(|ch| !ch.is_whitespace()).is_some() {}
        chars.next();
    }
    out
}

static PUNCTUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").expect("valid regex"));

/// Removes every code point in a Unicode punctuation category (`P*`).
pub fn strip_punctuation(text: &str) -> String {
    PUNCTUATION.replace_all(text, "").into_owned()
}

/// Forward maximum matching. Whitespace separates runs and is dropped;
/// inside a run the longest dictionary word starting at each position is
/// taken, falling back to a single character.
pub fn segment(text: &str, dict: &SegDictionary) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut bounds: Vec<usize> = Vec::new();
    for run in text.split(char::is_whitespace).filter(|r| !r.is_empty()) {
        bounds.clear();
        bounds.extend(run.char_indices().map(|(i, _)| i));
        bounds.push(run.len());
        let n = bounds.len() - 1;
        let mut i = 0;
        while i < n {
            let longest = dict.max_len().min(n - i);
            let take = (2..=longest)
                .rev()
                .find(|&len| dict.contains(&run[bounds[i]..bounds[i + len]]))
                .unwrap_or(1);
            tokens.push(run[bounds[i]..bounds[i + take]].to_string());
            i += take;
        }
    }
    tokens
}

pub fn remove_stopwords(tokens: Vec<String>, stopset: &HashSet<String>) -> Vec<String> {
    tokens.into_iter().filter(|t| !stopset.contains(t)).collect()
}

/// Full cleaning chain for one text.
pub fn clean_text(text: &str, dict: &SegDictionary, stopset: &HashSet<String>) -> Vec<String> {
    let text = strip_punctuation(&strip_mentions(text));
    remove_stopwords(segment(&text, dict), stopset)
}

#[derive(Clone, Debug, Default)]
pub struct CleanedCorpus {
    pub posts: Vec<CleanPost>,
    /// Posts removed because nothing survived cleaning.
    pub dropped: usize,
}

pub fn clean_corpus(
    posts: &[RawPost],
    dict: &SegDictionary,
    stopset: &HashSet<String>,
) -> CleanedCorpus {
    let cleaned: Vec<Option<CleanPost>> = posts
        .par_iter()
        .map(|p| CleanPost::new(p.label, clean_text(&p.text, dict, stopset)))
        .collect();
    let total = cleaned.len();
    let posts: Vec<CleanPost> = cleaned.into_iter().flatten().collect();
    let dropped = total - posts.len();
    if dropped > 0 {
        log::info!("dropped {dropped} of {total} posts left empty after cleaning");
    }
    CleanedCorpus { posts, dropped }
}
