//! Three-class relabeling: a multinomial Naive Bayes scorer trained on the
//! corpus's own binary labels produces a positive-class posterior, which is
//! cut into negative / neutral / positive at 0.3 and 0.7.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use crate::corpus::{BinaryLabel, CleanPost};
use crate::error::{Error, Result};

/// Scores strictly below this are negative.
pub const NEGATIVE_BELOW: f64 = 0.3;
/// Scores strictly above this are positive.
pub const POSITIVE_ABOVE: f64 = 0.7;

/// Three-way sentiment label, ordered (−1, 0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TriLabel {
    Negative,
    Neutral,
    Positive,
}

impl TriLabel {
    pub const ALL: [TriLabel; 3] = [TriLabel::Negative, TriLabel::Neutral, TriLabel::Positive];

    pub fn value(self) -> i8 {
        match self {
            TriLabel::Negative => -1,
            TriLabel::Neutral => 0,
            TriLabel::Positive => 1,
        }
    }

    /// Class index used for one-hot vectors and confusion matrices.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        TriLabel::ALL.get(i).copied()
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            -1 => Some(TriLabel::Negative),
            0 => Some(TriLabel::Neutral),
            1 => Some(TriLabel::Positive),
            _ => None,
        }
    }
}

impl fmt::Display for TriLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Posterior probability of the positive class.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SentimentScore(f64);

impl SentimentScore {
    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(SentimentScore(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn classify(score: SentimentScore) -> TriLabel {
    let v = score.value();
    if v < NEGATIVE_BELOW {
        TriLabel::Negative
    } else if v > POSITIVE_ABOVE {
        TriLabel::Positive
    } else {
        TriLabel::Neutral
    }
}

/// Anything that maps a token list to a positive-class score.
pub trait SentimentScorer {
    fn score(&self, tokens: &[String]) -> SentimentScore;
}

/// Log-space class tables for one binary class.
#[derive(Clone, Debug, PartialEq)]
struct ClassTable {
    log_prior: f64,
    /// Log-likelihood of tokens seen in this class.
    log_likelihood: HashMap<String, f64>,
    /// Log-likelihood shared by every token with zero count in this class.
    unseen: f64,
}

/// Multinomial Naive Bayes with add-one smoothing and one reserved slot per
/// class for tokens never seen in training.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveBayesScorer {
    classes: [ClassTable; 2],
    vocab_size: usize,
}

pub fn train_scorer(posts: &[CleanPost]) -> Result<NaiveBayesScorer> {
    let mut docs = [0usize; 2];
    let mut counts: [HashMap<&str, u64>; 2] = [HashMap::new(), HashMap::new()];
    let mut totals = [0u64; 2];
    let mut vocab: HashSet<&str> = HashSet::new();
    for post in posts {
        let c = post.label().value() as usize;
        docs[c] += 1;
        for token in post.tokens() {
            *counts[c].entry(token.as_str()).or_default() += 1;
            totals[c] += 1;
            vocab.insert(token.as_str());
        }
    }
    for label in BinaryLabel::ALL {
        if docs[label.value() as usize] == 0 {
            return Err(Error::MissingClass(label.to_string()));
        }
    }
    let vocab_size = vocab.len();
    let n_docs = (docs[0] + docs[1]) as f64;
    let classes = [0usize, 1].map(|c| {
        let denom = (totals[c] + vocab_size as u64 + 1) as f64;
        let log_denom = denom.ln();
        ClassTable {
            log_prior: (docs[c] as f64 / n_docs).ln(),
            log_likelihood: counts[c]
                .iter()
                .map(|(&tok, &n)| (tok.to_string(), ((n + 1) as f64).ln() - log_denom))
                .collect(),
            unseen: -log_denom,
        }
    });
    Ok(NaiveBayesScorer {
        classes,
        vocab_size,
    })
}

impl NaiveBayesScorer {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn log_prior(&self, label: BinaryLabel) -> f64 {
        self.classes[label.value() as usize].log_prior
    }

    /// Log-likelihood of `token` under `label`; unseen tokens use the
    /// reserved slot.
    pub fn log_likelihood(&self, label: BinaryLabel, token: &str) -> f64 {
        let table = &self.classes[label.value() as usize];
        table.log_likelihood.get(token).copied().unwrap_or(table.unseen)
    }

    pub fn unseen_log_likelihood(&self, label: BinaryLabel) -> f64 {
        self.classes[label.value() as usize].unseen
    }

    /// Every token with a stored likelihood in either class, sorted.
    pub fn vocabulary(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self
            .classes
            .iter()
            .flat_map(|c| c.log_likelihood.keys().map(String::as_str))
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        words.sort_unstable();
        words
    }

    fn joint_log(&self, label: BinaryLabel, tokens: &[String]) -> f64 {
        // sorted summation keeps the result independent of token order
        let mut terms: Vec<f64> = tokens.iter().map(|t| self.log_likelihood(label, t)).collect();
        terms.sort_by(f64::total_cmp);
        self.log_prior(label) + terms.iter().sum::<f64>()
    }

    const FORMAT_TAG: &'static str = "naive-bayes-scorer";
    const FORMAT_VERSION: u32 = 1;

    /// Text serialization: a versioned header with priors, unseen slots and
    /// vocab size, then `class<TAB>token<TAB>log_likelihood` lines sorted by
    /// class and token.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", Self::FORMAT_TAG, Self::FORMAT_VERSION)?;
        writeln!(w, "vocab_size {}", self.vocab_size)?;
        for (c, table) in self.classes.iter().enumerate() {
            writeln!(w, "log_prior {c} {:?}", table.log_prior)?;
            writeln!(w, "unseen {c} {:?}", table.unseen)?;
        }
        for (c, table) in self.classes.iter().enumerate() {
            let sorted: BTreeMap<&String, &f64> = table.log_likelihood.iter().collect();
            for (token, ll) in sorted {
                writeln!(w, "{c}\t{token}\t{ll:?}")?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R, name: &str) -> Result<Self> {
        let lines: Vec<String> = BufReader::new(reader)
            .lines()
            .enumerate()
            .map(|(i, l)| l.map_err(|e| Error::parse(name, i as u64 + 1, e.to_string())))
            .collect::<Result<_>>()?;
        let header_line = |i: usize, prefix: &str| -> Result<&str> {
            lines
                .get(i)
                .and_then(|l| l.strip_prefix(prefix))
                .ok_or_else(|| Error::parse(name, i as u64 + 1, format!("expected `{prefix}...`")))
        };
        let number = |i: usize, s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::parse(name, i as u64 + 1, format!("bad number {s:?}")))
        };

        let tag = format!("{} {}", Self::FORMAT_TAG, Self::FORMAT_VERSION);
        if lines.first().map(String::as_str) != Some(tag.as_str()) {
            return Err(Error::parse(name, 1, format!("expected scorer header `{tag}`")));
        }
        let vocab_size = header_line(1, "vocab_size ")?
            .parse()
            .map_err(|_| Error::parse(name, 2, "bad vocab_size"))?;
        let mut priors = [0f64; 2];
        let mut unseen = [0f64; 2];
        for c in 0..2 {
            let i = 2 + 2 * c;
            priors[c] = number(i, header_line(i, &format!("log_prior {c} "))?)?;
            unseen[c] = number(i + 1, header_line(i + 1, &format!("unseen {c} "))?)?;
        }

        let mut tables: [HashMap<String, f64>; 2] = [HashMap::new(), HashMap::new()];
        for (i, line) in lines.iter().enumerate().skip(6) {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [c, token, ll] = parts[..] else {
                return Err(Error::parse(name, i as u64 + 1, "expected `class<TAB>token<TAB>value`"));
            };
            let c = match c {
                "0" => 0,
                "1" => 1,
                _ => return Err(Error::parse(name, i as u64 + 1, format!("bad class {c:?}"))),
            };
            tables[c].insert(token.to_string(), number(i, ll)?);
        }
        let [neg, pos] = tables;
        let table = |c: usize, log_likelihood| ClassTable {
            log_prior: priors[c],
            log_likelihood,
            unseen: unseen[c],
        };
        Ok(NaiveBayesScorer {
            classes: [table(0, neg), table(1, pos)],
            vocab_size,
        })
    }
}

impl SentimentScorer for NaiveBayesScorer {
    /// Posterior of the positive class by log-sum-exp over the two joint
    /// log-probabilities. An empty token list yields the prior.
    fn score(&self, tokens: &[String]) -> SentimentScore {
        let neg = self.joint_log(BinaryLabel::Negative, tokens);
        let pos = self.joint_log(BinaryLabel::Positive, tokens);
        let max = neg.max(pos);
        let log_norm = max + ((neg - max).exp() + (pos - max).exp()).ln();
        SentimentScore((pos - log_norm).exp().clamp(0.0, 1.0))
    }
}

/// Scores and classifies every post.
pub fn relabel<S: SentimentScorer + Sync>(
    scorer: &S,
    posts: &[CleanPost],
) -> Vec<(TriLabel, SentimentScore)> {
    use rayon::prelude::*;
    posts
        .par_iter()
        .map(|p| {
            let s = scorer.score(p.tokens());
            (classify(s), s)
        })
        .collect()
}
