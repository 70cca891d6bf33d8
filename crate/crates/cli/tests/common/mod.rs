//! Synthetic Weibo-style corpus and helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POSITIVE: &[&str] = &["开心", "喜欢", "快乐", "美好", "幸福", "感动"];
pub const NEGATIVE: &[&str] = &["难过", "讨厌", "伤心", "生气", "失望", "烦躁"];
pub const NOISE: &[&str] = &["今天", "我们", "天气", "上班", "吃饭", "朋友", "电影", "周末", "手机", "城市"];
pub const STOPWORDS: &[&str] = &["的", "了", "是"];

pub struct Fixture {
    pub corpus: PathBuf,
    pub dict: PathBuf,
    pub stopwords: PathBuf,
}

/// Writes a corpus of `n` posts plus dictionary and stopword files into `dir`.
/// Posts mix sentiment words, noise, stopwords, mentions and punctuation; a
/// few consist of nothing but removable material.
pub fn write_fixture(dir: &Path, n: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("label,review\n");
    for i in 0..n {
        let positive = i % 2 == 0;
        let text = if i % 97 == 13 {
            "@某人 ！！的了".to_string()
        } else {
            let (own, other) = if positive { (POSITIVE, NEGATIVE) } else { (NEGATIVE, POSITIVE) };
            let mut words: Vec<&str> = Vec::new();
            for _ in 0..rng.random_range(1..4) {
                words.push(own.choose(&mut rng).unwrap());
            }
            if rng.random_bool(0.3) {
                words.push(other.choose(&mut rng).unwrap());
            }
            for _ in 0..rng.random_range(2..7) {
                words.push(NOISE.choose(&mut rng).unwrap());
            }
            if rng.random_bool(0.5) {
                words.push(STOPWORDS.choose(&mut rng).unwrap());
            }
            // shuffle by sorting on random keys
            let mut keyed: Vec<(u32, &str)> = words.into_iter().map(|w| (rng.random(), w)).collect();
            keyed.sort();
            let mut text: String = keyed.into_iter().map(|(_, w)| w).collect();
            if rng.random_bool(0.3) {
                text = format!("@用户{} {text}", rng.random_range(0..100));
            }
            if rng.random_bool(0.5) {
                text.push('！');
            }
            text
        };
        csv.push_str(&format!("{},\"{}\"\n", u8::from(positive), text));
    }
    let fixture = Fixture {
        corpus: dir.join("corpus.csv"),
        dict: dir.join("dict.txt"),
        stopwords: dir.join("stopwords.txt"),
    };
    fs::write(&fixture.corpus, csv).unwrap();
    let words: Vec<&str> = POSITIVE.iter().chain(NEGATIVE).chain(NOISE).chain(STOPWORDS).copied().collect();
    fs::write(&fixture.dict, words.join("\n") + "\n").unwrap();
    fs::write(&fixture.stopwords, STOPWORDS.join("\n") + "\n").unwrap();
    fixture
}

/// Flags for a model small enough to train in seconds.
pub const SMALL_MODEL: &[&str] = &[
    "--max-words", "60", "--maxlen", "16", "--embed-dim", "8", "--filters", "12", "--hidden", "12",
    "--epochs", "3",
];

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_weibo-cnn"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}
