//! Category-count tables for the corpus distribution bar charts.

use weibo_cnn::corpus::{BinaryLabel, RawPost};
use weibo_cnn::labeler::TriLabel;
use weibo_cnn::sampler::{class_counts, Labeled};

pub const HEADER: &str = "category,count\n";

/// Three-class counts in the order −1, 0, 1. Empty input gives zero rows.
pub fn emit_distribution<T: Labeled>(items: &[T]) -> String {
    let counts = class_counts(items);
    let mut s = HEADER.to_string();
    for label in TriLabel::ALL {
        s.push_str(&format!("{},{}\n", label.value(), counts[label.index()]));
    }
    s
}

/// Binary counts of the raw corpus in the order 0, 1.
pub fn emit_raw_distribution(posts: &[RawPost]) -> String {
    let counts = weibo_cnn::corpus::class_counts(posts);
    let mut s = HEADER.to_string();
    for label in BinaryLabel::ALL {
        s.push_str(&format!("{},{}\n", label.value(), counts[&label]));
    }
    s
}
