use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "weibo-cnn", version, about = "Text-CNN sentiment pipeline for Weibo posts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean and segment the raw corpus.
    Preprocess(Options),
    /// Train the sentiment scorer and relabel posts into three classes.
    Label(Options),
    /// Split the labeled corpus and oversample the training partition.
    Split(Options),
    /// Fit the vocabulary and train the CNN.
    Train(Options),
    /// Score the trained model on the test partition.
    Evaluate(Options),
    /// Classify raw texts, one per line.
    Predict(PredictArgs),
    /// Write the category-count tables behind the distribution plots.
    ExportPlot(Options),
    /// Run preprocess, label, split, train and evaluate in order.
    Pipeline(Options),
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// File with one raw post per line.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub options: Options,
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to the built-in defaults.
#[derive(Debug, Default, Args)]
pub struct Options {
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Raw corpus CSV with a `label,review` header.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Segmentation dictionary, one word per line.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Stopword list, one word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Model file (defaults to model.wscnn inside the output directory).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Vocabulary capacity, padding index included.
    #[arg(long)]
    pub max_words: Option<usize>,
    #[arg(long)]
    pub maxlen: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub kernel: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Fraction of the training set held out for early stopping.
    #[arg(long)]
    pub val_split: Option<f64>,
    /// Fraction of the labeled corpus used for training.
    #[arg(long)]
    pub split_ratio: Option<f64>,
    /// Undersample every class to the smallest before splitting.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub reconstruct_counts: Option<bool>,
    /// Worker threads for data-parallel stages (1 = single-threaded).
    #[arg(long)]
    pub threads: Option<usize>,
}
