//! The pipeline stages. Each stage reads its inputs from the output
//! directory (or from flags), writes its artifacts there, and returns a
//! one-line summary together with the files it touched.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use weibo_cnn::corpus::{clean_corpus, clean_text, load_corpus, load_stopwords, SegDictionary};
use weibo_cnn::dataset::{load_cleaned, load_indices, load_labeled, save_cleaned, save_indices, save_labeled, LabeledRow};
use weibo_cnn::features::{encode_dataset, fit_vocab, pad, Vocabulary};
use weibo_cnn::labeler::{relabel, train_scorer, TriLabel};
use weibo_cnn::metrics::EvalReport;
use weibo_cnn::model::{argmax, build_model, load_model, save_model, Model};
use weibo_cnn::sampler::{class_counts, oversample_indices, prebalance_indices, split_indices};
use weibo_cnn::trainer::train;

use crate::config::{require, RunConfig};
use crate::plot::{emit_distribution, emit_raw_distribution};

/// Rows scored per forward pass during evaluation and prediction.
const INFER_BATCH: usize = 256;

/// File names inside the output directory.
pub struct Layout<'a> {
    pub out: &'a Path,
}

impl Layout<'_> {
    pub fn cleaned(&self) -> PathBuf {
        self.out.join("cleaned.csv")
    }
    pub fn labeled(&self) -> PathBuf {
        self.out.join("labeled.csv")
    }
    pub fn scorer(&self) -> PathBuf {
        self.out.join("scorer.txt")
    }
    pub fn split_train(&self) -> PathBuf {
        self.out.join("split_train.csv")
    }
    pub fn split_test(&self) -> PathBuf {
        self.out.join("split_test.csv")
    }
    pub fn vocab(&self) -> PathBuf {
        self.out.join("vocab.tsv")
    }
    pub fn history(&self) -> PathBuf {
        self.out.join("history.csv")
    }
    pub fn report_text(&self) -> PathBuf {
        self.out.join("report.txt")
    }
    pub fn report_csv(&self) -> PathBuf {
        self.out.join("report.csv")
    }
    pub fn predictions(&self) -> PathBuf {
        self.out.join("predictions.csv")
    }
    pub fn fig_raw(&self) -> PathBuf {
        self.out.join("fig1_raw.csv")
    }
    pub fn fig_relabeled(&self) -> PathBuf {
        self.out.join("fig2_relabeled.csv")
    }
    pub fn fig_oversampled(&self) -> PathBuf {
        self.out.join("fig3_oversampled.csv")
    }
    pub fn manifest(&self, command: &str) -> PathBuf {
        self.out.join(format!("manifest_{command}.txt"))
    }
}

pub struct Outcome {
    pub summary: String,
    pub inputs: Vec<PathBuf>,
    pub artifacts: Vec<PathBuf>,
}

fn need(path: &Path, hint: &str) -> Result<()> {
    if !path.is_file() {
        bail!("missing input file {} ({hint})", path.display());
    }
    Ok(())
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn load_segmentation(cfg: &RunConfig, command: &str) -> Result<(SegDictionary, HashSet<String>, Vec<PathBuf>)> {
    let dict_path = require(&cfg.dict, "dict", command)?;
    let stop_path = require(&cfg.stopwords, "stopwords", command)?;
    let dict = SegDictionary::load(dict_path)?;
    let stop = load_stopwords(stop_path)?;
    Ok((dict, stop, vec![dict_path.to_path_buf(), stop_path.to_path_buf()]))
}

pub fn preprocess(cfg: &RunConfig) -> Result<Outcome> {
    let corpus_path = require(&cfg.corpus, "corpus", "preprocess")?;
    let (dict, stop, mut inputs) = load_segmentation(cfg, "preprocess")?;
    inputs.insert(0, corpus_path.to_path_buf());
    let raw = load_corpus(corpus_path)?;
    let cleaned = clean_corpus(&raw, &dict, &stop);
    let layout = Layout { out: &cfg.out };
    save_cleaned(&layout.cleaned(), &cleaned.posts)?;
    write(&layout.fig_raw(), emit_raw_distribution(&raw))?;
    Ok(Outcome {
        summary: format!(
            "preprocess: read {} posts, kept {}, dropped {} -> {}",
            raw.len(),
            cleaned.posts.len(),
            cleaned.dropped,
            layout.cleaned().display()
        ),
        inputs,
        artifacts: vec![layout.cleaned(), layout.fig_raw()],
    })
}

fn counts_text(counts: [usize; 3]) -> String {
    TriLabel::ALL
        .iter()
        .map(|l| format!("{l}:{}", counts[l.index()]))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn label(cfg: &RunConfig) -> Result<Outcome> {
    let layout = Layout { out: &cfg.out };
    need(&layout.cleaned(), "run `preprocess` first")?;
    let posts = load_cleaned(&layout.cleaned())?;
    let scorer = train_scorer(&posts)?;
    let rows: Vec<LabeledRow> = relabel(&scorer, &posts)
        .into_iter()
        .zip(&posts)
        .map(|((label, score), post)| LabeledRow {
            label,
            score,
            tokens: post.tokens().to_vec(),
        })
        .collect();
    let mut scorer_bytes = Vec::new();
    scorer.write_to(&mut scorer_bytes)?;
    write(&layout.scorer(), scorer_bytes)?;
    save_labeled(&layout.labeled(), &rows)?;
    let labels: Vec<TriLabel> = rows.iter().map(|r| r.label).collect();
    write(&layout.fig_relabeled(), emit_distribution(&labels))?;
    Ok(Outcome {
        summary: format!(
            "label: {} posts relabeled ({}) -> {}",
            rows.len(),
            counts_text(class_counts(&labels)),
            layout.labeled().display()
        ),
        inputs: vec![layout.cleaned()],
        artifacts: vec![layout.scorer(), layout.labeled(), layout.fig_relabeled()],
    })
}

/// Labeled-row indices of the oversampled training set and of the test
/// set, in that order.
pub fn split_plan(labels: &[TriLabel], ratio: f64, reconstruct: bool, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let pool: Vec<usize> = if reconstruct {
        prebalance_indices(labels, seed)?
    } else {
        (0..labels.len()).collect()
    };
    let (train_pos, test_pos) = split_indices(pool.len(), ratio, seed)?;
    let train: Vec<usize> = train_pos.iter().map(|&i| pool[i]).collect();
    let test: Vec<usize> = test_pos.iter().map(|&i| pool[i]).collect();
    let train_labels: Vec<TriLabel> = train.iter().map(|&i| labels[i]).collect();
    let balanced = oversample_indices(&train_labels, seed)?
        .into_iter()
        .map(|i| train[i])
        .collect();
    Ok((balanced, test))
}

pub fn split(cfg: &RunConfig) -> Result<Outcome> {
    let layout = Layout { out: &cfg.out };
    need(&layout.labeled(), "run `label` first")?;
    let rows = load_labeled(&layout.labeled())?;
    let labels: Vec<TriLabel> = rows.iter().map(|r| r.label).collect();
    let (train_idx, test_idx) = split_plan(&labels, cfg.split_ratio, cfg.reconstruct_counts, cfg.seed)?;
    save_indices(&layout.split_train(), &train_idx)?;
    save_indices(&layout.split_test(), &test_idx)?;
    let train_labels: Vec<TriLabel> = train_idx.iter().map(|&i| labels[i]).collect();
    write(&layout.fig_oversampled(), emit_distribution(&train_labels))?;
    Ok(Outcome {
        summary: format!(
            "split: {} train after oversampling ({}), {} test -> {}",
            train_idx.len(),
            counts_text(class_counts(&train_labels)),
            test_idx.len(),
            layout.split_train().display()
        ),
        inputs: vec![layout.labeled()],
        artifacts: vec![layout.split_train(), layout.split_test(), layout.fig_oversampled()],
    })
}

fn load_rows_by_index(labeled: &Path, manifest: &Path) -> Result<(Vec<LabeledRow>, Vec<usize>)> {
    let rows = load_labeled(labeled)?;
    let idx = load_indices(manifest)?;
    if let Some(&bad) = idx.iter().find(|&&i| i >= rows.len()) {
        bail!(
            "{} refers to row {bad}, but {} has only {} rows",
            manifest.display(),
            labeled.display(),
            rows.len()
        );
    }
    Ok((rows, idx))
}

pub fn train_stage(cfg: &RunConfig) -> Result<Outcome> {
    let layout = Layout { out: &cfg.out };
    need(&layout.labeled(), "run `label` first")?;
    need(&layout.split_train(), "run `split` first")?;
    let (rows, idx) = load_rows_by_index(&layout.labeled(), &layout.split_train())?;
    // the vocabulary sees each training post once, before oversampling
    let mut seen = HashSet::new();
    let unique: Vec<&[String]> = idx
        .iter()
        .filter(|&&i| seen.insert(i))
        .map(|&i| rows[i].tokens.as_slice())
        .collect();
    let vocab = fit_vocab(unique.iter().copied(), cfg.model.vocab_size)?;
    vocab.save(&layout.vocab())?;
    let examples: Vec<_> = idx.iter().map(|&i| rows[i].example()).collect();
    let data = encode_dataset(&vocab, &examples, cfg.model.maxlen)?;
    let mut model = build_model(&cfg.model, cfg.seed)?;
    let history = train(&mut model, &data, &cfg.train)?;
    let model_path = cfg.model_file();
    save_model(&model, &model_path)?;
    write(&layout.history(), history.to_csv())?;
    let last = history.epochs.last().map(|e| e.val_loss).unwrap_or(f64::NAN);
    Ok(Outcome {
        summary: format!(
            "train: {} examples, {} epochs (best {}), final val_loss {last:.4} -> {}",
            data.len(),
            history.stopped_epoch,
            history.best_epoch,
            model_path.display()
        ),
        inputs: vec![layout.labeled(), layout.split_train()],
        artifacts: vec![layout.vocab(), model_path, layout.history()],
    })
}

fn check_compatible(vocab: &Vocabulary, model: &Model) -> Result<()> {
    if vocab.capacity() != model.config().vocab_size {
        bail!(
            "vocabulary capacity {} does not match the model's {}",
            vocab.capacity(),
            model.config().vocab_size
        );
    }
    Ok(())
}

fn predict_all(model: &Model, ids: &[u32]) -> Result<Vec<Vec<f32>>> {
    let len = model.config().maxlen;
    let mut out = Vec::with_capacity(ids.len() / len);
    for chunk in ids.chunks(INFER_BATCH * len) {
        let probs = model.probabilities(chunk, chunk.len() / len)?;
        out.extend(probs.data().chunks(probs.shape()[1]).map(|r| r.to_vec()));
    }
    Ok(out)
}

fn label_of(probs: &[f32]) -> TriLabel {
    TriLabel::from_index(argmax(probs)).expect("model has three outputs")
}

pub fn evaluate(cfg: &RunConfig) -> Result<Outcome> {
    let layout = Layout { out: &cfg.out };
    let model_path = cfg.model_file();
    need(&layout.labeled(), "run `label` first")?;
    need(&layout.split_test(), "run `split` first")?;
    need(&layout.vocab(), "run `train` first")?;
    need(&model_path, "run `train` first")?;
    let (rows, idx) = load_rows_by_index(&layout.labeled(), &layout.split_test())?;
    let vocab = Vocabulary::load(&layout.vocab())?;
    let model = load_model(&model_path)?;
    check_compatible(&vocab, &model)?;
    let examples: Vec<_> = idx.iter().map(|&i| rows[i].example()).collect();
    let data = encode_dataset(&vocab, &examples, model.config().maxlen)?;
    let y_pred: Vec<TriLabel> = predict_all(&model, &data.ids)?.iter().map(|p| label_of(p)).collect();
    let report = EvalReport::from_labels(&data.labels, &y_pred)?;
    log::info!("evaluation report\n{report}");
    for w in report.warnings() {
        log::warn!("{w}");
    }
    write(&layout.report_text(), report.to_text())?;
    write(&layout.report_csv(), format!("{}\n{}\n", EvalReport::csv_header(), report.csv_row()))?;
    Ok(Outcome {
        summary: format!(
            "evaluate: {} test examples, accuracy {:.4}, macro F1 {:.4} -> {}",
            data.len(),
            report.aggregates.accuracy,
            report.aggregates.macro_avg.f1,
            layout.report_text().display()
        ),
        inputs: vec![layout.labeled(), layout.split_test(), layout.vocab(), model_path],
        artifacts: vec![layout.report_text(), layout.report_csv()],
    })
}

pub fn predict(cfg: &RunConfig, input: &Path) -> Result<Outcome> {
    let layout = Layout { out: &cfg.out };
    let model_path = cfg.model_file();
    need(input, "pass an existing file to --input")?;
    need(&layout.vocab(), "run `train` first")?;
    need(&model_path, "run `train` first")?;
    let (dict, stop, mut inputs) = load_segmentation(cfg, "predict")?;
    let text = fs::read_to_string(input).with_context(|| format!("cannot read {} as UTF-8", input.display()))?;
    let vocab = Vocabulary::load(&layout.vocab())?;
    let model = load_model(&model_path)?;
    check_compatible(&vocab, &model)?;
    let maxlen = model.config().maxlen;
    let lines: Vec<&str> = text.lines().collect();
    let mut ids = Vec::with_capacity(lines.len() * maxlen);
    for line in &lines {
        let tokens = clean_text(line, &dict, &stop);
        ids.extend_from_slice(pad(&vocab.encode(&tokens), maxlen)?.ids());
    }
    let mut csv = String::from("line,label,p_negative,p_neutral,p_positive\n");
    let probs = predict_all(&model, &ids)?;
    let mut counts = [0usize; 3];
    for (n, p) in probs.iter().enumerate() {
        let label = label_of(p);
        counts[label.index()] += 1;
        csv.push_str(&format!("{},{},{:?},{:?},{:?}\n", n + 1, label.value(), p[0], p[1], p[2]));
    }
    write(&layout.predictions(), csv)?;
    inputs.extend([input.to_path_buf(), layout.vocab(), model_path]);
    Ok(Outcome {
        summary: format!(
            "predict: {} lines classified ({}) -> {}",
            lines.len(),
            counts_text(counts),
            layout.predictions().display()
        ),
        inputs,
        artifacts: vec![layout.predictions()],
    })
}

pub fn export_plot(cfg: &RunConfig) -> Result<Outcome> {
    let layout = Layout { out: &cfg.out };
    need(&layout.labeled(), "run `label` first")?;
    let mut inputs = Vec::new();
    let mut artifacts = Vec::new();
    if let Some(corpus) = &cfg.corpus {
        write(&layout.fig_raw(), emit_raw_distribution(&load_corpus(corpus)?))?;
        inputs.push(corpus.clone());
        artifacts.push(layout.fig_raw());
    }
    let rows = load_labeled(&layout.labeled())?;
    let labels: Vec<TriLabel> = rows.iter().map(|r| r.label).collect();
    write(&layout.fig_relabeled(), emit_distribution(&labels))?;
    inputs.push(layout.labeled());
    artifacts.push(layout.fig_relabeled());
    if layout.split_train().is_file() {
        let (_, idx) = load_rows_by_index(&layout.labeled(), &layout.split_train())?;
        let train_labels: Vec<TriLabel> = idx.iter().map(|&i| labels[i]).collect();
        write(&layout.fig_oversampled(), emit_distribution(&train_labels))?;
        inputs.push(layout.split_train());
        artifacts.push(layout.fig_oversampled());
    }
    Ok(Outcome {
        summary: format!("export-plot: wrote {} tables to {}", artifacts.len(), cfg.out.display()),
        inputs,
        artifacts,
    })
}
