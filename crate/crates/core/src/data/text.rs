use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};

/// Labelled documents as read from disk, before vectorization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawCorpus {
    /// `(class name, text)` in file order.
    pub docs: Vec<(String, String)>,
    /// Class names in label-index order (sorted).
    pub classes: Vec<String>,
    /// Non-fatal problems met while loading.
    pub warnings: Vec<String>,
}

impl RawCorpus {
    pub fn from_docs(docs: Vec<(String, String)>) -> RawCorpus {
        let classes: BTreeSet<String> = docs.iter().map(|(c, _)| c.clone()).collect();
        RawCorpus {
            docs,
            classes: classes.into_iter().collect(),
            warnings: Vec::new(),
        }
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|(_, t)| t.as_str())
    }
}

/// Reads `label<TAB>text` lines. Lines without a tab or with an empty label are
/// skipped with a warning naming their line number.
pub fn load_labeled_lines(path: impl AsRef<Path>) -> Result<RawCorpus> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let content = String::from_utf8_lossy(&raw);
    let mut docs = Vec::new();
    let mut warnings = Vec::new();
    for (i, line) in content.lines().enumerate() {
        match line.split_once('\t') {
            Some((label, text)) if !label.trim().is_empty() => {
                docs.push((label.trim().to_string(), text.to_string()));
            }
            _ => warnings.push(format!(
                "{}:{}: expected `label<TAB>text`",
                path.display(),
                i + 1
            )),
        }
    }
    if docs.is_empty() {
        return Err(Error::Format(format!(
            "{}: no parseable `label<TAB>text` lines",
            path.display()
        )));
    }
    let mut corpus = RawCorpus::from_docs(docs);
    corpus.warnings = warnings;
    Ok(corpus)
}

/// Reads a directory holding one subdirectory per class and one document per
/// file. Class and file names are visited in sorted order.
pub fn load_dir_per_class(root: impl AsRef<Path>) -> Result<RawCorpus> {
    let root = root.as_ref();
    let read_dir = |p: &Path| -> Result<Vec<std::path::PathBuf>> {
        let mut entries = fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(p, err)))
            .collect::<Result<Vec<_>>>()?;
        entries.sort();
        Ok(entries)
    };
    let class_dirs: Vec<_> = read_dir(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::Format(format!(
            "{}: expected one subdirectory per class",
            root.display()
        )));
    }
    let mut corpus = RawCorpus::default();
    for dir in class_dirs {
        let class = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let files: Vec<_> = read_dir(&dir)?
            .into_iter()
            .filter(|p| p.is_file())
            .collect();
        if files.is_empty() {
            corpus
                .warnings
                .push(format!("class `{class}` has no documents"));
        }
        for f in files {
            let raw = fs::read(&f).map_err(|e| Error::io(&f, e))?;
            corpus
                .docs
                .push((class.clone(), String::from_utf8_lossy(&raw).into_owned()));
        }
        corpus.classes.push(class);
    }
    Ok(corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Tf,
    TfIdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorizerConfig {
    pub max_features: usize,
    pub weighting: Weighting,
    pub lowercase: bool,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        VectorizerConfig {
            max_features: 2000,
            weighting: Weighting::TfIdf,
            lowercase: true,
        }
    }
}

/// Splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str, cfg: &VectorizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            if cfg.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    index: BTreeMap<String, usize>,
    /// Document frequency by index.
    doc_freq: Vec<usize>,
    n_docs: usize,
    max_features: usize,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.doc_freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_freq.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn max_features(&self) -> usize {
        self.max_features
    }

    /// Tokens in index order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut t = vec![""; self.len()];
        for (tok, &i) in &self.index {
            t[i] = tok;
        }
        t
    }

    /// `ln((1 + D) / (1 + df)) + 1`
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[index] as f64)).ln() + 1.0
    }
}

/// Keeps the `max_features` tokens with the highest document frequency, ties
/// broken lexicographically; indices follow that ranking.
pub fn build_vocab<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    cfg: &VectorizerConfig,
) -> Result<Vocab> {
    if cfg.max_features == 0 {
        return Err(Error::contract("max_features must be at least 1"));
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut n_docs = 0;
    for text in texts {
        n_docs += 1;
        let unique: BTreeSet<String> = tokenize(text, cfg).into_iter().collect();
        for tok in unique {
            *df.entry(tok).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::contract(
            "cannot build a vocabulary from an empty corpus",
        ));
    }
    let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cfg.max_features);
    let doc_freq = ranked.iter().map(|(_, f)| *f).collect();
    let index = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (tok, _))| (tok, i))
        .collect();
    Ok(Vocab {
        index,
        doc_freq,
        n_docs,
        max_features: cfg.max_features,
    })
}

/// One document as a `vocab.len()`-wide vector. TF is the count divided by the
/// document's token count; TF-IDF multiplies by [`Vocab::idf`] and L2-normalizes.
pub fn vectorize_text(text: &str, vocab: &Vocab, cfg: &VectorizerConfig) -> Vec<f64> {
    let tokens = tokenize(text, cfg);
    let mut v = vec![0.0; vocab.len()];
    if tokens.is_empty() {
        return v;
    }
    for tok in &tokens {
        if let Some(i) = vocab.index_of(tok) {
            v[i] += 1.0;
        }
    }
    let len = tokens.len() as f64;
    v.iter_mut().for_each(|x| *x /= len);
    if cfg.weighting == Weighting::TfIdf {
        for (i, x) in v.iter_mut().enumerate() {
            *x *= vocab.idf(i);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
    v
}

pub fn vectorize(corpus: &RawCorpus, vocab: &Vocab, cfg: &VectorizerConfig) -> Result<Dataset> {
    let class_of: HashMap<&str, usize> = corpus
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let samples = corpus
        .docs
        .iter()
        .map(|(class, text)| {
            let label = *class_of.get(class.as_str()).ok_or_else(|| {
                Error::contract(format!("document class `{class}` not in corpus classes"))
            })?;
            Ok(Sample {
                features: vectorize_text(text, vocab, cfg),
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::with_class_names(samples, corpus.classes.clone())
}
