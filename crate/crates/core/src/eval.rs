//! Word-similarity evaluation: cosine similarity of embedding pairs ranked
//! against human judgements with Spearman's rho (reported x100).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::embedding_io::{AlignedEmbeddingSet, EmbeddingTable};
use crate::error::{Error, Result};
use crate::methods::MetaModel;

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityDataset {
    pub name: String,
    pub pairs: Vec<(String, String, f64)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Delimiter {
    #[default]
    Tab,
    Comma,
    Whitespace,
}

impl Delimiter {
    fn split(self, line: &str) -> Vec<&str> {
        match self {
            Delimiter::Tab => line.split('\t').map(str::trim).collect(),
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        }
    }
}

impl std::str::FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab" | "tsv" => Ok(Delimiter::Tab),
            "comma" | "csv" => Ok(Delimiter::Comma),
            "space" | "whitespace" => Ok(Delimiter::Whitespace),
            _ => Err(Error::InvalidArgument(format!("unknown delimiter `{s}`"))),
        }
    }
}

/// Reads `word_a <sep> word_b <sep> score` lines. A first line whose score
/// field is not numeric is taken as a header and skipped; blank lines and
/// lines starting with `#` are ignored.
pub fn read_dataset<R: BufRead>(reader: R, name: &str, delimiter: Delimiter) -> Result<SimilarityDataset> {
    let mut pairs = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Format {
            line: lineno,
            msg: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let is_first = std::mem::replace(&mut first, false);
        let fields = delimiter.split(trimmed);
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Format {
                line: lineno,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let score = match fields[2].parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ if is_first => continue,
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    token: fields[2].to_string(),
                })
            }
        };
        let (a, b) = (fields[0].to_string(), fields[1].to_string());
        let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        if !seen.insert(key) {
            return Err(Error::DuplicatePair(a, b, lineno));
        }
        pairs.push((a, b, score));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput(format!("dataset `{name}` has no pairs")));
    }
    Ok(SimilarityDataset {
        name: name.to_string(),
        pairs,
    })
}

pub fn load_dataset(path: impl AsRef<Path>, name: &str, delimiter: Delimiter) -> Result<SimilarityDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), name, delimiter).map_err(|e| e.in_file(path))
}

pub fn cosine(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            got: v.len(),
        });
    }
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("an input is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("need at least 2 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in correlation input".into()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Score of one embedding table on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub dataset: String,
    /// `100 * rho`
    pub rho_scaled: f64,
    pub pairs_total: usize,
    pub pairs_scored: usize,
}

impl EvalEntry {
    pub fn pairs_skipped(&self) -> usize {
        self.pairs_total - self.pairs_scored
    }
}

/// Pairs with a word missing from `table` (or a zero vector) are skipped and
/// counted; the rest are scored by cosine similarity.
pub fn evaluate(table: &EmbeddingTable, dataset: &SimilarityDataset) -> Result<EvalEntry> {
    let mut model = Vec::with_capacity(dataset.pairs.len());
    let mut human = Vec::with_capacity(dataset.pairs.len());
    for (a, b, score) in &dataset.pairs {
        let (Some(u), Some(v)) = (table.lookup(a), table.lookup(b)) else {
            continue;
        };
        match cosine(u, v) {
            Ok(c) => {
                model.push(c);
                human.push(*score);
            }
            Err(Error::UndefinedCosine) => continue,
            Err(e) => return Err(e),
        }
    }
    let total = dataset.pairs.len();
    if model.len() < 2 {
        return Err(Error::Coverage {
            scored: model.len(),
            total,
        });
    }
    let rho = spearman(&model, &human)?;
    Ok(EvalEntry {
        dataset: dataset.name.clone(),
        rho_scaled: 100.0 * rho,
        pairs_total: total,
        pairs_scored: model.len(),
    })
}

pub fn evaluate_model(model: &MetaModel, set: &AlignedEmbeddingSet, dataset: &SimilarityDataset) -> Result<EvalEntry> {
    evaluate(&model.table(set)?, dataset)
}
