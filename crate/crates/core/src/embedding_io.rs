//! Source embedding tables: text I/O, vocabulary alignment across sources and
//! row normalization.
//!
//! Two text layouts are read, both UTF-8 with whitespace separated fields:
//!
//! * plain: every line is `word v1 v2 ... vd` (GloVe style);
//! * headered: the same, preceded by a `<count> <dim>` line (word2vec style).
//!
//! Tables are always written headered, with every value printed in its
//! shortest round-trip decimal form, so reading back an exported table is
//! lossless.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use ndarray::{s, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Plain,
    Headered,
    /// Headered if the first line consists of exactly two integers.
    Auto,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(TableFormat::Plain),
            "headered" => Ok(TableFormat::Headered),
            "auto" => Ok(TableFormat::Auto),
            _ => Err(Error::InvalidArgument(format!(
                "unknown table format `{s}` (expected plain, headered or auto)"
            ))),
        }
    }
}

/// One embedding set: a vocabulary and a `|vocab| x dim` matrix whose row `i`
/// is the vector of word `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    name: String,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Array2<f64>,
}

impl EmbeddingTable {
    /// Builds a table from a vocabulary and matching matrix rows.
    pub fn new(name: impl Into<String>, vocab: Vec<String>, matrix: Array2<f64>) -> Result<Self> {
        if vocab.len() != matrix.nrows() {
            return Err(Error::Dimension {
                expected: vocab.len(),
                got: matrix.nrows(),
            });
        }
        if matrix.ncols() == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding matrix contains non-finite values".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, word) in vocab.iter().enumerate() {
            if index.insert(word.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate word `{word}`")));
            }
        }
        Ok(EmbeddingTable {
            name: name.into(),
            vocab,
            index,
            matrix,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn lookup(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.word_index(word).map(|i| self.matrix.row(i))
    }

    /// Restricts the table to `words` (all of which must be present), in that order.
    fn reindex(&self, words: &[String]) -> Result<EmbeddingTable> {
        let mut matrix = Array2::zeros((words.len(), self.dim()));
        for (i, word) in words.iter().enumerate() {
            let row = self
                .lookup(word)
                .ok_or_else(|| Error::UnknownWord(word.clone()))?;
            matrix.row_mut(i).assign(&row);
        }
        EmbeddingTable::new(self.name.clone(), words.to_vec(), matrix)
    }
}

/// Reads a table from text. Returns the table and the number of duplicate
/// words that were dropped (the first occurrence of a word wins).
pub fn read_table<R: BufRead>(
    reader: R,
    name: &str,
    format: TableFormat,
) -> Result<(EmbeddingTable, usize)> {
    let mut lines = reader.lines().enumerate().peekable();
    let mut header: Option<(usize, usize)> = None;

    // Peek the first non-empty line to resolve the header.
    loop {
        let Some((i, line)) = lines.peek() else {
            return Err(Error::EmptyInput(format!("embedding table `{name}` has no lines")));
        };
        let lineno = i + 1;
        let line = match line {
            Ok(l) => l.clone(),
            Err(e) => {
                return Err(Error::Format {
                    line: lineno,
                    msg: e.to_string(),
                })
            }
        };
        if line.trim().is_empty() {
            lines.next();
            continue;
        }
        let parsed = parse_header(&line);
        match format {
            TableFormat::Plain => {}
            TableFormat::Headered => {
                header = Some(parsed.ok_or_else(|| Error::Format {
                    line: lineno,
                    msg: "expected a `<count> <dim>` header".into(),
                })?);
                lines.next();
            }
            TableFormat::Auto => {
                if parsed.is_some() {
                    header = parsed;
                    lines.next();
                }
            }
        }
        break;
    }

    if let Some((_, 0)) = header {
        return Err(Error::Format {
            line: 1,
            msg: "header declares dimension 0".into(),
        });
    }

    let mut dim = header.map(|(_, d)| d);
    let mut vocab = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut values: Vec<f64> = Vec::new();
    let mut duplicates = 0;
    let mut data_lines = 0;

    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Format {
            line: lineno,
            msg: e.to_string(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        data_lines += 1;
        let start = values.len();
        for token in fields {
            let v: f64 = token.parse().map_err(|_| Error::Parse {
                line: lineno,
                token: token.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    token: token.to_string(),
                });
            }
            values.push(v);
        }
        let width = values.len() - start;
        let expected = *dim.get_or_insert(width);
        if width != expected || width == 0 {
            return Err(Error::Format {
                line: lineno,
                msg: format!("expected {expected} values, found {width}"),
            });
        }
        if index.contains_key(word) {
            duplicates += 1;
            values.truncate(start);
            continue;
        }
        index.insert(word.to_string(), vocab.len());
        vocab.push(word.to_string());
    }

    let Some(dim) = dim.filter(|_| !vocab.is_empty()) else {
        return Err(Error::EmptyInput(format!("embedding table `{name}` has no vectors")));
    };
    if let Some((count, _)) = header {
        if count != data_lines {
            warn!("{name}: header announces {count} rows but {data_lines} were read");
        }
    }
    if duplicates > 0 {
        warn!("{name}: {duplicates} duplicate words dropped (first occurrence kept)");
    }

    let matrix = Array2::from_shape_vec((vocab.len(), dim), values)
        .map_err(|e| Error::Format { line: 0, msg: e.to_string() })?;
    Ok((
        EmbeddingTable {
            name: name.to_string(),
            vocab,
            index,
            matrix,
        },
        duplicates,
    ))
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let count = it.next()?.parse().ok()?;
    let dim = it.next()?.parse().ok()?;
    it.next().is_none().then_some((count, dim))
}

/// Loads a table from a file; the table is named after the file stem.
pub fn load_table(path: impl AsRef<Path>, format: TableFormat) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_named_table(path, &name, format)
}

pub fn load_named_table(path: impl AsRef<Path>, name: &str, format: TableFormat) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (table, _) = read_table(BufReader::new(file), name, format).map_err(|e| e.in_file(path))?;
    Ok(table)
}

pub fn write_table<W: Write>(table: &EmbeddingTable, mut writer: W) -> std::io::Result<()> {
    writeln!(writer, "{} {}", table.len(), table.dim())?;
    for (word, row) in table.vocab.iter().zip(table.matrix.rows()) {
        write!(writer, "{word}")?;
        for v in row {
            write!(writer, " {v}")?;
        }
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Writes `table` in headered text form.
pub fn export_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_table(table, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VocabPolicy {
    #[default]
    Intersection,
}

/// Several source tables indexed by one shared vocabulary: row `i` of every
/// source is the vector of `shared_vocab[i]`.
#[derive(Clone, Debug)]
pub struct AlignedEmbeddingSet {
    sources: Vec<EmbeddingTable>,
    normalized: bool,
}

impl AlignedEmbeddingSet {
    /// Wraps tables that already share one vocabulary in the same order.
    pub fn new(sources: Vec<EmbeddingTable>) -> Result<Self> {
        let first = sources
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one source is required".into()))?;
        if let Some(bad) = sources.iter().find(|t| t.vocab != first.vocab) {
            return Err(Error::Alignment(format!(
                "source `{}` is not indexed by the shared vocabulary",
                bad.name
            )));
        }
        Ok(AlignedEmbeddingSet {
            sources,
            normalized: false,
        })
    }

    pub fn sources(&self) -> &[EmbeddingTable] {
        &self.sources
    }

    pub fn source(&self, i: usize) -> &EmbeddingTable {
        &self.sources[i]
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.sources.iter().map(EmbeddingTable::dim).collect()
    }

    pub fn shared_vocab(&self) -> &[String] {
        &self.sources[0].vocab
    }

    pub fn len(&self) -> usize {
        self.sources[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.sources[0].word_index(word)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Marks a set read back from disk as normalized after checking every row norm.
    pub fn assume_normalized(mut self) -> Result<Self> {
        for table in &self.sources {
            for (word, row) in table.vocab.iter().zip(table.matrix.rows()) {
                let norm = row.dot(&row).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(Error::Numeric(format!(
                        "`{}` row for `{word}` has norm {norm}, expected 1",
                        table.name
                    )));
                }
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Row-wise concatenation of all sources, `|V| x sum(d_s)`.
    pub fn concatenated(&self) -> Array2<f64> {
        self.concatenated_except(None)
    }

    pub(crate) fn concatenated_except(&self, skip: Option<usize>) -> Array2<f64> {
        let parts: Vec<_> = self
            .sources
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, t)| t.matrix.view())
            .collect();
        ndarray::concatenate(Axis(1), &parts).expect("aligned sources share a row count")
    }

    /// Sources right-padded with zeros to the widest dimension.
    pub(crate) fn padded(&self) -> Vec<Array2<f64>> {
        let width = self.dims().into_iter().max().unwrap_or(0);
        self.sources
            .iter()
            .map(|t| {
                let mut m = Array2::zeros((t.len(), width));
                m.slice_mut(s![.., ..t.dim()]).assign(&t.matrix);
                m
            })
            .collect()
    }
}

/// Restricts every table to the sorted intersection of their vocabularies.
pub fn align(tables: Vec<EmbeddingTable>, policy: VocabPolicy) -> Result<AlignedEmbeddingSet> {
    if tables.len() < 2 {
        return Err(Error::Alignment(format!(
            "need at least 2 source tables, got {}",
            tables.len()
        )));
    }
    let VocabPolicy::Intersection = policy;
    let mut shared: BTreeSet<&String> = tables[0].vocab.iter().collect();
    for table in &tables[1..] {
        shared.retain(|w| table.index.contains_key(w.as_str()));
    }
    if shared.is_empty() {
        let sizes: Vec<String> = tables
            .iter()
            .map(|t| format!("{}={}", t.name, t.len()))
            .collect();
        return Err(Error::Alignment(format!(
            "vocabulary intersection is empty (vocab sizes: {})",
            sizes.join(", ")
        )));
    }
    let words: Vec<String> = shared.into_iter().cloned().collect();
    let sources = tables
        .iter()
        .map(|t| t.reindex(&words))
        .collect::<Result<Vec<_>>>()?;
    Ok(AlignedEmbeddingSet {
        sources,
        normalized: false,
    })
}

/// Scales every row to unit l2 norm. Words whose vector is zero in any source
/// are dropped from the shared vocabulary first.
pub fn l2_normalize(set: AlignedEmbeddingSet) -> Result<AlignedEmbeddingSet> {
    let n = set.len();
    let keep: Vec<usize> = (0..n)
        .filter(|&i| {
            set.sources
                .iter()
                .all(|t| t.matrix.row(i).iter().any(|&v| v != 0.0))
        })
        .collect();
    if keep.len() < n {
        warn!("dropping {} words with a zero vector in some source", n - keep.len());
    }
    if keep.is_empty() {
        return Err(Error::Alignment("every shared word has a zero vector".into()));
    }
    let words: Vec<String> = keep.iter().map(|&i| set.shared_vocab()[i].clone()).collect();
    let sources = set
        .sources
        .iter()
        .map(|t| {
            let mut m = t.matrix.select(Axis(0), &keep);
            for mut row in m.rows_mut() {
                let norm = row.dot(&row).sqrt();
                row.mapv_inplace(|v| v / norm);
            }
            EmbeddingTable::new(t.name.clone(), words.clone(), m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlignedEmbeddingSet {
        sources,
        normalized: true,
    })
}
