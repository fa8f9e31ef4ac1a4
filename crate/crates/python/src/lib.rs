//! Python bindings: load and align embedding tables, build meta-embeddings,
//! score them on similarity datasets. Matrices cross the boundary as lists of
//! float lists.

use std::path::PathBuf;

use metaemb::embedding_io::{self, VocabPolicy};
use metaemb::eval::{self, Delimiter};
use metaemb::methods::{self, MetaMethod, MethodSpec};
use metaemb::{Error as CoreError, LossKind, MetaConfig, TableFormat, TrainConfig};
use ndarray::{Array1, Array2};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pymetaemb, MetaembError, PyValueError, "Invalid data or arguments for a metaemb operation.");

fn to_py(e: CoreError) -> PyErr {
    match e.root() {
        CoreError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => MetaembError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(MetaembError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| MetaembError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse<T: std::str::FromStr<Err = CoreError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// A vocabulary with one vector per word.
#[pyclass(module = "pymetaemb", frozen, from_py_object)]
#[derive(Clone)]
struct EmbeddingTable {
    inner: embedding_io::EmbeddingTable,
}

#[pymethods]
impl EmbeddingTable {
    #[new]
    fn new(name: String, words: Vec<String>, vectors: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = embedding_io::EmbeddingTable::new(name, words, matrix(vectors)?).map_err(to_py)?;
        Ok(EmbeddingTable { inner })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn words(&self) -> Vec<String> {
        self.inner.vocab().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.word_index(word).is_some()
    }

    /// Vector of `word`; raises `KeyError` if it is not in the table.
    fn vector(&self, word: &str) -> PyResult<Vec<f64>> {
        self.inner
            .lookup(word)
            .map(|v| v.to_vec())
            .ok_or_else(|| pyo3::exceptions::PyKeyError::new_err(word.to_string()))
    }

    fn to_lists(&self) -> Vec<Vec<f64>> {
        rows(self.inner.matrix())
    }

    /// Writes the table as a headered text file.
    fn export(&self, path: PathBuf) -> PyResult<()> {
        embedding_io::export_table(&self.inner, path).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingTable(name={:?}, words={}, dim={})", self.inner.name(), self.inner.len(), self.inner.dim())
    }
}

/// Sources restricted to their shared vocabulary, in a common row order.
#[pyclass(module = "pymetaemb", frozen)]
struct AlignedSet {
    inner: embedding_io::AlignedEmbeddingSet,
}

#[pymethods]
impl AlignedSet {
    #[getter]
    fn n_sources(&self) -> usize {
        self.inner.n_sources()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    #[getter]
    fn words(&self) -> Vec<String> {
        self.inner.shared_vocab().to_vec()
    }

    #[getter]
    fn normalized(&self) -> bool {
        self.inner.is_normalized()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn source(&self, i: usize) -> PyResult<EmbeddingTable> {
        self.inner
            .sources()
            .get(i)
            .map(|t| EmbeddingTable { inner: t.clone() })
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(format!("source {i} out of range")))
    }

    fn __repr__(&self) -> String {
        format!("AlignedSet(words={}, dims={:?})", self.inner.len(), self.inner.dims())
    }
}

/// A trained or computed meta-embedding model.
#[pyclass(module = "pymetaemb", frozen)]
struct MetaModel {
    inner: methods::MetaModel,
}

#[pymethods]
impl MetaModel {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn loss(&self) -> Option<&'static str> {
        self.inner.loss.map(LossKind::as_str)
    }

    #[getter]
    fn target(&self) -> Option<usize> {
        self.inner.target
    }

    #[getter]
    fn meta_dim(&self) -> usize {
        self.inner.meta_dim
    }

    /// Mean training loss per epoch (empty for closed-form methods).
    #[getter]
    fn loss_trace(&self) -> Vec<f64> {
        self.inner.loss_trace.clone()
    }

    fn embed(&self, set: &AlignedSet, word: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.embed(&set.inner, word).map_err(to_py)?.to_vec())
    }

    /// Meta table over the set's whole vocabulary.
    fn table(&self, py: Python<'_>, set: &AlignedSet) -> PyResult<EmbeddingTable> {
        let inner = py.detach(|| self.inner.table(&set.inner)).map_err(to_py)?;
        Ok(EmbeddingTable { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        methods::save_checkpoint(&self.inner, path).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let spec = MethodSpec {
            method: self.inner.method,
            loss: self.inner.loss,
            target: self.inner.target,
        };
        format!("MetaModel({}, meta_dim={})", spec.id(), self.inner.meta_dim)
    }
}

/// Word pairs with human similarity scores.
#[pyclass(module = "pymetaemb", frozen)]
struct SimilarityDataset {
    inner: eval::SimilarityDataset,
}

#[pymethods]
impl SimilarityDataset {
    #[new]
    fn new(name: String, pairs: Vec<(String, String, f64)>) -> Self {
        SimilarityDataset {
            inner: eval::SimilarityDataset { name, pairs },
        }
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn pairs(&self) -> Vec<(String, String, f64)> {
        self.inner.pairs.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.pairs.len()
    }
}

/// Reads a table file: `format` is "auto", "plain" or "headered"; the name
/// defaults to the file stem.
#[pyfunction]
#[pyo3(signature = (path, name=None, format="auto"))]
fn load_table(path: PathBuf, name: Option<&str>, format: &str) -> PyResult<EmbeddingTable> {
    let format: TableFormat = parse(format)?;
    let inner = match name {
        Some(n) => embedding_io::load_named_table(&path, n, format),
        None => embedding_io::load_table(&path, format),
    }
    .map_err(to_py)?;
    Ok(EmbeddingTable { inner })
}

/// Aligns tables on their shared vocabulary and (by default) l2-normalizes
/// every row, dropping words with a zero vector in any source.
#[pyfunction]
#[pyo3(signature = (tables, normalize=true))]
fn align(tables: Vec<EmbeddingTable>, normalize: bool) -> PyResult<AlignedSet> {
    let set = embedding_io::align(tables.into_iter().map(|t| t.inner).collect(), VocabPolicy::Intersection)
        .map_err(to_py)?;
    let inner = if normalize {
        embedding_io::l2_normalize(set).map_err(to_py)?
    } else {
        set
    };
    Ok(AlignedSet { inner })
}

/// Builds a meta-embedding. `method` is one of conc, av, svd, 1ton, caeme,
/// daeme, aaeme, tae, tae+y, mte; autoencoder methods need `loss` (mse, mae,
/// kl, scp) and tae/tae+y/mte a `target` source index. `learning_rate=None`
/// uses the default for the loss.
#[pyfunction]
#[pyo3(signature = (
    set, method, loss=None, target=None, *, hidden=200, dropout=0.2, rank=200,
    epochs=50, batch_size=32, learning_rate=None, seed=0, init_scaled=false
))]
#[allow(clippy::too_many_arguments)]
fn build(
    py: Python<'_>,
    set: &AlignedSet,
    method: &str,
    loss: Option<&str>,
    target: Option<usize>,
    hidden: usize,
    dropout: f64,
    rank: usize,
    epochs: usize,
    batch_size: usize,
    learning_rate: Option<f64>,
    seed: u64,
    init_scaled: bool,
) -> PyResult<MetaModel> {
    let spec = MethodSpec {
        method: parse::<MetaMethod>(method)?,
        loss: loss.map(parse::<LossKind>).transpose()?,
        target,
    };
    let config = MetaConfig {
        hidden_dim: hidden,
        dropout,
        rank,
        seed,
        train: TrainConfig {
            batch_size,
            epochs,
            learning_rate,
            init_scaled,
            shuffle_seed: seed,
            ..TrainConfig::default()
        },
    };
    let inner = py.detach(|| methods::build(&set.inner, &spec, &config)).map_err(to_py)?;
    Ok(MetaModel { inner })
}

#[pyfunction]
fn load_model(path: PathBuf) -> PyResult<MetaModel> {
    Ok(MetaModel {
        inner: methods::load_checkpoint(path).map_err(to_py)?,
    })
}

/// Reads `word1 word2 score` lines; `delimiter` is "tab", "comma" or "whitespace".
#[pyfunction]
#[pyo3(signature = (path, name=None, delimiter="tab"))]
fn load_dataset(path: PathBuf, name: Option<String>, delimiter: &str) -> PyResult<SimilarityDataset> {
    let delimiter: Delimiter = parse(delimiter)?;
    let name = name.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(SimilarityDataset {
        inner: eval::load_dataset(&path, &name, delimiter).map_err(to_py)?,
    })
}

/// Spearman correlation (x100) of cosine similarities with the dataset scores,
/// as a dict with `rho_scaled`, `pairs_total` and `pairs_scored`.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, table: &EmbeddingTable, dataset: &SimilarityDataset) -> PyResult<Bound<'py, PyDict>> {
    let entry = eval::evaluate(&table.inner, &dataset.inner).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("dataset", entry.dataset)?;
    out.set_item("rho_scaled", entry.rho_scaled)?;
    out.set_item("pairs_total", entry.pairs_total)?;
    out.set_item("pairs_scored", entry.pairs_scored)?;
    Ok(out)
}

#[pyfunction]
fn spearman(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    eval::spearman(&xs, &ys).map_err(to_py)
}

#[pyfunction]
fn cosine(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    eval::cosine(Array1::from(u).view(), Array1::from(v).view()).map_err(to_py)
}

/// Per-sample loss value; for "kl", `y_hat` is a log-probability vector.
#[pyfunction]
fn loss_value(loss: &str, y_hat: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    parse::<LossKind>(loss)?
        .value(Array1::from(y_hat).view(), Array1::from(y).view())
        .map_err(to_py)
}

#[pymodule]
fn pymetaemb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MetaembError", m.py().get_type::<MetaembError>())?;
    m.add_class::<EmbeddingTable>()?;
    m.add_class::<AlignedSet>()?;
    m.add_class::<MetaModel>()?;
    m.add_class::<SimilarityDataset>()?;
    m.add_function(wrap_pyfunction!(load_table, m)?)?;
    m.add_function(wrap_pyfunction!(align, m)?)?;
    m.add_function(wrap_pyfunction!(build, m)?)?;
    m.add_function(wrap_pyfunction!(load_model, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(loss_value, m)?)?;
    Ok(())
}
