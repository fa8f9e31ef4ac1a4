//! Run configuration: a flat `key = value` file with repeatable `[source]`,
//! `[method]` and `[dataset]` blocks, merged with command-line flags (flags win).
//!
//! ```text
//! # experiment.conf
//! out = runs/exp1
//! seed = 3
//! epochs = 50
//!
//! [source]
//! name = glove
//! path = vectors/glove.txt
//! format = plain
//!
//! [method]
//! method = tae
//! loss = kl, scp
//! target = glove
//!
//! [dataset]
//! name = simlex
//! path = data/simlex.tsv
//! ```
//!
//! Relative paths inside a config file are resolved against the file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::embedding_io::TableFormat;
use crate::error::{Error, Result};
use crate::eval::Delimiter;
use crate::methods::{MetaConfig, MetaMethod, MethodSpec};
use crate::nn::LossKind;

/// Parsed key/value entries: global keys plus the repeated section blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValueFile {
    pub globals: BTreeMap<String, String>,
    pub sections: Vec<(String, BTreeMap<String, String>)>,
}

impl KeyValueFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = KeyValueFile::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                file.sections.push((name.trim().to_ascii_lowercase(), BTreeMap::new()));
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
                line: line_no,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim().to_ascii_lowercase().replace('-', "_");
            let target = match file.sections.last_mut() {
                Some((_, map)) => map,
                None => &mut file.globals,
            };
            if target.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Format {
                    line: line_no,
                    msg: format!("`{key}` set twice in the same block"),
                });
            }
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }

    pub fn blocks<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a BTreeMap<String, String>> + 'a {
        self.sections.iter().filter(move |(k, _)| k == kind).map(|(_, m)| m)
    }

    /// Writes entries back in the same syntax (keys sorted within a block).
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.globals {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (name, map) in &self.sections {
            out.push_str(&format!("\n[{name}]\n"));
            for (k, v) in map {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(usage(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// One source embedding file.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpec {
    pub name: String,
    pub path: PathBuf,
    pub format: TableFormat,
}

/// One similarity dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
    pub delimiter: Delimiter,
}

/// Splits `name=path`; a bare path is named after its file stem.
pub fn named_path(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !name.contains(['/', '\\']) => {
            (name.to_string(), PathBuf::from(path))
        }
        _ => {
            let path = PathBuf::from(arg);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (name, path)
        }
    }
}

/// Reference to a target source, by position or by name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetRef {
    Index(usize),
    Name(String),
}

impl TargetRef {
    fn parse(s: &str) -> TargetRef {
        s.parse().map(TargetRef::Index).unwrap_or_else(|_| TargetRef::Name(s.to_string()))
    }

    fn resolve(&self, names: &[String]) -> Result<usize> {
        match self {
            // Out-of-range indices are kept so the failure shows up in the grid summary.
            TargetRef::Index(i) => Ok(*i),
            TargetRef::Name(n) => names
                .iter()
                .position(|s| s == n)
                .ok_or_else(|| usage(format!("unknown target source `{n}` (sources: {})", names.join(", ")))),
        }
    }
}

/// A group of grid cells: one method with the losses and targets to sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodRequest {
    pub method: MetaMethod,
    /// Empty = every loss (for methods that take one).
    pub losses: Vec<LossKind>,
    /// Empty = every source as target (for target methods).
    pub targets: Vec<TargetRef>,
    pub concat_y: bool,
    pub rank: Option<usize>,
}

impl MethodRequest {
    fn new(method: MetaMethod) -> Self {
        MethodRequest {
            method,
            losses: Vec::new(),
            targets: Vec::new(),
            concat_y: false,
            rank: None,
        }
    }
}

/// One trainable grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub spec: MethodSpec,
    pub rank: Option<usize>,
}

impl Job {
    /// File-name friendly identifier using source names for targets,
    /// e.g. `caeme-scp`, `tae+y-kl-to-glove`, `svd-k50`.
    pub fn id(&self, names: &[String]) -> String {
        let mut id = self.spec.method.as_str().to_string();
        if let Some(loss) = self.spec.loss {
            id.push('-');
            id.push_str(loss.as_str());
        }
        if let Some(t) = self.spec.target {
            match names.get(t) {
                Some(name) => id.push_str(&format!("-to-{name}")),
                None => id.push_str(&format!("-t{t}")),
            }
        }
        if let Some(k) = self.rank {
            id.push_str(&format!("-k{k}"));
        }
        id
    }

    pub fn config(&self, base: &MetaConfig) -> MetaConfig {
        MetaConfig {
            rank: self.rank.unwrap_or(base.rank),
            ..base.clone()
        }
    }
}

/// Everything a pipeline verb needs, after merging file and flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub sources: Vec<SourceSpec>,
    pub aligned: Option<PathBuf>,
    pub methods: Vec<MethodRequest>,
    pub meta: MetaConfig,
    pub datasets: Vec<DatasetSpec>,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sources: Vec::new(),
            aligned: None,
            methods: Vec::new(),
            meta: MetaConfig::default(),
            datasets: Vec::new(),
            out: PathBuf::from("metaemb-out"),
            jobs: None,
        }
    }
}

/// Command-line overrides; `None`/empty means "not given".
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub sources: Vec<String>,
    pub format: Option<TableFormat>,
    pub aligned: Option<PathBuf>,
    pub methods: Vec<String>,
    pub losses: Vec<String>,
    pub targets: Vec<String>,
    pub concat_y: bool,
    pub rank: Option<usize>,
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub init_scaled: bool,
    pub datasets: Vec<String>,
    pub delimiter: Option<Delimiter>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

fn parse_losses(values: &[String]) -> Result<Vec<LossKind>> {
    values.iter().map(|v| v.parse()).collect()
}

fn parse_methods(values: &[String]) -> Result<Vec<MetaMethod>> {
    values.iter().map(|v| v.parse()).collect()
}

fn resolve_path(base: Option<&Path>, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

fn require<'a>(block: &'a BTreeMap<String, String>, kind: &str, key: &str) -> Result<&'a str> {
    block
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| usage(format!("[{kind}] block is missing `{key}`")))
}

fn check_keys(block: &BTreeMap<String, String>, kind: &str, allowed: &[&str]) -> Result<()> {
    match block.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(usage(format!("unknown key `{k}` in {kind}"))),
        None => Ok(()),
    }
}

const GLOBAL_KEYS: &[&str] = &[
    "out", "seed", "hidden", "dropout", "batch", "epochs", "lr", "rank", "init_scaled", "init_std",
    "methods", "loss", "target", "concat_y", "aligned", "format", "delimiter", "jobs",
];

impl RunConfig {
    /// Merges an optional config file (paths relative to `base`) with flags.
    pub fn resolve(file: Option<(&KeyValueFile, Option<&Path>)>, flags: &Overrides) -> Result<RunConfig> {
        let mut rc = RunConfig::default();
        let empty = KeyValueFile::default();
        let (file, base) = file.unwrap_or((&empty, None));
        let g = &file.globals;
        check_keys(g, "the global block", GLOBAL_KEYS)?;

        let default_format = match (flags.format, g.get("format")) {
            (Some(f), _) => f,
            (None, Some(v)) => v.parse()?,
            (None, None) => TableFormat::Auto,
        };
        let default_delimiter = match (flags.delimiter, g.get("delimiter")) {
            (Some(d), _) => d,
            (None, Some(v)) => v.parse()?,
            (None, None) => Delimiter::Tab,
        };

        // Scalars: file first, flags override.
        let t = &mut rc.meta;
        if let Some(v) = g.get("seed") {
            t.seed = parse_value("seed", v)?;
        }
        if let Some(v) = g.get("hidden") {
            t.hidden_dim = parse_value("hidden", v)?;
        }
        if let Some(v) = g.get("dropout") {
            t.dropout = parse_value("dropout", v)?;
        }
        if let Some(v) = g.get("rank") {
            t.rank = parse_value("rank", v)?;
        }
        if let Some(v) = g.get("batch") {
            t.train.batch_size = parse_value("batch", v)?;
        }
        if let Some(v) = g.get("epochs") {
            t.train.epochs = parse_value("epochs", v)?;
        }
        if let Some(v) = g.get("lr") {
            t.train.learning_rate = Some(parse_value("lr", v)?);
        }
        if let Some(v) = g.get("init_std") {
            t.train.init_std = parse_value("init_std", v)?;
        }
        if let Some(v) = g.get("init_scaled") {
            t.train.init_scaled = parse_bool("init_scaled", v)?;
        }
        if let Some(v) = flags.seed {
            t.seed = v;
        }
        if let Some(v) = flags.hidden {
            t.hidden_dim = v;
        }
        if let Some(v) = flags.dropout {
            t.dropout = v;
        }
        if let Some(v) = flags.rank {
            t.rank = v;
        }
        if let Some(v) = flags.batch {
            t.train.batch_size = v;
        }
        if let Some(v) = flags.epochs {
            t.train.epochs = v;
        }
        if let Some(v) = flags.lr {
            t.train.learning_rate = Some(v);
        }
        if flags.init_scaled {
            t.train.init_scaled = true;
        }
        t.train.shuffle_seed = t.seed;
        rc.meta.validate()?;

        rc.out = match (&flags.out, g.get("out")) {
            (Some(p), _) => p.clone(),
            (None, Some(v)) => resolve_path(base, v),
            (None, None) => rc.out,
        };
        rc.jobs = match (flags.jobs, g.get("jobs")) {
            (Some(j), _) => Some(j),
            (None, Some(v)) => Some(parse_value("jobs", v)?),
            (None, None) => None,
        };
        rc.aligned = flags
            .aligned
            .clone()
            .or_else(|| g.get("aligned").map(|v| resolve_path(base, v)));

        // Sources.
        rc.sources = if !flags.sources.is_empty() {
            flags
                .sources
                .iter()
                .map(|s| {
                    let (name, path) = named_path(s);
                    SourceSpec {
                        name,
                        path,
                        format: default_format,
                    }
                })
                .collect()
        } else {
            file.blocks("source")
                .map(|b| {
                    check_keys(b, "[source]", &["name", "path", "format"])?;
                    let path = resolve_path(base, require(b, "source", "path")?);
                    let name = match b.get("name") {
                        Some(n) => n.clone(),
                        None => named_path(&path.to_string_lossy()).0,
                    };
                    let format = match b.get("format") {
                        Some(f) => f.parse()?,
                        None => default_format,
                    };
                    Ok(SourceSpec { name, path, format })
                })
                .collect::<Result<_>>()?
        };

        // Datasets.
        rc.datasets = if !flags.datasets.is_empty() {
            flags
                .datasets
                .iter()
                .map(|s| {
                    let (name, path) = named_path(s);
                    DatasetSpec {
                        name,
                        path,
                        delimiter: default_delimiter,
                    }
                })
                .collect()
        } else {
            file.blocks("dataset")
                .map(|b| {
                    check_keys(b, "[dataset]", &["name", "path", "delimiter"])?;
                    let path = resolve_path(base, require(b, "dataset", "path")?);
                    let name = match b.get("name") {
                        Some(n) => n.clone(),
                        None => named_path(&path.to_string_lossy()).0,
                    };
                    let delimiter = match b.get("delimiter") {
                        Some(d) => d.parse()?,
                        None => default_delimiter,
                    };
                    Ok(DatasetSpec { name, path, delimiter })
                })
                .collect::<Result<_>>()?
        };

        // Methods: flags replace every [method] block.
        let global_losses = if !flags.losses.is_empty() {
            parse_losses(&flags.losses)?
        } else {
            parse_losses(&g.get("loss").map(|v| split_list(v)).unwrap_or_default())?
        };
        let global_targets: Vec<TargetRef> = if !flags.targets.is_empty() {
            flags.targets.iter().map(|t| TargetRef::parse(t)).collect()
        } else {
            g.get("target")
                .map(|v| split_list(v).iter().map(|t| TargetRef::parse(t)).collect())
                .unwrap_or_default()
        };
        let global_concat_y = flags.concat_y
            || g.get("concat_y")
                .map(|v| parse_bool("concat_y", v))
                .transpose()?
                .unwrap_or(false);
        let flag_methods = parse_methods(&flags.methods)?;
        let file_method_list = parse_methods(&g.get("methods").map(|v| split_list(v)).unwrap_or_default())?;
        rc.methods = if !flag_methods.is_empty() || file.blocks("method").next().is_none() {
            let list = if !flag_methods.is_empty() { flag_methods } else { file_method_list };
            list.into_iter()
                .map(|m| MethodRequest {
                    losses: global_losses.clone(),
                    targets: global_targets.clone(),
                    concat_y: global_concat_y,
                    ..MethodRequest::new(m)
                })
                .collect()
        } else {
            file.blocks("method")
                .map(|b| {
                    check_keys(b, "[method]", &["method", "loss", "target", "concat_y", "rank"])?;
                    let method: MetaMethod = require(b, "method", "method")?.parse()?;
                    let losses = match b.get("loss") {
                        Some(v) => parse_losses(&split_list(v))?,
                        None => global_losses.clone(),
                    };
                    let targets = match b.get("target") {
                        Some(v) => split_list(v).iter().map(|t| TargetRef::parse(t)).collect(),
                        None => global_targets.clone(),
                    };
                    let concat_y = match b.get("concat_y") {
                        Some(v) => parse_bool("concat_y", v)?,
                        None => global_concat_y,
                    };
                    let rank = b.get("rank").map(|v| parse_value("rank", v)).transpose()?;
                    Ok(MethodRequest {
                        method,
                        losses,
                        targets,
                        concat_y,
                        rank,
                    })
                })
                .collect::<Result<_>>()?
        };
        rc.check_paths()?;
        Ok(rc)
    }

    /// No input may live at (or be) the output directory.
    fn check_paths(&self) -> Result<()> {
        let out = normalize(&self.out);
        let inputs = self
            .sources
            .iter()
            .map(|s| &s.path)
            .chain(self.datasets.iter().map(|d| &d.path))
            .chain(self.aligned.iter());
        for p in inputs {
            if normalize(p) == out {
                return Err(usage(format!(
                    "input path {} is the output directory",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// Expands the method requests into grid cells, given the source names.
    /// With no methods requested, every method is run.
    pub fn jobs(&self, names: &[String]) -> Result<Vec<Job>> {
        let requests = if self.methods.is_empty() {
            MetaMethod::ALL.iter().map(|&m| MethodRequest::new(m)).collect()
        } else {
            self.methods.clone()
        };
        let mut jobs = Vec::new();
        for req in &requests {
            let method = if req.concat_y && req.method == MetaMethod::Tae {
                MetaMethod::TaePlusY
            } else {
                req.method
            };
            let losses: Vec<Option<LossKind>> = if method.takes_loss() {
                if req.losses.is_empty() {
                    LossKind::ALL.iter().copied().map(Some).collect()
                } else {
                    req.losses.iter().copied().map(Some).collect()
                }
            } else {
                vec![None]
            };
            let targets: Vec<Option<usize>> = if method.takes_target() {
                if req.targets.is_empty() {
                    (0..names.len()).map(Some).collect()
                } else {
                    req.targets
                        .iter()
                        .map(|t| t.resolve(names).map(Some))
                        .collect::<Result<_>>()?
                }
            } else {
                vec![None]
            };
            for &loss in &losses {
                for &target in &targets {
                    let job = Job {
                        spec: MethodSpec { method, loss, target },
                        rank: req.rank,
                    };
                    if !jobs.contains(&job) {
                        jobs.push(job);
                    }
                }
            }
        }
        Ok(jobs)
    }
}

fn normalize(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.components().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# comment
out = runs/a
seed = 4
epochs = 7
lr = 0.1

[source]
name = alpha
path = /data/alpha.txt

[source]
path = /data/beta.vec
format = headered

[method]
method = caeme
loss = kl, scp

[method]
method = tae
target = beta
concat_y = true

[dataset]
name = simlex
path = /data/simlex.tsv
";

    #[test]
    fn parses_sections_and_globals() {
        let f = KeyValueFile::parse(SAMPLE).unwrap();
        assert_eq!(f.globals["seed"], "4");
        assert_eq!(f.blocks("source").count(), 2);
        assert_eq!(f.blocks("method").count(), 2);
        assert_eq!(KeyValueFile::parse(&f.render()).unwrap(), f);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(KeyValueFile::parse("a = 1\nnonsense\n"), Err(Error::Format { line: 2, .. })));
        assert!(KeyValueFile::parse("a = 1\na = 2\n").is_err());
    }

    #[test]
    fn file_values_are_resolved() {
        let f = KeyValueFile::parse(SAMPLE).unwrap();
        let rc = RunConfig::resolve(Some((&f, Some(Path::new("/base")))), &Overrides::default()).unwrap();
        assert_eq!(rc.out, PathBuf::from("/base/runs/a"));
        assert_eq!(rc.meta.seed, 4);
        assert_eq!(rc.meta.train.shuffle_seed, 4);
        assert_eq!(rc.meta.train.epochs, 7);
        assert_eq!(rc.meta.train.learning_rate, Some(0.1));
        assert_eq!(rc.sources[1].name, "beta");
        assert_eq!(rc.sources[1].format, TableFormat::Headered);
        let names = vec!["alpha".to_string(), "beta".to_string()];
        let ids: Vec<String> = rc.jobs(&names).unwrap().iter().map(|j| j.id(&names)).collect();
        assert_eq!(
            ids,
            vec!["caeme-kl", "caeme-scp", "tae+y-mse-to-beta", "tae+y-mae-to-beta", "tae+y-kl-to-beta", "tae+y-scp-to-beta"]
        );
    }

    #[test]
    fn flags_win() {
        let f = KeyValueFile::parse(SAMPLE).unwrap();
        let flags = Overrides {
            seed: Some(9),
            epochs: Some(2),
            methods: vec!["conc".into(), "svd".into()],
            sources: vec!["x=/tmp/x.txt".into(), "/tmp/y.txt".into()],
            ..Overrides::default()
        };
        let rc = RunConfig::resolve(Some((&f, None)), &flags).unwrap();
        assert_eq!(rc.meta.seed, 9);
        assert_eq!(rc.meta.train.epochs, 2);
        assert_eq!(rc.meta.train.learning_rate, Some(0.1));
        assert_eq!(rc.sources.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), ["x", "y"]);
        let names = vec!["x".to_string(), "y".to_string()];
        assert_eq!(rc.jobs(&names).unwrap().len(), 2);
    }

    #[test]
    fn default_grid_covers_every_method() {
        let rc = RunConfig::default();
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        // 4 baselines + 3 AEs x 4 losses + 3 target methods x 4 losses x 3 targets
        assert_eq!(rc.jobs(&names).unwrap().len(), 4 + 12 + 36);
    }

    #[test]
    fn unknown_keys_and_targets_are_usage_errors() {
        let f = KeyValueFile::parse("bogus = 1\n").unwrap();
        assert!(RunConfig::resolve(Some((&f, None)), &Overrides::default()).is_err());
        let flags = Overrides {
            methods: vec!["tae".into()],
            targets: vec!["nope".into()],
            ..Overrides::default()
        };
        let rc = RunConfig::resolve(None, &flags).unwrap();
        assert!(rc.jobs(&["a".to_string(), "b".to_string()]).is_err());
    }

    #[test]
    fn output_directory_cannot_be_an_input() {
        let flags = Overrides {
            sources: vec!["a=/tmp/same".into()],
            out: Some(PathBuf::from("/tmp/same")),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(None, &flags).is_err());
    }
}
