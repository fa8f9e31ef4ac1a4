//! Published reference scores (scaled Spearman rho) for the reproduction grid,
//! shipped as `data/table1_reference.tsv` and compiled into the binary.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::methods::MetaMethod;
use crate::nn::LossKind;

const REFERENCE_TSV: &str = include_str!("../../data/table1_reference.tsv");

/// Source embedding names the reproduction grid expects, in column order.
pub const SOURCES: [&str; 6] = ["skipgram", "fasttext", "glove", "lexvec", "hpca", "hdc"];
/// Similarity datasets of the reproduction grid, in column order.
pub const DATASETS: [&str; 6] = ["simlex", "ws353", "rg", "mturk", "rw", "men"];

/// Lookup key: method name (`source` for raw sources), loss (`-` for none,
/// `*` for unstated), target source name (`-` for none).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RefKey {
    pub method: String,
    pub loss: String,
    pub target: String,
    pub dataset: String,
}

#[derive(Clone, Debug)]
pub struct ReferenceTable {
    values: BTreeMap<RefKey, f64>,
}

impl ReferenceTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::Format {
                    line: i + 1,
                    msg: format!("expected 5 tab-separated fields, found {}", fields.len()),
                });
            }
            if !header_seen {
                header_seen = true;
                if fields[0] == "method" {
                    continue;
                }
            }
            let value: f64 = fields[4].parse().map_err(|_| Error::Parse {
                line: i + 1,
                token: fields[4].to_string(),
            })?;
            let key = RefKey {
                method: fields[0].to_string(),
                loss: fields[1].to_string(),
                target: fields[2].to_string(),
                dataset: fields[3].to_string(),
            };
            if values.insert(key, value).is_some() {
                return Err(Error::Format {
                    line: i + 1,
                    msg: "duplicate reference key".into(),
                });
            }
        }
        Ok(ReferenceTable { values })
    }

    /// The table bundled with the binary.
    pub fn bundled() -> Self {
        Self::parse(REFERENCE_TSV).expect("bundled reference table is well formed")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, key: &RefKey) -> Option<f64> {
        self.values.get(key).copied()
    }

    /// Reference score of a raw source on a dataset.
    pub fn source(&self, source: &str, dataset: &str) -> Option<f64> {
        self.get(&RefKey {
            method: "source".into(),
            loss: "-".into(),
            target: source.into(),
            dataset: dataset.into(),
        })
    }

    /// Reference score of a meta-embedding method. An exact loss match wins
    /// over a row whose loss is unstated.
    pub fn method(&self, method: MetaMethod, loss: Option<LossKind>, target: Option<&str>, dataset: &str) -> Option<f64> {
        let key = |loss: &str| RefKey {
            method: method.as_str().into(),
            loss: loss.into(),
            target: target.unwrap_or("-").into(),
            dataset: dataset.into(),
        };
        let exact = loss.map_or("-", LossKind::as_str);
        self.get(&key(exact)).or_else(|| loss.and_then(|_| self.get(&key("*"))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_covers_the_grid() {
        let t = ReferenceTable::bundled();
        assert_eq!(t.len(), 180);
        assert_eq!(t.method(MetaMethod::Caeme, Some(LossKind::Kl), None, "simlex"), Some(45.10));
        assert_eq!(t.method(MetaMethod::Caeme, Some(LossKind::Kl), None, "rw"), Some(53.02));
        assert_eq!(t.method(MetaMethod::Caeme, Some(LossKind::Scp), None, "rg"), Some(85.41));
        assert_eq!(t.method(MetaMethod::Caeme, Some(LossKind::Scp), None, "men"), Some(81.94));
        assert_eq!(t.method(MetaMethod::Tae, Some(LossKind::Mae), Some("glove"), "ws353"), Some(77.14));
        assert_eq!(t.source("skipgram", "simlex"), Some(44.19));
        assert_eq!(t.method(MetaMethod::Aaeme, Some(LossKind::Mse), None, "rg"), None);
        assert_eq!(t.method(MetaMethod::Mte, Some(LossKind::Mse), Some("glove"), "rg"), None);
        for d in DATASETS {
            for s in SOURCES {
                assert!(t.source(s, d).is_some());
            }
        }
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(ReferenceTable::parse("conc\t-\t-\trg\n").is_err());
        assert!(ReferenceTable::parse("conc\t-\t-\trg\tx\n").is_err());
        assert!(ReferenceTable::parse("conc\t-\t-\trg\t1\nconc\t-\t-\trg\t2\n").is_err());
    }
}
