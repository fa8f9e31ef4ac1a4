//! On-disk aligned set: one headered table per source plus `manifest.txt` in
//! the same `key = value` / `[source]` syntax as run configs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::{KeyValueFile, SourceSpec};
use crate::embedding_io::{align, export_table, l2_normalize, load_named_table, read_table, AlignedEmbeddingSet, TableFormat, VocabPolicy};
use crate::error::{Error, Result};

const MANIFEST: &str = "manifest.txt";
const FORMAT: &str = "metaemb-aligned";

/// Bookkeeping about how an aligned set was produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignInfo {
    /// Per source: name, input path, words read, duplicate words dropped.
    pub inputs: Vec<(String, String, usize, usize)>,
    pub dropped_zero_rows: usize,
}

/// Loads, aligns and l2-normalizes the given sources.
pub fn align_sources(specs: &[SourceSpec]) -> Result<(AlignedEmbeddingSet, AlignInfo)> {
    if specs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 sources (--sources name=path,...), got {}",
            specs.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = specs.iter().find(|s| !seen.insert(s.name.as_str())) {
        return Err(Error::InvalidArgument(format!("source name `{}` given twice", dup.name)));
    }
    let loaded = specs
        .par_iter()
        .map(|s| {
            log::info!("loading {} from {}", s.name, s.path.display());
            let file = fs::File::open(&s.path).map_err(|e| Error::io(&s.path, e))?;
            read_table(std::io::BufReader::new(file), &s.name, s.format).map_err(|e| e.in_file(&s.path))
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs = specs
        .iter()
        .zip(&loaded)
        .map(|(s, (t, d))| (s.name.clone(), s.path.display().to_string(), t.len(), *d))
        .collect();
    let aligned = align(loaded.into_iter().map(|(t, _)| t).collect(), VocabPolicy::Intersection)?;
    let before = aligned.len();
    let set = l2_normalize(aligned)?;
    let info = AlignInfo {
        inputs,
        dropped_zero_rows: before - set.len(),
    };
    Ok((set, info))
}

/// Writes the aligned set and its manifest into `dir`.
pub fn write_aligned(set: &AlignedEmbeddingSet, info: &AlignInfo, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = KeyValueFile::default();
    manifest.globals.insert("format".into(), FORMAT.into());
    manifest.globals.insert("version".into(), "1".into());
    manifest.globals.insert("words".into(), set.len().to_string());
    manifest.globals.insert("normalized".into(), set.is_normalized().to_string());
    manifest
        .globals
        .insert("dropped_zero_rows".into(), info.dropped_zero_rows.to_string());
    for (i, table) in set.sources().iter().enumerate() {
        let file = format!("{}.txt", table.name());
        export_table(table, dir.join(&file))?;
        let mut block = BTreeMap::new();
        block.insert("name".to_string(), table.name().to_string());
        block.insert("dim".to_string(), table.dim().to_string());
        block.insert("file".to_string(), file);
        if let Some((_, path, words, dups)) = info.inputs.get(i) {
            block.insert("input".to_string(), path.clone());
            block.insert("input_words".to_string(), words.to_string());
            block.insert("duplicates".to_string(), dups.to_string());
        }
        manifest.sections.push(("source".into(), block));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))
}

/// Reads an aligned set written by [`write_aligned`].
pub fn load_aligned(dir: &Path) -> Result<AlignedEmbeddingSet> {
    let manifest = KeyValueFile::load(&dir.join(MANIFEST))?;
    if manifest.globals.get("format").map(String::as_str) != Some(FORMAT) {
        return Err(Error::Format {
            line: 1,
            msg: format!("{} is not an aligned-set manifest", dir.join(MANIFEST).display()),
        });
    }
    let tables = manifest
        .blocks("source")
        .map(|b| {
            let name = b.get("name").ok_or_else(|| Error::Alignment("manifest source without a name".into()))?;
            let file = b.get("file").ok_or_else(|| Error::Alignment(format!("manifest source `{name}` without a file")))?;
            let table = load_named_table(dir.join(file), name, TableFormat::Headered)?;
            if let Some(dim) = b.get("dim") {
                if dim.parse::<usize>().ok() != Some(table.dim()) {
                    return Err(Error::Alignment(format!("`{name}` has dim {}, manifest says {dim}", table.dim())));
                }
            }
            Ok(table)
        })
        .collect::<Result<Vec<_>>>()?;
    if tables.is_empty() {
        return Err(Error::EmptyInput(format!("{} lists no sources", dir.join(MANIFEST).display())));
    }
    let set = AlignedEmbeddingSet::new(tables)?;
    if let Some(words) = manifest.globals.get("words") {
        if words.parse::<usize>().ok() != Some(set.len()) {
            return Err(Error::Alignment(format!("manifest lists {words} words, tables hold {}", set.len())));
        }
    }
    set.assume_normalized()
}
