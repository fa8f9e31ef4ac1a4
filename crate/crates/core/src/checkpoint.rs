//! Versioned JSON checkpoints. Floats are written in shortest round-trip form
//! and parsed exactly, so a reload restores parameters bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "metaemb-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    payload: T,
}

fn kind_of<T>() -> String {
    let full = std::any::type_name::<T>();
    full.rsplit("::").next().unwrap_or(full).to_string()
}

pub fn save<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let envelope = Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: kind_of::<T>(),
        payload: value,
    };
    serde_json::to_writer(BufWriter::new(file), &envelope)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let envelope: Envelope<T> = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if envelope.format != FORMAT || envelope.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            envelope.format,
            envelope.version
        )));
    }
    if envelope.kind != kind_of::<T>() {
        return Err(Error::Checkpoint(format!(
            "{}: holds a {}, expected a {}",
            path.display(),
            envelope.kind,
            kind_of::<T>()
        )));
    }
    Ok(envelope.payload)
}
