//! Line-delimited JSON files, the format of every inter-stage artifact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn read<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    from_reader(BufReader::new(file), path)
}

pub fn from_reader<T: DeserializeOwned>(reader: impl BufRead, path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.to_owned(),
            line: n + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write<'a, T: Serialize + 'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<usize> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = to_writer(&mut w, records).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

pub fn to_writer<'a, T: Serialize + 'a>(
    mut w: impl Write,
    records: impl IntoIterator<Item = &'a T>,
) -> std::io::Result<usize> {
    let mut n = 0;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

pub fn to_string<'a, T: Serialize + 'a>(records: impl IntoIterator<Item = &'a T>) -> String {
    let mut buf = Vec::new();
    // Writing into a Vec cannot fail for derived Serialize impls.
    to_writer(&mut buf, records).expect("in-memory jsonl");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
