//! Parameter checkpoints: a plain-text manifest next to a binary blob of
//! little-endian `f64` values concatenated in manifest order.
//!
//! ```text
//! format = gogan-checkpoint 1
//! dtype = f64-le
//! blob = critic.bin
//! meta.stage = 2
//! param.layer0.weight = 2x128 0 256
//! ```
//!
//! Each `param.` line holds the shape, byte offset and element count.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

const FORMAT: &str = "gogan-checkpoint 1";
const DTYPE: &str = "f64-le";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub meta: IndexMap<String, String>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("checkpoint is missing meta.{key}")))
    }
}

/// Writes `<path>` (manifest) and a sibling `.bin` blob. Returns both paths.
pub fn save_checkpoint(path: &Path, params: &ParamSet, meta: &[(String, String)]) -> Result<(PathBuf, PathBuf)> {
    let blob_path = path.with_extension("bin");
    let blob_name = blob_path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Usage(format!("bad checkpoint path {}", path.display())))?
        .to_string();

    let mut text = format!("format = {FORMAT}\ndtype = {DTYPE}\nblob = {blob_name}\n");
    for (k, v) in meta {
        if k.contains('=') || v.contains('\n') {
            return Err(Error::Usage(format!("unwritable meta entry {k:?}")));
        }
        text.push_str(&format!("meta.{k} = {v}\n"));
    }
    let mut offset = 0usize;
    for (name, t) in params.iter() {
        let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        text.push_str(&format!("param.{name} = {} {offset} {}\n", shape.join("x"), t.len()));
        offset += t.len() * 8;
    }
    fs::write(&blob_path, params.to_le_bytes()).map_err(|e| Error::io(&blob_path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok((path.to_path_buf(), blob_path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |offset: usize, msg: String| Error::Parse {
        file: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };

    let mut blob_name = None;
    let mut seen_format = false;
    let mut meta = IndexMap::new();
    let mut entries: Vec<(String, Vec<usize>, usize, usize, usize)> = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += line.len();
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| parse_err(line_offset, "expected `key = value`".into()))?;
        match key {
            "format" if value == FORMAT => seen_format = true,
            "format" => return Err(parse_err(line_offset, format!("unsupported format {value:?}"))),
            "dtype" if value == DTYPE => {}
            "dtype" => return Err(parse_err(line_offset, format!("unsupported dtype {value:?}"))),
            "blob" => blob_name = Some(value.to_string()),
            _ => {
                if let Some(k) = key.strip_prefix("meta.") {
                    meta.insert(k.to_string(), value.to_string());
                } else if let Some(name) = key.strip_prefix("param.") {
                    let fields: Vec<&str> = value.split_whitespace().collect();
                    let [shape, off, count] = fields[..] else {
                        return Err(parse_err(line_offset, "param needs shape, offset, count".into()));
                    };
                    let shape = shape
                        .split('x')
                        .map(str::parse::<usize>)
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| parse_err(line_offset, format!("bad shape: {e}")))?;
                    let off: usize = off
                        .parse()
                        .map_err(|e| parse_err(line_offset, format!("bad offset: {e}")))?;
                    let count: usize = count
                        .parse()
                        .map_err(|e| parse_err(line_offset, format!("bad count: {e}")))?;
                    entries.push((name.to_string(), shape, off, count, line_offset));
                } else {
                    return Err(parse_err(line_offset, format!("unknown key {key:?}")));
                }
            }
        }
    }
    if !seen_format {
        return Err(parse_err(0, "missing format line".into()));
    }
    let blob_name = blob_name.ok_or_else(|| parse_err(0, "missing blob line".into()))?;
    let blob_path = path.parent().unwrap_or(Path::new(".")).join(&blob_name);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;

    let mut params = ParamSet::new();
    for (name, shape, off, count, line_offset) in entries {
        let end = off + count * 8;
        if end > blob.len() {
            return Err(parse_err(
                line_offset,
                format!("param {name:?} reaches byte {end} of a {}-byte blob", blob.len()),
            ));
        }
        let data = blob[off..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| parse_err(line_offset, e.to_string()))?;
        params.insert(name, t)?;
    }
    Ok(Checkpoint { params, meta })
}
