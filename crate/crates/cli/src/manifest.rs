//! Run manifests: the config snapshot, wall-clock per phase, and a SHA-256
//! inventory of every file a command wrote.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

const HEADER: &str = "gogan manifest v1";
const CONFIG_MARKER: &str = "config:";

#[derive(Clone, Debug, PartialEq)]
pub struct FileEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub phases: Vec<(String, f64)>,
    pub files: Vec<FileEntry>,
    pub config: String,
}

pub fn file_sha256(path: &Path) -> CliResult<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest_{command}.txt")
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

impl RunManifest {
    pub fn new(command: &str, config: String) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            phases: Vec::new(),
            files: Vec::new(),
            config,
        }
    }

    /// Runs `f` and records its wall-clock time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let t0 = Instant::now();
        let out = f();
        self.phases.push((phase.to_string(), t0.elapsed().as_secs_f64()));
        out
    }

    pub fn add_file(&mut self, root: &Path, path: &Path) -> CliResult<()> {
        let rel = path
            .strip_prefix(root)
            .map_err(|_| CliError::Config(format!("{} is outside {}", path.display(), root.display())))?;
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let (sha256, bytes) = file_sha256(path)?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel,
            sha256,
            bytes,
        });
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = format!("{HEADER}\ncommand = {}\nversion = {}\n", self.command, self.version);
        for (name, secs) in &self.phases {
            s += &format!("phase {name} = {secs}\n");
        }
        for f in &self.files {
            s += &format!("file {} {} {}\n", f.sha256, f.bytes, f.path);
        }
        s += CONFIG_MARKER;
        s.push('\n');
        s += &self.config;
        s
    }

    /// Writes `manifest_<command>.txt` into `root` atomically; every listed
    /// file must still be there.
    pub fn write(&self, root: &Path) -> CliResult<PathBuf> {
        for f in &self.files {
            if !root.join(&f.path).is_file() {
                return Err(CliError::Verify(format!("listed file {} is missing", f.path)));
            }
        }
        let path = root.join(manifest_name(&self.command));
        write_atomic(&path, self.render().as_bytes())?;
        Ok(path)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let bad = |line: &str| CliError::Config(format!("malformed manifest line {line:?}"));
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(CliError::Config("not a run manifest".into()));
        }
        let mut m = RunManifest::new("", String::new());
        let mut config = Vec::new();
        let mut in_config = false;
        for line in lines {
            if in_config {
                config.push(line);
            } else if line == CONFIG_MARKER {
                in_config = true;
            } else if let Some(v) = line.strip_prefix("command = ") {
                m.command = v.to_string();
            } else if let Some(v) = line.strip_prefix("version = ") {
                m.version = v.to_string();
            } else if let Some(rest) = line.strip_prefix("phase ") {
                let (name, secs) = rest.split_once(" = ").ok_or_else(|| bad(line))?;
                m.phases.push((name.to_string(), secs.parse().map_err(|_| bad(line))?));
            } else if let Some(rest) = line.strip_prefix("file ") {
                let mut parts = rest.splitn(3, ' ');
                let (Some(sha), Some(bytes), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(bad(line));
                };
                m.files.push(FileEntry {
                    path: path.to_string(),
                    sha256: sha.to_string(),
                    bytes: bytes.parse().map_err(|_| bad(line))?,
                });
            } else {
                return Err(bad(line));
            }
        }
        if !in_config || m.command.is_empty() {
            return Err(CliError::Config("manifest is missing its command or config".into()));
        }
        m.config = config.join("\n");
        if !m.config.is_empty() {
            m.config.push('\n');
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Re-hashes every listed file under `root`.
    pub fn verify(&self, root: &Path) -> CliResult<()> {
        for f in &self.files {
            let p = root.join(&f.path);
            if !p.is_file() {
                return Err(CliError::Verify(format!("{} is missing", f.path)));
            }
            let (sha, bytes) = file_sha256(&p)?;
            if sha != f.sha256 || bytes != f.bytes {
                return Err(CliError::Verify(format!(
                    "{} does not match its recorded checksum",
                    f.path
                )));
            }
        }
        Ok(())
    }
}

/// Verifies every `manifest_*.txt` in `root`; returns each manifest path
/// with its file count.
pub fn verify_run_dir(root: &Path) -> CliResult<Vec<(PathBuf, usize)>> {
    let mut manifests: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| CliError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("manifest_") && name.ends_with(".txt")
        })
        .collect();
    manifests.sort();
    if manifests.is_empty() {
        return Err(CliError::Config(format!("no manifest found in {}", root.display())));
    }
    manifests
        .into_iter()
        .map(|p| {
            let m = RunManifest::read(&p)?;
            m.verify(root)?;
            Ok((p, m.files.len()))
        })
        .collect()
}
