//! Run manifests and atomic artifact writing. Every invocation that writes
//! files also writes a manifest recording the command line, the flag
//! snapshot, the master seed, the code version, input digests, wall-clock
//! time, and a digest-indexed list of outputs. The manifest's own identity
//! is the digest of its pre-run core (everything except the outputs and the
//! clock), so outputs can embed it without circularity; `replay` re-runs the
//! recorded command and compares the regenerated outputs against the
//! recorded digests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A named input with its content digest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    /// File path or a `fixture:<name>@beta=<b>` pseudo-input.
    pub label: String,
    pub sha256: String,
}

/// One written artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

/// The persisted manifest document.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// Full argv of the invocation.
    pub command_line: Vec<String>,
    /// Resolved flag values, as a free-form JSON object.
    pub config: serde_json::Value,
    /// Master seed, when the command consumes randomness.
    pub master_seed: Option<u64>,
    /// Crate version of the binary.
    pub code_version: String,
    /// Digests of every input file or pseudo-input.
    pub inputs: Vec<InputRecord>,
    /// Digest of the core fields above; the identity outputs reference.
    pub core_digest: String,
    /// Wall-clock seconds of the run.
    pub wall_clock_seconds: f64,
    /// Written artifacts with digests, in write order.
    pub outputs: Vec<OutputRecord>,
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Writes via a temporary file in the target directory plus rename, so
/// readers never observe a partial artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = path.with_extension(format!(
        "{}.tmp-{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Collects outputs for one invocation and writes the manifest at the end.
pub struct ManifestBuilder {
    started: Instant,
    command_line: Vec<String>,
    config: serde_json::Value,
    master_seed: Option<u64>,
    inputs: Vec<InputRecord>,
    core_digest: String,
    outputs: Vec<OutputRecord>,
}

impl ManifestBuilder {
    /// Starts a manifest from the invocation context. The core digest is
    /// fixed here, before any output exists.
    pub fn new(
        command_line: Vec<String>,
        config: serde_json::Value,
        master_seed: Option<u64>,
        inputs: Vec<InputRecord>,
    ) -> ManifestBuilder {
        let core = serde_json::json!({
            "command_line": command_line,
            "config": config,
            "master_seed": master_seed,
            "code_version": code_version(),
            "inputs": inputs,
        });
        let core_digest = sha256_hex(core.to_string().as_bytes());
        ManifestBuilder {
            started: Instant::now(),
            command_line,
            config,
            master_seed,
            inputs,
            core_digest,
            outputs: Vec::new(),
        }
    }

    /// Digest outputs may embed as their manifest reference.
    pub fn core_digest(&self) -> &str {
        &self.core_digest
    }

    /// Atomically writes one artifact and records its digest.
    pub fn write_output(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        atomic_write(path, bytes)?;
        self.outputs.push(OutputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Writes the manifest next to the first output (or at an explicit
    /// path) and returns its location.
    pub fn finish(self, explicit: Option<&Path>) -> Result<Option<PathBuf>> {
        if self.outputs.is_empty() {
            return Ok(None);
        }
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let first = Path::new(&self.outputs[0].path);
                let mut name = first.file_name().unwrap_or_default().to_os_string();
                name.push(".manifest.json");
                first.with_file_name(name)
            }
        };
        let manifest = RunManifest {
            command_line: self.command_line,
            config: self.config,
            master_seed: self.master_seed,
            code_version: code_version(),
            inputs: self.inputs,
            core_digest: self.core_digest,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        atomic_write(&path, text.as_bytes())?;
        Ok(Some(path))
    }
}

/// Version string recorded in manifests and report headers.
pub fn code_version() -> String {
    format!("tns {}", env!("CARGO_PKG_VERSION"))
}

/// Loads a manifest for replay.
pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Compares the recorded outputs against the files currently on disk;
/// returns the mismatched paths.
pub fn compare_outputs(manifest: &RunManifest) -> Result<Vec<String>> {
    let mut mismatched = Vec::new();
    for record in &manifest.outputs {
        let bytes = fs::read(&record.path)
            .with_context(|| format!("reading recorded output {}", record.path))?;
        if sha256_hex(&bytes) != record.sha256 {
            mismatched.push(record.path.clone());
        }
    }
    Ok(mismatched)
}

/// Digest record for an input file on disk.
pub fn input_record(path: &Path) -> Result<InputRecord> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputRecord {
        label: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Replay must re-dispatch the recorded argv; reject manifests whose argv
/// does not look like one of ours.
pub fn replay_argv(manifest: &RunManifest) -> Result<Vec<String>> {
    if manifest.command_line.len() < 2 {
        bail!("manifest records no command to replay");
    }
    Ok(manifest.command_line[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_stable_and_hex() {
        let d = sha256_hex(b"abc");
        assert_eq!(
            d,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = std::env::temp_dir().join(format!("tns-manifest-test-{}", std::process::id()));
        let path = dir.join("out.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn manifest_round_trip_and_comparison() {
        let dir = std::env::temp_dir().join(format!("tns-manifest-rt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let out = dir.join("data.csv");
        let mut b = ManifestBuilder::new(
            vec!["tns".into(), "oracle".into(), "sweep".into()],
            serde_json::json!({"points": 3}),
            Some(7),
            Vec::new(),
        );
        let digest_before = b.core_digest().to_string();
        b.write_output(&out, b"# header\n1,2,3\n").unwrap();
        let path = b.finish(None).unwrap().unwrap();
        assert!(path.file_name().unwrap().to_str().unwrap().ends_with(".manifest.json"));
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.core_digest, digest_before);
        assert_eq!(loaded.outputs.len(), 1);
        assert!(compare_outputs(&loaded).unwrap().is_empty());
        fs::write(&out, b"tampered").unwrap();
        assert_eq!(compare_outputs(&loaded).unwrap(), vec![out.display().to_string()]);
        fs::remove_dir_all(&dir).unwrap();
    }
}
