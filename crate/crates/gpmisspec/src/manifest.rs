//! Run manifests: every file the CLI writes gets a sibling
//! `<file>.manifest.json` recording the full configuration, tool version,
//! build digest, seed, timestamps and content digests of all inputs, so a
//! run can be re-executed and its numeric outputs reproduced bit for bit.
//! (The manifest itself carries a timestamp and is not byte-stable; the
//! numeric outputs are.)

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Version string including the source digest computed at build time.
pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "+",
    env!("GPMISSPEC_BUILD_DIGEST")
);

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub created_unix_ms: u128,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    /// input path → sha256 of its content
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(argv: Vec<String>) -> Self {
        RunManifest {
            tool: "gpmisspec",
            version: VERSION,
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            argv,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let digest = Sha256::digest(&bytes);
        self.inputs
            .insert(path.display().to_string(), format!("{digest:x}"));
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<output>.manifest.json` next to the given output file.
    pub fn write_beside(&self, output: &Path) -> Result<()> {
        let mut manifest_path = output.as_os_str().to_owned();
        manifest_path.push(".manifest.json");
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&manifest_path, body).map_err(|source| Error::Io {
            path: Path::new(&manifest_path).display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_written_beside_output() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "payload").unwrap();
        let output = dir.path().join("out.csv");
        std::fs::write(&output, "n,value\n").unwrap();

        let mut m = RunManifest::new(vec!["gpmisspec".into(), "test".into()]).with_seed(7);
        m.record_input(&input).unwrap();
        m.record_output(&output);
        m.write_beside(&output).unwrap();

        let text = std::fs::read_to_string(dir.path().join("out.csv.manifest.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["tool"], "gpmisspec");
        assert_eq!(parsed["seed"], 7);
        assert!(parsed["version"].as_str().unwrap().contains('+'));
        // sha256 of "payload"
        assert_eq!(
            parsed["inputs"][input.display().to_string()],
            "239f59ed55e737c77147cf55ad0c1b030b6d7ee748a7426952f9b852d5a935e5"
        );
    }
}
