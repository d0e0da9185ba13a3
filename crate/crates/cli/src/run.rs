//! Artifact writing with provenance headers and a run manifest.

use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::Failure;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Artifact {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    config: &'a RunConfig,
    artifacts: &'a [Artifact],
}

pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub provenance: Provenance,
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl<'a> Run<'a> {
    pub fn new(command: &'static str, cfg: &'a RunConfig) -> Result<Self, Failure> {
        Ok(Run {
            cfg,
            provenance: Provenance {
                tool: "flexpoint",
                version: env!("CARGO_PKG_VERSION"),
                command,
                config_sha256: cfg.hash(),
                seed: cfg.seed,
            },
            dir: cfg.out_dir()?,
            artifacts: Vec::new(),
        })
    }

    fn header(&self) -> String {
        let p = &self.provenance;
        let seed = p.seed.map_or(String::from("none"), |s| s.to_string());
        format!(
            "# {} version={} command={} config_sha256={} seed={}\n",
            p.tool, p.version, p.command, p.config_sha256, seed
        )
    }

    fn put(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| Failure::runtime(format!("writing {}: {e}", path.display())))?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: hex(&Sha256::digest(body.as_bytes())),
        });
        Ok(())
    }

    /// Write a text artifact behind a `#` provenance line.
    pub fn write(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let text = format!("{}{body}", self.header());
        self.put(name, &text)
    }

    /// Write a JSON artifact; provenance travels as a field.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        #[derive(Serialize)]
        struct With<'b, T> {
            provenance: &'b Provenance,
            #[serde(flatten)]
            value: &'b T,
        }
        let text = serde_json::to_string_pretty(&With {
            provenance: &self.provenance,
            value,
        })
        .map_err(|e| Failure::runtime(e.to_string()))?;
        self.put(name, &(text + "\n"))
    }

    pub fn finish(self) -> Result<(), Failure> {
        let manifest = Manifest {
            provenance: &self.provenance,
            config: self.cfg,
            artifacts: &self.artifacts,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::runtime(e.to_string()))?;
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text + "\n").map_err(|e| Failure::runtime(format!("writing {}: {e}", path.display())))
    }
}
