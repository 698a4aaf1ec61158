//! Service configuration file (TOML).
//!
//! ```toml
//! port = 8080
//! data_root = "data"
//!
//! [session]
//! rho = 0.5
//! embedding = "tsne"
//!
//! [session.lod]
//! full_detail = 3.0
//! star = 10.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use dreamspace_core::session::SessionConfig;
use serde::{Deserialize, Serialize};

use crate::dataset::IngestOptions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    /// Session logs live under `<data_root>/sessions`.
    pub data_root: PathBuf,
    /// Datasets loaded at startup.
    pub preload: Vec<PathBuf>,
    /// Defaults for new sessions; request bodies override field by field.
    pub session: SessionConfig,
    pub ingest: IngestOptions,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_root: PathBuf::from("data"),
            preload: Vec::new(),
            session: SessionConfig::default(),
            ingest: IngestOptions::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            field: e.path().to_string(),
            message: e.inner().message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ServiceConfig::from_toml(&text, path)
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_root.join("sessions")
    }
}
