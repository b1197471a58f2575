//! Icon manifest loading.
//!
//! A manifest is a JSON object next to the icon files:
//!
//! ```json
//! {
//!   "manifest_version": 1,
//!   "apple": "icons/apple.svg",
//!   "aliases": { "apples": "apple" }
//! }
//! ```
//!
//! Every other top-level key maps a type key to a path relative to the
//! manifest's directory. Keys are normalized the same way the core library
//! normalizes lookups.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use m2v_core::icons::{normalize_key, IconLibrary, IconTemplate};
use serde_json::Value;

pub const MANIFEST_VERSION: u64 = 1;

const VERSION_KEY: &str = "manifest_version";
const ALIASES_KEY: &str = "aliases";

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("unsupported manifest_version {0}, expected {MANIFEST_VERSION}")]
    Version(String),
    #[error("duplicate icon keys after normalization: {}", .0.join(", "))]
    DuplicateKeys(Vec<String>),
    #[error("icon paths must stay inside the manifest directory: {}", join_paths(.0))]
    EscapingPaths(Vec<PathBuf>),
    #[error("missing icon files: {}", join_paths(.0))]
    MissingFiles(Vec<PathBuf>),
    #[error("aliases point to unknown keys: {}", .0.join(", "))]
    UnknownAliasTargets(Vec<String>),
    #[error("unusable icon files: {}", .0.join("; "))]
    BadIcons(Vec<String>),
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

/// A validated manifest. Paths in `entries` are relative to `root_dir`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IconManifest {
    pub root_dir: PathBuf,
    pub entries: BTreeMap<String, PathBuf>,
    pub aliases: BTreeMap<String, String>,
}

impl IconManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path_of(&self, key: &str) -> Option<PathBuf> {
        self.entries.get(&normalize_key(key)).map(|p| self.root_dir.join(p))
    }

    /// Reads and checks every icon file. All bad files are reported at once.
    pub fn load_library(&self) -> Result<IconLibrary, ManifestError> {
        let mut library = IconLibrary::new();
        let mut bad = Vec::new();
        for (key, rel) in &self.entries {
            let path = self.root_dir.join(rel);
            match read_icon(&path) {
                Ok(template) => library.insert(key, template),
                Err(reason) => bad.push(format!("{}: {reason}", path.display())),
            }
        }
        if !bad.is_empty() {
            return Err(ManifestError::BadIcons(bad));
        }
        for (alias, key) in &self.aliases {
            library.insert_alias(alias, key);
        }
        Ok(library)
    }
}

fn read_icon(path: &Path) -> Result<IconTemplate, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let doc = roxmltree::Document::parse(&text).map_err(|e| format!("not well-formed XML: {e}"))?;
    if doc.root_element().tag_name().name() != "svg" {
        return Err("root element is not <svg>".to_string());
    }
    IconTemplate::parse(&text).map_err(|e| e.to_string())
}

pub fn load_manifest(path: &Path) -> Result<IconManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let root_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, path, root_dir)
}

/// `origin` only labels errors; file checks happen under `root_dir`.
pub fn parse_manifest(text: &str, origin: &Path, root_dir: PathBuf) -> Result<IconManifest, ManifestError> {
    let schema = |message: String| ManifestError::Schema {
        path: origin.to_path_buf(),
        message,
    };
    let value: Value = serde_json::from_str(text).map_err(|source| ManifestError::Json {
        path: origin.to_path_buf(),
        source,
    })?;
    let Value::Object(map) = value else {
        return Err(schema("manifest must be a JSON object".to_string()));
    };

    if let Some(version) = map.get(VERSION_KEY) {
        if version.as_u64() != Some(MANIFEST_VERSION) {
            return Err(ManifestError::Version(version.to_string()));
        }
    }

    let mut raw_keys: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut entries = BTreeMap::new();
    let mut escaping = Vec::new();
    for (key, value) in map.iter().filter(|(k, _)| *k != VERSION_KEY && *k != ALIASES_KEY) {
        let Value::String(rel) = value else {
            return Err(schema(format!("icon `{key}` must map to a path string")));
        };
        let normalized = normalize_key(key);
        if normalized.is_empty() {
            return Err(schema("empty icon key".to_string()));
        }
        let rel = PathBuf::from(rel);
        if !stays_inside(&rel) {
            escaping.push(rel.clone());
        }
        raw_keys.entry(normalized.clone()).or_default().push(key.clone());
        entries.insert(normalized, rel);
    }

    let duplicates: Vec<String> = raw_keys
        .iter()
        .filter(|(_, raw)| raw.len() > 1)
        .map(|(key, raw)| format!("{key} ({})", raw.iter().map(|r| format!("{r:?}")).collect::<Vec<_>>().join(", ")))
        .collect();
    if !duplicates.is_empty() {
        return Err(ManifestError::DuplicateKeys(duplicates));
    }
    if !escaping.is_empty() {
        return Err(ManifestError::EscapingPaths(escaping));
    }
    let missing: Vec<PathBuf> = entries.values().map(|rel| root_dir.join(rel)).filter(|p| !p.is_file()).collect();
    if !missing.is_empty() {
        return Err(ManifestError::MissingFiles(missing));
    }

    let mut aliases = BTreeMap::new();
    match map.get(ALIASES_KEY) {
        None | Some(Value::Null) => {}
        Some(Value::Object(raw)) => {
            let mut unknown = Vec::new();
            for (alias, target) in raw {
                let Value::String(target) = target else {
                    return Err(schema(format!("alias `{alias}` must map to a key string")));
                };
                let (alias, target) = (normalize_key(alias), normalize_key(target));
                if !entries.contains_key(&target) {
                    unknown.push(format!("{alias} -> {target}"));
                }
                aliases.insert(alias, target);
            }
            if !unknown.is_empty() {
                return Err(ManifestError::UnknownAliasTargets(unknown));
            }
        }
        Some(_) => return Err(schema("`aliases` must be an object".to_string())),
    }

    Ok(IconManifest {
        root_dir,
        entries,
        aliases,
    })
}

fn stays_inside(rel: &Path) -> bool {
    rel.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) && rel.components().next().is_some()
}
