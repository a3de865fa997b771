use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::Label;
use crate::error::{Error, Result};

/// One specimen in a corpus. When read from a flat-json manifest, `path` is
/// resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub writer_id: String,
    pub specimen: u32,
    pub label: Label,
    pub path: PathBuf,
    /// Light-on-dark scan; intensities are inverted at load time.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub invert: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub dataset_name: String,
    pub entries: Vec<ManifestEntry>,
}

/// Maps a relative file path (with `/` separators) to a manifest entry.
///
/// `pattern` must define the named groups `writer` and `specimen`. The label
/// is either fixed, or read from a `label` group through `label_codes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamingRule {
    pub pattern: String,
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default)]
    pub label_codes: BTreeMap<String, Label>,
}

impl NamingRule {
    fn fixed(pattern: &str, label: Label) -> Self {
        Self {
            pattern: pattern.into(),
            label: Some(label),
            label_codes: BTreeMap::new(),
        }
    }

    fn coded(pattern: &str, codes: &[(&str, Label)]) -> Self {
        Self {
            pattern: pattern.into(),
            label: None,
            label_codes: codes.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layout {
    /// Naming-rule table applied to every image file below the root.
    Rules { name: String, rules: Vec<NamingRule> },
    /// `manifest.json` at the root (or the root itself, when it is a file).
    FlatJson,
}

const IMAGE_EXT: &str = r"\.(?i:png|jpe?g|bmp|pgm)$";

impl Layout {
    pub fn cedar() -> Self {
        Layout::Rules {
            name: "cedar".into(),
            rules: vec![
                NamingRule::fixed(
                    &format!(r"(?:^|/)original_(?P<writer>\d+)_(?P<specimen>\d+){IMAGE_EXT}"),
                    Label::Genuine,
                ),
                NamingRule::fixed(
                    &format!(r"(?:^|/)forgeries_(?P<writer>\d+)_(?P<specimen>\d+){IMAGE_EXT}"),
                    Label::Forgery,
                ),
            ],
        }
    }

    /// MCYT-75 offline: `<writer>/<writer>v<nn>.bmp` genuine, `f<nn>` forged.
    pub fn mcyt() -> Self {
        Layout::Rules {
            name: "mcyt".into(),
            rules: vec![NamingRule::coded(
                &format!(r"(?:^|/)(?P<writer>\d{{4}})(?P<label>[vf])(?P<specimen>\d+){IMAGE_EXT}"),
                &[("v", Label::Genuine), ("f", Label::Forgery)],
            )],
        }
    }

    /// Loads a custom naming-rule table from a JSON array of [`NamingRule`].
    pub fn from_rules_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rules: Vec<NamingRule> = serde_json::from_str(&text)?;
        Ok(Layout::Rules {
            name: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into()),
            rules,
        })
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cedar" => Ok(Layout::cedar()),
            "mcyt" => Ok(Layout::mcyt()),
            "flat-json" => Ok(Layout::FlatJson),
            other => Err(Error::UnknownLayout(other.into())),
        }
    }
}

/// Enumerates a corpus, sorted by writer id (lexicographic), specimen index,
/// then label.
pub fn scan_manifest(root: &Path, layout: &Layout) -> Result<CorpusManifest> {
    if !root.exists() {
        return Err(Error::IoFailure {
            path: root.to_path_buf(),
            reason: "corpus root does not exist".into(),
        });
    }
    let mut manifest = match layout {
        Layout::FlatJson => {
            let file = if root.is_file() {
                root.to_path_buf()
            } else {
                root.join("manifest.json")
            };
            if !file.exists() {
                return Err(Error::EmptyCorpus(root.to_path_buf()));
            }
            CorpusManifest::read_flat_json(&file)?
        }
        Layout::Rules { rules, .. } => scan_rules(root, rules)?,
    };
    if manifest.entries.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    manifest.sort();
    manifest.check_unique()?;
    Ok(manifest)
}

fn dataset_name(root: &Path) -> String {
    let dir = if root.is_file() { root.parent() } else { Some(root) };
    dir.and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into())
}

fn scan_rules(root: &Path, rules: &[NamingRule]) -> Result<CorpusManifest> {
    let compiled = rules
        .iter()
        .map(|r| {
            Regex::new(&r.pattern)
                .map(|re| (re, r))
                .map_err(|e| Error::MalformedManifest(format!("naming rule: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::new();
    for item in WalkDir::new(root).sort_by_file_name() {
        let item = item.map_err(|e| Error::IoFailure {
            path: root.to_path_buf(),
            reason: e.to_string(),
        })?;
        if !item.file_type().is_file() {
            continue;
        }
        let rel = item.path().strip_prefix(root).unwrap_or(item.path());
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        for (re, rule) in &compiled {
            let Some(caps) = re.captures(&rel) else {
                continue;
            };
            let writer_id = caps
                .name("writer")
                .map(|m| m.as_str().to_string())
                .ok_or_else(|| Error::MalformedManifest("rule lacks a `writer` group".into()))?;
            let specimen = caps
                .name("specimen")
                .and_then(|m| m.as_str().parse::<u32>().ok())
                .ok_or_else(|| {
                    Error::MalformedManifest(format!("no numeric specimen index in {rel}"))
                })?;
            let label = match rule.label {
                Some(l) => l,
                None => {
                    let code = caps.name("label").map(|m| m.as_str()).unwrap_or_default();
                    *rule.label_codes.get(code).ok_or_else(|| {
                        Error::MalformedManifest(format!("unknown label code `{code}` in {rel}"))
                    })?
                }
            };
            entries.push(ManifestEntry {
                writer_id,
                specimen,
                label,
                path: item.path().to_path_buf(),
                invert: false,
            });
            break;
        }
    }
    Ok(CorpusManifest {
        dataset_name: dataset_name(root),
        entries,
    })
}

impl CorpusManifest {
    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| {
            (&a.writer_id, a.specimen, a.label).cmp(&(&b.writer_id, b.specimen, b.label))
        });
    }

    pub fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert((&e.writer_id, e.specimen, e.label)) {
                return Err(Error::DuplicateEntry {
                    writer_id: e.writer_id.clone(),
                    specimen: e.specimen,
                    label: e.label,
                });
            }
        }
        Ok(())
    }

    /// Writer ids in manifest order, deduplicated.
    pub fn writers(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if out.last() != Some(&e.writer_id.as_str()) && !out.contains(&e.writer_id.as_str()) {
                out.push(&e.writer_id);
            }
        }
        out
    }

    pub fn read_flat_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::IoFailure {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut entries: Vec<ManifestEntry> = serde_json::from_str(&text)
            .map_err(|e| Error::MalformedManifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut entries {
            e.path = base.join(&e.path);
        }
        Ok(Self {
            dataset_name: dataset_name(path),
            entries,
        })
    }

    /// Writes the manifest as a flat-json array. Paths under the manifest's
    /// directory are stored relative to it.
    pub fn write_flat_json(&self, path: &Path) -> Result<()> {
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let base = std::fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
        let entries: Vec<ManifestEntry> = self
            .entries
            .iter()
            .map(|e| {
                let abs = std::fs::canonicalize(&e.path).unwrap_or_else(|_| e.path.clone());
                let path = abs
                    .strip_prefix(&base)
                    .map(Path::to_path_buf)
                    .unwrap_or(abs);
                ManifestEntry {
                    path,
                    ..e.clone()
                }
            })
            .collect();
        let text = serde_json::to_string_pretty(&entries)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
