//! Checksum-verified store of datasets, tokenizers and model plugins.
//!
//! Layout under the registry root:
//! `<kind>/<name>/<version>/manifest.json` plus payload files, and
//! `index.json` listing every entry.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::forge::{check_schema, ParamSpec};
use crate::ids::new_id;
use crate::fsutil::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.json";
const STAGING_PREFIX: &str = ".staging-";
const TRASH_PREFIX: &str = ".trash-";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Dataset,
    Tokenizer,
    Model,
}

impl EntryKind {
    pub const ALL: [EntryKind; 3] = [EntryKind::Dataset, EntryKind::Tokenizer, EntryKind::Model];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntryKind::Dataset => "dataset",
            EntryKind::Tokenizer => "tokenizer",
            EntryKind::Model => "model",
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntryKind {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| RegistryError::Invalid(format!("unknown kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &str, data: &[u8]) -> Self {
        Self {
            path: path.to_string(),
            sha256: sha256_hex(data),
            bytes: data.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: String,
    pub kind: EntryKind,
    pub version: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub files: Vec<FileRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_schema: Option<Vec<ParamSpec>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryKey {
    pub kind: EntryKind,
    pub name: String,
    pub version: String,
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}@{}", self.kind, self.name, self.version)
    }
}

impl RegistryEntry {
    pub fn key(&self) -> EntryKey {
        EntryKey {
            kind: self.kind,
            name: self.name.clone(),
            version: self.version.clone(),
        }
    }

    /// Checks every manifest invariant that does not need payload bytes.
    pub fn check(&self) -> Result<(), RegistryError> {
        let invalid = |m: String| Err(RegistryError::Invalid(m));
        let mut chars = self.name.chars();
        let name_ok = matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
            && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_');
        if !name_ok {
            return invalid(format!(
                "name `{}` must be a lowercase identifier ([a-z][a-z0-9_-]*)",
                self.name
            ));
        }
        if semver::Version::parse(&self.version).is_err() {
            return invalid(format!("version `{}` is not a semver string", self.version));
        }
        let mut seen = BTreeSet::new();
        for file in &self.files {
            check_relative_path(&file.path)?;
            if !seen.insert(file.path.as_str()) {
                return invalid(format!("file `{}` listed twice", file.path));
            }
            if file.sha256.len() != 64
                || !file
                    .sha256
                    .bytes()
                    .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
            {
                return invalid(format!(
                    "sha256 of `{}` must be 64 lowercase hex characters",
                    file.path
                ));
            }
        }
        match (&self.params_schema, self.kind) {
            (Some(schema), EntryKind::Model) => {
                check_schema(schema).map_err(|e| RegistryError::Invalid(e.to_string()))
            }
            (None, EntryKind::Model) => invalid("model entries need a params_schema".into()),
            (Some(_), _) => invalid(format!("{} entries take no params_schema", self.kind)),
            (None, _) => Ok(()),
        }
    }
}

fn check_relative_path(path: &str) -> Result<(), RegistryError> {
    let bad = |why: &str| Err(RegistryError::Invalid(format!("file path `{path}` {why}")));
    if path.is_empty() || path.contains('\\') || path.contains('\0') {
        return bad("is not a plain relative path");
    }
    if path == MANIFEST_FILE {
        return bad("collides with the manifest");
    }
    for component in Path::new(path).components() {
        match component {
            Component::Normal(_) => {}
            Component::ParentDir => return bad("contains `..`"),
            _ => return bad("must be relative without `.` segments"),
        }
    }
    if path.split('/').any(|s| s.is_empty() || s == ".") {
        return bad("has empty segments");
    }
    Ok(())
}

/// Latest version of `name` of the given kind among `entries`.
pub fn latest_of<'a>(entries: &'a [RegistryEntry], kind: EntryKind, name: &str) -> Option<&'a RegistryEntry> {
    entries
        .iter()
        .filter(|e| e.kind == kind && e.name == name)
        .max_by_key(|e| semver::Version::parse(&e.version).ok())
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCheck {
    pub path: String,
    pub ok: bool,
    pub expected: String,
    pub actual: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub name: String,
    pub kind: EntryKind,
    pub version: String,
    pub ok: bool,
    pub files: Vec<FileCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedReport {
    /// Built-in entries present after seeding.
    pub entries: usize,
    /// Entries newly installed by this call.
    pub installed: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("checksum mismatch: {}", describe_failures(.0))]
    Checksum(Vec<FileCheck>),
    #[error("entry {0} already exists")]
    Conflict(EntryKey),
    #[error("no entry {0}")]
    NotFound(EntryKey),
    #[error("registry i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn describe_failures(checks: &[FileCheck]) -> String {
    checks
        .iter()
        .filter(|c| !c.ok)
        .map(|c| format!("{} ({})", c.path, c.detail))
        .collect::<Vec<_>>()
        .join(", ")
}

pub struct Registry {
    root: PathBuf,
    index: RwLock<Arc<Vec<RegistryEntry>>>,
    writer: Mutex<()>,
}

impl Registry {
    /// Opens (creating if needed) the registry rooted at `root` and runs the
    /// repair scan: on-disk manifests are authoritative for the index.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let registry = Self {
            root,
            index: RwLock::new(Arc::new(Vec::new())),
            writer: Mutex::new(()),
        };
        registry.repair()?;
        Ok(registry)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_dir(&self, key: &EntryKey) -> PathBuf {
        self.root
            .join(key.kind.as_str())
            .join(&key.name)
            .join(&key.version)
    }

    /// Rebuilds the index from the manifests on disk, dropping leftovers of
    /// interrupted writes. Returns the number of index rows changed.
    pub fn repair(&self) -> Result<usize, RegistryError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        for item in fs::read_dir(&self.root)? {
            let item = item?;
            let name = item.file_name().to_string_lossy().into_owned();
            if name.starts_with(STAGING_PREFIX) || name.starts_with(TRASH_PREFIX) {
                fs::remove_dir_all(item.path())?;
            }
        }
        let mut found = Vec::new();
        for kind in EntryKind::ALL {
            let kind_dir = self.root.join(kind.as_str());
            for name_dir in read_subdirs(&kind_dir)? {
                for version_dir in read_subdirs(&name_dir)? {
                    let manifest = version_dir.join(MANIFEST_FILE);
                    let Ok(text) = fs::read_to_string(&manifest) else {
                        log::warn!("ignoring {} without a manifest", version_dir.display());
                        continue;
                    };
                    match serde_json::from_str::<RegistryEntry>(&text) {
                        Ok(entry) if self.entry_dir(&entry.key()) == version_dir => found.push(entry),
                        _ => log::warn!("ignoring unreadable manifest {}", manifest.display()),
                    }
                }
            }
        }
        found.sort_by_key(RegistryEntry::key);

        let recorded: Vec<RegistryEntry> = fs::read(self.root.join(INDEX_FILE))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default();
        let changed = symmetric_difference(&recorded, &found);
        if changed > 0 || !self.root.join(INDEX_FILE).exists() {
            self.write_index(&found)?;
        }
        *self.index.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(found);
        Ok(changed)
    }

    fn write_index(&self, entries: &[RegistryEntry]) -> Result<(), RegistryError> {
        let bytes = serde_json::to_vec_pretty(entries).expect("entries serialize");
        write_atomic(&self.root.join(INDEX_FILE), &bytes)?;
        Ok(())
    }

    fn snapshot(&self) -> Arc<Vec<RegistryEntry>> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn publish(&self, entries: Vec<RegistryEntry>) -> Result<(), RegistryError> {
        self.write_index(&entries)?;
        *self.index.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(entries);
        Ok(())
    }

    /// Entries sorted by (kind, name, version), optionally of one kind.
    pub fn list_entries(&self, kind: Option<EntryKind>) -> Vec<RegistryEntry> {
        self.snapshot()
            .iter()
            .filter(|e| kind.is_none_or(|k| e.kind == k))
            .cloned()
            .collect()
    }

    pub fn get(&self, key: &EntryKey) -> Option<RegistryEntry> {
        self.snapshot().iter().find(|e| e.key() == *key).cloned()
    }

    /// Latest version of `name` of the given kind.
    pub fn latest(&self, kind: EntryKind, name: &str) -> Option<RegistryEntry> {
        latest_of(&self.snapshot(), kind, name).cloned()
    }

    /// Reads a payload file of an installed entry.
    pub fn read_file(&self, key: &EntryKey, path: &str) -> Result<Vec<u8>, RegistryError> {
        let entry = self
            .get(key)
            .ok_or_else(|| RegistryError::NotFound(key.clone()))?;
        if !entry.files.iter().any(|f| f.path == path) {
            return Err(RegistryError::Invalid(format!("{key} has no file `{path}`")));
        }
        Ok(fs::read(self.entry_dir(key).join(path))?)
    }

    /// Installs an entry after checking every declared checksum against the
    /// uploaded bytes.
    pub fn add_entry(
        &self,
        manifest: RegistryEntry,
        files: &BTreeMap<String, Vec<u8>>,
    ) -> Result<RegistryEntry, RegistryError> {
        manifest.check()?;
        for path in files.keys() {
            if !manifest.files.iter().any(|f| &f.path == path) {
                return Err(RegistryError::Invalid(format!(
                    "uploaded file `{path}` is not declared in the manifest"
                )));
            }
        }
        let report: Vec<FileCheck> = manifest
            .files
            .iter()
            .map(|declared| check_bytes(declared, files.get(&declared.path).map(Vec::as_slice)))
            .collect();
        if report.iter().any(|c| !c.ok) {
            return Err(RegistryError::Checksum(report));
        }

        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let key = manifest.key();
        let current = self.snapshot();
        let target = self.entry_dir(&key);
        if current.iter().any(|e| e.key() == key) || target.exists() {
            return Err(RegistryError::Conflict(key));
        }

        let staging = self.root.join(format!("{STAGING_PREFIX}{}", new_id()));
        let result = (|| -> Result<(), RegistryError> {
            fs::create_dir_all(&staging)?;
            for declared in &manifest.files {
                let dest = staging.join(&declared.path);
                if let Some(parent) = dest.parent() {
                    fs::create_dir_all(parent)?;
                }
                write_atomic(&dest, &files[&declared.path])?;
            }
            let text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
            write_atomic(&staging.join(MANIFEST_FILE), &text)?;
            fs::create_dir_all(target.parent().expect("entry dir has a parent"))?;
            fs::rename(&staging, &target)?;
            Ok(())
        })();
        if let Err(e) = result {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }

        let mut next = current.as_ref().clone();
        next.push(manifest.clone());
        next.sort_by_key(RegistryEntry::key);
        if let Err(e) = self.publish(next) {
            let _ = fs::remove_dir_all(&target);
            return Err(e);
        }
        Ok(manifest)
    }

    /// Recomputes the hash of every installed file.
    pub fn verify_entry(&self, key: &EntryKey) -> Result<VerifyReport, RegistryError> {
        let entry = self
            .get(key)
            .ok_or_else(|| RegistryError::NotFound(key.clone()))?;
        let dir = self.entry_dir(key);
        let files: Vec<FileCheck> = entry
            .files
            .iter()
            .map(|declared| {
                let bytes = fs::read(dir.join(&declared.path)).ok();
                check_bytes(declared, bytes.as_deref())
            })
            .collect();
        Ok(VerifyReport {
            name: entry.name,
            kind: entry.kind,
            version: entry.version,
            ok: files.iter().all(|f| f.ok),
            files,
        })
    }

    pub fn remove_entry(&self, key: &EntryKey) -> Result<RegistryEntry, RegistryError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.snapshot();
        let Some(pos) = current.iter().position(|e| e.key() == *key) else {
            return Err(RegistryError::NotFound(key.clone()));
        };
        let dir = self.entry_dir(key);
        let trash = self.root.join(format!("{TRASH_PREFIX}{}", new_id()));
        if dir.exists() {
            fs::rename(&dir, &trash)?;
        }
        let mut next = current.as_ref().clone();
        let removed = next.remove(pos);
        if let Err(e) = self.publish(next) {
            if trash.exists() {
                let _ = fs::rename(&trash, &dir);
            }
            return Err(e);
        }
        if trash.exists() {
            fs::remove_dir_all(&trash)?;
        }
        for parent in [dir.parent(), dir.parent().and_then(Path::parent)]
            .into_iter()
            .flatten()
        {
            // Only succeeds when empty.
            let _ = fs::remove_dir(parent);
        }
        Ok(removed)
    }

    /// Installs the bundled entries that are missing.
    pub fn seed_builtin(&self) -> Result<SeedReport, RegistryError> {
        let builtins = builtin_entries();
        let mut installed = 0;
        for (manifest, files) in &builtins {
            if self.get(&manifest.key()).is_some() {
                continue;
            }
            match self.add_entry(manifest.clone(), files) {
                Ok(_) => installed += 1,
                Err(RegistryError::Conflict(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(SeedReport {
            entries: builtins.len(),
            installed,
        })
    }
}

fn check_bytes(declared: &FileRecord, data: Option<&[u8]>) -> FileCheck {
    let (ok, actual, detail) = match data {
        None => (false, None, "file missing".to_string()),
        Some(bytes) => {
            let actual = sha256_hex(bytes);
            if actual != declared.sha256 {
                (false, Some(actual), "sha256 differs".to_string())
            } else if bytes.len() as u64 != declared.bytes {
                (
                    false,
                    Some(actual),
                    format!("size {} differs from declared {}", bytes.len(), declared.bytes),
                )
            } else {
                (true, Some(actual), "ok".to_string())
            }
        }
    };
    FileCheck {
        path: declared.path.clone(),
        ok,
        expected: declared.sha256.clone(),
        actual,
        detail,
    }
}

fn read_subdirs(dir: &Path) -> Result<Vec<PathBuf>, RegistryError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for item in fs::read_dir(dir)? {
        let item = item?;
        if item.file_type()?.is_dir() {
            out.push(item.path());
        }
    }
    out.sort();
    Ok(out)
}

fn symmetric_difference(a: &[RegistryEntry], b: &[RegistryEntry]) -> usize {
    a.iter().filter(|x| !b.contains(x)).count() + b.iter().filter(|x| !a.contains(x)).count()
}

pub const TINY_SPIKE_GPT: &str = "tiny-spike-gpt";
pub const TINY_SPIKE_GPT_FILE: &str = "tiny_spike_gpt.sd";

/// Bundled metadata-only datasets and tokenizers plus one model plugin.
pub fn builtin_entries() -> Vec<(RegistryEntry, BTreeMap<String, Vec<u8>>)> {
    let stub = |kind, name: &str, description: &str| {
        (
            RegistryEntry {
                name: name.to_string(),
                kind,
                version: "1.0.0".to_string(),
                description: description.to_string(),
                files: Vec::new(),
                params_schema: None,
            },
            BTreeMap::new(),
        )
    };
    let source = crate::fixtures::TINY_SPIKE_GPT.as_bytes().to_vec();
    vec![
        stub(EntryKind::Dataset, "wikitext", "WikiText language-modeling corpus"),
        stub(EntryKind::Dataset, "wikipedia", "Wikipedia article dump"),
        stub(EntryKind::Dataset, "ultrachat", "UltraChat multi-turn dialogue corpus"),
        stub(EntryKind::Dataset, "fineweb", "FineWeb filtered web crawl"),
        stub(EntryKind::Tokenizer, "gpt2-small", "GPT-2 small byte-level BPE"),
        stub(EntryKind::Tokenizer, "gpt2-medium", "GPT-2 medium byte-level BPE"),
        stub(EntryKind::Tokenizer, "gpt2-large", "GPT-2 large byte-level BPE"),
        stub(EntryKind::Tokenizer, "bert-base-cased", "BERT base cased WordPiece"),
        stub(EntryKind::Tokenizer, "bert-base-chinese", "BERT base Chinese WordPiece"),
        (
            RegistryEntry {
                name: TINY_SPIKE_GPT.to_string(),
                kind: EntryKind::Model,
                version: "1.0.0".to_string(),
                description: "Two-block spiking transformer for desk-scale runs".to_string(),
                files: vec![FileRecord::of(TINY_SPIKE_GPT_FILE, &source)],
                params_schema: Some(crate::forge::tiny_spike_gpt_schema()),
            },
            BTreeMap::from([(TINY_SPIKE_GPT_FILE.to_string(), source)]),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const EMPTY_SHA: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

    fn empty_manifest() -> RegistryEntry {
        RegistryEntry {
            name: "blank".into(),
            kind: EntryKind::Dataset,
            version: "0.1.0".into(),
            description: String::new(),
            files: vec![FileRecord {
                path: "data/empty.txt".into(),
                sha256: EMPTY_SHA.into(),
                bytes: 0,
            }],
            params_schema: None,
        }
    }

    fn empty_files() -> BTreeMap<String, Vec<u8>> {
        BTreeMap::from([("data/empty.txt".to_string(), Vec::new())])
    }

    #[test]
    fn empty_input_digest() {
        assert_eq!(sha256_hex(b""), EMPTY_SHA);
    }

    #[test]
    fn seed_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        assert_eq!(reg.seed_builtin().unwrap(), SeedReport { entries: 10, installed: 10 });
        assert_eq!(reg.seed_builtin().unwrap(), SeedReport { entries: 10, installed: 0 });
        assert_eq!(reg.list_entries(None).len(), 10);
        let names = |k| -> Vec<String> { reg.list_entries(Some(k)).into_iter().map(|e| e.name).collect() };
        assert_eq!(names(EntryKind::Dataset), ["fineweb", "ultrachat", "wikipedia", "wikitext"]);
        assert_eq!(names(EntryKind::Tokenizer).len(), 5);
        assert_eq!(names(EntryKind::Model), [TINY_SPIKE_GPT]);
        let reopened = Registry::open(dir.path()).unwrap();
        assert_eq!(reopened.list_entries(None), reg.list_entries(None));
    }

    #[test]
    fn add_verify_remove() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        let entry = reg.add_entry(empty_manifest(), &empty_files()).unwrap();
        assert!(dir.path().join("dataset/blank/0.1.0/manifest.json").exists());
        assert!(reg.verify_entry(&entry.key()).unwrap().ok);
        assert!(matches!(
            reg.add_entry(empty_manifest(), &empty_files()),
            Err(RegistryError::Conflict(_))
        ));
        reg.remove_entry(&entry.key()).unwrap();
        assert!(reg.list_entries(None).is_empty());
        assert!(matches!(reg.remove_entry(&entry.key()), Err(RegistryError::NotFound(_))));
        reg.add_entry(empty_manifest(), &empty_files()).unwrap();
    }

    #[test]
    fn checksum_mismatch_reports_file() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        let mut m = empty_manifest();
        m.files[0].sha256.replace_range(0..1, "f");
        match reg.add_entry(m, &empty_files()) {
            Err(RegistryError::Checksum(report)) => {
                assert_eq!(report.len(), 1);
                assert!(!report[0].ok);
                assert_eq!(report[0].actual.as_deref(), Some(EMPTY_SHA));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_invariants() {
        let mut m = empty_manifest();
        m.files[0].path = "../escape".into();
        assert!(m.check().is_err());
        let mut m = empty_manifest();
        m.files[0].path = "/abs".into();
        assert!(m.check().is_err());
        let mut m = empty_manifest();
        m.files[0].sha256 = EMPTY_SHA.to_uppercase();
        assert!(m.check().is_err());
        let mut m = empty_manifest();
        m.version = "1.0".into();
        assert!(m.check().is_err());
        let mut m = empty_manifest();
        m.name = "Blank".into();
        assert!(m.check().is_err());
        let mut m = empty_manifest();
        m.kind = EntryKind::Model;
        assert!(m.check().is_err());
    }

    #[test]
    fn repair_scan_restores_index() {
        let dir = tempfile::tempdir().unwrap();
        {
            let reg = Registry::open(dir.path()).unwrap();
            reg.seed_builtin().unwrap();
        }
        fs::write(dir.path().join(INDEX_FILE), "[]").unwrap();
        fs::create_dir_all(dir.path().join(".staging-x/leftover")).unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        assert_eq!(reg.list_entries(None).len(), 10);
        assert!(!dir.path().join(".staging-x").exists());
        let on_disk: Vec<RegistryEntry> =
            serde_json::from_slice(&fs::read(dir.path().join(INDEX_FILE)).unwrap()).unwrap();
        assert_eq!(on_disk.len(), 10);
    }

    #[test]
    fn flipped_byte_fails_verification() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        reg.seed_builtin().unwrap();
        let key = reg.latest(EntryKind::Model, TINY_SPIKE_GPT).unwrap().key();
        let path = reg.entry_dir(&key).join(TINY_SPIKE_GPT_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes[10] ^= 0x01;
        fs::write(&path, bytes).unwrap();
        let report = reg.verify_entry(&key).unwrap();
        assert!(!report.ok);
        assert_eq!(report.files[0].detail, "sha256 differs");
    }
}
