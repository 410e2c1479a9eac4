use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use crate::fsutil::write_atomic;
use super::{commit, evaluate, line_count, splice, CodePatch, PatchError, PatchRecord, ValidationReport};
use crate::extract::{extract_static, ModuleTree};
use crate::spikedef::{parse, SourceFile, Span};

/// The editable copy of one model: current source plus its patch history.
///
/// Applies are serialized per workspace. Readers take an `Arc` snapshot of
/// the tree and never observe a partially applied patch.
#[derive(Debug)]
pub struct ModelWorkspace {
    name: String,
    root_class: Option<String>,
    source_path: PathBuf,
    history_path: PathBuf,
    writer: Mutex<()>,
    current: RwLock<Arc<ModuleTree>>,
}

impl ModelWorkspace {
    /// Opens `<dir>/source.sd` with history in `<dir>/patches.ndjson`,
    /// seeding the source from `initial` when the directory is new.
    pub fn open_dir(
        dir: impl AsRef<Path>,
        name: impl Into<String>,
        root_class: Option<String>,
        initial: impl FnOnce() -> Result<String, PatchError>,
    ) -> Result<Self, PatchError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let source_path = dir.join("source.sd");
        if !source_path.exists() {
            write_atomic(&source_path, initial()?.as_bytes())?;
        }
        Self::open(name.into(), root_class, source_path, dir.join("patches.ndjson"))
    }

    /// Edits `path` in place; history goes to `<path>.patches.ndjson`.
    pub fn open_file(path: impl AsRef<Path>, root_class: Option<String>) -> Result<Self, PatchError> {
        let path = path.as_ref().to_path_buf();
        let mut history = path.clone().into_os_string();
        history.push(".patches.ndjson");
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::open(name, root_class, path, PathBuf::from(history))
    }

    fn open(
        name: String,
        root_class: Option<String>,
        source_path: PathBuf,
        history_path: PathBuf,
    ) -> Result<Self, PatchError> {
        let text = fs::read_to_string(&source_path)?;
        let history = read_history(&history_path)?;
        let file = SourceFile::new(&source_path, text)?;
        let mut tree = extract_static(&parse(&file)?, root_class.as_deref())?;
        tree.version = 1 + history.len() as u64;
        Ok(Self {
            name,
            root_class,
            source_path,
            history_path,
            writer: Mutex::new(()),
            current: RwLock::new(Arc::new(tree)),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source_path(&self) -> &Path {
        &self.source_path
    }

    pub fn tree(&self) -> Arc<ModuleTree> {
        self.current
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    pub fn history(&self) -> Result<Vec<PatchRecord>, PatchError> {
        read_history(&self.history_path)
    }

    pub fn validate(&self, patch: &CodePatch) -> Result<ValidationReport, PatchError> {
        super::validate_patch(&self.tree(), patch)
    }

    /// Validates and commits `patch`. With `base_version`, the patch is
    /// rejected with [`PatchError::Conflict`] if another patch landed first.
    pub fn apply(
        &self,
        patch: &CodePatch,
        base_version: Option<u64>,
    ) -> Result<(Arc<ModuleTree>, PatchRecord), PatchError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.tree();
        if let Some(expected) = base_version {
            if expected != current.version {
                return Err(PatchError::Conflict {
                    expected,
                    actual: current.version,
                });
            }
        }
        let eval = evaluate(&current, patch)?;
        let candidate = eval.candidate_text.clone();
        let (tree, record) = commit(&current, patch, eval)?;
        let mut tree = tree;
        if let Some(source) = tree.source.as_mut() {
            // re-home the index on the workspace path
            let file = SourceFile::new(&self.source_path, candidate.clone())?;
            source.file = Arc::new(file);
        }

        let history_len = fs::metadata(&self.history_path).map(|m| m.len()).unwrap_or(0);
        append_record(&self.history_path, &record)?;
        if let Err(e) = write_atomic(&self.source_path, candidate.as_bytes()) {
            // keep history and source in step
            if let Ok(f) = OpenOptions::new().write(true).open(&self.history_path) {
                let _ = f.set_len(history_len);
            }
            return Err(e.into());
        }

        let tree = Arc::new(tree);
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = tree.clone();
        Ok((tree, record))
    }

    /// Whether `root_class` pins a class other than the last one in the file.
    pub fn root_class(&self) -> Option<&str> {
        self.root_class.as_deref()
    }
}

fn read_history(path: &Path) -> Result<Vec<PatchRecord>, PatchError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PatchRecord = serde_json::from_str(&line)
            .map_err(|e| PatchError::Corrupt(format!("line {}: {e}", i + 1)))?;
        records.push(record);
    }
    Ok(records)
}

fn append_record(path: &Path, record: &PatchRecord) -> Result<(), PatchError> {
    let mut line = serde_json::to_string(record)
        .map_err(|e| PatchError::Corrupt(e.to_string()))?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

/// Undoes `records` (oldest first) from `current`, newest first.
pub fn replay_reverse(current: &str, records: &[PatchRecord]) -> Result<String, PatchError> {
    let mut text = current.to_string();
    for record in records.iter().rev() {
        let file = SourceFile::new("<replay>", text)?;
        let span = Span::new(
            record.span.start_line,
            record.span.start_line + line_count(&record.patch.new_text) - 1,
        );
        text = splice(&file, span, &record.old_text)?;
    }
    Ok(text)
}

/// Re-applies `records` (oldest first) to `original`.
pub fn replay_forward(original: &str, records: &[PatchRecord]) -> Result<String, PatchError> {
    let mut text = original.to_string();
    for record in records {
        let file = SourceFile::new("<replay>", text)?;
        text = splice(&file, record.span, &record.patch.new_text)?;
    }
    Ok(text)
}
