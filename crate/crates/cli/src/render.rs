//! Output of each command: the response document under `--format json`,
//! a human-readable rendering of the same document otherwise.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;

use darkit_core::extract::{CodeSegment, DisplayTree};
use darkit_core::patch::{PatchRecord, ValidationReport};
use darkit_core::registry::{RegistryEntry, VerifyReport};
use darkit_core::tracker::{Chart, MetricSeries, RunDetail, RunRecord};
use darkit_core::workbench::{describe_report, CommandGrid, CompiledSource, FlowReport, PatchOutcome, RenderedCommand, ShapesReport};

use crate::args::Format;
use crate::CliError;

pub fn decode<T: DeserializeOwned>(doc: &str) -> Result<T, CliError> {
    serde_json::from_str(doc).map_err(|e| CliError::Internal(format!("unexpected response document: {e}")))
}

pub fn json(out: &mut dyn Write, doc: &str) -> Result<(), CliError> {
    writeln!(out, "{doc}")?;
    Ok(())
}

pub fn raw(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        writeln!(out)?;
    }
    Ok(())
}

/// Writes `doc` as-is under json, or its text rendering.
fn emit<T: DeserializeOwned>(
    out: &mut dyn Write,
    format: Format,
    doc: &str,
    text: impl FnOnce(&T, &mut dyn Write) -> std::io::Result<()>,
) -> Result<T, CliError> {
    let value: T = decode(doc)?;
    match format {
        Format::Json => json(out, doc)?,
        Format::Text => text(&value, out)?,
    }
    Ok(value)
}

pub fn tree(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<DisplayTree>(out, format, doc, |t, out| {
        writeln!(out, "{} (version {}, {} modules)", t.model_name, t.version, t.nodes.len())?;
        for n in t.nodes.iter().skip(1) {
            writeln!(out, "{}{} : {}  [{}]", "  ".repeat(n.depth), n.label, n.kind, n.id)?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn code(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<CodeSegment>(out, format, doc, |c, out| write!(out, "{}", c.text))?;
    Ok(())
}

pub fn validation(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    let report = emit::<ValidationReport>(out, format, doc, |r, out| {
        if r.ok {
            writeln!(out, "ok: patch is valid against version {}", r.base_version)
        } else {
            writeln!(out, "{}", describe_report(r))
        }
    })?;
    if report.ok {
        Ok(())
    } else {
        Err(CliError::Failed("patch rejected".into()))
    }
}

pub fn patch_outcome(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<PatchOutcome>(out, format, doc, |o, out| {
        let r = &o.record;
        writeln!(
            out,
            "applied {} to `{}`: version {} -> {}",
            r.patch_id, r.patch.module_id, r.old_version, r.new_version
        )
    })?;
    Ok(())
}

pub fn history(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<Vec<PatchRecord>>(out, format, doc, |records, out| {
        for r in records {
            writeln!(
                out,
                "{}  v{} -> v{}  {}  {}  {}",
                r.patch_id, r.old_version, r.new_version, r.patch.module_id, r.patch.author, r.patch.note
            )?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn flow_report(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    let report = emit::<FlowReport>(out, format, doc, |r, out| {
        if r.ok {
            return writeln!(out, "ok");
        }
        for v in &r.violations {
            let code = serde_json::to_value(v.code).ok().and_then(|c| c.as_str().map(str::to_string)).unwrap_or_default();
            let at = match (&v.node, &v.edge) {
                (Some(n), _) => format!(" (node {n})"),
                (None, Some(e)) => format!(" (edge {e})"),
                _ => String::new(),
            };
            writeln!(out, "{code}: {}{at}", v.message)?;
        }
        Ok(())
    })?;
    if report.ok {
        Ok(())
    } else {
        Err(CliError::Failed(format!("flow has {} violation(s)", report.violations.len())))
    }
}

pub fn shapes(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<ShapesReport>(out, format, doc, |r, out| {
        for (node, shape) in &r.shapes {
            writeln!(out, "{node}: {shape}")?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn compiled(out: &mut dyn Write, format: Format, doc: &str, target: Option<&Path>) -> Result<(), CliError> {
    let compiled: CompiledSource = decode(doc)?;
    if let Some(path) = target {
        fs::write(path, &compiled.source).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    match (format, target) {
        (Format::Json, _) => json(out, doc),
        (Format::Text, Some(path)) => {
            writeln!(out, "wrote {} ({})", path.display(), compiled.name)?;
            Ok(())
        }
        (Format::Text, None) => {
            write!(out, "{}", compiled.source)?;
            Ok(())
        }
    }
}

pub fn rendered(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<RenderedCommand>(out, format, doc, |r, out| writeln!(out, "{}", r.command))?;
    Ok(())
}

pub fn grid(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<CommandGrid>(out, format, doc, |g, out| {
        for c in &g.commands {
            writeln!(out, "{c}")?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Text form is the bare run id, for use in scripts.
pub fn run_created(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<RunRecord>(out, format, doc, |r, out| writeln!(out, "{}", r.run_id))?;
    Ok(())
}

fn run_line(r: &RunRecord) -> String {
    format!("{}  {:<9}  {}  started {}", r.run_id, r.status.as_str(), r.model, r.started_at)
}

pub fn run_list(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<Vec<RunRecord>>(out, format, doc, |runs, out| {
        for r in runs {
            writeln!(out, "{}", run_line(r))?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn run_detail(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<RunDetail>(out, format, doc, |d, out| {
        writeln!(out, "{}", run_line(&d.record))?;
        if let Some(end) = d.record.ended_at {
            writeln!(out, "ended {end}")?;
        }
        writeln!(out, "events: {}", d.events)?;
        for (name, n) in &d.metrics {
            writeln!(out, "metric {name}: {n} points")?;
        }
        if !d.record.config.is_empty() {
            writeln!(out, "config: {}", serde_json::Value::Object(d.record.config.clone()))?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn series(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<MetricSeries>(out, format, doc, |s, out| {
        writeln!(out, "step\t{}", s.name)?;
        for p in &s.points {
            writeln!(out, "{}\t{}", p.step, p.value)?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn chart(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<Chart>(out, format, doc, |c, out| {
        writeln!(out, "metric {}", c.metric)?;
        for s in &c.runs {
            match &s.warning {
                Some(w) => writeln!(out, "{}: {} points (warning: {w})", s.id, s.points.len())?,
                None => writeln!(out, "{}: {} points", s.id, s.points.len())?,
            }
            if let (Some(first), Some(last)) = (s.points.first(), s.points.last()) {
                writeln!(out, "  step {} = {}  ..  step {} = {}", first.step, first.value, last.step, last.value)?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

pub fn registry_list(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    emit::<Vec<RegistryEntry>>(out, format, doc, |entries, out| {
        for e in entries {
            writeln!(out, "{:<9}  {:<18}  {:<7}  {}", e.kind.as_str(), e.name, e.version, e.description)?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn entry_changed(out: &mut dyn Write, format: Format, doc: &str, verb: &str) -> Result<(), CliError> {
    emit::<RegistryEntry>(out, format, doc, |e, out| writeln!(out, "{verb} {}", e.key()))?;
    Ok(())
}

pub fn verify(out: &mut dyn Write, format: Format, doc: &str) -> Result<(), CliError> {
    let report = emit::<VerifyReport>(out, format, doc, |r, out| {
        for f in &r.files {
            let state = if f.ok { "ok" } else { "FAILED" };
            writeln!(out, "{state:<6}  {}  {}", f.path, f.detail)?;
        }
        writeln!(out, "{} {}@{}: {}", r.kind, r.name, r.version, if r.ok { "ok" } else { "corrupt" })
    })?;
    if report.ok {
        Ok(())
    } else {
        Err(CliError::Failed(format!("entry {}@{} failed verification", report.name, report.version)))
    }
}
