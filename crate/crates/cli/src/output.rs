//! Run context, digests, the run manifest and the exit-code contract.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use multibubble::io::to_canonical_json;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::GlobalArgs;

#[derive(Debug)]
pub struct Failure {
    pub code: String,
    pub message: String,
}

impl From<multibubble::Error> for Failure {
    fn from(e: multibubble::Error) -> Self {
        Failure {
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: "io_error".into(),
            message: e.to_string(),
        }
    }
}

pub fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: "validation_error".into(),
        message: message.into(),
    }
}

/// What a command hands back: the deterministic report body and its verdict.
pub struct Report {
    pub body: Map<String, Value>,
    pub passed: bool,
    /// Replaces the report on stdout (used to pipe configurations).
    pub stdout: Option<String>,
}

impl Report {
    pub fn new(passed: bool) -> Self {
        Report {
            body: Map::new(),
            passed,
            stdout: None,
        }
    }

    pub fn set<T: Serialize>(&mut self, key: &str, value: T) {
        self.body.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }
}

#[derive(Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub input_digest: String,
    pub options: Value,
    pub wall_time: f64,
    pub artifacts: Vec<String>,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub struct Context {
    pub global: GlobalArgs,
    command: String,
    options: Value,
    started: Instant,
    digest: Option<String>,
    artifacts: Vec<PathBuf>,
    default_dir: Option<PathBuf>,
}

impl Context {
    pub fn new(global: GlobalArgs, command: String, options: Value) -> Self {
        Context {
            global,
            command,
            options,
            started: Instant::now(),
            digest: None,
            artifacts: Vec::new(),
            default_dir: None,
        }
    }

    /// Records the digest of the canonicalized input.
    pub fn set_input(&mut self, canonical: &str) {
        self.digest = Some(sha256_hex(canonical));
    }

    /// The input digest; commands without an input file hash their options,
    /// minus the flags that only choose where output goes.
    pub fn digest(&mut self) -> String {
        if self.digest.is_none() {
            let mut inputs = self.options.clone();
            strip_output_flags(&mut inputs);
            let text = format!("{}\n{}", self.command, to_canonical_json(&inputs));
            self.digest = Some(sha256_hex(&text));
        }
        self.digest.clone().unwrap_or_default()
    }

    /// Scenarios always write artifacts; this directory applies when
    /// `--out-dir` is absent.
    pub fn default_out_dir(&mut self, dir: impl Into<PathBuf>) {
        self.default_dir = Some(dir.into());
    }

    fn out_dir(&self) -> Option<&Path> {
        self.global
            .out_dir
            .as_deref()
            .or(self.default_dir.as_deref())
    }

    /// An explicit path wins; otherwise `name` inside the output directory.
    pub fn artifact_path(&self, explicit: Option<&Path>, name: &str) -> Option<PathBuf> {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| self.out_dir().map(|d| d.join(name)))
    }

    pub fn dimension(&self, fixed: Option<u32>) -> Result<multibubble::Dimension, Failure> {
        let n = match (self.global.dim, fixed) {
            (Some(a), Some(b)) if a != b => {
                return Err(invalid(format!(
                    "--dim {a} conflicts with the configuration's N = {b}"
                )))
            }
            (_, Some(b)) => b,
            (Some(a), None) => a,
            (None, None) => 7,
        };
        Ok(multibubble::io::dimension(n as i64)?)
    }

    /// Opens an artifact for writing, creating parent directories.
    pub fn create(&mut self, path: &Path) -> Result<BufWriter<fs::File>, Failure> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        self.artifacts.push(path.to_path_buf());
        Ok(BufWriter::new(fs::File::create(path)?))
    }

    pub fn write_text(&mut self, path: &Path, text: &str) -> Result<(), Failure> {
        let mut f = self.create(path)?;
        f.write_all(text.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    fn emit(&mut self, mut report: Report) -> Result<bool, Failure> {
        let digest = self.digest();
        report
            .body
            .insert("command".into(), Value::String(self.command.clone()));
        report
            .body
            .insert("input_digest".into(), Value::String(digest.clone()));
        report
            .body
            .insert("passed".into(), Value::Bool(report.passed));
        let text = to_canonical_json(&report.body);

        let manifest_path = match self.out_dir() {
            Some(dir) => {
                let dir = dir.to_path_buf();
                self.write_text(&dir.join("report.json"), &text)?;
                Some(dir.join("manifest.json"))
            }
            None => self
                .artifacts
                .first()
                .map(|p| p.with_extension("manifest.json")),
        };
        if let Some(path) = manifest_path {
            let manifest = RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").into(),
                command: self.command.clone(),
                input_digest: digest,
                options: self.options.clone(),
                wall_time: self.started.elapsed().as_secs_f64(),
                artifacts: self
                    .artifacts
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect(),
            };
            let mtext = to_canonical_json(&manifest);
            let mut f = BufWriter::new(fs::File::create(&path)?);
            f.write_all(mtext.as_bytes())?;
            f.flush()?;
        }

        let mut out = std::io::stdout().lock();
        let written = if let Some(s) = &report.stdout {
            out.write_all(s.as_bytes())
        } else if self.global.json {
            out.write_all(text.as_bytes())
        } else {
            write_summary(&mut out, &report.body)
        };
        match written.and_then(|_| out.flush()) {
            // A closed pipe (e.g. `| head`) does not change the verdict.
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
            _ => {}
        }
        Ok(report.passed)
    }

    pub fn finish(mut self, result: Result<Report, Failure>) -> ExitCode {
        let outcome = result.and_then(|r| self.emit(r));
        match outcome {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(2),
            Err(f) => {
                let body = serde_json::json!({"error": f.code, "message": f.message, "command": self.command});
                eprint!("{}", to_canonical_json(&body));
                ExitCode::from(1)
            }
        }
    }
}

fn strip_output_flags(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for key in ["out", "out_dir", "json"] {
                map.remove(key);
            }
            map.values_mut().for_each(strip_output_flags);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_output_flags),
        _ => {}
    }
}

fn short(v: &Value) -> String {
    match v {
        Value::Array(items)
            if items.len() <= 8 && items.iter().all(|x| !x.is_array() && !x.is_object()) =>
        {
            let parts: Vec<String> = items.iter().map(short).collect();
            format!("[{}]", parts.join(", "))
        }
        Value::Array(items) => format!("[{} entries]", items.len()),
        Value::Object(map) => format!("{{{} fields}}", map.len()),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn write_summary(out: &mut impl Write, body: &Map<String, Value>) -> std::io::Result<()> {
    let mut keys: Vec<&String> = body.keys().collect();
    keys.sort();
    for k in keys {
        match &body[k] {
            Value::Object(inner) if inner.len() <= 12 => {
                writeln!(out, "{k}:")?;
                let mut sub: Vec<&String> = inner.keys().collect();
                sub.sort();
                for s in sub {
                    writeln!(out, "  {s}: {}", short(&inner[s]))?;
                }
            }
            v => writeln!(out, "{k}: {}", short(v))?,
        }
    }
    Ok(())
}
