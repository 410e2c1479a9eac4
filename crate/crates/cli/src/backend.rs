//! Local and remote execution. Both produce the JSON document the HTTP API
//! returns, so `--format json` output is the same on either side.

use std::cell::OnceCell;
use std::io::Read;
use std::path::PathBuf;

use serde::Serialize;

use darkit_api::ErrorDocument;
use darkit_core::workbench::{Workbench, WorkbenchError};

use crate::CliError;

pub enum Body {
    None,
    Json(String),
}

impl Body {
    pub fn json<T: Serialize>(value: &T) -> Result<Self, CliError> {
        Ok(Body::Json(to_json(value)?))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string(value).map_err(|e| CliError::Internal(e.to_string()))
}

pub enum Backend {
    Local {
        dir: PathBuf,
        wb: OnceCell<Workbench>,
    },
    Remote {
        base: String,
        agent: ureq::Agent,
    },
}

impl Backend {
    pub fn local(dir: PathBuf) -> Self {
        Backend::Local {
            dir,
            wb: OnceCell::new(),
        }
    }

    pub fn remote(server: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Backend::Remote {
            base: server.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, Backend::Remote { .. })
    }

    pub fn workbench(&self) -> Result<&Workbench, CliError> {
        match self {
            Backend::Local { dir, wb } => {
                if let Some(wb) = wb.get() {
                    return Ok(wb);
                }
                let opened = Workbench::open(dir.clone()).map_err(CliError::from)?;
                Ok(wb.get_or_init(|| opened))
            }
            Backend::Remote { .. } => Err(CliError::Internal("no local workbench in remote mode".into())),
        }
    }

    /// Runs `local` against the data directory, or sends the request to the
    /// server, and returns the response document.
    pub fn call<T, F>(&self, local: F, method: &str, path: &str, body: Body) -> Result<String, CliError>
    where
        T: Serialize,
        F: FnOnce(&Workbench) -> Result<T, WorkbenchError>,
    {
        match self {
            Backend::Local { .. } => to_json(&local(self.workbench()?)?),
            Backend::Remote { .. } => self.request(method, path, body),
        }
    }

    /// Like [`Backend::call`] for stateless POST operations, which run
    /// locally without opening the data directory.
    pub fn call_free<T, F>(&self, local: F, path: &str, body: Body) -> Result<String, CliError>
    where
        T: Serialize,
        F: FnOnce() -> Result<T, WorkbenchError>,
    {
        match self {
            Backend::Local { .. } => to_json(&local()?),
            Backend::Remote { .. } => self.request("POST", path, body),
        }
    }

    /// Like [`Backend::call`] for endpoints whose body is raw text.
    pub fn call_text<F>(&self, local: F, path: &str) -> Result<String, CliError>
    where
        F: FnOnce(&Workbench) -> Result<String, WorkbenchError>,
    {
        match self {
            Backend::Local { .. } => Ok(local(self.workbench()?)?),
            Backend::Remote { .. } => self.request("GET", path, Body::None),
        }
    }

    pub fn request(&self, method: &str, path: &str, body: Body) -> Result<String, CliError> {
        let mut response = self.send(method, path, body)?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| CliError::Remote(e.to_string()))?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(remote_error(status, &text))
        }
    }

    /// Opens a streaming GET and returns the response body reader.
    pub fn stream(&self, path: &str) -> Result<impl Read + use<>, CliError> {
        let response = self.send("GET", path, Body::None)?;
        let status = response.status().as_u16();
        if (200..300).contains(&status) {
            Ok(response.into_body().into_reader())
        } else {
            let text = response.into_body().read_to_string().unwrap_or_default();
            Err(remote_error(status, &text))
        }
    }

    fn send(&self, method: &str, path: &str, body: Body) -> Result<ureq::http::Response<ureq::Body>, CliError> {
        let Backend::Remote { base, agent } = self else {
            return Err(CliError::Internal("not in remote mode".into()));
        };
        let url = format!("{base}{path}");
        let result = match (method, body) {
            ("GET", _) => agent.get(&url).call(),
            ("DELETE", _) => agent.delete(&url).call(),
            (_, Body::None) => agent.post(&url).send_empty(),
            (_, Body::Json(text)) => agent.post(&url).header("content-type", "application/json").send(text),
        };
        result.map_err(|e| CliError::Remote(format!("{url}: {e}")))
    }
}

fn remote_error(status: u16, text: &str) -> CliError {
    match serde_json::from_str::<ErrorDocument>(text) {
        Ok(doc) => CliError::Domain {
            code: doc.error.code,
            message: doc.error.message,
        },
        Err(_) => CliError::Remote(format!("server answered {status}: {text}")),
    }
}

/// Percent-encodes one path segment or query value.
pub fn encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}
