#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use darkit_core::workbench::Workbench;

pub const BIN: &str = env!("CARGO_BIN_EXE_darkit");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl From<Output> for Run {
    fn from(o: Output) -> Self {
        Self {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

/// Runs the binary with `args` against `data_dir`.
pub fn darkit(data_dir: &Path, args: &[&str]) -> Run {
    Command::new(BIN)
        .arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .env_remove("DARKIT_DATA_DIR")
        .output()
        .expect("spawn darkit")
        .into()
}

/// Runs a whole command line, as a shell would split it.
pub fn darkit_line(data_dir: &Path, line: &str) -> Run {
    let words = shlex_split(line);
    assert_eq!(words.first().map(String::as_str), Some("darkit"), "{line}");
    let rest: Vec<&str> = words[1..].iter().map(String::as_str).collect();
    darkit(data_dir, &rest)
}

fn shlex_split(line: &str) -> Vec<String> {
    shlex::split(line).expect("balanced quotes")
}

pub fn ok(run: Run) -> String {
    assert_eq!(run.code, 0, "stdout: {}\nstderr: {}", run.stdout, run.stderr);
    run.stdout
}

/// An API server on an ephemeral port, stopped on drop.
pub struct Server {
    pub url: String,
    pub wb: Arc<Workbench>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    pub fn start(data_dir: &Path) -> Self {
        let wb = Arc::new(Workbench::open(data_dir).unwrap());
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let served = wb.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                ready_tx.send(listener.local_addr().unwrap()).unwrap();
                darkit_api::serve_listener(listener, served, async {
                    let _ = stopped.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = ready_rx.recv().unwrap();
        Self {
            url: format!("http://{addr}"),
            wb,
            stop: Some(stop),
            thread: Some(thread),
        }
    }

    pub fn darkit(&self, args: &[&str]) -> Run {
        Command::new(BIN)
            .arg("--server")
            .arg(&self.url)
            .args(args)
            .output()
            .expect("spawn darkit")
            .into()
    }

    /// Raw response body of a GET.
    pub fn get(&self, path: &str) -> String {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        agent
            .get(&format!("{}{path}", self.url))
            .call()
            .unwrap()
            .body_mut()
            .read_to_string()
            .unwrap()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
