#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use cnocs_server::{router, AppState};
use serde_json::Value;

pub fn repo_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_json(rel: &str) -> Value {
    let text = std::fs::read_to_string(repo_fixtures().join(rel)).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub struct TestServer {
    pub base: String,
    pub dir: tempfile::TempDir,
    pub client: reqwest::Client,
}

impl TestServer {
    pub async fn start() -> Self {
        Self::start_with(|_| {}).await
    }

    /// `setup` may populate the data directory before the server opens it.
    pub async fn start_with(setup: impl FnOnce(&Path)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        setup(dir.path());
        let state = AppState::open(dir.path().to_path_buf(), 2).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr: SocketAddr = listener.local_addr().unwrap();
        tokio::spawn(async move {
            axum::serve(listener, router(state)).await.unwrap();
        });
        Self {
            base: format!("http://{addr}"),
            dir,
            client: reqwest::Client::new(),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn post(&self, path: &str, body: &Value) -> reqwest::Response {
        self.client.post(self.url(path)).json(body).send().await.unwrap()
    }

    pub async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(self.url(path)).send().await.unwrap()
    }

    /// Submits a manifest and polls until the run settles.
    pub async fn run_sample(&self, manifest: &Value) -> Value {
        let resp = self.post("/v1/sample", manifest).await;
        assert_eq!(resp.status(), 202, "{}", resp.text().await.unwrap());
        let id = resp.json::<Value>().await.unwrap()["id"].as_str().unwrap().to_string();
        for _ in 0..2000 {
            let view: Value = self.get(&format!("/v1/sample/{id}")).await.json().await.unwrap();
            match view["status"].as_str().unwrap() {
                "done" | "failed" => return view,
                _ => tokio::time::sleep(Duration::from_millis(10)).await,
            }
        }
        panic!("sample run {id} did not finish");
    }

    pub async fn bytes(&self, path: &str) -> Vec<u8> {
        let resp = self.get(path).await;
        assert_eq!(resp.status(), 200);
        resp.bytes().await.unwrap().to_vec()
    }
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnocs"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Width, height and raw 8-bit samples of a PNG.
pub fn png_pixels(bytes: &[u8]) -> (u32, u32, Vec<u8>) {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    buf.truncate(info.buffer_size());
    (info.width, info.height, buf)
}
