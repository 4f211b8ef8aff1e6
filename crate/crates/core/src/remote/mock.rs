//! Minimal local HTTP server that speaks just enough of the chat-completions
//! protocol for tests and examples.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct MockRequest {
    pub method: String,
    pub path: String,
    /// Header names lower-cased.
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl MockRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        let name = name.to_ascii_lowercase();
        self.headers
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> Option<Value> {
        serde_json::from_str(&self.body).ok()
    }

    /// Content of the first message with the given role.
    pub fn message(&self, role: &str) -> Option<String> {
        self.json()?
            .get("messages")?
            .as_array()?
            .iter()
            .find(|m| m.get("role").and_then(Value::as_str) == Some(role))?
            .get("content")?
            .as_str()
            .map(str::to_string)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockResponse {
    pub status: u16,
    pub body: String,
}

impl MockResponse {
    pub fn chat(content: &str) -> Self {
        MockResponse {
            status: 200,
            body: json!({
                "id": "mock",
                "object": "chat.completion",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
                "usage": {"prompt_tokens": 1, "completion_tokens": 1, "total_tokens": 2},
            })
            .to_string(),
        }
    }

    pub fn status(status: u16) -> Self {
        MockResponse {
            status,
            body: json!({"error": {"message": "mock"}}).to_string(),
        }
    }

    pub fn raw(status: u16, body: &str) -> Self {
        MockResponse {
            status,
            body: body.into(),
        }
    }
}

type Responder = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

pub struct MockEndpoint {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<MockRequest>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockEndpoint {
    pub fn start(
        responder: impl Fn(&MockRequest) -> MockResponse + Send + Sync + 'static,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let responder: Arc<Responder> = Arc::new(responder);
        let (reqs, stop2) = (requests.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (reqs, responder) = (reqs.clone(), responder.clone());
                std::thread::spawn(move || {
                    let _ = serve(stream, &reqs, &*responder);
                });
            }
        });
        Ok(MockEndpoint {
            addr,
            requests,
            stop,
            handle: Some(handle),
        })
    }

    /// Replies with the user message content.
    pub fn echo() -> std::io::Result<Self> {
        Self::start(|req| MockResponse::chat(&req.message("user").unwrap_or_default()))
    }

    /// Serves the scripted responses in order, repeating the last one.
    pub fn scripted(script: Vec<MockResponse>) -> std::io::Result<Self> {
        assert!(!script.is_empty());
        let next = Mutex::new(0usize);
        Self::start(move |_| {
            let mut i = next.lock().unwrap();
            let r = script[(*i).min(script.len() - 1)].clone();
            *i += 1;
            r
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for MockEndpoint {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(
    stream: TcpStream,
    log: &Mutex<Vec<MockRequest>>,
    responder: &Responder,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();

    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k == "content-length")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    let req = MockRequest {
        method,
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    };

    let resp = responder(&req);
    log.lock().unwrap().push(req);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        resp.status,
        resp.body.len(),
        resp.body
    )?;
    stream.flush()
}
