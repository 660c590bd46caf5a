//! A local HTTP endpoint that imitates a chat-completion service, for tests
//! and offline demos.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

/// What the mock saw for one request.
#[derive(Clone, Debug, PartialEq)]
pub struct MockRequest {
    pub tweet: String,
    /// Description of the `stance` function argument.
    pub prompt: String,
    pub options: Vec<String>,
    pub authorization: Option<String>,
    pub body: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MockReply {
    pub status: u16,
    pub body: String,
}

impl MockReply {
    /// A function-call reply choosing `word`.
    pub fn function_call(word: &str) -> Self {
        let args = json!({ "stance": word }).to_string();
        let body = json!({
            "choices": [{
                "message": {
                    "role": "assistant",
                    "tool_calls": [{
                        "type": "function",
                        "function": { "name": "classify_stance", "arguments": args }
                    }]
                }
            }]
        });
        Self {
            status: 200,
            body: body.to_string(),
        }
    }

    /// A plain-content reply.
    pub fn content(text: &str) -> Self {
        let body = json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] });
        Self {
            status: 200,
            body: body.to_string(),
        }
    }

    pub fn error(status: u16) -> Self {
        Self {
            status,
            body: json!({ "error": "mock failure" }).to_string(),
        }
    }
}

type Responder = dyn Fn(&MockRequest) -> MockReply + Send + Sync;

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    log: Arc<Mutex<Vec<MockRequest>>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start<F>(responder: F) -> std::io::Result<Self>
    where
        F: Fn(&MockRequest) -> MockReply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let log = Arc::new(Mutex::new(Vec::new()));
        let responder: Arc<Responder> = Arc::new(responder);
        let handle = {
            let stop = stop.clone();
            let log = log.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(s) = stream {
                        // Errors on one connection only affect that client.
                        let _ = serve(s, &*responder, &log);
                    }
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            log,
            handle: Some(handle),
        })
    }

    /// Answers with the class whose keyword appears in the tweet, else
    /// `fallback`. Keywords are matched case-insensitively in order.
    pub fn keywords(rules: Vec<(String, String)>, fallback: String) -> std::io::Result<Self> {
        Self::start(move |req| {
            let text = req.tweet.to_lowercase();
            let word = rules
                .iter()
                .find(|(k, _)| text.contains(&k.to_lowercase()))
                .map_or(fallback.as_str(), |(_, w)| w.as_str());
            MockReply::function_call(word)
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, responder: &Responder, log: &Mutex<Vec<MockRequest>>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut authorization = None;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.parse().unwrap_or(0),
                "authorization" => authorization = Some(value.to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let param = body.pointer("/tools/0/function/parameters/properties/stance");
    let req = MockRequest {
        tweet: body
            .pointer("/messages/0/content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        prompt: param
            .and_then(|p| p.get("description"))
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        options: param
            .and_then(|p| p.get("enum"))
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
            .unwrap_or_default(),
        authorization,
        body,
    };
    let reply = responder(&req);
    log.lock().expect("log lock").push(req);
    let reason = if reply.status == 200 { "OK" } else { "Error" };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    )?;
    out.flush()
}
