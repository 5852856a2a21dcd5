//! A minimal HTTP/1.1 server speaking the agent wire protocol on loopback,
//! answering from an in-process [`Agents`] set. Faults can be injected to
//! exercise client timeouts, retries and schema checks.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::agents::http::wire;
use crate::agents::{AgentError, Agents, ChatParams, DetectorParams};
use crate::ingest::{ClipSpan, FrameImage, FrameRef, SampledClip};

#[derive(Debug, Clone, Default)]
pub struct Faults {
    /// Sleep before answering each request.
    pub delay: Option<Duration>,
    /// Answer the first `n` requests on each path with `503`.
    pub fail_first: usize,
    /// Truncate or zero-pad returned embeddings to this length.
    pub embedding_dim: Option<usize>,
    /// Answer with a body that is not valid JSON.
    pub malformed_body: bool,
    /// Answer text endpoints with an empty string.
    pub empty_text: bool,
}

struct State {
    agents: Agents,
    faults: Mutex<Faults>,
    hits: Mutex<HashMap<String, usize>>,
}

pub struct LoopbackServer {
    addr: SocketAddr,
    state: Arc<State>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl LoopbackServer {
    pub fn start(agents: Agents) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let state = Arc::new(State {
            agents,
            faults: Mutex::new(Faults::default()),
            hits: Mutex::new(HashMap::new()),
        });
        let shutdown = Arc::new(AtomicBool::new(false));
        let handle = {
            let state = state.clone();
            let shutdown = shutdown.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let state = state.clone();
                    thread::spawn(move || {
                        let _ = serve(stream, &state);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            state,
            shutdown,
            handle: Some(handle),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn set_faults(&self, faults: Faults) {
        *self.state.faults.lock().unwrap() = faults;
        self.state.hits.lock().unwrap().clear();
    }

    /// Requests received on `path` (e.g. `/v1/chat`) since the last reset.
    pub fn hits(&self, path: &str) -> usize {
        self.state.hits.lock().unwrap().get(path).copied().unwrap_or(0)
    }

    pub fn total_hits(&self) -> usize {
        self.state.hits.lock().unwrap().values().sum()
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn serve(stream: TcpStream, state: &State) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("/")
        .to_string();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let faults = state.faults.lock().unwrap().clone();
    let hit = {
        let mut hits = state.hits.lock().unwrap();
        let n = hits.entry(path.clone()).or_insert(0);
        *n += 1;
        *n
    };
    if let Some(delay) = faults.delay {
        thread::sleep(delay);
    }
    let (status, payload) = if hit <= faults.fail_first {
        (503, json!({"error": "injected failure"}).to_string())
    } else if faults.malformed_body {
        (200, "{\"oops\": ".to_string())
    } else {
        match route(&path, &body, state, &faults) {
            Ok(value) => (200, value.to_string()),
            Err((status, message)) => (status, json!({ "error": message }).to_string()),
        }
    };
    write_response(stream, status, &payload)
}

fn write_response(mut stream: TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        503 => "Service Unavailable",
        _ => "Error",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

type RouteError = (u16, String);

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, RouteError> {
    serde_json::from_slice(body).map_err(|e| (400, e.to_string()))
}

fn agent_err(e: AgentError) -> RouteError {
    (400, e.to_string())
}

fn decode_frame(b64: &str, index: u64) -> Result<FrameImage, RouteError> {
    let png = BASE64.decode(b64).map_err(|e| (400, e.to_string()))?;
    Ok(FrameImage {
        frame: FrameRef {
            index,
            timestamp: 0.0,
        },
        png,
    })
}

fn embedding_json(values: Vec<f64>, faults: &Faults) -> serde_json::Value {
    let mut values = values;
    if let Some(dim) = faults.embedding_dim {
        values.resize(dim, 0.0);
    }
    json!({ "embedding": values })
}

fn text_json(text: Result<String, AgentError>, faults: &Faults) -> Result<serde_json::Value, RouteError> {
    if faults.empty_text {
        return Ok(json!({"text": ""}));
    }
    match text {
        Ok(text) => Ok(json!({ "text": text })),
        Err(AgentError::EmptyResponse) => Ok(json!({"text": ""})),
        Err(e) => Err(agent_err(e)),
    }
}

fn route(
    path: &str,
    body: &[u8],
    state: &State,
    faults: &Faults,
) -> Result<serde_json::Value, RouteError> {
    let agents = &state.agents;
    match path {
        "/v1/embed_image" => {
            let req: wire::EmbedImageRequest = parse(body)?;
            let frame = decode_frame(&req.image_b64, req.frame_index.unwrap_or(0))?;
            let emb = agents.image_embedder.embed_image(&frame).map_err(agent_err)?;
            Ok(embedding_json(emb.into_inner(), faults))
        }
        "/v1/embed_text" => {
            let req: wire::EmbedTextRequest = parse(body)?;
            let emb = agents.text_embedder.embed_text(&req.text).map_err(agent_err)?;
            Ok(embedding_json(emb.into_inner(), faults))
        }
        "/v1/detect" => {
            let req: wire::DetectRequest = parse(body)?;
            let frame = decode_frame(&req.image_b64, req.frame_index.unwrap_or(0))?;
            let params = DetectorParams {
                box_threshold: req.box_threshold,
                text_threshold: req.text_threshold,
                categories: req.categories,
            };
            let dets = agents
                .detector
                .detect_objects(&frame, &params)
                .map_err(agent_err)?;
            Ok(json!({ "detections": dets }))
        }
        "/v1/action" => {
            let req: wire::ActionRequest = parse(body)?;
            let indices = req
                .frame_indices
                .unwrap_or_else(|| (0..req.frames_b64.len() as u64).collect());
            let frames = req
                .frames_b64
                .iter()
                .zip(indices.iter().copied().chain(std::iter::repeat(0)))
                .map(|(b64, index)| decode_frame(b64, index))
                .collect::<Result<Vec<_>, _>>()?;
            let start = frames.first().map(|f| f.frame.index).unwrap_or(0);
            let end = frames.last().map(|f| f.frame.index + 1).unwrap_or(1);
            let clip = SampledClip {
                span: ClipSpan {
                    clip_index: req.clip_index.unwrap_or(0),
                    start_frame: start,
                    end_frame: end,
                },
                frames: frames.iter().map(|f| f.frame).collect(),
            };
            let label = agents
                .action
                .recognize_action(&clip, &frames)
                .map_err(agent_err)?;
            Ok(json!({ "label": label.label, "score": label.score }))
        }
        "/v1/caption" => {
            let req: wire::CaptionRequest = parse(body)?;
            let frame = decode_frame(&req.image_b64, req.frame_index.unwrap_or(0))?;
            let text = agents
                .captioner
                .caption_frame(&frame, &req.prompt)
                .map(|c| c.text);
            text_json(text, faults)
        }
        "/v1/chat" => {
            let req: wire::ChatRequest = parse(body)?;
            let params = ChatParams {
                temperature: req.temperature,
                repetition_penalty: req.repetition_penalty,
                max_tokens: req.max_tokens,
            };
            text_json(agents.chat.complete(&req.prompt, &params), faults)
        }
        _ => Err((404, format!("no route for {path}"))),
    }
}
