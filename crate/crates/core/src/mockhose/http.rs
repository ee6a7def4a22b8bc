//! HTTP face of the lookup contract: a threaded mock server and the client
//! the fetcher uses against real or mock endpoints.
//!
//! `POST /1.1/statuses/lookup.json` with form field `id=1,2,3` and an
//! `Authorization: Bearer <token>` header. Throttled requests get `429` and a
//! `Retry-After` header in whole seconds.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use tiny_http::{Header, Method, Request, Response, Server};

use super::MockService;
use crate::clock::{Clock, SystemClock};
use crate::error::{Error, Result};
use crate::lookup::{parse_id_field, render_id_field, Lookup, LookupError, LOOKUP_PATH};
use crate::tweet::HydratedTweet;

const ANONYMOUS: &str = "anonymous";

pub struct MockServer {
    addr: SocketAddr,
    server: Arc<Server>,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `addr` (port 0 picks a free port) and serves on `threads` threads.
    pub fn start(service: Arc<MockService>, addr: &str, threads: usize) -> Result<MockServer> {
        let server = Arc::new(Server::http(addr).map_err(|e| Error::Stage(format!("bind {addr}: {e}")))?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Stage("mock server is not bound to an IP address".into()))?;
        let stop = Arc::new(AtomicBool::new(false));
        let workers = (0..threads.max(1))
            .map(|_| {
                let (server, service, stop) = (server.clone(), service.clone(), stop.clone());
                std::thread::spawn(move || {
                    while !stop.load(Ordering::SeqCst) {
                        match server.recv() {
                            Ok(req) => handle(&service, req),
                            Err(_) => break,
                        }
                    }
                })
            })
            .collect();
        Ok(MockServer { addr, server, stop, workers })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server threads exit (they only exit on shutdown).
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_workers();
    }

    fn stop_workers(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop_workers();
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json; charset=utf-8").expect("static header")
}

fn error_response(status: u16, code: u32, message: &str) -> Response<std::io::Cursor<Vec<u8>>> {
    let body = serde_json::json!({"errors": [{"code": code, "message": message}]}).to_string();
    Response::from_string(body).with_status_code(status).with_header(json_header())
}

fn bearer_token(req: &Request) -> String {
    req.headers()
        .iter()
        .find(|h| h.field.equiv("Authorization"))
        .map(|h| h.value.as_str().trim())
        .map(|v| v.strip_prefix("Bearer ").unwrap_or(v).trim().to_string())
        .filter(|t| !t.is_empty())
        .unwrap_or_else(|| ANONYMOUS.to_string())
}

fn id_field(form: &str) -> Option<String> {
    url::form_urlencoded::parse(form.as_bytes()).find(|(k, _)| k == "id").map(|(_, v)| v.into_owned())
}

fn handle(service: &MockService, mut req: Request) {
    let now = SystemClock.now_ms();
    let (path, query) = match req.url().split_once('?') {
        Some((p, q)) => (p.to_string(), q.to_string()),
        None => (req.url().to_string(), String::new()),
    };
    if path != LOOKUP_PATH {
        let _ = req.respond(error_response(404, 34, "Sorry, that page does not exist"));
        return;
    }
    let mut form = query;
    if *req.method() == Method::Post {
        let mut body = String::new();
        if req.as_reader().read_to_string(&mut body).is_err() {
            let _ = req.respond(error_response(400, 44, "unreadable body"));
            return;
        }
        if !body.is_empty() {
            form = body;
        }
    } else if *req.method() != Method::Get {
        let _ = req.respond(error_response(405, 34, "method not allowed"));
        return;
    }
    let token = bearer_token(&req);
    let result = id_field(&form)
        .ok_or_else(|| LookupError::BadRequest("missing id parameter".into()))
        .and_then(|field| parse_id_field(&field))
        .and_then(|ids| service.serve_lookup(&ids, &token, now));
    let response = match result {
        Ok(tweets) => Response::from_string(serde_json::to_string(&tweets).expect("tweets serialize"))
            .with_header(json_header()),
        Err(LookupError::Throttled { retry_after_ms }) => {
            let secs = retry_after_ms.div_ceil(1000).max(1);
            error_response(429, 88, "Rate limit exceeded")
                .with_header(Header::from_bytes("Retry-After", secs.to_string()).expect("numeric header"))
        }
        Err(LookupError::RequestTooLarge(n)) => error_response(413, 18, &format!("too many ids: {n}")),
        Err(e) => error_response(400, 44, &e.to_string()),
    };
    let _ = req.respond(response);
}

/// Lookup client over HTTP.
pub struct HttpLookup {
    agent: ureq::Agent,
    url: String,
}

impl HttpLookup {
    /// `endpoint` is the service base URL, e.g. `http://127.0.0.1:8080`.
    pub fn new(endpoint: &str) -> HttpLookup {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with(".json") { base.to_string() } else { format!("{base}{LOOKUP_PATH}") };
        HttpLookup { agent, url }
    }
}

impl Lookup for HttpLookup {
    fn lookup(&mut self, ids: &[u64], token: &str) -> Result<Vec<HydratedTweet>, LookupError> {
        let field = render_id_field(ids);
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", format!("Bearer {token}"))
            .send_form([("id", field.as_str())])
            .map_err(|e| LookupError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| LookupError::Transport(e.to_string()))?;
        match status {
            200 => serde_json::from_str(&body).map_err(|e| LookupError::Transport(format!("bad response body: {e}"))),
            429 => {
                let secs = resp
                    .headers()
                    .get("Retry-After")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .unwrap_or(1);
                Err(LookupError::Throttled { retry_after_ms: secs * 1000 })
            }
            413 => Err(LookupError::RequestTooLarge(ids.len())),
            400 => Err(LookupError::BadRequest(body)),
            other => Err(LookupError::Transport(format!("HTTP {other}: {body}"))),
        }
    }
}
