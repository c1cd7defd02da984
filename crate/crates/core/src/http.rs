//! A minimal request/response transport. Clients take a `&dyn Transport` so
//! every network path can be driven by [`MockTransport`] in tests; redirects
//! are followed by callers through [`send_following`], never by the binding.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Request {
    pub fn get(url: impl Into<String>) -> Request {
        Request { method: Method::Get, url: url.into(), headers: Vec::new(), body: Vec::new() }
    }

    pub fn post(url: impl Into<String>, body: Vec<u8>) -> Request {
        Request { method: Method::Post, url: url.into(), headers: Vec::new(), body }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Request {
        self.headers.push((name.to_string(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn new(status: u16, body: impl Into<Vec<u8>>) -> Response {
        Response { status, headers: Vec::new(), body: body.into() }
    }

    pub fn json(status: u16, value: &serde_json::Value) -> Response {
        Response::new(status, serde_json::to_vec(value).expect("serializable"))
            .with_header("content-type", "application/json")
    }

    pub fn redirect(status: u16, location: &str) -> Response {
        Response::new(status, Vec::new()).with_header("location", location)
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Response {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn is_redirect(&self) -> bool {
        matches!(self.status, 301 | 302 | 303 | 307 | 308)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn send(&self, req: &Request) -> Result<Response, TransportError>;
}

/// Resolves a `Location` header against the URL that produced it.
pub fn resolve_location(base: &str, location: &str) -> String {
    if location.contains("://") {
        return location.to_string();
    }
    let scheme_end = base.find("://").map_or(0, |i| i + 3);
    let host_end = base[scheme_end..].find('/').map_or(base.len(), |i| scheme_end + i);
    if let Some(rest) = location.strip_prefix("//") {
        return format!("{}{rest}", &base[..scheme_end]);
    }
    if location.starts_with('/') {
        return format!("{}{location}", &base[..host_end]);
    }
    let path = base.split(['?', '#']).next().unwrap_or(base);
    let dir_end = path.rfind('/').filter(|&i| i >= host_end).map_or(path.len(), |i| i + 1);
    let prefix = if dir_end == path.len() && !path.ends_with('/') { format!("{path}/") } else { path[..dir_end].to_string() };
    format!("{prefix}{location}")
}

/// Sends `req`, following up to `max` redirects. 301–303 switch to GET.
pub fn send_following(t: &dyn Transport, mut req: Request, max: usize) -> Result<Response, TransportError> {
    for _ in 0..=max {
        let resp = t.send(&req)?;
        if !resp.is_redirect() {
            return Ok(resp);
        }
        let loc = resp.header("location").ok_or_else(|| TransportError(format!("redirect from {} without Location", req.url)))?;
        req.url = resolve_location(&req.url, loc);
        if matches!(resp.status, 301..=303) {
            req.method = Method::Get;
            req.body.clear();
        }
    }
    Err(TransportError(format!("more than {max} redirects")))
}

/// Production binding over `ureq`, with redirect following disabled so the
/// caller sees every hop.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> UreqTransport {
        let config = ureq::Agent::config_builder()
            .max_redirects(0)
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(concat!("heirloom/", env!("CARGO_PKG_VERSION")))
            .build();
        UreqTransport { agent: config.into() }
    }
}

impl Transport for UreqTransport {
    fn send(&self, req: &Request) -> Result<Response, TransportError> {
        let err = |e: ureq::Error| TransportError(format!("{} {}: {e}", if req.method == Method::Get { "GET" } else { "POST" }, req.url));
        let result = match req.method {
            Method::Get => {
                let mut b = self.agent.get(&req.url);
                for (k, v) in &req.headers {
                    b = b.header(k, v);
                }
                b.call()
            }
            Method::Post => {
                let mut b = self.agent.post(&req.url);
                for (k, v) in &req.headers {
                    b = b.header(k, v);
                }
                b.send(&req.body[..])
            }
        };
        let mut resp = result.map_err(err)?;
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), String::from_utf8_lossy(v.as_bytes()).into_owned()))
            .collect();
        let status = resp.status().as_u16();
        let body = resp.body_mut().with_config().limit(u64::MAX).read_to_vec().map_err(err)?;
        Ok(Response { status, headers, body })
    }
}

/// Refuses every request; installed in offline mode.
pub struct RefusingTransport;

impl Transport for RefusingTransport {
    fn send(&self, req: &Request) -> Result<Response, TransportError> {
        Err(TransportError(format!("offline mode: refusing to contact {}", req.url)))
    }
}

type Handler = Box<dyn Fn(&Request) -> Response + Send + Sync>;

enum Reply {
    Queue(VecDeque<Response>),
    Dynamic(Handler),
}

struct Route {
    method: Method,
    /// Exact URL, or a prefix when it ends in `*`.
    pattern: String,
    reply: Reply,
}

impl Route {
    fn matches(&self, req: &Request) -> bool {
        self.method == req.method
            && match self.pattern.strip_suffix('*') {
                Some(prefix) => req.url.starts_with(prefix),
                None => req.url == self.pattern,
            }
    }
}

/// Scripted transport. The most recently registered matching route wins; a queued
/// route serves its responses in turn and then repeats the last one.
/// Unmatched requests get a 404.
#[derive(Default)]
pub struct MockTransport {
    routes: Mutex<Vec<Route>>,
    log: Mutex<Vec<Request>>,
}

impl MockTransport {
    pub fn new() -> MockTransport {
        MockTransport::default()
    }

    pub fn on(&self, method: Method, pattern: &str, response: Response) -> &Self {
        self.on_seq(method, pattern, vec![response])
    }

    pub fn on_seq(&self, method: Method, pattern: &str, responses: Vec<Response>) -> &Self {
        assert!(!responses.is_empty());
        self.routes.lock().unwrap().push(Route {
            method,
            pattern: pattern.to_string(),
            reply: Reply::Queue(responses.into()),
        });
        self
    }

    pub fn on_fn(&self, method: Method, pattern: &str, f: impl Fn(&Request) -> Response + Send + Sync + 'static) -> &Self {
        self.routes.lock().unwrap().push(Route { method, pattern: pattern.to_string(), reply: Reply::Dynamic(Box::new(f)) });
        self
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    /// Requests whose URL contains `fragment`.
    pub fn count_matching(&self, fragment: &str) -> usize {
        self.log.lock().unwrap().iter().filter(|r| r.url.contains(fragment)).count()
    }

    /// Loads routes from `DIR/routes.json`: an array of objects with
    /// `method`, `url`, `status`, and either `body` (text), `json`, or
    /// `body_file` (relative to DIR), plus optional `headers`.
    pub fn from_dir(dir: &Path) -> Result<MockTransport, String> {
        let path = dir.join("routes.json");
        let text = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let routes: Vec<serde_json::Value> =
            serde_json::from_slice(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let mock = MockTransport::new();
        for r in routes {
            let field = |k: &str| r.get(k).and_then(|v| v.as_str());
            let method = match field("method").unwrap_or("GET") {
                "GET" => Method::Get,
                "POST" => Method::Post,
                m => return Err(format!("unsupported method {m}")),
            };
            let url = field("url").ok_or("route without url")?;
            let status = r.get("status").and_then(|v| v.as_u64()).unwrap_or(200) as u16;
            let body = if let Some(b) = field("body") {
                b.as_bytes().to_vec()
            } else if let Some(j) = r.get("json") {
                serde_json::to_vec(j).expect("serializable")
            } else if let Some(f) = field("body_file") {
                std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))?
            } else {
                Vec::new()
            };
            let mut resp = Response::new(status, body);
            if let Some(h) = r.get("headers").and_then(|h| h.as_object()) {
                for (k, v) in h {
                    resp = resp.with_header(k, v.as_str().unwrap_or_default());
                }
            }
            mock.on(method, url, resp);
        }
        Ok(mock)
    }
}

impl Transport for MockTransport {
    fn send(&self, req: &Request) -> Result<Response, TransportError> {
        self.log.lock().unwrap().push(req.clone());
        let mut routes = self.routes.lock().unwrap();
        let Some(route) = routes.iter_mut().rev().find(|r| r.matches(req)) else {
            return Ok(Response::new(404, "no such route"));
        };
        Ok(match &mut route.reply {
            Reply::Dynamic(f) => f(req),
            Reply::Queue(q) if q.len() > 1 => q.pop_front().unwrap(),
            Reply::Queue(q) => q[0].clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn location_resolution() {
        let base = "https://example.org/a/b/c.tar.gz?x=1";
        assert_eq!(resolve_location(base, "https://mirror.net/x"), "https://mirror.net/x");
        assert_eq!(resolve_location(base, "/root.tar"), "https://example.org/root.tar");
        assert_eq!(resolve_location(base, "d.tar"), "https://example.org/a/b/d.tar");
        assert_eq!(resolve_location(base, "//cdn.net/y"), "https://cdn.net/y");
        assert_eq!(resolve_location("https://h.org", "z"), "https://h.org/z");
    }

    #[test]
    fn redirects_are_followed_and_bounded() {
        let m = MockTransport::new();
        m.on(Method::Post, "https://a/start", Response::redirect(303, "/next"));
        m.on(Method::Get, "https://a/next", Response::redirect(307, "https://b/final"));
        m.on(Method::Get, "https://b/final", Response::new(200, "done"));
        let r = send_following(&m, Request::post("https://a/start", b"x".to_vec()), 10).unwrap();
        assert_eq!(r.body, b"done");
        assert_eq!(m.request_count(), 3);

        let loop_ = MockTransport::new();
        loop_.on(Method::Get, "https://l/*", Response::redirect(302, "https://l/again"));
        assert!(send_following(&loop_, Request::get("https://l/x"), 10).is_err());
        assert_eq!(loop_.request_count(), 11);
    }

    #[test]
    fn queued_replies_repeat_the_last() {
        let m = MockTransport::new();
        m.on_seq(Method::Get, "u", vec![Response::new(202, ""), Response::new(200, "")]);
        let statuses: Vec<u16> = (0..3).map(|_| m.send(&Request::get("u")).unwrap().status).collect();
        assert_eq!(statuses, [202, 200, 200]);
        assert_eq!(m.send(&Request::get("other")).unwrap().status, 404);
    }

    #[test]
    fn refusing_transport_refuses() {
        assert!(RefusingTransport.send(&Request::get("https://x")).is_err());
    }
}
