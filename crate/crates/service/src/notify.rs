//! Advisory delivery: HTTP webhook, standard output, and append-to-file
//! sinks. Delivery is best-effort — failures land in the report, never
//! past `dispatch` — and the JSONL reading store remains the durable
//! record.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use floc_core::datamodel::{Advisory, Severity};

/// Webhook payload schema version, also sent as the `X-Floc-Schema`
/// header.
pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_TIMEOUT_SECS: f64 = 5.0;
pub const DEFAULT_RETRIES: u32 = 3;
pub const DEFAULT_BACKOFF_BASE_SECS: f64 = 0.5;

/// Sink configuration as written in the service config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SinkConfig {
    Webhook {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default = "default_retries")]
        retries: u32,
        #[serde(default = "default_backoff")]
        backoff_base_secs: f64,
    },
    Stdout,
    File { path: PathBuf },
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}
fn default_retries() -> u32 {
    DEFAULT_RETRIES
}
fn default_backoff() -> f64 {
    DEFAULT_BACKOFF_BASE_SECS
}

#[derive(Debug, thiserror::Error)]
pub enum NotifyError {
    #[error("bad webhook url {url:?}: {reason}")]
    BadUrl { url: String, reason: String },
    #[error("invalid sink config: {0}")]
    InvalidConfig(String),
    #[error("cannot open sink file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Wire form of an advisory. Field order is fixed and documented in
/// docs/webhook.md; `format_payload` is byte-deterministic.
#[derive(Debug, Serialize, Deserialize)]
pub struct WirePayload {
    pub device_id: String,
    pub timestamp: u64,
    pub predicted_class: u8,
    pub class_label: String,
    pub probabilities: [f64; 4],
    pub severity: Severity,
    pub actions: Vec<String>,
    pub triggered_rules: Vec<String>,
    pub schema_version: u32,
}

impl From<&Advisory> for WirePayload {
    fn from(adv: &Advisory) -> Self {
        WirePayload {
            device_id: adv.device_id.clone(),
            timestamp: adv.timestamp,
            predicted_class: adv.predicted_class.index() as u8,
            class_label: adv.predicted_class.label().to_string(),
            probabilities: adv.probabilities,
            severity: adv.severity,
            actions: adv.actions.clone(),
            triggered_rules: adv.triggered_rules.clone(),
            schema_version: SCHEMA_VERSION,
        }
    }
}

/// Render an advisory as its single-line JSON wire form.
pub fn format_payload(advisory: &Advisory) -> String {
    serde_json::to_string(&WirePayload::from(advisory))
        .expect("payload struct always serializes")
}

/// Outcome of one sink's delivery attempt(s).
#[derive(Debug, Clone, PartialEq)]
pub struct SinkResult {
    /// Human-readable sink description ("webhook http://…", "stdout", …).
    pub sink: String,
    pub delivered: bool,
    pub attempts: u32,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeliveryReport {
    pub results: Vec<SinkResult>,
}

impl DeliveryReport {
    pub fn all_delivered(&self) -> bool {
        self.results.iter().all(|r| r.delivered)
    }
}

/// A ready-to-use sink. Construction validates configuration (bad URLs and
/// unopenable files fail fast); delivery failures are per-call and soft.
pub enum Sink {
    Webhook(WebhookSink),
    Stdout,
    File { path: PathBuf, file: Mutex<File> },
}

impl Sink {
    pub fn from_config(config: &SinkConfig) -> Result<Sink, NotifyError> {
        match config {
            SinkConfig::Webhook { url, timeout_secs, retries, backoff_base_secs } => {
                if !timeout_secs.is_finite() || *timeout_secs <= 0.0 {
                    return Err(NotifyError::InvalidConfig(format!(
                        "webhook timeout {timeout_secs} must be finite and > 0"
                    )));
                }
                if *backoff_base_secs < 0.0 {
                    return Err(NotifyError::InvalidConfig(format!(
                        "webhook backoff {backoff_base_secs} must be >= 0"
                    )));
                }
                Ok(Sink::Webhook(WebhookSink::new(
                    url,
                    Duration::from_secs_f64(*timeout_secs),
                    *retries,
                    Duration::from_secs_f64(*backoff_base_secs),
                )?))
            }
            SinkConfig::Stdout => Ok(Sink::Stdout),
            SinkConfig::File { path } => {
                let file = OpenOptions::new().create(true).append(true).open(path).map_err(
                    |source| NotifyError::Io { path: path.display().to_string(), source },
                )?;
                Ok(Sink::File { path: path.clone(), file: Mutex::new(file) })
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            Sink::Webhook(w) => format!("webhook {}", w.url),
            Sink::Stdout => "stdout".to_string(),
            Sink::File { path, .. } => format!("file {}", path.display()),
        }
    }

    fn deliver(&self, payload: &str) -> SinkResult {
        let sink = self.describe();
        match self {
            Sink::Webhook(w) => {
                let (delivered, attempts, failure) = w.post_with_retries(payload);
                SinkResult { sink, delivered, attempts, failure }
            }
            Sink::Stdout => {
                let mut out = std::io::stdout().lock();
                match writeln!(out, "{payload}").and_then(|_| out.flush()) {
                    Ok(()) => SinkResult { sink, delivered: true, attempts: 1, failure: None },
                    Err(e) => SinkResult {
                        sink,
                        delivered: false,
                        attempts: 1,
                        failure: Some(e.to_string()),
                    },
                }
            }
            Sink::File { file, .. } => {
                let mut file = file.lock().expect("file sink lock");
                let write = writeln!(file, "{payload}").and_then(|_| file.flush());
                match write {
                    Ok(()) => SinkResult { sink, delivered: true, attempts: 1, failure: None },
                    Err(e) => SinkResult {
                        sink,
                        delivered: false,
                        attempts: 1,
                        failure: Some(e.to_string()),
                    },
                }
            }
        }
    }
}

/// Deliver an advisory to every sink. Sinks are independent: one failure
/// never blocks the others, and nothing is thrown past this call.
pub fn dispatch(advisory: &Advisory, sinks: &[Sink]) -> DeliveryReport {
    let payload = format_payload(advisory);
    DeliveryReport { results: sinks.iter().map(|s| s.deliver(&payload)).collect() }
}

/// Minimal HTTP/1.1 POST client over `std::net`. Plain `http` only — the
/// link is a LAN webhook; TLS and auth are out of scope.
pub struct WebhookSink {
    url: String,
    host: String,
    port: u16,
    path: String,
    timeout: Duration,
    retries: u32,
    backoff_base: Duration,
}

impl WebhookSink {
    fn new(
        url: &str,
        timeout: Duration,
        retries: u32,
        backoff_base: Duration,
    ) -> Result<WebhookSink, NotifyError> {
        let bad = |reason: &str| NotifyError::BadUrl {
            url: url.to_string(),
            reason: reason.to_string(),
        };
        let rest = url
            .strip_prefix("http://")
            .ok_or_else(|| bad("only http:// is supported"))?;
        let (authority, path) = match rest.find('/') {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, "/"),
        };
        if authority.is_empty() {
            return Err(bad("empty host"));
        }
        let (host, port) = match authority.rsplit_once(':') {
            Some((h, p)) => {
                (h.to_string(), p.parse::<u16>().map_err(|_| bad("bad port"))?)
            }
            None => (authority.to_string(), 80),
        };
        if host.is_empty() {
            return Err(bad("empty host"));
        }
        Ok(WebhookSink {
            url: url.to_string(),
            host,
            port,
            path: path.to_string(),
            timeout,
            retries,
            backoff_base,
        })
    }

    /// 1 + retries attempts; exponential backoff (base × 2^attempt) between
    /// failures. Success is any 2xx status.
    fn post_with_retries(&self, body: &str) -> (bool, u32, Option<String>) {
        let mut last_failure = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            match self.post_once(body) {
                Ok(status) if (200..300).contains(&status) => {
                    return (true, attempt + 1, None);
                }
                Ok(status) => last_failure = Some(format!("HTTP status {status}")),
                Err(e) => last_failure = Some(e),
            }
        }
        (false, self.retries + 1, last_failure)
    }

    fn post_once(&self, body: &str) -> Result<u16, String> {
        let addr: SocketAddr = (self.host.as_str(), self.port)
            .to_socket_addrs()
            .map_err(|e| format!("resolve {}: {e}", self.host))?
            .next()
            .ok_or_else(|| format!("no address for {}", self.host))?;
        let mut stream =
            TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| format!("connect: {e}"))?;
        stream.set_read_timeout(Some(self.timeout)).map_err(|e| e.to_string())?;
        stream.set_write_timeout(Some(self.timeout)).map_err(|e| e.to_string())?;

        let request = format!(
            "POST {} HTTP/1.1\r\nHost: {}:{}\r\nContent-Type: application/json\r\nX-Floc-Schema: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            self.path,
            self.host,
            self.port,
            SCHEMA_VERSION,
            body.len(),
            body
        );
        stream.write_all(request.as_bytes()).map_err(|e| format!("write: {e}"))?;

        let mut response = Vec::new();
        let mut buf = [0u8; 1024];
        loop {
            match stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    response.extend_from_slice(&buf[..n]);
                    // The status line is all we act on.
                    if response.windows(2).any(|w| w == b"\r\n") {
                        break;
                    }
                    if response.len() > 16 * 1024 {
                        break;
                    }
                }
                Err(e) => return Err(format!("read: {e}")),
            }
        }
        let line_end = response
            .windows(2)
            .position(|w| w == b"\r\n")
            .ok_or_else(|| "no status line".to_string())?;
        let status_line = std::str::from_utf8(&response[..line_end])
            .map_err(|_| "non-ASCII status line".to_string())?;
        // "HTTP/1.1 200 OK"
        status_line
            .split_whitespace()
            .nth(1)
            .and_then(|code| code.parse::<u16>().ok())
            .ok_or_else(|| format!("unparseable status line {status_line:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use floc_core::datamodel::DoClass;

    fn advisory(severity: Severity) -> Advisory {
        Advisory {
            device_id: "TANK-A".to_string(),
            timestamp: 1602998400,
            predicted_class: DoClass::Average,
            probabilities: [0.25; 4],
            severity,
            actions: vec!["no action required".to_string()],
            triggered_rules: vec![],
        }
    }

    #[test]
    fn payload_has_documented_shape() {
        let text = format_payload(&advisory(Severity::Info));
        assert!(!text.contains('\n'));
        assert_eq!(
            text,
            "{\"device_id\":\"TANK-A\",\"timestamp\":1602998400,\"predicted_class\":2,\
             \"class_label\":\"average\",\"probabilities\":[0.25,0.25,0.25,0.25],\
             \"severity\":\"info\",\"actions\":[\"no action required\"],\
             \"triggered_rules\":[],\"schema_version\":1}"
        );
        // Any compliant JSON parser gets the fields back.
        let back: WirePayload = serde_json::from_str(&text).unwrap();
        assert_eq!(back.device_id, "TANK-A");
        assert_eq!(back.predicted_class, 2);
        assert_eq!(back.probabilities, [0.25; 4]);
    }

    #[test]
    fn payload_is_deterministic() {
        let adv = advisory(Severity::Warning);
        assert_eq!(format_payload(&adv), format_payload(&adv));
    }

    #[test]
    fn url_parsing_accepts_http_only() {
        let mk = |url: &str| WebhookSink::new(url, Duration::from_secs(1), 0, Duration::ZERO);
        let sink = mk("http://127.0.0.1:9000/hook").unwrap();
        assert_eq!((sink.host.as_str(), sink.port, sink.path.as_str()), ("127.0.0.1", 9000, "/hook"));

        let sink = mk("http://localhost/notify").unwrap();
        assert_eq!((sink.port, sink.path.as_str()), (80, "/notify"));

        let sink = mk("http://10.0.0.1:8080").unwrap();
        assert_eq!(sink.path, "/");

        assert!(mk("https://example.com").is_err());
        assert!(mk("ftp://example.com").is_err());
        assert!(mk("http://").is_err());
        assert!(mk("http://host:notaport/x").is_err());
    }

    #[test]
    fn file_sink_appends_whole_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alerts.jsonl");
        let sink = Sink::from_config(&SinkConfig::File { path: path.clone() }).unwrap();
        let report = dispatch(&advisory(Severity::Critical), std::slice::from_ref(&sink));
        assert!(report.all_delivered());
        let report = dispatch(&advisory(Severity::Info), std::slice::from_ref(&sink));
        assert!(report.all_delivered());

        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        for line in lines {
            let _: WirePayload = serde_json::from_str(line).unwrap();
        }
    }

    #[test]
    fn sink_failure_does_not_block_others() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alerts.jsonl");
        // Unbound port: connection refused fast.
        let sinks = vec![
            Sink::from_config(&SinkConfig::Webhook {
                url: "http://127.0.0.1:1/hook".to_string(),
                timeout_secs: 0.2,
                retries: 0,
                backoff_base_secs: 0.0,
            })
            .unwrap(),
            Sink::from_config(&SinkConfig::File { path: path.clone() }).unwrap(),
        ];
        let report = dispatch(&advisory(Severity::Critical), &sinks);
        assert!(!report.results[0].delivered);
        assert_eq!(report.results[0].attempts, 1);
        assert!(report.results[0].failure.is_some());
        assert!(report.results[1].delivered);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    }
}
