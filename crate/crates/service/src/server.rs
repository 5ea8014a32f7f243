//! The ingestion daemon: accepts newline-delimited FLOC1 frames over TCP,
//! classifies each reading, persists it, and routes warning-or-worse
//! advisories through the alert gate to the configured sinks.
//!
//! Concurrency: one thread per connection, frames processed in arrival
//! order per connection. The model is shared read-only; the store and the
//! alert gate serialize internally.

use std::collections::BTreeMap;
use std::io::Read;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use floc_core::datamodel::{ModelParams, Severity};
use floc_core::decision::{evaluate, DecisionError, RuleConfig};
use floc_core::nn::{load_model, NnError};
use floc_core::protocol::parse_frame_bytes;

use crate::config::{ConfigError, ServiceConfig};
use crate::cooldown::AlertGate;
use crate::notify::{dispatch, NotifyError, Sink};
use crate::store::{JsonlStore, ReadingRecord};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model: {0}")]
    Model(#[from] NnError),
    #[error("rules: {0}")]
    Rules(#[from] DecisionError),
    #[error("sink: {0}")]
    Sink(#[from] NotifyError),
    #[error("store {path}: {source}")]
    Store {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

/// Counter snapshot. `rejected` is keyed by reject reason.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct ServiceStats {
    pub accepted: u64,
    pub rejected: BTreeMap<String, u64>,
    pub alerts_sent: u64,
    pub store_errors: u64,
}

impl ServiceStats {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }
}

#[derive(Default)]
struct Counters {
    accepted: AtomicU64,
    alerts_sent: AtomicU64,
    store_errors: AtomicU64,
    rejected: Mutex<BTreeMap<String, u64>>,
}

impl Counters {
    fn reject(&self, reason: &str) {
        *self.rejected.lock().expect("counter lock").entry(reason.to_string()).or_insert(0) += 1;
    }

    fn snapshot(&self) -> ServiceStats {
        ServiceStats {
            accepted: self.accepted.load(Ordering::SeqCst),
            rejected: self.rejected.lock().expect("counter lock").clone(),
            alerts_sent: self.alerts_sent.load(Ordering::SeqCst),
            store_errors: self.store_errors.load(Ordering::SeqCst),
        }
    }
}

/// What `handle_line` did with one raw line.
#[derive(Debug)]
pub enum HandleOutcome {
    Accepted { record: ReadingRecord },
    Rejected { reason: String },
}

struct Inner {
    model: ModelParams,
    rules: RuleConfig,
    sinks: Vec<Sink>,
    store: JsonlStore,
    gate: AlertGate,
    counters: Counters,
    max_line_len: usize,
    shutdown: AtomicBool,
    quiet: AtomicBool,
}

/// A running service instance. Dropping without `shutdown()` aborts
/// connection threads ungracefully; call `shutdown` for a clean stop.
pub struct Service {
    inner: Arc<Inner>,
    local_addr: SocketAddr,
    accept_thread: Option<JoinHandle<()>>,
    connection_threads: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl Service {
    /// Load the model, open the store, validate sinks, bind the listener,
    /// and start accepting. Fails fast on any configuration problem.
    pub fn start(config: &ServiceConfig) -> Result<Service, ServiceError> {
        config.validate()?;
        let model = load_model(&config.model_path)?;
        config.rules.validate()?;
        let sinks = config
            .sinks
            .iter()
            .map(Sink::from_config)
            .collect::<Result<Vec<_>, _>>()?;
        let store = JsonlStore::open(&config.store_path).map_err(|source| ServiceError::Store {
            path: config.store_path.display().to_string(),
            source,
        })?;
        let listener = TcpListener::bind(&config.listen).map_err(|source| ServiceError::Bind {
            addr: config.listen.clone(),
            source,
        })?;
        let local_addr = listener.local_addr().map_err(|source| ServiceError::Bind {
            addr: config.listen.clone(),
            source,
        })?;

        let inner = Arc::new(Inner {
            model,
            rules: config.rules.clone(),
            sinks,
            store,
            gate: AlertGate::new(config.cooldown_secs),
            counters: Counters::default(),
            max_line_len: config.max_line_len,
            shutdown: AtomicBool::new(false),
            quiet: AtomicBool::new(false),
        });

        let connection_threads: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
        let accept_thread = {
            let inner = Arc::clone(&inner);
            let threads = Arc::clone(&connection_threads);
            std::thread::spawn(move || accept_loop(listener, inner, threads))
        };

        Ok(Service {
            inner,
            local_addr,
            accept_thread: Some(accept_thread),
            connection_threads,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Suppress per-line reject logging (fuzz tests would drown stderr).
    pub fn set_quiet(&self, quiet: bool) {
        self.inner.quiet.store(quiet, Ordering::SeqCst);
    }

    pub fn stats(&self) -> ServiceStats {
        self.inner.counters.snapshot()
    }

    /// Stop accepting, drain connection threads, and flush the store.
    pub fn shutdown(mut self) -> ServiceStats {
        self.inner.shutdown.store(true, Ordering::SeqCst);
        // Unblock accept() with a throwaway connection.
        let _ = TcpStream::connect(self.local_addr);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
        let handles: Vec<JoinHandle<()>> =
            std::mem::take(&mut *self.connection_threads.lock().expect("threads lock"));
        for handle in handles {
            let _ = handle.join();
        }
        if let Err(e) = self.inner.store.sync() {
            eprintln!("store sync on shutdown failed: {e}");
        }
        self.inner.counters.snapshot()
    }
}

fn accept_loop(listener: TcpListener, inner: Arc<Inner>, threads: Arc<Mutex<Vec<JoinHandle<()>>>>) {
    loop {
        match listener.accept() {
            Ok((stream, _peer)) => {
                if inner.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let inner = Arc::clone(&inner);
                let handle = std::thread::spawn(move || connection_loop(stream, &inner));
                threads.lock().expect("threads lock").push(handle);
            }
            Err(_) => {
                if inner.shutdown.load(Ordering::SeqCst) {
                    break;
                }
            }
        }
    }
}

/// Split the byte stream into newline-delimited lines with a hard length
/// cap. Oversized lines are rejected with their own reason and the rest of
/// the line discarded; empty lines are ignored.
fn connection_loop(mut stream: TcpStream, inner: &Inner) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(200)));
    let mut line = Vec::with_capacity(inner.max_line_len.min(4096));
    let mut chunk = [0u8; 4096];
    let mut discarding = false;
    loop {
        if inner.shutdown.load(Ordering::SeqCst) {
            return;
        }
        let n = match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => n,
            Err(ref e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(_) => return,
        };
        for &byte in &chunk[..n] {
            if byte == b'\n' {
                if discarding {
                    discarding = false;
                } else if !line.is_empty() {
                    inner.handle_line(&line);
                }
                line.clear();
            } else if !discarding {
                line.push(byte);
                if line.len() > inner.max_line_len {
                    inner.counters.reject("oversized");
                    inner.log_reject(&format!(
                        "line exceeds {} bytes, discarding to next newline",
                        inner.max_line_len
                    ));
                    line.clear();
                    discarding = true;
                }
            }
        }
    }
    // Sender closed without a trailing newline: treat the remainder as a
    // final line.
    if !discarding && !line.is_empty() {
        inner.handle_line(&line);
    }
}

impl Inner {
    fn log_reject(&self, message: &str) {
        if !self.quiet.load(Ordering::SeqCst) {
            eprintln!("reject: {message}");
        }
    }

    /// sense → classify → decide → persist → (maybe) notify, exactly once
    /// per raw line. Never panics on malformed input.
    fn handle_line(&self, raw: &[u8]) -> HandleOutcome {
        let frame = match parse_frame_bytes(raw) {
            Ok(frame) => frame,
            Err(e) => {
                let reason = e.reason_key().to_string();
                self.counters.reject(&reason);
                self.log_reject(&e.to_string());
                return HandleOutcome::Rejected { reason };
            }
        };

        let (class, probs) = match floc_core::nn::predict(&self.model, &frame.sample) {
            Ok(p) => p,
            Err(e) => {
                self.counters.reject("predict_error");
                self.log_reject(&format!("predict failed: {e}"));
                return HandleOutcome::Rejected { reason: "predict_error".to_string() };
            }
        };
        let advisory = match evaluate(&frame, class, probs.0, &self.rules) {
            Ok(a) => a,
            Err(e) => {
                // Rules were validated at startup; this is defensive.
                self.counters.reject("rule_error");
                self.log_reject(&format!("rule evaluation failed: {e}"));
                return HandleOutcome::Rejected { reason: "rule_error".to_string() };
            }
        };

        // Gate on the frame's own timestamp so replays behave identically.
        let alert_sent = advisory.severity >= Severity::Warning
            && self.gate.should_alert(&frame.device_id, class, frame.timestamp);

        let record = ReadingRecord {
            received_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            frame,
            predicted_class: class.index() as u8,
            class_label: class.label().to_string(),
            probabilities: probs.0,
            severity: advisory.severity,
            alert_sent,
        };
        if let Err(e) = self.store.append(&record) {
            self.counters.store_errors.fetch_add(1, Ordering::SeqCst);
            self.counters.reject("store_error");
            self.log_reject(&format!("store append failed: {e}"));
            return HandleOutcome::Rejected { reason: "store_error".to_string() };
        }
        self.counters.accepted.fetch_add(1, Ordering::SeqCst);

        if alert_sent {
            self.counters.alerts_sent.fetch_add(1, Ordering::SeqCst);
            let report = dispatch(&advisory, &self.sinks);
            if !report.all_delivered() && !self.quiet.load(Ordering::SeqCst) {
                for r in report.results.iter().filter(|r| !r.delivered) {
                    eprintln!(
                        "delivery to {} failed after {} attempts: {}",
                        r.sink,
                        r.attempts,
                        r.failure.as_deref().unwrap_or("unknown")
                    );
                }
            }
        }
        HandleOutcome::Accepted { record }
    }
}

/// Direct line-handling entry for tests: processes one raw line against a
/// running service exactly as a connection would.
impl Service {
    pub fn handle_line(&self, raw: &[u8]) -> HandleOutcome {
        self.inner.handle_line(raw)
    }
}
