//! Test support: a counting webhook receiver. Used by this crate's
//! integration tests and the end-to-end acceptance suite; not part of the
//! service runtime.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

/// One request as seen by the receiver.
#[derive(Debug, Clone)]
pub struct ReceivedRequest {
    pub headers: String,
    pub body: String,
}

/// Minimal HTTP receiver that counts POSTs, records bodies, and answers
/// with a fixed status.
pub struct CountingReceiver {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<ReceivedRequest>>>,
    hits: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl CountingReceiver {
    /// Bind on an ephemeral local port and answer every request with
    /// `status`.
    pub fn start(status: u16) -> CountingReceiver {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind receiver");
        let addr = listener.local_addr().unwrap();
        listener.set_nonblocking(false).unwrap();
        let requests: Arc<Mutex<Vec<ReceivedRequest>>> = Arc::default();
        let hits: Arc<AtomicUsize> = Arc::default();
        let stop: Arc<AtomicBool> = Arc::default();

        let handle = {
            let requests = Arc::clone(&requests);
            let hits = Arc::clone(&hits);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                listener
                    .set_nonblocking(true)
                    .expect("receiver nonblocking");
                loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    match listener.accept() {
                        Ok((mut stream, _)) => {
                            stream
                                .set_read_timeout(Some(std::time::Duration::from_secs(2)))
                                .ok();
                            let mut raw = Vec::new();
                            let mut buf = [0u8; 4096];
                            // Read headers, then exactly Content-Length body bytes.
                            let mut header_end = None;
                            loop {
                                match stream.read(&mut buf) {
                                    Ok(0) => break,
                                    Ok(n) => {
                                        raw.extend_from_slice(&buf[..n]);
                                        if header_end.is_none() {
                                            header_end = raw
                                                .windows(4)
                                                .position(|w| w == b"\r\n\r\n")
                                                .map(|p| p + 4);
                                        }
                                        if let Some(he) = header_end {
                                            let headers =
                                                String::from_utf8_lossy(&raw[..he]).to_string();
                                            let want = content_length(&headers).unwrap_or(0);
                                            if raw.len() >= he + want {
                                                break;
                                            }
                                        }
                                    }
                                    Err(_) => break,
                                }
                            }
                            if let Some(he) = header_end {
                                let headers = String::from_utf8_lossy(&raw[..he]).to_string();
                                let body = String::from_utf8_lossy(&raw[he..]).to_string();
                                hits.fetch_add(1, Ordering::SeqCst);
                                requests
                                    .lock()
                                    .unwrap()
                                    .push(ReceivedRequest { headers, body });
                            }
                            let reply = format!(
                                "HTTP/1.1 {status} {}\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
                                if (200..300).contains(&status) { "OK" } else { "Error" }
                            );
                            let _ = stream.write_all(reply.as_bytes());
                        }
                        Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(std::time::Duration::from_millis(5));
                        }
                        Err(_) => break,
                    }
                }
            })
        };

        CountingReceiver { addr, requests, hits, stop, handle: Some(handle) }
    }

    pub fn url(&self) -> String {
        format!("http://{}/hook", self.addr)
    }

    /// Total requests received so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ReceivedRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn stop(mut self) -> Vec<ReceivedRequest> {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
        let requests = self.requests.lock().unwrap().clone();
        requests
    }
}

impl Drop for CountingReceiver {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn content_length(headers: &str) -> Option<usize> {
    headers
        .lines()
        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(str::to_string))
        .and_then(|v| v.trim().parse().ok())
}
