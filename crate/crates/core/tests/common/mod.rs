#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use genrank::model::{Document, Qrels, Query};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// One request as the fake server saw it.
#[derive(Debug, Clone)]
pub struct Recorded {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Recorded {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        Self { status, body: body.into(), delay: Duration::ZERO }
    }

    pub fn ok(content: &str) -> Self {
        let body = serde_json::json!({
            "id": "cmpl-1",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 2, "total_tokens": 12}
        });
        Self::new(200, body.to_string())
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

/// A scripted HTTP/1.1 server on an ephemeral port. Replies are handed out
/// in order; once the script runs out the last reply repeats.
pub struct FakeServer {
    pub url: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
    connections: Arc<AtomicUsize>,
    in_flight: Arc<AtomicUsize>,
    max_in_flight: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<Recorded> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_owned();
    let path = parts.next()?.to_owned();
    let mut headers = Vec::new();
    let mut length = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        let (k, v) = (k.trim().to_owned(), v.trim().to_owned());
        if k.eq_ignore_ascii_case("content-length") {
            length = v.parse().ok()?;
        }
        headers.push((k, v));
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some(Recorded { method, path, headers, body: String::from_utf8_lossy(&body).into_owned() })
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

impl FakeServer {
    pub fn start(script: Vec<Reply>) -> Self {
        assert!(!script.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let connections = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let max_in_flight = Arc::new(AtomicUsize::new(0));
        let script = Arc::new(script);
        let next = Arc::new(AtomicUsize::new(0));
        {
            let (requests, connections, in_flight, max_in_flight) =
                (requests.clone(), connections.clone(), in_flight.clone(), max_in_flight.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(mut stream) = stream else { break };
                    connections.fetch_add(1, Ordering::SeqCst);
                    let (requests, script, next, in_flight, max_in_flight) =
                        (requests.clone(), script.clone(), next.clone(), in_flight.clone(), max_in_flight.clone());
                    std::thread::spawn(move || {
                        // Keep-alive: serve requests until the client hangs up.
                        while let Some(req) = read_request(&mut stream) {
                            let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                            max_in_flight.fetch_max(now, Ordering::SeqCst);
                            requests.lock().unwrap().push(req);
                            let i = next.fetch_add(1, Ordering::SeqCst).min(script.len() - 1);
                            let reply = &script[i];
                            std::thread::sleep(reply.delay);
                            in_flight.fetch_sub(1, Ordering::SeqCst);
                            let head = format!(
                                "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
                                reply.status,
                                reason(reply.status),
                                reply.body.len()
                            );
                            if stream.write_all(head.as_bytes()).is_err()
                                || stream.write_all(reply.body.as_bytes()).is_err()
                            {
                                break;
                            }
                        }
                    });
                }
            });
        }
        Self { url, requests, connections, in_flight, max_in_flight }
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }

    pub fn connections(&self) -> usize {
        self.connections.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

/// A small graded test collection. Every document with a positive grade
/// contains at least one term of its query, and all texts are distinct.
pub struct Collection {
    pub docs: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
}

const FILLER: &[&str] = &[
    "river", "stone", "market", "window", "garden", "engine", "parcel", "signal", "harbor", "forest", "copper",
    "lantern", "meadow", "circuit", "orbit", "canvas", "valley", "spice", "thunder", "pillow", "ladder", "velvet",
    "glacier", "compass", "ember", "falcon", "quartz", "saddle", "tunnel", "willow",
];

pub fn synthetic_collection(num_docs: usize, num_queries: usize, seed: u64) -> Collection {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut words: Vec<Vec<String>> = (0..num_docs)
        .map(|i| {
            let n = rng.random_range(8..16);
            let mut w: Vec<String> = (0..n).map(|_| FILLER[rng.random_range(0..FILLER.len())].to_owned()).collect();
            w.push(format!("serial{i}"));
            w
        })
        .collect();
    let mut queries = Vec::new();
    let mut qrels = Qrels::new();
    let mut doc_order: Vec<usize> = (0..num_docs).collect();
    for q in 0..num_queries {
        let terms = [format!("topic{q}alpha"), format!("topic{q}beta")];
        queries.push(Query::new(format!("q{q}"), format!("{} {} facts", terms[0], terms[1])).unwrap());
        doc_order.shuffle(&mut rng);
        let judged = rng.random_range(4..8);
        for (j, &d) in doc_order.iter().take(judged).enumerate() {
            // Guarantee at least one positive grade per query.
            let grade = if j == 0 { 3 } else { rng.random_range(0..=3) };
            if grade > 0 {
                let term = terms[rng.random_range(0..2)].clone();
                let at = rng.random_range(0..=words[d].len());
                words[d].insert(at, term);
            }
            qrels.insert(format!("q{q}"), format!("d{d:03}"), grade);
        }
        // A few unjudged distractors also mention the topic.
        for &d in doc_order.iter().skip(judged).take(2) {
            words[d].push(terms[0].clone());
        }
    }
    let docs =
        words.into_iter().enumerate().map(|(i, w)| Document::new(format!("d{i:03}"), w.join(" ")).unwrap()).collect();
    Collection { docs, queries, qrels }
}
