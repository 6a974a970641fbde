#![allow(dead_code)]

//! Shared test support: naive reference implementations of the metrics,
//! random instance generators, and a tiny HTTP stub server.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use ftp_harness::metrics::ProbVector;
use ftp_harness::types::{ChatFormat, FirstTokenOutcome, Label, PrefillTemplate, Question};
use ftp_harness::MockScript;
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// Oracles. Deliberately simple: explicit loops, no shared helpers with the
// library, O(n^2) where that is the obvious way to write it.

pub mod oracle {
    pub fn brier_x100(probs: &[Vec<f64>], golds: &[usize]) -> f64 {
        let mut total = 0.0;
        for i in 0..probs.len() {
            let p = probs[i][golds[i]];
            total += (1.0 - p) * (1.0 - p);
        }
        total / probs.len() as f64 * 100.0
    }

    pub fn log_loss(probs: &[Vec<f64>], golds: &[usize]) -> f64 {
        let mut total = 0.0;
        for i in 0..probs.len() {
            let mut p = probs[i][golds[i]];
            if p < 1e-12 {
                p = 1e-12;
            }
            total -= p.ln();
        }
        total / probs.len() as f64
    }

    /// Insertion sort on (probability, item index) pairs.
    fn sorted_by_class(probs: &[Vec<f64>], class: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for i in 0..probs.len() {
            let mut pos = out.len();
            while pos > 0 {
                let j = out[pos - 1];
                let before = probs[j][class] < probs[i][class] || (probs[j][class] == probs[i][class] && j < i);
                if before {
                    break;
                }
                pos -= 1;
            }
            out.insert(pos, i);
        }
        out
    }

    pub fn ace(probs: &[Vec<f64>], golds: &[usize], ranges: usize) -> f64 {
        let n = probs.len();
        let k = probs[0].len();
        let per = n / ranges;
        let mut total = 0.0;
        for class in 0..k {
            let order = sorted_by_class(probs, class);
            for r in 0..ranges {
                let lo = r * per;
                let hi = if r == ranges - 1 { n } else { lo + per };
                let mut correct = 0.0;
                let mut conf = 0.0;
                for &i in &order[lo..hi] {
                    if golds[i] == class {
                        correct += 1.0;
                    }
                    conf += probs[i][class];
                }
                let m = (hi - lo) as f64;
                total += (correct / m - conf / m).abs();
            }
        }
        total / (k * ranges) as f64
    }

    pub struct Bin {
        pub lo: f64,
        pub hi: f64,
        pub mean_conf: Option<f64>,
        pub accuracy: Option<f64>,
        pub count: usize,
    }

    pub fn calibration_curve(probs: &[Vec<f64>], golds: &[usize], bins: usize) -> Vec<Bin> {
        let mut out = Vec::new();
        for b in 0..bins {
            let lo = b as f64 / bins as f64;
            let hi = (b + 1) as f64 / bins as f64;
            let mut count = 0;
            let mut conf = 0.0;
            let mut correct = 0.0;
            for i in 0..probs.len() {
                let mut top = 0;
                for j in 1..probs[i].len() {
                    if probs[i][j] > probs[i][top] {
                        top = j;
                    }
                }
                let c = probs[i][top];
                let inside = if b == bins - 1 { c >= lo } else { c >= lo && c < hi };
                if inside {
                    count += 1;
                    conf += c;
                    if top == golds[i] {
                        correct += 1.0;
                    }
                }
            }
            let (mean_conf, accuracy) = if count == 0 {
                (None, None)
            } else {
                (Some(conf / count as f64), Some(correct / count as f64))
            };
            out.push(Bin {
                lo,
                hi,
                mean_conf,
                accuracy,
                count,
            });
        }
        out
    }

    /// (valid first token, second token) pairs.
    pub fn continuation_diversity(items: &[(bool, Option<String>)]) -> Option<f64> {
        let mut valid = 0;
        let mut seen: Vec<&String> = Vec::new();
        for (ok, second) in items {
            if *ok {
                valid += 1;
                if let Some(s) = second {
                    if !seen.contains(&s) {
                        seen.push(s);
                    }
                }
            }
        }
        if valid == 0 {
            return None;
        }
        let rate = valid as f64 * 100.0 / items.len() as f64;
        Some(seen.len() as f64 / rate)
    }

    /// Two-pass mean and population standard deviation.
    pub fn mean_std(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

// ---------------------------------------------------------------------------
// Random instances.

/// A probability vector; some entries are snapped to a coarse grid so exact
/// ties and bin-edge values show up.
pub fn random_probs<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let coarse = rng.gen_bool(0.3);
    let mut raw: Vec<f64> = (0..k)
        .map(|_| {
            if coarse {
                rng.gen_range(0..=4) as f64
            } else {
                rng.gen::<f64>()
            }
        })
        .collect();
    if raw.iter().all(|&x| x == 0.0) {
        raw[0] = 1.0;
    }
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

pub fn prob_vectors(probs: &[Vec<f64>]) -> Vec<ProbVector> {
    probs.iter().map(|p| ProbVector::raw(p.clone()).unwrap()).collect()
}

pub fn label(c: char) -> Label {
    Label::new(c).unwrap()
}

pub fn labels(n: usize) -> Vec<Label> {
    Label::first_n(n).unwrap()
}

/// A minimal outcome carrying only what CD and FTVR read.
pub fn outcome(id: usize, valid: bool, second: Option<&str>) -> FirstTokenOutcome {
    let opts: BTreeMap<Label, f64> = labels(4).into_iter().map(|l| (l, 0.25)).collect();
    FirstTokenOutcome {
        question_id: format!("q{id:03}"),
        top1_token: if valid { "A".into() } else { "The".into() },
        is_valid: valid,
        matched_label: valid.then(|| label('A')),
        second_token: if valid { second.map(str::to_owned) } else { None },
        option_probs: opts,
        restricted_choice: label('A'),
        gold_label: label('A'),
        degenerate: false,
    }
}

const STEM_CHARS: &[char] = &[
    'a', 'b', 'c', 'x', 'y', 'z', 'Q', 'W', ' ', ' ', '\n', '?', '.', ',', '(', ')', '-', ':', '0', '7', 'é', 'ß', '中',
];

pub fn random_text<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| *STEM_CHARS.choose(rng).unwrap()).collect()
}

pub fn random_question<R: Rng>(rng: &mut R, id: usize) -> Question {
    let k = rng.gen_range(2..=8);
    let texts: Vec<String> = (0..k).map(|_| random_text(rng, 1, 20)).collect();
    Question::from_texts(format!("r{id}"), random_text(rng, 1, 80), texts, rng.gen_range(0..k)).unwrap()
}

/// Builtin formats plus a randomly delimited custom one. Delimiters use
/// `<|...|>` so they never collide with generated text.
pub fn random_format<R: Rng>(rng: &mut R) -> ChatFormat {
    let builtin = ftp_harness::templating::builtin_chat_formats();
    if rng.gen_bool(0.6) {
        return builtin.choose(rng).unwrap().clone();
    }
    let tag = |rng: &mut R, role: &str| {
        let nl = if rng.gen_bool(0.5) { "\n" } else { "" };
        format!("<|{role}{}|>{nl}", rng.gen_range(0..100))
    };
    let uo = tag(rng, "u");
    let uc = if rng.gen_bool(0.3) {
        String::new()
    } else {
        tag(rng, "/u")
    };
    let ao = tag(rng, "a");
    let ac = tag(rng, "/a");
    ChatFormat::new("custom", uo, uc, ao, ac).unwrap()
}

pub fn random_template<R: Rng>(rng: &mut R) -> PrefillTemplate {
    let builtin = ftp_harness::templating::builtin_prefill_templates();
    if rng.gen_bool(0.7) {
        return builtin.choose(rng).unwrap().clone();
    }
    let mut text = random_text(rng, 1, 40);
    while text.ends_with('\n') || text.is_empty() {
        text.pop();
        if text.is_empty() {
            text.push('x');
        }
    }
    if rng.gen_bool(0.5) {
        text.push_str(": ");
    }
    PrefillTemplate::new("custom", text).unwrap()
}

// ---------------------------------------------------------------------------
// Mock scripts.

pub const DEFAULT_TRIGGER: &str = "Given the question and the possible options, my answer is:";

/// Unconditioned top-1 is "The"; with the default prefill the top-1 becomes
/// " B" followed by ")".
pub fn steering_script() -> MockScript {
    let unconditioned = MockScript::dist(&[
        ("The", 0.55),
        (" A", 0.1),
        (" B", 0.12),
        (" C", 0.08),
        (" D", 0.05),
        ("\n", 0.04),
    ]);
    let steered_first = MockScript::dist(&[(" B", 0.62), (" A", 0.2), (" C", 0.09), (" D", 0.05), (" The", 0.02)]);
    let steered_second = MockScript::dist(&[(")", 0.9), (".", 0.05)]);
    MockScript::new(unconditioned, 7)
        .unwrap()
        .with_override(DEFAULT_TRIGGER, vec![steered_first, steered_second])
        .unwrap()
}

/// A script whose output depends on the prompt bytes via seeded noise, so
/// every question and template yields a different distribution.
pub fn noisy_script(seed: u64) -> MockScript {
    let base = MockScript::dist(&[(" A", 0.3), (" B", 0.25), (" C", 0.2), ("D", 0.1), ("The", 0.1)]);
    MockScript::new(base, seed).unwrap().with_noise(0.9).unwrap()
}

// ---------------------------------------------------------------------------
// HTTP stub server.

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
    pub started: Instant,
    pub finished: Instant,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).expect("request body is JSON")
    }
}

pub type Handler = dyn Fn(usize, &Request) -> (u16, String) + Send + Sync;

pub struct StubServer {
    pub base_url: String,
    pub requests: Arc<Mutex<Vec<Request>>>,
}

impl StubServer {
    /// Serve every connection on its own thread. The handler gets the
    /// zero-based arrival index and the parsed request.
    pub fn start(handler: impl Fn(usize, &Request) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let counter = Arc::new(Mutex::new(0usize));
        let log = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let handler = handler.clone();
                let log = log.clone();
                let counter = counter.clone();
                std::thread::spawn(move || serve(stream, &*handler, &log, &counter));
            }
        });
        Self { base_url, requests }
    }

    pub fn requests(&self) -> Vec<Request> {
        self.requests.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Request>>, counter: &Mutex<usize>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let started = Instant::now();
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_owned();
    let path = parts.next().unwrap_or_default().to_owned();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_owned(), v.trim().to_owned()));
        }
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    let mut req = Request {
        method,
        path,
        headers,
        body: String::from_utf8(body).unwrap(),
        started,
        finished: started,
    };
    let index = {
        let mut c = counter.lock().unwrap();
        *c += 1;
        *c - 1
    };
    let (status, resp) = handler(index, &req);
    req.finished = Instant::now();
    log.lock().unwrap().push(req);
    let mut w = &stream;
    let head = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        resp.len()
    );
    let _ = w.write_all(head.as_bytes());
    let _ = w.write_all(resp.as_bytes());
    let _ = w.flush();
}

/// A completion response body with the given per-position top logprobs.
pub fn completion_body(positions: &[&[(&str, f64)]]) -> String {
    let top: Vec<serde_json::Map<String, serde_json::Value>> = positions
        .iter()
        .map(|pos| {
            pos.iter()
                .map(|(t, lp)| ((*t).to_owned(), serde_json::json!(lp)))
                .collect()
        })
        .collect();
    let tokens: Vec<&str> = positions
        .iter()
        .map(|pos| {
            pos.iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(t, _)| *t)
                .unwrap_or("")
        })
        .collect();
    serde_json::json!({
        "id": "cmpl-stub",
        "object": "text_completion",
        "choices": [{
            "index": 0,
            "text": tokens.concat(),
            "logprobs": {"tokens": tokens, "top_logprobs": top},
            "finish_reason": "length"
        }]
    })
    .to_string()
}

pub fn text_body(text: &str) -> String {
    serde_json::json!({"choices": [{"index": 0, "text": text, "finish_reason": "stop"}]}).to_string()
}
