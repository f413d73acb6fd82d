use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};

use super::wire::{self, Request, Response};
use super::{
    ComplexityModel, ForwardModel, ForwardPrediction, ModelError, ModelSuite, PrecursorSet,
    ReactionClass, ReactionClassifier, RetroModel, RetroPrediction,
};
use crate::smiles::CanonicalSmiles;

/// Sends one request and waits for the matching response.
pub trait Transport: Send + Sync {
    fn call(&self, request: &Request, timeout: Duration) -> Result<Response, ModelError>;
}

/// Caps the number of in-flight requests.
struct Gate {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Self { free: Mutex::new(limit.max(1)), released: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

/// Serves requests from in-process models, still passing every message
/// through its JSON encoding.
pub struct LocalTransport {
    models: ModelSuite,
    complexity: Arc<dyn ComplexityModel>,
    gate: Gate,
}

impl LocalTransport {
    pub fn new(models: ModelSuite, complexity: Arc<dyn ComplexityModel>, max_in_flight: usize) -> Self {
        Self { models, complexity, gate: Gate::new(max_in_flight) }
    }
}

impl Transport for LocalTransport {
    fn call(&self, request: &Request, _timeout: Duration) -> Result<Response, ModelError> {
        let _permit = self.gate.acquire();
        let req: Request = wire::decode(&wire::encode(request))?;
        let resp = wire::handle(&self.models, self.complexity.as_ref(), &req);
        wire::decode(&wire::encode(&resp))
    }
}

type Pending = Arc<Mutex<HashMap<String, mpsc::Sender<Response>>>>;

/// Talks to a child process over stdin/stdout, one JSON message per line.
/// Responses are matched by id, so the child may answer out of order.
pub struct SubprocessTransport {
    child: Mutex<Child>,
    stdin: Mutex<ChildStdin>,
    pending: Pending,
    gate: Gate,
}

impl SubprocessTransport {
    pub fn spawn(command: &[String], max_in_flight: usize) -> std::io::Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty model command")
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let pending: Pending = Arc::default();

        let routes = Arc::clone(&pending);
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                match wire::decode::<Response>(&line) {
                    Ok(resp) => {
                        let tx = routes.lock().unwrap_or_else(|e| e.into_inner()).remove(&resp.id);
                        match tx {
                            Some(tx) => {
                                let _ = tx.send(resp);
                            }
                            None => warn!("response for unknown request id {:?}", resp.id),
                        }
                    }
                    Err(e) => warn!("dropping unreadable model response: {e}"),
                }
            }
            // Waiters see a disconnected channel.
            routes.lock().unwrap_or_else(|e| e.into_inner()).clear();
        });

        Ok(Self { child: Mutex::new(child), stdin: Mutex::new(stdin), pending, gate: Gate::new(max_in_flight) })
    }
}

impl Transport for SubprocessTransport {
    fn call(&self, request: &Request, timeout: Duration) -> Result<Response, ModelError> {
        let _permit = self.gate.acquire();
        let (tx, rx) = mpsc::channel();
        self.pending.lock().unwrap_or_else(|e| e.into_inner()).insert(request.id.clone(), tx);
        {
            let mut stdin = self.stdin.lock().unwrap_or_else(|e| e.into_inner());
            let line = wire::encode(request);
            if let Err(e) = writeln!(stdin, "{line}").and_then(|_| stdin.flush()) {
                self.pending.lock().unwrap_or_else(|e| e.into_inner()).remove(&request.id);
                return Err(ModelError::Unavailable(e.to_string()));
            }
        }
        match rx.recv_timeout(timeout) {
            Ok(resp) => Ok(resp),
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap_or_else(|e| e.into_inner()).remove(&request.id);
                Err(ModelError::Timeout)
            }
            Err(RecvTimeoutError::Disconnected) => Err(ModelError::Unavailable("model process exited".into())),
        }
    }
}

impl Drop for SubprocessTransport {
    fn drop(&mut self) {
        if let Ok(child) = self.child.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// POSTs each request as a JSON body and reads one JSON response.
pub struct HttpTransport {
    endpoint: String,
    agent: ureq::Agent,
    gate: Gate,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, max_in_flight: usize) -> Self {
        Self { endpoint: endpoint.into(), agent: ureq::Agent::new(), gate: Gate::new(max_in_flight) }
    }
}

impl Transport for HttpTransport {
    fn call(&self, request: &Request, timeout: Duration) -> Result<Response, ModelError> {
        let _permit = self.gate.acquire();
        let result = self
            .agent
            .post(&self.endpoint)
            .timeout(timeout)
            .set("content-type", "application/json")
            .send_string(&wire::encode(request));
        let body = match result {
            Ok(resp) => resp.into_string().map_err(|e| ModelError::MalformedResponse(e.to_string()))?,
            // Error statuses may still carry a protocol response.
            Err(ureq::Error::Status(_, resp)) => {
                resp.into_string().map_err(|e| ModelError::MalformedResponse(e.to_string()))?
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                return Err(if msg.contains("timed out") { ModelError::Timeout } else { ModelError::Unavailable(msg) });
            }
        };
        wire::decode(&body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(60), retries: 2, backoff: Duration::from_millis(200) }
    }
}

/// Model trio reached through a [`Transport`]. Transient failures are retried
/// with exponential backoff.
pub struct RemoteModels {
    transport: Arc<dyn Transport>,
    policy: RetryPolicy,
    next_id: AtomicU64,
}

impl RemoteModels {
    pub fn new(transport: Arc<dyn Transport>, policy: RetryPolicy) -> Self {
        Self { transport, policy, next_id: AtomicU64::new(1) }
    }

    fn next_id(&self) -> String {
        format!("q{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn call(&self, request: Request) -> Result<Vec<serde_json::Value>, ModelError> {
        let mut attempt = 0;
        loop {
            let outcome = self.transport.call(&request, self.policy.timeout).and_then(|resp| {
                if resp.id != request.id {
                    return Err(ModelError::MalformedResponse(format!(
                        "response id {:?} for request {:?}",
                        resp.id, request.id
                    )));
                }
                resp.into_result()
            });
            match outcome {
                Err(e) if e.is_transient() && attempt < self.policy.retries => {
                    let wait = self.policy.backoff * 2u32.pow(attempt);
                    debug!("{:?} request {} failed ({e}); retrying in {wait:?}", request.op, request.id);
                    thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

impl RetroModel for RemoteModels {
    fn retro_predict(&self, target: &CanonicalSmiles, beams: usize) -> Result<Vec<RetroPrediction>, ModelError> {
        wire::parse_retro(self.call(wire::retro_request(self.next_id(), target, beams))?)
    }
}

impl ForwardModel for RemoteModels {
    fn forward_predict(&self, precursors: &PrecursorSet, topk: usize) -> Result<Vec<ForwardPrediction>, ModelError> {
        wire::parse_forward(self.call(wire::forward_request(self.next_id(), precursors, topk))?)
    }

    fn score_reaction(&self, precursors: &PrecursorSet, product: &CanonicalSmiles) -> Result<f64, ModelError> {
        wire::parse_score(self.call(wire::score_request(self.next_id(), precursors, product))?)
    }
}

impl ReactionClassifier for RemoteModels {
    fn classify(&self, rxn: &str) -> Result<ReactionClass, ModelError> {
        wire::parse_classify(self.call(wire::classify_request(self.next_id(), rxn))?)
    }
}

impl ComplexityModel for RemoteModels {
    fn complexity(&self, molecule: &CanonicalSmiles) -> Result<f64, ModelError> {
        wire::parse_scscore(self.call(wire::scscore_request(self.next_id(), molecule))?)
    }
}
