//! Mock model service backed by a toy chemistry, speaking the same wire
//! protocol as a real deployment.

use std::io::{BufRead, Write};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;

use anyhow::{Context, Result};
use hyperretro::gateway::wire::{self, Request, Response};
use hyperretro::gateway::{ComplexityModel, ModelError, ToyChemistry};
use hyperretro::search::SurrogateComplexity;
use hyperretro::ModelSuite;

use crate::{config_error, ServeArgs, ServeTransport, EXIT_OK};

struct Service {
    models: ModelSuite,
    complexity: SurrogateComplexity,
}

impl Service {
    fn answer(&self, line: &str) -> Response {
        match serde_json::from_str::<Request>(line.trim_end()) {
            Ok(req) => wire::handle(&self.models, &self.complexity as &dyn ComplexityModel, &req),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_owned))
                    .unwrap_or_default();
                Response::failure(id, &ModelError::InvalidRequest(e.to_string()))
            }
        }
    }
}

pub fn run(a: &ServeArgs) -> Result<u8> {
    let path = a.templates.as_deref().ok_or_else(|| config_error("--templates is required"))?;
    let toy = ToyChemistry::load(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    if a.complexity_tmax <= 0.0 {
        return Err(config_error("--complexity-tmax must be positive"));
    }
    let service = Arc::new(Service {
        models: ModelSuite::from_toy(Arc::new(toy)),
        complexity: SurrogateComplexity { t_max: a.complexity_tmax },
    });
    let workers = a.max_in_flight.max(1);
    match a.transport {
        ServeTransport::Stdio => serve_stdio(service, workers)?,
        ServeTransport::Http => serve_http(service, &a.addr, workers)?,
    }
    Ok(EXIT_OK)
}

/// Reads requests line by line and answers them from a worker pool, so
/// responses can come back out of order.
fn serve_stdio(service: Arc<Service>, workers: usize) -> Result<()> {
    let (tx, rx) = mpsc::channel::<String>();
    let rx = Arc::new(Mutex::new(rx));
    let out = Arc::new(Mutex::new(std::io::stdout()));
    let handles: Vec<_> = (0..workers)
        .map(|_| {
            let rx = Arc::clone(&rx);
            let out = Arc::clone(&out);
            let service = Arc::clone(&service);
            thread::spawn(move || loop {
                let line = match rx.lock().unwrap_or_else(|e| e.into_inner()).recv() {
                    Ok(l) => l,
                    Err(_) => break,
                };
                let resp = wire::encode(&service.answer(&line));
                let mut out = out.lock().unwrap_or_else(|e| e.into_inner());
                if writeln!(out, "{resp}").and_then(|_| out.flush()).is_err() {
                    break;
                }
            })
        })
        .collect();
    for line in std::io::stdin().lock().lines() {
        let line = line.context("reading stdin")?;
        if line.trim().is_empty() {
            continue;
        }
        if tx.send(line).is_err() {
            break;
        }
    }
    drop(tx);
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

fn serve_http(service: Arc<Service>, addr: &str, workers: usize) -> Result<()> {
    let server = tiny_http::Server::http(addr).map_err(|e| config_error(format!("binding {addr}: {e}")))?;
    let server = Arc::new(server);
    eprintln!("listening on http://{}", server.server_addr());
    let handles: Vec<_> = (0..workers)
        .map(|_| {
            let server = Arc::clone(&server);
            let service = Arc::clone(&service);
            thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    let mut body = String::new();
                    let resp = match request.as_reader().read_to_string(&mut body) {
                        Ok(_) => service.answer(&body),
                        Err(e) => Response::failure("", &ModelError::InvalidRequest(e.to_string())),
                    };
                    let status = if resp.ok { 200 } else { 400 };
                    let header = tiny_http::Header::from_bytes("content-type", "application/json").expect("static header");
                    let reply = tiny_http::Response::from_string(wire::encode(&resp))
                        .with_status_code(status)
                        .with_header(header);
                    if let Err(e) = request.respond(reply) {
                        log::warn!("writing response: {e}");
                    }
                }
            })
        })
        .collect();
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}
