//! Request routing with per-call logging.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::protocol::{RpcRequest, RpcResponse};
use super::registry::{validate_request, Registry};

/// One logged tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCallRecord {
    pub step: u64,
    pub tool: String,
    pub query: String,
    pub results: Value,
    pub latency_ms: f64,
}

/// Destination for call records.
pub trait ToolLog: Send + Sync {
    fn append(&self, record: &ToolCallRecord) -> io::Result<()>;
}

/// Keeps records in memory.
#[derive(Debug, Default)]
pub struct MemoryLog {
    records: Mutex<Vec<ToolCallRecord>>,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<ToolCallRecord> {
        self.records.lock().expect("log lock").clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("log lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ToolLog for MemoryLog {
    fn append(&self, record: &ToolCallRecord) -> io::Result<()> {
        self.records.lock().expect("log lock").push(record.clone());
        Ok(())
    }
}

/// Appends one JSON line per record, flushing after each.
#[derive(Debug)]
pub struct JsonlLog {
    writer: Mutex<BufWriter<File>>,
}

impl JsonlLog {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self {
            writer: Mutex::new(BufWriter::new(File::create(path)?)),
        })
    }

    pub fn append_to(path: &Path) -> io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            writer: Mutex::new(BufWriter::new(f)),
        })
    }
}

impl ToolLog for JsonlLog {
    fn append(&self, record: &ToolCallRecord) -> io::Result<()> {
        let mut w = self.writer.lock().expect("log lock");
        serde_json::to_writer(&mut *w, record)?;
        w.write_all(b"\n")?;
        w.flush()
    }
}

/// Validates, routes and logs requests.
pub struct Dispatcher {
    registry: Registry,
    sink: Option<Arc<dyn ToolLog>>,
    step: AtomicU64,
    sink_failures: AtomicU64,
}

impl Dispatcher {
    pub fn new(registry: Registry) -> Self {
        Self {
            registry,
            sink: None,
            step: AtomicU64::new(0),
            sink_failures: AtomicU64::new(0),
        }
    }

    pub fn with_sink(mut self, sink: Arc<dyn ToolLog>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Number of records the sink failed to accept.
    pub fn sink_failures(&self) -> u64 {
        self.sink_failures.load(Ordering::Relaxed)
    }

    /// Dispatches with the next value of the internal step counter.
    pub fn dispatch(&self, req: &RpcRequest) -> RpcResponse {
        let step = self.step.fetch_add(1, Ordering::Relaxed) + 1;
        self.dispatch_recorded(req, step).0
    }

    /// Dispatches under an explicit step number and returns the log record.
    pub fn dispatch_recorded(&self, req: &RpcRequest, step: u64) -> (RpcResponse, ToolCallRecord) {
        if let Some(session) = req.session_id() {
            log::debug!("session {session}: {} (step {step})", req.method);
        }
        let started = Instant::now();
        let (response, query) = match validate_request(req, &self.registry) {
            Ok(call) => {
                let query = call.tool.query_text(&call.params);
                let resp = match call.tool.call(&call.params) {
                    Ok(out) => RpcResponse::success(req.id.clone(), out.result, out.uncertainty),
                    Err(e) => RpcResponse::failure(req.id.clone(), e),
                };
                (resp, query)
            }
            Err(e) => (
                RpcResponse::failure(req.id.clone(), e),
                Value::Object(req.params.clone()).to_string(),
            ),
        };
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        let results = match &response.outcome {
            Ok(v) => v.clone(),
            Err(e) => json!({ "error": e }),
        };
        let record = ToolCallRecord {
            step: step.max(1),
            tool: req.method.clone(),
            query,
            results,
            latency_ms,
        };
        if let Some(sink) = &self.sink {
            if let Err(e) = sink.append(&record) {
                self.sink_failures.fetch_add(1, Ordering::Relaxed);
                log::error!("tool-call log write failed: {e}");
            }
        }
        (response, record)
    }

    /// Handles one wire line. Returns the response line, or `None` for a
    /// notification.
    pub fn handle_line(&self, line: &str) -> Option<String> {
        match RpcRequest::parse_line(line) {
            Ok(req) => {
                let resp = self.dispatch(&req);
                req.id.is_some().then(|| resp.to_line())
            }
            Err(resp) => Some(resp.to_line()),
        }
    }
}
