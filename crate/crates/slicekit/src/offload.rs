//! The runtime pair: an edge server answering inference frames over TCP and
//! a device client that runs the head slice, ships the boundary tensor
//! through the shaped uplink, and reports a per-component latency breakdown.
//!
//! Requests on one connection are answered in order. Connections are handled
//! concurrently, but inference execution is serialized per model so
//! single-request timings stay comparable to the benchmark. The edge measures
//! its own compute time and returns it in the response, which lets the client
//! separate network time from edge time without any clock synchronization.

use std::collections::HashMap;
use std::fmt;
use std::io::Write as _;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::bench::ResourceProfile;
use crate::graph::{LayerGraph, ModelError, SplitId};
use crate::netem::{shaped_send, LinkShaper};
use crate::planner::{NetworkProfile, Variant};
use crate::preprocess::{insert_tl, split_model, PrepError};
use crate::rng::Rng;
use crate::tensor::{max_pool_2x2, Shape, Tensor, TensorError};
use crate::timing::{median_us, percentile_us, run_scaled};
use crate::wire::{self, Frame, FrameType, WireError};

/// Client read timeout unless overridden.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
/// Experiments below this many requests do not produce stable medians.
pub const MIN_EXPERIMENT_REQUESTS: usize = 30;

/// Wire encoding of a split id; the local-only plan never crosses the wire.
pub fn split_wire_code(split: SplitId) -> Option<u16> {
    match split {
        SplitId::Interior(i) if i < 0xffff => Some(i as u16),
        SplitId::FullOffload => Some(0xffff),
        _ => None,
    }
}

#[derive(Debug)]
pub enum OffloadError {
    Bind(std::io::Error),
    Connect(std::io::Error),
    Timeout,
    ConnectionClosed,
    /// The edge answered with an error frame.
    ServerError { code: u16, message: String },
    /// The peer broke the request/response discipline.
    Protocol { reason: String },
    InvalidSplit { split: SplitId },
    Wire(WireError),
    Tensor(TensorError),
    Model(ModelError),
    Prep(PrepError),
    Io(std::io::Error),
}

impl fmt::Display for OffloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OffloadError::Bind(e) => write!(f, "bind failed: {e}"),
            OffloadError::Connect(e) => write!(f, "connect failed: {e}"),
            OffloadError::Timeout => write!(f, "timed out waiting for the edge"),
            OffloadError::ConnectionClosed => write!(f, "connection closed"),
            OffloadError::ServerError { code, message } => write!(f, "edge error {code}: {message}"),
            OffloadError::Protocol { reason } => write!(f, "protocol violation: {reason}"),
            OffloadError::InvalidSplit { split } => write!(f, "split {split} cannot be offloaded"),
            OffloadError::Wire(e) => write!(f, "{e}"),
            OffloadError::Tensor(e) => write!(f, "{e}"),
            OffloadError::Model(e) => write!(f, "{e}"),
            OffloadError::Prep(e) => write!(f, "{e}"),
            OffloadError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for OffloadError {}

impl From<WireError> for OffloadError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::TruncatedFrame => OffloadError::ConnectionClosed,
            WireError::Io(io) if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                OffloadError::Timeout
            }
            other => OffloadError::Wire(other),
        }
    }
}

impl From<TensorError> for OffloadError {
    fn from(e: TensorError) -> Self {
        OffloadError::Tensor(e)
    }
}

impl From<ModelError> for OffloadError {
    fn from(e: ModelError) -> Self {
        OffloadError::Model(e)
    }
}

impl From<PrepError> for OffloadError {
    fn from(e: PrepError) -> Self {
        OffloadError::Prep(e)
    }
}

impl From<std::io::Error> for OffloadError {
    fn from(e: std::io::Error) -> Self {
        OffloadError::Io(e)
    }
}

// ---- edge server ----

struct Registered {
    tail: Arc<LayerGraph>,
    /// Serializes inference per model id.
    permit: Arc<Mutex<()>>,
}

/// Tail models the edge will serve, keyed by (model id, split code, input dims).
pub struct Registry {
    edge: ResourceProfile,
    entries: HashMap<(String, u16, (u32, u32, u32)), Registered>,
    permits: HashMap<String, Arc<Mutex<()>>>,
}

enum Lookup<'a> {
    Found(&'a Registered),
    UnknownModel,
    Mismatch,
}

impl Registry {
    pub fn new(edge: ResourceProfile) -> Self {
        Registry { edge, entries: HashMap::new(), permits: HashMap::new() }
    }

    /// Register a tail model for a split. The expected input dims come from
    /// the tail's own input shape.
    pub fn register(&mut self, model_id: &str, split: SplitId, tail: LayerGraph) -> Result<(), OffloadError> {
        let code = split_wire_code(split).ok_or(OffloadError::InvalidSplit { split })?;
        tail.validate()?;
        let s = tail.input_shape;
        let dims = (s.channels as u32, s.height as u32, s.width as u32);
        let permit = self.permits.entry(model_id.to_string()).or_default().clone();
        self.entries
            .insert((model_id.to_string(), code, dims), Registered { tail: Arc::new(tail), permit });
        Ok(())
    }

    fn lookup(&self, model_id: &str, code: u16, dims: (u32, u32, u32)) -> Lookup<'_> {
        if let Some(entry) = self.entries.get(&(model_id.to_string(), code, dims)) {
            return Lookup::Found(entry);
        }
        if self.entries.keys().any(|(id, _, _)| id == model_id) {
            Lookup::Mismatch
        } else {
            Lookup::UnknownModel
        }
    }
}

/// Running server; dropping it (or calling [`ServerHandle::shutdown`]) stops
/// the accept loop. Sessions end when their clients disconnect.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// Bind and serve until shutdown. Each connection gets its own session
/// thread; malformed frames are answered with error frames where the framing
/// is still recoverable, and the connection closes on a bad magic.
pub fn serve(registry: Registry, addr: impl ToSocketAddrs) -> Result<ServerHandle, OffloadError> {
    let listener = TcpListener::bind(addr).map_err(OffloadError::Bind)?;
    let local = listener.local_addr().map_err(OffloadError::Bind)?;
    listener.set_nonblocking(true).map_err(OffloadError::Bind)?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_accept = stop.clone();
    let shared = Arc::new(registry);

    let accept_thread = std::thread::spawn(move || {
        while !stop_accept.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let registry = shared.clone();
                    std::thread::spawn(move || session(stream, registry));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(_) => std::thread::sleep(Duration::from_millis(2)),
            }
        }
    });

    Ok(ServerHandle { addr: local, stop, accept_thread: Some(accept_thread) })
}

fn send_frame(stream: &mut TcpStream, frame: &Frame) -> Result<(), OffloadError> {
    let bytes = wire::encode(frame)?;
    stream.write_all(&bytes)?;
    stream.flush()?;
    Ok(())
}

fn request_id_hint(bytes: &[u8]) -> u64 {
    if bytes.len() >= 15 {
        u64::from_le_bytes(bytes[7..15].try_into().unwrap())
    } else {
        0
    }
}

fn session(mut stream: TcpStream, registry: Arc<Registry>) {
    let _ = stream.set_nodelay(true);
    let _ = stream.set_read_timeout(Some(Duration::from_secs(120)));
    loop {
        let bytes = match wire::read_frame_bytes(&mut stream) {
            Ok(b) => b,
            Err(WireError::BadMagic { .. }) => {
                // Cannot resynchronize; report and drop the connection.
                let _ = send_frame(&mut stream, &Frame::error(0, wire::reason::BAD_MAGIC, "bad frame magic"));
                return;
            }
            Err(_) => return, // EOF, timeout, oversized claim: nothing to salvage
        };
        let frame = match wire::decode(&bytes) {
            Ok((f, _)) => f,
            Err(e) => {
                // The length fields were coherent, so the stream stays in sync.
                let code = match e {
                    WireError::UnsupportedVersion { .. } => wire::reason::UNSUPPORTED_VERSION,
                    WireError::PayloadLengthMismatch { .. } => wire::reason::PAYLOAD_MISMATCH,
                    _ => wire::reason::INTERNAL,
                };
                let _ = send_frame(&mut stream, &Frame::error(request_id_hint(&bytes), code, &e.to_string()));
                continue;
            }
        };
        let reply = match frame.frame_type {
            FrameType::Ping => Frame::pong(frame.request_id),
            FrameType::InferRequest => answer_infer(&registry, frame),
            _ => Frame::error(frame.request_id, wire::reason::UNEXPECTED_FRAME, "unexpected frame type"),
        };
        if send_frame(&mut stream, &reply).is_err() {
            return;
        }
    }
}

fn answer_infer(registry: &Registry, frame: Frame) -> Frame {
    let id = frame.request_id;
    let entry = match registry.lookup(&frame.model_id, frame.split_index, frame.dims) {
        Lookup::Found(e) => e,
        Lookup::UnknownModel => {
            return Frame::error(id, wire::reason::UNKNOWN_MODEL, &format!("unknown model {:?}", frame.model_id))
        }
        Lookup::Mismatch => {
            return Frame::error(
                id,
                wire::reason::BAD_SPLIT,
                &format!("no tail for split {} with dims {:?}", frame.split_index, frame.dims),
            )
        }
    };
    let shape = Shape::new(frame.dims.0 as usize, frame.dims.1 as usize, frame.dims.2 as usize);
    let input = match Tensor::new(shape, frame.payload) {
        Ok(t) => t,
        Err(TensorError::NonFinite { .. }) => {
            return Frame::error(id, wire::reason::NON_FINITE_PAYLOAD, "payload contains non-finite values")
        }
        Err(e) => return Frame::error(id, wire::reason::SHAPE_MISMATCH, &e.to_string()),
    };

    let tail = entry.tail.clone();
    let scale = registry.edge.compute_scale;
    let guard = entry.permit.lock().unwrap_or_else(|p| p.into_inner());
    let (result, edge_us) = run_scaled(scale, || tail.forward(&input));
    drop(guard);

    match result {
        Ok(out) => {
            let s = out.shape();
            Frame {
                frame_type: FrameType::InferResponse,
                request_id: id,
                model_id: edge_us.to_string(),
                split_index: frame.split_index,
                dims: (s.channels as u32, s.height as u32, s.width as u32),
                payload: out.into_data(),
            }
        }
        Err(e) => Frame::error(id, wire::reason::EXECUTION_FAILED, &e.to_string()),
    }
}

// ---- device client ----

/// End-to-end latency split into its components, all in microseconds.
/// The components partition the wall-clock total.
#[derive(Clone, Copy, PartialEq, Debug, Default)]
pub struct LatencyReport {
    pub device_us: u64,
    pub tl_us: u64,
    pub serialize_us: u64,
    pub network_us: u64,
    pub edge_us: u64,
    pub deserialize_us: u64,
    pub total_us: u64,
}

impl LatencyReport {
    pub fn component_sum(&self) -> u64 {
        self.device_us + self.tl_us + self.serialize_us + self.network_us + self.edge_us + self.deserialize_us
    }
}

/// Runs the head slice and talks to the edge. For the local-only plan the
/// client executes the whole model and never touches the network.
pub struct DeviceClient {
    head: LayerGraph,
    device: ResourceProfile,
    shaper: LinkShaper,
    stream: Option<TcpStream>,
    model_id: String,
    split: SplitId,
    next_request_id: u64,
    log: Vec<LatencyReport>,
}

impl DeviceClient {
    /// Connect to an edge server (one reconnect attempt on failure).
    pub fn connect(
        addr: impl ToSocketAddrs + Copy,
        head: LayerGraph,
        device: ResourceProfile,
        shaper: LinkShaper,
        split: SplitId,
    ) -> Result<Self, OffloadError> {
        if split_wire_code(split).is_none() {
            return Err(OffloadError::InvalidSplit { split });
        }
        let stream = match TcpStream::connect(addr) {
            Ok(s) => s,
            Err(_) => TcpStream::connect(addr).map_err(OffloadError::Connect)?,
        };
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(DEFAULT_TIMEOUT))?;
        let model_id = head.name.clone();
        Ok(DeviceClient {
            head,
            device,
            shaper,
            stream: Some(stream),
            model_id,
            split,
            next_request_id: 1,
            log: Vec::new(),
        })
    }

    /// A client that executes the whole model on the device.
    pub fn local(graph: LayerGraph, device: ResourceProfile) -> Self {
        let model_id = graph.name.clone();
        DeviceClient {
            head: graph,
            device,
            shaper: LinkShaper::new(NetworkProfile::unlimited()),
            stream: None,
            model_id,
            split: SplitId::LocalOnly,
            next_request_id: 1,
            log: Vec::new(),
        }
    }

    pub fn set_timeout(&mut self, timeout: Duration) -> Result<(), OffloadError> {
        if let Some(s) = &self.stream {
            s.set_read_timeout(Some(timeout))?;
        }
        Ok(())
    }

    /// All reports collected so far, in request order.
    pub fn log(&self) -> &[LatencyReport] {
        &self.log
    }

    /// Round-trip a ping, returning the elapsed microseconds.
    pub fn ping(&mut self) -> Result<u64, OffloadError> {
        let id = self.next_request_id;
        self.next_request_id += 1;
        let stream = self.stream.as_mut().ok_or(OffloadError::Protocol { reason: "local client has no connection".into() })?;
        let start = Instant::now();
        let bytes = wire::encode(&Frame::ping(id))?;
        stream.write_all(&bytes)?;
        let reply = wire::read_frame(stream)?;
        if reply.frame_type != FrameType::Pong || reply.request_id != id {
            return Err(OffloadError::Protocol { reason: "expected matching pong".into() });
        }
        Ok(start.elapsed().as_micros() as u64)
    }

    /// Run one inference. The returned report partitions the wall-clock
    /// total into device compute, TL, serialization, network, edge compute
    /// (as reported by the server), and response deserialization.
    pub fn infer(&mut self, input: &Tensor) -> Result<(Tensor, LatencyReport), OffloadError> {
        if input.shape() != self.head.input_shape {
            return Err(OffloadError::Tensor(TensorError::ShapeMismatch {
                expected: self.head.input_shape.to_string(),
                actual: input.shape(),
            }));
        }
        let wall = Instant::now();

        // Trailing DeviceTL runs as its own timed stage.
        let units = self.head.unit_count();
        let has_tl = self
            .head
            .units
            .last()
            .map(|u| u.kind == crate::layers::LayerKind::DeviceTL)
            .unwrap_or(false);
        let compute_units = if has_tl { units - 1 } else { units };

        let (head_out, device_us) = run_scaled(self.device.compute_scale, || {
            self.head.forward_range(0, compute_units, input)
        });
        let head_out = head_out?;
        let (payload_tensor, tl_us) = if has_tl {
            let (pooled, us) = run_scaled(self.device.compute_scale, || max_pool_2x2(&head_out));
            (pooled?, us)
        } else {
            (head_out, 0)
        };

        let stream = match &mut self.stream {
            None => {
                // Local-only: everything already happened on the device.
                let total = wall.elapsed().as_micros() as u64;
                let report = LatencyReport { device_us, total_us: total, ..LatencyReport::default() };
                self.log.push(report);
                return Ok((payload_tensor, report));
            }
            Some(s) => s,
        };

        let id = self.next_request_id;
        self.next_request_id += 1;
        let dims = payload_tensor.shape();
        let split_code = split_wire_code(self.split).expect("checked at connect");

        let ser_start = Instant::now();
        let frame = Frame {
            frame_type: FrameType::InferRequest,
            request_id: id,
            model_id: self.model_id.clone(),
            split_index: split_code,
            dims: (dims.channels as u32, dims.height as u32, dims.width as u32),
            payload: payload_tensor.into_data(),
        };
        let bytes = wire::encode(&frame)?;
        let serialize_us = ser_start.elapsed().as_micros() as u64;

        let send_us = shaped_send(stream, &bytes, &mut self.shaper)?;

        let recv_start = Instant::now();
        let reply_bytes = wire::read_frame_bytes(stream)?;
        let recv_us = recv_start.elapsed().as_micros() as u64;

        let deser_start = Instant::now();
        let (reply, _) = wire::decode(&reply_bytes)?;
        let (output, edge_us) = match reply.frame_type {
            FrameType::InferResponse => {
                if reply.request_id != id {
                    return Err(OffloadError::Protocol {
                        reason: format!("response id {} for request {id}", reply.request_id),
                    });
                }
                let shape = Shape::new(reply.dims.0 as usize, reply.dims.1 as usize, reply.dims.2 as usize);
                let t = Tensor::new(shape, reply.payload)?;
                let edge_us: u64 = reply.model_id.parse().map_err(|_| OffloadError::Protocol {
                    reason: "response carries no edge time".into(),
                })?;
                (t, edge_us)
            }
            FrameType::Error => {
                return Err(OffloadError::ServerError { code: reply.split_index, message: reply.model_id })
            }
            other => return Err(OffloadError::Protocol { reason: format!("unexpected reply {other:?}") }),
        };
        let deserialize_us = deser_start.elapsed().as_micros() as u64;

        // The edge's compute always lies inside the send-to-reply window, so
        // subtracting it from that whole window attributes correctly even
        // when client and server threads timeshare one core.
        let report = LatencyReport {
            device_us,
            tl_us,
            serialize_us,
            network_us: (send_us + recv_us).saturating_sub(edge_us),
            edge_us,
            deserialize_us,
            total_us: wall.elapsed().as_micros() as u64,
        };
        self.log.push(report);
        Ok((output, report))
    }
}

// ---- experiments ----

/// Measured summary of one (model, split, variant, profile) configuration.
#[derive(Clone, PartialEq, Debug)]
pub struct ExperimentSummary {
    pub model: String,
    pub split: SplitId,
    pub variant: Variant,
    pub profile: NetworkProfile,
    pub n_requests: usize,
    pub median_total_us: u64,
    pub p95_total_us: u64,
    pub median_device_us: u64,
    pub median_tl_us: u64,
    pub median_serialize_us: u64,
    pub median_network_us: u64,
    pub median_edge_us: u64,
    pub median_deserialize_us: u64,
    /// Raw per-request log, in request order.
    pub reports: Vec<LatencyReport>,
}

/// Build the (head, tail) pair for a split/variant, inserting the transfer
/// layer when asked.
pub fn build_slices(graph: &LayerGraph, split: SplitId, variant: Variant) -> Result<(LayerGraph, LayerGraph), OffloadError> {
    match (variant, split) {
        (Variant::Tl, SplitId::Interior(i)) => {
            let tl = insert_tl(graph, i)?;
            Ok(split_model(&tl))
        }
        (Variant::Tl, other) => Err(OffloadError::InvalidSplit { split: other }),
        (Variant::NoTl, s) => {
            if s == SplitId::LocalOnly {
                return Err(OffloadError::InvalidSplit { split: s });
            }
            Ok(graph.split_at(s))
        }
    }
}

/// Run `n_requests` sequential inferences of one configuration against an
/// in-process edge server and summarize the component medians.
pub fn run_experiment(
    graph: &LayerGraph,
    split: SplitId,
    variant: Variant,
    device: &ResourceProfile,
    edge: &ResourceProfile,
    net: &NetworkProfile,
    n_requests: usize,
    seed: u64,
) -> Result<ExperimentSummary, OffloadError> {
    if n_requests < MIN_EXPERIMENT_REQUESTS {
        return Err(OffloadError::Protocol {
            reason: format!("n_requests {n_requests} below minimum of {MIN_EXPERIMENT_REQUESTS}"),
        });
    }
    graph.validate()?;
    let mut rng = Rng::new(seed);

    let mut client;
    let mut server = None;
    if split == SplitId::LocalOnly {
        client = DeviceClient::local(graph.clone(), device.clone());
    } else {
        let (head, tail) = build_slices(graph, split, variant)?;
        let mut registry = Registry::new(edge.clone());
        registry.register(&graph.name, split, tail)?;
        let handle = serve(registry, ("127.0.0.1", 0))?;
        client = DeviceClient::connect(
            handle.addr(),
            head,
            device.clone(),
            LinkShaper::new(*net),
            split,
        )?;
        server = Some(handle);
    }

    let mut reports = Vec::with_capacity(n_requests);
    for _ in 0..n_requests {
        let input = Tensor::random(graph.input_shape, &mut rng);
        let (_, report) = client.infer(&input)?;
        reports.push(report);
    }
    drop(client);
    if let Some(handle) = server {
        handle.shutdown();
    }

    let totals: Vec<u64> = reports.iter().map(|r| r.total_us).collect();
    let field = |f: fn(&LatencyReport) -> u64| -> u64 {
        let v: Vec<u64> = reports.iter().map(f).collect();
        median_us(&v)
    };
    Ok(ExperimentSummary {
        model: graph.name.clone(),
        split,
        variant: if split == SplitId::LocalOnly { Variant::NoTl } else { variant },
        profile: *net,
        n_requests,
        median_total_us: median_us(&totals),
        p95_total_us: percentile_us(&totals, 95),
        median_device_us: field(|r| r.device_us),
        median_tl_us: field(|r| r.tl_us),
        median_serialize_us: field(|r| r.serialize_us),
        median_network_us: field(|r| r.network_us),
        median_edge_us: field(|r| r.edge_us),
        median_deserialize_us: field(|r| r.deserialize_us),
        reports,
    })
}

/// Text table over experiment summaries, mirroring the planner's report
/// columns with measured numbers.
pub fn summary_table(rows: &[ExperimentSummary]) -> String {
    let mut out = String::new();
    if let Some(first) = rows.first() {
        out.push_str(&format!("# measured on {} under {} (n={} per row)\n", first.model, first.profile, first.n_requests));
    }
    out.push_str(&format!(
        "{:>6} {:>7} {:>10} {:>8} {:>9} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "split", "variant", "device_us", "tl_us", "serial_us", "net_us", "edge_us", "deser_us", "median_us", "p95_us"
    ));
    for s in rows {
        out.push_str(&format!(
            "{:>6} {:>7} {:>10} {:>8} {:>9} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            s.split.to_string(),
            s.variant.to_string(),
            s.median_device_us,
            s.median_tl_us,
            s.median_serialize_us,
            s.median_network_us,
            s.median_edge_us,
            s.median_deserialize_us,
            s.median_total_us,
            s.p95_total_us,
        ));
    }
    out
}

/// Per-request comma-separated log for one experiment.
pub fn raw_log_csv(summary: &ExperimentSummary) -> String {
    let mut out = String::from("request,device_us,tl_us,serialize_us,network_us,edge_us,deserialize_us,total_us\n");
    for (i, r) in summary.reports.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            i + 1,
            r.device_us,
            r.tl_us,
            r.serialize_us,
            r.network_us,
            r.edge_us,
            r.deserialize_us,
            r.total_us
        ));
    }
    out
}
