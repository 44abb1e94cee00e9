//! Empirical per-split measurement: head/tail execution times, transfer-layer
//! compute times, (de)serialization times, and exact payload sizes.
//!
//! All times are medians over at least [`MIN_REPETITIONS`] runs after
//! [`WARMUP_RUNS`] warm-ups, taken on the monotonic clock. Byte fields are
//! exact functions of shape and carry no timing noise. Communication time is
//! deliberately not measured here; the planner computes it from a
//! [`crate::planner::NetworkProfile`] and the offloader validates it
//! end to end.
//!
//! Benchmarking is strictly single-threaded; running two benchmarks on one
//! host at the same time is unsupported.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::graph::{enumerate_split_points, propagate_shapes, LayerGraph, ModelError, SplitId};
use crate::layers::forward;
use crate::tensor::{max_pool_2x2, nn_upsample_2x, Tensor, TensorError};
use crate::timing::{median_us, monotonic_us, run_scaled};
use crate::wire::{self, Frame, FrameType};

/// Floor on benchmark repetitions.
pub const MIN_REPETITIONS: u32 = 20;
/// Untimed passes before measurement starts.
pub const WARMUP_RUNS: u32 = 3;

const RECORDS_HEADER: &str = "# slicekit-bench v1";
const RECORD_COLUMNS: usize = 14;

/// A resource tier: native speed (1.0) or an artificial slowdown multiplier
/// emulating a weaker machine.
#[derive(Clone, PartialEq, Debug)]
pub struct ResourceProfile {
    pub name: String,
    pub compute_scale: f64,
}

impl ResourceProfile {
    pub fn new(name: impl Into<String>, compute_scale: f64) -> Result<Self, BenchError> {
        if !(compute_scale >= 1.0) || !compute_scale.is_finite() {
            return Err(BenchError::InvalidScale { got: compute_scale });
        }
        Ok(ResourceProfile { name: name.into(), compute_scale })
    }

    /// Native-speed profile.
    pub fn native(name: impl Into<String>) -> Self {
        ResourceProfile { name: name.into(), compute_scale: 1.0 }
    }
}

/// Per-split empirical measurements. Serialization fields are kept separately
/// for the full-size and downsampled payloads so both cost-model variants are
/// backed by measurement rather than scaling.
#[derive(Clone, PartialEq, Debug)]
pub struct BenchmarkRecord {
    pub split: SplitId,
    pub tl_eligible: bool,
    pub device_head_us: u64,
    pub edge_tail_us: u64,
    pub device_tl_us: u64,
    pub edge_tl_us: u64,
    pub serialize_no_tl_us: u64,
    pub deserialize_no_tl_us: u64,
    pub serialize_tl_us: u64,
    pub deserialize_tl_us: u64,
    pub payload_bytes_no_tl: u64,
    pub payload_bytes_tl: u64,
    pub repetitions: u32,
    /// Monotonic microseconds at record creation; wall-clock time lives only
    /// in the file metadata.
    pub timestamp_us: u64,
}

/// A benchmark result set plus the context needed to reuse it later.
#[derive(Clone, PartialEq, Debug)]
pub struct BenchmarkRun {
    pub model: String,
    pub device: ResourceProfile,
    pub edge: ResourceProfile,
    pub created_unix: u64,
    pub records: Vec<BenchmarkRecord>,
}

impl BenchmarkRun {
    pub fn record(&self, split: SplitId) -> Option<&BenchmarkRecord> {
        self.records.iter().find(|r| r.split == split)
    }
}

/// Errors from benchmarking and the record file format.
#[derive(Debug)]
pub enum BenchError {
    RepetitionsBelowFloor { got: u32 },
    InvalidScale { got: f64 },
    Parse { line: usize, reason: String },
    VersionMismatch { got: String },
    /// A loaded record violates payload_tl <= payload_no_tl.
    PayloadInvariant { split: SplitId },
    Model(ModelError),
    Tensor(TensorError),
    Io(std::io::Error),
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchError::RepetitionsBelowFloor { got } => {
                write!(f, "repetitions {got} below floor of {MIN_REPETITIONS}")
            }
            BenchError::InvalidScale { got } => write!(f, "compute scale {got} must be >= 1.0"),
            BenchError::Parse { line, reason } => write!(f, "record file parse error at line {line}: {reason}"),
            BenchError::VersionMismatch { got } => write!(f, "unsupported record file header {got:?}"),
            BenchError::PayloadInvariant { split } => {
                write!(f, "record at split {split} has a downsampled payload larger than the full one")
            }
            BenchError::Model(e) => write!(f, "{e}"),
            BenchError::Tensor(e) => write!(f, "{e}"),
            BenchError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<ModelError> for BenchError {
    fn from(e: ModelError) -> Self {
        BenchError::Model(e)
    }
}

impl From<TensorError> for BenchError {
    fn from(e: TensorError) -> Self {
        BenchError::Tensor(e)
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e)
    }
}

/// Median wire encode/decode times and the exact frame size for one tensor.
/// Decode includes rebuilding the tensor, matching what the edge does per
/// request.
pub fn measure_serialization(t: &Tensor, model_id: &str, reps: u32) -> Result<(u64, u64, u64), BenchError> {
    if reps < MIN_REPETITIONS {
        return Err(BenchError::RepetitionsBelowFloor { got: reps });
    }
    let dims = t.shape();
    let frame = Frame {
        frame_type: FrameType::InferRequest,
        request_id: 0,
        model_id: model_id.to_string(),
        split_index: 0,
        dims: (dims.channels as u32, dims.height as u32, dims.width as u32),
        payload: t.data().to_vec(),
    };
    let mut ser = Vec::with_capacity(reps as usize);
    let mut deser = Vec::with_capacity(reps as usize);
    let mut bytes_len = 0u64;
    for _ in 0..WARMUP_RUNS {
        let bytes = wire::encode(&frame).expect("benchmark frame encodes");
        let _ = wire::decode(&bytes).expect("benchmark frame decodes");
    }
    for _ in 0..reps {
        let (bytes, ser_us) = run_scaled(1.0, || wire::encode(&frame).expect("benchmark frame encodes"));
        bytes_len = bytes.len() as u64;
        let (restored, deser_us) = run_scaled(1.0, || {
            let (decoded, _) = wire::decode(&bytes).expect("benchmark frame decodes");
            Tensor::new(dims, decoded.payload).expect("benchmark payload is finite")
        });
        debug_assert_eq!(restored.data(), t.data());
        ser.push(ser_us);
        deser.push(deser_us);
    }
    Ok((median_us(&ser), median_us(&deser), bytes_len))
}

/// Benchmark every split point of `graph` with the device and edge resource
/// profiles, producing one record per candidate (sentinels included).
pub fn benchmark_model(
    graph: &LayerGraph,
    device: &ResourceProfile,
    edge: &ResourceProfile,
    input: &Tensor,
    reps: u32,
) -> Result<BenchmarkRun, BenchError> {
    if reps < MIN_REPETITIONS {
        return Err(BenchError::RepetitionsBelowFloor { got: reps });
    }
    graph.validate()?;
    if input.shape() != graph.input_shape {
        return Err(BenchError::Tensor(TensorError::ShapeMismatch {
            expected: graph.input_shape.to_string(),
            actual: input.shape(),
        }));
    }

    let n = graph.unit_count();
    let points = enumerate_split_points(graph)?;
    propagate_shapes(graph)?;

    // Boundary tensors after each unit, and their pooled forms where eligible.
    let mut boundaries: Vec<Tensor> = Vec::with_capacity(n);
    let mut t = input.clone();
    for unit in &graph.units {
        t = forward(unit, &t)?;
        boundaries.push(t.clone());
    }
    let mut pooled: Vec<Option<Tensor>> = vec![None; n];
    for p in &points {
        if let SplitId::Interior(i) = p.id {
            if p.tl_eligible {
                pooled[i] = Some(max_pool_2x2(&boundaries[i]).expect("eligible boundary pools"));
            }
        }
    }

    // Timed passes: per repetition, one device-scaled and one edge-scaled
    // sweep over all units, plus the TL kernels at eligible boundaries.
    let run_pass = |scale: f64, times: Option<&mut Vec<Vec<u64>>>| -> Result<(), BenchError> {
        let mut x = input.clone();
        let mut per_unit = Vec::with_capacity(n);
        for unit in &graph.units {
            let (next, us) = run_scaled(scale, || forward(unit, &x));
            x = next?;
            per_unit.push(us);
        }
        if let Some(times) = times {
            times.push(per_unit);
        }
        Ok(())
    };

    for _ in 0..WARMUP_RUNS {
        run_pass(device.compute_scale, None)?;
        run_pass(edge.compute_scale, None)?;
    }

    let mut device_times: Vec<Vec<u64>> = Vec::with_capacity(reps as usize);
    let mut edge_times: Vec<Vec<u64>> = Vec::with_capacity(reps as usize);
    let mut tl_device: Vec<Vec<u64>> = vec![Vec::new(); n];
    let mut tl_edge: Vec<Vec<u64>> = vec![Vec::new(); n];
    for _ in 0..reps {
        run_pass(device.compute_scale, Some(&mut device_times))?;
        run_pass(edge.compute_scale, Some(&mut edge_times))?;
        for (i, p) in pooled.iter().enumerate() {
            if let Some(pooled_t) = p {
                let (_, dev_us) = run_scaled(device.compute_scale, || max_pool_2x2(&boundaries[i]));
                let (_, edge_us) = run_scaled(edge.compute_scale, || nn_upsample_2x(pooled_t));
                tl_device[i].push(dev_us);
                tl_edge[i].push(edge_us);
            }
        }
    }

    let head_median = |cut: usize| -> u64 {
        let sums: Vec<u64> = device_times.iter().map(|rep| rep[..cut].iter().sum()).collect();
        median_us(&sums)
    };
    let tail_median = |cut: usize| -> u64 {
        let sums: Vec<u64> = edge_times.iter().map(|rep| rep[cut..].iter().sum()).collect();
        median_us(&sums)
    };

    let mut records = Vec::with_capacity(points.len());
    for p in &points {
        let record = match p.id {
            SplitId::LocalOnly => BenchmarkRecord {
                split: p.id,
                tl_eligible: false,
                device_head_us: head_median(n),
                edge_tail_us: 0,
                device_tl_us: 0,
                edge_tl_us: 0,
                serialize_no_tl_us: 0,
                deserialize_no_tl_us: 0,
                serialize_tl_us: 0,
                deserialize_tl_us: 0,
                payload_bytes_no_tl: 0,
                payload_bytes_tl: 0,
                repetitions: reps,
                timestamp_us: monotonic_us(),
            },
            SplitId::FullOffload => {
                let (ser, deser, bytes) = measure_serialization(input, &graph.name, reps)?;
                debug_assert_eq!(bytes, p.output_bytes);
                BenchmarkRecord {
                    split: p.id,
                    tl_eligible: false,
                    device_head_us: 0,
                    edge_tail_us: tail_median(0),
                    device_tl_us: 0,
                    edge_tl_us: 0,
                    serialize_no_tl_us: ser,
                    deserialize_no_tl_us: deser,
                    serialize_tl_us: 0,
                    deserialize_tl_us: 0,
                    payload_bytes_no_tl: p.output_bytes,
                    payload_bytes_tl: 0,
                    repetitions: reps,
                    timestamp_us: monotonic_us(),
                }
            }
            SplitId::Interior(i) => {
                let (ser, deser, bytes) = measure_serialization(&boundaries[i], &graph.name, reps)?;
                debug_assert_eq!(bytes, p.output_bytes);
                let mut rec = BenchmarkRecord {
                    split: p.id,
                    tl_eligible: p.tl_eligible,
                    device_head_us: head_median(i + 1),
                    edge_tail_us: tail_median(i + 1),
                    device_tl_us: 0,
                    edge_tl_us: 0,
                    serialize_no_tl_us: ser,
                    deserialize_no_tl_us: deser,
                    serialize_tl_us: 0,
                    deserialize_tl_us: 0,
                    payload_bytes_no_tl: p.output_bytes,
                    payload_bytes_tl: 0,
                    repetitions: reps,
                    timestamp_us: monotonic_us(),
                };
                if let Some(pooled_t) = &pooled[i] {
                    let (ser_tl, deser_tl, bytes_tl) = measure_serialization(pooled_t, &graph.name, reps)?;
                    rec.device_tl_us = median_us(&tl_device[i]);
                    rec.edge_tl_us = median_us(&tl_edge[i]);
                    rec.serialize_tl_us = ser_tl;
                    rec.deserialize_tl_us = deser_tl;
                    rec.payload_bytes_tl = bytes_tl;
                }
                rec
            }
        };
        records.push(record);
    }

    Ok(BenchmarkRun {
        model: graph.name.clone(),
        device: device.clone(),
        edge: edge.clone(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        records,
    })
}

/// Write records as line-oriented text with a `#` metadata header.
pub fn save_records(run: &BenchmarkRun, path: impl AsRef<Path>) -> Result<(), BenchError> {
    let mut out = String::new();
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    out.push_str(&format!("# model {}\n", run.model));
    out.push_str(&format!("# device {} {}\n", run.device.name, run.device.compute_scale));
    out.push_str(&format!("# edge {} {}\n", run.edge.name, run.edge.compute_scale));
    out.push_str(&format!("# created {}\n", run.created_unix));
    out.push_str(
        "# columns: split tl device_head_us edge_tail_us device_tl_us edge_tl_us \
         ser_no_tl_us deser_no_tl_us ser_tl_us deser_tl_us payload_no_tl payload_tl reps timestamp_us\n",
    );
    for r in &run.records {
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {}\n",
            r.split,
            r.tl_eligible as u8,
            r.device_head_us,
            r.edge_tail_us,
            r.device_tl_us,
            r.edge_tl_us,
            r.serialize_no_tl_us,
            r.deserialize_no_tl_us,
            r.serialize_tl_us,
            r.deserialize_tl_us,
            r.payload_bytes_no_tl,
            r.payload_bytes_tl,
            r.repetitions,
            r.timestamp_us,
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Load a record file, validating the format version and record invariants.
pub fn load_records(path: impl AsRef<Path>) -> Result<BenchmarkRun, BenchError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, first) = lines.next().ok_or(BenchError::Parse { line: 1, reason: "empty file".into() })?;
    if first.trim() != RECORDS_HEADER {
        return Err(BenchError::VersionMismatch { got: first.trim().to_string() });
    }

    let mut model = String::new();
    let mut device = ResourceProfile::native("device");
    let mut edge = ResourceProfile::native("edge");
    let mut created_unix = 0u64;
    let mut records = Vec::new();

    for (idx, raw) in lines {
        let line_no = idx + 1;
        let err = |reason: String| BenchError::Parse { line: line_no, reason };
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let tokens: Vec<&str> = meta.split_whitespace().collect();
            match tokens.as_slice() {
                ["model", name] => model = name.to_string(),
                ["device", name, scale] => {
                    let s: f64 = scale.parse().map_err(|_| err(format!("invalid device scale {scale:?}")))?;
                    device = ResourceProfile::new(*name, s)?;
                }
                ["edge", name, scale] => {
                    let s: f64 = scale.parse().map_err(|_| err(format!("invalid edge scale {scale:?}")))?;
                    edge = ResourceProfile::new(*name, s)?;
                }
                ["created", ts] => {
                    created_unix = ts.parse().map_err(|_| err(format!("invalid created stamp {ts:?}")))?;
                }
                _ => {} // comments and the columns line
            }
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != RECORD_COLUMNS {
            return Err(err(format!("expected {RECORD_COLUMNS} columns, got {}", cols.len())));
        }
        let split: SplitId = cols[0].parse().map_err(err)?;
        let flag: u8 = cols[1].parse().map_err(|_| err(format!("invalid tl flag {:?}", cols[1])))?;
        let num = |i: usize| -> Result<u64, BenchError> {
            cols[i].parse::<u64>().map_err(|_| BenchError::Parse {
                line: line_no,
                reason: format!("invalid number {:?} in column {}", cols[i], i + 1),
            })
        };
        let record = BenchmarkRecord {
            split,
            tl_eligible: flag != 0,
            device_head_us: num(2)?,
            edge_tail_us: num(3)?,
            device_tl_us: num(4)?,
            edge_tl_us: num(5)?,
            serialize_no_tl_us: num(6)?,
            deserialize_no_tl_us: num(7)?,
            serialize_tl_us: num(8)?,
            deserialize_tl_us: num(9)?,
            payload_bytes_no_tl: num(10)?,
            payload_bytes_tl: num(11)?,
            repetitions: num(12)? as u32,
            timestamp_us: num(13)?,
        };
        if record.repetitions < MIN_REPETITIONS {
            return Err(BenchError::RepetitionsBelowFloor { got: record.repetitions });
        }
        if record.tl_eligible && record.payload_bytes_tl > record.payload_bytes_no_tl {
            return Err(BenchError::PayloadInvariant { split: record.split });
        }
        records.push(record);
    }

    Ok(BenchmarkRun { model, device, edge, created_unix, records })
}
