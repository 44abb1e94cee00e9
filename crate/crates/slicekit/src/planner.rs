//! The latency cost model and split ranking.
//!
//! For a benchmarked split, the predicted end-to-end latency decomposes into
//! device compute, transfer-layer compute (TL variant only), (de)serialization
//! of the shipped payload, communication, and edge compute. Communication is
//! `latency + payload_bits / bandwidth`; everything is kept in integer
//! microseconds with bandwidth in decimal megabits per second.
//!
//! The ranking is exhaustive: every candidate is costed and sorted, so the
//! chosen plan is the argmin by construction. Ties break toward the larger
//! split index (more units stay on the device, which leaks less of the
//! input).

use std::fmt;

use crate::bench::{BenchmarkRecord, BenchmarkRun};
use crate::graph::SplitId;

/// Bandwidth at or above this is treated as an unshaped link.
pub const UNLIMITED_MBPS: f64 = 1e9;

/// One-way uplink latency plus device-to-edge upload bandwidth.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct NetworkProfile {
    pub latency_ms: f64,
    pub upload_mbps: f64,
}

impl NetworkProfile {
    pub fn new(latency_ms: f64, upload_mbps: f64) -> Result<Self, PlanError> {
        if !latency_ms.is_finite() || latency_ms < 0.0 {
            return Err(PlanError::InvalidProfile { reason: format!("latency {latency_ms} must be >= 0") });
        }
        if !upload_mbps.is_finite() || upload_mbps <= 0.0 {
            return Err(PlanError::InvalidProfile { reason: format!("bandwidth {upload_mbps} must be > 0") });
        }
        Ok(NetworkProfile { latency_ms, upload_mbps })
    }

    /// A link with no added latency and effectively infinite bandwidth.
    pub fn unlimited() -> Self {
        NetworkProfile { latency_ms: 0.0, upload_mbps: UNLIMITED_MBPS }
    }

    pub fn is_unlimited(&self) -> bool {
        self.latency_ms == 0.0 && self.upload_mbps >= UNLIMITED_MBPS
    }
}

impl fmt::Display for NetworkProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}mbps/{}ms", self.upload_mbps, self.latency_ms)
    }
}

/// Whether a plan ships the pooled payload through the transfer layer.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Variant {
    Tl,
    NoTl,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Tl => write!(f, "tl"),
            Variant::NoTl => write!(f, "no-tl"),
        }
    }
}

/// Variant selection for ranking.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VariantFilter {
    Tl,
    NoTl,
    Both,
}

impl VariantFilter {
    fn includes(self, v: Variant) -> bool {
        matches!(
            (self, v),
            (VariantFilter::Both, _) | (VariantFilter::Tl, Variant::Tl) | (VariantFilter::NoTl, Variant::NoTl)
        )
    }
}

/// Full cost decomposition of one (split, variant) candidate, in integer
/// microseconds. `total_us` is the exact sum of the five components.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct CostBreakdown {
    pub split: SplitId,
    pub variant: Variant,
    pub device_us: u64,
    /// Transfer-layer compute (device pooling + edge upsampling); 0 for NoTl.
    pub tl_us: u64,
    /// Serialize + deserialize of the shipped payload.
    pub serial_us: u64,
    /// Latency plus transfer time of the shipped payload; 0 when nothing is sent.
    pub comm_us: u64,
    pub edge_us: u64,
    pub total_us: u64,
    /// Benefit of the transfer layer at this split (set on Tl candidates).
    pub delta_t_us: Option<i64>,
}

/// User constraints applied before ranking.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Constraints {
    /// Privacy floor: the chosen split index must be at least this (the
    /// local-only plan always satisfies it, raw-input offload never does).
    pub min_split_index: Option<usize>,
    pub max_total_latency_us: Option<u64>,
    pub variant: VariantFilter,
}

impl Constraints {
    pub fn none() -> Self {
        Constraints { min_split_index: None, max_total_latency_us: None, variant: VariantFilter::Both }
    }

    pub fn variant(v: VariantFilter) -> Self {
        Constraints { variant: v, ..Constraints::none() }
    }
}

/// Where a plan's numbers came from.
#[derive(Clone, PartialEq, Debug)]
pub struct Provenance {
    pub model: String,
    /// Benchmark identity: model name plus the run's creation stamp.
    pub source: String,
    pub profile: NetworkProfile,
}

/// Candidates in ascending total order; the head is the chosen plan.
#[derive(Clone, PartialEq, Debug)]
pub struct RankedPlan {
    pub candidates: Vec<CostBreakdown>,
    pub provenance: Provenance,
}

impl RankedPlan {
    pub fn chosen(&self) -> &CostBreakdown {
        &self.candidates[0]
    }
}

/// One row of a bandwidth/latency sweep.
#[derive(Clone, PartialEq, Debug)]
pub struct SweepRow {
    pub profile: NetworkProfile,
    pub split: SplitId,
    pub variant: Variant,
    pub total_us: u64,
}

#[derive(Debug, PartialEq)]
pub enum PlanError {
    NotTlEligible { split: SplitId },
    SplitMismatch { a: SplitId, b: SplitId },
    NoFeasiblePlan,
    InvalidProfile { reason: String },
    InvalidConstraints { reason: String },
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanError::NotTlEligible { split } => write!(f, "split {split} is not transfer-layer eligible"),
            PlanError::SplitMismatch { a, b } => write!(f, "cost breakdowns are for different splits ({a} vs {b})"),
            PlanError::NoFeasiblePlan => write!(f, "no candidate satisfies the constraints"),
            PlanError::InvalidProfile { reason } => write!(f, "invalid network profile: {reason}"),
            PlanError::InvalidConstraints { reason } => write!(f, "invalid constraints: {reason}"),
        }
    }
}

impl std::error::Error for PlanError {}

/// Communication time in microseconds: one-way latency plus transfer time of
/// `bytes` at the profile bandwidth (decimal megabits per second).
pub fn comm_us(bytes: u64, net: &NetworkProfile) -> u64 {
    (net.latency_ms * 1000.0 + bytes as f64 * 8.0 / net.upload_mbps).round() as u64
}

/// Cost of running a split with the transfer layer engaged.
pub fn cost_tl(record: &BenchmarkRecord, net: &NetworkProfile) -> Result<CostBreakdown, PlanError> {
    if !record.tl_eligible {
        return Err(PlanError::NotTlEligible { split: record.split });
    }
    let tl = record.device_tl_us + record.edge_tl_us;
    let serial = record.serialize_tl_us + record.deserialize_tl_us;
    let comm = comm_us(record.payload_bytes_tl, net);
    let total = record.device_head_us + tl + serial + comm + record.edge_tail_us;
    Ok(CostBreakdown {
        split: record.split,
        variant: Variant::Tl,
        device_us: record.device_head_us,
        tl_us: tl,
        serial_us: serial,
        comm_us: comm,
        edge_us: record.edge_tail_us,
        total_us: total,
        delta_t_us: None,
    })
}

/// Cost of running a split without the transfer layer. The local-only
/// sentinel has no transfer at all, so its serialization and communication
/// terms are zero.
pub fn cost_no_tl(record: &BenchmarkRecord, net: &NetworkProfile) -> CostBreakdown {
    let (serial, comm) = if record.split == SplitId::LocalOnly {
        (0, 0)
    } else {
        (
            record.serialize_no_tl_us + record.deserialize_no_tl_us,
            comm_us(record.payload_bytes_no_tl, net),
        )
    };
    let total = record.device_head_us + serial + comm + record.edge_tail_us;
    CostBreakdown {
        split: record.split,
        variant: Variant::NoTl,
        device_us: record.device_head_us,
        tl_us: 0,
        serial_us: serial,
        comm_us: comm,
        edge_us: record.edge_tail_us,
        total_us: total,
        delta_t_us: None,
    }
}

/// Benefit of the transfer layer at one split: what the plain path spends on
/// serialization and communication minus what the TL path spends on TL
/// compute, serialization, and communication. Positive means the TL wins.
pub fn delta_t(tl: &CostBreakdown, no_tl: &CostBreakdown) -> Result<i64, PlanError> {
    if tl.split != no_tl.split {
        return Err(PlanError::SplitMismatch { a: tl.split, b: no_tl.split });
    }
    Ok((no_tl.serial_us + no_tl.comm_us) as i64 - (tl.tl_us + tl.serial_us + tl.comm_us) as i64)
}

/// Cost every record under `net`, producing the NoTl breakdown for each
/// split and the Tl breakdown (with its delta) where eligible.
pub fn cost_all(run: &BenchmarkRun, net: &NetworkProfile) -> Vec<CostBreakdown> {
    let mut out = Vec::new();
    for record in &run.records {
        let plain = cost_no_tl(record, net);
        out.push(plain);
        if record.tl_eligible {
            let mut with_tl = cost_tl(record, net).expect("eligible record costs");
            with_tl.delta_t_us = Some(delta_t(&with_tl, &plain).expect("same split"));
            out.push(with_tl);
        }
    }
    out
}

fn satisfies(bd: &CostBreakdown, constraints: &Constraints) -> bool {
    if !constraints.variant.includes(bd.variant) {
        return false;
    }
    if let Some(min) = constraints.min_split_index {
        if bd.split < SplitId::Interior(min) {
            return false;
        }
    }
    if let Some(max) = constraints.max_total_latency_us {
        if bd.total_us > max {
            return false;
        }
    }
    true
}

/// Exhaustively cost, filter, and sort the candidates. The head of the
/// returned plan is the chosen split.
pub fn rank(run: &BenchmarkRun, net: &NetworkProfile, constraints: &Constraints) -> Result<RankedPlan, PlanError> {
    if let Some(min) = constraints.min_split_index {
        let max_interior = run
            .records
            .iter()
            .filter_map(|r| match r.split {
                SplitId::Interior(i) => Some(i),
                _ => None,
            })
            .max();
        match max_interior {
            Some(max) if min <= max => {}
            _ => {
                return Err(PlanError::InvalidConstraints {
                    reason: format!("min split index {min} exceeds the last interior boundary"),
                })
            }
        }
    }

    let mut candidates: Vec<CostBreakdown> =
        cost_all(run, net).into_iter().filter(|bd| satisfies(bd, constraints)).collect();
    if candidates.is_empty() {
        return Err(PlanError::NoFeasiblePlan);
    }
    candidates.sort_by(|a, b| a.total_us.cmp(&b.total_us).then(b.split.cmp(&a.split)));
    Ok(RankedPlan {
        candidates,
        provenance: Provenance {
            model: run.model.clone(),
            source: format!("{}@{}", run.model, run.created_unix),
            profile: *net,
        },
    })
}

/// Rank under each profile in turn.
pub fn sweep(
    run: &BenchmarkRun,
    nets: &[NetworkProfile],
    constraints: &Constraints,
) -> Result<Vec<SweepRow>, PlanError> {
    let mut rows = Vec::with_capacity(nets.len());
    for net in nets {
        let plan = rank(run, net, constraints)?;
        let chosen = plan.chosen();
        rows.push(SweepRow { profile: *net, split: chosen.split, variant: chosen.variant, total_us: chosen.total_us });
    }
    Ok(rows)
}

/// Render a plan as an aligned text table.
pub fn report_table(plan: &RankedPlan) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# plan for {} under {} (source {})\n",
        plan.provenance.model, plan.provenance.profile, plan.provenance.source
    ));
    out.push_str(&format!(
        "{:>6} {:>7} {:>10} {:>8} {:>9} {:>10} {:>10} {:>10} {:>10}\n",
        "split", "variant", "device_us", "tl_us", "serial_us", "comm_us", "edge_us", "total_us", "delta_t_us"
    ));
    for bd in &plan.candidates {
        let delta = bd.delta_t_us.map(|d| d.to_string()).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:>6} {:>7} {:>10} {:>8} {:>9} {:>10} {:>10} {:>10} {:>10}\n",
            bd.split.to_string(),
            bd.variant.to_string(),
            bd.device_us,
            bd.tl_us,
            bd.serial_us,
            bd.comm_us,
            bd.edge_us,
            bd.total_us,
            delta
        ));
    }
    out
}

/// Render a plan as comma-separated rows for plotting.
pub fn report_csv(plan: &RankedPlan) -> String {
    let mut out = String::from("split,variant,device_us,tl_us,serial_us,comm_us,edge_us,total_us,delta_t_us\n");
    for bd in &plan.candidates {
        let delta = bd.delta_t_us.map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            bd.split, bd.variant, bd.device_us, bd.tl_us, bd.serial_us, bd.comm_us, bd.edge_us, bd.total_us, delta
        ));
    }
    out
}
