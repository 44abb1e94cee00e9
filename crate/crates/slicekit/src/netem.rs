//! In-process uplink emulation: added one-way latency plus token-paced
//! bandwidth, so experiments over a constrained link run anywhere without
//! OS-level traffic control.
//!
//! Latency is applied once per message as a sleep before the first byte.
//! Bandwidth is enforced by writing fixed-size chunks and sleeping until the
//! cumulative byte count matches the profile rate. Only the uplink is shaped;
//! the response path rides the raw transport. An `unlimited` profile is a
//! strict pass-through.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use crate::planner::NetworkProfile;

/// Pacing granularity. Smaller chunks track the target rate more closely at
/// the price of more sleeps; 16 KiB keeps the sleep-granularity error under
/// a percent at tens of megabits per second.
pub const DEFAULT_CHUNK_BYTES: usize = 16 * 1024;

/// Environment variable that overrides profile specs, for CI.
pub const NET_PROFILE_ENV: &str = "SLICEKIT_NET_PROFILE";

/// Errors from profile parsing.
#[derive(Debug, PartialEq)]
pub enum NetError {
    Parse { token: String, reason: String },
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::Parse { token, reason } => write!(f, "invalid network profile {token:?}: {reason}"),
        }
    }
}

impl std::error::Error for NetError {}

/// Parse a profile spec of the form `<number>mbps/<number>ms`, or the word
/// `unlimited` for a pass-through link.
pub fn parse_profile(spec: &str) -> Result<NetworkProfile, NetError> {
    let s = spec.trim().to_ascii_lowercase();
    if s == "unlimited" {
        return Ok(NetworkProfile::unlimited());
    }
    let fail = |reason: &str| NetError::Parse { token: spec.to_string(), reason: reason.into() };
    let (bw_part, lat_part) = s.split_once('/').ok_or_else(|| fail("expected <number>mbps/<number>ms"))?;
    let bw_num = bw_part.strip_suffix("mbps").ok_or_else(|| fail("bandwidth must end in mbps"))?;
    let lat_num = lat_part.strip_suffix("ms").ok_or_else(|| fail("latency must end in ms"))?;
    let upload_mbps: f64 = bw_num.trim().parse().map_err(|_| fail("bandwidth is not a number"))?;
    let latency_ms: f64 = lat_num.trim().parse().map_err(|_| fail("latency is not a number"))?;
    NetworkProfile::new(latency_ms, upload_mbps)
        .map_err(|e| NetError::Parse { token: spec.to_string(), reason: e.to_string() })
}

/// Profile from the `SLICEKIT_NET_PROFILE` environment variable when set,
/// otherwise from `spec`.
pub fn profile_from_env_or(spec: &str) -> Result<NetworkProfile, NetError> {
    match std::env::var(NET_PROFILE_ENV) {
        Ok(v) if !v.trim().is_empty() => parse_profile(&v),
        _ => parse_profile(spec),
    }
}

/// Shapes one sender's uplink. A shaper must not be shared between
/// concurrent senders; `&mut self` on [`shaped_send`] enforces that.
#[derive(Clone, Debug)]
pub struct LinkShaper {
    pub profile: NetworkProfile,
    pub chunk_bytes: usize,
}

impl LinkShaper {
    pub fn new(profile: NetworkProfile) -> Self {
        LinkShaper { profile, chunk_bytes: DEFAULT_CHUNK_BYTES }
    }

    pub fn with_chunk_bytes(profile: NetworkProfile, chunk_bytes: usize) -> Self {
        LinkShaper { profile, chunk_bytes: chunk_bytes.max(1) }
    }
}

/// Write `bytes` through the shaper: sleep the one-way latency once, then
/// pace chunks so the cumulative rate tracks the profile bandwidth. Each
/// chunk is written at the fluid-model completion time of its last byte, so
/// the receiver sees data no earlier than a real link would deliver it.
/// Returns the measured elapsed time in microseconds.
pub fn shaped_send(conn: &mut impl Write, bytes: &[u8], shaper: &mut LinkShaper) -> std::io::Result<u64> {
    let start = Instant::now();
    let profile = shaper.profile;
    if profile.is_unlimited() {
        conn.write_all(bytes)?;
        conn.flush()?;
        return Ok(start.elapsed().as_micros() as u64);
    }

    if profile.latency_ms > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(profile.latency_ms / 1000.0));
    }

    let pace = crate::planner::UNLIMITED_MBPS > profile.upload_mbps;
    let t0 = Instant::now();
    let mut sent = 0usize;
    for chunk in bytes.chunks(shaper.chunk_bytes) {
        sent += chunk.len();
        if pace {
            let target = Duration::from_secs_f64(sent as f64 * 8.0 / (profile.upload_mbps * 1e6));
            let elapsed = t0.elapsed();
            if target > elapsed {
                std::thread::sleep(target - elapsed);
            }
        }
        conn.write_all(chunk)?;
    }
    conn.flush()?;
    Ok(start.elapsed().as_micros() as u64)
}
