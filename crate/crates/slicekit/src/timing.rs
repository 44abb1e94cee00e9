//! Monotonic-clock helpers shared by the benchmark and the runtime.

use std::sync::OnceLock;
use std::time::Instant;

fn epoch() -> Instant {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    *EPOCH.get_or_init(Instant::now)
}

/// Microseconds on the process-local monotonic clock.
pub fn monotonic_us() -> u64 {
    epoch().elapsed().as_micros() as u64
}

/// Run `f`, then busy-wait until the elapsed wall time reaches
/// `scale` times the native duration. `scale` = 1.0 is a plain timed call.
/// Returns the result and the (scaled) elapsed microseconds.
///
/// This is how a slower resource tier is emulated on a single host: the
/// math is identical, only the clock cost changes.
pub fn run_scaled<R>(scale: f64, f: impl FnOnce() -> R) -> (R, u64) {
    let start = Instant::now();
    let out = f();
    if scale > 1.0 {
        let target = start.elapsed().mul_f64(scale);
        while start.elapsed() < target {
            std::hint::spin_loop();
        }
    }
    (out, start.elapsed().as_micros() as u64)
}

/// Median of a sample; for even sizes, the mean of the middle pair.
/// Panics on an empty slice.
pub fn median_us(samples: &[u64]) -> u64 {
    assert!(!samples.is_empty(), "median of empty sample");
    let mut v = samples.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

/// p-th percentile (nearest-rank). `p` in [0, 100].
pub fn percentile_us(samples: &[u64], p: u32) -> u64 {
    assert!(!samples.is_empty(), "percentile of empty sample");
    let mut v = samples.to_vec();
    v.sort_unstable();
    let rank = ((p as usize) * v.len()).div_ceil(100);
    v[rank.saturating_sub(1).min(v.len() - 1)]
}
