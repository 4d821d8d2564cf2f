//! Nonhomogeneous Poisson arrival generation by thinning.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::calibrate::ArrivalRateTable;
use crate::eventlog::DayKind;
use crate::rng;

/// Generates one day of arrivals as `(second, class index)` pairs, merged
/// over classes and time-sorted.
///
/// Each class runs an independent piecewise-constant-rate Poisson process
/// over the table's horizon, thinned against the class's maximum hourly
/// rate. Class substreams are derived from `seed`, so generating a single
/// class in isolation reproduces its arrivals exactly.
pub fn generate_arrivals(
    rates: &ArrivalRateTable,
    day_kind: DayKind,
    seed: u64,
) -> Vec<(u64, u16)> {
    let start_s = rates.start_hour as f64 * 3600.0;
    let end_s = (rates.start_hour as u64 + rates.n_hours as u64) as f64 * 3600.0;

    let mut arrivals: Vec<(u64, u16)> = Vec::new();
    for class in 0..rates.n_classes() {
        let lam_max = rates.max_rate(class, day_kind);
        if lam_max <= 0.0 {
            continue;
        }
        let lam_per_sec = lam_max / 3600.0;
        let mut rng = rng::stream_rng(seed, class as u64);
        let mut t = start_s;
        loop {
            let e: f64 = Exp1.sample(&mut rng);
            t += e / lam_per_sec;
            if t >= end_s {
                break;
            }
            let hour = (t / 3600.0) as u32;
            let rate = rates.rate(class, day_kind, hour);
            if rng.random::<f64>() * lam_max < rate {
                arrivals.push((t as u64, class as u16));
            }
        }
    }
    arrivals.sort_unstable();
    arrivals
}
