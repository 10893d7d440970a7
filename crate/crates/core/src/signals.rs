//! Piecewise-constant switching signals: representation, generators for the
//! dwell-time style classes, and finite-horizon class verifiers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::rng;

/// Maximum number of switches any generator will produce.
pub const MAX_SWITCHES: usize = 1_000_000;

/// Exact window enumeration is used up to this many switches.
pub const EXACT_WINDOW_LIMIT: usize = 10_000;

/// A right-continuous piecewise-constant input on `[0, horizon)`: the value
/// on `[switch_times[k], switch_times[k+1])` is `values[k]` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    switch_times: Vec<f64>,
    values: Vec<usize>,
    horizon: f64,
}

impl SwitchingSignal {
    /// Validates and normalizes (null switches removed).
    pub fn new(switch_times: Vec<f64>, values: Vec<usize>, horizon: f64) -> Result<Self> {
        if switch_times.is_empty() || switch_times.len() != values.len() {
            return Err(Error::input("signal needs matching, nonempty switch_times and values"));
        }
        if switch_times[0] != 0.0 {
            return Err(Error::input("first switch time must be 0"));
        }
        if switch_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("switch times must be strictly increasing"));
        }
        if switch_times.iter().any(|t| !t.is_finite()) || !horizon.is_finite() {
            return Err(Error::input("nonfinite time in signal"));
        }
        if !(horizon > *switch_times.last().expect("nonempty")) {
            return Err(Error::input("horizon must exceed the last switch time"));
        }
        if values.contains(&0) {
            return Err(Error::input("subsystem indices are 1-based"));
        }
        Ok(SwitchingSignal {
            switch_times,
            values,
            horizon,
        }
        .normalized())
    }

    /// Constant input `i` on `[0, horizon)`.
    pub fn constant(index: usize, horizon: f64) -> Result<Self> {
        SwitchingSignal::new(vec![0.0], vec![index], horizon)
    }

    /// Drops switches whose value equals the previous one.
    pub fn normalized(&self) -> Self {
        let mut times = Vec::with_capacity(self.switch_times.len());
        let mut values: Vec<usize> = Vec::with_capacity(self.values.len());
        for (&t, &v) in self.switch_times.iter().zip(&self.values) {
            if values.last() != Some(&v) {
                times.push(t);
                values.push(v);
            }
        }
        SwitchingSignal {
            switch_times: times,
            values,
            horizon: self.horizon,
        }
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of discontinuities (the jump at t = 0 is not counted).
    pub fn num_switches(&self) -> usize {
        self.switch_times.len() - 1
    }

    /// Value at `t` (right-continuous); times beyond the horizon take the
    /// last value.
    pub fn value_at(&self, t: f64) -> usize {
        let k = self.switch_times.partition_point(|&s| s <= t);
        self.values[k.max(1) - 1]
    }

    /// `(start, end, value)` for each constancy interval; the last one ends
    /// at the horizon.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.values.len()).map(move |k| {
            let end = self.switch_times.get(k + 1).copied().unwrap_or(self.horizon);
            (self.switch_times[k], end, self.values[k])
        })
    }

    pub fn max_index(&self) -> usize {
        self.values.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassParameters {
    pub dwell: f64,
    pub chatter_bound: u32,
    pub persistence_period: f64,
    pub window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DwellCheck {
    pub holds: bool,
    /// Smallest gap between consecutive switch times (including t = 0);
    /// infinite for a signal without discontinuities.
    pub min_gap: f64,
}

/// True iff every gap between consecutive switch times is at least `dwell`.
pub fn verify_dwell_time(u: &SwitchingSignal, dwell: f64) -> Result<DwellCheck> {
    if !(dwell > 0.0) {
        return Err(Error::input("dwell time must be positive"));
    }
    let min_gap = u
        .switch_times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(DwellCheck {
        holds: min_gap >= dwell,
        min_gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AverageDwellCheck {
    pub holds: bool,
    /// `min (N₀ + τ/δ − N(t, t+τ))` over the windows examined; negative
    /// when violated.
    pub worst_margin: f64,
    pub worst_window_start: f64,
    pub worst_window_length: f64,
    pub exact: bool,
}

const WINDOW_SLACK: f64 = 1e-9;

/// Checks `N(t, t+τ) ≤ N₀ + τ/δ` for every open window inside the horizon.
///
/// Up to [`EXACT_WINDOW_LIMIT`] switches the supremum is computed exactly
/// from the switch events; beyond that windows are enumerated on a grid of
/// pitch `window_grid` (default: a quarter of the minimum gap).
pub fn verify_average_dwell_time(
    u: &SwitchingSignal,
    dwell: f64,
    chatter_bound: u32,
    window_grid: Option<f64>,
) -> Result<AverageDwellCheck> {
    if !(dwell > 0.0) {
        return Err(Error::input("average dwell time must be positive"));
    }
    let events = &u.switch_times[1..];
    let n0 = chatter_bound as f64;
    if events.is_empty() {
        return Ok(AverageDwellCheck {
            holds: true,
            worst_margin: n0,
            worst_window_start: 0.0,
            worst_window_length: 0.0,
            exact: true,
        });
    }
    if events.len() <= EXACT_WINDOW_LIMIT {
        // A window just covering events a..=b has count b-a+1 and length
        // tending to s_b - s_a, so margin = N₀ - 1 + g_b - g_a with
        // g_k = s_k/δ - k; minimize over a ≤ b in one pass.
        let mut best = f64::INFINITY;
        let mut arg = (0, 0);
        let mut max_g = f64::NEG_INFINITY;
        let mut max_k = 0;
        for (k, &s) in events.iter().enumerate() {
            let g = s / dwell - k as f64;
            if g > max_g {
                max_g = g;
                max_k = k;
            }
            let m = n0 - 1.0 + g - max_g;
            if m < best {
                best = m;
                arg = (max_k, k);
            }
        }
        return Ok(AverageDwellCheck {
            holds: best >= -WINDOW_SLACK,
            worst_margin: best,
            worst_window_start: events[arg.0],
            worst_window_length: events[arg.1] - events[arg.0],
            exact: true,
        });
    }

    let min_gap = verify_dwell_time(u, dwell)?.min_gap;
    let pitch = window_grid.unwrap_or(min_gap / 4.0);
    if !(pitch > 0.0) {
        return Err(Error::input("window grid pitch must be positive"));
    }
    let steps = (u.horizon / pitch).ceil() as usize;
    if steps.saturating_mul(steps) > 4 * MAX_SWITCHES * 100 {
        return Err(Error::input("window grid too fine for the horizon"));
    }
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..steps {
        let t = i as f64 * pitch;
        // events strictly inside (t, t + τ), advanced incrementally in τ
        let lo = events.partition_point(|&s| s <= t);
        let mut hi = lo;
        for j in 1..=(steps - i) {
            let tau = j as f64 * pitch;
            while hi < events.len() && events[hi] < t + tau {
                hi += 1;
            }
            let m = n0 + tau / dwell - (hi - lo) as f64;
            if m < best.0 {
                best = (m, t, tau);
            }
        }
    }
    Ok(AverageDwellCheck {
        holds: best.0 >= -WINDOW_SLACK,
        worst_margin: best.0,
        worst_window_start: best.1,
        worst_window_length: best.2,
        exact: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistentDwellCheck {
    pub holds: bool,
    /// Times `t_k` with the input constant on `[t_k, t_k + δ)`.
    pub witness: Vec<f64>,
}

/// Greedy search for `t_0 < t_1 < …` with `u` constant on `[t_k, t_k+δ)`,
/// `t_0 ≤ T` and `t_{k+1} − t_k ≤ T`, each step taking the latest admissible
/// time. Succeeds once a witness reaches `horizon − T`.
pub fn verify_persistent_dwell_time(u: &SwitchingSignal, dwell: f64, period: f64) -> Result<PersistentDwellCheck> {
    if !(dwell > 0.0) || !(period > 0.0) {
        return Err(Error::input("persistent dwell time and period must be positive"));
    }
    // Admissible start intervals [a, b - δ] per constancy segment.
    let admissible: Vec<(f64, f64)> = u
        .segments()
        .filter(|(a, b, _)| b - a >= dwell)
        .map(|(a, b, _)| (a, b - dwell))
        .collect();
    let target = u.horizon - period;
    let latest_before = |limit: f64, after: f64| -> Option<f64> {
        admissible
            .iter()
            .rev()
            .filter(|(a, _)| *a <= limit)
            .map(|(_, b)| b.min(limit))
            .find(|&s| s > after)
    };
    let mut witness = Vec::new();
    let mut reach = period;
    let mut last = f64::NEG_INFINITY;
    loop {
        match latest_before(reach, last) {
            Some(t) => {
                witness.push(t);
                if t >= target {
                    return Ok(PersistentDwellCheck { holds: true, witness });
                }
                last = t;
                reach = t + period;
            }
            None => return Ok(PersistentDwellCheck { holds: false, witness }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexLaw {
    /// 1, 2, …, p, 1, 2, …
    RoundRobin,
    /// Uniform among the indices different from the current one.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DwellLaw {
    /// Gaps are uniform in `[δ, gap_factor·δ]`.
    pub gap_factor: f64,
    pub index_law: IndexLaw,
}

impl Default for DwellLaw {
    fn default() -> Self {
        DwellLaw {
            gap_factor: 3.0,
            index_law: IndexLaw::Uniform,
        }
    }
}

fn next_index<R: Rng>(r: &mut R, law: IndexLaw, p: usize, current: usize) -> usize {
    match law {
        IndexLaw::RoundRobin => current % p + 1,
        IndexLaw::Uniform => {
            let k = r.random_range(1..p);
            if k >= current {
                k + 1
            } else {
                k
            }
        }
    }
}

/// Random dwell-time signal, deterministic per seed.
pub fn generate_dwell_time(seed: u64, p: usize, dwell: f64, horizon: f64, law: &DwellLaw) -> Result<SwitchingSignal> {
    if p == 0 || !(dwell > 0.0) || !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::input("need p ≥ 1, δ > 0 and a positive finite horizon"));
    }
    if !(law.gap_factor > 1.0) {
        return Err(Error::input("gap factor must exceed 1"));
    }
    if p == 1 {
        return SwitchingSignal::constant(1, horizon);
    }
    if horizon / dwell > MAX_SWITCHES as f64 {
        return Err(Error::input("too many switches for the horizon"));
    }
    let mut r = rng(seed);
    let mut current = match law.index_law {
        IndexLaw::RoundRobin => 1,
        IndexLaw::Uniform => r.random_range(1..=p),
    };
    let mut times = vec![0.0];
    let mut values = vec![current];
    let mut t = 0.0;
    loop {
        t += dwell * r.random_range(1.0..law.gap_factor);
        if t >= horizon {
            break;
        }
        current = next_index(&mut r, law.index_law, p, current);
        times.push(t);
        values.push(current);
    }
    SwitchingSignal::new(times, values, horizon)
}

/// Round-robin signal switching every `period` (the first switch at
/// `period`); with `period = δ` this is back-to-back δ-switching.
pub fn generate_periodic(p: usize, period: f64, horizon: f64) -> Result<SwitchingSignal> {
    if p == 0 || !(period > 0.0) || !(horizon > 0.0) {
        return Err(Error::input("need p ≥ 1, period > 0 and horizon > 0"));
    }
    if p == 1 {
        return SwitchingSignal::constant(1, horizon);
    }
    let n = (horizon / period).ceil() as usize;
    if n > MAX_SWITCHES {
        return Err(Error::input("too many switches for the horizon"));
    }
    let times: Vec<f64> = (0..n).map(|k| k as f64 * period).filter(|&t| t < horizon).collect();
    let values = (0..times.len()).map(|k| k % p + 1).collect();
    SwitchingSignal::new(times, values, horizon)
}

/// Finite truncation of a chaotic input: on the `k`-th window
/// `[kτ, (k+1)τ)` the constancy intervals have length `τ·q^k`, indices
/// cycling round-robin across windows so no two adjacent intervals merge.
pub fn generate_chaotic_like(p: usize, window: f64, horizon: f64, shrink: f64) -> Result<SwitchingSignal> {
    if p < 2 {
        return Err(Error::input("a chaotic-like signal needs at least two subsystems"));
    }
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::input("shrink factor must lie in (0, 1)"));
    }
    if !(window > 0.0) || !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::input("window and horizon must be positive"));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut index = 0usize;
    let mut k = 0usize;
    loop {
        let start = k as f64 * window;
        if start >= horizon {
            break;
        }
        let end = ((k + 1) as f64 * window).min(horizon);
        let len = window * shrink.powi(k as i32);
        let mut t = start;
        let mut j = 0usize;
        while t < end {
            times.push(t);
            values.push(index % p + 1);
            index += 1;
            if times.len() > MAX_SWITCHES {
                return Err(Error::input(format!(
                    "chaotic-like signal exceeds {MAX_SWITCHES} switches"
                )));
            }
            j += 1;
            t = start + j as f64 * len;
        }
        k += 1;
    }
    SwitchingSignal::new(times, values, horizon)
}

/// `ū(t) = u(t)` on `[0, T)` and `ū(t) = i` on `[T, new_horizon)`.
pub fn constant_tail(u: &SwitchingSignal, tail_start: f64, index: usize, new_horizon: f64) -> Result<SwitchingSignal> {
    if !(tail_start >= 0.0) || tail_start > u.horizon || u.horizon > new_horizon {
        return Err(Error::input("need 0 ≤ T ≤ horizon ≤ new horizon"));
    }
    if index == 0 {
        return Err(Error::input("subsystem indices are 1-based"));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (&t, &v) in u.switch_times.iter().zip(&u.values) {
        if t < tail_start {
            times.push(t);
            values.push(v);
        }
    }
    times.push(tail_start);
    values.push(index);
    if times.len() >= 2 && times[times.len() - 2] == tail_start {
        times.remove(times.len() - 2);
        values.remove(values.len() - 2);
    }
    let horizon = if new_horizon > tail_start {
        new_horizon
    } else {
        // Degenerate tail of zero length still needs a valid horizon.
        tail_start + f64::EPSILON.max(tail_start * f64::EPSILON)
    };
    SwitchingSignal::new(times, values, horizon)
}
