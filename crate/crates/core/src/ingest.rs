//! Turn raw trip CSVs (or a synthetic generator) into the demand tensor,
//! travel-time distributions, and initial bike placements the simulator
//! consumes.
//!
//! Trip CSV schema (comma-separated, UTF-8, header required):
//!
//! ```text
//! order_id,bike_id,user_id,start_time,start_lng,start_lat,end_time,end_lng,end_lat,trace
//! ```
//!
//! Columns may appear in any order; `trace` is optional and ignored.
//! Timestamps are ISO-8601 local time (`2016-08-01T08:30:00`, a space in
//! place of the `T` is accepted). Weekdays are Monday through Friday of the
//! start timestamp.

use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::RegionGrid;
use crate::types::{DemandTensor, TripRecord};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("no trips to aggregate")]
    EmptyTripList,
    #[error("timeslot count {0} does not divide a 24-hour day evenly")]
    BadSlotCount(usize),
    #[error("demand tensor is all zeros")]
    ZeroDemand,
    #[error("region {0} receives bikes but its location pool is empty")]
    EmptyPool(usize),
    #[error("invalid synthesis parameters: {0}")]
    BadSynthesisParams(String),
}

/// Why a CSV row was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DropReason {
    MalformedTimestamp,
    MalformedNumber,
    NegativeDuration,
    OutOfArea,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::MalformedTimestamp => "malformed timestamp",
            DropReason::MalformedNumber => "malformed number",
            DropReason::NegativeDuration => "negative duration",
            DropReason::OutOfArea => "out of area",
        }
    }
}

/// Per-file accounting of accepted and rejected rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub accepted: usize,
    pub dropped: Vec<(DropReason, usize)>,
}

impl ParseReport {
    fn bump(&mut self, reason: DropReason) {
        if let Some(entry) = self.dropped.iter_mut().find(|(r, _)| *r == reason) {
            entry.1 += 1;
        } else {
            self.dropped.push((reason, 1));
            self.dropped.sort_by_key(|(r, _)| *r);
        }
    }

    pub fn total_dropped(&self) -> usize {
        self.dropped.iter().map(|(_, n)| n).sum()
    }
}

const REQUIRED_COLUMNS: [&str; 9] = [
    "order_id",
    "bike_id",
    "user_id",
    "start_time",
    "start_lng",
    "start_lat",
    "end_time",
    "end_lng",
    "end_lat",
];

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s.trim(), "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s.trim(), "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s.trim(), "%Y-%m-%d %H:%M"))
        .ok()
}

/// Parse a trip CSV, keeping well-formed rows whose endpoints fall inside
/// the grid. Rows are dropped (never fatal) for malformed timestamps or
/// numbers, negative durations, and out-of-area endpoints.
pub fn parse_trajectories(
    path: &Path,
    grid: &RegionGrid,
) -> Result<(Vec<TripRecord>, ParseReport), IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers = reader.headers()?.clone();
    let mut col = HashMap::new();
    for (idx, name) in headers.iter().enumerate() {
        col.insert(name.trim().to_string(), idx);
    }
    let mut index = [0usize; 9];
    for (k, name) in REQUIRED_COLUMNS.iter().enumerate() {
        index[k] = *col
            .get(*name)
            .ok_or(IngestError::MissingColumn(REQUIRED_COLUMNS[k]))?;
    }

    let mut trips = Vec::new();
    let mut report = ParseReport::default();
    for record in reader.records() {
        let record = record?;
        let field = |k: usize| record.get(index[k]).unwrap_or("");

        let (start_time, end_time) = match (parse_timestamp(field(3)), parse_timestamp(field(6))) {
            (Some(s), Some(e)) => (s, e),
            _ => {
                report.bump(DropReason::MalformedTimestamp);
                continue;
            }
        };
        let nums: Option<Vec<f64>> = [field(4), field(5), field(7), field(8)]
            .iter()
            .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let Some(nums) = nums else {
            report.bump(DropReason::MalformedNumber);
            continue;
        };
        if end_time < start_time {
            report.bump(DropReason::NegativeDuration);
            continue;
        }
        let start_loc = (nums[0], nums[1]);
        let end_loc = (nums[2], nums[3]);
        if grid.region_of(start_loc.0, start_loc.1).is_none()
            || grid.region_of(end_loc.0, end_loc.1).is_none()
        {
            report.bump(DropReason::OutOfArea);
            continue;
        }
        trips.push(TripRecord {
            order_id: field(0).to_string(),
            bike_id: field(1).to_string(),
            user_id: field(2).to_string(),
            start_time,
            end_time,
            start_loc,
            end_loc,
        });
        report.accepted += 1;
    }
    Ok((trips, report))
}

/// Observed ride durations in minutes per origin-destination pair, plus the
/// fallback rule for unseen pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DurationHistogram {
    samples: HashMap<(usize, usize), Vec<u32>>,
}

impl DurationHistogram {
    pub fn record(&mut self, origin: usize, dest: usize, minutes: u32) {
        self.samples.entry((origin, dest)).or_default().push(minutes);
    }

    pub fn samples(&self, origin: usize, dest: usize) -> Option<&[u32]> {
        self.samples.get(&(origin, dest)).map(Vec::as_slice)
    }

    /// Travel time in minutes for a trip leaving `origin` for `dest`: a
    /// uniform draw from the observed durations, or, for unseen pairs,
    /// grid Manhattan distance at four minutes per cell (at least one).
    pub fn sample_minutes<R: Rng>(
        &self,
        origin: usize,
        dest: usize,
        grid: &RegionGrid,
        rng: &mut R,
    ) -> u32 {
        if let Some(samples) = self.samples.get(&(origin, dest)) {
            samples[rng.gen_range(0..samples.len())]
        } else {
            (grid.manhattan_cells(origin, dest) as u32 * 4).max(1)
        }
    }
}

/// Sum weekday trips into a per-slot OD tensor for one representative day,
/// recording ride durations per OD pair along the way.
pub fn aggregate_weekday_demand(
    trips: &[TripRecord],
    grid: &RegionGrid,
    slots_per_day: usize,
) -> Result<(DemandTensor, DurationHistogram), IngestError> {
    if trips.is_empty() {
        return Err(IngestError::EmptyTripList);
    }
    if slots_per_day == 0 || 1440 % slots_per_day != 0 {
        return Err(IngestError::BadSlotCount(slots_per_day));
    }
    let minutes_per_slot = 1440 / slots_per_day;
    let mut tensor = DemandTensor::zeros(slots_per_day, grid.len());
    let mut hist = DurationHistogram::default();
    for trip in trips {
        let weekday = trip.start_time.weekday().number_from_monday();
        if weekday > 5 {
            continue;
        }
        let (Some(origin), Some(dest)) = (
            grid.region_of(trip.start_loc.0, trip.start_loc.1),
            grid.region_of(trip.end_loc.0, trip.end_loc.1),
        ) else {
            continue;
        };
        let minute_of_day =
            trip.start_time.time().hour() as usize * 60 + trip.start_time.time().minute() as usize;
        let slot = minute_of_day / minutes_per_slot;
        tensor.add(slot, origin, dest, 1);
        hist.record(origin, dest, trip.duration_minutes());
    }
    Ok((tensor, hist))
}

/// Inflate observed demand for censoring: when a region had no bikes for a
/// fraction of a slot, the riders who found nothing went unrecorded. Each
/// entry becomes `round(d / (1 − outage))`, capped at `cap_multiplier` times
/// the observed count; a full outage falls back to the cap.
pub fn correct_lost_demand(
    demand: &DemandTensor,
    outage: &[Vec<f64>],
    cap_multiplier: f64,
) -> DemandTensor {
    let mut out = DemandTensor::zeros(demand.slots(), demand.regions());
    for t in 0..demand.slots() {
        for i in 0..demand.regions() {
            let frac = outage[t][i].clamp(0.0, 1.0);
            for l in 0..demand.regions() {
                let observed = demand.get(t, i, l);
                let cap = ((observed as f64) * cap_multiplier).round() as u32;
                let corrected = if frac >= 1.0 {
                    cap
                } else {
                    (((observed as f64) / (1.0 - frac)).round() as u32).min(cap)
                };
                out.set(t, i, l, corrected.max(observed));
            }
        }
    }
    out
}

/// Parameters of the synthetic weekday generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    pub regions: usize,
    pub slots_per_day: usize,
    pub daily_volume: u32,
    /// Morning and evening rush-hour slots.
    pub peak_slots: (usize, usize),
    /// Share of peak trips that commute between the residential and work
    /// halves of the grid (residential = lower region indices).
    pub commute_fraction: f64,
    pub seed: u64,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self {
            regions: 9,
            slots_per_day: 24,
            daily_volume: 2000,
            peak_slots: (8, 18),
            commute_fraction: 0.6,
            seed: 7,
        }
    }
}

/// Width of the rush-hour peaks, in slots.
const PEAK_SIGMA: f64 = 1.5;
/// Share of daily volume spread uniformly over the day.
const UNIFORM_FLOOR: f64 = 0.2;

/// Deterministic synthetic weekday demand: a bimodal slot profile (two
/// discretized Gaussians over the peak slots plus a uniform floor) with a
/// commute pattern that sends morning-peak trips from residential regions
/// to work regions and reverses them in the evening.
pub fn synthesize_demand(params: &SynthesisParams) -> Result<DemandTensor, IngestError> {
    let n = params.regions;
    let t_slots = params.slots_per_day;
    if n == 0 || t_slots == 0 {
        return Err(IngestError::BadSynthesisParams(
            "regions and slots must be positive".into(),
        ));
    }
    if params.daily_volume == 0 {
        return Err(IngestError::BadSynthesisParams(
            "daily_volume must be positive".into(),
        ));
    }
    if params.peak_slots.0 >= t_slots || params.peak_slots.1 >= t_slots {
        return Err(IngestError::BadSynthesisParams(format!(
            "peak slots {:?} outside 0..{t_slots}",
            params.peak_slots
        )));
    }
    if !(0.0..=1.0).contains(&params.commute_fraction) {
        return Err(IngestError::BadSynthesisParams(
            "commute_fraction must be in [0, 1]".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    // per-region attractiveness jitter makes different seeds give different
    // spatial patterns while totals stay exact
    let attract: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();

    let gauss = |t: usize, mu: usize| -> f64 {
        let d = t as f64 - mu as f64;
        (-d * d / (2.0 * PEAK_SIGMA * PEAK_SIGMA)).exp()
    };
    let morning_raw: Vec<f64> = (0..t_slots).map(|t| gauss(t, params.peak_slots.0)).collect();
    let evening_raw: Vec<f64> = (0..t_slots).map(|t| gauss(t, params.peak_slots.1)).collect();
    let m_sum: f64 = morning_raw.iter().sum();
    let e_sum: f64 = evening_raw.iter().sum();

    // slot weights: floor + half of the peaked mass per Gaussian
    let mut weights = vec![0.0f64; t_slots];
    let mut morning_share = vec![0.0f64; t_slots];
    let mut evening_share = vec![0.0f64; t_slots];
    for t in 0..t_slots {
        let floor = UNIFORM_FLOOR / t_slots as f64;
        let m = (1.0 - UNIFORM_FLOOR) * 0.5 * morning_raw[t] / m_sum;
        let e = (1.0 - UNIFORM_FLOOR) * 0.5 * evening_raw[t] / e_sum;
        weights[t] = floor + m + e;
        morning_share[t] = m;
        evening_share[t] = e;
    }
    let slot_volumes = largest_remainder(params.daily_volume as u64, &weights);

    // residential = lower half of indices (rounded up), work = the rest
    let split = n.div_ceil(2);
    let residential: Vec<usize> = (0..split).collect();
    let work: Vec<usize> = (split..n).collect();

    let mut tensor = DemandTensor::zeros(t_slots, n);
    let mut od_weights = vec![0.0f64; n * n];
    for t in 0..t_slots {
        let volume = slot_volumes[t];
        if volume == 0 {
            continue;
        }
        let peaked = morning_share[t] + evening_share[t];
        let commute_w = if work.is_empty() {
            0.0
        } else {
            params.commute_fraction * peaked / weights[t]
        };
        let morning_w = if peaked > 0.0 {
            commute_w * morning_share[t] / peaked
        } else {
            0.0
        };
        let evening_w = commute_w - morning_w;

        for (i, wi) in attract.iter().enumerate() {
            for (l, wl) in attract.iter().enumerate() {
                let mut w = (1.0 - commute_w) * wi * wl;
                let res_to_work = i < split && l >= split;
                let work_to_res = i >= split && l < split;
                if res_to_work {
                    w += morning_w * wi * wl * (n * n) as f64
                        / (residential.len() * work.len().max(1)) as f64;
                }
                if work_to_res {
                    w += evening_w * wi * wl * (n * n) as f64
                        / (residential.len() * work.len().max(1)) as f64;
                }
                od_weights[i * n + l] = w;
            }
        }
        let cells = largest_remainder(volume, &od_weights);
        for i in 0..n {
            for l in 0..n {
                tensor.set(t, i, l, cells[i * n + l] as u32);
            }
        }
    }
    Ok(tensor)
}

/// Apportion `total` integer units proportionally to `weights`, assigning
/// the rounding residue to the largest remainders (ties broken by lower
/// index). Exact: the result always sums to `total`.
pub fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum <= 0.0 || weights.is_empty() {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|w| total as f64 * w.max(0.0) / weight_sum)
        .collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut remainder_order: Vec<usize> = (0..weights.len()).collect();
    remainder_order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut leftover = total.saturating_sub(assigned);
    for &idx in remainder_order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[idx] += 1;
        leftover -= 1;
    }
    counts
}

/// Per-region bike placements: counts proportional to each region's share
/// of total demand (largest-remainder exact), positions drawn uniformly
/// with replacement from the region's location pool.
pub fn initial_bike_distribution(
    total_supply: u32,
    demand: &DemandTensor,
    pool: &[Vec<(f64, f64)>],
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>, IngestError> {
    let origin = demand.origin_totals();
    if origin.iter().all(|&d| d == 0) {
        return Err(IngestError::ZeroDemand);
    }
    let weights: Vec<f64> = origin.iter().map(|&d| d as f64).collect();
    let counts = largest_remainder(total_supply as u64, &weights);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placements = Vec::with_capacity(demand.regions());
    for (region, &count) in counts.iter().enumerate() {
        if count > 0 && pool.get(region).map_or(true, |p| p.is_empty()) {
            return Err(IngestError::EmptyPool(region));
        }
        let mut bikes = Vec::with_capacity(count as usize);
        for _ in 0..count {
            bikes.push(*pool[region].choose(&mut rng).unwrap());
        }
        placements.push(bikes);
    }
    Ok(placements)
}

/// Uniformly sampled location pool, `per_region` candidate parking spots in
/// every cell.
pub fn uniform_location_pool(
    grid: &RegionGrid,
    per_region: usize,
    seed: u64,
) -> Vec<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.len())
        .map(|region| {
            (0..per_region)
                .map(|_| grid.sample_point_in(region, &mut rng))
                .collect()
        })
        .collect()
}

/// Fleet size rule: orders times 3.65 / 20, the national bikes-per-order
/// ratio, rounded to the nearest whole bike.
pub fn default_total_supply(order_count: u64) -> u64 {
    (order_count as f64 * 3.65 / 20.0).round() as u64
}
