//! Domain types shared by the ingest pipeline, the simulator, and the agents.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::Scalar;

/// One raw trip from the trajectory data.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub order_id: String,
    pub bike_id: String,
    pub user_id: String,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    /// (longitude, latitude) where the ride started.
    pub start_loc: (f64, f64),
    /// (longitude, latitude) where the ride ended.
    pub end_loc: (f64, f64),
}

impl TripRecord {
    /// Ride duration in whole minutes, at least one.
    pub fn duration_minutes(&self) -> u32 {
        let mins = (self.end_time - self.start_time).num_minutes();
        mins.max(1) as u32
    }
}

/// Origin-destination demand counts per timeslot: `d[t][i][l]` riders intend
/// to go from region `i` to region `l` during slot `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandTensor {
    slots: usize,
    regions: usize,
    data: Vec<u32>,
}

impl DemandTensor {
    pub fn zeros(slots: usize, regions: usize) -> Self {
        Self {
            slots,
            regions,
            data: vec![0; slots * regions * regions],
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    #[inline]
    fn idx(&self, t: usize, i: usize, l: usize) -> usize {
        debug_assert!(t < self.slots && i < self.regions && l < self.regions);
        (t * self.regions + i) * self.regions + l
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, l: usize) -> u32 {
        self.data[self.idx(t, i, l)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, l: usize, v: u32) {
        let idx = self.idx(t, i, l);
        self.data[idx] = v;
    }

    pub fn add(&mut self, t: usize, i: usize, l: usize, v: u32) {
        let idx = self.idx(t, i, l);
        self.data[idx] += v;
    }

    /// Total demand across all slots and OD pairs.
    pub fn total(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }

    /// Demand originating in each region, summed over slots and destinations.
    pub fn origin_totals(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.regions];
        for t in 0..self.slots {
            for i in 0..self.regions {
                for l in 0..self.regions {
                    out[i] += self.get(t, i, l) as u64;
                }
            }
        }
        out
    }

    /// Demand originating in region `i` during slot `t`.
    pub fn origin_in_slot(&self, t: usize, i: usize) -> u32 {
        (0..self.regions).map(|l| self.get(t, i, l)).sum()
    }

    /// Total demand in slot `t`.
    pub fn slot_total(&self, t: usize) -> u64 {
        let mut sum = 0u64;
        for i in 0..self.regions {
            for l in 0..self.regions {
                sum += self.get(t, i, l) as u64;
            }
        }
        sum
    }
}

/// Per-region pickup incentive in RMB, one price per origin region; the same
/// price applies to every neighboring region of the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceAction(pub Vec<Scalar>);

impl PriceAction {
    pub fn zeros(regions: usize) -> Self {
        Self(vec![0.0; regions])
    }

    pub fn regions(&self) -> usize {
        self.0.len()
    }

    /// Clamp every price into `[0, p_max]`, mapping non-finite entries to 0.
    pub fn clipped(&self, p_max: Scalar) -> Self {
        Self(
            self.0
                .iter()
                .map(|&p| if p.is_finite() { p.clamp(0.0, p_max) } else { 0.0 })
                .collect(),
        )
    }
}

/// Number of per-region features in an [`Observation`] besides the
/// un-service window: supply, last demand, last arrivals, last expense.
pub const REGION_BASE_FEATURES: usize = 4;

/// The flat MDP state: per-region blocks of
/// `[S_i, D_i(t-1), A_i(t-1), E_i(t-1), U_i(oldest..newest)]` followed by a
/// single trailing remaining-budget scalar. Length `n·(4+W) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    regions: usize,
    window: usize,
    data: Vec<Scalar>,
}

impl Observation {
    pub fn new(regions: usize, window: usize, data: Vec<Scalar>) -> Self {
        assert_eq!(data.len(), regions * (REGION_BASE_FEATURES + window) + 1);
        debug_assert!(data.iter().all(|v| v.is_finite()), "observation must be finite");
        Self {
            regions,
            window,
            data,
        }
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[Scalar] {
        &self.data
    }

    fn region_stride(&self) -> usize {
        REGION_BASE_FEATURES + self.window
    }

    /// The feature block of one region (without the budget scalar).
    pub fn region_slice(&self, i: usize) -> &[Scalar] {
        let s = self.region_stride();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn supply(&self, i: usize) -> Scalar {
        self.region_slice(i)[0]
    }

    pub fn last_demand(&self, i: usize) -> Scalar {
        self.region_slice(i)[1]
    }

    pub fn last_arrivals(&self, i: usize) -> Scalar {
        self.region_slice(i)[2]
    }

    pub fn last_expense(&self, i: usize) -> Scalar {
        self.region_slice(i)[3]
    }

    /// Un-service rates of region `i`, oldest first.
    pub fn unservice_window(&self, i: usize) -> &[Scalar] {
        &self.region_slice(i)[REGION_BASE_FEATURES..]
    }

    pub fn remaining_budget(&self) -> Scalar {
        *self.data.last().unwrap()
    }
}

/// One bike standing in a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bike {
    pub id: u32,
    /// (longitude, latitude) where the bike is parked.
    pub loc: (f64, f64),
}

/// A bike currently riding toward its destination region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InTransit {
    pub bike_id: u32,
    pub dest_region: usize,
    /// Absolute minute (from episode start) at whose beginning the bike
    /// becomes available in the destination region.
    pub arrival_minute: u64,
}

/// Ground truth the simulator evolves: bikes, budget, and the rolling
/// un-service window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Bikes standing in each region.
    pub supply: Vec<Vec<Bike>>,
    /// Bikes currently riding, in departure order.
    pub in_transit: Vec<InTransit>,
    pub remaining_budget: Scalar,
    /// Per-region un-service rates for the last `W` timeslots, oldest first.
    pub unservice_window: Vec<Vec<Scalar>>,
    pub last_demand: Vec<u32>,
    pub last_arrival: Vec<u32>,
    pub last_expense: Vec<Scalar>,
}

impl SystemState {
    pub fn new(regions: usize, window: usize, budget: Scalar) -> Self {
        Self {
            supply: vec![Vec::new(); regions],
            in_transit: Vec::new(),
            remaining_budget: budget,
            unservice_window: vec![vec![0.0; window]; regions],
            last_demand: vec![0; regions],
            last_arrival: vec![0; regions],
            last_expense: vec![0.0; regions],
        }
    }

    pub fn regions(&self) -> usize {
        self.supply.len()
    }

    /// Bikes standing per region plus the number still riding.
    pub fn census(&self) -> (Vec<u32>, u32) {
        (
            self.supply.iter().map(|b| b.len() as u32).collect(),
            self.in_transit.len() as u32,
        )
    }

    /// Total fleet size: standing plus riding.
    pub fn fleet_size(&self) -> u64 {
        self.supply.iter().map(|b| b.len() as u64).sum::<u64>() + self.in_transit.len() as u64
    }

    /// Flatten into the MDP observation.
    pub fn observation(&self) -> Observation {
        let n = self.regions();
        let w = self.unservice_window[0].len();
        let mut data = Vec::with_capacity(n * (REGION_BASE_FEATURES + w) + 1);
        for i in 0..n {
            data.push(self.supply[i].len() as Scalar);
            data.push(self.last_demand[i] as Scalar);
            data.push(self.last_arrival[i] as Scalar);
            data.push(self.last_expense[i]);
            data.extend_from_slice(&self.unservice_window[i]);
        }
        data.push(self.remaining_budget);
        Observation::new(n, w, data)
    }

    /// Record a finished slot in the rolling window and last-slot counters.
    pub fn roll_slot(
        &mut self,
        unservice_rates: &[Scalar],
        demand: &[u32],
        arrivals: &[u32],
        expenses: &[Scalar],
    ) {
        for i in 0..self.regions() {
            self.unservice_window[i].remove(0);
            self.unservice_window[i].push(unservice_rates[i]);
        }
        self.last_demand.copy_from_slice(demand);
        self.last_arrival.copy_from_slice(arrivals);
        self.last_expense.copy_from_slice(expenses);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_layout_round_trips() {
        let n = 2;
        let w = 3;
        let mut st = SystemState::new(n, w, 42.0);
        st.supply[0].push(Bike { id: 0, loc: (0.0, 0.0) });
        st.last_demand = vec![5, 7];
        st.last_arrival = vec![1, 2];
        st.last_expense = vec![0.5, 1.5];
        st.unservice_window[1] = vec![0.1, 0.2, 0.3];
        let obs = st.observation();
        assert_eq!(obs.len(), n * (4 + w) + 1);
        assert_eq!(obs.supply(0), 1.0);
        assert_eq!(obs.supply(1), 0.0);
        assert_eq!(obs.last_demand(1), 7.0);
        assert_eq!(obs.last_expense(0), 0.5);
        assert_eq!(obs.unservice_window(1), &[0.1, 0.2, 0.3]);
        assert_eq!(obs.remaining_budget(), 42.0);
    }

    #[test]
    fn roll_slot_shifts_window() {
        let mut st = SystemState::new(1, 3, 0.0);
        st.roll_slot(&[0.5], &[10], &[2], &[1.0]);
        st.roll_slot(&[0.7], &[20], &[3], &[2.0]);
        assert_eq!(st.unservice_window[0], vec![0.0, 0.5, 0.7]);
        assert_eq!(st.last_demand[0], 20);
    }

    #[test]
    fn price_action_clips_to_bounds() {
        let a = PriceAction(vec![-1.0, 2.5, 9.0, f64::NAN]);
        assert_eq!(a.clipped(5.0).0, vec![0.0, 2.5, 5.0, 0.0]);
    }

    #[test]
    fn demand_tensor_totals() {
        let mut d = DemandTensor::zeros(2, 3);
        d.set(0, 1, 2, 4);
        d.set(1, 1, 0, 6);
        assert_eq!(d.total(), 10);
        assert_eq!(d.origin_totals(), vec![0, 10, 0]);
        assert_eq!(d.origin_in_slot(0, 1), 4);
        assert_eq!(d.slot_total(1), 6);
    }
}
