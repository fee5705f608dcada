//! The offline-optimal baseline: an integer program that routes riders to
//! pickup regions with full knowledge of demand, supplies, and (sampled)
//! user costs, solved exactly at desk scale and evaluated under rolling
//! V-timeslot horizons.
//!
//! Decision variables `x[t][i][j][l]` count riders originating in region
//! `i` during slot `t` who take a bike standing in `j ∈ {i} ∪ N(i)` and
//! ride to `l`. Constraints: per-(t,i,l) demand caps, per-(j,t) running
//! supply feasibility (a trip finishes within the slot it starts, an
//! assumption local to this module — the simulator keeps real travel
//! times), and a day budget `Σ x·c ≤ B`. Objective: total riders served.

mod branch_bound;
mod simplex;

pub use branch_bound::{brute_force_optimum, solve_ilp_problem, IlpProblem, IlpSolveResult};
pub use simplex::{solve_lp, LpError, LpRow, LpSolution};

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{walking_cost, RegionGrid};
use crate::scalar::Real;
use crate::types::DemandTensor;

#[derive(Debug, thiserror::Error)]
pub enum OffOptError {
    #[error("no cost samples for region pair ({0}, {1})")]
    MissingCostSamples(usize, usize),
    #[error("lp solve failed: {0}")]
    Lp(#[from] LpError),
    #[error("instance dimensions inconsistent: {0}")]
    BadInstance(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Empirical user-cost samples per (origin, pickup) pair, optionally
/// resolved per timeslot.
#[derive(Debug, Clone)]
pub struct CostBank<F: Real> {
    per_slot: HashMap<(usize, usize, usize), Vec<F>>,
    pooled: HashMap<(usize, usize), Vec<F>>,
}

impl<F: Real> Default for CostBank<F> {
    fn default() -> Self {
        Self {
            per_slot: HashMap::new(),
            pooled: HashMap::new(),
        }
    }
}

impl<F: Real> CostBank<F> {
    pub fn record(&mut self, slot: usize, origin: usize, pickup: usize, cost: F) {
        self.per_slot
            .entry((slot, origin, pickup))
            .or_default()
            .push(cost);
        self.pooled.entry((origin, pickup)).or_default().push(cost);
    }

    pub fn pooled_samples(&self, origin: usize, pickup: usize) -> Option<&[F]> {
        self.pooled.get(&(origin, pickup)).map(Vec::as_slice)
    }

    /// Synthesize the walk-cost distribution from geometry: riders uniform
    /// in their region, bikes uniform in the pickup region, quadratic cost.
    pub fn from_geometry(grid: &RegionGrid, alpha: F, per_pair: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bank = Self::default();
        for origin in 0..grid.len() {
            for pickup in grid.neighbors(origin) {
                for _ in 0..per_pair {
                    let user = grid.sample_point_in(origin, &mut rng);
                    let bike = grid.sample_point_in(pickup, &mut rng);
                    let x = F::from_f64_lit(grid.distance_m(user, bike));
                    bank.record(0, origin, pickup, walking_cost(x, alpha));
                }
            }
        }
        bank
    }

    fn draw<R: Rng>(
        &self,
        slot: usize,
        origin: usize,
        pickup: usize,
        rng: &mut R,
    ) -> Result<F, OffOptError> {
        let samples = self
            .per_slot
            .get(&(slot, origin, pickup))
            .or_else(|| self.pooled.get(&(origin, pickup)))
            .ok_or(OffOptError::MissingCostSamples(origin, pickup))?;
        Ok(samples[rng.gen_range(0..samples.len())])
    }
}

/// One draw of `c[t][i][j]` per needed pair: zero for `i = j`, an empirical
/// draw for each neighbor pair, shared by all riders of that pair and slot.
pub fn sample_costs<F: Real>(
    bank: &CostBank<F>,
    grid: &RegionGrid,
    slots: usize,
    seed: u64,
) -> Result<Vec<F>, OffOptError> {
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut costs = vec![F::zero(); slots * n * n];
    for t in 0..slots {
        for i in 0..n {
            for j in grid.neighbors(i) {
                costs[(t * n + i) * n + j] = bank.draw(t, i, j, &mut rng)?;
            }
        }
    }
    Ok(costs)
}

/// A fully materialized offline program.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct IlpInstance<F: Real> {
    pub regions: usize,
    pub slots: usize,
    /// Pickup choices per origin region: `{i} ∪ N(i)`, ascending.
    pub pickup_regions: Vec<Vec<usize>>,
    /// `d[t][i][l]`, flattened `(t·n + i)·n + l`.
    pub demand: Vec<u32>,
    /// Bikes standing per region at the start of the horizon.
    pub initial_supply: Vec<u32>,
    /// `c[t][i][j]`, flattened like `demand`; `c[t][i][i] = 0`.
    pub costs: Vec<F>,
    pub budget: F,
}

impl<F: Real> IlpInstance<F> {
    pub fn new(
        grid: &RegionGrid,
        demand: &DemandTensor,
        slot_range: std::ops::Range<usize>,
        initial_supply: Vec<u32>,
        costs: Vec<F>,
        budget: F,
    ) -> Result<Self, OffOptError> {
        let n = grid.len();
        let slots = slot_range.len();
        if demand.regions() != n || initial_supply.len() != n {
            return Err(OffOptError::BadInstance(
                "grid, demand, and supply region counts differ".into(),
            ));
        }
        if costs.len() != slots * n * n {
            return Err(OffOptError::BadInstance(format!(
                "expected {} costs, got {}",
                slots * n * n,
                costs.len()
            )));
        }
        let mut pickup_regions = Vec::with_capacity(n);
        for i in 0..n {
            let mut p = grid.neighbors(i);
            p.push(i);
            p.sort_unstable();
            pickup_regions.push(p);
        }
        let mut d = Vec::with_capacity(slots * n * n);
        for t in slot_range {
            let day_slot = t % demand.slots();
            for i in 0..n {
                for l in 0..n {
                    d.push(demand.get(day_slot, i, l));
                }
            }
        }
        Ok(Self {
            regions: n,
            slots,
            pickup_regions,
            demand: d,
            initial_supply,
            costs,
            budget,
        })
    }

    #[inline]
    pub fn demand_at(&self, t: usize, i: usize, l: usize) -> u32 {
        self.demand[(t * self.regions + i) * self.regions + l]
    }

    #[inline]
    pub fn cost_at(&self, t: usize, i: usize, j: usize) -> F {
        self.costs[(t * self.regions + i) * self.regions + j]
    }

    pub fn total_demand(&self) -> u64 {
        self.demand.iter().map(|&d| d as u64).sum()
    }

    pub fn to_json(&self) -> Result<String, OffOptError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, OffOptError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One decision variable of the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarKey {
    pub slot: usize,
    pub origin: usize,
    pub pickup: usize,
    pub dest: usize,
}

/// Result of one exact solve.
#[derive(Debug, Clone)]
pub struct IlpOutcome<F: Real> {
    /// Riders served (the integral optimum when `exact`).
    pub served: u64,
    /// Nonzero assignment entries.
    pub assignment: Vec<(VarKey, u64)>,
    pub exact: bool,
    /// LP-derived upper bound on the served count.
    pub upper_bound: F,
    pub nodes_explored: usize,
    /// Budget actually spent by the assignment.
    pub spent: F,
}

/// Default branch-and-bound node cap.
pub const DEFAULT_NODE_CAP: usize = 100_000;

/// Build and solve the program of one instance exactly.
pub fn solve_ilp<F: Real>(
    instance: &IlpInstance<F>,
    node_cap: usize,
) -> Result<IlpOutcome<F>, OffOptError> {
    let (vars, problem) = build_problem(instance);
    let sol = solve_ilp_problem(&problem, node_cap)?;

    debug_assert!(
        sol.upper_bound.to_f64().unwrap() >= sol.objective.to_f64().unwrap() - 1e-7,
        "LP bound below incumbent"
    );
    let mut assignment = Vec::new();
    let mut spent = F::zero();
    for (idx, &count) in sol.assignment.iter().enumerate() {
        if count > 0 {
            let key = vars[idx];
            assignment.push((key, count));
            spent += instance.cost_at(key.slot, key.origin, key.pickup)
                * F::from_f64_lit(count as f64);
        }
    }
    debug_assert!(
        spent.to_f64().unwrap() <= instance.budget.to_f64().unwrap() + 1e-6,
        "assignment exceeds the budget"
    );
    Ok(IlpOutcome {
        served: sol.objective.to_f64().unwrap().round() as u64,
        assignment,
        exact: sol.exact,
        upper_bound: sol.upper_bound,
        nodes_explored: sol.nodes_explored,
        spent,
    })
}

/// Variables plus LP rows for an instance. Supply feasibility is expressed
/// through running sums: pickups from a region through slot `t` may not
/// exceed its initial stock plus arrivals through slot `t − 1`.
fn build_problem<F: Real>(instance: &IlpInstance<F>) -> (Vec<VarKey>, IlpProblem<F>) {
    let n = instance.regions;
    let slots = instance.slots;
    let mut vars = Vec::new();
    let mut demand_rows: Vec<((usize, usize, usize), Vec<(usize, F)>)> = Vec::new();
    let mut supply_rows: Vec<Vec<(usize, F)>> = vec![Vec::new(); n * slots];
    let mut budget_row: Vec<(usize, F)> = Vec::new();

    for t in 0..slots {
        for i in 0..n {
            for l in 0..n {
                let d = instance.demand_at(t, i, l);
                if d == 0 {
                    continue;
                }
                let mut row = Vec::with_capacity(instance.pickup_regions[i].len());
                for &j in &instance.pickup_regions[i] {
                    let idx = vars.len();
                    vars.push(VarKey {
                        slot: t,
                        origin: i,
                        pickup: j,
                        dest: l,
                    });
                    row.push((idx, F::one()));
                    // the pickup consumes a bike in j from slot t on
                    for tt in t..slots {
                        supply_rows[j * slots + tt].push((idx, F::one()));
                    }
                    // the arrival releases a bike in l from slot t+1 on
                    for tt in t + 1..slots {
                        supply_rows[l * slots + tt].push((idx, -F::one()));
                    }
                    let cost = instance.cost_at(t, i, j);
                    if cost > F::zero() {
                        budget_row.push((idx, cost));
                    }
                }
                demand_rows.push(((t, i, l), row));
            }
        }
    }

    let mut rows = Vec::new();
    for ((t, i, l), coeffs) in demand_rows {
        rows.push(LpRow {
            coeffs,
            rhs: F::from_f64_lit(instance.demand_at(t, i, l) as f64),
        });
    }
    // a supply row can only bind once the cumulative adjacent demand could
    // exhaust the region's initial stock; earlier rows are redundant
    let mut cumulative_pressure = vec![0u64; n];
    for t in 0..slots {
        for i in 0..n {
            let origin_demand: u64 = (0..n).map(|l| instance.demand_at(t, i, l) as u64).sum();
            for &j in &instance.pickup_regions[i] {
                cumulative_pressure[j] += origin_demand;
            }
        }
        for region in 0..n {
            let coeffs = std::mem::take(&mut supply_rows[region * slots + t]);
            if !coeffs.is_empty() && cumulative_pressure[region] > instance.initial_supply[region] as u64
            {
                rows.push(LpRow {
                    coeffs,
                    rhs: F::from_f64_lit(instance.initial_supply[region] as f64),
                });
            }
        }
    }
    if !budget_row.is_empty() {
        rows.push(LpRow {
            coeffs: budget_row,
            rhs: instance.budget,
        });
    }

    let objective = vec![F::one(); vars.len()];
    (vars, IlpProblem { objective, rows })
}

/// Rolling-horizon result.
#[derive(Debug, Clone)]
pub struct HorizonOutcome<F: Real> {
    pub total_served: u64,
    pub windows: Vec<IlpOutcome<F>>,
    /// True when every window solved exactly.
    pub exact: bool,
}

/// Optimize the day in windows of `v` slots: solve each window's program,
/// commit its assignment, carry end-of-window supplies and leftover budget
/// into the next window. `v = slots` collapses to a single exact solve.
pub fn v_horizon_optimize<F: Real>(
    instance: &IlpInstance<F>,
    v: usize,
    node_cap: usize,
) -> Result<HorizonOutcome<F>, OffOptError> {
    assert!(v >= 1, "horizon must be at least one slot");
    let n = instance.regions;
    let mut supply = instance.initial_supply.clone();
    let mut budget = instance.budget;
    let mut windows = Vec::new();
    let mut total = 0u64;
    let mut exact = true;

    let mut start = 0;
    while start < instance.slots {
        let end = (start + v).min(instance.slots);
        let window = IlpInstance {
            regions: n,
            slots: end - start,
            pickup_regions: instance.pickup_regions.clone(),
            demand: instance.demand[(start * n * n)..(end * n * n)].to_vec(),
            initial_supply: supply.clone(),
            costs: instance.costs[(start * n * n)..(end * n * n)].to_vec(),
            budget,
        };
        let outcome = solve_ilp(&window, node_cap)?;
        // commit: move bikes and spend budget per the assignment
        for &(key, count) in &outcome.assignment {
            let taken = (count as u32).min(supply[key.pickup]);
            supply[key.pickup] -= taken;
            supply[key.dest] += count as u32;
        }
        budget = budget - outcome.spent;
        if budget < F::zero() {
            budget = F::zero();
        }
        total += outcome.served;
        exact &= outcome.exact;
        windows.push(outcome);
        start = end;
    }
    Ok(HorizonOutcome {
        total_served: total,
        windows,
        exact,
    })
}
