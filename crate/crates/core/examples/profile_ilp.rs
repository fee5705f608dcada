//! Timing probe for the offline program at desk scale.

use std::time::Instant;

use rebalance_core::grid::RegionGrid;
use rebalance_core::ingest::{largest_remainder, synthesize_demand, SynthesisParams};
use rebalance_core::offlineopt::{sample_costs, solve_ilp, CostBank, IlpInstance};

fn main() {
    let slots: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(6);
    let volume: u32 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(300);

    let g = RegionGrid::new(3, 3, 500.0, 500.0, 121.4, 31.15).unwrap();
    let demand = synthesize_demand(&SynthesisParams {
        regions: 9,
        daily_volume: volume,
        seed: 3,
        ..SynthesisParams::default()
    })
    .unwrap();
    let alpha = g.calibrated_alpha(5.0);
    let bank = CostBank::from_geometry(&g, alpha, 40, 11);
    let costs = sample_costs(&bank, &g, slots, 12).unwrap();
    let totals = demand.origin_totals();
    let weights: Vec<f64> = totals.iter().map(|&v| v as f64).collect();
    let supply: Vec<u32> = largest_remainder(60, &weights)
        .into_iter()
        .map(|c| c as u32)
        .collect();
    let budget: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(80.0);
    let inst = IlpInstance::new(&g, &demand, 0..slots, supply, costs, budget).unwrap();

    let nonzero: usize = inst.demand.iter().filter(|&&d| d > 0).count();
    println!(
        "instance: slots={slots} total_demand={} nonzero_cells={nonzero}",
        inst.total_demand()
    );
    let cap: usize = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100_000);
    let t0 = Instant::now();
    let out = solve_ilp(&inst, cap).unwrap();
    println!(
        "solve: served={} exact={} nodes={} bound={:.3} in {:.2?}",
        out.served,
        out.exact,
        out.nodes_explored,
        out.upper_bound,
        t0.elapsed()
    );
}
