//! Feedback control under block fading.
//!
//! With independent slots the optimal policy is of water-filling type: feed
//! back `Υ - (L-1)·log2(1/g)` bits whenever `δ ≥ Ψ(g)`. The water level `Υ`
//! follows from the budget once the threshold function `Ψ` is fixed, and `Ψ`
//! is found by numerical search over nonincreasing step functions.
//!
//! With unequal interferer distances the per-receiver budget is split across
//! links first, then water-filled over time on each link.

mod allocation;
mod waterfill;

pub use allocation::{
    allocate_rates_closed_form, allocate_rates_general, calibrate_two_tier, expected_two_tier_bits,
    throughput_loss_bound, two_tier_bits, RateAllocation, TabulatedCurve,
};
pub use waterfill::{
    min_interference, search_threshold, CellModel, InterferenceEstimate, SearchOptions,
    WaterfillPolicy,
};
