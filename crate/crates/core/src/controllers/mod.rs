//! Control laws for a grid-forming converter.
//!
//! * [`outer`]: synchronization laws (droop, VSG, dVOC) with optional
//!   DC-voltage feedback blended in by the weight `alpha`.
//! * [`inner`]: cascaded dq voltage and current PI loops with AC current
//!   limiting and conditional-integration anti-windup.
//! * [`power`]: active/reactive power measurement with a first-order filter.

pub mod inner;
pub mod outer;
pub mod power;

pub use inner::{ac_current_limit, inner_loops_step, InnerLoopConfig, InnerLoopInputs, InnerLoops};
pub use outer::{
    droop_update, dvoc_update, reference_voltage, vsg_update, DvocPhaseLaw, OuterControllerConfig,
    OuterControllerState, OuterKind, Setpoints,
};
pub use power::{instantaneous_power, power_measurement, PowerFilterState};
