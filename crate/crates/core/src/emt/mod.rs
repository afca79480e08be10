//! Instantaneous-value network solution.

mod fault;
mod network;
mod source;

pub use fault::{FaultSpec, FaultTable};
pub use network::{
    damping_resistance, step_index, ElementId, ElementKind, NodalSystem, SwitchEvent, SwitchState,
    DAMPING_FACTOR, GROUND, G_IDEAL_SOURCE, G_SWITCH_OFF, G_SWITCH_ON,
};
pub use source::SourceBehindRl;
