//! Concrete plants with their safety and nominal controllers.

pub mod mechanical;
pub mod nominal;
pub mod unicycle;

pub use mechanical::{
    energy_barrier, energy_kh_synthesis, energy_safety_ctrl, mech_flow, DampedPointMass, EnergyBarrier, KhSynthesis,
    MechState,
};
pub use nominal::AicardiNominal;
pub use unicycle::{
    unicycle_flow, unicycle_safety_ctrl, wrap_angle, Unicycle, UnicycleBarrier, UnicycleBarrierGains, UnicycleInput,
    UnicycleState,
};
