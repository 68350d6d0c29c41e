//! Simulated device fleet and deterministic scenario runner.
//!
//! Everything here exists so the framework's timing and self-healing
//! behavior can be exercised on a desk: devices are pure functions of
//! virtual time, faults are scripted windows, and a whole scenario replays
//! byte for byte from its seed. The framework under test is the real stack;
//! only the hardware and the clock are simulated.

pub mod device;
pub mod fleet;
pub mod scenario;

pub use device::{
    CapabilityProfile, DeviceProfile, DeviceWire, FaultKind, FaultSpec, Generator, Posture,
    SimDevice,
};
pub use fleet::Fleet;
pub use scenario::{run_scenario, Scenario, ScenarioReport};
