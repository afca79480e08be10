use super::network::{NodalSystem, SwitchEvent, SwitchState, GROUND};
use crate::error::{Error, Result};

/// Three-phase-to-ground fault through `r_ohm` per phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSpec {
    pub bus: u32,
    pub r_ohm: f64,
    pub t_on: f64,
    pub duration: f64,
}

impl FaultSpec {
    pub fn t_off(&self) -> f64 {
        self.t_on + self.duration
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_ohm > 0.0) || !self.r_ohm.is_finite() {
            return Err(Error::InvalidValue(format!(
                "fault resistance must be positive, got {}",
                self.r_ohm
            )));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidValue(format!(
                "fault duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.t_on >= 0.0) {
            return Err(Error::InvalidValue(format!(
                "fault start must be non-negative, got {}",
                self.t_on
            )));
        }
        Ok(())
    }
}

/// Faults registered on a network, used to reject overlaps on one bus.
#[derive(Debug, Clone, Default)]
pub struct FaultTable {
    faults: Vec<FaultSpec>,
}

impl FaultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn faults(&self) -> &[FaultSpec] {
        &self.faults
    }

    /// Inserts an open fault switch from each phase node of the bus to ground
    /// and returns the closing and opening events. `z_base_ohm` converts the
    /// fault resistance to the per-unit network.
    pub fn apply_fault(
        &mut self,
        net: &mut NodalSystem,
        spec: FaultSpec,
        phase_nodes: [usize; 3],
        z_base_ohm: f64,
    ) -> Result<[SwitchEvent; 2]> {
        spec.validate()?;
        if !(z_base_ohm > 0.0) {
            return Err(Error::InvalidValue(format!(
                "base impedance must be positive, got {z_base_ohm}"
            )));
        }
        let overlaps = self
            .faults
            .iter()
            .any(|f| f.bus == spec.bus && spec.t_on < f.t_off() && f.t_on < spec.t_off());
        if overlaps {
            return Err(Error::OverlappingFault { bus: spec.bus });
        }
        let r_pu = spec.r_ohm / z_base_ohm;
        let poles = phase_nodes.map(|n| (n, GROUND));
        let switch = net.add_switch_group(&poles, false, 1.0 / r_pu)?;
        self.faults.push(spec);
        Ok([
            SwitchEvent {
                switch,
                state: SwitchState::Closed,
                time: spec.t_on,
            },
            SwitchEvent {
                switch,
                state: SwitchState::Open,
                time: spec.t_off(),
            },
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(t_on: f64, duration: f64) -> FaultSpec {
        FaultSpec {
            bus: 5,
            r_ohm: 1e-3,
            t_on,
            duration,
        }
    }

    #[test]
    fn events_at_start_and_clear() {
        let mut net = NodalSystem::new(50e-6).unwrap();
        let nodes = net.add_nodes::<3>();
        let mut table = FaultTable::new();
        let [on, off] = table
            .apply_fault(&mut net, spec(15.0, 0.15), nodes, 529.0)
            .unwrap();
        assert_eq!(on.time, 15.0);
        assert!((off.time - 15.15).abs() < 1e-12);
        assert_eq!(on.state, SwitchState::Closed);
        assert_eq!(off.state, SwitchState::Open);
        assert_eq!(net.switch_state(on.switch), Some(SwitchState::Open));
    }

    #[test]
    fn rejects_bad_specs_and_overlaps() {
        let mut net = NodalSystem::new(50e-6).unwrap();
        let nodes = net.add_nodes::<3>();
        let mut table = FaultTable::new();
        assert!(matches!(
            table.apply_fault(&mut net, spec(1.0, 0.0), nodes, 1.0),
            Err(Error::InvalidValue(_))
        ));
        let mut zero_r = spec(1.0, 0.1);
        zero_r.r_ohm = 0.0;
        assert!(table.apply_fault(&mut net, zero_r, nodes, 1.0).is_err());
        table
            .apply_fault(&mut net, spec(1.0, 0.2), nodes, 1.0)
            .unwrap();
        assert_eq!(
            table.apply_fault(&mut net, spec(1.1, 0.2), nodes, 1.0),
            Err(Error::OverlappingFault { bus: 5 })
        );
        // Back to back is fine, as is the same window on another bus.
        table
            .apply_fault(&mut net, spec(1.2, 0.2), nodes, 1.0)
            .unwrap();
        let mut other = spec(1.0, 0.2);
        other.bus = 6;
        table.apply_fault(&mut net, other, nodes, 1.0).unwrap();
    }
}
