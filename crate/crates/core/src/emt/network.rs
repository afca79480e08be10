use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Node 0 is the ground reference; real nodes are numbered from 1.
pub const GROUND: usize = 0;

/// Closed-switch conductance.
pub const G_SWITCH_ON: f64 = 1e4;
/// Open-switch conductance; keeps node numbering and matrix pattern fixed.
pub const G_SWITCH_OFF: f64 = 1e-9;
/// Internal conductance of the Norton equivalent of an ideal voltage source.
pub const G_IDEAL_SOURCE: f64 = 1e6;

pub type ElementId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementKind {
    Resistor {
        r: f64,
    },
    Inductor {
        l: f64,
    },
    Capacitor {
        c: f64,
    },
    SeriesRl {
        r: f64,
        l: f64,
    },
    /// Voltage source `v_a - v_b = e`, set every step with [`NodalSystem::set_source`].
    IdealSource {
        e: f64,
    },
    Switch {
        closed: bool,
        g_on: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchState {
    Open,
    Closed,
}

#[derive(Debug, Clone)]
struct Element {
    kind: ElementKind,
    a: usize,
    b: usize,
    /// Branch current a -> b and branch voltage at the last solved step.
    i: f64,
    v: f64,
}

impl Element {
    fn conductance(&self, dt: f64) -> f64 {
        match self.kind {
            ElementKind::Resistor { r } => 1.0 / r,
            ElementKind::Inductor { l } => dt / (2.0 * l),
            ElementKind::Capacitor { c } => 2.0 * c / dt,
            ElementKind::SeriesRl { r, l } => 1.0 / (r + 2.0 * l / dt),
            ElementKind::IdealSource { .. } => G_IDEAL_SOURCE,
            ElementKind::Switch { closed, g_on } => {
                if closed {
                    g_on
                } else {
                    G_SWITCH_OFF
                }
            }
        }
    }

    /// Companion form `i_ab(n+1) = G v_ab(n+1) + J`; returns `J`.
    fn history(&self, dt: f64) -> f64 {
        let g = self.conductance(dt);
        match self.kind {
            ElementKind::Resistor { .. } | ElementKind::Switch { .. } => 0.0,
            ElementKind::Inductor { .. } => self.i + g * self.v,
            ElementKind::Capacitor { .. } => -(self.i + g * self.v),
            ElementKind::SeriesRl { r, l } => g * (self.v + (2.0 * l / dt - r) * self.i),
            ElementKind::IdealSource { e } => -g * e,
        }
    }

    /// Steady-state admittance at angular frequency `w`.
    fn admittance(&self, w: f64) -> Option<Complex64> {
        let j = Complex64::new(0.0, 1.0);
        match self.kind {
            ElementKind::Resistor { r } => Some(Complex64::new(1.0 / r, 0.0)),
            ElementKind::Inductor { l } => Some(1.0 / (j * w * l)),
            ElementKind::Capacitor { c } => Some(j * w * c),
            ElementKind::SeriesRl { r, l } => Some(1.0 / (r + j * w * l)),
            ElementKind::Switch { .. } => Some(Complex64::new(self.conductance(1.0), 0.0)),
            ElementKind::IdealSource { .. } => None,
        }
    }
}

/// Three-phase (or any-phase) instantaneous-value nodal network.
///
/// Every reactive element is replaced by its trapezoidal companion model, so
/// each step is one real linear solve `G v = i`. The conductance matrix is
/// refactorized only when the topology changes (switch operations or new
/// elements).
#[derive(Debug, Clone)]
pub struct NodalSystem {
    dt: f64,
    n_nodes: usize,
    elements: Vec<Element>,
    switch_groups: Vec<Vec<ElementId>>,
    lu: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// Poles waiting for their current zero.
    pending_open: Vec<PendingPole>,
    voltages: Vec<f64>,
    rhs: DVector<f64>,
    factorizations: usize,
}

#[derive(Debug, Clone, Copy)]
struct PendingPole {
    id: ElementId,
    /// Steps left before the pole is opened regardless of its current.
    left: u32,
    /// Sign of the pole current at the previous step.
    sign: f64,
}

/// A scheduled operation on a switch group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub switch: usize,
    pub state: SwitchState,
    pub time: f64,
}

/// Ratio of a damping resistor to the trapezoidal companion resistance
/// `2L/dt` of the inductive branch it parallels.
pub const DAMPING_FACTOR: f64 = 20.0;

/// Resistance to place in parallel with an inductance `l` so that the
/// step-to-step numerical oscillation trapezoidal integration leaves behind
/// after a switching event dies out within a few dozen steps.
pub fn damping_resistance(l: f64, dt: f64) -> f64 {
    DAMPING_FACTOR * 2.0 * l / dt
}

/// Step index an event at time `t` snaps to (nearest step boundary).
pub fn step_index(t: f64, dt: f64) -> u64 {
    (t / dt).round().max(0.0) as u64
}

impl NodalSystem {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidValue(format!(
                "time step must be positive, got {dt}"
            )));
        }
        Ok(NodalSystem {
            dt,
            n_nodes: 0,
            elements: Vec::new(),
            switch_groups: Vec::new(),
            lu: None,
            pending_open: Vec::new(),
            voltages: vec![0.0],
            rhs: DVector::zeros(0),
            factorizations: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn node_count(&self) -> usize {
        self.n_nodes
    }

    pub fn add_node(&mut self) -> usize {
        self.n_nodes += 1;
        self.voltages.push(0.0);
        self.lu = None;
        self.n_nodes
    }

    pub fn add_nodes<const N: usize>(&mut self) -> [usize; N] {
        std::array::from_fn(|_| self.add_node())
    }

    /// Adds an element between nodes `a` and `b` (either may be [`GROUND`]).
    pub fn stamp_element(&mut self, kind: ElementKind, a: usize, b: usize) -> Result<ElementId> {
        let positive = |x: f64, what: &str| -> Result<()> {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidValue(format!(
                    "{what} must be positive, got {x}"
                )))
            }
        };
        match kind {
            ElementKind::Resistor { r } => positive(r, "resistance")?,
            ElementKind::Inductor { l } => positive(l, "inductance")?,
            ElementKind::Capacitor { c } => positive(c, "capacitance")?,
            ElementKind::SeriesRl { r, l } => {
                positive(l, "inductance")?;
                if r < 0.0 {
                    return Err(Error::InvalidValue(format!(
                        "resistance must be non-negative, got {r}"
                    )));
                }
            }
            ElementKind::Switch { g_on, .. } => positive(g_on, "switch conductance")?,
            ElementKind::IdealSource { .. } => {}
        }
        if a > self.n_nodes || b > self.n_nodes {
            return Err(Error::InvalidValue(format!("node out of range ({a}, {b})")));
        }
        if a == b {
            return Err(Error::InvalidValue("element endpoints must differ".into()));
        }
        self.elements.push(Element {
            kind,
            a,
            b,
            i: 0.0,
            v: 0.0,
        });
        self.lu = None;
        Ok(self.elements.len() - 1)
    }

    /// Registers a gang-operated switch (e.g. the three poles of a breaker).
    pub fn add_switch_group(
        &mut self,
        poles: &[(usize, usize)],
        closed: bool,
        g_on: f64,
    ) -> Result<usize> {
        let mut ids = Vec::with_capacity(poles.len());
        for &(a, b) in poles {
            ids.push(self.stamp_element(ElementKind::Switch { closed, g_on }, a, b)?);
        }
        self.switch_groups.push(ids);
        Ok(self.switch_groups.len() - 1)
    }

    pub fn switch_state(&self, switch: usize) -> Option<SwitchState> {
        let first = *self.switch_groups.get(switch)?.first()?;
        match self.elements[first].kind {
            ElementKind::Switch { closed: true, .. } => Some(SwitchState::Closed),
            _ => Some(SwitchState::Open),
        }
    }

    /// Operates a switch group. Returns whether anything changed; a change
    /// forces refactorization before the next solve.
    pub fn apply_switch(&mut self, switch: usize, state: SwitchState) -> Result<bool> {
        let ids = self
            .switch_groups
            .get(switch)
            .ok_or(Error::UnknownElement(switch))?;
        let want = state == SwitchState::Closed;
        let mut changed = false;
        for &id in ids {
            if let ElementKind::Switch { closed, .. } = &mut self.elements[id].kind {
                if *closed != want {
                    *closed = want;
                    changed = true;
                }
            }
        }
        if changed {
            self.lu = None;
        }
        if !want {
            self.pending_open.retain(|p| !ids.contains(&p.id));
        }
        Ok(changed)
    }

    /// Opens a closed switch group pole by pole, each pole at the first step
    /// its current reaches or crosses zero, the way a breaker interrupts.
    /// A pole still conducting after `max_wait` steps is opened anyway.
    pub fn open_at_current_zero(&mut self, switch: usize, max_wait: u32) -> Result<()> {
        let ids = self
            .switch_groups
            .get(switch)
            .ok_or(Error::UnknownElement(switch))?
            .clone();
        for id in ids {
            let closed = matches!(
                self.elements[id].kind,
                ElementKind::Switch { closed: true, .. }
            );
            if closed && !self.pending_open.iter().any(|p| p.id == id) {
                let sign = self.elements[id].i.signum();
                self.pending_open.push(PendingPole {
                    id,
                    left: max_wait,
                    sign,
                });
            }
        }
        Ok(())
    }

    /// Whether any pole is still waiting for its current zero.
    pub fn interrupting(&self) -> bool {
        !self.pending_open.is_empty()
    }

    pub fn set_source(&mut self, id: ElementId, e: f64) -> Result<()> {
        match self.elements.get_mut(id).map(|el| &mut el.kind) {
            Some(ElementKind::IdealSource { e: val }) => {
                *val = e;
                Ok(())
            }
            _ => Err(Error::UnknownElement(id)),
        }
    }

    /// Companion conductance of an element for the current time step.
    pub fn conductance(&self, id: ElementId) -> Option<f64> {
        self.elements.get(id).map(|e| e.conductance(self.dt))
    }

    /// Branch current (a -> b) at the last solved step.
    pub fn current(&self, id: ElementId) -> f64 {
        self.elements[id].i
    }

    /// Branch `(current, voltage)` at the last solved step.
    pub fn state(&self, id: ElementId) -> (f64, f64) {
        (self.elements[id].i, self.elements[id].v)
    }

    pub fn voltage(&self, node: usize) -> f64 {
        self.voltages[node]
    }

    /// All node voltages; index 0 is ground.
    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    /// How many times the matrix has been factorized.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    /// Conductance matrix assembled from scratch for the present topology.
    pub fn conductance_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes;
        let mut g = DMatrix::zeros(n, n);
        for el in &self.elements {
            let y = el.conductance(self.dt);
            let (a, b) = (el.a, el.b);
            if a != GROUND {
                g[(a - 1, a - 1)] += y;
            }
            if b != GROUND {
                g[(b - 1, b - 1)] += y;
            }
            if a != GROUND && b != GROUND {
                g[(a - 1, b - 1)] -= y;
                g[(b - 1, a - 1)] -= y;
            }
        }
        g
    }

    fn factorize(&mut self) {
        self.lu = Some(self.conductance_matrix().lu());
        self.rhs = DVector::zeros(self.n_nodes);
        self.factorizations += 1;
    }

    /// Solves one step. `injections[k]` is the external current injected into
    /// node `k` (index 0, ground, is ignored). Updates element histories and
    /// returns the new node voltages (index 0 is ground).
    pub fn solve_step(&mut self, injections: &[f64]) -> Result<&[f64]> {
        if injections.len() != self.n_nodes + 1 {
            return Err(Error::InvalidValue(format!(
                "injection vector has {} entries, expected {}",
                injections.len(),
                self.n_nodes + 1
            )));
        }
        if self.lu.is_none() {
            self.factorize();
        }
        let dt = self.dt;
        let rhs = &mut self.rhs;
        for k in 0..self.n_nodes {
            rhs[k] = injections[k + 1];
        }
        for el in &self.elements {
            let j = el.history(dt);
            if j != 0.0 {
                if el.a != GROUND {
                    rhs[el.a - 1] -= j;
                }
                if el.b != GROUND {
                    rhs[el.b - 1] += j;
                }
            }
        }
        let lu = self.lu.as_ref().expect("factorized above");
        if !lu.solve_mut(rhs) {
            return Err(Error::Singular(
                "nodal conductance matrix (floating subnetwork?)".into(),
            ));
        }
        if rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Singular(
                "nodal solve produced non-finite voltages".into(),
            ));
        }
        self.voltages[0] = 0.0;
        self.voltages[1..].copy_from_slice(rhs.as_slice());
        for el in &mut self.elements {
            let j = el.history(dt);
            let v = self.voltages[el.a] - self.voltages[el.b];
            el.i = el.conductance(dt) * v + j;
            el.v = v;
        }
        if !self.pending_open.is_empty() {
            self.interrupt_poles();
        }
        Ok(&self.voltages)
    }

    fn interrupt_poles(&mut self) {
        let elements = &mut self.elements;
        let mut opened = false;
        self.pending_open.retain_mut(|p| {
            let el = &mut elements[p.id];
            let crossed = el.i == 0.0 || el.i.signum() != p.sign;
            p.sign = el.i.signum();
            p.left = p.left.saturating_sub(1);
            if crossed || p.left == 0 {
                if let ElementKind::Switch { closed, .. } = &mut el.kind {
                    *closed = false;
                }
                opened = true;
                false
            } else {
                true
            }
        });
        if opened {
            self.lu = None;
        }
    }

    /// Seeds element states with the sinusoidal steady state described by
    /// node phasors (index 0 is ground) at angular frequency `w`, evaluated
    /// at t = 0. Ideal sources are memoryless and are skipped.
    pub fn init_from_phasors(&mut self, phasors: &[Complex64], w: f64) -> Result<()> {
        if phasors.len() != self.n_nodes + 1 {
            return Err(Error::InvalidValue(
                "phasor vector length does not match node count".into(),
            ));
        }
        for el in &mut self.elements {
            let vab = phasors[el.a] - phasors[el.b];
            if let Some(y) = el.admittance(w) {
                el.i = (y * vab).re;
            }
            el.v = vab.re;
        }
        for (k, p) in phasors.iter().enumerate() {
            self.voltages[k] = if k == GROUND { 0.0 } else { p.re };
        }
        Ok(())
    }

    /// Sets the state of one inductor-like element directly.
    pub fn set_element_state(&mut self, id: ElementId, current: f64, voltage: f64) -> Result<()> {
        let el = self.elements.get_mut(id).ok_or(Error::UnknownElement(id))?;
        el.i = current;
        el.v = voltage;
        Ok(())
    }

    /// Energy stored in inductors and capacitors, `sum(L i^2 / 2 + C v^2 / 2)`.
    pub fn stored_energy(&self) -> f64 {
        self.elements
            .iter()
            .map(|el| match el.kind {
                ElementKind::Inductor { l } | ElementKind::SeriesRl { l, .. } => {
                    0.5 * l * el.i * el.i
                }
                ElementKind::Capacitor { c } => 0.5 * c * el.v * el.v,
                _ => 0.0,
            })
            .sum()
    }
}
