//! The fixed-step loop: builds the three-phase network from the case and
//! the power-flow snapshot, then steps devices, schedule and events.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use super::record::{ChannelInfo, Recording, RunMeta};
use super::{Scenario, WindProfile};
use crate::case::{parse_case, serialize_case, validate_case, Branch, OwfPlant, SystemCase};
use crate::control::RmsMeter;
use crate::emt::{
    damping_resistance, step_index, ElementId, ElementKind, FaultTable, NodalSystem, SwitchState,
    GROUND, G_SWITCH_ON,
};
use crate::error::{Error, Result};
use crate::frames::{abc_from_space_vector, space_vector};
use crate::gfl::GridFollowing;
use crate::machines::{SgMode, Synchronous};
use crate::owf::OwfModel;
use crate::powerflow::{snapshot_for_emt, solve_powerflow, InitSnapshot};
use crate::sequencer::{ActionKind, Schedule, ScheduleAction, Target};

/// Reactance of the ideal-source path that holds an inverter bus until the
/// hand-over, pu on the system base.
const SOURCE_X: f64 = 1e-3;
const SOURCE_R: f64 = 1e-5;
/// Below this voltage ratio the constant-current and constant-power parts
/// of a load turn into impedance.
const ZIP_V_BREAK: f64 = 0.7;
/// Conductance anchoring the inner nodes of switchable branches.
const G_ANCHOR: f64 = 1e-6;

const PF_TOL: f64 = 1e-10;
const PF_MAX_ITER: usize = 20;

/// Reads the case named by the scenario and runs it.
pub fn run_simulation(scenario: &Scenario) -> Result<Recording> {
    let path: &Path = &scenario.case_path;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let case = parse_case(&text)?;
    run_with_case(&case, scenario)
}

/// Runs a scenario on an already parsed case.
pub fn run_with_case(case: &SystemCase, scenario: &Scenario) -> Result<Recording> {
    scenario.validate()?;
    let case = &scenario.adjust_case(case)?;
    let report = validate_case(case);
    if let Some(v) = report.violations.first() {
        return Err(Error::InvalidCase(v.to_string()));
    }
    let sol = solve_powerflow(case, PF_TOL, PF_MAX_ITER)?;
    let snap = snapshot_for_emt(&sol, case);
    let mut sim = Simulation::build(case, &snap, scenario)?;
    sim.run()
}

#[derive(Debug, Clone, Copy)]
enum Probe {
    OwfP(usize),
    OwfQ(usize),
    OwfVpoi(usize),
    OwfWind(usize),
    OwfVdc(usize),
    OwfSpeed(usize),
    OwfPitch(usize),
    OwfChopper(usize),
    BusV(usize),
    BusVa(usize),
    SgSpeed(usize),
    SgP(usize),
    SgEfd(usize),
    GflP(usize),
    GflQ(usize),
    LoadI(usize),
    LoadP(usize),
}

/// Parses `owfK.p`, `bus5.v`, `sg1.speed` and so on against the case.
fn parse_probe(name: &str, case: &SystemCase) -> Result<(Probe, &'static str)> {
    let bad = || Error::Scenario(format!("unknown channel `{name}`"));
    let (dev, field) = name.split_once('.').ok_or_else(bad)?;
    let split = dev.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
    let (kind, num) = dev.split_at(split);
    let num: usize = num.parse().map_err(|_| bad())?;
    let index = |count: usize| -> Result<usize> {
        if num >= 1 && num <= count {
            Ok(num - 1)
        } else {
            Err(Error::Scenario(format!(
                "channel `{name}` refers to a missing device"
            )))
        }
    };
    Ok(match (kind, field) {
        ("owf", f) => {
            let k = index(case.owf_plants.len())?;
            match f {
                "p" => (Probe::OwfP(k), "MW"),
                "q" => (Probe::OwfQ(k), "MVAr"),
                "vpoi" => (Probe::OwfVpoi(k), "pu"),
                "wind" => (Probe::OwfWind(k), "m/s"),
                "vdc" => (Probe::OwfVdc(k), "pu"),
                "speed" => (Probe::OwfSpeed(k), "pu"),
                "pitch" => (Probe::OwfPitch(k), "deg"),
                "chopper" => (Probe::OwfChopper(k), "flag"),
                _ => return Err(bad()),
            }
        }
        ("bus", f) => {
            let k = case.bus_index(num as u32).ok_or_else(|| {
                Error::Scenario(format!("channel `{name}` refers to a missing bus"))
            })?;
            match f {
                "v" => (Probe::BusV(k), "pu"),
                "va" => (Probe::BusVa(k), "pu"),
                _ => return Err(bad()),
            }
        }
        ("sg", f) => {
            let k = index(case.sg_plants.len())?;
            match f {
                "speed" => (Probe::SgSpeed(k), "pu"),
                "p" => (Probe::SgP(k), "pu"),
                "efd" => (Probe::SgEfd(k), "pu"),
                _ => return Err(bad()),
            }
        }
        ("gfl", f) => {
            let k = index(case.gfl_plants.len())?;
            match f {
                "p" => (Probe::GflP(k), "pu"),
                "q" => (Probe::GflQ(k), "pu"),
                _ => return Err(bad()),
            }
        }
        ("load", f) => {
            let k = index(case.loads.len())?;
            match f {
                "i" => (Probe::LoadI(k), "pu"),
                "p" => (Probe::LoadP(k), "pu"),
                _ => return Err(bad()),
            }
        }
        _ => return Err(bad()),
    })
}

fn default_channels(case: &SystemCase) -> Vec<String> {
    (1..=case.owf_plants.len())
        .flat_map(|k| {
            [
                format!("owf{k}.p"),
                format!("owf{k}.vpoi"),
                format!("owf{k}.wind"),
            ]
        })
        .collect()
}

/// Balanced load: a constant impedance drawing `s0` at `v0`, plus, after
/// the ZIP swap, a current injection for the voltage-dependent remainder.
struct Load {
    bus: usize,
    s0: Complex64,
    v0: f64,
    i_frac: f64,
    p_frac: f64,
    v_last: Complex64,
    elements: [Vec<ElementId>; 3],
    /// Correction current of the coming step and total drawn current of the
    /// last one, space vectors.
    i_corr: Complex64,
    i_total: Complex64,
}

impl Load {
    /// Extra current drawn by the constant-current and constant-power parts
    /// beyond what the stamped impedance already takes, for voltage `v`.
    fn correction(&self, v: Complex64) -> Complex64 {
        let vm = v.norm();
        if vm < 1e-6 {
            return Complex64::new(0.0, 0.0);
        }
        let vr = vm / self.v0;
        let vr2 = vr * vr;
        let (fi, fp) = if vr >= ZIP_V_BREAK {
            (vr, 1.0)
        } else {
            (vr2 / ZIP_V_BREAK, vr2 / (ZIP_V_BREAK * ZIP_V_BREAK))
        };
        let s = self.s0 * (self.i_frac * fi + self.p_frac * fp - (self.i_frac + self.p_frac) * vr2);
        (s / v).conj()
    }
}

struct Gfl {
    inv: GridFollowing,
    bus: usize,
    sources: [ElementId; 3],
    breaker: usize,
    /// EMF phasor of the holding source.
    e: Complex64,
}

struct Owf {
    plant: OwfPlant,
    model: OwfModel,
    poi: usize,
    mid: [usize; 3],
    term: [usize; 3],
    breaker: usize,
    collector: [Vec<ElementId>; 3],
    wind: WindProfile,
    /// Exported power at the POI, system pu.
    s_poi: Complex64,
}

enum SwitchOp {
    Close(usize),
    Open(usize),
}

struct SwitchAction {
    step: u64,
    op: SwitchOp,
    target: String,
    what: &'static str,
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    dt: f64,
    omega_b: f64,
    cycle_steps: u32,
    net: NodalSystem,
    bus_nodes: Vec<[usize; 3]>,
    meters: Vec<RmsMeter>,
    loads: Vec<Load>,
    zip_active: bool,
    sgs: Vec<(Synchronous, usize)>,
    gfls: Vec<Gfl>,
    owfs: Vec<Owf>,
    schedule: Schedule,
    switch_actions: Vec<SwitchAction>,
    next_switch: usize,
    probes: Vec<Probe>,
    channels: Vec<ChannelInfo>,
    injections: Vec<f64>,
    meta: RunMeta,
    s_sys: f64,
}

fn phase_shifted(v: Complex64) -> [Complex64; 3] {
    let a = Complex64::from_polar(1.0, -2.0 * PI / 3.0);
    [v, v * a, v * a * a]
}

impl<'a> Simulation<'a> {
    fn build(case: &'a SystemCase, snap: &InitSnapshot, scenario: &'a Scenario) -> Result<Self> {
        let dt = scenario.dt;
        let omega_b = case.omega_base();
        let s_sys = case.system_mva_base;
        let cycle_steps = (1.0 / (case.nominal_hz * dt)).round().max(1.0) as u32;
        let mut net = NodalSystem::new(dt)?;
        // Steady-state phasor of phase a at every node, for seeding.
        let mut phasors = vec![Complex64::new(0.0, 0.0)];
        let node = |net: &mut NodalSystem, phasors: &mut Vec<Complex64>, v: Complex64| {
            let nodes = net.add_nodes::<3>();
            phasors.extend(phase_shifted(v));
            nodes
        };

        let v0: Vec<Complex64> = case
            .buses
            .iter()
            .map(|b| snap.phasor(b.id).expect("snapshot covers every bus"))
            .collect();
        let bus_nodes: Vec<[usize; 3]> = v0
            .iter()
            .map(|&v| node(&mut net, &mut phasors, v))
            .collect();
        let meters = v0
            .iter()
            .map(|v| RmsMeter::new(cycle_steps as usize, v.norm()))
            .collect();

        let switched = |br: &Branch| {
            !br.is_closed()
                || scenario.breakers.iter().any(|e| {
                    (e.from, e.to) == (br.from, br.to) || (e.from, e.to) == (br.to, br.from)
                })
        };
        for e in &scenario.breakers {
            let known = case
                .branches
                .iter()
                .any(|br| (e.from, e.to) == (br.from, br.to) || (e.from, e.to) == (br.to, br.from));
            if !known {
                return Err(Error::Scenario(format!(
                    "breaker event on missing branch {}-{}",
                    e.from, e.to
                )));
            }
        }

        let mut branch_switches = Vec::new();
        for br in &case.branches {
            let ia = case.bus_index(br.from).ok_or(Error::UnknownBus {
                line: 0,
                bus: br.from,
            })?;
            let ib = case.bus_index(br.to).ok_or(Error::UnknownBus {
                line: 0,
                bus: br.to,
            })?;
            let (mut a, mut b) = (bus_nodes[ia], bus_nodes[ib]);
            if switched(br) {
                let closed = br.is_closed();
                let zero = Complex64::new(0.0, 0.0);
                let (pa, pb) = if closed {
                    (v0[ia], v0[ib])
                } else {
                    (zero, zero)
                };
                let ma = node(&mut net, &mut phasors, pa);
                let mb = node(&mut net, &mut phasors, pb);
                let mut poles = Vec::new();
                for ph in 0..3 {
                    poles.push((a[ph], ma[ph]));
                    poles.push((mb[ph], b[ph]));
                    for m in [ma[ph], mb[ph]] {
                        net.stamp_element(ElementKind::Resistor { r: 1.0 / G_ANCHOR }, m, GROUND)?;
                    }
                }
                let sw = net.add_switch_group(&poles, closed, G_SWITCH_ON)?;
                branch_switches.push((br.from, br.to, sw));
                (a, b) = (ma, mb);
            }
            for ph in 0..3 {
                stamp_series(&mut net, br.r, br.x / omega_b, a[ph], b[ph], dt)?;
                if br.b_shunt > 0.0 {
                    let c = 0.5 * br.b_shunt / omega_b;
                    net.stamp_element(ElementKind::Capacitor { c }, a[ph], GROUND)?;
                    net.stamp_element(ElementKind::Capacitor { c }, b[ph], GROUND)?;
                }
            }
        }

        let mut loads = Vec::new();
        for l in &case.loads {
            let i = case.bus_index(l.bus).expect("validated");
            let vm = v0[i].norm();
            let y = Complex64::new(l.p0, -l.q0) / (vm * vm);
            let mut elements: [Vec<ElementId>; 3] = Default::default();
            for ph in 0..3 {
                let n = bus_nodes[i][ph];
                let mut kinds = Vec::new();
                if y.re != 0.0 {
                    kinds.push(ElementKind::Resistor { r: 1.0 / y.re });
                }
                if y.im < 0.0 {
                    kinds.push(ElementKind::Inductor {
                        l: -1.0 / (y.im * omega_b),
                    });
                } else if y.im > 0.0 {
                    kinds.push(ElementKind::Capacitor { c: y.im / omega_b });
                }
                for kind in kinds {
                    elements[ph].push(net.stamp_element(kind, n, GROUND)?);
                }
            }
            loads.push(Load {
                bus: i,
                s0: Complex64::new(l.p0, l.q0),
                v0: vm,
                i_frac: l.i_frac,
                p_frac: l.p_frac,
                v_last: v0[i],
                elements,
                i_corr: Complex64::new(0.0, 0.0),
                i_total: (Complex64::new(l.p0, l.q0) / v0[i]).conj(),
            });
        }

        let mut sgs = Vec::new();
        for (k, sg) in case.sg_plants.iter().enumerate() {
            let i = case.bus_index(sg.bus).expect("validated");
            let t = snap.sg[k];
            let mut m = Synchronous::initialize(
                sg,
                v0[i],
                Complex64::new(t.p, t.q),
                s_sys,
                omega_b,
                dt,
                0.0,
            )?;
            m.set_mode(SgMode::ConstantSpeed)?;
            for ph in 0..3 {
                net.stamp_element(
                    ElementKind::Resistor {
                        r: 1.0 / m.conductance(),
                    },
                    bus_nodes[i][ph],
                    GROUND,
                )?;
            }
            sgs.push((m, i));
        }

        let mut gfls = Vec::new();
        for (k, g) in case.gfl_plants.iter().enumerate() {
            let i = case.bus_index(g.bus).expect("validated");
            let t = snap.gfl[k];
            let ratio = g.mva_base / s_sys;
            let inv = GridFollowing::new(
                g.params,
                g.mva_base,
                s_sys,
                case.nominal_hz,
                v0[i],
                (t.p / ratio, t.q / ratio),
                dt,
                0.0,
            );
            let i_src = (Complex64::new(t.p, t.q) / v0[i]).conj();
            let e = v0[i] + Complex64::new(SOURCE_R, SOURCE_X) * i_src;
            let src = node(&mut net, &mut phasors, e);
            let inner = node(&mut net, &mut phasors, v0[i]);
            let mut sources = [0; 3];
            let mut poles = Vec::new();
            for ph in 0..3 {
                sources[ph] =
                    net.stamp_element(ElementKind::IdealSource { e: 0.0 }, src[ph], GROUND)?;
                stamp_series(
                    &mut net,
                    SOURCE_R,
                    SOURCE_X / omega_b,
                    src[ph],
                    inner[ph],
                    dt,
                )?;
                poles.push((inner[ph], bus_nodes[i][ph]));
                net.stamp_element(
                    ElementKind::Resistor {
                        r: 1.0 / inv.conductance(),
                    },
                    bus_nodes[i][ph],
                    GROUND,
                )?;
            }
            let breaker = net.add_switch_group(&poles, true, G_SWITCH_ON)?;
            gfls.push(Gfl {
                inv,
                bus: i,
                sources,
                breaker,
                e,
            });
        }

        let mut owfs = Vec::new();
        for (k, plant) in case.owf_plants.iter().enumerate() {
            let i = case.bus_index(plant.poi_bus).expect("validated");
            let wind = scenario.wind_for(k);
            let model = OwfModel::new(plant, s_sys, case.nominal_hz, v0[i], wind.at(0.0), dt, 0.0)?;
            let ratio = model.base_ratio();
            let zero = Complex64::new(0.0, 0.0);
            let mid = node(&mut net, &mut phasors, zero);
            let term = node(&mut net, &mut phasors, zero);
            let mut collector: [Vec<ElementId>; 3] = Default::default();
            let mut poles = Vec::new();
            let p = &plant.params;
            for ph in 0..3 {
                poles.push((bus_nodes[i][ph], mid[ph]));
                collector[ph] = stamp_series(
                    &mut net,
                    p.r_col / ratio,
                    p.x_col / ratio / omega_b,
                    mid[ph],
                    term[ph],
                    dt,
                )?;
                net.stamp_element(
                    ElementKind::Resistor {
                        r: 1.0 / model.conductance(),
                    },
                    term[ph],
                    GROUND,
                )?;
            }
            let breaker = net.add_switch_group(&poles, false, G_SWITCH_ON)?;
            owfs.push(Owf {
                plant: plant.clone(),
                model,
                poi: i,
                mid,
                term,
                breaker,
                collector,
                wind,
                s_poi: zero,
            });
        }

        let mut faults = FaultTable::new();
        let mut switch_actions = Vec::new();
        for f in &scenario.faults {
            let i = case
                .bus_index(f.bus)
                .ok_or_else(|| Error::Scenario(format!("fault on missing bus {}", f.bus)))?;
            let z_base = case.z_base_ohm(f.bus).expect("bus exists");
            let [on, off] = faults.apply_fault(&mut net, *f, bus_nodes[i], z_base)?;
            switch_actions.push(SwitchAction {
                step: step_index(on.time, dt),
                op: SwitchOp::Close(on.switch),
                target: format!("bus{}", f.bus),
                what: "fault_on",
            });
            switch_actions.push(SwitchAction {
                step: step_index(off.time, dt),
                op: SwitchOp::Open(off.switch),
                target: format!("bus{}", f.bus),
                what: "fault_clear",
            });
        }
        for e in &scenario.breakers {
            let &(from, to, sw) = branch_switches
                .iter()
                .find(|(a, b, _)| (*a, *b) == (e.from, e.to) || (*a, *b) == (e.to, e.from))
                .expect("checked above");
            switch_actions.push(SwitchAction {
                step: step_index(e.time, dt),
                op: if e.close {
                    SwitchOp::Close(sw)
                } else {
                    SwitchOp::Open(sw)
                },
                target: format!("branch{from}-{to}"),
                what: if e.close { "close" } else { "open" },
            });
        }
        switch_actions.sort_by_key(|a| a.step);

        net.init_from_phasors(&phasors, omega_b)?;

        let schedule = Schedule::new(scenario.schedule.build(case)?)?;
        schedule.check_targets(case)?;

        let names = if scenario.channels.is_empty() {
            default_channels(case)
        } else {
            scenario.channels.clone()
        };
        let mut probes = Vec::new();
        let mut channels = Vec::new();
        for name in names {
            let (probe, unit) = parse_probe(&name, case)?;
            probes.push(probe);
            channels.push(ChannelInfo { name, unit });
        }
        let meta = RunMeta {
            case_hash: hex::encode(Sha256::digest(serialize_case(case).as_bytes())),
            dt,
            t_end: scenario.t_end,
            sample_period: dt * scenario.record_every as f64,
            version: env!("CARGO_PKG_VERSION").to_string(),
            snapshot: snap.to_text(),
            ..RunMeta::default()
        };
        let injections = vec![0.0; net.node_count() + 1];
        Ok(Simulation {
            scenario,
            dt,
            omega_b,
            cycle_steps,
            net,
            bus_nodes,
            meters,
            loads,
            zip_active: false,
            sgs,
            gfls,
            owfs,
            schedule,
            switch_actions,
            next_switch: 0,
            probes,
            channels,
            injections,
            meta,
            s_sys,
        })
    }
}

impl Simulation<'_> {
    fn run(&mut self) -> Result<Recording> {
        let n_steps = step_index(self.scenario.t_end, self.dt);
        let every = self.scenario.record_every as u64;
        let mut rec = Recording::new(std::mem::take(&mut self.channels), RunMeta::default());
        let mut row = vec![0.0; self.probes.len()];
        for n in 0..n_steps {
            self.apply_events(n)?;
            self.step(n + 1)?;
            if (n + 1) % every == 0 {
                for (slot, probe) in row.iter_mut().zip(&self.probes) {
                    *slot = self.probe(*probe);
                }
                if row.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Numerical {
                        time: (n + 1) as f64 * self.dt,
                        msg: "non-finite value in a recorded channel".into(),
                    });
                }
                rec.push((n + 1) as f64 * self.dt, &row);
            }
        }
        self.meta.steps = n_steps;
        rec.meta = std::mem::take(&mut self.meta);
        Ok(rec)
    }

    fn log(&mut self, n: u64, target: String, what: &str) {
        self.meta
            .events
            .push((n as f64 * self.dt, target, what.to_string()));
    }

    /// Applies the schedule actions and switch events due at step `n`.
    fn apply_events(&mut self, n: u64) -> Result<()> {
        let due: Vec<ScheduleAction> = self.schedule.due(n, self.dt).to_vec();
        for a in due {
            self.apply_action(n, &a)?;
            self.log(n, a.target.to_string(), a.kind.name());
        }
        while self.next_switch < self.switch_actions.len()
            && self.switch_actions[self.next_switch].step <= n
        {
            let k = self.next_switch;
            self.next_switch += 1;
            match self.switch_actions[k].op {
                SwitchOp::Close(sw) => {
                    self.net.apply_switch(sw, SwitchState::Closed)?;
                }
                SwitchOp::Open(sw) => self.net.open_at_current_zero(sw, self.cycle_steps)?,
            }
            let (target, what) = (
                self.switch_actions[k].target.clone(),
                self.switch_actions[k].what,
            );
            self.log(n, target, what);
        }
        Ok(())
    }

    fn apply_action(&mut self, n: u64, a: &ScheduleAction) -> Result<()> {
        let t = n as f64 * self.dt;
        match (a.target, a.kind) {
            (Target::Bulk, ActionKind::EnableExciters) => {
                for (m, _) in &mut self.sgs {
                    m.set_mode(SgMode::ExciterOn)?;
                }
            }
            (Target::Bulk, ActionKind::EnableGovernors) => {
                for (m, _) in &mut self.sgs {
                    m.set_mode(SgMode::GovernorOn)?;
                }
            }
            (Target::Bulk, ActionKind::SwapZipLoads) => self.zip_active = true,
            (Target::Bulk, ActionKind::RampIbrRefs { until }) => {
                for g in &mut self.gfls {
                    g.inv.start_ramp(until - t);
                }
            }
            (Target::Bulk, ActionKind::OpenSourceBreakers) => {
                for g in &self.gfls {
                    self.net.open_at_current_zero(g.breaker, self.cycle_steps)?;
                }
            }
            (Target::Owf(k), kind) => {
                let o = &mut self.owfs[k];
                match kind {
                    ActionKind::CloseOwfSwitch => {
                        // Re-lock the idle plant on the POI voltage as it is now.
                        let v = space_vector(self.bus_nodes[o.poi].map(|x| self.net.voltage(x)))
                            * Complex64::from_polar(1.0, -self.omega_b * t);
                        o.model = OwfModel::new(
                            &o.plant,
                            self.s_sys,
                            self.omega_b / (2.0 * PI),
                            v,
                            o.wind.at(t),
                            self.dt,
                            t,
                        )?;
                        self.net.apply_switch(o.breaker, SwitchState::Closed)?;
                    }
                    ActionKind::EnableGsc => o.model.enable_gsc()?,
                    ActionKind::StartTurbine => o.model.start_turbine()?,
                    ActionKind::EnableRsc => o.model.enable_rsc()?,
                    _ => unreachable!("validated schedule"),
                }
            }
            (Target::Bulk, _) => unreachable!("validated schedule"),
        }
        Ok(())
    }

    /// Advances the network and every device to step `n` (time `n dt`).
    fn step(&mut self, n: u64) -> Result<()> {
        let t = n as f64 * self.dt;
        let numerical = |e: Error| match e {
            Error::Numerical { .. } => e,
            e => Error::Numerical {
                time: t,
                msg: e.to_string(),
            },
        };
        let inj = &mut self.injections;
        inj.iter_mut().for_each(|x| *x = 0.0);
        let wt = self.omega_b * t;
        for g in &self.gfls {
            let e = crate::frames::phasor_to_abc(g.e, wt);
            for ph in 0..3 {
                self.net.set_source(g.sources[ph], e[ph])?;
            }
            let dev = g.inv.injection();
            for ph in 0..3 {
                inj[self.bus_nodes[g.bus][ph]] += dev[ph];
            }
        }
        for (m, bus) in &mut self.sgs {
            let dev = m.injection(t);
            for ph in 0..3 {
                inj[self.bus_nodes[*bus][ph]] += dev[ph];
            }
        }
        for o in &mut self.owfs {
            let dev = o.model.injection();
            for ph in 0..3 {
                inj[o.term[ph]] += dev[ph];
            }
        }
        if self.zip_active {
            let rot = Complex64::from_polar(1.0, self.omega_b * self.dt);
            for l in &mut self.loads {
                l.i_corr = l.correction(l.v_last * rot);
                let dev = abc_from_space_vector(-l.i_corr);
                for ph in 0..3 {
                    inj[self.bus_nodes[l.bus][ph]] += dev[ph];
                }
            }
        }
        self.net.solve_step(&self.injections).map_err(numerical)?;

        let net = &self.net;
        let v_at = |nodes: [usize; 3]| nodes.map(|x| net.voltage(x));
        for (m, bus) in &mut self.sgs {
            m.finish(v_at(self.bus_nodes[*bus]), t);
        }
        for g in &mut self.gfls {
            g.inv.finish(v_at(self.bus_nodes[g.bus]));
        }
        for l in &mut self.loads {
            l.v_last = space_vector(v_at(self.bus_nodes[l.bus]));
            let i_z: [f64; 3] =
                std::array::from_fn(|ph| l.elements[ph].iter().map(|&id| net.current(id)).sum());
            l.i_total = space_vector(i_z) + l.i_corr;
        }
        for (meter, nodes) in self.meters.iter_mut().zip(&self.bus_nodes) {
            meter.push(v_at(*nodes));
        }
        for o in &mut self.owfs {
            let wind = o.wind.at(t);
            let v_poi = v_at(self.bus_nodes[o.poi]);
            o.model
                .finish(v_at(o.term), v_poi, wind, t)
                .map_err(numerical)?;
            let i_col: [f64; 3] =
                std::array::from_fn(|ph| o.collector[ph].iter().map(|&id| net.current(id)).sum());
            o.s_poi = -space_vector(v_at(o.mid)) * space_vector(i_col).conj();
            let r = o.model.dc_audit().residual().abs();
            if r > self.meta.max_dc_residual {
                self.meta.max_dc_residual = r;
            }
        }
        Ok(())
    }

    fn probe(&self, p: Probe) -> f64 {
        let owf = |k: usize| &self.owfs[k];
        match p {
            Probe::OwfP(k) => owf(k).s_poi.re * self.s_sys,
            Probe::OwfQ(k) => owf(k).s_poi.im * self.s_sys,
            Probe::OwfVpoi(k) => self.meters[owf(k).poi].value(),
            Probe::OwfWind(k) => owf(k).model.out.wind,
            Probe::OwfVdc(k) => owf(k).model.dc.v,
            Probe::OwfSpeed(k) => owf(k).model.omega,
            Probe::OwfPitch(k) => owf(k).model.pitch.beta,
            Probe::OwfChopper(k) => {
                if owf(k).model.chopper_on() {
                    1.0
                } else {
                    0.0
                }
            }
            Probe::BusV(k) => self.meters[k].value(),
            Probe::BusVa(k) => self.net.voltage(self.bus_nodes[k][0]),
            Probe::SgSpeed(k) => self.sgs[k].0.state().speed,
            Probe::SgP(k) => self.sgs[k].0.electrical_power(),
            Probe::SgEfd(k) => self.sgs[k].0.state().efd,
            Probe::GflP(k) => self.gfls[k].inv.power().re,
            Probe::GflQ(k) => self.gfls[k].inv.power().im,
            Probe::LoadI(k) => self.loads[k].i_total.norm(),
            Probe::LoadP(k) => {
                let l = &self.loads[k];
                (l.v_last * l.i_total.conj()).re
            }
        }
    }
}

/// Series R-L branch with its parallel damping resistor; returns both ids.
fn stamp_series(
    net: &mut NodalSystem,
    r: f64,
    l: f64,
    a: usize,
    b: usize,
    dt: f64,
) -> Result<Vec<ElementId>> {
    if l > 0.0 {
        let rl = net.stamp_element(ElementKind::SeriesRl { r, l }, a, b)?;
        let damp = net.stamp_element(
            ElementKind::Resistor {
                r: damping_resistance(l, dt),
            },
            a,
            b,
        )?;
        Ok(vec![rl, damp])
    } else {
        Ok(vec![net.stamp_element(
            ElementKind::Resistor { r },
            a,
            b,
        )?])
    }
}
