//! Static grid description and the line-oriented case file format.
//!
//! A case file is UTF-8 text split into sections. Each section holds one
//! record per line with whitespace-separated positional fields, optionally
//! followed by `key=value` pairs. `#` starts a comment.
//!
//! ```text
//! [SYSTEM]
//! mva_base 100            # optional, default 100
//! frequency 60            # optional, default 60
//!
//! [BUS]
//! # id  kv     type   area  [v_set]
//! 1     16.5   slack  1     1.04
//!
//! [BRANCH]
//! # from to  r       x       b      [closed|open]
//! 1      4   0.0     0.0576  0.0
//!
//! [LOAD]
//! # bus  p0    q0    [z i p]        shares default to 0.4 0.3 0.3
//! 5      1.25  0.5
//!
//! [SG]
//! # bus mva  p_gen  h  xd  xq  xd'  xq'  ra  [td0= tq0= d= ka= ta= efd_max= efd_min= r= tg= p_max= p_min=]
//!
//! [GFL]
//! # bus mva  p_ref  q_ref  [fdb= vdb= kf= kv= imax= tlag= pll_bw= pll_zeta= gsh=]
//!
//! [OWF]
//! # poi_bus  n_turbines  [chopper=1|0  turbine_mw= cut_in= cut_out= ...]
//! ```
//!
//! Branch and load quantities are per-unit on the system base. Device
//! quantities are per-unit on the device's own MVA base (for OWF plants the
//! base is `n_turbines * turbine_mw`). Voltages are per-unit of the bus
//! nominal kV, frequencies are in Hz, deadbands in Hz / pu.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::params::keyed_params;

pub const DEFAULT_MVA_BASE: f64 = 100.0;
pub const DEFAULT_FREQUENCY: f64 = 60.0;
pub const DEFAULT_ZIP_SHARES: (f64, f64, f64) = (0.4, 0.3, 0.3);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl BusKind {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slack" => Some(BusKind::Slack),
            "pv" => Some(BusKind::Pv),
            "pq" => Some(BusKind::Pq),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            BusKind::Slack => "slack",
            BusKind::Pv => "PV",
            BusKind::Pq => "PQ",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakerState {
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub nominal_kv: f64,
    pub kind: BusKind,
    pub area: u32,
    /// Voltage magnitude setpoint for slack and PV buses.
    pub v_set: f64,
}

/// Pi-section line or two-winding transformer on the system base.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    pub b_shunt: f64,
    pub breaker: BreakerState,
}

impl Branch {
    pub fn is_closed(&self) -> bool {
        self.breaker == BreakerState::Closed
    }
}

/// Balanced load. `p0`/`q0` are drawn at the reference voltage; the shares
/// split the load into constant impedance, constant current and constant
/// power parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipLoad {
    pub bus: u32,
    pub p0: f64,
    pub q0: f64,
    pub z_frac: f64,
    pub i_frac: f64,
    pub p_frac: f64,
}

keyed_params! {
    /// Single-lag static exciter.
    pub struct ExciterParams {
        ka: "ka" = 50.0,
        ta: "ta" = 0.05,
        efd_max: "efd_max" = 5.0,
        efd_min: "efd_min" = -3.0,
    }
}

keyed_params! {
    /// Droop governor with a single-lag turbine.
    pub struct GovernorParams {
        r: "r" = 0.05,
        tg: "tg" = 0.5,
        p_max: "p_max" = 1.0,
        p_min: "p_min" = 0.0,
    }
}

keyed_params! {
    /// Machine time constants and damping not covered by the positional fields.
    pub struct SgDynamics {
        td0_p: "td0" = 6.0,
        tq0_p: "tq0" = 0.5,
        damping: "d" = 2.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgPlant {
    pub bus: u32,
    pub mva_base: f64,
    /// Scheduled active power on the machine base (ignored at the slack bus).
    pub p_gen: f64,
    pub h: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd_p: f64,
    pub xq_p: f64,
    pub ra: f64,
    pub dynamics: SgDynamics,
    pub exciter: ExciterParams,
    pub governor: GovernorParams,
}

keyed_params! {
    /// Grid-following inverter settings. Droop gains are in pu power per pu
    /// frequency (or voltage) outside the deadband.
    pub struct GflParams {
        freq_deadband: "fdb" = 0.017,
        volt_deadband: "vdb" = 0.01,
        kf: "kf" = 20.0,
        kv: "kv" = 20.0,
        i_max: "imax" = 1.1,
        t_lag: "tlag" = 0.02,
        pll_bandwidth_hz: "pll_bw" = 20.0,
        pll_zeta: "pll_zeta" = 0.707,
        /// Parallel shunt conductance stamped with the current source.
        g_shunt: "gsh" = 0.01,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GflPlant {
    pub bus: u32,
    pub mva_base: f64,
    pub p_ref: f64,
    pub q_ref: f64,
    pub params: GflParams,
}

keyed_params! {
    /// Type-4 turbine, converter and control settings, per turbine.
    pub struct OwfParams {
        turbine_mw: "turbine_mw" = 2.0,
        cut_in: "cut_in" = 4.0,
        cut_out: "cut_out" = 25.0,
        rated_wind: "rated_wind" = 12.0,
        air_density: "rho" = 1.225,
        h_turbine: "h" = 4.0,
        /// Radial export/collector impedance.
        r_col: "r_col" = 0.005,
        x_col: "x_col" = 0.08,
        /// Grid-side filter.
        r_f: "r_f" = 0.003,
        x_f: "x_f" = 0.15,
        /// Generator stator behind the rotor-side converter.
        r_s: "r_s" = 0.01,
        x_s: "x_s" = 0.3,
        speed_max: "speed_max" = 1.0,
        pitch_kp: "pitch_kp" = 150.0,
        pitch_ki: "pitch_ki" = 40.0,
        pitch_rate: "pitch_rate" = 10.0,
        pitch_max: "pitch_max" = 30.0,
        c_dc: "c_dc" = 0.03,
        v_dc_ref: "vdc_ref" = 1.0,
        chopper_on: "chop_on" = 1.05,
        chopper_off: "chop_off" = 1.02,
        v_dc_trip: "vdc_trip" = 1.1,
        i_max: "imax" = 1.1,
        cc_kp: "cc_kp" = 0.5,
        cc_ki: "cc_ki" = 40.0,
        vdc_kp: "vdc_kp" = 4.0,
        vdc_ki: "vdc_ki" = 100.0,
        vac_kp: "vac_kp" = 0.5,
        vac_ki: "vac_ki" = 20.0,
        q_kp: "q_kp" = 0.5,
        q_ki: "q_ki" = 40.0,
        p_kp: "p_kp" = 0.5,
        p_ki: "p_ki" = 40.0,
        vrsc_kp: "vrsc_kp" = 0.5,
        vrsc_ki: "vrsc_ki" = 20.0,
        lvrt_v_low: "lvrt_v0" = 0.3,
        lvrt_v_high: "lvrt_v1" = 0.9,
        startup_ramp: "ramp" = 1.0,
        /// +1 regulates on (reference - measured); -1 on (measured - reference).
        v_error_sign: "v_sign" = 1.0,
        pll_bandwidth_hz: "pll_bw" = 20.0,
        pll_zeta: "pll_zeta" = 0.707,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OwfPlant {
    pub poi_bus: u32,
    pub n_turbines: u32,
    pub chopper_enabled: bool,
    pub params: OwfParams,
}

impl OwfPlant {
    /// Applies one `key=value` option; `Ok(false)` for an unknown key.
    pub fn set_option(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        if key == "chopper" {
            self.chopper_enabled = match value {
                "1" | "on" | "true" => true,
                "0" | "off" | "false" => false,
                _ => return Err(format!("chopper must be on|off, found `{value}`")),
            };
            return Ok(true);
        }
        let v: f64 = value
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| format!("{key}: expected a number, found `{value}`"))?;
        Ok(self.params.set(key, v))
    }

    /// Checks the settings for consistency.
    pub fn check(&self) -> std::result::Result<(), String> {
        check_owf(self)
    }

    /// Plant rating in MW (also its MVA base).
    pub fn rating_mw(&self) -> f64 {
        self.n_turbines as f64 * self.params.turbine_mw
    }
}

/// Number of `turbine_mw` units needed for a plant of `capacity_mw`.
pub fn turbines_for_capacity(capacity_mw: f64, turbine_mw: f64) -> u32 {
    (capacity_mw / turbine_mw).round() as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemCase {
    pub system_mva_base: f64,
    pub nominal_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<ZipLoad>,
    pub sg_plants: Vec<SgPlant>,
    pub gfl_plants: Vec<GflPlant>,
    pub owf_plants: Vec<OwfPlant>,
}

impl Default for SystemCase {
    fn default() -> Self {
        SystemCase {
            system_mva_base: DEFAULT_MVA_BASE,
            nominal_hz: DEFAULT_FREQUENCY,
            buses: Vec::new(),
            branches: Vec::new(),
            loads: Vec::new(),
            sg_plants: Vec::new(),
            gfl_plants: Vec::new(),
            owf_plants: Vec::new(),
        }
    }
}

impl SystemCase {
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus(&self, id: u32) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Base impedance in ohms of bus `id` on the system MVA base.
    pub fn z_base_ohm(&self, id: u32) -> Option<f64> {
        self.bus(id)
            .map(|b| b.nominal_kv * b.nominal_kv / self.system_mva_base)
    }

    pub fn omega_base(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.nominal_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Power,
    Impedance,
}

/// Converts a per-unit value between MVA bases. Powers (and currents at a
/// shared voltage base) scale by `from/to`, impedances by `to/from`.
pub fn rebase(value: f64, from_mva: f64, to_mva: f64, quantity: Quantity) -> Result<f64> {
    if !(from_mva > 0.0) || !(to_mva > 0.0) {
        return Err(Error::InvalidValue(format!(
            "MVA bases must be positive (got {from_mva} and {to_mva})"
        )));
    }
    Ok(match quantity {
        Quantity::Power => value * from_mva / to_mva,
        Quantity::Impedance => value * to_mva / from_mva,
    })
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    System,
    Bus,
    Branch,
    Load,
    Sg,
    Gfl,
    Owf,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "SYSTEM" => Some(Section::System),
            "BUS" => Some(Section::Bus),
            "BRANCH" => Some(Section::Branch),
            "LOAD" => Some(Section::Load),
            "SG" => Some(Section::Sg),
            "GFL" => Some(Section::Gfl),
            "OWF" => Some(Section::Owf),
            _ => None,
        }
    }
}

/// One record split into positional fields and `key=value` options.
struct Record<'a> {
    line: usize,
    positional: Vec<&'a str>,
    options: Vec<(&'a str, &'a str)>,
}

impl<'a> Record<'a> {
    fn split(line: usize, text: &'a str) -> Result<Self> {
        let mut positional = Vec::new();
        let mut options = Vec::new();
        for tok in text.split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                if k.is_empty() || v.is_empty() {
                    return Err(syntax(line, format!("malformed option `{tok}`")));
                }
                options.push((k, v));
            } else {
                if !options.is_empty() {
                    return Err(syntax(
                        line,
                        format!("positional field `{tok}` after options"),
                    ));
                }
                positional.push(tok);
            }
        }
        Ok(Record {
            line,
            positional,
            options,
        })
    }

    fn arity(&self, min: usize, max: usize, what: &str) -> Result<()> {
        let n = self.positional.len();
        if n < min || n > max {
            let expect = if min == max {
                format!("{min}")
            } else {
                format!("{min}..={max}")
            };
            return Err(syntax(
                self.line,
                format!("{what} record expects {expect} fields, found {n}"),
            ));
        }
        Ok(())
    }

    fn f64_at(&self, i: usize, name: &str) -> Result<f64> {
        parse_f64(self.line, self.positional[i], name)
    }

    fn f64_or(&self, i: usize, name: &str, default: f64) -> Result<f64> {
        match self.positional.get(i) {
            Some(_) => self.f64_at(i, name),
            None => Ok(default),
        }
    }

    fn u32_at(&self, i: usize, name: &str) -> Result<u32> {
        let tok = self.positional[i];
        tok.parse::<u32>().map_err(|_| {
            syntax(
                self.line,
                format!("{name}: expected a non-negative integer, found `{tok}`"),
            )
        })
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(line: usize, tok: &str, name: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| syntax(line, format!("{name}: expected a number, found `{tok}`")))?;
    if !v.is_finite() {
        return Err(syntax(line, format!("{name}: value must be finite")));
    }
    Ok(v)
}

fn apply_options<F>(rec: &Record<'_>, mut set: F) -> Result<()>
where
    F: FnMut(&str, &str) -> Result<bool>,
{
    for (k, v) in &rec.options {
        if !set(k, v)? {
            return Err(syntax(rec.line, format!("unknown option `{k}`")));
        }
    }
    Ok(())
}

/// Parses case-file text into a [`SystemCase`].
pub fn parse_case(text: &str) -> Result<SystemCase> {
    let mut case = SystemCase::default();
    let mut section: Option<Section> = None;
    let mut bus_lines: HashMap<u32, usize> = HashMap::new();
    // (line, bus) for every device/branch reference, resolved after all buses are known
    let mut refs: Vec<(usize, u32)> = Vec::new();
    let mut system_keys: BTreeSet<String> = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| syntax(line, "unterminated section header"))?;
            section = Some(
                Section::parse(name.trim())
                    .ok_or_else(|| syntax(line, format!("unknown section `{name}`")))?,
            );
            continue;
        }
        let sec = section.ok_or_else(|| syntax(line, "record before any section header"))?;
        let rec = Record::split(line, content)?;

        match sec {
            Section::System => {
                rec.arity(2, 2, "SYSTEM")?;
                let key = rec.positional[0].to_ascii_lowercase();
                if !system_keys.insert(key.clone()) {
                    return Err(Error::DuplicateId {
                        line,
                        what: "system key",
                        id: key,
                    });
                }
                let v = rec.f64_at(1, &key)?;
                match key.as_str() {
                    "mva_base" if v > 0.0 => case.system_mva_base = v,
                    "frequency" if v > 0.0 => case.nominal_hz = v,
                    "mva_base" | "frequency" => {
                        return Err(syntax(line, format!("{key} must be positive")))
                    }
                    _ => return Err(syntax(line, format!("unknown system key `{key}`"))),
                }
            }
            Section::Bus => {
                rec.arity(4, 5, "BUS")?;
                let id = rec.u32_at(0, "bus id")?;
                let nominal_kv = rec.f64_at(1, "nominal_kv")?;
                let kind = BusKind::parse(rec.positional[2]).ok_or_else(|| {
                    syntax(line, format!("unknown bus type `{}`", rec.positional[2]))
                })?;
                let area = rec.u32_at(3, "area")?;
                let v_set = rec.f64_or(4, "v_set", 1.0)?;
                if nominal_kv <= 0.0 {
                    return Err(syntax(line, "nominal_kv must be positive"));
                }
                if v_set <= 0.0 {
                    return Err(syntax(line, "v_set must be positive"));
                }
                if bus_lines.insert(id, line).is_some() {
                    return Err(Error::DuplicateId {
                        line,
                        what: "bus",
                        id: id.to_string(),
                    });
                }
                case.buses.push(Bus {
                    id,
                    nominal_kv,
                    kind,
                    area,
                    v_set,
                });
            }
            Section::Branch => {
                rec.arity(5, 6, "BRANCH")?;
                let from = rec.u32_at(0, "from")?;
                let to = rec.u32_at(1, "to")?;
                let r = rec.f64_at(2, "r")?;
                let x = rec.f64_at(3, "x")?;
                let b_shunt = rec.f64_at(4, "b")?;
                let breaker = match rec.positional.get(5).map(|s| s.to_ascii_lowercase()) {
                    None => BreakerState::Closed,
                    Some(s) if s == "closed" => BreakerState::Closed,
                    Some(s) if s == "open" => BreakerState::Open,
                    Some(s) => {
                        return Err(syntax(
                            line,
                            format!("breaker state must be open|closed, found `{s}`"),
                        ))
                    }
                };
                if from == to {
                    return Err(syntax(line, "branch endpoints must differ"));
                }
                if r < 0.0 || (r == 0.0 && x == 0.0) {
                    return Err(syntax(line, "branch impedance must be nonzero with r >= 0"));
                }
                refs.push((line, from));
                refs.push((line, to));
                case.branches.push(Branch {
                    from,
                    to,
                    r,
                    x,
                    b_shunt,
                    breaker,
                });
            }
            Section::Load => {
                if rec.positional.len() != 3 && rec.positional.len() != 6 {
                    return Err(syntax(line, "LOAD record expects 3 or 6 fields"));
                }
                let bus = rec.u32_at(0, "bus")?;
                let p0 = rec.f64_at(1, "p0")?;
                let q0 = rec.f64_at(2, "q0")?;
                let (z, i, p) = if rec.positional.len() == 6 {
                    (
                        rec.f64_at(3, "z")?,
                        rec.f64_at(4, "i")?,
                        rec.f64_at(5, "p")?,
                    )
                } else {
                    DEFAULT_ZIP_SHARES
                };
                let load = ZipLoad {
                    bus,
                    p0,
                    q0,
                    z_frac: z,
                    i_frac: i,
                    p_frac: p,
                };
                check_zip(&load).map_err(|m| syntax(line, m))?;
                refs.push((line, bus));
                case.loads.push(load);
            }
            Section::Sg => {
                rec.arity(9, 9, "SG")?;
                let mut sg = SgPlant {
                    bus: rec.u32_at(0, "bus")?,
                    mva_base: rec.f64_at(1, "mva")?,
                    p_gen: rec.f64_at(2, "p_gen")?,
                    h: rec.f64_at(3, "h")?,
                    xd: rec.f64_at(4, "xd")?,
                    xq: rec.f64_at(5, "xq")?,
                    xd_p: rec.f64_at(6, "xd'")?,
                    xq_p: rec.f64_at(7, "xq'")?,
                    ra: rec.f64_at(8, "ra")?,
                    dynamics: SgDynamics::default(),
                    exciter: ExciterParams::default(),
                    governor: GovernorParams::default(),
                };
                apply_options(&rec, |k, v| {
                    let v = parse_f64(line, v, k)?;
                    Ok(sg.dynamics.set(k, v) || sg.exciter.set(k, v) || sg.governor.set(k, v))
                })?;
                check_sg(&sg).map_err(|m| syntax(line, m))?;
                refs.push((line, sg.bus));
                case.sg_plants.push(sg);
            }
            Section::Gfl => {
                rec.arity(4, 4, "GFL")?;
                let mut gfl = GflPlant {
                    bus: rec.u32_at(0, "bus")?,
                    mva_base: rec.f64_at(1, "mva")?,
                    p_ref: rec.f64_at(2, "p_ref")?,
                    q_ref: rec.f64_at(3, "q_ref")?,
                    params: GflParams::default(),
                };
                apply_options(&rec, |k, v| Ok(gfl.params.set(k, parse_f64(line, v, k)?)))?;
                check_gfl(&gfl).map_err(|m| syntax(line, m))?;
                refs.push((line, gfl.bus));
                case.gfl_plants.push(gfl);
            }
            Section::Owf => {
                rec.arity(2, 2, "OWF")?;
                let mut owf = OwfPlant {
                    poi_bus: rec.u32_at(0, "poi_bus")?,
                    n_turbines: rec.u32_at(1, "n_turbines")?,
                    chopper_enabled: true,
                    params: OwfParams::default(),
                };
                apply_options(&rec, |k, v| {
                    owf.set_option(k, v).map_err(|m| syntax(line, m))
                })?;
                check_owf(&owf).map_err(|m| syntax(line, m))?;
                refs.push((line, owf.poi_bus));
                case.owf_plants.push(owf);
            }
        }
    }

    for (line, bus) in refs {
        if !bus_lines.contains_key(&bus) {
            return Err(Error::UnknownBus { line, bus });
        }
    }
    Ok(case)
}

fn check_zip(l: &ZipLoad) -> std::result::Result<(), String> {
    if l.z_frac < 0.0 || l.i_frac < 0.0 || l.p_frac < 0.0 {
        return Err("ZIP shares must be non-negative".into());
    }
    let sum = l.z_frac + l.i_frac + l.p_frac;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("ZIP shares must sum to 1 (sum = {sum})"));
    }
    Ok(())
}

fn check_sg(sg: &SgPlant) -> std::result::Result<(), String> {
    if sg.mva_base <= 0.0 {
        return Err("SG mva base must be positive".into());
    }
    if sg.h <= 0.0 {
        return Err("SG inertia h must be positive".into());
    }
    if !(sg.xd_p > 0.0 && sg.xd >= sg.xd_p) {
        return Err("SG reactances must satisfy xd >= xd' > 0".into());
    }
    if !(sg.xq_p > 0.0 && sg.xq >= sg.xq_p) {
        return Err("SG reactances must satisfy xq >= xq' > 0".into());
    }
    if sg.ra < 0.0 {
        return Err("SG ra must be non-negative".into());
    }
    let d = &sg.dynamics;
    if d.td0_p <= 0.0 || d.tq0_p <= 0.0 {
        return Err("SG open-circuit time constants must be positive".into());
    }
    if sg.exciter.ta <= 0.0 || sg.exciter.efd_max < sg.exciter.efd_min {
        return Err("exciter needs ta > 0 and efd_max >= efd_min".into());
    }
    if sg.governor.r <= 0.0 || sg.governor.tg <= 0.0 || sg.governor.p_max < sg.governor.p_min {
        return Err("governor needs r > 0, tg > 0 and p_max >= p_min".into());
    }
    Ok(())
}

fn check_gfl(g: &GflPlant) -> std::result::Result<(), String> {
    if g.mva_base <= 0.0 {
        return Err("GFL mva base must be positive".into());
    }
    if g.params.freq_deadband < 0.0 || g.params.volt_deadband < 0.0 {
        return Err("GFL deadbands must be non-negative".into());
    }
    if g.p_ref.abs() > 1.0 {
        return Err("GFL |p_ref| must not exceed 1 pu on its own base".into());
    }
    if g.params.i_max <= 0.0 || g.params.t_lag <= 0.0 || g.params.g_shunt <= 0.0 {
        return Err("GFL imax, tlag and gsh must be positive".into());
    }
    Ok(())
}

fn check_owf(o: &OwfPlant) -> std::result::Result<(), String> {
    let p = &o.params;
    if o.n_turbines < 1 {
        return Err("OWF needs at least one turbine".into());
    }
    if !(p.cut_in > 0.0 && p.cut_in < p.cut_out) {
        return Err("OWF needs 0 < cut_in < cut_out".into());
    }
    if !(p.rated_wind > p.cut_in && p.rated_wind < p.cut_out) {
        return Err("OWF rated wind must lie between cut-in and cut-out".into());
    }
    if p.turbine_mw <= 0.0 || p.c_dc <= 0.0 || p.x_f <= 0.0 || p.x_s <= 0.0 || p.h_turbine <= 0.0 {
        return Err("OWF turbine_mw, c_dc, x_f, x_s and h must be positive".into());
    }
    if p.r_col < 0.0 || (p.r_col == 0.0 && p.x_col == 0.0) {
        return Err("OWF collector impedance must be nonzero".into());
    }
    if !(p.chopper_off < p.chopper_on) {
        return Err("OWF chopper release level must be below its engage level".into());
    }
    if !(p.lvrt_v_low < p.lvrt_v_high) {
        return Err("OWF LVRT table needs lvrt_v0 < lvrt_v1".into());
    }
    if p.v_error_sign != 1.0 && p.v_error_sign != -1.0 {
        return Err("OWF v_sign must be +1 or -1".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Serialization

fn push_options(out: &mut String, entries: &[(&str, f64)]) {
    for (k, v) in entries {
        let _ = write!(out, " {k}={v}");
    }
}

/// Writes a case back to the text format. Every optional field is written
/// explicitly, so `parse_case(&serialize_case(c)) == c`.
pub fn serialize_case(case: &SystemCase) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "[SYSTEM]\nmva_base {}\nfrequency {}",
        case.system_mva_base, case.nominal_hz
    );

    out.push_str("\n[BUS]\n");
    for b in &case.buses {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            b.id,
            b.nominal_kv,
            b.kind.as_str(),
            b.area,
            b.v_set
        );
    }
    out.push_str("\n[BRANCH]\n");
    for br in &case.branches {
        let state = if br.is_closed() { "closed" } else { "open" };
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            br.from, br.to, br.r, br.x, br.b_shunt, state
        );
    }
    out.push_str("\n[LOAD]\n");
    for l in &case.loads {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            l.bus, l.p0, l.q0, l.z_frac, l.i_frac, l.p_frac
        );
    }
    out.push_str("\n[SG]\n");
    for sg in &case.sg_plants {
        let _ = write!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            sg.bus, sg.mva_base, sg.p_gen, sg.h, sg.xd, sg.xq, sg.xd_p, sg.xq_p, sg.ra
        );
        push_options(&mut out, &sg.dynamics.entries());
        push_options(&mut out, &sg.exciter.entries());
        push_options(&mut out, &sg.governor.entries());
        out.push('\n');
    }
    out.push_str("\n[GFL]\n");
    for g in &case.gfl_plants {
        let _ = write!(out, "{} {} {} {}", g.bus, g.mva_base, g.p_ref, g.q_ref);
        push_options(&mut out, &g.params.entries());
        out.push('\n');
    }
    out.push_str("\n[OWF]\n");
    for o in &case.owf_plants {
        let _ = write!(
            out,
            "{} {} chopper={}",
            o.poi_bus,
            o.n_turbines,
            if o.chopper_enabled { "on" } else { "off" }
        );
        push_options(&mut out, &o.params.entries());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// The closed-breaker graph has more than one component.
    Islanded {
        islands: Vec<Vec<u32>>,
    },
    MissingSlack {
        island: Vec<u32>,
    },
    MultipleSlack {
        slacks: Vec<u32>,
    },
    NonPositiveImpedance {
        from: u32,
        to: u32,
    },
    UnknownBus {
        what: &'static str,
        bus: u32,
    },
    DuplicateBus {
        bus: u32,
    },
    BadValue {
        what: String,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Islanded { islands } => write!(
                f,
                "network splits into {} islands: {islands:?}",
                islands.len()
            ),
            Violation::MissingSlack { island } => write!(f, "island {island:?} has no slack bus"),
            Violation::MultipleSlack { slacks } => {
                write!(f, "island has several slack buses: {slacks:?}")
            }
            Violation::NonPositiveImpedance { from, to } => {
                write!(f, "branch {from}-{to} has a non-positive impedance")
            }
            Violation::UnknownBus { what, bus } => write!(f, "{what} references unknown bus {bus}"),
            Violation::DuplicateBus { bus } => write!(f, "bus {bus} defined more than once"),
            Violation::BadValue { what } => write!(f, "{what}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_runnable(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Connected components of the closed-breaker graph, as lists of bus ids.
pub fn islands(case: &SystemCase) -> Vec<Vec<u32>> {
    let n = case.buses.len();
    let index: HashMap<u32, usize> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id, i))
        .collect();
    let mut adj = vec![Vec::new(); n];
    for br in case.branches.iter().filter(|b| b.is_closed()) {
        if let (Some(&a), Some(&b)) = (index.get(&br.from), index.get(&br.to)) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut comp = Vec::new();
        while let Some(u) = stack.pop() {
            comp.push(case.buses[u].id);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Lists every reason the case cannot be simulated. An empty report means
/// the case is runnable.
pub fn validate_case(case: &SystemCase) -> ValidationReport {
    let mut v = Vec::new();
    let mut ids: BTreeMap<u32, usize> = BTreeMap::new();
    for b in &case.buses {
        *ids.entry(b.id).or_default() += 1;
        if !(b.nominal_kv > 0.0) || !(b.v_set > 0.0) {
            v.push(Violation::BadValue {
                what: format!("bus {} needs positive kV and v_set", b.id),
            });
        }
    }
    for (&bus, &count) in &ids {
        if count > 1 {
            v.push(Violation::DuplicateBus { bus });
        }
    }
    let known = |bus: u32| ids.contains_key(&bus);

    for br in &case.branches {
        for bus in [br.from, br.to] {
            if !known(bus) {
                v.push(Violation::UnknownBus {
                    what: "branch",
                    bus,
                });
            }
        }
        if br.r < 0.0 || (br.r == 0.0 && br.x == 0.0) {
            v.push(Violation::NonPositiveImpedance {
                from: br.from,
                to: br.to,
            });
        }
    }
    for l in &case.loads {
        if !known(l.bus) {
            v.push(Violation::UnknownBus {
                what: "load",
                bus: l.bus,
            });
        }
        if let Err(m) = check_zip(l) {
            v.push(Violation::BadValue {
                what: format!("load at bus {}: {m}", l.bus),
            });
        }
    }
    for sg in &case.sg_plants {
        if !known(sg.bus) {
            v.push(Violation::UnknownBus {
                what: "SG",
                bus: sg.bus,
            });
        }
        if let Err(m) = check_sg(sg) {
            v.push(Violation::BadValue {
                what: format!("SG at bus {}: {m}", sg.bus),
            });
        }
    }
    for g in &case.gfl_plants {
        if !known(g.bus) {
            v.push(Violation::UnknownBus {
                what: "GFL",
                bus: g.bus,
            });
        }
        if let Err(m) = check_gfl(g) {
            v.push(Violation::BadValue {
                what: format!("GFL at bus {}: {m}", g.bus),
            });
        }
    }
    for o in &case.owf_plants {
        if !known(o.poi_bus) {
            v.push(Violation::UnknownBus {
                what: "OWF",
                bus: o.poi_bus,
            });
        }
        if let Err(m) = check_owf(o) {
            v.push(Violation::BadValue {
                what: format!("OWF at bus {}: {m}", o.poi_bus),
            });
        }
    }

    // Slack buses must carry a machine; a slack with nothing behind it
    // cannot be represented in the time-domain run.
    for b in case.buses.iter().filter(|b| b.kind != BusKind::Pq) {
        if !case.sg_plants.iter().any(|s| s.bus == b.id) {
            v.push(Violation::BadValue {
                what: format!(
                    "{} bus {} has no synchronous machine",
                    b.kind.as_str(),
                    b.id
                ),
            });
        }
    }

    let isl = islands(case);
    if isl.len() > 1 {
        v.push(Violation::Islanded {
            islands: isl.clone(),
        });
    }
    for island in &isl {
        let slacks: Vec<u32> = island
            .iter()
            .filter(|&&id| case.bus(id).is_some_and(|b| b.kind == BusKind::Slack))
            .copied()
            .collect();
        match slacks.len() {
            0 => v.push(Violation::MissingSlack {
                island: island.clone(),
            }),
            1 => {}
            _ => v.push(Violation::MultipleSlack { slacks }),
        }
    }
    ValidationReport { violations: v }
}
