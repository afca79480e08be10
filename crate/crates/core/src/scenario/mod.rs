//! Scenario files, the simulation loop and channel recording.
//!
//! A scenario file uses the same line format as case files:
//!
//! ```text
//! [SCENARIO]
//! case ninebus_owf.case     # relative to the scenario file
//! dt 50e-6
//! t_end 20
//! record_every 20           # keep every 20th step
//!
//! [SCHEDULE]
//! exciters 0.5
//! governors 0.6
//! zip_swap 0.7
//! ramp 1.0 1.9
//! source_open 2.0
//! owf_t0 10
//! owf_spacing 2
//! owf_stage 0.5
//! owf2 12                   # connection time of one plant
//! action 10 owf1 close_owf_switch   # hand-built sequence for a target
//!
//! [WIND]
//! owf1 0:10 15:10 19:7      # time:speed points, piecewise linear
//!
//! [FAULT]
//! # bus  t_on  duration  r_ohm
//! 5      15    0.15      0.01
//!
//! [BREAKER]
//! # time  from  to  open|close
//! 3.0     4     5   open
//!
//! [PLANTS]
//! owf2 chopper=off          # per-plant option overrides, case-file keys
//!
//! [CHANNELS]
//! owf1.p owf1.vpoi owf1.wind
//! ```
//!
//! Hand-built `action` lines replace the default sequence of their target.

mod engine;
mod record;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::case::{OwfPlant, SystemCase};
use crate::emt::FaultSpec;
use crate::error::{Error, Result};
use crate::sequencer::{
    bulk_schedule, owf_sequence, ActionKind, BulkTimes, ScheduleAction, Target, OWF_EARLIEST,
    OWF_STAGE_SPACING,
};

pub use engine::{run_simulation, run_with_case};
pub use record::{write_csv, write_meta, ChannelInfo, Recording, RunMeta};

/// Wind speed assumed for plants without a profile, m/s.
pub const DEFAULT_WIND: f64 = 10.0;

/// Piecewise-linear wind speed over time, held flat outside its points.
#[derive(Debug, Clone, PartialEq)]
pub struct WindProfile {
    points: Vec<(f64, f64)>,
}

impl WindProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Scenario("wind profile has no points".into()));
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::Scenario("wind profile times must be sorted".into()));
        }
        if points.iter().any(|&(t, v)| !t.is_finite() || !(v >= 0.0)) {
            return Err(Error::Scenario(
                "wind profile needs finite times and non-negative speeds".into(),
            ));
        }
        Ok(WindProfile { points })
    }

    pub fn constant(v: f64) -> Self {
        WindProfile {
            points: vec![(0.0, v)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn at(&self, t: f64) -> f64 {
        interpolate(&self.points, t)
    }
}

fn interpolate(points: &[(f64, f64)], t: f64) -> f64 {
    let k = points.partition_point(|p| p.0 <= t);
    if k == 0 {
        return points[0].1;
    }
    if k == points.len() {
        return points[k - 1].1;
    }
    let (t0, v0) = points[k - 1];
    let (t1, v1) = points[k];
    if t1 == t0 {
        return v1;
    }
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Wind speed at `t` from time-sorted `points`.
pub fn apply_wind_profile(points: &[(f64, f64)], t: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Scenario("wind profile has no points".into()));
    }
    Ok(interpolate(points, t))
}

/// Scheduled operation of a case branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakerEvent {
    pub time: f64,
    pub from: u32,
    pub to: u32,
    pub close: bool,
}

/// Start-up timing and any hand-built sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub bulk: BulkTimes,
    pub owf_t0: f64,
    pub owf_spacing: f64,
    pub owf_stage: f64,
    /// Connection time per plant (0-based), replacing `t0 + k * spacing`.
    pub owf_start: BTreeMap<usize, f64>,
    pub custom: Vec<ScheduleAction>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            bulk: BulkTimes::default(),
            owf_t0: 10.0,
            owf_spacing: 2.0,
            owf_stage: OWF_STAGE_SPACING,
            owf_start: BTreeMap::new(),
            custom: Vec::new(),
        }
    }
}

impl ScheduleSpec {
    /// Full action list for a case with the given contents.
    pub fn build(&self, case: &SystemCase) -> Result<Vec<ScheduleAction>> {
        let custom_for = |t: Target| self.custom.iter().any(|a| a.target == t);
        let mut out: Vec<ScheduleAction> = if custom_for(Target::Bulk) {
            Vec::new()
        } else {
            bulk_schedule(case, &self.bulk)
        };
        for k in 0..case.owf_plants.len() {
            if custom_for(Target::Owf(k)) {
                continue;
            }
            let t0 = match self.owf_start.get(&k) {
                Some(&t) => t,
                None => self.owf_t0 + k as f64 * self.owf_spacing,
            };
            if !(t0 >= OWF_EARLIEST) {
                return Err(Error::Schedule(format!(
                    "owf{} cannot connect before {OWF_EARLIEST} s (got {t0} s)",
                    k + 1
                )));
            }
            out.extend(owf_sequence(k, t0, self.owf_stage));
        }
        out.extend(self.custom.iter().copied());
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub case_path: PathBuf,
    pub dt: f64,
    pub t_end: f64,
    /// Recording keeps one sample every `record_every` steps.
    pub record_every: usize,
    pub schedule: ScheduleSpec,
    /// Wind per plant (0-based); missing plants see [`DEFAULT_WIND`].
    pub wind: BTreeMap<usize, WindProfile>,
    pub faults: Vec<FaultSpec>,
    pub breakers: Vec<BreakerEvent>,
    /// Option overrides per plant (0-based), as case-file `key=value` pairs.
    pub plant_options: BTreeMap<usize, Vec<(String, String)>>,
    /// Empty means the default set: power, POI voltage and wind per plant.
    pub channels: Vec<String>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            case_path: PathBuf::new(),
            dt: 50e-6,
            t_end: 1.0,
            record_every: 1,
            schedule: ScheduleSpec::default(),
            wind: BTreeMap::new(),
            faults: Vec::new(),
            breakers: Vec::new(),
            plant_options: BTreeMap::new(),
            channels: Vec::new(),
        }
    }
}

impl Scenario {
    /// Checks the scalar settings and event times.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Scenario(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Scenario(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Scenario("record_every must be at least 1".into()));
        }
        let last_event = self
            .faults
            .iter()
            .map(FaultSpec::t_off)
            .chain(self.breakers.iter().map(|b| b.time))
            .fold(f64::NEG_INFINITY, f64::max);
        if last_event >= self.t_end && self.t_end > 0.0 {
            return Err(Error::Scenario(format!(
                "t_end {} s must come after the last event at {last_event} s",
                self.t_end
            )));
        }
        Ok(())
    }

    /// The case with this scenario's plant overrides applied.
    pub fn adjust_case(&self, case: &SystemCase) -> Result<SystemCase> {
        let mut out = case.clone();
        for (&k, opts) in &self.plant_options {
            let n = out.owf_plants.len();
            let plant = out.owf_plants.get_mut(k).ok_or_else(|| {
                Error::Scenario(format!(
                    "override for owf{} but the case has {n} plant(s)",
                    k + 1
                ))
            })?;
            for (key, value) in opts {
                plant.set_option(key, value).map_err(Error::Scenario)?;
            }
            plant.check().map_err(Error::Scenario)?;
        }
        Ok(out)
    }

    pub fn wind_for(&self, plant: usize) -> WindProfile {
        self.wind
            .get(&plant)
            .cloned()
            .unwrap_or_else(|| WindProfile::constant(DEFAULT_WIND))
    }
}

/// Reads a scenario file; the case path is resolved against its directory.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut s = parse_scenario(&text)?;
    if s.case_path.is_relative() {
        if let Some(dir) = path.parent() {
            s.case_path = dir.join(&s.case_path);
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Scenario,
    Schedule,
    Wind,
    Fault,
    Breaker,
    Plants,
    Channels,
}

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        msg: msg.into(),
    }
}

fn number(line: usize, tok: &str, what: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| syntax(line, format!("{what}: expected a number, found `{tok}`")))?;
    if !v.is_finite() {
        return Err(syntax(line, format!("{what}: value must be finite")));
    }
    Ok(v)
}

/// `owfK` (1-based) to a plant index.
fn plant_index(tok: &str) -> Option<usize> {
    let k: usize = tok.strip_prefix("owf")?.parse().ok()?;
    k.checked_sub(1)
}

fn action_kind(line: usize, name: &str, rest: &[&str]) -> Result<ActionKind> {
    let kind = match name {
        "enable_exciters" => ActionKind::EnableExciters,
        "enable_governors" => ActionKind::EnableGovernors,
        "swap_zip_loads" => ActionKind::SwapZipLoads,
        "ramp_ibr_refs" => {
            let until = rest
                .iter()
                .find_map(|t| t.strip_prefix("until="))
                .ok_or_else(|| syntax(line, "ramp_ibr_refs needs until=<s>"))?;
            ActionKind::RampIbrRefs {
                until: number(line, until, "until")?,
            }
        }
        "open_source_breakers" => ActionKind::OpenSourceBreakers,
        "close_owf_switch" | "connect_owf_poi" => ActionKind::CloseOwfSwitch,
        "enable_gsc" => ActionKind::EnableGsc,
        "start_turbine" => ActionKind::StartTurbine,
        "enable_rsc" => ActionKind::EnableRsc,
        _ => return Err(syntax(line, format!("unknown action `{name}`"))),
    };
    if !matches!(kind, ActionKind::RampIbrRefs { .. }) && !rest.is_empty() {
        return Err(syntax(line, format!("unexpected fields after `{name}`")));
    }
    Ok(kind)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut s = Scenario::default();
    let mut section = None;
    let mut have_case = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            section = Some(match name.trim().to_ascii_uppercase().as_str() {
                "SCENARIO" => Section::Scenario,
                "SCHEDULE" => Section::Schedule,
                "WIND" => Section::Wind,
                "FAULT" => Section::Fault,
                "BREAKER" => Section::Breaker,
                "PLANTS" => Section::Plants,
                "CHANNELS" => Section::Channels,
                other => return Err(syntax(line, format!("unknown section [{other}]"))),
            });
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some(section) = section else {
            return Err(syntax(line, "record outside of a section"));
        };
        let arity = |n: usize| -> Result<()> {
            if toks.len() != n {
                return Err(syntax(
                    line,
                    format!("`{}` expects {} value(s)", toks[0], n - 1),
                ));
            }
            Ok(())
        };
        match section {
            Section::Scenario => {
                arity(2)?;
                match toks[0] {
                    "case" => {
                        s.case_path = PathBuf::from(toks[1]);
                        have_case = true;
                    }
                    "dt" => s.dt = number(line, toks[1], "dt")?,
                    "t_end" => s.t_end = number(line, toks[1], "t_end")?,
                    "record_every" => {
                        s.record_every = toks[1].parse().map_err(|_| {
                            syntax(line, "record_every: expected a positive integer")
                        })?
                    }
                    k => return Err(syntax(line, format!("unknown key `{k}`"))),
                }
            }
            Section::Schedule => {
                let sch = &mut s.schedule;
                match toks[0] {
                    "ramp" => {
                        arity(3)?;
                        sch.bulk.ramp_start = number(line, toks[1], "ramp start")?;
                        sch.bulk.ramp_end = number(line, toks[2], "ramp end")?;
                    }
                    "action" => {
                        if toks.len() < 4 {
                            return Err(syntax(line, "action expects <time> <target> <name>"));
                        }
                        let time = number(line, toks[1], "action time")?;
                        let target = match toks[2] {
                            "bulk" => Target::Bulk,
                            t => Target::Owf(
                                plant_index(t)
                                    .ok_or_else(|| syntax(line, format!("unknown target `{t}`")))?,
                            ),
                        };
                        let kind = action_kind(line, toks[3], &toks[4..])?;
                        sch.custom.push(ScheduleAction { time, target, kind });
                    }
                    key => {
                        arity(2)?;
                        let v = number(line, toks[1], key)?;
                        match key {
                            "exciters" => sch.bulk.exciters = v,
                            "governors" => sch.bulk.governors = v,
                            "zip_swap" => sch.bulk.zip_swap = v,
                            "source_open" => sch.bulk.source_open = v,
                            "owf_t0" => sch.owf_t0 = v,
                            "owf_spacing" => sch.owf_spacing = v,
                            "owf_stage" => {
                                if !(v > 0.0) {
                                    return Err(syntax(line, "owf_stage must be positive"));
                                }
                                sch.owf_stage = v;
                            }
                            k => match plant_index(k) {
                                Some(p) => {
                                    sch.owf_start.insert(p, v);
                                }
                                None => return Err(syntax(line, format!("unknown key `{k}`"))),
                            },
                        }
                    }
                }
            }
            Section::Wind => {
                let plant = plant_index(toks[0])
                    .ok_or_else(|| syntax(line, format!("unknown plant `{}`", toks[0])))?;
                let mut points = Vec::new();
                for tok in &toks[1..] {
                    let (t, v) = tok.split_once(':').ok_or_else(|| {
                        syntax(line, format!("expected time:speed, found `{tok}`"))
                    })?;
                    points.push((
                        number(line, t, "wind time")?,
                        number(line, v, "wind speed")?,
                    ));
                }
                let profile = WindProfile::new(points).map_err(|e| syntax(line, e.to_string()))?;
                if s.wind.insert(plant, profile).is_some() {
                    return Err(syntax(
                        line,
                        format!("duplicate wind profile for {}", toks[0]),
                    ));
                }
            }
            Section::Fault => {
                arity(4)?;
                s.faults.push(FaultSpec {
                    bus: toks[0]
                        .parse()
                        .map_err(|_| syntax(line, format!("bad bus id `{}`", toks[0])))?,
                    t_on: number(line, toks[1], "t_on")?,
                    duration: number(line, toks[2], "duration")?,
                    r_ohm: number(line, toks[3], "r_ohm")?,
                });
            }
            Section::Breaker => {
                arity(4)?;
                let bus = |tok: &str| {
                    tok.parse::<u32>()
                        .map_err(|_| syntax(line, format!("bad bus id `{tok}`")))
                };
                s.breakers.push(BreakerEvent {
                    time: number(line, toks[0], "time")?,
                    from: bus(toks[1])?,
                    to: bus(toks[2])?,
                    close: match toks[3] {
                        "open" => false,
                        "close" => true,
                        other => {
                            return Err(syntax(
                                line,
                                format!("expected open|close, found `{other}`"),
                            ))
                        }
                    },
                });
            }
            Section::Plants => {
                let plant = plant_index(toks[0])
                    .ok_or_else(|| syntax(line, format!("unknown plant `{}`", toks[0])))?;
                let mut probe = OwfPlant {
                    poi_bus: 0,
                    n_turbines: 1,
                    chopper_enabled: true,
                    params: Default::default(),
                };
                let opts = s.plant_options.entry(plant).or_default();
                for tok in &toks[1..] {
                    let (k, v) = tok.split_once('=').ok_or_else(|| {
                        syntax(line, format!("expected key=value, found `{tok}`"))
                    })?;
                    match probe.set_option(k, v) {
                        Ok(true) => opts.push((k.to_string(), v.to_string())),
                        Ok(false) => return Err(syntax(line, format!("unknown option `{k}`"))),
                        Err(m) => return Err(syntax(line, m)),
                    }
                }
            }
            Section::Channels => s.channels.extend(toks.iter().map(|t| t.to_string())),
        }
    }
    if !have_case {
        return Err(Error::Scenario("no case file given".into()));
    }
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_and_hold() {
        let p = [(0.0, 8.0), (10.0, 12.0)];
        assert_eq!(apply_wind_profile(&p, 5.0).unwrap(), 10.0);
        assert_eq!(apply_wind_profile(&p, -1.0).unwrap(), 8.0);
        assert_eq!(apply_wind_profile(&p, 99.0).unwrap(), 12.0);
        assert_eq!(apply_wind_profile(&[(0.0, 10.0)], 1e6).unwrap(), 10.0);
        assert!(apply_wind_profile(&[], 0.0).is_err());
    }

    #[test]
    fn step_in_profile() {
        let p = WindProfile::new(vec![(0.0, 3.0), (5.0, 3.0), (5.0, 9.0)]).unwrap();
        assert_eq!(p.at(4.999), 3.0);
        assert_eq!(p.at(5.0), 9.0);
    }

    #[test]
    fn parses_all_sections() {
        let s = parse_scenario(
            "[SCENARIO]\ncase a.case\ndt 1e-4\nt_end 20\nrecord_every 10\n\
             [SCHEDULE]\nexciters 0.4\nramp 1.1 1.8\nowf2 13\n\
             [WIND]\nowf1 0:10 15:10 19:7\n\
             [FAULT]\n5 15 0.15 0.01\n\
             [BREAKER]\n3 4 5 open\n\
             [CHANNELS]\nowf1.p owf1.vpoi\nbus5.v\n",
        )
        .unwrap();
        assert_eq!(s.dt, 1e-4);
        assert_eq!(s.record_every, 10);
        assert_eq!(s.schedule.bulk.exciters, 0.4);
        assert_eq!(s.schedule.bulk.ramp_end, 1.8);
        assert_eq!(s.schedule.owf_start[&1], 13.0);
        assert_eq!(s.wind[&0].at(17.0), 8.5);
        assert_eq!(s.faults[0].t_off(), 15.15);
        assert!(!s.breakers[0].close);
        assert_eq!(s.channels, ["owf1.p", "owf1.vpoi", "bus5.v"]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_scenario("[SCENARIO]\ndt 1e-4\n").is_err());
        assert!(matches!(
            parse_scenario("[SCENARIO]\ncase a\nfoo 1\n"),
            Err(Error::Syntax { line: 3, .. })
        ));
        assert!(parse_scenario("[SCENARIO]\ncase a\n[WIND]\nowf1\n").is_err());
        assert!(parse_scenario("[SCENARIO]\ncase a\n[WIND]\nowf1 5:10 1:3\n").is_err());
        assert!(parse_scenario("[SCENARIO]\ncase a\nt_end 1\n[FAULT]\n5 2 0.1 0.01\n").is_err());
        assert!(parse_scenario("[SCENARIO]\ncase a\ndt 0\n").is_err());
    }

    #[test]
    fn connect_alias() {
        let s = parse_scenario("[SCENARIO]\ncase a\n[SCHEDULE]\naction 10 owf1 connect_owf_poi\n")
            .unwrap();
        assert_eq!(s.schedule.custom[0].kind, ActionKind::CloseOwfSwitch);
    }
}
