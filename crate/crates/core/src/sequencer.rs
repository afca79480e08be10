//! Start-up schedules: the bulk system hand-over from ideal sources to
//! controlled machines and inverters, and the four-stage connection of each
//! wind plant.

use std::fmt;

use crate::case::SystemCase;
use crate::emt::step_index;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionKind {
    EnableExciters,
    EnableGovernors,
    SwapZipLoads,
    /// Linear ramp of the inverter references from zero, ending at `until`.
    RampIbrRefs {
        until: f64,
    },
    OpenSourceBreakers,
    CloseOwfSwitch,
    EnableGsc,
    StartTurbine,
    EnableRsc,
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::EnableExciters => "enable_exciters",
            ActionKind::EnableGovernors => "enable_governors",
            ActionKind::SwapZipLoads => "swap_zip_loads",
            ActionKind::RampIbrRefs { .. } => "ramp_ibr_refs",
            ActionKind::OpenSourceBreakers => "open_source_breakers",
            ActionKind::CloseOwfSwitch => "close_owf_switch",
            ActionKind::EnableGsc => "enable_gsc",
            ActionKind::StartTurbine => "start_turbine",
            ActionKind::EnableRsc => "enable_rsc",
        }
    }

    /// Position within the wind-plant sequence, if this is a plant stage.
    fn owf_stage(&self) -> Option<usize> {
        match self {
            ActionKind::CloseOwfSwitch => Some(0),
            ActionKind::EnableGsc => Some(1),
            ActionKind::StartTurbine => Some(2),
            ActionKind::EnableRsc => Some(3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Every machine, load or inverter of the bulk system.
    Bulk,
    /// Wind plant by position in the case (0-based).
    Owf(usize),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Bulk => write!(f, "bulk"),
            Target::Owf(k) => write!(f, "owf{}", k + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleAction {
    pub time: f64,
    pub target: Target,
    pub kind: ActionKind,
}

/// Bulk start-up times; every field can be overridden from a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkTimes {
    pub exciters: f64,
    pub governors: f64,
    pub zip_swap: f64,
    pub ramp_start: f64,
    pub ramp_end: f64,
    pub source_open: f64,
}

impl Default for BulkTimes {
    fn default() -> Self {
        BulkTimes {
            exciters: 0.5,
            governors: 0.6,
            zip_swap: 0.7,
            ramp_start: 1.0,
            ramp_end: 1.9,
            source_open: 2.0,
        }
    }
}

/// Earliest time a wind plant may start connecting.
pub const OWF_EARLIEST: f64 = 2.0;
/// Default gap between the four stages of one plant.
pub const OWF_STAGE_SPACING: f64 = 0.5;

pub fn default_bulk_schedule(case: &SystemCase) -> Vec<ScheduleAction> {
    bulk_schedule(case, &BulkTimes::default())
}

pub fn bulk_schedule(case: &SystemCase, t: &BulkTimes) -> Vec<ScheduleAction> {
    let act = |time, kind| ScheduleAction {
        time,
        target: Target::Bulk,
        kind,
    };
    let mut out = Vec::new();
    if !case.sg_plants.is_empty() {
        out.push(act(t.exciters, ActionKind::EnableExciters));
        out.push(act(t.governors, ActionKind::EnableGovernors));
    }
    if !case.loads.is_empty() {
        out.push(act(t.zip_swap, ActionKind::SwapZipLoads));
    }
    if !case.gfl_plants.is_empty() {
        out.push(act(
            t.ramp_start,
            ActionKind::RampIbrRefs { until: t.ramp_end },
        ));
        out.push(act(t.source_open, ActionKind::OpenSourceBreakers));
    }
    out
}

/// Four-stage sequence for plant `plant`, starting at `t0` with `stage`
/// seconds between stages.
pub fn owf_sequence(plant: usize, t0: f64, stage: f64) -> Vec<ScheduleAction> {
    [
        ActionKind::CloseOwfSwitch,
        ActionKind::EnableGsc,
        ActionKind::StartTurbine,
        ActionKind::EnableRsc,
    ]
    .into_iter()
    .enumerate()
    .map(|(k, kind)| ScheduleAction {
        time: t0 + k as f64 * stage,
        target: Target::Owf(plant),
        kind,
    })
    .collect()
}

/// Sequences for `n_plants` plants, plant k connecting at `t0 + k * spacing`.
pub fn default_owf_schedule(n_plants: usize, t0: f64, spacing: f64) -> Result<Vec<ScheduleAction>> {
    if !(t0 >= OWF_EARLIEST) {
        return Err(Error::Schedule(format!(
            "wind plants cannot start before the bulk hand-over ends at {OWF_EARLIEST} s (got {t0} s)"
        )));
    }
    Ok((0..n_plants)
        .flat_map(|k| owf_sequence(k, t0 + k as f64 * spacing, OWF_STAGE_SPACING))
        .collect())
}

/// Checks a schedule against the start-up partial order:
///
/// * exciters < governors <= ZIP swap <= ramp start < ramp end <= source opening;
/// * each plant's stages strictly in the order switch, GSC, turbine, RSC,
///   each stage at most once and all four present;
/// * no plant stage before the last bulk action.
pub fn validate_schedule(actions: &[ScheduleAction]) -> Result<()> {
    let reject = |msg: String| Err(Error::Schedule(msg));
    let mut bulk_last = 0.0f64;
    let find = |kind: fn(&ActionKind) -> bool| {
        actions
            .iter()
            .find(|a| a.target == Target::Bulk && kind(&a.kind))
    };
    for a in actions {
        if !(a.time >= 0.0) || !a.time.is_finite() {
            return reject(format!(
                "{} at {} s has an invalid time",
                a.kind.name(),
                a.time
            ));
        }
        match (a.target, a.kind.owf_stage()) {
            (Target::Bulk, Some(_)) => {
                return reject(format!("{} needs a wind-plant target", a.kind.name()))
            }
            (Target::Owf(_), None) => {
                return reject(format!("{} cannot target a wind plant", a.kind.name()))
            }
            _ => {}
        }
        if a.target == Target::Bulk {
            let end = match a.kind {
                ActionKind::RampIbrRefs { until } => until,
                _ => a.time,
            };
            bulk_last = bulk_last.max(end);
        }
    }
    let ex = find(|k| *k == ActionKind::EnableExciters).map(|a| a.time);
    let gov = find(|k| *k == ActionKind::EnableGovernors).map(|a| a.time);
    let zip = find(|k| *k == ActionKind::SwapZipLoads).map(|a| a.time);
    let ramp = find(|k| matches!(k, ActionKind::RampIbrRefs { .. })).map(|a| match a.kind {
        ActionKind::RampIbrRefs { until } => (a.time, until),
        _ => unreachable!(),
    });
    let open = find(|k| *k == ActionKind::OpenSourceBreakers).map(|a| a.time);
    let before = |a: Option<f64>, b: Option<f64>, strict: bool, what: &str| -> Result<()> {
        match (a, b) {
            (Some(a), Some(b)) if (strict && a >= b) || (!strict && a > b) => Err(Error::Schedule(
                format!("{what} out of order ({a} s vs {b} s)"),
            )),
            _ => Ok(()),
        }
    };
    before(ex, gov, true, "exciters must come before governors")?;
    before(gov, zip, false, "governors must not follow the ZIP swap")?;
    before(
        ex.or(gov),
        zip,
        false,
        "machine controls must not follow the ZIP swap",
    )?;
    if let Some((start, end)) = ramp {
        if !(end > start) {
            return reject(format!(
                "reference ramp must end after it starts ({start} s to {end} s)"
            ));
        }
        before(
            zip,
            Some(start),
            false,
            "the ZIP swap must not follow the reference ramp",
        )?;
        before(
            Some(end),
            open,
            false,
            "the reference ramp must finish before the source breakers open",
        )?;
    } else if open.is_some() {
        return reject("source breakers cannot open without a reference ramp".into());
    }

    let mut plants: Vec<usize> = actions
        .iter()
        .filter_map(|a| match a.target {
            Target::Owf(k) => Some(k),
            Target::Bulk => None,
        })
        .collect();
    plants.sort_unstable();
    plants.dedup();
    for k in plants {
        let mut times = [None; 4];
        for a in actions.iter().filter(|a| a.target == Target::Owf(k)) {
            let s = a.kind.owf_stage().expect("checked above");
            if times[s].replace(a.time).is_some() {
                return reject(format!("{} repeated for owf{}", a.kind.name(), k + 1));
            }
        }
        let mut prev: Option<f64> = None;
        for (s, t) in times.iter().enumerate() {
            let Some(t) = *t else {
                return reject(format!("owf{} is missing stage {}", k + 1, s + 1));
            };
            if let Some(p) = prev {
                if t <= p {
                    return reject(format!(
                        "owf{} stages must be strictly increasing in time",
                        k + 1
                    ));
                }
            }
            prev = Some(t);
        }
        let first = times[0].expect("present");
        if first < bulk_last {
            return reject(format!(
                "owf{} connects at {first} s, before the bulk sequence ends at {bulk_last} s",
                k + 1
            ));
        }
    }
    Ok(())
}

/// A validated schedule ordered by time, consumed step by step.
#[derive(Debug, Clone)]
pub struct Schedule {
    actions: Vec<ScheduleAction>,
    next: usize,
}

/// One applied action, for the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedAction {
    pub time: f64,
    pub target: Target,
    pub action: &'static str,
}

impl Schedule {
    pub fn new(mut actions: Vec<ScheduleAction>) -> Result<Self> {
        validate_schedule(&actions)?;
        // Stable: same-time actions keep their listed order.
        actions.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Schedule { actions, next: 0 })
    }

    pub fn actions(&self) -> &[ScheduleAction] {
        &self.actions
    }

    /// Rejects actions aimed at plants the case does not have.
    pub fn check_targets(&self, case: &SystemCase) -> Result<()> {
        for a in &self.actions {
            if let Target::Owf(k) = a.target {
                if k >= case.owf_plants.len() {
                    return Err(Error::Schedule(format!(
                        "{} targets {} but the case has {} wind plant(s)",
                        a.kind.name(),
                        a.target,
                        case.owf_plants.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Actions due at step `k` (time `k dt`), in order.
    pub fn due(&mut self, k: u64, dt: f64) -> &[ScheduleAction] {
        let start = self.next;
        while self.next < self.actions.len() && step_index(self.actions[self.next].time, dt) <= k {
            self.next += 1;
        }
        &self.actions[start..self.next]
    }

    /// Latest time any action refers to.
    pub fn last_time(&self) -> f64 {
        self.actions
            .iter()
            .map(|a| match a.kind {
                ActionKind::RampIbrRefs { until } => until.max(a.time),
                _ => a.time,
            })
            .fold(0.0, f64::max)
    }
}
