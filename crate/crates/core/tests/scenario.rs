use std::path::{Path, PathBuf};
use std::time::Instant;

use owfsim::error::Error;
use owfsim::scenario::{
    apply_wind_profile, load_scenario, parse_scenario, run_simulation, write_csv, write_meta,
    Recording, Scenario, WindProfile,
};
use proptest::prelude::*;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

/// Bulk-only run on the nine-bus grid.
fn short_flat(t_end: f64, record_every: usize) -> Scenario {
    let mut s = load_scenario(&data("flat.scn")).unwrap();
    s.t_end = t_end;
    s.record_every = record_every;
    s
}

fn owf_scenario(text: &str) -> Scenario {
    let text = text.replacen("[SCENARIO]\n", "[SCENARIO]\ncase ninebus_owf.case\n", 1);
    let mut s = parse_scenario(&text).unwrap();
    s.case_path = data("ninebus_owf.case");
    s
}

#[test]
fn decimation_selects_samples() {
    let fine = run_simulation(&short_flat(0.3, 1)).unwrap();
    let coarse = run_simulation(&short_flat(0.3, 20)).unwrap();
    assert_eq!(fine.len(), 6000);
    assert_eq!(coarse.len(), 300);
    for k in 0..coarse.len() {
        assert_eq!(coarse.time[k], fine.time[20 * k + 19]);
        for c in 0..coarse.channels.len() {
            assert_eq!(coarse.data[c][k], fine.data[c][20 * k + 19]);
        }
    }
}

#[test]
fn zero_length_run_records_nothing() {
    let rec = run_simulation(&short_flat(0.0, 1)).unwrap();
    assert!(rec.is_empty());
    let header = rec.to_csv().unwrap();
    assert_eq!(header.lines().count(), 1);
    assert!(header.starts_with("time,bus1.v,"));
}

#[test]
fn unknown_channel_is_a_scenario_error() {
    let mut s = short_flat(0.1, 1);
    s.channels.push("owf1.p".into());
    let err = run_simulation(&s).unwrap_err();
    assert!(matches!(err, Error::Scenario(_)), "{err:?}");
    assert_eq!(err.kind(), "scenario");
}

#[test]
fn events_must_end_before_the_run() {
    let err = parse_scenario("[SCENARIO]\ncase x\nt_end 3\n[FAULT]\n5 2.9 0.15 0.01\n");
    assert!(matches!(err, Err(Error::Scenario(_))), "{err:?}");
    let s = owf_scenario("[SCENARIO]\nt_end 3\n[SCHEDULE]\nowf_t0 1.5\n");
    assert!(matches!(run_simulation(&s), Err(Error::Schedule(_))));
}

#[test]
fn repeated_runs_are_identical() {
    let text = "[SCENARIO]\nt_end 3\nrecord_every 10\n[SCHEDULE]\nowf_t0 2\nowf_spacing 0.4\n\
                [WIND]\nowf1 0:9 2.5:11\n";
    let a = run_simulation(&owf_scenario(text)).unwrap();
    let b = run_simulation(&owf_scenario(text)).unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    assert_eq!(a.meta_text(), b.meta_text());
    assert_eq!(a.meta.case_hash.len(), 64);
    assert!(a.meta.max_dc_residual < 1e-4);
}

#[test]
fn plant_overrides_change_the_case_hash() {
    let base = "[SCENARIO]\nt_end 0\n";
    let a = run_simulation(&owf_scenario(base)).unwrap();
    let b = run_simulation(&owf_scenario(&format!(
        "{base}[PLANTS]\nowf1 chopper=off\n"
    )))
    .unwrap();
    assert_ne!(a.meta.case_hash, b.meta.case_hash);
    let bogus = "[SCENARIO]\ncase x\n[PLANTS]\nowf1 bogus=1\n";
    let rejected = match parse_scenario(bogus) {
        Err(_) => true,
        Ok(mut s) => {
            s.case_path = data("ninebus_owf.case");
            s.t_end = 0.0;
            run_simulation(&s).is_err()
        }
    };
    assert!(rejected);
}

#[test]
fn meta_lists_units_and_events() {
    let rec = run_simulation(&short_flat(1.1, 50)).unwrap();
    let meta = rec.meta_text();
    assert!(meta.contains("channel bus1.v pu"));
    assert!(meta.contains("channel sg1.speed pu"));
    for what in [
        "enable_exciters",
        "enable_governors",
        "swap_zip_loads",
        "ramp_ibr_refs",
    ] {
        assert!(meta.contains(what), "{what} missing from\n{meta}");
    }
    let text = "[SCENARIO]\nt_end 0\n";
    let rec = run_simulation(&owf_scenario(text)).unwrap();
    assert!(rec.meta_text().contains("channel owf2.p MW"));
}

#[test]
fn files_are_written() {
    let rec = run_simulation(&short_flat(0.05, 10)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (csv, meta) = (dir.path().join("r.csv"), dir.path().join("r.meta.txt"));
    write_csv(&rec, &csv).unwrap();
    write_meta(&rec, &meta).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), rec.len() + 1);
    assert!(text.lines().nth(1).unwrap().starts_with("0.000500000,"));
    let err = write_csv(&rec, &dir.path().join("missing/r.csv")).unwrap_err();
    assert_eq!(err.kind(), "io");
}

#[test]
fn loads_draw_their_power_after_the_swap() {
    let mut s = short_flat(1.2, 20);
    s.channels = vec!["load1.p".into(), "load2.p".into(), "load3.p".into()];
    let rec = run_simulation(&s).unwrap();
    for (name, p0) in [("load1.p", 1.25), ("load2.p", 0.9), ("load3.p", 1.0)] {
        let ch = rec.channel(name).unwrap();
        for (t, p) in rec.time.iter().zip(ch) {
            if *t > 0.1 {
                assert!((p - p0).abs() < 0.01 * p0, "{name} at {t}: {p}");
            }
        }
    }
}

#[test]
fn opening_a_line_is_logged_and_felt() {
    let mut s = short_flat(0.6, 20);
    s.breakers = parse_scenario("[SCENARIO]\ncase x\n[BREAKER]\n0.3 6 9 open\n")
        .unwrap()
        .breakers;
    let rec = run_simulation(&s).unwrap();
    assert!(rec
        .meta
        .events
        .iter()
        .any(|(t, _, what)| (*t - 0.3).abs() < 1e-9 && what.contains("open")));
    let v = rec.channel("bus6.v").unwrap();
    let before = v[rec.time.iter().position(|t| *t >= 0.29).unwrap()];
    let after = v[v.len() - 1];
    assert!((before - after).abs() > 1e-3, "{before} {after}");
}

/// Wall time per step, best of three.
fn per_step_seconds(t_end: f64) -> f64 {
    let s = short_flat(t_end, 20);
    (0..3)
        .map(|_| {
            let t0 = Instant::now();
            let rec: Recording = run_simulation(&s).unwrap();
            t0.elapsed().as_secs_f64() / rec.meta.steps as f64
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
#[ignore = "wall-clock timing; run alone with --ignored"]
fn cost_per_step_is_flat_in_run_length() {
    let short = per_step_seconds(1.0);
    let long = per_step_seconds(4.0);
    assert!((long / short - 1.0).abs() < 0.2, "{short:e} vs {long:e}");
}

proptest! {
    #[test]
    fn interpolated_wind_stays_between_neighbours(
        mut knots in proptest::collection::vec((0.0f64..50.0, 0.0f64..30.0), 1..8),
        t in -5.0f64..60.0,
    ) {
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        let w = apply_wind_profile(&knots, t).unwrap();
        let lo = knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
        let hi = knots.iter().map(|k| k.1).fold(0.0, f64::max);
        prop_assert!(w >= lo - 1e-12 && w <= hi + 1e-12);
        if t <= knots[0].0 {
            prop_assert_eq!(w, knots[0].1);
        }
        if t >= knots[knots.len() - 1].0 {
            prop_assert_eq!(w, knots[knots.len() - 1].1);
        }
        let profile = WindProfile::new(knots.clone()).unwrap();
        prop_assert_eq!(profile.at(t), w);
    }
}
