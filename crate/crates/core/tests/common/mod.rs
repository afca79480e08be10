//! Case generators shared by the integration tests.
#![allow(dead_code)]

use owfsim::case::{
    parse_case, Branch, BreakerState, Bus, BusKind, GflParams, GflPlant, OwfParams, OwfPlant,
    SgPlant, SystemCase, ZipLoad,
};
use proptest::prelude::*;

pub fn fixture(name: &str) -> SystemCase {
    let path = format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_case(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn sg(bus: u32) -> SgPlant {
    let base = fixture("ninebus.case");
    SgPlant {
        bus,
        ..base.sg_plants[0].clone()
    }
}

/// Radial case: bus 1 is the slack with a machine, every other bus hangs
/// off an earlier one.
pub fn radial() -> impl Strategy<Value = SystemCase> {
    (2usize..7)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..100, n - 1),
                proptest::collection::vec((0.0f64..0.05, 0.01f64..0.3, 0.0f64..0.3), n - 1),
                proptest::collection::vec(
                    (0.0f64..0.4, -0.1f64..0.2, 0.0f64..1.0, 0.0f64..1.0),
                    n - 1,
                ),
                proptest::collection::vec(prop_oneof![Just(13.8), Just(230.0), Just(345.0)], n),
                any::<bool>(),
            )
        })
        .prop_map(|(parents, lines, loads, kvs, with_owf)| {
            let n = kvs.len();
            let buses = (0..n)
                .map(|i| Bus {
                    id: i as u32 + 1,
                    nominal_kv: kvs[i],
                    kind: if i == 0 { BusKind::Slack } else { BusKind::Pq },
                    area: 1,
                    v_set: if i == 0 { 1.02 } else { 1.0 },
                })
                .collect();
            let branches = (1..n)
                .map(|i| {
                    let (r, x, b) = lines[i - 1];
                    Branch {
                        from: (parents[i - 1] % i) as u32 + 1,
                        to: i as u32 + 1,
                        r,
                        x,
                        b_shunt: b,
                        breaker: BreakerState::Closed,
                    }
                })
                .collect();
            let loads = (1..n)
                .map(|i| {
                    let (p0, q0, a, b) = loads[i - 1];
                    let z = a * 0.5;
                    let i_frac = (1.0 - z) * b;
                    ZipLoad {
                        bus: i as u32 + 1,
                        p0,
                        q0,
                        z_frac: z,
                        i_frac,
                        p_frac: 1.0 - z - i_frac,
                    }
                })
                .collect();
            let owf_plants = if with_owf {
                vec![OwfPlant {
                    poi_bus: n as u32,
                    n_turbines: 5,
                    chopper_enabled: false,
                    params: OwfParams::default(),
                }]
            } else {
                Vec::new()
            };
            SystemCase {
                buses,
                branches,
                loads,
                sg_plants: vec![sg(1)],
                gfl_plants: vec![GflPlant {
                    bus: 1,
                    mva_base: 50.0,
                    p_ref: 0.2,
                    q_ref: 0.0,
                    params: GflParams::default(),
                }],
                owf_plants,
                ..SystemCase::default()
            }
        })
}
