#![allow(dead_code)]

use platoon_core::controllers::ControllerSpec;
use platoon_core::sim::{
    init_equilibrium, AccelSegment, Event, EventKind, InitialState, Leader, LeaderProfile, RiccatiMode, Scenario,
    Topology, VehicleSpec,
};
use platoon_core::{ActuationParams, CtgParams, VtgParams};

pub const LEN: f64 = 5.0;

pub const CTG: CtgParams = CtgParams {
    k1: 0.23,
    k2: 0.07,
    tau: 0.9677,
    s0: 3.046,
};

pub fn vtg(weights: (f64, f64, f64, f64)) -> VtgParams {
    VtgParams::new(CTG, weights.0, weights.1, weights.2, weights.3)
}

pub const RING_WEIGHTS: (f64, f64, f64, f64) = (0.1, 0.73, 0.56, 1.0);
pub const CUT_IN_WEIGHTS: (f64, f64, f64, f64) = (0.0, 0.05, 0.3, 1.0);

pub fn vehicle(controller: ControllerSpec) -> VehicleSpec {
    VehicleSpec {
        length: LEN,
        controller,
        actuation: ActuationParams::default(),
        initial: InitialState::default(),
    }
}

/// 274 m ring with ten vehicles and the three scripted perturbations.
pub fn ring(controller: ControllerSpec, dt: f64) -> Scenario {
    let s = Scenario {
        topology: Topology::Ring { length: 274.0 },
        dt,
        duration: 600.0,
        leader: None,
        vehicles: (0..10).map(|_| vehicle(controller)).collect(),
        events: vec![
            Event {
                time: 30.0,
                kind: EventKind::SpeedStep {
                    target: 15.0,
                    rate: 2.0,
                    vehicle: 0,
                },
            },
            Event {
                time: 340.0,
                kind: EventKind::SpeedStep {
                    target: 20.0,
                    rate: 2.0,
                    vehicle: 0,
                },
            },
            Event {
                time: 420.0,
                kind: EventKind::BrakePulse {
                    decel: 2.0,
                    duration: 3.0,
                    vehicle: 0,
                },
            },
        ],
        riccati: RiccatiMode::default(),
        fail_safe: true,
    };
    init_equilibrium(&s, 20.0).unwrap()
}

fn seg(start: f64, end: f64, accel: f64) -> AccelSegment {
    AccelSegment {
        start,
        end,
        accel,
        amplitude: 0.0,
        period: 0.0,
    }
}

/// 400 s leader cycle: two speed changes, a sinusoidal stretch, a hard
/// brake with recovery and a final dip.
pub fn leader_cycle() -> LeaderProfile {
    LeaderProfile::Piecewise {
        initial_speed: 20.0,
        segments: vec![
            seg(20.0, 25.0, -1.0),
            seg(60.0, 65.0, 1.0),
            AccelSegment {
                start: 90.0,
                end: 190.0,
                accel: 0.0,
                amplitude: 0.75,
                period: 25.0,
            },
            seg(220.0, 222.0, -3.0),
            seg(240.0, 246.0, 1.0),
            seg(300.0, 310.0, -0.8),
            seg(330.0, 338.0, 1.0),
        ],
    }
}

/// Straight road, leader on [`leader_cycle`], `n` followers at equilibrium.
pub fn cycle_platoon(controller: ControllerSpec, n: usize, actuation: ActuationParams) -> Scenario {
    let s = Scenario {
        topology: Topology::Straight,
        dt: 0.1,
        duration: 400.0,
        leader: Some(Leader {
            length: LEN,
            profile: leader_cycle(),
            position: 0.0,
        }),
        vehicles: (0..n)
            .map(|_| VehicleSpec {
                actuation,
                ..vehicle(controller)
            })
            .collect(),
        events: Vec::new(),
        riccati: RiccatiMode::default(),
        fail_safe: true,
    };
    init_equilibrium(&s, 20.0).unwrap()
}

/// Constant 20 m/s leader, four followers, a vehicle cutting in between
/// the second and third vehicles at `time`.
pub fn cut_in(controller: ControllerSpec, time: f64, duration: f64) -> Scenario {
    let s = Scenario {
        topology: Topology::Straight,
        dt: 0.1,
        duration,
        leader: Some(Leader {
            length: LEN,
            profile: LeaderProfile::Constant { speed: 20.0 },
            position: 0.0,
        }),
        vehicles: (0..4).map(|_| vehicle(controller)).collect(),
        events: vec![Event {
            time,
            kind: EventKind::CutIn {
                front: 1,
                speed: 20.0,
                vehicle: vehicle(controller),
            },
        }],
        riccati: RiccatiMode::default(),
        fail_safe: true,
    };
    init_equilibrium(&s, 20.0).unwrap()
}
