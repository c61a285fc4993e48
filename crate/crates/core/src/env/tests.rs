use rand::SeedableRng;

use super::*;
use crate::geom::Vec2;
use crate::seed::Rng;
use crate::world::FlightPlan;

fn env() -> VertiportEnv {
    VertiportEnv::new(ScenarioConfig::default()).unwrap()
}

fn random_action(mask: &[bool], rng: &mut Rng) -> ActionId {
    let ok: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
    ActionId(ok[rng.gen_range(0..ok.len())])
}

/// Parks eVTOL `i` in `slot` with the given status and no leg in progress.
fn park(world: &mut WorldState, i: usize, slot: Slot, status: EvtolStatus) {
    world.release_slot(i);
    match slot {
        Slot::Port(p) => world.layout.ports[p].occupied_by = Some(i),
        Slot::Hover(h) => world.hover_occupancy[h] = Some(i),
    }
    let pos = world.layout.slot_position(slot);
    let e = &mut world.evtols[i];
    e.assigned_slot = Some(slot);
    e.position = pos;
    e.status = status;
    e.target = None;
    e.velocity = Vec2::ZERO;
    e.holding = false;
}

fn send_away(world: &mut WorldState, i: usize) {
    world.release_slot(i);
    let e = &mut world.evtols[i];
    e.status = EvtolStatus::EnRouteOutbound;
    e.position = Vec2::new(40.0, 0.0);
    e.target = Some(Vec2::new(60.0, 0.0));
}

#[test]
fn reset_is_deterministic_and_full() {
    let mut a = env();
    let mut b = env();
    let oa = a.reset(3).unwrap();
    let ob = b.reset(3).unwrap();
    assert_eq!(oa, ob);
    assert_eq!(oa.evtol_nodes.rows(), 4);
    assert_eq!(oa.evtol_nodes.cols(), EVTOL_FEATURES);
    assert_eq!(oa.port_nodes.shape(), (10, PORT_FEATURES));
    for i in 0..4 {
        assert_eq!(oa.evtol_nodes[(i, 0)], 1.0);
    }
}

#[test]
fn observation_ranges_and_adjacency() {
    let mut env = env();
    let mut rng = Rng::seed_from_u64(1);
    for _ in 0..1440 {
        let obs = env.observation();
        assert!(obs.evtol_nodes.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(obs.port_nodes.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        for adj in [&obs.evtol_adjacency, &obs.port_adjacency] {
            assert!(adj.is_symmetric(0.0));
            assert!((0..adj.rows()).all(|i| adj[(i, i)] == 1.0));
        }
        assert!(obs.selected < 4);
        let a = random_action(&env.action_mask(), &mut rng);
        if env.step(a).unwrap().done {
            break;
        }
    }
}

#[test]
fn round_robin_selection() {
    let mut env = env();
    let w = env.world_mut();
    for i in 0..4 {
        park(w, i, Slot::Hover(i), EvtolStatus::Hovering);
    }
    assert_eq!(select_next_evtol(w, Some(1)), Some(2));
    assert_eq!(select_next_evtol(w, Some(3)), Some(0));
    send_away(w, 2);
    assert_eq!(select_next_evtol(w, Some(1)), Some(3));
    w.evtols[2].status = EvtolStatus::AtDestination;
    assert_eq!(select_next_evtol(w, Some(1)), Some(3));
}

#[test]
fn all_outbound_fast_forwards() {
    let mut env = env();
    for i in 0..4 {
        send_away(env.world_mut(), i);
    }
    env.world_mut().evtols[0].position = Vec2::new(14.0, 0.0);
    env.world_mut().evtols[0].target = Some(Vec2::new(60.0, 0.0));
    env.set_selected(0);
    let clock_before = env.world().clock.step;
    let cont = env.action_space().encode(Action::ContinuePrevious);
    let out = env.step(cont).unwrap();
    // After this tick every eVTOL is outside until the first return.
    assert!(out.info.ticks > 1);
    assert_eq!(env.world().clock.step, clock_before + out.info.ticks);
    assert_eq!(out.records.len() as u32, out.info.ticks);
    assert!(out.records[1..].iter().all(|r| r.evtol.is_none() && r.reward == 0.0));
    assert!(env.world().in_airspace(env.selected()));
}

#[test]
fn mask_examples() {
    let mut env = env();
    let space = env.action_space().clone();
    let w = env.world_mut();
    park(w, 0, Slot::Port(0), EvtolStatus::IdleGround);
    park(w, 1, Slot::Port(1), EvtolStatus::IdleGround);
    park(w, 2, Slot::Port(2), EvtolStatus::Charging);
    park(w, 3, Slot::Hover(0), EvtolStatus::Hovering);
    w.evtols[3].plan = FlightPlan {
        scheduled_minute: Some(15.0),
        ..FlightPlan::inbound(0.0)
    };
    let m0 = space.mask(w, 0);
    assert!(!m0[space.port_action(0).0] && !m0[space.port_action(1).0] && !m0[space.port_action(2).0]);
    assert!(m0[1], "grounded with a takeoff plan");
    assert!(!m0[space.hover_action(1).0], "no hover moves from the ground");
    let m3 = space.mask(w, 3);
    assert!(!m3[space.encode(Action::ContinuePrevious).0]);
    assert!(m3[space.encode(Action::AvoidCollision).0]);
    assert!(!m3[1]);
    assert!(m3[space.hover_action(1).0] && !m3[space.hover_action(0).0]);

    w.release_slot(1);
    w.evtols[1].status = EvtolStatus::EnRouteOutbound;
    let m0 = space.mask(w, 0);
    assert!(m0[space.port_action(1).0], "ground repositioning to a free port");
}

#[test]
fn takeoff_and_masked_action() {
    let mut env = env();
    let space = env.action_space().clone();
    let unc = UncertaintyConfig::default();
    let w = env.world_mut();
    park(w, 0, Slot::Port(0), EvtolStatus::IdleGround);
    let plan = w.evtols[0].plan;
    let err = apply_action(w, &space, 0, space.hover_action(0), &unc).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
    assert_eq!(w.evtols[0].status, EvtolStatus::IdleGround);
    let eff = apply_action(w, &space, 0, ActionId(1), &unc).unwrap();
    assert!(eff.took_off);
    assert_eq!(w.evtols[0].status, EvtolStatus::EnRouteOutbound);
    assert_eq!(w.evtols[0].plan, plan);
    assert_eq!(w.layout.ports[0].occupied_by, None);
}

#[test]
fn failed_takeoff_keeps_plan() {
    let mut env = env();
    let space = env.action_space().clone();
    let unc = UncertaintyConfig {
        enabled: true,
        p_takeoff_fail: 1.0,
        ..Default::default()
    };
    let w = env.world_mut();
    park(w, 0, Slot::Port(0), EvtolStatus::IdleGround);
    let plan = w.evtols[0].plan;
    let eff = apply_action(w, &space, 0, ActionId(1), &unc).unwrap();
    assert!(eff.takeoff_failed && !eff.took_off);
    assert_eq!(w.evtols[0].status, EvtolStatus::IdleGround);
    assert_eq!(w.evtols[0].plan, plan);
    assert_eq!(w.counters.takeoff_failures, 1);
}

/// Two eVTOLs on crossing legs that meet at the origin at the same minute.
fn crossing(env: &mut VertiportEnv) {
    let w = env.world_mut();
    for i in 2..4 {
        send_away(w, i);
        w.evtols[i].position = Vec2::new(40.0, 40.0 + i as f64 * 5.0);
    }
    w.release_slot(0);
    w.release_slot(1);
    let a = &mut w.evtols[0];
    a.status = EvtolStatus::EnRouteInternal;
    a.position = Vec2::new(-8.0, 0.0);
    a.target = Some(Vec2::new(10.0, 0.0));
    let b = &mut w.evtols[1];
    b.status = EvtolStatus::EnRouteInternal;
    b.position = Vec2::new(0.0, -8.0);
    b.target = Some(Vec2::new(0.0, 10.0));
}

#[test]
fn avoid_collision_holds_and_opens_separation() {
    let space = env().action_space().clone();
    let avoid = space.encode(Action::AvoidCollision);
    let cont = space.encode(Action::ContinuePrevious);

    let min_dist = |action: ActionId| -> (f64, Vec2) {
        let mut env = env();
        crossing(&mut env);
        let w = env.world_mut();
        // Give the legs a slot so arrival transitions are well defined.
        w.hover_occupancy[0] = Some(0);
        w.evtols[0].assigned_slot = Some(Slot::Hover(0));
        w.hover_occupancy[1] = Some(1);
        w.evtols[1].assigned_slot = Some(Slot::Hover(1));
        env.set_selected(0);
        env.step(action).unwrap();
        let v = env.world().evtols[0].velocity;
        let mut d = f64::INFINITY;
        for _ in 0..3 {
            let w = env.world_mut();
            let r = w.tick();
            assert!(r.distances.len() == 4);
            d = d.min(w.evtols[0].position.distance(w.evtols[1].position));
        }
        (d, v)
    };
    let (d_avoid, v_avoid) = min_dist(avoid);
    let (d_cont, v_cont) = min_dist(cont);
    assert_eq!(v_avoid, Vec2::ZERO);
    assert!(v_cont.norm() > 0.0);
    assert!(d_avoid > d_cont, "{d_avoid} vs {d_cont}");
}

#[test]
fn conflict_reward_sign() {
    let space = env().action_space().clone();
    for (action, expected) in [(Action::AvoidCollision, 5.0), (Action::ContinuePrevious, -5.0)] {
        let mut env = env();
        crossing(&mut env);
        let w = env.world_mut();
        w.hover_occupancy[0] = Some(0);
        w.evtols[0].assigned_slot = Some(Slot::Hover(0));
        w.hover_occupancy[1] = Some(1);
        w.evtols[1].assigned_slot = Some(Slot::Hover(1));
        env.set_selected(0);
        let out = env.step(space.encode(action)).unwrap();
        assert_eq!(out.terms.safety, expected);
        assert!(out.info.conflict_dmin.unwrap() < 1e-9);
    }
}

#[test]
fn uncertainty_disabled_is_noop() {
    let mut env = env();
    let before = env.world().clone();
    inject_uncertainty(env.world_mut(), &UncertaintyConfig::default());
    assert_eq!(env.world(), &before);
}

#[test]
fn port_failure_frequency() {
    let mut env = env();
    let w = env.world_mut();
    park(w, 0, Slot::Port(2), EvtolStatus::Charging);
    let cfg = UncertaintyConfig {
        enabled: true,
        ..Default::default()
    };
    let n = 100_000;
    let mut failures = 0;
    for _ in 0..n {
        w.evtols[0].charger_ok = true;
        inject_uncertainty(w, &cfg);
        failures += u32::from(!w.evtols[0].charger_ok);
    }
    let rate = f64::from(failures) / f64::from(n);
    assert!((rate - 0.05).abs() < 0.005, "{rate}");
}

#[test]
fn wind_scales_speed() {
    let mut env = env();
    let cfg = UncertaintyConfig {
        enabled: true,
        p_wind: 1.0,
        ..Default::default()
    };
    let w = env.world_mut();
    let (mut zero, mut scaled) = (0, 0);
    for _ in 0..2000 {
        for e in &mut w.evtols {
            e.speed_factor = 1.0;
        }
        inject_uncertainty(w, &cfg);
        for e in &w.evtols {
            if e.speed_factor == 0.0 {
                zero += 1;
            } else {
                assert!((0.25..=0.75).contains(&e.speed_factor));
                scaled += 1;
            }
        }
    }
    let frac = f64::from(zero) / f64::from(zero + scaled);
    assert!((frac - 0.5).abs() < 0.03, "{frac}");
}

fn run_random(seed: u64, noise: bool) -> (Vec<TraceRecord>, VertiportEnv) {
    let mut cfg = ScenarioConfig::default();
    cfg.uncertainty.enabled = noise;
    let mut env = VertiportEnv::new(cfg).unwrap();
    env.reset(seed).unwrap();
    let mut rng = Rng::seed_from_u64(seed ^ 0xabc);
    let mut trace = Vec::new();
    loop {
        let out = env.step(random_action(&env.action_mask(), &mut rng)).unwrap();
        trace.extend(out.records);
        if out.done {
            break;
        }
    }
    (trace, env)
}

#[test]
fn episode_runs_to_1440_ticks() {
    let (trace, mut env) = run_random(5, false);
    assert_eq!(trace.len(), 1440);
    assert!(trace.iter().enumerate().all(|(k, r)| r.step == k as u32));
    assert!(env.is_done());
    assert!(matches!(env.step(ActionId(0)), Err(Error::Contract(_))));
}

#[test]
fn rewards_bounded_and_recomputable() {
    let w = ScenarioConfig::default().reward_weights;
    for seed in 0..3 {
        let (trace, _) = run_random(seed, seed == 1);
        for r in trace.iter().filter(|r| r.terms.is_some()) {
            let t = r.terms.unwrap();
            assert!((-7.0..=7.0).contains(&r.reward));
            for v in [t.tau, t.gamma, t.safety] {
                assert!(v == -5.0 || v == 0.0 || v == 5.0);
            }
            assert!((-5.0..=5.0).contains(&t.lambda));
            assert!((-5.0..=5.0).contains(&t.beta));
            assert!((t.weighted_sum(&w) - r.reward).abs() < 1e-12);
        }
    }
}

#[test]
fn same_seed_same_trace() {
    assert_eq!(run_random(11, true).0, run_random(11, true).0);
    assert_ne!(run_random(11, true).0, run_random(12, true).0);
}

#[test]
fn no_noise_no_noise_events() {
    let (_, env) = run_random(2, false);
    let c = env.world().counters;
    assert_eq!((c.wind_events, c.port_failures, c.takeoff_failures), (0, 0, 0));
    let (_, env) = run_random(2, true);
    assert!(env.world().counters.wind_events > 0);
}

#[test]
fn fuzz_masks_and_invariants() {
    let mut cfg = ScenarioConfig::default();
    cfg.uncertainty.enabled = true;
    let mut env = VertiportEnv::new(cfg).unwrap();
    let mut rng = Rng::seed_from_u64(77);
    let mut steps = 0;
    let mut episode = 0;
    while steps < 10_000 {
        let mask = env.action_mask();
        assert!(mask[0]);
        let a = random_action(&mask, &mut rng);
        let out = env.step(a).unwrap();
        env.world().check_invariants().unwrap();
        steps += 1;
        if out.done {
            episode += 1;
            env.reset(episode).unwrap();
        }
    }
}

#[test]
fn trace_jsonl_round_trip() {
    let (trace, _) = run_random(4, false);
    let mut buf = Vec::new();
    write_trace_jsonl(&trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1440);
    assert_eq!(read_trace_jsonl(&text).unwrap(), trace);
}

#[test]
fn snapshot_restore_continues_identically() {
    let mut cfg = ScenarioConfig::default();
    cfg.uncertainty.enabled = true;
    let mut env = VertiportEnv::new(cfg).unwrap();
    let mut rng = Rng::seed_from_u64(9);
    for _ in 0..300 {
        let a = random_action(&env.action_mask(), &mut rng);
        env.step(a).unwrap();
    }
    let snap = env.snapshot();
    let json = serde_json::to_string(&snap).unwrap();
    let mut other = VertiportEnv::new(ScenarioConfig { uncertainty: env.config().uncertainty, ..ScenarioConfig::default() }).unwrap();
    other.restore(serde_json::from_str(&json).unwrap()).unwrap();
    let mut rng2 = rng.clone();
    for _ in 0..300 {
        let a = random_action(&env.action_mask(), &mut rng);
        let b = random_action(&other.action_mask(), &mut rng2);
        assert_eq!(a, b);
        let (x, y) = (env.step(a).unwrap(), other.step(b).unwrap());
        assert_eq!(x.records, y.records);
    }
}
