use psm_core::refsolver::{
    generate_corpus, generate_trajectories, inject_degradation, InputTrajectory, SimulationRecord, Solver,
    SolverConfig,
};
use psm_core::transport::{build_grid, presets, FieldState, ScenarioConfig};
use psm_core::PsmError;

const CHANNEL_V: [f64; 2] = [0.649, 844.65];
const LOOP_V: [f64; 2] = [50.0e6, 1500.0];

fn solver(s: &ScenarioConfig) -> Solver {
    Solver::new(s, SolverConfig::default()).unwrap()
}

fn adiabatic_channel() -> ScenarioConfig {
    let mut s = presets::heated_channel();
    for seg in &mut s.segments {
        seg.heat_source = None;
    }
    s
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn relative_spread(xs: &[f64]) -> f64 {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo.abs()
}

/// Σ over cells of f/D_h · ρu|u|/2 · dz.
fn friction_head(s: &ScenarioConfig, state: &FieldState) -> f64 {
    let grid = build_grid(s).unwrap();
    (0..grid.n_cells())
        .map(|i| {
            let seg = &s.segments[grid.segment_of_cell[i]];
            let rho = s.fluid.density(state.temperature[i]);
            let u = state.velocity[i];
            seg.friction_factor / seg.hydraulic_diameter * rho * u * u.abs() / 2.0 * grid.widths[i]
        })
        .sum()
}

#[test]
fn heated_channel_rise_matches_energy_balance() {
    let s = presets::heated_channel();
    let st = solver(&s).steady_state(&CHANNEL_V).unwrap();
    let rise = st.temperature.last().unwrap() - CHANNEL_V[1];
    let analytic = 50.0e6 * 0.8 / (s.fluid.density(CHANNEL_V[1]) * CHANNEL_V[0] * s.fluid.cp);
    assert!((rise / analytic - 1.0).abs() < 0.02, "rise {rise} vs {analytic}");
    assert!((analytic - 12.8).abs() < 0.1);
}

#[test]
fn adiabatic_channel_is_uniform_at_inlet_temperature() {
    let s = adiabatic_channel();
    let st = solver(&s).steady_state(&CHANNEL_V).unwrap();
    assert!(st.temperature.iter().all(|&t| (t - CHANNEL_V[1]).abs() < 1e-9));
    assert!(st.velocity.iter().all(|&u| (u - CHANNEL_V[0]).abs() < 1e-9));
}

#[test]
fn steady_mass_flux_is_uniform() {
    for (s, v) in [(presets::heated_channel(), CHANNEL_V), (presets::cooling_loop(), LOOP_V)] {
        let st = solver(&s).steady_state(&v).unwrap();
        let flux: Vec<f64> = st
            .temperature
            .iter()
            .zip(&st.velocity)
            .map(|(&t, &u)| s.fluid.density(t) * u * presets::FLOW_AREA)
            .collect();
        assert!(relative_spread(&flux) < 1e-3, "{}: {}", s.name, relative_spread(&flux));
    }
}

#[test]
fn steady_state_is_fixed_point_of_step() {
    for (s, v) in [(presets::heated_channel(), CHANNEL_V), (presets::cooling_loop(), LOOP_V)] {
        let sol = solver(&s);
        let st = sol.steady_state(&v).unwrap();
        let next = sol.step(&st, &v).unwrap();
        let t_range = 80.0;
        assert!(max_abs_diff(&st.temperature, &next.temperature) < 1e-6 * t_range);
        assert!(max_abs_diff(&st.velocity, &next.velocity) < 1e-6 * 0.2);
        assert!(max_abs_diff(&st.pressure, &next.pressure) < 1e-6 * 1000.0);
    }
}

#[test]
fn conservation_holds_per_substep() {
    for (s, v0, v1) in [
        (presets::heated_channel(), CHANNEL_V, [0.7, 870.0]),
        (presets::cooling_loop(), LOOP_V, [54.0e6, 1800.0]),
    ] {
        let sol = solver(&s);
        let st = sol.steady_state(&v0).unwrap();
        let (_, balances) = sol.step_with_balances(&st, &v1).unwrap();
        let mass = sol.total_mass(&st);
        for b in &balances {
            assert!(b.mass_error().abs() < 1e-8 * mass, "{}: mass {}", s.name, b.mass_error());
            let scale = mass * s.fluid.cp * 900.0;
            assert!(b.enthalpy_error().abs() < 1e-8 * scale, "{}: enthalpy {}", s.name, b.enthalpy_error());
        }
    }
}

#[test]
fn closed_loop_mean_temperature_drift_is_small() {
    let s = presets::cooling_loop();
    let sol = solver(&s);
    let mut st = sol.steady_state(&LOOP_V).unwrap();
    let start = sol.mass_weighted_mean_temperature(&st);
    let mass = sol.total_mass(&st);
    for k in 0..20 {
        let v = [50.0e6 + 2.0e5 * k as f64, 1500.0];
        st = sol.step(&st, &v).unwrap();
    }
    assert!((sol.mass_weighted_mean_temperature(&st) - start).abs() < 0.01);
    assert!((sol.total_mass(&st) / mass - 1.0).abs() < 1e-6);
}

#[test]
fn temperature_front_arrives_after_transit_time() {
    let s = adiabatic_channel();
    let sol = solver(&s);
    let cold = sol.steady_state(&CHANNEL_V).unwrap();
    let hot = [CHANNEL_V[0], CHANNEL_V[1] + 20.0];
    let dt = 0.01;
    let mut st = cold;
    let mut t = 0.0;
    let mut crossing = None;
    let mut prev = st.interpolate(psm_core::transport::Field::Temperature, 1.0);
    while t < 4.0 {
        st = sol.substep(&st, &hot, dt).unwrap().0;
        t += dt;
        let now = st.interpolate(psm_core::transport::Field::Temperature, 1.0);
        let mid = CHANNEL_V[1] + 10.0;
        if prev < mid && now >= mid {
            crossing = Some(t - dt * (now - mid) / (now - prev));
            break;
        }
        prev = now;
    }
    let expected = 1.0 / CHANNEL_V[0];
    let arrival = crossing.expect("front never reached z = 1 m");
    assert!((arrival / expected - 1.0).abs() < 0.1, "arrival {arrival} vs {expected}");
}

#[test]
fn loop_steady_flow_balances_pump_head() {
    let s = presets::cooling_loop();
    let sol = solver(&s);
    let low = sol.steady_state(&[50.0e6, 1000.0]).unwrap();
    let high = sol.steady_state(&[50.0e6, 2000.0]).unwrap();
    assert!(high.velocity[0] > low.velocity[0]);
    // quadratic friction: doubling the head scales velocity by about sqrt(2)
    let ratio = high.velocity[0] / low.velocity[0];
    assert!((ratio - 2f64.sqrt()).abs() < 0.02, "ratio {ratio}");
    for (st, head) in [(&low, 1000.0), (&high, 2000.0)] {
        let fric = friction_head(&s, st);
        assert!((fric / head - 1.0).abs() < 1e-3, "friction {fric} vs head {head}");
    }
}

#[test]
fn unit_multiplier_leaves_scenario_unchanged() {
    let s = presets::cooling_loop();
    assert_eq!(inject_degradation(&s, 3, 1.0).unwrap(), s);
    assert!(matches!(inject_degradation(&s, 6, 10.0), Err(PsmError::Config(_))));
    assert!(matches!(inject_degradation(&s, 3, 0.0), Err(PsmError::Config(_))));
}

#[test]
fn blocked_pipe_slows_the_loop_and_raises_its_drop() {
    let s = presets::cooling_loop();
    let bad = inject_degradation(&s, 3, 10.0).unwrap();
    let nominal = solver(&s).steady_state(&LOOP_V).unwrap();
    let degraded = solver(&bad).steady_state(&LOOP_V).unwrap();
    assert!(degraded.velocity[0] < nominal.velocity[0]);
    // drop across the interior of pipe 3 (cells 40..49), normalised by ρu²
    let drop = |st: &FieldState| {
        let rho = s.fluid.density(st.temperature[45]);
        (st.pressure[40] - st.pressure[49]) / (rho * st.velocity[45].powi(2))
    };
    let ratio = drop(&degraded) / drop(&nominal);
    assert!((ratio - 10.0).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn grid_refinement_changes_outlet_temperature_little() {
    let coarse = presets::heated_channel();
    let mut fine = coarse.clone();
    for seg in &mut fine.segments {
        seg.n_elements *= 2;
    }
    let cfg = SolverConfig {
        substep: 0.025,
        ..SolverConfig::default()
    };
    let a = solver(&coarse).steady_state(&CHANNEL_V).unwrap();
    let b = Solver::new(&fine, cfg).unwrap().steady_state(&CHANNEL_V).unwrap();
    let (ta, tb) = (*a.temperature.last().unwrap(), *b.temperature.last().unwrap());
    assert!(((ta - tb) / tb).abs() < 0.01);
}

#[test]
fn substep_too_large_violates_cfl() {
    let s = presets::heated_channel();
    let cfg = SolverConfig {
        substep: 0.5,
        ..SolverConfig::default()
    };
    let sol = Solver::new(&s, cfg).unwrap();
    let st = solver(&s).steady_state(&CHANNEL_V).unwrap();
    assert!(matches!(sol.step(&st, &CHANNEL_V), Err(PsmError::Cfl { .. })));
}

#[test]
fn substep_must_divide_measurement_interval() {
    let cfg = SolverConfig {
        substep: 0.3,
        ..SolverConfig::default()
    };
    assert!(Solver::new(&presets::heated_channel(), cfg).is_err());
}

#[test]
fn zero_length_trajectory_holds_only_initial_state() {
    let s = presets::heated_channel();
    let sol = solver(&s);
    let st = sol.steady_state(&CHANNEL_V).unwrap();
    let rec = sol.run_experiment(&InputTrajectory::constant(&CHANNEL_V, 0.0), &st).unwrap();
    assert_eq!(rec.n_times(), 1);
    assert_eq!(rec.states[0], st);
}

#[test]
fn sensor_readouts_match_interpolated_fields() {
    let s = presets::cooling_loop();
    let traj = &generate_trajectories(2, &s, 1)[0];
    let rec = solver(&s).run_from_steady(traj).unwrap();
    assert_eq!(rec.n_times(), 41);
    for (k, st) in rec.states.iter().enumerate() {
        assert_eq!(rec.sensors[k], st.sensor_readout(&s.sensor_stations));
        assert!((rec.times[k] - 5.0 * k as f64).abs() < 1e-12);
    }
}

#[test]
fn corpus_temperatures_follow_inlet_range() {
    let s = presets::heated_channel();
    let corpus = generate_corpus(&s, SolverConfig::default(), 0, 16, 4).unwrap();
    assert_eq!((corpus.train.len(), corpus.test.len()), (16, 4));
    let (lo, hi) = (s.controls[1].min, s.controls[1].max);
    for rec in corpus.train.iter().chain(&corpus.test) {
        for st in &rec.states {
            let t0 = st.temperature[0];
            assert!(t0 >= lo - 1e-6 && t0 <= hi + 1e-6);
            let rise = 50.0e6 * 0.8 / (s.fluid.density(lo) * s.controls[0].min * s.fluid.cp);
            assert!(st.temperature.iter().all(|&t| t >= lo - 1e-6 && t <= hi + rise + 1.0));
        }
    }
}

#[test]
fn corpus_is_bitwise_reproducible() {
    let s = presets::cooling_loop();
    let bytes = |seed| {
        let c = generate_corpus(&s, SolverConfig::default(), seed, 2, 1).unwrap();
        let mut buf = Vec::new();
        for r in c.train.iter().chain(&c.test) {
            r.write_binary(&mut buf).unwrap();
        }
        buf
    };
    let a = bytes(9);
    assert_eq!(a, bytes(9));
    assert_ne!(a, bytes(10));
    let back = SimulationRecord::read_binary(&a[..]).unwrap();
    assert_eq!(back.n_times(), 41);
}
