//! The two reference rigs: three pipes in series with a heated middle
//! section, and a six-pipe cooling loop with a pump, heater and cooler.

use super::{
    BoundarySpec, ControlChannel, FluidProps, HeatSource, PipeSegment, ScenarioConfig,
    KELVIN_OFFSET,
};

/// Total flow area shared by every pipe (m²).
pub const FLOW_AREA: f64 = 0.449;
/// Hydraulic diameter shared by every pipe (m).
pub const HYDRAULIC_DIAMETER: f64 = 2.972e-3;
pub const DEFAULT_FRICTION: f64 = 0.001;

fn pipe(name: &str, length: f64, n_elements: usize, heat: Option<HeatSource>) -> PipeSegment {
    PipeSegment {
        name: name.to_string(),
        length,
        flow_area: FLOW_AREA,
        hydraulic_diameter: HYDRAULIC_DIAMETER,
        n_elements,
        friction_factor: DEFAULT_FRICTION,
        heat_source: heat,
        gravity_component: 0.0,
    }
}

/// Adiabatic 1.0 m, heated 0.8 m (50 MW/m³), adiabatic 1.0 m; ten elements each.
///
/// Controls: inlet velocity (m/s) and inlet temperature (K).
pub fn heated_channel() -> ScenarioConfig {
    ScenarioConfig {
        name: "heated-channel".into(),
        fluid: FluidProps::flibe(),
        boundary: BoundarySpec::HeatedChannel {
            outlet_pressure: 135.6e3,
            inlet_velocity_channel: 0,
            inlet_temperature_channel: 1,
        },
        controls: vec![
            ControlChannel {
                name: "u_in".into(),
                unit: "m/s".into(),
                min: 0.549,
                max: 0.749,
            },
            ControlChannel {
                name: "T_in".into(),
                unit: "K".into(),
                min: 531.5 + KELVIN_OFFSET,
                max: 611.5 + KELVIN_OFFSET,
            },
        ],
        sensor_stations: vec![0.25, 0.5, 0.75, 2.05, 2.3, 2.55],
        delta_t: 5.0,
        episode_duration: 200.0,
        segments: vec![
            pipe("pipe-1", 1.0, 10, None),
            pipe("heater", 0.8, 10, Some(HeatSource::Constant { q: 50.0e6 })),
            pipe("pipe-3", 1.0, 10, None),
        ],
    }
}

/// Six pipes in a loop, ten elements per meter, pump jump at z = 0.
///
/// Pipes are numbered from zero starting at the pump outlet: heater [0, 1],
/// riser [1, 3], pipe 2 [3, 4], pipe 3 [4, 5], cooler [5, 6], return [6, 8].
/// Controls: heater q''' (W/m³; the cooler mirrors it) and pump head (Pa).
pub fn cooling_loop() -> ScenarioConfig {
    let heater = HeatSource::Control {
        channel: 0,
        gain: 1.0,
    };
    let cooler = HeatSource::Control {
        channel: 0,
        gain: -1.0,
    };
    ScenarioConfig {
        name: "cooling-loop".into(),
        fluid: FluidProps::flibe(),
        boundary: BoundarySpec::Loop {
            pump_channel: 1,
            reference_pressure: 100.0e3,
            mean_temperature: 571.5 + KELVIN_OFFSET,
        },
        controls: vec![
            ControlChannel {
                name: "q_in".into(),
                unit: "W/m3".into(),
                min: 45.0e6,
                max: 55.0e6,
            },
            ControlChannel {
                name: "dp_pump".into(),
                unit: "Pa".into(),
                min: 1125.0,
                max: 1875.0,
            },
        ],
        sensor_stations: vec![0.5, 2.0, 3.5, 4.5, 5.5, 7.0],
        delta_t: 5.0,
        episode_duration: 200.0,
        segments: vec![
            pipe("heater", 1.0, 10, Some(heater)),
            pipe("riser", 2.0, 20, None),
            pipe("pipe-2", 1.0, 10, None),
            pipe("pipe-3", 1.0, 10, None),
            pipe("cooler", 1.0, 10, Some(cooler)),
            pipe("return", 2.0, 20, None),
        ],
    }
}

/// Look a preset up by its command-line name.
pub fn by_name(name: &str) -> Option<ScenarioConfig> {
    match name {
        "heated-channel" => Some(heated_channel()),
        "cooling-loop" | "loop" => Some(cooling_loop()),
        _ => None,
    }
}
