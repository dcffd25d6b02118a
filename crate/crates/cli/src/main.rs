//! `psm`: data generation, training, evaluation, governed control and
//! diagnostics from the command line.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out-dir`
//! (or `$PSM_OUTPUT_DIR`). Exit codes: 0 success, 2 configuration error,
//! 3 numerical failure, 4 I/O error.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use manifest::RunManifest;
use psm_core::control::{governor_scenario, ncg_rollout, CgConfig, ConstraintSchedule};
use psm_core::diagnostics::{
    calibrate_zeta, conditions_from_records, detect, pde_residuals, residual_grid, signature, transfer_learn_twin,
    twin_config, window_mse, DetectorConfig,
};
use psm_core::nn::{load_checkpoint, save_checkpoint, Checkpoint, MlpSpec, ParamStore};
use psm_core::refsolver::{generate_corpus_with_workers, inject_degradation, InputTrajectory, SimulationRecord, SolverConfig};
use psm_core::train::{
    assemble_samples, compare_models, corpus_scaling, rollout_evaluate, train, Dataset, NoiseSpec, PhysicsModel,
    RolloutMode, RolloutResult, TrainConfig,
};
use psm_core::transport::{presets, Field, ScalingSpec, ScenarioConfig};
use psm_core::{PsmError, Result};

const OUTPUT_DIR_VAR: &str = "PSM_OUTPUT_DIR";
const WORKERS_VAR: &str = "PSM_WORKERS";

#[derive(Parser)]
#[command(name = "psm", version, about = "Physics-informed state-space models for 1D fluid transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Mode {
    /// Measurement plus physics loss.
    Psm,
    /// Measurement loss only.
    Ann,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate training and test episodes with the reference solver.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train a model on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Psm)]
        mode: Mode,
        /// none | homoscedastic:<sigma> | heteroscedastic:<xi>
        #[arg(long, default_value = "none")]
        noise: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Closed-loop rollout RMSE of one or two models on a dataset split.
    Eval {
        #[arg(long = "model", required = true, num_args = 1)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Governed rollout against the reference solver.
    Control {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Detect degradation in a data stream and emit residual signatures.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        /// Dataset the model was trained on (calibration and conditions).
        #[arg(long)]
        nominal_data: PathBuf,
        /// Dataset holding the new measurements.
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a ready-to-edit configuration file.
    WritePreset {
        #[arg(long, value_enum)]
        name: Preset,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    HeatedChannel,
    CoolingLoop,
    LoopFault,
    TrainDesk,
    TrainFull,
    Governor,
    Diagnose,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Degradation {
    segment: usize,
    multiplier: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GenDataConfig {
    /// Built-in rig name, used when `scenario` is absent.
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    scenario: Option<ScenarioConfig>,
    #[serde(default = "default_train")]
    n_train: usize,
    #[serde(default = "default_test")]
    n_test: usize,
    #[serde(default)]
    degradation: Option<Degradation>,
    #[serde(default)]
    solver: SolverConfig,
}

fn default_train() -> usize {
    16
}

fn default_test() -> usize {
    4
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ControlConfig {
    /// "governor" loads the built-in heated-channel case; explicit
    /// `reference` or `schedule` entries replace its parts.
    case: Option<String>,
    reference: Option<InputTrajectory>,
    schedule: Option<ConstraintSchedule>,
    governor: CgConfig,
    solver: SolverConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct DiagnoseConfig {
    /// Latch threshold; calibrated on the nominal test split when absent.
    zeta: Option<f64>,
    /// Samples per window; one episode step's rows when absent.
    window: Option<usize>,
    percentile: f64,
    factor: f64,
    grid_points: usize,
    /// "original" (nominal training set) or "stream".
    conditions: String,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            zeta: None,
            window: None,
            percentile: 95.0,
            factor: 5.0,
            grid_points: 160,
            conditions: "original".into(),
        }
    }
}

/// Everything needed to rebuild a trained model besides its weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelMeta {
    mode: Mode,
    noise: String,
    spec: MlpSpec,
    scaling: ScalingSpec,
    scenario: ScenarioConfig,
    train: TrainConfig,
}

struct Model {
    meta: ModelMeta,
    params: ParamStore,
}

struct DataDir {
    scenario: ScenarioConfig,
    scaling: ScalingSpec,
    train: Vec<SimulationRecord>,
    test: Vec<SimulationRecord>,
    files: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { config, seed, out_dir } => gen_data(&config, seed, &resolve_out(out_dir)?),
        Command::Train {
            data,
            config,
            mode,
            noise,
            seed,
            out_dir,
        } => cmd_train(&data, &config, mode, &noise, seed, &resolve_out(out_dir)?),
        Command::Eval {
            models,
            data,
            split,
            out_dir,
        } => cmd_eval(&models, &data, &split, &resolve_out(out_dir)?),
        Command::Control { model, config, out_dir } => cmd_control(&model, &config, &resolve_out(out_dir)?),
        Command::Diagnose {
            model,
            nominal_data,
            stream,
            config,
            seed,
            out_dir,
        } => cmd_diagnose(&model, &nominal_data, &stream, &config, seed, &resolve_out(out_dir)?),
        Command::WritePreset { name, out } => write_preset(name, &out),
    }
}

fn resolve_out(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from))
        .ok_or_else(|| PsmError::Config(format!("no --out-dir given and {OUTPUT_DIR_VAR} is unset")))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn workers() -> Result<usize> {
    match std::env::var(WORKERS_VAR) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| PsmError::Config(format!("{WORKERS_VAR} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Read a file, naming it in any error.
fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(toml::from_str(&read_text(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

fn gen_data(config_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let started = Instant::now();
    let config: GenDataConfig = read_toml(config_path)?;
    let mut scenario = match (&config.scenario, &config.preset) {
        (Some(s), _) => s.clone(),
        (None, Some(name)) => presets::by_name(name).ok_or_else(|| PsmError::Config(format!("unknown preset `{name}`")))?,
        (None, None) => return Err(PsmError::Config("gen-data config needs `preset` or `scenario`".into())),
    };
    scenario.validate()?;
    if let Some(d) = &config.degradation {
        scenario = inject_degradation(&scenario, d.segment, d.multiplier)?;
    }
    if config.n_train == 0 {
        return Err(PsmError::Config("n_train must be at least 1".into()));
    }
    let corpus = generate_corpus_with_workers(&scenario, config.solver, seed, config.n_train, config.n_test, workers()?)?;
    let scaling = corpus_scaling(&corpus.train, &scenario)?;

    let mut outputs = vec![out.join("scenario.toml"), out.join("scaling.json")];
    fs::write(&outputs[0], scenario.to_toml()?)?;
    write_json(&outputs[1], &scaling)?;
    for (split, records) in [("train", &corpus.train), ("test", &corpus.test)] {
        let dir = out.join(split);
        fs::create_dir_all(&dir)?;
        for (i, rec) in records.iter().enumerate() {
            let path = dir.join(format!("{i:03}.psmd"));
            rec.save(&path)?;
            outputs.push(path);
        }
    }
    RunManifest::new("gen-data", Some(config_path), Some(seed))
        .inputs(&[config_path.to_path_buf()])?
        .outputs(&outputs)?
        .finish(out, started)?;
    println!(
        "wrote {} train and {} test episodes to {}",
        corpus.train.len(),
        corpus.test.len(),
        out.display()
    );
    Ok(())
}

fn load_split(dir: &Path) -> Result<(Vec<SimulationRecord>, Vec<PathBuf>)> {
    let mut paths: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "psmd"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    paths.sort();
    let records = paths.iter().map(|p| SimulationRecord::load(p)).collect::<Result<Vec<_>>>()?;
    Ok((records, paths))
}

fn load_data(dir: &Path) -> Result<DataDir> {
    let scenario_path = dir.join("scenario.toml");
    let scaling_path = dir.join("scaling.json");
    let scenario = ScenarioConfig::from_toml(&read_text(&scenario_path)?)?;
    let scaling: ScalingSpec = read_json(&scaling_path)?;
    let (train, mut files) = load_split(&dir.join("train"))?;
    let (test, test_files) = load_split(&dir.join("test"))?;
    files.extend(test_files);
    files.push(scenario_path);
    files.push(scaling_path);
    Ok(DataDir {
        scenario,
        scaling,
        train,
        test,
        files,
    })
}

fn load_model(dir: &Path) -> Result<Model> {
    let meta: ModelMeta = read_json(&dir.join("model.json"))?;
    let ck = load_checkpoint(&dir.join("model.ckpt"), &meta.spec, meta.train.adam())?;
    Ok(Model {
        meta,
        params: ck.params,
    })
}

fn model_files(dir: &Path) -> Vec<PathBuf> {
    vec![dir.join("model.json"), dir.join("model.ckpt")]
}

/// The stations and interval of `data` must match the model's scenario.
fn check_compatible(scenario: &ScenarioConfig, data: &ScenarioConfig) -> Result<()> {
    if scenario.sensor_stations != data.sensor_stations
        || scenario.delta_t != data.delta_t
        || scenario.n_controls() != data.n_controls()
    {
        return Err(PsmError::Config("dataset scenario does not match the model's stations, controls or interval".into()));
    }
    Ok(())
}

fn cmd_train(data_dir: &Path, config_path: &Path, mode: Mode, noise: &str, seed: Option<u64>, out: &Path) -> Result<()> {
    let started = Instant::now();
    let data = load_data(data_dir)?;
    let mut config: TrainConfig = read_toml(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if mode == Mode::Ann {
        config = config.baseline();
    }
    let noise_spec: NoiseSpec = noise.parse()?;
    if data.train.is_empty() {
        return Err(PsmError::Config("dataset has no training episodes".into()));
    }
    let scenario = &data.scenario;
    let samples = assemble_samples(&data.train, scenario)?;
    let dataset = Dataset::from_samples(&samples, &data.scaling);
    let physics = PhysicsModel::new(scenario, &data.scaling)?;
    let spec = config.network(scenario.n_controls(), scenario.state_dim());
    let outcome = train(&spec, &dataset, &physics, &config, &noise_spec)?;

    let meta = ModelMeta {
        mode,
        noise: noise.to_string(),
        spec: spec.clone(),
        scaling: data.scaling.clone(),
        scenario: scenario.clone(),
        train: config.clone(),
    };
    let outputs = vec![out.join("model.json"), out.join("model.ckpt"), out.join("metrics.csv")];
    write_json(&outputs[0], &meta)?;
    save_checkpoint(
        &outputs[1],
        &spec,
        &Checkpoint {
            params: outcome.params,
            moments: Some(outcome.optimizer),
        },
    )?;
    outcome.report.write_csv(fs::File::create(&outputs[2])?)?;
    let mut inputs = vec![config_path.to_path_buf()];
    inputs.extend(data.files);
    RunManifest::new("train", Some(config_path), Some(config.seed))
        .inputs(&inputs)?
        .outputs(&outputs)?
        .finish(out, started)?;
    let last = outcome.report.history.last().expect("at least one epoch");
    println!(
        "trained {:?} model: {} epochs, L_m {:.3e}, L_p {:.3e}, total loss reduced {:.1}x",
        mode,
        config.epochs,
        last.measurement,
        last.physics,
        outcome.report.total_reduction()
    );
    Ok(())
}

fn cmd_eval(models: &[PathBuf], data_dir: &Path, split: &str, out: &Path) -> Result<()> {
    let started = Instant::now();
    if models.len() > 2 {
        return Err(PsmError::Config("eval compares at most two models".into()));
    }
    let data = load_data(data_dir)?;
    let records = match split {
        "test" => &data.test,
        "train" => &data.train,
        other => return Err(PsmError::Config(format!("unknown split `{other}` (train or test)"))),
    };
    if records.is_empty() {
        return Err(PsmError::Config(format!("dataset has no {split} episodes")));
    }
    let mut results: Vec<Vec<RolloutResult>> = Vec::new();
    let mut labels = Vec::new();
    let mut inputs = data.files.clone();
    for dir in models {
        let m = load_model(dir)?;
        if m.meta.scaling != data.scaling {
            return Err(PsmError::Config(format!(
                "scaling of model {} does not match the dataset",
                dir.display()
            )));
        }
        check_compatible(&m.meta.scenario, &data.scenario)?;
        let rs = records
            .iter()
            .map(|r| rollout_evaluate(&m.meta.spec, &m.params, &m.meta.scaling, &data.scenario, r, RolloutMode::ClosedLoop))
            .collect::<Result<Vec<_>>>()?;
        results.push(rs);
        let mut label = format!("{:?}", m.meta.mode).to_lowercase();
        if labels.contains(&label) {
            label = format!("{label}_{}", labels.len() + 1);
        }
        labels.push(label);
        inputs.extend(model_files(dir));
    }
    let path = out.join("rmse.csv");
    if results.len() == 2 {
        let table = compare_models([&labels[0], &labels[1]], [&results[0], &results[1]]);
        table.write_csv(fs::File::create(&path)?)?;
        for f in Field::ALL {
            let j = f.index();
            println!(
                "{}: mean {:.4} vs {:.4} ({:.1}%)",
                f.name(),
                table.mean[0][j],
                table.mean[1][j],
                table.mean_ratio_percent()[j]
            );
        }
    } else {
        let mut w = csv::Writer::from_path(&path).map_err(PsmError::from)?;
        w.write_record(["statistic", "field", &labels[0]]).map_err(PsmError::from)?;
        for (name, pick) in [("mean", false), ("max", true)] {
            for f in Field::ALL {
                let vals = results[0].iter().map(|r| r.rmse[f.index()]);
                let v = if pick {
                    vals.fold(0.0, f64::max)
                } else {
                    vals.sum::<f64>() / results[0].len() as f64
                };
                w.write_record([name, f.name(), &v.to_string()]).map_err(PsmError::from)?;
                if !pick {
                    println!("{}: mean RMSE {:.4}", f.name(), v);
                }
            }
        }
        w.flush()?;
    }
    RunManifest::new("eval", None, None)
        .inputs(&inputs)?
        .outputs(&[path])?
        .finish(out, started)?;
    Ok(())
}

fn cmd_control(model_dir: &Path, config_path: &Path, out: &Path) -> Result<()> {
    let started = Instant::now();
    let m = load_model(model_dir)?;
    let config: ControlConfig = read_toml(config_path)?;
    let scenario = &m.meta.scenario;
    let (mut reference, mut schedule) = match config.case.as_deref() {
        Some("governor") => {
            let (r, s) = governor_scenario(scenario)?;
            (Some(r), s)
        }
        Some(other) => return Err(PsmError::Config(format!("unknown control case `{other}`"))),
        None => (None, ConstraintSchedule::default()),
    };
    if let Some(r) = config.reference {
        reference = Some(r);
    }
    if let Some(s) = config.schedule {
        schedule = s;
    }
    let reference = reference.ok_or_else(|| PsmError::Config("control config needs `case` or `reference`".into()))?;
    let log = ncg_rollout(
        &m.meta.spec,
        &m.params,
        &m.meta.scaling,
        scenario,
        &reference,
        &schedule,
        &config.governor,
        config.solver,
    )?;
    let path = out.join("ncg.csv");
    log.write_csv(fs::File::create(&path)?)?;
    let mut inputs = vec![config_path.to_path_buf()];
    inputs.extend(model_files(model_dir));
    RunManifest::new("control", Some(config_path), None)
        .inputs(&inputs)?
        .outputs(&[path])?
        .finish(out, started)?;
    println!(
        "{} steps, {} governed, worst bound excess {:.3}",
        log.steps.len(),
        log.governed_steps(),
        log.max_violation()
    );
    Ok(())
}

#[derive(Serialize)]
struct SegmentScore {
    segment: String,
    start: f64,
    end: f64,
    momentum_ratio: f64,
}

#[derive(Serialize)]
struct Verdict {
    degraded: bool,
    latch_window: Option<usize>,
    zeta: f64,
    window: usize,
    localization: Vec<SegmentScore>,
    /// Segment whose momentum signature stands out the most.
    suspect: Option<String>,
}

fn cmd_diagnose(
    model_dir: &Path,
    nominal_dir: &Path,
    stream_dir: &Path,
    config_path: &Path,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let m = load_model(model_dir)?;
    let config: DiagnoseConfig = read_toml(config_path)?;
    let nominal = load_data(nominal_dir)?;
    let stream = load_data(stream_dir)?;
    let scenario = &m.meta.scenario;
    check_compatible(scenario, &nominal.scenario)?;
    check_compatible(scenario, &stream.scenario)?;
    let (spec, sc) = (&m.meta.spec, &m.meta.scaling);
    let window = config.window.unwrap_or(2 * scenario.n_stations());

    let zeta = match config.zeta {
        Some(z) => z,
        None => {
            let val = if nominal.test.is_empty() { &nominal.train } else { &nominal.test };
            let val = Dataset::from_samples(&assemble_samples(val, scenario)?, sc);
            calibrate_zeta(&window_mse(spec, &m.params, &val, window)?, config.percentile, config.factor)?
        }
    };
    let mut stream_records = stream.train.clone();
    stream_records.extend(stream.test.iter().cloned());
    let stream_data = Dataset::from_samples(&assemble_samples(&stream_records, scenario)?, sc);
    let det = DetectorConfig { zeta, window };
    let latch = detect(spec, &m.params, &stream_data, &det)?;

    let mut outputs = Vec::new();
    let mut localization = Vec::new();
    if let Some(w) = latch {
        let idx: Vec<usize> = (w * window..stream_data.len()).collect();
        let post = stream_data.select(&idx);
        let physics = PhysicsModel::new(scenario, sc)?;
        let mut tc = twin_config(&m.meta.train);
        if let Some(s) = seed {
            tc.seed = s;
        }
        let (twin, report) = transfer_learn_twin(spec, &m.params, &post, &physics, &tc)?;
        let conditions = match config.conditions.as_str() {
            "original" => conditions_from_records(&nominal.train),
            "stream" => conditions_from_records(&stream_records),
            other => return Err(PsmError::Config(format!("unknown condition set `{other}`"))),
        };
        let grid = residual_grid(scenario.total_length(), config.grid_points);
        let r_nom = pde_residuals(spec, &m.params, &physics, &conditions, &grid)?;
        let r_twin = pde_residuals(spec, &twin, &physics, &conditions, &grid)?;
        let sig = signature(&r_nom, &r_twin)?;
        let starts = scenario.segment_starts();
        for (i, seg) in scenario.segments.iter().enumerate() {
            let (lo, hi) = (starts[i], starts[i] + seg.length);
            localization.push(SegmentScore {
                segment: seg.name.clone(),
                start: lo,
                end: hi,
                momentum_ratio: sig.localization_ratio(1, lo, hi),
            });
        }
        let paths = [out.join("signature.csv"), out.join("twin.ckpt"), out.join("twin_metrics.csv")];
        sig.write_csv(fs::File::create(&paths[0])?)?;
        save_checkpoint(
            &paths[1],
            spec,
            &Checkpoint {
                params: twin,
                moments: None,
            },
        )?;
        report.write_csv(fs::File::create(&paths[2])?)?;
        outputs.extend(paths);
    }
    let suspect = localization
        .iter()
        .max_by(|a, b| a.momentum_ratio.total_cmp(&b.momentum_ratio))
        .map(|s| s.segment.clone());
    let verdict = Verdict {
        degraded: latch.is_some(),
        latch_window: latch,
        zeta,
        window,
        localization,
        suspect,
    };
    let text = match latch {
        None => "no degradation detected\n".to_string(),
        Some(w) => {
            let mut t = format!("degradation detected at window {w}\n");
            for s in &verdict.localization {
                t += &format!("  {:<10} [{:.2}, {:.2}] m  momentum localization ratio {:.3}\n", s.segment, s.start, s.end, s.momentum_ratio);
            }
            if let Some(s) = &verdict.suspect {
                t += &format!("most localized momentum shift: {s}\n");
            }
            t
        }
    };
    let vjson = out.join("verdict.json");
    let vtxt = out.join("verdict.txt");
    write_json(&vjson, &verdict)?;
    fs::write(&vtxt, &text)?;
    outputs.push(vjson);
    outputs.push(vtxt);
    let mut inputs = vec![config_path.to_path_buf()];
    inputs.extend(model_files(model_dir));
    inputs.extend(nominal.files);
    inputs.extend(stream.files);
    RunManifest::new("diagnose", Some(config_path), seed)
        .inputs(&inputs)?
        .outputs(&outputs)?
        .finish(out, started)?;
    print!("{text}");
    Ok(())
}

fn write_preset(name: Preset, out: &Path) -> Result<()> {
    let gen = |scenario: ScenarioConfig, degradation| GenDataConfig {
        preset: None,
        scenario: Some(scenario),
        n_train: default_train(),
        n_test: default_test(),
        degradation,
        solver: SolverConfig::default(),
    };
    let text = match name {
        Preset::HeatedChannel => toml_string(&gen(presets::heated_channel(), None))?,
        Preset::CoolingLoop => toml_string(&gen(presets::cooling_loop(), None))?,
        Preset::LoopFault => toml_string(&gen(
            presets::cooling_loop(),
            Some(Degradation {
                segment: 3,
                multiplier: 10.0,
            }),
        ))?,
        Preset::TrainDesk => toml_string(&TrainConfig::desk())?,
        Preset::TrainFull => toml_string(&TrainConfig::default())?,
        Preset::Governor => toml_string(&ControlConfig {
            case: Some("governor".into()),
            ..ControlConfig::default()
        })?,
        Preset::Diagnose => toml_string(&DiagnoseConfig::default())?,
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, text)?;
    Ok(())
}

fn toml_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| PsmError::Config(e.to_string()))
}
