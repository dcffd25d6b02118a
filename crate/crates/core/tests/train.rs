use std::sync::OnceLock;

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use psm_core::nn::{init_params, MlpSpec, ParamStore};
use psm_core::refsolver::{generate_corpus, Corpus, InputTrajectory, Solver, SolverConfig};
use psm_core::train::*;
use psm_core::transport::{presets, ScalingSpec, ScenarioConfig};

struct Fixture {
    scenario: ScenarioConfig,
    corpus: Corpus,
    samples: Vec<Sample>,
    scaling: ScalingSpec,
    data: Dataset,
    physics: PhysicsModel,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let scenario = presets::heated_channel();
        let corpus = generate_corpus(&scenario, SolverConfig::default(), 11, 2, 1).unwrap();
        let (samples, scaling) = assemble_dataset(&corpus.train, &scenario).unwrap();
        let data = Dataset::from_samples(&samples, &scaling);
        let physics = PhysicsModel::new(&scenario, &scaling).unwrap();
        Fixture {
            scenario,
            corpus,
            samples,
            scaling,
            data,
            physics,
        }
    })
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 128,
        collocation_batch: 64,
        widths: [16, 8, 8],
        learning_rate: 5e-3,
        ..TrainConfig::default()
    }
}

fn spec(cfg: &TrainConfig) -> MlpSpec {
    let f = fixture();
    cfg.network(f.scenario.n_controls(), f.scenario.state_dim())
}

/// A PSM trained briefly on the fixture, shared by the slower tests.
fn trained() -> &'static (MlpSpec, ParamStore) {
    static CELL: OnceLock<(MlpSpec, ParamStore)> = OnceLock::new();
    CELL.get_or_init(|| {
        let f = fixture();
        let cfg = small_config(300);
        let spec = spec(&cfg);
        let out = train(&spec, &f.data, &f.physics, &cfg, &NoiseSpec::none()).unwrap();
        (spec, out.params)
    })
}

fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn collocation_space_time_is_uniform_and_conditions_come_from_the_batch() {
    let f = fixture();
    let batch = f.data.select(&(0..64).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = sample_collocation(&mut rng, 100_000, &batch);
    assert!(ks_uniform(x.column(0).to_vec()) < 0.01);
    assert!(ks_uniform(x.column(1).to_vec()) < 0.01);
    for row in x.rows().into_iter().take(500) {
        let tail = row.slice(ndarray::s![2..]);
        assert!(batch.inputs.rows().into_iter().any(|b| b.slice(ndarray::s![2..]) == tail));
    }
}

#[test]
fn training_is_deterministic_under_seed() {
    let f = fixture();
    let cfg = small_config(2);
    let spec = spec(&cfg);
    let noise = NoiseSpec::homoscedastic(0.01);
    let a = train(&spec, &f.data, &f.physics, &cfg, &noise).unwrap();
    let b = train(&spec, &f.data, &f.physics, &cfg, &noise).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.report, b.report);
    let c = train(&spec, &f.data, &f.physics, &TrainConfig { seed: 1, ..cfg }, &noise).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn baseline_never_evaluates_physics_and_ignores_the_physics_model() {
    let f = fixture();
    let cfg = small_config(3).baseline();
    let spec = spec(&cfg);
    let a = train(&spec, &f.data, &f.physics, &cfg, &NoiseSpec::none()).unwrap();
    assert_eq!(a.report.physics_evaluations, 0);
    assert!(a.report.history.iter().all(|m| m.physics == 0.0));

    let mut other = f.scenario.clone();
    other.segments[1].heat_source = None;
    let other_physics = PhysicsModel::new(&other, &f.scaling).unwrap();
    let b = train(&spec, &f.data, &other_physics, &cfg, &NoiseSpec::none()).unwrap();
    assert_eq!(a.params, b.params);

    let psm = train(&spec, &f.data, &f.physics, &small_config(3), &NoiseSpec::none()).unwrap();
    assert!(psm.report.physics_evaluations > 0);
}

#[test]
fn psm_configuration_with_unit_alpha_follows_the_baseline() {
    let f = fixture();
    let psm = TrainConfig {
        alpha: 1.0,
        beta: 0.0,
        ..small_config(3)
    };
    let spec = spec(&psm);
    let a = train(&spec, &f.data, &f.physics, &psm, &NoiseSpec::none()).unwrap();
    let b = train(&spec, &f.data, &f.physics, &small_config(3).baseline(), &NoiseSpec::none()).unwrap();
    assert_eq!(a.report.history, b.report.history);
    assert_eq!(a.params, b.params);
}

#[test]
fn invalid_weights_are_rejected() {
    let f = fixture();
    let cfg = TrainConfig {
        alpha: 0.7,
        beta: 0.7,
        ..small_config(1)
    };
    assert!(train(&spec(&cfg), &f.data, &f.physics, &cfg, &NoiseSpec::none()).is_err());
}

#[test]
fn every_delta_t_condition_has_an_initial_row() {
    let f = fixture();
    let key = |s: &Sample| (s.v.iter().chain(&s.x0).map(|x| x.to_bits()).collect::<Vec<_>>(), s.z.to_bits());
    let initial: std::collections::HashSet<_> = f.samples.iter().filter(|s| s.t == 0.0).map(key).collect();
    let later: Vec<_> = f.samples.iter().filter(|s| s.t != 0.0).collect();
    assert!(!later.is_empty());
    for s in later {
        assert_eq!(s.t, f.scenario.delta_t);
        assert!(initial.contains(&key(s)));
    }
    let n_st = f.scenario.n_stations();
    for s in f.samples.iter().filter(|s| s.t == 0.0) {
        let i = f.scenario.sensor_stations.iter().position(|&z| z == s.z).unwrap();
        assert_eq!(s.target, [s.x0[i], s.x0[n_st + i], s.x0[2 * n_st + i]]);
    }
}

#[test]
fn trained_psm_residuals_drop_tenfold() {
    let f = fixture();
    let (spec, params) = trained();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = sample_collocation(&mut rng, 10_000, &f.data);
    let untrained = init_params(spec, 0).unwrap();
    let mean = |p: &ParamStore| {
        let (_, set) = physics_loss(spec, p, x.view(), &f.physics).unwrap();
        let m = set.mean_abs();
        assert!(m.iter().all(|v| v.is_finite()));
        m.iter().sum::<f64>()
    };
    let (before, after) = (mean(&untrained), mean(params));
    assert!(after * 10.0 <= before, "untrained {before} trained {after}");
}

#[test]
fn oracle_fed_rollout_bounds_closed_loop_from_below() {
    let f = fixture();
    let (spec, params) = trained();
    let rec = &f.corpus.test[0];
    let closed = rollout_evaluate(spec, params, &f.scaling, &f.scenario, rec, RolloutMode::ClosedLoop).unwrap();
    let oracle = rollout_evaluate(spec, params, &f.scaling, &f.scenario, rec, RolloutMode::OracleFed).unwrap();
    for j in 0..3 {
        assert!(oracle.rmse[j] <= closed.rmse[j] * 1.05, "field {j}: {:?} vs {:?}", oracle.rmse, closed.rmse);
    }
    assert_eq!(closed.predictions.row(0), oracle.predictions.row(0));
}

#[test]
fn steady_record_rollout_repeats_the_one_step_error() {
    let f = fixture();
    let (spec, params) = trained();
    let solver = Solver::new(&f.scenario, SolverConfig::default()).unwrap();
    let rec = solver
        .run_from_steady(&InputTrajectory::constant(&[0.649, 844.65], 10.0 * f.scenario.delta_t))
        .unwrap();
    let oracle = rollout_evaluate(spec, params, &f.scaling, &f.scenario, &rec, RolloutMode::OracleFed).unwrap();
    let first = oracle.predictions.row(0);
    for row in oracle.predictions.rows() {
        let drift = row.iter().zip(first).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift}");
    }
    let mut one = rec.clone();
    one.times.truncate(2);
    one.states.truncate(2);
    one.controls.truncate(2);
    one.sensors.truncate(2);
    let single = rollout_evaluate(spec, params, &f.scaling, &f.scenario, &one, RolloutMode::OracleFed).unwrap();
    for j in 0..3 {
        assert!((single.rmse[j] - oracle.rmse[j]).abs() <= 1e-6 * single.rmse[j].max(1.0));
    }
}

#[test]
fn comparison_table_reports_mean_and_max() {
    let f = fixture();
    let (spec, params) = trained();
    let zero = ParamStore::zeros(spec);
    let rec = &f.corpus.test[0];
    let a = rollout_evaluate(spec, params, &f.scaling, &f.scenario, rec, RolloutMode::ClosedLoop).unwrap();
    let b = rollout_evaluate(spec, &zero, &f.scaling, &f.scenario, rec, RolloutMode::ClosedLoop).unwrap();
    let table = compare_models(["psm", "ann"], [std::slice::from_ref(&a), std::slice::from_ref(&b)]);
    let mut out = Vec::new();
    table.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("statistic,field,psm,ann,ratio_percent"));
    let ratio = table.mean_ratio_percent();
    for j in 0..3 {
        assert!((ratio[j] - 100.0 * a.rmse[j] / b.rmse[j]).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn logcosh_is_even_nonnegative_and_between_its_asymptotes(x in -50.0f64..50.0) {
        let l = logcosh(x);
        prop_assert_eq!(l, logcosh(-x));
        prop_assert!(l >= 0.0);
        prop_assert!(l <= x.abs() + 1e-12);
        prop_assert!(l >= x.abs() - std::f64::consts::LN_2 - 1e-12);
        prop_assert!(l <= x * x / 2.0 + 1e-12);
    }

    #[test]
    fn noise_leaves_positions_times_and_controls_bitwise(seed in 0u64..1000, sigma in 0.0f64..0.5, hetero in any::<bool>()) {
        let f = fixture();
        let idx: Vec<usize> = (0..f.data.len()).step_by(17).collect();
        let clean = f.data.select(&idx);
        let mut noisy = clean.clone();
        let spec = if hetero { NoiseSpec::heteroscedastic(sigma) } else { NoiseSpec::homoscedastic(sigma) };
        add_noise(&mut noisy, &spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let k = clean.x0_offset();
        for (a, b) in clean.inputs.rows().into_iter().zip(noisy.inputs.rows()) {
            for j in 0..k {
                prop_assert_eq!(a[j].to_bits(), b[j].to_bits());
            }
        }
    }

    #[test]
    fn measurement_loss_is_zero_only_on_match(vals in proptest::collection::vec(-2.0f64..2.0, 6), shift in 0.01f64..1.0) {
        let y = Array2::from_shape_vec((2, 3), vals).unwrap();
        prop_assert_eq!(measurement_loss(y.view(), y.view()).unwrap(), 0.0);
        let moved = &y + shift;
        let up = measurement_loss(moved.view(), y.view()).unwrap();
        let down = measurement_loss(y.view(), moved.view()).unwrap();
        prop_assert!(up > 0.0);
        prop_assert!((up - down).abs() < 1e-15);
    }
}
