//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Criteria 8-10 train policies for millions of environment steps (hours on
//! one core). They run only with `TERRAGYM_ACCEPTANCE=full`; otherwise they
//! are reported as not run. `TERRAGYM_ACCEPTANCE_BUDGET=<steps>` shrinks the
//! training budget for a plumbing check; results are then labelled as off
//! protocol and cannot pass.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector3};
use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terragym::env::{task_completion_rate, Env, EnvConfig};
use terragym::harness::{evaluate, EvalEntry, EvalReport, GreedyPolicy, Perception, RunConfig, TaskEntry};
use terragym::neuralnet::{Checkpoint, PolicyArch, PolicyInit, PolicyNet};
use terragym::physics::{
    is_fallen, nominal_pose, settle, step_lowlevel, Pose, RobotModel, RobotState, NUM_JOINTS, NUM_LEGS,
};
use terragym::pmtg::{advance, compose_action, foot_target, foot_targets, TGParams, TGState};
use terragym::sensors::{cast_ray, raycast_scan, LidarConfig};
use terragym::terrain::{
    generate, generate_sparse, GridGeometry, Heightfield, SparseKind, TaskDistribution, TaskSpec, TerrainType,
};
use terragym::trainer::{
    compute_gae, minibatch_loss_grad, sample_action, train, write_metrics_line, IterationMetrics, Minibatch,
    PpoConfig, TrainMode,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.2} s (limit {limit_s} s)"))
}

// ---------------------------------------------------------------- 1

const TERRAIN_CASES: usize = 10_000;

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    for case in 0..TERRAIN_CASES {
        let rows = rng.random_range(2..33);
        let cols = rng.random_range(2..33);
        let seed = rng.next_u64();
        match case % 4 {
            0 => {
                // Determinism over every terrain type.
                let t = TerrainType::ALL[rng.random_range(0..TerrainType::ALL.len())];
                let spec = random_spec(t, rows, cols, &mut rng).with_seed(seed);
                let a = generate(&spec, rows, cols).unwrap();
                let b = generate(&spec, rows, cols).unwrap();
                let bits = |f: &Heightfield| f.heights().iter().map(|h| h.to_bits()).collect::<Vec<_>>();
                if bits(&a) != bits(&b) || a.cell_length() != b.cell_length() {
                    failures.push(format!("case {case}: {t} not deterministic"));
                }
            }
            1 => {
                let lo = rng.random_range(-0.3..0.1);
                let hi = lo + rng.random_range(0.0..0.3);
                let sigma = rng.random_range(0.0..4.0);
                let spec = TaskSpec::new(TerrainType::Rugged)
                    .fixed("h_min", lo)
                    .fixed("h_max", hi)
                    .fixed("sigma", sigma)
                    .with_seed(seed);
                let f = generate(&spec, rows, cols).unwrap();
                if f.heights().iter().any(|&h| h < lo || h > hi) {
                    failures.push(format!("case {case}: rugged leaves [{lo}, {hi}]"));
                }
            }
            2 => {
                let h = rng.random_range(0.0..0.3);
                let l = rng.random_range(0.05..1.5);
                let spec = TaskSpec::new(TerrainType::Stairs).fixed("h", h).fixed("l", l);
                let f = generate(&spec, rows, cols).unwrap();
                let mut level = 0.0;
                for i in 0..rows {
                    // Row i sits at the running sum of i increments.
                    if f.row(i).iter().any(|&v| v != level) {
                        failures.push(format!("case {case}: stairs row {i}"));
                        break;
                    }
                    if i + 1 < rows {
                        let next: f64 = level + h;
                        if (next - level - h).abs() > 4.0 * f64::EPSILON * next.abs() {
                            failures.push(format!("case {case}: stairs increment"));
                        }
                        level = next;
                    }
                }
                if f.cell_length() != l {
                    failures.push(format!("case {case}: stairs cell length"));
                }
            }
            _ => {
                let holes = rng.random_bool(0.5);
                let n = rng.random_range(0..=rows * cols);
                let mag = rng.random_range(0.01..1.0);
                let (kind, h) = if holes { (SparseKind::Holes, -mag) } else { (SparseKind::Obstacles, mag) };
                let f = generate_sparse(kind, n, h, &GridGeometry::sized(rows, cols), seed).unwrap();
                let nonzero = f.heights().iter().filter(|&&v| v != 0.0).count();
                if nonzero != n || f.heights().iter().any(|&v| v != 0.0 && v != h) {
                    failures.push(format!("case {case}: {nonzero} displaced cells, wanted {n}"));
                }
            }
        }
    }
    let (fast, time) = within(t0.elapsed(), 10.0);
    let pass = failures.is_empty() && fast;
    outcome(pass, format!("{TERRAIN_CASES} cases, {} failures, {time} {}", failures.len(), failures.first().cloned().unwrap_or_default()))
}

fn random_spec(t: TerrainType, rows: usize, cols: usize, rng: &mut impl Rng) -> TaskSpec {
    use TerrainType::*;
    let s = TaskSpec::new(t);
    match t {
        Flat => s,
        Rugged => s.bound("h_min", -0.1, 0.0).bound("h_max", 0.0, 0.1).bound("sigma", 0.0, 3.0),
        Holes => s.bound("n", 0.0, (rows * cols) as f64).bound("h", -0.5, -0.01),
        Obstacles => s.bound("n", 0.0, (rows * cols) as f64).bound("h", 0.01, 0.5),
        Stairs => s.bound("h", 0.0, 0.2).bound("l", 0.1, 1.0),
        Gaps => {
            let w = rng.random_range(1..=(rows / 2).max(1)) as f64;
            let slots = (rows as f64 / (2.0 * w)).floor();
            s.fixed("gap_width", w).bound("n", 0.0, slots).bound("gap_depth", -1.0, -0.1)
        }
        Hills => s.bound("k", 1.0, 8.0).bound("amplitude", 0.0, 0.5).bound("radius", 0.3, 3.0),
        Cliff => s.bound("w_walk", 1.0, cols as f64).bound("cliff_depth", -2.0, -0.1),
    }
}

// ---------------------------------------------------------------- 2

const ORACLE_STEP: f64 = 1e-3;
const ORACLE_TOL: f64 = 2e-3;

/// First sample point at or below the surface along the ray, marched in
/// 1 mm steps.
fn march(field: &Heightfield, o: &Vector3<f64>, d: &Vector3<f64>, max_range: f64) -> f64 {
    let n = (max_range / ORACLE_STEP).ceil() as usize;
    for k in 0..=n {
        let t = (k as f64 * ORACLE_STEP).min(max_range);
        let p = o + t * d;
        if p.z <= field.height_at(p.x, p.y) {
            return t;
        }
    }
    max_range
}

fn random_scene(rng: &mut impl Rng, n: usize) -> Heightfield {
    let spec = if rng.random_bool(0.5) {
        TaskSpec::new(TerrainType::Rugged).bound("h_min", -0.2, 0.0).bound("h_max", 0.0, 0.2).bound("sigma", 0.0, 2.0)
    } else {
        TaskSpec::new(TerrainType::Obstacles).bound("n", 10.0, 200.0).bound("h", 0.05, 0.6)
    };
    generate(&spec.with_seed(rng.next_u64()), n, n).unwrap()
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let max_range = 10.0;
    let mut worst: f64 = 0.0;
    let mut hits = 0;
    for _ in 0..50 {
        let field = random_scene(&mut rng, 40);
        for _ in 0..20 {
            let o = Vector3::new(
                rng.random_range(1.0..field.length() - 1.0),
                rng.random_range(1.0..field.width() - 1.0),
                field.max_height() + rng.random_range(0.05..1.0),
            );
            let yaw = rng.random_range(0.0..TAU);
            let pitch = rng.random_range(-1.2..0.2f64);
            let d = Vector3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin());
            let fast = cast_ray(&field, &o, &d, max_range);
            let slow = march(&field, &o, &d, max_range);
            if slow < max_range {
                hits += 1;
            }
            worst = worst.max((fast - slow).abs());
        }
    }

    // Rotational consistency, noise off.
    let lidar = LidarConfig { channels: 4, azimuth_bins: 32, noise_sigma: 0.0, ..LidarConfig::default() };
    let mut rot_worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 32;
        let field = random_scene(&mut rng, n);
        let c = 0.5 * field.length();
        let p = Vector3::new(rng.random_range(2.0..6.0), rng.random_range(2.0..6.0), field.max_height() + 0.3);
        let yaw = rng.random_range(0.0..TAU);
        let base = raycast_scan(&lidar, &Pose::new(p, UnitQuaternion::from_euler_angles(0.0, 0.0, yaw)), &field, 0);

        // Scene and sensor turned together by 90 degrees: same scan.
        let turned: Vec<f64> = (0..n * n).map(|k| field.get(k % n, n - 1 - k / n)).collect();
        let turned = Heightfield::new(n, n, field.cell_length(), field.cell_width(), turned, [0.0, 0.0]).unwrap();
        let p2 = Vector3::new(c - (p.y - c), c + (p.x - c), p.z);
        let scan = raycast_scan(&lidar, &Pose::new(p2, UnitQuaternion::from_euler_angles(0.0, 0.0, yaw + 0.5 * PI)), &turned, 0);
        for (a, b) in base.distances.iter().zip(&scan.distances) {
            rot_worst = rot_worst.max((a - b).abs());
        }

        // Sensor yaw advanced by m bins: columns shift by m.
        let m = rng.random_range(1..lidar.azimuth_bins);
        let shifted = raycast_scan(
            &lidar,
            &Pose::new(p, UnitQuaternion::from_euler_angles(0.0, 0.0, yaw + lidar.azimuth(m))),
            &field,
            0,
        );
        for ch in 0..lidar.channels {
            for k in 0..lidar.azimuth_bins {
                let a = base.distance(ch, (k + m) % lidar.azimuth_bins);
                rot_worst = rot_worst.max((a - shifted.distance(ch, k)).abs());
            }
        }
        let mut x = base.distances.clone();
        let mut y = shifted.distances.clone();
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        for (a, b) in x.iter().zip(&y) {
            rot_worst = rot_worst.max((a - b).abs());
        }
    }
    let (fast, time) = within(t0.elapsed(), 30.0);
    let pass = worst <= ORACLE_TOL && rot_worst <= 1e-9 && hits > 500 && fast;
    outcome(
        pass,
        format!("1000 rays ({hits} hits), max |dda - march| {:.3} mm (tol 2 mm); rotation max diff {rot_worst:.1e} m; {time}", worst * 1e3),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for _ in 0..50 {
        let action_dim = if rng.random_bool(0.5) { 15 } else { 12 };
        let blind = rng.random_bool(0.3);
        let layout = terragym::env::ObsLayout { action_dim, lidar_len: rng.random_range(2..10) };
        let w = |rng: &mut ChaCha8Rng| rng.random_range(2..7);
        let arch = PolicyArch {
            lidar_encoder: vec![w(&mut rng), w(&mut rng)],
            proprio_encoder: vec![w(&mut rng), w(&mut rng)],
            trunk: vec![w(&mut rng)],
            value: vec![w(&mut rng)],
        };
        let net = PolicyNet::new(layout, &arch, blind).unwrap();
        let init = PolicyInit { log_std: -0.7, mean_gain: 1.0, gait_prior: None };
        let mut p = net.init_params(&init, &mut rng);
        for v in p.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
        let rows = 6;
        let obs = Array2::from_shape_fn((rows, layout.dim()), |_| rng.random_range(-1.0..1.0));
        let out = net.forward(&p, obs.view()).unwrap();
        let mut actions = Array2::zeros((rows, action_dim));
        let mut old = Vec::new();
        for r in 0..rows {
            let (a, lp) = sample_action(&out.mean.row(r).to_vec(), &out.log_std.to_vec(), &mut rng);
            actions.row_mut(r).assign(&ndarray::Array1::from(a));
            // Old policy slightly off the current one; ratios stay inside the clip range.
            old.push(lp + rng.random_range(-0.05..0.05));
        }
        let adv: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ret: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mb = Minibatch { observations: &obs, actions: &actions, old_log_probs: &old, advantages: &adv, returns: &ret };
        let cfg = PpoConfig { entropy_coef: 0.01, ..PpoConfig::default() };
        let (_, grad) = minibatch_loss_grad(&net, &p, &mb, &cfg).unwrap();
        let loss = |q: &[f64]| minibatch_loss_grad(&net, q, &mb, &cfg).unwrap().0.total(&cfg);
        let h = 1e-5;
        for k in 0..p.len() {
            let mut a = p.clone();
            a[k] += h;
            let mut b = p.clone();
            b[k] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
            worst = worst.max(err);
            checked += 1;
        }
    }
    let (fast, time) = within(t0.elapsed(), 30.0);
    outcome(worst < 1e-4 && fast, format!("50 nets, {checked} partials, max rel err {worst:.2e} (tol 1e-4), {time}"))
}

// ---------------------------------------------------------------- 4

fn gae_oracle(r: &[f64], v: &[f64], done: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    // A_t = sum_l (gamma lambda)^l delta_{t+l}, truncated at the first terminal.
    let n = r.len();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for l in 0..n - t {
                let k = t + l;
                let next = if done[k] { 0.0 } else if k + 1 < n { v[k + 1] } else { boot };
                let delta = r[k] + gamma * next - v[k];
                sum += (gamma * lambda).powi(l as i32) * delta;
                if done[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=32);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
        let boot = rng.random_range(-3.0..3.0);
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let (adv, ret) = compute_gae(&r, &v, &d, boot, gamma, lambda);
        for ((a, b), (rt, vt)) in adv.iter().zip(gae_oracle(&r, &v, &d, boot, gamma, lambda)).zip(ret.iter().zip(&v)) {
            worst = worst.max((a - b).abs()).max((rt - (a + vt)).abs());
        }
    }
    let (fast, time) = within(t0.elapsed(), 5.0);
    outcome(worst < 1e-12 && fast, format!("1000 instances, max error {worst:.1e} (tol 1e-12), {time}"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = Arc::new(EnvConfig {
        max_steps: 150,
        lidar: LidarConfig { channels: 4, azimuth_bins: 16, ..LidarConfig::default() },
        ..EnvConfig::default()
    });
    let dist = TaskDistribution::new(
        terragym::harness::default_tasks().iter().map(|t| (t.spec(), 1.0)).collect(),
    )
    .unwrap();
    let dt = cfg.control_dt();
    let (mut worst_sum, mut worst_tcr): (f64, f64) = (0.0, 0.0);
    let mut rollouts = 0;
    while rollouts < 100 {
        let Ok((mut env, _)) = Env::reset(&dist, Arc::clone(&cfg), rng.next_u64()) else { continue };
        let g0 = env.initial_distance();
        let mut total = 0.0;
        loop {
            let u: Vec<f64> = (0..cfg.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = env.step(&u).unwrap();
            total += s.reward;
            if s.done {
                break;
            }
        }
        let g_t = env.distance();
        worst_sum = worst_sum.max((total * dt - (g0 - g_t)).abs());
        let tcr = task_completion_rate(g0, g_t).unwrap();
        worst_tcr = worst_tcr.max((tcr - env.tcr()).abs()).max((total * dt / g0 - tcr).abs());
        rollouts += 1;
    }
    let (fast, time) = within(t0.elapsed(), 60.0);
    outcome(
        worst_sum < 1e-9 && worst_tcr < 1e-9 && fast,
        format!("100 rollouts, max |sum r dt - (g0 - gT)| {worst_sum:.1e}, tcr cross-check {worst_tcr:.1e} (tol 1e-9), {time}"),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = RobotModel::default();
    let dt = 0.01;
    let (mut worst_period, mut worst_jump): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        // Period of N control steps, so 1/f is on the sampling grid.
        let n = rng.random_range(34..200);
        let params = TGParams::new(1.0 / (n as f64 * dt), rng.random_range(0.0..0.25), rng.random_range(-0.3..0.3));
        let mut s = TGState { phase: rng.random_range(0.0..TAU), ..TGState::default() };
        let mut seq = Vec::new();
        for _ in 0..3 * n {
            seq.push(compose_action(&foot_targets(&s, &params, &model), &[0.0; NUM_JOINTS], &model));
            s = advance(&s, &params, dt);
        }
        for k in 0..2 * n {
            for j in 0..NUM_JOINTS {
                worst_period = worst_period.max((seq[k + n][j] - seq[k][j]).abs());
            }
        }
        let grid = (TAU / 1e-4).ceil() as usize;
        let mut prev = foot_target(0.0, &params, model.nominal_height);
        for k in 1..=grid + 1 {
            let p = foot_target(k as f64 * 1e-4, &params, model.nominal_height);
            worst_jump = worst_jump.max((p - prev).norm());
            prev = p;
        }
    }
    let (fast, time) = within(t0.elapsed(), 5.0);
    outcome(
        worst_period < 1e-9 && worst_jump < 1e-3 && fast,
        format!("50 gaits: periodicity error {worst_period:.1e} rad (tol 1e-9), max grid jump {:.3} mm (tol 1 mm), {time}", worst_jump * 1e3),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let t0 = Instant::now();
    let limp = RobotModel { kp: [0.0; NUM_JOINTS], kd: [0.0; NUM_JOINTS], ..RobotModel::default() };
    let deep = Heightfield::constant(4, 4, 0.25, -100.0).unwrap();
    let z0 = 2.0;
    let mut s = RobotState::at_rest(Vector3::new(0.5, 0.5, z0), nominal_pose(&limp));
    let dt = 1e-3;
    let steps = 1000;
    for _ in 0..steps {
        s = step_lowlevel(&limp, &s, &s.q.clone(), &deep, dt).unwrap();
    }
    let n = steps as f64;
    let scheme = z0 - limp.gravity * dt * dt * n * (n + 1.0) / 2.0;
    let ballistic = z0 - 0.5 * limp.gravity * (n * dt).powi(2);
    let (e_scheme, e_ball) = ((s.position.z - scheme).abs(), (s.position.z - ballistic).abs());

    let model = RobotModel::default();
    let field = Heightfield::constant(64, 64, 0.25, 0.0).unwrap().with_origin([-8.0, -8.0]);
    let start = RobotState::standing(&model, [0.0, 0.0], 0.0);
    let target = start.q;
    let mut s = settle(&model, &start, &target, &field, 500).unwrap();
    let p0 = s.position;
    let mut drift: f64 = 0.0;
    let mut fell = false;
    for _ in 0..5000 {
        s = step_lowlevel(&model, &s, &target, &field, dt).unwrap();
        drift = drift.max((s.position - p0).norm());
        fell |= is_fallen(&s, &field);
    }
    let all_contact = s.contacts.iter().filter(|&&c| c).count() == NUM_LEGS;
    let (fast, time) = within(t0.elapsed(), 10.0);
    outcome(
        e_scheme < 1e-9 && e_ball < 5e-3 && drift < 0.01 && !fell && all_contact && fast,
        format!(
            "free fall: scheme err {e_scheme:.1e} m (tol 1e-9), ballistic err {:.2} mm (tol 5 mm); 5 s stance drift {:.2} mm (tol 10 mm); {time}",
            e_ball * 1e3,
            drift * 1e3
        ),
    )
}

// ---------------------------------------------------------------- 11

fn criterion_11() -> Outcome {
    let t0 = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.seed = 11;
    cfg.ppo = PpoConfig { workers: 4, horizon: 250, total_steps: 3000, minibatch_size: 256, ..PpoConfig::default() };
    cfg.episode.max_steps = 200;
    let run = || {
        let (ckpt, metrics) = train(cfg.train_config(), cfg.distribution().unwrap(), cfg.seed, |_, _| Ok(())).unwrap();
        let mut bytes = Vec::new();
        ckpt.write(&mut bytes).unwrap();
        let mut lines = Vec::new();
        for m in &metrics {
            write_metrics_line(m, &mut lines).unwrap();
        }
        (ckpt, bytes, lines)
    };
    let (ckpt, a_bytes, a_lines) = run();
    let (_, b_bytes, b_lines) = run();
    let identical = a_bytes == b_bytes && a_lines == b_lines;

    let back = Checkpoint::read(a_bytes.as_slice()).unwrap();
    let (net_a, net_b) = (ckpt.net().unwrap(), back.net().unwrap());
    let env_cfg = Arc::new(cfg.env_config());
    let (mut env, mut obs) = Env::reset_with_task(&TaskSpec::flat(), env_cfg, 3).unwrap();
    let mut same_actions = true;
    for _ in 0..100 {
        let a = net_a.act(&ckpt.params, &obs.data).unwrap();
        let b = net_b.act(&back.params, &obs.data).unwrap();
        same_actions &= a.0.iter().map(|v| v.to_bits()).eq(b.0.iter().map(|v| v.to_bits()));
        let s = env.step(&a.0).unwrap();
        obs = s.observation;
        if s.done {
            break;
        }
    }
    outcome(
        identical && same_actions && back == ckpt,
        format!(
            "two {}-step runs: checkpoints {} ({} bytes), metrics {}, reloaded greedy actions {}; {:.1} s",
            cfg.ppo.total_steps,
            if a_bytes == b_bytes { "bit-identical" } else { "DIFFER" },
            a_bytes.len(),
            if a_lines == b_lines { "identical" } else { "DIFFER" },
            if same_actions { "bit-identical" } else { "DIFFER" },
            t0.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 8-10

const EVAL_EPISODES: usize = 20;
const LEARNING_BUDGET: u64 = 2_000_000;
/// Per-run budget for the comparisons of criteria 9 and 10.
const COMPARISON_BUDGET: u64 = 1_000_000;
const COMPARISON_SEEDS: [u64; 3] = [1, 2, 3];
const EVAL_SEED: u64 = 1000;

struct Budget {
    learning: u64,
    comparison: u64,
    on_protocol: bool,
}

fn budget() -> Budget {
    match std::env::var("TERRAGYM_ACCEPTANCE_BUDGET").ok().and_then(|v| v.parse::<u64>().ok()) {
        Some(b) => Budget { learning: b, comparison: b, on_protocol: false },
        None => Budget { learning: LEARNING_BUDGET, comparison: COMPARISON_BUDGET, on_protocol: true },
    }
}

fn flat_tasks() -> Vec<TaskEntry> {
    vec![TaskEntry::new(TerrainType::Flat, &[])]
}

fn progress(label: &str) -> impl FnMut(&terragym::trainer::Trainer, &IterationMetrics) -> Result<(), terragym::trainer::TrainError> + '_ {
    let t0 = Instant::now();
    move |_, m| {
        if m.iter % 25 == 0 {
            eprintln!("  [{label}] iter {} steps {} return {:.1} tcr {:.3} ({:.0} s)", m.iter, m.env_steps, m.mean_return, m.mean_tcr, t0.elapsed().as_secs_f64());
        }
        Ok(())
    }
}

fn train_eval(cfg: &RunConfig, suite: &[EvalEntry], label: &str) -> (EvalReport, Vec<IterationMetrics>) {
    let (ckpt, metrics) = train(cfg.train_config(), cfg.distribution().unwrap(), cfg.seed, progress(label)).unwrap();
    let net = ckpt.net().unwrap();
    let env = Arc::new(cfg.env_config());
    let report = evaluate(&GreedyPolicy { net: &net, params: &ckpt.params }, suite, &env, EVAL_EPISODES, EVAL_SEED).unwrap();
    eprintln!("  [{label}] eval\n{}", report.table());
    (report, metrics)
}

fn quartile_means(metrics: &[IterationMetrics]) -> (f64, f64) {
    let q = (metrics.len() / 4).max(1);
    let mean = |ms: &[IterationMetrics]| ms.iter().map(|m| m.mean_return).sum::<f64>() / ms.len() as f64;
    (mean(&metrics[..q]), mean(&metrics[metrics.len() - q..]))
}

fn criterion_8(b: &Budget) -> Outcome {
    let t0 = Instant::now();
    let mut cfg = RunConfig { seed: 0, tasks: flat_tasks(), ..RunConfig::default() };
    cfg.ppo.total_steps = b.learning;
    let suite = [EvalEntry::new("flat", TerrainType::Flat, false, &[])];
    let (report, metrics) = train_eval(&cfg, &suite, "8 flat");
    let tcr = report.cells[0].mean_tcr;
    let (first, last) = quartile_means(&metrics);
    let pass = b.on_protocol && tcr >= 0.9 && last > first;
    outcome(
        pass,
        format!(
            "{} steps: greedy mean tcr {tcr:.3} over {EVAL_EPISODES} episodes (need >= 0.9); mean return first quartile {first:.1}, last quartile {last:.1}; {:.0} min",
            cfg.ppo.total_steps,
            t0.elapsed().as_secs_f64() / 60.0
        ),
    )
}

struct SeedRuns {
    full: EvalReport,
    flat_only: EvalReport,
    blind: EvalReport,
    reactive: EvalReport,
    sequential: EvalReport,
}

fn comparison_runs(b: &Budget) -> Vec<SeedRuns> {
    COMPARISON_SEEDS
        .iter()
        .map(|&seed| {
            let mut base = RunConfig { seed, ..RunConfig::default() };
            base.ppo.total_steps = b.comparison;
            let suite = base.eval.clone();
            let variant = |f: &dyn Fn(&mut RunConfig), name: &str| {
                let mut cfg = base.clone();
                f(&mut cfg);
                train_eval(&cfg, &suite, &format!("seed {seed} {name}")).0
            };
            SeedRuns {
                full: variant(&|_| {}, "full"),
                flat_only: variant(&|c| c.tasks = flat_tasks(), "flat-only"),
                blind: variant(&|c| c.mode.perception = Perception::Blind, "blind"),
                reactive: variant(&|c| c.mode.control = terragym::env::ControlMode::Reactive, "reactive"),
                sequential: variant(&|c| c.mode.training = TrainMode::Sequential, "sequential"),
            }
        })
        .collect()
}

fn criterion_9(b: &Budget, runs: &[SeedRuns]) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for (seed, r) in COMPARISON_SEEDS.iter().zip(runs) {
        let (m, f) = (r.full.held_out_mean(), r.flat_only.held_out_mean());
        if m - f >= 0.1 {
            wins += 1;
        }
        parts.push(format!("seed {seed}: multi-task {m:.3} vs flat-only {f:.3}"));
    }
    outcome(
        b.on_protocol && wins >= 2,
        format!("held-out mean tcr, {} steps per run; {}; margin >= 0.1 on {wins}/3 seeds (need 2)", b.comparison, parts.join("; ")),
    )
}

fn criterion_10(b: &Budget, runs: &[SeedRuns]) -> Outcome {
    let avg = |f: &dyn Fn(&SeedRuns) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let obstacles = |r: &EvalReport| r.cell("obstacles").map_or(f64::NAN, |c| c.mean_tcr);
    let full_obs = avg(&|r| obstacles(&r.full));
    let blind_obs = avg(&|r| obstacles(&r.blind));
    let full_ho = avg(&|r| r.full.held_out_mean());
    let reactive_ho = avg(&|r| r.reactive.held_out_mean());
    let seq_ho = avg(&|r| r.sequential.held_out_mean());
    let blind_ok = full_obs - blind_obs >= 0.1;
    let reactive_ok = full_ho - reactive_ho >= 0.05;
    let seq_ok = seq_ho < full_ho;
    outcome(
        b.on_protocol && blind_ok && reactive_ok && seq_ok,
        format!(
            "seed means: obstacles full {full_obs:.3} vs blind {blind_obs:.3} (need +0.1: {}); held-out full {full_ho:.3} vs reactive {reactive_ho:.3} (need +0.05: {}); sequential {seq_ho:.3} < multi-task {full_ho:.3}: {}",
            yes(blind_ok),
            yes(reactive_ok),
            yes(seq_ok)
        ),
    )
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

// ----------------------------------------------------------------

fn main() {
    // `cargo test -- <filter>` and friends pass arguments; honor `--list`
    // so test discovery does not run the suite.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let full = std::env::var("TERRAGYM_ACCEPTANCE").is_ok_and(|v| v == "full");
    let mut failed = 0;
    let mut report = |n: u32, name: &str, o: Outcome| {
        println!("criterion {n:>2} [{name}]: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "terrain properties", criterion_1());
    report(2, "lidar oracle", criterion_2());
    report(3, "gradient check", criterion_3());
    report(4, "gae oracle", criterion_4());
    report(5, "telescoping reward", criterion_5());
    report(6, "pmtg periodicity", criterion_6());
    report(7, "physics sanity", criterion_7());
    if full {
        let b = budget();
        if !b.on_protocol {
            println!("note: TERRAGYM_ACCEPTANCE_BUDGET={} is off protocol; criteria 8-10 cannot pass", b.learning);
        }
        report(8, "learning smoke test", criterion_8(&b));
        let runs = comparison_runs(&b);
        report(9, "multi-task generalization", criterion_9(&b, &runs));
        report(10, "ablations", criterion_10(&b, &runs));
    } else {
        for (n, name) in [(8, "learning smoke test"), (9, "multi-task generalization"), (10, "ablations")] {
            println!("criterion {n:>2} [{name}]: NOT RUN (hours of training; set TERRAGYM_ACCEPTANCE=full)");
        }
    }
    report(11, "reproducibility", criterion_11());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
