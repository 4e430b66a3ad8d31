//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use common::oracle::{brute_force_fusion, kalman_update};
use common::*;
use eikf::bench::{bench_update, fitted_exponent, loglog_slope, BenchConfig};
use eikf::consistent::{consistent_pose, BiasCorrection};
use eikf::filter::*;
use eikf::gaussian::*;
use eikf::lie::*;
use eikf::sensors::*;
use eikf::sim::*;
use nalgebra::{DMatrix, Matrix6, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn run(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= budget;
    let passed = o.passed && in_budget;
    let time = if in_budget {
        format!("{:.1} s", elapsed.as_secs_f64())
    } else {
        format!("{:.1} s, over the {} s budget", elapsed.as_secs_f64(), budget.as_secs())
    };
    println!("{} C{id:<2} {name}: {} [{time}]", if passed { "PASS" } else { "FAIL" }, o.detail);
    passed
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn scene(g: &mut ChaCha8Rng, camera: bool, truth: &Pose, rig: &SensorRig, n: usize, sigma: f64) -> MeasurementBatch {
    let placement = PlacementSpec::default();
    if camera {
        synthesize_camera(truth, &rig.camera_extrinsics, &rig.intrinsics, &placement, n, sigma, g)
    } else {
        synthesize_lidar(truth, &rig.lidar_extrinsics, &placement, n, sigma, g)
    }
}

fn lie_suite() -> Outcome {
    let mut g = rng(1001);
    let mut round_trip: f64 = 0.0;
    for _ in 0..1000 {
        let xi = tangent9(&mut g, PI - 0.1);
        round_trip = round_trip.max((se23_log(&se23_exp(&xi)).unwrap() - xi).amax());
    }
    let (mut homo, mut conj): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let x = extended_pose(&mut g);
        let y = extended_pose(&mut g);
        let lhs = (x * y).adjoint();
        homo = homo.max((lhs - x.adjoint() * y.adjoint()).norm() / lhs.norm().max(1.0));
        let v = tangent9(&mut g, 2.0);
        let a = se23_exp(&(x.adjoint() * v)).to_matrix();
        let b = (x * se23_exp(&v) * x.inverse()).to_matrix();
        conj = conj.max((a - b).norm() / b.norm());
    }
    let a = system_matrix(&GRAVITY);
    let nilpotent = a * a * a == Matrix9::zeros();
    let mut min_ratio = f64::INFINITY;
    for _ in 0..50 {
        let y = tangent9(&mut g, 1.0).normalize() * 0.5;
        let dir = tangent9(&mut g, 1.0).normalize();
        let err = |eps: f64| {
            let x = dir * eps;
            let exact = (se23_exp(&x) * se23_exp(&y)).log().unwrap();
            (exact - bch_compose_left_small(&x, &y)).norm()
        };
        min_ratio = min_ratio.min(err(1e-2) / err(5e-3));
    }
    let passed = round_trip < 1e-9 && homo < 1e-10 && conj < 1e-10 && nilpotent && min_ratio >= 3.5;
    outcome(
        passed,
        format!(
            "round trip {round_trip:.1e}, Ad homomorphism {homo:.1e}, conjugation {conj:.1e}, A³ = 0 {nilpotent}, BCH halving ratio ≥ {min_ratio:.2}"
        ),
    )
}

fn jacobian_suite() -> Outcome {
    let mut g = rng(1002);
    let (mut cam, mut lid): (f64, f64) = (0.0, 0.0);
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).norm() / b.norm();
    for _ in 0..100 {
        let mut xi: nalgebra::Vector6<f64> = normal(&mut g, 0.1);
        xi.fixed_rows_mut::<3>(3).scale_mut(2.0);
        let rig = SensorRig { camera_extrinsics: Pose::exp(&xi), lidar_extrinsics: Pose::exp(&(-xi)), ..SensorRig::default() };
        let t = pose(&mut g);
        let MeasurementBatch::Camera(obs) = scene(&mut g, true, &t, &rig, 20, 1.0) else { unreachable!() };
        let ext = rig.camera_extrinsics;
        let h = camera_jacobian(&t, &ext, &rig.intrinsics, &obs).unwrap().columns(0, 6).into_owned();
        let fd = fd_left(&t, |p| camera_residual(p, &ext, &rig.intrinsics, &obs).unwrap());
        cam = cam.max(rel(&(-h), &fd));

        let MeasurementBatch::Lidar(pts) = scene(&mut g, false, &t, &rig, 20, 0.05) else { unreachable!() };
        let ext = rig.lidar_extrinsics;
        let h = lidar_jacobian(&t, &ext, &pts).columns(0, 6).into_owned();
        let fd = fd_left(&t, |p| lidar_residual(p, &ext, &pts));
        lid = lid.max(rel(&h, &fd));
    }
    outcome(cam < 1e-4 && lid < 1e-4, format!("worst relative mismatch camera {cam:.1e}, LiDAR {lid:.1e}"))
}

fn sensor_pose_error(est: &Pose, truth: &Pose) -> f64 {
    (*est * truth.inverse()).log().map_or(f64::INFINITY, |e| e.norm())
}

fn consistency_slopes() -> Outcome {
    let rig = SensorRig::default();
    let mut passed = true;
    let mut parts = Vec::new();
    for camera in [true, false] {
        // Twelve unknowns need at least thirteen point-to-plane rows.
        let ns: [usize; 5] = if camera { [10, 40, 160, 640, 2560] } else { [13, 40, 160, 640, 2560] };
        let sigma = if camera { 1.0 } else { 0.2 };
        let medians: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let errs: Vec<f64> = (0..100)
                    .into_par_iter()
                    .map(|k| {
                        let mut g = trial_rng(1003 + n as u64, k);
                        let truth = pose(&mut g);
                        let b = scene(&mut g, camera, &truth, &rig, n, sigma);
                        consistent_pose(&b, &rig, BiasCorrection::Estimated)
                            .map_or(f64::INFINITY, |c| sensor_pose_error(&c.pose, &truth))
                    })
                    .collect();
                median(errs)
            })
            .collect();
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let slope = loglog_slope(&xs, &medians);
        println!(
            "INFO C3  {} median pose error per n: {}; slope over n ≥ 40 {:.3}",
            if camera { "camera" } else { "LiDAR" },
            medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" / "),
            loglog_slope(&xs[1..], &medians[1..])
        );
        let mut noiseless: f64 = 0.0;
        let mut g = rng(1004);
        for _ in 0..20 {
            let truth = pose(&mut g);
            let b = scene(&mut g, camera, &truth, &rig, 100, 0.0);
            noiseless = noiseless.max(
                consistent_pose(&b, &rig, BiasCorrection::Estimated)
                    .map_or(f64::INFINITY, |c| sensor_pose_error(&c.pose, &truth)),
            );
        }
        passed &= (slope + 0.5).abs() <= 0.15 && noiseless < 1e-7;
        parts.push(format!(
            "{} slope {slope:.3} (n {}..{}), noise-free {noiseless:.1e}",
            if camera { "camera" } else { "LiDAR" },
            ns[0],
            ns[4]
        ));
    }
    outcome(passed, parts.join("; "))
}

fn noise_estimator() -> Outcome {
    let rig = SensorRig::default();
    let mut passed = true;
    let mut parts = Vec::new();
    for (camera, sigma) in [(true, 1.0), (false, 0.2)] {
        let ratios: Vec<f64> = (0..100)
            .into_par_iter()
            .map(|k| {
                let mut g = trial_rng(1005, k);
                let truth = pose(&mut g);
                let b = scene(&mut g, camera, &truth, &rig, 2000, sigma);
                consistent_pose(&b, &rig, BiasCorrection::Estimated).map_or(f64::NAN, |c| c.sigma_hat / sigma)
            })
            .collect();
        let m = median(ratios);
        passed &= (m - 1.0).abs() <= 0.1;
        parts.push(format!("{} median σ̂/σ {m:.4}", if camera { "camera" } else { "LiDAR" }));
    }
    outcome(passed, parts.join(", "))
}

fn one_step_equivalence() -> Outcome {
    let mut g = rng(1006);
    let (mut dm, mut dc): (f64, f64) = (0.0, 0.0);
    for k in 0..100 {
        let lidar = k % 2 == 1;
        let sc = if lidar { ScenarioConfig::lio() } else { ScenarioConfig::vio() };
        let mut cfg = sc.filter_config();
        let truth = extended_pose(&mut g);
        let x_bar = ExtendedPose::exp(&normal::<9>(&mut g, 0.05)) * truth;
        let p: Matrix15 = spd(&mut g, 0.01, 1e-3);
        let belief = BeliefState::new(x_bar, p);
        let sigma = if lidar { cfg.sigma_lidar } else { cfg.sigma_camera };
        let batch = scene(&mut g, !lidar, &truth.pose(), &cfg.rig, 30, sigma);
        let (mean, cov) = kalman_update(&belief, &batch, &cfg.rig, sigma);
        for form in [CostForm::Printed, CostForm::Map] {
            cfg.update.cost = form;
            let (post, _) = iterated_update(&belief, &batch, &x_bar, sigma, 1, &cfg).unwrap();
            dm = dm.max((post.mean * mean.inverse()).log().unwrap().norm());
            dc = dc.max((post.cov - cov).norm() / cov.norm());
        }
    }
    let mut gain: f64 = 0.0;
    for _ in 0..100 {
        let m = g.random_range(1..40);
        let h = DMatrix::<f64>::from_fn(m, 15, |_, _| g.random_range(-10.0..10.0));
        let p = DMatrix::from_column_slice(15, 15, spd::<15>(&mut g, 1.0, 1e-3).as_slice());
        let r = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |_, _| g.random_range(0.1..2.0)));
        let r_inv = r.clone().try_inverse().unwrap();
        let info = &p * (h.transpose() * &r_inv * &h * &p + DMatrix::identity(15, 15)).try_inverse().unwrap()
            * h.transpose()
            * &r_inv;
        let innov = &p * h.transpose() * (&h * &p * h.transpose() + &r).try_inverse().unwrap();
        gain = gain.max((&info - &innov).norm() / innov.norm());
    }
    outcome(
        dm < 1e-12 && dc < 1e-12 && gain < 1e-9,
        format!("mean {dm:.1e}, covariance {dc:.1e} (relative), gain identity {gain:.1e}"),
    )
}

fn fusion_oracle() -> Outcome {
    let mut g = rng(1007);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let prior_mean = extended_pose(&mut g);
        let prior_cov: Matrix9 = spd(&mut g, 0.02, 1e-3);
        let mle = Pose::exp(&normal::<6>(&mut g, 0.1)) * prior_mean.pose();
        let fisher: Matrix6<f64> = spd(&mut g, 200.0, 10.0);
        let problem = FusionProblem { prior_mean, prior_cov, mle, fisher };
        let got = fused_map_with_virtual_pose(&problem).unwrap();
        let oracle = ExtendedPose::exp(&brute_force_fusion(&problem)) * prior_mean;
        worst = worst.max((got * oracle.inverse()).log().unwrap().norm());
    }
    outcome(worst < 1e-6, format!("worst distance to brute-force minimiser {worst:.1e}"))
}

fn eikf_trend() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for camera in [true, false] {
        let sc = if camera { ScenarioConfig::vio() } else { ScenarioConfig::lio() };
        let cfg = sc.filter_config();
        let sigma = if camera { cfg.sigma_camera } else { cfg.sigma_lidar };
        let medians: Vec<f64> = [100usize, 400, 1600]
            .iter()
            .map(|&n| {
                let scaled: Vec<f64> = (0..100)
                    .into_par_iter()
                    .map(|k| {
                        let mut g = trial_rng(1008 + n as u64, k);
                        let truth = extended_pose(&mut g);
                        let init = InitialCondition {
                            mean: truth,
                            std_rot: 0.05,
                            std_pos: 0.2,
                            std_vel: 0.1,
                            std_bias_gyro: 1e-3,
                            std_bias_accel: 1e-3,
                        };
                        let mut belief = init.invariant_belief();
                        let l = belief.nav_cov().cholesky().unwrap().l();
                        belief.mean = ExtendedPose::exp(&(l * normal::<9>(&mut g, 1.0))) * truth;
                        let batch = scene(&mut g, camera, &truth.pose(), &cfg.rig, n, sigma);
                        let (eikf, report) = eikf_update(&belief, &batch, &cfg).unwrap();
                        let mut tight = cfg;
                        tight.update.tolerance = 0.0;
                        tight.update.cost = CostForm::Map;
                        let (op, _) = iterated_update(&belief, &batch, &eikf.mean, report.sigma, 100, &tight).unwrap();
                        (n as f64).sqrt() * (eikf.mean * op.mean.inverse()).log().unwrap().norm()
                    })
                    .collect();
                median(scaled)
            })
            .collect();
        passed &= medians.windows(2).all(|w| w[1] <= w[0]);
        parts.push(format!(
            "{} median √n·gap {:.2e} / {:.2e} / {:.2e}",
            if camera { "camera" } else { "LiDAR" },
            medians[0],
            medians[1],
            medians[2]
        ));
    }
    outcome(passed, parts.join("; "))
}

/// Per-trial RMSE over time of the position error.
fn trial_rmse(trace: &FilterTrace) -> f64 {
    if trace.diverged || trace.position_m.is_empty() {
        return f64::INFINITY;
    }
    (trace.position_m.iter().map(|e| e * e).sum::<f64>() / trace.position_m.len() as f64).sqrt()
}

fn average_rmse(results: &[TrialResult], v: FilterVariant, q: Quantity) -> f64 {
    rmse(results, v, q).map_or(f64::INFINITY, |s| s.average)
}

const COST_FORMS: [CostForm; 2] = [CostForm::Printed, CostForm::Map];

fn with_cost(cfg: &ScenarioConfig, cost: CostForm) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.update.cost = cost;
    c
}

/// Runs a scenario check under each iteration cost form; all must pass.
fn under_each_cost_form(cfg: &ScenarioConfig, check: impl Fn(&ScenarioConfig) -> Outcome) -> Outcome {
    let outs: Vec<(CostForm, Outcome)> = COST_FORMS.iter().map(|&c| (c, check(&with_cost(cfg, c)))).collect();
    outcome(
        outs.iter().all(|(_, o)| o.passed),
        outs.iter().map(|(c, o)| format!("[{c:?} cost] {}", o.detail)).collect::<Vec<_>>().join(" "),
    )
}

fn vio_scenario() -> Outcome {
    under_each_cost_form(&ScenarioConfig { trials: 25, ..ScenarioConfig::vio() }, vio_check)
}

fn vio_check(cfg: &ScenarioConfig) -> Outcome {
    let results = run_scenario(cfg).unwrap();
    let mut passed = true;
    let mut parts = Vec::new();
    for &v in &cfg.filters {
        let converged = results
            .iter()
            .filter(|r| r.trace(v).and_then(FilterTrace::final_position_error).is_some_and(|e| e < r.initial_position_error))
            .count();
        passed &= converged as f64 >= 0.95 * results.len() as f64;
        parts.push(format!("{v} converged {converged}/{}", results.len()));
    }
    let med = |v| median(results.iter().map(|r| r.trace(v).map_or(f64::INFINITY, trial_rmse)).collect());
    let (c, i) = (med(FilterVariant::EikfC), med(FilterVariant::InEkf));
    passed &= c <= i;
    parts.push(format!("median position RMSE EIKF-C {c:.5} m vs InEKF {i:.5} m"));
    outcome(passed, parts.join(", "))
}

fn landmark_sweep() -> Outcome {
    let cfg = ScenarioConfig {
        trials: 25,
        filters: vec![FilterVariant::Ekf, FilterVariant::Iekf, FilterVariant::InEkf, FilterVariant::EikfC],
        sweep: SweepSpec { axis: SweepAxis::Landmarks, values: vec![100.0, 200.0, 400.0] },
        ..ScenarioConfig::vio()
    };
    under_each_cost_form(&cfg, sweep_check)
}

fn sweep_check(cfg: &ScenarioConfig) -> Outcome {
    let filters = &cfg.filters;
    let groups = run_sweep(cfg).unwrap();
    let mut passed = true;
    let mut parts = Vec::new();
    let mut own = Vec::new();
    for (n, results) in &groups {
        let c = average_rmse(results, FilterVariant::EikfC, Quantity::PositionM);
        own.push(c);
        let others: Vec<f64> = filters[..3].iter().map(|&v| average_rmse(results, v, Quantity::PositionM)).collect();
        passed &= others.iter().all(|&o| c <= o);
        parts.push(format!(
            "n={n}: EIKF-C {c:.5} vs EKF {:.5} IEKF {:.5} InEKF {:.5}",
            others[0], others[1], others[2]
        ));
    }
    let inversions: Vec<f64> = own.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] / w[0] - 1.0).collect();
    passed &= inversions.len() <= 1 && inversions.iter().all(|&r| r <= 0.1);
    parts.push(format!("{} inversion(s)", inversions.len()));
    outcome(passed, parts.join("; "))
}

fn lio_scenario() -> Outcome {
    under_each_cost_form(&ScenarioConfig { trials: 25, ..ScenarioConfig::lio() }, lio_check)
}

fn lio_check(cfg: &ScenarioConfig) -> Outcome {
    let results = run_scenario(cfg).unwrap();
    let mut passed = true;
    let mut parts = Vec::new();
    for q in [Quantity::PositionM, Quantity::OrientationDeg] {
        let [c, i, iekf] = [FilterVariant::EikfC, FilterVariant::EikfI, FilterVariant::Iekf].map(|v| average_rmse(&results, v, q));
        passed &= c <= iekf && i <= iekf;
        parts.push(format!("{}: EIKF-C {c:.6}, EIKF-I {i:.6}, IEKF {iekf:.6}", q.label()));
    }
    outcome(passed, parts.join("; "))
}

fn update_scaling() -> Outcome {
    let cfg = BenchConfig::default();
    let rows = bench_update(&cfg).unwrap();
    let e = fitted_exponent(&rows, FilterVariant::EikfC);
    let ms: Vec<String> = rows
        .iter()
        .filter(|r| r.variant == FilterVariant::EikfC)
        .map(|r| format!("{:.2}", r.median_ms))
        .collect();
    outcome((0.8..=1.2).contains(&e), format!("EIKF-C exponent {e:.3} (median ms {})", ms.join(" / ")))
}

fn sqrt_psd(m: &Matrix9) -> Matrix9 {
    let eig = SymmetricEigen::new(*m);
    eig.eigenvectors * Matrix9::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
}

fn fourth_order_propagation() -> Outcome {
    let dt = 0.01;
    let params = NoiseParams::default();
    let phi = state_transition(dt, &GRAVITY);
    let mut wins = 0;
    let mut exact_wins = 0;
    let mut cases = 0;
    let mut closest = f64::INFINITY;
    for std_th in [0.1, 0.2, 0.3] {
        for seed in 0..5u64 {
            let mut g = rng(1012 + seed);
            let a = DMatrix::<f64>::from_fn(9, 9, |_, _| g.sample(rand_distr::StandardNormal));
            let mut p = Matrix9::from_iterator((&a * a.transpose() * 0.002).iter().cloned());
            for k in 0..3 {
                p[(k, k)] += std_th * std_th;
            }
            let mut belief = BeliefState::new(extended_pose(&mut g), Matrix15::zeros());
            belief.cov.fixed_view_mut::<9, 9>(0, 0).copy_from(&p);
            let sn = noise_sigma_nprime(&belief, &params);
            let transported = phi * p * phi.transpose();
            let increment = |order| {
                let out = propagate_covariance_with(&belief, dt, &params, &GRAVITY, order, BiasModel::Noise);
                out.fixed_view::<9, 9>(0, 0).into_owned() - transported
            };
            let (inc1, inc4) = (increment(PropagationOrder::First), increment(PropagationOrder::Fourth));

            let (lp, ls) = (sqrt_psd(&p), sqrt_psd(&sn));
            let samples = 100_000;
            let (mut series, mut exact) = (Matrix9::zeros(), Matrix9::zeros());
            for _ in 0..samples {
                let xi = lp * normal::<9>(&mut g, 1.0);
                let w = ls * normal::<9>(&mut g, 1.0);
                let ad = little_ad(&xi);
                let m = (Matrix9::identity() - 0.5 * ad + ad * ad / 6.0) * w;
                series += m * m.transpose();
                let m = se23_left_jacobian_inv(&xi) * w;
                exact += m * m.transpose();
            }
            let mc = discrete_process_noise(dt, &(series / samples as f64), &GRAVITY);
            let (d1, d4) = ((inc1 - mc).norm(), (inc4 - mc).norm());
            if d4 < d1 {
                wins += 1;
            }
            closest = closest.min(d1 / d4);
            let mc = discrete_process_noise(dt, &(exact / samples as f64), &GRAVITY);
            if (inc4 - mc).norm() < (inc1 - mc).norm() {
                exact_wins += 1;
            }
            cases += 1;
        }
    }
    println!("INFO C12 against the closed-form dexp⁻¹ sampling oracle the fourth-order increment is closer in {exact_wins}/{cases} cases");
    outcome(
        wins == cases,
        format!("fourth order closer to the 10⁵-sample covariance in {wins}/{cases} cases (smallest 1st/4th distance ratio {closest:.2})"),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        run(1, "Lie-algebra suite", secs(10), lie_suite),
        run(2, "Jacobian suite", secs(30), jacobian_suite),
        run(3, "consistency slopes", secs(300), consistency_slopes),
        run(4, "noise-variance estimator", secs(60), noise_estimator),
        run(5, "one-step equivalence and gain identity", secs(60), one_step_equivalence),
        run(6, "fusion oracle", secs(120), fusion_oracle),
        run(7, "consistent-start one-step gap", secs(300), eikf_trend),
        run(8, "VIO scenario", secs(600), vio_scenario),
        run(9, "landmark sweep", secs(900), landmark_sweep),
        run(10, "LIO scenario", secs(600), lio_scenario),
        run(11, "linear update cost", secs(300), update_scaling),
        run(12, "fourth-order covariance propagation", secs(120), fourth_order_propagation),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
