//! Acceptance criteria A1 to A10.
//!
//! Runs without the test harness so the criteria run one after another,
//! undisturbed by parallel tests, and their report is always printed. Each
//! criterion prints one `PASS` or `FAIL` line; the process exits nonzero if
//! any criterion fails. Set `NFPS_ACCEPTANCE=A3,A6` to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use nfps::commands::{generate_dataset, reconstruct, render_synthetic, train_network, CHECKPOINT_FILE, DATASET_FILE};
use nfps::config::{ModelName, PredictorKind, RunConfig};
use nfps_core::datagen::{generate_examples, sample_example, DatagenConfig, MaterialRanges};
use nfps_core::geometry::{depth_to_normals, viewing_direction, CameraIntrinsics, DepthMap};
use nfps_core::integrate::{integrate, normals_to_log_gradients, IntegratorConfig};
use nfps_core::lighting::{attenuation, light_vector, make_ring_rig, LightRig, PointLight};
use nfps_core::obsmap::ObservationMap;
use nfps_core::pipeline::{
    naive_farfield_reconstruct, reconstruct as reconstruct_scene, GroundTruth, Metrics, ReconstructionConfig,
    EVAL_EROSION_PX,
};
use nfps_core::predict::{gradient_check, train, Architecture, LambertianLs, TinyNet, TrainConfig};
use nfps_core::reflectance::{brdf_eval, render_pixel, render_scene, BrdfModel, SurfaceSample};
use nfps_core::scene::{BumpsShape, MaterialPreset, ParaboloidShape, SceneGeometry, Shape};
use nfps_core::{item_rng, Grid, Image, Vec3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------------------
// Independent reference evaluations on plain arrays.

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    scale(a, 1.0 / dot(a, a).sqrt())
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Double-double number `hi + lo`, used so that the reference stays exact
/// near the edge of a light's lobe where plain `f64` cancels.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

fn quick_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

fn knuth_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let v = s - a;
    Dd(s, (a - (s - v)) + (b - v))
}

fn split(a: f64) -> (f64, f64) {
    let t = 134_217_729.0 * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

fn dekker_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    Dd(p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = knuth_sum(self.0, o.0);
        quick_sum(s.0, s.1 + self.1 + o.1)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = dekker_prod(self.0, o.0);
        quick_sum(p.0, p.1 + self.0 * o.1 + self.1 * o.0)
    }

    fn div(self, o: Dd) -> Dd {
        let q = self.0 / o.0;
        let r = self.add(o.mul(Dd(-q, 0.0)));
        quick_sum(q, r.0 / o.0)
    }

    fn sqrt(self) -> Dd {
        let s = self.0.sqrt();
        let r = self.add(dekker_prod(s, -s));
        quick_sum(s, r.0 / (2.0 * s))
    }
}

/// Radiant intensity of an LED with a `cos^mu` lobe around its principal
/// direction, divided by the squared distance to the point.
fn oracle_attenuation(pos: [f64; 3], dir: [f64; 3], phi: f64, mu: f64, x: [f64; 3]) -> f64 {
    let d: Vec<Dd> = (0..3).map(|i| knuth_sum(x[i], -pos[i])).collect();
    let mut d2 = Dd(0.0, 0.0);
    let mut along = Dd(0.0, 0.0);
    for i in 0..3 {
        d2 = d2.add(d[i].mul(d[i]));
        along = along.add(d[i].mul(Dd(dir[i], 0.0)));
    }
    let cos = along.div(d2.sqrt()).0;
    let lobe = if mu == 0.0 {
        1.0
    } else if cos <= 0.0 {
        0.0
    } else {
        cos.powf(mu)
    };
    phi * lobe / d2.0
}

fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn random_unit_toward_z(rng: &mut impl Rng, max_angle: f64) -> [f64; 3] {
    let t: f64 = rng.random_range(0.0..max_angle);
    let p: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
}

// ---------------------------------------------------------------------------
// Scenes.

struct Scene {
    cam: CameraIntrinsics,
    rig: LightRig,
    geometry: SceneGeometry,
    images: Vec<Image>,
    gt: GroundTruth,
    mean_depth: f64,
}

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::centered(240.0, 128, 128).unwrap()
}

fn ring() -> LightRig {
    make_ring_rig(15, 0.065, 1.0, 0.0).unwrap()
}

fn sphere() -> Shape {
    Shape::sphere_at(0.12, 0.03)
}

fn scene(shape: &Shape, preset: MaterialPreset, rig: LightRig) -> Scene {
    let cam = camera();
    let geometry = shape.render_geometry(&cam).unwrap();
    let materials = Grid::filled(cam.width, cam.height, preset.material(1));
    let images = render_scene(&geometry.depth, &geometry.normals, &materials, &rig, &cam)
        .unwrap()
        .images;
    let gt = GroundTruth::new(geometry.depth.clone(), geometry.normals.clone(), EVAL_EROSION_PX).unwrap();
    let mean_depth = geometry.depth.mean().unwrap();
    Scene {
        cam,
        rig,
        geometry,
        images,
        gt,
        mean_depth,
    }
}

fn recon_config(init_depth: f64, iterations: usize) -> ReconstructionConfig {
    ReconstructionConfig {
        init_depth,
        iterations,
        ..ReconstructionConfig::default()
    }
}

/// Metrics of both iterations, flat plane at the true mean depth.
fn adapted(s: &Scene) -> Vec<Metrics> {
    let mask = &s.geometry.depth.mask;
    let cfg = recon_config(s.mean_depth, 2);
    reconstruct_scene(&s.images, &s.rig, &s.cam, mask, &LambertianLs, &cfg, Some(&s.gt))
        .unwrap()
        .iterations
        .iter()
        .map(|it| it.metrics.unwrap())
        .collect()
}

fn naive(s: &Scene) -> Metrics {
    let mask = &s.geometry.depth.mask;
    let cfg = recon_config(s.mean_depth, 1);
    naive_farfield_reconstruct(&s.images, &s.rig, &s.cam, mask, &LambertianLs, &cfg, Some(&s.gt))
        .unwrap()
        .last()
        .metrics
        .unwrap()
}

// ---------------------------------------------------------------------------
// Criteria.

fn a1() -> Outcome {
    let start = Instant::now();
    let mut rng = item_rng(101, 0);
    let mut worst: f64 = 0.0;
    let mut zeros = 0;
    for _ in 0..10_000 {
        let pos = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.02..0.02)];
        let dir = random_unit_toward_z(&mut rng, 1.2);
        let phi = rng.random_range(0.1..10.0);
        let mu = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..4.0) };
        let x = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.05..0.3)];
        let light = PointLight::new(Vec3::from(pos), Vec3::from(dir), phi, mu).unwrap();
        let got = attenuation(&light, &Vec3::from(x)).unwrap();
        let want = oracle_attenuation(pos, dir, phi, mu, x);
        if want == 0.0 {
            zeros += 1;
        }
        worst = worst.max(rel_err(got, want));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 1.0,
        format!("max relative error {worst:.2e} over 10000 cases ({zeros} outside the lobe), {secs:.3} s"),
    )
}

fn a2() -> Outcome {
    let start = Instant::now();
    let mut rng = item_rng(102, 0);
    let ranges = MaterialRanges::default();
    let (mut worst, mut samples, mut shadowed): (f64, usize, usize) = (0.0, 0, 0);
    while samples < 10_000 {
        let lights: Vec<PointLight> = (0..3)
            .map(|_| {
                let pos = Vec3::new(rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08), 0.0);
                let dir = Vec3::from(random_unit_toward_z(&mut rng, 0.3));
                PointLight::new(pos, dir, rng.random_range(0.5..2.0), rng.random_range(0.0..2.0)).unwrap()
            })
            .collect();
        let rig = LightRig::new(lights).unwrap();
        let x = [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.1..0.2)];
        let v = unit(scale(x, -1.0));
        // Normal within 80 degrees of the viewing direction.
        let n = loop {
            let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            if dot(c, c) > 1e-6 && dot(c, c) <= 1.0 && dot(unit(c), v) > 0.17 {
                break unit(c);
            }
        };
        let v_hat = viewing_direction(&Vec3::from(x)).unwrap();
        let material = ranges.sample(if rng.random_bool(0.5) { 1 } else { 3 }, &mut rng);
        let sample = SurfaceSample {
            x: Vec3::from(x),
            n: Vec3::from(n),
            material,
        };
        let rendered = render_pixel(&sample, &rig).unwrap();
        for (light, i) in rig.lights().iter().zip(rendered) {
            let p = arr(&light.position);
            let a = oracle_attenuation(p, arr(&light.principal_dir), light.brightness, light.mu, x);
            let (_, l_hat) = light_vector(light, &Vec3::from(x)).unwrap();
            let j = nfps_core::obsmap::compensate_attenuation(i, a, 0.0).expect("lit by construction");
            let b = brdf_eval(&Vec3::from(n), &l_hat, &v_hat, &material);
            if b.max_channel() == 0.0 {
                shadowed += 1;
            }
            for (got, want) in j.as_slice().iter().zip(b.as_slice()) {
                worst = worst.max(rel_err(*got, *want));
            }
            samples += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 1.0,
        format!("max relative error {worst:.2e} over {samples} samples ({shadowed} in attached shadow), {secs:.3} s"),
    )
}

fn a3() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let s = scene(&sphere(), MaterialPreset::Lambertian, ring());
    let start = Instant::now();
    let m = pool.install(|| adapted(&s));
    let secs = start.elapsed().as_secs_f64();
    let last = m[1];
    outcome(
        last.mae_nfcnn < 3.0 && last.mae_nfs < 5.0 && last.mean_depth_error_mm < 2.0 && secs < 60.0,
        format!(
            "iteration 2: NfCNN {:.3} deg, NfS {:.3} deg, depth {:.3} mm; {secs:.1} s on one thread",
            last.mae_nfcnn, last.mae_nfs, last.mean_depth_error_mm
        ),
    )
}

fn a4() -> Outcome {
    let cam = camera();
    let geo = Shape::Paraboloid(ParaboloidShape::default()).render_geometry(&cam).unwrap();
    let gt = GroundTruth::new(geo.depth.clone(), geo.normals.clone(), EVAL_EROSION_PX).unwrap();
    let start = Instant::now();
    let grads = normals_to_log_gradients(&geo.normals, &cam);
    let prior = DepthMap::plane(&geo.depth.mask, geo.depth.mean().unwrap()).unwrap();
    let result = integrate(&grads, &prior, &IntegratorConfig::default()).unwrap();
    let nfs = depth_to_normals(&result.depth, &cam).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let m = gt.score(&geo.normals, &result.depth, &nfs).unwrap();
    outcome(
        m.mae_nfs < 1.5 && m.mean_depth_error_mm < 0.5 && secs < 30.0,
        format!(
            "re-differentiated MAE {:.3} deg, depth error {:.3} mm, converged {}, {secs:.1} s",
            m.mae_nfs, m.mean_depth_error_mm, result.converged
        ),
    )
}

fn a5_datagen(count: usize, seed: u64) -> DatagenConfig {
    let mut cfg = DatagenConfig::new(ring(), camera());
    cfg.materials.models = vec![BrdfModel::Lambertian, BrdfModel::BlinnPhong];
    cfg.count = count;
    cfg.seed = seed;
    cfg
}

fn a5() -> Outcome {
    let start = Instant::now();
    let train_cfg = a5_datagen(200_000, 5);
    assert_eq!(train_cfg.depth_sigma, 0.004);
    assert!(train_cfg.aug.cast_shadow_prob > 0.0 && train_cfg.aug.noise_sigma > 0.0);
    let data = generate_examples(&train_cfg, |_| {}).unwrap();
    let test = generate_examples(&a5_datagen(10_000, 50_005), |_| {}).unwrap();
    let gen_secs = start.elapsed().as_secs_f64();
    let arch = Architecture::new(data.map_size(), data.channels()).unwrap();
    let mut net = TinyNet::<f32>::new(arch, 5);
    let cfg = TrainConfig {
        epochs: 1,
        seed: 5,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &data, &cfg, |_, _| {}).unwrap();
    drop(data);
    let mut input = vec![0f32; arch.input_len()];
    let mut errors: Vec<f64> = (0..test.len())
        .map(|i| {
            test.write_input(i, &mut input);
            let p = net.predict_input(&input).unwrap();
            let l = test.label::<f32>(i);
            let c = (p[0] as f64 * l[0] as f64 + p[1] as f64 * l[1] as f64 + p[2] as f64 * l[2] as f64).clamp(-1.0, 1.0);
            c.acos().to_degrees()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let median = (errors[4_999] + errors[5_000]) / 2.0;
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        median < 10.0 && secs < 7200.0,
        format!(
            "held-out median {median:.2} deg (mean {mean:.2}) after {} epoch(s), final loss {:.4}; data {gen_secs:.0} s, total {secs:.0} s",
            report.epochs.len(),
            report.losses().last().unwrap()
        ),
    )
}

fn a6() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, preset) in [("lambertian", MaterialPreset::Lambertian), ("blinn-phong", MaterialPreset::DielectricSpecular)] {
        let s = scene(&sphere(), preset, ring());
        let ad = adapted(&s)[1].mae_nfcnn;
        let nv = naive(&s).mae_nfcnn;
        pass &= nv - ad >= 3.0;
        lines.push(format!("{name} sphere naive {nv:.2} vs adapted {ad:.2} deg"));
    }
    let far = ring().moved_away(&Vec3::new(0.0, 0.0, 0.15), 100.0);
    let s = scene(&sphere(), MaterialPreset::Lambertian, far);
    let ad = adapted(&s)[1].mae_nfcnn;
    let nv = naive(&s).mae_nfcnn;
    pass &= (nv - ad).abs() < 1.0;
    lines.push(format!("far-field limit naive {nv:.2} vs adapted {ad:.2} deg"));
    outcome(pass, lines.join("; "))
}

fn a7() -> Outcome {
    let shapes = [
        ("sphere", sphere()),
        ("paraboloid", Shape::Paraboloid(ParaboloidShape::default())),
        ("bumps", Shape::Bumps(BumpsShape::default())),
    ];
    let mut worst = f64::NEG_INFINITY;
    let mut lines = Vec::new();
    for (name, shape) in &shapes {
        for preset in MaterialPreset::ALL {
            let m = adapted(&scene(shape, preset, ring()));
            let change = m[1].mae_nfcnn - m[0].mae_nfcnn;
            worst = worst.max(change);
            lines.push(format!("{name}/{} {:.2}->{:.2}", preset.name(), m[0].mae_nfcnn, m[1].mae_nfcnn));
        }
    }
    outcome(
        worst <= 0.1,
        format!("largest increase {worst:+.3} deg over 12 scenes: {}", lines.join(", ")),
    )
}

fn a8() -> Outcome {
    let cfg = DatagenConfig::new(ring(), camera());
    let mut draws = Vec::with_capacity(100_000);
    let mut k = 0u64;
    while draws.len() < 100_000 {
        let mut rng = item_rng(8, k);
        if let Some(e) = sample_example(&cfg, &mut rng).unwrap() {
            draws.push(e.delta_z);
        }
        k += 1;
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let std = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mm = std * 1000.0;
    outcome(
        (mm - 4.0).abs() <= 0.1,
        format!("std {mm:.4} mm, mean {:.4} mm over 100000 draws", mean * 1000.0),
    )
}

fn a9() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    let mut checked = 0;
    for seed in 0..10u64 {
        let mut rng = item_rng(9, seed);
        let arch = Architecture::new(8, if seed % 2 == 0 { 1 } else { 3 }).unwrap();
        let net = TinyNet::<f64>::new(arch, 1000 + seed);
        let grid: Vec<f64> = (0..64 * arch.channels)
            .map(|_| if rng.random_bool(0.3) { rng.random_range(0.0..1.0) } else { 0.0 })
            .collect();
        let view = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let map = ObservationMap::from_parts(8, arch.channels, grid, view).unwrap();
        let label = Vec3::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7), -1.0).normalize();
        let check = gradient_check(&net, &map, &label).unwrap();
        worst = worst.max(check.max_rel_deviation);
        skipped += check.skipped_kinks;
        checked += check.checked;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-5 && secs < 30.0,
        format!("max relative deviation {worst:.2e} over 10 nets ({checked} parameters, {skipped} at kinks skipped), {secs:.1} s"),
    )
}

fn a10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut cfg = RunConfig::default();
    cfg.seed = 10;
    cfg.datagen.count = 3_000;
    cfg.datagen.models = vec![ModelName::Lambertian, ModelName::BlinnPhong];
    cfg.train.epochs = 1;

    let run = |name: &str, threads: usize| -> (Vec<u8>, Vec<u8>) {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let data_dir = root.join(format!("data_{name}"));
            generate_dataset(&cfg, &data_dir).unwrap();
            let mut tcfg = cfg.clone();
            tcfg.train.dataset = Some(data_dir.join(DATASET_FILE));
            let net_dir = root.join(format!("net_{name}"));
            train_network(&tcfg, &net_dir).unwrap();
            (
                std::fs::read(data_dir.join(DATASET_FILE)).unwrap(),
                std::fs::read(net_dir.join(CHECKPOINT_FILE)).unwrap(),
            )
        })
    };
    let a = run("a", 1);
    let b = run("b", 1);
    let c = run("c", 3);
    let same_data = a.0 == b.0 && a.0 == c.0;
    let same_net = a.1 == b.1 && a.1 == c.1;

    let mut scene_cfg = RunConfig::default();
    scene_cfg.camera.width = 64;
    scene_cfg.camera.height = 64;
    scene_cfg.camera.focal_px = 120.0;
    render_synthetic(&scene_cfg, &root.join("scene")).unwrap();
    let recon = |name: &str, predictor: PredictorKind| -> Vec<Vec<u8>> {
        let mut rcfg = scene_cfg.clone();
        rcfg.reconstruct.input = Some(root.join("scene"));
        rcfg.reconstruct.predictor = predictor;
        rcfg.reconstruct.checkpoint = Some(root.join("net_a").join(CHECKPOINT_FILE));
        let out = root.join(name);
        reconstruct(&rcfg, &out).unwrap();
        ["depth.pfm", "normals.pfm", "nfs_normals.pfm", "metrics.csv"]
            .iter()
            .map(|f| std::fs::read(Path::new(&out).join(f)).unwrap())
            .collect()
    };
    let same_ls = recon("ls_a", PredictorKind::LambertianLs) == recon("ls_b", PredictorKind::LambertianLs);
    let same_nn = recon("nn_a", PredictorKind::Net) == recon("nn_b", PredictorKind::Net);
    outcome(
        same_data && same_net && same_ls && same_nn,
        format!(
            "dataset identical {same_data} ({} bytes), checkpoint identical {same_net}, reconstruction identical {} (least squares) / {} (network)",
            a.0.len(),
            same_ls,
            same_nn
        ),
    )
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("A1", "attenuation oracle", a1),
        ("A2", "render then compensate", a2),
        ("A3", "classical loop on a sphere", a3),
        ("A4", "integration round trip", a4),
        ("A5", "learned predictor", a5),
        ("A6", "naive versus adapted", a6),
        ("A7", "iteration monotonicity", a7),
        ("A8", "depth perturbation spread", a8),
        ("A9", "gradient check", a9),
        ("A10", "determinism", a10),
    ];
    let only = std::env::var("NFPS_ACCEPTANCE").ok();
    let selected = |id: &str| only.as_deref().is_none_or(|o| o.split(',').any(|s| s.trim() == id));
    let mut failed = Vec::new();
    for (id, title, f) in criteria {
        if !selected(id) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("{id:<4} {verdict}  {title}: {}", result.detail);
        if !result.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
