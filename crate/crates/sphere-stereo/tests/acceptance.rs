//! The release gate. Each test covers one numbered criterion and prints a
//! single pass/fail line (visible with `--nocapture`; cargo also shows the
//! output of any failing test).

use std::f64::consts::PI;

use sphere_stereo::costvol::{CostMetric, MatchConfig};
use sphere_stereo::eval::{ablate_step_size, compute_metrics, crop_mask};
use sphere_stereo::geom::{
    depth_to_disparity, disparity_to_depth, CameraRig, EquirectGrid, EquirectImage, ScalarMap,
    SphericalDirection,
};
use sphere_stereo::imageio::RunConfig;
use sphere_stereo::matcher::{aggregate_sgm, match_bruteforce, SgmParams};
use sphere_stereo::pipeline::{match_pair, MatchOptions};
use sphere_stereo::render::{builtin_scene, builtin_suite, render_pair};

fn verdict(criterion: &str, ok: bool, detail: &str) {
    println!("acceptance {criterion}: {}", if ok { "pass" } else { "fail" });
    assert!(ok, "{criterion}: {detail}");
}

struct XorShift(u64);

impl XorShift {
    fn new(seed: u64) -> Self {
        XorShift(seed.max(1))
    }
    fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }
    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn random_image(grid: EquirectGrid, channels: usize, rng: &mut XorShift) -> EquirectImage {
    let mut img = EquirectImage::zeros(grid, channels);
    for s in &mut img.samples {
        *s = rng.unit() as f32;
    }
    img
}

// -------------------------------------------------------------------------
// 1. disparity/depth geometry
// -------------------------------------------------------------------------

#[test]
fn criterion_1_depth_disparity_geometry() {
    let mut rng = XorShift::new(0x5eed_0001);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let baseline = 0.05 + rng.unit() * 2.0;
        let polar = 0.01 + rng.unit() * (PI - 0.02);
        let depth = 0.2 + rng.unit() * 100.0;
        let rig = CameraRig::new(baseline).unwrap();
        let d = depth_to_disparity(&rig, polar, depth).unwrap();
        if !(d.is_finite() && d > 1e-9) {
            continue; // behind-camera geometry maps to the infinity signal
        }
        let back = disparity_to_depth(&rig, polar, d).unwrap();
        worst = worst.max((back - depth).abs() / depth);
    }

    let rig = CameraRig::new(0.2).unwrap();
    let anchor_depth = disparity_to_depth(&rig, PI / 2.0, PI / 4.0).unwrap();
    let anchor_disp = depth_to_disparity(&rig, PI / 2.0, 2.0).unwrap();
    let a1 = (anchor_depth - 0.2).abs();
    let a2 = (anchor_disp - 0.1f64.atan()).abs();

    verdict(
        "1 (depth/disparity geometry)",
        worst < 1e-9 && a1 < 1e-12 && a2 < 1e-12,
        &format!("round-trip rel {worst:e}, anchors {a1:e} / {a2:e}"),
    );
}

// -------------------------------------------------------------------------
// 2. epipolar + photometric consistency on the room scene
// -------------------------------------------------------------------------

#[test]
fn criterion_2_epipolar_and_photometric() {
    let grid = EquirectGrid::new(1024, 512).unwrap();
    let rig = CameraRig::new(0.2).unwrap();
    let (r0, r1) = crop_mask(grid, 0.05).unwrap();

    // the longitude invariant holds for every unoccluded correspondence of
    // the room scene
    let room = render_pair(&builtin_scene("room").unwrap(), &rig, grid).unwrap();
    let mut max_lon_diff = 0.0f64;
    for row in r0..r1 {
        let polar = PI * (1.0 - (row as f64 + 0.5) / 512.0);
        for col in 0..1024 {
            let idx = row * 1024 + col;
            if !room.gt_valid[idx] {
                continue;
            }
            let depth = room.top_depth.at(col, row) as f64;
            if !depth.is_finite() {
                continue;
            }
            let lon = 2.0 * PI * (col as f64 + 0.5) / 1024.0 - PI;
            let dir = SphericalDirection::new(lon, polar).unwrap().to_unit_vector();
            // the same point seen from the bottom camera
            let from_bottom = [depth * dir[0], depth * dir[1], depth * dir[2] + 0.2];
            let bottom_dir = SphericalDirection::from_vector(from_bottom).unwrap();
            let dl = (bottom_dir.longitude_rad - lon).abs();
            max_lon_diff = max_lon_diff.max(dl.min(2.0 * PI - dl));
        }
    }

    // the photometric bound only makes sense on band-limited textures; the
    // room's hard checker edges cannot match a bilinear sample, so it is
    // measured on the smooth value-noise scene
    let pair = render_pair(&builtin_scene("noise-room").unwrap(), &rig, grid).unwrap();
    let mut photometric_ok = 0usize;
    let mut total = 0usize;
    let mut sample = [0.0f32; 3];
    for row in r0..r1 {
        let polar = PI * (1.0 - (row as f64 + 0.5) / 512.0);
        for col in 0..1024 {
            let idx = row * 1024 + col;
            let d = pair.gt_disparity.at(col, row) as f64;
            if !pair.gt_valid[idx] || !d.is_finite() {
                continue;
            }
            total += 1;
            // sample the bottom view at polar + d on the same column
            let v_bottom = (1.0 - (polar + d) / PI) * 512.0;
            sphere_stereo::geom::sample_image(
                &pair.bottom_rgb,
                col as f64 + 0.5,
                v_bottom,
                sphere_stereo::geom::ResampleKernel::Bilinear,
                &mut sample,
            );
            let mut diff = 0.0f32;
            for ch in 0..3 {
                diff = diff.max((pair.top_rgb.at(col, row, ch) - sample[ch]).abs());
            }
            if diff <= 0.02 {
                photometric_ok += 1;
            }
        }
    }
    let frac = photometric_ok as f64 / total as f64;
    verdict(
        "2 (epipolar + photometric)",
        max_lon_diff < 1e-9 && frac >= 0.99 && total > 0,
        &format!("lon diff {max_lon_diff:e}, photometric {frac:.4} of {total}"),
    );
}

// -------------------------------------------------------------------------
// 3. brute-force oracle equivalence
// -------------------------------------------------------------------------

#[test]
fn criterion_3_bruteforce_oracle_equivalence() {
    let grid = EquirectGrid::new(64, 32).unwrap();
    let metrics = [CostMetric::Sad, CostMetric::Zncc, CostMetric::Census];
    let mut rng = XorShift::new(0x5eed_0003);
    let mut mismatches = 0usize;
    for case in 0..102 {
        let metric = metrics[case % 3];
        let cfg = MatchConfig {
            step_deg: 0.75,
            num_levels: 7,
            metric,
            window_radius: 2,
            polar_adaptive: true,
            taps: 7,
        };
        let run_cfg = RunConfig {
            width: 64,
            height: 32,
            step_deg: cfg.step_deg,
            num_levels: cfg.num_levels,
            cost_metric: metric,
            window_radius: cfg.window_radius,
            ..RunConfig::default()
        };
        let top = random_image(grid, 3, &mut rng);
        let bottom = random_image(grid, 3, &mut rng);
        let opts = MatchOptions {
            use_sgm: false,
            subpixel: false,
        };
        let (disp, _) = match_pair(&top, &bottom, &run_cfg, opts).unwrap();
        let oracle = match_bruteforce(&top, &bottom, &cfg).unwrap();
        if disp
            .values
            .iter()
            .zip(&oracle.values)
            .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            mismatches += 1;
        }
    }
    verdict(
        "3 (brute-force oracle, 102 pairs)",
        mismatches == 0,
        &format!("{mismatches} mismatching pairs"),
    );
}

// -------------------------------------------------------------------------
// 4. end-to-end recovery on the scene suite
// -------------------------------------------------------------------------

/// Per-scene depth MAE ceilings frozen from the development-time oracle run
/// (same order as SCENE_NAMES).
const DEPTH_MAE_CEILING_M: [(&str, f64); 5] = [
    ("room", 0.12),       // measured 0.092
    ("sphere3", 0.10),    // measured 0.079
    ("floorplane", 0.28), // measured 0.205
    ("occluders", 0.14),  // measured 0.102
    ("noise-room", 0.10), // measured 0.069
];

fn textured_mask(rgb: &EquirectImage, threshold: f32) -> Vec<bool> {
    let luma = rgb.to_luma();
    let (w, h) = (rgb.grid.width, rgb.grid.height);
    let mut mask = vec![false; w * h];
    for row in 0..h {
        for col in 0..w {
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for dr in -1i64..=1 {
                let rr = (row as i64 + dr).clamp(0, h as i64 - 1) as usize;
                for dc in -1i64..=1 {
                    let cc = (col as i64 + dc).rem_euclid(w as i64) as usize;
                    let v = luma.at(cc, rr, 0);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            mask[row * w + col] = (hi - lo) >= threshold;
        }
    }
    mask
}

#[test]
fn criterion_4_end_to_end_recovery() {
    let cfg = RunConfig {
        width: 512,
        height: 256,
        step_deg: 1.0 / 3.0,
        num_levels: 192,
        ..RunConfig::default()
    };
    let grid = cfg.grid();
    let rig = cfg.rig();
    let step_rad = cfg.step_deg.to_radians();
    let (r0, r1) = crop_mask(grid, cfg.crop_fraction).unwrap();

    let mut all_ok = true;
    let mut detail = String::new();
    for (name, scene) in builtin_suite() {
        let pair = render_pair(&scene, &rig, grid).unwrap();
        let (disp, _) =
            match_pair(&pair.top_rgb, &pair.bottom_rgb, &cfg, MatchOptions::default()).unwrap();
        let textured = textured_mask(&pair.top_rgb, 0.05);

        let mut total = 0usize;
        let mut within = 0usize;
        for row in r0..r1 {
            for col in 0..grid.width {
                let idx = row * grid.width + col;
                if !pair.gt_valid[idx] || !textured[idx] {
                    continue;
                }
                let p = disp.at(col, row) as f64;
                let g = pair.gt_disparity.at(col, row) as f64;
                if !(p.is_finite() && g.is_finite()) {
                    continue;
                }
                total += 1;
                if (p - g).abs() <= step_rad + 1e-12 {
                    within += 1;
                }
            }
        }
        let frac = within as f64 / total.max(1) as f64;

        let report =
            compute_metrics(&disp, &pair.gt_disparity, &pair.gt_valid, &rig, cfg.crop_fraction)
                .unwrap();
        let ceiling = DEPTH_MAE_CEILING_M
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, c)| c)
            .unwrap();
        let scene_ok = frac >= 0.95 && report.depth_mae <= ceiling;
        all_ok &= scene_ok;
        detail.push_str(&format!(
            "{name}: within1 {frac:.4} depth_mae {:.5} (ceiling {ceiling}) {}\n",
            report.depth_mae,
            if scene_ok { "ok" } else { "FAIL" }
        ));
    }
    verdict("4 (end-to-end recovery)", all_ok, &detail);
}

// -------------------------------------------------------------------------
// 5. step-size ablation trend
// -------------------------------------------------------------------------

#[test]
fn criterion_5_step_size_trend() {
    let cfg = RunConfig {
        width: 256,
        height: 128,
        step_deg: 1.0 / 3.0,
        num_levels: 192,
        ..RunConfig::default()
    };
    let steps = [1.0, 0.5, 1.0 / 3.0, 0.25];
    let rows = ablate_step_size(&builtin_suite(), &steps, &cfg).unwrap();
    let rmse: Vec<f64> = rows.iter().map(|r| r.depth_rmse).collect();
    // finer steps may not hurt through 1/3 degree; the 1/4-degree row is free
    let ok = rmse[1] <= rmse[0] && rmse[2] <= rmse[1];
    verdict(
        "5 (step-size trend)",
        ok,
        &format!("depth RMSE by step {rmse:?}"),
    );
}

// -------------------------------------------------------------------------
// 6. metrics conformance
// -------------------------------------------------------------------------

#[test]
fn criterion_6_metrics_conformance() {
    let grid_512 = EquirectGrid::new(1024, 512).unwrap();
    let crop = crop_mask(grid_512, 0.05).unwrap();
    let crop_ok = crop == (26, 486);

    // constant offset chosen exactly representable in f32
    let g = EquirectGrid::new(16, 16).unwrap();
    let gt = ScalarMap::filled(g, 0.0625);
    let pred = ScalarMap::filled(g, 0.0625 + 0.015625);
    let valid = vec![true; g.len()];
    let rig = CameraRig::new(0.2).unwrap();
    let rep = compute_metrics(&pred, &gt, &valid, &rig, 0.0).unwrap();
    let offset_ok = rep.disp_mae == 0.015625 && rep.disp_rmse == 0.015625;

    // MAE <= RMSE over a batch of random reports
    let mut rng = XorShift::new(0x5eed_0006);
    let mut order_ok = true;
    for _ in 0..25 {
        let mut p = ScalarMap::invalid(g);
        let mut t = ScalarMap::invalid(g);
        for row in 0..16 {
            for col in 0..16 {
                p.set(col, row, (rng.unit() * 0.3) as f32);
                t.set(col, row, (rng.unit() * 0.3) as f32);
            }
        }
        let r = compute_metrics(&p, &t, &valid, &rig, 0.0).unwrap();
        order_ok &= r.disp_mae <= r.disp_rmse + 1e-15 && r.depth_mae <= r.depth_rmse + 1e-12;
    }
    verdict(
        "6 (metrics conformance)",
        crop_ok && offset_ok && order_ok,
        &format!("crop {crop:?}, offset ({}, {}), order {order_ok}", rep.disp_mae, rep.disp_rmse),
    );
}

// -------------------------------------------------------------------------
// 7. SGM against a short reference DP, exhaustively on tiny instances
// -------------------------------------------------------------------------

/// Reference DP for one clamped scan line (the oracle for path aggregation).
fn reference_line_dp(costs: &[Vec<f32>], p1: f32, p2: f32) -> Vec<Vec<f32>> {
    let d = costs[0].len();
    let mut out = vec![costs[0].clone()];
    for c in &costs[1..] {
        let prev = out.last().unwrap();
        let m = prev.iter().cloned().fold(f32::INFINITY, f32::min);
        let row = (0..d)
            .map(|k| {
                let mut b = prev[k].min(m + p2);
                if k > 0 { b = b.min(prev[k - 1] + p1); }
                if k + 1 < d { b = b.min(prev[k + 1] + p1); }
                c[k] + b - m
            })
            .collect();
        out.push(row);
    }
    out
}

#[test]
fn criterion_7_sgm_reference_dp() {
    let mut rng = XorShift::new(0x5eed_0007);
    let mut bad = 0usize;
    let mut cases = 0usize;
    for h in 2..=8usize {
        for w in 2..=8usize {
            for d in 1..=5usize {
                let grid = EquirectGrid::new(w, h).unwrap();
                let costs: Vec<f32> = (0..w * h * d).map(|_| rng.unit() as f32).collect();
                let vol = sphere_stereo::costvol::CostVolume {
                    grid,
                    levels: (0..d).map(|k| k as f64 * 0.01).collect(),
                    step_deg: 0.5,
                    costs,
                };
                let params = SgmParams {
                    p1: 0.07,
                    p2: 0.3,
                    paths: vec![(1, 0)],
                };
                let agg = aggregate_sgm(&vol, &params).unwrap();
                for col in 0..w {
                    let line: Vec<Vec<f32>> = (0..h)
                        .map(|row| (0..d).map(|k| vol.at(k, col, row)).collect())
                        .collect();
                    let expect = reference_line_dp(&line, 0.07, 0.3);
                    for row in 0..h {
                        for k in 0..d {
                            cases += 1;
                            if agg.at(k, col, row).to_bits() != expect[row][k].to_bits() {
                                bad += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    verdict(
        "7 (SGM reference DP)",
        bad == 0 && cases > 0,
        &format!("{bad} of {cases} cells differ"),
    );
}

// -------------------------------------------------------------------------
// 8. thread-count determinism (via the CLI so each run gets its own pool)
// -------------------------------------------------------------------------

#[test]
fn criterion_8_thread_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg");
    std::fs::write(
        &cfg_path,
        "width = 128\nheight = 64\nstep_deg = 1\nnum_levels = 24\nwindow_radius = 2\n",
    )
    .unwrap();
    let scene_dir = dir.path().join("scene");
    let render = std::process::Command::new(env!("CARGO_BIN_EXE_sphere-stereo"))
        .args([
            "render",
            "--scene",
            "occluders",
            "--out",
            scene_dir.to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(render.status.success(), "{}", String::from_utf8_lossy(&render.stderr));

    let mut outputs = Vec::new();
    for threads in ["1", "2", "8"] {
        let pred = dir.path().join(format!("pred_{threads}.pfm"));
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_sphere-stereo"))
            .args([
                "--threads",
                threads,
                "match",
                "--top",
                scene_dir.join("top.ppm").to_str().unwrap(),
                "--bottom",
                scene_dir.join("bottom.ppm").to_str().unwrap(),
                "--out",
                pred.to_str().unwrap(),
                "--config",
                cfg_path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(&pred).unwrap());
    }
    let ok = outputs[0] == outputs[1] && outputs[1] == outputs[2];
    verdict("8 (thread determinism)", ok, "disparity bytes differ across 1/2/8 threads");
}

// -------------------------------------------------------------------------
// 9. file round trips and decoder robustness
// -------------------------------------------------------------------------

#[test]
fn criterion_9_io_round_trips_and_fuzz() {
    use sphere_stereo::imageio::{
        decode_floatmap, decode_image, decode_ply, encode_floatmap, encode_image, encode_ply,
        parse_config,
    };

    let mut rng = XorShift::new(0x5eed_0009);

    // round trips
    let grid = EquirectGrid::new(9, 6).unwrap();
    let mut img = EquirectImage::zeros(grid, 3);
    for s in &mut img.samples {
        *s = ((rng.next() % 256) as f32) / 255.0; // representable at 8 bits
    }
    let img_back = decode_image(&encode_image(&img).unwrap()).unwrap();
    let img_ok = img_back.samples == img.samples;

    let map = ScalarMap {
        grid,
        values: (0..grid.len()).map(|_| (rng.unit() as f32) * 10.0 - 5.0).collect(),
    };
    let map_back = decode_floatmap(&encode_floatmap(&map)).unwrap();
    let map_ok = map_back
        .samples
        .iter()
        .zip(&map.values)
        .all(|(a, b)| a.to_bits() == b.to_bits());

    let pts: Vec<sphere_stereo::geom::CloudPoint> = (0..64)
        .map(|_| sphere_stereo::geom::CloudPoint {
            position: [rng.unit() as f32, rng.unit() as f32, rng.unit() as f32],
            color: Some([rng.next() as u8, rng.next() as u8, rng.next() as u8]),
        })
        .collect();
    let ply_ok = decode_ply(&encode_ply(&pts, true)).unwrap() == pts
        && decode_ply(&encode_ply(&pts, false)).unwrap() == pts;

    // 10^4 deterministic mutation-fuzz cases: decoding must never panic
    let seeds: Vec<Vec<u8>> = vec![
        encode_image(&img).unwrap(),
        encode_floatmap(&map),
        encode_ply(&pts, true),
        encode_ply(&pts, false),
        b"baseline_m = 0.2\nwidth = 64\nheight = 32\n".to_vec(),
        b"P6\n2 2\n255\nAAABBBCCCDDD".to_vec(),
        b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n".to_vec(),
    ];
    for case in 0..10_000 {
        let mut data = seeds[case % seeds.len()].clone();
        let flips = 1 + (rng.next() as usize) % 8;
        for _ in 0..flips {
            let pos = (rng.next() as usize) % data.len();
            match rng.next() % 3 {
                0 => data[pos] = rng.next() as u8,
                1 => data.truncate(pos.max(1)),
                _ => data.insert(pos, rng.next() as u8),
            }
            if data.is_empty() {
                data.push(0);
            }
        }
        let _ = decode_image(&data);
        let _ = decode_floatmap(&data);
        let _ = decode_ply(&data);
        if let Ok(text) = std::str::from_utf8(&data) {
            let _ = parse_config(text);
            let _ = sphere_stereo::render::parse_scene(text);
        }
    }

    verdict(
        "9 (I/O round trips + fuzz)",
        img_ok && map_ok && ply_ok,
        &format!("image {img_ok}, pfm {map_ok}, ply {ply_ok}"),
    );
}
