//! Acceptance checks, one per criterion. Runs with its own harness so every
//! criterion prints a PASS/FAIL line; the process exits non-zero if any fail.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridgeprint::binthin::{binarize, thin, BinarizeParams, BinaryImage, Skeleton};
use ridgeprint::enhance::{
    compute_region_mask, estimate_frequency, estimate_orientation, gabor_enhance, undirected_angle_diff, GaborKernel,
    GaborParams, MaskOutcome,
};
use ridgeprint::eval::{aggregate, compute_metrics, MatchResult, Metrics};
use ridgeprint::image::{normalize, GrayImage, NormalizedImage};
use ridgeprint::minutiae::{classify_pixel, extract_minutiae, postprocess, MinutiaKind, PostprocessParams};
use ridgeprint::pipeline::{extract_image, run_eval, run_synth, ExtractOutcome, GaborExtractor, PipelineConfig};
use ridgeprint::synth::{generate, Pattern, SynthSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn spec(pattern: Pattern, period: f64, size: usize, noise: f64, minutiae: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        name: "acc".into(),
        width: size,
        height: size,
        pattern,
        period,
        injected: vec![],
        random_minutiae: minutiae,
        noise_amplitude: noise,
        seed,
    }
}

// ---------------------------------------------------------------------------
// 1. binarization against a per-pixel oracle

fn binarize_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0usize;
    for _ in 0..100 {
        let img = GrayImage::from_fn(64, 64, |_, _| rng.gen());
        let t: u8 = rng.gen();
        let bw = binarize(&img, BinarizeParams { threshold: t });
        for y in 0..64 {
            for x in 0..64 {
                let oracle = img.data()[y * 64 + x] >= t;
                mismatches += (bw.get(x, y) != oracle) as usize;
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatching pixels over 100 images"))
}

// ---------------------------------------------------------------------------
// 2. exhaustive 3x3 classification

fn neighborhood_exhaustive() -> Outcome {
    // ring order starting north, clockwise
    const RING: [(usize, usize); 8] = [(1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1), (0, 0)];
    let mut mismatches = 0;
    for pattern in 0u16..256 {
        let mut bits = BinaryImage::empty(3, 3);
        bits.set(1, 1, true);
        for (i, &(x, y)) in RING.iter().enumerate() {
            if pattern & (1 << i) != 0 {
                bits.set(x, y, true);
            }
        }
        let skel = Skeleton::from_binary_unchecked(bits);
        let count = 1 + pattern.count_ones();
        let expected = match count {
            2 => Some(MinutiaKind::Ending),
            c if c >= 4 => Some(MinutiaKind::Bifurcation),
            _ => None,
        };
        if classify_pixel(&skel, 1, 1) != expected {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 256 patterns misclassified"))
}

// ---------------------------------------------------------------------------
// 3. orientation recovery

fn orientation_recovery() -> Outcome {
    let (mut good, mut total) = (0usize, 0usize);
    for angle in [0.0f64, 30.0, 60.0, 90.0, 120.0, 150.0] {
        let (img, _) = generate(&spec(Pattern::Parallel { angle_deg: angle }, 8.0, 256, 0.0, 0, 0)).unwrap();
        let field = estimate_orientation(&normalize(&img, 100.0, 100.0), 16, 1.0).unwrap();
        // the wave normal runs across the ridges
        let ridge = (angle + 90.0).to_radians();
        for row in 0..field.grid.rows {
            for col in 0..field.grid.cols {
                if field.grid.is_interior(col, row) {
                    total += 1;
                    good += (undirected_angle_diff(field.at(col, row), ridge) <= 5f64.to_radians()) as usize;
                }
            }
        }
    }
    let frac = good as f64 / total as f64;
    outcome(frac >= 0.95, format!("{:.1}% of {total} interior blocks within 5 degrees", 100.0 * frac))
}

// ---------------------------------------------------------------------------
// 4. frequency recovery

fn frequency_recovery() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for period in [4.0f64, 6.0, 8.0, 10.0, 12.0] {
        let (mut good, mut total) = (0usize, 0usize);
        for angle in [0.0, 30.0] {
            let (img, _) = generate(&spec(Pattern::Parallel { angle_deg: angle }, period, 256, 0.0, 0, 0)).unwrap();
            let norm = normalize(&img, 100.0, 100.0);
            let orient = estimate_orientation(&norm, 16, 1.0).unwrap();
            let freq = estimate_frequency(&norm, &orient, 32).unwrap();
            let target = 1.0 / period;
            for row in 0..freq.grid.rows {
                for col in 0..freq.grid.cols {
                    if freq.grid.is_interior(col, row) {
                        total += 1;
                        let ok = freq.at(col, row).is_some_and(|f| (f - target).abs() <= 0.1 * target);
                        good += ok as usize;
                    }
                }
            }
        }
        let frac = good as f64 / total as f64;
        pass &= frac >= 0.90;
        details.push(format!("T={period}: {:.1}%", 100.0 * frac));
    }
    outcome(pass, details.join(", "))
}

// ---------------------------------------------------------------------------
// 5. Gabor selectivity and denoising

fn convolve_at(img: &NormalizedImage, k: &GaborKernel, x: usize, y: usize) -> f64 {
    let hw = k.half_width as isize;
    let side = 2 * k.half_width + 1;
    let mut acc = 0.0;
    for dy in -hw..=hw {
        for dx in -hw..=hw {
            let tap = k.taps[(dy + hw) as usize * side + (dx + hw) as usize];
            acc += tap * img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        }
    }
    acc
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn gabor_selectivity_and_denoising() -> Outcome {
    let params = GaborParams::default();
    let mut worst_ratio = f64::INFINITY;
    for period in [6.0f64, 8.0, 10.0] {
        for angle in [0.0f64, 30.0, 60.0, 90.0, 120.0, 150.0] {
            let (img, _) = generate(&spec(Pattern::Parallel { angle_deg: angle }, period, 96, 0.0, 0, 0)).unwrap();
            let norm = normalize(&img, 100.0, 100.0);
            let ridge = (angle + 90.0).to_radians();
            let matched = GaborKernel::new(ridge, 1.0 / period, &params);
            let rotated = GaborKernel::new(ridge + PI / 2.0, 1.0 / period, &params);
            let (mut amp_m, mut amp_r) = (0.0f64, 0.0f64);
            // one full period of offsets around the centre covers every phase
            for d in 0..period as usize {
                for (dx, dy) in [(d, 0), (0, d)] {
                    amp_m = amp_m.max(convolve_at(&norm, &matched, 48 + dx, 48 + dy).abs());
                    amp_r = amp_r.max(convolve_at(&norm, &rotated, 48 + dx, 48 + dy).abs());
                }
            }
            worst_ratio = worst_ratio.min(amp_m / amp_r.max(1e-12));
        }
    }

    let mut improved = 0;
    let mut worst_gain = f64::INFINITY;
    for i in 0..10u64 {
        let pattern = if i % 2 == 0 {
            Pattern::Parallel { angle_deg: 18.0 * i as f64 }
        } else {
            Pattern::Concentric { center_x: -120.0, center_y: 60.0 + 15.0 * i as f64 }
        };
        let noisy_spec = spec(pattern, 8.0 + (i % 3) as f64, 192, 30.0, 6, 100 + i);
        let clean_spec = SynthSpec { noise_amplitude: 0.0, ..noisy_spec.clone() };
        let (noisy, _) = generate(&noisy_spec).unwrap();
        let (clean, _) = generate(&clean_spec).unwrap();
        let norm = normalize(&noisy, 100.0, 100.0);
        let orient = estimate_orientation(&norm, 16, 1.0).unwrap();
        let freq = estimate_frequency(&norm, &orient, 32).unwrap();
        let MaskOutcome::Accepted(mask) = compute_region_mask(&norm, &orient, &freq, &Default::default()).unwrap()
        else {
            return outcome(false, format!("denoising image {i} was rejected"));
        };
        let enhanced = gabor_enhance(&norm, &orient, &freq, &mask, &params).unwrap();
        let (mut e, mut n, mut c) = (Vec::new(), Vec::new(), Vec::new());
        for y in 0..noisy.height() {
            for x in 0..noisy.width() {
                if mask.is_pixel_recoverable(x, y) {
                    e.push(enhanced.get(x, y) as f64);
                    n.push(noisy.get(x, y) as f64);
                    c.push(clean.get(x, y) as f64);
                }
            }
        }
        let (ce, cn) = (correlation(&e, &c), correlation(&n, &c));
        improved += (ce > cn) as usize;
        worst_gain = worst_gain.min(ce - cn);
    }
    outcome(
        worst_ratio >= 5.0 && improved == 10,
        format!(
            "min matched/rotated response {worst_ratio:.1}x; enhanced beats noisy on {improved}/10 (smallest correlation gain {worst_gain:.3})"
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. skeleton invariants

fn flood_components(img: &BinaryImage) -> usize {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut seen = vec![false; (w * h) as usize];
    let mut count = 0;
    for sy in 0..h {
        for sx in 0..w {
            if seen[(sy * w + sx) as usize] || !img.get(sx as usize, sy as usize) {
                continue;
            }
            count += 1;
            seen[(sy * w + sx) as usize] = true;
            let mut queue = std::collections::VecDeque::from([(sx, sy)]);
            while let Some((x, y)) = queue.pop_front() {
                for (dx, dy) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        let i = (ny * w + nx) as usize;
                        if !seen[i] && img.get(nx as usize, ny as usize) {
                            seen[i] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
        }
    }
    count
}

fn has_square(img: &BinaryImage) -> bool {
    (0..img.height() - 1).any(|y| {
        (0..img.width() - 1).any(|x| img.get(x, y) && img.get(x + 1, y) && img.get(x, y + 1) && img.get(x + 1, y + 1))
    })
}

fn check_skeleton(bin: &BinaryImage) -> Result<(), String> {
    let s = thin(bin);
    if has_square(s.as_binary()) {
        return Err("2x2 block left".into());
    }
    let (before, after) = (flood_components(bin), flood_components(s.as_binary()));
    if before != after {
        return Err(format!("components {before} -> {after}"));
    }
    if thin(s.as_binary()).as_binary() != s.as_binary() {
        return Err("thinning is not idempotent".into());
    }
    Ok(())
}

fn skeleton_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    for i in 0..50 {
        let (w, h) = (rng.gen_range(32..96), rng.gen_range(32..96));
        let discs: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..12))
            .map(|_| (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64), rng.gen_range(1.0..9.0)))
            .collect();
        let bin = BinaryImage::from_fn(w, h, |x, y| {
            discs.iter().any(|&(cx, cy, r)| (x as f64 - cx).hypot(y as f64 - cy) <= r)
        });
        if let Err(e) = check_skeleton(&bin) {
            failures.push(format!("blob {i}: {e}"));
        }
    }
    let cfg = PipelineConfig::default();
    for i in 0..20u64 {
        let pattern = if i % 2 == 0 {
            Pattern::Parallel { angle_deg: 9.0 * i as f64 }
        } else {
            Pattern::Concentric { center_x: 80.0, center_y: -100.0 }
        };
        let (img, truth) = generate(&spec(pattern, 9.0, 160, 2.0 * i as f64, 4, 600 + i)).unwrap();
        match extract_image(&img, &truth.image_id, &cfg).unwrap() {
            ExtractOutcome::Accepted(ex) => {
                if let Err(e) = check_skeleton(&ex.binary) {
                    failures.push(format!("print {i}: {e}"));
                }
            }
            ExtractOutcome::Rejected(_) => failures.push(format!("print {i}: rejected")),
        }
    }
    let detail = if failures.is_empty() { "50 blobs and 20 prints clean".to_string() } else { failures.join("; ") };
    outcome(failures.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 7. spur rule

fn spur_fixture(length: usize) -> Skeleton {
    // ridge along y = 40 with a branch of `length` pixels rising from x = 50
    Skeleton::from_binary_unchecked(BinaryImage::from_fn(100, 80, |x, y| {
        (y == 40 && (20..80).contains(&x)) || (x == 50 && y < 40 && y >= 40 - length)
    }))
}

fn spur_rule() -> Outcome {
    let params = PostprocessParams::default();
    let mut pass = true;
    let mut details = Vec::new();
    for length in [3usize, 5, 6, 8, 12] {
        let skel = spur_fixture(length);
        let raw = extract_minutiae(&skel, "spur");
        let near = |set: &ridgeprint::minutiae::MinutiaeSet, kind: MinutiaKind, y0: usize, y1: usize| {
            set.minutiae.iter().any(|m| m.kind == kind && m.x.abs_diff(50) <= 1 && (y0..=y1).contains(&m.y))
        };
        let tip = 40 - length;
        let raw_ok = near(&raw, MinutiaKind::Ending, tip, tip) && near(&raw, MinutiaKind::Bifurcation, 38, 41);
        let (post, _) = postprocess(&raw, &skel, &params);
        let ending = near(&post, MinutiaKind::Ending, tip, tip);
        let bif = near(&post, MinutiaKind::Bifurcation, 38, 41);
        let removed = !ending && !bif;
        let expect_removed = length <= 6;
        let ok = raw_ok && removed == expect_removed && (expect_removed || (ending && bif));
        pass &= ok;
        details.push(format!("len {length}: {}", if removed { "removed" } else { "kept" }));
    }
    outcome(pass, details.join(", "))
}

// ---------------------------------------------------------------------------
// 8. metric formulas

fn result(gt: usize, missed: usize, false_count: usize) -> MatchResult {
    MatchResult {
        image_id: "m".into(),
        matched: gt - missed,
        missed,
        false_count,
        ground_truth_count: gt,
        detected_count: gt - missed + false_count,
        tolerance: 8.0,
        pairs: vec![],
    }
}

fn metric_formulas() -> Outcome {
    // (truth, missed, false, sen, spe) worked out by hand
    let cases: [(usize, usize, usize, f64, f64); 20] = [
        (10, 0, 0, 1.0, 1.0),
        (10, 2, 1, 0.8, 0.9),
        (10, 10, 0, 0.0, 1.0),
        (10, 0, 10, 1.0, 0.0),
        (4, 1, 6, 0.75, -0.5),
        (8, 1, 1, 0.875, 0.875),
        (8, 3, 2, 0.625, 0.75),
        (16, 4, 2, 0.75, 0.875),
        (16, 1, 3, 0.9375, 0.8125),
        (20, 3, 5, 0.85, 0.75),
        (25, 5, 1, 0.8, 0.96),
        (40, 9, 6, 0.775, 0.85),
        (50, 7, 13, 0.86, 0.74),
        (5, 5, 5, 0.0, 0.0),
        (1, 0, 3, 1.0, -2.0),
        (2, 1, 1, 0.5, 0.5),
        (32, 8, 4, 0.75, 0.875),
        (64, 16, 0, 0.75, 1.0),
        (100, 19, 13, 0.81, 0.87),
        (125, 24, 16, 0.808, 0.872),
    ];
    let mut worst = 0.0f64;
    for (gt, missed, false_count, sen, spe) in cases {
        let m = compute_metrics(&result(gt, missed, false_count)).unwrap();
        worst = worst.max((m.sen - sen).abs()).max((m.spe - spe).abs());
    }
    let agg = aggregate(&[("a".into(), Metrics { sen: 0.7, spe: 0.7 }), ("b".into(), Metrics { sen: 0.9, spe: 0.9 })])
        .unwrap();
    let ok = worst <= 1e-12 && (agg.mean_sen - 0.8).abs() <= 1e-12 && (agg.sd_sen - 0.1414).abs() <= 1e-4;
    outcome(ok, format!("max formula error {worst:.1e}; mean {:.4}, SD {:.4}", agg.mean_sen, agg.sd_sen))
}

// ---------------------------------------------------------------------------
// 9 and 10. end-to-end corpus

fn corpus_spec(i: u64) -> SynthSpec {
    let pattern = if i.is_multiple_of(2) {
        Pattern::Parallel { angle_deg: 23.0 * i as f64 }
    } else {
        Pattern::Concentric { center_x: -140.0 + 20.0 * (i % 3) as f64, center_y: 40.0 + 12.0 * i as f64 }
    };
    SynthSpec {
        name: format!("print{i:02}"),
        width: 256,
        height: 256,
        pattern,
        period: 8.0 + (i % 3) as f64,
        injected: vec![],
        random_minutiae: 10,
        // 0 to 40 in even steps
        noise_amplitude: (40.0 * i as f64 / 19.0).round(),
        seed: 900 + i,
    }
}

fn build_corpus(dir: &Path) {
    for i in 0..20 {
        run_synth(&corpus_spec(i), 1, dir).unwrap();
    }
}

fn end_to_end(dir: &Path) -> Outcome {
    let cfg = PipelineConfig { output_dir: dir.join("eval"), ..PipelineConfig::default() };
    match run_eval(dir, dir, &cfg, 4, &GaborExtractor) {
        Ok(run) => {
            let r = run.report;
            let excluded = 20 - r.n;
            let ok = r.n == 20 && r.mean_sen >= 0.80 && r.mean_spe >= 0.80;
            outcome(
                ok,
                format!("n={} ({excluded} not scored), mean SEN {:.3}, mean SPE {:.3}", r.n, r.mean_sen, r.mean_spe),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn determinism(dir: &Path) -> Outcome {
    let cfg = PipelineConfig { output_dir: dir.join("det"), ..PipelineConfig::default() };
    let mut reports = Vec::new();
    for workers in [1, 3, 8] {
        let run = match run_eval(dir, dir, &cfg, workers, &GaborExtractor) {
            Ok(run) => run,
            Err(e) => return outcome(false, e.to_string()),
        };
        let txt = std::fs::read(&run.report_txt).unwrap();
        let csv = std::fs::read(&run.report_csv).unwrap();
        reports.push((workers, txt, csv));
    }
    let same = reports.windows(2).all(|w| w[0].1 == w[1].1 && w[0].2 == w[1].2);
    outcome(same, format!("reports for workers 1/3/8 {}", if same { "byte-identical" } else { "differ" }))
}

// ---------------------------------------------------------------------------

fn main() {
    let corpus = tempfile::tempdir().expect("temp dir");
    build_corpus(corpus.path());
    let corpus_path = corpus.path().to_path_buf();

    type Check = Box<dyn Fn() -> Outcome>;
    let p9 = corpus_path.clone();
    let p10 = corpus_path.clone();
    let checks: Vec<(u32, &str, Option<Duration>, Check)> = vec![
        (1, "binarization matches per-pixel oracle", Some(Duration::from_secs(1)), Box::new(binarize_exact)),
        (2, "3x3 neighbourhood classification", Some(Duration::from_secs(1)), Box::new(neighborhood_exhaustive)),
        (3, "orientation recovery", Some(Duration::from_secs(5)), Box::new(orientation_recovery)),
        (4, "frequency recovery", Some(Duration::from_secs(5)), Box::new(frequency_recovery)),
        (
            5,
            "Gabor selectivity and denoising",
            Some(Duration::from_secs(10)),
            Box::new(gabor_selectivity_and_denoising),
        ),
        (6, "skeleton invariants", Some(Duration::from_secs(10)), Box::new(skeleton_invariants)),
        (7, "spur rule", None, Box::new(spur_rule)),
        (8, "metric formulas", None, Box::new(metric_formulas)),
        (9, "end-to-end synthetic corpus", Some(Duration::from_secs(60)), Box::new(move || end_to_end(&p9))),
        (10, "determinism across worker counts", None, Box::new(move || determinism(&p10))),
    ];

    let mut failed = 0;
    for (id, name, limit, check) in checks {
        let start = Instant::now();
        let Outcome { mut pass, mut detail } = check();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                pass = false;
                detail.push_str(&format!("; exceeded {limit:?}"));
            }
        }
        failed += !pass as usize;
        println!(
            "{} criterion {id:>2} {name}: {detail} [{:.2}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
