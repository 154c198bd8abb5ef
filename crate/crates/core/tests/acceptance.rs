//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lesionscope::clinical::{ct_class, dynamics, fit_ct_thresholds, CtClass, CtThresholds, Dynamics};
use lesionscope::cli::fit_with_cross_folds;
use lesionscope::evaluation::metrics::Overlap;
use lesionscope::evaluation::studyfile::{load_cases, StudyDefinition, StudySettings};
use lesionscope::evaluation::study::render_rows;
use lesionscope::evaluation::{
    dice, exact_sign_flip_test, leave_one_out_study, monte_carlo_sign_flip_test, paired_permutation_test,
    Metric,
};
use lesionscope::fusion::{
    mean_ensemble, score_fusion, select_best_subset, unanimous_vote, FusionConfig, SubsetSearchConfig,
};
use lesionscope::io::dicom::parse_dicom_bytes;
use lesionscope::io::{parse_dicom_series_with, read_raw_volume, write_raw_volume, RawVolume, SeriesOptions};
use lesionscope::synth::{simulate_model, Ellipsoid, SliceEncoding};
use lesionscope::{BinaryMask, CtVolume, Dims, ProbabilityVolume, Spacing, UnitState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn prob(dims: Dims, v: Vec<f32>) -> ProbabilityVolume {
    ProbabilityVolume::new(dims, v).unwrap()
}

// 1 ---------------------------------------------------------------------

fn fusion_oracle() -> Outcome {
    let dims = Dims::new(64, 64, 64);
    let cfg = FusionConfig::default();
    let boundary = [0.5f32, 0.7, 0.85, 0.3, 0.15];
    let mut fusion_time = Duration::ZERO;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let c = [rng.random_range(16.0..48.0), rng.random_range(16.0..48.0), rng.random_range(16.0..48.0)];
        let r = [rng.random_range(4.0..16.0), rng.random_range(4.0..16.0), rng.random_range(4.0..16.0)];
        let truth = Ellipsoid::new(c, r).voxelize(dims);
        let models: Vec<ProbabilityVolume> = (0..18)
            .map(|k| {
                let sharp = 1.0 + (k % 4) as f64;
                let mut p = simulate_model(&truth, sharp, 0.05, case * 100 + k).unwrap().probs().to_vec();
                // plant exact threshold values in a corner
                for (i, v) in p.iter_mut().take(64).enumerate() {
                    *v = boundary[(i + k as usize) % 5];
                }
                for (i, v) in p.iter_mut().skip(64).take(64).enumerate() {
                    *v = boundary[i % 5];
                }
                prob(dims, p)
            })
            .collect();
        let resnet: Vec<&ProbabilityVolume> = models[0..6].iter().collect();
        let dpn: Vec<&ProbabilityVolume> = models[6..12].iter().collect();
        let fpn: Vec<&ProbabilityVolume> = models[12..18].iter().collect();

        let t0 = Instant::now();
        let dpn_mean = mean_ensemble(&dpn).map_err(|e| e.to_string())?;
        let fpn_mean = mean_ensemble(&fpn).map_err(|e| e.to_string())?;
        let vote = unanimous_vote(&resnet, cfg.resnet_vote_thr).map_err(|e| e.to_string())?;
        let fused = score_fusion(&resnet, &dpn_mean, &fpn_mean, &cfg).map_err(|e| e.to_string())?;
        fusion_time += t0.elapsed();

        // scalar oracle, one voxel at a time
        let t = |v: f64| v as f32;
        for i in 0..dims.len() {
            let mean = |fam: &[&ProbabilityVolume]| {
                let mut s = 0.0f64;
                for p in fam {
                    s += p.probs()[i] as f64;
                }
                (s / fam.len() as f64) as f32
            };
            let (d, f) = (mean(&dpn), mean(&fpn));
            let unanimous = resnet.iter().all(|p| p.probs()[i] > t(cfg.resnet_vote_thr));
            let mut score = 0;
            if unanimous {
                score += 1;
            }
            if d > t(cfg.dpn_pos_thr) {
                score += 1;
            }
            if f > t(cfg.fpn_pos_thr) {
                score += 1;
            }
            if d < t(cfg.dpn_neg_thr) {
                score -= 1;
            }
            if f < t(cfg.fpn_neg_thr) {
                score -= 1;
            }
            if d.to_bits() != dpn_mean.probs()[i].to_bits() || f.to_bits() != fpn_mean.probs()[i].to_bits() {
                return Err(format!("case {case} voxel {i}: mean differs"));
            }
            if unanimous != vote.bits()[i] || (score > 0) != fused.bits()[i] {
                return Err(format!("case {case} voxel {i}: vote/score differs"));
            }
        }
    }
    check(
        fusion_time < Duration::from_secs(5),
        format!("fusion took {:.2} s", fusion_time.as_secs_f64()),
    )?;
    Ok(format!("100 cases of 64^3 x 18 models, fusion time {:.2} s", fusion_time.as_secs_f64()))
}

// 2 ---------------------------------------------------------------------

fn scoring_rule() -> Outcome {
    // each column is one voxel: (six ResNet values, DPN mean, FPN mean, expected)
    let cases: [([f32; 6], f32, f32, bool, &str); 13] = [
        ([0.9; 6], 0.9, 0.9, true, "+3"),
        ([0.9, 0.9, 0.9, 0.9, 0.9, 0.2], 0.1, 0.1, false, "-2"),
        ([0.9; 6], 0.2, 0.5, false, "0"),
        ([0.9, 0.9, 0.9, 0.9, 0.9, 0.5], 0.5, 0.5, false, "resnet 0.5"),
        ([0.9, 0.9, 0.9, 0.9, 0.9, 0.500_001], 0.5, 0.5, true, "resnet above 0.5"),
        ([0.1; 6], 0.7, 0.5, false, "dpn 0.7"),
        ([0.1; 6], 0.700_001, 0.5, true, "dpn above 0.7"),
        ([0.1; 6], 0.5, 0.85, false, "fpn 0.85"),
        ([0.1; 6], 0.5, 0.850_001, true, "fpn above 0.85"),
        ([0.9; 6], 0.3, 0.5, true, "dpn 0.3"),
        ([0.9; 6], 0.299_999, 0.5, false, "dpn below 0.3"),
        ([0.9; 6], 0.5, 0.15, true, "fpn 0.15"),
        ([0.9; 6], 0.5, 0.149_999, false, "fpn below 0.15"),
    ];
    let dims = Dims::new(cases.len(), 1, 1);
    let resnet: Vec<ProbabilityVolume> =
        (0..6).map(|k| prob(dims, cases.iter().map(|c| c.0[k]).collect())).collect();
    let refs: Vec<&ProbabilityVolume> = resnet.iter().collect();
    let dpn = prob(dims, cases.iter().map(|c| c.1).collect());
    let fpn = prob(dims, cases.iter().map(|c| c.2).collect());
    let out = score_fusion(&refs, &dpn, &fpn, &FusionConfig::default()).map_err(|e| e.to_string())?;
    for (i, c) in cases.iter().enumerate() {
        check(out.bits()[i] == c.3, format!("example {} gave {}", c.4, out.bits()[i]))?;
    }
    Ok(format!("{} hand-derived voxels including all five boundaries", cases.len()))
}

// 3 ---------------------------------------------------------------------

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for pair in 0..1000 {
        let n = rng.random_range(1..200);
        let dims = Dims::new(n, 1, 1);
        let pa = rng.random::<f64>();
        let pb = rng.random::<f64>();
        let a = BinaryMask::new(dims, (0..n).map(|_| rng.random::<f64>() < pa).collect()).unwrap();
        let b = BinaryMask::new(dims, (0..n).map(|_| rng.random::<f64>() < pb).collect()).unwrap();
        // independent counts
        let ca = a.bits().iter().filter(|v| **v).count();
        let cb = b.bits().iter().filter(|v| **v).count();
        let ci = a.bits().iter().zip(b.bits()).filter(|(x, y)| **x && **y).count();
        let o = Overlap::of(&a, &b).map_err(|e| e.to_string())?;
        check((o.a, o.b, o.intersection) == (ca, cb, ci), format!("pair {pair}: counts"))?;
        let (dn, dd) = o.dice_ratio();
        let (in_, id) = o.iou_ratio();
        // dice = 2 iou / (1 + iou)  <=>  dn * (id + in) == 2 * in * dd
        check(
            (dn as u128) * (id as u128 + in_ as u128) == 2 * (in_ as u128) * (dd as u128),
            format!("pair {pair}: identity fails for {dn}/{dd} vs {in_}/{id}"),
        )?;
        check(dice(&a, &a).unwrap() == 1.0, "dice(a, a) != 1")?;
        let not_a = BinaryMask::new(dims, a.bits().iter().map(|v| !v).collect()).unwrap();
        if ca > 0 && ca < n {
            check(dice(&a, &not_a).unwrap() == 0.0, "disjoint dice != 0")?;
        }
    }
    Ok("1000 random pairs, exact rational identity".into())
}

// 4 ---------------------------------------------------------------------

fn phantom_recovery() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_lesionscope");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ph = dir.path().join("phantom");
    let t0 = Instant::now();
    let st = Command::new(bin)
        .args(["phantom", "--size", "128", "--seed", "11", "--noise", "15", "--out"])
        .arg(&ph)
        .output()
        .map_err(|e| e.to_string())?;
    check(st.status.success(), String::from_utf8_lossy(&st.stderr).to_string())?;
    let seg = dir.path().join("seg");
    let st = Command::new(bin)
        .arg("segment")
        .arg("--input")
        .arg(ph.join("ct.hdr"))
        .arg("--models")
        .arg(ph.join("manifest.tsv"))
        .arg("--out")
        .arg(&seg)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    check(st.status.success(), String::from_utf8_lossy(&st.stderr).to_string())?;

    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ph.join("truth.json")).unwrap()).unwrap();
    let counts = &truth["counts"];
    let c = |k: &str| counts[k].as_u64().unwrap() as f64;
    let planted = (c("left_lesion") + c("right_lesion")) / (c("left_lung") + c("right_lung"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(seg.join("report.json")).unwrap()).unwrap();
    let got = report["shares"]["total_share"].as_f64().unwrap();
    check((got - planted).abs() <= 0.01, format!("share {got} vs planted {planted}"))?;
    check(elapsed < Duration::from_secs(10), format!("took {:.2} s", elapsed.as_secs_f64()))?;
    Ok(format!(
        "128^3 phantom: reported {got:.4}, planted {planted:.4}, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

// 5 ---------------------------------------------------------------------

fn ct_boundaries() -> Outcome {
    use CtClass::*;
    let table = [
        (0.0, CT0),
        (0.10, CT1),
        (0.25, CT1),
        (0.30, CT2),
        (0.50, CT2),
        (0.74, CT3),
        (0.75, CT4),
        (0.90, CT4),
    ];
    let thr = CtThresholds::default();
    for (s, want) in table {
        let got = ct_class(s, &thr);
        check(got == want, format!("{s} -> {got}, expected {want}"))?;
    }
    Ok("8 boundary shares".into())
}

// 6 ---------------------------------------------------------------------

/// Brute force over every non-decreasing candidate triple; candidates are
/// the midpoints of adjacent distinct positive shares plus one below and one
/// above. Thresholds that land in the same gap are spread across it.
fn oracle_fit(shares: &[f64], labels: &[CtClass]) -> (f64, f64, f64) {
    let mut v: Vec<f64> = shares.iter().copied().filter(|s| *s > 0.0).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mut edges = vec![0.0];
    edges.extend(&v);
    if v[v.len() - 1] < 1.0 {
        edges.push(1.0);
    }
    let gaps: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
    let cands: Vec<f64> = gaps.iter().map(|(a, b)| (a + b) / 2.0).collect();
    let class = |s: f64, t: (f64, f64, f64)| {
        if s <= 0.0 {
            0
        } else if s <= t.0 {
            1
        } else if s <= t.1 {
            2
        } else if s < t.2 {
            3
        } else {
            4
        }
    };
    let mut best = (usize::MAX, (0, 0, 0));
    for i in 0..cands.len() {
        for j in i..cands.len() {
            for k in j..cands.len() {
                let t = (cands[i], cands[j], cands[k]);
                let wrong = shares
                    .iter()
                    .zip(labels)
                    .filter(|(s, l)| class(**s, t) != l.index())
                    .count();
                if wrong < best.0 {
                    best = (wrong, (i, j, k));
                }
            }
        }
    }
    let (i, j, k) = best.1;
    let at = |g: usize, q: f64| gaps[g].0 + (gaps[g].1 - gaps[g].0) * q;
    match (i == j, j == k) {
        (false, false) => (cands[i], cands[j], cands[k]),
        (true, false) => (at(i, 1.0 / 3.0), at(i, 2.0 / 3.0), cands[k]),
        (false, true) => (cands[i], at(j, 1.0 / 3.0), at(j, 2.0 / 3.0)),
        (true, true) => (at(i, 0.25), at(i, 0.5), at(i, 0.75)),
    }
}

fn threshold_recovery() -> Outcome {
    let planted = CtThresholds::default();
    let bands = [(0.10, 0.18), (0.30, 0.40), (0.55, 0.65), (0.80, 0.90)];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut shares = Vec::new();
    for class in 0..5 {
        for _ in 0..8 {
            shares.push(if class == 0 {
                0.0
            } else {
                let (lo, hi) = bands[class - 1];
                rng.random_range(lo..=hi)
            });
        }
    }
    let labels: Vec<CtClass> = shares.iter().map(|s| ct_class(*s, &planted)).collect();
    let report = fit_with_cross_folds(&shares, &labels, 17).map_err(|e| e.to_string())?;
    check(report.held_out_accuracy == 1.0, format!("held-out accuracy {}", report.held_out_accuracy))?;

    // per-fold: exhaustive oracle agreement and gap containment
    let idx: Vec<usize> = (0..shares.len()).collect();
    let (f1, f2) = lesionscope::clinical::stratified_two_fold_split(&idx, &labels, 17).unwrap();
    for (fold, fit) in [(&f1, report.fold1), (&f2, report.fold2)] {
        let s: Vec<f64> = fold.iter().map(|i| shares[*i]).collect();
        let l: Vec<CtClass> = fold.iter().map(|i| labels[*i]).collect();
        let t = fit.thresholds;
        let o = oracle_fit(&s, &l);
        check((t.t2, t.t3, t.t4) == o, format!("fit {t:?} vs oracle {o:?}"))?;
        let max_of = |c: CtClass| s.iter().zip(&l).filter(|(_, x)| **x == c).map(|(v, _)| *v).fold(f64::MIN, f64::max);
        let min_of = |c: CtClass| s.iter().zip(&l).filter(|(_, x)| **x == c).map(|(v, _)| *v).fold(f64::MAX, f64::min);
        check(max_of(CtClass::CT1) < t.t2 && t.t2 < min_of(CtClass::CT2), "t2 outside gap")?;
        check(max_of(CtClass::CT2) < t.t3 && t.t3 < min_of(CtClass::CT3), "t3 outside gap")?;
        check(max_of(CtClass::CT3) < t.t4 && t.t4 < min_of(CtClass::CT4), "t4 outside gap")?;
        check(fit.accuracy == 1.0, "train accuracy below 1")?;
    }
    let direct = fit_ct_thresholds(&shares, &labels).map_err(|e| e.to_string())?;
    check(direct.accuracy == 1.0, "full-data fit below 1")?;
    Ok(format!(
        "40 cases, held-out accuracy 1.0, fold fits {:?} / {:?}",
        (report.fold1.thresholds.t2, report.fold1.thresholds.t3, report.fold1.thresholds.t4),
        (report.fold2.thresholds.t2, report.fold2.thresholds.t3, report.fold2.thresholds.t4)
    ))
}

// 7 ---------------------------------------------------------------------

fn permutation_exactness() -> Outcome {
    let p = paired_permutation_test(&[1.0; 8], &[0.0; 8], 256, 0).map_err(|e| e.to_string())?;
    check(p == 0.0078125, format!("n=8 constant gave {p}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.5)).collect();
    let y: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let exact = exact_sign_flip_test(&x, &y).map_err(|e| e.to_string())?;
    let via_dispatch = paired_permutation_test(&x, &y, 4096, 0).map_err(|e| e.to_string())?;
    check(exact == via_dispatch, "dispatch at 2^n resamples is not exact")?;
    let mc = monte_carlo_sign_flip_test(&x, &y, 100_000, 99).map_err(|e| e.to_string())?;
    check((mc - exact).abs() <= 0.01, format!("MC {mc} vs exact {exact}"))?;
    let again = monte_carlo_sign_flip_test(&x, &y, 100_000, 99).unwrap();
    check(mc == again, "MC not reproducible")?;
    Ok(format!("n=8 p=0.0078125; n=12 exact {exact:.5}, MC {mc:.5}"))
}

// 8 ---------------------------------------------------------------------

fn golden_study() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_study");
    let def = StudyDefinition::read(&dir.join("study.json")).map_err(|e| e.to_string())?;
    let (opts, _) = def.options(&StudySettings::default());
    let cases = load_cases(&def, &dir).map_err(|e| e.to_string())?;
    let rows = leave_one_out_study(&cases, Metric::Dice, &opts).map_err(|e| e.to_string())?;
    let expected = fs::read_to_string(dir.join("expected_dice.txt")).unwrap();
    let got = render_rows(&rows);
    check(got == expected, format!("table differs:\n{got}"))?;
    let pooled = rows.last().unwrap();
    check(pooled.cases == 6 * 3, format!("pooled cases {}", pooled.cases))?;
    Ok("7 rows byte-exact, pooled cases 18 = 6 x 3".into())
}

// 9 ---------------------------------------------------------------------

fn dynamics_pairs() -> Outcome {
    // shares in basis points so the oracle works on integers
    let pairs: [(i64, i64); 30] = [
        (3000, 3100), (3000, 2900), (3000, 3050), (5000, 5100), (5000, 4900),
        (1000, 1100), (1100, 1000), (2500, 2599), (2500, 2401), (0, 100),
        (100, 0), (0, 99), (99, 0), (7500, 7600), (7600, 7500),
        (4200, 4299), (4299, 4200), (1234, 1334), (1334, 1234), (6000, 8000),
        (8000, 6000), (0, 0), (4500, 4500), (9900, 10000), (10000, 9900),
        (9950, 10000), (2000, 1950), (1700, 1801), (1801, 1700), (3300, 3399),
    ];
    let band_bp = 100;
    let mut seen = [0usize; 3];
    let mut edges = 0;
    for (b, a) in pairs {
        let want = if (a - b).abs() < band_bp {
            Dynamics::Stable
        } else if a > b {
            Dynamics::Progression
        } else {
            Dynamics::PositiveResponse
        };
        if (a - b).abs() == band_bp {
            edges += 1;
        }
        let got = dynamics(b as f64 / 1e4, a as f64 / 1e4, 0.01);
        check(got == want, format!("{b} -> {a}: {got}, expected {want}"))?;
        seen[want as usize] += 1;
    }
    check(seen.iter().all(|n| *n > 0), "not all classes covered")?;
    Ok(format!("30 pairs, {edges} at exactly the 0.01 band edge"))
}

// 10 --------------------------------------------------------------------

fn write_series(dir: &Path, slices: &[SliceEncoding], names: &[&str]) {
    fs::create_dir_all(dir).unwrap();
    for (s, n) in slices.iter().zip(names) {
        fs::write(dir.join(n), s.encode()).unwrap();
    }
}

fn slice_pixels(rng: &mut ChaCha8Rng, n: usize, lo: i32, hi: i32) -> Vec<i32> {
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Decodes the pixel bytes of an encoded file by hand: the last
/// `rows * cols * 2` bytes are the little-endian pixel values.
fn stored_from_bytes(bytes: &[u8], n: usize, bits: u32, signed: bool) -> Vec<i32> {
    let tail = &bytes[bytes.len() - 2 * n..];
    tail.chunks(2)
        .map(|c| {
            let raw = (c[0] as u32 | (c[1] as u32) << 8) & ((1u32 << bits) - 1);
            if signed && raw >> (bits - 1) == 1 {
                raw as i32 - (1i32 << bits)
            } else {
                raw as i32
            }
        })
        .collect()
}

fn parser_round_trips() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let opts = SeriesOptions { series_filter: None };
    let mut layouts = 0;

    // (rows, cols, depth, positions or None, signed, bits stored, slope, intercept)
    let specs: [(u16, u16, usize, Option<Vec<f64>>, bool, u16, f64, f64); 4] = [
        (4, 4, 2, Some(vec![0.0, 2.5]), true, 16, 1.0, -1024.0),
        (3, 5, 4, Some(vec![10.0, 7.0, 4.0, 1.0]), true, 16, 1.0, -1024.0),
        (6, 2, 3, None, false, 12, 1.0, -1024.0),
        (2, 3, 5, Some(vec![-2.0, -4.0, -6.0, -8.0, -10.0]), true, 13, 2.0, -1000.0),
    ];
    for (li, (rows, cols, depth, pos, signed, bits, slope, intercept)) in specs.into_iter().enumerate() {
        let n = rows as usize * cols as usize;
        let (lo, hi) = match (signed, bits) {
            (true, b) => (-(1 << (b - 1)), (1 << (b - 1)) - 1),
            (false, b) => (0, (1 << b) - 1),
        };
        let mut encs = Vec::new();
        for z in 0..depth {
            let mut e = SliceEncoding::new(rows, cols, slice_pixels(&mut rng, n, lo, hi));
            e.signed = signed;
            e.bits_stored = bits;
            e.rescale_slope = slope;
            e.rescale_intercept = intercept;
            e.pixel_spacing = Some((0.5, 0.75));
            e.slice_thickness = Some(1.25);
            match &pos {
                Some(p) => e.image_position = Some([0.0, 0.0, p[z]]),
                None => e.instance_number = Some(depth as i64 - z as i64),
            }
            encs.push(e);
        }
        // file names deliberately disagree with the stacking order
        let names: Vec<String> = (0..depth).map(|z| format!("f{:02}.dcm", (z * 7 + 3) % depth)).collect();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let dir = tmp.path().join(format!("layout{li}"));
        write_series(&dir, &encs, &name_refs);
        let vol = parse_dicom_series_with(&dir, &opts).map_err(|e| format!("layout {li}: {e}"))?;
        check(vol.dims() == Dims::new(cols as usize, rows as usize, depth), format!("layout {li}: dims"))?;
        check(vol.rescale_intercept == intercept && vol.rescale_slope == slope, "rescale")?;

        // expected stacking order: ascending position, else ascending instance number
        let mut order: Vec<usize> = (0..depth).collect();
        match &pos {
            Some(p) => order.sort_by(|a, b| p[*a].total_cmp(&p[*b])),
            None => order.sort_by_key(|z| depth - z),
        }
        let hu = lesionscope::preprocess::to_hounsfield(&vol).map_err(|e| e.to_string())?;
        for (out_z, src) in order.iter().enumerate() {
            let bytes = encs[*src].encode();
            let stored = stored_from_bytes(&bytes, n, bits as u32, signed);
            for (i, s) in stored.iter().enumerate() {
                let want = slope * *s as f64 + intercept;
                let got = hu.voxels()[out_z * n + i];
                check(got == want, format!("layout {li} slice {out_z} px {i}: {got} vs {want}"))?;
            }
        }
        layouts += 1;
    }

    // sidecar round trip, bit-exact
    let dims = Dims::new(5, 4, 3);
    let raw: Vec<f64> = (0..dims.len()).map(|_| rng.random_range(-2000..3000) as f64).collect();
    let ct = CtVolume::new(dims, Spacing::new(0.7, 0.8, 2.5), raw, UnitState::RawStored)
        .unwrap()
        .with_rescale(1.0, -1024.0);
    let probs: Vec<f32> = (0..dims.len()).map(|_| rng.random::<f32>()).collect();
    let mask = BinaryMask::new(dims, (0..dims.len()).map(|_| rng.random()).collect()).unwrap();
    for (name, v) in [
        ("ct", RawVolume::Ct(ct)),
        ("prob", RawVolume::Prob(prob(dims, probs), Spacing::default())),
        ("mask", RawVolume::Mask(mask, Spacing::new(1.0, 1.0, 3.0))),
    ] {
        let h = tmp.path().join(format!("{name}.hdr"));
        write_raw_volume(&v, &h).map_err(|e| e.to_string())?;
        let payload = fs::read(tmp.path().join(format!("{name}.raw"))).unwrap();
        let back = read_raw_volume(&h).map_err(|e| e.to_string())?;
        check(back == v, format!("{name} round trip differs"))?;
        write_raw_volume(&back, &h).unwrap();
        check(fs::read(tmp.path().join(format!("{name}.raw"))).unwrap() == payload, "payload bytes differ")?;
    }

    // fuzzing: every truncation must be a typed error, mutations must not panic
    let mut base = SliceEncoding::new(8, 8, slice_pixels(&mut rng, 64, -1024, 3000));
    base.image_position = Some([0.0, 0.0, 1.0]);
    base.pixel_spacing = Some((0.7, 0.7));
    let bytes = base.encode();
    let src = Path::new("fuzz");
    let mut crashes = 0;
    let mut truncation_ok = 0;
    for iter in 0..10_000 {
        let mut data = bytes.clone();
        if iter % 2 == 0 {
            let cut = rng.random_range(0..data.len());
            data.truncate(cut);
            match catch_unwind(|| parse_dicom_bytes(&data, src)) {
                Ok(Err(_)) => truncation_ok += 1,
                Ok(Ok(_)) => return Err(format!("truncation at {cut} parsed")),
                Err(_) => crashes += 1,
            }
        } else {
            for _ in 0..rng.random_range(1..8) {
                let i = rng.random_range(0..data.len());
                data[i] = rng.random();
            }
            if rng.random::<bool>() {
                let cut = rng.random_range(0..data.len());
                data.truncate(cut);
            }
            if catch_unwind(|| parse_dicom_bytes(&data, src)).is_err() {
                crashes += 1;
            }
        }
    }
    check(crashes == 0, format!("{crashes} panics"))?;
    Ok(format!(
        "{layouts} DICOM layouts exact, 3 sidecar kinds bit-exact, 10000 fuzz cases ({truncation_ok} truncations) without panic"
    ))
}

// 11 --------------------------------------------------------------------

fn subset_search() -> Outcome {
    let pool = [0.61, 0.74, 0.58];
    let objective = |idx: &[usize]| idx.iter().map(|i| pool[*i]).sum::<f64>() - 0.1 * idx[0] as f64;
    let mut best = (f64::MIN, vec![]);
    for a in 0..3 {
        for b in a + 1..3 {
            let v = objective(&[a, b]);
            if v > best.0 {
                best = (v, vec![a, b]);
            }
        }
    }
    let cfg = SubsetSearchConfig {
        pool_size: 3,
        subset_size: 2,
        sample_count: 32,
        rng_seed: 5,
    };
    let r1 = select_best_subset(&pool, &cfg, objective).map_err(|e| e.to_string())?;
    check(r1.indices == best.1 && r1.value == best.0, format!("got {:?}, oracle {:?}", r1.indices, best.1))?;
    for _ in 0..5 {
        let again = select_best_subset(&pool, &cfg, objective).unwrap();
        check(again == r1, "repeated run differs")?;
    }
    Ok(format!("optimum {:?} found, 5 repeats identical", best.1))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("fusion oracle equivalence", fusion_oracle),
        ("scoring-rule fidelity", scoring_rule),
        ("metric identities", metric_identities),
        ("phantom share recovery", phantom_recovery),
        ("CT-class boundary table", ct_boundaries),
        ("threshold-fit recovery", threshold_recovery),
        ("permutation-test exactness", permutation_exactness),
        ("leave-one-out golden table", golden_study),
        ("dynamics classification", dynamics_pairs),
        ("parser round-trips", parser_round_trips),
        ("subset search", subset_search),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
