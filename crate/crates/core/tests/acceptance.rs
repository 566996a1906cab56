//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng as _, SeedableRng};

use maneuver_core::augment::{
    augmix, autocontrast, build_pipeline, cutout, equalize, flip_frames, flip_lr, posterize, solarize, translate,
    AugOp, AugPipelineConfig, AugmixParams, CutoutParams, Preset, TranslateParams, MAX_SHIFT,
};
use maneuver_core::cli::config::{resolve, Profile};
use maneuver_core::cli::run_with_env;
use maneuver_core::dataio::{
    generate_synthetic, holdout_split, BranchKind, Clip, Frame, HorizonSpec, ManeuverLabel, SynthOptions,
    NUM_CLASSES,
};
use maneuver_core::eval::{horizon_eval, mean_std, metrics_from_confusion, class_metrics, confusion, otc_vote, ConfusionMatrix, KFoldRow, MetricsRow};
use maneuver_core::net::{
    argmax, cross_entropy, dropblock, dropblock_mask, isda_loss, softmax, softmax_f32, ClassifierView,
    DropBlockParams, GlobalAttention, IsdaState, ParamStore, Scenario,
};
use maneuver_core::rng::Rng;
use maneuver_core::train::train_clips;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1-3

struct SyntheticRuns {
    both: Vec<MetricsRow>,
    inside: Vec<MetricsRow>,
    outside: Vec<MetricsRow>,
    test_len: usize,
    seconds_both: f64,
}

fn acc_at(rows: &[MetricsRow], t: i32) -> f64 {
    rows.iter().find(|r| r.horizon == t).map_or(f64::NAN, |r| r.accuracy / 100.0)
}

fn synthetic_runs(dir: &Path) -> maneuver_core::Result<SyntheticRuns> {
    let cfg = resolve(Profile::Desk, None, Vec::new())?;
    let t0 = Instant::now();
    let manifest = generate_synthetic(SynthOptions::new(500, 7), dir)?;
    let (train_m, test_m) = holdout_split(&manifest, cfg.data.split_ratio, 7)?;
    let train = train_m.load_all(&BranchKind::ALL)?;
    let test = test_m.load_all(&BranchKind::ALL)?;
    let horizons = HorizonSpec::all();

    let run = |scenario: Scenario| -> maneuver_core::Result<Vec<MetricsRow>> {
        let mut tc = cfg.train_config();
        tc.model.scenario = scenario;
        let out = train_clips(&train, &tc, None)?;
        horizon_eval(&out.model, &test, &horizons, None)
    };
    let both = run(Scenario::Both)?;
    let seconds_both = t0.elapsed().as_secs_f64();
    let inside = run(Scenario::InsideOnly)?;
    let outside = run(Scenario::OutsideOnly)?;
    Ok(SyntheticRuns {
        both,
        inside,
        outside,
        test_len: test.len(),
        seconds_both,
    })
}

fn criterion_1(r: &SyntheticRuns) -> Outcome {
    let acc = acc_at(&r.both, 0);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        r.test_len == 100 && acc >= 0.90 && r.seconds_both <= 900.0,
        format!(
            "held-out {} clips, T=0 accuracy {acc:.3} (>= 0.90), synth+train+eval {:.0} s on {cores} core(s) (<= 900 s)",
            r.test_len, r.seconds_both
        ),
    )
}

fn criterion_2(r: &SyntheticRuns) -> Outcome {
    let (a0, a4) = (acc_at(&r.both, 0), acc_at(&r.both, -4));
    let by_t: Vec<String> = r.both.iter().map(|m| format!("T={}:{:.2}", m.horizon, m.accuracy / 100.0)).collect();
    outcome(a0 >= a4 + 0.10, format!("acc(T=0) {a0:.3} vs acc(T=-4) {a4:.3} + 0.10 [{}]", by_t.join(" ")))
}

fn criterion_3(r: &SyntheticRuns) -> Outcome {
    let (b, i, o) = (acc_at(&r.both, 0), acc_at(&r.inside, 0), acc_at(&r.outside, 0));
    outcome(
        b + 0.02 >= i && b + 0.02 >= o,
        format!("T=0 accuracy both {b:.3}, inside_only {i:.3}, outside_only {o:.3} (slack 0.02)"),
    )
}

// ---------------------------------------------------------------- 4-5

struct IsdaCase {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    w: Vec<f64>,
    b: Vec<f64>,
    state: IsdaState,
    dim: usize,
}

fn isda_case(rng: &mut Rng) -> IsdaCase {
    let dim = rng.random_range(1..=8);
    let n = rng.random_range(1..=6);
    let features: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
    let w = (0..NUM_CLASSES * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let b = (0..NUM_CLASSES).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut state = IsdaState::new(dim);
    for c in 0..NUM_CLASSES {
        for d in 0..dim {
            state.var[c][d] = rng.random_range(0.0..1.5);
        }
    }
    IsdaCase { features, labels, w, b, state, dim }
}

impl IsdaCase {
    fn view(&self) -> ClassifierView<'_> {
        ClassifierView { w: &self.w, b: &self.b, dim: self.dim }
    }

    fn loss(&self, lambda: f64) -> f64 {
        isda_loss(&self.features, &self.labels, self.view(), &self.state, lambda).unwrap().loss
    }
}

/// Mean `logsumexp(z) − z_y` computed directly from the weights.
fn oracle_ce(c: &IsdaCase) -> f64 {
    let mut total = 0.0;
    for (f, &y) in c.features.iter().zip(&c.labels) {
        let z: Vec<f64> = (0..NUM_CLASSES)
            .map(|j| (0..c.dim).map(|i| c.w[j * c.dim + i] * f[i]).sum::<f64>() + c.b[j])
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[y];
    }
    total / c.features.len() as f64
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let c = isda_case(&mut r);
        let isda = c.loss(0.0);
        let logits: Vec<Vec<f64>> = c.features.iter().map(|f| c.view().logits(f)).collect();
        let lib_ce = logits.iter().zip(&c.labels).map(|(z, &y)| cross_entropy(z, y)).sum::<f64>() / c.labels.len() as f64;
        worst = worst.max((isda - oracle_ce(&c)).abs()).max((isda - lib_ce).abs());
    }
    outcome(worst <= 1e-6, format!("max |isda(lambda=0) - CE| over 1000 instances = {worst:.2e} (<= 1e-6)"))
}

fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut c = isda_case(&mut r);
        let lambda = r.random_range(0.1..1.0);
        let out = isda_loss(&c.features, &c.labels, c.view(), &c.state, lambda).unwrap();

        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for s in 0..c.features.len() {
            for d in 0..c.dim {
                let x = c.features[s][d];
                c.features[s][d] = x + h;
                let up = c.loss(lambda);
                c.features[s][d] = x - h;
                let dn = c.loss(lambda);
                c.features[s][d] = x;
                analytic.push(out.d_features[s][d]);
                numeric.push((up - dn) / (2.0 * h));
            }
        }
        for k in 0..c.w.len() {
            let x = c.w[k];
            c.w[k] = x + h;
            let up = c.loss(lambda);
            c.w[k] = x - h;
            let dn = c.loss(lambda);
            c.w[k] = x;
            analytic.push(out.d_w[k]);
            numeric.push((up - dn) / (2.0 * h));
        }
        for k in 0..c.b.len() {
            let x = c.b[k];
            c.b[k] = x + h;
            let up = c.loss(lambda);
            c.b[k] = x - h;
            let dn = c.loss(lambda);
            c.b[k] = x;
            analytic.push(out.d_b[k]);
            numeric.push((up - dn) / (2.0 * h));
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    outcome(worst <= 1e-4, format!("max relative gradient error over 50 instances = {worst:.2e} (<= 1e-4)"))
}

// ---------------------------------------------------------------- 6

fn oracle_macro(preds: &[usize], truths: &[usize]) -> (f64, [f64; NUM_CLASSES], [f64; NUM_CLASSES], [f64; NUM_CLASSES]) {
    let mut p = [0.0; NUM_CLASSES];
    let mut rc = [0.0; NUM_CLASSES];
    let mut f = [0.0; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (&pr, &t) in preds.iter().zip(truths) {
            match (pr == c, t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        p[c] = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        rc[c] = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        f[c] = if p[c] + rc[c] > 0.0 { 2.0 * p[c] * rc[c] / (p[c] + rc[c]) } else { 0.0 };
    }
    let correct = preds.iter().zip(truths).filter(|(a, b)| a == b).count();
    (correct as f64 / preds.len() as f64, p, rc, f)
}

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let mut list_mismatch = 0;
    for _ in 0..1000 {
        let n = r.random_range(1..=60);
        let truths: Vec<usize> = (0..n).map(|_| r.random_range(0..NUM_CLASSES)).collect();
        let preds: Vec<usize> = (0..n).map(|_| r.random_range(0..NUM_CLASSES)).collect();
        let lab = |v: &[usize]| -> Vec<ManeuverLabel> { v.iter().map(|&i| ManeuverLabel::from_index(i).unwrap()).collect() };
        let cm = confusion(&lab(&preds), &lab(&truths)).unwrap();
        let m = metrics_from_confusion(&cm).unwrap();
        let (acc, p, rc, f) = oracle_macro(&preds, &truths);
        let k = NUM_CLASSES as f64;
        let same = m.accuracy == acc
            && m.precision == p.iter().sum::<f64>() / k
            && m.recall == rc.iter().sum::<f64>() / k
            && m.f1 == f.iter().sum::<f64>() / k
            && (0..NUM_CLASSES).all(|c| m.per_class[c].precision == p[c] && m.per_class[c].recall == rc[c] && m.per_class[c].f1 == f[c]);
        if !same {
            list_mismatch += 1;
        }
    }

    // A class's F1 reads only its row and column (9 cells). Every class
    // is checked against all 3^9 assignments of those cells.
    let mut fill = rng(60);
    let mut identity_fail = 0;
    let mut checked = 0u64;
    for c in 0..NUM_CLASSES {
        let cells: Vec<(usize, usize)> = (0..NUM_CLASSES)
            .flat_map(|i| (0..NUM_CLASSES).map(move |j| (i, j)))
            .filter(|&(i, j)| i == c || j == c)
            .collect();
        for code in 0..3u32.pow(cells.len() as u32) {
            let mut cm = ConfusionMatrix::default();
            for row in cm.counts.iter_mut() {
                for v in row.iter_mut() {
                    *v = fill.random_range(0..3);
                }
            }
            let mut k = code;
            for &(i, j) in &cells {
                cm.counts[i][j] = (k % 3) as u64;
                k /= 3;
            }
            let m = class_metrics(&cm, c);
            let tp = cm.counts[c][c] as f64;
            let fp: f64 = (0..NUM_CLASSES).filter(|&t| t != c).map(|t| cm.counts[t][c] as f64).sum();
            let fn_: f64 = (0..NUM_CLASSES).filter(|&p| p != c).map(|p| cm.counts[c][p] as f64).sum();
            let counts_f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
            let harmonic = if m.precision > 0.0 && m.recall > 0.0 { 2.0 / (1.0 / m.precision + 1.0 / m.recall) } else { 0.0 };
            let bounded = m.f1 >= m.precision.min(m.recall) - 1e-12 && m.f1 <= m.precision.max(m.recall) + 1e-12;
            if (m.f1 - counts_f1).abs() > 1e-12 || (m.f1 - harmonic).abs() > 1e-12 || !bounded {
                identity_fail += 1;
            }
            checked += 1;
        }
    }
    outcome(
        list_mismatch == 0 && identity_fail == 0,
        format!(
            "{list_mismatch}/1000 lists differ from the pair-counting oracle; F1 identity failures {identity_fail}/{checked} (all 3^9 row+column assignments per class)"
        ),
    )
}

// ---------------------------------------------------------------- 7

fn brute_vote(votes: [usize; 3], probs: &[[f64; NUM_CLASSES]; 3]) -> usize {
    let mut counts = [0; NUM_CLASSES];
    for v in votes {
        counts[v] += 1;
    }
    if let Some(c) = (0..NUM_CLASSES).find(|&c| counts[c] >= 2) {
        return c;
    }
    let mut best = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for c in 0..NUM_CLASSES {
        if counts[c] == 0 {
            continue;
        }
        let s = probs[0][c] + probs[1][c] + probs[2][c];
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

fn criterion_7() -> Outcome {
    let mut r = rng(7);
    let mut mismatches = 0;
    let mut cases = 0;
    for a in 0..NUM_CLASSES {
        for b in 0..NUM_CLASSES {
            for c in 0..NUM_CLASSES {
                let votes = [a, b, c];
                let mut prob_sets = vec![[[0.2; NUM_CLASSES]; 3]];
                for _ in 0..20 {
                    let mut p = [[0.0; NUM_CLASSES]; 3];
                    for row in p.iter_mut() {
                        let raw: Vec<f64> = (0..NUM_CLASSES).map(|_| r.random_range(0.0..1.0)).collect();
                        let s: f64 = raw.iter().sum();
                        for (k, v) in raw.iter().enumerate() {
                            row[k] = v / s;
                        }
                    }
                    prob_sets.push(p);
                }
                for p in &prob_sets {
                    cases += 1;
                    if otc_vote(votes, p) != brute_vote(votes, p) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    outcome(mismatches == 0, format!("125 vote triples x 21 probability sets: {mismatches}/{cases} mismatches"))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let folds = [87.91, 87.91, 89.01, 87.91, 89.01];
    let row = KFoldRow::from_folds(0, "Our", &folds);
    let n = folds.len() as f64;
    let mean = folds.iter().sum::<f64>() / n;
    let std = (folds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let (lib_mean, lib_std) = mean_std(&folds);
    let pass = row.mean == 88.35
        && (lib_mean - mean).abs() < 1e-9
        && (lib_std - std).abs() < 1e-9
        && (std * 10.0).round() / 10.0 == 0.6
        && row.std == (std * 100.0).round() / 100.0;
    outcome(pass, format!("mean {} (88.35), std {lib_std:.4} -> {} (printed .6)", row.mean, row.std))
}

// ---------------------------------------------------------------- 9

fn random_frames(r: &mut Rng, n: usize, h: usize, w: usize, lo: u8) -> Vec<Frame> {
    (0..n)
        .map(|_| Frame::new(h, w, (0..h * w * 3).map(|_| r.random_range(lo..=255)).collect()).unwrap())
        .collect()
}

fn random_clip(r: &mut Rng, lo: u8) -> Clip {
    let h = r.random_range(8..=24);
    let w = r.random_range(8..=24);
    let mut branches = BTreeMap::new();
    for kind in BranchKind::ALL {
        branches.insert(kind, random_frames(r, 15, h, w, lo));
    }
    Clip {
        id: "c".into(),
        label: ManeuverLabel::from_index(r.random_range(0..NUM_CLASSES)).unwrap(),
        driver_id: "d".into(),
        branches,
    }
}

fn same_shape(a: &[Frame], b: &[Frame]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.dims() == y.dims() && x.data().len() == y.data().len())
}

/// Changed pixels form one `side×side` square, in bounds, at the same
/// place in every frame, with all channels set to `fill`.
fn one_square(before: &[Frame], after: &[Frame], side: usize, fill: u8) -> bool {
    let mut corner = None;
    for (b, a) in before.iter().zip(after) {
        let (h, w) = b.dims();
        let changed: Vec<(usize, usize)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .filter(|&(y, x)| (0..3).any(|c| b.get(y, x, c) != a.get(y, x, c)))
            .collect();
        if changed.len() != side * side {
            return false;
        }
        let y0 = changed.iter().map(|p| p.0).min().unwrap();
        let x0 = changed.iter().map(|p| p.1).min().unwrap();
        if y0 + side > h || x0 + side > w {
            return false;
        }
        let square = changed.iter().all(|&(y, x)| y < y0 + side && x < x0 + side && (0..3).all(|c| a.get(y, x, c) == fill));
        if !square || *corner.get_or_insert((y0, x0)) != (y0, x0) {
            return false;
        }
    }
    true
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let mut failures: Vec<String> = Vec::new();

    let mut involution = 0;
    let mut mirrored = true;
    for _ in 0..200 {
        let clip = random_clip(&mut r, 0);
        let frames = &clip.branches[&BranchKind::InsideAppearance];
        let (f1, l1) = flip_lr(frames, clip.label);
        let (f2, l2) = flip_lr(&f1, l1);
        if &f2 == frames && l2 == clip.label {
            involution += 1;
        }
        let (h, w) = frames[0].dims();
        mirrored &= (0..h).all(|y| (0..w).all(|x| (0..3).all(|c| f1[0].get(y, x, c) == frames[0].get(y, w - 1 - x, c))));
    }
    if involution != 200 || !mirrored {
        failures.push(format!("flip involution {involution}/200, pixel mirror {mirrored}"));
    }

    use ManeuverLabel::*;
    let table = [
        (GoStraight, GoStraight),
        (LeftLaneChange, RightLaneChange),
        (LeftTurn, RightTurn),
        (RightLaneChange, LeftLaneChange),
        (RightTurn, LeftTurn),
    ];
    if !table.iter().all(|&(a, b)| a.mirror() == b) {
        failures.push("mirror table".into());
    }

    let mut shape_fail = 0;
    let mut square_fail = 0;
    let full = build_pipeline(&AugPipelineConfig::preset(Preset::E)).unwrap();
    let cut_only = build_pipeline(&AugPipelineConfig {
        enabled: [AugOp::Cutout].into_iter().collect(),
        ..AugPipelineConfig::preset(Preset::A)
    })
    .unwrap();
    for _ in 0..200 {
        let clip = random_clip(&mut r, 1);
        let frames = &clip.branches[&BranchKind::OutsideAppearance];
        let tp = TranslateParams::new(r.random_range(-MAX_SHIFT..=MAX_SHIFT), r.random_range(-MAX_SHIFT..=MAX_SHIFT)).unwrap();
        let side = r.random_range(1..=frames[0].height().min(frames[0].width()));
        let cp = CutoutParams { side, fill: 0 };
        let params = AugmixParams::default();
        let outputs: Vec<Vec<Frame>> = vec![
            flip_frames(frames),
            translate(frames, tp).unwrap(),
            cutout(frames, cp, &mut r).unwrap(),
            frames.iter().map(|f| augmix(f, &params, &mut r)).collect(),
            frames.iter().map(autocontrast).collect(),
            frames.iter().map(equalize).collect(),
            frames.iter().map(|f| posterize(f, 3).unwrap()).collect(),
            frames.iter().map(|f| solarize(f, 128)).collect(),
        ];
        shape_fail += outputs.iter().filter(|o| !same_shape(frames, o)).count();
        let aug = full.apply(&clip, &mut r).unwrap();
        shape_fail += BranchKind::ALL.iter().filter(|k| !same_shape(&clip.branches[k], &aug.branches[k])).count();

        if !one_square(frames, &outputs[2], side, 0) {
            square_fail += 1;
        }
        let masked = cut_only.apply(&clip, &mut r).unwrap();
        for kind in BranchKind::ALL {
            let (before, after) = (&clip.branches[&kind], &masked.branches[&kind]);
            let ok = if kind.is_flow() {
                before == after
            } else {
                one_square(before, after, cut_only.config().cutout_params(&before[0]).side, 0)
            };
            if !ok {
                square_fail += 1;
            }
        }
    }
    if shape_fail > 0 {
        failures.push(format!("{shape_fail} shape changes"));
    }
    if square_fail > 0 {
        failures.push(format!("{square_fail} cutout results are not exactly one square"));
    }
    let detail = if failures.is_empty() {
        "flip involution 200/200, mirror table, shape preserved by 8 ops + full pipeline, one cutout square per clip".to_string()
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let mut r = rng(10);
    let p = DropBlockParams { block_size: 5, keep_prob: 0.9 };
    let (c, h, w) = (4, 16, 16);
    let map: Vec<f32> = (0..c * h * w).map(|_| r.random_range(-3.0..3.0)).collect();
    let (eval, mask) = dropblock(&map, c, h, w, &p, None).unwrap();
    let identity = eval == map && mask.is_none();

    let trials = 10_000;
    let mut kept = 0usize;
    for _ in 0..trials {
        let m = dropblock_mask(1, h, w, &p, &mut r).unwrap();
        kept += m.iter().filter(|&&v| v > 0.0).count();
    }
    let frac = kept as f64 / (trials * h * w) as f64;
    outcome(
        identity && (frac - 0.9).abs() <= 0.05,
        format!("eval identity {identity}; train keep fraction {frac:.4} over {trials} trials (0.9 +/- 0.05)"),
    )
}

// ---------------------------------------------------------------- 11

fn criterion_11() -> Outcome {
    let mut r = rng(11);
    let mut worst_attn: f64 = 0.0;
    for _ in 0..1000 {
        let hidden = r.random_range(1..=12);
        let units = r.random_range(1..=12);
        let n = r.random_range(1..=15);
        let mut store = ParamStore::default();
        let scale = r.random_range(0.1..3.0);
        let layer = GlobalAttention::new(&mut store, "a", hidden, units, &mut r);
        for t in store.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= scale);
        }
        let h: Vec<f32> = (0..n * hidden).map(|_| r.random_range(-4.0..4.0)).collect();
        let (_, cache) = layer.forward(&store, &h, n);
        let s: f64 = cache.alpha.iter().map(|&a| a as f64).sum();
        worst_attn = worst_attn.max((s - 1.0).abs());
    }

    let mut worst_norm: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    let mut argmax_fail = 0;
    for _ in 0..1000 {
        let k = r.random_range(2..=10);
        let z: Vec<f64> = (0..k).map(|_| r.random_range(-20.0..20.0)).collect();
        let shift = r.random_range(-100.0..100.0);
        let zs: Vec<f64> = z.iter().map(|v| v + shift).collect();
        let p = softmax(&z).unwrap();
        let ps = softmax(&zs).unwrap();
        let pf = softmax_f32(&z.iter().map(|&v| v as f32).collect::<Vec<_>>());
        worst_norm = worst_norm
            .max((p.iter().sum::<f64>() - 1.0).abs())
            .max((pf.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs());
        worst_shift = worst_shift.max(p.iter().zip(&ps).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        if argmax(&p) != argmax(&z) || argmax(&ps) != argmax(&z) {
            argmax_fail += 1;
        }
    }
    outcome(
        worst_attn <= 1e-6 && worst_norm <= 1e-6 && worst_shift <= 1e-9 && argmax_fail == 0,
        format!(
            "attention |sum-1| max {worst_attn:.1e}; softmax |sum-1| max {worst_norm:.1e}; shift diff max {worst_shift:.1e}; argmax changes {argmax_fail}/1000"
        ),
    )
}

// ---------------------------------------------------------------- 12

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["maneuver"];
    full.extend_from_slice(args);
    run_with_env(full, &[])
}

fn criterion_12(dir: &Path) -> Outcome {
    let data = dir.join("data");
    let (a, b) = (dir.join("run_a"), dir.join("run_b"));
    let (data_s, a_s, b_s) = (data.to_str().unwrap(), a.to_str().unwrap(), b.to_str().unwrap());
    let root = format!("data.root={data_s:?}");
    let common = ["--set", "data.synth_clips=40", "--set", "train.epochs=2", "--set", "eval.otc=true", "--workers", "1"];

    let mut codes = vec![cli(&[&["synth", "--out", data_s, "--set", &root][..], &common[..]].concat())];
    codes.push(cli(&[&["train", "--out", a_s, "--set", &root][..], &common[..]].concat()));
    codes.push(cli(&[&["eval", "--out", a_s, "--set", &root][..], &common[..]].concat()));
    let resolved = a.join("resolved_config.toml");
    let resolved_s = resolved.to_str().unwrap();
    codes.push(cli(&["train", "--config", resolved_s, "--out", b_s, "--workers", "1"]));
    codes.push(cli(&["eval", "--config", resolved_s, "--out", b_s, "--workers", "1"]));
    if codes.iter().any(|&c| c != 0) {
        return outcome(false, format!("cli exit codes {codes:?}"));
    }
    let mut same = Vec::new();
    for name in ["report.json", "report.csv", "resolved_config.toml", "final.ckpt"] {
        let x = std::fs::read(a.join(name)).unwrap_or_default();
        let y = std::fs::read(b.join(name)).unwrap_or(vec![1]);
        same.push((name, !x.is_empty() && x == y));
    }
    let all = same.iter().all(|s| s.1);
    let detail: Vec<String> = same.iter().map(|(n, s)| format!("{n} {}", if *s { "identical" } else { "DIFFERS" })).collect();
    outcome(all, detail.join(", "))
}

// ----------------------------------------------------------------

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        if !o.pass {
            failed += 1;
        }
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };

    report(4, "isda reduces to cross-entropy", criterion_4());
    report(5, "isda gradients", criterion_5());
    report(6, "metric oracle", criterion_6());
    report(7, "otc vote oracle", criterion_7());
    report(8, "k-fold aggregation", criterion_8());
    report(9, "augmentation properties", criterion_9());
    report(10, "dropblock", criterion_10());
    report(11, "attention and softmax normalization", criterion_11());

    let tmp = tempfile::tempdir().expect("tempdir");
    report(12, "determinism", criterion_12(&tmp.path().join("det")));

    match synthetic_runs(&tmp.path().join("synth")) {
        Ok(runs) => {
            report(1, "synthetic end-to-end", criterion_1(&runs));
            report(2, "horizon degradation", criterion_2(&runs));
            report(3, "scenario ordering", criterion_3(&runs));
        }
        Err(e) => {
            for (n, name) in [(1, "synthetic end-to-end"), (2, "horizon degradation"), (3, "scenario ordering")] {
                report(n, name, outcome(false, format!("run failed: {e}")));
            }
        }
    }

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 12 acceptance criteria passed");
}
