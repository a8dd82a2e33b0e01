//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! cargo test --release --test acceptance

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swirpad::bandselect::{rank_differences_over, sffs_select, RankedDiffs, Step, MAX_ERROR};
use swirpad::dataset::{AttackType, BandImage, Label, Protocol, SpectralStack, Wavelength};
use swirpad::evalkit::{compute_rates, ScoreSet};
use swirpad::models::{
    adapt_first_layer, fit_skin_gmm, ModelKind, Network, PixBisConfig, PixBisNet, ScorerConfig, Svm,
    SvmParams,
};
use swirpad::pipeline::{run_pipeline, PipelineConfig, PipelineOutcome};
use swirpad::swirdiff::{enumerate_ordered_pairs, DiffSpec};
use swirpad::synthgen::GeneratorConfig;

const SWIR: [Wavelength; 7] = [940, 1050, 1200, 1300, 1450, 1550, 1650];

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn pair_count() -> Outcome {
    let n = enumerate_ordered_pairs(&SWIR).map_err(|e| e.to_string())?.len();
    check(n == 42, format!("{n} ordered pairs over 7 bands"))
}

/// Score set with `accepted` of `attacks` attacks and `rejected` of `bonafide` bonafide on the wrong side of 0.5.
fn score_set(accepted: usize, attacks: usize, rejected: usize, bonafide: usize) -> ScoreSet {
    let mut s = Vec::new();
    s.extend((0..attacks).map(|i| (if i < accepted { 0.9 } else { 0.1 }, AttackType::Print)));
    s.extend((0..bonafide).map(|i| (if i < rejected { 0.1 } else { 0.9 }, AttackType::None)));
    ScoreSet::from_scores(&s).unwrap()
}

fn metric_rows() -> Outcome {
    let rows = [
        ((0, 1000, 100, 1000), 5.0),
        ((0, 1000, 94, 1000), 4.7),
        ((60, 1000, 72, 1000), 6.6),
    ];
    let mut got = Vec::new();
    for ((a, na, r, nb), acer) in rows {
        let t = compute_rates(&score_set(a, na, r, nb), 0.5).map_err(|e| e.to_string())?;
        if t.acer != acer {
            return Err(format!("APCER {} BPCER {} gave ACER {}, expected {acer}", t.apcer, t.bpcer, t.acer));
        }
        got.push(format!("({}, {})->{}", t.apcer, t.bpcer, t.acer));
    }
    Ok(got.join(" "))
}

/// Brute-force transcription of the ratio ranking: every ordered example pair, mean
/// normalized difference per example, absolute differences accumulated by class pairing.
fn oracle_ratios(examples: &[(Vec<Vec<f32>>, Label)], wl: &[Wavelength], eps: f32) -> Vec<(DiffSpec, f64)> {
    let mut specs = Vec::new();
    for (a, &wa) in wl.iter().enumerate() {
        for (b, &wb) in wl.iter().enumerate() {
            if a != b {
                specs.push((a, b, DiffSpec { s1: wa, s2: wb }));
            }
        }
    }
    let s: Vec<Vec<f64>> = examples
        .iter()
        .map(|(bands, _)| {
            specs
                .iter()
                .map(|&(a, b, _)| {
                    let px: Vec<f64> = bands[a]
                        .iter()
                        .zip(&bands[b])
                        .map(|(&x, &y)| f64::from((x - y) / (x + y + eps)))
                        .collect();
                    px.iter().sum::<f64>() / px.len() as f64
                })
                .collect()
        })
        .collect();
    let d = specs.len();
    let (mut intra, mut inter) = (vec![0.0; d], vec![0.0; d]);
    let (mut k_bf, mut k_a) = (0.0, 0.0);
    for i in 0..examples.len() {
        for j in 0..examples.len() {
            if i == j {
                continue;
            }
            let delta: Vec<f64> = (0..d).map(|c| (s[i][c] - s[j][c]).abs()).collect();
            match (examples[i].1, examples[j].1) {
                (Label::Bonafide, Label::Bonafide) => {
                    intra.iter_mut().zip(&delta).for_each(|(a, x)| *a += x);
                    k_bf += 1.0;
                }
                (Label::Attack, Label::Attack) => {}
                _ => {
                    inter.iter_mut().zip(&delta).for_each(|(a, x)| *a += x);
                    k_a += 1.0;
                }
            }
        }
    }
    specs
        .iter()
        .enumerate()
        .map(|(c, &(_, _, spec))| (spec, (inter[c] / k_a) / (intra[c] / k_bf)))
        .collect()
}

fn stacks(examples: &[(Vec<Vec<f32>>, Label)], wl: &[Wavelength], side: usize) -> Vec<SpectralStack> {
    examples
        .iter()
        .map(|(bands, _)| {
            let imgs = bands
                .iter()
                .zip(wl)
                .map(|(v, &w)| BandImage::new(side, side, w, v.clone()).unwrap())
                .collect();
            SpectralStack::new(0, imgs).unwrap()
        })
        .collect()
}

fn rank(examples: &[(Vec<Vec<f32>>, Label)], wl: &[Wavelength], side: usize, eps: f32) -> RankedDiffs {
    let st = stacks(examples, wl, side);
    let refs: Vec<(&SpectralStack, Label)> = st.iter().zip(examples).map(|(s, e)| (s, e.1)).collect();
    rank_differences_over(&refs, wl, eps).unwrap()
}

fn ratio_ranking() -> Outcome {
    // hand example: ratios tie at 5.5 (up to f32 image precision) and keep pair order
    let hand = vec![
        (vec![vec![0.2], vec![0.8]], Label::Bonafide),
        (vec![vec![0.25], vec![0.75]], Label::Bonafide),
        (vec![vec![0.5], vec![0.5]], Label::Attack),
    ];
    let r = rank(&hand, &[1200, 1550], 1, 0.0);
    let order: Vec<DiffSpec> = r.specs();
    let hand_ok = order == vec![DiffSpec { s1: 1200, s2: 1550 }, DiffSpec { s1: 1550, s2: 1200 }]
        && r.entries.iter().all(|e| (e.ratio - 5.5).abs() < 1e-5);
    if !hand_ok {
        return Err(format!("hand example ranked {:?}", r.entries));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let n_wl = rng.random_range(2..=3);
        let mut wl: Vec<Wavelength> = Vec::new();
        while wl.len() < n_wl {
            let w = SWIR[rng.random_range(0..SWIR.len())];
            if !wl.contains(&w) {
                wl.push(w);
            }
        }
        let n = rng.random_range(3..=5);
        let examples: Vec<(Vec<Vec<f32>>, Label)> = (0..n)
            .map(|i| {
                let label = match i {
                    0 | 1 => Label::Bonafide,
                    2 => Label::Attack,
                    _ if rng.random_bool(0.5) => Label::Bonafide,
                    _ => Label::Attack,
                };
                let bands = (0..n_wl)
                    .map(|_| (0..4).map(|_| rng.random_range(0.05f32..1.0)).collect())
                    .collect();
                (bands, label)
            })
            .collect();
        let got = rank(&examples, &wl, 2, 1e-4);
        let want: HashMap<DiffSpec, f64> = oracle_ratios(&examples, &wl, 1e-4).into_iter().collect();
        if got.len() != want.len() {
            return Err(format!("{} entries, oracle has {}", got.len(), want.len()));
        }
        for e in &got.entries {
            let w = want[&e.spec];
            let err = (e.ratio - w).abs() / w.abs().max(1.0);
            worst = worst.max(err);
            if err > 1e-9 {
                return Err(format!("{}: ratio {} vs oracle {w}", e.spec, e.ratio));
            }
        }
        if got.entries.windows(2).any(|p| p[0].ratio < p[1].ratio) {
            return Err("ranking not sorted by decreasing ratio".into());
        }
    }
    Ok(format!("hand example and 5 random instances, worst ratio error {worst:.1e}"))
}

fn features(n: usize) -> Vec<DiffSpec> {
    enumerate_ordered_pairs(&SWIR).unwrap().into_iter().take(n).collect()
}

fn sffs_trace() -> Outcome {
    let s = features(3);
    let table: HashMap<Vec<DiffSpec>, f64> = [
        (vec![s[0]], 10.0),
        (vec![s[0], s[1]], 5.0),
        (vec![s[1]], 4.0),
        (vec![s[1], s[2]], 7.0),
    ]
    .into_iter()
    .collect();
    let j = |sub: &[DiffSpec]| Ok(*table.get(sub).unwrap_or(&MAX_ERROR));
    let r = sffs_select(&s, &j).map_err(|e| e.to_string())?;
    let trace: Vec<(Step, Vec<DiffSpec>, f64, bool)> =
        r.trace.iter().map(|t| (t.step, t.subset.clone(), t.value, t.accepted)).collect();
    let expected = vec![
        (Step::Forward, vec![s[0]], 10.0, true),
        (Step::Forward, vec![s[0], s[1]], 5.0, true),
        (Step::Backward, vec![s[1]], 4.0, true),
        (Step::Forward, vec![s[1], s[2]], 7.0, false),
    ];
    if trace != expected || r.selected != vec![s[1]] || r.best_error != 4.0 {
        return Err(format!("hand trace gave {:?} e*={} via {trace:?}", r.selected, r.best_error));
    }

    let feats = features(6);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for run in 0..20 {
        // order-insensitive lookup: the key is the sorted subset
        let mut table: HashMap<Vec<DiffSpec>, f64> = HashMap::new();
        for mask in 1u32..(1 << feats.len()) {
            let key: Vec<DiffSpec> = (0..feats.len()).filter(|b| mask >> b & 1 == 1).map(|b| feats[b]).collect();
            table.insert(key, (rng.random_range(0..1000) as f64) / 10.0);
        }
        let lookup = |sub: &[DiffSpec]| {
            let mut k = sub.to_vec();
            k.sort_by_key(|s| feats.iter().position(|f| f == s));
            table.get(&k).copied().unwrap_or(MAX_ERROR)
        };
        let j = |sub: &[DiffSpec]| Ok(lookup(sub));
        let r = sffs_select(&feats, &j).map_err(|e| e.to_string())?;
        let trace_min = r.trace.iter().map(|t| t.value).fold(MAX_ERROR, f64::min);
        if r.best_error != trace_min || lookup(&r.selected) != r.best_error {
            return Err(format!(
                "run {run}: e*={} trace min {trace_min} J(S*)={}",
                r.best_error,
                lookup(&r.selected)
            ));
        }
    }
    Ok("hand trace reproduced; e* = min(trace) = J(S*) on 20 random tables".into())
}

fn gradient_check() -> Outcome {
    let cfg = PixBisConfig {
        input_size: 8,
        stem_width: 2,
        stage_widths: vec![3],
        context_dilations: vec![2],
        map_size: 4,
        ..PixBisConfig::default()
    };
    let net = PixBisNet::new(2, cfg).map_err(|e| e.to_string())?;
    let n = net.param_len();
    if n > 1000 {
        return Err(format!("{n} parameters"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p: Vec<f64> = net.init(&mut rng).into_iter().map(f64::from).collect();
    let x: Vec<f64> = (0..2 * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = 1e-4;
    let probes = 120;
    let mut worst = 0.0f64;
    for label in [0.0, 1.0] {
        let mut g = vec![0.0; n];
        net.loss_grad(&p, &x, label, &mut g);
        for _ in 0..probes / 2 {
            let i = rng.random_range(0..n);
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (net.loss(&a, &x, label) - net.loss(&b, &x, label)) / (2.0 * h);
            // floor keeps near-zero gradients from turning rounding noise into a large ratio
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    check(
        worst <= 1e-4,
        format!("{n} parameters, {probes} probes, max relative error {worst:.1e}"),
    )
}

/// Valid cross-correlation of a `(k, c, 3, 3)` bank with a `c`-channel plane stack.
fn correlate(bank: &[f64], k: usize, c: usize, x: &[f64], side: usize) -> Vec<f64> {
    let o = side - 2;
    let mut out = vec![0.0; k * o * o];
    for kk in 0..k {
        for y in 0..o {
            for xx in 0..o {
                let mut acc = 0.0;
                for ch in 0..c {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            acc += bank[((kk * c + ch) * 3 + dy) * 3 + dx] * x[(ch * side + y + dy) * side + xx + dx];
                        }
                    }
                }
                out[(kk * o + y) * o + xx] = acc;
            }
        }
    }
    out
}

fn adaptation_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (k, side) = (4, 6);
    let mut worst = 0.0f64;
    for c_in in [1, 3] {
        for m in [2, 5, 7] {
            let bank: Vec<f64> = (0..k * c_in * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let plane: Vec<f64> = (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect();
            let rep = |n: usize| plane.iter().copied().cycle().take(n * side * side).collect::<Vec<_>>();
            let before = correlate(&bank, k, c_in, &rep(c_in), side);
            let adapted = adapt_first_layer(&bank, k, c_in, 9, m);
            let after = correlate(&adapted, k, m, &rep(m), side);
            for (a, b) in before.iter().zip(&after) {
                worst = worst.max((a - b).abs() / a.abs().max(1e-12));
            }
        }
    }
    check(worst <= 1e-6, format!("C_in in {{1,3}}, M in {{2,5,7}}: max relative deviation {worst:.1e}"))
}

fn em_and_svm() -> Outcome {
    let mut worst_drop = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut data = Vec::new();
        for i in 0..400 {
            let (cx, cy) = if i % 3 == 0 { (2.0, -1.0) } else { (-1.0, 0.5) };
            data.push(cx + rng.random_range(-0.8..0.8));
            data.push(cy + rng.random_range(-0.6..0.6));
        }
        let fit = fit_skin_gmm(&data, 2, 2, seed).map_err(|e| e.to_string())?;
        for w in fit.log_likelihoods.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    if worst_drop > 1e-12 {
        return Err(format!("EM log-likelihood dropped by {worst_drop:e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..80 {
        let pos = i % 2 == 0;
        let off = if pos { 1.5 } else { -1.5 };
        x.push(off + rng.random_range(-1.0..1.0));
        x.push(rng.random_range(-2.0..2.0));
        y.push(pos);
    }
    let svm = Svm::train(&x, 2, &y, &SvmParams::default()).map_err(|e| e.to_string())?;
    let correct = x.chunks(2).zip(&y).filter(|(p, &l)| (svm.decision(p) > 0.0) == l).count();
    check(
        correct == y.len(),
        format!("EM non-decreasing over 10 seeds; SVM {correct}/{} on a separable set", y.len()),
    )
}

fn pipeline(protocol: Protocol, out: &Path) -> Result<PipelineOutcome, String> {
    let cfg = PipelineConfig {
        generator: GeneratorConfig::default(),
        data: None,
        protocol,
        selection: ScorerConfig::proxy(ModelKind::Pixbis),
        model: ScorerConfig::desk(ModelKind::Pixbis),
        channels: None,
        max_candidates: None,
        out: out.to_path_buf(),
    };
    run_pipeline(&cfg).map_err(|e| e.to_string())
}

fn artifact_bytes(o: &PipelineOutcome) -> Vec<(String, Vec<u8>)> {
    let r = &o.report;
    [&o.model_path, &r.metrics, &r.roc, &r.roc_svg, &r.breakdown, &r.summary]
        .iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read(p).unwrap_or_default())
        })
        .collect()
}

fn type_apcer(breakdown: &Path, kind: &str) -> Option<f64> {
    fs::read_to_string(breakdown)
        .ok()?
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{kind},")).and_then(|r| r.split(',').nth(1)?.parse().ok()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "pair count", pair_count()),
        (2, "metric arithmetic", metric_rows()),
        (3, "ratio ranking oracle", ratio_ranking()),
        (4, "SFFS trace soundness", sffs_trace()),
        (5, "gradient check", gradient_check()),
        (6, "first-layer adaptation", adaptation_identity()),
    ];

    let start = Instant::now();
    let first = pipeline(Protocol::GrandTest, &tmp.path().join("grand_a"));
    let secs = start.elapsed().as_secs_f64();
    results.push((
        7,
        "synthetic grand test",
        first.as_ref().map_err(Clone::clone).and_then(|o| {
            let acer = o.metrics.test_acer;
            check(
                acer <= 5.0 && secs <= 900.0,
                format!("test ACER {acer:.2}% (limit 5%), pipeline {secs:.0} s (limit 900 s)"),
            )
        }),
    ));
    results.push((
        8,
        "1430 nm straddle",
        first.as_ref().map_err(Clone::clone).and_then(|o| {
            let sel: Vec<String> = o.scorer.specs.iter().map(|s| s.to_string()).collect();
            check(o.scorer.specs.iter().any(|s| s.straddles(1430)), format!("selected {sel:?}"))
        }),
    ));

    let start = Instant::now();
    let obf = pipeline(Protocol::Obfuscation, &tmp.path().join("obfuscation"));
    let secs = start.elapsed().as_secs_f64();
    results.push((
        9,
        "tattoo blindness",
        obf.and_then(|o| {
            let tattoo = type_apcer(&o.report.breakdown, "tattoo").ok_or("no tattoo row")?;
            let glasses = type_apcer(&o.report.breakdown, "glasses").ok_or("no glasses row")?;
            check(
                tattoo - glasses >= 50.0 && secs <= 600.0,
                format!("tattoo APCER {tattoo:.1}% vs glasses {glasses:.1}% ({secs:.0} s)"),
            )
        }),
    ));

    results.push((10, "EM monotone, SVM separable", em_and_svm()));

    let second = pipeline(Protocol::GrandTest, &tmp.path().join("grand_b"));
    results.push((
        11,
        "determinism",
        first.and_then(|a| {
            let b = second?;
            let (fa, fb) = (artifact_bytes(&a), artifact_bytes(&b));
            let differing: Vec<&str> =
                fa.iter().zip(&fb).filter(|(x, y)| x.1 != y.1 || x.1.is_empty()).map(|(x, _)| x.0.as_str()).collect();
            check(
                differing.is_empty(),
                if differing.is_empty() {
                    format!("{} artifacts byte-identical across reruns", fa.len())
                } else {
                    format!("differing: {differing:?}")
                },
            )
        }),
    ));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(msg) => println!("PASS {n:>2} {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {msg}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
