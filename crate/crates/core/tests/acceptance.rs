//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines always print.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ambient_agitation::data_model::{Channel, ChannelSeries};
use ambient_agitation::evaluation::{
    collect_observations, compute_metrics, run_protocol, ModelKind, ObservationPool,
    ProtocolConfig, ProtocolOutcome,
};
use ambient_agitation::features::{to_feature_vector, window_features, DiffMode, WindowGeometry};
use ambient_agitation::gbt::{fit_gbt, predict_gbt, GbtParams, TreeNode};
use ambient_agitation::lstm::{batch_loss, lstm_gradients, LstmParams};
use ambient_agitation::signal::{median_filter, normalize, MinMax};
use ambient_agitation::synth::{
    generate, DiurnalProfile, GeneratorConfig, TriggerKind, TriggerRule,
};
use ndarray::{Array2, Array3, Axis};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- metrics

fn rat(n: usize, d: usize) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn exact_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite ratio")
}

/// F1 from precision and recall, both taken as 0 when undefined.
fn oracle_f1(tp: usize, fp: usize, fn_: usize) -> BigRational {
    let p = if tp + fp == 0 {
        BigRational::zero()
    } else {
        rat(tp, tp + fp)
    };
    let r = if tp + fn_ == 0 {
        BigRational::zero()
    } else {
        rat(tp, tp + fn_)
    };
    if (&p + &r).is_zero() {
        return BigRational::zero();
    }
    BigRational::from_integer(2.into()) * &p * &r / (&p + &r)
}

fn criterion_metrics() -> Check {
    let mut cases = 0;
    for a in 0u8..16 {
        for b in 0u8..16 {
            let y: Vec<u8> = (0..4).map(|k| (a >> k) & 1).collect();
            let p: Vec<u8> = (0..4).map(|k| (b >> k) & 1).collect();
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for k in 0..4 {
                match (y[k], p[k]) {
                    (1, 1) => tp += 1,
                    (0, 1) => fp += 1,
                    (0, 0) => tn += 1,
                    _ => fn_ += 1,
                }
            }
            let pos = tp + fn_;
            let neg = tn + fp;
            let f_pos = oracle_f1(tp, fp, fn_);
            let f_neg = oracle_f1(tn, fn_, fp);
            let weighted = (rat(pos, 1) * &f_pos + rat(neg, 1) * &f_neg) / rat(4, 1);
            let prior = rat(pos, 4);
            let chance = &prior * &prior + (rat(1, 1) - &prior) * (rat(1, 1) - &prior);
            let expect = [
                ("accuracy", exact_f64(&rat(tp + tn, 4))),
                (
                    "precision",
                    if tp + fp == 0 {
                        0.0
                    } else {
                        exact_f64(&rat(tp, tp + fp))
                    },
                ),
                (
                    "recall",
                    if pos == 0 {
                        0.0
                    } else {
                        exact_f64(&rat(tp, pos))
                    },
                ),
                ("f1_positive", exact_f64(&f_pos)),
                ("f1_negative", exact_f64(&f_neg)),
                ("weighted_f1", exact_f64(&weighted)),
                ("majority", exact_f64(&rat(pos.max(neg), 4))),
                ("chance", exact_f64(&chance)),
            ];
            let r = compute_metrics(&y, &p).map_err(|e| e.to_string())?;
            let got = [
                r.accuracy,
                r.precision,
                r.recall,
                r.f1_positive,
                r.f1_negative,
                r.weighted_f1,
                r.majority_baseline_accuracy,
                r.chance_weighted_f1,
            ];
            for ((name, want), got) in expect.iter().zip(got) {
                ensure(got == *want, || {
                    format!("{name} y={y:?} p={p:?}: {got} != {want}")
                })?;
            }
            ensure(
                (
                    r.confusion.tp,
                    r.confusion.fp,
                    r.confusion.tn,
                    r.confusion.fn_,
                ) == (tp, fp, tn, fn_)
                    && r.precision_undefined == (tp + fp == 0)
                    && r.recall_undefined == (pos == 0),
                || format!("confusion or flags y={y:?} p={p:?}"),
            )?;
            cases += 1;
        }
    }
    Ok(format!("{cases} label/prediction pairs exact"))
}

// ---------------------------------------------------------------- signal

fn random_series(rng: &mut ChaCha8Rng, channel: Channel) -> ChannelSeries {
    let n = rng.random_range(1..=300);
    let missing_rate = if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random_range(0.0..0.3)
    };
    let mut s = ChannelSeries::complete(channel, 0, Vec::with_capacity(n));
    s.missing.clear();
    for _ in 0..n {
        let m = rng.random_bool(missing_rate);
        // Small integer grids force ties in the window.
        let v = if rng.random_bool(0.5) {
            f64::from(rng.random_range(-5i32..5))
        } else {
            rng.random_range(-1e3..1e3)
        };
        s.values.push(if m { 0.0 } else { v });
        s.missing.push(m);
    }
    s
}

fn oracle_median(s: &ChannelSeries, len: usize) -> Vec<Option<f64>> {
    let n = s.len() as i64;
    let (left, right) = ((len / 2) as i64, ((len - 1) / 2) as i64);
    (0..n)
        .map(|i| {
            if s.missing[i as usize] {
                return None;
            }
            let mut w: Vec<f64> = ((i - left).max(0)..=(i + right).min(n - 1))
                .filter(|&k| !s.missing[k as usize])
                .map(|k| s.values[k as usize])
                .collect();
            w.sort_by(f64::total_cmp);
            let k = w.len();
            Some(if k % 2 == 1 {
                w[k / 2]
            } else {
                (w[k / 2 - 1] + w[k / 2]) / 2.0
            })
        })
        .collect()
}

fn criterion_signal() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let s = random_series(&mut rng, Channel::Temperature);
        let len = rng.random_range(1..=16);
        let got = median_filter(&s, len).map_err(|e| e.to_string())?;
        for (i, want) in oracle_median(&s, len).into_iter().enumerate() {
            match want {
                None => ensure(got.missing[i], || {
                    format!("median case {case}: slot {i} not missing")
                })?,
                Some(v) => {
                    let d = (got.values[i] - v).abs();
                    worst = worst.max(d);
                    ensure(d <= 1e-12, || {
                        format!(
                            "median case {case} len {len} slot {i}: {} vs {v}",
                            got.values[i]
                        )
                    })?;
                }
            }
        }
    }
    for case in 0..1000 {
        let s = random_series(&mut rng, Channel::Light);
        let observed: Vec<f64> = (0..s.len())
            .filter(|&i| !s.missing[i])
            .map(|i| s.values[i])
            .collect();
        let (lo, hi) = match observed.first() {
            None => (0.0, 1.0),
            Some(&f) => observed.iter().fold((f, f), |(a, b), &v| {
                (if v < a { v } else { a }, if v > b { v } else { b })
            }),
        };
        // Half the cases use a narrower range so clamping is exercised.
        let (lo, hi) = if case % 2 == 0 {
            (lo, hi)
        } else {
            (lo + (hi - lo) * 0.2, hi - (hi - lo) * 0.2)
        };
        let (got, clamped) = normalize(&s, MinMax { min: lo, max: hi });
        let mut want_clamped = 0;
        for i in 0..s.len() {
            let want = if s.missing[i] {
                0.0
            } else if hi <= lo {
                50.0
            } else {
                let v = s.values[i];
                if v < lo || v > hi {
                    want_clamped += 1;
                }
                ((v - lo) / (hi - lo) * 100.0).clamp(0.0, 100.0)
            };
            let d = (got.values[i] - want).abs();
            worst = worst.max(d);
            ensure(d <= 1e-12, || {
                format!(
                    "normalize case {case} slot {i}: {} vs {want}",
                    got.values[i]
                )
            })?;
        }
        ensure(clamped == want_clamped, || {
            format!("normalize case {case}: clamped {clamped} vs {want_clamped}")
        })?;
    }
    Ok(format!("1000 + 1000 series, max abs error {worst:.1e}"))
}

// ---------------------------------------------------------------- features

fn oracle_window(chans: &[Vec<f64>; 5], local_start: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let day = 86_400.0;
    let tod = (local_start - (local_start / day).floor() * day) / 864.0;
    for xs in chans {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let mut sorted = xs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = sorted.len();
        let median = if m % 2 == 0 {
            (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0
        } else {
            sorted[m / 2]
        };
        let max = sorted[m - 1];
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let diffs: Vec<f64> = (1..xs.len()).map(|k| (xs[k] - xs[k - 1]).abs()).collect();
        let (dmean, dmax) = if diffs.is_empty() {
            (0.0, 0.0)
        } else {
            (
                diffs.iter().sum::<f64>() / diffs.len() as f64,
                diffs.iter().cloned().fold(0.0, f64::max),
            )
        };
        out.extend([mean, median, max, var, dmean, dmax, tod]);
    }
    out
}

fn criterion_features() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = if case % 10 == 0 {
            rng.random_range(1..4)
        } else {
            360
        };
        let chans: [Vec<f64>; 5] =
            std::array::from_fn(|_| (0..n).map(|_| rng.random_range(0.0..100.0)).collect());
        let start = rng.random_range(-2e5..2e9_f64).round();
        let got = window_features(
            [&chans[0], &chans[1], &chans[2], &chans[3], &chans[4]],
            start,
            DiffMode::Absolute,
        );
        let want = oracle_window(&chans, start);
        for (k, (g, w)) in got.iter().zip(&want).enumerate() {
            let rel = (g - w).abs() / w.abs().max(1.0);
            worst = worst.max(rel);
            ensure(rel <= 1e-9, || {
                format!("window {case} feature {k}: {g} vs {w}")
            })?;
        }
    }

    let geo = WindowGeometry::default();
    let anchor = 1_550_000_000.0;
    ensure(geo.layout().len() == 315, || {
        format!("layout length {}", geo.layout().len())
    })?;
    let mut cursor = anchor - 66.0 * 60.0;
    for w in 0..geo.n_windows as usize {
        let (a, b) = geo.window_bounds(anchor, w);
        ensure(a == cursor && b - a == 360.0, || {
            format!("window {w} is [{a}, {b}), expected start {cursor}")
        })?;
        cursor = b;
    }
    ensure(cursor == anchor - 12.0 * 60.0, || {
        format!("last window ends at {cursor}")
    })?;

    let syn = generate(&GeneratorConfig {
        id: "tiling".into(),
        seed: 5,
        duration_days: 3.0,
        target_per_week: 20.0,
        rules: vec![TriggerRule::new(TriggerKind::NoiseSpike)],
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let pool = collect_observations(syn.deployment, &ProtocolConfig::default())
        .map_err(|e| e.to_string())?;
    for o in &pool.observations {
        let v = to_feature_vector(o, DiffMode::Absolute);
        ensure(v.len() == 315, || {
            format!("feature vector length {}", v.len())
        })?;
        for (w, win) in o.windows.iter().enumerate() {
            let (a, _) = geo.window_bounds(o.anchor_time, w);
            ensure(
                win.start_time == a && win.channels.iter().all(|c| c.len() == 360),
                || format!("extracted window {w} of anchor {} misplaced", o.anchor_time),
            )?;
        }
    }
    Ok(format!(
        "1000 windows max rel error {worst:.1e}; 315 inputs; 9×6 min tile [−66, −12) min over {} observations",
        pool.observations.len()
    ))
}

// ---------------------------------------------------------------- GBT

fn r64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

struct Best {
    gain: BigRational,
    feature: usize,
    threshold: f64,
}

/// Exhaustive depth-1 search in exact arithmetic over every feature and every
/// cut between consecutive distinct values.
fn oracle_stump(x: &Array2<f64>, grad: &[f64], hess: &[f64], p: &GbtParams) -> Option<Best> {
    let lambda = r64(p.lambda);
    let score = |g: &BigRational, h: &BigRational| g * g / (h + &lambda);
    let g_all: BigRational = grad.iter().map(|&g| r64(g)).sum();
    let h_all: BigRational = hess.iter().map(|&h| r64(h)).sum();
    let parent = score(&g_all, &h_all);
    let mcw = r64(p.min_child_weight);
    let mut best: Option<Best> = None;
    for j in 0..x.ncols() {
        let mut values: Vec<f64> = x.column(j).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let mut t = 0.5 * (pair[0] + pair[1]);
            if t <= pair[0] {
                t = pair[1];
            }
            let (mut gl, mut hl) = (BigRational::zero(), BigRational::zero());
            for i in 0..x.nrows() {
                if x[[i, j]] < t {
                    gl += r64(grad[i]);
                    hl += r64(hess[i]);
                }
            }
            let (gr, hr) = (&g_all - &gl, &h_all - &hl);
            if hl < mcw || hr < mcw {
                continue;
            }
            let gain = (score(&gl, &hl) + score(&gr, &hr) - &parent)
                / BigRational::from_integer(2.into())
                - r64(p.gamma);
            if gain > BigRational::zero() && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Best {
                    gain,
                    feature: j,
                    threshold: t,
                });
            }
        }
    }
    best
}

fn criterion_gbt() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = GbtParams {
        n_trees: 1,
        max_depth: 1,
        min_child_weight: 0.0,
        ..Default::default()
    };
    let mut splits = 0;
    for case in 0..200 {
        let n = rng.random_range(4..=50);
        let d = rng.random_range(1..=6);
        let coarse = case % 3 == 0;
        let x = Array2::from_shape_simple_fn((n, d), || {
            if coarse {
                f64::from(rng.random_range(0..5))
            } else {
                rng.random_range(-10.0..10.0)
            }
        });
        let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        y[0] = 0;
        y[1] = 1;
        let model = fit_gbt(x.view(), &y, &params, 0).map_err(|e| e.to_string())?;
        // The prior probability the first round starts from.
        let p0 = predict_gbt(&model.truncated(0), x.row(0).insert_axis(Axis(0)))
            .map_err(|e| e.to_string())?[0];
        let rate = y.iter().filter(|&&t| t == 1).count() as f64 / n as f64;
        ensure((p0 - rate).abs() < 1e-12, || {
            format!("case {case}: prior {p0} vs rate {rate}")
        })?;
        let grad: Vec<f64> = y.iter().map(|&t| p0 - f64::from(t)).collect();
        let hess = vec![p0 * (1.0 - p0); n];
        let oracle = oracle_stump(&x, &grad, &hess, &params);
        match (&model.trees[0], oracle) {
            (TreeNode::Leaf { .. }, None) => {}
            (
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                },
                Some(b),
            ) => {
                ensure(*feature == b.feature && *threshold == b.threshold, || {
                    format!(
                        "case {case}: split ({feature}, {threshold}) vs oracle ({}, {})",
                        b.feature, b.threshold
                    )
                })?;
                for (node, goes_left) in [(left, true), (right, false)] {
                    let rows: Vec<usize> = (0..n)
                        .filter(|&i| (x[[i, b.feature]] < b.threshold) == goes_left)
                        .collect();
                    let g: BigRational = rows.iter().map(|&i| r64(grad[i])).sum();
                    let h: BigRational = rows.iter().map(|&i| r64(hess[i])).sum();
                    let want = exact_f64(&(-g / (h + r64(params.lambda))));
                    let TreeNode::Leaf { weight } = **node else {
                        return Err(format!("case {case}: depth exceeds 1"));
                    };
                    ensure((weight - want).abs() <= 1e-12 * want.abs().max(1.0), || {
                        format!("case {case}: leaf {weight} vs {want}")
                    })?;
                }
                splits += 1;
            }
            (tree, oracle) => {
                return Err(format!(
                    "case {case}: tree {tree:?} but oracle finds split: {}",
                    oracle.is_some()
                ))
            }
        }

        let long = fit_gbt(
            x.view(),
            &y,
            &GbtParams {
                n_trees: 30,
                max_depth: 3,
                ..Default::default()
            },
            0,
        )
        .map_err(|e| e.to_string())?;
        for (k, w) in long.train_loss.windows(2).enumerate() {
            ensure(w[1] <= w[0], || {
                format!(
                    "case {case}: training loss rose at round {}: {} -> {}",
                    k + 1,
                    w[0],
                    w[1]
                )
            })?;
        }
    }
    Ok(format!(
        "200 datasets ({splits} with a split) match exhaustive search; loss non-increasing"
    ))
}

// ---------------------------------------------------------------- LSTM

fn criterion_lstm() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (hidden, input) = (8, 3);
    let h = 1e-5;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for draw in 0..120 {
        let mut params = LstmParams::init(input, hidden, 1.0, rng.random());
        for k in 0..params.len() {
            *params.get_mut(k) += rng.random_range(-0.3..0.3);
        }
        let (b, t) = (rng.random_range(1..=4), rng.random_range(1..=5));
        let xs = Array3::from_shape_simple_fn((b, t, input), || rng.random_range(-2.0..2.0));
        let ys: Vec<u8> = (0..b).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let (_, grads) = lstm_gradients(&params, xs.view(), &ys).map_err(|e| e.to_string())?;
        for k in 0..params.len() {
            let mut plus = params.clone();
            *plus.get_mut(k) += h;
            let mut minus = params.clone();
            *minus.get_mut(k) -= h;
            let lp = batch_loss(&plus, xs.view(), &ys).map_err(|e| e.to_string())?;
            let lm = batch_loss(&minus, xs.view(), &ys).map_err(|e| e.to_string())?;
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads.get(k);
            let scale = analytic.abs().max(numeric.abs());
            // Gradients below the finite-difference noise floor are compared absolutely.
            let err = if scale < 1e-6 {
                (analytic - numeric).abs()
            } else {
                (analytic - numeric).abs() / scale
            };
            worst = worst.max(err);
            ensure(err <= 1e-4, || {
                format!("draw {draw} param {k}: bptt {analytic} vs fd {numeric}")
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "120 draws, {checked} partials at hidden 8, max rel error {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- end to end

fn protocol() -> ProtocolConfig {
    ProtocolConfig {
        seed: 42,
        ..Default::default()
    }
}

fn pool_of(cfg: &GeneratorConfig) -> Result<ObservationPool, String> {
    let syn = generate(cfg).map_err(|e| e.to_string())?;
    collect_observations(syn.deployment, &protocol()).map_err(|e| e.to_string())
}

fn noise_spike_config() -> GeneratorConfig {
    GeneratorConfig {
        id: "noise".into(),
        seed: 7,
        duration_days: 30.0,
        n_nodes: 2,
        target_per_week: 14.0,
        rules: vec![TriggerRule::new(TriggerKind::NoiseSpike)],
        ..Default::default()
    }
}

fn run(name: &str, pools: &[&ObservationPool], kind: ModelKind) -> Result<ProtocolOutcome, String> {
    run_protocol(name, pools, kind, &protocol()).map_err(|e| format!("{name}/{kind}: {e}"))
}

fn criterion_skill(outcomes: &[ProtocolOutcome], pool: &ObservationPool) -> Check {
    let mut parts = vec![format!(
        "{} positives / {} observations",
        pool.positives(),
        pool.observations.len()
    )];
    let mut ok = true;
    for o in outcomes {
        let m = &o.metrics;
        ok &= m.weighted_f1 >= 0.85;
        parts.push(format!(
            "{} F_w {:.3} (accuracy {:.3}, majority baseline {:.3})",
            m.model, m.weighted_f1, m.accuracy, m.majority_baseline_accuracy
        ));
    }
    let line = parts.join("; ");
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn climate_controlled() -> DiurnalProfile {
    let mut p = DiurnalProfile::default();
    p.temperature.amplitude = 0.0;
    p
}

fn criterion_recovery(outcomes: &[ProtocolOutcome]) -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for o in outcomes {
        let imp = &o.importance;
        let perm = imp.top_channel().unwrap_or("-");
        ok &= perm == "acoustic";
        parts.push(format!(
            "{} permutation top channel {perm}",
            o.metrics.model
        ));
        if o.metrics.model == "gbt" {
            let gain = imp.top_gain_channel().unwrap_or("-");
            ok &= gain == "acoustic";
            parts.push(format!("gbt gain top channel {gain}"));
        }
    }
    let sundown = pool_of(&GeneratorConfig {
        id: "sundown".into(),
        seed: 7,
        duration_days: 30.0,
        n_nodes: 2,
        target_per_week: 14.0,
        profile: climate_controlled(),
        rules: vec![TriggerRule::new(TriggerKind::Sundowning)],
        ..Default::default()
    })?;
    for kind in ModelKind::ALL {
        let o = run("sundown", &[&sundown], kind)?;
        let perm = o.importance.top_feature_kind().unwrap_or("-");
        ok &= perm == "time_of_day";
        parts.push(format!("sundowning {kind} permutation top kind {perm}"));
        if kind == ModelKind::Gbt {
            let gain = o.importance.top_gain_feature_kind().unwrap_or("-");
            ok &= gain == "time_of_day";
            parts.push(format!("sundowning gbt gain top kind {gain}"));
        }
    }
    let line = parts.join("; ");
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

/// Three homes, each with its own trigger and its own background.
fn three_homes() -> Vec<GeneratorConfig> {
    let kinds = [
        TriggerKind::NoiseSpike,
        TriggerKind::LightRamp,
        TriggerKind::Sundowning,
    ];
    kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let mut profile = DiurnalProfile::default();
            if i == 1 {
                // Loud household: long, frequent bursts.
                profile.acoustic.event_rate_per_hour = 6.0;
                profile.acoustic.event_amplitude = 55.0;
                profile.acoustic.event_duration_s = 180.0;
            }
            if i == 2 {
                // Bright lamps and a busy soundscape.
                profile.light.event_rate_per_hour = 0.3;
                profile.light.event_amplitude = 1000.0;
                profile.light.event_duration_s = 1800.0;
                profile.acoustic.event_rate_per_hour = 3.0;
                profile.acoustic.event_amplitude = 55.0;
                profile.acoustic.event_duration_s = 180.0;
            }
            GeneratorConfig {
                id: format!("d{}", i + 1),
                seed: 100 + i as u64,
                duration_days: 30.0,
                n_nodes: 2,
                target_per_week: 14.0,
                profile,
                rules: vec![TriggerRule::new(kind)],
                ..Default::default()
            }
        })
        .collect()
}

fn criterion_combined() -> Check {
    let pools: Vec<ObservationPool> = three_homes()
        .iter()
        .map(pool_of)
        .collect::<Result<_, _>>()?;
    let refs: Vec<&ObservationPool> = pools.iter().collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in ModelKind::ALL {
        let mut scores = Vec::new();
        for p in &pools {
            scores.push(run(&p.deployment_id, &[p], kind)?.metrics.weighted_f1);
        }
        let combined = run("combined", &refs, kind)?.metrics.weighted_f1;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        ok &= mean - combined >= 0.05;
        parts.push(format!(
            "{kind} individual [{}] mean {mean:.4} vs combined {combined:.4} (diff {:+.4})",
            scores
                .iter()
                .map(|s| format!("{s:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            mean - combined
        ));
    }
    let line = parts.join("; ");
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn criterion_null(pool: &ObservationPool) -> Check {
    let mut shuffled = pool.clone();
    let mut labels: Vec<(u8, Option<u8>)> = shuffled
        .observations
        .iter()
        .map(|o| (o.label, o.severity))
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    for (o, (l, s)) in shuffled.observations.iter_mut().zip(labels) {
        o.label = l;
        o.severity = s;
    }
    // Episodes uniform over the day with no environmental precursor.
    let mut rule = TriggerRule::new(TriggerKind::Sundowning);
    rule.hazard_multiplier = 1.0;
    let trigger_free = pool_of(&GeneratorConfig {
        id: "trigger_free".into(),
        seed: 7,
        duration_days: 30.0,
        n_nodes: 2,
        target_per_week: 14.0,
        rules: vec![rule],
        ..Default::default()
    })?;
    let no_rules = generate(&GeneratorConfig {
        id: "no_rules".into(),
        seed: 7,
        duration_days: 3.0,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let mut ok = no_rules.deployment.labels.is_empty();
    let mut parts = vec![format!(
        "rules=[] yields {} labels",
        no_rules.deployment.labels.len()
    )];
    for (name, p) in [("permuted", &shuffled), ("trigger_free", &trigger_free)] {
        for kind in ModelKind::ALL {
            let m = run(name, &[p], kind)?.metrics;
            let d = m.weighted_f1 - m.chance_weighted_f1;
            ok &= d.abs() <= 0.10;
            parts.push(format!(
                "{name} {kind} F_w {:.3} vs chance {:.3} ({d:+.3})",
                m.weighted_f1, m.chance_weighted_f1
            ));
        }
    }
    let line = parts.join("; ");
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

// ---------------------------------------------------------------- CLI

fn collect_files(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_cli() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(
        dir.path().join("gen.toml"),
        "[[deployment]]\nid = \"home\"\nseed = 4\nduration_days = 2\nn_nodes = 1\ntarget_per_week = 35\n\n\
         [[deployment.rules]]\nkind = \"noise_spike\"\n",
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(
        dir.path().join("agitation.toml"),
        "seed = 3\ngenerator = \"gen.toml\"\n\n[[deployment]]\nid = \"home\"\n\n\
         [protocol]\nfolds = 3\nimportance_repeats = 2\n\n[protocol.gbt]\nn_trees = 20\n\n\
         [protocol.lstm]\nhidden = 8\nmax_epochs = 5\n",
    )
    .map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_agitation");
    let mut stages: Vec<Vec<&str>> = vec![
        vec!["generate"],
        vec!["ingest"],
        vec!["features"],
        vec!["features", "--combined"],
    ];
    for model in ["gbt", "lstm"] {
        for stage in ["train", "evaluate", "importance"] {
            stages.push(vec![stage, "--model", model]);
            stages.push(vec![stage, "--model", model, "--combined"]);
        }
    }
    stages.push(vec!["report"]);
    for out in ["run_a", "run_b"] {
        for args in &stages {
            let status = Command::new(bin)
                .current_dir(dir.path())
                .args(args)
                .args(["--out", out])
                .env("RUST_LOG", "error")
                .status()
                .map_err(|e| e.to_string())?;
            ensure(status.success(), || {
                format!("{args:?} into {out} exited with {status}")
            })?;
        }
    }
    let (a, b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    let files = collect_files(&a);
    ensure(files == collect_files(&b), || {
        "runs wrote different file sets".into()
    })?;
    for f in &files {
        let same = std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok();
        ensure(same, || format!("{} differs between runs", f.display()))?;
    }
    Ok(format!(
        "{} stage invocations × 2 runs, {} files byte-identical",
        stages.len(),
        files.len()
    ))
}

// ---------------------------------------------------------------- driver

fn report(failures: &mut Vec<usize>, id: usize, title: &str, started: Instant, result: Check) {
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok(detail) => println!("PASS {id:>2} {title} [{secs:.1}s]: {detail}"),
        Err(detail) => {
            println!("FAIL {id:>2} {title} [{secs:.1}s]: {detail}");
            failures.push(id);
        }
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failures = Vec::new();

    let t = Instant::now();
    report(&mut failures, 1, "metric oracle", t, criterion_metrics());
    let t = Instant::now();
    report(&mut failures, 2, "signal oracle", t, criterion_signal());
    let t = Instant::now();
    report(&mut failures, 3, "feature oracle", t, criterion_features());
    let t = Instant::now();
    report(&mut failures, 4, "gbt oracle", t, criterion_gbt());
    let t = Instant::now();
    report(&mut failures, 5, "lstm gradients", t, criterion_lstm());

    let t = Instant::now();
    let noise = pool_of(&noise_spike_config());
    let outcomes: Result<Vec<ProtocolOutcome>, String> =
        noise.as_ref().map_err(Clone::clone).and_then(|p| {
            ModelKind::ALL
                .iter()
                .map(|&k| run("noise", &[p], k))
                .collect()
        });
    let skill = match (&noise, &outcomes) {
        (Ok(p), Ok(o)) => criterion_skill(o, p),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    report(&mut failures, 6, "end-to-end skill", t, skill);
    let t = Instant::now();
    let recovery = match &outcomes {
        Ok(o) => criterion_recovery(o),
        Err(e) => Err(e.clone()),
    };
    report(&mut failures, 7, "trigger recovery", t, recovery);
    let t = Instant::now();
    report(
        &mut failures,
        8,
        "individual vs combined",
        t,
        criterion_combined(),
    );
    let t = Instant::now();
    let null = match &noise {
        Ok(p) => criterion_null(p),
        Err(e) => Err(e.clone()),
    };
    report(&mut failures, 9, "null control", t, null);
    let t = Instant::now();
    report(&mut failures, 10, "cli determinism", t, criterion_cli());

    println!("{} of 10 criteria passed", 10 - failures.len());
    if !failures.is_empty() {
        std::process::exit(1);
    }
}
