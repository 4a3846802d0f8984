//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

mod common;

use std::panic;
use std::path::Path;
use std::time::{Duration, Instant};

use ganterp::pipeline::{analyze, run_pipeline, BackendSelector, RunConfig};
use ganterp::planner::ClassWeights;
use ganterp::{
    build_frame_plan, compute_alpha_track, compute_alpha_track_with, compute_tv_series,
    detect_inflection_points, read_trajectory, sample_keyframes, write_trajectory, AlphaMode,
    GeneratorSpec, InflectionSet, Spectrogram, Trajectory, TrajectoryError, TrajectoryMetadata,
    TvSeries,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Mean absolute difference of consecutive columns, evaluated directly.
fn tv_oracle(columns: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..columns.len() - 1 {
        let f = columns[i].len();
        let mut acc = 0.0;
        for k in 0..f {
            acc += (columns[i][k] - columns[i + 1][k]).abs();
        }
        out.push(acc / f as f64);
    }
    out
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Exhaustive evaluation of the sign/threshold predicate at every slice.
fn inflection_oracle(tv: &[f64], l: usize, delta: f64) -> Vec<usize> {
    let n = tv.len();
    let mut out = vec![0];
    for t in 0..n {
        // both windows must lie inside the series
        if t < l || t + l >= n {
            continue;
        }
        let prev: f64 = tv[t - l..t].iter().sum::<f64>() / l as f64;
        let next: f64 = tv[t + 1..=t + l].iter().sum::<f64>() / l as f64;
        let (a, b) = (tv[t] - prev, tv[t] - next);
        if sign(a) != 0 && sign(a) == sign(b) && a.abs() > delta && b.abs() > delta {
            out.push(t);
        }
    }
    out.push(n);
    out
}

fn random_tv(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let style = rng.random_range(0..4);
    (0..len)
        .map(|_| match style {
            // coarse values produce exact ties with window means
            0 => f64::from(rng.random_range(0..4u8)) * 0.25,
            1 if rng.random_bool(0.7) => 0.0,
            _ => rng.random::<f64>(),
        })
        .collect()
}

fn random_inflections(rng: &mut ChaCha8Rng, slices: usize) -> InflectionSet {
    let last = slices - 1;
    let l = rng.random_range(1..=4usize);
    let mut indices = vec![0];
    if last > 2 * l {
        for t in l..=last - 1 - l {
            if rng.random_bool(0.25) {
                indices.push(t);
            }
        }
    }
    indices.push(last);
    InflectionSet::new(indices, l, 0.1).unwrap()
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

fn tv_series_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let window = [1usize, 2, 4, 8][rng.random_range(0..4)];
        let freqs = window / 2 + 1;
        let slices = rng.random_range(2..=32usize);
        let columns: Vec<Vec<f64>> = (0..slices)
            .map(|_| (0..freqs).map(|_| rng.random::<f64>() * 10.0).collect())
            .collect();
        let mut mags = vec![0.0; freqs * slices];
        for (t, col) in columns.iter().enumerate() {
            for (f, v) in col.iter().enumerate() {
                mags[f * slices + t] = *v;
            }
        }
        let spec = Spectrogram::from_magnitudes(mags, slices, window, 1, 1).unwrap();
        let expected = tv_oracle(&columns);
        for normalize in [false, true] {
            let got = compute_tv_series(&spec, normalize);
            let expected: Vec<f64> = if normalize {
                let max = expected.iter().copied().fold(0.0, f64::max);
                expected.iter().map(|v| v / max).collect()
            } else {
                expected.clone()
            };
            ensure(got.len() == slices - 1, || format!("case {case}: length {}", got.len()))?;
            for (g, e) in got.values().iter().zip(&expected) {
                worst = worst.max((g - e).abs());
                ensure((g - e).abs() <= 1e-12, || format!("case {case}: {g} vs {e}"))?;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("200 spectrograms, max |error| {worst:e}, {:?}", start.elapsed()))
}

fn inflection_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut interior = 0;
    for case in 0..200 {
        let len = rng.random_range(1..=64usize);
        let values = random_tv(&mut rng, len);
        let l = rng.random_range(1..=8usize);
        let delta = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.5) };
        let tv = TvSeries::new(values.clone(), false).unwrap();
        let got = detect_inflection_points(&tv, l, delta).map_err(|e| e.to_string())?;
        let expected = inflection_oracle(&values, l, delta);
        ensure(got.indices() == expected.as_slice(), || {
            format!("case {case} (L={l}, delta={delta}): {:?} vs {expected:?}", got.indices())
        })?;
        interior += expected.len() - 2;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("200 series, {interior} interior inflections, {:?}", start.elapsed()))
}

fn alpha_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    for case in 0..500 {
        let slices = rng.random_range(2..=65usize);
        let values = random_tv(&mut rng, slices - 1);
        let set = random_inflections(&mut rng, slices);
        let tv = TvSeries::new(values.clone(), false).unwrap();
        let track = compute_alpha_track(&tv, &set).map_err(|e| e.to_string())?;
        let a = track.alphas();
        ensure(a.len() == slices, || format!("case {case}: {} alphas", a.len()))?;
        ensure(a[0] == 0.0, || format!("case {case}: alpha[0] = {}", a[0]))?;
        ensure(a.iter().all(|v| (0.0..=1.0).contains(v)), || format!("case {case}: out of [0,1]"))?;
        for (p, q) in set.segments() {
            ensure(a[q] == 1.0, || format!("case {case}: alpha[{q}] = {}", a[q]))?;
            for t in p + 2..=q {
                ensure(a[t] >= a[t - 1], || format!("case {case}: decrease at {t}"))?;
            }
        }
        let k = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled = TvSeries::new(values.iter().map(|v| v * k).collect(), false).unwrap();
        let rescaled = compute_alpha_track(&scaled, &set).map_err(|e| e.to_string())?;
        ensure(
            rescaled.alphas().iter().zip(a).all(|(x, y)| x.to_bits() == y.to_bits()),
            || format!("case {case}: scaling by {k} changed the track"),
        )?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("500 tracks, {:?}", start.elapsed()))
}

fn plan_endpoint_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..100 {
        let slices = rng.random_range(2..=65usize);
        let tv = TvSeries::new(random_tv(&mut rng, slices - 1), false).unwrap();
        let set = random_inflections(&mut rng, slices);
        let track = compute_alpha_track(&tv, &set).unwrap();
        let classes = rng.random_range(1..=50u32);
        let spec = GeneratorSpec::new(rng.random_range(1..=16), classes, (4, 4), None).unwrap();
        let pins: Vec<Option<u32>> = (0..set.len())
            .map(|_| rng.random_bool(0.3).then(|| rng.random_range(0..classes)))
            .collect();
        let keyframes = sample_keyframes(&set, &spec, &pins, rng.random()).map_err(|e| e.to_string())?;
        let plan = build_frame_plan(&keyframes, &track).map_err(|e| e.to_string())?;
        ensure(plan.len() == slices, || format!("case {case}: {} frames", plan.len()))?;

        for kf in &keyframes {
            let frame = &plan.frames[kf.slice_index];
            ensure(
                frame.z_mix.iter().zip(&kf.z).all(|(a, b)| a.to_bits() == b.to_bits()),
                || format!("case {case}: frame {} latent differs from keyframe", kf.slice_index),
            )?;
            ensure(frame.class_weights == ClassWeights::single(kf.category), || {
                format!("case {case}: frame {} class weights {:?}", kf.slice_index, frame.class_weights)
            })?;
        }
        for (i, (p, q)) in set.segments().enumerate() {
            let (z0, z1) = (&keyframes[i].z, &keyframes[i + 1].z);
            for t in p + 1..=q {
                for (j, v) in plan.frames[t].z_mix.iter().enumerate() {
                    let (lo, hi) = (z0[j].min(z1[j]), z0[j].max(z1[j]));
                    ensure(lo <= *v && *v <= hi, || format!("case {case}: frame {t} coord {j} off segment"))?;
                }
                let w = &plan.frames[t].class_weights;
                ensure(w.len() <= 2 && (w.sum() - 1.0).abs() <= 1e-9, || format!("case {case}: weights {w:?}"))?;
            }
        }
    }
    Ok("100 plans".into())
}

fn list_frames(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn end_to_end_determinism() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("silence.wav");
    common::write_silence(&wav);

    let run = |name: &str, parallelism: usize| {
        let mut config = RunConfig::new(&wav, dir.path().join(name));
        config.seed = 7;
        config.backend = BackendSelector::Mock;
        config.parallelism = parallelism;
        run_pipeline(&config)
    };
    let a = run("a", 1).map_err(|e| e.to_string())?;
    let b = run("b", 1).map_err(|e| e.to_string())?;
    let c = run("c", 4).map_err(|e| e.to_string())?;

    ensure(a.num_slices == 28 && a.frames_written == 28, || format!("report {a:?}"))?;
    ensure(a.num_inflections == 2, || format!("{} inflections", a.num_inflections))?;
    let traj = read_trajectory(&a.trajectory_path).map_err(|e| e.to_string())?;
    let bounds: Vec<usize> = traj.keyframes.iter().map(|k| k.slice_index).collect();
    ensure(bounds == [0, 27], || format!("keyframes at {bounds:?}"))?;

    let digests: Vec<String> = [&a, &b, &c].iter().map(|r| common::sha256_file(&r.trajectory_path)).collect();
    ensure(digests.iter().all(|d| *d == digests[0]), || format!("trajectory digests {digests:?}"))?;

    let frames_a = list_frames(&a.frames_dir);
    let expected_names: Vec<String> = (0..28).map(|i| format!("frame_{i:06}.png")).collect();
    ensure(
        frames_a.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>() == expected_names,
        || "unexpected frame file names".into(),
    )?;
    ensure(frames_a == list_frames(&b.frames_dir), || "rerun frames differ".into())?;
    ensure(frames_a == list_frames(&c.frames_dir), || "parallelism 4 frames differ".into())?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("trajectory sha256 {}..., 28 frames x3, {:?}", &digests[0][..12], start.elapsed()))
}

fn synthetic_inflection_recovery() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("tone_burst_tone.wav");
    let fixture = common::tone_burst_tone(22050, 4.0, 2.0, 0.1);
    common::write_pcm16(&wav, fixture.sample_rate, &fixture.samples);

    let config = RunConfig::new(&wav, dir.path().join("out"));
    let analysis = analyze(&config).map_err(|e| e.to_string())?;
    let burst_slice = fixture.burst_start / analysis.hop_samples;
    let l = config.rolling_length;
    let interior = &analysis.inflections.indices()[1..analysis.inflections.len() - 1];
    ensure(
        interior.iter().any(|&t| t.abs_diff(burst_slice) <= l),
        || format!("burst at slice {burst_slice}, interior inflections {interior:?}"),
    )?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "burst at slice {burst_slice}, interior inflections {interior:?}, {:?}",
        start.elapsed()
    ))
}

fn random_trajectory(rng: &mut ChaCha8Rng) -> Trajectory {
    let slices = rng.random_range(3..=40usize);
    let tv = TvSeries::new(random_tv(rng, slices - 1), false).unwrap();
    let set = random_inflections(rng, slices);
    let alpha_mode = if rng.random_bool(0.2) { AlphaMode::SegmentLength } else { AlphaMode::SegmentTotal };
    let track = compute_alpha_track_with(&tv, &set, alpha_mode).unwrap();
    let classes = rng.random_range(1..=1000u32);
    let truncation = rng.random_bool(0.5).then(|| rng.random_range(0.1..=2.0));
    let spec = GeneratorSpec::new(
        rng.random_range(1..=12),
        classes,
        (rng.random_range(1..=512), rng.random_range(1..=512)),
        truncation,
    )
    .unwrap();
    let seed: u64 = rng.random();
    let keyframes = sample_keyframes(&set, &spec, &[], seed).unwrap();
    let plan = build_frame_plan(&keyframes, &track).unwrap();
    let digest: String = (0..64).map(|_| char::from_digit(rng.random_range(0..16), 16).unwrap()).collect();
    Trajectory {
        spec,
        fps: rng.random_range(1.0..120.0),
        keyframes,
        plan,
        metadata: TrajectoryMetadata {
            seed,
            tool_version: "0.1.0".into(),
            audio_sha256: digest,
        },
        alpha_mode,
    }
}

type Mutation = (&'static str, fn(&mut serde_json::Value));

fn trajectory_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    for case in 0..100 {
        let traj = random_trajectory(&mut rng);
        write_trajectory(&traj, &path).map_err(|e| format!("case {case}: {e}"))?;
        let back = read_trajectory(&path).map_err(|e| format!("case {case}: {e}"))?;
        ensure(back == traj, || format!("case {case}: round trip changed the value"))?;
    }

    let mutations: [Mutation; 10] = [
        ("frames[1].class_weights", |v| {
            let c = v["keyframes"][0]["category"].as_u64().unwrap().to_string();
            v["frames"][1]["class_weights"] = serde_json::json!({ c: 0.9 });
        }),
        ("fps", |v| v["fps"] = serde_json::json!(-30.0)),
        ("spec.d", |v| v["spec"]["d"] = serde_json::json!(0)),
        ("spec.image_size", |v| v["spec"]["image_size"] = serde_json::json!([0, 64])),
        ("spec.truncation", |v| v["spec"]["truncation"] = serde_json::json!(3.0)),
        ("keyframes[0].category", |v| {
            v["keyframes"][0]["category"] = v["spec"]["num_classes"].clone();
        }),
        ("keyframes[1].slice_index", |v| {
            v["keyframes"][1]["slice_index"] = serde_json::json!(10_000);
        }),
        ("frames[2].z", |v| {
            v["frames"][2]["z"].as_array_mut().unwrap().push(serde_json::json!(0.5));
        }),
        ("audio_sha256", |v| v["audio_sha256"] = serde_json::json!("not-a-digest")),
        ("seed", |v| v["seed"] = serde_json::json!(-1)),
    ];
    let base = random_trajectory(&mut rng);
    let text = base.to_json().map_err(|e| e.to_string())?;
    for (field, mutate) in mutations {
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        mutate(&mut value);
        std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
        match read_trajectory(&path) {
            Err(err @ TrajectoryError::Malformed { .. }) => ensure(err.field() == Some(field), || {
                format!("mutating {field} reported: {err}")
            })?,
            other => return Err(format!("mutating {field} gave {other:?}")),
        }
    }
    Ok("100 round trips, 10 mutations rejected with field paths".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("TV-series oracle equivalence", tv_series_oracle),
        ("Inflection brute-force equivalence", inflection_brute_force),
        ("Alpha invariants", alpha_invariants),
        ("Plan endpoint identity", plan_endpoint_identity),
        ("End-to-end determinism", end_to_end_determinism),
        ("Synthetic inflection recovery", synthetic_inflection_recovery),
        ("Trajectory round-trip", trajectory_round_trip),
    ];

    let mut failures = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(check).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(reason) => {
                failures += 1;
                println!("[FAIL] {name}: {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
