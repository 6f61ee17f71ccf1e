//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relq::codec::{deserialize, serialize};
use relq::verify::*;
use relq::{Mode, Params, Sketch};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn worst_rate(r: &FailureReport) -> f64 {
    r.ranks.iter().map(|s| s.failure_rate).fold(0.0, f64::max)
}

fn worst_bias(r: &FailureReport) -> f64 {
    r.ranks
        .iter()
        .map(|s| match (s.std_err, s.mean_err) {
            (se, m) if se > 0.0 => m.abs() / se,
            (_, 0.0) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

fn low_rank_exactness() -> Outcome {
    let start = Instant::now();
    let params = Params::mergeable(0.05, 0.1).unwrap();
    let b0 = params.b();
    let data = generate(Distribution::Uniform, 1 << 18, 101);
    let oracle = ExactRanks::new(&data);
    let mut bad_trials = 0;
    let mut mismatches = 0;
    for t in 0..100 {
        let mut s = Sketch::new(params, 1000 + t);
        s.extend_from(data.iter().copied()).unwrap();
        let m = low_rank_mismatches(&s, &oracle, b0);
        mismatches += m;
        bad_trials += usize::from(m > 0);
    }
    let elapsed = start.elapsed();
    outcome(
        bad_trials == 0 && elapsed < Duration::from_secs(30),
        format!("ranks 1..={} exact in {}/100 trials ({mismatches} wrong answers), {}", b0 / 2, 100 - bad_trials, secs(elapsed)),
    )
}

struct ErrorRuns {
    mergeable: FailureReport,
    streaming: FailureReport,
    elapsed: Duration,
}

fn error_runs() -> ErrorRuns {
    let start = Instant::now();
    // 0.152 for both modes; known-length streaming would be allowed 3δ
    let band = failure_band(Mode::Mergeable, 0.1, 300);
    let mut cfg = TrialConfig::new(Mode::Mergeable, 0.1, 0.1, 1 << 17, 300);
    cfg.seed = 202;
    let mergeable = failure_rate_with_band(&cfg, band);
    cfg.mode = Mode::StreamingKnownN;
    let streaming = failure_rate_with_band(&cfg, band);
    ErrorRuns { mergeable, streaming, elapsed: start.elapsed() }
}

fn relative_error(runs: &ErrorRuns) -> Outcome {
    let (m, s) = (&runs.mergeable, &runs.streaming);
    outcome(
        m.failure_ok() && s.failure_ok() && runs.elapsed < Duration::from_secs(300),
        format!(
            "worst per-rank failure fraction {:.3} mergeable, {:.3} streaming, band {:.3}; {} ranks each, {}",
            worst_rate(m),
            worst_rate(s),
            m.ranks[0].band,
            m.ranks.len(),
            secs(runs.elapsed)
        ),
    )
}

fn unbiasedness(runs: &ErrorRuns) -> Outcome {
    let (m, s) = (&runs.mergeable, &runs.streaming);
    outcome(
        m.bias_ok() && s.bias_ok(),
        format!("largest |mean err|/SE {:.2} mergeable, {:.2} streaming (limit 4)", worst_bias(m), worst_bias(s)),
    )
}

fn weight_conservation(runs: &ErrorRuns) -> Outcome {
    let s = &runs.streaming;
    outcome(s.weight_conserved == s.trials, format!("rank(max) = n in {}/{} streaming trials", s.weight_conserved, s.trials))
}

fn fuzzed_merge_trees() -> MergeAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut total = MergeAudit::default();
    for tree in 0..100u64 {
        let eps = [0.5, 0.3, 0.2, 0.1][rng.random_range(0..4)];
        let delta = [0.2, 0.1, 0.01][rng.random_range(0..3)];
        let params = Params::mergeable(eps, delta).unwrap();
        let shards = rng.random_range(2..=12);
        let topology = [Topology::Random, Topology::Balanced, Topology::LeftDeep][rng.random_range(0..3)];
        let dist = [Distribution::Uniform, Distribution::Sorted, Distribution::Reversed, Distribution::Zipf]
            [rng.random_range(0..4)];
        let sketches = (0..shards)
            .map(|i| {
                let len = if rng.random_bool(0.1) { 0 } else { rng.random_range(1..6000) };
                let mut s = Sketch::new(params, rng.random());
                s.extend_from(generate(dist, len, tree * 100 + i)).unwrap();
                s
            })
            .collect();
        let (merged, audit) = merge_tree(sketches, topology, tree);
        total.merges += audit.merges;
        total.max_occupancy_ratio = total.max_occupancy_ratio.max(audit.max_occupancy_ratio);
        total.occupancy_violations += audit.occupancy_violations;
        total.invariant_violations += audit.invariant_violations + usize::from(merged.check_invariants().is_err());
    }
    total
}

fn mergeability() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for topology in [Topology::Random, Topology::Balanced, Topology::LeftDeep] {
        let mut cfg = TrialConfig::new(Mode::Mergeable, 0.1, 0.1, 16 << 14, 300);
        cfg.seed = 303;
        cfg.shards = 16;
        cfg.topology = topology;
        let r = failure_rate(&cfg);
        pass &= r.failure_ok() && r.bias_ok() && r.merge.clean();
        parts.push(format!(
            "{topology:?}: fail {:.3}, |mean|/SE {:.2}, peak/cap {:.2}",
            worst_rate(&r),
            worst_bias(&r),
            r.merge.max_occupancy_ratio
        ));
    }
    let fuzz = fuzzed_merge_trees();
    pass &= fuzz.clean();
    parts.push(format!(
        "100 fuzzed trees: {} merges, {} cap and {} invariant violations",
        fuzz.merges, fuzz.occupancy_violations, fuzz.invariant_violations
    ));
    parts.push(secs(start.elapsed()));
    outcome(pass, parts.join("; "))
}

fn space_scaling() -> Outcome {
    let ns = [1u64 << 14, 1 << 16, 1 << 18, 1 << 20];
    let (eps, delta) = (0.05, 0.1);
    let mut pass = true;
    let mut parts = Vec::new();
    for mode in [Mode::Mergeable, Mode::StreamingKnownN] {
        let profile = space_profile(mode, eps, delta, &ns, 505);
        let shape: Vec<f64> = ns.iter().map(|&n| space_bound_shape(eps, delta, n)).collect();
        let c = 1.25 * profile[0].1 as f64 / shape[0];
        let fits = profile.iter().zip(&shape).all(|(&(_, s), &f)| s as f64 <= c * f);
        let monotone = profile.windows(2).all(|w| w[1].1 > w[0].1);
        let ratios: Vec<(f64, f64)> = (1..ns.len())
            .map(|i| (profile[i].1 as f64 / profile[i - 1].1 as f64, shape[i] / shape[i - 1]))
            .collect();
        let ratio_ok = ratios.iter().all(|&(got, want)| (got / want - 1.0).abs() <= 0.2);
        pass &= fits && monotone && ratio_ok;
        parts.push(format!(
            "{mode}: stored {:?}, C={:.2}, fits={fits}, growth/predicted {:?}",
            profile.iter().map(|p| p.1).collect::<Vec<_>>(),
            c,
            ratios.iter().map(|&(g, w)| format!("{:.2}", g / w)).collect::<Vec<_>>()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn schedule_combinatorics() -> Outcome {
    let passes = (3..=12).filter(|&m| schedule_check(m)).count();
    let controls_fail = (3..=12).filter(|&m| !schedule_check_with(m, |s| u64::from(s.trailing_zeros()) + 1)).count();
    outcome(
        passes == 10 && controls_fail == 10,
        format!("schedule passes for {passes}/10 m; trailing-zeros control fails for {controls_fail}/10"),
    )
}

fn important_steps() -> Outcome {
    let start = Instant::now();
    let n = 1u64 << 14;
    let params = Params::streaming(0.1, 0.1, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut streams = vec![generate(Distribution::Sorted, n, 0), generate(Distribution::Reversed, n, 0)];
    streams.extend((0..50).map(|i| generate(Distribution::Uniform, n, 7000 + i)));
    let (mut checks, mut violations) = (0, 0);
    for stream in &streams {
        let queries: Vec<f64> = (0..20).map(|_| stream[rng.random_range(0..stream.len())]).collect();
        let audit = important_step_audit(stream, &queries, params, rng.random());
        for q in &audit.queries {
            checks += q.levels.len();
            violations += q.levels.iter().filter(|l| !l.within_bound).count();
        }
    }
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && elapsed < Duration::from_secs(60),
        format!("{checks} (stream, query, level) checks, {violations} violations, {}", secs(elapsed)),
    )
}

fn high_confidence() -> Outcome {
    let (eps, delta) = (0.2f64, 1e-6f64);
    // 16·⌈5·log₂(ln 10⁶)⌉ = 16·⌈18.94⌉
    let expected_k = 304;
    let hand = 16 * ((1.0 / eps) * (1.0 / delta).ln().log2()).ceil() as usize;
    let mut cfg = TrialConfig::new(Mode::HighConfidence, eps, delta, 1 << 16, 200);
    cfg.seed = 909;
    let r = failure_rate(&cfg);
    let failures: usize = r.ranks.iter().map(|s| s.failures).sum();
    outcome(
        failures == 0 && r.k == expected_k && hand == expected_k,
        format!("k = {} (expected {expected_k}), {failures} failures over 200 trials x {} ranks", r.k, r.ranks.len()),
    )
}

fn mutate(rng: &mut ChaCha8Rng, mut bytes: Vec<u8>) -> Vec<u8> {
    match rng.random_range(0..4) {
        0 => {
            for _ in 0..rng.random_range(1..5) {
                if !bytes.is_empty() {
                    let i = rng.random_range(0..bytes.len());
                    bytes[i] ^= 1 << rng.random_range(0..8);
                }
            }
        }
        1 => {
            let keep = rng.random_range(0..=bytes.len());
            bytes.truncate(keep);
        }
        2 => {
            let i = rng.random_range(0..bytes.len().max(1)).min(bytes.len());
            let junk: Vec<u8> = (0..rng.random_range(1..16)).map(|_| rng.random()).collect();
            bytes.splice(i..i, junk);
        }
        _ => {
            for b in bytes.iter_mut().skip(4).take(70) {
                if rng.random_bool(0.1) {
                    *b = rng.random();
                }
            }
        }
    }
    bytes
}

fn random_sketch(rng: &mut ChaCha8Rng, slack: u64) -> Sketch {
    let len = rng.random_range(0..20_000u64);
    let params = if rng.random_bool(0.5) {
        Params::mergeable([0.5, 0.2, 0.1][rng.random_range(0..3)], 0.1).unwrap()
    } else {
        Params::streaming(0.1, 0.1, len + slack + 100).unwrap()
    };
    let mut s = Sketch::new(params, rng.random());
    let dist = [Distribution::Uniform, Distribution::Zipf, Distribution::Sorted][rng.random_range(0..3)];
    s.extend_from(generate(dist, len, rng.random())).unwrap();
    s
}

fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let valid: Vec<Vec<u8>> = (0..20).map(|_| serialize(&random_sketch(&mut rng, 0))).collect();
    let (mut panics, mut accepted_broken, mut accepted) = (0, 0, 0);
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    for i in 0..1000 {
        let bytes = if i % 4 == 0 {
            (0..rng.random_range(0..300)).map(|_| rng.random()).collect()
        } else {
            let base = valid[rng.random_range(0..valid.len())].clone();
            mutate(&mut rng, base)
        };
        match catch_unwind(AssertUnwindSafe(|| deserialize(&bytes))) {
            Err(_) => panics += 1,
            Ok(Ok(s)) => {
                accepted += 1;
                accepted_broken += usize::from(s.check_invariants().is_err());
            }
            Ok(Err(_)) => {}
        }
    }
    std::panic::set_hook(hook);

    let mut mismatched = 0;
    for _ in 0..100 {
        let extra = 1000u64;
        let mut a = random_sketch(&mut rng, extra);
        let bytes = serialize(&a);
        let mut b = deserialize(&bytes).unwrap();
        let mut same = serialize(&b) == bytes;
        for x in generate(Distribution::Uniform, extra, rng.random()) {
            a.update(x).unwrap();
            b.update(x).unwrap();
        }
        same &= serialize(&a) == serialize(&b);
        same &= (0..50).all(|i| {
            let y = i as f64 / 50.0;
            a.rank(&y) == b.rank(&y)
        });
        same &= (1..=a.n()).step_by(97).all(|r| a.quantile(r) == b.quantile(r));
        mismatched += usize::from(!same);
    }
    outcome(
        panics == 0 && accepted_broken == 0 && mismatched == 0,
        format!(
            "1000 fuzzed inputs: {panics} panics, {accepted} accepted ({accepted_broken} broken); 100 round trips: {mismatched} diverged"
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| {
        println!("criterion {id:>2} {name:<26} {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    report(1, "low-rank exactness", low_rank_exactness());
    let runs = error_runs();
    report(2, "relative-error guarantee", relative_error(&runs));
    report(3, "unbiasedness", unbiasedness(&runs));
    report(4, "full mergeability", mergeability());
    report(5, "space scaling", space_scaling());
    report(6, "schedule combinatorics", schedule_combinatorics());
    report(7, "important-step bound", important_steps());
    report(8, "weight conservation", weight_conservation(&runs));
    report(9, "high-confidence mode", high_confidence());
    report(10, "codec", codec());
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} passed in {}", results.len() - failed.len(), results.len(), secs(start.elapsed()));
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
