//! Ground-truth oracle and statistical checks.
//!
//! Exact ranks are always computed from the raw data, never from a sketch.
//! Trials over the same data differ only in the sketch seed, so the
//! reported failure fractions estimate the per-query failure probability
//! of the sketch itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Zipf};
use serde::Serialize;

use crate::merge::merge_with_stats;
use crate::order::ItemOrder;
use crate::params::{Mode, Params};
use crate::sketch::{CompactionKind, Sketch};
use crate::trailing_ones;

/// `|{x ∈ data : x ≤ y}|` by a linear scan.
pub fn exact_rank<T, O: ItemOrder<T>>(data: &[T], y: &T, order: &O) -> u64 {
    data.iter().filter(|x| order.le(x, y)).count() as u64
}

/// Sorted copy of the data for answering many exact queries.
#[derive(Debug, Clone)]
pub struct ExactRanks {
    sorted: Vec<f64>,
}

impl ExactRanks {
    pub fn new(data: &[f64]) -> Self {
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn rank(&self, y: f64) -> u64 {
        self.sorted.partition_point(|x| x.total_cmp(&y).is_le()) as u64
    }

    /// The `r`-th smallest item (1-based).
    pub fn kth(&self, r: u64) -> f64 {
        self.sorted[(r - 1) as usize]
    }

    pub fn max(&self) -> Option<f64> {
        self.sorted.last().copied()
    }

    pub fn len(&self) -> u64 {
        self.sorted.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    Sorted,
    Reversed,
    /// Zipf(1000, 1.1) integers: heavy duplication of small values.
    Zipf,
}

pub fn generate(dist: Distribution, n: u64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match dist {
        Distribution::Uniform => (0..n).map(|_| rng.random::<f64>()).collect(),
        Distribution::Sorted => (1..=n).map(|i| i as f64).collect(),
        Distribution::Reversed => (1..=n).rev().map(|i| i as f64).collect(),
        Distribution::Zipf => {
            let zipf = Zipf::new(1000.0, 1.1).expect("valid zipf parameters");
            (0..n).map(|_| zipf.sample(&mut rng)).collect()
        }
    }
}

/// Shape of the merge tree used to combine shard sketches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// Repeatedly merge two randomly chosen sketches from the pool.
    Random,
    /// `((s₀ ⊕ s₁) ⊕ s₂) ⊕ …`
    LeftDeep,
    /// Pairwise rounds.
    Balanced,
}

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub mode: Mode,
    pub eps: f64,
    pub delta: f64,
    pub n: u64,
    pub trials: usize,
    pub distribution: Distribution,
    /// Defaults to `{2^j : B/2 < 2^j ≤ n}` for the initial `B`.
    pub query_ranks: Option<Vec<u64>>,
    pub seed: u64,
    /// 1 builds a single sketch over the whole stream.
    pub shards: usize,
    pub topology: Topology,
}

impl TrialConfig {
    pub fn new(mode: Mode, eps: f64, delta: f64, n: u64, trials: usize) -> Self {
        Self {
            mode,
            eps,
            delta,
            n,
            trials,
            distribution: Distribution::Uniform,
            query_ranks: None,
            seed: 1,
            shards: 1,
            topology: Topology::Balanced,
        }
    }

    pub fn params(&self) -> Result<Params, crate::ParamError> {
        Params::derive(self.mode, self.eps, self.delta, Some(self.n))
    }
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined word
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryOutcome {
    pub y: f64,
    pub exact_rank: u64,
    pub estimate: u64,
    pub error: i64,
    pub relative_error: f64,
    /// `|err| ≥ ε·R(y)`
    pub failed: bool,
}

/// Structural checks collected while merging shard sketches.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MergeAudit {
    pub merges: usize,
    /// Largest `peak / ⌈7/2·B⌉` over all merges.
    pub max_occupancy_ratio: f64,
    pub occupancy_violations: usize,
    /// Merges after which some `σ > N/k` or another invariant broke.
    pub invariant_violations: usize,
}

impl MergeAudit {
    fn absorb(&mut self, other: &MergeAudit) {
        self.merges += other.merges;
        self.max_occupancy_ratio = self.max_occupancy_ratio.max(other.max_occupancy_ratio);
        self.occupancy_violations += other.occupancy_violations;
        self.invariant_violations += other.invariant_violations;
    }

    pub fn clean(&self) -> bool {
        self.occupancy_violations == 0 && self.invariant_violations == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub seed: u64,
    pub n: u64,
    pub eps: f64,
    pub delta: f64,
    pub queries: Vec<QueryOutcome>,
    /// `rank(max item) == n`.
    pub weight_conserved: bool,
    pub stored_items: usize,
    pub merge: MergeAudit,
}

/// Merges `sketches` along `topology`, auditing every merge.
pub fn merge_tree(mut sketches: Vec<Sketch>, topology: Topology, seed: u64) -> (Sketch, MergeAudit) {
    assert!(!sketches.is_empty(), "merge tree needs at least one sketch");
    let mut audit = MergeAudit::default();
    let merge2 = |a: Sketch, b: Sketch, audit: &mut MergeAudit| {
        let (m, stats) = merge_with_stats(a, b).expect("shard sketches share parameters");
        audit.merges += 1;
        let ratio = stats.peak_occupancy as f64 / stats.occupancy_cap as f64;
        audit.max_occupancy_ratio = audit.max_occupancy_ratio.max(ratio);
        if !stats.within_cap() {
            audit.occupancy_violations += 1;
        }
        if m.check_invariants().is_err() {
            audit.invariant_violations += 1;
        }
        m
    };
    match topology {
        Topology::LeftDeep => {
            let mut it = sketches.into_iter();
            let mut acc = it.next().unwrap();
            for s in it {
                acc = merge2(acc, s, &mut audit);
            }
            (acc, audit)
        }
        Topology::Balanced => {
            while sketches.len() > 1 {
                let mut next = Vec::with_capacity(sketches.len().div_ceil(2));
                let mut it = sketches.into_iter();
                while let Some(a) = it.next() {
                    match it.next() {
                        Some(b) => next.push(merge2(a, b, &mut audit)),
                        None => next.push(a),
                    }
                }
                sketches = next;
            }
            (sketches.pop().unwrap(), audit)
        }
        Topology::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while sketches.len() > 1 {
                let i = rng.random_range(0..sketches.len());
                let a = sketches.swap_remove(i);
                let j = rng.random_range(0..sketches.len());
                let b = sketches.swap_remove(j);
                sketches.push(merge2(a, b, &mut audit));
            }
            (sketches.pop().unwrap(), audit)
        }
    }
}

/// Default query ranks: powers of two above the protected prefix.
pub fn default_query_ranks(params: &Params, n: u64) -> Vec<u64> {
    let half = (params.b() / 2) as u64;
    (0..64).map(|j| 1u64 << j).filter(|&r| r > half && r <= n).collect()
}

/// Builds one sketch (or a merge tree of shard sketches) over `data` and
/// compares its estimates at `queries` with the oracle.
fn run_trial(cfg: &TrialConfig, data: &[f64], oracle: &ExactRanks, queries: &[f64], trial: u64) -> TrialReport {
    let params = cfg.params().expect("validated trial parameters");
    let trial_seed = mix(cfg.seed, trial);
    let shards = cfg.shards.max(1);
    let (sketch, audit) = if shards == 1 {
        let mut s = Sketch::new(params, trial_seed);
        s.extend_from(data.iter().copied()).expect("finite data within bound");
        (s, MergeAudit::default())
    } else {
        let chunk = data.len().div_ceil(shards).max(1);
        let parts: Vec<Sketch> = (0..shards)
            .map(|i| {
                let mut s = Sketch::new(params, mix(trial_seed, i as u64 + 1));
                let lo = (i * chunk).min(data.len());
                let hi = ((i + 1) * chunk).min(data.len());
                s.extend_from(data[lo..hi].iter().copied()).expect("finite data within bound");
                s
            })
            .collect();
        merge_tree(parts, cfg.topology, mix(trial_seed, 0))
    };
    let outcomes = queries
        .iter()
        .map(|&y| {
            let exact = oracle.rank(y);
            let estimate = sketch.rank(&y);
            let error = estimate as i64 - exact as i64;
            let relative_error = error as f64 / exact as f64;
            QueryOutcome {
                y,
                exact_rank: exact,
                estimate,
                error,
                relative_error,
                failed: error.unsigned_abs() as f64 >= cfg.eps * exact as f64,
            }
        })
        .collect();
    let weight_conserved = oracle.max().is_none_or(|m| sketch.rank(&m) == oracle.len());
    TrialReport {
        seed: trial_seed,
        n: oracle.len(),
        eps: cfg.eps,
        delta: cfg.delta,
        queries: outcomes,
        weight_conserved,
        stored_items: sketch.stored_items(),
        merge: audit,
    }
}

/// Per-rank statistics over all trials.
#[derive(Debug, Clone, Serialize)]
pub struct RankStat {
    pub rank: u64,
    pub exact_rank: u64,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Largest acceptable failure fraction.
    pub band: f64,
    pub mean_err: f64,
    pub sample_var: f64,
    pub std_err: f64,
    pub failure_ok: bool,
    /// `|mean err| ≤ 4·std_err`.
    pub bias_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureReport {
    pub mode: String,
    pub eps: f64,
    pub delta: f64,
    pub n: u64,
    pub k: usize,
    pub b: usize,
    pub trials: usize,
    pub shards: usize,
    pub ranks: Vec<RankStat>,
    /// Trials in which `rank(max) = n`.
    pub weight_conserved: usize,
    pub max_stored_items: usize,
    pub merge: MergeAudit,
}

impl FailureReport {
    pub fn failure_ok(&self) -> bool {
        self.ranks.iter().all(|r| r.failure_ok)
    }

    pub fn bias_ok(&self) -> bool {
        self.ranks.iter().all(|r| r.bias_ok)
    }
}

/// Acceptable failure fraction over `trials` runs: the proven probability
/// bound plus three binomial standard deviations. Known-length streaming
/// is proven to fail with probability below `3δ`; the other modes below `δ`.
pub fn failure_band(mode: Mode, delta: f64, trials: usize) -> f64 {
    let p = match mode {
        Mode::StreamingKnownN => (3.0 * delta).min(1.0),
        _ => delta,
    };
    (p + 3.0 * (p * (1.0 - p) / trials as f64).sqrt()).min(1.0)
}

pub fn failure_rate(cfg: &TrialConfig) -> FailureReport {
    failure_rate_with_band(cfg, failure_band(cfg.mode, cfg.delta, cfg.trials))
}

/// Runs `cfg.trials` independently seeded builds over one fixed dataset.
pub fn failure_rate_with_band(cfg: &TrialConfig, band: f64) -> FailureReport {
    let params = cfg.params().expect("valid trial parameters");
    let data = generate(cfg.distribution, cfg.n, cfg.seed);
    let oracle = ExactRanks::new(&data);
    let ranks = cfg.query_ranks.clone().unwrap_or_else(|| default_query_ranks(&params, cfg.n));
    let queries: Vec<f64> = ranks.iter().map(|&r| oracle.kth(r)).collect();

    let mut failures = vec![0usize; ranks.len()];
    let mut sum = vec![0f64; ranks.len()];
    let mut sum_sq = vec![0f64; ranks.len()];
    let mut weight_conserved = 0;
    let mut max_stored = 0;
    let mut merge = MergeAudit::default();
    for t in 0..cfg.trials {
        let report = run_trial(cfg, &data, &oracle, &queries, t as u64);
        for (i, q) in report.queries.iter().enumerate() {
            failures[i] += usize::from(q.failed);
            sum[i] += q.error as f64;
            sum_sq[i] += (q.error as f64).powi(2);
        }
        weight_conserved += usize::from(report.weight_conserved);
        max_stored = max_stored.max(report.stored_items);
        merge.absorb(&report.merge);
    }

    let t = cfg.trials as f64;
    let stats = ranks
        .iter()
        .enumerate()
        .map(|(i, &rank)| {
            let mean = sum[i] / t;
            let sample_var = if cfg.trials > 1 { ((sum_sq[i] - t * mean * mean) / (t - 1.0)).max(0.0) } else { 0.0 };
            let std_err = (sample_var / t).sqrt();
            let failure_rate = failures[i] as f64 / t;
            RankStat {
                rank,
                exact_rank: oracle.rank(queries[i]),
                trials: cfg.trials,
                failures: failures[i],
                failure_rate,
                band,
                mean_err: mean,
                sample_var,
                std_err,
                failure_ok: failure_rate <= band,
                bias_ok: if std_err == 0.0 { mean == 0.0 } else { mean.abs() <= 4.0 * std_err },
            }
        })
        .collect();
    FailureReport {
        mode: cfg.mode.to_string(),
        eps: cfg.eps,
        delta: cfg.delta,
        n: cfg.n,
        k: params.k(),
        b: params.b(),
        trials: cfg.trials,
        shards: cfg.shards,
        ranks: stats,
        weight_conserved,
        max_stored_items: max_stored,
        merge,
    }
}

/// One trial over `shards` shards merged along `tree`.
pub fn merge_tree_trial(shards: usize, tree: Topology, cfg: &TrialConfig) -> TrialReport {
    assert!(shards >= 1);
    let cfg = TrialConfig { shards, topology: tree, ..cfg.clone() };
    let params = cfg.params().expect("valid trial parameters");
    let data = generate(cfg.distribution, cfg.n, cfg.seed);
    let oracle = ExactRanks::new(&data);
    let ranks = cfg.query_ranks.clone().unwrap_or_else(|| default_query_ranks(&params, cfg.n));
    let queries: Vec<f64> = ranks.iter().map(|&r| oracle.kth(r)).collect();
    run_trial(&cfg, &data, &oracle, &queries, 0)
}

/// Exact-rank check below the protected prefix: every query whose exact
/// rank is at most `B₀/2` must be answered without error. Returns the
/// number of wrong answers.
pub fn low_rank_mismatches(sketch: &Sketch, oracle: &ExactRanks, b0: usize) -> usize {
    let limit = (b0 / 2).min(oracle.len() as usize) as u64;
    (1..=limit)
        .filter(|&r| {
            let y = oracle.kth(r);
            let exact = oracle.rank(y);
            exact <= limit && sketch.rank(&y) != exact
        })
        .count()
}

/// Checks the compaction schedule over the states `0..2^m`, where section
/// count is `sections(σ)`:
///
/// * between any two states that compact exactly `j` sections there is a
///   state that compacts more than `j`;
/// * every state a compactor can reach before its schedule is exhausted
///   (`σ < 2^m − 1`) compacts at most `m` sections.
pub fn schedule_check_with(m: u32, sections: impl Fn(u64) -> u64) -> bool {
    assert!((1..=20).contains(&m), "schedule_check supports 1 <= m <= 20");
    let states = 1u64 << m;
    // last index seen with j sections, and the largest section count since
    let mut last: Vec<Option<u64>> = vec![None; 66];
    let mut max_since: Vec<u64> = vec![0; 66];
    for sigma in 0..states {
        let j = sections(sigma);
        if sigma + 1 < states && j > u64::from(m) {
            return false;
        }
        let j_idx = (j as usize).min(65);
        if last[j_idx].is_some() && max_since[j_idx] <= j {
            return false;
        }
        for (idx, mx) in max_since.iter_mut().enumerate() {
            if idx != j_idx {
                *mx = (*mx).max(j);
            }
        }
        last[j_idx] = Some(sigma);
        max_since[j_idx] = 0;
    }
    true
}

/// The production schedule: `z(σ) + 1` sections.
pub fn schedule_check(m: u32) -> bool {
    schedule_check_with(m, |s| u64::from(trailing_ones(s)) + 1)
}

/// Per-level important-step counts for one query.
#[derive(Debug, Clone, Serialize)]
pub struct LevelAudit {
    pub level: usize,
    /// Compactions whose range held an odd number of items `≤ y`.
    pub important_steps: u64,
    /// Items `≤ y` inserted into this level.
    pub input_rank: u64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryAudit {
    pub y: f64,
    pub levels: Vec<LevelAudit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub k: usize,
    pub queries: Vec<QueryAudit>,
}

impl AuditReport {
    /// `important_steps·k ≤ input_rank` at every level for every query.
    pub fn holds(&self) -> bool {
        self.queries.iter().all(|q| q.levels.iter().all(|l| l.within_bound))
    }
}

/// Builds a traced sketch over `stream` and counts, per level and query,
/// the scheduled compactions that changed the query's rank estimate.
pub fn important_step_audit(stream: &[f64], queries: &[f64], params: Params, seed: u64) -> AuditReport {
    let mut sketch = Sketch::new(params, seed);
    sketch.enable_trace();
    sketch.extend_from(stream.iter().copied()).expect("finite data within bound");
    let trace = sketch.take_trace();
    let height = sketch.height();
    let k = params.k();

    let queries = queries
        .iter()
        .map(|&y| {
            let le = |x: &f64| x.total_cmp(&y).is_le();
            let mut input = vec![0u64; height + 1];
            let mut important = vec![0u64; height + 1];
            input[0] = stream.iter().filter(|x| le(x)).count() as u64;
            for ev in &trace {
                let below = ev.removed.iter().filter(|x| le(x)).count();
                if ev.kind == CompactionKind::Scheduled && below % 2 == 1 {
                    important[ev.level] += 1;
                }
                input[ev.level + 1] += ev.promoted().filter(|x| le(x)).count() as u64;
            }
            let levels = (0..=height)
                .map(|h| LevelAudit {
                    level: h,
                    important_steps: important[h],
                    input_rank: input[h],
                    within_bound: important[h] * k as u64 <= input[h],
                })
                .collect();
            QueryAudit { y, levels }
        })
        .collect();
    AuditReport { k, queries }
}

/// `stored_items` after ingesting `n` uniform items, for each `n`.
pub fn space_profile(mode: Mode, eps: f64, delta: f64, ns: &[u64], seed: u64) -> Vec<(u64, usize)> {
    ns.iter()
        .map(|&n| {
            let params = Params::derive(mode, eps, delta, Some(n)).expect("valid space profile parameters");
            let mut s = Sketch::new(params, seed);
            s.extend_from(generate(Distribution::Uniform, n, mix(seed, n))).expect("finite data");
            (n, s.stored_items())
        })
        .collect()
}

/// `ε⁻¹·log₂^{1.5}(εn)·√(ln(1/δ))`
pub fn space_bound_shape(eps: f64, delta: f64, n: u64) -> f64 {
    (eps * n as f64).log2().powf(1.5) * (1.0 / delta).ln().sqrt() / eps
}

/// Result of the `selftest` command.
#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub schedule_ok: bool,
    pub low_rank_mismatches: usize,
    pub failure: FailureReport,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.schedule_ok && self.low_rank_mismatches == 0 && self.failure.failure_ok() && self.failure.bias_ok()
    }
}

/// Schedule combinatorics, low-rank exactness and the per-rank failure and
/// bias checks for a mergeable sketch.
pub fn selftest(eps: f64, delta: f64, n: u64, trials: usize, seed: u64) -> Result<SelftestReport, crate::ParamError> {
    let mut cfg = TrialConfig::new(Mode::Mergeable, eps, delta, n, trials);
    cfg.seed = seed;
    let params = cfg.params()?;
    let schedule_ok = (3..=12).all(schedule_check);

    let data = generate(Distribution::Uniform, n, seed);
    let oracle = ExactRanks::new(&data);
    let mut sketch = Sketch::new(params, mix(seed, u64::MAX));
    sketch.extend_from(data.iter().copied()).expect("finite data");
    let low = low_rank_mismatches(&sketch, &oracle, params.b());

    let failure = failure_rate(&cfg);
    Ok(SelftestReport { schedule_ok, low_rank_mismatches: low, failure })
}
