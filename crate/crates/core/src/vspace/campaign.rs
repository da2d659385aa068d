use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::drift::check_windows_ending_at;
use super::history::{feasible_steps, for_each_history};
use super::{random_model, Density, HistoryEnumeration, IdSet, ModelFilter, SafetyReport, Sizes, VersionSpaceModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub seeds: u32,
    pub base_seed: u64,
    /// Upper bound on |D|, |C| and |E|.
    pub max_size: usize,
    pub max_history_len: usize,
    /// Upper bound on |C_init|.
    pub max_init: usize,
    pub density: Density,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            seeds: 200,
            base_seed: 0,
            max_size: 5,
            max_history_len: 4,
            max_init: 4,
            density: Density::default(),
        }
    }
}

/// Counts for one theorem across the campaign.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremTally {
    /// Models that met the premise and were checked.
    pub models: u64,
    /// Seeds for which no premise-satisfying model was found.
    pub skipped: u64,
    /// Prefixes, subset pairs or windows examined.
    pub checks: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
}

impl TheoremTally {
    fn merge(&mut self, other: TheoremTally) {
        self.models += other.models;
        self.skipped += other.skipped;
        self.checks += other.checks;
        self.violations += other.violations;
        if self.first_violation.is_none() {
            self.first_violation = other.first_violation;
        }
    }

    fn record(&mut self, n: u64, describe: impl FnOnce() -> String) {
        if n > 0 {
            self.violations += n;
            if self.first_violation.is_none() {
                self.first_violation = Some(describe());
            }
        }
    }

    pub fn holds(&self) -> bool {
        self.models > 0 && self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    /// Multi-code safety over histories from C_init.
    pub safety_multi: TheoremTally,
    /// Single-code safety.
    pub safety_single: TheoremTally,
    /// Discriminative power over subset pairs, with elimination witnesses.
    pub discrimination: TheoremTally,
    /// Windowed lower bound on drifting histories.
    pub drift: TheoremTally,
    pub elapsed_ms: u128,
}

impl CampaignReport {
    pub fn holds(&self) -> bool {
        [&self.safety_multi, &self.safety_single, &self.discrimination, &self.drift]
            .iter()
            .all(|t| t.holds())
    }

    pub fn rows(&self) -> Vec<(&'static str, &TheoremTally)> {
        vec![
            ("safety (multi-code)", &self.safety_multi),
            ("safety (single code)", &self.safety_single),
            ("discriminative power", &self.discrimination),
            ("window drift bound", &self.drift),
        ]
    }
}

fn seed_for(base: u64, seed: u32, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ (seed as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Default)]
struct SeedResult {
    multi: TheoremTally,
    single: TheoremTally,
    discrimination: TheoremTally,
    drift: TheoremTally,
}

pub fn run_campaign(config: &CampaignConfig) -> CampaignReport {
    let start = Instant::now();
    let results: Vec<SeedResult> = (0..config.seeds).into_par_iter().map(|s| run_seed(config, s)).collect();
    let mut report = CampaignReport {
        config: config.clone(),
        safety_multi: TheoremTally::default(),
        safety_single: TheoremTally::default(),
        discrimination: TheoremTally::default(),
        drift: TheoremTally::default(),
        elapsed_ms: 0,
    };
    for r in results {
        report.safety_multi.merge(r.multi);
        report.safety_single.merge(r.single);
        report.discrimination.merge(r.discrimination);
        report.drift.merge(r.drift);
    }
    report.elapsed_ms = start.elapsed().as_millis();
    report
}

fn run_seed(config: &CampaignConfig, s: u32) -> SeedResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(config.base_seed, s, 0));
    let size = config.max_size.max(1);
    let sizes = Sizes {
        directions: rng.gen_range(1..=size),
        codes: rng.gen_range(1..=size),
        counterexamples: rng.gen_range(1..=size),
    };
    let max_init = config.max_init.clamp(1, sizes.codes);
    let init_size = rng.gen_range(1..=max_init);
    let mut codes: Vec<usize> = (0..sizes.codes).collect();
    for i in 0..init_size {
        let j = rng.gen_range(i..codes.len());
        codes.swap(i, j);
    }
    let c_init: IdSet = codes[..init_size].iter().copied().collect();
    let c_f = rng.gen_range(0..sizes.codes);
    let len = config.max_history_len;
    let mut out = SeedResult::default();

    match random_model(sizes, config.density, seed_for(config.base_seed, s, 1), ModelFilter::StableStarNonEmpty { c_init }) {
        Ok(m) => {
            let stab = m.stable_star(c_init).unwrap();
            let mode = HistoryEnumeration::for_model(&m, seed_for(config.base_seed, s, 2));
            safety_dfs(&m, stab, feasible_steps(&m, c_init), len, mode, &mut out.multi, s);

            let report = m.check_discriminative_power(c_init).unwrap();
            out.discrimination.models += 1;
            out.discrimination.checks += report.pairs_checked;
            out.discrimination.record(report.violations.len() as u64, || {
                format!("seed {s}: {:?}", report.violations[0])
            });
        }
        Err(_) => {
            out.multi.skipped += 1;
            out.discrimination.skipped += 1;
        }
    }

    match random_model(sizes, config.density, seed_for(config.base_seed, s, 3), ModelFilter::SingleCodeSound { c_f }) {
        Ok(m) => {
            let star = m.succeeding_directions(c_f).unwrap();
            let mode = HistoryEnumeration::for_model(&m, seed_for(config.base_seed, s, 4));
            safety_dfs(&m, star, feasible_steps(&m, IdSet::single(c_f)), len, mode, &mut out.single, s);
        }
        Err(_) => out.single.skipped += 1,
    }

    let m = random_model(sizes, config.density, seed_for(config.base_seed, s, 5), ModelFilter::Any).expect("unfiltered");
    let mode = HistoryEnumeration::for_model(&m, seed_for(config.base_seed, s, 6));
    drift_dfs(&m, feasible_steps(&m, m.all_codes()), len, mode, &mut out.drift, s);
    out
}

fn safety_dfs(
    m: &VersionSpaceModel,
    retained: IdSet,
    steps: Vec<super::Step>,
    len: usize,
    mode: HistoryEnumeration,
    tally: &mut TheoremTally,
    seed: u32,
) {
    let mut report = SafetyReport {
        premise_met: true,
        retained,
        prefixes_checked: 0,
        violations: Vec::new(),
    };
    for_each_history(
        &steps,
        len,
        mode,
        m.all_directions(),
        |v, s| v & m.consistent_directions(s.code, s.counterexample).unwrap(),
        |prefix, before, after| {
            if report.violations.len() < 8 {
                m.check_prefix(&mut report, before, after, prefix);
            } else {
                report.prefixes_checked += 1;
            }
        },
    );
    tally.models += 1;
    tally.checks += report.prefixes_checked;
    tally.record(report.violations.len() as u64, || format!("seed {seed}: {:?}", report.violations[0]));
}

#[derive(Clone, Copy)]
struct DriftState {
    alpha: usize,
    delta: usize,
    last: Option<IdSet>,
}

fn drift_dfs(m: &VersionSpaceModel, steps: Vec<super::Step>, len: usize, mode: HistoryEnumeration, tally: &mut TheoremTally, seed: u32) {
    let all = m.all_directions();
    let cons = |s: super::Step| m.consistent_directions(s.code, s.counterexample).unwrap();
    let init = DriftState {
        alpha: usize::MAX,
        delta: 0,
        last: None,
    };
    let mut sets = Vec::with_capacity(len);
    for_each_history(
        &steps,
        len,
        mode,
        init,
        |st, s| {
            let a = cons(s);
            DriftState {
                alpha: st.alpha.min(a.len()),
                delta: st.last.map_or(st.delta, |prev| st.delta.max((prev - a).len())),
                last: Some(a),
            }
        },
        |prefix, _, st| {
            if prefix.is_empty() {
                return;
            }
            sets.clear();
            sets.extend(prefix.iter().map(|&s| cons(s)));
            let (n, bad) = check_windows_ending_at(all, &sets, st.alpha, st.delta);
            tally.checks += n;
            tally.record(bad, || format!("seed {seed}: window bound fails on {prefix:?}"));
        },
    );
    tally.models += 1;
}
