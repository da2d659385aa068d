//! Finite version-space models over directions, codes and counterexamples.
//!
//! All sets are bitsets over at most 64 ids, and every check is exact.
//! Measures are cardinality proportions `|S| / |D|`.

mod campaign;
mod drift;
mod history;
mod random;
mod survival;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{BitAnd, BitOr, Sub};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use campaign::{run_campaign, CampaignConfig, CampaignReport, TheoremTally};
pub use drift::{drift_bound_check, linear_version_space, windowed_version_space, DriftMeasures, DriftReport, DriftViolation};
pub use history::{enumerate_histories, feasible_steps, for_each_history, History, HistoryEnumeration, Step};
pub use random::{random_model, Density, ModelFilter, Sizes};
pub use survival::{survival_probability, two_code_generator, Coupling, GeneratorSpec, SurvivalEstimate};

pub const MAX_IDS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum VsError {
    #[error("unknown code id {0}")]
    UnknownCode(usize),
    #[error("unknown direction id {0}")]
    UnknownDirection(usize),
    #[error("unknown counterexample id {0}")]
    UnknownCounterexample(usize),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("{0} must be non-empty")]
    Empty(&'static str),
    #[error("invalid history: {0}")]
    InvalidHistory(String),
    #[error("window {w} exceeds history length {t}")]
    WindowTooLarge { w: usize, t: usize },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("no model satisfying the filter after {0} attempts")]
    FilterUnsatisfiable(u32),
    #[error("generator marginal {actual} is below the required {required}")]
    MarginalViolated { actual: f64, required: f64 },
    #[error("local soundness does not hold for the chosen direction")]
    NotLocallySound,
}

/// A set of ids below 64.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct IdSet(pub u64);

impl IdSet {
    pub const EMPTY: IdSet = IdSet(0);

    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_IDS);
        if n == 64 {
            IdSet(u64::MAX)
        } else {
            IdSet((1u64 << n) - 1)
        }
    }

    pub fn single(i: usize) -> Self {
        IdSet(1 << i)
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 >> i & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn remove(&mut self, i: usize) {
        self.0 &= !(1 << i);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: IdSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }

    /// Non-empty subsets of `self`, in increasing bit order.
    pub fn subsets(self) -> impl Iterator<Item = IdSet> {
        let full = self.0;
        let mut sub = 0u64;
        std::iter::from_fn(move || {
            sub = sub.wrapping_sub(full) & full;
            (sub != 0).then_some(IdSet(sub))
        })
    }
}

impl FromIterator<usize> for IdSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut s = IdSet::EMPTY;
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl BitAnd for IdSet {
    type Output = IdSet;
    fn bitand(self, rhs: IdSet) -> IdSet {
        IdSet(self.0 & rhs.0)
    }
}

impl BitOr for IdSet {
    type Output = IdSet;
    fn bitor(self, rhs: IdSet) -> IdSet {
        IdSet(self.0 | rhs.0)
    }
}

impl Sub for IdSet {
    type Output = IdSet;
    fn sub(self, rhs: IdSet) -> IdSet {
        IdSet(self.0 & !rhs.0)
    }
}

impl fmt::Debug for IdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for IdSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for IdSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<usize>::deserialize(d)?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= MAX_IDS) {
            return Err(serde::de::Error::custom(format!("id {bad} out of range")));
        }
        Ok(ids.into_iter().collect())
    }
}

/// Pass, Cons and observation tables over named ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct VersionSpaceModel {
    directions: Vec<String>,
    codes: Vec<String>,
    counterexamples: Vec<String>,
    /// Per code c: D_c^⋆.
    pass: Vec<IdSet>,
    /// Per code c and counterexample e: D_c(e).
    cons: Vec<Vec<IdSet>>,
    /// Per code c: the observable counterexamples.
    obs: Vec<IdSet>,
}

/// On-disk form: 0/1 tables indexed `pass[c][d]` and `cons[c][d][e]`,
/// observations by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    directions: Vec<String>,
    codes: Vec<String>,
    counterexamples: Vec<String>,
    pass: Vec<Vec<u8>>,
    cons: Vec<Vec<Vec<u8>>>,
    obs: BTreeMap<String, Vec<String>>,
}

impl TryFrom<ModelFile> for VersionSpaceModel {
    type Error = VsError;

    fn try_from(f: ModelFile) -> Result<Self, VsError> {
        let mut m = VersionSpaceModel::with_names(f.directions, f.codes, f.counterexamples)?;
        let (nd, nc, ne) = (m.n_directions(), m.n_codes(), m.n_counterexamples());
        let shape = |what: &str| VsError::Malformed(format!("{what} table has the wrong shape"));
        if f.pass.len() != nc || f.pass.iter().any(|r| r.len() != nd) {
            return Err(shape("pass"));
        }
        if f.cons.len() != nc || f.cons.iter().any(|r| r.len() != nd || r.iter().any(|x| x.len() != ne)) {
            return Err(shape("cons"));
        }
        for c in 0..nc {
            for d in 0..nd {
                m.set_pass(c, d, bit(f.pass[c][d])?);
                for e in 0..ne {
                    m.set_cons(c, d, e, bit(f.cons[c][d][e])?);
                }
            }
        }
        for (code, seen) in &f.obs {
            let c = m.code_id(code)?;
            for name in seen {
                let e = m.counterexample_id(name)?;
                m.set_obs(c, e, true);
            }
        }
        Ok(m)
    }
}

fn bit(x: u8) -> Result<bool, VsError> {
    match x {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(VsError::Malformed(format!("table entry {x} is not 0 or 1"))),
    }
}

impl From<VersionSpaceModel> for ModelFile {
    fn from(m: VersionSpaceModel) -> Self {
        let (nd, nc, ne) = (m.n_directions(), m.n_codes(), m.n_counterexamples());
        ModelFile {
            pass: (0..nc).map(|c| (0..nd).map(|d| m.pass[c].contains(d) as u8).collect()).collect(),
            cons: (0..nc)
                .map(|c| (0..nd).map(|d| (0..ne).map(|e| m.cons[c][e].contains(d) as u8).collect()).collect())
                .collect(),
            obs: (0..nc)
                .map(|c| (m.codes[c].clone(), m.obs[c].iter().map(|e| m.counterexamples[e].clone()).collect()))
                .collect(),
            directions: m.directions,
            codes: m.codes,
            counterexamples: m.counterexamples,
        }
    }
}

/// Which clauses of a safety theorem a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyClause {
    Monotone,
    Retention,
    NonEmpty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub clause: SafetyClause,
    /// Prefix of the history at which the clause fails.
    pub prefix: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub premise_met: bool,
    /// The retained set: D⋆_stab, or D_c^⋆ in the single-code form.
    pub retained: IdSet,
    pub prefixes_checked: u64,
    pub violations: Vec<SafetyViolation>,
}

impl SafetyReport {
    fn premise_unmet(retained: IdSet) -> Self {
        Self {
            premise_met: false,
            retained,
            prefixes_checked: 0,
            violations: Vec::new(),
        }
    }

    pub fn holds(&self) -> bool {
        self.premise_met && self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        if !self.premise_met {
            "premise unmet".to_string()
        } else if self.violations.is_empty() {
            format!("{} prefixes, no violations", self.prefixes_checked)
        } else {
            format!("{} violations in {} prefixes", self.violations.len(), self.prefixes_checked)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationViolation {
    pub b1: IdSet,
    pub b2: IdSet,
    pub clause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    pub premise_met: bool,
    pub pairs_checked: u64,
    /// Pairs with U(B2) strictly smaller than U(B1).
    pub strict_pairs: u64,
    pub violations: Vec<DiscriminationViolation>,
}

/// Evidence that adding codes eliminates a direction without touching
/// D⋆_stab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationWitness {
    pub direction: usize,
    pub code: usize,
    pub counterexample: usize,
}

impl VersionSpaceModel {
    /// All-zero tables with generated names `d0..`, `c0..`, `e0..`.
    pub fn new(n_directions: usize, n_codes: usize, n_counterexamples: usize) -> Result<Self, VsError> {
        let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect();
        Self::with_names(names("d", n_directions), names("c", n_codes), names("e", n_counterexamples))
    }

    pub fn with_names(directions: Vec<String>, codes: Vec<String>, counterexamples: Vec<String>) -> Result<Self, VsError> {
        for (what, v) in [("D", &directions), ("C", &codes), ("E", &counterexamples)] {
            if v.is_empty() {
                return Err(VsError::Empty(what));
            }
            if v.len() > MAX_IDS {
                return Err(VsError::Malformed(format!("{what} has more than {MAX_IDS} elements")));
            }
            let mut sorted = v.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != v.len() {
                return Err(VsError::Malformed(format!("{what} has duplicate names")));
            }
        }
        let (nc, ne) = (codes.len(), counterexamples.len());
        Ok(Self {
            directions,
            codes,
            counterexamples,
            pass: vec![IdSet::EMPTY; nc],
            cons: vec![vec![IdSet::EMPTY; ne]; nc],
            obs: vec![IdSet::EMPTY; nc],
        })
    }

    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn n_codes(&self) -> usize {
        self.codes.len()
    }

    pub fn n_counterexamples(&self) -> usize {
        self.counterexamples.len()
    }

    pub fn all_directions(&self) -> IdSet {
        IdSet::full(self.n_directions())
    }

    pub fn all_codes(&self) -> IdSet {
        IdSet::full(self.n_codes())
    }

    pub fn direction_name(&self, d: usize) -> &str {
        &self.directions[d]
    }

    pub fn code_name(&self, c: usize) -> &str {
        &self.codes[c]
    }

    pub fn counterexample_name(&self, e: usize) -> &str {
        &self.counterexamples[e]
    }

    fn lookup(names: &[String], name: &str) -> Result<usize, VsError> {
        names.iter().position(|n| n == name).ok_or_else(|| VsError::UnknownName(name.to_string()))
    }

    pub fn direction_id(&self, name: &str) -> Result<usize, VsError> {
        Self::lookup(&self.directions, name)
    }

    pub fn code_id(&self, name: &str) -> Result<usize, VsError> {
        Self::lookup(&self.codes, name)
    }

    pub fn counterexample_id(&self, name: &str) -> Result<usize, VsError> {
        Self::lookup(&self.counterexamples, name)
    }

    pub fn direction_names(&self, s: IdSet) -> Vec<&str> {
        s.iter().map(|d| self.directions[d].as_str()).collect()
    }

    fn check_c(&self, c: usize) -> Result<(), VsError> {
        (c < self.n_codes()).then_some(()).ok_or(VsError::UnknownCode(c))
    }

    fn check_d(&self, d: usize) -> Result<(), VsError> {
        (d < self.n_directions()).then_some(()).ok_or(VsError::UnknownDirection(d))
    }

    fn check_e(&self, e: usize) -> Result<(), VsError> {
        (e < self.n_counterexamples()).then_some(()).ok_or(VsError::UnknownCounterexample(e))
    }

    fn check_codes(&self, s: IdSet, what: &'static str) -> Result<(), VsError> {
        if s.is_empty() {
            return Err(VsError::Empty(what));
        }
        match (s - self.all_codes()).iter().next() {
            Some(c) => Err(VsError::UnknownCode(c)),
            None => Ok(()),
        }
    }

    pub fn set_pass(&mut self, c: usize, d: usize, value: bool) {
        if value {
            self.pass[c].insert(d)
        } else {
            self.pass[c].remove(d)
        }
    }

    pub fn set_cons(&mut self, c: usize, d: usize, e: usize, value: bool) {
        if value {
            self.cons[c][e].insert(d)
        } else {
            self.cons[c][e].remove(d)
        }
    }

    pub fn set_obs(&mut self, c: usize, e: usize, value: bool) {
        if value {
            self.obs[c].insert(e)
        } else {
            self.obs[c].remove(e)
        }
    }

    /// D_c^⋆.
    pub fn succeeding_directions(&self, c: usize) -> Result<IdSet, VsError> {
        self.check_c(c)?;
        Ok(self.pass[c])
    }

    /// D_c(e).
    pub fn consistent_directions(&self, c: usize, e: usize) -> Result<IdSet, VsError> {
        self.check_c(c)?;
        self.check_e(e)?;
        Ok(self.cons[c][e])
    }

    /// E_c^obs.
    pub fn observable(&self, c: usize) -> Result<IdSet, VsError> {
        self.check_c(c)?;
        Ok(self.obs[c])
    }

    /// V_t, the intersection of D_{c_i}(e_i) over the history; D when empty.
    pub fn version_space(&self, history: &History) -> Result<IdSet, VsError> {
        history.validate(self)?;
        Ok(self.fold(history.steps()))
    }

    pub(crate) fn fold(&self, steps: &[Step]) -> IdSet {
        steps.iter().fold(self.all_directions(), |v, s| v & self.cons[s.code][s.counterexample])
    }

    /// D⋆, the directions that succeed for at least one code.
    pub fn global_star(&self) -> IdSet {
        self.pass.iter().fold(IdSet::EMPTY, |acc, &p| acc | p)
    }

    /// R(d), the codes for which `d` succeeds.
    pub fn basin(&self, d: usize) -> Result<IdSet, VsError> {
        self.check_d(d)?;
        Ok((0..self.n_codes()).filter(|&c| self.pass[c].contains(d)).collect())
    }

    /// Directions surviving every observation from every code in `codes`.
    pub fn discriminative_u(&self, codes: IdSet) -> Result<IdSet, VsError> {
        self.check_codes(codes, "B")?;
        Ok(self.u_unchecked(codes))
    }

    fn u_unchecked(&self, codes: IdSet) -> IdSet {
        let mut u = self.all_directions();
        for c in codes.iter() {
            for e in self.obs[c].iter() {
                u = u & self.cons[c][e];
            }
        }
        u
    }

    /// D⋆_stab for the initial codes `c_init`.
    pub fn stable_star(&self, c_init: IdSet) -> Result<IdSet, VsError> {
        self.check_codes(c_init, "C_init")?;
        Ok(self.global_star() & self.u_unchecked(c_init))
    }

    /// Z_∞(B) = C_init × U(B) as (code, direction) pairs.
    pub fn surviving_pairs(&self, c_init: IdSet, b: IdSet) -> Result<Vec<(usize, usize)>, VsError> {
        self.check_codes(c_init, "C_init")?;
        if !b.is_subset(c_init) {
            return Err(VsError::Malformed("B must be a subset of C_init".into()));
        }
        let u = self.discriminative_u(b)?;
        Ok(c_init.iter().flat_map(|c| u.iter().map(move |d| (c, d))).collect())
    }

    /// Whether every observation from a code in C_init ∩ R(d†) keeps d†.
    pub fn check_local_soundness(&self, d_dagger: usize, c_init: IdSet) -> Result<bool, VsError> {
        let basin = self.basin(d_dagger)?;
        Ok((c_init & basin)
            .iter()
            .all(|c| self.obs[c].iter().all(|e| self.cons[c][e].contains(d_dagger))))
    }

    /// Whether every observation from `c_f` keeps every direction in D_{c_f}^⋆.
    pub fn single_code_sound(&self, c_f: usize) -> Result<bool, VsError> {
        self.check_c(c_f)?;
        Ok(self.obs[c_f].iter().all(|e| self.pass[c_f].is_subset(self.cons[c_f][e])))
    }

    /// Checks monotone shrinking, retention of D⋆_stab, and non-emptiness on
    /// every prefix of every history over `c_init`.
    pub fn check_safety(&self, c_init: IdSet, histories: &[History]) -> Result<SafetyReport, VsError> {
        let stab = self.stable_star(c_init)?;
        if stab.is_empty() {
            return Ok(SafetyReport::premise_unmet(stab));
        }
        for h in histories {
            h.validate(self)?;
            if let Some(s) = h.steps().iter().find(|s| !c_init.contains(s.code)) {
                return Err(VsError::InvalidHistory(format!("code {} is not an initial code", s.code)));
            }
        }
        Ok(self.safety_over(stab, histories.iter().map(|h| h.steps())))
    }

    /// The single-initial-code form: histories of counterexamples observed
    /// from `c_f`, retaining D_{c_f}^⋆.
    pub fn check_single_code_safety(&self, c_f: usize, sequences: &[Vec<usize>]) -> Result<SafetyReport, VsError> {
        let star = self.succeeding_directions(c_f)?;
        if star.is_empty() || !self.single_code_sound(c_f)? {
            return Ok(SafetyReport::premise_unmet(star));
        }
        let histories: Vec<History> = sequences
            .iter()
            .map(|seq| History::new(self, seq.iter().map(|&e| (c_f, e))))
            .collect::<Result<_, _>>()?;
        Ok(self.safety_over(star, histories.iter().map(|h| h.steps())))
    }

    pub(crate) fn safety_over<'h>(&self, retained: IdSet, histories: impl Iterator<Item = &'h [Step]>) -> SafetyReport {
        let mut report = SafetyReport {
            premise_met: true,
            retained,
            prefixes_checked: 0,
            violations: Vec::new(),
        };
        for steps in histories {
            let mut v = self.all_directions();
            self.check_prefix(&mut report, v, v, &steps[..0]);
            for t in 0..steps.len() {
                let next = v & self.cons[steps[t].code][steps[t].counterexample];
                self.check_prefix(&mut report, v, next, &steps[..=t]);
                v = next;
            }
        }
        report
    }

    pub(crate) fn check_prefix(&self, report: &mut SafetyReport, before: IdSet, after: IdSet, prefix: &[Step]) {
        report.prefixes_checked += 1;
        let mut push = |clause| {
            report.violations.push(SafetyViolation {
                clause,
                prefix: prefix.to_vec(),
            })
        };
        if !after.is_subset(before) {
            push(SafetyClause::Monotone);
        }
        if !report.retained.is_subset(after) {
            push(SafetyClause::Retention);
        }
        if after.is_empty() {
            push(SafetyClause::NonEmpty);
        }
    }

    /// Checks every pair ∅ ≠ B1 ⊆ B2 ⊆ C_init for shrinking U, retention of
    /// D⋆_stab, non-emptiness of U(B2) and Z_∞(B2) ⊆ Z_∞(B1), and that every
    /// strict shrink has an elimination witness.
    pub fn check_discriminative_power(&self, c_init: IdSet) -> Result<DiscriminationReport, VsError> {
        let stab = self.stable_star(c_init)?;
        let mut report = DiscriminationReport {
            premise_met: !stab.is_empty(),
            pairs_checked: 0,
            strict_pairs: 0,
            violations: Vec::new(),
        };
        if !report.premise_met {
            return Ok(report);
        }
        for b2 in c_init.subsets() {
            let u2 = self.u_unchecked(b2);
            let z2 = self.surviving_pairs(c_init, b2)?;
            for b1 in b2.subsets() {
                report.pairs_checked += 1;
                let u1 = self.u_unchecked(b1);
                let mut fail = |clause: &str| {
                    report.violations.push(DiscriminationViolation {
                        b1,
                        b2,
                        clause: clause.to_string(),
                    })
                };
                if !u2.is_subset(u1) {
                    fail("U(B2) is not a subset of U(B1)");
                }
                if !stab.is_subset(u2) {
                    fail("D*_stab is not a subset of U(B2)");
                }
                if u2.is_empty() || z2.is_empty() {
                    fail("U(B2) or Z(B2) is empty");
                }
                let z1 = self.surviving_pairs(c_init, b1)?;
                if !z2.iter().all(|p| z1.contains(p)) {
                    fail("Z(B2) is not a subset of Z(B1)");
                }
                if u2 != u1 {
                    report.strict_pairs += 1;
                    for d in (u1 - u2).iter() {
                        if self.elimination_witness(c_init, b1, b2, d)?.is_none() {
                            fail("strict shrink without an elimination witness");
                        }
                    }
                }
            }
        }
        Ok(report)
    }

    /// For `d̃ ∈ U(B1) \ U(B2)`, finds `b ∈ B2 \ B1` and `e ∈ E_b^obs` with
    /// `d̃ ∉ D_b(e)` and `D⋆_stab ⊆ D_b(e)`.
    pub fn elimination_witness(&self, c_init: IdSet, b1: IdSet, b2: IdSet, d_tilde: usize) -> Result<Option<EliminationWitness>, VsError> {
        self.check_d(d_tilde)?;
        let stab = self.stable_star(c_init)?;
        for b in (b2 - b1).iter() {
            for e in self.obs[b].iter() {
                let allowed = self.cons[b][e];
                if !allowed.contains(d_tilde) && stab.is_subset(allowed) {
                    return Ok(Some(EliminationWitness {
                        direction: d_tilde,
                        code: b,
                        counterexample: e,
                    }));
                }
            }
        }
        Ok(None)
    }

    /// μ(S) = |S| / |D|.
    pub fn measure(&self, s: IdSet) -> Ratio<i64> {
        Ratio::new(s.len() as i64, self.n_directions() as i64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, VsError> {
        serde_json::from_str(text).map_err(|e| VsError::Malformed(e.to_string()))
    }

    /// The two-direction, two-code instance on which the linear version
    /// space empties at the second step.
    pub fn drifting_pair() -> Self {
        let mut m = Self::with_names(
            vec!["d_a".into(), "d_b".into()],
            vec!["c0".into(), "c1".into()],
            vec!["e".into()],
        )
        .expect("valid names");
        m.set_cons(0, 0, 0, true);
        m.set_cons(1, 1, 0, true);
        m.set_obs(0, 0, true);
        m.set_obs(1, 0, true);
        m
    }
}
