use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{History, IdSet, VersionSpaceModel, VsError};

/// Ṽ_t: the intersection of D_{c_{i-1}}(e_i) over a drifting history whose
/// i-th step pairs the code being refined with the counterexample observed.
pub fn linear_version_space(model: &VersionSpaceModel, history: &History) -> Result<IdSet, VsError> {
    model.version_space(history)
}

/// Ṽ_t^(w): the intersection over the most recent `w` steps.
pub fn windowed_version_space(model: &VersionSpaceModel, history: &History, w: usize) -> Result<IdSet, VsError> {
    history.validate(model)?;
    let t = history.len();
    if w > t {
        return Err(VsError::WindowTooLarge { w, t });
    }
    Ok(model.fold(&history.steps()[t - w..]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftMeasures {
    /// Smallest measure of a single-step constraint set.
    pub alpha: Ratio<i64>,
    /// Largest measure of D_{c_{t-2}}(e_{t-1}) \ D_{c_{t-1}}(e_t).
    pub delta_drift: Ratio<i64>,
    pub epsilon: Ratio<i64>,
    /// 1 + (α − ε)/δ; `None` stands for infinity when δ = 0.
    pub w_max: Option<Ratio<i64>>,
}

impl DriftMeasures {
    pub fn new(alpha: Ratio<i64>, delta_drift: Ratio<i64>, epsilon: Ratio<i64>) -> Self {
        let w_max = (delta_drift != Ratio::from_integer(0)).then(|| Ratio::from_integer(1) + (alpha - epsilon) / delta_drift);
        Self {
            alpha,
            delta_drift,
            epsilon,
            w_max,
        }
    }

    /// Measures of one non-empty history.
    pub fn of_history(model: &VersionSpaceModel, history: &History, epsilon: Ratio<i64>) -> Result<Self, VsError> {
        history.validate(model)?;
        let (a, d) = counts(model, &constraint_sets(model, history)).ok_or(VsError::Empty("history"))?;
        let n = model.n_directions() as i64;
        Ok(Self::new(Ratio::new(a as i64, n), Ratio::new(d as i64, n), epsilon))
    }

    /// Lower bound α − (w − 1)δ on μ(Ṽ_t^(w)).
    pub fn bound(&self, w: usize) -> Ratio<i64> {
        self.alpha - Ratio::from_integer(w as i64 - 1) * self.delta_drift
    }

    /// Whether the bound guarantees width `w` stays at or above ε; never
    /// when α < ε.
    pub fn window_allowed(&self, w: usize) -> bool {
        self.alpha >= self.epsilon
            && self.w_max.is_none_or(|m| Ratio::from_integer(w as i64) <= m)
    }
}

fn constraint_sets(model: &VersionSpaceModel, history: &History) -> Vec<IdSet> {
    history
        .steps()
        .iter()
        .map(|s| model.consistent_directions(s.code, s.counterexample).unwrap())
        .collect()
}

/// (min |A_t|, max |A_{t-1} \ A_t|) as direction counts.
fn counts(model: &VersionSpaceModel, sets: &[IdSet]) -> Option<(usize, usize)> {
    let alpha = sets.iter().map(|s| s.len()).min()?;
    let delta = sets.windows(2).map(|p| (p[0] - p[1]).len()).max().unwrap_or(0);
    debug_assert!(alpha <= model.n_directions());
    Some((alpha, delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftViolation {
    pub history: usize,
    pub t: usize,
    pub w: usize,
    pub measure: Ratio<i64>,
    pub bound: Ratio<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// α and δ taken over all histories, with the resulting w_max.
    pub measures: DriftMeasures,
    pub windows_checked: u64,
    /// Windows breaking μ(Ṽ_t^(w)) ≥ α − (w−1)δ for their own history's α, δ.
    pub inequality_violations: Vec<DriftViolation>,
    /// Windows with w ≤ w_max whose measure falls below ε.
    pub falsifications: Vec<DriftViolation>,
    /// A window beyond w_max whose measure falls below ε, if any.
    pub tightness_witness: Option<DriftViolation>,
}

impl DriftReport {
    pub fn holds(&self) -> bool {
        self.inequality_violations.is_empty() && self.falsifications.is_empty()
    }
}

/// Checks the windowed lower bound for every `t` and `w ≤ t` of every
/// history, and compares windows with ε around w_max.
pub fn drift_bound_check(model: &VersionSpaceModel, histories: &[History], epsilon: Ratio<i64>) -> Result<DriftReport, VsError> {
    let non_empty: Vec<(usize, &History)> = histories.iter().enumerate().filter(|(_, h)| !h.is_empty()).collect();
    if non_empty.is_empty() {
        return Err(VsError::Empty("histories"));
    }
    let n = model.n_directions() as i64;
    let mut per_history = Vec::with_capacity(non_empty.len());
    let (mut alpha, mut delta) = (usize::MAX, 0);
    for &(i, h) in &non_empty {
        h.validate(model)?;
        let sets = constraint_sets(model, h);
        let (a, d) = counts(model, &sets).unwrap();
        alpha = alpha.min(a);
        delta = delta.max(d);
        per_history.push((i, sets, DriftMeasures::new(Ratio::new(a as i64, n), Ratio::new(d as i64, n), epsilon)));
    }
    let measures = DriftMeasures::new(Ratio::new(alpha as i64, n), Ratio::new(delta as i64, n), epsilon);
    let mut report = DriftReport {
        measures,
        windows_checked: 0,
        inequality_violations: Vec::new(),
        falsifications: Vec::new(),
        tightness_witness: None,
    };
    for (i, sets, own) in &per_history {
        for t in 1..=sets.len() {
            let mut window = model.all_directions();
            for w in 1..=t {
                window = window & sets[t - w];
                report.windows_checked += 1;
                let measure = model.measure(window);
                let record = |bound| DriftViolation {
                    history: *i,
                    t,
                    w,
                    measure,
                    bound,
                };
                if measure < own.bound(w) {
                    report.inequality_violations.push(record(own.bound(w)));
                }
                if measure < epsilon {
                    if report.measures.window_allowed(w) {
                        report.falsifications.push(record(epsilon));
                    } else if report.tightness_witness.is_none() {
                        report.tightness_witness = Some(record(epsilon));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Integer form of the windowed bound for the campaign: checks every window
/// ending at the last step of `sets` against the prefix's own α and δ and
/// returns (windows checked, violations).
pub(crate) fn check_windows_ending_at(all: IdSet, sets: &[IdSet], alpha: usize, delta: usize) -> (u64, u64) {
    let t = sets.len();
    let mut window = all;
    let mut bad = 0;
    for w in 1..=t {
        window = window & sets[t - w];
        if (window.len() as i64) < alpha as i64 - (w as i64 - 1) * delta as i64 {
            bad += 1;
        }
    }
    (t as u64, bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn w_max_substitution() {
        let m = DriftMeasures::new(r(1, 2), r(1, 5), r(1, 10));
        assert_eq!(m.w_max, Some(r(3, 1)));
        assert!(m.window_allowed(3));
        assert!(!m.window_allowed(4));
        assert_eq!(m.bound(3), r(1, 10));
    }

    #[test]
    fn zero_drift_has_no_window_limit() {
        let m = DriftMeasures::new(r(1, 2), r(0, 1), r(1, 10));
        assert_eq!(m.w_max, None);
        assert!(m.window_allowed(1_000_000));
        let below = DriftMeasures::new(r(0, 1), r(0, 1), r(1, 10));
        assert!(!below.window_allowed(1));
    }

    #[test]
    fn fixed_code_has_zero_drift() {
        let mut model = VersionSpaceModel::new(4, 1, 2).unwrap();
        for e in 0..2 {
            model.set_obs(0, e, true);
            model.set_cons(0, 1, e, true);
            model.set_cons(0, 2, e, true);
        }
        let h = History::new(&model, [(0, 0), (0, 1), (0, 0), (0, 1)]).unwrap();
        let m = DriftMeasures::of_history(&model, &h, r(1, 4)).unwrap();
        assert_eq!(m.delta_drift, r(0, 1));
        assert_eq!(m.w_max, None);
        let rep = drift_bound_check(&model, &[h], r(1, 4)).unwrap();
        assert!(rep.holds());
        assert_eq!(rep.windows_checked, 10);
    }

    #[test]
    fn drifting_pair_window() {
        let model = VersionSpaceModel::drifting_pair();
        let h = History::new(&model, [(0, 0), (1, 0)]).unwrap();
        assert!(linear_version_space(&model, &h).unwrap().is_empty());
        assert_eq!(windowed_version_space(&model, &h, 1).unwrap(), IdSet::single(1));
        assert_eq!(windowed_version_space(&model, &h, 3), Err(VsError::WindowTooLarge { w: 3, t: 2 }));
        let rep = drift_bound_check(&model, &[h], r(1, 2)).unwrap();
        // α = 1/2, δ = 1/2, ε = 1/2: w_max = 1, and the width-2 window is empty
        assert_eq!(rep.measures.w_max, Some(r(1, 1)));
        assert!(rep.holds());
        let witness = rep.tightness_witness.unwrap();
        assert_eq!((witness.t, witness.w), (2, 2));
    }

    #[test]
    fn integer_check_matches() {
        let sets = [IdSet(0b0111), IdSet(0b1110), IdSet(0b1100)];
        let (n, bad) = check_windows_ending_at(IdSet::full(4), &sets, 2, 1);
        assert_eq!((n, bad), (3, 0));
    }
}
