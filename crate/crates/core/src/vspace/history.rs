use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IdSet, VersionSpaceModel, VsError};

/// One refinement step: the code refined and the counterexample observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub code: usize,
    pub counterexample: usize,
}

/// H_t = ((c_1, e_1), ..., (c_t, e_t)) with each e_i observable from c_i.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct History {
    steps: Vec<Step>,
}

impl History {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(model: &VersionSpaceModel, steps: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, VsError> {
        let h = Self {
            steps: steps
                .into_iter()
                .map(|(code, counterexample)| Step { code, counterexample })
                .collect(),
        };
        h.validate(model)?;
        Ok(h)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self, model: &VersionSpaceModel) -> Result<(), VsError> {
        for (i, s) in self.steps.iter().enumerate() {
            let obs = model.observable(s.code)?;
            if s.counterexample >= model.n_counterexamples() {
                return Err(VsError::UnknownCounterexample(s.counterexample));
            }
            if !obs.contains(s.counterexample) {
                return Err(VsError::InvalidHistory(format!(
                    "step {}: {} is not observable from {}",
                    i + 1,
                    model.counterexample_name(s.counterexample),
                    model.code_name(s.code)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryEnumeration {
    /// Every sequence up to the maximum length.
    Exhaustive,
    /// Seeded uniform samples of maximum-length sequences; every prefix of
    /// each sample is visited.
    Sampled { count: u32, seed: u64 },
}

impl HistoryEnumeration {
    pub const SAMPLES: u32 = 10_000;

    /// Exhaustive for at most four counterexamples, sampled otherwise.
    pub fn for_model(model: &VersionSpaceModel, seed: u64) -> Self {
        if model.n_counterexamples() <= 4 {
            Self::Exhaustive
        } else {
            Self::Sampled {
                count: Self::SAMPLES,
                seed,
            }
        }
    }
}

/// Feasible steps `(c, e)` with `c ∈ codes` and `e ∈ E_c^obs`.
pub fn feasible_steps(model: &VersionSpaceModel, codes: IdSet) -> Vec<Step> {
    codes
        .iter()
        .filter(|&c| c < model.n_codes())
        .flat_map(|c| {
            model
                .observable(c)
                .unwrap()
                .iter()
                .map(move |e| Step { code: c, counterexample: e })
        })
        .collect()
}

/// Visits every prefix (including the empty one) of the histories over
/// `steps` up to `max_len`, threading a state through `advance`. The visitor
/// receives the prefix, the parent state and the new state.
pub fn for_each_history<S: Copy>(
    steps: &[Step],
    max_len: usize,
    mode: HistoryEnumeration,
    init: S,
    mut advance: impl FnMut(S, Step) -> S,
    mut visit: impl FnMut(&[Step], S, S),
) {
    let mut prefix = Vec::with_capacity(max_len);
    visit(&prefix, init, init);
    if steps.is_empty() || max_len == 0 {
        return;
    }
    match mode {
        HistoryEnumeration::Exhaustive => dfs(steps, max_len, &mut prefix, init, &mut advance, &mut visit),
        HistoryEnumeration::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..count {
                prefix.clear();
                let mut state = init;
                for _ in 0..max_len {
                    let s = steps[rng.gen_range(0..steps.len())];
                    let next = advance(state, s);
                    prefix.push(s);
                    visit(&prefix, state, next);
                    state = next;
                }
            }
        }
    }
}

fn dfs<S: Copy>(
    steps: &[Step],
    max_len: usize,
    prefix: &mut Vec<Step>,
    state: S,
    advance: &mut impl FnMut(S, Step) -> S,
    visit: &mut impl FnMut(&[Step], S, S),
) {
    for &s in steps {
        let next = advance(state, s);
        prefix.push(s);
        visit(prefix, state, next);
        if prefix.len() < max_len {
            dfs(steps, max_len, prefix, next, advance, visit);
        }
        prefix.pop();
    }
}

/// Maximum-length histories over the initial codes (all of them, or the
/// sampled ones).
pub fn enumerate_histories(model: &VersionSpaceModel, codes: IdSet, max_len: usize, mode: HistoryEnumeration) -> Vec<History> {
    let steps = feasible_steps(model, codes);
    let mut out = Vec::new();
    let target = if steps.is_empty() { 0 } else { max_len };
    for_each_history(&steps, max_len, mode, (), |_, _| (), |p, _, _| {
        if p.len() == target {
            out.push(History { steps: p.to_vec() });
        }
    });
    out
}
