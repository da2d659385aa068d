use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IdSet, VersionSpaceModel, VsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub directions: usize,
    pub codes: usize,
    pub counterexamples: usize,
}

/// Independent Bernoulli rates for each table entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub pass: f64,
    pub cons: f64,
    pub obs: f64,
}

impl Default for Density {
    fn default() -> Self {
        Self {
            pass: 0.4,
            cons: 0.7,
            obs: 0.5,
        }
    }
}

impl Density {
    pub fn uniform(p: f64) -> Self {
        Self { pass: p, cons: p, obs: p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFilter {
    Any,
    /// Local soundness of `d_dagger` over `c_init`, with `d_dagger ∈ D⋆`.
    LocallySound { d_dagger: usize, c_init: IdSet },
    StableStarNonEmpty { c_init: IdSet },
    /// D_{c_f}^⋆ non-empty and kept by every observation from `c_f`.
    SingleCodeSound { c_f: usize },
}

impl ModelFilter {
    fn accepts(&self, m: &VersionSpaceModel) -> bool {
        match *self {
            ModelFilter::Any => true,
            ModelFilter::LocallySound { d_dagger, c_init } => {
                m.global_star().contains(d_dagger) && m.check_local_soundness(d_dagger, c_init).unwrap_or(false)
            }
            ModelFilter::StableStarNonEmpty { c_init } => m.stable_star(c_init).is_ok_and(|s| !s.is_empty()),
            ModelFilter::SingleCodeSound { c_f } => {
                m.succeeding_directions(c_f).is_ok_and(|s| !s.is_empty()) && m.single_code_sound(c_f).unwrap_or(false)
            }
        }
    }
}

pub const MAX_ATTEMPTS: u32 = 10_000;

/// Draws tables from `seed` until one passes `filter`.
pub fn random_model(sizes: Sizes, density: Density, seed: u64, filter: ModelFilter) -> Result<VersionSpaceModel, VsError> {
    for p in [density.pass, density.cons, density.obs] {
        if !(0.0..=1.0).contains(&p) {
            return Err(VsError::Malformed(format!("density {p} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = VersionSpaceModel::new(sizes.directions, sizes.codes, sizes.counterexamples)?;
    for _ in 0..MAX_ATTEMPTS {
        for c in 0..sizes.codes {
            for d in 0..sizes.directions {
                m.set_pass(c, d, rng.gen_bool(density.pass));
                for e in 0..sizes.counterexamples {
                    m.set_cons(c, d, e, rng.gen_bool(density.cons));
                }
            }
            for e in 0..sizes.counterexamples {
                m.set_obs(c, e, rng.gen_bool(density.obs));
            }
        }
        if filter.accepts(&m) {
            return Ok(m);
        }
    }
    Err(VsError::FilterUnsatisfiable(MAX_ATTEMPTS))
}
