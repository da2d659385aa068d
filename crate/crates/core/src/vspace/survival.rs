use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IdSet, VersionSpaceModel, VsError};

/// How the m initial-code draws depend on each other. Every coupling keeps
/// the same per-draw marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Independent,
    /// All draws share one uniform, so they always coincide.
    Comonotone,
    /// Draws use one uniform shifted by the outside-basin mass, making their
    /// failures disjoint.
    Shifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub model: VersionSpaceModel,
    /// Unnormalized probability of drawing each code.
    pub weights: Vec<f64>,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub trials: u64,
    pub survivals: u64,
    pub empirical: f64,
    /// 1 − mδ.
    pub bound_union: f64,
    /// (1 − δ)^m.
    pub bound_indep: f64,
    /// Exact probability that one draw lands in R(d†).
    pub basin_mass: f64,
    /// Observed frequency of R(d†) at each draw position.
    pub position_marginals: Vec<f64>,
}

impl SurvivalEstimate {
    pub fn standard_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Monte Carlo estimate of the probability that `d_dagger` survives every
/// observation from all `m` drawn codes.
pub fn survival_probability(
    spec: &GeneratorSpec,
    d_dagger: usize,
    m: usize,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<SurvivalEstimate, VsError> {
    let model = &spec.model;
    if m == 0 {
        return Err(VsError::Empty("m"));
    }
    if trials == 0 {
        return Err(VsError::Empty("trials"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(VsError::Malformed(format!("delta {delta} outside [0, 1]")));
    }
    if spec.weights.len() != model.n_codes() || spec.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(VsError::Malformed("one finite non-negative weight per code required".into()));
    }
    let total: f64 = spec.weights.iter().sum();
    if total <= 0.0 {
        return Err(VsError::Malformed("weights sum to zero".into()));
    }
    let basin = model.basin(d_dagger)?;
    let support: IdSet = (0..model.n_codes()).filter(|&c| spec.weights[c] > 0.0).collect();
    if !model.check_local_soundness(d_dagger, support)? {
        return Err(VsError::NotLocallySound);
    }
    let basin_mass = basin.iter().map(|c| spec.weights[c]).sum::<f64>() / total;
    if basin_mass < 1.0 - delta - 1e-12 {
        return Err(VsError::MarginalViolated {
            actual: basin_mass,
            required: 1.0 - delta,
        });
    }

    // inverse CDF with codes outside the basin first, so [0, 1 − basin_mass)
    // is exactly the failure region of a single draw
    let order: Vec<usize> = (0..model.n_codes())
        .filter(|c| !basin.contains(*c))
        .chain(basin.iter())
        .filter(|&c| spec.weights[c] > 0.0)
        .collect();
    let mut cumulative = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &c in &order {
        acc += spec.weights[c] / total;
        cumulative.push(acc);
    }
    let draw = |u: f64| -> usize {
        let i = cumulative.partition_point(|&x| x <= u);
        order[i.min(order.len() - 1)]
    };
    let survives: Vec<bool> = (0..model.n_codes())
        .map(|c| model.observable(c).unwrap().iter().all(|e| model.consistent_directions(c, e).unwrap().contains(d_dagger)))
        .collect();

    let outside = 1.0 - basin_mass;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut survivals = 0u64;
    let mut in_basin = vec![0u64; m];
    for _ in 0..trials {
        let shared: f64 = rng.gen();
        let mut all = true;
        for (j, hits) in in_basin.iter_mut().enumerate() {
            let u = match spec.coupling {
                Coupling::Independent => rng.gen(),
                Coupling::Comonotone => shared,
                Coupling::Shifted => (shared + j as f64 * outside).fract(),
            };
            let c = draw(u);
            *hits += basin.contains(c) as u64;
            all &= survives[c];
        }
        survivals += all as u64;
    }

    let position_marginals: Vec<f64> = in_basin.iter().map(|&h| h as f64 / trials as f64).collect();
    // a coupling bug would show up as a position drifting off the marginal
    let se = (basin_mass * (1.0 - basin_mass) / trials as f64).sqrt();
    if let Some(&bad) = position_marginals.iter().find(|&&p| p < basin_mass - 6.0 * se - 1e-12) {
        return Err(VsError::MarginalViolated {
            actual: bad,
            required: basin_mass,
        });
    }
    Ok(SurvivalEstimate {
        trials,
        survivals,
        empirical: survivals as f64 / trials as f64,
        bound_union: 1.0 - m as f64 * delta,
        bound_indep: (1.0 - delta).powi(m as i32),
        basin_mass,
        position_marginals,
    })
}

/// Two codes: `c_in` inside R(d†) with weight 1 − δ, `c_out` outside it
/// with weight δ, where one observation from `c_out` rules d† out.
pub fn two_code_generator(delta: f64, coupling: Coupling) -> GeneratorSpec {
    let mut model = VersionSpaceModel::with_names(
        vec!["d_dagger".into(), "d_other".into()],
        vec!["c_in".into(), "c_out".into()],
        vec!["e".into()],
    )
    .expect("valid names");
    model.set_pass(0, 0, true);
    model.set_obs(0, 0, true);
    model.set_obs(1, 0, true);
    model.set_cons(0, 0, 0, true);
    model.set_cons(1, 1, 0, true);
    GeneratorSpec {
        model,
        weights: vec![1.0 - delta, delta],
        coupling,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_delta_always_survives() {
        let r = survival_probability(&two_code_generator(0.0, Coupling::Independent), 0, 4, 0.0, 1000, 1).unwrap();
        assert_eq!(r.empirical, 1.0);
    }

    #[test]
    fn single_draw_bounds_coincide() {
        let r = survival_probability(&two_code_generator(0.2, Coupling::Independent), 0, 1, 0.2, 10, 1).unwrap();
        assert!((r.bound_union - 0.8).abs() < 1e-15);
        assert!((r.bound_indep - 0.8).abs() < 1e-15);
    }

    #[test]
    fn couplings_hit_their_extremes() {
        let trials = 20_000;
        let shifted = survival_probability(&two_code_generator(0.1, Coupling::Shifted), 0, 3, 0.1, trials, 2).unwrap();
        // failures are disjoint, so the union bound is attained
        assert!((shifted.empirical - 0.7).abs() < 4.0 * shifted.standard_error(0.7));
        let co = survival_probability(&two_code_generator(0.1, Coupling::Comonotone), 0, 3, 0.1, trials, 2).unwrap();
        assert!((co.empirical - 0.9).abs() < 4.0 * co.standard_error(0.9));
        for p in co.position_marginals.iter().chain(&shifted.position_marginals) {
            assert!((p - 0.9).abs() < 0.02);
        }
    }

    #[test]
    fn marginal_and_soundness_are_checked() {
        let spec = two_code_generator(0.3, Coupling::Independent);
        assert!(matches!(
            survival_probability(&spec, 0, 2, 0.1, 10, 0),
            Err(VsError::MarginalViolated { .. })
        ));
        let mut spec = two_code_generator(0.1, Coupling::Independent);
        spec.model.set_cons(0, 0, 0, false);
        assert_eq!(survival_probability(&spec, 0, 2, 0.1, 10, 0), Err(VsError::NotLocallySound));
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = two_code_generator(0.1, Coupling::Independent);
        let a = survival_probability(&spec, 0, 3, 0.1, 5000, 9).unwrap();
        let b = survival_probability(&spec, 0, 3, 0.1, 5000, 9).unwrap();
        assert_eq!(a, b);
    }
}
