//! Monte Carlo survival of a valid direction across m initial codes under
//! three couplings of the draws.

use refine_search::vspace::{survival_probability, two_code_generator, Coupling};

pub fn run_example() -> anyhow::Result<()> {
    let (m, delta, trials) = (3, 0.1, 50_000);
    for coupling in [Coupling::Independent, Coupling::Comonotone, Coupling::Shifted] {
        let spec = two_code_generator(delta, coupling);
        let est = survival_probability(&spec, 0, m, delta, trials, 7)?;
        println!(
            "{coupling:?}: empirical {:.4} (union bound {:.3}, independent bound {:.3})",
            est.empirical, est.bound_union, est.bound_indep
        );
        let slack = 4.0 * est.standard_error(est.bound_union);
        anyhow::ensure!(est.empirical >= est.bound_union - slack, "union bound violated");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
