//! The two-code instance on which intersecting constraints from a drifting
//! code empties the version space, and the window that avoids it.

use num_rational::Ratio;
use refine_search::vspace::{drift_bound_check, linear_version_space, windowed_version_space, History, VersionSpaceModel};

pub fn run_example() -> anyhow::Result<()> {
    let model = VersionSpaceModel::drifting_pair();
    let history = History::new(&model, [(0, 0), (1, 0)])?;
    for (c, e) in [(0, 0), (1, 0)] {
        let set = model.consistent_directions(c, e)?;
        println!("D_{}({}) = {:?}", model.code_name(c), model.counterexample_name(e), model.direction_names(set));
        anyhow::ensure!(!set.is_empty());
    }
    let full = linear_version_space(&model, &history)?;
    println!("V_2 = {:?}", model.direction_names(full));
    anyhow::ensure!(full.is_empty(), "version space should be empty at step 2");

    let window = windowed_version_space(&model, &history, 1)?;
    println!("V_2 with window 1 = {:?}", model.direction_names(window));

    let report = drift_bound_check(&model, &[history], Ratio::new(1, 2))?;
    println!(
        "alpha = {}, drift = {}, w_max = {}, windows checked = {}",
        report.measures.alpha,
        report.measures.delta_drift,
        report.measures.w_max.map_or("unbounded".to_string(), |w| w.to_string()),
        report.windows_checked
    );
    anyhow::ensure!(report.holds());
    if let Some(w) = report.tightness_witness {
        println!("width {} at t = {} drops below epsilon: measure {}", w.w, w.t, w.measure);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
