//! Exhaustive checks of the safety, discrimination and window results on
//! seeded random models.

use refine_search::vspace::{run_campaign, CampaignConfig};

pub fn run_example() -> anyhow::Result<()> {
    let config = CampaignConfig {
        seeds: 40,
        base_seed: 2024,
        ..CampaignConfig::default()
    };
    let report = run_campaign(&config);
    println!("{:<22} {:>7} {:>10} {:>10}", "result", "models", "checks", "violations");
    for (name, tally) in report.rows() {
        println!("{name:<22} {:>7} {:>10} {:>10}", tally.models, tally.checks, tally.violations);
    }
    println!("{} ms", report.elapsed_ms);
    anyhow::ensure!(report.holds(), "campaign found a violation: {:?}", report);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
