//! Depth reached by SFS selection on small trees, against the fraction of
//! UCT-optimal children that let selection go deeper.

use refine_search::strategies::{simulate_selection_depth, TreeSpec, TreeSpecNode};

fn leaf(quality: f64, visits: u32) -> TreeSpecNode {
    TreeSpecNode {
        quality,
        visits,
        unused_directions: 1,
        children: vec![],
    }
}

/// Root with five tied children; the first `qualifying` of them are
/// exhausted and have a better child.
fn tree(qualifying: usize) -> TreeSpec {
    let mut nodes = vec![TreeSpecNode {
        quality: 0.0,
        visits: 11,
        unused_directions: 0,
        children: (1..=5).collect(),
    }];
    for i in 0..5 {
        let exhausted = i < qualifying;
        nodes.push(TreeSpecNode {
            quality: 0.4,
            visits: 2,
            unused_directions: if exhausted { 0 } else { 1 },
            children: if exhausted { vec![6 + i] } else { vec![] },
        });
    }
    for _ in 0..qualifying {
        nodes.push(leaf(0.4 + 0.1, 1));
    }
    TreeSpec { nodes, uct_c: 1.0 }
}

pub fn run_example() -> anyhow::Result<()> {
    for q in [0, 1, 3] {
        let r = simulate_selection_depth(&tree(q), 20_000, 11)?;
        println!(
            "{q} of 5 qualifying: epsilon = {:.2}, Pr(depth >= 2) = {:.4}",
            r.epsilon,
            r.prob_at_least(2)
        );
        if q == 0 {
            anyhow::ensure!(r.prob_at_least(2) == 0.0);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
