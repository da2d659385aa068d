use refine_search::gateway::{Gateway, MockScript, Role};
use refine_search::sandbox::MarkerExecutor;
use refine_search::strategies::{run_strategy, SearchEnv, StrategyConfig, StrategyRun};
use refine_search::{max_depth, StrategyKind, Task, TestCase};

fn base_script() -> MockScript {
    MockScript::new()
        .with("*/gen_tests/*", "assert f(1) == 1\nassert f(2) == 2")
        .with("*/init_code/*", "```python\ndef f(x):\n    return 0\n```")
        .with("*/gen_directions/*", "1. handle the base case\n2. return x\n3. check types")
        .with("*/refine_code/*", "```python\ndef f(x):\n    return -1\n```")
        .with("*/update_shared_info/*", "Direction helped a little.")
        .with("*/scout_insight/*", "Insight: base cases matter.")
}

fn task() -> Task {
    Task::new("t", "Write f.", vec![TestCase::assertion("h1", "assert f(3) == 3")])
}

fn run(script: MockScript, config: &StrategyConfig) -> StrategyRun {
    let gateway = Gateway::mock(script);
    let env = SearchEnv {
        gateway: &gateway,
        executor: &MarkerExecutor,
        timeout_ms: 1000,
    };
    let r = run_strategy(&env, &task(), config).unwrap();
    r.trace.validate().unwrap();
    r
}

const PASS: &str = "def f(x):\n    return x\n# passes: *";

fn depths(r: &StrategyRun) -> Vec<u32> {
    r.trace.nodes.iter().map(|n| n.depth).collect()
}

fn parents(r: &StrategyRun) -> Vec<Option<u32>> {
    r.trace.nodes.iter().map(|n| n.parent).collect()
}

#[test]
fn bon_full_budget() {
    let r = run(base_script(), &StrategyConfig::bon(16));
    assert_eq!(depths(&r), vec![1; 16]);
    assert!(!r.trace.terminated_early);
    assert_eq!(r.code_generations(), 16);
    assert_eq!(r.calls[&Role::GenTests], 1);
    assert_eq!(r.validation_tests.len(), 2);
}

#[test]
fn bon_budget_one() {
    assert_eq!(run(base_script(), &StrategyConfig::bon(1)).trace.nodes.len(), 1);
}

#[test]
fn bon_early_stop_at_fourth() {
    let r = run(base_script().with("t/init_code/4", PASS), &StrategyConfig::bon(16));
    assert_eq!(r.trace.nodes.len(), 4);
    assert!(r.trace.terminated_early);
    assert!(r.trace.nodes[3].passed_all_validation);

    let mut cfg = StrategyConfig::bon(16);
    cfg.early_stop = false;
    let r = run(base_script().with("t/init_code/4", PASS), &cfg);
    assert_eq!(r.trace.nodes.len(), 16);
    assert!(!r.trace.terminated_early);
}

#[test]
fn linear_chain() {
    let r = run(base_script(), &StrategyConfig::linear(16));
    assert_eq!(depths(&r), (1..=16).collect::<Vec<_>>());
    assert_eq!(max_depth(&r.trace).unwrap(), 16);
    assert_eq!(r.code_generations(), 16);
    for (i, n) in r.trace.nodes.iter().enumerate().skip(1) {
        assert_eq!(n.parent, Some(i as u32));
        let d = n.direction_used.as_ref().unwrap();
        assert_eq!(d.text, "handle the base case");
        assert!(d.used);
    }
    assert_eq!(run(base_script(), &StrategyConfig::linear(1)).trace.nodes.len(), 1);
}

#[test]
fn linear_fixed_at_step_three() {
    let r = run(base_script().with("t/refine_code/2", PASS), &StrategyConfig::linear(16));
    assert_eq!(r.trace.nodes.len(), 3);
    assert!(r.trace.terminated_early);
}

#[test]
fn tree_expands_breadth_first_when_all_scores_are_zero() {
    let r = run(base_script(), &StrategyConfig::tree(10));
    // hand-traced UCT with width 3: root fills, then children in turn by
    // lowest visit count, ties to the lowest id
    let expected = [None, Some(1), Some(1), Some(1), Some(2), Some(3), Some(4), Some(2), Some(3), Some(4)];
    assert_eq!(parents(&r), expected);
    assert_eq!(run(base_script(), &StrategyConfig::tree(1)).trace.nodes.len(), 1);
}

#[test]
fn tree_follows_the_better_branch() {
    // the second refinement scores 1/2, so UCT favours its subtree
    let half = "def f(x):\n    return x\n# passes: val-1";
    let r = run(base_script().with("t/refine_code/2", half), &StrategyConfig::tree(6));
    assert_eq!(parents(&r), [None, Some(1), Some(1), Some(1), Some(3), Some(3)]);
}

#[test]
fn sfs_forest_shape() {
    let r = run(base_script(), &StrategyConfig::sfs(16));
    let roots = r.trace.nodes.iter().filter(|n| n.depth == 1).count();
    assert_eq!(roots, 5);
    assert_eq!(r.trace.nodes.len(), 16);
    assert_eq!(r.code_generations(), 16);
    // one insight per refinement step
    assert_eq!(r.shared_info.len(), 11);
    assert_eq!(r.calls[&Role::ScoutInsight], 11);
    assert!(r.trace.nodes[5..].iter().all(|n| n.direction_used.as_ref().unwrap().feedback.is_some()));
}

#[test]
fn sfs_child_passes_at_node_six() {
    let r = run(base_script().with("t/refine_code/1", PASS), &StrategyConfig::sfs(16));
    assert_eq!(r.trace.nodes.len(), 6);
    assert!(r.trace.terminated_early);
    assert_eq!(r.trace.nodes[5].depth, 2);
}

#[test]
fn sfs_descends_into_improving_branch() {
    // the first refinement improves on the root; once the root's three
    // directions are used up selection moves into that child, and keeps
    // regenerating there because none of its children beat it
    let half = "def f(x):\n    return x\n# passes: val-1";
    let mut cfg = StrategyConfig::sfs(8);
    cfg.n_init = 1;
    let r = run(base_script().with("t/refine_code/1", half), &cfg);
    assert_eq!(parents(&r), [None, Some(1), Some(1), Some(1), Some(2), Some(2), Some(2), Some(2)]);
    assert_eq!(r.calls[&Role::GenDirections], 3);
    assert_eq!(max_depth(&r.trace).unwrap(), 3);
}

#[test]
fn sfs_single_root_is_no_foresting() {
    let mut a = StrategyConfig::sfs(16);
    a.n_init = 1;
    let b = StrategyConfig::no_foresting(16);
    let (ra, rb) = (run(base_script(), &a), run(base_script(), &b));
    assert_eq!(ra.trace.nodes, rb.trace.nodes);
    assert_eq!(rb.trace.label, "sfs-no-foresting");
}

#[test]
fn sfs_is_deterministic_under_seed() {
    let mut cfg = StrategyConfig::sfs(16).with_seed(7);
    cfg.randomize_ties = true;
    cfg.prompt_suffixes = vec!["a".into(), "b".into()];
    let script = base_script().with("*/gen_directions/*", "1. a\n2. b\n3. c");
    assert_eq!(run(script.clone(), &cfg).trace, run(script, &cfg).trace);
}

#[test]
fn irtd_structure() {
    let r = run(base_script(), &StrategyConfig::irtd(16, 5));
    assert_eq!(r.trace.nodes.len(), 16);
    assert_eq!(r.trace.nodes.iter().filter(|n| n.depth == 1).count(), 5);
    assert_eq!(max_depth(&r.trace).unwrap(), 2);
    // round robin: three directions per initial code in index order
    let p: Vec<u32> = r.trace.nodes[5..].iter().map(|n| n.parent.unwrap()).collect();
    assert_eq!(p, [1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4]);
    // the terminating refinement is not followed by an update
    assert_eq!(r.shared_info.len(), 10);
    assert_eq!(r.calls[&Role::GenDirections], 4);

    let r = run(base_script(), &StrategyConfig::irtd(16, 1));
    assert_eq!(r.trace.nodes.iter().filter(|n| n.depth == 2).count(), 15);
    assert!(r.trace.nodes[1..].iter().all(|n| n.parent == Some(1)));
    assert_eq!(r.calls[&Role::GenDirections], 5);
}

#[test]
fn irtd_initial_code_two_of_three_passes() {
    let r = run(base_script().with("t/init_code/2", PASS), &StrategyConfig::irtd(16, 3));
    assert_eq!(r.trace.nodes.len(), 2);
    assert!(r.trace.terminated_early);
    assert!(r.shared_info.is_empty());
}

#[test]
fn irtd_directions_see_shared_information() {
    let gateway = Gateway::mock(base_script());
    let env = SearchEnv {
        gateway: &gateway,
        executor: &MarkerExecutor,
        timeout_ms: 1000,
    };
    let r = run_strategy(&env, &task(), &StrategyConfig::irtd(8, 1)).unwrap();
    let entries = r.shared_info.entries();
    assert_eq!(entries.len(), 6);
    assert_eq!(entries[0].direction_text, "handle the base case");
    assert_eq!(entries[0].outcome_summary, "Direction helped a little.");
    assert!(r.shared_info.rendered().contains("Direction helped a little."));
}

#[test]
fn short_direction_lists_are_regenerated_then_padded() {
    let script = base_script()
        .with("t/gen_directions/1", "1. only one")
        .with("t/gen_directions/2", "1. still one");
    let r = run(script, &StrategyConfig::irtd(3, 1));
    // one regeneration, then a fresh batch for the next round
    assert_eq!(r.calls[&Role::GenDirections], 3);
    // no history to pad from in the first round
    let texts: Vec<_> = r.trace.nodes[1..].iter().map(|n| n.direction_used.as_ref().unwrap().text.as_str()).collect();
    assert_eq!(texts, ["only one", "handle the base case"]);

    // second batch is short; the best past direction fills in
    let script = base_script()
        .with("t/gen_directions/2", "1. only one")
        .with("t/gen_directions/3", "- still one");
    let r = run(script, &StrategyConfig::irtd(7, 1));
    assert_eq!(r.calls[&Role::GenDirections], 4);
    let texts: Vec<_> = r.trace.nodes[4..6].iter().map(|n| n.direction_used.as_ref().unwrap().text.as_str()).collect();
    assert_eq!(texts, ["only one", "handle the base case"]);
}

#[test]
fn unparseable_directions_fall_back_to_raw_text() {
    let script = base_script().with("*/gen_directions/*", "```\n```");
    let r = run(script, &StrategyConfig::linear(2));
    assert_eq!(r.trace.nodes.len(), 2);
    assert!(r.trace.nodes[1].direction_used.as_ref().unwrap().text.contains("```"));
}

#[test]
fn gateway_failure_aborts_the_run() {
    let gateway = Gateway::mock(MockScript::new().with("*/gen_tests/*", "assert True"));
    let env = SearchEnv {
        gateway: &gateway,
        executor: &MarkerExecutor,
        timeout_ms: 1000,
    };
    let err = run_strategy(&env, &task(), &StrategyConfig::bon(2)).unwrap_err();
    assert!(err.to_string().contains("t/init_code/1"), "{err}");
}

#[test]
fn invalid_configs_are_rejected() {
    let gateway = Gateway::mock(base_script());
    let env = SearchEnv {
        gateway: &gateway,
        executor: &MarkerExecutor,
        timeout_ms: 1000,
    };
    let mut cfg = StrategyConfig::irtd(3, 5);
    assert!(run_strategy(&env, &task(), &cfg).is_err());
    cfg = StrategyConfig::linear(4);
    cfg.n_init = 2;
    assert!(run_strategy(&env, &task(), &cfg).is_err());
}

#[test]
fn budget_and_call_accounting_hold_for_every_strategy() {
    let scripts = [
        base_script(),
        base_script().with("t/refine_code/4", PASS),
        base_script().with("t/init_code/2", PASS),
    ];
    for script in scripts {
        for k in 1..=16 {
            for kind in StrategyKind::ALL {
                let cfg = match kind {
                    StrategyKind::Bon => StrategyConfig::bon(k),
                    StrategyKind::Linear => StrategyConfig::linear(k),
                    StrategyKind::Tree => StrategyConfig::tree(k),
                    StrategyKind::Sfs => StrategyConfig::sfs(k),
                    StrategyKind::Irtd => StrategyConfig::irtd(k, 3.min(k)),
                };
                let r = run(script.clone(), &cfg);
                assert!(r.trace.nodes.len() as u32 <= k);
                assert_eq!(r.code_generations() as usize, r.trace.nodes.len(), "{kind} k={k}");
                if kind == StrategyKind::Irtd {
                    assert!(max_depth(&r.trace).unwrap() <= 2);
                }
            }
        }
    }
}
