//! Acceptance criteria, one PASS/FAIL line each.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refine_search::analysis::{diversity_matrix, first_correct_depth_table, max_depth_table};
use refine_search::gateway::{Gateway, MockScript};
use refine_search::harness::{confidence_interval, pass_at_k, run_experiment_with, t_critical_975, BackendSpec, ExperimentSpec};
use refine_search::sandbox::MarkerExecutor;
use refine_search::strategies::{
    run_strategy, select_node_sfs, simulate_selection_depth, SearchEnv, SearchTree, StrategyConfig, TieBreak, TreeSpec, TreeSpecNode,
};
use refine_search::vspace::{
    linear_version_space, run_campaign, survival_probability, two_code_generator, CampaignConfig, Coupling, History, VersionSpaceModel,
};
use refine_search::{max_depth, SearchTrace, StrategyKind, Task, TestCase, TextualDirection};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

const FAIL_CODE: &str = "```python\ndef f(x):\n    return 0\n```";
const PASS_CODE: &str = "```python\ndef f(x):\n    return x\n# passes: *\n```";

fn base_script() -> MockScript {
    MockScript::new()
        .with("*/gen_tests/*", "assert f(1) == 1\nassert f(2) == 2")
        .with("*/init_code/*", FAIL_CODE)
        .with("*/gen_directions/*", "1. handle the base case\n2. return x\n3. check types")
        .with("*/refine_code/*", FAIL_CODE)
        .with("*/update_shared_info/*", "Direction helped a little.")
        .with("*/scout_insight/*", "Insight: base cases matter.")
}

/// Key of the call producing the `s`-th code generation of a task.
fn generation_key(task: &str, s: u32, n_init: u32) -> String {
    if s <= n_init {
        format!("{task}/init_code/{s}")
    } else {
        format!("{task}/refine_code/{}", s - n_init)
    }
}

fn tasks(n: usize) -> Vec<Task> {
    (0..n)
        .map(|i| Task::new(format!("task-{i:02}"), "Write f.", vec![TestCase::assertion("h1", "assert f(3) == 3")]))
        .collect()
}

fn campaign() -> Outcome {
    let start = Instant::now();
    let report = run_campaign(&CampaignConfig::default());
    let secs = start.elapsed().as_secs_f64();
    let rows = report.rows();
    for (name, tally) in &rows {
        check!(tally.violations == 0, "{name}: {} violations, first {:?}", tally.violations, tally.first_violation);
        check!(tally.models > 0 && tally.checks > 0, "{name}: nothing checked");
    }
    check!(secs < 60.0, "took {secs:.1} s");
    let checks: u64 = rows.iter().map(|(_, t)| t.checks).sum();
    Ok(format!("{} theorem rows, {checks} checks, 0 violations, {secs:.2} s", rows.len()))
}

fn drifting_pair() -> Outcome {
    let model = VersionSpaceModel::drifting_pair();
    let history = History::new(&model, [(0, 0), (1, 0)]).map_err(|e| e.to_string())?;
    let d0 = model.consistent_directions(0, 0).map_err(|e| e.to_string())?;
    let d1 = model.consistent_directions(1, 0).map_err(|e| e.to_string())?;
    check!(!d0.is_empty() && !d1.is_empty(), "a single-step constraint set is empty");
    let v = linear_version_space(&model, &history).map_err(|e| e.to_string())?;
    check!(v.is_empty(), "V_2 = {:?}", model.direction_names(v));
    Ok(format!("D0 = {:?}, D1 = {:?}, V_2 = {{}}", model.direction_names(d0), model.direction_names(d1)))
}

fn survival() -> Outcome {
    let trials = 100_000;
    let spec = two_code_generator(0.1, Coupling::Independent);
    let est = survival_probability(&spec, 0, 3, 0.1, trials, 2024).map_err(|e| e.to_string())?;
    let again = survival_probability(&spec, 0, 3, 0.1, trials, 2024).map_err(|e| e.to_string())?;
    let floor = 0.729 - 3.0 * (0.729f64 * 0.271 / trials as f64).sqrt();
    check!(est == again, "not deterministic under seed");
    check!(est.empirical >= floor, "empirical {} < {floor}", est.empirical);
    check!(est.empirical >= 0.7, "empirical {} below union bound", est.empirical);
    Ok(format!("empirical {:.5} >= {floor:.4} and >= 0.7", est.empirical))
}

/// Root with five tied children; the first `qualifying` are exhausted and
/// have a better child.
fn five_child_tree(qualifying: usize) -> TreeSpec {
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
            unused_directions: usize::from(!exhausted),
            children: if exhausted { vec![6 + i] } else { vec![] },
        });
    }
    for _ in 0..qualifying {
        nodes.push(TreeSpecNode {
            quality: 0.5,
            visits: 1,
            unused_directions: 1,
            children: vec![],
        });
    }
    TreeSpec { nodes, uct_c: 1.0 }
}

fn selection_depth() -> Outcome {
    let trials = 100_000;
    let none = simulate_selection_depth(&five_child_tree(0), trials, 5).map_err(|e| e.to_string())?;
    check!(none.epsilon == 0.0, "epsilon {} on G = {{}}", none.epsilon);
    check!(none.distribution.get(&1) == Some(&1.0), "depth distribution {:?}", none.distribution);
    let one = simulate_selection_depth(&five_child_tree(1), trials, 5).map_err(|e| e.to_string())?;
    check!((one.epsilon - 0.2).abs() < 1e-12, "epsilon {}", one.epsilon);
    let se = (0.2f64 * 0.8 / trials as f64).sqrt();
    let p = one.prob_at_least(2);
    check!((p - 0.2).abs() <= 3.0 * se, "Pr(depth >= 2) = {p}, 3 SE = {}", 3.0 * se);
    Ok(format!("G empty: Pr(depth 1) = 1; one of five: {p:.4} vs 0.2 (3 SE = {:.4})", 3.0 * se))
}

/// Plain restatement of SFS selection over parallel arrays.
struct Plain {
    ids: Vec<u32>,
    quality: Vec<f64>,
    value: Vec<f64>,
    visits: Vec<u32>,
    exhausted: Vec<bool>,
    children: Vec<Vec<usize>>,
}

impl Plain {
    fn select(&self, c: f64) -> usize {
        let mut v = 0;
        loop {
            let better = self.children[v].iter().any(|&ch| self.quality[ch] > self.quality[v]);
            if !(better && self.exhausted[v]) {
                return v;
            }
            let n = self.visits[v] as f64;
            let scores: Vec<f64> = self.children[v]
                .iter()
                .map(|&ch| self.value[ch] + c * ((n + 1.0).ln() / (self.visits[ch] as f64 + 1.0)).sqrt())
                .collect();
            let best = scores.iter().cloned().fold(f64::MIN, f64::max);
            v = self.children[v]
                .iter()
                .zip(&scores)
                .filter(|(_, s)| best - **s <= 1e-12)
                .map(|(&ch, _)| ch)
                .min_by_key(|&ch| self.ids[ch])
                .unwrap();
        }
    }
}

fn random_tree(rng: &mut ChaCha8Rng) -> (SearchTree, Plain) {
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let n = rng.gen_range(1..25);
    let mut ids: Vec<u32> = (0..n as u32).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.gen_range(0..=i));
    }
    let mut tree = SearchTree::new(ids[0], levels[rng.gen_range(0..5)]);
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        tree.add_child(parent, ids[i], levels[rng.gen_range(0..5)]);
    }
    for node in &mut tree.nodes {
        node.visits = rng.gen_range(1..8);
        node.value = levels[rng.gen_range(0..5)];
        if rng.gen_bool(0.3) {
            node.unused_directions.push(TextualDirection::new("d"));
        }
    }
    let plain = Plain {
        ids: tree.nodes.iter().map(|n| n.node_id).collect(),
        quality: tree.nodes.iter().map(|n| n.quality).collect(),
        value: tree.nodes.iter().map(|n| n.value).collect(),
        visits: tree.nodes.iter().map(|n| n.visits).collect(),
        exhausted: tree.nodes.iter().map(|n| n.unused_directions.is_empty()).collect(),
        children: tree.nodes.iter().map(|n| n.children.clone()).collect(),
    };
    (tree, plain)
}

fn run_one(script: MockScript, config: &StrategyConfig) -> Result<SearchTrace, String> {
    let gateway = Gateway::mock(script);
    let env = SearchEnv {
        gateway: &gateway,
        executor: &MarkerExecutor,
        timeout_ms: 1000,
    };
    let task = Task::new("t", "Write f.", vec![TestCase::assertion("h1", "assert f(3) == 3")]);
    run_strategy(&env, &task, config).map(|r| r.trace).map_err(|e| e.to_string())
}

fn fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut deep = 0;
    for i in 0..1000 {
        let (tree, plain) = random_tree(&mut rng);
        let c = [0.0, 0.5, 1.0, 1.41][i % 4];
        let got = select_node_sfs(&tree, c, &mut TieBreak::LowestId);
        check!(got == plain.select(c), "tree {i}: selected {got}, expected {}", plain.select(c));
        deep += usize::from(tree.depth(got) >= 2);
    }

    let mut irtd_runs = 0;
    for k in 1..=16 {
        for n_init in 1..=k.min(5) {
            for solve in [None, Some(1), Some(k.min(4)), Some(k)] {
                let mut script = base_script();
                if let Some(s) = solve {
                    script = script.with(generation_key("t", s, n_init), PASS_CODE);
                }
                let trace = run_one(script, &StrategyConfig::irtd(k, n_init))?;
                let depth = max_depth(&trace).unwrap_or(0);
                check!(depth <= 2, "irtd k={k} n={n_init}: depth {depth}");
                check!(trace.nodes.len() as u32 <= k, "irtd k={k} n={n_init}: {} nodes", trace.nodes.len());
                irtd_runs += 1;
            }
        }
    }

    for solve in [None, Some(1), Some(3), Some(6), Some(11)] {
        let mut script = base_script().with("t/refine_code/2", "```python\ndef f(x):\n    return x\n# passes: val-1\n```");
        if let Some(s) = solve {
            script = script.with(generation_key("t", s, 1), PASS_CODE);
        }
        let mut sfs = StrategyConfig::sfs(16);
        sfs.n_init = 1;
        let a = run_one(script.clone(), &sfs)?;
        let b = run_one(script, &StrategyConfig::no_foresting(16))?;
        check!(a.nodes == b.nodes, "n_init = 1 differs from no-foresting (solve at {solve:?})");
    }
    Ok(format!("1000/1000 selections agree ({deep} at depth 2 or deeper), {irtd_runs} irtd runs bounded, 5 foresting scripts identical"))
}

fn scaling() -> Outcome {
    let steps = [Some(1), Some(2), Some(3), Some(4), Some(6), Some(8), Some(11), Some(16), None, None];
    let configs = [
        StrategyConfig::bon(16),
        StrategyConfig::linear(16),
        StrategyConfig::tree(16),
        StrategyConfig::sfs(16),
        StrategyConfig::irtd(16, 3),
    ];
    let ts = tasks(10);
    let mut summary = Vec::new();
    for cfg in configs {
        let mut script = base_script();
        for (i, s) in steps.iter().enumerate() {
            if let Some(s) = s {
                script = script.with(generation_key(&format!("task-{i:02}"), *s, cfg.n_init), PASS_CODE);
            }
        }
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut spec = ExperimentSpec::new("unused.jsonl", dir.path(), BackendSpec::Mock { script: "unused.json".into() });
        spec.strategies = vec![cfg.clone()];
        spec.runs = 2;
        let out = run_experiment_with(&spec, &ts, &Gateway::mock(script), &MarkerExecutor).map_err(|e| e.to_string())?;
        let curve = &out.summary.curves[0];
        check!(curve.points.len() == 16, "{}: {} points", curve.label, curve.points.len());
        for j in 1..=16u32 {
            let expected = steps.iter().filter(|s| s.is_some_and(|s| s <= j)).count() as f64 / 10.0;
            let got = curve.points[j as usize - 1].mean;
            check!(got == expected, "{} Pass@{j} = {got}, expected {expected}", curve.label);
        }
        check!(curve.points.windows(2).all(|w| w[0].mean <= w[1].mean), "{} not monotone", curve.label);
        summary.push(curve.label.clone());
    }
    Ok(format!("Pass@1..16 exact and monotone for {}", summary.join(", ")))
}

fn random_traces(rng: &mut ChaCha8Rng) -> Vec<SearchTrace> {
    (0..rng.gen_range(1..30))
        .map(|i| {
            let mut t = SearchTrace::new(format!("task-{i}"), StrategyKind::Bon, "bon", 16, 0);
            for _ in 0..rng.gen_range(0..=16) {
                let id = t.push("c".into(), None, None, 0.0, false);
                t.nodes[id as usize - 1].hidden_result = Some(rng.gen_bool(0.1));
            }
            t
        })
        .collect()
}

fn statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for set in 0..1000 {
        let traces = random_traces(&mut rng);
        for j in 1..=16u32 {
            let solved = traces
                .iter()
                .filter(|t| t.nodes.iter().any(|n| n.node_id <= j && n.hidden_result == Some(true)))
                .count();
            let got = pass_at_k(&traces, j).map_err(|e| e.to_string())?;
            check!(got == Ratio::new(solved as i64, traces.len() as i64), "set {set} j={j}: {got}");
        }
    }
    // references from scipy.stats.t
    let cases: [(&[f64], f64, f64); 4] = [
        (&[0.0, 1.0], 0.5, 6.353102368216047),
        (&[0.4, 0.55, 0.5, 0.62, 0.48], 0.51, 0.10163457849431429),
        (&[0.1, 0.2, 0.3], 0.2, 0.24841377117195454),
        (&[0.25, 0.25, 0.25, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5], 0.425, 0.08638755360554545),
    ];
    for (values, mean, half) in cases {
        let (m, h) = confidence_interval(values, 0.95).map_err(|e| e.to_string())?;
        check!((m - mean).abs() < 1e-9 && (h - half).abs() < 1e-9, "n={}: ({m}, {h})", values.len());
    }
    for (df, t) in [(1, 12.706204736432095), (4, 2.7764451051977987), (30, 2.0422724563012373), (200, 1.9718962236316089)] {
        check!((t_critical_975(df) - t).abs() < 1e-9, "t({df}) = {}", t_critical_975(df));
    }
    Ok("1000 sets recounted; 4 intervals and 4 t quantiles within 1e-9".into())
}

/// Chain of `depth` nodes whose last node is correct when `solved`.
fn chain(id: usize, depth: u32, solved: bool) -> SearchTrace {
    let mut t = SearchTrace::new(format!("p{id}"), StrategyKind::Sfs, "sfs", 16, 0);
    let mut parent = None;
    for _ in 0..depth {
        parent = Some(t.push("c".into(), parent, parent.map(|_| TextualDirection::new("d")), 0.0, false));
    }
    for n in &mut t.nodes {
        n.hidden_result = Some(false);
    }
    t.nodes.last_mut().unwrap().hidden_result = Some(solved);
    t
}

fn depth_tables() -> Outcome {
    let planted = [(1, true), (1, true), (1, true), (1, true), (1, true), (2, true), (2, true), (2, true), (3, true), (4, false), (4, false)];
    let traces: Vec<SearchTrace> = planted.iter().enumerate().map(|(i, &(d, solved))| chain(i, d, solved)).collect();
    let fc = first_correct_depth_table(&traces).map_err(|e| e.to_string())?;
    check!(fc.row(3) == ["55.56", "33.33", "11.11"], "first-correct row {:?}", fc.row(3));
    check!(fc.excluded == 2, "excluded {}", fc.excluded);
    let md = max_depth_table(&traces);
    check!(md.row(4) == ["45.45", "27.27", "9.09", "18.18"], "max-depth row {:?}", md.row(4));

    // mock SFS with heterogeneous task difficulty
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = StrategyConfig::sfs(16);
    let ts = tasks(40);
    let mut script = base_script();
    for task in &ts {
        let p = [0.05, 0.2, 0.5, 0.8, 0.95][rng.gen_range(0..5)];
        for s in 1..=16 {
            if rng.gen_bool(p) {
                script = script.with(generation_key(&task.task_id, s, cfg.n_init), PASS_CODE);
            }
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut spec = ExperimentSpec::new("unused.jsonl", dir.path(), BackendSpec::Mock { script: "unused.json".into() });
    spec.strategies = vec![cfg];
    spec.runs = 1;
    let out = run_experiment_with(&spec, &ts, &Gateway::mock(script), &MarkerExecutor).map_err(|e| e.to_string())?;
    let table = first_correct_depth_table(&out.traces["sfs"][&0]).map_err(|e| e.to_string())?;
    let (d1, d2) = (table.percentage(1), table.percentage(2));
    check!(d1 >= d2, "mock SFS depth-1 share {d1:.2} < depth-2 share {d2:.2}");
    Ok(format!("planted rows exact; mock SFS depth-1 {d1:.2}% >= depth-2 {d2:.2}%"))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn diversity() -> Outcome {
    let u = vec![0.6, 0.0, 0.8];
    let same = diversity_matrix(&vec![vec![u.clone(); 3]; 4]).map_err(|e| e.to_string())?;
    check!(same.values.iter().flatten().all(|&x| (x - 1.0).abs() < 1e-12), "identical vectors: {:?}", same.values);

    let e = |i: usize| (0..4).map(|k| f64::from(u8::from(k == i))).collect::<Vec<f64>>();
    let ortho = diversity_matrix(&[vec![e(0), e(1)], vec![e(2), e(3)]]).map_err(|e| e.to_string())?;
    check!(ortho.values[0][1] == 0.0 && ortho.values[1][0] == 0.0, "orthogonal steps: {:?}", ortho.values);

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..300 {
        let steps: Vec<Vec<Vec<f64>>> = (0..rng.gen_range(1..7))
            .map(|_| (0..rng.gen_range(1..6)).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
            .collect();
        let m = diversity_matrix(&steps).map_err(|e| e.to_string())?;
        for i in 0..steps.len() {
            for j in 0..steps.len() {
                let mut vals = Vec::new();
                for (a, x) in steps[i].iter().enumerate() {
                    for (b, y) in steps[j].iter().enumerate() {
                        if i != j || a != b {
                            vals.push(cosine(x, y));
                        }
                    }
                }
                let expected = if vals.is_empty() { 1.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 };
                check!((m.values[i][j] - expected).abs() < 1e-12, "case {case} ({i},{j}): {} vs {expected}", m.values[i][j]);
                check!(m.values[i][j] == m.values[j][i], "case {case}: not symmetric at ({i},{j})");
            }
        }
    }
    Ok("all-ones, orthogonal zeros, 300 random cases within 1e-12 and symmetric".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("version-space theorem campaign", campaign),
        ("drifting-pair fixture", drifting_pair),
        ("survival Monte Carlo", survival),
        ("selection depth simulator", selection_depth),
        ("algorithm fidelity", fidelity),
        ("mock end-to-end scaling", scaling),
        ("pass@k and confidence intervals", statistics),
        ("depth tables", depth_tables),
        ("direction diversity", diversity),
    ];
    let mut failed = BTreeMap::new();
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                println!("FAIL  {name}: {why}");
                failed.insert(name, why);
            }
        }
    }
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
