//! The five search strategies over a gateway session and an executor.
//!
//! Every run is sequential, generates its own validation tests unless the
//! task already carries some, and records each generated code as one node.

mod selection;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use selection::{
    select_node_sfs, simulate_selection_depth, uct_argmax, uct_choose, uct_score, Backprop, SearchTree,
    SelectionDepthReport, SelectionError, TieBreak, TreeNodeStats, TreeSpec, TreeSpecNode,
};

use crate::gateway::{Gateway, GatewayError, RefinementOutcome, Role, Session};
use crate::sandbox::{evaluate, render_feedback, validation_score, Executor, SandboxError, TestStatus};
use crate::types::{SearchTrace, SharedInformation, StrategyKind, Task, TestCase, TextualDirection};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("invalid strategy config: {0}")]
    Config(String),
}

/// Instruction snippets appended to initial-code prompts when Foresting
/// diversifies its roots.
pub const DEFAULT_PROMPT_SUFFIXES: [&str; 4] = [
    "Prefer a straightforward iterative solution.",
    "Think about edge cases such as empty inputs before writing code.",
    "Use Python standard library helpers where they simplify the code.",
    "Write small helper functions for each sub-step.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Names the configuration in trace files and curves; defaults to the kind.
    pub label: Option<String>,
    pub budget_k: u32,
    pub n_init: u32,
    pub m_directions: u32,
    pub uct_c: f64,
    pub validation_test_count: u32,
    pub run_seed: u64,
    pub early_stop: bool,
    /// Break UCT ties at random instead of by lowest node id.
    pub randomize_ties: bool,
    pub backprop: Backprop,
    /// Suffixes sampled for SFS initial codes; empty disables them.
    pub prompt_suffixes: Vec<String>,
    /// Regenerate validation tests for every run instead of reusing the
    /// task's fixed set.
    pub regenerate_validation: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Bon,
            label: None,
            budget_k: 16,
            n_init: 1,
            m_directions: 3,
            uct_c: 1.0,
            validation_test_count: 6,
            run_seed: 0,
            early_stop: true,
            randomize_ties: false,
            backprop: Backprop::Max,
            prompt_suffixes: Vec::new(),
            regenerate_validation: false,
        }
    }
}

impl StrategyConfig {
    pub fn bon(budget_k: u32) -> Self {
        Self {
            kind: StrategyKind::Bon,
            budget_k,
            n_init: budget_k,
            ..Self::default()
        }
    }

    pub fn linear(budget_k: u32) -> Self {
        Self {
            kind: StrategyKind::Linear,
            budget_k,
            ..Self::default()
        }
    }

    pub fn tree(budget_k: u32) -> Self {
        Self {
            kind: StrategyKind::Tree,
            budget_k,
            backprop: Backprop::Mean,
            ..Self::default()
        }
    }

    pub fn sfs(budget_k: u32) -> Self {
        Self {
            kind: StrategyKind::Sfs,
            budget_k,
            n_init: 5.min(budget_k),
            ..Self::default()
        }
    }

    pub fn no_foresting(budget_k: u32) -> Self {
        Self {
            label: Some("sfs-no-foresting".into()),
            n_init: 1,
            ..Self::sfs(budget_k)
        }
    }

    pub fn irtd(budget_k: u32, n_init: u32) -> Self {
        Self {
            kind: StrategyKind::Irtd,
            label: Some(format!("irtd-n{n_init}")),
            budget_k,
            n_init,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, run_seed: u64) -> Self {
        self.run_seed = run_seed;
        self
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        let fail = |m: &str| Err(StrategyError::Config(m.to_string()));
        if self.budget_k == 0 {
            return fail("budget_k must be at least 1");
        }
        if self.n_init == 0 {
            return fail("n_init must be at least 1");
        }
        if self.n_init > self.budget_k {
            return fail("budget_k must be at least n_init");
        }
        if self.m_directions == 0 {
            return fail("m_directions must be at least 1");
        }
        if self.validation_test_count == 0 {
            return fail("validation_test_count must be at least 1");
        }
        if !(self.uct_c >= 0.0 && self.uct_c.is_finite()) {
            return fail("uct_c must be a finite non-negative number");
        }
        if matches!(self.kind, StrategyKind::Linear | StrategyKind::Tree) && self.n_init != 1 {
            return fail("linear and tree search start from exactly one initial code");
        }
        Ok(())
    }
}

pub struct SearchEnv<'a> {
    pub gateway: &'a Gateway,
    pub executor: &'a dyn Executor,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub trace: SearchTrace,
    pub shared_info: SharedInformation,
    pub validation_tests: Vec<TestCase>,
    /// Logical gateway requests per role.
    pub calls: BTreeMap<Role, u32>,
}

impl StrategyRun {
    pub fn code_generations(&self) -> u32 {
        self.calls.get(&Role::InitCode).copied().unwrap_or(0) + self.calls.get(&Role::RefineCode).copied().unwrap_or(0)
    }
}

pub fn run_strategy(env: &SearchEnv<'_>, task: &Task, config: &StrategyConfig) -> Result<StrategyRun, StrategyError> {
    match config.kind {
        StrategyKind::Bon => run_bon(env, task, config),
        StrategyKind::Linear => run_linear(env, task, config),
        StrategyKind::Tree => run_tree(env, task, config),
        StrategyKind::Sfs => run_sfs(env, task, config),
        StrategyKind::Irtd => run_irtd(env, task, config),
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |x, b| (x ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub(crate) fn run_rng(run_seed: u64, task_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(run_seed ^ fnv1a(task_id))
}

struct Scored {
    score: f64,
    passed: bool,
    feedback: String,
}

/// State shared by all strategies during one run.
struct Run<'e, 'g> {
    env: &'e SearchEnv<'g>,
    session: Session<'g>,
    task: Task,
    config: &'e StrategyConfig,
    trace: SearchTrace,
    info: SharedInformation,
    rng: ChaCha8Rng,
    /// Rendered validation feedback per node id.
    feedback: BTreeMap<u32, String>,
}

impl<'e, 'g> Run<'e, 'g> {
    fn start(env: &'e SearchEnv<'g>, task: &Task, config: &'e StrategyConfig) -> Result<Self, StrategyError> {
        config.validate()?;
        task.validate().map_err(StrategyError::Config)?;
        let label = config.label();
        let mut session = env
            .gateway
            .session(&task.task_id, format!("{label}/{}", config.run_seed))
            .with_seed(config.run_seed);
        let mut task = task.clone();
        if task.validation_tests.is_empty() || config.regenerate_validation {
            task.validation_tests = session.generate_validation_tests(&task, config.validation_test_count as usize)?;
        }
        let rng = run_rng(config.run_seed, &task.task_id);
        Ok(Self {
            env,
            session,
            config,
            trace: SearchTrace::new(&task.task_id, config.kind, label, config.budget_k, config.run_seed),
            task,
            info: SharedInformation::new(),
            rng,
            feedback: BTreeMap::new(),
        })
    }

    fn budget_left(&self) -> bool {
        (self.trace.nodes.len() as u32) < self.config.budget_k
    }

    fn score(&self, code: &str) -> Result<Scored, StrategyError> {
        let v = &self.task.validation_tests;
        let result = evaluate(self.env.executor, code, v, self.env.timeout_ms, self.task.entry_point.as_deref())?;
        Ok(Scored {
            score: validation_score(&result),
            passed: result.per_test.iter().all(|o| o.status == TestStatus::Pass),
            feedback: render_feedback(&result, v, self.session.feedback_detail()),
        })
    }

    /// Scores `code`, records it, and reports whether the run should stop
    /// because it passed every validation test.
    fn add(&mut self, code: String, parent: Option<u32>, direction: Option<TextualDirection>) -> Result<(u32, f64, bool), StrategyError> {
        let scored = self.score(&code)?;
        let direction = direction.map(|mut d| {
            d.used = true;
            d
        });
        let id = self.trace.push(code, parent, direction, scored.score, scored.passed);
        self.feedback.insert(id, scored.feedback);
        let stop = scored.passed && self.config.early_stop;
        if stop {
            self.trace.terminated_early = true;
        }
        Ok((id, scored.score, stop))
    }

    fn source(&self, id: u32) -> String {
        self.trace.node(id).expect("known node").source.clone()
    }

    fn initial(&mut self, suffix: &str) -> Result<(u32, f64, bool), StrategyError> {
        let code = self.session.generate_initial_code(&self.task, &SharedInformation::new(), suffix)?;
        self.add(code, None, None)
    }

    fn refine(&mut self, parent: u32, direction: TextualDirection) -> Result<(u32, f64, bool), StrategyError> {
        let code = self.session.refine_code(&self.task, &self.source(parent), &direction)?;
        self.add(code, Some(parent), Some(direction))
    }

    /// Directions for `node`, with one regeneration and then reuse of the
    /// best past direction when the model returns fewer than `m`.
    fn directions(&mut self, node: u32, info: &SharedInformation, m: usize) -> Result<Vec<TextualDirection>, StrategyError> {
        let code = self.source(node);
        let feedback = self.feedback[&node].clone();
        let mut raw = String::new();
        let mut dirs = Vec::new();
        for _ in 0..2 {
            match self.session.generate_directions(&self.task, &code, &feedback, info, m) {
                Ok(d) if d.len() > dirs.len() => dirs = d,
                Ok(_) => {}
                Err(GatewayError::NoDirections { raw: r }) => raw = r,
                Err(e) => return Err(e.into()),
            }
            if dirs.len() >= m {
                return Ok(dirs);
            }
        }
        if let Some(best) = info.best_direction() {
            if !dirs.iter().any(|d| d.text == best.direction_text) {
                dirs.push(TextualDirection::new(best.direction_text.clone()));
            }
        }
        if dirs.is_empty() {
            let text = raw.trim();
            dirs.push(TextualDirection::new(if text.is_empty() {
                "Fix the code so that it passes the failing tests."
            } else {
                text
            }));
        }
        Ok(dirs)
    }

    fn record_outcome(&mut self, role: Role, parent: u32, child: u32) {
        let code = self.source(parent);
        let before = self.trace.node(parent).unwrap().validation_score;
        let node = self.trace.node(child).unwrap();
        let direction = node.direction_used.clone().expect("refined node carries its direction");
        let (refined, after) = (node.source.clone(), node.validation_score);
        self.info = self.session.update_shared_info(
            role,
            &self.task,
            &self.info,
            RefinementOutcome {
                code: &code,
                direction: &direction,
                refined_code: &refined,
                score_before: before,
                score_after: after,
            },
        );
        let note = self.info.entries().last().unwrap().outcome_summary.clone();
        let idx = (child - 1) as usize;
        if let Some(d) = self.trace.nodes[idx].direction_used.take() {
            self.trace.nodes[idx].direction_used = Some(d.with_feedback(note));
        }
    }

    fn finish(self) -> StrategyRun {
        debug_assert!(self.trace.validate().is_ok());
        let calls = Role::ALL
            .into_iter()
            .map(|r| (r, self.session.calls(r)))
            .filter(|(_, n)| *n > 0)
            .collect();
        StrategyRun {
            trace: self.trace,
            shared_info: self.info,
            validation_tests: self.task.validation_tests,
            calls,
        }
    }
}

pub fn run_bon(env: &SearchEnv<'_>, task: &Task, config: &StrategyConfig) -> Result<StrategyRun, StrategyError> {
    let mut run = Run::start(env, task, config)?;
    while run.budget_left() {
        if run.initial("")?.2 {
            break;
        }
    }
    Ok(run.finish())
}

pub fn run_linear(env: &SearchEnv<'_>, task: &Task, config: &StrategyConfig) -> Result<StrategyRun, StrategyError> {
    let mut run = Run::start(env, task, config)?;
    let (mut cur, _, stop) = run.initial("")?;
    if stop {
        return Ok(run.finish());
    }
    let none = SharedInformation::new();
    while run.budget_left() {
        let d = run.directions(cur, &none, 1)?.swap_remove(0);
        let (next, _, stop) = run.refine(cur, d)?;
        if stop {
            break;
        }
        cur = next;
    }
    Ok(run.finish())
}

/// MCTS: descend by UCT through fully expanded nodes (m_directions
/// children), expand with one refinement, back up its score.
pub fn run_tree(env: &SearchEnv<'_>, task: &Task, config: &StrategyConfig) -> Result<StrategyRun, StrategyError> {
    let mut run = Run::start(env, task, config)?;
    let (root, q, stop) = run.initial("")?;
    if stop {
        return Ok(run.finish());
    }
    let width = config.m_directions as usize;
    let mut tree = SearchTree::new(root, q);
    let none = SharedInformation::new();
    while run.budget_left() {
        let mut cur = SearchTree::ROOT;
        while tree.nodes[cur].children.len() >= width {
            let mut tie = if config.randomize_ties {
                TieBreak::Random(&mut run.rng)
            } else {
                TieBreak::LowestId
            };
            cur = uct_choose(&tree, cur, config.uct_c, &mut tie).expect("expanded node has children");
        }
        let parent = tree.nodes[cur].node_id;
        let d = run.directions(parent, &none, 1)?.swap_remove(0);
        let (child, q, stop) = run.refine(parent, d)?;
        tree.add_child(cur, child, q);
        tree.backpropagate(cur, q, config.backprop);
        if stop {
            break;
        }
    }
    Ok(run.finish())
}

pub fn run_sfs(env: &SearchEnv<'_>, task: &Task, config: &StrategyConfig) -> Result<StrategyRun, StrategyError> {
    let mut run = Run::start(env, task, config)?;
    let mut tree = SearchTree::virtual_root();
    for _ in 0..config.n_init {
        let suffix = if config.prompt_suffixes.is_empty() {
            String::new()
        } else {
            config.prompt_suffixes[run.rng.gen_range(0..config.prompt_suffixes.len())].clone()
        };
        let (id, q, stop) = run.initial(&suffix)?;
        tree.add_child(SearchTree::ROOT, id, q);
        tree.backpropagate(SearchTree::ROOT, q, config.backprop);
        if stop {
            return Ok(run.finish());
        }
    }
    while run.budget_left() {
        let picked = {
            let mut tie = if config.randomize_ties {
                TieBreak::Random(&mut run.rng)
            } else {
                TieBreak::LowestId
            };
            select_node_sfs(&tree, config.uct_c, &mut tie)
        };
        debug_assert_ne!(picked, SearchTree::ROOT, "the virtual root always has a better child");
        let parent = tree.nodes[picked].node_id;
        if tree.nodes[picked].unused_directions.is_empty() {
            let info = run.info.clone();
            tree.nodes[picked].unused_directions = run.directions(parent, &info, config.m_directions as usize)?;
        }
        let pool = &mut tree.nodes[picked].unused_directions;
        let d = pool.remove(run.rng.gen_range(0..pool.len()));
        let (child, q, stop) = run.refine(parent, d)?;
        tree.add_child(picked, child, q);
        tree.backpropagate(picked, q, config.backprop);
        run.record_outcome(Role::ScoutInsight, parent, child);
        if stop {
            break;
        }
    }
    Ok(run.finish())
}

pub fn run_irtd(env: &SearchEnv<'_>, task: &Task, config: &StrategyConfig) -> Result<StrategyRun, StrategyError> {
    let mut run = Run::start(env, task, config)?;
    let mut roots = Vec::with_capacity(config.n_init as usize);
    for _ in 0..config.n_init {
        let (id, _, stop) = run.initial("")?;
        if stop {
            return Ok(run.finish());
        }
        roots.push(id);
    }
    let i_max = config.budget_k - config.n_init;
    let mut i = 0;
    while i < i_max {
        for &root in &roots {
            let info = run.info.clone();
            for d in run.directions(root, &info, config.m_directions as usize)? {
                let (child, _, stop) = run.refine(root, d)?;
                if stop {
                    return Ok(run.finish());
                }
                i += 1;
                if i >= i_max {
                    return Ok(run.finish());
                }
                run.record_outcome(Role::UpdateSharedInfo, root, child);
            }
        }
    }
    Ok(run.finish())
}
