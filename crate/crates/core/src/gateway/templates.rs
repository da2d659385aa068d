//! Per-role prompt templates with `{name}` placeholders.
//!
//! A template directory holds `<role>.txt` (user message) and optionally
//! `<role>.system.txt`. Missing files fall back to the built-in defaults.

use std::collections::HashMap;
use std::path::Path;

use super::{Message, Role};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone)]
pub struct PromptTemplates {
    templates: HashMap<Role, Template>,
}

const SYSTEM_CODER: &str = "You are an expert Python programmer. Reply with a single complete solution in one ```python fenced block.";

fn default_template(role: Role) -> Template {
    let (system, user) = match role {
        Role::InitCode => (SYSTEM_CODER, "Solve the following problem.\n\n{prompt}\n{suffix}"),
        Role::GenTests => (
            "You write small, correct unit tests as Python assert statements, one per line.",
            "Write up to {count} distinct assert statements that check a correct solution to this problem.\n\n{prompt}",
        ),
        Role::GenDirections => (
            "You review code and propose concise, concrete ways to fix or improve it.",
            "Problem:\n{prompt}\n\nCurrent code:\n```python\n{code}\n```\n\nTest feedback:\n{feedback}\n\nInsights from earlier attempts:\n{shared_info}\n\nPropose {m} different improvement directions as a numbered list, one line each.",
        ),
        Role::RefineCode => (
            SYSTEM_CODER,
            "Problem:\n{prompt}\n\nCurrent code:\n```python\n{code}\n```\n\nRevise the code following this direction:\n{direction}",
        ),
        Role::UpdateSharedInfo => (
            "You summarize what a code revision attempt taught us, in one or two sentences.",
            "Problem:\n{prompt}\n\nOriginal code:\n```python\n{code}\n```\n\nDirection tried:\n{direction}\n\nRevised code:\n```python\n{refined_code}\n```\n\nValidation score went from {score_before} to {score_after}.\n\nEarlier insights:\n{shared_info}\n\nSummarize the outcome of this direction.",
        ),
        Role::ScoutInsight => (
            "You distill general, reusable insights from code revision attempts.",
            "Problem:\n{prompt}\n\nA revision of\n```python\n{code}\n```\nusing the direction \"{direction}\" produced\n```python\n{refined_code}\n```\nand moved the validation score from {score_before} to {score_after}.\n\nEarlier insights:\n{shared_info}\n\nState one general insight that should guide future directions.",
        ),
    };
    Template {
        system: system.to_string(),
        user: user.to_string(),
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            templates: Role::ALL.into_iter().map(|r| (r, default_template(r))).collect(),
        }
    }
}

impl PromptTemplates {
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut out = Self::default();
        for role in Role::ALL {
            let user = dir.join(format!("{}.txt", role.as_str()));
            let system = dir.join(format!("{}.system.txt", role.as_str()));
            let entry = out.templates.get_mut(&role).expect("all roles present");
            if user.exists() {
                entry.user = std::fs::read_to_string(user)?;
            }
            if system.exists() {
                entry.system = std::fs::read_to_string(system)?;
            }
        }
        Ok(out)
    }

    pub fn get(&self, role: Role) -> &Template {
        &self.templates[&role]
    }

    pub fn set(&mut self, role: Role, template: Template) {
        self.templates.insert(role, template);
    }

    /// Fills placeholders and returns the `[system, user]` message pair.
    /// Unknown placeholders are left verbatim.
    pub fn render(&self, role: Role, vars: &[(&str, &str)]) -> Vec<Message> {
        let t = self.get(role);
        vec![Message::system(fill(&t.system, vars)), Message::user(fill(&t.user, vars))]
    }
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let replaced = tail.find('}').and_then(|close| {
            let name = &tail[..close];
            vars.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        });
        match replaced {
            Some((close, value)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}
