//! Prompt templates. Defaults are compiled in from `prompts/*.txt`; a
//! directory holding files of the same names overrides them.

use std::fs;
use std::io;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub api_simulation_system: String,
    pub api_call_writing_system: String,
    pub task_solvability: String,
    pub answer_status: String,
    pub task_status_legacy: String,
    pub answer_comparison: String,
    pub agent_system: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            api_simulation_system: include_str!("../prompts/api_simulation_system.txt").into(),
            api_call_writing_system: include_str!("../prompts/api_call_writing_system.txt").into(),
            task_solvability: include_str!("../prompts/task_solvability.txt").into(),
            answer_status: include_str!("../prompts/answer_status.txt").into(),
            task_status_legacy: include_str!("../prompts/task_status_legacy.txt").into(),
            answer_comparison: include_str!("../prompts/answer_comparison.txt").into(),
            agent_system: include_str!("../prompts/agent_system.txt").into(),
        }
    }
}

impl PromptSet {
    /// Defaults, with any `<name>.txt` present in `dir` taking precedence.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let mut set = Self::default();
        for (name, slot) in [
            ("api_simulation_system", &mut set.api_simulation_system),
            ("api_call_writing_system", &mut set.api_call_writing_system),
            ("task_solvability", &mut set.task_solvability),
            ("answer_status", &mut set.answer_status),
            ("task_status_legacy", &mut set.task_status_legacy),
            ("answer_comparison", &mut set.answer_comparison),
            ("agent_system", &mut set.agent_system),
        ] {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = fs::read_to_string(&path)?;
            }
        }
        Ok(set)
    }
}

/// Replaces `{name}` placeholders in a single pass over `template`;
/// substituted text is never re-scanned. Unknown placeholders are left as-is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_single_pass() {
        let t = "Task:{task} {other} {";
        assert_eq!(render(t, &[("task", "{task}")]), "Task:{task} {other} {");
        assert_eq!(render("a{x}b", &[("x", "1")]), "a1b");
    }

    #[test]
    fn simulation_prompt_keeps_envelope_shape() {
        let p = PromptSet::default();
        assert!(p.api_simulation_system.starts_with("Imagine you are an API Server"));
        assert!(p.api_simulation_system.contains("\"error\": \"\""));
        assert!(p.task_solvability.contains("{task}"));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("answer_status.txt"), "custom {query}").unwrap();
        let p = PromptSet::from_dir(dir.path()).unwrap();
        assert_eq!(p.answer_status, "custom {query}");
        assert_eq!(p.task_solvability, PromptSet::default().task_solvability);
    }
}
