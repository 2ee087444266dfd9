//! Minimal chain-of-thought agent: prompt with the query and tool docs, parse
//! one proposed call, route it, append the observation, repeat until the
//! model answers or the step budget runs out.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::debug;

use crate::docs::DocIndex;
use crate::evaluation::{AnswerRecord, Task};
use crate::gateway::{GatewayError, ToolService};
use crate::llm::{BridgeError, ChatModel};
use crate::model::{ApiDocumentation, ApiIdentifier, ApiResponse, CallRequest};
use crate::prompts::{render, PromptSet};
use crate::simulator::extract_json_object;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("agent model unavailable: {0}")]
    Model(#[from] BridgeError),
    #[error("cannot write transcript {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub call: CallRequest,
    pub observation: ApiResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub steps: Vec<Step>,
    pub finished: bool,
    pub final_answer: String,
}

impl Transcript {
    pub fn into_answer(self, task_id: &str, method_label: &str) -> AnswerRecord {
        AnswerRecord {
            task_id: task_id.to_string(),
            method_label: method_label.to_string(),
            final_answer: self.final_answer.clone(),
            solution_path: serde_json::to_string(&self).expect("transcript serialization is infallible"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Action {
    Call(CallRequest),
    Finish(String),
}

fn parse_action(reply: &str) -> Option<Action> {
    let obj: Value = serde_json::from_str(&extract_json_object(reply)?).ok()?;
    let field = |k: &str| obj.get(k).and_then(Value::as_str);
    match field("action")? {
        "finish" => Some(Action::Finish(field("final_answer").unwrap_or("").to_string())),
        "call" => {
            let id = ApiIdentifier::new(field("category")?, field("tool_name")?, field("api_name")?).ok()?;
            let input = match obj.get("tool_input") {
                None | Some(Value::Null) => "{}".to_string(),
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
            };
            Some(Action::Call(CallRequest::new(id, input)))
        }
        _ => None,
    }
}

pub struct ChainAgent {
    model: ChatModel,
    prompts: Arc<PromptSet>,
    step_budget: usize,
}

impl ChainAgent {
    pub fn new(model: ChatModel, step_budget: usize) -> Self {
        Self {
            model,
            prompts: Arc::new(PromptSet::default()),
            step_budget,
        }
    }

    pub fn with_prompts(mut self, prompts: Arc<PromptSet>) -> Self {
        self.prompts = prompts;
        self
    }

    /// Runs one task. The budget counts model turns; an unparseable turn is
    /// fed back as an observation and still consumes budget. Only an
    /// unreachable gateway or model aborts the run.
    pub async fn solve(
        &self,
        task: &Task,
        docs: &[ApiDocumentation],
        service: &dyn ToolService,
    ) -> Result<Transcript, AgentError> {
        let tools: Vec<String> = docs.iter().map(ApiDocumentation::to_json).collect();
        let system = render(&self.prompts.agent_system, &[("tools", &tools.join("\n"))]);
        let mut user = format!("Query: {}\n", task.query);
        let mut transcript = Transcript {
            steps: Vec::new(),
            finished: false,
            final_answer: String::new(),
        };
        for turn in 0..self.step_budget {
            let reply = self.model.complete(&system, &user).await?;
            user.push_str(&format!("Assistant: {}\n", reply.trim()));
            match parse_action(&reply) {
                Some(Action::Finish(answer)) => {
                    transcript.finished = true;
                    transcript.final_answer = answer;
                    break;
                }
                Some(Action::Call(call)) => {
                    let observation = match service.call(&call).await {
                        Ok(r) => r,
                        Err(e @ GatewayError::Unreachable(_)) => return Err(e.into()),
                        Err(e) => ApiResponse::new(e.class(), e.to_string()),
                    };
                    user.push_str(&format!("Observation: {}\n", observation.to_wire()));
                    transcript.steps.push(Step { call, observation });
                }
                None => {
                    debug!(task = %task.task_id, turn, "unparseable agent turn");
                    user.push_str("Observation: reply was not a valid action JSON object\n");
                }
            }
        }
        Ok(transcript)
    }
}

/// One agent run over a task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub method_label: String,
    pub repeats: usize,
    pub output_dir: PathBuf,
    pub workers: usize,
}

/// Writes `contents` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn file_stem_for(task_id: &str) -> String {
    task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Directory holding repeat `r` (0-based): the output dir itself for a
/// single repeat, `run-<r>` below it otherwise.
pub fn repeat_dir(spec: &ExperimentSpec, r: usize) -> PathBuf {
    if spec.repeats <= 1 {
        spec.output_dir.clone()
    } else {
        spec.output_dir.join(format!("run-{r}"))
    }
}

/// Runs every task `spec.repeats` times with a bounded worker pool and writes
/// one [`AnswerRecord`] file per task and repeat.
pub async fn run_experiment(
    spec: &ExperimentSpec,
    tasks: &[Task],
    docs: &DocIndex,
    agent: &ChainAgent,
    service: &dyn ToolService,
) -> Result<Vec<Vec<AnswerRecord>>, AgentError> {
    let mut all = Vec::with_capacity(spec.repeats);
    for r in 0..spec.repeats.max(1) {
        let dir = repeat_dir(spec, r);
        let answers: BTreeMap<usize, AnswerRecord> = stream::iter(tasks.iter().enumerate())
            .map(|(i, task)| {
                let dir = dir.clone();
                async move {
                    let task_docs: Vec<ApiDocumentation> = task
                        .available_tools
                        .iter()
                        .map(|id| {
                            docs.get(id).cloned().unwrap_or_else(|| ApiDocumentation {
                                id: id.clone(),
                                description: String::new(),
                                parameters: Vec::new(),
                                tool_description: String::new(),
                            })
                        })
                        .collect();
                    let transcript = agent.solve(task, &task_docs, service).await?;
                    let record = transcript.into_answer(&task.task_id, &spec.method_label);
                    let path = dir.join(format!("{}.json", file_stem_for(&task.task_id)));
                    let body = serde_json::to_vec_pretty(&record).expect("answer serialization is infallible");
                    write_atomic(&path, &body).map_err(|source| AgentError::Io { path, source })?;
                    Ok::<_, AgentError>((i, record))
                }
            })
            .buffer_unordered(spec.workers.max(1))
            .try_collect()
            .await?;
        all.push(answers.into_values().collect());
    }
    Ok(all)
}
