//! Stable evaluation: solvable-task filtration by multi-judge vote, the
//! solvable pass/win rate engines, and the legacy pass/win state machine
//! they replace.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, LazyLock};

use async_trait::async_trait;
use futures::future::join_all;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::ChatModel;
use crate::model::{ApiIdentifier, Judgment, Solvability, SolvabilityVerdict};
use crate::prompts::{render, PromptSet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("judging unavailable: {0}")]
    JudgingUnavailable(String),
    #[error("invalid evaluation input: {0}")]
    InvalidInput(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskGroup {
    #[serde(rename = "I1-Instruction", alias = "G1_instruction")]
    I1Instruction,
    #[serde(rename = "I1-Category", alias = "G1_category")]
    I1Category,
    #[serde(rename = "I1-Tool", alias = "G1_tool")]
    I1Tool,
    #[serde(rename = "I2-Instruction", alias = "G2_instruction")]
    I2Instruction,
    #[serde(rename = "I2-Category", alias = "G2_category")]
    I2Category,
    #[serde(rename = "I3-Instruction", alias = "G3_instruction")]
    I3Instruction,
}

impl TaskGroup {
    pub const ALL: [TaskGroup; 6] = [
        TaskGroup::I1Instruction,
        TaskGroup::I1Category,
        TaskGroup::I1Tool,
        TaskGroup::I2Instruction,
        TaskGroup::I2Category,
        TaskGroup::I3Instruction,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TaskGroup::I1Instruction => "I1-Instruction",
            TaskGroup::I1Category => "I1-Category",
            TaskGroup::I1Tool => "I1-Tool",
            TaskGroup::I2Instruction => "I2-Instruction",
            TaskGroup::I2Category => "I2-Category",
            TaskGroup::I3Instruction => "I3-Instruction",
        }
    }

    fn toolbench_label(self) -> &'static str {
        match self {
            TaskGroup::I1Instruction => "G1_instruction",
            TaskGroup::I1Category => "G1_category",
            TaskGroup::I1Tool => "G1_tool",
            TaskGroup::I2Instruction => "G2_instruction",
            TaskGroup::I2Category => "G2_category",
            TaskGroup::I3Instruction => "G3_instruction",
        }
    }
}

impl fmt::Display for TaskGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TaskGroup {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskGroup::ALL
            .into_iter()
            .find(|g| g.label().eq_ignore_ascii_case(s) || g.toolbench_label().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::InvalidInput(format!("unknown task group `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub query: String,
    pub available_tools: Vec<ApiIdentifier>,
    pub group: TaskGroup,
}

impl Task {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.query.trim().is_empty() {
            return Err(EvalError::InvalidInput(format!("task {} has an empty query", self.task_id)));
        }
        Ok(())
    }

    /// JSON rendering used inside judge prompts.
    pub fn prompt_json(&self) -> String {
        serde_json::json!({
            "query": self.query,
            "available_tools": self.available_tools,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub task_id: String,
    pub method_label: String,
    pub final_answer: String,
    pub solution_path: String,
}

#[derive(Debug, Deserialize)]
struct ToolBenchQuery {
    query_id: serde_json::Value,
    query: String,
    #[serde(default)]
    api_list: Vec<ToolBenchApi>,
}

#[derive(Debug, Deserialize)]
struct ToolBenchApi {
    category_name: String,
    tool_name: String,
    api_name: String,
}

/// Reads a task file: either an array of [`Task`] objects, or a ToolBench
/// query file (`[{query_id, query, api_list: [{category_name, tool_name,
/// api_name}]}]`) whose group is taken from `group` or the file stem.
pub fn load_tasks(path: &Path, group: Option<TaskGroup>) -> Result<Vec<Task>, EvalError> {
    let io = |reason: String| EvalError::Io {
        path: path.display().to_string(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
    if let Ok(tasks) = serde_json::from_str::<Vec<Task>>(&text) {
        for t in &tasks {
            t.validate()?;
        }
        return Ok(tasks);
    }
    let raw: Vec<ToolBenchQuery> = serde_json::from_str(&text).map_err(|e| io(e.to_string()))?;
    let group = match group {
        Some(g) => g,
        None => path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| io("cannot infer task group from file name".into()))?
            .parse()?,
    };
    raw.into_iter()
        .map(|q| {
            let task_id = match q.query_id {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            let available_tools = q
                .api_list
                .into_iter()
                .map(|a| ApiIdentifier::new(a.category_name, a.tool_name, a.api_name))
                .collect::<Result<_, _>>()
                .map_err(|e| EvalError::InvalidInput(e.to_string()))?;
            let task = Task {
                task_id,
                query: q.query,
                available_tools,
                group,
            };
            task.validate()?;
            Ok(task)
        })
        .collect()
}

/// Reads every `*.json` [`AnswerRecord`] in a directory, keyed by task id.
pub fn load_answers(dir: &Path) -> Result<BTreeMap<String, AnswerRecord>, EvalError> {
    let io = |p: &Path, reason: String| EvalError::Io {
        path: p.display().to_string(),
        reason,
    };
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| io(dir, e.to_string()))?;
    let mut files: Vec<_> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| io(&f, e.to_string()))?;
        let rec: AnswerRecord = serde_json::from_str(&text).map_err(|e| io(&f, e.to_string()))?;
        out.insert(rec.task_id.clone(), rec);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reply parsing

static SOLVABILITY_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(unsolvable|solvable|unsure)\b").unwrap());
static ANSWER_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(unsolved|solved|unsure)\b").unwrap());
static CHOICE_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(a|b|candidate|reference)\b").unwrap());

pub fn parse_solvability(reply: &str) -> Option<SolvabilityVerdict> {
    SOLVABILITY_WORD
        .find_iter(reply)
        .find_map(|m| match m.as_str().to_ascii_lowercase().as_str() {
            "solvable" => Some(SolvabilityVerdict::Solvable),
            "unsolvable" => Some(SolvabilityVerdict::Unsolvable),
            _ => None,
        })
}

pub fn parse_judgment(reply: &str) -> Option<Judgment> {
    ANSWER_WORD
        .find(reply)
        .map(|m| match m.as_str().to_ascii_lowercase().as_str() {
            "solved" => Judgment::Solved,
            "unsolved" => Judgment::Unsolved,
            _ => Judgment::Unsure,
        })
}

/// Three-way task state used by the legacy pass rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskState {
    Solvable,
    Unsolvable,
    Unsure,
}

pub fn parse_task_state(reply: &str) -> Option<TaskState> {
    SOLVABILITY_WORD
        .find(reply)
        .map(|m| match m.as_str().to_ascii_lowercase().as_str() {
            "solvable" => TaskState::Solvable,
            "unsolvable" => TaskState::Unsolvable,
            _ => TaskState::Unsure,
        })
}

/// `A`/`candidate` → Win, `B`/`reference` → Lose.
pub fn parse_choice(reply: &str) -> Option<WinLoss> {
    CHOICE_WORD
        .find(reply)
        .map(|m| match m.as_str().to_ascii_lowercase().as_str() {
            "a" | "candidate" => WinLoss::Win,
            _ => WinLoss::Lose,
        })
}

/// Asks once, and once more if the reply does not parse.
async fn ask_twice<T>(
    model: &ChatModel,
    system: &str,
    user: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Option<T>, EvalError> {
    for _ in 0..2 {
        let reply = model
            .complete(system, user)
            .await
            .map_err(|e| EvalError::JudgingUnavailable(format!("{}: {e}", model.label)))?;
        if let Some(v) = parse(&reply) {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Solvability

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteThreshold {
    /// At least ceil(n/2) judges.
    #[default]
    Majority,
    /// Every judge.
    Unanimous,
    AtLeast(usize),
}

impl VoteThreshold {
    pub fn required(self, judges: usize) -> usize {
        match self {
            VoteThreshold::Majority => judges.div_ceil(2),
            VoteThreshold::Unanimous => judges,
            VoteThreshold::AtLeast(k) => k,
        }
    }

    pub fn decide(self, votes: &[SolvabilityVerdict]) -> SolvabilityVerdict {
        let yes = votes.iter().filter(|v| **v == SolvabilityVerdict::Solvable).count();
        if yes >= self.required(votes.len()) && yes > 0 {
            SolvabilityVerdict::Solvable
        } else {
            SolvabilityVerdict::Unsolvable
        }
    }
}

/// Polls every judge with the task-solvability prompt. Unparseable replies
/// (after one re-ask) and unreachable judges vote Unsolvable; if no judge is
/// reachable the vote fails.
pub async fn judge_solvability(
    task: &Task,
    judges: &[ChatModel],
    threshold: VoteThreshold,
    prompts: &PromptSet,
) -> Result<Solvability, EvalError> {
    if judges.is_empty() {
        return Err(EvalError::InvalidInput("no solvability judges configured".into()));
    }
    let user = render(&prompts.task_solvability, &[("task", &task.prompt_json())]);
    let replies = join_all(
        judges
            .iter()
            .map(|j| ask_twice(j, "", &user, parse_solvability)),
    )
    .await;
    if replies.iter().all(Result::is_err) {
        let reasons: Vec<String> = replies
            .into_iter()
            .filter_map(Result::err)
            .map(|e| e.to_string())
            .collect();
        return Err(EvalError::JudgingUnavailable(reasons.join("; ")));
    }
    let per_judge: Vec<(String, SolvabilityVerdict)> = judges
        .iter()
        .zip(replies)
        .map(|(j, r)| {
            let v = r.ok().flatten().unwrap_or(SolvabilityVerdict::Unsolvable);
            (j.label.clone(), v)
        })
        .collect();
    let votes: Vec<_> = per_judge.iter().map(|(_, v)| *v).collect();
    Ok(Solvability {
        verdict: threshold.decide(&votes),
        per_judge,
    })
}

/// Judges an answer with the answer-status prompt; unparseable after one
/// re-ask yields Unsure.
pub async fn judge_answer(
    task: &Task,
    answer: &AnswerRecord,
    judge: &ChatModel,
    prompts: &PromptSet,
) -> Result<Judgment, EvalError> {
    let user = render(
        &prompts.answer_status,
        &[("query", &task.query), ("answer", &answer.final_answer)],
    );
    Ok(ask_twice(judge, "", &user, parse_judgment)
        .await?
        .unwrap_or(Judgment::Unsure))
}

/// Legacy three-way task state; unparseable → Unsure.
pub async fn judge_task_state(
    task: &Task,
    answer: &AnswerRecord,
    judge: &ChatModel,
    prompts: &PromptSet,
) -> Result<TaskState, EvalError> {
    let tools = serde_json::to_string(&task.available_tools).expect("identifiers serialize");
    let user = render(
        &prompts.task_status_legacy,
        &[
            ("query", &task.query),
            ("tools", &tools),
            ("answer", &answer.final_answer),
        ],
    );
    Ok(ask_twice(judge, "", &user, parse_task_state)
        .await?
        .unwrap_or(TaskState::Unsure))
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    SoPR,
    SoWR,
    LegacyPR,
    LegacyWR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WinLoss {
    Win,
    Lose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PassOutcome {
    Pass,
    Fail,
}

/// One per-task, per-repeat entry of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Solved,
    Unsolved,
    Unsure,
    Win,
    Lose,
    Pass,
    Fail,
}

impl From<Judgment> for Outcome {
    fn from(j: Judgment) -> Self {
        match j {
            Judgment::Solved => Outcome::Solved,
            Judgment::Unsolved => Outcome::Unsolved,
            Judgment::Unsure => Outcome::Unsure,
        }
    }
}

impl From<WinLoss> for Outcome {
    fn from(w: WinLoss) -> Self {
        match w {
            WinLoss::Win => Outcome::Win,
            WinLoss::Lose => Outcome::Lose,
        }
    }
}

impl From<PassOutcome> for Outcome {
    fn from(p: PassOutcome) -> Self {
        match p {
            PassOutcome::Pass => Outcome::Pass,
            PassOutcome::Fail => Outcome::Fail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    /// Percentage in [0, 100].
    pub mean: f64,
    /// Standard error of the per-repeat scores, in percentage points.
    pub stderr: f64,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub repeats: usize,
    pub per_group: BTreeMap<TaskGroup, GroupScore>,
    /// Unweighted mean over groups.
    pub average: GroupScore,
    pub per_task_verdicts: BTreeMap<String, Vec<Outcome>>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:?} over {} repeat(s)\n", self.metric, self.repeats);
        out.push_str(&format!("{:<16} {:>6} {:>8} {:>8}\n", "group", "tasks", "mean", "stderr"));
        for (g, s) in &self.per_group {
            out.push_str(&format!(
                "{:<16} {:>6} {:>8.1} {:>8.1}\n",
                g.label(),
                s.tasks,
                s.mean,
                s.stderr
            ));
        }
        out.push_str(&format!(
            "{:<16} {:>6} {:>8.1} {:>8.1}\n",
            "Average", self.average.tasks, self.average.mean, self.average.stderr
        ));
        out
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Builds a report from per-task, per-repeat points where each point is an
/// integer number of half-units (0, 1 or 2). Group means are computed with a
/// single division over the pooled sum so they are exact for any repeat count.
fn build_report(
    metric: Metric,
    repeats: usize,
    half_points: &BTreeMap<String, Vec<u64>>,
    groups: &BTreeMap<String, TaskGroup>,
    per_task_verdicts: BTreeMap<String, Vec<Outcome>>,
) -> Result<MetricReport, EvalError> {
    let mut by_group: BTreeMap<TaskGroup, Vec<&Vec<u64>>> = BTreeMap::new();
    for (task, pts) in half_points {
        let g = groups
            .get(task)
            .ok_or_else(|| EvalError::InvalidInput(format!("task {task} has no group")))?;
        by_group.entry(*g).or_default().push(pts);
    }
    let mut per_group = BTreeMap::new();
    let mut per_repeat_group_scores: Vec<Vec<f64>> = vec![Vec::new(); repeats];
    for (g, rows) in &by_group {
        let n = rows.len();
        let total: u64 = rows.iter().flat_map(|r| r.iter()).sum();
        let mean = 50.0 * total as f64 / (n * repeats) as f64;
        let per_repeat: Vec<f64> = (0..repeats)
            .map(|r| 50.0 * rows.iter().map(|row| row[r]).sum::<u64>() as f64 / n as f64)
            .collect();
        for (r, v) in per_repeat.iter().enumerate() {
            per_repeat_group_scores[r].push(*v);
        }
        let (_, stderr) = mean_stderr(&per_repeat);
        per_group.insert(*g, GroupScore { mean, stderr, tasks: n });
    }
    let averages: Vec<f64> = per_repeat_group_scores
        .iter()
        .map(|scores| mean_stderr(scores).0)
        .collect();
    let (_, avg_stderr) = mean_stderr(&averages);
    let avg_mean = mean_stderr(&per_group.values().map(|s| s.mean).collect::<Vec<_>>()).0;
    Ok(MetricReport {
        metric,
        repeats,
        average: GroupScore {
            mean: avg_mean,
            stderr: avg_stderr,
            tasks: half_points.len(),
        },
        per_group,
        per_task_verdicts,
    })
}

fn repeat_count<T>(lists: &BTreeMap<String, Vec<T>>) -> Result<usize, EvalError> {
    let mut counts = lists.values().map(Vec::len);
    let Some(first) = counts.next() else {
        return Err(EvalError::InvalidInput("no tasks to score".into()));
    };
    if first == 0 {
        return Err(EvalError::InvalidInput("empty verdict list".into()));
    }
    if counts.any(|c| c != first) {
        return Err(EvalError::InvalidInput("unequal repeat counts".into()));
    }
    Ok(first)
}

fn half_units(j: Judgment) -> u64 {
    match j {
        Judgment::Solved => 2,
        Judgment::Unsure => 1,
        Judgment::Unsolved => 0,
    }
}

/// Solvable pass rate: Solved = 1, Unsure = 0.5, Unsolved = 0, averaged per
/// group and scaled to a percentage.
pub fn sopr(
    verdicts: &BTreeMap<String, Vec<Judgment>>,
    groups: &BTreeMap<String, TaskGroup>,
) -> Result<MetricReport, EvalError> {
    let repeats = repeat_count(verdicts)?;
    let points = verdicts
        .iter()
        .map(|(t, v)| (t.clone(), v.iter().copied().map(half_units).collect()))
        .collect();
    let per_task = verdicts
        .iter()
        .map(|(t, v)| (t.clone(), v.iter().copied().map(Outcome::from).collect()))
        .collect();
    build_report(Metric::SoPR, repeats, &points, groups, per_task)
}

/// Decides a comparison when the verdicts alone suffice.
pub fn sowr_rule(candidate: Judgment, reference: Judgment) -> Option<WinLoss> {
    match (candidate, reference) {
        (Judgment::Solved, Judgment::Unsolved) => Some(WinLoss::Win),
        (Judgment::Unsolved, Judgment::Solved) => Some(WinLoss::Lose),
        _ => None,
    }
}

/// Most frequent outcome; a tie is not a win.
pub fn most_frequent(outcomes: &[WinLoss]) -> WinLoss {
    let wins = outcomes.iter().filter(|o| **o == WinLoss::Win).count();
    if wins * 2 > outcomes.len() {
        WinLoss::Win
    } else {
        WinLoss::Lose
    }
}

/// Head-to-head judge for answers the rules cannot separate.
#[async_trait]
pub trait Comparator: Send + Sync {
    async fn compare(
        &self,
        task: &Task,
        candidate: &AnswerRecord,
        reference: &AnswerRecord,
    ) -> Result<WinLoss, EvalError>;
}

/// LLM comparator using the answer-comparison prompt. Unparseable after one
/// re-ask counts as a loss.
pub struct LlmComparator {
    pub model: ChatModel,
    pub prompts: Arc<PromptSet>,
}

#[async_trait]
impl Comparator for LlmComparator {
    async fn compare(
        &self,
        task: &Task,
        candidate: &AnswerRecord,
        reference: &AnswerRecord,
    ) -> Result<WinLoss, EvalError> {
        let user = render(
            &self.prompts.answer_comparison,
            &[
                ("query", &task.query),
                ("candidate_answer", &candidate.final_answer),
                ("candidate_path", &candidate.solution_path),
                ("reference_answer", &reference.final_answer),
                ("reference_path", &reference.solution_path),
            ],
        );
        Ok(ask_twice(&self.model, "", &user, parse_choice)
            .await?
            .unwrap_or(WinLoss::Lose))
    }
}

/// One task's inputs to a win-rate comparison.
#[derive(Debug, Clone)]
pub struct Pairing {
    pub task: Task,
    pub candidate: AnswerRecord,
    pub reference: AnswerRecord,
    pub candidate_verdicts: Vec<Judgment>,
    pub reference_verdicts: Vec<Judgment>,
}

fn pairing_repeats(pairs: &[Pairing]) -> Result<usize, EvalError> {
    let lists: BTreeMap<String, Vec<()>> = pairs
        .iter()
        .flat_map(|p| {
            [
                (format!("{}#c", p.task.task_id), vec![(); p.candidate_verdicts.len()]),
                (format!("{}#r", p.task.task_id), vec![(); p.reference_verdicts.len()]),
            ]
        })
        .collect();
    repeat_count(&lists)
}

/// Solvable win rate: per repeat the rule decides where it can and the
/// comparator otherwise; each task takes its most frequent outcome.
pub async fn sowr(pairs: &[Pairing], comparator: &dyn Comparator) -> Result<MetricReport, EvalError> {
    let repeats = pairing_repeats(pairs)?;
    let mut per_task = BTreeMap::new();
    let mut points = BTreeMap::new();
    let mut groups = BTreeMap::new();
    for p in pairs {
        let mut outcomes = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let o = match sowr_rule(p.candidate_verdicts[r], p.reference_verdicts[r]) {
                Some(o) => o,
                None => comparator.compare(&p.task, &p.candidate, &p.reference).await?,
            };
            outcomes.push(o);
        }
        let final_outcome = most_frequent(&outcomes);
        // one point per task: 2 half-units for a win, repeated so the
        // pooled division yields wins / tasks
        let pt = if final_outcome == WinLoss::Win { 2 } else { 0 };
        points.insert(p.task.task_id.clone(), vec![pt; repeats]);
        per_task.insert(
            p.task.task_id.clone(),
            outcomes.into_iter().map(Outcome::from).collect::<Vec<_>>(),
        );
        groups.insert(p.task.task_id.clone(), p.task.group);
    }
    build_report(Metric::SoWR, repeats, &points, &groups, per_task)
}

/// Legacy pass decision. The coin is only drawn when the outcome is random.
pub fn legacy_pass(task_state: TaskState, answer: Judgment, rng: &mut impl Rng) -> PassOutcome {
    let coin = |rng: &mut dyn rand::RngCore| {
        if rng.random_bool(0.5) {
            PassOutcome::Pass
        } else {
            PassOutcome::Fail
        }
    };
    match (task_state, answer) {
        (TaskState::Unsolvable, _) => PassOutcome::Pass,
        (_, Judgment::Solved) => PassOutcome::Pass,
        (TaskState::Solvable, Judgment::Unsolved) => PassOutcome::Fail,
        (TaskState::Solvable, Judgment::Unsure) => coin(rng),
        (TaskState::Unsure, _) => coin(rng),
    }
}

pub fn legacy_win_rule(candidate: PassOutcome, reference: PassOutcome) -> Option<WinLoss> {
    match (candidate, reference) {
        (PassOutcome::Pass, PassOutcome::Fail) => Some(WinLoss::Win),
        (PassOutcome::Fail, PassOutcome::Pass) => Some(WinLoss::Lose),
        _ => None,
    }
}

pub async fn legacy_win(
    candidate: PassOutcome,
    reference: PassOutcome,
    task: &Task,
    candidate_answer: &AnswerRecord,
    reference_answer: &AnswerRecord,
    comparator: &dyn Comparator,
) -> Result<WinLoss, EvalError> {
    match legacy_win_rule(candidate, reference) {
        Some(o) => Ok(o),
        None => comparator.compare(task, candidate_answer, reference_answer).await,
    }
}

/// Legacy pass rate over `(task state, answer verdict)` per task per repeat.
/// Tasks are visited in id order and repeats in order, drawing coins from a
/// single generator seeded with `seed`.
pub fn legacy_pass_report(
    entries: &BTreeMap<String, Vec<(TaskState, Judgment)>>,
    groups: &BTreeMap<String, TaskGroup>,
    seed: u64,
) -> Result<MetricReport, EvalError> {
    let repeats = repeat_count(entries)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = BTreeMap::new();
    let mut per_task = BTreeMap::new();
    for (task, rows) in entries {
        let passes: Vec<PassOutcome> = rows
            .iter()
            .map(|(s, a)| legacy_pass(*s, *a, &mut rng))
            .collect();
        points.insert(
            task.clone(),
            passes.iter().map(|p| if *p == PassOutcome::Pass { 2 } else { 0 }).collect(),
        );
        per_task.insert(task.clone(), passes.into_iter().map(Outcome::from).collect());
    }
    build_report(Metric::LegacyPR, repeats, &points, groups, per_task)
}

/// Legacy win rate: per repeat, pass-vs-fail decides, the comparator breaks
/// everything else; scores are averaged over repeats.
pub async fn legacy_win_report(
    pairs: &[(Pairing, Vec<(TaskState, TaskState)>)],
    seed: u64,
    comparator: &dyn Comparator,
) -> Result<MetricReport, EvalError> {
    let just_pairs: Vec<Pairing> = pairs.iter().map(|(p, _)| p.clone()).collect();
    let repeats = pairing_repeats(&just_pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = BTreeMap::new();
    let mut per_task = BTreeMap::new();
    let mut groups = BTreeMap::new();
    for (p, states) in pairs {
        if states.len() != repeats {
            return Err(EvalError::InvalidInput(format!(
                "task {} has {} task states for {} repeats",
                p.task.task_id,
                states.len(),
                repeats
            )));
        }
        let mut outcomes = Vec::with_capacity(repeats);
        for ((&(cs, rs), &cj), &rj) in states.iter().zip(&p.candidate_verdicts).zip(&p.reference_verdicts) {
            let c = legacy_pass(cs, cj, &mut rng);
            let rf = legacy_pass(rs, rj, &mut rng);
            outcomes.push(legacy_win(c, rf, &p.task, &p.candidate, &p.reference, comparator).await?);
        }
        points.insert(
            p.task.task_id.clone(),
            outcomes.iter().map(|o| if *o == WinLoss::Win { 2 } else { 0 }).collect(),
        );
        per_task.insert(p.task.task_id.clone(), outcomes.into_iter().map(Outcome::from).collect());
        groups.insert(p.task.task_id.clone(), p.task.group);
    }
    build_report(Metric::LegacyWR, repeats, &points, &groups, per_task)
}
