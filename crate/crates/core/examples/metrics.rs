//! Computes the pass rate and win rate over a small verdict table, then the
//! legacy coin-flip variant for comparison.

use std::collections::BTreeMap;

use async_trait::async_trait;
use toolgate::evaluation::{
    legacy_pass_report, sopr, sowr, AnswerRecord, Comparator, EvalError, Pairing, Task, TaskGroup, TaskState,
    WinLoss,
};
use toolgate::model::Judgment::{self, Solved, Unsolved, Unsure};

/// Stand-in for the LLM comparator: prefers the longer answer.
struct LongerWins;

#[async_trait]
impl Comparator for LongerWins {
    async fn compare(&self, _: &Task, c: &AnswerRecord, r: &AnswerRecord) -> Result<WinLoss, EvalError> {
        Ok(if c.final_answer.len() > r.final_answer.len() { WinLoss::Win } else { WinLoss::Lose })
    }
}

fn answer(task: &str, method: &str, text: &str) -> AnswerRecord {
    AnswerRecord {
        task_id: task.into(),
        method_label: method.into(),
        final_answer: text.into(),
        solution_path: String::new(),
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows: [(&str, TaskGroup, [Judgment; 3], [Judgment; 3]); 4] = [
        ("t1", TaskGroup::I1Instruction, [Solved, Solved, Unsure], [Unsolved, Unsolved, Solved]),
        ("t2", TaskGroup::I1Instruction, [Unsure, Unsure, Unsure], [Unsure, Unsure, Unsure]),
        ("t3", TaskGroup::I2Category, [Unsolved, Solved, Unsolved], [Solved, Solved, Solved]),
        ("t4", TaskGroup::I2Category, [Solved, Solved, Solved], [Solved, Unsolved, Solved]),
    ];
    let groups: BTreeMap<String, TaskGroup> = rows.iter().map(|r| (r.0.to_string(), r.1)).collect();

    let table = rows.iter().map(|r| (r.0.to_string(), r.2.to_vec())).collect();
    println!("{}", sopr(&table, &groups)?.render_table());

    let pairs: Vec<Pairing> = rows
        .iter()
        .map(|r| Pairing {
            task: Task {
                task_id: r.0.into(),
                query: format!("query {}", r.0),
                available_tools: vec![],
                group: r.1,
            },
            candidate: answer(r.0, "dfs", "a longer, detailed answer"),
            reference: answer(r.0, "cot", "short answer"),
            candidate_verdicts: r.2.to_vec(),
            reference_verdicts: r.3.to_vec(),
        })
        .collect();
    println!("{}", sowr(&pairs, &LongerWins).await?.render_table());

    let entries = rows
        .iter()
        .map(|r| (r.0.to_string(), r.2.iter().map(|j| (TaskState::Solvable, *j)).collect()))
        .collect();
    println!("{}", legacy_pass_report(&entries, &groups, 7)?.render_table());
    Ok(())
}
