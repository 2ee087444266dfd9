//! Polls three stub judges on whether a task is solvable, under majority
//! and unanimous voting.

use toolgate::evaluation::{judge_solvability, Task, TaskGroup, VoteThreshold};
use toolgate::llm::stub::scripted_bridge;
use toolgate::llm::ChatModel;
use toolgate::model::ApiIdentifier;
use toolgate::prompts::PromptSet;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = Task {
        task_id: "q17".into(),
        query: "What is the weather in Oslo tomorrow?".into(),
        available_tools: vec![ApiIdentifier::new("Weather", "Meteo", "forecast")?],
        group: TaskGroup::I1Instruction,
    };
    let prompts = PromptSet::default();
    for threshold in [VoteThreshold::Majority, VoteThreshold::Unanimous] {
        let judges: Vec<ChatModel> = ["Solvable", "The task is Solvable.", "Unsolvable"]
            .iter()
            .enumerate()
            .map(|(i, reply)| ChatModel::new(scripted_bridge([*reply]), format!("judge-{i}"), 0.0))
            .collect();
        let v = judge_solvability(&task, &judges, threshold, &prompts).await?;
        println!("{threshold:?}: votes {:?} -> {:?}", v.per_judge, v.verdict);
    }
    Ok(())
}
