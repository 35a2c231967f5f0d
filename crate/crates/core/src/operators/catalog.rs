use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OperatorError;
use crate::domain::NUM_MUTATION_PROMPTS;

const DEFAULT_MUTATION_PROMPTS: [&str; NUM_MUTATION_PROMPTS] = [
    "Add a layer to improve the above network",
    "Delete a layer to improve the above network",
    "Improve the above network",
    "Network:",
    "Network in pytorch:",
    "Improve the above network by reducing the size drastically",
    "Improve the above network by increasing the size drastically",
    "Add fully connected layer to improve the above network",
    "Add convolutional layer to improve the above network",
    "Add pooling layer to improve the above network",
    "Add residual connection to improve the above network",
    "Add multiple residual connections to improve the above network",
    "Add dropout layer to improve the above network",
    "Add normalization layer to improve the above network",
    "Add recurrent layer to improve the above network",
];

const DEFAULT_CROSSOVER_PROMPT: &str = "Combine the above two neural networks and create a third neural network class that also inherits from nn.Module and performs better than the above two neural networks";

/// Instruction strings appended to prompts, without their triple quotes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptCatalog {
    mutation_prompts: Vec<String>,
    crossover_prompt: String,
}

/// Either `{"mutation_prompts": [...15], "crossover_prompt": "..."}` or a flat
/// array of 16 strings with the crossover instruction last.
#[derive(Deserialize)]
#[serde(untagged)]
enum CatalogFile {
    Object {
        mutation_prompts: Vec<String>,
        crossover_prompt: String,
    },
    Flat(Vec<String>),
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self {
            mutation_prompts: DEFAULT_MUTATION_PROMPTS.iter().map(|s| s.to_string()).collect(),
            crossover_prompt: DEFAULT_CROSSOVER_PROMPT.to_string(),
        }
    }
}

impl PromptCatalog {
    pub fn new(mutation_prompts: Vec<String>, crossover_prompt: String) -> Result<Self, OperatorError> {
        if mutation_prompts.len() != NUM_MUTATION_PROMPTS {
            return Err(OperatorError::Catalog(format!(
                "expected {NUM_MUTATION_PROMPTS} mutation prompts, got {}",
                mutation_prompts.len()
            )));
        }
        if mutation_prompts
            .iter()
            .chain(std::iter::once(&crossover_prompt))
            .any(|p| p.trim().is_empty() || p.contains("\"\"\""))
        {
            return Err(OperatorError::Catalog(
                "prompts must be non-empty and free of triple quotes".into(),
            ));
        }
        Ok(Self {
            mutation_prompts,
            crossover_prompt,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, OperatorError> {
        let file: CatalogFile =
            serde_json::from_str(text).map_err(|e| OperatorError::Catalog(e.to_string()))?;
        match file {
            CatalogFile::Object {
                mutation_prompts,
                crossover_prompt,
            } => Self::new(mutation_prompts, crossover_prompt),
            CatalogFile::Flat(mut all) => {
                let crossover = all.pop().ok_or_else(|| {
                    OperatorError::Catalog("empty prompt array".into())
                })?;
                Self::new(all, crossover)
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self, OperatorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OperatorError::Catalog(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn mutation_prompt(&self, prompt_id: u8) -> Result<&str, OperatorError> {
        self.mutation_prompts
            .get(prompt_id as usize)
            .map(String::as_str)
            .ok_or(OperatorError::NotAMutationPrompt(prompt_id))
    }

    pub fn mutation_prompts(&self) -> &[String] {
        &self.mutation_prompts
    }

    pub fn crossover_prompt(&self) -> &str {
        &self.crossover_prompt
    }

    /// Id of the mutation prompt whose instruction equals `text`.
    pub fn identify(&self, text: &str) -> Option<u8> {
        self.mutation_prompts
            .iter()
            .position(|p| p == text)
            .map(|i| i as u8)
    }
}
