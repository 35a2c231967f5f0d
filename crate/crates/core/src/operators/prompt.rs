//! Prompt assembly and genome extraction.

use super::{OperatorError, PromptCatalog};
use crate::domain::{GenomeId, NetworkGenome, Origin};

pub const IMPORT_PREAMBLE: &str = "import torch\nimport torch.nn as nn\nimport torch.nn.functional as F\n";

/// The starting network: one 1x1 convolution into one dense layer.
pub const SEED_NETWORK_CLASS: &str = "class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 1, 1)
        self.fc1 = nn.Linear(1024, 10)

    def forward(self, x):
        x = F.relu(self.conv1(x))
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        return x";

/// Canonical genome text: preamble, blank line, class definition.
pub fn wrap_class(class_text: &str) -> String {
    format!("{IMPORT_PREAMBLE}\n{}\n", class_text.trim_end())
}

pub fn seed_genome(id: GenomeId) -> NetworkGenome {
    NetworkGenome::new(id, wrap_class(SEED_NETWORK_CLASS), Vec::new(), Origin::Seed)
        .expect("seed genome is valid")
}

/// Genome source with leading import lines removed.
pub fn class_body(source: &str) -> &str {
    let mut offset = 0;
    for line in source.split_inclusive('\n') {
        let t = line.trim();
        if t.is_empty() || t.starts_with("import ") || t.starts_with("from ") {
            offset += line.len();
        } else {
            break;
        }
    }
    source[offset..].trim_end()
}

fn quoted(instruction: &str) -> String {
    format!("\"\"\"{instruction}\"\"\"")
}

/// Preamble, the parent's class, a blank line and the quoted instruction.
pub fn build_mutation_prompt(
    genome: &NetworkGenome,
    prompt_id: u8,
    catalog: &PromptCatalog,
) -> Result<String, OperatorError> {
    let instruction = catalog.mutation_prompt(prompt_id)?;
    Ok(format!(
        "{IMPORT_PREAMBLE}\n{}\n\n{}\n",
        class_body(&genome.source),
        quoted(instruction)
    ))
}

/// Preamble, both parents renamed `Net1`/`Net2`, then the crossover
/// instruction.
pub fn build_crossover_prompt(
    first: &NetworkGenome,
    second: &NetworkGenome,
    catalog: &PromptCatalog,
) -> Result<String, OperatorError> {
    if first.id == second.id {
        return Err(OperatorError::SameParent(first.id));
    }
    let a = rename_class(class_body(&first.source), "Net1")?;
    let b = rename_class(class_body(&second.source), "Net2")?;
    Ok(format!(
        "{IMPORT_PREAMBLE}\n{a}\n\n{b}\n\n{}\n",
        quoted(catalog.crossover_prompt())
    ))
}

fn class_name(text: &str) -> Option<&str> {
    text.lines().find_map(|l| {
        let rest = l.trim_start().strip_prefix("class ")?;
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        (end > 0).then(|| &rest[..end])
    })
}

/// Replaces whole-word occurrences of the class's name.
fn rename_class(text: &str, new_name: &str) -> Result<String, OperatorError> {
    let old = class_name(text).ok_or(OperatorError::NoClassDefinition)?;
    let is_word = |c: char| c.is_ascii_alphanumeric() || c == '_';
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (pos, _) in text.match_indices(old) {
        let before = text[..pos].chars().next_back();
        let after = text[pos + old.len()..].chars().next();
        if before.is_some_and(is_word) || after.is_some_and(is_word) {
            continue;
        }
        out.push_str(&text[last..pos]);
        out.push_str(new_name);
        last = pos + old.len();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Pulls the first complete network class out of a raw completion.
///
/// A class counts as complete when it derives from a `Module`, its brackets
/// and triple quotes balance, and it defines `__init__` and a `forward`
/// that returns. The result is wrapped with the import preamble.
pub fn extract_genome(
    completion: &str,
    id: GenomeId,
    parent_ids: Vec<GenomeId>,
    origin: Origin,
) -> Result<NetworkGenome, OperatorError> {
    let class = find_complete_class(completion).ok_or(OperatorError::ExtractionFailed)?;
    NetworkGenome::new(id, wrap_class(&class), parent_ids, origin)
        .map_err(OperatorError::Domain)
}

fn find_complete_class(text: &str) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let trimmed = line.trim_start();
        if !trimmed.starts_with("class ") {
            continue;
        }
        let indent = line.len() - trimmed.len();
        let mut end = i + 1;
        while end < lines.len() {
            let l = lines[end];
            let t = l.trim_start();
            if !t.is_empty() && l.len() - t.len() <= indent {
                break;
            }
            end += 1;
        }
        while end > i + 1 && lines[end - 1].trim().is_empty() {
            end -= 1;
        }
        let block: Vec<&str> = lines[i..end].to_vec();
        if is_complete(&block) {
            let dedented: Vec<&str> = block
                .iter()
                .map(|l| if l.len() >= indent { &l[indent..] } else { l.trim_start() })
                .collect();
            return Some(dedented.join("\n"));
        }
    }
    None
}

fn is_complete(block: &[&str]) -> bool {
    let header = block[0].trim();
    if !header.ends_with(':') || !header.contains("Module") {
        return false;
    }
    let text = block.join("\n");
    if !text.matches("\"\"\"").count().is_multiple_of(2) {
        return false;
    }
    let mut depth = 0i64;
    for ch in text.chars() {
        match ch {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return false;
    }
    let has_init = block.iter().any(|l| l.trim_start().starts_with("def __init__("));
    let Some(fwd) = block.iter().position(|l| l.trim_start().starts_with("def forward(")) else {
        return false;
    };
    let fwd_indent = block[fwd].len() - block[fwd].trim_start().len();
    let returns = block[fwd + 1..]
        .iter()
        .take_while(|l| {
            let t = l.trim_start();
            t.is_empty() || l.len() - t.len() > fwd_indent
        })
        .any(|l| l.trim_start().starts_with("return"));
    has_init && returns
}
