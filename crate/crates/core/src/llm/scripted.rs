//! Deterministic stand-in for a code model.
//!
//! The backend reads the parent class(es) out of the prompt, recognizes the
//! instruction, and applies a matching structural edit drawn from a seeded
//! generator. Output is a PyTorch class carrying an `# arch:` header so the
//! surrogate evaluator can score it without executing anything. The edit
//! distribution widens with the temperature bucket, and a hash-selected
//! slice of outputs is deliberately truncated so the untrainable path gets
//! exercised.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{BackendError, CompletionBackend, SlotKey};
use crate::arch::{render_python, ArchitectureSummary, Layer, INPUT_CHANNELS, INPUT_SIZE, NUM_CLASSES};
use crate::operators::{GenerationRequest, PromptCatalog};

pub const DEFAULT_MALFORMED_FRACTION: f64 = 0.05;

const TEMPERATURE_BUCKET: f64 = 0.05;
const MAX_WIDTH: u64 = 2048;
/// Rough characters-per-token ratio used to enforce `max_tokens`.
const CHARS_PER_TOKEN: usize = 4;

pub struct ScriptedBackend {
    seed: u64,
    malformed_fraction: f64,
    catalog: PromptCatalog,
}

impl ScriptedBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            malformed_fraction: DEFAULT_MALFORMED_FRACTION,
            catalog: PromptCatalog::default(),
        }
    }

    pub fn with_malformed_fraction(mut self, fraction: f64) -> Self {
        self.malformed_fraction = fraction.clamp(0.0, 1.0);
        self
    }

    /// Instructions are matched against this catalog to pick an edit family.
    pub fn with_catalog(mut self, catalog: PromptCatalog) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn temperature_bucket(t: f64) -> u32 {
        (t.clamp(0.0, 1.0) / TEMPERATURE_BUCKET).round() as u32
    }

    fn digest(&self, req: &GenerationRequest, key: SlotKey) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(Self::temperature_bucket(req.temperature).to_le_bytes());
        h.update(key.sample_seed.to_le_bytes());
        h.update(req.prompt_text.as_bytes());
        h.finalize().into()
    }

    /// Whether the output for this request falls in the malformed slice.
    pub fn is_malformed(&self, req: &GenerationRequest, key: SlotKey) -> bool {
        let d = self.digest(req, key);
        let x = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        (x as f64 / u64::MAX as f64) < self.malformed_fraction
    }

    pub fn generate(&self, req: &GenerationRequest, key: SlotKey) -> String {
        let digest = self.digest(req, key);
        let mut rng = ChaCha8Rng::from_seed(digest);
        let temperature = Self::temperature_bucket(req.temperature) as f64 * TEMPERATURE_BUCKET;

        let parsed = parse_prompt(&req.prompt_text);
        let family = match &parsed.instruction {
            Some(text) if parsed.parents.len() >= 2 || text.starts_with("Combine") => Family::Crossover,
            Some(text) => self
                .catalog
                .identify(text)
                .map(Family::from_prompt_id)
                .unwrap_or(Family::Improve),
            None => Family::Fresh,
        };

        let mut edit = Editor {
            rng: &mut rng,
            temperature,
        };
        let blocks = match (family, parsed.parents.as_slice()) {
            (Family::Crossover, [a, b, ..]) => edit.crossover(a, b),
            (Family::Fresh, _) | (_, []) => edit.fresh(),
            (family, [parent, ..]) => edit.mutate(parent.clone(), family),
        };
        let summary = materialize(&blocks);
        let class = render_python(&summary);

        let text = if self.is_malformed(req, key) {
            truncate_before_forward(&class)
        } else {
            let intro = [
                "",
                "Here is the improved network:\n\n",
                "# Modified network\n",
                "Sure.\n\n",
            ]
            .choose(&mut rng)
            .copied()
            .unwrap_or_default();
            let outro = ["", "\nThis should perform better on the task.\n"]
                .choose(&mut rng)
                .copied()
                .unwrap_or_default();
            format!("{intro}```python\n{class}```\n{outro}")
        };
        truncate_to_tokens(text, req.max_tokens as usize)
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, req: &GenerationRequest, key: SlotKey) -> Result<String, BackendError> {
        Ok(self.generate(req, key))
    }
}

fn truncate_before_forward(class: &str) -> String {
    match class.find("    def forward") {
        Some(p) => class[..p].to_string(),
        None => class[..class.len() / 2].to_string(),
    }
}

fn truncate_to_tokens(mut text: String, max_tokens: usize) -> String {
    let limit = max_tokens.saturating_mul(CHARS_PER_TOKEN);
    if text.len() > limit {
        let mut cut = limit;
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        text.truncate(cut);
    }
    text
}

struct ParsedPrompt {
    parents: Vec<Vec<Block>>,
    instruction: Option<String>,
}

fn parse_prompt(prompt: &str) -> ParsedPrompt {
    let mut chunks: Vec<String> = Vec::new();
    let mut instruction = None;
    for line in prompt.lines() {
        let t = line.trim();
        if line.starts_with("class ") {
            chunks.push(String::new());
        }
        if t.starts_with("\"\"\"") && t.ends_with("\"\"\"") && t.len() >= 6 && !line.starts_with(' ') {
            instruction = Some(t[3..t.len() - 3].to_string());
            continue;
        }
        if let Some(c) = chunks.last_mut() {
            c.push_str(line);
            c.push('\n');
        }
    }
    let parents = chunks
        .iter()
        .filter_map(|c| ArchitectureSummary::from_source(c).ok())
        .map(|s| blocks_from_summary(&s))
        .collect();
    ParsedPrompt {
        parents,
        instruction,
    }
}

/// Layer vocabulary the generator edits; channel and feature counts are
/// filled in by [`materialize`].
#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    Conv { out: u64, kernel: u64, stride: u64 },
    /// Same-channel 3x3-style convolution rendered with a skip connection.
    Residual { kernel: u64 },
    Pool,
    GlobalPool,
    Norm,
    Dropout,
    Linear { out: u64 },
    Recurrent { hidden: u64, layers: u64 },
}

impl Block {
    fn is_flat(&self) -> bool {
        matches!(self, Block::Linear { .. } | Block::Recurrent { .. })
    }
}

fn blocks_from_summary(s: &ArchitectureSummary) -> Vec<Block> {
    let head = s
        .layers
        .iter()
        .rposition(|l| l.is_parameterized())
        .filter(|&i| matches!(s.layers[i], Layer::Linear { out_features, .. } if out_features == NUM_CLASSES));
    s.layers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != head)
        .map(|(_, l)| match *l {
            Layer::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                if in_ch == out_ch && stride == 1 && kernel % 2 == 1 && padding == kernel / 2 && kernel > 1 {
                    Block::Residual { kernel }
                } else {
                    Block::Conv {
                        out: out_ch,
                        kernel,
                        stride,
                    }
                }
            }
            Layer::Linear { out_features, .. } => Block::Linear { out: out_features },
            Layer::Recurrent {
                hidden, num_layers, ..
            } => Block::Recurrent {
                hidden,
                layers: num_layers,
            },
            Layer::MaxPool { .. } => Block::Pool,
            Layer::AdaptivePool { .. } => Block::GlobalPool,
            Layer::Norm { .. } => Block::Norm,
            Layer::Dropout => Block::Dropout,
        })
        .collect()
}

/// Resolves channel/feature counts, drops blocks that cannot apply at their
/// position, and appends the classification head.
fn materialize(blocks: &[Block]) -> ArchitectureSummary {
    enum S {
        Spatial(u64, u64),
        Flat(u64),
    }
    let mut shape = S::Spatial(INPUT_CHANNELS, INPUT_SIZE);
    let mut layers = Vec::new();
    for b in blocks {
        match (*b, &shape) {
            (Block::Conv { out, kernel, stride }, S::Spatial(c, h)) => {
                let kernel = kernel.max(1) | 1;
                let stride = stride.clamp(1, 2);
                let padding = kernel / 2;
                let ho = (h + 2 * padding - kernel) / stride + 1;
                let out = out.clamp(1, MAX_WIDTH);
                layers.push(Layer::Conv {
                    in_ch: *c,
                    out_ch: out,
                    kernel,
                    stride,
                    padding,
                });
                shape = S::Spatial(out, ho);
            }
            (Block::Residual { kernel }, S::Spatial(c, h)) => {
                let kernel = kernel.max(3) | 1;
                layers.push(Layer::Conv {
                    in_ch: *c,
                    out_ch: *c,
                    kernel,
                    stride: 1,
                    padding: kernel / 2,
                });
                shape = S::Spatial(*c, *h);
            }
            (Block::Pool, S::Spatial(c, h)) if *h >= 2 => {
                layers.push(Layer::MaxPool { kernel: 2, stride: 2 });
                shape = S::Spatial(*c, h / 2);
            }
            (Block::GlobalPool, S::Spatial(c, h)) if *h > 1 => {
                layers.push(Layer::AdaptivePool { size: 1 });
                shape = S::Spatial(*c, 1);
            }
            (Block::Norm, S::Spatial(c, _)) | (Block::Norm, S::Flat(c)) => {
                if !matches!(layers.last(), Some(Layer::Norm { .. })) {
                    layers.push(Layer::Norm { features: *c });
                }
            }
            (Block::Dropout, _) => {
                if !matches!(layers.last(), Some(Layer::Dropout)) {
                    layers.push(Layer::Dropout);
                }
            }
            (Block::Linear { out }, _) => {
                let n = match shape {
                    S::Spatial(c, h) => c * h * h,
                    S::Flat(n) => n,
                };
                let out = out.clamp(1, MAX_WIDTH);
                layers.push(Layer::Linear {
                    in_features: n,
                    out_features: out,
                });
                shape = S::Flat(out);
            }
            (Block::Recurrent { hidden, layers: depth }, _) => {
                let n = match shape {
                    S::Spatial(c, h) => c * h * h,
                    S::Flat(n) => n,
                };
                let hidden = hidden.clamp(1, MAX_WIDTH);
                layers.push(Layer::Recurrent {
                    in_features: n,
                    hidden,
                    num_layers: depth.clamp(1, 3),
                    gates: 4,
                });
                shape = S::Flat(hidden);
            }
            _ => {}
        }
    }
    let n = match shape {
        S::Spatial(c, h) => c * h * h,
        S::Flat(n) => n,
    };
    layers.push(Layer::Linear {
        in_features: n,
        out_features: NUM_CLASSES,
    });
    ArchitectureSummary::new(layers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    AddLayer,
    DeleteLayer,
    Improve,
    Fresh,
    Shrink,
    Grow,
    AddLinear,
    AddConv,
    AddPool,
    AddResidual,
    AddResiduals,
    AddDropout,
    AddNorm,
    AddRecurrent,
    Crossover,
}

impl Family {
    /// One family per catalog row, in catalog order.
    fn from_prompt_id(id: u8) -> Self {
        match id {
            0 => Family::AddLayer,
            1 => Family::DeleteLayer,
            2 => Family::Improve,
            3 | 4 => Family::Fresh,
            5 => Family::Shrink,
            6 => Family::Grow,
            7 => Family::AddLinear,
            8 => Family::AddConv,
            9 => Family::AddPool,
            10 => Family::AddResidual,
            11 => Family::AddResiduals,
            12 => Family::AddDropout,
            13 => Family::AddNorm,
            14 => Family::AddRecurrent,
            _ => Family::Improve,
        }
    }
}

const EDIT_FAMILIES: [Family; 12] = [
    Family::AddLayer,
    Family::DeleteLayer,
    Family::Shrink,
    Family::Grow,
    Family::AddLinear,
    Family::AddConv,
    Family::AddPool,
    Family::AddResidual,
    Family::AddResiduals,
    Family::AddDropout,
    Family::AddNorm,
    Family::AddRecurrent,
];

struct Editor<'a> {
    rng: &'a mut ChaCha8Rng,
    temperature: f64,
}

impl Editor<'_> {
    /// Exponent range for width changes; hotter samples move further.
    fn spread(&self) -> i32 {
        1 + (3.0 * self.temperature).round() as i32
    }

    fn width_near(&mut self, base: u64, floor: u64) -> u64 {
        let s = self.spread();
        let j = self.rng.random_range(-s..=s);
        let base = base.max(1).next_power_of_two();
        let w = if j >= 0 {
            base.saturating_mul(1 << j)
        } else {
            base >> (-j)
        };
        w.clamp(floor.max(1), MAX_WIDTH)
    }

    fn flat_start(blocks: &[Block]) -> usize {
        blocks.iter().position(Block::is_flat).unwrap_or(blocks.len())
    }

    fn last_width(blocks: &[Block], before: usize, default: u64) -> u64 {
        blocks[..before]
            .iter()
            .rev()
            .find_map(|b| match *b {
                Block::Conv { out, .. } => Some(out),
                Block::Linear { out } => Some(out),
                Block::Recurrent { hidden, .. } => Some(hidden),
                _ => None,
            })
            .unwrap_or(default)
    }

    fn extra_edits(&mut self) -> usize {
        (0..3)
            .filter(|_| self.rng.random::<f64>() < self.temperature / 2.0)
            .count()
    }

    fn mutate(&mut self, mut blocks: Vec<Block>, family: Family) -> Vec<Block> {
        let n = 1 + self.extra_edits();
        for i in 0..n {
            // Extra edits at higher temperature wander off-instruction.
            let f = if i == 0 {
                family
            } else {
                *EDIT_FAMILIES.choose(self.rng).expect("non-empty")
            };
            blocks = match f {
                Family::Fresh => {
                    if self.rng.random::<bool>() {
                        return self.fresh();
                    }
                    self.apply(blocks, Family::Improve)
                }
                f => self.apply(blocks, f),
            };
        }
        blocks
    }

    fn apply(&mut self, mut b: Vec<Block>, family: Family) -> Vec<Block> {
        let flat = Self::flat_start(&b);
        match family {
            Family::Improve | Family::Fresh | Family::Crossover => {
                let f = *EDIT_FAMILIES.choose(self.rng).expect("non-empty");
                return self.apply(b, f);
            }
            Family::AddLayer => {
                let f = if self.rng.random::<bool>() {
                    Family::AddConv
                } else {
                    Family::AddLinear
                };
                return self.apply(b, f);
            }
            Family::DeleteLayer => {
                if !b.is_empty() {
                    let i = self.rng.random_range(0..b.len());
                    b.remove(i);
                }
            }
            Family::Shrink | Family::Grow => {
                let steps = 1 + self.rng.random_range(0..=(2.0 * self.temperature).round() as u32);
                for blk in b.iter_mut() {
                    let scale = |w: u64| {
                        if family == Family::Grow {
                            w.saturating_mul(1 << steps).min(MAX_WIDTH)
                        } else {
                            (w >> steps).max(1)
                        }
                    };
                    match blk {
                        Block::Conv { out, .. } => *out = scale(*out),
                        Block::Linear { out } => *out = scale(*out).max(NUM_CLASSES),
                        Block::Recurrent { hidden, .. } => *hidden = scale(*hidden),
                        _ => {}
                    }
                }
                if b.is_empty() && family == Family::Grow {
                    return self.apply(b, Family::AddConv);
                }
            }
            Family::AddLinear => {
                let pos = self.rng.random_range(flat..=b.len());
                let base = Self::last_width(&b, pos, 128);
                let out = self.width_near(base, 16);
                b.insert(pos, Block::Linear { out });
            }
            Family::AddConv => {
                let pos = self.rng.random_range(0..=flat);
                let base = Self::last_width(&b, pos, 16);
                let out = self.width_near(base, 1);
                let kernel = *[1u64, 3, 3, 5].choose(self.rng).expect("non-empty");
                let stride = if self.rng.random::<f64>() < 0.15 { 2 } else { 1 };
                b.insert(pos, Block::Conv { out, kernel, stride });
            }
            Family::AddPool => {
                let pos = self.rng.random_range(0..=flat);
                b.insert(pos, Block::Pool);
            }
            Family::AddResidual => {
                let pos = self.rng.random_range(0..=flat);
                b.insert(pos, Block::Residual { kernel: 3 });
            }
            Family::AddResiduals => {
                let k = self.rng.random_range(2..=3);
                for _ in 0..k {
                    let pos = self.rng.random_range(0..=Self::flat_start(&b));
                    b.insert(pos, Block::Residual { kernel: 3 });
                }
            }
            Family::AddDropout => {
                let pos = self.rng.random_range(0..=b.len());
                b.insert(pos, Block::Dropout);
            }
            Family::AddNorm => {
                let layers: Vec<usize> = b
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| {
                        matches!(x, Block::Conv { .. } | Block::Residual { .. } | Block::Linear { .. })
                    })
                    .map(|(i, _)| i)
                    .collect();
                let pos = layers.choose(self.rng).map(|i| i + 1).unwrap_or(0);
                b.insert(pos, Block::Norm);
            }
            Family::AddRecurrent => {
                if !b.iter().any(|x| matches!(x, Block::Recurrent { .. })) {
                    let hidden = *[32u64, 64, 128, 256, 512].choose(self.rng).expect("non-empty");
                    let layers = self.rng.random_range(1..=2);
                    b.insert(flat, Block::Recurrent { hidden, layers });
                }
            }
        }
        b
    }

    /// A network written from scratch, sized by temperature.
    fn fresh(&mut self) -> Vec<Block> {
        let convs = 1 + self.rng.random_range(0..=(2.0 + 4.0 * self.temperature).round() as usize);
        let mut width = *[4u64, 8, 16, 32, 64].choose(self.rng).expect("non-empty");
        let mut b = Vec::new();
        for i in 0..convs {
            b.push(Block::Conv {
                out: width,
                kernel: 3,
                stride: 1,
            });
            if i % 2 == 1 {
                b.push(Block::Pool);
                width = (width * 2).min(MAX_WIDTH);
            }
        }
        for _ in 0..self.rng.random_range(0..=2) {
            let out = self.width_near(128, 16);
            b.push(Block::Linear { out });
        }
        b
    }

    /// Keeps most of the first parent and appends most of the second: the
    /// cut in `a` falls in its back half, the cut in `b` in its front half.
    fn crossover(&mut self, a: &[Block], b: &[Block]) -> Vec<Block> {
        let i = self.rng.random_range(a.len() / 2..=a.len());
        let j = self.rng.random_range(0..=b.len() / 2);
        let mut child: Vec<Block> = a[..i].iter().chain(&b[j..]).copied().collect();
        if self.rng.random::<f64>() < self.temperature / 2.0 {
            child = self.apply(child, Family::Improve);
        }
        child
    }
}
