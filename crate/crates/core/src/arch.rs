//! Layer-level summaries of network definitions.
//!
//! A summary is either read from a machine-readable `# arch:` header line
//! inside the class body, or recovered from the PyTorch source itself by a
//! small structural parser that understands the layer vocabulary generated
//! networks use (`nn.Conv2d`, `nn.Linear`, `nn.LSTM`, pooling, normalization
//! and dropout). The parser walks `forward` so that shared modules and
//! functional pooling are applied in execution order.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Input geometry every network sees: 3 x 32 x 32 images, 10 classes.
pub const INPUT_CHANNELS: u64 = 3;
pub const INPUT_SIZE: u64 = 32;
pub const NUM_CLASSES: u64 = 10;

pub const HEADER_TAG: &str = "# arch:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Conv {
        in_ch: u64,
        out_ch: u64,
        kernel: u64,
        stride: u64,
        padding: u64,
    },
    Linear {
        in_features: u64,
        out_features: u64,
    },
    /// `gates` is 4 for LSTM, 3 for GRU, 1 for a plain RNN cell.
    Recurrent {
        in_features: u64,
        hidden: u64,
        num_layers: u64,
        gates: u64,
    },
    MaxPool {
        kernel: u64,
        stride: u64,
    },
    /// Adaptive average pooling to a fixed output size.
    AdaptivePool {
        size: u64,
    },
    Norm {
        features: u64,
    },
    Dropout,
}

impl Layer {
    pub fn is_parameterized(&self) -> bool {
        matches!(
            self,
            Layer::Conv { .. } | Layer::Linear { .. } | Layer::Recurrent { .. }
        )
    }

    pub fn out_width(&self) -> Option<u64> {
        match *self {
            Layer::Conv { out_ch, .. } => Some(out_ch),
            Layer::Linear { out_features, .. } => Some(out_features),
            Layer::Recurrent { hidden, .. } => Some(hidden),
            _ => None,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Layer::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => write!(f, "conv:{in_ch}:{out_ch}:{kernel}:{stride}:{padding}"),
            Layer::Linear {
                in_features,
                out_features,
            } => write!(f, "linear:{in_features}:{out_features}"),
            Layer::Recurrent {
                in_features,
                hidden,
                num_layers,
                gates,
            } => write!(f, "rnn:{in_features}:{hidden}:{num_layers}:{gates}"),
            Layer::MaxPool { kernel, stride } => write!(f, "maxpool:{kernel}:{stride}"),
            Layer::AdaptivePool { size } => write!(f, "adaptivepool:{size}"),
            Layer::Norm { features } => write!(f, "norm:{features}"),
            Layer::Dropout => write!(f, "dropout"),
        }
    }
}

/// Ordered layer list of one network, in forward-execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSummary {
    pub layers: Vec<Layer>,
}

/// Structural metrics derived from a summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Structure {
    pub depth: u64,
    pub width: u64,
    pub flops: f64,
    /// Sum of `log10(1 + layer_flops)` over parameterized layers.
    pub log_capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArchError {
    #[error("no architecture could be recovered: {0}")]
    Unparseable(String),
    #[error("empty layer list")]
    Empty,
    #[error("shape mismatch at layer {index} ({layer}): {detail}")]
    ShapeMismatch {
        index: usize,
        layer: String,
        detail: String,
    },
    #[error("network produces {0} outputs, expected {NUM_CLASSES}")]
    WrongOutputSize(u64),
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Spatial { c: u64, h: u64, w: u64 },
    Flat(u64),
}

impl Shape {
    fn features(self) -> u64 {
        match self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

fn conv_out(size: u64, kernel: u64, stride: u64, padding: u64) -> Option<u64> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl ArchitectureSummary {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    /// Depth, width and FLOPs at a 3x32x32 input.
    ///
    /// FLOPs are 2 x multiply-accumulates: conv `2*k^2*Cin*Cout*Hout*Wout`,
    /// linear `2*in*out`, recurrent `2*(in+h)*h*gates` per stacked layer for a
    /// single step. Pooling, normalization and dropout cost nothing.
    pub fn analyze(&self) -> Result<Structure, ArchError> {
        if self.layers.is_empty() {
            return Err(ArchError::Empty);
        }
        let mut shape = Shape::Spatial {
            c: INPUT_CHANNELS,
            h: INPUT_SIZE,
            w: INPUT_SIZE,
        };
        let mut depth = 0u64;
        let mut width = 0u64;
        let mut flops = 0.0f64;
        let mut log_capacity = 0.0f64;

        for (index, layer) in self.layers.iter().enumerate() {
            let mismatch = |detail: String| ArchError::ShapeMismatch {
                index,
                layer: layer.to_string(),
                detail,
            };
            let mut cost = 0.0f64;
            shape = match (*layer, shape) {
                (
                    Layer::Conv {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        padding,
                    },
                    Shape::Spatial { c, h, w },
                ) => {
                    if c != in_ch {
                        return Err(mismatch(format!("expects {in_ch} channels, got {c}")));
                    }
                    if out_ch == 0 {
                        return Err(mismatch("zero output channels".into()));
                    }
                    let (ho, wo) = match (
                        conv_out(h, kernel, stride, padding),
                        conv_out(w, kernel, stride, padding),
                    ) {
                        (Some(a), Some(b)) => (a, b),
                        _ => return Err(mismatch(format!("kernel larger than {h}x{w} input"))),
                    };
                    cost = 2.0
                        * (kernel * kernel) as f64
                        * in_ch as f64
                        * out_ch as f64
                        * (ho * wo) as f64;
                    Shape::Spatial {
                        c: out_ch,
                        h: ho,
                        w: wo,
                    }
                }
                (Layer::Conv { .. }, Shape::Flat(_)) => {
                    return Err(mismatch("convolution after flatten".into()))
                }
                (
                    Layer::Linear {
                        in_features,
                        out_features,
                    },
                    s,
                ) => {
                    if s.features() != in_features {
                        return Err(mismatch(format!(
                            "expects {in_features} features, got {}",
                            s.features()
                        )));
                    }
                    if out_features == 0 {
                        return Err(mismatch("zero output features".into()));
                    }
                    cost = 2.0 * in_features as f64 * out_features as f64;
                    Shape::Flat(out_features)
                }
                (
                    Layer::Recurrent {
                        in_features,
                        hidden,
                        num_layers,
                        gates,
                    },
                    s,
                ) => {
                    if s.features() != in_features {
                        return Err(mismatch(format!(
                            "expects {in_features} features, got {}",
                            s.features()
                        )));
                    }
                    if hidden == 0 || num_layers == 0 || gates == 0 {
                        return Err(mismatch("degenerate recurrent layer".into()));
                    }
                    let mut n_in = in_features;
                    for _ in 0..num_layers {
                        cost += 2.0 * (n_in + hidden) as f64 * hidden as f64 * gates as f64;
                        n_in = hidden;
                    }
                    Shape::Flat(hidden)
                }
                (Layer::MaxPool { kernel, stride }, Shape::Spatial { c, h, w }) => {
                    match (conv_out(h, kernel, stride, 0), conv_out(w, kernel, stride, 0)) {
                        (Some(ho), Some(wo)) => Shape::Spatial { c, h: ho, w: wo },
                        _ => return Err(mismatch(format!("pool window larger than {h}x{w}"))),
                    }
                }
                (Layer::AdaptivePool { size }, Shape::Spatial { c, .. }) => {
                    if size == 0 {
                        return Err(mismatch("zero output size".into()));
                    }
                    Shape::Spatial {
                        c,
                        h: size,
                        w: size,
                    }
                }
                (Layer::MaxPool { .. } | Layer::AdaptivePool { .. }, Shape::Flat(_)) => {
                    return Err(mismatch("pooling after flatten".into()))
                }
                (Layer::Norm { features }, s) => {
                    let have = match s {
                        Shape::Spatial { c, .. } => c,
                        Shape::Flat(n) => n,
                    };
                    if have != features {
                        return Err(mismatch(format!("normalizes {features}, got {have}")));
                    }
                    s
                }
                (Layer::Dropout, s) => s,
            };
            if let Some(w) = layer.out_width() {
                depth += 1;
                width = width.max(w);
                flops += cost;
                log_capacity += (1.0 + cost).log10();
            }
        }
        match shape {
            Shape::Flat(n) if n == NUM_CLASSES => {}
            s => return Err(ArchError::WrongOutputSize(s.features())),
        }
        if depth == 0 {
            return Err(ArchError::Empty);
        }
        Ok(Structure {
            depth,
            width,
            flops,
            log_capacity,
        })
    }

    /// `# arch: conv:3:64:3:1:1 maxpool:2:2 linear:16384:10`
    pub fn header_line(&self) -> String {
        let body: Vec<String> = self.layers.iter().map(|l| l.to_string()).collect();
        format!("{HEADER_TAG} {}", body.join(" "))
    }

    /// Reads the summary from a header line anywhere in `source`.
    pub fn from_header(source: &str) -> Option<Result<Self, ArchError>> {
        let line = source.lines().find(|l| l.trim_start().starts_with(HEADER_TAG))?;
        let body = line.trim_start()[HEADER_TAG.len()..].trim();
        Some(parse_header_body(body))
    }

    /// Header if present, otherwise structural parse of the source.
    pub fn from_source(source: &str) -> Result<Self, ArchError> {
        match Self::from_header(source) {
            Some(r) => r,
            None => parse_python(source),
        }
    }
}

fn parse_header_body(body: &str) -> Result<ArchitectureSummary, ArchError> {
    let bad = |tok: &str| ArchError::Unparseable(format!("bad header token `{tok}`"));
    let mut layers = Vec::new();
    for tok in body.split_whitespace() {
        let mut parts = tok.split(':');
        let kind = parts.next().unwrap_or_default();
        let nums: Vec<u64> = parts
            .map(|p| p.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(tok))?;
        let layer = match (kind, nums.as_slice()) {
            ("conv", &[in_ch, out_ch, kernel, stride, padding]) => Layer::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            },
            ("linear", &[in_features, out_features]) => Layer::Linear {
                in_features,
                out_features,
            },
            ("rnn", &[in_features, hidden, num_layers, gates]) => Layer::Recurrent {
                in_features,
                hidden,
                num_layers,
                gates,
            },
            ("maxpool", &[kernel, stride]) => Layer::MaxPool { kernel, stride },
            ("adaptivepool", &[size]) => Layer::AdaptivePool { size },
            ("norm", &[features]) => Layer::Norm { features },
            ("dropout", &[]) => Layer::Dropout,
            _ => return Err(bad(tok)),
        };
        layers.push(layer);
    }
    Ok(ArchitectureSummary { layers })
}

// ---------------------------------------------------------------------------
// PyTorch source parsing

#[derive(Debug, Clone, Copy)]
enum Module {
    Layer(Layer),
    /// Activations, flatten and other shape-preserving modules.
    Passthrough,
}

fn parse_python(source: &str) -> Result<ArchitectureSummary, ArchError> {
    let (init, forward) = split_methods(source)?;
    let mut ints: HashMap<String, i64> = HashMap::new();
    let mut modules: HashMap<String, Module> = HashMap::new();

    for line in logical_lines(&init) {
        let Some(rest) = line.strip_prefix("self.") else {
            continue;
        };
        let Some((name, rhs)) = rest.split_once('=') else {
            continue;
        };
        let name = name.trim();
        if !is_identifier(name) || rhs.starts_with('=') {
            continue;
        }
        let rhs = rhs.trim();
        if let Some(call) = rhs.strip_prefix("nn.") {
            let m = parse_module(call, &ints)
                .map_err(|e| ArchError::Unparseable(format!("self.{name}: {e}")))?;
            modules.insert(name.to_string(), m);
        } else if let Ok(v) = eval_int(rhs, &ints) {
            ints.insert(name.to_string(), v);
        }
    }

    let mut layers = Vec::new();
    for line in logical_lines(&forward) {
        let mut calls = find_calls(&line, &modules)?;
        calls.sort_by_key(|(pos, _)| *pos);
        for (_, m) in calls.into_iter().rev() {
            if let Module::Layer(l) = m {
                layers.push(l);
            }
        }
    }
    if layers.is_empty() {
        return Err(ArchError::Unparseable("forward applies no known layers".into()));
    }
    Ok(ArchitectureSummary { layers })
}

/// Source of `__init__` and `forward` bodies of the first class definition.
fn split_methods(source: &str) -> Result<(String, String), ArchError> {
    let mut init = None;
    let mut forward = None;
    let lines: Vec<&str> = source.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let t = lines[i].trim_start();
        let indent = lines[i].len() - t.len();
        let target = if t.starts_with("def __init__") {
            Some(&mut init)
        } else if t.starts_with("def forward") {
            Some(&mut forward)
        } else {
            None
        };
        if let Some(slot) = target {
            let mut body = String::new();
            let mut j = i + 1;
            while j < lines.len() {
                let l = lines[j];
                let lt = l.trim_start();
                if !lt.is_empty() && l.len() - lt.len() <= indent {
                    break;
                }
                body.push_str(l);
                body.push('\n');
                j += 1;
            }
            if slot.is_none() {
                *slot = Some(body);
            }
            i = j;
            continue;
        }
        i += 1;
    }
    match (init, forward) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(ArchError::Unparseable(
            "missing __init__ or forward method".into(),
        )),
    }
}

/// Joins bracket continuations and strips comments.
fn logical_lines(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth: i32 = 0;
    for raw in body.lines() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() && depth == 0 {
            continue;
        }
        if !cur.is_empty() {
            cur.push(' ');
        }
        cur.push_str(line);
        for ch in line.chars() {
            match ch {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth -= 1,
                _ => {}
            }
        }
        if depth <= 0 {
            out.push(std::mem::take(&mut cur));
            depth = 0;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits `Name(args...)` into the name and top-level arguments.
fn split_call(call: &str) -> Result<(&str, Vec<&str>), String> {
    let open = call.find('(').ok_or("not a call")?;
    let name = call[..open].trim();
    let close = matching_paren(call, open).ok_or("unbalanced parentheses")?;
    Ok((name, split_args(&call[open + 1..close])))
}

fn matching_paren(s: &str, open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, ch) in s.char_indices().skip_while(|(i, _)| *i < open) {
        match ch {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn split_args(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = s[start..].trim();
    if !last.is_empty() {
        out.push(last);
    }
    out
}

struct Args<'a> {
    positional: Vec<&'a str>,
    keyword: HashMap<&'a str, &'a str>,
}

impl<'a> Args<'a> {
    fn new(raw: Vec<&'a str>) -> Self {
        let mut positional = Vec::new();
        let mut keyword = HashMap::new();
        for a in raw {
            match a.split_once('=') {
                Some((k, v)) if is_identifier(k.trim()) && !v.starts_with('=') => {
                    keyword.insert(k.trim(), v.trim());
                }
                _ => positional.push(a),
            }
        }
        Self {
            positional,
            keyword,
        }
    }

    fn get(&self, pos: usize, key: &str) -> Option<&'a str> {
        self.keyword
            .get(key)
            .copied()
            .or_else(|| self.positional.get(pos).copied())
    }

    fn int(&self, pos: usize, key: &str, ints: &HashMap<String, i64>) -> Result<Option<u64>, String> {
        match self.get(pos, key) {
            None => Ok(None),
            Some(expr) => eval_size(expr, ints).map(Some),
        }
    }

    fn required(&self, pos: usize, key: &str, ints: &HashMap<String, i64>) -> Result<u64, String> {
        self.int(pos, key, ints)?
            .ok_or_else(|| format!("missing argument `{key}`"))
    }
}

/// Integer argument; tuples like `(3, 3)` must be square.
fn eval_size(expr: &str, ints: &HashMap<String, i64>) -> Result<u64, String> {
    let e = expr.trim();
    if e.starts_with('(') && e.contains(',') {
        let inner = &e[1..e.len() - 1];
        let parts: Vec<u64> = split_args(inner)
            .into_iter()
            .map(|p| eval_size(p, ints))
            .collect::<Result<_, _>>()?;
        return match parts.as_slice() {
            [a, rest @ ..] if rest.iter().all(|b| b == a) => Ok(*a),
            _ => Err(format!("non-square size `{e}`")),
        };
    }
    let v = eval_int(e, ints)?;
    u64::try_from(v).map_err(|_| format!("negative size `{e}`"))
}

fn parse_module(call: &str, ints: &HashMap<String, i64>) -> Result<Module, String> {
    let (name, raw) = split_call(call)?;
    let a = Args::new(raw);
    let m = match name {
        "Conv2d" => {
            let kernel = a.required(2, "kernel_size", ints)?;
            Module::Layer(Layer::Conv {
                in_ch: a.required(0, "in_channels", ints)?,
                out_ch: a.required(1, "out_channels", ints)?,
                kernel,
                stride: a.int(3, "stride", ints)?.unwrap_or(1),
                padding: a.int(4, "padding", ints)?.unwrap_or(0),
            })
        }
        "Linear" => Module::Layer(Layer::Linear {
            in_features: a.required(0, "in_features", ints)?,
            out_features: a.required(1, "out_features", ints)?,
        }),
        "LSTM" | "GRU" | "RNN" => Module::Layer(Layer::Recurrent {
            in_features: a.required(0, "input_size", ints)?,
            hidden: a.required(1, "hidden_size", ints)?,
            num_layers: a.int(2, "num_layers", ints)?.unwrap_or(1),
            gates: match name {
                "LSTM" => 4,
                "GRU" => 3,
                _ => 1,
            },
        }),
        "MaxPool2d" | "AvgPool2d" => {
            let kernel = a.required(0, "kernel_size", ints)?;
            Module::Layer(Layer::MaxPool {
                kernel,
                stride: a.int(1, "stride", ints)?.unwrap_or(kernel),
            })
        }
        "AdaptiveAvgPool2d" | "AdaptiveMaxPool2d" => Module::Layer(Layer::AdaptivePool {
            size: a.required(0, "output_size", ints)?,
        }),
        "BatchNorm2d" | "BatchNorm1d" => Module::Layer(Layer::Norm {
            features: a.required(0, "num_features", ints)?,
        }),
        "Dropout" | "Dropout2d" => Module::Layer(Layer::Dropout),
        "ReLU" | "LeakyReLU" | "GELU" | "Sigmoid" | "Tanh" | "ELU" | "Flatten" | "Identity"
        | "Softmax" | "LogSoftmax" => Module::Passthrough,
        other => return Err(format!("unsupported module nn.{other}")),
    };
    Ok(m)
}

/// Layer applications on one forward line, with their text positions.
fn find_calls(line: &str, modules: &HashMap<String, Module>) -> Result<Vec<(usize, Module)>, ArchError> {
    let mut out = Vec::new();
    for (pos, _) in line.match_indices("self.") {
        let rest = &line[pos + 5..];
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        let name = &rest[..end];
        if !rest[end..].starts_with('(') {
            continue;
        }
        match modules.get(name) {
            Some(m) => out.push((pos, *m)),
            None => {
                return Err(ArchError::Unparseable(format!(
                    "forward calls undefined module self.{name}"
                )))
            }
        }
    }
    for func in ["max_pool2d", "avg_pool2d", "adaptive_avg_pool2d", "adaptive_max_pool2d"] {
        let pat = format!("F.{func}(");
        for (pos, _) in line.match_indices(&pat) {
            let (_, raw) = split_call(&line[pos + 2..]).map_err(ArchError::Unparseable)?;
            let a = Args::new(raw);
            let no_ints = HashMap::new();
            let layer = if func.starts_with("adaptive") {
                Layer::AdaptivePool {
                    size: a
                        .required(1, "output_size", &no_ints)
                        .map_err(ArchError::Unparseable)?,
                }
            } else {
                let kernel = a
                    .required(1, "kernel_size", &no_ints)
                    .map_err(ArchError::Unparseable)?;
                Layer::MaxPool {
                    kernel,
                    stride: a
                        .int(2, "stride", &no_ints)
                        .map_err(ArchError::Unparseable)?
                        .unwrap_or(kernel),
                }
            };
            out.push((pos, Module::Layer(layer)));
        }
    }
    Ok(out)
}

/// Integer arithmetic over literals and `self.<name>` constants:
/// `+ - * // ( )`.
fn eval_int(expr: &str, ints: &HashMap<String, i64>) -> Result<i64, String> {
    let tokens = tokenize(expr)?;
    let mut p = ExprParser { tokens, pos: 0, ints };
    let v = p.sum()?;
    if p.pos != p.tokens.len() {
        return Err(format!("trailing input in `{expr}`"));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(i64),
    Name(String),
    Op(&'static str),
}

fn tokenize(s: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                i += 1;
            }
            let digits: String = s[start..i].chars().filter(|c| *c != '_').collect();
            out.push(Tok::Num(digits.parse().map_err(|_| format!("bad number in `{s}`"))?));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.') {
                i += 1;
            }
            out.push(Tok::Name(s[start..i].to_string()));
        } else if s[i..].starts_with("//") {
            out.push(Tok::Op("//"));
            i += 2;
        } else {
            let op = match c {
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '(' => "(",
                ')' => ")",
                _ => return Err(format!("unexpected `{c}` in `{s}`")),
            };
            out.push(Tok::Op(op));
            i += 1;
        }
    }
    Ok(out)
}

struct ExprParser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    ints: &'a HashMap<String, i64>,
}

impl ExprParser<'_> {
    fn peek_op(&self) -> Option<&'static str> {
        match self.tokens.get(self.pos) {
            Some(Tok::Op(o)) => Some(o),
            _ => None,
        }
    }

    fn sum(&mut self) -> Result<i64, String> {
        let mut v = self.product()?;
        while let Some(op @ ("+" | "-")) = self.peek_op() {
            self.pos += 1;
            let r = self.product()?;
            v = if op == "+" { v + r } else { v - r };
        }
        Ok(v)
    }

    fn product(&mut self) -> Result<i64, String> {
        let mut v = self.atom()?;
        while let Some(op @ ("*" | "//")) = self.peek_op() {
            self.pos += 1;
            let r = self.atom()?;
            v = if op == "*" {
                v.checked_mul(r).ok_or("overflow")?
            } else {
                if r == 0 {
                    return Err("division by zero".into());
                }
                v.div_euclid(r)
            };
        }
        Ok(v)
    }

    fn atom(&mut self) -> Result<i64, String> {
        let tok = self.tokens.get(self.pos).cloned().ok_or("unexpected end")?;
        self.pos += 1;
        match tok {
            Tok::Num(n) => Ok(n),
            Tok::Op("-") => Ok(-self.atom()?),
            Tok::Op("(") => {
                let v = self.sum()?;
                match self.tokens.get(self.pos) {
                    Some(Tok::Op(")")) => {
                        self.pos += 1;
                        Ok(v)
                    }
                    _ => Err("missing `)`".into()),
                }
            }
            Tok::Name(n) => {
                let key = n.strip_prefix("self.").unwrap_or(&n);
                self.ints
                    .get(key)
                    .copied()
                    .ok_or_else(|| format!("unknown constant `{n}`"))
            }
            Tok::Op(o) => Err(format!("unexpected `{o}`")),
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering

/// Renders a summary as a PyTorch class named `Net`, with the header line as
/// the first line of the class body.
pub fn render_python(summary: &ArchitectureSummary) -> String {
    let mut init = Vec::new();
    let mut forward = Vec::new();
    let mut counters: HashMap<&str, usize> = HashMap::new();
    let mut flat = false;
    let last_param = summary.layers.iter().rposition(|l| l.is_parameterized());

    for (i, layer) in summary.layers.iter().enumerate() {
        let prefix = match layer {
            Layer::Conv { .. } => "conv",
            Layer::Linear { .. } => "fc",
            Layer::Recurrent { .. } => "rnn",
            Layer::MaxPool { .. } => "pool",
            Layer::AdaptivePool { .. } => "gap",
            Layer::Norm { .. } => "bn",
            Layer::Dropout => "dropout",
        };
        let n = counters.entry(prefix).or_insert(0);
        *n += 1;
        let name = format!("{prefix}{n}");
        let act = |call: String| {
            if Some(i) == last_param {
                call
            } else {
                format!("F.relu({call})")
            }
        };
        match *layer {
            Layer::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                init.push(format!(
                    "self.{name} = nn.Conv2d({in_ch}, {out_ch}, kernel_size={kernel}, stride={stride}, padding={padding})"
                ));
                let skip = in_ch == out_ch
                    && stride == 1
                    && kernel > 1
                    && kernel % 2 == 1
                    && padding == kernel / 2
                    && Some(i) != last_param;
                if skip {
                    forward.push(format!("x = F.relu(self.{name}(x)) + x"));
                } else {
                    forward.push(format!("x = {}", act(format!("self.{name}(x)"))));
                }
            }
            Layer::Linear {
                in_features,
                out_features,
            } => {
                if !flat {
                    forward.push("x = torch.flatten(x, 1)".to_string());
                    flat = true;
                }
                init.push(format!("self.{name} = nn.Linear({in_features}, {out_features})"));
                forward.push(format!("x = {}", act(format!("self.{name}(x)"))));
            }
            Layer::Recurrent {
                in_features,
                hidden,
                num_layers,
                gates,
            } => {
                let cell = match gates {
                    4 => "LSTM",
                    3 => "GRU",
                    _ => "RNN",
                };
                init.push(format!(
                    "self.{name} = nn.{cell}(input_size={in_features}, hidden_size={hidden}, num_layers={num_layers}, batch_first=True)"
                ));
                forward.push("x = x.reshape(x.size(0), 1, -1)".to_string());
                forward.push(format!("x, _ = self.{name}(x)"));
                forward.push("x = x[:, -1, :]".to_string());
                flat = true;
            }
            Layer::MaxPool { kernel, stride } => {
                init.push(format!("self.{name} = nn.MaxPool2d({kernel}, {stride})"));
                forward.push(format!("x = self.{name}(x)"));
            }
            Layer::AdaptivePool { size } => {
                init.push(format!("self.{name} = nn.AdaptiveAvgPool2d(({size}, {size}))"));
                forward.push(format!("x = self.{name}(x)"));
            }
            Layer::Norm { features } => {
                let kind = if flat { "BatchNorm1d" } else { "BatchNorm2d" };
                init.push(format!("self.{name} = nn.{kind}({features})"));
                forward.push(format!("x = self.{name}(x)"));
            }
            Layer::Dropout => {
                init.push(format!("self.{name} = nn.Dropout(0.25)"));
                forward.push(format!("x = self.{name}(x)"));
            }
        }
    }

    let mut out = String::new();
    out.push_str("class Net(nn.Module):\n");
    out.push_str(&format!("    {}\n", summary.header_line()));
    out.push_str("    def __init__(self):\n");
    out.push_str("        super().__init__()\n");
    for l in &init {
        out.push_str(&format!("        {l}\n"));
    }
    out.push('\n');
    out.push_str("    def forward(self, x):\n");
    for l in &forward {
        out.push_str(&format!("        {l}\n"));
    }
    out.push_str("        return x\n");
    out
}
