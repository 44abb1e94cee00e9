//! Layer graphs: ordered top-level units (single layers or blocks), split
//! point enumeration, shape propagation, and the on-disk model formats.
//!
//! # Model text format
//!
//! One directive per line, UTF-8, `#` starts a comment:
//!
//! ```text
//! model <name>
//! input <C> <H> <W>
//! weights <relative-path>          # optional companion weight file
//! layer <id> conv2d <out_channels> <kernel> <stride> <same|valid>
//! layer <id> dense <out_units>
//! layer <id> relu
//! layer <id> maxpool <kernel> <stride>
//! layer <id> globalavgpool
//! layer <id> flatten
//! layer <id> devicetl
//! layer <id> edgetl
//! block <id> begin
//! ...                              # sub-layer lines
//! block end
//! ```
//!
//! Declaration ids number every node line (layers and block headers) in
//! order from 0; they key the weight file. Top-level units are renumbered
//! 0..n-1 after load.
//!
//! # Weight binary format
//!
//! Magic `SLKW`, version u16 little-endian, then per parameterized layer:
//! declaration id u32, element count u64, then the elements as raw
//! little-endian 32-bit reals (weights first, then biases).

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::layers::{forward, Layer, LayerKind, Padding, Weights};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor, TensorError};
use crate::wire;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"SLKW";
pub const WEIGHTS_VERSION: u16 = 1;

/// Builtin synthetic model names accepted by [`make_synthetic_model`].
pub const BUILTIN_MODELS: [&str; 3] = ["tiny-cnn-8", "branchy-12", "deep-20"];

/// Identifies a split plan. `Interior(i)` means the device executes units
/// `0..=i` and the edge executes the rest. The two sentinels cover no-offload
/// and raw-input offload. The derived ordering (FullOffload < Interior(i) <
/// LocalOnly) matches "how many units stay on the device".
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum SplitId {
    FullOffload,
    Interior(usize),
    LocalOnly,
}

impl fmt::Display for SplitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitId::FullOffload => write!(f, "full"),
            SplitId::Interior(i) => write!(f, "{i}"),
            SplitId::LocalOnly => write!(f, "local"),
        }
    }
}

impl std::str::FromStr for SplitId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(SplitId::FullOffload),
            "local" => Ok(SplitId::LocalOnly),
            other => other
                .parse::<usize>()
                .map(SplitId::Interior)
                .map_err(|_| format!("invalid split id {other:?} (expected index, \"local\" or \"full\")")),
        }
    }
}

/// One candidate boundary, annotated for the planner.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct SplitPoint {
    pub id: SplitId,
    /// Both spatial dims of the boundary tensor are even, so the transfer
    /// layer can be inserted here.
    pub tl_eligible: bool,
    /// Shape crossing the boundary (input shape for FullOffload, final
    /// output shape for LocalOnly).
    pub output_shape: Shape,
    /// Wire frame size of the boundary tensor; 0 when nothing is sent.
    pub output_bytes: u64,
}

/// Per-unit shape propagation result.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct UnitShape {
    pub unit: usize,
    pub output: Shape,
    /// Wire frame size of the unit's output.
    pub output_bytes: u64,
}

/// Errors from model parsing, validation, and the weight file.
#[derive(Debug)]
pub enum ModelError {
    Parse { line: usize, reason: String },
    Shape { unit: usize, reason: String },
    MissingWeights { layer_id: u32 },
    UnknownSpec { name: String },
    VersionMismatch { got: u16 },
    Io(std::io::Error),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Parse { line, reason } => write!(f, "parse error at line {line}: {reason}"),
            ModelError::Shape { unit, reason } => write!(f, "shape error at unit {unit}: {reason}"),
            ModelError::MissingWeights { layer_id } => write!(f, "no weights for parameterized layer {layer_id}"),
            ModelError::UnknownSpec { name } => write!(f, "unknown builtin model {name:?}"),
            ModelError::VersionMismatch { got } => write!(f, "unsupported weight file version {got}"),
            ModelError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e)
    }
}

/// An ordered sequence of top-level units with an input shape. Immutable
/// after construction; all methods take `&self`.
#[derive(Clone, PartialEq, Debug)]
pub struct LayerGraph {
    pub name: String,
    pub input_shape: Shape,
    pub units: Vec<Layer>,
}

impl LayerGraph {
    pub fn new(name: impl Into<String>, input_shape: Shape, units: Vec<Layer>) -> Result<Self, ModelError> {
        let g = LayerGraph { name: name.into(), input_shape, units };
        g.validate()?;
        Ok(g)
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    /// Shape propagation over all units plus structural checks (block arity,
    /// weight blob lengths where present).
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut shape = self.input_shape;
        for (i, unit) in self.units.iter().enumerate() {
            let next = unit
                .kind
                .output_shape(shape)
                .map_err(|e| ModelError::Shape { unit: i, reason: e.to_string() })?;
            check_weight_lengths(unit, shape).map_err(|e| ModelError::Shape { unit: i, reason: e.to_string() })?;
            shape = next;
        }
        Ok(())
    }

    /// Output shape of the whole graph.
    pub fn output_shape(&self) -> Result<Shape, ModelError> {
        let shapes = propagate_shapes(self)?;
        Ok(match shapes.last() {
            Some(last) => last.output,
            None => self.input_shape,
        })
    }

    /// Run units `[start, end)` on `input`.
    pub fn forward_range(&self, start: usize, end: usize, input: &Tensor) -> Result<Tensor, TensorError> {
        let mut t = input.clone();
        for unit in &self.units[start..end] {
            t = forward(unit, &t)?;
        }
        Ok(t)
    }

    /// Run the whole graph on `input`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, TensorError> {
        self.forward_range(0, self.units.len(), input)
    }

    /// Split into head/tail sub-graphs at an interior or sentinel boundary,
    /// without inserting any transfer layer.
    pub fn split_at(&self, split: SplitId) -> (LayerGraph, LayerGraph) {
        let cut = match split {
            SplitId::FullOffload => 0,
            SplitId::Interior(i) => i + 1,
            SplitId::LocalOnly => self.units.len(),
        };
        let head = LayerGraph {
            name: self.name.clone(),
            input_shape: self.input_shape,
            units: self.units[..cut].to_vec(),
        };
        let tail_input = if cut == 0 {
            self.input_shape
        } else {
            // validate() guarantees propagation succeeds.
            propagate_shapes(self).expect("validated graph")[cut - 1].output
        };
        let tail = LayerGraph {
            name: self.name.clone(),
            input_shape: tail_input,
            units: self.units[cut..].to_vec(),
        };
        (head, tail)
    }
}

fn check_weight_lengths(unit: &Layer, input: Shape) -> Result<(), TensorError> {
    match &unit.kind {
        LayerKind::Block(subs) => {
            let mut shape = input;
            for sub in subs {
                check_weight_lengths(sub, shape)?;
                shape = sub.kind.output_shape(shape)?;
            }
            Ok(())
        }
        kind => {
            if let (Some((wl, bl)), Some(weights)) = (kind.param_counts(input), unit.weights.as_ref()) {
                if weights.w.len() != wl || weights.b.len() != bl {
                    return Err(TensorError::WeightLength {
                        layer: kind.type_name().into(),
                        expected: wl + bl,
                        got: weights.w.len() + weights.b.len(),
                    });
                }
            }
            Ok(())
        }
    }
}

/// Per-unit output shapes and wire payload sizes.
pub fn propagate_shapes(graph: &LayerGraph) -> Result<Vec<UnitShape>, ModelError> {
    let mut shape = graph.input_shape;
    let mut out = Vec::with_capacity(graph.units.len());
    for (i, unit) in graph.units.iter().enumerate() {
        shape = unit
            .kind
            .output_shape(shape)
            .map_err(|e| ModelError::Shape { unit: i, reason: e.to_string() })?;
        out.push(UnitShape {
            unit: i,
            output: shape,
            output_bytes: wire::tensor_frame_len(graph.name.len(), shape.elements()),
        });
    }
    Ok(out)
}

/// All split candidates in ascending order: FullOffload, each interior
/// boundary, LocalOnly. Block interiors are never candidates.
pub fn enumerate_split_points(graph: &LayerGraph) -> Result<Vec<SplitPoint>, ModelError> {
    let shapes = propagate_shapes(graph)?;
    let n = graph.units.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(SplitPoint {
        id: SplitId::FullOffload,
        tl_eligible: false,
        output_shape: graph.input_shape,
        output_bytes: wire::tensor_frame_len(graph.name.len(), graph.input_shape.elements()),
    });
    for us in shapes.iter().take(n.saturating_sub(1)) {
        let s = us.output;
        out.push(SplitPoint {
            id: SplitId::Interior(us.unit),
            tl_eligible: s.spatial_dims_even() && s.height >= 2 && s.width >= 2,
            output_shape: s,
            output_bytes: us.output_bytes,
        });
    }
    let final_shape = shapes.last().map(|u| u.output).unwrap_or(graph.input_shape);
    out.push(SplitPoint { id: SplitId::LocalOnly, tl_eligible: false, output_shape: final_shape, output_bytes: 0 });
    Ok(out)
}

// ---- text format ----

fn kind_to_line(kind: &LayerKind) -> String {
    match kind {
        LayerKind::Conv2D { out_channels, kernel, stride, padding } => {
            let pad = match padding {
                Padding::Same => "same",
                Padding::Valid => "valid",
            };
            format!("conv2d {out_channels} {kernel} {stride} {pad}")
        }
        LayerKind::Dense { out_units } => format!("dense {out_units}"),
        LayerKind::ReLU => "relu".into(),
        LayerKind::MaxPool { kernel, stride } => format!("maxpool {kernel} {stride}"),
        LayerKind::GlobalAvgPool => "globalavgpool".into(),
        LayerKind::Flatten => "flatten".into(),
        LayerKind::DeviceTL => "devicetl".into(),
        LayerKind::EdgeTL => "edgetl".into(),
        LayerKind::Block(_) => unreachable!("blocks are serialized structurally"),
    }
}

fn parse_kind(line_no: usize, tokens: &[&str]) -> Result<LayerKind, ModelError> {
    let err = |reason: String| ModelError::Parse { line: line_no, reason };
    let int = |tok: &str, what: &str| -> Result<usize, ModelError> {
        tok.parse::<usize>().map_err(|_| err(format!("invalid {what} {tok:?}")))
    };
    match tokens {
        ["conv2d", out, k, s, pad] => {
            let padding = match *pad {
                "same" => Padding::Same,
                "valid" => Padding::Valid,
                other => return Err(err(format!("invalid padding {other:?} (expected same|valid)"))),
            };
            Ok(LayerKind::Conv2D {
                out_channels: int(out, "out_channels")?,
                kernel: int(k, "kernel")?,
                stride: int(s, "stride")?,
                padding,
            })
        }
        ["dense", units] => Ok(LayerKind::Dense { out_units: int(units, "out_units")? }),
        ["relu"] => Ok(LayerKind::ReLU),
        ["maxpool", k, s] => Ok(LayerKind::MaxPool { kernel: int(k, "kernel")?, stride: int(s, "stride")? }),
        ["globalavgpool"] => Ok(LayerKind::GlobalAvgPool),
        ["flatten"] => Ok(LayerKind::Flatten),
        ["devicetl"] => Ok(LayerKind::DeviceTL),
        ["edgetl"] => Ok(LayerKind::EdgeTL),
        other => Err(err(format!("unknown layer kind {:?}", other.join(" ")))),
    }
}

struct ParsedModel {
    name: String,
    input_shape: Shape,
    units: Vec<Layer>,
    /// Declaration id of every parameterized concrete layer, pre-order,
    /// paired with (unit index, sub index or None).
    param_slots: Vec<(u32, usize, Option<usize>)>,
    weights_path: Option<String>,
}

fn parse_model_text(text: &str) -> Result<ParsedModel, ModelError> {
    let mut name: Option<String> = None;
    let mut input_shape: Option<Shape> = None;
    let mut weights_path: Option<String> = None;
    let mut units: Vec<Layer> = Vec::new();
    let mut param_slots: Vec<(u32, usize, Option<usize>)> = Vec::new();
    let mut next_id: u32 = 0;
    let mut in_block: Option<Vec<Layer>> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |reason: String| ModelError::Parse { line: line_no, reason };
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        match tokens[0] {
            "model" => {
                if tokens.len() != 2 {
                    return Err(err("model directive takes one name".into()));
                }
                if name.is_some() {
                    return Err(err("duplicate model directive".into()));
                }
                if tokens[1].len() > 255 {
                    return Err(err("model name exceeds 255 bytes".into()));
                }
                name = Some(tokens[1].to_string());
            }
            "input" => {
                if tokens.len() != 4 {
                    return Err(err("input directive takes C H W".into()));
                }
                let dim = |tok: &str| -> Result<usize, ModelError> {
                    let v = tok.parse::<usize>().map_err(|_| err(format!("invalid dimension {tok:?}")))?;
                    if v == 0 {
                        return Err(err("input dimensions must be positive".into()));
                    }
                    Ok(v)
                };
                input_shape = Some(Shape::new(dim(tokens[1])?, dim(tokens[2])?, dim(tokens[3])?));
            }
            "weights" => {
                if tokens.len() != 2 {
                    return Err(err("weights directive takes one path".into()));
                }
                weights_path = Some(tokens[1].to_string());
            }
            "layer" => {
                if tokens.len() < 3 {
                    return Err(err("layer directive takes an id and a kind".into()));
                }
                let id: u32 = tokens[1].parse().map_err(|_| err(format!("invalid layer id {:?}", tokens[1])))?;
                if id != next_id {
                    return Err(err(format!("layer id {id} out of order, expected {next_id}")));
                }
                next_id += 1;
                let kind = parse_kind(line_no, &tokens[2..])?;
                match &mut in_block {
                    Some(subs) => {
                        if matches!(kind, LayerKind::DeviceTL | LayerKind::EdgeTL) {
                            return Err(err("transfer layers cannot appear inside a block".into()));
                        }
                        if kind.parameterized() {
                            param_slots.push((id, units.len(), Some(subs.len())));
                        }
                        subs.push(Layer::new(kind));
                    }
                    None => {
                        if kind.parameterized() {
                            param_slots.push((id, units.len(), None));
                        }
                        units.push(Layer::new(kind));
                    }
                }
            }
            "block" => match (tokens.get(1), tokens.get(2)) {
                (Some(id_tok), Some(&"begin")) => {
                    if in_block.is_some() {
                        return Err(err("blocks cannot nest".into()));
                    }
                    let id: u32 = id_tok.parse().map_err(|_| err(format!("invalid block id {id_tok:?}")))?;
                    if id != next_id {
                        return Err(err(format!("block id {id} out of order, expected {next_id}")));
                    }
                    next_id += 1;
                    in_block = Some(Vec::new());
                }
                (Some(&"end"), None) => match in_block.take() {
                    Some(subs) => {
                        if subs.len() < 2 {
                            return Err(err("block must contain at least 2 sub-layers".into()));
                        }
                        units.push(Layer::new(LayerKind::Block(subs)));
                    }
                    None => return Err(err("block end without begin".into())),
                },
                _ => return Err(err("expected `block <id> begin` or `block end`".into())),
            },
            other => return Err(err(format!("unknown directive {other:?}"))),
        }
    }

    if in_block.is_some() {
        return Err(ModelError::Parse { line: text.lines().count(), reason: "unterminated block".into() });
    }
    let name = name.ok_or(ModelError::Parse { line: 0, reason: "missing model directive".into() })?;
    let input_shape = input_shape.ok_or(ModelError::Parse { line: 0, reason: "missing input directive".into() })?;
    Ok(ParsedModel { name, input_shape, units, param_slots, weights_path })
}

fn read_weight_file(path: &Path) -> Result<HashMap<u32, Vec<f32>>, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |reason: &str| ModelError::Parse { line: 0, reason: format!("weight file {}: {reason}", path.display()) };
    if bytes.len() < 6 {
        return Err(fail("shorter than its header"));
    }
    if bytes[0..4] != WEIGHTS_MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != WEIGHTS_VERSION {
        return Err(ModelError::VersionMismatch { got: version });
    }
    let mut pos = 6usize;
    let mut map = HashMap::new();
    while pos < bytes.len() {
        if bytes.len() - pos < 12 {
            return Err(fail("truncated entry header"));
        }
        let id = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        let count = u64::from_le_bytes(bytes[pos + 4..pos + 12].try_into().unwrap()) as usize;
        pos += 12;
        if bytes.len() - pos < count * 4 {
            return Err(fail("truncated entry data"));
        }
        let mut values = Vec::with_capacity(count);
        for chunk in bytes[pos..pos + count * 4].chunks_exact(4) {
            values.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        pos += count * 4;
        if map.insert(id, values).is_some() {
            return Err(fail(&format!("duplicate entry for layer {id}")));
        }
    }
    Ok(map)
}

/// Load a model file, validating all graph invariants and attaching weights
/// from the companion binary when declared.
pub fn load_model(path: impl AsRef<Path>) -> Result<LayerGraph, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let parsed = parse_model_text(&text)?;
    let mut graph = LayerGraph { name: parsed.name, input_shape: parsed.input_shape, units: parsed.units };
    if let Some(rel) = &parsed.weights_path {
        let wpath = path.parent().unwrap_or(Path::new(".")).join(rel);
        let mut blobs = read_weight_file(&wpath)?;
        // Need per-slot geometry to split each blob into weights and biases.
        let input_shapes = slot_input_shapes(&graph)?;
        for (decl_id, unit_idx, sub_idx) in &parsed.param_slots {
            let blob = blobs.remove(decl_id).ok_or(ModelError::MissingWeights { layer_id: *decl_id })?;
            let layer = match sub_idx {
                None => &mut graph.units[*unit_idx],
                Some(s) => match &mut graph.units[*unit_idx].kind {
                    LayerKind::Block(subs) => &mut subs[*s],
                    _ => unreachable!("parser records sub indices only for blocks"),
                },
            };
            let input = input_shapes[&(*unit_idx, *sub_idx)];
            let (wl, bl) = layer.kind.param_counts(input).expect("parameterized slot");
            if blob.len() != wl + bl {
                return Err(ModelError::Shape {
                    unit: *unit_idx,
                    reason: format!("weight entry {decl_id} has {} elements, expected {}", blob.len(), wl + bl),
                });
            }
            let (w, b) = blob.split_at(wl);
            layer.weights = Some(Weights { w: w.to_vec(), b: b.to_vec() });
        }
    }
    graph.validate()?;
    Ok(graph)
}

/// Input shape of every concrete layer slot, keyed by (unit index, sub index).
fn slot_input_shapes(graph: &LayerGraph) -> Result<HashMap<(usize, Option<usize>), Shape>, ModelError> {
    let mut map = HashMap::new();
    let mut shape = graph.input_shape;
    for (i, unit) in graph.units.iter().enumerate() {
        map.insert((i, None), shape);
        if let LayerKind::Block(subs) = &unit.kind {
            let mut s = shape;
            for (j, sub) in subs.iter().enumerate() {
                map.insert((i, Some(j)), s);
                s = sub
                    .kind
                    .output_shape(s)
                    .map_err(|e| ModelError::Shape { unit: i, reason: e.to_string() })?;
            }
        }
        shape = unit
            .kind
            .output_shape(shape)
            .map_err(|e| ModelError::Shape { unit: i, reason: e.to_string() })?;
    }
    Ok(map)
}

/// Write a model file and, when any layer carries weights, a companion
/// `<stem>.weights` binary next to it.
pub fn save_model(graph: &LayerGraph, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    graph.validate()?;

    let mut lines = Vec::new();
    lines.push(format!("model {}", graph.name));
    lines.push(format!(
        "input {} {} {}",
        graph.input_shape.channels, graph.input_shape.height, graph.input_shape.width
    ));

    let has_weights = graph.units.iter().any(|u| match &u.kind {
        LayerKind::Block(subs) => subs.iter().any(|s| s.weights.is_some()),
        _ => u.weights.is_some(),
    });
    let weights_name = weights_file_name(path);
    if has_weights {
        lines.push(format!("weights {weights_name}"));
    }

    let mut next_id: u32 = 0;
    let mut weight_entries: Vec<(u32, &Weights)> = Vec::new();
    for unit in &graph.units {
        match &unit.kind {
            LayerKind::Block(subs) => {
                lines.push(format!("block {next_id} begin"));
                next_id += 1;
                for sub in subs {
                    lines.push(format!("layer {next_id} {}", kind_to_line(&sub.kind)));
                    if let Some(w) = &sub.weights {
                        weight_entries.push((next_id, w));
                    }
                    next_id += 1;
                }
                lines.push("block end".into());
            }
            kind => {
                lines.push(format!("layer {next_id} {}", kind_to_line(kind)));
                if let Some(w) = &unit.weights {
                    weight_entries.push((next_id, w));
                }
                next_id += 1;
            }
        }
    }

    std::fs::write(path, lines.join("\n") + "\n")?;

    if has_weights {
        let wpath = path.parent().unwrap_or(Path::new(".")).join(&weights_name);
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        for (id, w) in weight_entries {
            out.extend_from_slice(&id.to_le_bytes());
            out.extend_from_slice(&((w.w.len() + w.b.len()) as u64).to_le_bytes());
            for v in w.w.iter().chain(w.b.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(wpath)?;
        f.write_all(&out)?;
    }
    Ok(())
}

fn weights_file_name(model_path: &Path) -> String {
    let stem = model_path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    format!("{stem}.weights")
}

/// Resolve the weight-file path that [`save_model`] uses for `model_path`.
pub fn weights_path_for(model_path: impl AsRef<Path>) -> PathBuf {
    let p = model_path.as_ref();
    p.parent().unwrap_or(Path::new(".")).join(weights_file_name(p))
}

// ---- builtin synthetic models ----

fn glorot_conv(rng: &mut Rng, out_c: usize, in_c: usize, k: usize) -> Weights {
    let fan_in = in_c * k * k;
    let fan_out = out_c * k * k;
    let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
    let w = (0..out_c * in_c * k * k).map(|_| rng.uniform(-limit, limit)).collect();
    Weights { w, b: vec![0.0; out_c] }
}

fn glorot_dense(rng: &mut Rng, out_units: usize, in_units: usize) -> Weights {
    let limit = (6.0 / (in_units + out_units) as f32).sqrt();
    let w = (0..out_units * in_units).map(|_| rng.uniform(-limit, limit)).collect();
    Weights { w, b: vec![0.0; out_units] }
}

struct Builder {
    rng: Rng,
    shape: Shape,
    units: Vec<Layer>,
}

impl Builder {
    fn new(seed: u64, input: Shape) -> Self {
        Builder { rng: Rng::new(seed), shape: input, units: Vec::new() }
    }

    fn push(&mut self, kind: LayerKind) {
        let layer = self.materialize(kind);
        self.shape = layer.kind.output_shape(self.shape).expect("builtin shapes are consistent");
        self.units.push(layer);
    }

    fn push_block(&mut self, kinds: Vec<LayerKind>) {
        let mut subs = Vec::with_capacity(kinds.len());
        let mut s = self.shape;
        for kind in kinds {
            let layer = self.materialize_at(kind, s);
            s = layer.kind.output_shape(s).expect("builtin shapes are consistent");
            subs.push(layer);
        }
        self.shape = s;
        self.units.push(Layer::new(LayerKind::Block(subs)));
    }

    fn materialize(&mut self, kind: LayerKind) -> Layer {
        let s = self.shape;
        self.materialize_at(kind, s)
    }

    fn materialize_at(&mut self, kind: LayerKind, input: Shape) -> Layer {
        let weights = match &kind {
            LayerKind::Conv2D { out_channels, kernel, .. } => {
                Some(glorot_conv(&mut self.rng, *out_channels, input.channels, *kernel))
            }
            LayerKind::Dense { out_units } => Some(glorot_dense(&mut self.rng, *out_units, input.channels)),
            _ => None,
        };
        Layer { kind, weights }
    }
}

/// Build one of the builtin synthetic models with seed-deterministic weights.
///
/// - `tiny-cnn-8`: 8 units on a 3x16x16 input, 4-way classifier; every
///   interior boundary except the flattened one is transfer-eligible.
/// - `branchy-12`: 12 units with exactly one block unit.
/// - `deep-20`: 20 units on a 3x32x32 input with one block and a run of
///   odd-spatial boundaries (3x3) that are not transfer-eligible.
pub fn make_synthetic_model(spec: &str, seed: u64) -> Result<LayerGraph, ModelError> {
    let conv = |out, k, s, p| LayerKind::Conv2D { out_channels: out, kernel: k, stride: s, padding: p };
    let graph = match spec {
        "tiny-cnn-8" => {
            let mut b = Builder::new(seed ^ 0x74696e79, Shape::new(3, 16, 16));
            b.push(conv(16, 3, 1, Padding::Same)); // 0: 16x16x16
            b.push(LayerKind::ReLU); // 1
            b.push(conv(32, 3, 1, Padding::Same)); // 2: 32x16x16
            b.push(LayerKind::MaxPool { kernel: 2, stride: 2 }); // 3: 32x8x8
            b.push(conv(32, 3, 1, Padding::Same)); // 4: 32x8x8
            b.push(LayerKind::ReLU); // 5
            b.push(LayerKind::Flatten); // 6: 2048
            b.push(LayerKind::Dense { out_units: 4 }); // 7
            LayerGraph { name: spec.into(), input_shape: Shape::new(3, 16, 16), units: b.units }
        }
        "branchy-12" => {
            let mut b = Builder::new(seed ^ 0x6272616e, Shape::new(3, 16, 16));
            b.push(conv(16, 3, 1, Padding::Same)); // 0
            b.push(LayerKind::ReLU); // 1
            b.push_block(vec![
                conv(32, 3, 1, Padding::Same),
                LayerKind::ReLU,
                conv(32, 3, 1, Padding::Same),
                LayerKind::ReLU,
            ]); // 2: collapsed branch
            b.push(LayerKind::ReLU); // 3
            b.push(LayerKind::MaxPool { kernel: 2, stride: 2 }); // 4: 32x8x8
            b.push(conv(48, 3, 1, Padding::Same)); // 5
            b.push(LayerKind::ReLU); // 6
            b.push(LayerKind::MaxPool { kernel: 2, stride: 2 }); // 7: 48x4x4
            b.push(conv(64, 3, 1, Padding::Same)); // 8
            b.push(LayerKind::ReLU); // 9
            b.push(LayerKind::Flatten); // 10: 1024
            b.push(LayerKind::Dense { out_units: 10 }); // 11
            LayerGraph { name: spec.into(), input_shape: Shape::new(3, 16, 16), units: b.units }
        }
        "deep-20" => {
            let mut b = Builder::new(seed ^ 0x64656570, Shape::new(3, 32, 32));
            b.push(conv(32, 3, 1, Padding::Same)); // 0: 32x32x32
            b.push(LayerKind::ReLU); // 1
            b.push(conv(32, 3, 1, Padding::Same)); // 2
            b.push(LayerKind::ReLU); // 3
            b.push(LayerKind::MaxPool { kernel: 2, stride: 2 }); // 4: 32x16x16
            b.push(conv(64, 3, 1, Padding::Same)); // 5
            b.push(LayerKind::ReLU); // 6
            b.push_block(vec![
                conv(64, 3, 1, Padding::Same),
                LayerKind::ReLU,
                conv(64, 3, 1, Padding::Same),
            ]); // 7
            b.push(LayerKind::ReLU); // 8
            b.push(LayerKind::MaxPool { kernel: 2, stride: 2 }); // 9: 64x8x8
            b.push(conv(64, 3, 1, Padding::Same)); // 10
            b.push(LayerKind::ReLU); // 11
            b.push(conv(96, 3, 2, Padding::Valid)); // 12: 96x3x3, odd boundary
            b.push(LayerKind::ReLU); // 13
            b.push(conv(128, 3, 1, Padding::Same)); // 14: 128x3x3
            b.push(LayerKind::ReLU); // 15
            b.push(LayerKind::GlobalAvgPool); // 16: 128x1x1
            b.push(LayerKind::Flatten); // 17
            b.push(LayerKind::Dense { out_units: 64 }); // 18
            b.push(LayerKind::Dense { out_units: 10 }); // 19
            LayerGraph { name: spec.into(), input_shape: Shape::new(3, 32, 32), units: b.units }
        }
        other => return Err(ModelError::UnknownSpec { name: other.into() }),
    };
    graph.validate()?;
    Ok(graph)
}
