//! Scenario documents and the deterministic run harness.
//!
//! A scenario names a set of top-level graphs, a schedule of edits, a script
//! of control events and a list of outputs. Running it produces per-tick
//! output hashes, graph snapshots at every structural edit, and optionally
//! PGM frames on disk. The same [`ScenarioRunner`] drives headless runs and
//! live sessions, so a session's interaction log replays to the same
//! manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClickState, TransformKind, VertexData};
use crate::editor::EditCommand;
use crate::engine::{ControlEvent, Emission, Engine, TickReport};
use crate::error::CoreError;
use crate::export::{to_dot, to_json};
use crate::frame::{fnv1a64, hash_hex, ImageFrame};
use crate::ids::{GraphId, Ref, VertexId};
use crate::kernels::{Categorical, SignedSampler, WaveParams};
use crate::program::DataflowProgram;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("unresolved name {0}")]
    Unresolved(String),
    #[error("tick {tick} outside [0, {ticks})")]
    TickOutOfRange { tick: u64, ticks: u64 },
    #[error("scheduled command at tick {tick} fails: {error}")]
    Schedule { tick: u64, error: CoreError },
    #[error("building the program: {0}")]
    Build(CoreError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("runtime error at tick {tick}: {error}")]
    Runtime { tick: u64, error: CoreError, manifest: Box<Manifest> },
}

impl ScenarioError {
    /// True for errors detected before anything ran.
    pub fn is_scenario_error(&self) -> bool {
        !matches!(self, ScenarioError::Io(_) | ScenarioError::Runtime { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            width: 128,
            height: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

/// Contents of a constant image, in grid coordinates normalised to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pattern {
    Fill {
        value: f64,
    },
    Ramp {
        axis: Axis,
        from: f64,
        to: f64,
    },
    Checker {
        cell: usize,
        a: f64,
        b: f64,
    },
    Disk {
        #[serde(default = "half")]
        cx: f64,
        #[serde(default = "half")]
        cy: f64,
        radius: f64,
        inside: f64,
        outside: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl Pattern {
    pub fn render(&self, width: usize, height: usize) -> ImageFrame {
        let nx = |x: usize| if width > 1 { x as f64 / (width - 1) as f64 } else { 0.0 };
        let ny = |y: usize| if height > 1 { y as f64 / (height - 1) as f64 } else { 0.0 };
        match *self {
            Pattern::Fill { value } => ImageFrame::from_fn(width, height, |_, _| value),
            Pattern::Ramp { axis, from, to } => ImageFrame::from_fn(width, height, |x, y| {
                let t = match axis {
                    Axis::X => nx(x),
                    Axis::Y => ny(y),
                };
                from + (to - from) * t
            }),
            Pattern::Checker { cell, a, b } => {
                let cell = cell.max(1);
                ImageFrame::from_fn(width, height, |x, y| if (x / cell + y / cell) % 2 == 0 { a } else { b })
            }
            Pattern::Disk {
                cx,
                cy,
                radius,
                inside,
                outside,
            } => ImageFrame::from_fn(width, height, |x, y| {
                let (dx, dy) = (nx(x) - cx, ny(y) - cy);
                if dx * dx + dy * dy <= radius * radius {
                    inside
                } else {
                    outside
                }
            }),
        }
    }
}

fn default_alpha() -> f64 {
    0.5
}

/// Vertex data as written in a scenario. Image vertices take the grid size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Constant {
        pattern: Pattern,
    },
    Identity,
    Negation,
    #[serde(rename = "sum_of_2")]
    SumOf2 {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Wave {
        #[serde(default, flatten)]
        params: WaveSpec,
    },
    Categorical {
        weights: Vec<f64>,
    },
    Mixture {
        alpha: f64,
    },
    Signed {
        pos: Vec<f64>,
        neg: Vec<f64>,
        pos_weight: f64,
        neg_weight: f64,
    },
    NumericControl {
        value: f64,
    },
    ClickControl,
    Clock,
    GraphRef {
        graph: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    #[serde(default = "WaveSpec::amplitude")]
    pub amplitude: f64,
    #[serde(default = "WaveSpec::wavelength")]
    pub wavelength: f64,
    #[serde(default = "WaveSpec::speed")]
    pub speed: f64,
}

impl WaveSpec {
    fn amplitude() -> f64 {
        WaveParams::default().amplitude
    }
    fn wavelength() -> f64 {
        WaveParams::default().wavelength
    }
    fn speed() -> f64 {
        WaveParams::default().speed
    }
}

impl Default for WaveSpec {
    fn default() -> Self {
        let p = WaveParams::default();
        WaveSpec {
            amplitude: p.amplitude,
            wavelength: p.wavelength,
            speed: p.speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSpec {
    pub name: String,
    #[serde(flatten)]
    pub data: DataSpec,
    /// Labels in the same top-level graph, or `graph.label`.
    #[serde(default)]
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub main: bool,
    #[serde(default)]
    pub vertices: Vec<VertexSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subgraphs: Vec<GraphSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledEdit {
    pub tick: u64,
    pub edit: EditCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedControl {
    pub tick: u64,
    #[serde(flatten)]
    pub event: ControlEvent,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub vertex: Ref,
    /// Write a frame every this many ticks. Hashes are recorded every tick.
    #[serde(default = "one")]
    pub every: u64,
}

fn default_ticks() -> u64 {
    400
}

/// The scenario file format. Also the interaction-log format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub seed: u64,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_ticks")]
    pub ticks: u64,
    #[serde(default)]
    pub templates: Vec<GraphSpec>,
    #[serde(default)]
    pub schedule: Vec<ScheduledEdit>,
    #[serde(default)]
    pub control_script: Vec<ScriptedControl>,
    #[serde(default)]
    pub outputs: Vec<OutputSpec>,
}

impl ScenarioDoc {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }
}

/// A checked scenario: the document plus its initial program.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub program: DataflowProgram,
}

impl Scenario {
    /// An engine with the schedule and control script queued.
    pub fn engine(&self) -> Engine {
        let mut engine = Engine::new(self.program.clone());
        for e in &self.doc.schedule {
            engine.schedule_edit(e.tick, e.edit.clone());
        }
        for c in &self.doc.control_script {
            engine.schedule_control(c.tick, c.event.clone());
        }
        engine
    }
}

fn build_data(spec: &DataSpec, grid: Grid, graphs: &[(String, GraphId)]) -> Result<VertexData, ScenarioError> {
    let (w, h) = (grid.width, grid.height);
    let data = match spec {
        DataSpec::Constant { pattern } => VertexData::constant(pattern.render(w, h)),
        DataSpec::Identity => VertexData::dynamic(TransformKind::Identity, w, h),
        DataSpec::Negation => VertexData::dynamic(TransformKind::Negation, w, h),
        DataSpec::SumOf2 { alpha } => VertexData::dynamic(TransformKind::SumOf2 { alpha: *alpha }, w, h),
        DataSpec::Wave { params } => VertexData::dynamic(
            TransformKind::wave(WaveParams {
                amplitude: params.amplitude,
                wavelength: params.wavelength,
                speed: params.speed,
            }),
            w,
            h,
        ),
        DataSpec::Categorical { weights } => {
            VertexData::categorical(Categorical::new(weights.clone()).map_err(ScenarioError::Build)?)
        }
        DataSpec::Mixture { alpha } => VertexData::mixture(*alpha),
        DataSpec::Signed {
            pos,
            neg,
            pos_weight,
            neg_weight,
        } => VertexData::signed(SignedSampler {
            pos_channel: Categorical::new(pos.clone()).map_err(ScenarioError::Build)?,
            neg_channel: Categorical::new(neg.clone()).map_err(ScenarioError::Build)?,
            pos_weight: *pos_weight,
            neg_weight: *neg_weight,
        }),
        DataSpec::NumericControl { value } => VertexData::NumericControl { value: *value },
        DataSpec::ClickControl => VertexData::ClickControl {
            click: ClickState::default(),
        },
        DataSpec::Clock => VertexData::Clock,
        DataSpec::GraphRef { graph } => {
            let g = graphs
                .iter()
                .find(|(n, _)| n == graph)
                .map(|(_, g)| *g)
                .ok_or_else(|| ScenarioError::Unresolved(format!("graph {graph}")))?;
            VertexData::graph_ref(g, w, h)
        }
    };
    data.check().map_err(|e| ScenarioError::Build(CoreError::InvalidData(e)))?;
    Ok(data)
}

fn collect_graph_names(spec: &GraphSpec, out: &mut Vec<String>) {
    out.push(spec.name.clone());
    for s in &spec.subgraphs {
        collect_graph_names(s, out);
    }
}

fn create_graphs(
    p: &mut DataflowProgram,
    spec: &GraphSpec,
    parent: Option<GraphId>,
    out: &mut Vec<(String, GraphId)>,
) -> Result<(), ScenarioError> {
    let g = match parent {
        None => {
            let g = p.add_top_level_graph(false).map_err(ScenarioError::Build)?;
            if spec.main {
                p.set_main_graph(g, false).map_err(|_| {
                    ScenarioError::Schema("more than one template is marked main".into())
                })?;
            }
            g
        }
        Some(parent) => {
            if spec.main {
                return Err(ScenarioError::Schema(format!(
                    "subgraph {} cannot be the main graph",
                    spec.name
                )));
            }
            p.add_subgraph(parent).map_err(ScenarioError::Build)?
        }
    };
    p.set_graph_name(g, &spec.name).map_err(ScenarioError::Build)?;
    out.push((spec.name.clone(), g));
    for s in &spec.subgraphs {
        create_graphs(p, s, Some(g), out)?;
    }
    Ok(())
}

struct PendingSources {
    vertex: VertexId,
    root: String,
    sources: Vec<String>,
}

fn create_vertices(
    p: &mut DataflowProgram,
    spec: &GraphSpec,
    root: &str,
    grid: Grid,
    graphs: &[(String, GraphId)],
    pending: &mut Vec<PendingSources>,
) -> Result<(), ScenarioError> {
    let g = graphs.iter().find(|(n, _)| *n == spec.name).expect("created").1;
    for v in &spec.vertices {
        if v.name.contains('.') {
            return Err(ScenarioError::Schema(format!("vertex name {:?} contains '.'", v.name)));
        }
        let data = build_data(&v.data, grid, graphs)?;
        let id = p
            .add_labeled_vertex(g, &v.name, data, Vec::new())
            .map_err(ScenarioError::Build)?;
        pending.push(PendingSources {
            vertex: id,
            root: root.to_string(),
            sources: v.sources.clone(),
        });
    }
    for s in &spec.subgraphs {
        create_vertices(p, s, root, grid, graphs, pending)?;
    }
    Ok(())
}

fn qualify(root: &str, name: &str) -> String {
    if name.contains('.') {
        name.to_string()
    } else {
        format!("{root}.{name}")
    }
}

/// Builds the initial program of a document without checking its schedule.
pub fn build_program(doc: &ScenarioDoc) -> Result<DataflowProgram, ScenarioError> {
    if doc.grid.width == 0 || doc.grid.height == 0 {
        return Err(ScenarioError::Schema("grid: width and height must be positive".into()));
    }
    let mut names = Vec::new();
    for t in &doc.templates {
        collect_graph_names(t, &mut names);
    }
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() || n.contains('.') {
            return Err(ScenarioError::Schema(format!("graph name {n:?} is empty or contains '.'")));
        }
        if names[..i].contains(n) {
            return Err(ScenarioError::Schema(format!("graph name {n:?} defined twice")));
        }
    }
    let mut p = DataflowProgram::new(doc.seed);
    let mut graphs = Vec::new();
    for t in &doc.templates {
        create_graphs(&mut p, t, None, &mut graphs)?;
    }
    let mut pending = Vec::new();
    for t in &doc.templates {
        create_vertices(&mut p, t, &t.name, doc.grid, &graphs, &mut pending)?;
    }
    for item in pending {
        let mut sources = Vec::new();
        for s in &item.sources {
            let full = qualify(&item.root, s);
            let id = p
                .resolve_vertex(&Ref::Name(full.clone()))
                .map_err(|_| ScenarioError::Unresolved(full))?;
            sources.push(id);
        }
        p.vertex_mut(item.vertex).map_err(ScenarioError::Build)?.sources = sources;
    }
    if let Some(v) = p.validate().first() {
        return Err(ScenarioError::Build(CoreError::Invalid(v.to_string())));
    }
    Ok(p)
}

/// Checks a document fully: builds the program, then dry-runs the schedule
/// and control script at the structural level so every name and every edit
/// precondition is verified before anything executes.
pub fn check_scenario(doc: ScenarioDoc) -> Result<Scenario, ScenarioError> {
    check(doc, true)
}

/// Like [`check_scenario`], but outputs may name vertices that nothing in
/// the document creates; a live session registers them once an edit does.
pub fn check_live_scenario(doc: ScenarioDoc) -> Result<Scenario, ScenarioError> {
    check(doc, false)
}

fn check(doc: ScenarioDoc, require_outputs: bool) -> Result<Scenario, ScenarioError> {
    for e in &doc.schedule {
        if e.tick >= doc.ticks {
            return Err(ScenarioError::TickOutOfRange {
                tick: e.tick,
                ticks: doc.ticks,
            });
        }
    }
    for c in &doc.control_script {
        if c.tick >= doc.ticks {
            return Err(ScenarioError::TickOutOfRange {
                tick: c.tick,
                ticks: doc.ticks,
            });
        }
    }
    for o in &doc.outputs {
        if o.every == 0 {
            return Err(ScenarioError::Schema("outputs: every must be at least 1".into()));
        }
    }
    let program = build_program(&doc)?;
    let scenario = Scenario { doc, program };
    let mut engine = scenario.engine();
    let mut resolved = vec![false; scenario.doc.outputs.len()];
    mark_resolved(engine.program(), &scenario.doc.outputs, &mut resolved);
    let last = scenario
        .doc
        .schedule
        .iter()
        .map(|e| e.tick)
        .chain(scenario.doc.control_script.iter().map(|c| c.tick))
        .max();
    if let Some(last) = last {
        for _ in 0..=last {
            let report = engine.tick_structural().map_err(|error| ScenarioError::Schedule {
                tick: engine.clock(),
                error,
            })?;
            if let Some(f) = report.failed.first() {
                return Err(ScenarioError::Schedule {
                    tick: f.tick,
                    error: f.error.clone(),
                });
            }
            mark_resolved(engine.program(), &scenario.doc.outputs, &mut resolved);
        }
    }
    if let Some(i) = resolved.iter().position(|r| !r).filter(|_| require_outputs) {
        return Err(ScenarioError::Unresolved(format!(
            "output {}",
            scenario.doc.outputs[i].vertex
        )));
    }
    Ok(scenario)
}

fn mark_resolved(p: &DataflowProgram, outputs: &[OutputSpec], resolved: &mut [bool]) {
    for (o, r) in outputs.iter().zip(resolved.iter_mut()) {
        if !*r && p.resolve_vertex(&o.vertex).is_ok() {
            *r = true;
        }
    }
}

/// Parses and checks a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    check_scenario(doc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    parse_scenario(&fs::read_to_string(path)?)
}

/// Loads a scenario for serving; see [`check_live_scenario`].
pub fn load_live_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc =
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    check_live_scenario(doc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputHash {
    pub output: String,
    pub vertex: VertexId,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTick {
    pub tick: u64,
    pub outputs: Vec<OutputHash>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSnapshot {
    pub tick: u64,
    pub op: String,
    pub json: String,
    pub dot: String,
    pub graph_hash: String,
}

/// The record of a run. Contains nothing time- or host-dependent, so equal
/// runs serialize to equal bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub grid: Grid,
    pub ticks_run: u64,
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub ticks: Vec<ManifestTick>,
    pub snapshots: Vec<ManifestSnapshot>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Overrides the document's tick count.
    pub ticks: Option<u64>,
    /// Skip writing PGM frames and traces.
    pub hash_only: bool,
}

/// A structural edit applied during a run, with the program right after it.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEvent {
    pub tick: u64,
    pub command: EditCommand,
    pub json: String,
    pub dot: String,
}

struct Output {
    name: String,
    spec: OutputSpec,
    vertex: Option<VertexId>,
    trace: Vec<i64>,
    samples: bool,
}

/// Steps a scenario one tick at a time and records the manifest.
pub struct ScenarioRunner {
    engine: Engine,
    seed: u64,
    grid: Grid,
    outputs: Vec<Output>,
    manifest_ticks: Vec<ManifestTick>,
    snapshots: Vec<ManifestSnapshot>,
    out_dir: Option<PathBuf>,
    hash_only: bool,
    error: Option<String>,
}

impl ScenarioRunner {
    /// `out_dir` receives frames, snapshots and the manifest; `None` keeps
    /// everything in memory.
    pub fn new(scenario: &Scenario, out_dir: Option<&Path>, hash_only: bool) -> Result<Self, ScenarioError> {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir)?;
            fs::create_dir_all(dir.join("snapshots"))?;
            if !hash_only {
                fs::create_dir_all(dir.join("frames"))?;
            }
        }
        let outputs = scenario
            .doc
            .outputs
            .iter()
            .map(|o| Output {
                name: o.vertex.to_string(),
                spec: o.clone(),
                vertex: None,
                trace: Vec::new(),
                samples: false,
            })
            .collect();
        let mut runner = ScenarioRunner {
            engine: scenario.engine(),
            seed: scenario.doc.seed,
            grid: scenario.doc.grid,
            outputs,
            manifest_ticks: Vec::new(),
            snapshots: Vec::new(),
            out_dir: out_dir.map(Path::to_path_buf),
            hash_only,
            error: None,
        };
        runner.register_outputs();
        Ok(runner)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// For queueing live edits and controls. Queue for `engine.clock()` to
    /// apply at the end of the next tick.
    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn clock(&self) -> u64 {
        self.engine.clock()
    }

    fn register_outputs(&mut self) {
        for o in self.outputs.iter_mut().filter(|o| o.vertex.is_none()) {
            if let Ok(v) = self.engine.program().resolve_vertex(&o.spec.vertex) {
                if self.engine.register_output(v).is_ok() {
                    o.vertex = Some(v);
                }
            }
        }
    }

    /// Runs one tick and records it. Snapshot events are returned with the
    /// report for live broadcasting.
    pub fn step(&mut self) -> Result<(TickReport, Vec<SnapshotEvent>), ScenarioError> {
        let tick = self.engine.clock();
        let report = match self.engine.tick() {
            Ok(r) => r,
            Err(error) => return Err(self.fail(tick, error)),
        };
        // emissions come from registered ids; map them back to output names
        let mut hashes = Vec::new();
        for o in self.outputs.iter_mut() {
            let Some(v) = o.vertex else { continue };
            let Some((_, e)) = report.emissions.iter().find(|(ev, _)| *ev == v) else {
                continue;
            };
            hashes.push(OutputHash {
                output: o.name.clone(),
                vertex: v,
                hash: hash_hex(e.hash()),
            });
            match e {
                Emission::Frame(f) => {
                    if let (Some(dir), false) = (&self.out_dir, self.hash_only) {
                        if tick % o.spec.every == 0 {
                            let path = dir.join("frames").join(format!("{}_{:05}.pgm", o.name, tick));
                            fs::write(path, f.to_pgm())?;
                        }
                    }
                }
                Emission::Sample(s) => {
                    o.samples = true;
                    o.trace.push(*s);
                }
            }
        }
        self.manifest_ticks.push(ManifestTick { tick, outputs: hashes });
        let mut events = Vec::new();
        for a in report.applied.iter().filter(|a| a.command.is_structural()) {
            let json = to_json(self.engine.program());
            let dot = to_dot(self.engine.program());
            let stem = format!("{:05}_{:02}_{}", a.tick, self.snapshots.len(), a.command.op_name());
            if let Some(dir) = &self.out_dir {
                fs::write(dir.join("snapshots").join(format!("{stem}.json")), &json)?;
                fs::write(dir.join("snapshots").join(format!("{stem}.dot")), &dot)?;
            }
            self.snapshots.push(ManifestSnapshot {
                tick: a.tick,
                op: a.command.op_name().to_string(),
                json: format!("snapshots/{stem}.json"),
                dot: format!("snapshots/{stem}.dot"),
                graph_hash: hash_hex(fnv1a64(json.as_bytes())),
            });
            events.push(SnapshotEvent {
                tick: a.tick,
                command: a.command.clone(),
                json,
                dot,
            });
        }
        for (old, new) in report.applied.iter().flat_map(|a| a.outcome.redirects.iter()) {
            for o in self.outputs.iter_mut().filter(|o| o.vertex == Some(*old)) {
                o.vertex = Some(*new);
            }
        }
        // outputs whose vertex was retired without a successor go unresolved
        let live = self.engine.outputs();
        for o in self.outputs.iter_mut() {
            if o.vertex.is_some_and(|v| !live.contains(&v)) {
                o.vertex = None;
            }
        }
        self.register_outputs();
        Ok((report, events))
    }

    fn fail(&mut self, tick: u64, error: CoreError) -> ScenarioError {
        self.error = Some(format!("tick {tick}: {error}"));
        let manifest = self.manifest(false);
        if let Err(e) = self.write_files(&manifest) {
            return ScenarioError::Io(e);
        }
        ScenarioError::Runtime {
            tick,
            error,
            manifest: Box::new(manifest),
        }
    }

    /// Registered ids, in output order, with their declared names.
    pub fn registered_outputs(&self) -> Vec<(String, VertexId)> {
        self.outputs
            .iter()
            .filter_map(|o| o.vertex.map(|v| (o.name.clone(), v)))
            .collect()
    }

    pub fn manifest(&self, complete: bool) -> Manifest {
        Manifest {
            seed: self.seed,
            grid: self.grid,
            ticks_run: self.manifest_ticks.len() as u64,
            complete,
            error: self.error.clone(),
            ticks: self.manifest_ticks.clone(),
            snapshots: self.snapshots.clone(),
        }
    }

    fn write_files(&self, manifest: &Manifest) -> io::Result<()> {
        let Some(dir) = &self.out_dir else { return Ok(()) };
        if !self.hash_only {
            for o in self.outputs.iter().filter(|o| o.samples) {
                let text: String = o.trace.iter().map(|s| format!("{s}\n")).collect();
                fs::write(dir.join("frames").join(format!("{}.trace", o.name)), text)?;
            }
        }
        fs::write(dir.join("manifest.json"), manifest.to_json())
    }

    /// Writes traces and the manifest, and returns the manifest.
    pub fn finish(self) -> Result<Manifest, ScenarioError> {
        let manifest = self.manifest(self.error.is_none());
        self.write_files(&manifest)?;
        Ok(manifest)
    }
}

/// Runs a checked scenario to completion.
pub fn run_scenario(scenario: &Scenario, out_dir: Option<&Path>, opts: &RunOptions) -> Result<Manifest, ScenarioError> {
    let mut runner = ScenarioRunner::new(scenario, out_dir, opts.hash_only)?;
    let ticks = opts.ticks.unwrap_or(scenario.doc.ticks);
    for _ in 0..ticks {
        runner.step()?;
    }
    runner.finish()
}

/// The program after `ticks` full ticks.
pub fn program_at(scenario: &Scenario, ticks: u64) -> Result<DataflowProgram, ScenarioError> {
    let mut runner = ScenarioRunner::new(scenario, None, true)?;
    for _ in 0..ticks {
        runner.step()?;
    }
    Ok(runner.engine.into_program())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"{
        "seed": 7,
        "grid": {"width": 8, "height": 8},
        "ticks": 12,
        "templates": [
            {"name": "main", "main": true, "vertices": [
                {"name": "img", "kind": "constant", "pattern": {"type": "checker", "cell": 2, "a": 0.5, "b": -0.5}},
                {"name": "neg", "kind": "negation", "sources": ["img"]}
            ]}
        ],
        "schedule": [{"tick": 3, "edit": {"op": "node_split", "target": "main.neg", "bind": "neg_out"}}],
        "outputs": [{"vertex": "main.neg"}]
    }"#;

    #[test]
    fn parses_and_builds() {
        let s = parse_scenario(MINI).unwrap();
        assert_eq!(s.doc.schedule.len(), 1);
        assert_eq!(s.program.vertex_count(), 2);
        assert_eq!(s.doc.outputs[0].every, 1);
    }

    #[test]
    fn missing_seed_names_the_field() {
        let err = parse_scenario(r#"{"templates": []}"#).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        assert!(err.is_scenario_error());
    }

    #[test]
    fn out_of_range_tick_is_rejected() {
        let text = MINI.replace("\"tick\": 3", "\"tick\": 12");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::TickOutOfRange { tick: 12, ticks: 12 })
        ));
    }

    #[test]
    fn unresolved_names_are_rejected() {
        let bad_source = MINI.replace("\"sources\": [\"img\"]", "\"sources\": [\"nope\"]");
        assert!(matches!(parse_scenario(&bad_source), Err(ScenarioError::Unresolved(_))));
        let bad_edit = MINI.replace("main.neg\", \"bind", "main.zzz\", \"bind");
        assert!(matches!(parse_scenario(&bad_edit), Err(ScenarioError::Schedule { tick: 3, .. })));
        let bad_output = MINI.replace("{\"vertex\": \"main.neg\"}", "{\"vertex\": \"main.q\"}");
        assert!(matches!(parse_scenario(&bad_output), Err(ScenarioError::Unresolved(_))));
    }

    #[test]
    fn engine_failure_leaves_a_partial_manifest() {
        let s = parse_scenario(MINI).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut runner = ScenarioRunner::new(&s, Some(dir.path()), true).unwrap();
        for _ in 0..2 {
            runner.step().unwrap();
        }
        // negation with no source fails the executability check
        let neg = s.program.resolve_vertex(&Ref::name("main.neg")).unwrap();
        runner.engine_mut().program_mut().vertex_mut(neg).unwrap().sources.clear();
        let Err(ScenarioError::Runtime { tick, manifest, .. }) = runner.step() else {
            panic!("expected a runtime error");
        };
        assert_eq!(tick, 2);
        assert!(!manifest.complete);
        assert_eq!(manifest.ticks_run, 2);
        assert!(manifest.error.is_some());
        let written = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert_eq!(written, manifest.to_json());
    }

    #[test]
    fn outputs_follow_a_split() {
        let s = parse_scenario(MINI).unwrap();
        let m = run_scenario(&s, None, &RunOptions::default()).unwrap();
        assert!(m.complete);
        assert_eq!(m.ticks_run, 12);
        assert_eq!(m.snapshots.len(), 1);
        assert!(m.ticks.iter().all(|t| t.outputs.len() == 1));
        // the split stage takes over the output one tick late
        let before = &m.ticks[3].outputs[0];
        let after = &m.ticks[4].outputs[0];
        assert_ne!(before.vertex, after.vertex);
        assert_eq!(before.hash, after.hash);
    }

    #[test]
    fn manifests_are_deterministic_and_written() {
        let s = parse_scenario(MINI).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = run_scenario(&s, Some(dir.path()), &RunOptions::default()).unwrap();
        let b = run_scenario(&s, None, &RunOptions::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let on_disk = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert_eq!(on_disk, a.to_json());
        assert!(dir.path().join("frames/main.neg_00000.pgm").exists());
        assert!(dir.path().join(&a.snapshots[0].json).exists());
        assert!(dir.path().join(&a.snapshots[0].dot).exists());
    }

    #[test]
    fn doc_round_trips() {
        let s = parse_scenario(MINI).unwrap();
        let again = parse_scenario(&s.doc.to_json()).unwrap();
        assert_eq!(again.doc, s.doc);
    }

    #[test]
    fn patterns_stay_in_range() {
        for p in [
            Pattern::Fill { value: 0.3 },
            Pattern::Ramp {
                axis: Axis::Y,
                from: -1.0,
                to: 1.0,
            },
            Pattern::Checker { cell: 3, a: 1.0, b: -1.0 },
            Pattern::Disk {
                cx: 0.5,
                cy: 0.5,
                radius: 0.3,
                inside: 0.9,
                outside: -0.9,
            },
        ] {
            let f = p.render(9, 7);
            assert!(f.is_in_range());
            assert_eq!(f.dims(), (9, 7));
        }
    }
}
