//! The synchronous work cycle.
//!
//! Each tick of the main graph runs three phases:
//!
//! 1. draw: emit the current frame (or sample) of every registered output;
//! 2. apply: every dynamic vertex computes into its target buffer from its
//!    sources' *current* buffers, and every sampler draws its next sample;
//! 3. shift: target buffers swap into source position.
//!
//! Reads and writes touch different buffers, so cycles need no special
//! handling and no vertex sees another's output from the same tick. After
//! the shift comes the tick boundary: running ramps advance, queued edits
//! for this tick are applied, then queued control events, and the clock
//! moves on.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::{ClickState, SamplerKind, TransformKind, VertexData};
use crate::editor::{self, EditCommand, EditOutcome, UndoRecord};
use crate::error::{CoreError, Result};
use crate::export::ProgramDoc;
use crate::frame::{fnv1a64, ImageFrame};
use crate::higher_order::refresh_graph_ref;
use crate::ids::{Ref, VertexId};
use crate::kernels::{convex_combine, mixture_sample, negate, wave_warp};
use crate::program::DataflowProgram;

/// What a registered output shows in one tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    Frame(ImageFrame),
    Sample(i64),
}

impl Emission {
    /// Frames hash their PGM bytes; samples hash their decimal text plus a
    /// newline, i.e. one line of a sample trace.
    pub fn hash(&self) -> u64 {
        match self {
            Emission::Frame(f) => f.hash(),
            Emission::Sample(s) => fnv1a64(format!("{s}\n").as_bytes()),
        }
    }

    pub fn frame(&self) -> Option<&ImageFrame> {
        match self {
            Emission::Frame(f) => Some(f),
            Emission::Sample(_) => None,
        }
    }
}

/// A change to a control's value, outside the structural edit vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    /// Restart a wave at this pixel.
    Click([f64; 2]),
    /// Set a numeric control.
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEvent {
    pub vertex: Ref,
    #[serde(flatten)]
    pub action: ControlAction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueuedCommand {
    Edit(EditCommand),
    Control(ControlEvent),
}

#[derive(Debug, Clone, PartialEq)]
struct Queued {
    tick: u64,
    command: QueuedCommand,
    origin: Option<u64>,
}

/// Control values resolved for one transform application.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ResolvedControls {
    pub alpha: Option<f64>,
    pub click: Option<ClickState>,
}

/// The state a control holds after an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub vertex: VertexId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedEdit {
    pub tick: u64,
    /// Caller-supplied tag from `schedule_*_from`.
    pub origin: Option<u64>,
    pub command: EditCommand,
    pub outcome: EditOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedControl {
    pub tick: u64,
    pub origin: Option<u64>,
    pub event: ControlEvent,
    pub state: ControlState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedCommand {
    pub tick: u64,
    pub origin: Option<u64>,
    pub command: QueuedCommand,
    pub error: CoreError,
}

/// Everything one tick produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub tick: u64,
    pub emissions: Vec<(VertexId, Emission)>,
    pub applied: Vec<AppliedEdit>,
    pub controls: Vec<AppliedControl>,
    pub failed: Vec<FailedCommand>,
}

/// Computes a dynamic vertex's next frame.
///
/// `inputs` are the image sources in source order; SumOf2 takes its alpha
/// from `controls.alpha` when a numeric control feeds it, and Wave takes its
/// center and start tick from `controls.click` when a click control feeds it.
pub fn apply_transform(
    data: &VertexData,
    inputs: &[&ImageFrame],
    controls: &ResolvedControls,
    clock: u64,
) -> Result<ImageFrame> {
    let VertexData::DynamicImage {
        transform,
        target_buffer,
        ..
    } = data
    else {
        return Err(CoreError::InvalidData(format!(
            "{} has no transform",
            data.variant_name()
        )));
    };
    if inputs.len() != transform.arity() {
        return Err(CoreError::ArityMismatch {
            transform: transform.name(),
            expected: transform.arity(),
            got: inputs.len(),
        });
    }
    for f in inputs {
        if !f.same_dims(target_buffer) {
            return Err(CoreError::DimensionMismatch {
                left: f.dims(),
                right: target_buffer.dims(),
            });
        }
    }
    match transform {
        TransformKind::Identity => Ok(inputs[0].clone()),
        TransformKind::Negation => Ok(negate(inputs[0])),
        TransformKind::SumOf2 { alpha } => {
            convex_combine(inputs[0], inputs[1], controls.alpha.unwrap_or(*alpha))
        }
        TransformKind::Wave { params, click } => {
            let click = controls.click.unwrap_or(*click);
            let (w, h) = inputs[0].dims();
            let t_rel = clock.saturating_sub(click.frame_count_base);
            Ok(wave_warp(inputs[0], click.center_for(w, h), t_rel, params))
        }
    }
}

/// Bounded log of emitted frame hashes.
#[derive(Debug, Clone, Default)]
pub struct FrameLog {
    pub capacity: usize,
    pub entries: VecDeque<(u64, VertexId, u64)>,
}

/// Per-tick output hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub outputs: Vec<(VertexId, String)>,
}

/// Program state right after a structural edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub tick: u64,
    pub command: EditCommand,
    pub program: ProgramDoc,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub ticks: Vec<TickRecord>,
    pub snapshots: Vec<GraphSnapshot>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    program: DataflowProgram,
    outputs: Vec<VertexId>,
    queue: Vec<Queued>,
    undo_log: Vec<UndoRecord>,
    frame_log: Option<FrameLog>,
}

impl Engine {
    pub fn new(program: DataflowProgram) -> Self {
        Engine {
            program,
            outputs: Vec::new(),
            queue: Vec::new(),
            undo_log: Vec::new(),
            frame_log: None,
        }
    }

    pub fn program(&self) -> &DataflowProgram {
        &self.program
    }

    /// Direct access for setup and tests. Mutations made here bypass the
    /// tick-boundary discipline.
    pub fn program_mut(&mut self) -> &mut DataflowProgram {
        &mut self.program
    }

    pub fn into_program(self) -> DataflowProgram {
        self.program
    }

    pub fn clock(&self) -> u64 {
        self.program.clock()
    }

    pub fn outputs(&self) -> &[VertexId] {
        &self.outputs
    }

    pub fn undo_log(&self) -> &[UndoRecord] {
        &self.undo_log
    }

    pub fn enable_frame_log(&mut self, capacity: usize) {
        self.frame_log = Some(FrameLog {
            capacity,
            entries: VecDeque::new(),
        });
    }

    pub fn frame_log(&self) -> Option<&FrameLog> {
        self.frame_log.as_ref()
    }

    /// Registers `vertex` as an output. Idempotent.
    pub fn register_output(&mut self, vertex: VertexId) -> Result<()> {
        self.program.vertex(vertex)?;
        if !self.outputs.contains(&vertex) {
            self.outputs.push(vertex);
        }
        Ok(())
    }

    /// Queues an edit for the boundary at the end of tick `tick`. Ticks in
    /// the past are applied at the next boundary.
    pub fn schedule_edit(&mut self, tick: u64, cmd: EditCommand) {
        self.enqueue(tick, QueuedCommand::Edit(cmd), None);
    }

    pub fn schedule_control(&mut self, tick: u64, event: ControlEvent) {
        self.enqueue(tick, QueuedCommand::Control(event), None);
    }

    /// Like [`Engine::schedule_edit`], tagging the report entries with `origin`.
    pub fn schedule_edit_from(&mut self, tick: u64, cmd: EditCommand, origin: u64) {
        self.enqueue(tick, QueuedCommand::Edit(cmd), Some(origin));
    }

    pub fn schedule_control_from(&mut self, tick: u64, event: ControlEvent, origin: u64) {
        self.enqueue(tick, QueuedCommand::Control(event), Some(origin));
    }

    fn enqueue(&mut self, tick: u64, command: QueuedCommand, origin: Option<u64>) {
        let at = self.queue.partition_point(|q| q.tick <= tick);
        self.queue.insert(at, Queued { tick, command, origin });
    }

    /// Edits that the next boundary will apply, in order.
    pub fn due_edits(&self) -> Vec<&EditCommand> {
        let clock = self.clock();
        self.queue
            .iter()
            .take_while(|q| q.tick <= clock)
            .filter_map(|q| match &q.command {
                QueuedCommand::Edit(e) => Some(e),
                QueuedCommand::Control(_) => None,
            })
            .collect()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Checks that every vertex of the main graph can run this tick.
    fn check_executable(&self, order: &[VertexId]) -> Result<()> {
        for v in order {
            let vx = self.program.vertex(*v)?;
            match &vx.data {
                VertexData::DynamicImage { .. } => {
                    let (inputs, controls) = self.gather(*v)?;
                    apply_transform_check(&vx.data, &inputs, &controls)?;
                }
                VertexData::Sampler {
                    kind: SamplerKind::Mixture { .. },
                    ..
                } => {
                    let n = vx
                        .sources
                        .iter()
                        .filter(|s| self.sample_of(**s).is_some())
                        .count();
                    if n < 2 {
                        return Err(CoreError::ArityMismatch {
                            transform: "Mixture",
                            expected: 2,
                            got: n,
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn sample_of(&self, v: VertexId) -> Option<i64> {
        match &self.program.vertex(v).ok()?.data {
            VertexData::Sampler { latest, .. } => Some(*latest),
            VertexData::SignedSampler { latest, .. } => Some(latest.signed_value()),
            _ => None,
        }
    }

    /// Image inputs and control values of a dynamic vertex.
    fn gather(&self, v: VertexId) -> Result<(Vec<&ImageFrame>, ResolvedControls)> {
        let vx = self.program.vertex(v)?;
        let mut inputs = Vec::new();
        let mut controls = ResolvedControls::default();
        for s in &vx.sources {
            let sx = self.program.vertex(*s)?;
            match &sx.data {
                VertexData::NumericControl { value } => {
                    controls.alpha.get_or_insert(*value);
                }
                VertexData::ClickControl { click } => {
                    controls.click.get_or_insert(*click);
                }
                VertexData::Clock => {}
                data => match data.current_frame() {
                    Some(f) => inputs.push(f),
                    None => return Err(CoreError::NotProducingFrames(*s)),
                },
            }
        }
        Ok((inputs, controls))
    }

    fn execution_order(&self) -> Vec<VertexId> {
        self.program
            .main_graph()
            .and_then(|g| self.program.flatten(g).ok())
            .unwrap_or_default()
    }

    /// Runs one full tick.
    pub fn tick(&mut self) -> Result<TickReport> {
        self.step(true)
    }

    /// Runs only the tick boundary (ramps, edits, controls, clock), without
    /// executing the graph. Used to dry-run edit schedules.
    pub fn tick_structural(&mut self) -> Result<TickReport> {
        self.step(false)
    }

    fn step(&mut self, execute: bool) -> Result<TickReport> {
        let violations = self.program.validate();
        if let Some(v) = violations.first() {
            return Err(CoreError::Invalid(v.to_string()));
        }
        let tick = self.program.clock();
        let mut report = TickReport {
            tick,
            ..TickReport::default()
        };
        if execute {
            let order = self.execution_order();
            self.check_executable(&order)?;
            report.emissions = self.draw();
            if let Some(log) = &mut self.frame_log {
                for (v, e) in &report.emissions {
                    log.entries.push_back((tick, *v, e.hash()));
                    while log.entries.len() > log.capacity {
                        log.entries.pop_front();
                    }
                }
            }
            self.apply(&order, tick)?;
            self.shift(&order);
        }
        self.boundary(tick, &mut report);
        self.program.advance_clock();
        Ok(report)
    }

    fn draw(&self) -> Vec<(VertexId, Emission)> {
        self.outputs
            .iter()
            .filter_map(|v| {
                let data = &self.program.vertex(*v).ok()?.data;
                let e = match data {
                    VertexData::Sampler { latest, .. } => Emission::Sample(*latest),
                    VertexData::SignedSampler { latest, .. } => Emission::Sample(latest.signed_value()),
                    VertexData::NumericControl { value } => {
                        Emission::Sample((value * 1e6).round() as i64)
                    }
                    other => Emission::Frame(other.current_frame()?.clone()),
                };
                Some((*v, e))
            })
            .collect()
    }

    fn apply(&mut self, order: &[VertexId], clock: u64) -> Result<()> {
        for v in order {
            let data = &self.program.vertex(*v)?.data;
            match data {
                VertexData::DynamicImage { .. } => {
                    let (inputs, controls) = self.gather(*v)?;
                    let next = apply_transform(data, &inputs, &controls, clock)?;
                    if let VertexData::DynamicImage { target_buffer, .. } =
                        &mut self.program.vertex_mut(*v)?.data
                    {
                        *target_buffer = next;
                    }
                }
                VertexData::GraphRef {
                    graph,
                    layout,
                    target_buffer,
                    ..
                } => {
                    let (w, h) = target_buffer.dims();
                    let (next_layout, rendering) = refresh_graph_ref(&self.program, *graph, layout, w, h)?;
                    if let VertexData::GraphRef {
                        layout,
                        target_buffer,
                        ..
                    } = &mut self.program.vertex_mut(*v)?.data
                    {
                        *layout = next_layout;
                        *target_buffer = rendering.frame;
                    }
                }
                VertexData::Sampler { kind, .. } => {
                    let kind = kind.clone();
                    let next_sample = match kind {
                        SamplerKind::Categorical { distribution } => {
                            distribution.sample(self.program.rng_mut()) as i64
                        }
                        SamplerKind::Mixture { alpha } => {
                            let vx = self.program.vertex(*v)?;
                            let mut samples = vx.sources.iter().filter_map(|s| self.sample_of(*s));
                            let (p, q) = (samples.next().unwrap_or(0), samples.next().unwrap_or(0));
                            let alpha = vx
                                .sources
                                .iter()
                                .find_map(|s| match self.program.vertex(*s).map(|x| &x.data) {
                                    Ok(VertexData::NumericControl { value }) => Some(*value),
                                    _ => None,
                                })
                                .unwrap_or(alpha);
                            mixture_sample(p, q, alpha, self.program.rng_mut())
                        }
                    };
                    if let VertexData::Sampler { next, .. } = &mut self.program.vertex_mut(*v)?.data {
                        *next = next_sample;
                    }
                }
                VertexData::SignedSampler { sampler, .. } => {
                    let sampler = sampler.clone();
                    let s = sampler.sample(self.program.rng_mut());
                    if let VertexData::SignedSampler { next, .. } = &mut self.program.vertex_mut(*v)?.data {
                        *next = s;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn shift(&mut self, order: &[VertexId]) {
        for v in order {
            let Ok(vx) = self.program.vertex_mut(*v) else {
                continue;
            };
            match &mut vx.data {
                VertexData::DynamicImage {
                    source_buffer,
                    target_buffer,
                    ..
                }
                | VertexData::GraphRef {
                    source_buffer,
                    target_buffer,
                    ..
                } => std::mem::swap(source_buffer, target_buffer),
                VertexData::Sampler { latest, next, .. } => *latest = *next,
                VertexData::SignedSampler { latest, next, .. } => *latest = *next,
                _ => {}
            }
        }
    }

    fn boundary(&mut self, tick: u64, report: &mut TickReport) {
        editor::advance_ramps(&mut self.program);
        let due = self.queue.partition_point(|q| q.tick <= tick);
        let drained: Vec<Queued> = self.queue.drain(..due).collect();
        let (edits, controls): (Vec<_>, Vec<_>) = drained
            .into_iter()
            .partition(|q| matches!(q.command, QueuedCommand::Edit(_)));
        for q in edits {
            let QueuedCommand::Edit(cmd) = &q.command else {
                unreachable!()
            };
            match self.apply_edit_now(cmd) {
                Ok(outcome) => report.applied.push(AppliedEdit {
                    tick,
                    origin: q.origin,
                    command: cmd.clone(),
                    outcome,
                }),
                Err(error) => report.failed.push(FailedCommand {
                    tick,
                    origin: q.origin,
                    command: q.command.clone(),
                    error,
                }),
            }
        }
        for q in controls {
            let QueuedCommand::Control(event) = &q.command else {
                unreachable!()
            };
            match self.apply_control(event, tick + 1) {
                Ok(state) => report.controls.push(AppliedControl {
                    tick,
                    origin: q.origin,
                    event: event.clone(),
                    state,
                }),
                Err(error) => report.failed.push(FailedCommand {
                    tick,
                    origin: q.origin,
                    command: q.command.clone(),
                    error,
                }),
            }
        }
    }

    /// Applies an edit immediately, keeping the output registry in step.
    /// On error the program is unchanged.
    pub fn apply_edit_now(&mut self, cmd: &EditCommand) -> Result<EditOutcome> {
        let mut scratch = self.program.clone();
        let outcome = editor::apply_edit(&mut scratch, cmd)?;
        let violations = scratch.validate();
        if let Some(v) = violations.first() {
            return Err(CoreError::Invalid(format!("edit would break {v}")));
        }
        self.program = scratch;
        for (old, new) in &outcome.redirects {
            for o in self.outputs.iter_mut() {
                if o == old {
                    *o = *new;
                }
            }
        }
        let mut seen = Vec::new();
        self.outputs
            .retain(|o| !outcome.retired.contains(o) && !seen.contains(o) && {
                seen.push(*o);
                true
            });
        if let Some(u) = &outcome.undo {
            self.undo_log.push(u.clone());
        }
        Ok(outcome)
    }

    /// Applies a control event. `restart_tick` becomes the wave's
    /// `frame_count_base`, so the next tick sees `t_rel = 0`.
    pub fn apply_control(&mut self, event: &ControlEvent, restart_tick: u64) -> Result<ControlState> {
        let target = self.check_control(event)?;
        match event.action {
            ControlAction::Value(value) => {
                if let VertexData::NumericControl { value: slot } = &mut self.program.vertex_mut(target)?.data {
                    *slot = value;
                }
                Ok(ControlState {
                    vertex: target,
                    value: Some(value),
                    center: None,
                })
            }
            ControlAction::Click([x, y]) => {
                let vx = self.program.vertex_mut(target)?;
                let state = match &mut vx.data {
                    VertexData::ClickControl { click } => click,
                    VertexData::DynamicImage {
                        transform: TransformKind::Wave { click, .. },
                        ..
                    } => click,
                    _ => return Err(CoreError::NoClickControl(target)),
                };
                state.center = Some([x, y]);
                state.frame_count_base = restart_tick;
                Ok(ControlState {
                    vertex: target,
                    value: None,
                    center: Some([x, y]),
                })
            }
        }
    }

    /// Checks an event against the current program without applying it.
    /// Returns the vertex whose state the event would change.
    pub fn check_control(&self, event: &ControlEvent) -> Result<VertexId> {
        let v = self.program.resolve_vertex(&event.vertex)?;
        match event.action {
            ControlAction::Value(value) => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(CoreError::AlphaOutOfRange(value));
                }
                self.numeric_control_for(v)
            }
            ControlAction::Click([x, y]) => {
                let target = self.click_target(v)?;
                let (w, h) = self.click_bounds(v)?;
                if !(x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64) {
                    return Err(CoreError::ClickOutOfBounds {
                        x,
                        y,
                        width: w,
                        height: h,
                    });
                }
                Ok(target)
            }
        }
    }

    fn numeric_control_for(&self, v: VertexId) -> Result<VertexId> {
        let vx = self.program.vertex(v)?;
        if matches!(vx.data, VertexData::NumericControl { .. }) {
            return Ok(v);
        }
        vx.sources
            .iter()
            .copied()
            .find(|s| matches!(self.program.vertex(*s).map(|x| &x.data), Ok(VertexData::NumericControl { .. })))
            .ok_or(CoreError::NotNumericControl(v))
    }

    /// The vertex whose click state a click on `v` changes.
    pub fn click_target(&self, v: VertexId) -> Result<VertexId> {
        let vx = self.program.vertex(v)?;
        match &vx.data {
            VertexData::ClickControl { .. } => Ok(v),
            VertexData::DynamicImage {
                transform: TransformKind::Wave { .. },
                ..
            } => Ok(vx
                .sources
                .iter()
                .copied()
                .find(|s| matches!(self.program.vertex(*s).map(|x| &x.data), Ok(VertexData::ClickControl { .. })))
                .unwrap_or(v)),
            _ => Err(CoreError::NoClickControl(v)),
        }
    }

    fn click_bounds(&self, v: VertexId) -> Result<(usize, usize)> {
        let vx = self.program.vertex(v)?;
        if let Some(f) = vx.data.current_frame() {
            return Ok(f.dims());
        }
        // a bare click control takes the frame of the first image consumer
        for c in self.program.consumers(v) {
            if let Some(f) = self.program.vertex(c)?.data.current_frame() {
                return Ok(f.dims());
            }
        }
        Err(CoreError::NoClickControl(v))
    }

    /// Runs `n_ticks` ticks, recording output hashes per tick and a snapshot
    /// after every structural edit. Any failed queued command is an error.
    pub fn run(&mut self, n_ticks: u64) -> Result<RunTrace> {
        let mut trace = RunTrace::default();
        for _ in 0..n_ticks {
            let report = self.tick()?;
            if let Some(f) = report.failed.first() {
                return Err(f.error.clone());
            }
            trace.ticks.push(TickRecord {
                tick: report.tick,
                outputs: report
                    .emissions
                    .iter()
                    .map(|(v, e)| (*v, crate::frame::hash_hex(e.hash())))
                    .collect(),
            });
            for a in report.applied.iter().filter(|a| a.command.is_structural()) {
                trace.snapshots.push(GraphSnapshot {
                    tick: a.tick,
                    command: a.command.clone(),
                    program: ProgramDoc::from_program(&self.program),
                });
            }
        }
        Ok(trace)
    }
}

fn apply_transform_check(data: &VertexData, inputs: &[&ImageFrame], _controls: &ResolvedControls) -> Result<()> {
    let VertexData::DynamicImage {
        transform,
        target_buffer,
        ..
    } = data
    else {
        return Ok(());
    };
    if inputs.len() != transform.arity() {
        return Err(CoreError::ArityMismatch {
            transform: transform.name(),
            expected: transform.arity(),
            got: inputs.len(),
        });
    }
    for f in inputs {
        if !f.same_dims(target_buffer) {
            return Err(CoreError::DimensionMismatch {
                left: f.dims(),
                right: target_buffer.dims(),
            });
        }
    }
    Ok(())
}
