//! Edits to a running program.
//!
//! Structural edits here are benign: applied at a tick boundary they leave
//! every observable stream unchanged, except for a one-tick delay on paths
//! that pass through a split or an S-insert. Each has an inverse that
//! restores an isomorphic program. Alpha changes are the continuous part.

use serde::{Deserialize, Serialize};

use crate::data::{SamplerKind, TransformKind, VertexData};
use crate::error::{CoreError, Result};
use crate::frame::ImageFrame;
use crate::ids::{GraphId, Ref, VertexId};
use crate::program::{DataflowGraph, DataflowProgram, DataflowVertex, Ramp};

/// Where a limited deep copy is attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    TopLevel,
    Parent(Ref),
}

/// A queued edit, as written in scenario files and on the wire.
///
/// `bind` fields name what the edit creates: the identity stage of a split
/// or the fresh vertex of an S-insert (as a label in the same graph), or the
/// graph produced by a copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditCommand {
    NodeSplit {
        target: Ref,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bind: Option<String>,
    },
    AddZeroWeightSource {
        identity_vertex: Ref,
        side_vertex: Ref,
    },
    /// Inverse of `AddZeroWeightSource`.
    DropZeroWeightSource {
        vertex: Ref,
    },
    #[serde(rename = "s_insert")]
    SInsert {
        target_vertex: Ref,
        side_vertex: Ref,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bind: Option<String>,
    },
    LimitedDeepCopy {
        graph: Ref,
        destination: Destination,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bind: Option<String>,
    },
    SetAlpha {
        vertex: Ref,
        value: f64,
    },
    RampAlpha {
        vertex: Ref,
        from: f64,
        to: f64,
        duration_ticks: u64,
    },
    MergeIdentity {
        identity_vertex: Ref,
    },
    #[serde(rename = "s_remove")]
    SRemove {
        target_vertex: Ref,
    },
    RemoveSubgraph {
        graph: Ref,
    },
    /// Abrupt source switch. Not benign; refused unless `allow_abrupt`.
    RewireSource {
        vertex: Ref,
        index: usize,
        new_source: Ref,
        #[serde(default)]
        allow_abrupt: bool,
    },
}

impl EditCommand {
    /// Structural edits change the graph; alpha edits only move coefficients.
    pub fn is_structural(&self) -> bool {
        !matches!(self, EditCommand::SetAlpha { .. } | EditCommand::RampAlpha { .. })
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            EditCommand::NodeSplit { .. } => "node_split",
            EditCommand::AddZeroWeightSource { .. } => "add_zero_weight_source",
            EditCommand::DropZeroWeightSource { .. } => "drop_zero_weight_source",
            EditCommand::SInsert { .. } => "s_insert",
            EditCommand::LimitedDeepCopy { .. } => "limited_deep_copy",
            EditCommand::SetAlpha { .. } => "set_alpha",
            EditCommand::RampAlpha { .. } => "ramp_alpha",
            EditCommand::MergeIdentity { .. } => "merge_identity",
            EditCommand::SRemove { .. } => "s_remove",
            EditCommand::RemoveSubgraph { .. } => "remove_subgraph",
            EditCommand::RewireSource { .. } => "rewire_source",
        }
    }

    /// Checks argument ranges that do not depend on program state.
    pub fn check_arguments(&self) -> Result<()> {
        match self {
            EditCommand::SetAlpha { value, .. } => check_alpha(*value),
            EditCommand::RampAlpha {
                from,
                to,
                duration_ticks,
                ..
            } => {
                check_alpha(*from)?;
                check_alpha(*to)?;
                if *duration_ticks == 0 {
                    return Err(CoreError::EmptyRamp);
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// The inverse of an applied edit, with the boundary it was applied at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndoRecord {
    pub inverse: EditCommand,
    pub tick_applied: u64,
}

/// What an applied edit did, for the engine's bookkeeping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EditOutcome {
    pub created_vertices: Vec<VertexId>,
    pub created_graph: Option<GraphId>,
    /// Ids that no longer exist.
    pub retired: Vec<VertexId>,
    /// Retired ids whose outgoing stream now comes from another vertex.
    pub redirects: Vec<(VertexId, VertexId)>,
    pub undo: Option<UndoRecord>,
}

fn check_alpha(v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CoreError::AlphaOutOfRange(v))
    }
}

fn require_image(p: &DataflowProgram, v: VertexId) -> Result<()> {
    if p.vertex(v)?.data.is_image_stream() {
        Ok(())
    } else {
        Err(CoreError::NotImageStream(v))
    }
}

/// Replaces every source reference to `from` with `to`, program-wide.
fn redirect_sources(p: &mut DataflowProgram, from: VertexId, to: VertexId) {
    let ids: Vec<VertexId> = p.vertex_ids().collect();
    for id in ids {
        let vx = p.vertex_mut(id).expect("listed");
        for s in vx.sources.iter_mut() {
            if *s == from {
                *s = to;
            }
        }
    }
}

fn move_ramps(p: &mut DataflowProgram, from: VertexId, to: VertexId) {
    for r in p.ramps.iter_mut().filter(|r| r.vertex == from) {
        r.vertex = to;
    }
}

/// A delay stage seeded with the stream's previous frame, so that its
/// output is the upstream stream shifted by exactly one tick from the first
/// post-edit tick on.
fn delay_stage(upstream: &VertexData, transform: TransformKind) -> VertexData {
    let prev = upstream
        .previous_frame()
        .cloned()
        .unwrap_or_else(|| ImageFrame::zeros(1, 1));
    VertexData::DynamicImage {
        transform,
        source_buffer: prev.clone(),
        target_buffer: prev,
    }
}

/// Replaces `a` by `b -> Identity -> c`: `b` keeps the incoming side (data
/// and sources), `c` takes every outgoing link. `a`'s id is retired.
pub fn node_split(p: &mut DataflowProgram, a: VertexId) -> Result<(VertexId, VertexId)> {
    require_image(p, a)?;
    let (old, position) = p.detach_vertex(a)?;
    let b = p.fresh_vertex_id();
    let c = p.fresh_vertex_id();
    let stage = delay_stage(&old.data, TransformKind::Identity);
    let parent = old.parent;
    p.insert_vertex_at(
        b,
        DataflowVertex {
            sources: old.sources,
            data: old.data,
            parent,
            label: old.label,
            forward_ref: None,
        },
        position,
    );
    p.insert_vertex_at(
        c,
        DataflowVertex {
            sources: vec![b],
            data: stage,
            parent,
            label: None,
            forward_ref: None,
        },
        position + 1,
    );
    redirect_sources(p, a, c);
    move_ramps(p, a, b);
    Ok((b, c))
}

fn identity_source(p: &DataflowProgram, c: VertexId) -> Result<VertexId> {
    let vx = p.vertex(c)?;
    match (&vx.data, vx.sources.as_slice()) {
        (
            VertexData::DynamicImage {
                transform: TransformKind::Identity,
                ..
            },
            [b],
        ) => Ok(*b),
        _ => Err(CoreError::WrongTransform {
            vertex: c,
            expected: "Identity with a single source",
        }),
    }
}

/// Turns `c = Identity(b)` into `c = (1 - alpha) b + alpha d` with alpha 0.
pub fn add_zero_weight_source(p: &mut DataflowProgram, c: VertexId, d: VertexId) -> Result<()> {
    let b = identity_source(p, c)?;
    require_image(p, d)?;
    let vx = p.vertex_mut(c)?;
    *vx.data.transform_mut().expect("checked") = TransformKind::SumOf2 { alpha: 0.0 };
    vx.sources = vec![b, d];
    Ok(())
}

/// Inverse of [`add_zero_weight_source`]; requires alpha exactly 0.
pub fn drop_zero_weight_source(p: &mut DataflowProgram, c: VertexId) -> Result<()> {
    let vx = p.vertex(c)?;
    let b = match (vx.data.transform(), vx.sources.as_slice()) {
        (Some(TransformKind::SumOf2 { alpha }), [b, _]) => {
            if *alpha != 0.0 {
                return Err(CoreError::NonBenign(format!("alpha is {alpha}, not 0")));
            }
            *b
        }
        _ => {
            return Err(CoreError::WrongTransform {
                vertex: c,
                expected: "SumOf2 with exactly two sources",
            })
        }
    };
    if p.ramps.iter().any(|r| r.vertex == c) {
        return Err(CoreError::NonBenign("alpha ramp in progress".into()));
    }
    let vx = p.vertex_mut(c)?;
    *vx.data.transform_mut().expect("checked") = TransformKind::Identity;
    vx.sources = vec![b];
    Ok(())
}

/// Inverse of [`node_split`]: folds `c = Identity(b)` back into `b`, which
/// must have `c` as its only consumer. Returns `b`.
pub fn merge_identity(p: &mut DataflowProgram, c: VertexId) -> Result<VertexId> {
    let b = identity_source(p, c)?;
    if b == c {
        return Err(CoreError::Precondition(format!("{c} is its own source")));
    }
    let consumers = p.consumers(b);
    if consumers != [c] {
        return Err(CoreError::Precondition(format!(
            "{b} must feed only {c}, but feeds {consumers:?}"
        )));
    }
    p.detach_vertex(c)?;
    redirect_sources(p, c, b);
    p.ramps.retain(|r| r.vertex != c);
    Ok(b)
}

/// Atomic S-insert. `target`'s data and sources move to a fresh vertex
/// placed just before it, and `target` becomes a SumOf2 of that vertex
/// (weight 1) and `side` (weight 0). Returns the fresh vertex.
pub fn s_insert(p: &mut DataflowProgram, target: VertexId, side: VertexId) -> Result<VertexId> {
    if target == side {
        return Err(CoreError::Precondition("S-insert target and side must differ".into()));
    }
    require_image(p, target)?;
    require_image(p, side)?;
    let new_vertex = p.fresh_vertex_id();
    let tv = p.vertex_mut(target)?;
    let moved_data = std::mem::replace(&mut tv.data, VertexData::Clock);
    let moved_sources = std::mem::replace(&mut tv.sources, vec![new_vertex, side]);
    let parent = tv.parent;
    tv.data = delay_stage(&moved_data, TransformKind::SumOf2 { alpha: 0.0 });
    let position = p
        .graph(parent)?
        .immediate_targets
        .iter()
        .position(|t| *t == target)
        .unwrap_or(0);
    p.insert_vertex_at(
        new_vertex,
        DataflowVertex {
            sources: moved_sources,
            data: moved_data,
            parent,
            label: None,
            forward_ref: None,
        },
        position,
    );
    move_ramps(p, target, new_vertex);
    Ok(new_vertex)
}

/// Inverse of [`s_insert`]. Requires alpha exactly 0, sources exactly
/// `[new_vertex, side]`, and `target` as the only consumer of `new_vertex`.
/// Returns the dropped side vertex.
pub fn s_remove(p: &mut DataflowProgram, target: VertexId) -> Result<VertexId> {
    let tv = p.vertex(target)?;
    let (new_vertex, side) = match (tv.data.transform(), tv.sources.as_slice()) {
        (Some(TransformKind::SumOf2 { alpha }), [n, s]) => {
            if *alpha != 0.0 {
                return Err(CoreError::NonBenign(format!("alpha is {alpha}, not 0")));
            }
            (*n, *s)
        }
        _ => {
            return Err(CoreError::WrongTransform {
                vertex: target,
                expected: "SumOf2 with exactly two sources",
            })
        }
    };
    if p.ramps.iter().any(|r| r.vertex == target) {
        return Err(CoreError::NonBenign("alpha ramp in progress".into()));
    }
    if new_vertex == target {
        return Err(CoreError::Precondition(format!("{target} is its own first source")));
    }
    if p.vertex(new_vertex)?.parent != tv.parent {
        return Err(CoreError::Precondition("first source lives in another graph".into()));
    }
    let consumers = p.consumers(new_vertex);
    if consumers != [target] || p.vertex(target)?.sources.iter().filter(|s| **s == new_vertex).count() != 1 {
        return Err(CoreError::Precondition(format!(
            "{new_vertex} must feed only {target}, but feeds {consumers:?}"
        )));
    }
    let (moved, _) = p.detach_vertex(new_vertex)?;
    let tv = p.vertex_mut(target)?;
    tv.data = moved.data;
    tv.sources = moved
        .sources
        .into_iter()
        .map(|s| if s == new_vertex { target } else { s })
        .collect();
    move_ramps(p, new_vertex, target);
    Ok(side)
}

/// Three-step limited deep copy of `g`.
///
/// 1. Recursively copy `g` into fresh graphs and vertices. Vertex data is
///    cloned so the two copies evolve independently; source lists are copied
///    verbatim; every original gets a `forward_ref` to its copy.
/// 2. Recursively walk the copy and retarget each source that has a
///    `forward_ref`. Internal edges now point into the copy; external sources
///    stay shared.
/// 3. Recursively walk the original and clear every `forward_ref`.
///
/// Only the copy's own source lists are written, so nothing outside the
/// copy gains a reference into it.
pub fn limited_deep_copy(p: &mut DataflowProgram, g: GraphId, destination: Option<GraphId>) -> Result<GraphId> {
    p.graph(g)?;
    if let Some(d) = destination {
        p.graph(d)?;
    }
    let copy = copy_graph_step1(p, g, destination)?;
    retarget_step2(p, copy)?;
    clear_step3(p, g)?;
    match destination {
        Some(d) => p.graph_mut(d)?.immediate_subgraphs.push(copy),
        None => p.push_top_level(copy),
    }
    Ok(copy)
}

fn copy_graph_step1(p: &mut DataflowProgram, g: GraphId, parent: Option<GraphId>) -> Result<GraphId> {
    let original = p.graph(g)?.clone();
    let copy = p.fresh_graph_id();
    p.insert_graph(
        copy,
        DataflowGraph {
            name: None,
            immediate_targets: Vec::new(),
            immediate_subgraphs: Vec::new(),
            parent,
        },
    );
    for v in &original.immediate_targets {
        let src = p.vertex(*v)?;
        let duplicate = DataflowVertex {
            sources: src.sources.clone(),
            data: src.data.clone(),
            parent: copy,
            label: src.label.clone(),
            forward_ref: None,
        };
        let v_copy = p.fresh_vertex_id();
        p.insert_vertex_at(v_copy, duplicate, usize::MAX);
        p.vertex_mut(*v)?.forward_ref = Some(v_copy);
    }
    for s in &original.immediate_subgraphs {
        let s_copy = copy_graph_step1(p, *s, Some(copy))?;
        p.graph_mut(copy)?.immediate_subgraphs.push(s_copy);
    }
    Ok(copy)
}

fn retarget_step2(p: &mut DataflowProgram, copy: GraphId) -> Result<()> {
    let graph = p.graph(copy)?.clone();
    for v in &graph.immediate_targets {
        let sources = p.vertex(*v)?.sources.clone();
        let remapped: Vec<VertexId> = sources
            .iter()
            .map(|w| p.vertex(*w).ok().and_then(|wx| wx.forward_ref).unwrap_or(*w))
            .collect();
        p.vertex_mut(*v)?.sources = remapped;
    }
    for s in &graph.immediate_subgraphs {
        retarget_step2(p, *s)?;
    }
    Ok(())
}

fn clear_step3(p: &mut DataflowProgram, g: GraphId) -> Result<()> {
    let graph = p.graph(g)?.clone();
    for v in &graph.immediate_targets {
        p.vertex_mut(*v)?.forward_ref = None;
    }
    for s in &graph.immediate_subgraphs {
        clear_step3(p, *s)?;
    }
    Ok(())
}

/// Deletes `g` with everything below it. Refused while anything outside
/// still reads from inside, or for the main graph.
pub fn remove_subgraph(p: &mut DataflowProgram, g: GraphId) -> Result<Vec<VertexId>> {
    if p.main_graph() == Some(g) {
        return Err(CoreError::Precondition("cannot remove the main graph".into()));
    }
    let graphs = p.graph_closure(g)?;
    let inside: Vec<VertexId> = p.flatten(g)?;
    for id in p.vertex_ids() {
        if inside.contains(&id) {
            continue;
        }
        let vx = p.vertex(id)?;
        if vx.sources.iter().any(|s| inside.contains(s)) {
            return Err(CoreError::InboundReference { graph: g, from: id });
        }
        if let VertexData::GraphRef { graph, .. } = &vx.data {
            if graphs.contains(graph) {
                return Err(CoreError::InboundReference { graph: g, from: id });
            }
        }
    }
    for v in &inside {
        p.detach_vertex(*v)?;
    }
    for sub in graphs.iter().rev() {
        p.detach_graph(*sub)?;
    }
    p.ramps.retain(|r| !inside.contains(&r.vertex));
    Ok(inside)
}

enum AlphaSlot {
    Transform,
    Mixture,
}

fn alpha_slot(p: &DataflowProgram, v: VertexId) -> Result<AlphaSlot> {
    let vx = p.vertex(v)?;
    let slot = match &vx.data {
        VertexData::DynamicImage {
            transform: TransformKind::SumOf2 { .. },
            ..
        } => AlphaSlot::Transform,
        VertexData::Sampler {
            kind: SamplerKind::Mixture { .. },
            ..
        } => AlphaSlot::Mixture,
        _ => {
            return Err(CoreError::WrongTransform {
                vertex: v,
                expected: "SumOf2 or mixture sampler",
            })
        }
    };
    let controlled = vx.sources.iter().any(|s| {
        matches!(p.vertex(*s).map(|x| &x.data), Ok(VertexData::NumericControl { .. }))
    });
    if controlled {
        return Err(CoreError::AlphaControlled(v));
    }
    Ok(slot)
}

/// Current stored alpha of a SumOf2 vertex or mixture sampler.
pub fn alpha_of(p: &DataflowProgram, v: VertexId) -> Result<f64> {
    match &p.vertex(v)?.data {
        VertexData::DynamicImage {
            transform: TransformKind::SumOf2 { alpha },
            ..
        }
        | VertexData::Sampler {
            kind: SamplerKind::Mixture { alpha },
            ..
        } => Ok(*alpha),
        _ => Err(CoreError::WrongTransform {
            vertex: v,
            expected: "SumOf2 or mixture sampler",
        }),
    }
}

fn write_alpha(p: &mut DataflowProgram, v: VertexId, value: f64) -> Result<()> {
    match &mut p.vertex_mut(v)?.data {
        VertexData::DynamicImage {
            transform: TransformKind::SumOf2 { alpha },
            ..
        }
        | VertexData::Sampler {
            kind: SamplerKind::Mixture { alpha },
            ..
        } => {
            *alpha = value;
            Ok(())
        }
        _ => Err(CoreError::WrongTransform {
            vertex: v,
            expected: "SumOf2 or mixture sampler",
        }),
    }
}

/// Sets alpha and cancels any ramp on `v`. Returns the previous value.
pub fn set_alpha(p: &mut DataflowProgram, v: VertexId, value: f64) -> Result<f64> {
    check_alpha(value)?;
    alpha_slot(p, v)?;
    let old = alpha_of(p, v)?;
    write_alpha(p, v, value)?;
    p.ramps.retain(|r| r.vertex != v);
    Ok(old)
}

/// Starts a linear ramp: alpha is `from` now and steps toward `to` at each
/// of the next `duration_ticks` boundaries, landing on `to` exactly.
pub fn ramp_alpha(p: &mut DataflowProgram, v: VertexId, from: f64, to: f64, duration_ticks: u64) -> Result<()> {
    check_alpha(from)?;
    check_alpha(to)?;
    if duration_ticks == 0 {
        return Err(CoreError::EmptyRamp);
    }
    alpha_slot(p, v)?;
    write_alpha(p, v, from)?;
    p.ramps.retain(|r| r.vertex != v);
    p.ramps.push(Ramp {
        vertex: v,
        from,
        to,
        duration_ticks,
        elapsed: 0,
    });
    Ok(())
}

/// Moves every active ramp one boundary forward and drops finished ones.
pub fn advance_ramps(p: &mut DataflowProgram) {
    let mut ramps = std::mem::take(&mut p.ramps);
    for r in ramps.iter_mut() {
        r.elapsed += 1;
        let value = r.value();
        if write_alpha(p, r.vertex, value).is_err() {
            r.elapsed = r.duration_ticks;
        }
    }
    ramps.retain(|r| r.elapsed < r.duration_ticks);
    p.ramps = ramps;
}

/// Abrupt switch of one source. Outside the benign vocabulary; only
/// available for comparison experiments.
pub fn rewire_source(
    p: &mut DataflowProgram,
    v: VertexId,
    index: usize,
    new_source: VertexId,
    allow_abrupt: bool,
) -> Result<VertexId> {
    if !allow_abrupt {
        return Err(CoreError::NonBenign("abrupt rewiring needs allow_abrupt".into()));
    }
    p.vertex(new_source)?;
    let vx = p.vertex_mut(v)?;
    let slot = vx
        .sources
        .get_mut(index)
        .ok_or_else(|| CoreError::Precondition(format!("{v} has no source #{index}")))?;
    Ok(std::mem::replace(slot, new_source))
}

fn label_new(p: &mut DataflowProgram, v: VertexId, bind: &Option<String>) -> Result<()> {
    if let Some(label) = bind {
        p.set_label(v, Some(label.clone()))?;
    }
    Ok(())
}

/// Resolves a command's references and applies it.
pub fn apply_edit(p: &mut DataflowProgram, cmd: &EditCommand) -> Result<EditOutcome> {
    cmd.check_arguments()?;
    let tick = p.clock();
    let undo = |inverse: EditCommand| {
        Some(UndoRecord {
            inverse,
            tick_applied: tick,
        })
    };
    let mut out = EditOutcome::default();
    match cmd {
        EditCommand::NodeSplit { target, bind } => {
            let a = p.resolve_vertex(target)?;
            let (b, c) = node_split(p, a)?;
            label_new(p, c, bind)?;
            out.created_vertices = vec![b, c];
            out.retired = vec![a];
            out.redirects = vec![(a, c)];
            out.undo = undo(EditCommand::MergeIdentity {
                identity_vertex: c.into(),
            });
        }
        EditCommand::AddZeroWeightSource {
            identity_vertex,
            side_vertex,
        } => {
            let c = p.resolve_vertex(identity_vertex)?;
            let d = p.resolve_vertex(side_vertex)?;
            add_zero_weight_source(p, c, d)?;
            out.undo = undo(EditCommand::DropZeroWeightSource { vertex: c.into() });
        }
        EditCommand::DropZeroWeightSource { vertex } => {
            let c = p.resolve_vertex(vertex)?;
            let d = p.vertex(c)?.sources.get(1).copied();
            drop_zero_weight_source(p, c)?;
            if let Some(d) = d {
                out.undo = undo(EditCommand::AddZeroWeightSource {
                    identity_vertex: c.into(),
                    side_vertex: d.into(),
                });
            }
        }
        EditCommand::SInsert {
            target_vertex,
            side_vertex,
            bind,
        } => {
            let t = p.resolve_vertex(target_vertex)?;
            let s = p.resolve_vertex(side_vertex)?;
            let n = s_insert(p, t, s)?;
            label_new(p, n, bind)?;
            out.created_vertices = vec![n];
            out.undo = undo(EditCommand::SRemove {
                target_vertex: t.into(),
            });
        }
        EditCommand::LimitedDeepCopy {
            graph,
            destination,
            bind,
        } => {
            let g = p.resolve_graph(graph)?;
            let dest = match destination {
                Destination::TopLevel => None,
                Destination::Parent(r) => Some(p.resolve_graph(r)?),
            };
            if let Some(name) = bind {
                if p.graph_by_name(name).is_some() {
                    return Err(CoreError::Precondition(format!("graph name {name:?} already used")));
                }
            }
            let copy = limited_deep_copy(p, g, dest)?;
            if let Some(name) = bind {
                p.set_graph_name(copy, name)?;
            }
            out.created_vertices = p.flatten(copy)?;
            out.created_graph = Some(copy);
            out.undo = undo(EditCommand::RemoveSubgraph { graph: copy.into() });
        }
        EditCommand::SetAlpha { vertex, value } => {
            let v = p.resolve_vertex(vertex)?;
            let old = set_alpha(p, v, *value)?;
            out.undo = undo(EditCommand::SetAlpha {
                vertex: v.into(),
                value: old,
            });
        }
        EditCommand::RampAlpha {
            vertex,
            from,
            to,
            duration_ticks,
        } => {
            let v = p.resolve_vertex(vertex)?;
            ramp_alpha(p, v, *from, *to, *duration_ticks)?;
            out.undo = undo(EditCommand::RampAlpha {
                vertex: v.into(),
                from: *to,
                to: *from,
                duration_ticks: *duration_ticks,
            });
        }
        EditCommand::MergeIdentity { identity_vertex } => {
            let c = p.resolve_vertex(identity_vertex)?;
            let b = merge_identity(p, c)?;
            out.retired = vec![c];
            out.redirects = vec![(c, b)];
            out.undo = undo(EditCommand::NodeSplit {
                target: b.into(),
                bind: None,
            });
        }
        EditCommand::SRemove { target_vertex } => {
            let t = p.resolve_vertex(target_vertex)?;
            let n = p.vertex(t)?.sources.first().copied();
            let side = s_remove(p, t)?;
            if let Some(n) = n {
                out.retired = vec![n];
                out.redirects = vec![(n, t)];
            }
            out.undo = undo(EditCommand::SInsert {
                target_vertex: t.into(),
                side_vertex: side.into(),
                bind: None,
            });
        }
        EditCommand::RemoveSubgraph { graph } => {
            let g = p.resolve_graph(graph)?;
            out.retired = remove_subgraph(p, g)?;
        }
        EditCommand::RewireSource {
            vertex,
            index,
            new_source,
            allow_abrupt,
        } => {
            let v = p.resolve_vertex(vertex)?;
            let s = p.resolve_vertex(new_source)?;
            let old = rewire_source(p, v, *index, s, *allow_abrupt)?;
            out.undo = undo(EditCommand::RewireSource {
                vertex: v.into(),
                index: *index,
                new_source: old.into(),
                allow_abrupt: true,
            });
        }
    }
    Ok(out)
}
