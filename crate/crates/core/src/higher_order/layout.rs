use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frame::fnv1a64;
use crate::ids::{GraphId, VertexId};
use crate::program::DataflowProgram;

/// Vertex positions in the unit square, carried from tick to tick.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutState {
    /// Written as `[[id, [x, y]], ...]`; integer map keys do not survive
    /// every serde path.
    #[serde(with = "as_pairs")]
    pub positions: BTreeMap<VertexId, [f64; 2]>,
}

mod as_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    use crate::ids::VertexId;

    pub fn serialize<S: Serializer>(m: &BTreeMap<VertexId, [f64; 2]>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<VertexId, [f64; 2]>, D::Error> {
        Ok(Vec::<(VertexId, [f64; 2])>::deserialize(d)?.into_iter().collect())
    }
}

impl LayoutState {
    pub fn get(&self, v: VertexId) -> Option<[f64; 2]> {
        self.positions.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutConfig {
    /// Largest distance any existing vertex moves in one step.
    pub step_bound: f64,
    pub repulsion: f64,
    pub spring: f64,
    pub spring_length: f64,
    pub gravity: f64,
    /// Positions are kept in `[margin, 1 - margin]`.
    pub margin: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            step_bound: 0.02,
            repulsion: 0.004,
            spring: 0.2,
            spring_length: 0.22,
            gravity: 0.05,
            margin: 0.08,
        }
    }
}

/// Where a vertex first appears; a pure function of its id.
pub fn seed_position(v: VertexId, margin: f64) -> [f64; 2] {
    let h = fnv1a64(&v.0.to_le_bytes());
    let span = 1.0 - 2.0 * margin;
    let a = (h & 0xffff_ffff) as f64 / u32::MAX as f64;
    let b = (h >> 32) as f64 / u32::MAX as f64;
    [margin + span * a, margin + span * b]
}

/// One deterministic force-directed step over the flattening of `graph`.
///
/// Vertices already in `prev` move by at most `step_bound`; new vertices
/// enter at [`seed_position`]; vertices no longer in the graph are dropped.
pub fn layout_incremental(
    program: &DataflowProgram,
    graph: GraphId,
    prev: &LayoutState,
    config: &LayoutConfig,
) -> Result<LayoutState> {
    let members = program.flatten(graph)?;
    let member_set: BTreeSet<VertexId> = members.iter().copied().collect();
    let current: Vec<(VertexId, [f64; 2], bool)> = members
        .iter()
        .map(|v| match prev.get(*v) {
            Some(p) => (*v, p, true),
            None => (*v, seed_position(*v, config.margin), false),
        })
        .collect();
    let index: BTreeMap<VertexId, usize> = current.iter().enumerate().map(|(i, c)| (c.0, i)).collect();

    let mut force = vec![[0.0f64; 2]; current.len()];
    for i in 0..current.len() {
        for j in (i + 1)..current.len() {
            let (pi, pj) = (current[i].1, current[j].1);
            let (dx, dy) = (pi[0] - pj[0], pi[1] - pj[1]);
            let d2 = (dx * dx + dy * dy).max(1e-4);
            let f = config.repulsion / d2;
            let d = d2.sqrt();
            force[i][0] += f * dx / d;
            force[i][1] += f * dy / d;
            force[j][0] -= f * dx / d;
            force[j][1] -= f * dy / d;
        }
    }
    for v in &members {
        let vx = program.vertex(*v)?;
        for s in vx.sources.iter().filter(|s| member_set.contains(s)) {
            if s == v {
                continue;
            }
            let (i, j) = (index[v], index[s]);
            let (pi, pj) = (current[i].1, current[j].1);
            let (dx, dy) = (pj[0] - pi[0], pj[1] - pi[1]);
            let d = (dx * dx + dy * dy).sqrt().max(1e-6);
            let f = config.spring * (d - config.spring_length);
            force[i][0] += f * dx / d;
            force[i][1] += f * dy / d;
            force[j][0] -= f * dx / d;
            force[j][1] -= f * dy / d;
        }
    }

    let lo = config.margin;
    let hi = 1.0 - config.margin;
    let mut out = LayoutState::default();
    for (i, (v, p, existed)) in current.iter().enumerate() {
        if !existed {
            out.positions.insert(*v, *p);
            continue;
        }
        let mut f = force[i];
        f[0] += config.gravity * (0.5 - p[0]);
        f[1] += config.gravity * (0.5 - p[1]);
        let mag = (f[0] * f[0] + f[1] * f[1]).sqrt();
        if mag > config.step_bound {
            let k = config.step_bound / mag;
            f = [f[0] * k, f[1] * k];
        }
        let mut next = [(p[0] + f[0]).clamp(lo, hi), (p[1] + f[1]).clamp(lo, hi)];
        // clamping only shortens the move, but keep the bound exact
        let moved = ((next[0] - p[0]).powi(2) + (next[1] - p[1]).powi(2)).sqrt();
        if moved > config.step_bound {
            next = *p;
        }
        out.positions.insert(*v, next);
    }
    Ok(out)
}
