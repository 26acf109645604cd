//! The synchronous core of a live session.
//!
//! Client commands are checked on arrival and queued for the next tick
//! boundary; nothing they do is visible mid-tick. Every command that the
//! boundary actually applies is appended to an interaction log, which is a
//! scenario document: replaying it headlessly gives the same manifest.

use streamgraft_core::editor;
use streamgraft_core::engine::{ControlAction, ControlEvent, Emission};
use streamgraft_core::higher_order::{layout_incremental, render_graph, LayoutConfig, LayoutState};
use streamgraft_core::scenario::{ScheduledEdit, ScriptedControl};
use streamgraft_core::{
    EditCommand, Manifest, ProgramDoc, Scenario, ScenarioDoc, ScenarioError, ScenarioRunner,
};

use crate::protocol::{ClientMessage, ServerMessage};

/// Who a message is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Audience {
    All,
    Client(u64),
}

pub type Outgoing = Vec<(Audience, ServerMessage)>;

pub const DEFAULT_TPS: f64 = 30.0;
pub const MAX_TPS: f64 = 1000.0;

pub struct LiveSession {
    scenario_doc: ScenarioDoc,
    runner: ScenarioRunner,
    log: ScenarioDoc,
    paused: bool,
    pending_steps: u32,
    tps: f64,
    view_layout: LayoutState,
    last_snapshot: Option<ServerMessage>,
    last_frames: Vec<ServerMessage>,
    failed: Option<String>,
}

impl LiveSession {
    pub fn new(scenario: &Scenario, tps: f64) -> Result<Self, ScenarioError> {
        let runner = ScenarioRunner::new(scenario, None, true)?;
        let mut log = scenario.doc.clone();
        log.ticks = 0;
        let mut s = LiveSession {
            scenario_doc: scenario.doc.clone(),
            runner,
            log,
            paused: false,
            pending_steps: 0,
            tps: tps.clamp(f64::MIN_POSITIVE, MAX_TPS),
            view_layout: LayoutState::default(),
            last_snapshot: None,
            last_frames: Vec::new(),
            failed: None,
        };
        s.last_snapshot = Some(s.snapshot());
        Ok(s)
    }

    pub fn clock(&self) -> u64 {
        self.runner.clock()
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn tps(&self) -> f64 {
        self.tps
    }

    pub fn failed(&self) -> Option<&str> {
        self.failed.as_deref()
    }

    pub fn scenario_doc(&self) -> &ScenarioDoc {
        &self.scenario_doc
    }

    /// The interaction log so far: the original scenario plus every applied
    /// client command at its application tick, with `ticks` set to the
    /// number of ticks executed.
    pub fn interaction_log(&self) -> ScenarioDoc {
        let mut log = self.log.clone();
        log.ticks = self.clock();
        log
    }

    pub fn manifest(&self) -> Manifest {
        self.runner.manifest(self.failed.is_none())
    }

    /// What a client joining now receives: the latest graph snapshot and the
    /// latest frame of every output.
    pub fn join_messages(&self) -> Vec<ServerMessage> {
        self.last_snapshot.iter().chain(self.last_frames.iter()).cloned().collect()
    }

    /// True when the pacing loop should run a tick now.
    pub fn wants_tick(&self) -> bool {
        self.failed.is_none() && (!self.paused || self.pending_steps > 0)
    }

    fn snapshot(&self) -> ServerMessage {
        let p = self.runner.engine().program();
        let grid = self.scenario_doc.grid;
        let draw_list = p
            .main_graph()
            .and_then(|g| render_graph(p, g, &self.view_layout, grid.width, grid.height).ok())
            .map(|r| r.draw_list)
            .unwrap_or_default();
        ServerMessage::GraphSnapshot {
            tick: self.clock(),
            graph: ProgramDoc::from_program(p),
            draw_list,
        }
    }

    /// Handles one client message. Replies go to the sender; state changes
    /// take effect at the next tick boundary.
    pub fn handle(&mut self, client: u64, msg: ClientMessage) -> Outgoing {
        let reply = |m: ServerMessage| vec![(Audience::Client(client), m)];
        let clock = self.clock();
        match msg {
            ClientMessage::Click { vertex, x, y } => {
                let event = ControlEvent {
                    vertex,
                    action: ControlAction::Click([x, y]),
                };
                self.queue_control(client, clock, event)
            }
            ClientMessage::SetControl { vertex, value } => {
                let event = ControlEvent {
                    vertex,
                    action: ControlAction::Value(value),
                };
                self.queue_control(client, clock, event)
            }
            ClientMessage::Edit { edit } => match self.check_edit(&edit) {
                Ok(()) => {
                    self.runner.engine_mut().schedule_edit_from(clock, edit, client);
                    Vec::new()
                }
                Err(e) => reply(ServerMessage::from_core_error(&e)),
            },
            ClientMessage::Pace { ticks_per_second } => {
                if ticks_per_second.is_finite() && ticks_per_second > 0.0 && ticks_per_second <= MAX_TPS {
                    self.tps = ticks_per_second;
                    Vec::new()
                } else {
                    reply(ServerMessage::error(
                        "invalid_value",
                        format!("ticks_per_second must be in (0, {MAX_TPS}]"),
                    ))
                }
            }
            ClientMessage::Pause => {
                self.paused = true;
                self.pending_steps = 0;
                Vec::new()
            }
            ClientMessage::Resume => {
                self.paused = false;
                Vec::new()
            }
            ClientMessage::Step => {
                if self.paused {
                    self.pending_steps += 1;
                    Vec::new()
                } else {
                    reply(ServerMessage::error("not_paused", "step is only valid while paused"))
                }
            }
        }
    }

    fn queue_control(&mut self, client: u64, clock: u64, event: ControlEvent) -> Outgoing {
        match self.runner.engine().check_control(&event) {
            Ok(_) => {
                self.runner.engine_mut().schedule_control_from(clock, event, client);
                Vec::new()
            }
            Err(e) => vec![(Audience::Client(client), ServerMessage::from_core_error(&e))],
        }
    }

    /// Dry-applies `edit` after everything already due at the next boundary.
    fn check_edit(&self, edit: &EditCommand) -> streamgraft_core::Result<()> {
        edit.check_arguments()?;
        let engine = self.runner.engine();
        let mut shadow = engine.program().clone();
        editor::advance_ramps(&mut shadow);
        for due in engine.due_edits() {
            let mut next = shadow.clone();
            if editor::apply_edit(&mut next, due).is_ok() {
                shadow = next;
            }
        }
        editor::apply_edit(&mut shadow, edit).map(|_| ())
    }

    /// Runs one tick and returns everything to broadcast.
    pub fn tick(&mut self) -> Outgoing {
        let mut out = Outgoing::new();
        if self.failed.is_some() {
            return out;
        }
        if self.paused {
            self.pending_steps = self.pending_steps.saturating_sub(1);
        }
        let (report, snapshots) = match self.runner.step() {
            Ok(r) => r,
            Err(e) => {
                let detail = e.to_string();
                self.failed = Some(detail.clone());
                out.push((Audience::All, ServerMessage::error("runtime", detail)));
                return out;
            }
        };
        let names = self.runner.registered_outputs();
        self.last_frames.clear();
        for (v, emission) in &report.emissions {
            if let Emission::Frame(f) = emission {
                let name = names.iter().find(|(_, id)| id == v).map(|(n, _)| n.as_str()).unwrap_or("");
                let m = ServerMessage::frame(*v, name, report.tick, f);
                self.last_frames.push(m.clone());
                out.push((Audience::All, m));
            }
        }
        for a in &report.applied {
            if a.origin.is_some() {
                self.log.schedule.push(ScheduledEdit {
                    tick: a.tick,
                    edit: a.command.clone(),
                });
            }
        }
        for c in &report.controls {
            if c.origin.is_some() {
                self.log.control_script.push(ScriptedControl {
                    tick: c.tick,
                    event: c.event.clone(),
                });
            }
            out.push((
                Audience::All,
                ServerMessage::ControlState {
                    tick: c.tick,
                    vertex: c.state.vertex,
                    value: c.state.value,
                    center: c.state.center,
                },
            ));
        }
        for f in &report.failed {
            let audience = f.origin.map_or(Audience::All, Audience::Client);
            out.push((audience, ServerMessage::from_core_error(&f.error)));
        }
        let p = self.runner.engine().program();
        if let Some(main) = p.main_graph() {
            if let Ok(next) = layout_incremental(p, main, &self.view_layout, &LayoutConfig::default()) {
                self.view_layout = next;
            }
        }
        let snapshot = self.snapshot();
        if !snapshots.is_empty() || report.applied.iter().any(|a| !a.command.is_structural()) {
            out.push((Audience::All, snapshot.clone()));
        }
        self.last_snapshot = Some(snapshot);
        out.push((Audience::All, ServerMessage::TickAdvanced { tick: report.tick }));
        out
    }
}
