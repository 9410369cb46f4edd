//! Seeded cell-resolution simulator of the weeding rover.
//!
//! Randomness is counter-based. Both generators are ChaCha8 with a 256-bit
//! key made of the mission seed (little-endian, bytes 0..8) and an ASCII
//! domain tag (bytes 8..): `truth` for ground-truth sampling, `steps` for
//! action outcomes. The stream number selects the draw: the cell index for
//! ground truth, the tick number for step outcomes. A cell's weed status and
//! a tick's outcome therefore never depend on query order.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::{CellIndex, FieldModel};
use crate::pddl::GroundAtom;
use crate::planner::parse_cell_object;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotConfig {
    /// kg
    pub mass: f64,
    /// cells per tick
    pub speed: f64,
    pub battery_capacity: f64,
    pub energy_per_move: f64,
    pub energy_per_weed: f64,
    pub p_kill: f64,
    pub p_crop_damage: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig {
            mass: 250.0,
            speed: 1.0,
            battery_capacity: 1000.0,
            energy_per_move: 1.0,
            energy_per_weed: 2.0,
            p_kill: 0.9,
            p_crop_damage: 0.02,
        }
    }
}

impl RobotConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidConfig(what.to_string()));
        let finite = [
            self.mass,
            self.speed,
            self.battery_capacity,
            self.energy_per_move,
            self.energy_per_weed,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("values must be finite");
        }
        if self.mass <= 0.0 {
            return bad("mass must be positive");
        }
        if self.speed <= 0.0 {
            return bad("speed must be positive");
        }
        if self.battery_capacity <= 0.0 {
            return bad("battery capacity must be positive");
        }
        if self.energy_per_move < 0.0 || self.energy_per_weed < 0.0 {
            return bad("energies must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.p_kill) || !(0.0..=1.0).contains(&self.p_crop_damage) {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }

    /// Ticks needed to cross one cell.
    pub fn ticks_per_move(&self) -> u64 {
        (1.0 / self.speed).ceil().max(1.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid robot configuration: {0}")]
    InvalidConfig(String),
    #[error("simulator is not running ({0:?})")]
    NotRunning(SimStatus),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SimStatus {
    Ok,
    BatteryEmpty,
    Faulted { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimAction {
    Move { from: CellIndex, to: CellIndex },
    Weed { cell: CellIndex },
}

impl SimAction {
    /// Read a weeding-domain action label such as `(move c0 c1)`.
    pub fn from_label(label: &str) -> Option<Self> {
        let atom = GroundAtom::parse(label)?;
        let cells: Option<Vec<CellIndex>> = atom.args.iter().map(|a| parse_cell_object(a)).collect();
        match (atom.predicate.as_str(), cells?.as_slice()) {
            ("move", &[from, to]) => Some(SimAction::Move { from, to }),
            ("weed", &[cell]) => Some(SimAction::Weed { cell }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepResult {
    Moved,
    Weeded { killed: bool, damaged: bool },
    BatteryEmpty,
    Faulted { reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsDelta {
    pub weeds_removed: u64,
    pub crops_damaged: u64,
    pub distance_cells: u64,
    pub energy_used: f64,
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub tick: u64,
    pub action: String,
    pub result: StepResult,
    pub robot_cell: CellIndex,
    pub battery: f64,
    pub metrics_delta: MetricsDelta,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MissionMetrics {
    pub weeds_present_initially: u64,
    pub weeds_removed: u64,
    pub crops_damaged: u64,
    pub distance_cells: u64,
    pub energy_used: f64,
    pub max_passes_per_cell: u64,
    pub ticks_elapsed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub tick: u64,
    pub robot: CellIndex,
    pub battery: f64,
    /// Ground-truth weeds still standing.
    pub weedy: BTreeSet<CellIndex>,
    pub cleared: BTreeSet<CellIndex>,
    pub damaged: BTreeSet<CellIndex>,
    pub passes: Vec<u64>,
    pub status: SimStatus,
}

fn keyed_rng(seed: u64, tag: &[u8], stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..8 + tag.len()].copy_from_slice(tag);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Whether `cell` truly holds weeds, for a map probability `p`.
pub fn sample_weedy(seed: u64, cell: CellIndex, p: f64) -> bool {
    keyed_rng(seed, b"truth", cell as u64).random::<f64>() < p
}

/// One simulated mission: a field, a robot and a seed.
#[derive(Debug, Clone)]
pub struct Simulator {
    field: FieldModel,
    cfg: RobotConfig,
    seed: u64,
    state: SimState,
    metrics: MissionMetrics,
}

impl Simulator {
    pub fn new(field: FieldModel, cfg: RobotConfig, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let state = reset(&field, &cfg, seed);
        let metrics = MissionMetrics {
            weeds_present_initially: state.weedy.len() as u64,
            max_passes_per_cell: 1,
            ..Default::default()
        };
        Ok(Simulator {
            field,
            cfg,
            seed,
            state,
            metrics,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn metrics(&self) -> &MissionMetrics {
        &self.metrics
    }

    pub fn field(&self) -> &FieldModel {
        &self.field
    }

    pub fn config(&self) -> &RobotConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn halt(&mut self, label: &str, status: SimStatus, result: StepResult) -> StepEvent {
        self.state.status = status;
        StepEvent {
            tick: self.state.tick,
            action: label.to_string(),
            result,
            robot_cell: self.state.robot,
            battery: self.state.battery,
            metrics_delta: MetricsDelta::default(),
        }
    }

    fn fault(&mut self, label: &str, reason: String) -> StepEvent {
        self.halt(
            label,
            SimStatus::Faulted { reason: reason.clone() },
            StepResult::Faulted { reason },
        )
    }

    /// Execute one action label. Illegal actions fault the robot; running
    /// out of battery leaves the action unapplied.
    pub fn step(&mut self, label: &str) -> Result<StepEvent, SimError> {
        if self.state.status != SimStatus::Ok {
            return Err(SimError::NotRunning(self.state.status.clone()));
        }
        let Some(action) = SimAction::from_label(label) else {
            return Ok(self.fault(label, format!("{label} is not a rover command")));
        };
        let robot = self.state.robot;
        let need = match action {
            SimAction::Move { from, to } => {
                if from != robot {
                    return Ok(self.fault(label, format!("robot is at cell {robot}, not {from}")));
                }
                if to >= self.field.map().len() || self.field.is_blocked(to) {
                    return Ok(self.fault(label, format!("cell {to} is blocked or off the field")));
                }
                if !self.field.map().neighbors(from).any(|n| n == to) {
                    return Ok(self.fault(label, format!("cell {to} is not adjacent to {from}")));
                }
                self.cfg.energy_per_move
            }
            SimAction::Weed { cell } => {
                if cell != robot {
                    return Ok(self.fault(label, format!("robot is at cell {robot}, not {cell}")));
                }
                self.cfg.energy_per_weed
            }
        };
        if self.state.battery < need {
            return Ok(self.halt(label, SimStatus::BatteryEmpty, StepResult::BatteryEmpty));
        }

        self.state.battery -= need;
        let mut delta = MetricsDelta {
            energy_used: need,
            ..Default::default()
        };
        let result = match action {
            SimAction::Move { to, .. } => {
                self.state.robot = to;
                self.state.passes[to] += 1;
                delta.distance_cells = 1;
                delta.ticks = self.cfg.ticks_per_move();
                self.metrics.max_passes_per_cell = self.metrics.max_passes_per_cell.max(self.state.passes[to]);
                StepResult::Moved
            }
            SimAction::Weed { cell } => {
                // Both draws happen on every weed action so the damage outcome
                // does not depend on whether a weed was there.
                let mut rng = keyed_rng(self.seed, b"steps", self.state.tick);
                let kill_draw = rng.random::<f64>();
                let damage_draw = rng.random::<f64>();
                let killed = self.state.weedy.contains(&cell) && kill_draw < self.cfg.p_kill;
                if killed {
                    self.state.weedy.remove(&cell);
                    self.state.cleared.insert(cell);
                    delta.weeds_removed = 1;
                }
                let damaged = damage_draw < self.cfg.p_crop_damage;
                if damaged && self.state.damaged.insert(cell) {
                    delta.crops_damaged = 1;
                }
                delta.ticks = 1;
                StepResult::Weeded { killed, damaged }
            }
        };
        self.state.tick += delta.ticks;
        self.metrics.weeds_removed += delta.weeds_removed;
        self.metrics.crops_damaged += delta.crops_damaged;
        self.metrics.distance_cells += delta.distance_cells;
        self.metrics.energy_used += delta.energy_used;
        self.metrics.ticks_elapsed += delta.ticks;
        Ok(StepEvent {
            tick: self.state.tick,
            action: label.to_string(),
            result,
            robot_cell: self.state.robot,
            battery: self.state.battery,
            metrics_delta: delta,
        })
    }

    /// Stop in place: no further steps are accepted.
    pub fn halt_in_place(&mut self, reason: &str) {
        if self.state.status == SimStatus::Ok {
            self.state.status = SimStatus::Faulted {
                reason: reason.to_string(),
            };
        }
    }
}

/// Initial state: robot at home, battery full, ground truth sampled.
pub fn reset(field: &FieldModel, cfg: &RobotConfig, seed: u64) -> SimState {
    let map = field.map();
    let weedy = (0..map.len())
        .filter(|&c| sample_weedy(seed, c, map.probs()[c]))
        .collect();
    let mut passes = vec![0; map.len()];
    passes[field.home()] = 1;
    SimState {
        tick: 0,
        robot: field.home(),
        battery: cfg.battery_capacity,
        weedy,
        cleared: BTreeSet::new(),
        damaged: BTreeSet::new(),
        passes,
        status: SimStatus::Ok,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionOutcome {
    pub state: SimState,
    pub metrics: MissionMetrics,
    pub trace: Vec<StepEvent>,
}

/// Run a whole plan, halting early on an empty battery or a fault.
pub fn run_mission<S: AsRef<str>>(
    field: &FieldModel,
    cfg: &RobotConfig,
    seed: u64,
    steps: &[S],
) -> Result<MissionOutcome, SimError> {
    let mut sim = Simulator::new(field.clone(), cfg.clone(), seed)?;
    let mut trace = Vec::with_capacity(steps.len());
    for label in steps {
        let event = sim.step(label.as_ref())?;
        trace.push(event);
        if sim.state.status != SimStatus::Ok {
            break;
        }
    }
    Ok(MissionOutcome {
        state: sim.state,
        metrics: sim.metrics,
        trace,
    })
}

/// One JSON object per line.
pub fn trace_to_jsonl(trace: &[StepEvent]) -> String {
    let mut out = String::new();
    for e in trace {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{RowAxis, WeedMap};

    fn line(p: f64) -> FieldModel {
        FieldModel::open(WeedMap::uniform(3, 1, p).unwrap())
    }

    #[test]
    fn degenerate_maps() {
        for seed in 0..50 {
            assert!(reset(&line(0.0), &RobotConfig::default(), seed).weedy.is_empty());
            assert_eq!(reset(&line(1.0), &RobotConfig::default(), seed).weedy.len(), 3);
        }
    }

    #[test]
    fn faults_and_battery() {
        let cfg = RobotConfig {
            battery_capacity: 3.5,
            p_kill: 1.0,
            ..Default::default()
        };
        let out = run_mission(&line(1.0), &cfg, 7, &["(move c0 c1)", "(weed c1)", "(move c1 c2)"]).unwrap();
        assert_eq!(out.state.status, SimStatus::BatteryEmpty);
        assert_eq!(out.trace.len(), 3);
        assert_eq!(out.trace[2].result, StepResult::BatteryEmpty);
        assert_eq!(out.state.robot, 1);
        assert_eq!(out.metrics.energy_used, 3.0);

        let out = run_mission(&line(1.0), &RobotConfig::default(), 7, &["(move c0 c2)", "(weed c0)"]).unwrap();
        assert!(matches!(out.state.status, SimStatus::Faulted { .. }));
        assert_eq!(out.trace.len(), 1);
        let out = run_mission(&line(1.0), &RobotConfig::default(), 7, &["(weed c1)"]).unwrap();
        assert!(matches!(out.trace[0].result, StepResult::Faulted { .. }));

        let blocked = FieldModel::new(WeedMap::uniform(3, 1, 0.0).unwrap(), RowAxis::ByRow, [1].into(), 0).unwrap();
        let out = run_mission(&blocked, &RobotConfig::default(), 0, &["(move c0 c1)"]).unwrap();
        assert!(matches!(out.state.status, SimStatus::Faulted { .. }));
    }

    #[test]
    fn kill_probability_extremes() {
        for (p_kill, expect) in [(1.0, 0), (0.0, 1)] {
            let cfg = RobotConfig {
                p_kill,
                ..Default::default()
            };
            for seed in 0..100 {
                let out = run_mission(&line(1.0), &cfg, seed, &["(weed c0)"]).unwrap();
                assert_eq!(out.state.weedy.contains(&0) as usize, expect);
            }
        }
    }

    #[test]
    fn labels() {
        assert_eq!(SimAction::from_label("(MOVE c3 c4)"), Some(SimAction::Move { from: 3, to: 4 }));
        assert_eq!(SimAction::from_label("(weed c3 c4)"), None);
        assert_eq!(SimAction::from_label("(weed x)"), None);
        assert!(RobotConfig { p_kill: 1.5, ..Default::default() }.validate().is_err());
        assert_eq!(RobotConfig { speed: 0.5, ..Default::default() }.ticks_per_move(), 2);
    }
}
