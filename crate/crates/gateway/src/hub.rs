//! Transport-independent service core. A [`Hub`] owns the sessions; each
//! client is a [`Connection`] whose [`Outbox`] the transport drains.
//!
//! Every session sits behind its own mutex, so events on one session are
//! applied, logged and fanned out in a single total order while different
//! sessions proceed in parallel. Planning and explanation run under that
//! lock: a session's queue waits for its own planner, nobody else's.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, Weak};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use arwac_core::autonomy::{
    read_log, replay, write_log_line, Decision, Event, LogRecord, Notification, Phase, Session, SessionConfig,
    SessionError, TrustLevel,
};
use arwac_core::explain::ContrastiveQuery;
use arwac_core::field::{FieldModel, Threshold, WeedMap};
use arwac_core::planner::{SearchConfig, WeedingProblemConfig};
use arwac_core::sim::RobotConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Notify;

use crate::protocol::{decode, parse_topic, salvage_id, topic_name, BridgeMessage, Op, TopicKind, WireError};

pub const SERVICES: [&str; 19] = [
    "create_session",
    "set_trust_level",
    "append_action",
    "undo_last",
    "commit_draft",
    "propose",
    "challenge",
    "challenge_plan",
    "resolve",
    "start",
    "pause",
    "resume",
    "abort",
    "get_state",
    "load_map",
    "select_targets",
    "edit_cell",
    "describe_trust_levels",
    "list_services",
];

const DEFAULT_TRUST_TEXT: &str = include_str!("../resources/trust_levels.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TickMode {
    /// Run the whole mission inside the call that starts or resumes it.
    Immediate,
    /// Advance one step per period on a background thread.
    Paced { ticks_per_second: f64 },
}

#[derive(Debug, Clone)]
pub struct HubConfig {
    pub tick: TickMode,
    /// Directory of per-session event logs; sessions found there are
    /// replayed on start.
    pub store: Option<PathBuf>,
    /// Queued frames per connection before snapshot topics coalesce.
    pub backlog: usize,
    pub trust_text: Option<PathBuf>,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig {
            tick: TickMode::Immediate,
            store: None,
            backlog: 256,
            trust_text: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HubError {
    #[error("session store {path}: {source}")]
    Store { path: PathBuf, source: std::io::Error },
    #[error("session log {path}: {source}")]
    Log {
        path: PathBuf,
        source: arwac_core::autonomy::SessionLogError,
    },
    #[error("trust level text: {0}")]
    TrustText(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustLevelText {
    pub name: TrustLevel,
    pub title: String,
    pub description: String,
}

#[derive(Deserialize)]
struct TrustTextFile {
    level: Vec<TrustLevelText>,
}

fn parse_trust_text(text: &str) -> Result<Vec<TrustLevelText>, HubError> {
    let file: TrustTextFile = toml::from_str(text).map_err(|e| HubError::TrustText(e.to_string()))?;
    for t in TrustLevel::ALL {
        if !file.level.iter().any(|l| l.name == t) {
            return Err(HubError::TrustText(format!("no entry for {t:?}")));
        }
    }
    Ok(file.level)
}

struct Queued {
    msg: BridgeMessage,
    /// Latest-value topics may be overwritten in place by a newer frame.
    coalesce: bool,
}

/// Ordered frames waiting for the transport. Pushing never blocks.
pub struct Outbox {
    queue: Mutex<VecDeque<Queued>>,
    notify: Notify,
    backlog: usize,
}

impl Outbox {
    fn new(backlog: usize) -> Self {
        Outbox {
            queue: Mutex::new(VecDeque::new()),
            notify: Notify::new(),
            backlog,
        }
    }

    fn push(&self, mut msg: BridgeMessage, coalesce: bool) {
        msg.stamp = Some(now_ms());
        let mut q = self.queue.lock().unwrap();
        if coalesce && q.len() >= self.backlog {
            // Replace the newest frame on this topic if it is itself a
            // snapshot, so per-topic order is kept.
            if let Some(last) = q.iter_mut().rev().find(|m| m.msg.topic == msg.topic) {
                if last.coalesce {
                    last.msg = msg;
                    return;
                }
            }
        }
        q.push_back(Queued { msg, coalesce });
        drop(q);
        self.notify.notify_one();
    }

    /// Queue a frame that must never be dropped.
    pub fn push_frame(&self, msg: BridgeMessage) {
        self.push(msg, false);
    }

    pub fn drain(&self) -> Vec<BridgeMessage> {
        self.queue.lock().unwrap().drain(..).map(|q| q.msg).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Resolves once something has been pushed since the last wakeup.
    pub async fn ready(&self) {
        self.notify.notified().await
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct Connection {
    id: u64,
    outbox: Arc<Outbox>,
    topics: Mutex<BTreeSet<String>>,
}

impl Connection {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn outbox(&self) -> &Arc<Outbox> {
        &self.outbox
    }

    fn send(&self, msg: BridgeMessage) {
        self.outbox.push(msg, false);
    }
}

struct SlotInner {
    session: Session,
    log: Option<(PathBuf, File)>,
    subscribers: BTreeMap<TopicKind, Vec<(u64, Weak<Outbox>)>>,
    ticking: bool,
}

struct Slot {
    id: String,
    inner: Mutex<SlotInner>,
}

impl Slot {
    fn lock(&self) -> MutexGuard<'_, SlotInner> {
        // A panic mid-event would already have been a bug; keep serving.
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl SlotInner {
    fn publish(&mut self, session: &str, kind: TopicKind, payload: Value, coalesce: bool) {
        let Some(subs) = self.subscribers.get_mut(&kind) else { return };
        subs.retain(|(_, w)| w.strong_count() > 0);
        let topic = topic_name(session, kind);
        for (_, w) in subs.iter() {
            if let Some(outbox) = w.upgrade() {
                outbox.push(BridgeMessage::event(topic.clone(), payload.clone()), coalesce);
            }
        }
    }

    fn publish_all(&mut self, session: &str, notes: &[Notification]) {
        for n in notes {
            let payload = serde_json::to_value(n).expect("notifications serialize");
            match n {
                Notification::PhaseChanged { .. } => {}
                Notification::PlanChanged { .. } | Notification::Explained { .. } => {
                    self.publish(session, TopicKind::Plan, payload, false)
                }
                Notification::Step { .. } => self.publish(session, TopicKind::Telemetry, payload, true),
                Notification::Metrics { .. } => self.publish(session, TopicKind::Metrics, payload, true),
                Notification::MissionFinished { .. } => self.publish(session, TopicKind::Metrics, payload, false),
            }
        }
        let snapshot = serde_json::to_value(self.session.snapshot()).expect("snapshots serialize");
        self.publish(session, TopicKind::State, snapshot, true);
    }

    fn append_log(&mut self, record: &LogRecord) {
        if let Some((path, file)) = self.log.as_mut() {
            let line = write_log_line(record);
            if let Err(e) = file.write_all(line.as_bytes()).and_then(|_| file.flush()) {
                tracing::error!(path = %path.display(), error = %e, "session log write failed");
            }
        }
    }

    /// Apply, log and fan out one event.
    fn apply(&mut self, session: &str, event: Event) -> Result<Vec<Notification>, SessionError> {
        let notes = self.session.apply(event.clone())?;
        self.append_log(&LogRecord::Event { event });
        self.publish_all(session, &notes);
        Ok(notes)
    }
}

pub struct Hub {
    cfg: HubConfig,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    next_session: AtomicU64,
    next_conn: AtomicU64,
    trust_text: Vec<TrustLevelText>,
}

fn payload<T: DeserializeOwned>(msg: &BridgeMessage) -> Result<T, WireError> {
    let value = if msg.payload.is_null() {
        json!({})
    } else {
        msg.payload.clone()
    };
    serde_json::from_value(value).map_err(|e| WireError::new("invalid_payload", e.to_string()))
}

fn session_error(e: SessionError) -> WireError {
    WireError::new(e.code(), e.to_string())
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreatePayload {
    session_id: Option<String>,
    map: Option<WeedMap>,
    field: Option<FieldModel>,
    threshold: Option<Threshold>,
    trust: Option<TrustLevel>,
    problem: Option<WeedingProblemConfig>,
    search: Option<SearchConfig>,
    robot: Option<RobotConfig>,
    seed: Option<u64>,
    #[serde(default = "yes")]
    subscribe: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Target {
    session_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetTrustPayload {
    session_id: String,
    level: TrustLevel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AppendPayload {
    session_id: String,
    action: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CommitPayload {
    session_id: String,
    #[serde(default)]
    partial: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposePayload {
    session_id: String,
    #[serde(default)]
    search: Option<SearchConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChallengePayload {
    session_id: String,
    #[serde(default)]
    queries: Vec<ContrastiveQuery>,
    /// The same queries in the textual foil grammar.
    #[serde(default)]
    foils: Vec<String>,
}

#[derive(Deserialize)]
struct ResolvePayload {
    session_id: String,
    #[serde(flatten)]
    decision: Decision,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadMapPayload {
    session_id: String,
    map: WeedMap,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectTargetsPayload {
    session_id: String,
    threshold: Threshold,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EditCellPayload {
    session_id: String,
    cell: usize,
    probability: f64,
}

impl Hub {
    pub fn new(cfg: HubConfig) -> Result<Arc<Self>, HubError> {
        let trust_text = match &cfg.trust_text {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| HubError::Store {
                    path: path.clone(),
                    source,
                })?;
                parse_trust_text(&text)?
            }
            None => parse_trust_text(DEFAULT_TRUST_TEXT)?,
        };
        let hub = Arc::new(Hub {
            cfg,
            sessions: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
            next_conn: AtomicU64::new(1),
            trust_text,
        });
        if let Some(dir) = hub.cfg.store.clone() {
            hub.restore(&dir)?;
        }
        Ok(hub)
    }

    fn restore(self: &Arc<Self>, dir: &Path) -> Result<(), HubError> {
        let store_err = |source| HubError::Store {
            path: dir.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(store_err)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(store_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(store_err)?;
            let log_err = |source| HubError::Log {
                path: path.clone(),
                source,
            };
            let session = replay(&read_log(&text).map_err(log_err)?).map_err(log_err)?;
            let file = OpenOptions::new().append(true).open(&path).map_err(store_err)?;
            let id = session.id().to_string();
            tracing::info!(session = %id, events = session.log().len(), phase = %session.phase(), "session restored");
            let slot = Arc::new(Slot {
                id: id.clone(),
                inner: Mutex::new(SlotInner {
                    session,
                    log: Some((path, file)),
                    subscribers: BTreeMap::new(),
                    ticking: false,
                }),
            });
            self.sessions.lock().unwrap().insert(id, slot.clone());
            let mut inner = slot.lock();
            self.drive(&slot, &mut inner);
        }
        Ok(())
    }

    pub fn config(&self) -> &HubConfig {
        &self.cfg
    }

    pub fn connect(&self) -> Arc<Connection> {
        Arc::new(Connection {
            id: self.next_conn.fetch_add(1, Ordering::Relaxed),
            outbox: Arc::new(Outbox::new(self.cfg.backlog)),
            topics: Mutex::new(BTreeSet::new()),
        })
    }

    pub fn disconnect(&self, conn: &Connection) {
        let topics = std::mem::take(&mut *conn.topics.lock().unwrap());
        for topic in topics {
            if let Some((id, kind)) = parse_topic(&topic) {
                if let Some(slot) = self.slot(id) {
                    if let Some(subs) = slot.lock().subscribers.get_mut(&kind) {
                        subs.retain(|(c, _)| *c != conn.id);
                    }
                }
            }
        }
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Run `f` against a session, for inspection.
    pub fn with_session<R>(&self, id: &str, f: impl FnOnce(&Session) -> R) -> Option<R> {
        self.slot(id).map(|s| f(&s.lock().session))
    }

    fn slot(&self, id: &str) -> Option<Arc<Slot>> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    fn target(&self, id: &str) -> Result<Arc<Slot>, WireError> {
        self.slot(id)
            .ok_or_else(|| WireError::new("unknown_session", format!("no session {id:?}")))
    }

    /// Handle one inbound text frame; everything it produces goes to the
    /// connection's outbox (and to subscribers).
    pub fn handle_text(self: &Arc<Self>, conn: &Connection, text: &str) {
        match decode(text) {
            Ok(msg) => self.handle(conn, msg),
            Err(e) => conn.send(BridgeMessage::error(salvage_id(text), &e)),
        }
    }

    pub fn handle(self: &Arc<Self>, conn: &Connection, msg: BridgeMessage) {
        let id = msg.id.clone();
        let result = match msg.op {
            Op::Call => self.call(conn, &msg),
            Op::Subscribe => self.subscribe(conn, &msg),
            Op::Unsubscribe => self.unsubscribe(conn, &msg),
            op => Err(WireError::new(
                "unsupported_op",
                format!("clients may send call, subscribe or unsubscribe, not {op:?}"),
            )),
        };
        if let Err(e) = result {
            tracing::debug!(code = e.code, message = %e.message, "call refused");
            conn.send(BridgeMessage::error(id, &e));
        }
    }

    fn subscribe(&self, conn: &Connection, msg: &BridgeMessage) -> Result<(), WireError> {
        let topic = msg
            .topic
            .as_deref()
            .ok_or_else(|| WireError::new("invalid_payload", "subscribe needs a topic"))?;
        let (id, kind) =
            parse_topic(topic).ok_or_else(|| WireError::new("unknown_topic", format!("no topic {topic:?}")))?;
        let slot = self.target(id)?;
        let mut inner = slot.lock();
        self.attach(conn, &slot, &mut inner, kind);
        conn.send(BridgeMessage::reply(msg, json!({ "topic": topic })));
        if kind == TopicKind::State {
            let snapshot = serde_json::to_value(inner.session.snapshot()).expect("snapshots serialize");
            conn.outbox.push(BridgeMessage::event(topic.to_string(), snapshot), true);
        }
        Ok(())
    }

    fn attach(&self, conn: &Connection, slot: &Slot, inner: &mut SlotInner, kind: TopicKind) {
        let subs = inner.subscribers.entry(kind).or_default();
        if !subs.iter().any(|(c, _)| *c == conn.id) {
            subs.push((conn.id, Arc::downgrade(&conn.outbox)));
        }
        conn.topics.lock().unwrap().insert(topic_name(&slot.id, kind));
    }

    fn unsubscribe(&self, conn: &Connection, msg: &BridgeMessage) -> Result<(), WireError> {
        let topic = msg
            .topic
            .as_deref()
            .ok_or_else(|| WireError::new("invalid_payload", "unsubscribe needs a topic"))?;
        let (id, kind) =
            parse_topic(topic).ok_or_else(|| WireError::new("unknown_topic", format!("no topic {topic:?}")))?;
        if let Some(slot) = self.slot(id) {
            if let Some(subs) = slot.lock().subscribers.get_mut(&kind) {
                subs.retain(|(c, _)| *c != conn.id);
            }
        }
        conn.topics.lock().unwrap().remove(topic);
        conn.send(BridgeMessage::reply(msg, json!({ "topic": topic })));
        Ok(())
    }

    fn call(self: &Arc<Self>, conn: &Connection, msg: &BridgeMessage) -> Result<(), WireError> {
        let service = msg
            .service
            .as_deref()
            .ok_or_else(|| WireError::new("invalid_payload", "call needs a service"))?;
        let event = match service {
            "create_session" => return self.create(conn, msg),
            "list_services" => {
                conn.send(BridgeMessage::reply(msg, json!({ "services": SERVICES })));
                return Ok(());
            }
            "describe_trust_levels" => {
                conn.send(BridgeMessage::reply(msg, json!({ "levels": self.trust_text })));
                return Ok(());
            }
            "get_state" => {
                let p: Target = payload(msg)?;
                let slot = self.target(&p.session_id)?;
                let snapshot = slot.lock().session.snapshot();
                conn.send(BridgeMessage::reply(msg, json!({ "snapshot": snapshot })));
                return Ok(());
            }
            "set_trust_level" => {
                let p: SetTrustPayload = payload(msg)?;
                (p.session_id, Event::SetTrust { level: p.level })
            }
            "append_action" => {
                let p: AppendPayload = payload(msg)?;
                (p.session_id, Event::AppendAction { action: p.action })
            }
            "undo_last" => (payload::<Target>(msg)?.session_id, Event::UndoLast),
            "commit_draft" => {
                let p: CommitPayload = payload(msg)?;
                (p.session_id, Event::CommitDraft { partial: p.partial })
            }
            "propose" => {
                let p: ProposePayload = payload(msg)?;
                (p.session_id, Event::Propose { search: p.search })
            }
            "challenge" | "challenge_plan" => {
                let p: ChallengePayload = payload(msg)?;
                let mut queries = p.queries;
                for text in &p.foils {
                    queries.push(ContrastiveQuery::parse(text).map_err(|e| WireError::new("invalid_foil", e.to_string()))?);
                }
                (p.session_id, Event::Challenge { queries })
            }
            "resolve" => {
                let p: ResolvePayload = payload(msg)?;
                (p.session_id, Event::Resolve { decision: p.decision })
            }
            "start" => (payload::<Target>(msg)?.session_id, Event::Start),
            "pause" => (payload::<Target>(msg)?.session_id, Event::Pause),
            "resume" => (payload::<Target>(msg)?.session_id, Event::Resume),
            "abort" => (payload::<Target>(msg)?.session_id, Event::Abort),
            "load_map" => {
                let p: LoadMapPayload = payload(msg)?;
                (p.session_id, Event::LoadMap { map: p.map })
            }
            "select_targets" => {
                let p: SelectTargetsPayload = payload(msg)?;
                (p.session_id, Event::SetThreshold { threshold: p.threshold })
            }
            "edit_cell" => {
                let p: EditCellPayload = payload(msg)?;
                (
                    p.session_id,
                    Event::EditCell {
                        cell: p.cell,
                        probability: p.probability,
                    },
                )
            }
            other => {
                return Err(WireError::new(
                    "unknown_service",
                    format!("no service {other:?}; see list_services"),
                ))
            }
        };
        let (session_id, event) = event;
        let slot = self.target(&session_id)?;
        let mut inner = slot.lock();
        let notes = inner.apply(&slot.id, event).map_err(session_error)?;
        let snapshot = inner.session.snapshot();
        let mut reply = json!({ "snapshot": snapshot });
        for n in &notes {
            if let Notification::Explained { index, explanation } = n {
                reply["index"] = json!(index);
                reply["explanation"] = serde_json::to_value(explanation).expect("explanations serialize");
            }
        }
        if service == "select_targets" {
            reply["targets"] = json!(snapshot.targets);
        }
        conn.send(BridgeMessage::reply(msg, reply));
        self.drive(&slot, &mut inner);
        Ok(())
    }

    fn create(self: &Arc<Self>, conn: &Connection, msg: &BridgeMessage) -> Result<(), WireError> {
        let p: CreatePayload = payload(msg)?;
        let field = match (p.field, p.map) {
            (Some(f), None) => f,
            (None, Some(m)) => FieldModel::open(m),
            _ => return Err(WireError::new("invalid_payload", "give exactly one of map or field")),
        };
        let mut sessions = self.sessions.lock().unwrap();
        let id = match p.session_id {
            Some(id) if !valid_session_id(&id) => {
                return Err(WireError::new(
                    "invalid_payload",
                    "session_id must be 1-64 characters of [A-Za-z0-9_-]",
                ))
            }
            Some(id) if sessions.contains_key(&id) => {
                return Err(WireError::new("session_exists", format!("session {id:?} already exists")))
            }
            Some(id) => id,
            None => loop {
                let id = format!("s{}", self.next_session.fetch_add(1, Ordering::Relaxed));
                if !sessions.contains_key(&id) {
                    break id;
                }
            },
        };
        let cfg = SessionConfig {
            id: id.clone(),
            field,
            threshold: p.threshold.unwrap_or_default(),
            trust: p.trust.unwrap_or_default(),
            problem: p.problem.unwrap_or_default(),
            search: p.search.unwrap_or_default(),
            robot: p.robot.unwrap_or_default(),
            seed: p.seed.unwrap_or(0),
        };
        let session = Session::new(cfg.clone()).map_err(session_error)?;
        let log = match &self.cfg.store {
            Some(dir) => {
                let path = dir.join(format!("{id}.jsonl"));
                let file = File::create(&path)
                    .map_err(|e| WireError::new("store_failed", format!("{}: {e}", path.display())))?;
                Some((path, file))
            }
            None => None,
        };
        let slot = Arc::new(Slot {
            id: id.clone(),
            inner: Mutex::new(SlotInner {
                session,
                log,
                subscribers: BTreeMap::new(),
                ticking: false,
            }),
        });
        let mut inner = slot.lock();
        inner.append_log(&LogRecord::Create { config: Box::new(cfg) });
        sessions.insert(id.clone(), slot.clone());
        drop(sessions);
        tracing::info!(session = %id, "session created");
        let snapshot = inner.session.snapshot();
        conn.send(BridgeMessage::reply(msg, json!({ "session_id": id, "snapshot": snapshot })));
        if p.subscribe {
            for kind in TopicKind::ALL {
                self.attach(conn, &slot, &mut inner, kind);
            }
            let snapshot = serde_json::to_value(snapshot).expect("snapshots serialize");
            inner.publish(&id, TopicKind::State, snapshot, true);
        }
        Ok(())
    }

    /// Keep an executing session moving according to the tick mode.
    fn drive(self: &Arc<Self>, slot: &Arc<Slot>, inner: &mut SlotInner) {
        if inner.session.phase() != Phase::Executing {
            return;
        }
        match self.cfg.tick {
            TickMode::Immediate => {
                while inner.session.phase() == Phase::Executing {
                    if let Err(e) = inner.apply(&slot.id, Event::Tick) {
                        tracing::error!(session = %slot.id, error = %e, "tick failed");
                        break;
                    }
                }
            }
            TickMode::Paced { ticks_per_second } if !inner.ticking => {
                inner.ticking = true;
                let period = Duration::from_secs_f64(1.0 / ticks_per_second.max(1e-3));
                let slot = slot.clone();
                std::thread::spawn(move || pace(slot, period));
            }
            TickMode::Paced { .. } => {}
        }
    }
}

fn pace(slot: Arc<Slot>, period: Duration) {
    loop {
        std::thread::sleep(period);
        let mut inner = slot.lock();
        if inner.session.phase() != Phase::Executing {
            inner.ticking = false;
            return;
        }
        if let Err(e) = inner.apply(&slot.id, Event::Tick) {
            tracing::error!(session = %slot.id, error = %e, "tick failed");
            inner.ticking = false;
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip() -> Value {
        json!({"width": 3, "height": 1, "cell_size": 1.0, "origin_e": 0.0, "origin_n": 0.0, "probs": [0.0, 0.0, 1.0]})
    }

    fn call(hub: &Arc<Hub>, conn: &Connection, service: &str, payload: Value) -> Vec<BridgeMessage> {
        hub.handle(conn, BridgeMessage::call("1", service, payload));
        conn.outbox.drain()
    }

    #[test]
    fn create_and_errors() {
        let hub = Hub::new(HubConfig::default()).unwrap();
        let c = hub.connect();
        let out = call(&hub, &c, "create_session", json!({"map": strip(), "session_id": "a"}));
        assert_eq!(out[0].op, Op::Reply);
        assert_eq!(out[0].payload["session_id"], "a");
        assert_eq!(out[1].topic.as_deref(), Some("/session/a/state"));
        assert_eq!(out[1].payload["phase"], "idle");
        let out = call(&hub, &c, "create_session", json!({"map": strip(), "session_id": "a"}));
        assert_eq!(out[0].payload["code"], "session_exists");
        let out = call(&hub, &c, "create_session", json!({"map": strip(), "mapp": 1}));
        assert_eq!(out[0].payload["code"], "invalid_payload");
        let out = call(&hub, &c, "warp", json!({}));
        assert_eq!(out[0].payload["code"], "unknown_service");
        let out = call(&hub, &c, "get_state", json!({"session_id": "zz"}));
        assert_eq!(out[0].payload["code"], "unknown_session");
        let out = call(&hub, &c, "append_action", json!({"session_id": "a", "action": "(fly c0)"}));
        assert_eq!(out[0].payload["code"], "foreign_action");
        assert_eq!(out[0].id.as_deref(), Some("1"));
    }

    #[test]
    fn coalescing_keeps_topic_order() {
        let o = Outbox::new(2);
        let ev = |t: &str, n: i64| BridgeMessage::event(t.into(), json!(n));
        o.push(ev("a", 1), true);
        o.push(ev("b", 1), false);
        o.push(ev("a", 2), true);
        o.push(ev("b", 2), false);
        o.push(ev("a", 3), true);
        let got: Vec<(String, Value)> = o.drain().into_iter().map(|m| (m.topic.unwrap(), m.payload)).collect();
        // Once the backlog is reached each "a" overwrites the previous pending "a".
        let want: Vec<(String, Value)> = [("a", 3), ("b", 1), ("b", 2)]
            .into_iter()
            .map(|(t, n)| (t.to_string(), json!(n)))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn trust_text_resource() {
        let levels = parse_trust_text(DEFAULT_TRUST_TEXT).unwrap();
        assert_eq!(levels.len(), 3);
        assert!(parse_trust_text("[[level]]\nname = \"low_trust\"\ntitle = \"x\"\ndescription = \"y\"\n").is_err());
    }
}
