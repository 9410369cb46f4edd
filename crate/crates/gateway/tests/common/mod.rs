#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Duration;

use arwac_core::field::{save_weed_map, MapFormat, WeedMap};
use arwac_gateway::{BridgeMessage, Hub, HubConfig, Op};
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

pub const SEED: u64 = 11;

/// 4×3 field with a handful of likely weeds.
pub fn field_map() -> WeedMap {
    #[rustfmt::skip]
    let probs = vec![
        0.1, 0.8, 0.2, 0.6,
        0.0, 0.3, 0.9, 0.1,
        0.7, 0.2, 0.4, 0.95,
    ];
    WeedMap::new(4, 3, 0.5, (10.0, 20.0), probs).unwrap()
}

/// 3×2 field used by the golden transcript.
pub fn small_map() -> WeedMap {
    WeedMap::new(3, 2, 1.0, (0.0, 0.0), vec![0.0, 0.9, 0.2, 0.1, 0.3, 0.8]).unwrap()
}

pub fn map_json(map: &WeedMap) -> Value {
    serde_json::to_value(map).unwrap()
}

pub fn write_map(dir: &Path, map: &WeedMap) -> PathBuf {
    let path = dir.join("field.csv");
    std::fs::write(&path, save_weed_map(map, MapFormat::GridCsv)).unwrap();
    path
}

pub fn arwac(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_arwac")).args(args).output().expect("arwac runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn plan_labels(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split(';').next().unwrap().trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Start a gateway on an ephemeral port; the hub lives as long as the runtime.
pub async fn start_server(cfg: HubConfig) -> (String, Arc<Hub>) {
    let hub = Hub::new(cfg).unwrap();
    let (addr, server) = arwac_gateway::server::bind(hub.clone(), "127.0.0.1:0").await.unwrap();
    tokio::spawn(server);
    (format!("ws://{addr}/ws"), hub)
}

pub struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    next: u64,
    /// Every frame sent and received, in order, as ("out"|"in", frame).
    pub transcript: Vec<(String, BridgeMessage)>,
    /// Events received while waiting for replies, not yet consumed.
    pub events: Vec<BridgeMessage>,
}

impl Client {
    pub async fn connect(url: &str) -> Client {
        let (ws, _) = connect_async(url).await.expect("websocket connects");
        Client {
            ws,
            next: 0,
            transcript: Vec::new(),
            events: Vec::new(),
        }
    }

    pub async fn send(&mut self, msg: BridgeMessage) {
        self.transcript.push(("out".into(), msg.clone()));
        self.ws.send(Message::text(msg.to_json())).await.unwrap();
    }

    pub async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::text(text.to_string())).await.unwrap();
    }

    pub async fn recv(&mut self) -> BridgeMessage {
        loop {
            let frame = tokio::time::timeout(Duration::from_secs(30), self.ws.next())
                .await
                .expect("gateway answers in time")
                .expect("stream open")
                .expect("frame readable");
            if let Message::Text(t) = frame {
                let msg: BridgeMessage = serde_json::from_str(t.as_str()).unwrap();
                self.transcript.push(("in".into(), msg.clone()));
                return msg;
            }
        }
    }

    /// Call a service and return its reply or error frame.
    pub async fn call(&mut self, service: &str, payload: Value) -> BridgeMessage {
        self.next += 1;
        let id = self.next.to_string();
        self.send(BridgeMessage::call(id.clone(), service, payload)).await;
        loop {
            let m = self.recv().await;
            if matches!(m.op, Op::Reply | Op::Error) && m.id.as_deref() == Some(id.as_str()) {
                return m;
            }
            self.events.push(m);
        }
    }

    pub async fn ok(&mut self, service: &str, payload: Value) -> Value {
        let m = self.call(service, payload.clone()).await;
        assert_eq!(m.op, Op::Reply, "{service} {payload}: {:?}", m.payload);
        m.payload
    }

    /// Wait for an event whose payload `type` is `kind` (already-queued first).
    pub async fn event(&mut self, kind: &str) -> BridgeMessage {
        if let Some(i) = self.events.iter().position(|e| e.payload["type"] == kind) {
            return self.events.remove(i);
        }
        loop {
            let m = self.recv().await;
            if m.op == Op::Event && m.payload["type"] == kind {
                return m;
            }
            self.events.push(m);
        }
    }
}

/// Transcript with volatile fields removed, one JSON document per line.
pub fn normalize(transcript: &[(String, BridgeMessage)]) -> String {
    let mut out = String::new();
    for (dir, msg) in transcript {
        let mut v = serde_json::to_value(msg).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("stamp");
        if obj.contains_key("id") {
            obj.insert("id".into(), json!("<id>"));
        }
        out.push_str(&serde_json::to_string(&json!({ "dir": dir, "frame": v })).unwrap());
        out.push('\n');
    }
    out
}

pub fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/partial_trust.jsonl")
}

/// The scripted PartialTrust session behind the golden transcript.
pub async fn golden_script(url: &str) -> String {
    let mut c = Client::connect(url).await;
    let search = json!({"mode": "optimal"});
    c.ok(
        "create_session",
        json!({"session_id": "golden", "map": map_json(&small_map()), "seed": 5, "search": search}),
    )
    .await;
    c.ok("set_trust_level", json!({"session_id": "golden", "level": "partial_trust"})).await;
    c.ok("propose", json!({"session_id": "golden"})).await;
    c.ok("challenge", json!({"session_id": "golden", "foils": ["forbid (move c0 c1)"]})).await;
    c.ok("resolve", json!({"session_id": "golden", "decision": "accept"})).await;
    c.ok("start", json!({"session_id": "golden"})).await;
    c.event("mission_finished").await;
    c.ok("get_state", json!({"session_id": "golden"})).await;
    normalize(&c.transcript)
}

/// Outcome of the cross-interface check, for the acceptance runner.
pub struct Equivalence {
    pub passed: bool,
    pub detail: String,
}

fn metrics_of(doc: &Value) -> Value {
    doc["metrics"].clone()
}

/// Drive LowTrust and PartialTrust sessions over the wire and compare their
/// final metrics with `arwac simulate` on the same plan and seed; then
/// replay the golden transcript.
pub async fn gateway_equivalence() -> Equivalence {
    let mut problems = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let map = field_map();
    let map_path = write_map(dir.path(), &map);
    let plan_path = dir.path().join("plan.txt");
    let seed = SEED.to_string();
    let (code, _, err) = arwac(&[
        "plan",
        "--map",
        map_path.to_str().unwrap(),
        "--optimal",
        "--out",
        plan_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let plan_text = std::fs::read_to_string(&plan_path).unwrap();
    let steps = plan_labels(&plan_text);

    // The CLI plan must be optimal by the independent grid search.
    let g = arwac_testkit::GridInstance {
        width: 4,
        height: 3,
        blocked: Default::default(),
        home: 0,
        targets: (0..map.len()).filter(|&c| map.probs()[c] >= 0.5).collect(),
        move_cost: 1.into(),
        weed_cost: 1.into(),
        return_home: false,
    };
    let cli_cost = plan_text.lines().last().unwrap().to_string();
    let oracle = g.optimal_cost().unwrap();
    if !cli_cost.contains(&format!("cost = {oracle} ")) {
        problems.push(format!("CLI plan cost line {cli_cost:?}, oracle {oracle}"));
    }

    let simulate = |plan: &Path| {
        let (code, out, err) = arwac(&[
            "simulate",
            "--map",
            map_path.to_str().unwrap(),
            "--plan",
            plan.to_str().unwrap(),
            "--seed",
            &seed,
            "--json",
        ]);
        assert_eq!(code, 0, "{err}");
        serde_json::from_str::<Value>(&out).unwrap()
    };
    let headless = simulate(&plan_path);

    let (url, _hub) = start_server(HubConfig {
        backlog: 1 << 16,
        ..Default::default()
    })
    .await;
    let mut c = Client::connect(&url).await;
    let created = c
        .ok("create_session", json!({"map": map_json(&map), "seed": SEED}))
        .await;
    let low = created["session_id"].as_str().unwrap().to_string();
    for s in &steps {
        c.ok("append_action", json!({"session_id": low, "action": s})).await;
    }
    c.ok("commit_draft", json!({"session_id": low})).await;
    c.ok("start", json!({"session_id": low})).await;
    let low_done = c.event("mission_finished").await;
    if metrics_of(&low_done.payload) != metrics_of(&headless) {
        problems.push(format!(
            "LowTrust wire metrics {} differ from CLI {}",
            metrics_of(&low_done.payload),
            metrics_of(&headless)
        ));
    }

    let created = c
        .ok(
            "create_session",
            json!({"map": map_json(&map), "seed": SEED, "trust": "partial_trust", "search": {"mode": "optimal"}}),
        )
        .await;
    let partial = created["session_id"].as_str().unwrap().to_string();
    let proposed = c.ok("propose", json!({"session_id": partial})).await;
    let proposal: Vec<String> = serde_json::from_value(proposed["snapshot"]["proposal"]["steps"].clone()).unwrap();
    c.ok("resolve", json!({"session_id": partial, "decision": "accept"})).await;
    c.ok("start", json!({"session_id": partial})).await;
    let partial_done = c.event("mission_finished").await;
    let proposal_path = dir.path().join("proposal.txt");
    std::fs::write(&proposal_path, proposal.join("\n")).unwrap();
    let headless_partial = simulate(&proposal_path);
    if metrics_of(&partial_done.payload) != metrics_of(&headless_partial) {
        problems.push(format!(
            "PartialTrust wire metrics {} differ from CLI {}",
            metrics_of(&partial_done.payload),
            metrics_of(&headless_partial)
        ));
    }

    let golden = std::fs::read_to_string(golden_path()).unwrap_or_default();
    let replayed = golden_script(&url).await;
    if replayed != golden {
        problems.push("golden transcript differs".into());
    }

    let removed = metrics_of(&headless)["weeds_removed"].clone();
    Equivalence {
        passed: problems.is_empty(),
        detail: if problems.is_empty() {
            format!(
                "LowTrust ({} steps, cost {oracle}, {removed} weeds removed) and PartialTrust wire metrics equal the CLI runs at seed {SEED}; golden transcript ({} frames) matches",
                steps.len(),
                golden.lines().count()
            )
        } else {
            problems.join("; ")
        },
    }
}

pub async fn golden_script_on_new_hub() -> String {
    let (url, _hub) = start_server(HubConfig {
        backlog: 1 << 16,
        ..Default::default()
    })
    .await;
    golden_script(&url).await
}
