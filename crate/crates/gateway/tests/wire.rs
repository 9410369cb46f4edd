mod common;

use std::time::Duration;

use arwac_gateway::{BridgeMessage, Hub, HubConfig, Op, TickMode};
use arwac_testkit::gen;
use common::{map_json, small_map, Client};
use serde_json::json;

async fn server() -> String {
    common::start_server(HubConfig::default()).await.0
}

async fn created(c: &mut Client, extra: serde_json::Value) -> String {
    let mut payload = json!({"map": map_json(&small_map()), "seed": 2});
    for (k, v) in extra.as_object().unwrap() {
        payload[k] = v.clone();
    }
    let reply = c.ok("create_session", payload).await;
    reply["session_id"].as_str().unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread")]
async fn create_session_publishes_idle_state() {
    let url = server().await;
    let mut c = Client::connect(&url).await;
    let id = created(&mut c, json!({})).await;
    let state = c.recv().await;
    assert_eq!(state.op, Op::Event);
    assert_eq!(state.topic.unwrap(), format!("/session/{id}/state"));
    assert_eq!(state.payload["phase"], "idle");
    assert_eq!(state.schema_version, "1");
}

#[tokio::test(flavor = "multi_thread")]
async fn error_codes() {
    let url = server().await;
    let mut c = Client::connect(&url).await;
    let m = c.call("teleport", json!({})).await;
    assert_eq!((m.op, m.payload["code"].as_str()), (Op::Error, Some("unknown_service")));
    assert!(m.payload["message"].as_str().unwrap().contains("teleport"));

    let id = created(&mut c, json!({})).await;
    let m = c.call("append_action", json!({"session_id": id, "action": "(weed c9)"})).await;
    assert_eq!(m.payload["code"], "foreign_action");
    let m = c.call("append_action", json!({"session_id": id, "action": "(weed c1)"})).await;
    assert_eq!(m.payload["code"], "precondition_unsatisfied");
    let m = c.call("propose", json!({"session_id": id})).await;
    assert_eq!(m.payload["code"], "illegal_phase");
    let m = c.call("propose", json!({"session_id": id, "bogus": 1})).await;
    assert_eq!(m.payload["code"], "invalid_payload");
    let m = c.call("get_state", json!({"session_id": "nobody"})).await;
    assert_eq!(m.payload["code"], "unknown_session");

    c.send_raw("{not json").await;
    let m = c.recv().await;
    assert_eq!((m.op, m.payload["code"].as_str()), (Op::Error, Some("malformed_message")));
    c.send_raw(r#"{"op":"call","id":"v9","service":"get_state","schema_version":"9"}"#).await;
    let m = c.recv().await;
    assert_eq!(m.payload["code"], "unsupported_schema_version");
    assert_eq!(m.id.as_deref(), Some("v9"));
    // The connection survives all of that.
    let services = c.ok("list_services", json!({})).await;
    assert!(services["services"].as_array().unwrap().len() >= 15);
    let levels = c.ok("describe_trust_levels", json!({})).await;
    assert_eq!(levels["levels"].as_array().unwrap().len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn set_trust_during_execution_is_illegal() {
    let (url, _hub) = common::start_server(HubConfig {
        tick: TickMode::Paced { ticks_per_second: 2.0 },
        ..Default::default()
    })
    .await;
    let mut c = Client::connect(&url).await;
    let id = created(&mut c, json!({"trust": "full_trust"})).await;
    let started = c.ok("start", json!({"session_id": id})).await;
    assert_eq!(started["snapshot"]["phase"], "executing");
    let m = c.call("set_trust_level", json!({"session_id": id, "level": "low_trust"})).await;
    assert_eq!(m.op, Op::Error);
    assert_eq!(m.payload["code"], "illegal_phase");

    // Pause holds the step counter; resume continues from it.
    let paused = c.ok("pause", json!({"session_id": id})).await;
    let at_pause = paused["snapshot"]["executed"].as_u64().unwrap();
    tokio::time::sleep(Duration::from_millis(1200)).await;
    let state = c.ok("get_state", json!({"session_id": id})).await;
    assert_eq!(state["snapshot"]["executed"].as_u64().unwrap(), at_pause);
    c.ok("resume", json!({"session_id": id})).await;
    let mut last = at_pause;
    let done = loop {
        let m = c.recv().await;
        if m.topic.as_deref() == Some(&format!("/session/{id}/state")) {
            let n = m.payload["executed"].as_u64().unwrap();
            assert!(n >= last, "step counter went backwards");
            last = n;
            if m.payload["phase"] == "done" {
                break m;
            }
        }
    };
    assert!(done.payload["executed"].as_u64().unwrap() > at_pause);
}

#[tokio::test(flavor = "multi_thread")]
async fn topic_order_and_unsubscribe() {
    let url = server().await;
    let mut owner = Client::connect(&url).await;
    let id = created(&mut owner, json!({"trust": "full_trust"})).await;
    let mut watcher = Client::connect(&url).await;
    watcher.send(BridgeMessage::subscribe("w1", format!("/session/{id}/telemetry"))).await;
    assert_eq!(watcher.recv().await.op, Op::Reply);
    watcher.send(BridgeMessage::subscribe("w2", "/session/nobody/state")).await;
    assert_eq!(watcher.recv().await.payload["code"], "unknown_session");
    watcher.send(BridgeMessage::subscribe("w3", format!("/session/{id}/odometry"))).await;
    assert_eq!(watcher.recv().await.payload["code"], "unknown_topic");

    owner.ok("start", json!({"session_id": id})).await;
    let steps = owner.ok("get_state", json!({"session_id": id})).await["snapshot"]["committed"]["steps"]
        .as_array()
        .unwrap()
        .len();
    let mut ticks = Vec::new();
    for _ in 0..steps {
        let m = watcher.recv().await;
        assert_eq!(m.topic.as_deref(), Some(format!("/session/{id}/telemetry").as_str()));
        ticks.push(m.payload["event"]["tick"].as_u64().unwrap());
    }
    assert!(ticks.windows(2).all(|w| w[0] < w[1]), "telemetry out of order: {ticks:?}");

    watcher.send(BridgeMessage::unsubscribe("w4", format!("/session/{id}/telemetry"))).await;
    assert_eq!(watcher.recv().await.op, Op::Reply);
    owner.ok("set_trust_level", json!({"session_id": id, "level": "full_trust"})).await;
    owner.ok("start", json!({"session_id": id})).await;
    let m = watcher.call("list_services", json!({})).await;
    assert_eq!(m.op, Op::Reply, "no telemetry after unsubscribing");
}

#[test]
fn slow_subscriber_keeps_latest_snapshots() {
    let hub = Hub::new(HubConfig {
        backlog: 8,
        ..Default::default()
    })
    .unwrap();
    let owner = hub.connect();
    let slow = hub.connect();
    let map = arwac_core::field::WeedMap::uniform(6, 6, 0.9).unwrap();
    hub.handle(
        &owner,
        BridgeMessage::call("1", "create_session", json!({"session_id": "x", "map": map, "trust": "full_trust"})),
    );
    for kind in ["state", "telemetry", "metrics", "plan"] {
        hub.handle(&slow, BridgeMessage::subscribe("s", format!("/session/x/{kind}")));
    }
    hub.handle(&owner, BridgeMessage::call("2", "start", json!({"session_id": "x"})));
    let frames = slow.outbox().drain();
    assert!(frames.len() < 40, "{} frames queued", frames.len());
    let finished = frames.iter().filter(|m| m.payload["type"] == "mission_finished").count();
    assert_eq!(finished, 1);
    let last_state = frames.iter().rfind(|m| m.topic.as_deref() == Some("/session/x/state")).unwrap();
    assert_eq!(last_state.payload["phase"], "done");
    // The owner drained nothing either, and still has every reply.
    let replies: Vec<_> = owner.outbox().drain().into_iter().filter(|m| m.op == Op::Reply).collect();
    assert_eq!(replies.len(), 2);
}

#[test]
fn malformed_frames_never_crash() {
    let hub = Hub::new(HubConfig::default()).unwrap();
    let conn = hub.connect();
    hub.handle(
        &conn,
        BridgeMessage::call("0", "create_session", json!({"session_id": "f", "map": map_json(&small_map())})),
    );
    conn.outbox().drain();
    let base = [
        r#"{"op":"call","id":"1","service":"append_action","payload":{"session_id":"f","action":"(move c0 c1)"}}"#,
        r#"{"op":"call","id":"2","service":"challenge","payload":{"session_id":"f","foils":["forbid (weed c1)"]}}"#,
        r#"{"op":"subscribe","id":"3","topic":"/session/f/state"}"#,
        r#"{"op":"call","id":"4","service":"load_map","payload":{"session_id":"f","map":{"width":2,"height":1,"cell_size":1,"origin_e":0,"origin_n":0,"probs":[1,0]}}}"#,
        r#"{"op":"call","id":"5","service":"create_session","payload":{"field":{"map":{"width":2,"height":1,"cell_size":1,"origin_e":0,"origin_n":0,"probs":[1,0]},"home":7}}}"#,
    ];
    let mut rng = gen::rng(99);
    let prev = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    for i in 0..3000 {
        let input = if i % 4 == 0 {
            gen::fuzz_bytes(&mut rng, 4096)
        } else {
            gen::mutate_text(&mut rng, base[i % base.len()], 4096)
        };
        let text = String::from_utf8_lossy(&input);
        let ok = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| hub.handle_text(&conn, &text))).is_ok();
        assert!(ok, "decoder panicked on {text:?}");
        let frames = conn.outbox().drain();
        assert!(
            frames.iter().any(|m| matches!(m.op, Op::Reply | Op::Error)),
            "no answer to {text:?}"
        );
    }
    std::panic::set_hook(prev);
    // Start from scratch so earlier random edits do not matter.
    hub.handle(&conn, BridgeMessage::call("6", "create_session", json!({"map": map_json(&small_map())})));
    assert_eq!(conn.outbox().drain()[0].op, Op::Reply);
}

#[test]
fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = HubConfig {
        store: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let before = {
        let hub = Hub::new(cfg.clone()).unwrap();
        let c = hub.connect();
        let call = |id: &str, service: &str, payload: serde_json::Value| {
            hub.handle(&c, BridgeMessage::call(id, service, payload));
        };
        call("1", "create_session", json!({"session_id": "p", "map": map_json(&small_map()), "trust": "partial_trust", "seed": 4}));
        call("2", "propose", json!({"session_id": "p"}));
        call("3", "challenge", json!({"session_id": "p", "foils": ["require (move c1 c0)"]}));
        call("4", "resolve", json!({"session_id": "p", "decision": "adopt_foil", "index": 0}));
        call("5", "start", json!({"session_id": "p"}));
        let frames = c.outbox().drain();
        assert!(frames.iter().all(|m| m.op != Op::Error), "{frames:?}");
        hub.with_session("p", |s| s.snapshot()).unwrap()
    };
    // A torn final line from a crash is ignored.
    let log = dir.path().join("p.jsonl");
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"record\":\"eve");
    std::fs::write(&log, text).unwrap();
    let hub = Hub::new(cfg).unwrap();
    assert_eq!(hub.session_ids(), ["p"]);
    assert_eq!(hub.with_session("p", |s| s.snapshot()).unwrap(), before);
    assert_eq!(before.phase, arwac_core::autonomy::Phase::Done);
}
