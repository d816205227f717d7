use std::time::{Duration, Instant};

use ecoforge_core::compiler::{compile_for_engine, compile_model};
use ecoforge_core::engine::{run, SimConfig, SimFrame};
use ecoforge_core::model::{codes as vcodes, parse_model};
use ecoforge_service::error::codes;
use ecoforge_service::{router, ServiceConfig};
use futures_util::StreamExt;
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

const CORE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core");

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{CORE}/fixtures/models/{name}.json")).unwrap()
}

async fn start() -> (Client, String) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(ServiceConfig::default()).unwrap();
    tokio::spawn(ecoforge_service::serve(listener, app));
    (Client::new(), format!("http://{addr}/api/v1"))
}

async fn post_model(c: &Client, base: &str, name: &str) -> String {
    let r = c.post(format!("{base}/models")).body(fixture(name)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    r.json::<Value>().await.unwrap()["id"].as_str().unwrap().to_string()
}

async fn create_session(c: &Client, base: &str, model: &str, seed: u64, max_ticks: u64) -> String {
    let r = c
        .post(format!("{base}/simulations"))
        .json(&json!({"model_id": model, "seed": seed, "max_ticks": max_ticks}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    r.json::<Value>().await.unwrap()["session_id"].as_str().unwrap().to_string()
}

async fn command(c: &Client, base: &str, sid: &str, cmd: &str) -> reqwest::Response {
    c.post(format!("{base}/simulations/{sid}/command"))
        .json(&json!({ "command": cmd }))
        .send()
        .await
        .unwrap()
}

/// Minimal server-sent-events reader.
struct Events {
    body: futures_util::stream::BoxStream<'static, reqwest::Result<bytes::Bytes>>,
    buf: String,
}

impl Events {
    async fn open(c: &Client, url: String) -> Self {
        let r = c.get(url).send().await.unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        Events {
            body: r.bytes_stream().boxed(),
            buf: String::new(),
        }
    }

    async fn next(&mut self) -> Option<(String, String)> {
        loop {
            if let Some(end) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..end + 2).collect();
                let (mut event, mut data) = (String::new(), String::new());
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("event:") {
                        event = v.trim().to_string();
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.trim_start());
                    }
                }
                if event.is_empty() {
                    continue; // keep-alive comment
                }
                return Some((event, data));
            }
            let chunk = self.body.next().await?.unwrap();
            self.buf.push_str(std::str::from_utf8(&chunk).unwrap());
        }
    }

    async fn next_within(&mut self, d: Duration) -> Option<(String, String)> {
        tokio::time::timeout(d, self.next()).await.ok().flatten()
    }
}

#[tokio::test]
async fn model_crud() {
    let (c, base) = start().await;
    let id = post_model(&c, &base, "kudzu").await;
    assert_eq!(id, "kudzu");

    let got = c.get(format!("{base}/models/kudzu")).send().await.unwrap();
    assert_eq!(got.status(), StatusCode::OK);
    assert_eq!(got.bytes().await.unwrap().as_ref(), fixture("kudzu").as_slice());

    let again = c.post(format!("{base}/models")).body(fixture("kudzu")).send().await.unwrap();
    assert_eq!(again.status(), StatusCode::CONFLICT);

    let mut doc: Value = serde_json::from_slice(&fixture("kudzu")).unwrap();
    doc["components"].as_array_mut().unwrap().retain(|c| c["id"] != "light");
    let r = c.put(format!("{base}/models/kudzu")).body(doc.to_string()).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["code"], codes::VALIDATION_FAILED);
    assert!(body["report"]["errors"].as_array().unwrap().iter().all(|e| e["code"] == vcodes::REL_ENDPOINT));

    let mut doc: Value = serde_json::from_slice(&fixture("kudzu")).unwrap();
    doc["name"] = json!("Kudzu, renamed");
    let r = c.put(format!("{base}/models/kudzu")).body(doc.to_string()).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let got: Value = c.get(format!("{base}/models/kudzu")).send().await.unwrap().json().await.unwrap();
    assert_eq!(got["name"], "Kudzu, renamed");

    let r = c.post(format!("{base}/models")).body("{not json").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    assert_eq!(r.json::<Value>().await.unwrap()["code"], codes::SCHEMA_SYNTAX);

    let r = c.put(format!("{base}/models/other")).body(fixture("empty")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);

    let listed: Value = c.get(format!("{base}/models")).send().await.unwrap().json().await.unwrap();
    assert_eq!(listed, json!([{"id": "kudzu", "name": "Kudzu, renamed"}]));

    let r = c.delete(format!("{base}/models/kudzu")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
    let r = c.get(format!("{base}/models/kudzu")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    assert_eq!(r.json::<Value>().await.unwrap()["code"], codes::MODEL_NOT_FOUND);
}

#[tokio::test]
async fn validate_and_compile() {
    let (c, base) = start().await;
    post_model(&c, &base, "kudzu").await;
    let report: Value = c.post(format!("{base}/models/kudzu/validate")).send().await.unwrap().json().await.unwrap();
    assert_eq!(report["errors"], json!([]));

    let mut doc: Value = serde_json::from_slice(&fixture("kudzu")).unwrap();
    // an abiotic source cannot produce
    let rels = doc["relationships"].as_array_mut().unwrap();
    let from_light = rels.iter_mut().find(|r| r["source"] == "light").unwrap();
    from_light["kind"] = json!("Produces");
    from_light["params"] = json!({"production_rate": 0.1});
    let report: Value = c.post(format!("{base}/validate")).body(doc.to_string()).send().await.unwrap().json().await.unwrap();
    let codes_seen: Vec<&str> = report["errors"].as_array().unwrap().iter().map(|e| e["code"].as_str().unwrap()).collect();
    assert_eq!(codes_seen, [vcodes::REL_ENDPOINT_KIND]);

    let nlogo = c.post(format!("{base}/models/kudzu/compile?target=netlogo")).send().await.unwrap();
    let golden = std::fs::read_to_string(format!("{CORE}/tests/golden/kudzu.nlogo")).unwrap();
    assert_eq!(nlogo.text().await.unwrap(), golden);

    let engine: Value = c.post(format!("{base}/models/kudzu/compile")).send().await.unwrap().json().await.unwrap();
    assert_eq!(engine["populations"].as_array().unwrap().len(), 3);

    let r = c.post(format!("{base}/models/kudzu/compile?target=java")).send().await.unwrap();
    assert_eq!(r.json::<Value>().await.unwrap()["code"], codes::UNKNOWN_TARGET);
}

#[tokio::test]
async fn lookup_and_ontology() {
    let (c, base) = start().await;
    let matches: Value = c.get(format!("{base}/species?q=kudzu")).send().await.unwrap().json().await.unwrap();
    assert_eq!(matches[0]["taxon_id"], "pueraria-montana");

    let derived: Value = c
        .get(format!("{base}/species/buteo-jamaicensis/parameters"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(derived["report"]["entries"].as_array().unwrap().len(), 13);
    assert_eq!(derived["properties"].as_object().unwrap().len(), 13);

    let r = c.get(format!("{base}/species/no-such-taxon/parameters")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let r = c.get(format!("{base}/species?q=")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);

    let m: Value = c.get(format!("{base}/interactions/preys%20on")).send().await.unwrap().json().await.unwrap();
    assert_eq!(m, json!({"kind": "Consumes", "direction": "Forward"}));
    let r = c.get(format!("{base}/interactions/juggles")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let aliases: Value = c.get(format!("{base}/interactions")).send().await.unwrap().json().await.unwrap();
    assert!(aliases.as_array().unwrap().len() >= 19);
}

fn direct_series(name: &str, seed: u64, max_ticks: u64) -> ecoforge_core::engine::TimeSeries {
    let prog = compile_for_engine(&compile_model(&parse_model(&fixture(name)).unwrap()).unwrap());
    run(&prog, &SimConfig::new(seed, max_ticks)).unwrap()
}

#[tokio::test]
async fn streamed_frames_are_the_engine_frames() {
    let (c, base) = start().await;
    post_model(&c, &base, "predator-prey").await;
    let sid = create_session(&c, &base, "predator-prey", 7, 30).await;
    let mut events = Events::open(&c, format!("{base}/simulations/{sid}/frames")).await;
    assert_eq!(command(&c, &base, &sid, "start").await.status(), StatusCode::OK);
    let t0 = Instant::now();
    let mut frames = Vec::new();
    loop {
        let (event, data) = events.next().await.unwrap();
        match event.as_str() {
            "frame" => frames.push(serde_json::from_str::<SimFrame>(&data).unwrap()),
            "end" => {
                assert_eq!(serde_json::from_str::<Value>(&data).unwrap()["status"], "Finished");
                break;
            }
            other => panic!("unexpected event {other}"),
        }
    }
    let elapsed = t0.elapsed();
    let expected = direct_series("predator-prey", 7, 30);
    assert_eq!(frames, expected.frames);
    assert!(frames.windows(2).all(|w| w[0].tick < w[1].tick));
    // 31 frames at no more than 20 per second
    assert!(elapsed >= Duration::from_millis(1400), "{elapsed:?}");

    let csv = c.get(format!("{base}/simulations/{sid}/series.csv")).send().await.unwrap().text().await.unwrap();
    assert_eq!(csv, expected.to_csv());

    // a late subscriber replays the whole history
    let mut replay = Events::open(&c, format!("{base}/simulations/{sid}/frames?from=25")).await;
    let mut ticks = Vec::new();
    while let Some((event, data)) = replay.next().await {
        if event == "frame" {
            ticks.push(serde_json::from_str::<SimFrame>(&data).unwrap().tick);
        }
    }
    assert_eq!(ticks, [25, 26, 27, 28, 29, 30]);
}

#[tokio::test]
async fn sessions_are_isolated_and_deterministic() {
    let (c, base) = start().await;
    post_model(&c, &base, "grazer-on-pool").await;
    let a = create_session(&c, &base, "grazer-on-pool", 3, 40).await;
    let b = create_session(&c, &base, "grazer-on-pool", 3, 40).await;
    let other = create_session(&c, &base, "grazer-on-pool", 4, 40).await;
    for s in [&a, &b, &other] {
        command(&c, &base, s, "start").await;
    }
    // reset one session midway; the others must not notice
    command(&c, &base, &other, "reset").await;
    command(&c, &base, &other, "start").await;
    let mut csvs = Vec::new();
    for s in [&a, &b, &other] {
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            let r = c.get(format!("{base}/simulations/{s}/series.csv")).send().await.unwrap();
            if r.status() == StatusCode::OK {
                csvs.push(r.text().await.unwrap());
                break;
            }
            assert_eq!(r.json::<Value>().await.unwrap()["code"], codes::NOT_FINISHED);
            assert!(Instant::now() < deadline);
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], direct_series("grazer-on-pool", 3, 40).to_csv());
    assert_eq!(csvs[2], direct_series("grazer-on-pool", 4, 40).to_csv());

    let r = command(&c, &base, &a, "start").await;
    assert_eq!(r.status(), StatusCode::CONFLICT);
    assert_eq!(r.json::<Value>().await.unwrap()["code"], codes::ILLEGAL_TRANSITION);

    let r = command(&c, &base, "s999", "start").await;
    assert_eq!(r.status(), StatusCode::NOT_FOUND);

    let r = c.delete(format!("{base}/simulations/{a}")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
    let r = c.get(format!("{base}/simulations/{a}")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn stop_pauses_the_stream_and_reset_restarts_it() {
    let (c, base) = start().await;
    post_model(&c, &base, "grazer-on-pool").await;
    let sid = create_session(&c, &base, "grazer-on-pool", 11, 5000).await;
    let mut events = Events::open(&c, format!("{base}/simulations/{sid}/frames")).await;
    command(&c, &base, &sid, "start").await;
    let mut seen = Vec::new();
    while seen.len() < 4 {
        let (event, data) = events.next().await.unwrap();
        assert_eq!(event, "frame");
        seen.push(serde_json::from_str::<SimFrame>(&data).unwrap().tick);
    }
    let r = command(&c, &base, &sid, "stop").await;
    assert_eq!(r.json::<Value>().await.unwrap()["status"], "Paused");
    // a frame already on the wire when the stop landed may still arrive
    if let Some((_, data)) = events.next_within(Duration::from_millis(100)).await {
        seen.push(serde_json::from_str::<SimFrame>(&data).unwrap().tick);
    }
    assert_eq!(events.next_within(Duration::from_millis(400)).await, None);

    // a step releases the frames computed ahead, which resume without a gap
    let r = command(&c, &base, &sid, "step").await;
    assert_eq!(r.json::<Value>().await.unwrap()["status"], "Paused");
    for _ in 0..3 {
        let (event, data) = events.next_within(Duration::from_secs(2)).await.unwrap();
        assert_eq!(event, "frame");
        let t = serde_json::from_str::<SimFrame>(&data).unwrap().tick;
        assert_eq!(t, *seen.last().unwrap() + 1);
        seen.push(t);
    }

    command(&c, &base, &sid, "reset").await;
    let (event, _) = events.next_within(Duration::from_secs(2)).await.unwrap();
    assert_eq!(event, "reset");
    let info: Value = c.get(format!("{base}/simulations/{sid}")).send().await.unwrap().json().await.unwrap();
    assert_eq!((info["status"].as_str(), info["tick"].as_u64()), (Some("Ready"), Some(0)));
    let (event, data) = events.next_within(Duration::from_secs(2)).await.unwrap();
    assert_eq!((event.as_str(), serde_json::from_str::<SimFrame>(&data).unwrap().tick), ("frame", 0));
}

#[tokio::test]
async fn engine_stays_within_the_frame_buffer() {
    let (c, base) = start().await;
    post_model(&c, &base, "grazer-on-pool").await;
    let sid = create_session(&c, &base, "grazer-on-pool", 1, 5000).await;
    let mut events = Events::open(&c, format!("{base}/simulations/{sid}/frames?rate=20")).await;
    let t0 = Instant::now();
    command(&c, &base, &sid, "start").await;
    for _ in 0..3 {
        events.next().await.unwrap();
    }
    tokio::time::sleep(Duration::from_millis(300)).await;
    let info: Value = c.get(format!("{base}/simulations/{sid}")).send().await.unwrap().json().await.unwrap();
    let computed = info["frames"].as_u64().unwrap() as usize;
    // the server keeps pushing at 20 frames/s while this side sleeps
    let delivered = 2 + (t0.elapsed().as_secs_f64() * 20.0) as usize;
    assert!(computed <= delivered + ecoforge_service::FRAME_BUFFER, "{computed} > {delivered} + buffer");
    assert!(computed >= ecoforge_service::FRAME_BUFFER, "{computed}");
    assert_eq!(info["subscribers"], 1);

    // without subscribers the run completes
    drop(events);
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let info: Value = c.get(format!("{base}/simulations/{sid}")).send().await.unwrap().json().await.unwrap();
        if info["status"] == "Finished" {
            break;
        }
        assert!(Instant::now() < deadline, "{info}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[tokio::test]
async fn session_errors() {
    let (c, base) = start().await;
    let r = c
        .post(format!("{base}/simulations"))
        .json(&json!({"model_id": "nope", "seed": 1, "max_ticks": 10}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    post_model(&c, &base, "empty").await;
    let r = c
        .post(format!("{base}/simulations"))
        .json(&json!({"model_id": "empty", "seed": 1, "max_ticks": 10, "grid_width": 0}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.json::<Value>().await.unwrap()["code"], codes::INVALID_CONFIG);
    let r = c
        .post(format!("{base}/simulations"))
        .json(&json!({"model_id": "empty", "seed": 1}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
}
