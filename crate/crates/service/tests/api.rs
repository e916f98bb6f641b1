use std::time::Duration;

use chrono::{TimeZone, Utc};
use forge_core::pipeline::mock::{MockImageProvider, MockSuite};
use forge_core::pipeline::{Pipeline, PipelineOptions};
use forge_service::store::Db;
use forge_service::{router, Service};
use reqwest::{Client, Method, StatusCode};
use serde_json::{json, Value};

struct Api {
    base: String,
    http: Client,
    account: String,
    mocks: MockSuite,
}

async fn spawn_with(mocks: MockSuite, workers: usize) -> Api {
    let pipeline = Pipeline::new(mocks.providers(), PipelineOptions::default());
    let service = Service::with_parts(Db::open_in_memory().unwrap(), pipeline, workers);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(service)).await.unwrap() });
    Api { base: format!("http://{addr}/v1"), http: Client::new(), account: "fam1".into(), mocks }
}

async fn spawn() -> Api {
    spawn_with(MockSuite::new(), 2).await
}

impl Api {
    fn as_account(&self, account: &str) -> Api {
        Api { base: self.base.clone(), http: self.http.clone(), account: account.into(), mocks: self.mocks.clone() }
    }

    async fn call(&self, method: Method, path: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = self.http.request(method, format!("{}{path}", self.base)).header("x-account-id", &self.account);
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        (status, if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap() })
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        self.call(Method::GET, path, None).await
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, path, Some(body)).await
    }

    async fn photo(&self, bytes: &str) -> String {
        let resp = self
            .http
            .post(format!("{}/photos", self.base))
            .header("x-account-id", &self.account)
            .body(bytes.to_string())
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
        resp.json::<Value>().await.unwrap()["image"].as_str().unwrap().to_string()
    }

    async fn entity(&self, body: Value) -> (StatusCode, Value) {
        let path = format!("/profiles/{}/entities", self.account);
        self.post(&path, body).await
    }

    /// Child, photo, and the entities the mock stories draw on. Returns the
    /// custom sticker id.
    async fn setup_profile(&self) -> String {
        let p = format!("/profiles/{}", self.account);
        let (s, _) = self.call(Method::PUT, &format!("{p}/child"), Some(json!({"name": "Alex"}))).await;
        assert_eq!(s, StatusCode::OK);
        let alex = self.photo("alex-photo").await;
        let (s, _) = self.call(Method::PUT, &format!("{p}/child/photo"), Some(json!({"photo": alex}))).await;
        assert_eq!(s, StatusCode::OK);
        let rexy = self.photo("rexy-photo").await;
        for body in [
            json!({"kind": "interest", "name": "Firefighter"}),
            json!({"kind": "interest", "name": "Rexy", "photo": rexy, "description": "a small green toy dinosaur"}),
            json!({"kind": "person", "name": "Max", "relation": "friend"}),
            json!({"kind": "person", "name": "Mom", "relation": "mother"}),
            json!({"kind": "person", "name": "Ms. Lee", "relation": "teacher"}),
            json!({"kind": "place", "name": "playground"}),
            json!({"kind": "place", "name": "kitchen"}),
            json!({"kind": "place", "name": "library"}),
        ] {
            let (s, v) = self.entity(body).await;
            assert_eq!(s, StatusCode::CREATED, "{v}");
        }
        let art = self.photo("sticker-art").await;
        let (s, v) = self.post("/stickers", json!({"label": "Firefighter", "image": art})).await;
        assert_eq!(s, StatusCode::CREATED);
        v["id"].as_str().unwrap().to_string()
    }

    async fn create(&self, sticker: &str, behavior: &str, interests: &[&str]) -> (StatusCode, Value) {
        self.post("/stories", json!({"interests": interests, "target_behavior": behavior, "reward_sticker_id": sticker}))
            .await
    }

    async fn wait(&self, job: &str) -> Value {
        for _ in 0..500 {
            let (_, v) = self.get(&format!("/jobs/{job}")).await;
            if matches!(v["status"]["state"].as_str(), Some("complete" | "failed")) {
                return v;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("job {job} did not finish");
    }

    async fn story(&self, sticker: &str) -> Value {
        let (s, v) = self.create(sticker, "Taking turns during playtime", &["Firefighter"]).await;
        assert_eq!(s, StatusCode::ACCEPTED, "{v}");
        let job = self.wait(v["job_id"].as_str().unwrap()).await;
        assert_eq!(job["status"]["state"], "complete", "{job}");
        let id = job["status"]["story_id"].as_str().unwrap();
        self.get(&format!("/stories/{id}")).await.1
    }
}

fn err_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap_or("")
}

#[tokio::test]
async fn requests_need_an_account() {
    let api = spawn().await;
    let resp = api.http.get(format!("{}/stickers", api.base)).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    let v: Value = resp.json().await.unwrap();
    assert_eq!(err_code(&v), "unauthenticated");
}

#[tokio::test]
async fn new_accounts_have_exactly_one_star() {
    let api = spawn().await;
    let (_, v) = api.get("/stickers").await;
    let stars: Vec<&Value> = v.as_array().unwrap().iter().filter(|s| s["kind"] == "star").collect();
    assert_eq!(stars.len(), 1);
    let art = api.photo("x").await;
    let (s, v) = api.post("/stickers", json!({"id": "star", "label": "Star", "image": art})).await;
    assert_eq!((s, err_code(&v)), (StatusCode::BAD_REQUEST, "bad-request"));
}

#[tokio::test]
async fn profile_entities() {
    let api = spawn().await;
    let (s, v) = api.entity(json!({"kind": "interest", "name": "Firefighter"})).await;
    assert_eq!(s, StatusCode::CREATED);
    assert!(v.get("photo").is_none());
    let rexy = api.photo("rexy").await;
    let (_, v) = api.entity(json!({"kind": "interest", "name": "Rexy", "photo": rexy})).await;
    assert_eq!(v["photo"], rexy);

    let (s, v) = api.entity(json!({"kind": "interest", "name": "firefighter"})).await;
    assert_eq!((s, err_code(&v)), (StatusCode::CONFLICT, "conflict"));
    // Same name under another kind is fine.
    let (s, _) = api.entity(json!({"kind": "place", "name": "Firefighter"})).await;
    assert_eq!(s, StatusCode::CREATED);

    let (s, v) = api.entity(json!({"kind": "person", "name": "Max", "photo": "sha256:0000"})).await;
    assert_eq!((s, err_code(&v)), (StatusCode::BAD_REQUEST, "bad-request"));

    let p = format!("/profiles/{}", api.account);
    let (s, v) = api.call(Method::PUT, &format!("{p}/child/photo"), Some(json!({}))).await;
    assert_eq!((s, err_code(&v)), (StatusCode::BAD_REQUEST, "bad-request"));

    let (s, _) = api.call(Method::DELETE, &format!("{p}/entities/interest-rexy"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, v) = api.call(Method::DELETE, &format!("{p}/entities/interest-rexy"), None).await;
    assert_eq!((s, err_code(&v)), (StatusCode::NOT_FOUND, "not-found"));

    let (s, _) = api.as_account("fam2").get(&p).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn create_story_preconditions() {
    let api = spawn().await;
    let (s, v) = api.create("star", "Taking turns", &["Firefighter"]).await;
    assert_eq!((s, err_code(&v)), (StatusCode::UNPROCESSABLE_ENTITY, "profile-incomplete"));
    let sticker = api.setup_profile().await;
    let (s, v) = api.create("sticker-nope", "Taking turns", &["Firefighter"]).await;
    assert_eq!((s, err_code(&v)), (StatusCode::BAD_REQUEST, "bad-request"));
    let (s, v) = api.create(&sticker, "Taking turns", &[]).await;
    assert_eq!((s, err_code(&v)), (StatusCode::UNPROCESSABLE_ENTITY, "profile-incomplete"));
}

#[tokio::test]
async fn job_runs_to_a_listed_story() {
    let api = spawn().await;
    let sticker = api.setup_profile().await;
    let (s, v) = api.create(&sticker, "Taking turns during playtime", &["Firefighter"]).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(v["status"]["state"], "pending");
    let job = api.wait(v["job_id"].as_str().unwrap()).await;
    assert_eq!(job["status"]["state"], "complete");
    let id = job["status"]["story_id"].as_str().unwrap();
    let (s, story) = api.get(&format!("/stories/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(story["format_version"], 1);
    assert_eq!(story["story"]["reward_sticker"]["id"], sticker);
    let (_, list) = api.get("/stories").await;
    assert_eq!(list.as_array().unwrap().len(), 1);

    let (s, _) = api.as_account("fam2").get(&format!("/stories/{id}")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn identical_concurrent_requests_make_distinct_stories() {
    let api = spawn().await;
    let sticker = api.setup_profile().await;
    let (a, b) = tokio::join!(
        api.create(&sticker, "Washing hands before meals", &["Rexy"]),
        api.create(&sticker, "Washing hands before meals", &["Rexy"])
    );
    let (ja, jb) = (a.1["job_id"].as_str().unwrap().to_string(), b.1["job_id"].as_str().unwrap().to_string());
    assert_ne!(ja, jb);
    let (ja, jb) = (api.wait(&ja).await, api.wait(&jb).await);
    assert_ne!(ja["status"]["story_id"], jb["status"]["story_id"]);
    let (_, list) = api.get("/stories").await;
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert!(list[0]["story"]["created_at"].as_str() >= list[1]["story"]["created_at"].as_str());
}

#[tokio::test]
async fn entity_used_by_a_running_job_cannot_be_deleted() {
    let slow = MockSuite::new().with_image(MockImageProvider::new(Duration::from_millis(300)));
    let api = spawn_with(slow, 1).await;
    let sticker = api.setup_profile().await;
    let (_, v) = api.create(&sticker, "Taking turns during playtime", &["Firefighter"]).await;
    let p = format!("/profiles/{}", api.account);
    let (s, e) = api.call(Method::DELETE, &format!("{p}/entities/place-playground"), None).await;
    assert_eq!((s, err_code(&e)), (StatusCode::CONFLICT, "in-use"));
    api.wait(v["job_id"].as_str().unwrap()).await;
    let (s, _) = api.call(Method::DELETE, &format!("{p}/entities/place-playground"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
}

fn section_text<'a>(story: &'a Value, id: &str) -> &'a str {
    story["sections"].as_array().unwrap().iter().find(|s| s["id"] == id).unwrap()["text"].as_str().unwrap()
}

#[tokio::test]
async fn editing_sections() {
    let api = spawn().await;
    let sticker = api.setup_profile().await;
    let story = api.story(&sticker).await;
    let id = story["story"]["id"].as_str().unwrap().to_string();
    let path = format!("/stories/{id}/sections/d-decision");

    let (s, v) = api.call(Method::PATCH, &path, Some(json!({"text": "Alex says, \"You can go first.\""}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["story"]["version"], 2);
    assert_eq!(v["edit_log"].as_array().unwrap().len(), 1);
    let plan = v["preprocessing"]["sections"].as_array().unwrap();
    assert_eq!(plan.iter().find(|p| p["section_id"] == "d-decision").unwrap()["stale"], true);

    let same = section_text(&v, "d-decision").to_string();
    let (_, again) = api.call(Method::PATCH, &path, Some(json!({ "text": same }))).await;
    assert_eq!(again["story"]["version"], 2);

    let (s, e) = api.call(Method::PATCH, &path, Some(json!({"text": "x", "next": ["ending"]}))).await;
    assert_eq!((s, err_code(&e)), (StatusCode::BAD_REQUEST, "structure-immutable"));
    let (s, e) = api.call(Method::PATCH, &format!("/stories/{id}/sections/nope"), Some(json!({"text": "x"}))).await;
    assert_eq!((s, err_code(&e)), (StatusCode::NOT_FOUND, "not-found"));

    let (_, v1) = api.get(&format!("/stories/{id}?version=1")).await;
    assert_eq!(v1, story);
}

#[tokio::test]
async fn regenerating_images() {
    let api = spawn().await;
    let sticker = api.setup_profile().await;
    let story = api.story(&sticker).await;
    let id = story["story"]["id"].as_str().unwrap().to_string();
    let path = format!("/stories/{id}/sections/d-decision/image");

    api.mocks.text.reset_calls();
    api.mocks.image.reset_calls();
    let (s, v) = api.post(&path, json!({})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["reused_cache"], true);
    assert_eq!(api.mocks.image.call_count(), 1);
    assert!(api.mocks.text.calls().is_empty());
    assert_eq!(v["story"]["story"]["version"], 2);

    let edit = format!("/stories/{id}/sections/d-decision");
    api.call(Method::PATCH, &edit, Some(json!({"text": "Alex says, \"Max can go first.\""}))).await;
    api.mocks.image.reset_calls();
    let (_, v) = api.post(&path, json!({})).await;
    assert_eq!(v["reused_cache"], false);
    assert_eq!(api.mocks.image.call_count(), 1);
    assert_eq!(v["story"]["story"]["version"], 4);

    let (s, e) = api.post(&format!("/stories/{id}/sections/nope/image"), json!({})).await;
    assert_eq!((s, err_code(&e)), (StatusCode::NOT_FOUND, "not-found"));
}

async fn read(api: &Api, story: &Value, decision: &str) -> (String, Value) {
    let id = story["story"]["id"].as_str().unwrap();
    let (s, session) = api.post("/sessions", json!({"story_id": id, "device": "reader"})).await;
    assert_eq!(s, StatusCode::CREATED, "{session}");
    let sid = session["id"].as_str().unwrap().to_string();
    let ev = format!("/sessions/{sid}/events");
    for page in ["intro", "challenge"] {
        let (s, v) = api.post(&ev, json!({"type": "page_view", "section_id": page, "t": Utc::now()})).await;
        assert_eq!(s, StatusCode::OK, "{v}");
    }
    let idx = session["presented_options"].as_array().unwrap().iter().position(|o| o == decision).unwrap();
    let (s, _) = api.post(&ev, json!({"type": "choice", "option_index": idx, "section_id": decision, "t": Utc::now()})).await;
    assert_eq!(s, StatusCode::OK);
    let path = story["paths"]["undesirable"]
        .as_array()
        .unwrap()
        .iter()
        .chain([&story["paths"]["desirable"]])
        .find(|p| p[0] == decision)
        .unwrap()
        .clone();
    for page in path.as_array().unwrap().iter().skip(1) {
        let (s, v) = api.post(&ev, json!({"type": "page_view", "section_id": page, "t": Utc::now()})).await;
        assert_eq!(s, StatusCode::OK, "{v}");
    }
    let (s, outcome) = api.post(&format!("/sessions/{sid}/complete"), json!({})).await;
    assert_eq!(s, StatusCode::OK, "{outcome}");
    (sid, outcome)
}

#[tokio::test]
async fn reading_rewards() {
    let api = spawn().await;
    let sticker = api.setup_profile().await;
    let story = api.story(&sticker).await;
    let desirable = story["paths"]["desirable"][0].as_str().unwrap().to_string();
    let undesirable = story["paths"]["undesirable"][0][0].as_str().unwrap().to_string();

    let (_, good) = read(&api, &story, &desirable).await;
    assert_eq!(good["path_kind"], "desirable");
    assert_eq!(good["sticker"]["id"], sticker);
    let (sid, bad) = read(&api, &story, &undesirable).await;
    assert_eq!(bad["path_kind"], "undesirable");
    assert_eq!(bad["sticker"]["id"], "star");

    let (s, e) = api.post(&format!("/sessions/{sid}/events"), json!({"type": "page_view", "section_id": "intro", "t": Utc::now()})).await;
    assert_eq!((s, err_code(&e)), (StatusCode::CONFLICT, "session-closed"));
}

#[tokio::test]
async fn invalid_transitions_are_rejected_and_the_session_continues() {
    let api = spawn().await;
    let sticker = api.setup_profile().await;
    let story = api.story(&sticker).await;
    let id = story["story"]["id"].as_str().unwrap();
    let (_, session) = api.post("/sessions", json!({"story_id": id, "device": "reader"})).await;
    let ev = format!("/sessions/{}/events", session["id"].as_str().unwrap());
    let (s, e) = api.post(&ev, json!({"type": "page_view", "section_id": "ending", "t": Utc::now()})).await;
    assert_eq!((s, err_code(&e)), (StatusCode::CONFLICT, "invalid-transition"));
    for page in ["intro", "challenge"] {
        api.post(&ev, json!({"type": "page_view", "section_id": page, "t": Utc::now()})).await;
    }
    let (s, e) = api.post(&ev, json!({"type": "choice", "option_index": 5, "section_id": "d-decision", "t": Utc::now()})).await;
    assert_eq!((s, err_code(&e)), (StatusCode::CONFLICT, "invalid-transition"));
    let (s, v) = api.post(&ev, json!({"type": "choice", "option_index": 0, "section_id": session["presented_options"][0], "t": Utc::now()})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["trail"].as_array().unwrap().len(), 4);
    let (s, e) = api.post(&ev, json!({"type": "reward_issued", "sticker_id": "star", "t": Utc::now()})).await;
    assert_eq!((s, err_code(&e)), (StatusCode::CONFLICT, "invalid-transition"));
}

#[tokio::test]
async fn realtime_channel_carries_event_documents() {
    let api = spawn().await;
    let sticker = api.setup_profile().await;
    let story = api.story(&sticker).await;
    let id = story["story"]["id"].as_str().unwrap();
    let (_, session) = api.post("/sessions", json!({"story_id": id, "device": "creator", "started_at": "2025-03-03T09:00:00Z"})).await;
    let sid = session["id"].as_str().unwrap();
    let mut stream = api
        .http
        .get(format!("{}/sessions/{sid}/stream", api.base))
        .header("x-account-id", &api.account)
        .send()
        .await
        .unwrap();
    assert_eq!(stream.headers()["content-type"], "text/event-stream");
    let sent = json!({"type": "page_view", "section_id": "intro", "t": "2025-03-03T09:00:05Z"});
    let (s, _) = api.post(&format!("/sessions/{sid}/events"), sent.clone()).await;
    assert_eq!(s, StatusCode::OK);
    let mut buf = String::new();
    while !buf.contains("\n\n") {
        let chunk = tokio::time::timeout(Duration::from_secs(5), stream.chunk()).await.unwrap().unwrap().unwrap();
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
    }
    assert!(buf.contains("event: reading_event"), "{buf}");
    let data = buf.lines().find_map(|l| l.strip_prefix("data: ")).unwrap();
    assert_eq!(serde_json::from_str::<Value>(data).unwrap(), sent);
}

#[tokio::test]
async fn stats_attribute_minutes_to_the_start_hour() {
    let api = spawn().await;
    let sticker = api.setup_profile().await;
    let story = api.story(&sticker).await;
    let id = story["story"]["id"].as_str().unwrap();
    for (day, device) in [(1, "reader"), (2, "reader"), (3, "creator")] {
        let start = Utc.with_ymd_and_hms(2025, 3, day, 21, 10, 0).unwrap();
        let (_, s) = api.post("/sessions", json!({"story_id": id, "device": device, "started_at": start})).await;
        let end = start + chrono::Duration::minutes(10);
        let (code, _) = api
            .post(&format!("/sessions/{}/events", s["id"].as_str().unwrap()), json!({"type": "page_view", "section_id": "intro", "t": end}))
            .await;
        assert_eq!(code, StatusCode::OK);
    }
    let (_, stats) = api.get("/stats?from=2025-03-01T00:00:00Z&to=2025-03-05T00:00:00Z").await;
    assert_eq!(stats["reading_minutes_by_hour"][21], 30.0);
    assert_eq!(stats["device_breakdown"]["creator"]["sessions"], 1);
    assert_eq!(stats["device_breakdown"]["reader"]["sessions"], 2);
    assert!(stats["stories_created_per_day"].as_object().unwrap().is_empty());

    let (_, empty) = api.get("/stats?from=2020-01-01T00:00:00Z&to=2020-01-02T00:00:00Z").await;
    assert!(empty["reading_minutes_by_hour"].as_array().unwrap().iter().all(|m| m == 0.0));
    let (_, all) = api.get("/stats").await;
    assert_eq!(all["stories_created_per_day"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum::<u64>(), 1);

    let (_, export) = api.get("/export").await;
    let parsed = forge_core::insights::EventExport::parse(&export.to_string()).unwrap();
    assert_eq!(parsed.accounts[0].sessions.len(), 3);
}

#[tokio::test]
async fn unfinished_jobs_resume_after_restart() {
    use forge_core::pipeline::{GenerationJob, GenerationRequest};
    use forge_service::store::q;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forge.db");
    let request = GenerationRequest {
        profile: forge_core::fixtures::alex_profile(),
        interests: vec!["Firefighter".into()],
        target_behavior: "Taking turns during playtime".into(),
        reward_sticker: forge_core::RewardSticker::star().to_ref(),
    };
    {
        let db = Db::open(&path).unwrap();
        db.tx(|tx| {
            q::ensure_account(tx, "fam1")?;
            q::insert_job(tx, "fam1", &GenerationJob::new("job-left-over", request.clone()), Utc::now())
        })
        .unwrap();
    }
    let mut config = forge_service::ServiceConfig::for_tests();
    config.storage.path = path;
    let service = Service::open(&config).unwrap();
    assert_eq!(service.resume_unfinished().unwrap(), 1);
    let job = service.wait_for_job("fam1", "job-left-over", Duration::from_secs(10)).await.unwrap();
    assert!(job.story_id().is_some(), "{:?}", job.status);
    assert_eq!(service.stories("fam1").unwrap().len(), 1);
}
