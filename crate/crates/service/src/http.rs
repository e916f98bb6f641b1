//! Versioned HTTP API and the server-sent event channel.

use std::convert::Infallible;

use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use axum::body::Bytes;
use chrono::{DateTime, Utc};
use forge_core::session::ReadingEvent;
use forge_core::stats::TimeRange;
use forge_core::ImageRef;
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::config::ServiceConfig;
use crate::error::{ServiceError, ServiceResult};
use crate::service::{CreateStory, EntityInput, Service, StartSession, StickerInput};

pub const ACCOUNT_HEADER: &str = "x-account-id";

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

/// The calling account, from the account header.
pub struct Account(pub String);

impl<S: Send + Sync> FromRequestParts<S> for Account {
    type Rejection = ServiceError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let raw = parts
            .headers
            .get(ACCOUNT_HEADER)
            .and_then(|v| v.to_str().ok())
            .ok_or_else(|| ServiceError::new("unauthenticated", format!("missing {ACCOUNT_HEADER} header")))?;
        let ok = !raw.is_empty() && raw.len() <= 64 && raw.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !ok {
            return Err(ServiceError::new("unauthenticated", "malformed account id"));
        }
        Ok(Account(raw.to_string()))
    }
}

/// JSON body whose rejections use the API error shape.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(v) = Json::<T>::from_request(req, state).await.map_err(|e| ServiceError::bad_request(e.body_text()))?;
        Ok(Body(v))
    }
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ServiceResult<T> {
    q.map(|Query(v)| v).map_err(|e| ServiceError::bad_request(e.body_text()))
}

fn own_profile(account: &str, profile_id: &str) -> ServiceResult<()> {
    if account == profile_id {
        Ok(())
    } else {
        Err(ServiceError::not_found(format!("profile {profile_id}")))
    }
}

type Api = ServiceResult<Response>;

fn ok(v: impl serde::Serialize) -> Api {
    Ok(Json(v).into_response())
}

async fn get_profile(State(s): State<Service>, Account(a): Account, Path(id): Path<String>) -> Api {
    own_profile(&a, &id)?;
    ok(s.profile(&a)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChildName {
    name: String,
}

async fn put_child(State(s): State<Service>, Account(a): Account, Path(id): Path<String>, Body(b): Body<ChildName>) -> Api {
    own_profile(&a, &id)?;
    ok(s.set_child_name(&a, &b.name)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChildPhoto {
    #[serde(default)]
    photo: Option<ImageRef>,
}

async fn put_child_photo(
    State(s): State<Service>,
    Account(a): Account,
    Path(id): Path<String>,
    Body(b): Body<ChildPhoto>,
) -> Api {
    own_profile(&a, &id)?;
    ok(s.set_child_photo(&a, b.photo)?)
}

async fn post_entity(State(s): State<Service>, Account(a): Account, Path(id): Path<String>, Body(b): Body<EntityInput>) -> Api {
    own_profile(&a, &id)?;
    Ok((StatusCode::CREATED, Json(s.upsert_entity(&a, b)?)).into_response())
}

async fn delete_entity(State(s): State<Service>, Account(a): Account, Path((id, eid)): Path<(String, String)>) -> Api {
    own_profile(&a, &id)?;
    s.delete_entity(&a, &eid)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn get_stickers(State(s): State<Service>, Account(a): Account) -> Api {
    ok(s.stickers(&a)?)
}

async fn post_sticker(State(s): State<Service>, Account(a): Account, Body(b): Body<StickerInput>) -> Api {
    Ok((StatusCode::CREATED, Json(s.upsert_sticker(&a, b)?)).into_response())
}

async fn post_photo(State(s): State<Service>, Account(a): Account, body: Bytes) -> Api {
    Ok((StatusCode::CREATED, Json(json!({ "image": s.put_photo(&a, &body)? }))).into_response())
}

async fn get_photo(State(s): State<Service>, Account(a): Account, Path(image): Path<String>) -> Api {
    let image = ImageRef::parse(&image).ok_or_else(|| ServiceError::bad_request("malformed image reference"))?;
    let bytes = s.photo(&a, &image)?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn post_story(State(s): State<Service>, Account(a): Account, Body(b): Body<CreateStory>) -> Api {
    let job = s.create_story(&a, b)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job.id, "status": job.status }))).into_response())
}

async fn list_stories(State(s): State<Service>, Account(a): Account) -> Api {
    ok(s.stories(&a)?)
}

async fn get_job(State(s): State<Service>, Account(a): Account, Path(id): Path<String>) -> Api {
    ok(s.job(&a, &id)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VersionQuery {
    version: Option<u32>,
}

async fn get_story(
    State(s): State<Service>,
    Account(a): Account,
    Path(id): Path<String>,
    q: Result<Query<VersionQuery>, QueryRejection>,
) -> Api {
    ok(s.story(&a, &id, query(q)?.version)?)
}

async fn patch_section(
    State(s): State<Service>,
    Account(a): Account,
    Path((id, sid)): Path<(String, String)>,
    Body(b): Body<Value>,
) -> Api {
    ok(s.edit_section(&a, &id, &sid, &b)?)
}

async fn regen_image(State(s): State<Service>, Account(a): Account, Path((id, sid)): Path<(String, String)>) -> Api {
    ok(s.regenerate_image(&a, &id, &sid).await?)
}

async fn post_session(State(s): State<Service>, Account(a): Account, Body(b): Body<StartSession>) -> Api {
    Ok((StatusCode::CREATED, Json(s.start_session(&a, b)?)).into_response())
}

async fn get_session(State(s): State<Service>, Account(a): Account, Path(id): Path<String>) -> Api {
    ok(s.session(&a, &id)?)
}

async fn post_event(State(s): State<Service>, Account(a): Account, Path(id): Path<String>, Body(e): Body<ReadingEvent>) -> Api {
    ok(s.record_event(&a, &id, e)?)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CompleteBody {
    #[serde(default)]
    t: Option<DateTime<Utc>>,
}

async fn post_complete(State(s): State<Service>, Account(a): Account, Path(id): Path<String>, body: Bytes) -> Api {
    let b: CompleteBody = if body.is_empty() {
        CompleteBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::bad_request(e.to_string()))?
    };
    ok(s.complete_session(&a, &id, b.t)?)
}

async fn session_stream(
    State(s): State<Service>,
    Account(a): Account,
    Path(id): Path<String>,
) -> ServiceResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    s.session(&a, &id)?;
    let rx = s.subscribe();
    let stream = futures::stream::unfold((rx, a, id), |(mut rx, a, id)| async move {
        loop {
            match rx.recv().await {
                Ok(u) if u.account == a && u.session_id == id => {
                    let event = Event::default().event("reading_event").json_data(&u.event).expect("event serializes");
                    return Some((Ok(event), (rx, a, id)));
                }
                Ok(_) | Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeQuery {
    from: Option<DateTime<Utc>>,
    to: Option<DateTime<Utc>>,
}

async fn get_stats(State(s): State<Service>, Account(a): Account, q: Result<Query<RangeQuery>, QueryRejection>) -> Api {
    let r = query(q)?;
    ok(s.stats(&a, TimeRange { from: r.from, to: r.to })?)
}

async fn get_export(State(s): State<Service>, Account(a): Account) -> Api {
    ok(s.export(&a)?)
}

async fn fallback() -> ServiceError {
    ServiceError::not_found("no such endpoint")
}

pub fn router(service: Service) -> Router {
    let v1 = Router::new()
        .route("/profiles/{id}", get(get_profile))
        .route("/profiles/{id}/child", put(put_child))
        .route("/profiles/{id}/child/photo", put(put_child_photo))
        .route("/profiles/{id}/entities", post(post_entity))
        .route("/profiles/{id}/entities/{eid}", axum::routing::delete(delete_entity))
        .route("/stickers", get(get_stickers).post(post_sticker))
        .route("/photos", post(post_photo))
        .route("/photos/{image}", get(get_photo))
        .route("/stories", post(post_story).get(list_stories))
        .route("/stories/{id}", get(get_story))
        .route("/stories/{id}/sections/{sid}", patch(patch_section))
        .route("/stories/{id}/sections/{sid}/image", post(regen_image))
        .route("/jobs/{id}", get(get_job))
        .route("/sessions", post(post_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", post(post_event))
        .route("/sessions/{id}/complete", post(post_complete))
        .route("/sessions/{id}/stream", get(session_stream))
        .route("/stats", get(get_stats))
        .route("/export", get(get_export));
    Router::new().nest("/v1", v1).fallback(fallback).with_state(service)
}

/// Opens the service, requeues unfinished jobs, and serves until the
/// process exits.
pub async fn serve(config: &ServiceConfig) -> std::io::Result<()> {
    let service = Service::open(config).map_err(std::io::Error::other)?;
    let resumed = service.resume_unfinished().map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(&config.server.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, resumed, "serving");
    axum::serve(listener, router(service)).await
}
