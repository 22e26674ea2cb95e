//! Request handlers. Storage writes happen in `PUT` and `POST` only;
//! extraction slices the stored stream and never opens a raw source.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::Path as FsPath;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use smra_core::codec::{offline_encode, EmbeddedBitstream};
use smra_core::entropy::rate_storage_single_memory;
use smra_core::graph::NavigationGraph;
use smra_core::model::CorrelationModel;
use smra_core::source::SourceEnsemble;

use crate::store::{Store, StoreLayout};
use crate::vfs::Vfs;
use crate::ServiceError;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub graph: NavigationGraph,
    pub model: CorrelationModel,
    /// Block length every stored source must match.
    pub n: usize,
    pub universal: bool,
}

pub struct AppState {
    config: ServiceConfig,
    store: Store,
    /// One guard per source id: encodes are serialized per id, reads are not.
    encode_locks: tokio::sync::Mutex<HashMap<u32, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn open(
        config: ServiceConfig,
        data_dir: &FsPath,
        vfs: Arc<dyn Vfs>,
    ) -> Result<Arc<Self>, ServiceError> {
        let store = Store::open(StoreLayout::new(data_dir), vfs)?;
        Ok(Arc::new(Self {
            config,
            store,
            encode_locks: tokio::sync::Mutex::new(HashMap::new()),
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    async fn encode_lock(&self, id: u32) -> Arc<tokio::sync::Mutex<()>> {
        let mut map = self.encode_locks.lock().await;
        map.entry(id).or_insert_with(|| Arc::new(tokio::sync::Mutex::new(()))).clone()
    }
}

pub fn app(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sources/{id}", put(put_source))
        .route("/v1/encode/{k}", post(encode))
        .route("/v1/extract/{k}", get(extract))
        .route("/v1/bounds/{k}", get(bounds))
        .route("/v1/report/{k}", get(report))
        .with_state(state)
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
) -> io::Result<()> {
    axum::serve(listener, app(state)).await
}

fn error_response(err: ServiceError) -> Response {
    let status = match &err {
        ServiceError::SourceExists(_) => StatusCode::CONFLICT,
        ServiceError::Malformed(_) => StatusCode::BAD_REQUEST,
        ServiceError::UnknownSource(_)
        | ServiceError::MissingSources(_)
        | ServiceError::UnknownRequest { .. } => StatusCode::NOT_FOUND,
        ServiceError::NotEncoded(_) => StatusCode::PRECONDITION_FAILED,
        ServiceError::Code(_) | ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    let body = match &err {
        ServiceError::MissingSources(ids) => {
            json!({ "error": err.to_string(), "missing": ids })
        }
        _ => json!({ "error": err.to_string() }),
    };
    (status, [("content-type", "application/json")], body.to_string()).into_response()
}

fn json_ok(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [("content-type", "application/json")], bytes).into_response()
}

async fn put_source(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u32>,
    body: Bytes,
) -> Response {
    let result = (|| {
        if id == 0 || id > state.config.graph.source_count() {
            return Err(ServiceError::Malformed(format!(
                "id {id} is not a source node of the configured graph"
            )));
        }
        state.store.put_source(id, &body, state.config.n)
    })();
    match result {
        Ok(()) => json_ok(
            StatusCode::CREATED,
            json!({ "source_id": id, "n": state.config.n }).to_string().into_bytes(),
        ),
        Err(e) => error_response(e),
    }
}

/// Digest of everything the encoder reads; the idempotency key for a
/// source's stored stream.
fn input_hash(config: &ServiceConfig, k: u32, x: &[u8], sides: &BTreeMap<u32, Vec<u8>>) -> String {
    let mut h = Sha256::new();
    h.update(config.graph.to_text().as_bytes());
    h.update(config.model.to_text().as_bytes());
    h.update((config.n as u64).to_le_bytes());
    h.update([config.universal as u8]);
    h.update(k.to_le_bytes());
    h.update(x);
    for (j, y) in sides {
        h.update(j.to_le_bytes());
        h.update(y);
    }
    hex::encode(h.finalize())
}

async fn encode(State(state): State<Arc<AppState>>, Path(k): Path<u32>) -> Response {
    match encode_inner(state, k).await {
        Ok(report) => json_ok(StatusCode::OK, report),
        Err(e) => error_response(e),
    }
}

async fn encode_inner(state: Arc<AppState>, k: u32) -> Result<Vec<u8>, ServiceError> {
    let neighbors: Vec<u32> = state
        .config
        .graph
        .one_hop(k)
        .map_err(|_| ServiceError::UnknownSource(k))?
        .to_vec();
    let lock = state.encode_lock(k).await;
    let _guard = lock.lock().await;

    let mut required = vec![k];
    required.extend(neighbors.iter().copied().filter(|&j| j != 0));
    let missing: Vec<u32> =
        required.iter().copied().filter(|&id| !state.store.has_source(id)).collect();
    if !missing.is_empty() {
        return Err(ServiceError::MissingSources(missing));
    }

    let x = state.store.read_source(k)?;
    let mut sides = BTreeMap::new();
    for &j in neighbors.iter().filter(|&&j| j != 0) {
        sides.insert(j, state.store.read_source(j)?);
    }
    let hash = input_hash(&state.config, k, &x, &sides);
    if let Some(entry) = state.store.encoded(k) {
        if entry.input_hash == hash {
            return state.store.read_report(k);
        }
        // Sources are immutable, so a mismatch means the service was
        // restarted with a different graph/model over an old data dir.
        return Err(ServiceError::Malformed(format!(
            "source {k} was encoded from different inputs; refusing to overwrite"
        )));
    }

    let worker = state.clone();
    let (stream_bytes, report_bytes) =
        tokio::task::spawn_blocking(move || -> Result<(Vec<u8>, Vec<u8>), ServiceError> {
            let ensemble = SourceEnsemble {
                source_id: k,
                n: worker.config.n,
                x,
                side_infos: sides,
                seed: 0,
            };
            let (stream, report) = offline_encode(
                &ensemble,
                &worker.config.graph,
                &worker.config.model,
                worker.config.universal,
            )?;
            let report = serde_json::to_vec_pretty(&report).expect("report serializes");
            Ok((stream.to_bytes(), report))
        })
        .await
        .expect("encode task panicked")?;

    state.store.write_encoded(k, &stream_bytes, &report_bytes, hash)?;
    Ok(report_bytes)
}

#[derive(Deserialize)]
struct ExtractQuery {
    prev: u32,
}

async fn extract(
    State(state): State<Arc<AppState>>,
    Path(k): Path<u32>,
    Query(q): Query<ExtractQuery>,
) -> Response {
    match extract_inner(&state, k, q.prev) {
        Ok(resp) => resp,
        Err(e) => error_response(e),
    }
}

fn extract_inner(state: &AppState, k: u32, prev: u32) -> Result<Response, ServiceError> {
    let neighbors = state
        .config
        .graph
        .one_hop(k)
        .map_err(|_| ServiceError::UnknownSource(k))?;
    if !neighbors.contains(&prev) {
        return Err(ServiceError::UnknownRequest { k, prev });
    }
    let bytes = state.store.read_stream(k)?;
    let stream = EmbeddedBitstream::from_bytes(&bytes)?;
    let tx = stream.extract(prev).map_err(|e| match e {
        smra_core::Error::UnknownRequest(_) => ServiceError::UnknownRequest { k, prev },
        other => ServiceError::Code(other),
    })?;
    Ok((
        StatusCode::OK,
        [
            ("content-type", "application/octet-stream".to_string()),
            ("x-level", tx.level_rank.to_string()),
            ("x-bits", tx.bits.len().to_string()),
        ],
        tx.to_bytes(),
    )
        .into_response())
}

async fn bounds(State(state): State<Arc<AppState>>, Path(k): Path<u32>) -> Response {
    let result = rate_storage_single_memory(k, &state.config.graph, &state.config.model)
        .map_err(|e| match e {
            smra_core::Error::Graph(_) => ServiceError::UnknownSource(k),
            other => ServiceError::Code(other),
        });
    match result {
        Ok(bound) => json_ok(
            StatusCode::OK,
            serde_json::to_vec_pretty(&bound).expect("bound serializes"),
        ),
        Err(e) => error_response(e),
    }
}

async fn report(State(state): State<Arc<AppState>>, Path(k): Path<u32>) -> Response {
    let result = match state.store.encoded(k) {
        Some(_) => state.store.read_report(k),
        None => Err(ServiceError::UnknownSource(k)),
    };
    match result {
        Ok(bytes) => json_ok(StatusCode::OK, bytes),
        Err(e) => error_response(e),
    }
}
