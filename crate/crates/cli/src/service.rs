//! Read-only HTTP service.
//!
//! * `GET /health`
//! * `GET /search?q=&method=&k=&qid=`
//! * `POST /match?method=&k=` with a JSON table body
//!
//! Rankings are returned as the TREC run text the CLI prints for the same
//! request. Bad requests get 400, requests the loaded data cannot answer 422.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State as Extract};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tablesearch::corpus::Table;
use tablesearch::engine::{Engine, MatchMethod, SearchMethod};
use tablesearch::ltr::Model;

use crate::commands::{load_engine, match_run, render, search_run};
use crate::config::Config;
use crate::CliError;

/// Everything a request may touch; never mutated after startup.
pub struct State {
    engine: Engine,
    models: Vec<Model>,
}

impl State {
    pub fn new(engine: Engine, models: Vec<Model>) -> Self {
        State { engine, models }
    }

    /// Loads the engine; the knowledge base and both embedding stores are required.
    pub fn from_config(cfg: &Config, models: Vec<Model>) -> Result<Self, CliError> {
        let p = &cfg.paths;
        for (name, path) in [("--kb", &p.kb), ("--word-emb", &p.word_emb), ("--graph-emb", &p.graph_emb)] {
            if path.is_none() {
                return Err(CliError::Usage(format!("serve requires {name}")));
            }
        }
        Ok(State::new(load_engine(cfg)?, models))
    }

    fn search_model(&self, m: SearchMethod) -> Result<Option<&Model>, CliError> {
        if !m.is_learned() {
            return Ok(None);
        }
        let schema = m.schema();
        self.find(&schema, m.name())
    }

    fn match_model(&self, m: MatchMethod) -> Result<Option<&Model>, CliError> {
        if !m.is_learned() {
            return Ok(None);
        }
        let schema = self.engine.match_schema(m)?;
        self.find(&schema, m.name())
    }

    fn find(&self, schema: &[String], name: &str) -> Result<Option<&Model>, CliError> {
        self.models
            .iter()
            .find(|m| m.schema() == schema)
            .map(Some)
            .ok_or_else(|| CliError::Data(format!("no model loaded for method `{name}`")))
    }

    fn search(&self, params: &HashMap<String, String>) -> Result<String, CliError> {
        let q = params
            .get("q")
            .filter(|q| !q.trim().is_empty())
            .ok_or_else(|| CliError::Usage("missing query parameter `q`".into()))?;
        let method: SearchMethod = parse(params, "method")?;
        let k = parse_k(params)?;
        let qid = params.get("qid").map_or("q1", String::as_str);
        let run = search_run(&self.engine, &[(qid.to_owned(), q.clone())], method, k, self.search_model(method)?)?;
        Ok(render(&run, method.name()))
    }

    fn match_table(&self, params: &HashMap<String, String>, body: &[u8]) -> Result<String, CliError> {
        let method: MatchMethod = parse(params, "method")?;
        let k = parse_k(params)?;
        let table: Table =
            serde_json::from_slice(body).map_err(|e| CliError::Usage(format!("malformed table: {e}")))?;
        table.validate().map_err(|e| CliError::Usage(format!("malformed table: {e}")))?;
        let run = match_run(&self.engine, &[(table.id.clone(), table)], method, k, self.match_model(method)?)?;
        Ok(render(&run, method.name()))
    }
}

fn parse<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    let v = params.get(key).ok_or_else(|| CliError::Usage(format!("missing parameter `{key}`")))?;
    v.parse().map_err(|e| CliError::Usage(format!("{key}: {e}")))
}

fn parse_k(params: &HashMap<String, String>) -> Result<usize, CliError> {
    match params.get("k") {
        None => Ok(10),
        Some(_) => parse(params, "k"),
    }
}

fn respond(result: Result<String, CliError>) -> Response {
    match result {
        Ok(body) => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response(),
        Err(CliError::Usage(m)) => (StatusCode::BAD_REQUEST, format!("{m}\n")).into_response(),
        Err(CliError::Data(m)) => (StatusCode::UNPROCESSABLE_ENTITY, format!("{m}\n")).into_response(),
    }
}

async fn blocking<F>(f: F) -> Response
where
    F: FnOnce() -> Result<String, CliError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => respond(r),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, format!("{e}\n")).into_response(),
    }
}

async fn health() -> &'static str {
    "ok\n"
}

async fn search(Extract(state): Extract<Arc<State>>, Query(params): Query<HashMap<String, String>>) -> Response {
    blocking(move || state.search(&params)).await
}

async fn match_table(
    Extract(state): Extract<Arc<State>>,
    Query(params): Query<HashMap<String, String>>,
    body: Bytes,
) -> Response {
    blocking(move || state.match_table(&params, &body)).await
}

pub fn router(state: Arc<State>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/search", get(search))
        .route("/match", post(match_table))
        .with_state(state)
}

/// Runs the service until the process is stopped.
pub fn serve(state: State, host: &str, port: u16) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| CliError::Data(format!("cannot bind {host}:{port}: {e}")))?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(state))).await?;
        Ok(())
    })
}
