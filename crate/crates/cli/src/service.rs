//! JSON-over-HTTP inference service.
//!
//! Several dialogue models (one per variant) and one emotion scorer are
//! loaded once and shared read-only between request handlers. Decoding is
//! CPU-bound, so each chat request runs on the blocking pool.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use emoseq_core::checkpoint::{tokenizer_digest, DialogueModel};
use emoseq_core::classifier::EmotionScorer;
use emoseq_core::emotion::NUM_CLASSES;
use emoseq_core::evaluation::trace;
use emoseq_core::tensor::argmax;
use emoseq_core::text::tokenize;
use emoseq_core::Emotion;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

/// Longest accepted chat text, in characters.
pub const MAX_TEXT_CHARS: usize = 2000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChatRequest {
    pub text: String,
    pub emotion: String,
    #[serde(default = "default_variant")]
    pub variant: String,
}

fn default_variant() -> String {
    "default".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionPayload {
    pub source_tokens: Vec<String>,
    pub output_tokens: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub response: String,
    pub detected_emotion: String,
    pub distribution: Vec<f64>,
    pub attention: AttentionPayload,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub variant: String,
    pub config_digest: String,
    pub tokenizer_digest: String,
    pub vocab: usize,
    pub hidden: usize,
    pub embed: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelList {
    pub default: String,
    pub models: Vec<ModelInfo>,
}

/// Models and scorer shared by all handlers. The first model is the
/// default variant.
pub struct ServiceState {
    models: Vec<(String, Arc<DialogueModel>)>,
    scorer: Arc<dyn EmotionScorer>,
}

impl std::fmt::Debug for ServiceState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.models.iter().map(|(n, _)| n.as_str()).collect();
        f.debug_struct("ServiceState")
            .field("models", &names)
            .finish_non_exhaustive()
    }
}

impl ServiceState {
    pub fn new(
        models: Vec<DialogueModel>,
        scorer: Arc<dyn EmotionScorer>,
        scorer_tokenizer: &str,
    ) -> Result<Self, String> {
        if models.is_empty() {
            return Err("the service needs at least one dialogue model".into());
        }
        let mut named: Vec<(String, Arc<DialogueModel>)> = Vec::with_capacity(models.len());
        for m in models {
            let name = m.model.kind.to_string();
            if named.iter().any(|(n, _)| *n == name) {
                return Err(format!("two checkpoints hold the {name} variant"));
            }
            if tokenizer_digest(&m.tokenizer) != tokenizer_digest(scorer_tokenizer) {
                return Err(format!(
                    "{name} uses tokenizer {:?} but the classifier uses {scorer_tokenizer:?}",
                    m.tokenizer
                ));
            }
            named.push((name, Arc::new(m)));
        }
        Ok(Self {
            models: named,
            scorer,
        })
    }

    fn model(&self, variant: &str) -> Option<Arc<DialogueModel>> {
        if variant == "default" {
            return Some(self.models[0].1.clone());
        }
        self.models
            .iter()
            .find(|(n, _)| n == variant)
            .map(|(_, m)| m.clone())
    }

    pub fn model_list(&self) -> ModelList {
        ModelList {
            default: self.models[0].0.clone(),
            models: self
                .models
                .iter()
                .map(|(name, m)| ModelInfo {
                    variant: name.clone(),
                    config_digest: m.config_digest(),
                    tokenizer_digest: tokenizer_digest(&m.tokenizer),
                    vocab: m.model.dims.vocab,
                    hidden: m.model.dims.hidden,
                    embed: m.model.dims.embed,
                })
                .collect(),
        }
    }

    /// Answers one chat request. Pure with respect to the shared state.
    pub fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ApiError> {
        if req.text.chars().count() > MAX_TEXT_CHARS {
            return Err(ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                format!("text exceeds {MAX_TEXT_CHARS} characters"),
            ));
        }
        let emotion: Emotion = req
            .emotion
            .parse()
            .ok()
            .filter(|e: &Emotion| e.is_class())
            .ok_or_else(|| ApiError::bad_request(format!("unknown emotion {:?}", req.emotion)))?;
        let model = self
            .model(&req.variant)
            .ok_or_else(|| ApiError::bad_request(format!("unknown variant {:?}", req.variant)))?;
        let mut tokens = tokenize(&req.text);
        if tokens.is_empty() {
            return Err(ApiError::bad_request("text contains no tokens"));
        }
        // Same truncation as corpus ingestion.
        tokens.truncate(model.model.dims.max_len);
        let t = trace(&model, &tokens, emotion).map_err(ApiError::internal)?;
        let distribution = if t.output_tokens.is_empty() {
            [1.0 / NUM_CLASSES as f64; NUM_CLASSES]
        } else {
            self.scorer
                .probabilities(&t.output_tokens)
                .map_err(ApiError::internal)?
        };
        Ok(ChatResponse {
            response: t.output_tokens.join(" "),
            detected_emotion: Emotion::CLASSES[argmax(&distribution)].name().to_string(),
            distribution: distribution.to_vec(),
            attention: AttentionPayload {
                source_tokens: t.source_tokens,
                output_tokens: t.output_tokens,
                matrix: t.matrix,
            },
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            warn!("request failed: {}", self.message);
        }
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/chat", post(chat))
        .route("/api/models", get(models))
        .route("/api/emotions", get(emotions))
        .route("/healthz", get(healthz))
        .with_state(state)
}

// The body is parsed by hand so malformed JSON also gets an `{error}` body.
async fn chat(
    State(state): State<Arc<ServiceState>>,
    body: Bytes,
) -> Result<Json<ChatResponse>, ApiError> {
    let req: ChatRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    let response = tokio::task::spawn_blocking(move || state.chat(&req))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(response))
}

async fn models(State(state): State<Arc<ServiceState>>) -> Json<ModelList> {
    Json(state.model_list())
}

async fn emotions() -> Json<Vec<&'static str>> {
    Json(Emotion::CLASSES.iter().map(|e| e.name()).collect())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

/// Serves on an already bound listener until the future is dropped.
pub async fn serve_on(listener: TcpListener, state: Arc<ServiceState>) -> io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: Arc<ServiceState>) -> io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
