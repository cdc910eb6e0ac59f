//! HTTP service over one immutable checkpoint.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

use heartgen_core::datakit::{Dims, NormalizationBounds, Spacing};
use heartgen_core::engine::{complete_sequence, condition_sweep, generate_sequences};
use heartgen_core::model::{ModelCheckpoint, CHECKPOINT_VERSION};
use heartgen_core::Error;

use crate::api::{ApiSequencePayload, CompleteRequest, ErrorBody, GenerateRequest, SweepRequest, SweepResponse};

/// Upper bound on sequences produced by a single request.
pub const MAX_SAMPLES_PER_REQUEST: usize = 10_000;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: &'static str,
    detail: String,
}

impl ApiError {
    fn bad_request(detail: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            error: "validation_error",
            detail: detail.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, error) = match e {
            Error::InvalidInput(_) | Error::NonFinite(_) | Error::Json(_) => (StatusCode::BAD_REQUEST, "validation_error"),
            Error::ShapeMismatch(_) | Error::GeometryExceedsGrid(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "dimension_mismatch")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal_error"),
        };
        Self {
            status,
            error,
            detail: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.error.into(),
            detail: self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Parses a JSON body, reporting the offending field path on failure.
fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            ApiError::bad_request(inner.to_string())
        } else {
            ApiError::bad_request(format!("{path}: {inner}"))
        }
    })
}

fn check_count(n: usize, per: usize) -> Result<(), ApiError> {
    if n == 0 {
        return Err(ApiError::bad_request("n must be at least 1"));
    }
    match n.checked_mul(per) {
        Some(total) if total <= MAX_SAMPLES_PER_REQUEST => Ok(()),
        _ => Err(ApiError::bad_request(format!(
            "request asks for more than {MAX_SAMPLES_PER_REQUEST} sequences"
        ))),
    }
}

/// Runs CPU-heavy work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        error: "internal_error",
        detail: format!("worker failed: {e}"),
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ModelInfo {
    pub format_version: u32,
    pub grid_dims: Dims,
    pub t_frames: usize,
    pub latent_dim_z0: usize,
    pub latent_dim_zc: usize,
    pub beta: f64,
    pub spacing_mm: Spacing,
    pub frame_period_s: f64,
    pub normalization_bounds: NormalizationBounds,
    /// Accepted ages, half-open.
    pub age_range: (u32, u32),
    pub parameter_count: usize,
}

impl ModelInfo {
    pub fn new(ckpt: &ModelCheckpoint) -> Self {
        let c = ckpt.config();
        Self {
            format_version: CHECKPOINT_VERSION,
            grid_dims: c.grid_dims,
            t_frames: c.t_frames,
            latent_dim_z0: c.latent_dim_z0,
            latent_dim_zc: c.latent_dim_zc,
            beta: c.beta,
            spacing_mm: ckpt.spacing,
            frame_period_s: ckpt.frame_period_s,
            normalization_bounds: ckpt.bounds,
            age_range: (10, 80),
            parameter_count: ckpt.network.param_count(),
        }
    }
}

async fn model_info(State(ckpt): State<Arc<ModelCheckpoint>>) -> Json<ModelInfo> {
    Json(ModelInfo::new(&ckpt))
}

async fn generate(State(ckpt): State<Arc<ModelCheckpoint>>, body: Bytes) -> ApiResult<Vec<ApiSequencePayload>> {
    let req: GenerateRequest = parse(&body)?;
    check_count(req.n, 1)?;
    blocking(move || {
        let seqs = generate_sequences(&ckpt, &req.conditions, req.n, req.seed)?;
        Ok(Json(seqs.iter().map(|s| ApiSequencePayload::encode(s, req.codec)).collect()))
    })
    .await
}

async fn complete(State(ckpt): State<Arc<ModelCheckpoint>>, body: Bytes) -> ApiResult<ApiSequencePayload> {
    let req: CompleteRequest = parse(&body)?;
    blocking(move || {
        let x0 = req.x0.decode_frames()?;
        let seq = complete_sequence(&ckpt, &x0[0], &req.conditions, req.mode, req.seed)?;
        Ok(Json(ApiSequencePayload::encode(&seq, req.codec)))
    })
    .await
}

async fn sweep(State(ckpt): State<Arc<ModelCheckpoint>>, body: Bytes) -> ApiResult<SweepResponse> {
    let req: SweepRequest = parse(&body)?;
    if req.values.is_empty() {
        return Err(ApiError::bad_request("values must not be empty"));
    }
    check_count(req.n, req.values.len())?;
    blocking(move || {
        let res = condition_sweep(
            &ckpt,
            &req.base_conditions,
            req.factor,
            &req.values,
            req.n,
            req.seed,
            req.fix_latent,
        )?;
        Ok(Json(SweepResponse::from_result(&res, req.include_samples.then_some(req.codec))))
    })
    .await
}

pub fn router(ckpt: Arc<ModelCheckpoint>) -> Router {
    Router::new()
        .route("/model/info", get(model_info))
        .route("/generate", post(generate))
        .route("/complete", post(complete))
        .route("/sweep", post(sweep))
        .with_state(ckpt)
}

pub async fn serve(ckpt: ModelCheckpoint, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(ckpt)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
