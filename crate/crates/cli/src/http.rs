//! HTTP texturing client and the mock texturing server.

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use scenesynth::diffusion::wire::{
    self, ErrorResponse, ImageResponse, InpaintRequestBody, TextureRequestBody, INPAINT_PATH, TEXTURE_PATH,
};
use scenesynth::diffusion::{
    DiffusionError, InpaintRequest, MockBackend, TextureRequest, TexturingBackend, TexturingResult,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Environment variable holding the backend base URL.
pub const BACKEND_URL_ENV: &str = "SCENESYNTH_BACKEND_URL";

/// Blocking client for a remote texturing service.
pub struct HttpBackend {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: &str) -> Result<Self, DiffusionError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(|e| DiffusionError::Backend(e.to_string()))?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }

    fn post<B: Serialize>(&self, path: &str, body: &B) -> Result<TexturingResult, DiffusionError> {
        let start = Instant::now();
        let json = serde_json::to_vec(body).map_err(|e| DiffusionError::Codec(e.to_string()))?;
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(json)
            .send()
            .map_err(|e| DiffusionError::Backend(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| DiffusionError::Backend(e.to_string()))?;
        if !status.is_success() {
            let msg = serde_json::from_slice::<ErrorResponse>(&bytes)
                .map(|e| e.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
            let msg = format!("{status}: {msg}");
            // client errors will not succeed on retry
            return Err(if status.is_client_error() {
                DiffusionError::Rejected(msg)
            } else {
                DiffusionError::Backend(msg)
            });
        }
        let body: ImageResponse =
            serde_json::from_slice(&bytes).map_err(|e| DiffusionError::Backend(format!("bad response: {e}")))?;
        Ok(TexturingResult {
            image: wire::decode_rgb(&body.image)?,
            latency: start.elapsed(),
            backend_id: body.model_id,
        })
    }
}

impl TexturingBackend for HttpBackend {
    fn texture(&self, req: &TextureRequest) -> Result<TexturingResult, DiffusionError> {
        self.post(TEXTURE_PATH, &req.to_body()?)
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<TexturingResult, DiffusionError> {
        self.post(INPAINT_PATH, &req.to_body()?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorResponse { error: msg.into() })).into_response()
}

fn handle<B: DeserializeOwned, R>(
    bytes: &[u8],
    to_request: impl Fn(&B) -> Result<R, DiffusionError>,
    run: impl Fn(&R) -> Result<TexturingResult, DiffusionError>,
) -> Response {
    let body: B = match serde_json::from_slice(bytes) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}")),
    };
    let req = match to_request(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match run(&req).and_then(|r| wire::encode_rgb(&r.image).map(|img| (img, r.backend_id))) {
        Ok((image, model_id)) => Json(ImageResponse { image, model_id }).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Routes of the mock texturing service.
pub fn mock_router() -> Router {
    Router::new()
        .route(
            TEXTURE_PATH,
            post(|bytes: Bytes| async move {
                handle::<TextureRequestBody, _>(&bytes, TextureRequest::from_body, |r| MockBackend::new().texture(r))
            }),
        )
        .route(
            INPAINT_PATH,
            post(|bytes: Bytes| async move {
                handle::<InpaintRequestBody, _>(&bytes, InpaintRequest::from_body, |r| MockBackend::new().inpaint(r))
            }),
        )
}

/// Binds the mock server; `port` 0 picks a free port.
pub async fn bind_mock(host: &str, port: u16) -> Result<tokio::net::TcpListener, ServeError> {
    tokio::net::TcpListener::bind((host, port)).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            ServeError::PortInUse(port)
        } else {
            ServeError::Io(e)
        }
    })
}

pub async fn serve_mock(listener: tokio::net::TcpListener) -> Result<(), ServeError> {
    axum::serve(listener, mock_router()).await?;
    Ok(())
}

/// Blocking entry point: serves until the process is stopped.
pub fn serve_mock_backend(host: &str, port: u16) -> Result<(), ServeError> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = bind_mock(host, port).await?;
        log::info!("mock texturing backend listening on {}", listener.local_addr()?);
        serve_mock(listener).await
    })
}

/// Runs the mock server on a background thread and returns its address.
pub fn spawn_mock_backend() -> Result<SocketAddr, ServeError> {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = match tokio::runtime::Runtime::new() {
            Ok(rt) => rt,
            Err(e) => {
                let _ = tx.send(Err(ServeError::Io(e)));
                return;
            }
        };
        rt.block_on(async move {
            match bind_mock("127.0.0.1", 0).await {
                Ok(listener) => {
                    let _ = tx.send(listener.local_addr().map_err(ServeError::Io));
                    let _ = serve_mock(listener).await;
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                }
            }
        });
    });
    rx.recv().map_err(|_| ServeError::Io(std::io::Error::other("mock server thread exited")))?
}
