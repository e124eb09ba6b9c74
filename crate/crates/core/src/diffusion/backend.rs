use std::sync::Mutex;
use std::time::{Duration, Instant};

use image::{GrayImage, Rgb, RgbImage};

use super::{DiffusionError, InpaintRequest, TextureRequest, TexturingResult};

pub const MOCK_MODEL_ID: &str = "mock-depth-texture-v1";
/// Side of the constant-color blocks in mock outputs.
pub const MOCK_BLOCK: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestMode {
    DepthTexture,
    Inpaint,
}

pub trait TexturingBackend: Send + Sync {
    fn texture(&self, req: &TextureRequest) -> Result<TexturingResult, DiffusionError>;
    fn inpaint(&self, req: &InpaintRequest) -> Result<TexturingResult, DiffusionError>;
}

impl<T: TexturingBackend + ?Sized> TexturingBackend for &T {
    fn texture(&self, req: &TextureRequest) -> Result<TexturingResult, DiffusionError> {
        (**self).texture(req)
    }
    fn inpaint(&self, req: &InpaintRequest) -> Result<TexturingResult, DiffusionError> {
        (**self).inpaint(req)
    }
}

impl<T: TexturingBackend + ?Sized> TexturingBackend for std::sync::Arc<T> {
    fn texture(&self, req: &TextureRequest) -> Result<TexturingResult, DiffusionError> {
        (**self).texture(req)
    }
    fn inpaint(&self, req: &InpaintRequest) -> Result<TexturingResult, DiffusionError> {
        (**self).inpaint(req)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub mode: RequestMode,
    pub prompt: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

/// Deterministic in-process backend.
///
/// Every 16x16 block gets a color from an FNV-1a hash of
/// `(prompt, seed, conditioning_scale, block_x, block_y)`. Texture requests
/// average that pattern with the control image; inpaint requests keep the
/// input outside the mask.
#[derive(Debug, Default)]
pub struct MockBackend {
    log: Mutex<Vec<CallRecord>>,
}

fn fnv1a(h: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Color of mock block `(bx, by)`.
pub fn mock_block_color(prompt: &str, seed: u64, conditioning_scale: f64, bx: u32, by: u32) -> [u8; 3] {
    let mut h = 0xcbf2_9ce4_8422_2325;
    h = fnv1a(h, prompt.as_bytes());
    h = fnv1a(h, &seed.to_le_bytes());
    h = fnv1a(h, &conditioning_scale.to_bits().to_le_bytes());
    h = fnv1a(h, &bx.to_le_bytes());
    h = fnv1a(h, &by.to_le_bytes());
    [h as u8, (h >> 8) as u8, (h >> 16) as u8]
}

pub fn mock_texture(req: &TextureRequest) -> RgbImage {
    let p = &req.params;
    RgbImage::from_fn(req.control.width(), req.control.height(), |x, y| {
        let c = req.control.get_pixel(x, y).0[0] as u16;
        let pattern = mock_block_color(&req.prompt, p.seed, p.conditioning_scale, x / MOCK_BLOCK, y / MOCK_BLOCK);
        Rgb(pattern.map(|v| ((v as u16 + c + 1) / 2) as u8))
    })
}

pub fn mock_inpaint(req: &InpaintRequest) -> RgbImage {
    let p = &req.params;
    RgbImage::from_fn(req.image.width(), req.image.height(), |x, y| {
        if req.mask.get_pixel(x, y).0[0] == 0 {
            *req.image.get_pixel(x, y)
        } else {
            Rgb(mock_block_color(&req.prompt, p.seed, p.conditioning_scale, x / MOCK_BLOCK, y / MOCK_BLOCK))
        }
    })
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().expect("mock log poisoned").len()
    }

    pub fn clear(&self) {
        self.log.lock().expect("mock log poisoned").clear();
    }

    fn record(&self, mode: RequestMode, prompt: &str, seed: u64, img: &GrayImage) {
        self.log.lock().expect("mock log poisoned").push(CallRecord {
            mode,
            prompt: prompt.to_string(),
            seed,
            width: img.width(),
            height: img.height(),
        });
    }
}

impl TexturingBackend for MockBackend {
    fn texture(&self, req: &TextureRequest) -> Result<TexturingResult, DiffusionError> {
        let start = Instant::now();
        self.record(RequestMode::DepthTexture, &req.prompt, req.params.seed, &req.control);
        Ok(TexturingResult {
            image: mock_texture(req),
            latency: start.elapsed(),
            backend_id: MOCK_MODEL_ID.to_string(),
        })
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<TexturingResult, DiffusionError> {
        let start = Instant::now();
        self.record(RequestMode::Inpaint, &req.prompt, req.params.seed, &req.mask);
        Ok(TexturingResult {
            image: mock_inpaint(req),
            latency: start.elapsed(),
            backend_id: MOCK_MODEL_ID.to_string(),
        })
    }
}

/// Retries failed requests with exponential backoff (`base_delay * 2^attempt`).
#[derive(Debug)]
pub struct Retrying<B> {
    pub inner: B,
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl<B> Retrying<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            max_retries: 3,
            base_delay: Duration::from_millis(250),
        }
    }

    fn run<T>(&self, mut f: impl FnMut() -> Result<T, DiffusionError>) -> Result<T, DiffusionError> {
        let mut attempt = 0;
        loop {
            match f() {
                Ok(v) => return Ok(v),
                Err(e @ DiffusionError::Backend(_)) if attempt < self.max_retries => {
                    log::warn!("texturing request failed (attempt {}): {e}", attempt + 1);
                    std::thread::sleep(self.base_delay * 2u32.pow(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl<B: TexturingBackend> TexturingBackend for Retrying<B> {
    fn texture(&self, req: &TextureRequest) -> Result<TexturingResult, DiffusionError> {
        self.run(|| self.inner.texture(req))
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<TexturingResult, DiffusionError> {
        self.run(|| self.inner.inpaint(req))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DiffusionParams;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures_left: AtomicU32,
        calls: AtomicU32,
    }

    impl TexturingBackend for Flaky {
        fn texture(&self, req: &TextureRequest) -> Result<TexturingResult, DiffusionError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.failures_left.load(Ordering::SeqCst) > 0 {
                self.failures_left.fetch_sub(1, Ordering::SeqCst);
                return Err(DiffusionError::Backend("transient".into()));
            }
            MockBackend::new().texture(req)
        }
        fn inpaint(&self, req: &InpaintRequest) -> Result<TexturingResult, DiffusionError> {
            MockBackend::new().inpaint(req)
        }
    }

    fn req() -> TextureRequest {
        TextureRequest {
            prompt: "p".into(),
            control: GrayImage::new(32, 32),
            params: DiffusionParams::default(),
        }
    }

    #[test]
    fn retries_then_gives_up() {
        let flaky = |n| Retrying {
            inner: Flaky { failures_left: AtomicU32::new(n), calls: AtomicU32::new(0) },
            max_retries: 3,
            base_delay: Duration::ZERO,
        };
        let ok = flaky(3);
        assert!(ok.texture(&req()).is_ok());
        assert_eq!(ok.inner.calls.load(Ordering::SeqCst), 4);
        let bad = flaky(4);
        assert!(matches!(bad.texture(&req()), Err(DiffusionError::Backend(_))));
        assert_eq!(bad.inner.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn mock_is_blockwise_and_keyed() {
        let a = mock_texture(&req());
        assert_eq!(a, mock_texture(&req()));
        assert_eq!(a.get_pixel(0, 0), a.get_pixel(15, 15));
        let mut other = req();
        other.params.conditioning_scale = 1.0;
        assert_ne!(a, mock_texture(&other));
    }
}
