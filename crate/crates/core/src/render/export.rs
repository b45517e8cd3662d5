//! Raster export: PNG for colour and coverage, raw f32 with a JSON sidecar for
//! features and heights.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RenderProduct, TopDownView};
use crate::imageio::{self, ImageError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub view: TopDownView,
    pub channels: usize,
    pub dtype: String,
    pub byte_order: String,
    /// Meaning of NaN entries, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodata: Option<String>,
}

/// Write `data` (row-major, `channels` interleaved) as little-endian f32 plus `<path>.json`.
pub fn write_raster_f32(path: &Path, view: &TopDownView, channels: usize, data: &[f32], nodata: Option<&str>) -> Result<(), ImageError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in data {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    let side = RasterSidecar {
        view: *view,
        channels,
        dtype: "f32".into(),
        byte_order: "little".into(),
        nodata: nodata.map(str::to_string),
    };
    let mut json_path = path.as_os_str().to_owned();
    json_path.push(".json");
    std::fs::write(json_path, serde_json::to_vec_pretty(&side).expect("sidecar serializes"))?;
    Ok(())
}

impl RenderProduct {
    /// Write `rgb.png`, `alpha.png`, `feature.f32` and `height.f32` (with sidecars) into `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), ImageError> {
        std::fs::create_dir_all(dir)?;
        let (w, h) = (self.view.width, self.view.height);
        imageio::write_file(dir.join("rgb.png"), &imageio::encode_rgb(w, h, &self.rgb)?)?;
        imageio::write_file(dir.join("alpha.png"), &imageio::encode_gray8(w, h, &self.alpha)?)?;
        write_raster_f32(&dir.join("feature.f32"), &self.view, self.latent_dim, &self.feature, None)?;
        write_raster_f32(&dir.join("height.f32"), &self.view, 1, &self.height, Some("NaN where alpha is zero"))?;
        Ok(())
    }
}
