use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use advtex_autograd::Tensor;

use crate::error::{Error, Result};
use crate::torus::{tile_pattern, TexturePattern};

/// tEXt keyword under which the run-config hash is stored.
pub const CONFIG_HASH_KEY: &str = "advtex-config-hash";
/// Pixels near the texture edge that evaluation crops avoid.
pub const MARGIN_KEY: &str = "advtex-margin";
/// `"true"` when every crop of the texture is a valid attack.
pub const EXPANDABLE_KEY: &str = "advtex-expandable";

/// `[0,1] → 0..=255`, rounding half to even.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

fn to_interleaved(img: &Tensor) -> Result<(u32, u32, Vec<u8>)> {
    let s = img.shape();
    let [3, h, w] = s[..] else {
        return Err(Error::Shape(format!("expected a 3×H×W image, got {s:?}")));
    };
    let d = img.data();
    let mut out = Vec::with_capacity(3 * h * w);
    for i in 0..h * w {
        for ch in 0..3 {
            out.push(quantize(d[ch * h * w + i]));
        }
    }
    Ok((w as u32, h as u32, out))
}

/// Writes an 8-bit RGB PNG with optional tEXt entries.
pub fn save_png(img: &Tensor, path: &Path, text: &[(&str, &str)]) -> Result<()> {
    let (w, h, bytes) = to_interleaved(img)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| Error::format("png", path, e);
    for (k, v) in text {
        enc.add_text_chunk(k.to_string(), v.to_string()).map_err(to_err)?;
    }
    let mut writer = enc.write_header().map_err(to_err)?;
    writer.write_image_data(&bytes).map_err(to_err)?;
    writer.finish().map_err(to_err)
}

/// Decodes any supported image file to a `[3, H, W]` tensor in `[0,1]`.
pub fn load_rgb(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_raw();
    let mut data = vec![0.0; 3 * h * w];
    for i in 0..h * w {
        for ch in 0..3 {
            data[ch * h * w + i] = raw[3 * i + ch] as f64 / 255.0;
        }
    }
    Ok(Tensor::new(&[3, h, w], data))
}

/// Reads the tEXt entry `key` of a PNG, if present.
pub fn png_text(path: &Path, key: &str) -> Result<Option<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = png::Decoder::new(std::io::BufReader::new(file))
        .read_info()
        .map_err(|e| Error::format("png", path, e))?;
    Ok(reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .find(|c| c.keyword == key)
        .map(|c| c.text.clone()))
}

/// Path of the 3×3 tiled preview written next to `path`.
pub fn preview_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("texture");
    path.with_file_name(format!("{stem}_tiled3x3.png"))
}

/// Exports a texture as lossless PNG, optionally with a 3×3 tiled preview.
/// Returns the preview path when one is written.
/// `text` pairs are stored as PNG text chunks in both files.
pub fn export_texture(
    texture: &TexturePattern,
    path: &Path,
    tile_preview: bool,
    text: &[(&str, &str)],
) -> Result<Option<PathBuf>> {
    save_png(texture.tensor(), path, text)?;
    if !tile_preview {
        return Ok(None);
    }
    let preview = preview_path(path);
    save_png(&tile_pattern(texture.tensor(), 3, 3)?, &preview, text)?;
    Ok(Some(preview))
}

pub fn load_texture(path: &Path) -> Result<TexturePattern> {
    TexturePattern::new(load_rgb(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_rounds_to_even() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(1.5 / 255.0), 2);
        assert_eq!(quantize(2.5 / 255.0), 2);
    }
}
