use std::io::{BufReader, Cursor};
use std::path::Path;

use png::{BitDepth, ColorType, Decoder, Encoder};

use super::{atomic_write, IoError};
use crate::geometry::{DepthImage, Image, RgbImage};

fn encode(width: u32, height: u32, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    {
        let mut encoder = Encoder::new(&mut out, width, height);
        encoder.set_color(color);
        encoder.set_depth(depth);
        let mut writer = encoder.write_header().map_err(|e| IoError::Encode(e.to_string()))?;
        writer.write_image_data(data).map_err(|e| IoError::Encode(e.to_string()))?;
    }
    Ok(out)
}

struct Decoded {
    width: u32,
    height: u32,
    color: ColorType,
    depth: BitDepth,
    data: Vec<u8>,
}

fn decode(path: &Path) -> Result<Decoded, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::at(path, e))?;
    let decoder = Decoder::new(BufReader::new(Cursor::new(bytes)));
    let mut reader = decoder
        .read_info()
        .map_err(|e| IoError::Format(path.to_path_buf(), e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| IoError::Format(path.to_path_buf(), "image too large".into()))?;
    let mut data = vec![0; size];
    let info = reader
        .next_frame(&mut data)
        .map_err(|e| IoError::Format(path.to_path_buf(), e.to_string()))?;
    data.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width,
        height: info.height,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

pub fn encode_gray8(img: &Image<u8>) -> Result<Vec<u8>, IoError> {
    encode(img.width(), img.height(), ColorType::Grayscale, BitDepth::Eight, img.as_slice())
}

pub fn write_gray8(path: &Path, img: &Image<u8>) -> Result<(), IoError> {
    atomic_write(path, &encode_gray8(img)?)
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<(), IoError> {
    let data: Vec<u8> = img.as_slice().iter().flatten().copied().collect();
    atomic_write(path, &encode(img.width(), img.height(), ColorType::Rgb, BitDepth::Eight, &data)?)
}

/// 16-bit grayscale; PNG stores samples big-endian.
pub fn write_depth(path: &Path, img: &DepthImage) -> Result<(), IoError> {
    let data: Vec<u8> = img.as_slice().iter().flat_map(|v| v.to_be_bytes()).collect();
    atomic_write(path, &encode(img.width(), img.height(), ColorType::Grayscale, BitDepth::Sixteen, &data)?)
}

pub fn read_gray8(path: &Path) -> Result<Image<u8>, IoError> {
    let d = decode(path)?;
    if d.color != ColorType::Grayscale || d.depth != BitDepth::Eight {
        return Err(IoError::Format(path.to_path_buf(), "expected 8-bit grayscale PNG".into()));
    }
    Image::from_vec(d.width, d.height, d.data).map_err(|e| IoError::Format(path.to_path_buf(), e.to_string()))
}

pub fn read_rgb(path: &Path) -> Result<RgbImage, IoError> {
    let d = decode(path)?;
    if d.depth != BitDepth::Eight {
        return Err(IoError::Format(path.to_path_buf(), "expected 8-bit color PNG".into()));
    }
    let pixels: Vec<[u8; 3]> = match d.color {
        ColorType::Rgb => d.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        ColorType::Rgba => d.data.chunks_exact(4).map(|c| [c[0], c[1], c[2]]).collect(),
        ColorType::Grayscale => d.data.iter().map(|&g| [g, g, g]).collect(),
        other => {
            return Err(IoError::Format(path.to_path_buf(), format!("unsupported color type {other:?}")));
        }
    };
    Image::from_vec(d.width, d.height, pixels).map_err(|e| IoError::Format(path.to_path_buf(), e.to_string()))
}

pub fn read_depth(path: &Path) -> Result<DepthImage, IoError> {
    let d = decode(path)?;
    if d.color != ColorType::Grayscale || d.depth != BitDepth::Sixteen {
        return Err(IoError::Format(path.to_path_buf(), "expected 16-bit grayscale PNG".into()));
    }
    let values = d.data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Image::from_vec(d.width, d.height, values).map_err(|e| IoError::Format(path.to_path_buf(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let depth = Image::from_vec(3, 2, vec![0u16, 1, 256, 1000, 65535, 7]).unwrap();
        let p = dir.path().join("d.png");
        write_depth(&p, &depth).unwrap();
        assert_eq!(read_depth(&p).unwrap(), depth);

        let rgb = Image::from_vec(2, 1, vec![[1u8, 2, 3], [250, 128, 0]]).unwrap();
        let p = dir.path().join("c.png");
        write_rgb(&p, &rgb).unwrap();
        assert_eq!(read_rgb(&p).unwrap(), rgb);

        let labels = Image::from_vec(2, 2, vec![0u8, 1, 2, 255]).unwrap();
        let p = dir.path().join("l.png");
        write_gray8(&p, &labels).unwrap();
        assert_eq!(read_gray8(&p).unwrap(), labels);
        assert!(read_depth(&p).is_err());
    }
}
