//! Binary PPM (P6) images with 8-bit channels.

use crate::descriptors::KeyFrameImage;

pub fn encode(image: &KeyFrameImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.reserve(image.pixels.len() * 3);
    for p in &image.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<KeyFrameImage, String> {
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if header[0] != "P6" {
        return Err(format!("unsupported magic '{}'", header[0]));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} '{s}'"));
    let width = num(&header[1], "width")?;
    let height = num(&header[2], "height")?;
    if num(&header[3], "maxval")? != 255 {
        return Err("only maxval 255 is supported".into());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height * 3;
    let raster = bytes
        .get(pos..)
        .filter(|r| r.len() == need)
        .ok_or_else(|| {
            format!(
                "expected {need} raster bytes, found {}",
                bytes.len().saturating_sub(pos)
            )
        })?;
    let pixels = raster.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    KeyFrameImage::new(width, height, pixels).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let pixels = (0..12u8).map(|i| [i, i.wrapping_mul(7), 255 - i]).collect();
        let img = KeyFrameImage::new(4, 3, pixels).unwrap();
        let bytes = encode(&img);
        assert_eq!(decode(&bytes).unwrap(), img);
    }

    #[test]
    fn comments_and_errors() {
        let mut bytes = b"P6 # comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        assert_eq!(decode(&bytes).unwrap().pixel(1, 0), [4, 5, 6]);
        assert!(decode(b"P3\n1 1\n255\n000").is_err());
        assert!(decode(b"P6\n2 2\n255\n\x00\x00").is_err());
    }
}
