//! Binary PPM (P6) images and PGM (P5) bitmaps / heatmaps, maxval <= 255.

use visbeam_core::detector::{BitMap, HeatMap};
use visbeam_core::scene::Image;
use visbeam_core::Tensor;

use crate::error::{Error, Result};

fn quantize(v: f64, max: u32) -> u8 {
    (v.clamp(0.0, 1.0) * max as f64).round() as u8
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend(img.as_tensor().data().iter().map(|&v| quantize(v, 255)));
    out
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::BadMagic("not a PNM file".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Truncated("PNM header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *f = text.parse().map_err(|_| Error::Parse(format!("bad PNM header field at byte {start}")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(Error::Parse("PNM header not followed by whitespace".into())),
        None => return Err(Error::Truncated("PNM header ends early".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::Parse("PNM image has zero extent".into()));
    }
    Ok(Header { magic, width, height, maxval: maxval as u32, offset: pos })
}

fn payload<'a>(bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = h.width * h.height * channels;
    let data = &bytes[h.offset..];
    if data.len() < need {
        return Err(Error::Truncated(format!("PNM payload has {} of {} bytes", data.len(), need)));
    }
    if data.len() > need {
        return Err(Error::Parse(format!("PNM payload has {} trailing bytes", data.len() - need)));
    }
    Ok(data)
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P6" {
        return Err(Error::BadMagic("expected a binary PPM (P6)".into()));
    }
    if h.maxval != 255 {
        return Err(Error::Parse(format!("PPM maxval {} unsupported (need 255)", h.maxval)));
    }
    let data = payload(bytes, &h, 3)?;
    let t = Tensor::from_vec(&[h.height, h.width, 3], data.iter().map(|&b| b as f64 / 255.0).collect())?;
    Ok(Image::from_tensor(t)?)
}

fn encode_pgm(width: usize, height: usize, maxval: u32, px: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    out.extend(px);
    out
}

fn decode_pgm(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P5" {
        return Err(Error::BadMagic("expected a binary PGM (P5)".into()));
    }
    if h.maxval == 0 || h.maxval > 255 {
        return Err(Error::Parse(format!("PGM maxval {} unsupported", h.maxval)));
    }
    let data = payload(bytes, &h, 1)?;
    Ok((h, data))
}

/// One channel of a bitmap as a maxval-1 PGM.
pub fn encode_bitmap(bm: &BitMap, channel: usize) -> Result<Vec<u8>> {
    let ch = bm.channel(channel)?;
    Ok(encode_pgm(ch.cols, ch.rows, 1, ch.bits().iter().copied()))
}

pub fn decode_bitmap(bytes: &[u8]) -> Result<BitMap> {
    let (h, data) = decode_pgm(bytes)?;
    if h.maxval != 1 {
        return Err(Error::Parse(format!("bitmap PGM must have maxval 1, got {}", h.maxval)));
    }
    Ok(BitMap::from_bits(h.height, h.width, 1, data.to_vec())?)
}

/// Heatmap quantized to 0..=255 (lossy; the CSV form is exact).
pub fn encode_heatmap(hm: &HeatMap) -> Vec<u8> {
    encode_pgm(hm.cols, hm.rows, 255, hm.values().iter().map(|&v| quantize(v, 255)))
}

pub fn decode_heatmap(bytes: &[u8]) -> Result<HeatMap> {
    let (h, data) = decode_pgm(bytes)?;
    let max = h.maxval as f64;
    Ok(HeatMap::from_vec(h.height, h.width, data.iter().map(|&b| b as f64 / max).collect())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use visbeam_core::scene::{render_scene, Camera, Case, Obstacle, SceneConfig};

    #[test]
    fn ppm_round_trip_is_exact_after_quantization() {
        let cfg = SceneConfig::desk(Camera::One, Obstacle::Wood);
        let (img, _) = render_scene(&cfg, Case::new(2, 3).unwrap(), 1.0).unwrap();
        let bytes = encode_ppm(&img);
        assert!(bytes.starts_with(b"P6\n200 150\n255\n"));
        let back = decode_ppm(&bytes).unwrap();
        assert_eq!(encode_ppm(&back), bytes);
        let d = back.as_tensor().max_abs_diff(img.as_tensor()).unwrap();
        assert!(d <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn ppm_rejects_bad_input() {
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n"), Err(Error::BadMagic(_))));
        assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n"), Err(Error::Parse(_))));
        assert!(matches!(decode_ppm(b"P6\n2 1\n255\n\x01\x02\x03"), Err(Error::Truncated(_))));
        assert!(matches!(decode_ppm(b"P6\n1"), Err(Error::Truncated(_))));
        assert!(decode_ppm(b"P6 # comment\n1 1 255\n\x00\x80\xff").is_ok());
    }

    #[test]
    fn bitmap_round_trip() {
        let bm = BitMap::from_cells(3, 5, &[(0, 0), (2, 4), (1, 2)]).unwrap();
        let bytes = encode_bitmap(&bm, 0).unwrap();
        assert!(bytes.starts_with(b"P5\n5 3\n1\n"));
        assert_eq!(decode_bitmap(&bytes).unwrap(), bm);
        assert!(matches!(decode_bitmap(&encode_heatmap(&HeatMap::from_vec(1, 1, vec![0.5]).unwrap())), Err(Error::Parse(_))));
    }

    #[test]
    fn heatmap_quantized() {
        let hm = HeatMap::from_vec(1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        let back = decode_heatmap(&encode_heatmap(&hm)).unwrap();
        assert_eq!(back.values(), &[0.0, 128.0 / 255.0, 1.0]);
    }
}
