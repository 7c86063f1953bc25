//! Binary PPM (`P6`, maxval 255) reading and writing.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageRgb;

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8], name: &str) -> Result<Header> {
    let err = |off: usize, msg: String| Error::format(name, off as u64, msg);
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(err(0, "bad magic, expected P6".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    let mut starts = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each token
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(err(pos, "truncated header".into())),
            }
        }
        if i == 0 && pos == 2 {
            return Err(err(pos, "missing whitespace after magic".into()));
        }
        let start = pos;
        starts[i] = start;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(err(start, format!("expected a decimal number, found byte 0x{:02x}", bytes[start])));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = text.parse().map_err(|_| err(start, format!("number '{text}' out of range")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(err(starts[0], format!("zero image dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(err(starts[2], format!("unsupported maxval {maxval}, only 255 is accepted")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err(pos, "expected a single whitespace byte before pixel data".into())),
    }
    Ok(Header { width, height, payload_start: pos })
}

pub fn decode_ppm(bytes: &[u8], name: &str) -> Result<ImageRgb> {
    let h = parse_header(bytes, name)?;
    let need = h
        .width
        .checked_mul(h.height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| Error::format(name, 3, "image dimensions overflow"))?;
    let have = bytes.len() - h.payload_start;
    if have < need {
        return Err(Error::format(
            name,
            bytes.len() as u64,
            format!("truncated payload: {need} pixel bytes expected, {have} present"),
        ));
    }
    if have > need {
        return Err(Error::format(name, (h.payload_start + need) as u64, "trailing bytes after pixel data"));
    }
    ImageRgb::new(h.width, h.height, bytes[h.payload_start..].to_vec())
}

pub fn encode_ppm(image: &ImageRgb) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.as_bytes());
    out
}

pub fn load_ppm(path: &Path) -> Result<ImageRgb> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes, &path.display().to_string())
}

pub fn save_ppm(image: &ImageRgb, path: &Path) -> Result<()> {
    std::fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_red_pixel() {
        let img = decode_ppm(b"P6\n1 1\n255\n\xff\x00\x00", "t").unwrap();
        assert_eq!(img.pixel(0, 0), [255, 0, 0]);
    }

    #[test]
    fn comments_after_magic() {
        let img = decode_ppm(b"P6 # made by hand\n# another\n2 1 # dims\n255\n\x01\x02\x03\x04\x05\x06", "t").unwrap();
        assert_eq!(img.dims(), (2, 1));
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);
    }

    #[test]
    fn rejects_sixteen_bit() {
        let e = decode_ppm(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00", "t").unwrap_err();
        assert!(matches!(e, Error::Format { offset: 7, .. }), "{e}");
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n", "t"), Err(Error::Format { offset: 0, .. })));
        match decode_ppm(b"P6\n2 2\n255\n\x00\x00\x00", "t") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 14),
            other => panic!("{other:?}"),
        }
        assert!(decode_ppm(b"P6\n1", "t").is_err());
    }

    proptest::proptest! {
        #[test]
        fn round_trip(w in 1usize..12, h in 1usize..12, seed in proptest::collection::vec(0u8..=255, 1..64)) {
            let img = ImageRgb::from_fn(w, h, |x, y| {
                let i = (y * w + x) * 3;
                [seed[i % seed.len()], seed[(i + 1) % seed.len()], seed[(i + 2) % seed.len()]]
            });
            proptest::prop_assert_eq!(decode_ppm(&encode_ppm(&img), "mem").unwrap(), img);
        }
    }
}
