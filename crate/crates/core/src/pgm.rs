//! Binary portable graymap (P5) storage for [`BinaryImage`]s.
//!
//! Layout on disk is exactly `P5\n<d> <d>\n255\n` followed by `d * d`
//! bytes, row-major, `0` for black and `255` for white.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::prs::{BinaryImage, Pixel};

pub fn to_bytes(image: &BinaryImage) -> Vec<u8> {
    let side = image.side();
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(image.pixels().iter().map(|p| p.to_byte()));
    out
}

/// Raw gray-level PGM, used for visualizations that are not two-color.
pub fn gray_to_bytes(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

struct HeaderCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.data.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedImage(format!("missing {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedImage(format!("bad {what}")))
    }
}

pub fn from_bytes(data: &[u8]) -> Result<BinaryImage> {
    if data.len() < 2 || &data[..2] != b"P5" {
        return Err(Error::MalformedImage("missing P5 magic".into()));
    }
    let mut cursor = HeaderCursor { data, pos: 2 };
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if width != height {
        return Err(Error::MalformedImage(format!(
            "image is {width}x{height}, not square"
        )));
    }
    if maxval != 255 {
        return Err(Error::MalformedImage(format!(
            "maxval {maxval}, expected 255"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match data.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(Error::MalformedImage("truncated header".into())),
    }
    let raster = &data[cursor.pos..];
    let expected = width * height;
    if raster.len() != expected {
        return Err(Error::MalformedImage(format!(
            "raster has {} bytes, expected {expected}",
            raster.len()
        )));
    }
    let pixels = raster
        .iter()
        .map(|&b| {
            Pixel::from_byte(b).ok_or_else(|| {
                Error::MalformedImage(format!("pixel value {b} is neither 0 nor 255"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BinaryImage::from_pixels(width, pixels)
}

pub fn write_image(image: &BinaryImage, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = BufWriter::new(fs::File::create(path)?);
    writer.write_all(&to_bytes(image))?;
    writer.flush()?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<BinaryImage> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    from_bytes(&data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(side: usize) -> BinaryImage {
        let pixels = (0..side * side)
            .map(|i| {
                if (i / side + i % side) % 2 == 0 {
                    Pixel::Black
                } else {
                    Pixel::White
                }
            })
            .collect();
        BinaryImage::from_pixels(side, pixels).unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let bytes = to_bytes(&checker(3));
        assert_eq!(&bytes[..11], b"P5\n3 3\n255\n");
        assert_eq!(&bytes[11..], &[0, 255, 0, 255, 0, 255, 0, 255, 0]);
    }

    #[test]
    fn round_trip_in_memory_and_on_disk() {
        let img = checker(7);
        assert_eq!(from_bytes(&to_bytes(&img)).unwrap(), img);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        write_image(&img, &path).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn comments_in_header_are_accepted() {
        let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 255, 0]);
        let img = from_bytes(&bytes).unwrap();
        assert_eq!(img.black_count(), 2);
    }

    #[test]
    fn malformed_inputs() {
        let mut bytes = to_bytes(&checker(4));
        bytes.pop();
        assert!(matches!(from_bytes(&bytes), Err(Error::MalformedImage(_))));
        assert!(matches!(
            from_bytes(b"P5\n4"),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(
            from_bytes(b"P6\n1 1\n255\n\0"),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(
            from_bytes(b"P5\n1 1\n255\n\x80"),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(
            from_bytes(b"P5\n2 1\n255\n\0\0"),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(from_bytes(b""), Err(Error::MalformedImage(_))));
    }

    #[test]
    fn missing_file_is_reported_as_missing_artifact() {
        assert!(matches!(
            read_image("/nonexistent/x.pgm"),
            Err(Error::MissingArtifact(_))
        ));
    }
}
