//! Pictorial representation of behavior-count samples.
//!
//! A sample of `J` non-negative counts becomes a square two-color image.
//! Every pixel row holds two variables: the odd-numbered variable is written
//! from the left edge rightward, the even-numbered one from the right edge
//! leftward. Each variable is written as its binary digits, least
//! significant digit on the outer edge, so large values reach toward the
//! middle of the image. A black pixel is a `1` digit.
//!
//! Rows, columns and variables are 1-based in the docs below, matching how
//! the geometry is usually described; the code itself indexes from zero.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of variables in the fundamental layout.
pub const FUNDAMENTAL_J: usize = 128;

/// Class tag carried by every sample and image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Benign = 0,
    Malign = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Benign, Label::Malign];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Malign),
            other => Err(Error::InvalidLabel(other as u64)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Benign => "Benign",
            Label::Malign => "Malign",
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Label::from_index(value as usize)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One tabular sample: behavior counts per time window plus its class.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleRecord {
    pub values: Vec<u64>,
    pub label: Label,
}

impl SampleRecord {
    pub fn new(values: Vec<u64>, label: Label) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dataset("a sample needs at least one value".into()));
        }
        Ok(SampleRecord { values, label })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    /// Exactly 128 variables.
    Fundamental,
    /// Fewer than 128 variables, padded up to the fundamental layout.
    PadUp,
    /// `J > 128`, `J mod 4 = 0`.
    S1,
    /// `J > 128`, `J mod 4 = 2`; one white center column.
    S2,
    /// `J > 128`, `(J + 1) mod 4 = 0`; one padded trailing variable.
    S3,
    /// `J > 128`, `(J + 1) mod 4 = 2`; padded trailing variable and white center column.
    S4,
}

/// Geometry of an encoding for a given variable count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrsLayout {
    pub j_logical: usize,
    pub j_effective: usize,
    /// Image side length in pixels.
    pub d: usize,
    /// Pixel budget per variable, which is also the maximum number of binary digits.
    pub k: usize,
    pub scenario: Scenario,
    /// 1-based column that is always white (S2 and S4 only).
    pub center_pad_column: Option<usize>,
}

/// Derives the unique layout for `j` variables.
///
/// # Panics
///
/// Panics if `j` is zero.
pub fn derive_layout(j: usize) -> PrsLayout {
    assert!(j >= 1, "a layout needs at least one variable");
    let fundamental = |scenario| PrsLayout {
        j_logical: j,
        j_effective: FUNDAMENTAL_J,
        d: FUNDAMENTAL_J / 2,
        k: FUNDAMENTAL_J / 4,
        scenario,
        center_pad_column: None,
    };
    if j < FUNDAMENTAL_J {
        return fundamental(Scenario::PadUp);
    }
    if j == FUNDAMENTAL_J {
        return fundamental(Scenario::Fundamental);
    }
    let (d, k, scenario) = match j % 4 {
        0 => (j / 2, j / 4, Scenario::S1),
        2 => (j / 2, (j - 2) / 4, Scenario::S2),
        3 => ((j + 1) / 2, (j + 1) / 4, Scenario::S3),
        _ => ((j + 1) / 2, (j - 1) / 4, Scenario::S4),
    };
    let center_pad_column = matches!(scenario, Scenario::S2 | Scenario::S4).then_some(k + 1);
    PrsLayout {
        j_logical: j,
        j_effective: 2 * d,
        d,
        k,
        scenario,
        center_pad_column,
    }
}

impl PrsLayout {
    pub fn fundamental() -> Self {
        derive_layout(FUNDAMENTAL_J)
    }

    /// 0-based (row, column) of bit `bit` (0 = least significant) of 0-based variable `var`.
    #[inline]
    pub fn pixel_of(&self, var: usize, bit: usize) -> (usize, usize) {
        debug_assert!(bit < self.k);
        let row = var / 2;
        let col = if var % 2 == 0 { bit } else { self.d - 1 - bit };
        (row, col)
    }

    /// Largest value that can be written without clamping.
    pub fn max_exact_value(&self) -> u64 {
        if self.k >= 64 {
            u64::MAX
        } else {
            (1u64 << self.k) - 1
        }
    }
}

/// Binary digits of `x`, least significant first, clamped to all ones when
/// `x` needs more than `k` digits.
pub fn value_to_bits(x: u64, k: usize) -> Vec<bool> {
    assert!(k >= 1, "pixel budget must be positive");
    if k < 64 && x >> k != 0 {
        return vec![true; k];
    }
    (0..k).map(|i| i < 64 && (x >> i) & 1 == 1).collect()
}

/// Inverse of [`value_to_bits`] for unclamped values. Digits above the 64th
/// saturate to `u64::MAX`.
pub fn bits_to_value(bits: &[bool]) -> u64 {
    if bits.iter().skip(64).any(|&b| b) {
        return u64::MAX;
    }
    bits.iter()
        .take(64)
        .enumerate()
        .filter(|(_, &b)| b)
        .fold(0u64, |acc, (i, _)| acc | (1u64 << i))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Pixel {
    #[default]
    White,
    Black,
}

impl Pixel {
    /// Gray level used on disk: black is 0, white is 255.
    pub fn to_byte(self) -> u8 {
        match self {
            Pixel::Black => 0,
            Pixel::White => 255,
        }
    }

    pub fn from_byte(byte: u8) -> Option<Pixel> {
        match byte {
            0 => Some(Pixel::Black),
            255 => Some(Pixel::White),
            _ => None,
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        [self.to_byte(); 3]
    }

    pub fn is_black(self) -> bool {
        self == Pixel::Black
    }
}

/// Square two-color image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    side: usize,
    pixels: Vec<Pixel>,
}

impl BinaryImage {
    pub fn white(side: usize) -> Self {
        BinaryImage {
            side,
            pixels: vec![Pixel::White; side * side],
        }
    }

    pub fn from_pixels(side: usize, pixels: Vec<Pixel>) -> Result<Self> {
        if pixels.len() != side * side {
            return Err(Error::shape(
                "BinaryImage::from_pixels",
                format!("{} pixels for side {side}", pixels.len()),
            ));
        }
        Ok(BinaryImage { side, pixels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[Pixel] {
        &self.pixels
    }

    /// 0-based access.
    pub fn get(&self, row: usize, col: usize) -> Pixel {
        self.pixels[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, pixel: Pixel) {
        self.pixels[row * self.side + col] = pixel;
    }

    pub fn row(&self, row: usize) -> &[Pixel] {
        &self.pixels[row * self.side..(row + 1) * self.side]
    }

    pub fn black_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_black()).count()
    }

    /// Network ingestion: black is 1.0, white is 0.0.
    pub fn to_unit_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.pixels
            .iter()
            .map(|p| if p.is_black() { 1.0 } else { 0.0 })
    }
}

/// Writes `sample` into a fresh image with `layout`.
pub fn encode_sample(sample: &SampleRecord, layout: &PrsLayout) -> Result<BinaryImage> {
    encode_values(&sample.values, layout)
}

pub fn encode_values(values: &[u64], layout: &PrsLayout) -> Result<BinaryImage> {
    if values.len() != layout.j_logical {
        return Err(Error::LengthMismatch {
            expected: layout.j_logical,
            got: values.len(),
        });
    }
    let mut image = BinaryImage::white(layout.d);
    for (var, &x) in values.iter().enumerate() {
        for (bit, set) in value_to_bits(x, layout.k).into_iter().enumerate() {
            if set {
                let (row, col) = layout.pixel_of(var, bit);
                image.set(row, col, Pixel::Black);
            }
        }
    }
    Ok(image)
}

/// Reads the logical variables back out of an encoded image.
pub fn decode_sample(image: &BinaryImage, layout: &PrsLayout) -> Result<Vec<u64>> {
    if image.side() != layout.d {
        return Err(Error::SideMismatch {
            expected: layout.d,
            got: image.side(),
        });
    }
    let values = (0..layout.j_logical)
        .map(|var| {
            let bits: Vec<bool> = (0..layout.k)
                .map(|bit| {
                    let (row, col) = layout.pixel_of(var, bit);
                    image.get(row, col).is_black()
                })
                .collect();
            bits_to_value(&bits)
        })
        .collect();
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(
        d: usize,
        k: usize,
        scenario: Scenario,
        j: usize,
        j_eff: usize,
        pad: Option<usize>,
    ) -> PrsLayout {
        PrsLayout {
            j_logical: j,
            j_effective: j_eff,
            d,
            k,
            scenario,
            center_pad_column: pad,
        }
    }

    #[test]
    fn layout_examples() {
        assert_eq!(
            derive_layout(128),
            layout(64, 32, Scenario::Fundamental, 128, 128, None)
        );
        assert_eq!(
            derive_layout(100),
            layout(64, 32, Scenario::PadUp, 100, 128, None)
        );
        assert_eq!(
            derive_layout(132),
            layout(66, 33, Scenario::S1, 132, 132, None)
        );
        assert_eq!(
            derive_layout(130),
            layout(65, 32, Scenario::S2, 130, 130, Some(33))
        );
        assert_eq!(
            derive_layout(131),
            layout(66, 33, Scenario::S3, 131, 132, None)
        );
        assert_eq!(
            derive_layout(129),
            layout(65, 32, Scenario::S4, 129, 130, Some(33))
        );
        assert_eq!(derive_layout(1).scenario, Scenario::PadUp);
    }

    #[test]
    fn layout_geometry_holds_for_many_sizes() {
        for j in 1..2000 {
            let l = derive_layout(j);
            assert!(2 * l.k <= l.d, "j={j}");
            assert!(l.j_effective >= l.j_logical);
            assert_eq!(l.j_effective, 2 * l.d);
            assert_eq!(l, derive_layout(j));
            if let Some(c) = l.center_pad_column {
                assert_eq!(c, l.k + 1);
                assert_eq!(l.d, 2 * l.k + 1);
            }
        }
    }

    #[test]
    fn bits_of_nineteen() {
        let bits = value_to_bits(19, 32);
        assert_eq!(bits.len(), 32);
        assert_eq!(&bits[..5], &[true, true, false, false, true]);
        assert!(bits[5..].iter().all(|&b| !b));
    }

    #[test]
    fn bits_zero_and_clamp() {
        assert!(value_to_bits(0, 32).iter().all(|&b| !b));
        assert!(value_to_bits(1 << 32, 32).iter().all(|&b| b));
        assert!(value_to_bits((1 << 32) - 1, 32).iter().all(|&b| b));
        assert!(value_to_bits(u64::MAX, 5).iter().all(|&b| b));
        // Budgets beyond 64 digits zero-fill the top.
        let wide = value_to_bits(u64::MAX, 70);
        assert!(wide[..64].iter().all(|&b| b) && wide[64..].iter().all(|&b| !b));
        assert_eq!(bits_to_value(&wide), u64::MAX);
    }

    #[test]
    fn worked_example_row() {
        let mut values = vec![0u64; 128];
        values[0] = 19;
        values[1] = 22;
        let img = encode_values(&values, &derive_layout(128)).unwrap();
        let black: Vec<usize> = img
            .row(0)
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_black())
            .map(|(c, _)| c + 1)
            .collect();
        assert_eq!(black, vec![1, 2, 5, 60, 62, 63]);
        assert_eq!(img.black_count(), 6);
    }

    #[test]
    fn zero_sample_is_white_and_saturated_sample_is_black() {
        let l = derive_layout(128);
        assert_eq!(encode_values(&[0; 128], &l).unwrap().black_count(), 0);
        let full = encode_values(&[1 << 32; 128], &l).unwrap();
        assert_eq!(full.black_count(), 64 * 64);
    }

    #[test]
    fn decode_edge_cases() {
        let l = derive_layout(128);
        let white = BinaryImage::white(64);
        assert_eq!(decode_sample(&white, &l).unwrap(), vec![0; 128]);
        let mut img = BinaryImage::white(64);
        for c in 0..64 {
            img.set(0, c, Pixel::Black);
        }
        let values = decode_sample(&img, &l).unwrap();
        assert_eq!(values[0], (1 << 32) - 1);
        assert_eq!(values[1], (1 << 32) - 1);
        assert!(matches!(
            decode_sample(&BinaryImage::white(65), &l),
            Err(Error::SideMismatch {
                expected: 64,
                got: 65
            })
        ));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let l = derive_layout(128);
        assert!(matches!(
            encode_values(&[1, 2, 3], &l),
            Err(Error::LengthMismatch {
                expected: 128,
                got: 3
            })
        ));
    }

    #[test]
    fn padding_rows_and_center_column_stay_white() {
        for j in [3usize, 99, 129, 130, 131, 133, 134] {
            let l = derive_layout(j);
            let img = encode_values(&vec![u64::MAX; j], &l).unwrap();
            let used_rows = j.div_ceil(2);
            for r in used_rows..l.d {
                assert!(img.row(r).iter().all(|p| !p.is_black()), "j={j} row {r}");
            }
            if let Some(c) = l.center_pad_column {
                assert!((0..l.d).all(|r| !img.get(r, c - 1).is_black()), "j={j}");
            }
            // Odd j leaves the right half of the last used row empty.
            if j % 2 == 1 {
                let last = img.row(used_rows - 1);
                assert!(last[l.d - l.k..].iter().all(|p| !p.is_black()));
            }
        }
    }

    #[test]
    fn label_round_trip() {
        for l in Label::ALL {
            assert_eq!(Label::from_index(l.index()).unwrap(), l);
        }
        assert!(Label::from_index(2).is_err());
    }
}
