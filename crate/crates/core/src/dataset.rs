//! CSV sample tables and labeled image sets.
//!
//! A sample table has one sample per line: the counts, then a final label
//! column (`0` benign, `1` malign). A header line is optional.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pgm;
use crate::prs::{encode_sample, BinaryImage, Label, PrsLayout, SampleRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: BinaryImage,
    pub label: Label,
}

pub fn read_samples_from<R: Read>(reader: R, has_header: bool) -> Result<Vec<SampleRecord>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut samples = Vec::new();
    let mut dim = None;
    for (i, row) in csv.records().enumerate() {
        let row = row?;
        let line = row.position().map_or(i + 1, |p| p.line() as usize);
        let bad = |reason: String| Error::MalformedRecord { line, reason };
        if row.len() < 2 {
            return Err(bad("need at least one count and a label".into()));
        }
        let numbers = row
            .iter()
            .map(|field| {
                field
                    .parse::<u64>()
                    .map_err(|e| bad(format!("{field:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (label, values) = numbers.split_last().expect("row has at least two fields");
        let label = match *label {
            0 => Label::Benign,
            1 => Label::Malign,
            other => return Err(bad(format!("label {other} is not 0 or 1"))),
        };
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(bad(format!(
                    "{} counts, earlier rows have {d}",
                    values.len()
                )))
            }
            _ => {}
        }
        samples.push(SampleRecord {
            values: values.to_vec(),
            label,
        });
    }
    Ok(samples)
}

pub fn read_samples(path: impl AsRef<Path>, has_header: bool) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    read_samples_from(file, has_header)
}

/// Writes samples without a header.
pub fn write_samples_to<W: Write>(writer: W, samples: &[SampleRecord]) -> Result<()> {
    let mut csv = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for s in samples {
        let mut fields: Vec<String> = s.values.iter().map(u64::to_string).collect();
        fields.push(s.label.index().to_string());
        csv.write_record(&fields)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[SampleRecord]) -> Result<()> {
    write_samples_to(fs::File::create(path)?, samples)
}

pub fn encode_all(samples: &[SampleRecord], layout: &PrsLayout) -> Result<Vec<LabeledImage>> {
    samples
        .iter()
        .map(|s| {
            Ok(LabeledImage {
                image: encode_sample(s, layout)?,
                label: s.label,
            })
        })
        .collect()
}

pub fn count_labels<'a, I: IntoIterator<Item = &'a Label>>(labels: I) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for l in labels {
        counts[l.index()] += 1;
    }
    counts
}

/// Writes every image as `<prefix><index>.pgm` into `dir`, plus an
/// `index.csv` of `file,label` lines. Returns the index path.
pub fn write_image_set(
    dir: impl AsRef<Path>,
    prefix: &str,
    images: &[LabeledImage],
) -> Result<std::path::PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut index = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join("index.csv"))?;
    for (i, item) in images.iter().enumerate() {
        let name = format!("{prefix}{i:05}.pgm");
        pgm::write_image(&item.image, dir.join(&name))?;
        index.write_record([name, item.label.index().to_string()])?;
    }
    index.flush()?;
    Ok(dir.join("index.csv"))
}

/// Loads an image set written by [`write_image_set`]; file names resolve
/// relative to the index's directory.
pub fn read_image_set(index_path: impl AsRef<Path>) -> Result<Vec<LabeledImage>> {
    let index_path = index_path.as_ref();
    if !index_path.exists() {
        return Err(Error::MissingArtifact(index_path.to_path_buf()));
    }
    let base = index_path.parent().unwrap_or(Path::new("."));
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(index_path)?;
    let mut out = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row = row?;
        let bad = |reason: &str| Error::MalformedRecord {
            line: i + 1,
            reason: reason.into(),
        };
        let (Some(name), Some(label)) = (row.get(0), row.get(1)) else {
            return Err(bad("expected file,label"));
        };
        let label: u64 = label
            .trim()
            .parse()
            .map_err(|_| bad("label is not an integer"))?;
        let label = Label::from_index(label as usize)?;
        out.push(LabeledImage {
            image: pgm::read_image(base.join(name.trim()))?,
            label,
        });
    }
    Ok(out)
}
