//! End-to-end experiment: synthesize, encode, augment two ways, train and
//! compare.
//!
//! * Arm A: training table -> SMOTE -> images -> CNN.
//! * Arm B: training table -> images -> cGAN-generated malign images -> CNN.
//!
//! Both arms are scored on one shared, encoded test set. Every file a run
//! writes is listed with its SHA-256 in `manifest.json`, together with all
//! derived seeds and the hash of the resolved configuration. Nothing in the
//! outputs depends on wall-clock time or absolute paths, so a rerun with the
//! same configuration reproduces them byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cgan::{self, Cgan, CganConfig, GanLossTrace};
use crate::cnn::{self, CnnConfig, CnnModel, CvReport, TrainHistory};
use crate::dataset::{count_labels, encode_all, write_samples_to, LabeledImage};
use crate::error::{Error, Result};
use crate::eval::{compare_runs, Comparison, EvalReport};
use crate::pgm;
use crate::prs::{derive_layout, BinaryImage, Label, PrsLayout, SampleRecord};
use crate::smote::{balance_with_smote, SmoteConfig};
use crate::synth::{gen_dataset, split_train_test, SynthConfig};

pub const MANIFEST: &str = "manifest.json";
pub const TRACE: &str = "arm_b/cgan_trace.csv";

/// Process exit status for an error: 2 configuration, 3 missing input,
/// 4 diverged training, 1 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::MissingArtifact(_) => 3,
        Error::Diverged { .. } => 4,
        _ => 1,
    }
}

/// Everything a run needs. `synth.n_benign` / `synth.n_malign` are the
/// *training* counts; `test_per_class` more samples of each class are
/// synthesized and held out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed. Every stage seed is derived from it (see [`Seeds`]).
    pub seed: u64,
    pub test_per_class: usize,
    /// Generated malign images added in arm B. Unset means "top the malign
    /// class up to the benign count".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_count: Option<usize>,
    /// Also run stratified k-fold cross-validation on both training sets.
    pub run_cv: bool,
    /// Tiles per side of the sample grid images.
    pub grid_tiles: usize,
    pub synth: SynthConfig,
    pub smote: SmoteConfig,
    pub cnn: CnnConfig,
    pub cgan: CganConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            test_per_class: 228,
            generated_count: None,
            run_cv: false,
            grid_tiles: 6,
            synth: SynthConfig::default(),
            smote: SmoteConfig::default(),
            cnn: CnnConfig::default(),
            cgan: CganConfig::default(),
        }
    }
}

/// Per-stage seeds, all offsets of the master seed. Both arms train their
/// detector from the same seed so the comparison isolates the training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub synth: u64,
    pub split: u64,
    pub smote: u64,
    pub cnn: u64,
    pub cgan: u64,
    pub generate: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        Seeds {
            master,
            synth: master,
            split: master.wrapping_add(1),
            smote: master.wrapping_add(2),
            cnn: master.wrapping_add(3),
            cgan: master.wrapping_add(4),
            generate: master.wrapping_add(5),
        }
    }
}

impl PipelineConfig {
    /// The reduced "desk" scale: 600 benign / 300 malign training samples.
    pub fn desk_scale() -> Self {
        PipelineConfig {
            synth: SynthConfig {
                n_benign: 600,
                n_malign: 300,
                ..SynthConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::derive(self.seed)
    }

    pub fn layout(&self) -> PrsLayout {
        derive_layout(self.synth.j)
    }

    /// Copy with stage seeds derived from `seed` and image sides taken from
    /// the layout, after validating every part.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let seeds = c.seeds();
        c.synth.rng_seed = seeds.synth;
        c.smote.rng_seed = seeds.smote;
        c.cnn.rng_seed = seeds.cnn;
        c.cgan.rng_seed = seeds.cgan;
        let side = c.layout().d;
        c.cnn.input_side = side;
        c.cgan.image_side = side;
        c.synth.validate()?;
        c.cnn.validate()?;
        c.cgan.validate()?;
        if c.smote.k_neighbors == 0 {
            return Err(Error::Config("smote k_neighbors must be positive".into()));
        }
        if c.test_per_class == 0 {
            return Err(Error::Config("test_per_class must be positive".into()));
        }
        if c.grid_tiles == 0 {
            return Err(Error::Config("grid_tiles must be positive".into()));
        }
        Ok(c)
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml_string()?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of an encoded labeled set: each image's PGM bytes followed by its
/// label byte, in order.
pub fn image_set_sha256(images: &[LabeledImage]) -> String {
    let mut h = Sha256::new();
    for item in images {
        h.update(pgm::to_bytes(&item.image));
        h.update([item.label.index() as u8]);
    }
    hex::encode(h.finalize())
}

/// Tiles up to `tiles * tiles` images into one gray PGM with a 2-pixel
/// mid-gray gutter.
pub fn sample_grid(images: &[&BinaryImage], tiles: usize) -> Result<Vec<u8>> {
    const GUTTER: usize = 2;
    let Some(first) = images.first() else {
        return Ok(pgm::gray_to_bytes(0, 0, &[]));
    };
    let side = first.side();
    let shown = &images[..images.len().min(tiles * tiles)];
    let cols = tiles.min(shown.len());
    let rows = shown.len().div_ceil(cols);
    let width = cols * side + (cols - 1) * GUTTER;
    let height = rows * side + (rows - 1) * GUTTER;
    let mut gray = vec![128u8; width * height];
    for (n, img) in shown.iter().enumerate() {
        if img.side() != side {
            return Err(Error::SideMismatch {
                expected: side,
                got: img.side(),
            });
        }
        let (top, left) = ((n / cols) * (side + GUTTER), (n % cols) * (side + GUTTER));
        for r in 0..side {
            for (c, p) in img.row(r).iter().enumerate() {
                gray[(top + r) * width + left + c] = p.to_byte();
            }
        }
    }
    Ok(pgm::gray_to_bytes(width, height, &gray))
}

/// Writes files under a root directory and remembers their digests.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    digests: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(ArtifactWriter {
            root,
            digests: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.digests.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn write_samples(&mut self, rel: &str, samples: &[SampleRecord]) -> Result<PathBuf> {
        let mut buf = Vec::new();
        write_samples_to(&mut buf, samples)?;
        self.write(rel, &buf)
    }

    /// Writes an image set (`<prefix>NNNNN.pgm` plus `index.csv`) into
    /// `rel_dir`. The manifest gets a single entry for the index whose
    /// digest covers the index and every image in order.
    pub fn write_image_set(
        &mut self,
        rel_dir: &str,
        prefix: &str,
        images: &[LabeledImage],
    ) -> Result<PathBuf> {
        let dir = self.path(rel_dir);
        fs::create_dir_all(&dir)?;
        let mut index = String::new();
        let mut h = Sha256::new();
        for (i, item) in images.iter().enumerate() {
            let name = format!("{prefix}{i:05}.pgm");
            let bytes = pgm::to_bytes(&item.image);
            fs::write(dir.join(&name), &bytes)?;
            h.update(&bytes);
            index.push_str(&format!("{name},{}\n", item.label.index()));
        }
        h.update(index.as_bytes());
        let path = dir.join("index.csv");
        fs::write(&path, &index)?;
        self.digests
            .insert(format!("{rel_dir}/index.csv"), hex::encode(h.finalize()));
        Ok(path)
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }
}

/// Outputs of one detector arm.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub report: EvalReport,
    pub history: TrainHistory,
    pub model: CnnModel,
    pub cv: Option<CvReport>,
    pub train_counts: [usize; 2],
    pub test_set_sha256: String,
}

fn train_arm(
    train: &[LabeledImage],
    test: &[LabeledImage],
    config: &PipelineConfig,
) -> Result<ArmResult> {
    let (mut model, history) = cnn::train_cnn(train, &config.cnn)?;
    let report = model.evaluate(test)?;
    let cv = if config.run_cv {
        Some(cnn::kfold_cv(train, &config.cnn)?)
    } else {
        None
    };
    Ok(ArmResult {
        report,
        history,
        model,
        cv,
        train_counts: count_labels(train.iter().map(|t| &t.label)),
        test_set_sha256: image_set_sha256(test),
    })
}

fn write_arm(out: &mut ArtifactWriter, dir: &str, arm: &ArmResult) -> Result<()> {
    out.write(
        &format!("{dir}/cnn.ckpt"),
        &arm.model.to_checkpoint_bytes()?,
    )?;
    out.write(
        &format!("{dir}/history.csv"),
        arm.history.to_csv().as_bytes(),
    )?;
    out.write_json(&format!("{dir}/report.json"), &arm.report)?;
    out.write(
        &format!("{dir}/report.txt"),
        arm.report.to_table().as_bytes(),
    )?;
    out.write(
        &format!("{dir}/confusion.csv"),
        arm.report.confusion_csv().as_bytes(),
    )?;
    if let Some(cv) = &arm.cv {
        out.write_json(&format!("{dir}/cv.json"), cv)?;
    }
    Ok(())
}

/// Synthesizes the full table and splits off the balanced test set.
pub fn synth_split(config: &PipelineConfig) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let synth = SynthConfig {
        n_benign: config.synth.n_benign + config.test_per_class,
        n_malign: config.synth.n_malign + config.test_per_class,
        ..config.synth.clone()
    };
    split_train_test(
        &gen_dataset(&synth)?,
        config.test_per_class,
        config.seeds().split,
    )
}

/// Images to add in arm B.
pub fn generated_count(config: &PipelineConfig, train_counts: [usize; 2]) -> usize {
    config
        .generated_count
        .unwrap_or(train_counts[0].saturating_sub(train_counts[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub train_benign: usize,
    pub train_malign: usize,
    pub added_malign: usize,
    pub accuracy: f64,
    pub test_set_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seeds: Seeds,
    pub config_sha256: String,
    pub test_set_sha256: String,
    pub arm_a: ArmSummary,
    pub arm_b: ArmSummary,
    /// Relative path -> SHA-256 of every artifact except this manifest.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: PipelineConfig,
    pub arm_a: ArmResult,
    pub arm_b: ArmResult,
    pub comparison: Comparison,
    pub gan: Cgan,
    pub trace: GanLossTrace,
    pub generated: Vec<BinaryImage>,
    pub manifest: Manifest,
}

/// Runs both arms and writes every artifact under `out_dir`. `progress`
/// receives one line per stage.
pub fn run_all(
    config: &PipelineConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&str),
) -> Result<RunOutput> {
    let config = config.resolved()?;
    let seeds = config.seeds();
    let layout = config.layout();
    let mut out = ArtifactWriter::new(out_dir)?;
    out.write("config.toml", config.to_toml_string()?.as_bytes())?;

    progress("synthesizing samples");
    let (train, test) = synth_split(&config)?;
    out.write_samples("data/train.csv", &train)?;
    out.write_samples("data/test.csv", &test)?;
    let test_images = encode_all(&test, &layout)?;
    let train_images = encode_all(&train, &layout)?;
    let counts = count_labels(train.iter().map(|s| &s.label));
    let test_hash = image_set_sha256(&test_images);

    let of = |set: &[LabeledImage], label: Label| -> Vec<BinaryImage> {
        set.iter()
            .filter(|s| s.label == label)
            .map(|s| s.image.clone())
            .collect()
    };
    let tiles = config.grid_tiles;
    for label in Label::ALL {
        let imgs = of(&train_images, label);
        let refs: Vec<&BinaryImage> = imgs.iter().collect();
        out.write(
            &format!("grids/real_{}.pgm", label.name()),
            &sample_grid(&refs, tiles)?,
        )?;
    }

    progress("arm A: SMOTE oversampling");
    let balanced = balance_with_smote(&train, &config.smote)?;
    out.write_samples("arm_a/train_smote.csv", &balanced)?;
    let smote_images = encode_all(&balanced, &layout)?;
    let synthetic: Vec<&BinaryImage> = smote_images[train.len()..]
        .iter()
        .map(|s| &s.image)
        .collect();
    out.write("grids/smote_malign.pgm", &sample_grid(&synthetic, tiles)?)?;
    progress("arm A: training detector");
    let arm_a = train_arm(&smote_images, &test_images, &config)?;
    write_arm(&mut out, "arm_a", &arm_a)?;

    progress("arm B: training cGAN");
    let mut trace = GanLossTrace::default();
    let trained = cgan::train_cgan_traced(&train_images, &config.cgan, &mut trace);
    out.write(TRACE, trace.to_csv().as_bytes())?;
    let mut gan: Cgan = trained?;
    out.write("arm_b/cgan.ckpt", &gan.to_checkpoint_bytes()?)?;
    let n_generated = generated_count(&config, counts);
    progress(&format!("arm B: generating {n_generated} malign images"));
    let generated = cgan::generate_malign(&mut gan.generator, n_generated, seeds.generate)?;
    let generated_set: Vec<LabeledImage> = generated
        .iter()
        .map(|image| LabeledImage {
            image: image.clone(),
            label: Label::Malign,
        })
        .collect();
    out.write_image_set("arm_b/generated", "gen", &generated_set)?;
    let refs: Vec<&BinaryImage> = generated.iter().collect();
    out.write("grids/generated_malign.pgm", &sample_grid(&refs, tiles)?)?;
    let mut augmented = train_images;
    augmented.extend(generated_set);
    progress("arm B: training detector");
    let arm_b = train_arm(&augmented, &test_images, &config)?;
    write_arm(&mut out, "arm_b", &arm_b)?;

    if arm_a.test_set_sha256 != test_hash || arm_b.test_set_sha256 != test_hash {
        return Err(Error::Dataset(
            "arms were scored on different test sets".into(),
        ));
    }
    let comparison = compare_runs(&arm_a.report, &arm_b.report)?;
    out.write_json("comparison.json", &comparison)?;
    out.write("comparison.txt", comparison.to_table().as_bytes())?;

    let summary = |arm: &ArmResult, added: usize| ArmSummary {
        train_benign: arm.train_counts[0],
        train_malign: arm.train_counts[1],
        added_malign: added,
        accuracy: arm.report.accuracy,
        test_set_sha256: arm.test_set_sha256.clone(),
    };
    let manifest = Manifest {
        seeds,
        config_sha256: config.sha256()?,
        test_set_sha256: test_hash,
        arm_a: summary(&arm_a, balanced.len() - train.len()),
        arm_b: summary(&arm_b, n_generated),
        artifacts: out.digests().clone(),
    };
    out.write_json(MANIFEST, &manifest)?;
    progress("done");
    Ok(RunOutput {
        config,
        arm_a,
        arm_b,
        comparison,
        gan,
        trace,
        generated,
        manifest,
    })
}
