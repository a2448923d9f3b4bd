//! Procedural scene corpus: one saturated colored shape on a gray canvas.
//!
//! The corpus carries a controllable implicit attribute: under the generic
//! condition the object color follows a skewed marginal (the bias the
//! pipeline later has to localize and correct), while explicit conditions
//! name their attributes outright.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

use super::condition::{Condition, Token};
use super::image::{Image, CANVAS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
}

impl Color {
    pub fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [0.9, 0.1, 0.1],
            Color::Blue => [0.1, 0.1, 0.9],
        }
    }

    pub fn index(self) -> u32 {
        match self {
            Color::Red => 0,
            Color::Blue => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Blue => "blue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
}

impl Shape {
    pub fn index(self) -> u32 {
        match self {
            Shape::Circle => 0,
            Shape::Square => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
        }
    }
}

/// Ground-truth description of one rendered scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneLabel {
    pub color: Color,
    pub shape: Shape,
    pub center: (f32, f32),
    pub size: f32,
}

/// Fields a caller may pin before sampling the rest from the policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct PartialScene {
    pub color: Option<Color>,
    pub shape: Option<Shape>,
    pub center: Option<(f32, f32)>,
    pub size: Option<f32>,
}

/// Marginals used when sampling unspecified scene fields.
#[derive(Debug, Clone, Copy)]
pub struct ScenePolicy {
    /// Probability that an unspecified color resolves to red.
    pub red_fraction: f64,
}

impl Default for ScenePolicy {
    fn default() -> Self {
        ScenePolicy { red_fraction: 0.8 }
    }
}

pub const SIZE_MIN: f32 = 3.0;
pub const SIZE_MAX: f32 = 6.0;
const BG_GRAY: f32 = 0.5;
const BG_NOISE: f32 = 0.02;
const FG_NOISE: f32 = 0.05;

/// Render a scene, sampling unspecified fields from the policy.
/// Same seed, same inputs -> bit-identical image.
pub fn gen_scene(spec: &PartialScene, policy: &ScenePolicy, seed: u64) -> (Image, SceneLabel) {
    let mut rng = rng::stream(seed, "scene", 0);
    let label = sample_label(spec, policy, &mut rng);
    let image = render(&label, &mut rng);
    (image, label)
}

fn sample_label(spec: &PartialScene, policy: &ScenePolicy, rng: &mut ChaCha8Rng) -> SceneLabel {
    let color = spec.color.unwrap_or_else(|| {
        if rng.random::<f64>() < policy.red_fraction {
            Color::Red
        } else {
            Color::Blue
        }
    });
    let shape = spec.shape.unwrap_or_else(|| {
        if rng.random::<bool>() {
            Shape::Circle
        } else {
            Shape::Square
        }
    });
    // Half-pixel size grid: rasterized circles at these sizes keep their
    // bounding-box fill ratio below the oracle's square threshold; sizes
    // just under an integer radius would not.
    let size = spec.size.unwrap_or_else(|| {
        let steps = ((SIZE_MAX - SIZE_MIN) * 2.0) as i64;
        SIZE_MIN + rng.random_range(0..=steps) as f32 * 0.5
    });
    let center = spec.center.unwrap_or_else(|| {
        let margin = size.ceil() as i64;
        let lo = margin;
        let hi = (CANVAS as i64 - 1) - margin;
        let cx = rng.random_range(lo..=hi) as f32;
        let cy = rng.random_range(lo..=hi) as f32;
        (cx, cy)
    });
    SceneLabel {
        color,
        shape,
        center,
        size,
    }
}

fn render(label: &SceneLabel, rng: &mut ChaCha8Rng) -> Image {
    let mut img = Image::filled(BG_GRAY);
    let fg = label.color.rgb();
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            let inside = covers(label, x, y);
            let (base, amp) = if inside { (fg, FG_NOISE) } else { ([BG_GRAY; 3], BG_NOISE) };
            let mut px = [0.0f32; 3];
            for c in 0..3 {
                let noise: f32 = rng.random_range(-amp..=amp);
                px[c] = base[c] + noise;
            }
            img.set(x, y, px);
        }
    }
    img.clamp_unit();
    img
}

/// Whether pixel (x, y) belongs to the shape.
pub fn covers(label: &SceneLabel, x: usize, y: usize) -> bool {
    let dx = x as f32 - label.center.0;
    let dy = y as f32 - label.center.1;
    match label.shape {
        Shape::Circle => dx * dx + dy * dy <= label.size * label.size,
        Shape::Square => dx.abs() <= label.size && dy.abs() <= label.size,
    }
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("policy fractions must lie in [0, 1]: {0}")]
    InvalidPolicy(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus file corrupt: {0}")]
    Corrupt(String),
}

/// Condition assignment policy for corpus construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorpusPolicy {
    /// Fraction of items conditioned on the bare generic prompt.
    pub generic_fraction: f64,
    /// Red marginal among items whose condition leaves color implicit.
    pub color_skew: f64,
}

impl Default for CorpusPolicy {
    fn default() -> Self {
        CorpusPolicy {
            generic_fraction: 0.5,
            color_skew: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub image: Image,
    pub condition: Condition,
    pub label: SceneLabel,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub items: Vec<CorpusItem>,
    pub policy: CorpusPolicy,
    pub seed: u64,
}

/// Build `n` (image, condition, label) triples. Explicit conditions name
/// their attributes truthfully; implicit attributes follow the policy.
pub fn build_corpus(n: usize, policy: CorpusPolicy, seed: u64) -> Result<Corpus, CorpusError> {
    for (name, v) in [
        ("generic_fraction", policy.generic_fraction),
        ("color_skew", policy.color_skew),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CorpusError::InvalidPolicy(format!("{name} = {v}")));
        }
    }
    let scene_policy = ScenePolicy {
        red_fraction: policy.color_skew,
    };
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::stream(seed, "corpus-item", i as u64);
        let generic = rng.random::<f64>() < policy.generic_fraction;
        let (condition, partial) = if generic {
            (Condition::generic(), PartialScene::default())
        } else {
            // Explicit conditions: color, color+shape, or shape-only.
            let roll = rng.random::<f64>();
            let color = if roll < 0.8 {
                Some(if rng.random::<bool>() { Color::Red } else { Color::Blue })
            } else {
                None
            };
            let shape = if roll >= 0.4 {
                Some(if rng.random::<bool>() { Shape::Circle } else { Shape::Square })
            } else {
                None
            };
            (
                Condition::with_attributes(color, shape),
                PartialScene {
                    color,
                    shape,
                    ..PartialScene::default()
                },
            )
        };
        let item_seed = rng::derive_seed(seed, "corpus-scene", i as u64);
        let (image, label) = gen_scene(&partial, &scene_policy, item_seed);
        items.push(CorpusItem {
            image,
            condition,
            label,
        });
    }
    Ok(Corpus {
        items,
        policy,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Corpus file: JSON header + packed little-endian f32 image data
// ---------------------------------------------------------------------------

const CORPUS_MAGIC: [u8; 4] = *b"ICCO";
const CORPUS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    n: usize,
    canvas: usize,
    channels: usize,
    policy: CorpusPolicy,
    seed: u64,
    items: Vec<CorpusRow>,
}

#[derive(Serialize, Deserialize)]
struct CorpusRow {
    condition: Vec<Token>,
    label: SceneLabel,
}

impl Corpus {
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let header = CorpusHeader {
            n: self.items.len(),
            canvas: CANVAS,
            channels: 3,
            policy: self.policy,
            seed: self.seed,
            items: self
                .items
                .iter()
                .map(|it| CorpusRow {
                    condition: it.condition.tokens().to_vec(),
                    label: it.label,
                })
                .collect(),
        };
        let header_json =
            serde_json::to_vec(&header).map_err(|e| CorpusError::Corrupt(e.to_string()))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&CORPUS_MAGIC)?;
        f.write_all(&CORPUS_VERSION.to_le_bytes())?;
        f.write_all(&(header_json.len() as u32).to_le_bytes())?;
        f.write_all(&header_json)?;
        for item in &self.items {
            for v in item.image.to_flat() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut head = [0u8; 12];
        f.read_exact(&mut head)
            .map_err(|_| CorpusError::Corrupt("file too short".into()))?;
        if head[..4] != CORPUS_MAGIC {
            return Err(CorpusError::Corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != CORPUS_VERSION {
            return Err(CorpusError::Corrupt(format!("version {version}")));
        }
        let header_len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let mut header_bytes = vec![0u8; header_len];
        f.read_exact(&mut header_bytes)
            .map_err(|_| CorpusError::Corrupt("truncated header".into()))?;
        let header: CorpusHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| CorpusError::Corrupt(e.to_string()))?;
        if header.canvas != CANVAS || header.channels != 3 {
            return Err(CorpusError::Corrupt("unsupported geometry".into()));
        }
        let px = CANVAS * CANVAS * 3;
        let mut items = Vec::with_capacity(header.n);
        let mut buf = vec![0u8; px * 4];
        for row in header.items {
            f.read_exact(&mut buf)
                .map_err(|_| CorpusError::Corrupt("truncated image data".into()))?;
            let flat: Vec<f32> = buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let condition = Condition::new(row.condition)
                .map_err(|e| CorpusError::Corrupt(e.to_string()))?;
            items.push(CorpusItem {
                image: Image::from_flat(&flat),
                condition,
                label: row.label,
            });
        }
        Ok(Corpus {
            items,
            policy: header.policy,
            seed: header.seed,
        })
    }
}
