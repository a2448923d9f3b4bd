//! Deterministic pixel oracle standing in for the external classifier.
//!
//! Foreground pixels are those with channel spread above 0.3 (the gray
//! background never exceeds that under corpus noise). Color is the sign of
//! the mean R-B difference over the foreground; shape is square when the
//! foreground fills more than 0.9 of its bounding box.

use thiserror::Error;

use super::image::{Image, CANVAS};
use super::scene::{Color, Shape};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("fewer than {MIN_FOREGROUND} foreground pixels")]
    NoForeground,
}

pub const MIN_FOREGROUND: usize = 4;
const SPREAD_THRESHOLD: f32 = 0.3;
const FILL_RATIO_SQUARE: f32 = 0.9;
const CONFIDENCE_SCALE: f32 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOutcome {
    pub color: Color,
    pub shape: Shape,
    pub confidence: f32,
}

/// Classify an image in [0,1]^(16x16x3) by its pixels alone.
pub fn oracle_classify(image: &Image) -> Result<OracleOutcome, OracleError> {
    let mask = foreground_mask(image);
    let count = mask.iter().filter(|&&m| m).count();
    if count < MIN_FOREGROUND {
        return Err(OracleError::NoForeground);
    }

    let mut sum_rb = 0.0f64;
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (CANVAS, 0usize, CANVAS, 0usize);
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            if mask[y * CANVAS + x] {
                let [r, _, b] = image.get(x, y);
                sum_rb += f64::from(r - b);
                min_x = min_x.min(x);
                max_x = max_x.max(x);
                min_y = min_y.min(y);
                max_y = max_y.max(y);
            }
        }
    }
    let mean_rb = (sum_rb / count as f64) as f32;
    let color = if mean_rb > 0.0 { Color::Red } else { Color::Blue };

    let bbox_area = (max_x - min_x + 1) * (max_y - min_y + 1);
    let fill_ratio = count as f32 / bbox_area as f32;
    let shape = if fill_ratio > FILL_RATIO_SQUARE {
        Shape::Square
    } else {
        Shape::Circle
    };

    let confidence = (mean_rb.abs() / CONFIDENCE_SCALE).min(1.0);
    Ok(OracleOutcome {
        color,
        shape,
        confidence,
    })
}

/// Pixels whose channel spread exceeds the threshold.
pub fn foreground_mask(image: &Image) -> Vec<bool> {
    let mut mask = vec![false; CANVAS * CANVAS];
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            let [r, g, b] = image.get(x, y);
            let max = r.max(g).max(b);
            let min = r.min(g).min(b);
            mask[y * CANVAS + x] = max - min > SPREAD_THRESHOLD;
        }
    }
    mask
}
