//! Logo orientation from second-order image moments.
//!
//! The rotational alignment check fits the principal axis of a binary mask
//! using central moments: the axis angle is `0.5 * atan2(2*mu11, mu20 - mu02)`.
//! An anisotropy measure derived from the covariance eigenvalues flags
//! near-isotropic shapes (e.g. a disk) whose angle is meaningless.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum set pixels for a meaningful moment fit.
pub const MIN_PIXELS: usize = 16;

/// Default anisotropy floor below which the angle is marked unreliable.
pub const DEFAULT_ECCENTRICITY_FLOOR: f64 = 0.05;

#[derive(Debug, Error)]
pub enum OrientationError {
    #[error("mask has {0} set pixels, need at least {MIN_PIXELS}")]
    TooFewPixels(usize),
    #[error("mask dimensions must be >= 1")]
    EmptyMask,
}

/// Row-major binary occupancy grid. Row 0 is the top of the image; the
/// angle convention treats +x right, +y up, so a shape tilted
/// counter-clockwise on screen yields a positive angle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Result<Self, OrientationError> {
        if width == 0 || height == 0 {
            return Err(OrientationError::EmptyMask);
        }
        Ok(BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Rasterizes a `w x h` rectangle rotated by `angle_deg` about the mask
    /// center, via pixel-center point-in-rectangle tests.
    pub fn rotated_rect(
        canvas: usize,
        rect_w: f64,
        rect_h: f64,
        angle_deg: f64,
    ) -> Result<Self, OrientationError> {
        let mut mask = BinaryMask::new(canvas, canvas)?;
        let c = canvas as f64 / 2.0;
        let theta = angle_deg.to_radians();
        let (sin, cos) = theta.sin_cos();
        for y in 0..canvas {
            for x in 0..canvas {
                let px = x as f64 + 0.5 - c;
                // flip so +y is up, matching the angle convention
                let py = c - (y as f64 + 0.5);
                // rotate the point back into the rectangle frame
                let rx = cos * px + sin * py;
                let ry = -sin * px + cos * py;
                if rx.abs() <= rect_w / 2.0 && ry.abs() <= rect_h / 2.0 {
                    mask.set(x, y, true);
                }
            }
        }
        Ok(mask)
    }

    /// Rasterizes a filled disk centered on the mask.
    pub fn disk(canvas: usize, radius: f64) -> Result<Self, OrientationError> {
        let mut mask = BinaryMask::new(canvas, canvas)?;
        let c = canvas as f64 / 2.0;
        for y in 0..canvas {
            for x in 0..canvas {
                let dx = x as f64 + 0.5 - c;
                let dy = y as f64 + 0.5 - c;
                if dx * dx + dy * dy <= radius * radius {
                    mask.set(x, y, true);
                }
            }
        }
        Ok(mask)
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&self) -> Self {
        let mut out = BinaryMask::new(self.width * 2, self.height * 2).unwrap();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.set(2 * x, 2 * y, true);
                    out.set(2 * x + 1, 2 * y, true);
                    out.set(2 * x, 2 * y + 1, true);
                    out.set(2 * x + 1, 2 * y + 1, true);
                }
            }
        }
        out
    }
}

/// Principal-axis fit result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Orientation {
    /// Principal-axis angle in degrees, in (-90, 90].
    pub angle_deg: f64,
    /// Anisotropy in [0,1]: `(l1 - l2) / (l1 + l2)` over the covariance
    /// eigenvalues. Near zero for isotropic shapes.
    pub eccentricity: f64,
    /// False when the shape is too isotropic for the angle to mean anything.
    pub reliable: bool,
}

/// Fits the principal axis of the mask from second-order central moments.
pub fn estimate_orientation(mask: &BinaryMask) -> Result<Orientation, OrientationError> {
    estimate_orientation_with_floor(mask, DEFAULT_ECCENTRICITY_FLOOR)
}

pub fn estimate_orientation_with_floor(
    mask: &BinaryMask,
    eccentricity_floor: f64,
) -> Result<Orientation, OrientationError> {
    let n = mask.count();
    if n < MIN_PIXELS {
        return Err(OrientationError::TooFewPixels(n));
    }
    let mut sx = 0.0;
    let mut sy = 0.0;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                sx += x as f64 + 0.5;
                sy += mask.height as f64 - (y as f64 + 0.5); // +y up
            }
        }
    }
    let m00 = n as f64;
    let cx = sx / m00;
    let cy = sy / m00;
    let mut mu20 = 0.0;
    let mut mu02 = 0.0;
    let mut mu11 = 0.0;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                let dx = x as f64 + 0.5 - cx;
                let dy = mask.height as f64 - (y as f64 + 0.5) - cy;
                mu20 += dx * dx;
                mu02 += dy * dy;
                mu11 += dx * dy;
            }
        }
    }
    mu20 /= m00;
    mu02 /= m00;
    mu11 /= m00;

    let mut angle_deg = 0.5 * (2.0 * mu11).atan2(mu20 - mu02) * 180.0 / std::f64::consts::PI;
    // map into (-90, 90]
    if angle_deg <= -90.0 {
        angle_deg += 180.0;
    }

    // covariance eigenvalues
    let tr = mu20 + mu02;
    let det = mu20 * mu02 - mu11 * mu11;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = tr / 2.0 - disc;
    let eccentricity = if tr > 0.0 { (l1 - l2) / tr } else { 0.0 };
    Ok(Orientation {
        angle_deg,
        eccentricity,
        reliable: eccentricity >= eccentricity_floor,
    })
}

/// Alignment classification for a fitted orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Aligned,
    Misaligned,
    Unreliable,
}

/// Aligned iff the fit is reliable and `|angle| <= tolerance_deg`.
pub fn check_alignment(orientation: &Orientation, tolerance_deg: f64) -> Alignment {
    if !orientation.reliable {
        Alignment::Unreliable
    } else if orientation.angle_deg.abs() <= tolerance_deg {
        Alignment::Aligned
    } else {
        Alignment::Misaligned
    }
}
