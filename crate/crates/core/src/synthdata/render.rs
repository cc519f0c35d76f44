//! Orthographic stick-figure rasterization.
//!
//! A pose is projected by dropping one world axis (the "depth" direction —
//! this is what makes the image-to-pose problem ambiguous), centered on the
//! bounding box of the projected joints, scaled by a fixed millimeters-per-
//! pixel factor, and drawn as anti-aliased limb segments. Pixel values are
//! quantized to `k/255` at render time so that 8-bit persistence is exact.

use super::skeleton::Limb;
use crate::autoencoder::Pose;
use crate::error::{Error, Result};

/// World axis dropped by the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewAxis {
    X,
    Y,
    Z,
}

impl ViewAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewAxis::X => "x",
            ViewAxis::Y => "y",
            ViewAxis::Z => "z",
        }
    }

    pub fn parse(s: &str) -> Result<ViewAxis> {
        match s {
            "x" => Ok(ViewAxis::X),
            "y" => Ok(ViewAxis::Y),
            "z" => Ok(ViewAxis::Z),
            other => Err(Error::Parameter {
                op: "view_axis",
                name: "axis",
                detail: format!("expected x, y or z, got {other:?}"),
            }),
        }
    }

    /// Project a world point to image-plane millimeters `(u, v)`; `v` grows
    /// downward in the image. Viewing along Y (the default) keeps x and
    /// height: `u = x`, `v = -z`; along X: `u = y`, `v = -z`; along Z
    /// (top-down): `u = x`, `v = -y`.
    fn project(self, p: [f64; 3]) -> (f64, f64) {
        match self {
            ViewAxis::X => (p[1], -p[2]),
            ViewAxis::Y => (p[0], -p[2]),
            ViewAxis::Z => (p[0], -p[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraConfig {
    pub view_axis: ViewAxis,
    /// Square image side, pixels.
    pub image_size: usize,
    pub mm_per_pixel: f64,
    /// Stroke thickness, pixels.
    pub line_thickness: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            view_axis: ViewAxis::Y,
            image_size: 32,
            mm_per_pixel: 80.0,
            line_thickness: 1.5,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |name: &'static str, detail: String| Error::Parameter {
            op: "camera_config",
            name,
            detail,
        };
        if self.image_size < 16 {
            return Err(fail(
                "image_size",
                format!("must be at least 16 pixels, got {}", self.image_size),
            ));
        }
        if !(self.mm_per_pixel > 0.0 && self.mm_per_pixel.is_finite()) {
            return Err(fail(
                "mm_per_pixel",
                format!("must be positive, got {}", self.mm_per_pixel),
            ));
        }
        if !(self.line_thickness > 0.0 && self.line_thickness.is_finite()) {
            return Err(fail(
                "line_thickness",
                format!("must be positive, got {}", self.line_thickness),
            ));
        }
        Ok(())
    }
}

/// Square grayscale image, row-major, every pixel an exact multiple of
/// 1/255 in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    size: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pixels
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub fn from_bytes(size: usize, bytes: &[u8]) -> Result<GrayImage> {
        if bytes.len() != size * size {
            return Err(Error::Dimension {
                op: "gray_image",
                detail: format!("{size}x{size} image needs {} bytes, got {}", size * size, bytes.len()),
            });
        }
        Ok(GrayImage {
            size,
            pixels: bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        })
    }
}

fn dist_to_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let dx = bx - ax;
    let dy = by - ay;
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let cx = ax + t * dx;
    let cy = ay + t * dy;
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Rasterize the limbs of a pose. Coverage of a pixel follows the
/// disc-overlap approximation `clamp(thickness/2 + 1/2 - d, 0, 1)` where
/// `d` is the distance from the pixel center to the segment; overlapping
/// limbs composite by maximum. Every projected joint must land inside the
/// frame or the render fails naming the offending joint.
pub fn render(pose: &Pose, limbs: &[Limb], camera: &CameraConfig) -> Result<GrayImage> {
    camera.validate()?;
    if limbs.is_empty() {
        return Err(Error::Parameter {
            op: "render",
            name: "limbs",
            detail: "need at least one limb to draw".into(),
        });
    }
    let joints = pose.joint_count();
    for limb in limbs {
        if limb.parent >= joints || limb.child >= joints {
            return Err(Error::Dimension {
                op: "render",
                detail: format!(
                    "limb {} connects joints {} and {} but the pose has {joints} joints",
                    limb.name, limb.parent, limb.child
                ),
            });
        }
    }

    // Project all joints, frame on the bounding-box center.
    let projected: Vec<(f64, f64)> = (0..joints)
        .map(|j| camera.view_axis.project(pose.joint(j)))
        .collect();
    let (mut min_u, mut max_u) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_v, mut max_v) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(u, v) in &projected {
        min_u = min_u.min(u);
        max_u = max_u.max(u);
        min_v = min_v.min(v);
        max_v = max_v.max(v);
    }
    let center_u = 0.5 * (min_u + max_u);
    let center_v = 0.5 * (min_v + max_v);
    let size = camera.image_size;
    let half = (size - 1) as f64 / 2.0;
    let to_px = |(u, v): (f64, f64)| -> (f64, f64) {
        (
            (u - center_u) / camera.mm_per_pixel + half,
            (v - center_v) / camera.mm_per_pixel + half,
        )
    };
    let pixel_coords: Vec<(f64, f64)> = projected.into_iter().map(to_px).collect();
    let limit = (size - 1) as f64;
    for (j, &(x, y)) in pixel_coords.iter().enumerate() {
        if !(0.0..=limit).contains(&x) || !(0.0..=limit).contains(&y) {
            return Err(Error::Domain {
                op: "render",
                detail: format!(
                    "joint {j} projects to pixel ({x:.2}, {y:.2}) outside the {size}x{size} frame; \
                     increase mm_per_pixel or the image size"
                ),
            });
        }
    }

    let mut pixels = vec![0.0f64; size * size];
    let reach = 0.5 * camera.line_thickness + 0.5;
    for limb in limbs {
        let (ax, ay) = pixel_coords[limb.parent];
        let (bx, by) = pixel_coords[limb.child];
        let col_lo = ((ax.min(bx) - reach).floor().max(0.0)) as usize;
        let col_hi = ((ax.max(bx) + reach).ceil().min(limit)) as usize;
        let row_lo = ((ay.min(by) - reach).floor().max(0.0)) as usize;
        let row_hi = ((ay.max(by) + reach).ceil().min(limit)) as usize;
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let d = dist_to_segment(col as f64, row as f64, ax, ay, bx, by);
                let coverage = (reach - d).clamp(0.0, 1.0);
                let slot = &mut pixels[row * size + col];
                if coverage > *slot {
                    *slot = coverage;
                }
            }
        }
    }
    for v in &mut pixels {
        *v = (*v * 255.0).round() / 255.0;
    }
    Ok(GrayImage { size, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limb(name: &str, parent: usize, child: usize) -> Limb {
        Limb {
            name: name.into(),
            parent,
            child,
        }
    }

    fn vertical_pose() -> Pose {
        Pose::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 400.0]).unwrap()
    }

    #[test]
    fn vertical_limb_renders_a_column_band_of_thickness_width() {
        let camera = CameraConfig {
            view_axis: ViewAxis::Y,
            image_size: 17,
            mm_per_pixel: 40.0,
            line_thickness: 3.0,
        };
        let img = render(&vertical_pose(), &[limb("stick", 0, 1)], &camera).unwrap();
        // The stroke is centered on column 8; with thickness 3 the ink
        // stays within a band of exactly three columns, 7..=9.
        for row in 0..17 {
            for col in 0..17 {
                if !(7..=9).contains(&col) {
                    assert_eq!(img.get(row, col), 0.0, "unexpected ink at ({row}, {col})");
                }
            }
        }
        // The segment spans rows 3..=13; mid-stroke the whole band is inked
        // and the centerline saturates.
        assert!(img.get(8, 7) > 0.0 && img.get(8, 9) > 0.0);
        assert_eq!(img.get(8, 8), 1.0);
    }

    #[test]
    fn rendering_is_deterministic_and_inked() {
        let camera = CameraConfig::default();
        let pose = vertical_pose();
        let limbs = [limb("stick", 0, 1)];
        let a = render(&pose, &limbs, &camera).unwrap();
        let b = render(&pose, &limbs, &camera).unwrap();
        assert_eq!(a, b);
        assert!(a.as_slice().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn depth_axis_variation_is_invisible() {
        // Two poses that differ only along the dropped axis render the same.
        let near = Pose::new(vec![0.0, 0.0, 0.0, 100.0, 300.0, 200.0]).unwrap();
        let far = Pose::new(vec![0.0, 0.0, 0.0, 100.0, -300.0, 200.0]).unwrap();
        let camera = CameraConfig::default();
        let limbs = [limb("stick", 0, 1)];
        assert_eq!(
            render(&near, &limbs, &camera).unwrap(),
            render(&far, &limbs, &camera).unwrap()
        );
    }

    #[test]
    fn out_of_frame_poses_error_naming_the_joint() {
        let camera = CameraConfig {
            mm_per_pixel: 1.0,
            image_size: 16,
            ..CameraConfig::default()
        };
        let err = render(&vertical_pose(), &[limb("stick", 0, 1)], &camera).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("joint"), "{msg}");
        assert!(msg.contains("frame"), "{msg}");
    }

    #[test]
    fn pixels_are_exact_eighth_bit_levels_and_bytes_round_trip() {
        let camera = CameraConfig::default();
        let img = render(&vertical_pose(), &[limb("stick", 0, 1)], &camera).unwrap();
        for &v in img.as_slice() {
            assert!((v * 255.0 - (v * 255.0).round()).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&v));
        }
        let bytes = img.to_bytes();
        let back = GrayImage::from_bytes(img.size(), &bytes).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn invalid_cameras_and_limbs_are_rejected() {
        let mut camera = CameraConfig::default();
        camera.image_size = 8;
        assert!(render(&vertical_pose(), &[limb("s", 0, 1)], &camera).is_err());
        let camera = CameraConfig::default();
        assert!(render(&vertical_pose(), &[], &camera).is_err());
        assert!(render(&vertical_pose(), &[limb("s", 0, 7)], &camera).is_err());
    }
}
