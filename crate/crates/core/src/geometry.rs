//! Scan geometry and the closed-form parallax relations.
//!
//! The laboratory frame has its origin on the rotation axis. A pencil beam at
//! lateral offset `t` and rotation angle `phi` passes through every point with
//! `x cos(phi) + y sin(phi) = t`. A sample point at `(x0, y0)` diffracts onto
//! the detector displaced by its offset along the beam-normal direction, which
//! shows up as an apparent Bragg-angle shift of `(x0 cos(phi) + y0 sin(phi)) tan(2 theta) / z`.
//!
//! Lengths are millimetres and angles radians everywhere in this module.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that an angle schedule is uniform.
const UNIFORM_TOL: f64 = 1e-9;

/// Scanning geometry of a pencil-beam translate/rotate diffraction tomography scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    bragg_theta: f64,
    det_distance: f64,
    pixel_pitch: f64,
    n_translations: usize,
    translation_pitch: f64,
    rotation_angles: Vec<f64>,
    rotation_span: f64,
}

impl ScanGeometry {
    /// Builds a geometry from an explicit, strictly increasing angle schedule.
    pub fn new(
        bragg_theta: f64,
        det_distance: f64,
        pixel_pitch: f64,
        n_translations: usize,
        translation_pitch: f64,
        rotation_angles: Vec<f64>,
        rotation_span: f64,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidGeometry(msg));
        if !(bragg_theta > 0.0 && bragg_theta < FRAC_PI_4) {
            return bad(format!("bragg angle {bragg_theta} rad outside (0, pi/4)"));
        }
        if !(det_distance > 0.0 && det_distance.is_finite()) {
            return bad(format!("detector distance {det_distance} mm must be positive"));
        }
        if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
            return bad(format!("pixel pitch {pixel_pitch} mm must be positive"));
        }
        if !(translation_pitch > 0.0 && translation_pitch.is_finite()) {
            return bad(format!("translation pitch {translation_pitch} mm must be positive"));
        }
        if n_translations == 0 {
            return bad("at least one translation step is required".into());
        }
        if rotation_angles.is_empty() {
            return bad("rotation schedule is empty".into());
        }
        if rotation_angles.iter().any(|a| !a.is_finite()) {
            return bad("rotation schedule contains non-finite angles".into());
        }
        if rotation_angles.windows(2).any(|w| w[1] <= w[0]) {
            return bad("rotation angles must be strictly increasing".into());
        }
        if !(rotation_span > 0.0 && rotation_span <= TAU + 1e-12) {
            return bad(format!("rotation span {rotation_span} rad outside (0, 2pi]"));
        }
        let geom = ScanGeometry {
            bragg_theta,
            det_distance,
            pixel_pitch,
            n_translations,
            translation_pitch,
            rotation_angles,
            rotation_span,
        };
        if geom.is_full_turn() && !geom.is_uniform() {
            return bad("a full-turn schedule must be uniformly spaced over [0, 2pi)".into());
        }
        Ok(geom)
    }

    /// Builds a geometry with `n_angles` uniformly spaced angles `k * span / n_angles`.
    pub fn uniform(
        bragg_theta: f64,
        det_distance: f64,
        pixel_pitch: f64,
        n_translations: usize,
        translation_pitch: f64,
        n_angles: usize,
        span: f64,
    ) -> Result<Self> {
        Self::new(
            bragg_theta,
            det_distance,
            pixel_pitch,
            n_translations,
            translation_pitch,
            uniform_angles(n_angles, span),
            span,
        )
    }

    /// Returns a copy with a different rotation schedule over the same span.
    pub fn with_uniform_angles(&self, n_angles: usize, span: f64) -> Result<Self> {
        Self::uniform(
            self.bragg_theta,
            self.det_distance,
            self.pixel_pitch,
            self.n_translations,
            self.translation_pitch,
            n_angles,
            span,
        )
    }

    /// Returns a copy with a different sample-detector distance.
    pub fn with_det_distance(&self, det_distance: f64) -> Result<Self> {
        Self::new(
            self.bragg_theta,
            det_distance,
            self.pixel_pitch,
            self.n_translations,
            self.translation_pitch,
            self.rotation_angles.clone(),
            self.rotation_span,
        )
    }

    pub fn bragg_theta(&self) -> f64 {
        self.bragg_theta
    }

    pub fn two_theta(&self) -> f64 {
        2.0 * self.bragg_theta
    }

    pub fn det_distance(&self) -> f64 {
        self.det_distance
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn n_translations(&self) -> usize {
        self.n_translations
    }

    pub fn translation_pitch(&self) -> f64 {
        self.translation_pitch
    }

    pub fn rotation_angles(&self) -> &[f64] {
        &self.rotation_angles
    }

    pub fn n_angles(&self) -> usize {
        self.rotation_angles.len()
    }

    pub fn rotation_span(&self) -> f64 {
        self.rotation_span
    }

    pub fn is_full_turn(&self) -> bool {
        (self.rotation_span - TAU).abs() < 1e-9
    }

    /// True when consecutive angles are equally spaced and the schedule
    /// tiles the span (`n * step == span`).
    pub fn is_uniform(&self) -> bool {
        let n = self.rotation_angles.len();
        if n < 2 {
            return true;
        }
        let step = self.rotation_span / n as f64;
        self.rotation_angles
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= UNIFORM_TOL * step.max(1.0))
    }

    /// Lateral ray offsets, centred on the rotation axis:
    /// `t_k = (k - (n - 1) / 2) * translation_pitch`.
    pub fn t_offsets(&self) -> Vec<f64> {
        let centre = (self.n_translations as f64 - 1.0) / 2.0;
        (0..self.n_translations)
            .map(|k| (k as f64 - centre) * self.translation_pitch)
            .collect()
    }

    /// `tan(2 theta) / z`, the angular parallax per millimetre of lateral offset.
    pub fn parallax_slope(&self) -> f64 {
        self.two_theta().tan() / self.det_distance
    }

    /// Lateral displacement at the detector (mm) of a feature offset by `dx` mm.
    pub fn lateral_parallax(&self, dx: f64) -> f64 {
        dx * self.two_theta().tan()
    }

    /// Converts a detector displacement in mm to detector pixels.
    pub fn mm_to_pixels(&self, mm: f64) -> f64 {
        mm / self.pixel_pitch
    }

    /// Converts a detector displacement in mm to an angle in radians.
    pub fn mm_to_angle(&self, mm: f64) -> f64 {
        mm / self.det_distance
    }

    /// Converts an angular offset in radians to detector pixels.
    pub fn angle_to_pixels(&self, rad: f64) -> f64 {
        rad * self.det_distance / self.pixel_pitch
    }

    /// Parallax-induced Bragg-angle offset of the point `(x0, y0)` at rotation `phi`.
    pub fn angular_parallax(&self, x0: f64, y0: f64, phi: f64) -> f64 {
        (x0 * phi.cos() + y0 * phi.sin()) * self.parallax_slope()
    }

    /// Parallax shared by every point on the ray at lateral offset `t`.
    pub fn ray_parallax(&self, t: f64) -> f64 {
        t * self.parallax_slope()
    }

    /// Arithmetic mean of [`angular_parallax`](Self::angular_parallax) over the rotation schedule.
    pub fn mean_parallax(&self, x0: f64, y0: f64) -> f64 {
        let n = self.rotation_angles.len() as f64;
        let (sum_cos, sum_sin) = self
            .rotation_angles
            .iter()
            .fold((0.0, 0.0), |(c, s), &phi| (c + phi.cos(), s + phi.sin()));
        (x0 * sum_cos / n + y0 * sum_sin / n) * self.parallax_slope()
    }

    /// Short hex digest identifying the geometry, recorded in raster headers.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!(
            "theta={:e};z={:e};pixel={:e};nt={};tpitch={:e};span={:e};",
            self.bragg_theta,
            self.det_distance,
            self.pixel_pitch,
            self.n_translations,
            self.translation_pitch,
            self.rotation_span
        ));
        for a in &self.rotation_angles {
            hasher.update(a.to_le_bytes());
        }
        hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// `n` angles `k * span / n`, `k = 0..n`.
pub fn uniform_angles(n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|k| k as f64 * span / n as f64).collect()
}

pub fn deg(rad: f64) -> f64 {
    rad * 180.0 / PI
}

pub fn rad(deg: f64) -> f64 {
    deg * PI / 180.0
}

/// Converts a Bragg-angle offset to lattice strain, `eps = -dtheta / tan(theta)`.
pub fn offset_to_strain(offset: f64, bragg_theta: f64) -> f64 {
    -offset / bragg_theta.tan()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geom(two_theta_deg: f64, n_angles: usize, span: f64) -> ScanGeometry {
        ScanGeometry::uniform(rad(two_theta_deg / 2.0), 800.0, 0.15, 200, 0.005, n_angles, span).unwrap()
    }

    #[test]
    fn lateral_parallax_at_fourteen_degrees() {
        let g = geom(14.0, 200, TAU);
        let dp = g.lateral_parallax(0.5);
        assert_relative_eq!(g.mm_to_angle(dp) * 1e3, 0.156, epsilon = 5e-3);
        assert_relative_eq!(g.mm_to_pixels(dp), 0.831, epsilon = 5e-3);
        assert_eq!(g.lateral_parallax(0.0), 0.0);
    }

    #[test]
    fn lateral_parallax_martensite_321() {
        let g = geom(13.678, 200, TAU);
        let expected = 0.5 * rad(13.678).tan();
        assert_relative_eq!(g.lateral_parallax(0.5), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 0.121_672, max_relative = 1e-4);
    }

    #[test]
    fn angular_parallax_examples() {
        let g = geom(13.678, 200, TAU);
        for phi in [0.0, 0.3, 2.0, 5.9] {
            assert_eq!(g.angular_parallax(0.0, 0.0, phi), 0.0);
        }
        assert!(g.angular_parallax(0.7, 0.0, PI / 2.0).abs() < 1e-18);
        assert_relative_eq!(
            g.angular_parallax(0.5, 0.0, 0.0),
            rad(13.678).tan() * 0.5 / 800.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn mean_parallax_full_turn_vanishes() {
        for n in [2, 3, 4, 17, 200, 360] {
            let g = geom(13.678, n, TAU);
            for &(x, y) in &[(0.5, 0.0), (-0.3, 0.41), (0.0, 1.0)] {
                assert!(g.mean_parallax(x, y).abs() < 1e-18, "n={n}");
            }
        }
    }

    #[test]
    fn mean_parallax_single_angle() {
        let g = ScanGeometry::new(rad(6.839), 800.0, 0.15, 10, 0.01, vec![0.0], 0.1).unwrap();
        assert_eq!(g.mean_parallax(1.0, 0.0), g.angular_parallax(1.0, 0.0, 0.0));
    }

    #[test]
    fn mean_parallax_half_turn_is_biased() {
        let n = 200;
        let g = geom(13.678, n, PI);
        let mean_sin: f64 = (0..n).map(|k| (k as f64 * PI / n as f64).sin()).sum::<f64>() / n as f64;
        let expected = mean_sin * g.parallax_slope();
        assert_relative_eq!(g.mean_parallax(0.0, 1.0), expected, max_relative = 1e-12);
        assert!(expected > 1e-4);
    }

    #[test]
    fn lateral_and_angular_agree() {
        let g = geom(13.678, 8, TAU);
        for dx in [-1.0, -0.2, 0.0, 0.33, 2.0] {
            assert_relative_eq!(
                g.mm_to_angle(g.lateral_parallax(dx)),
                g.angular_parallax(dx, 0.0, 0.0),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn t_offsets_are_centred() {
        let g = geom(14.0, 4, TAU);
        let t = g.t_offsets();
        assert_eq!(t.len(), 200);
        assert_relative_eq!(t[0], -0.4975, epsilon = 1e-12);
        assert_relative_eq!(t[199], 0.4975, epsilon = 1e-12);
        assert_relative_eq!(t[0] + t[199], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_invalid_geometry() {
        assert!(ScanGeometry::uniform(0.0, 800.0, 0.15, 10, 0.01, 4, TAU).is_err());
        assert!(ScanGeometry::uniform(FRAC_PI_4, 800.0, 0.15, 10, 0.01, 4, TAU).is_err());
        assert!(ScanGeometry::uniform(0.1, -1.0, 0.15, 10, 0.01, 4, TAU).is_err());
        assert!(ScanGeometry::uniform(0.1, 800.0, 0.0, 10, 0.01, 4, TAU).is_err());
        assert!(ScanGeometry::uniform(0.1, 800.0, 0.15, 10, 0.0, 4, TAU).is_err());
        assert!(ScanGeometry::new(0.1, 800.0, 0.15, 10, 0.01, vec![0.0, 0.0], PI).is_err());
        assert!(ScanGeometry::new(0.1, 800.0, 0.15, 10, 0.01, vec![0.0, 1.0, 4.0], TAU).is_err());
    }

    #[test]
    fn digest_tracks_geometry() {
        let a = geom(14.0, 10, TAU);
        let b = geom(14.0, 11, TAU);
        assert_eq!(a.digest(), geom(14.0, 10, TAU).digest());
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 16);
    }
}
