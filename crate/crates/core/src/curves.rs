//! Sampled diffraction curves and their moments.
//!
//! Moments use the rectangle rule on a uniform, zero-centred grid of
//! Bragg-angle offsets. The zeroth moment is the integrated intensity, the raw
//! first moment is the intensity-weighted offset, and the normalized first
//! moment is the centroid. Raw moments are linear in the curve; the centroid
//! is not.

use std::ops::Add;

use crate::error::{Error, Result};

/// Default number of offset samples.
pub const DEFAULT_SAMPLES: usize = 257;
/// Default half span of the offset grid (rad).
pub const DEFAULT_HALF_SPAN: f64 = 5e-3;
/// Default degeneracy floor, relative to peak intensity times grid span.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Uniformly spaced, symmetric grid of Bragg-angle offsets with an exact zero sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    offsets: Vec<f64>,
    step: f64,
}

impl AngleGrid {
    /// `samples` must be odd and at least 3; offsets run over `[-half_span, half_span]`.
    pub fn new(samples: usize, half_span: f64) -> Result<Self> {
        if samples < 3 || samples.is_multiple_of(2) {
            return Err(Error::InvalidAngleGrid(format!(
                "sample count {samples} must be odd and >= 3"
            )));
        }
        if !(half_span > 0.0 && half_span.is_finite()) {
            return Err(Error::InvalidAngleGrid(format!(
                "half span {half_span} must be positive"
            )));
        }
        let half = (samples / 2) as i64;
        let step = half_span / half as f64;
        // k * step keeps +-pairs exact negatives of each other.
        let offsets = (-half..=half).map(|k| k as f64 * step).collect();
        Ok(AngleGrid { offsets, step })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn half_span(&self) -> f64 {
        self.offsets[self.offsets.len() - 1]
    }

    /// Full width covered by the rectangle rule, `len * step`.
    pub fn span(&self) -> f64 {
        self.offsets.len() as f64 * self.step
    }

    /// True if a peak at `center` with standard deviation `width` stays at least
    /// three widths inside the grid.
    pub fn contains_peak(&self, center: f64, width: f64) -> bool {
        center.abs() + 3.0 * width <= self.half_span()
    }
}

impl Default for AngleGrid {
    fn default() -> Self {
        AngleGrid::new(DEFAULT_SAMPLES, DEFAULT_HALF_SPAN).expect("default grid is valid")
    }
}

/// Intensity sampled on an [`AngleGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiffractionCurve {
    grid: AngleGrid,
    intensity: Vec<f64>,
}

impl DiffractionCurve {
    pub fn new(grid: AngleGrid, intensity: Vec<f64>) -> Result<Self> {
        if intensity.len() != grid.len() {
            return Err(Error::InvalidAngleGrid(format!(
                "{} intensity samples for a {}-sample grid",
                intensity.len(),
                grid.len()
            )));
        }
        if intensity.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidPeak("intensity must be finite and non-negative".into()));
        }
        Ok(DiffractionCurve { grid, intensity })
    }

    pub fn zeros(grid: AngleGrid) -> Self {
        let n = grid.len();
        DiffractionCurve {
            grid,
            intensity: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn peak(&self) -> f64 {
        self.intensity.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies the intensity by `k >= 0`.
    pub fn scaled(&self, k: f64) -> Self {
        assert!(k >= 0.0, "curve scale factor must be non-negative");
        DiffractionCurve {
            grid: self.grid.clone(),
            intensity: self.intensity.iter().map(|v| v * k).collect(),
        }
    }

    /// Adds a Gaussian of given centre, standard deviation and amplitude in place.
    pub(crate) fn add_gaussian(&mut self, center: f64, width: f64, amplitude: f64) {
        let inv = 1.0 / (2.0 * width * width);
        for (v, &x) in self.intensity.iter_mut().zip(&self.grid.offsets) {
            let d = x - center;
            *v += amplitude * (-d * d * inv).exp();
        }
    }

    /// Two-column `offset intensity` text dump.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# dtheta_rad intensity\n");
        for (x, v) in self.grid.offsets.iter().zip(&self.intensity) {
            out.push_str(&format!("{x:.9e} {v:.9e}\n"));
        }
        out
    }
}

impl Add for &DiffractionCurve {
    type Output = DiffractionCurve;

    fn add(self, rhs: &DiffractionCurve) -> DiffractionCurve {
        assert_eq!(self.grid, rhs.grid, "curves must share one angle grid");
        DiffractionCurve {
            grid: self.grid.clone(),
            intensity: self.intensity.iter().zip(&rhs.intensity).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Zeroth moment: integrated intensity.
pub fn moment0(c: &DiffractionCurve) -> f64 {
    c.intensity.iter().sum::<f64>() * c.grid.step
}

/// Raw (un-normalized) first moment.
pub fn moment1_raw(c: &DiffractionCurve) -> f64 {
    c.grid.offsets.iter().zip(&c.intensity).map(|(x, v)| x * v).sum::<f64>() * c.grid.step
}

/// Normalized first moment (centroid) with the default degeneracy floor.
pub fn moment1(c: &DiffractionCurve) -> Result<f64> {
    moment1_with_floor(c, DEFAULT_FLOOR)
}

/// Normalized first moment; fails when the zeroth moment does not exceed
/// `rel_floor * peak * span`.
pub fn moment1_with_floor(c: &DiffractionCurve, rel_floor: f64) -> Result<f64> {
    let m0 = moment0(c);
    let floor = rel_floor * c.peak() * c.grid.span();
    if !(m0 > floor) {
        return Err(Error::DegenerateCurve { moment0: m0, floor });
    }
    Ok(moment1_raw(c) / m0)
}

/// Gaussian line `amplitude * exp(-(dtheta - center)^2 / (2 width^2))` sampled on `grid`.
///
/// A peak that comes within three widths of the grid edge is still returned,
/// but logged: its moments are biased by the truncation.
pub fn make_peak(grid: &AngleGrid, center: f64, width: f64, amplitude: f64) -> Result<DiffractionCurve> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidPeak(format!("width {width} must be positive")));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidPeak(format!(
            "amplitude {amplitude} must be non-negative"
        )));
    }
    if !center.is_finite() {
        return Err(Error::InvalidPeak("centre must be finite".into()));
    }
    if !grid.contains_peak(center, width) {
        log::warn!(
            "{}",
            Error::TruncatedPeak {
                center,
                width,
                half_span: grid.half_span()
            }
        );
    }
    let mut c = DiffractionCurve::zeros(grid.clone());
    c.add_gaussian(center, width, amplitude);
    Ok(c)
}

/// Like [`make_peak`] but refuses truncated peaks.
pub fn make_peak_strict(grid: &AngleGrid, center: f64, width: f64, amplitude: f64) -> Result<DiffractionCurve> {
    if width > 0.0 && !grid.contains_peak(center, width) {
        return Err(Error::TruncatedPeak {
            center,
            width,
            half_span: grid.half_span(),
        });
    }
    make_peak(grid, center, width, amplitude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Composite Simpson quadrature of `f` on `[a, b]`, the oracle for the
    /// rectangle-rule moments.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    fn gauss(mu: f64, sigma: f64) -> impl Fn(f64) -> f64 {
        move |x| (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp()
    }

    #[test]
    fn grid_is_symmetric_with_zero() {
        let g = AngleGrid::default();
        assert_eq!(g.len(), 257);
        let o = g.offsets();
        assert_eq!(o[128], 0.0);
        for k in 0..128 {
            assert_eq!(o[k], -o[256 - k]);
        }
        assert_relative_eq!(g.half_span(), 5e-3, max_relative = 1e-15);
        assert!(AngleGrid::new(256, 1.0).is_err());
        assert!(AngleGrid::new(1, 1.0).is_err());
        assert!(AngleGrid::new(11, 0.0).is_err());
    }

    #[test]
    fn moment0_examples() {
        let g = AngleGrid::new(101, 1e-3).unwrap();
        assert_eq!(moment0(&DiffractionCurve::zeros(g.clone())), 0.0);
        let ones = DiffractionCurve::new(g.clone(), vec![1.0; 101]).unwrap();
        assert_relative_eq!(moment0(&ones), g.span(), max_relative = 1e-14);

        let step = g.step();
        let sigma = 5.0 * step;
        let c = make_peak(&g, 0.0, sigma, 1.0).unwrap();
        let oracle = simpson(gauss(0.0, sigma), -1e-3, 1e-3, 20_000);
        assert_relative_eq!(oracle, sigma * (2.0 * PI).sqrt(), max_relative = 1e-9);
        assert_relative_eq!(moment0(&c), oracle, max_relative = 1e-9);
    }

    #[test]
    fn moment1_raw_examples() {
        let g = AngleGrid::new(101, 1e-3).unwrap();
        let c = make_peak(&g, 0.0, 4e-5, 2.0).unwrap();
        assert!(moment1_raw(&c).abs() < 1e-20);

        let mut v = vec![0.0; 101];
        v[73] = 3.5;
        let delta = DiffractionCurve::new(g.clone(), v).unwrap();
        assert_relative_eq!(
            moment1_raw(&delta),
            g.offsets()[73] * 3.5 * g.step(),
            max_relative = 1e-15
        );

        let mu = 2e-4;
        let sigma = 5e-5;
        let c = make_peak(&g, mu, sigma, 1.0).unwrap();
        let m1_oracle = simpson(|x| x * gauss(mu, sigma)(x), -1e-3, 1e-3, 20_000);
        let m0_oracle = simpson(gauss(mu, sigma), -1e-3, 1e-3, 20_000);
        assert_relative_eq!(moment1_raw(&c), m1_oracle, max_relative = 1e-9);
        assert_relative_eq!(moment1_raw(&c), mu * moment0(&c), max_relative = 1e-9);
        assert_relative_eq!(m1_oracle / m0_oracle, mu, max_relative = 1e-9);
    }

    #[test]
    fn moment1_examples() {
        let g = AngleGrid::default();
        let c = make_peak(&g, 0.0, 2e-4, 1.0).unwrap();
        assert!(moment1(&c).unwrap().abs() < 1e-18);
        let c = make_peak(&g, 1e-4, 2e-4, 1.0).unwrap();
        assert_relative_eq!(moment1(&c).unwrap(), 1e-4, max_relative = 1e-9);
        assert!(matches!(
            moment1(&DiffractionCurve::zeros(g)),
            Err(Error::DegenerateCurve { .. })
        ));
    }

    #[test]
    fn make_peak_examples() {
        let g = AngleGrid::default();
        let a = 7e-4;
        let plus = make_peak(&g, a, 1.5e-4, 1.0).unwrap();
        let minus = make_peak(&g, -a, 1.5e-4, 1.0).unwrap();
        assert!(moment1(&(&plus + &minus)).unwrap().abs() < 1e-18);

        let b = 3.3e-4;
        let shifted = make_peak(&g, a + b, 1.5e-4, 1.0).unwrap();
        assert_relative_eq!(moment1(&shifted).unwrap(), a + b, max_relative = 1e-9);

        assert!(make_peak(&g, 0.0, 0.0, 1.0).is_err());
        assert!(make_peak(&g, 0.0, 1e-4, -1.0).is_err());
        assert!(make_peak(&g, 4.9e-3, 1e-4, 1.0).is_ok());
        assert!(matches!(
            make_peak_strict(&g, 4.9e-3, 1e-4, 1.0),
            Err(Error::TruncatedPeak { .. })
        ));
    }

    #[test]
    fn raw_moments_add_normalized_do_not() {
        let g = AngleGrid::default();
        let c1 = make_peak(&g, 5e-4, 1e-4, 1.0).unwrap();
        let c2 = make_peak(&g, -2e-4, 2e-4, 3.0).unwrap();
        let sum = &c1 + &c2;
        assert_relative_eq!(
            moment1_raw(&sum),
            moment1_raw(&c1) + moment1_raw(&c2),
            max_relative = 1e-12
        );
        let m_sum = moment1(&sum).unwrap();
        let m_parts = moment1(&c1).unwrap() + moment1(&c2).unwrap();
        assert!((m_sum - m_parts).abs() > 1e-5);
    }

    #[test]
    fn text_dump_has_two_columns() {
        let g = AngleGrid::new(5, 1e-3).unwrap();
        let c = make_peak(&g, 0.0, 1e-3, 1.0).unwrap();
        let txt = c.to_text();
        let rows: Vec<_> = txt.lines().skip(1).collect();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.split_whitespace().count() == 2));
    }
}
