//! Twin-IRS layout, steering phases and the design-rule checks.
//!
//! IRS1 local frame: the array spans the plane of its two orientation axes,
//! boresight is `axis_h x axis_w` (with the default axes x and z this is +y).
//! A direction `(az, el)` maps to the unit vector
//! `(sin az cos el, cos az cos el, sin el)` in that frame.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal propagation speed; λ = 5 mm at 60 GHz.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid array configuration: {0}")]
    InvalidArray(String),
    #[error("IRS2 element {index} lies behind the IRS1 plane")]
    BehindArray { index: usize },
    #[error("direction ({az}, {el}) is outside the front half-space")]
    InvalidDirection { az: f64, el: f64 },
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Azimuth / elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub az: f64,
    pub el: f64,
}

impl Direction {
    pub fn new(az: f64, el: f64) -> Self {
        Self { az, el }
    }

    pub fn broadside() -> Self {
        Self { az: 0.0, el: 0.0 }
    }

    /// Unit vector in the array's local frame.
    pub fn unit_local(self) -> Vec3 {
        let (sa, ca) = self.az.sin_cos();
        let (se, ce) = self.el.sin_cos();
        [sa * ce, ca * ce, se]
    }

    /// Errors unless both angles lie strictly inside the front half-space.
    pub fn validate(self) -> Result<(), GeometryError> {
        if self.az.abs() < PI / 2.0 && self.el.abs() < PI / 2.0 {
            Ok(())
        } else {
            Err(GeometryError::InvalidDirection {
                az: self.az,
                el: self.el,
            })
        }
    }
}

/// Planar rectangular array of `n_h x n_w` elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_h: usize,
    pub n_w: usize,
    /// Element spacing in meters.
    pub spacing: f64,
    pub carrier_freq: f64,
    pub center: Vec3,
    /// In-plane axis along which columns advance.
    pub axis_w: Vec3,
    /// In-plane axis along which rows advance.
    pub axis_h: Vec3,
}

impl ArrayConfig {
    pub fn new(n_h: usize, n_w: usize, spacing: f64, carrier_freq: f64) -> Self {
        Self {
            n_h,
            n_w,
            spacing,
            carrier_freq,
            center: [0.0; 3],
            axis_w: [1.0, 0.0, 0.0],
            axis_h: [0.0, 0.0, 1.0],
        }
    }

    pub fn with_center(mut self, center: Vec3) -> Self {
        self.center = center;
        self
    }

    pub fn with_axes(mut self, axis_w: Vec3, axis_h: Vec3) -> Self {
        self.axis_w = axis_w;
        self.axis_h = axis_h;
        self
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.n_h == 0 || self.n_w == 0 {
            return Err(GeometryError::InvalidArray("element counts must be >= 1".into()));
        }
        if !(self.spacing > 0.0) || !(self.carrier_freq > 0.0) {
            return Err(GeometryError::InvalidArray(
                "spacing and carrier frequency must be positive".into(),
            ));
        }
        let (nw, nh) = (norm(self.axis_w), norm(self.axis_h));
        if (nw - 1.0).abs() > 1e-12 || (nh - 1.0).abs() > 1e-12 {
            return Err(GeometryError::InvalidArray("orientation axes must be unit-norm".into()));
        }
        if dot(self.axis_w, self.axis_h).abs() > 1e-12 {
            return Err(GeometryError::InvalidArray("orientation axes must be orthogonal".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_h * self.n_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Largest physical side, `max(n_h, n_w) * spacing`.
    pub fn side_length(&self) -> f64 {
        self.n_h.max(self.n_w) as f64 * self.spacing
    }

    pub fn boresight(&self) -> Vec3 {
        cross(self.axis_h, self.axis_w)
    }

    /// Local direction to a global unit vector.
    pub fn to_global(&self, dir: Direction) -> Vec3 {
        let u = dir.unit_local();
        let n = self.boresight();
        [
            u[0] * self.axis_w[0] + u[1] * n[0] + u[2] * self.axis_h[0],
            u[0] * self.axis_w[1] + u[1] * n[1] + u[2] * self.axis_h[1],
            u[0] * self.axis_w[2] + u[1] * n[2] + u[2] * self.axis_h[2],
        ]
    }

    /// Wavenumber `2 pi f / c`.
    pub fn wavenumber(&self) -> f64 {
        TAU * self.carrier_freq / SPEED_OF_LIGHT
    }
}

/// Row-major element positions, centered on `cfg.center`.
pub fn element_positions(cfg: &ArrayConfig) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(cfg.len());
    let off_h = (cfg.n_h as f64 - 1.0) / 2.0;
    let off_w = (cfg.n_w as f64 - 1.0) / 2.0;
    for r in 0..cfg.n_h {
        let a = (r as f64 - off_h) * cfg.spacing;
        for c in 0..cfg.n_w {
            let b = (c as f64 - off_w) * cfg.spacing;
            out.push([
                cfg.center[0] + b * cfg.axis_w[0] + a * cfg.axis_h[0],
                cfg.center[1] + b * cfg.axis_w[1] + a * cfg.axis_h[1],
                cfg.center[2] + b * cfg.axis_w[2] + a * cfg.axis_h[2],
            ]);
        }
    }
    out
}

/// Per-element phases `2 pi f (P_m . u) / c mod 2 pi` steering the array
/// towards `dir`.
pub fn steering_phases(cfg: &ArrayConfig, dir: Direction) -> Vec<f64> {
    let u = cfg.to_global(dir);
    let k = cfg.wavenumber();
    element_positions(cfg)
        .into_iter()
        .map(|p| (k * dot(p, u)).rem_euclid(TAU))
        .collect()
}

/// Sub-array layout of one reflecting surface in IRS2 (`1 x 1` outside
/// Scheme 3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsLayout {
    pub n_h: usize,
    pub n_w: usize,
    pub spacing: f64,
}

impl RsLayout {
    pub fn single() -> Self {
        Self {
            n_h: 1,
            n_w: 1,
            spacing: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.n_h * self.n_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Both surfaces plus the derived IRS2 element directions as seen from the
/// IRS1 center.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    pub irs1: ArrayConfig,
    /// Grid of IRS2 reflecting surfaces (single elements outside Scheme 3).
    pub irs2: ArrayConfig,
    pub rs: RsLayout,
    pub distance_d: f64,
    /// Physical width of one IRS2 element (or RS).
    pub element_width: f64,
    /// One entry per IRS2 element, RS-major.
    pub directions: Vec<Direction>,
    /// One entry per RS, pointing at its centroid.
    pub group_directions: Vec<Direction>,
}

impl LinkGeometry {
    /// Builds the link; IRS2 is placed by its own `center` and the distance is
    /// taken between the two centers.
    pub fn new(
        irs1: ArrayConfig,
        irs2: ArrayConfig,
        rs: RsLayout,
        element_width: f64,
    ) -> Result<Self, GeometryError> {
        irs1.validate()?;
        irs2.validate()?;
        if rs.is_empty() {
            return Err(GeometryError::InvalidArray("RS layout must be non-empty".into()));
        }
        let distance_d = norm(sub(irs2.center, irs1.center));
        if !(distance_d > 0.0) {
            return Err(GeometryError::InvalidArray("IRS centers coincide".into()));
        }
        let mut link = Self {
            irs1,
            irs2,
            rs,
            distance_d,
            element_width,
            directions: Vec::new(),
            group_directions: Vec::new(),
        };
        link.directions = target_directions(&link)?;
        link.group_directions = link
            .group_centers()
            .into_iter()
            .map(|p| direction_to(&link.irs1, p))
            .collect::<Result<_, _>>()
            .map_err(|_| GeometryError::BehindArray { index: 0 })?;
        Ok(link)
    }

    /// The evaluation layout: 100x100 IRS1 at 2.5 mm and 60 GHz, 8x8 IRS2 at
    /// 0.6 m pitch, 30 m away on boresight.
    pub fn reference() -> Self {
        let irs1 = ArrayConfig::new(100, 100, 2.5e-3, 60e9);
        let irs2 = ArrayConfig::new(8, 8, 0.6, 60e9).with_center([0.0, 30.0, 0.0]);
        Self::new(irs1, irs2, RsLayout::single(), 0.4).expect("reference geometry is valid")
    }

    /// Number of IRS2 reflecting surfaces (index targets).
    pub fn n_groups(&self) -> usize {
        self.irs2.len()
    }

    /// Number of IRS2 elements.
    pub fn n_elements(&self) -> usize {
        self.irs2.len() * self.rs.len()
    }

    pub fn group_centers(&self) -> Vec<Vec3> {
        element_positions(&self.irs2)
    }

    /// IRS2 element positions, RS-major (all elements of RS 0 first).
    pub fn irs2_element_positions(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.n_elements());
        for c in self.group_centers() {
            let sub_cfg = ArrayConfig {
                n_h: self.rs.n_h,
                n_w: self.rs.n_w,
                spacing: self.rs.spacing.max(f64::MIN_POSITIVE),
                carrier_freq: self.irs2.carrier_freq,
                center: c,
                axis_w: self.irs2.axis_w,
                axis_h: self.irs2.axis_h,
            };
            out.extend(element_positions(&sub_cfg));
        }
        out
    }

    /// Element index range of RS `q`.
    pub fn group_span(&self, q: usize) -> std::ops::Range<usize> {
        let n3 = self.rs.len();
        q * n3..(q + 1) * n3
    }
}

fn direction_to(irs1: &ArrayConfig, p: Vec3) -> Result<Direction, ()> {
    let r = sub(p, irs1.center);
    let n = irs1.boresight();
    let (x, y, z) = (dot(r, irs1.axis_w), dot(r, n), dot(r, irs1.axis_h));
    if y <= 0.0 {
        return Err(());
    }
    let len = (x * x + y * y + z * z).sqrt();
    Ok(Direction {
        az: x.atan2(y),
        el: (z / len).asin(),
    })
}

/// Azimuth/elevation of every IRS2 element relative to the IRS1 center, in
/// IRS2 element order.
pub fn target_directions(link: &LinkGeometry) -> Result<Vec<Direction>, GeometryError> {
    link.irs2_element_positions()
        .into_iter()
        .enumerate()
        .map(|(index, p)| {
            direction_to(&link.irs1, p).map_err(|_| GeometryError::BehindArray { index })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleStatus {
    Pass,
    Fail,
    Info,
}

/// Outcome of one design rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCheck {
    pub rule: u8,
    pub name: &'static str,
    pub status: RuleStatus,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl RuleCheck {
    pub fn is_failure(&self) -> bool {
        self.status == RuleStatus::Fail
    }
}

/// Beam width `50 lambda / L` degrees, returned in radians.
pub fn beam_width(cfg: &ArrayConfig) -> f64 {
    (50.0 * cfg.wavelength() / cfg.side_length()).to_radians()
}

/// Evaluates the five layout rules. Failures are reported, never raised.
pub fn validate_design(link: &LinkGeometry) -> Vec<RuleCheck> {
    let lambda = link.irs1.wavelength();
    let l = link.irs1.side_length();
    let d = link.distance_d;
    let theta_bw = beam_width(&link.irs1);
    let footprint = d * theta_bw;
    let pass = |ok: bool| if ok { RuleStatus::Pass } else { RuleStatus::Fail };

    let far_field = 2.0 * l * l / lambda;
    let width_ok = link.element_width < footprint;
    let pitch_ok = link.irs2.spacing > footprint;
    let index_bits = usize::BITS - 1 - link.n_groups().leading_zeros();

    vec![
        RuleCheck {
            rule: 1,
            name: "irs1_spacing",
            status: pass(link.irs1.spacing <= lambda / 2.0 * (1.0 + 1e-12)),
            measured: link.irs1.spacing,
            threshold: lambda / 2.0,
            detail: format!("d1 = {:.4} mm, lambda/2 = {:.4} mm", link.irs1.spacing * 1e3, lambda * 5e2),
        },
        RuleCheck {
            rule: 2,
            name: "far_field",
            status: pass(d > far_field),
            measured: d,
            threshold: far_field,
            detail: format!("D = {d:.3} m must exceed 2L^2/lambda = {far_field:.3} m (L = {l:.4} m)"),
        },
        RuleCheck {
            rule: 3,
            name: "irs2_spacing",
            status: pass(width_ok && pitch_ok),
            measured: link.irs2.spacing,
            threshold: footprint,
            detail: format!(
                "beam footprint D*theta_BW = {footprint:.4} m at the configured carrier; \
                 d_w = {:.4} m ({}), d2 = {:.4} m ({})",
                link.element_width,
                if width_ok { "ok" } else { "too wide" },
                link.irs2.spacing,
                if pitch_ok { "ok" } else { "too close" },
            ),
        },
        RuleCheck {
            rule: 4,
            name: "irs1_aperture",
            status: RuleStatus::Info,
            measured: l,
            threshold: theta_bw,
            detail: format!(
                "N1 = {}, L = {l:.4} m, theta_BW = {:.4} deg",
                link.irs1.len(),
                theta_bw.to_degrees()
            ),
        },
        RuleCheck {
            rule: 5,
            name: "irs2_size",
            status: RuleStatus::Info,
            measured: link.n_groups() as f64,
            threshold: f64::from(index_bits),
            detail: format!(
                "N2 = {} selectable surfaces ({} elements), {index_bits} index bits per channel use",
                link.n_groups(),
                link.n_elements()
            ),
        },
    ]
}
