//! Magnetostatic field of parallel infinite thin conductors and the
//! vehicle/wire frame transforms.
//!
//! Wire frame conventions: x runs along the conductors, z points up, the
//! canonical pair sits at `(±y0, 0)`. A positive current flows toward +x.
//! All fields are in tesla.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum permeability, T·m/A.
pub const MU0: f64 = 4.0e-7 * PI;

/// Points closer than this to a conductor centre are rejected.
pub const SINGULAR_RADIUS: f64 = 1.0e-3;

/// Number of magnetometers on the rig.
pub const SENSOR_COUNT: usize = 4;

/// Flux density vector in tesla. The frame is implied by the call site.
pub type FieldVector = Vector3<f64>;

/// Wrap an angle into (-π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conductor {
    pub offset_y: f64,
    pub offset_z: f64,
    /// Signed current in amperes; positive flows along +x.
    pub current: f64,
}

impl Conductor {
    pub fn new(offset_y: f64, offset_z: f64, current: f64) -> Self {
        Conductor {
            offset_y,
            offset_z,
            current,
        }
    }

    /// `C = I·μ0 / 2π`.
    pub fn prefactor(&self) -> f64 {
        self.current * MU0 / (2.0 * PI)
    }
}

/// A set of conductors parallel to the wire-frame x axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Conductor>", into = "Vec<Conductor>")]
pub struct ConductorLayout {
    conductors: Vec<Conductor>,
}

impl TryFrom<Vec<Conductor>> for ConductorLayout {
    type Error = Error;

    fn try_from(conductors: Vec<Conductor>) -> Result<Self> {
        ConductorLayout::new(conductors)
    }
}

impl From<ConductorLayout> for Vec<Conductor> {
    fn from(layout: ConductorLayout) -> Self {
        layout.conductors
    }
}

impl ConductorLayout {
    pub fn new(conductors: Vec<Conductor>) -> Result<Self> {
        if conductors.is_empty() {
            return Err(Error::Config("layout needs at least one conductor".into()));
        }
        let finite = conductors
            .iter()
            .all(|c| c.offset_y.is_finite() && c.offset_z.is_finite() && c.current.is_finite());
        if !finite {
            return Err(Error::Config("layout contains non-finite values".into()));
        }
        Ok(ConductorLayout { conductors })
    }

    /// Two equal currents at `(-y0, 0)` and `(+y0, 0)`.
    pub fn two_wire(y0: f64, current: f64) -> Result<Self> {
        if !(y0 > 0.0) {
            return Err(Error::Config(format!("half spacing must be positive, got {y0}")));
        }
        ConductorLayout::new(vec![
            Conductor::new(-y0, 0.0, current),
            Conductor::new(y0, 0.0, current),
        ])
    }

    /// Canonical pair plus a return conductor placed relative to the first
    /// wire (the one at `-y0`).
    pub fn with_return(
        y0: f64,
        current: f64,
        return_dy: f64,
        return_dz: f64,
        return_current: f64,
    ) -> Result<Self> {
        let mut layout = ConductorLayout::two_wire(y0, current)?;
        layout
            .conductors
            .push(Conductor::new(-y0 + return_dy, return_dz, return_current));
        Ok(layout)
    }

    pub fn conductors(&self) -> &[Conductor] {
        &self.conductors
    }

    pub fn len(&self) -> usize {
        self.conductors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conductors.is_empty()
    }

    /// `(y0, current)` when this is the symmetric equal-current pair on z = 0.
    pub fn canonical_two_wire(&self) -> Option<(f64, f64)> {
        match self.conductors.as_slice() {
            [a, b] => {
                let y0 = 0.5 * (b.offset_y - a.offset_y).abs();
                let symmetric = (a.offset_y + b.offset_y).abs() <= 1e-12 * y0.max(1.0);
                let level = a.offset_z == 0.0 && b.offset_z == 0.0;
                let equal = (a.current - b.current).abs() <= 1e-12 * a.current.abs();
                (y0 > 0.0 && symmetric && level && equal).then_some((y0, a.current))
            }
            _ => None,
        }
    }

    /// Field at `(y, z)` in the wire frame.
    pub fn field(&self, y: f64, z: f64) -> Result<FieldVector> {
        let mut b = FieldVector::zeros();
        for c in &self.conductors {
            b += single_wire(y - c.offset_y, z - c.offset_z, c.prefactor())?;
        }
        Ok(b)
    }

    /// Distance from `(y, z)` to the nearest conductor centre.
    pub fn clearance(&self, y: f64, z: f64) -> f64 {
        self.conductors
            .iter()
            .map(|c| (y - c.offset_y).hypot(z - c.offset_z))
            .fold(f64::INFINITY, f64::min)
    }
}

fn single_wire(dy: f64, dz: f64, prefactor: f64) -> Result<FieldVector> {
    let r2 = dy * dy + dz * dz;
    if r2 < SINGULAR_RADIUS * SINGULAR_RADIUS {
        return Err(Error::Singular {
            distance: r2.sqrt(),
            min: SINGULAR_RADIUS,
        });
    }
    Ok(FieldVector::new(0.0, -prefactor * dz / r2, prefactor * dy / r2))
}

/// Closed-form field of the canonical pair at `±y0` carrying `current` each.
pub fn field_two_wire(y: f64, z: f64, y0: f64, current: f64) -> Result<FieldVector> {
    let c = current * MU0 / (2.0 * PI);
    let dp = (y + y0) * (y + y0) + z * z;
    let dm = (y - y0) * (y - y0) + z * z;
    let nearest = dp.min(dm);
    if nearest < SINGULAR_RADIUS * SINGULAR_RADIUS {
        return Err(Error::Singular {
            distance: nearest.sqrt(),
            min: SINGULAR_RADIUS,
        });
    }
    Ok(FieldVector::new(
        0.0,
        c * (-z / dp - z / dm),
        c * ((y + y0) / dp + (y - y0) / dm),
    ))
}

/// Superposed field of every conductor in `layout`; `point.x` is ignored.
pub fn field_multi_wire(point: &Vector3<f64>, layout: &ConductorLayout) -> Result<FieldVector> {
    layout.field(point.y, point.z)
}

/// Yaw, pitch and roll in radians, each wrapped into (-π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Attitude {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Attitude {
            yaw: wrap_angle(yaw),
            pitch: wrap_angle(pitch),
            roll: wrap_angle(roll),
        }
    }

    pub fn level(yaw: f64, pitch: f64) -> Self {
        Attitude::new(yaw, pitch, 0.0)
    }

    /// Vehicle-to-wire-frame rotation `R_x(roll)·R_y(pitch)·R_z(yaw)`.
    ///
    /// The elemental matrices are in frame-rotation form, e.g.
    /// `R_z(a) = [[cos a, sin a, 0], [-sin a, cos a, 0], [0, 0, 1]]`, so the
    /// vehicle x axis maps to `(cos a, -sin a, 0)` at zero pitch.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sa, ca) = self.yaw.sin_cos();
        let (sb, cb) = self.pitch.sin_cos();
        let (sg, cg) = self.roll.sin_cos();
        let rz = Matrix3::new(ca, sa, 0.0, -sa, ca, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cb, 0.0, -sb, 0.0, 1.0, 0.0, sb, 0.0, cb);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cg, sg, 0.0, -sg, cg);
        rx * ry * rz
    }
}

/// Rotate a vehicle-frame measurement into the wire frame.
pub fn to_global(measurement: &FieldVector, attitude: &Attitude) -> FieldVector {
    attitude.rotation() * measurement
}

/// Inverse of [`to_global`].
pub fn to_vehicle(field: &FieldVector, attitude: &Attitude) -> FieldVector {
    attitude.rotation().transpose() * field
}

/// Magnetometer mounting positions in the vehicle frame, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; SENSOR_COUNT]", into = "[[f64; 3]; SENSOR_COUNT]")]
pub struct SensorRig {
    positions: [Vector3<f64>; SENSOR_COUNT],
}

impl TryFrom<[[f64; 3]; SENSOR_COUNT]> for SensorRig {
    type Error = Error;

    fn try_from(raw: [[f64; 3]; SENSOR_COUNT]) -> Result<Self> {
        SensorRig::new(raw.map(Vector3::from))
    }
}

impl From<SensorRig> for [[f64; 3]; SENSOR_COUNT] {
    fn from(rig: SensorRig) -> Self {
        rig.positions.map(|p| [p.x, p.y, p.z])
    }
}

impl SensorRig {
    pub fn new(positions: [Vector3<f64>; SENSOR_COUNT]) -> Result<Self> {
        for i in 0..SENSOR_COUNT {
            if !positions[i].iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("sensor {i} position is not finite")));
            }
            for j in i + 1..SENSOR_COUNT {
                if (positions[i] - positions[j]).norm() < 1e-9 {
                    return Err(Error::Config(format!("sensors {i} and {j} coincide")));
                }
            }
        }
        if xz_hull_area(&positions) < 1e-9 {
            return Err(Error::Config(
                "sensor projections onto the vehicle x-z plane are degenerate".into(),
            ));
        }
        Ok(SensorRig { positions })
    }

    pub fn positions(&self) -> &[Vector3<f64>; SENSOR_COUNT] {
        &self.positions
    }

    pub fn position(&self, sensor: usize) -> Vector3<f64> {
        self.positions[sensor]
    }
}

impl Default for SensorRig {
    fn default() -> Self {
        SensorRig::new([
            Vector3::new(0.30, 0.25, 0.08),
            Vector3::new(-0.28, -0.22, 0.06),
            Vector3::new(0.12, -0.30, -0.10),
            Vector3::new(-0.15, 0.28, -0.07),
        ])
        .expect("default rig is valid")
    }
}

/// Largest triangle area among the x-z projections; zero iff collinear.
fn xz_hull_area(points: &[Vector3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            for k in j + 1..points.len() {
                let (a, b, c) = (points[i], points[j], points[k]);
                let area = 0.5 * ((b.x - a.x) * (c.z - a.z) - (c.x - a.x) * (b.z - a.z)).abs();
                best = best.max(area);
            }
        }
    }
    best
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Biot-Savart field of finite straight conductors spanning
/// `x ∈ [-half_length, half_length]`, by numerical quadrature of
/// `μ0 I / 4π · dl × r / |r|³`.
///
/// The integration range is split into panels that grow geometrically away
/// from the foot of the perpendicular, each integrated with 16-point
/// Gauss-Legendre. Used as a model-mismatch generator and as the reference
/// for the closed form.
pub fn biot_savart_segments(
    point: &Vector3<f64>,
    layout: &ConductorLayout,
    half_length: f64,
) -> Result<FieldVector> {
    if !(half_length > 0.0) {
        return Err(Error::InvalidInput("segment half length must be positive".into()));
    }
    let rule = gauss_legendre(16);
    let mut total = FieldVector::zeros();
    for c in layout.conductors() {
        let d = (point.y - c.offset_y).hypot(point.z - c.offset_z);
        if d < SINGULAR_RADIUS {
            return Err(Error::Singular {
                distance: d,
                min: SINGULAR_RADIUS,
            });
        }
        let k = MU0 * c.current / (4.0 * PI);
        let dl = Vector3::x();
        let integrand = |x: f64| -> FieldVector {
            let r = point - Vector3::new(x, c.offset_y, c.offset_z);
            let n = r.norm();
            dl.cross(&r) / (n * n * n)
        };
        let panel = |a: f64, b: f64| -> FieldVector {
            let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
            rule.iter()
                .fold(FieldVector::zeros(), |acc, &(xi, w)| acc + integrand(m + h * xi) * (w * h))
        };
        let peak = point.x.clamp(-half_length, half_length);
        let mut sum = FieldVector::zeros();
        // Outward from the peak on both sides.
        for dir in [-1.0, 1.0] {
            let end = if dir > 0.0 { half_length } else { -half_length };
            let mut lo = peak;
            let mut width = 0.25 * d;
            while (end - lo) * dir > 0.0 {
                let hi = if (end - (lo + dir * width)) * dir > 0.0 {
                    lo + dir * width
                } else {
                    end
                };
                sum += if dir > 0.0 { panel(lo, hi) } else { panel(hi, lo) };
                lo = hi;
                width *= 2.0;
            }
        }
        total += sum * k;
    }
    Ok(total)
}
