//! Planar rectangle geometry for range counting: the signed boundary
//! distance and the shifted categorization threshold.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A rectangle in the plane given by four vertices with `u–v ∥ w–z` and
/// `u–w ∥ v–z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    u: [f64; 2],
    v: [f64; 2],
    w: [f64; 2],
    z: [f64; 2],
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm(a: [f64; 2]) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

impl Rectangle {
    pub fn new(u: [f64; 2], v: [f64; 2], w: [f64; 2], z: [f64; 2]) -> Result<Self> {
        let uv = sub(v, u);
        let wz = sub(z, w);
        let uw = sub(w, u);
        let vz = sub(z, v);
        let (len_uv, len_wz, len_uw, len_vz) = (norm(uv), norm(wz), norm(uw), norm(vz));
        if len_uv == 0.0 || len_wz == 0.0 || len_uw == 0.0 || len_vz == 0.0 {
            return Err(Error::invalid("degenerate rectangle: zero-length edge"));
        }
        let par1 = cross(uv, wz).abs() / (len_uv * len_wz);
        let par2 = cross(uw, vz).abs() / (len_uw * len_vz);
        if par1 > 1e-9 || par2 > 1e-9 {
            return Err(Error::invalid("opposite edges are not parallel"));
        }
        let area = cross(uv, uw).abs();
        if area <= 0.0 {
            return Err(Error::invalid("degenerate rectangle: zero area"));
        }
        Ok(Rectangle { u, v, w, z })
    }

    /// Axis-aligned rectangle with the given center and side lengths.
    pub fn axis_aligned(center: [f64; 2], length: f64, width: f64) -> Result<Self> {
        if !(length > 0.0 && width > 0.0) {
            return Err(Error::invalid("side lengths must be positive"));
        }
        let (hx, hy) = (length / 2.0, width / 2.0);
        Rectangle::new(
            [center[0] - hx, center[1] - hy],
            [center[0] + hx, center[1] - hy],
            [center[0] - hx, center[1] + hy],
            [center[0] + hx, center[1] + hy],
        )
    }

    /// Side lengths `(l, w)` along `u–v` and `u–w`.
    pub fn side_lengths(&self) -> (f64, f64) {
        (norm(sub(self.v, self.u)), norm(sub(self.w, self.u)))
    }

    /// Projection coefficient of `x` onto the line through `p` and `q`,
    /// parameterized as `a·p + (1−a)·q`.
    fn coeff(p: [f64; 2], q: [f64; 2], x: [f64; 2]) -> f64 {
        let pq = sub(p, q);
        let xq = sub(x, q);
        (xq[0] * pq[0] + xq[1] * pq[1]) / (pq[0] * pq[0] + pq[1] * pq[1])
    }

    fn segment_distance(p: [f64; 2], q: [f64; 2], x: [f64; 2]) -> f64 {
        let a = Self::coeff(p, q, x).clamp(0.0, 1.0);
        norm([
            a * p[0] + (1.0 - a) * q[0] - x[0],
            a * p[1] + (1.0 - a) * q[1] - x[1],
        ])
    }

    /// `x` lies inside (or on the boundary of) the rectangle iff its
    /// projection onto each side line falls within that side segment.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let sides = self.sides();
        sides.iter().all(|&(p, q)| {
            let a = Self::coeff(p, q, x);
            (0.0..=1.0).contains(&a)
        })
    }

    fn sides(&self) -> [([f64; 2], [f64; 2]); 4] {
        [
            (self.u, self.v),
            (self.u, self.w),
            (self.v, self.z),
            (self.w, self.z),
        ]
    }

    /// Signed distance to the boundary: negative inside, positive outside.
    /// 1-Lipschitz in `x`.
    pub fn proj(&self, x: [f64; 2]) -> f64 {
        let magnitude = self
            .sides()
            .iter()
            .map(|&(p, q)| Self::segment_distance(p, q, x))
            .fold(f64::INFINITY, f64::min);
        if self.contains(x) {
            -magnitude
        } else {
            magnitude
        }
    }

    /// [`Rectangle::proj`] on a coordinate slice (first two entries).
    pub fn proj_slice(&self, x: &[f64]) -> f64 {
        self.proj([x[0], x[1]])
    }
}

/// Shifted categorization threshold `η(γ) = −aγ` for distance-privatized
/// range counting on an `l × w` rectangle, where `γ` is the noise scale.
///
/// The shift equates the areas of the inner and outer boundary bands where
/// points get miscategorized with constant probability, removing the
/// systematic over-count coming from the outer band's larger volume.
pub fn eta_threshold(gamma: f64, l: f64, w: f64) -> Result<f64> {
    if !(gamma > 0.0 && l > 0.0 && w > 0.0) {
        return Err(Error::invalid("gamma and side lengths must be positive"));
    }
    let s = l + w;
    let eta = if l > 2.0 * gamma && w > 2.0 * gamma {
        -(4.0 * gamma * s - 4.0 * gamma * (s * s - 16.0 * gamma * gamma).sqrt()) / (16.0 * gamma)
    } else {
        -(8.0 * gamma * gamma + 2.0 * gamma * s - 2.0 * gamma * (s * s + 4.0 * l * w).sqrt())
            / (8.0 * gamma)
    };
    Ok(eta)
}

/// Per-user threshold at the Gaussian noise scale of privacy parameter `ρ`:
/// `η(1/√(2ρ))`.
pub fn eta_for_rho(rect: &Rectangle, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::invalid("rho must be positive"));
    }
    let (l, w) = rect.side_lengths();
    eta_threshold(1.0 / (2.0 * rho).sqrt(), l, w)
}
