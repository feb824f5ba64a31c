//! Local flat-earth frame: meters east/north of a reference point.

use serde::{Deserialize, Serialize};

pub const METERS_PER_DEG_LAT: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub ref_lat: f64,
    pub ref_lon: f64,
}

impl LocalFrame {
    pub fn new(ref_lat: f64, ref_lon: f64) -> Self {
        LocalFrame { ref_lat, ref_lon }
    }

    fn m_per_deg_lon(&self) -> f64 {
        METERS_PER_DEG_LAT * self.ref_lat.to_radians().cos()
    }

    /// `(east, north)` in meters.
    pub fn to_xy(&self, p: LatLon) -> (f64, f64) {
        (
            (p.lon - self.ref_lon) * self.m_per_deg_lon(),
            (p.lat - self.ref_lat) * METERS_PER_DEG_LAT,
        )
    }

    pub fn to_latlon(&self, x: f64, y: f64) -> LatLon {
        LatLon {
            lat: self.ref_lat + y / METERS_PER_DEG_LAT,
            lon: self.ref_lon + x / self.m_per_deg_lon(),
        }
    }
}

/// Distance from `p` to the segment `a`–`b` (all planar) and the clamped
/// projection parameter in `[0, 1]`.
pub fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    (((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt(), t)
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = LocalFrame::new(30.6, 104.0);
        let p = f.to_latlon(1234.5, -987.25);
        let (x, y) = f.to_xy(p);
        assert!((x - 1234.5).abs() < 1e-8 && (y + 987.25).abs() < 1e-8);
    }

    #[test]
    fn projection_is_clamped() {
        let (d, t) = point_segment_distance((-3.0, 4.0), (0.0, 0.0), (10.0, 0.0));
        assert_eq!(t, 0.0);
        assert!((d - 5.0).abs() < 1e-12);
        let (d, t) = point_segment_distance((4.0, 2.0), (0.0, 0.0), (10.0, 0.0));
        assert!((t - 0.4).abs() < 1e-12 && (d - 2.0).abs() < 1e-12);
    }
}
