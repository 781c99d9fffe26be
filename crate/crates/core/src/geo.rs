//! Points on the sphere and great-circle geometry.

use serde::{Deserialize, Serialize};

/// Earth radius in kilometers used for every km conversion in the crate.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A location on the unit sphere in geographic coordinates (degrees).
///
/// Latitude lies in `[-90, 90]`, longitude in `[-180, 180)`. The
/// constructor normalizes longitude by wrapping and clamps latitude;
/// normalization is idempotent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        let lat = lat.clamp(-90.0, 90.0);
        let mut lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
        // rem_euclid can return exactly 360.0 - epsilon artifacts; the only
        // boundary case left is +180, which wraps to -180.
        if lon >= 180.0 {
            lon = -180.0;
        }
        GeoPoint { lat, lon }
    }

    /// Unit-sphere embedding: x toward (0N, 0E), z toward the north pole.
    pub fn to_unit_vector(self) -> UnitVec3 {
        let lat = self.lat.to_radians();
        let lon = self.lon.to_radians();
        UnitVec3 {
            x: lat.cos() * lon.cos(),
            y: lat.cos() * lon.sin(),
            z: lat.sin(),
        }
    }
}

/// A point on the unit sphere embedded in R^3; `x^2+y^2+z^2 = 1` within
/// 1e-12 after construction through [`UnitVec3::normalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVec3 {
    pub fn normalize(x: f64, y: f64, z: f64) -> Self {
        let n = (x * x + y * y + z * z).sqrt();
        UnitVec3 {
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn dot(self, o: UnitVec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: UnitVec3) -> (f64, f64, f64) {
        (
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn to_geo_point(self) -> GeoPoint {
        let lat = self.z.clamp(-1.0, 1.0).asin().to_degrees();
        let lon = self.y.atan2(self.x).to_degrees();
        GeoPoint::new(lat, lon)
    }

    /// Central angle to `o` in radians, accurate for all separations
    /// including near-identical and near-antipodal points.
    pub fn angle_to(self, o: UnitVec3) -> f64 {
        let (cx, cy, cz) = self.cross(o);
        let cross_norm = (cx * cx + cy * cy + cz * cz).sqrt();
        cross_norm.atan2(self.dot(o))
    }
}

/// Great-circle distance between two points, in the same unit as `radius`.
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint, radius: f64) -> f64 {
    a.to_unit_vector().angle_to(b.to_unit_vector()) * radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn axis_cases() {
        let v = GeoPoint::new(0.0, 0.0).to_unit_vector();
        assert_relative_eq!(v.x, 1.0, epsilon = 1e-15);
        assert_relative_eq!(v.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(v.z, 0.0, epsilon = 1e-15);

        let p = GeoPoint::new(90.0, 0.0).to_unit_vector();
        assert_relative_eq!(p.z, 1.0, epsilon = 1e-15);
        assert!(p.x.abs() < 1e-15);
    }

    #[test]
    fn forty_five_degrees_closed_form() {
        let v = GeoPoint::new(45.0, 45.0).to_unit_vector();
        assert_relative_eq!(v.x, 0.5, epsilon = 1e-12);
        assert_relative_eq!(v.y, 0.5, epsilon = 1e-12);
        assert_relative_eq!(v.z, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn embedding_round_trips() {
        for &(lat, lon) in &[
            (12.5, -33.0),
            (-89.9, 179.0),
            (0.0, -180.0),
            (67.3, 0.01),
            (-45.0, 135.0),
        ] {
            let p = GeoPoint::new(lat, lon);
            let q = p.to_unit_vector().to_geo_point();
            assert_relative_eq!(p.lat, q.lat, epsilon = 1e-9);
            assert_relative_eq!(p.lon, q.lon, epsilon = 1e-9);
        }
    }

    #[test]
    fn normalization_is_idempotent_and_in_bounds() {
        let p = GeoPoint::new(45.0, 543.0);
        assert!((-180.0..180.0).contains(&p.lon));
        let q = GeoPoint::new(p.lat, p.lon);
        assert_eq!(p, q);
        assert_eq!(GeoPoint::new(0.0, 180.0).lon, -180.0);
    }

    #[test]
    fn distance_identity_and_antipodes() {
        let a = GeoPoint::new(10.0, 20.0);
        assert_eq!(great_circle_distance(a, a, 6371.0), 0.0);

        let b = GeoPoint::new(-10.0, -160.0);
        let d = great_circle_distance(a, b, 6371.0);
        assert_relative_eq!(d, std::f64::consts::PI * 6371.0, epsilon = 1e-6);
    }

    #[test]
    fn quarter_circumference() {
        let d = great_circle_distance(GeoPoint::new(0.0, 0.0), GeoPoint::new(0.0, 90.0), 6371.0);
        assert!((d - 10007.5).abs() < 0.1);
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = crate::rng::stream_rng(7, "geo-metric");
        use rand::Rng;
        for _ in 0..1000 {
            let a = GeoPoint::new(rng.random_range(-90.0..90.0), rng.random_range(-180.0..180.0));
            let b = GeoPoint::new(rng.random_range(-90.0..90.0), rng.random_range(-180.0..180.0));
            let c = GeoPoint::new(rng.random_range(-90.0..90.0), rng.random_range(-180.0..180.0));
            let dab = great_circle_distance(a, b, 1.0);
            let dba = great_circle_distance(b, a, 1.0);
            let dac = great_circle_distance(a, c, 1.0);
            let dcb = great_circle_distance(c, b, 1.0);
            assert!(dab >= 0.0);
            assert_relative_eq!(dab, dba, epsilon = 1e-14);
            assert!(dab <= dac + dcb + 1e-12);
        }
    }
}
