//! Sky coordinates and great-circle distance.
//!
//! Positions are equatorial (right ascension / declination in degrees).
//! The pixelization layer works in colatitude/longitude radians, so both
//! representations live here together with the conversions between them
//! and to/from unit 3-vectors (used for averaging positions).

use std::f64::consts::PI;

use thiserror::Error;

/// Arcseconds per radian (180 * 3600 / pi).
pub const ARCSEC_PER_RAD: f64 = 3600.0 * 180.0 / PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CoordinateError {
    #[error("declination {0} out of range [-90, +90]")]
    DecOutOfRange(&'static str),
    #[error("coordinate is not a finite number")]
    NotFinite,
}

/// A point on the celestial sphere: RA in [0, 360), Dec in [-90, +90].
///
/// RA is normalized into range at construction; an out-of-range declination
/// is rejected rather than clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    ra_deg: f64,
    dec_deg: f64,
}

impl SphericalPoint {
    pub fn new(ra_deg: f64, dec_deg: f64) -> Result<Self, CoordinateError> {
        if !ra_deg.is_finite() || !dec_deg.is_finite() {
            return Err(CoordinateError::NotFinite);
        }
        if !(-90.0..=90.0).contains(&dec_deg) {
            return Err(CoordinateError::DecOutOfRange("declination"));
        }
        let mut ra = ra_deg.rem_euclid(360.0);
        // rem_euclid of a tiny negative value can round up to exactly 360.0
        if ra >= 360.0 {
            ra = 0.0;
        }
        Ok(SphericalPoint { ra_deg: ra, dec_deg })
    }

    pub fn ra_deg(&self) -> f64 {
        self.ra_deg
    }

    pub fn dec_deg(&self) -> f64 {
        self.dec_deg
    }

    /// Colatitude/longitude view of this position.
    pub fn to_pointing(&self) -> Pointing {
        Pointing::new(
            (90.0 - self.dec_deg).to_radians(),
            self.ra_deg.to_radians(),
        )
    }

    /// Unit 3-vector (x toward RA=0 on the equator, z toward the north pole).
    pub fn unit_vector(&self) -> [f64; 3] {
        let ra = self.ra_deg.to_radians();
        let dec = self.dec_deg.to_radians();
        let (sra, cra) = ra.sin_cos();
        let (sdec, cdec) = dec.sin_cos();
        [cdec * cra, cdec * sra, sdec]
    }

    /// Position under a (not necessarily unit) 3-vector. The zero vector is
    /// not a direction and is rejected by debug assertion only.
    pub fn from_vector(v: [f64; 3]) -> SphericalPoint {
        let norm_xy = v[0].hypot(v[1]);
        debug_assert!(norm_xy > 0.0 || v[2] != 0.0, "zero vector has no direction");
        let dec = v[2].atan2(norm_xy).to_degrees();
        let mut ra = v[1].atan2(v[0]).to_degrees();
        if ra < 0.0 {
            ra += 360.0;
        }
        if ra >= 360.0 {
            ra = 0.0;
        }
        SphericalPoint {
            ra_deg: ra,
            dec_deg: dec.clamp(-90.0, 90.0),
        }
    }
}

/// Polar angle pair used by the pixelization: theta is colatitude in
/// [0, pi], phi is longitude in [0, 2*pi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pointing {
    theta: f64,
    phi: f64,
}

impl Pointing {
    pub fn new(theta: f64, phi: f64) -> Pointing {
        let mut phi = phi.rem_euclid(2.0 * PI);
        if phi >= 2.0 * PI {
            phi = 0.0;
        }
        Pointing {
            theta: theta.clamp(0.0, PI),
            phi,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn to_spherical(&self) -> SphericalPoint {
        let dec = 90.0 - self.theta.to_degrees();
        let mut ra = self.phi.to_degrees();
        if ra >= 360.0 {
            ra = 0.0;
        }
        SphericalPoint {
            ra_deg: ra,
            dec_deg: dec.clamp(-90.0, 90.0),
        }
    }
}

/// Great-circle separation in arcseconds.
///
/// Haversine form: stable down to sub-milliarcsecond separations, where the
/// arccos of a dot product loses all significance.
pub fn angular_distance_arcsec(a: &SphericalPoint, b: &SphericalPoint) -> f64 {
    let ra1 = a.ra_deg.to_radians();
    let dec1 = a.dec_deg.to_radians();
    let ra2 = b.ra_deg.to_radians();
    let dec2 = b.dec_deg.to_radians();
    let sdd = ((dec2 - dec1) * 0.5).sin();
    let sdr = ((ra2 - ra1) * 0.5).sin();
    let h = sdd * sdd + dec1.cos() * dec2.cos() * sdr * sdr;
    2.0 * h.sqrt().min(1.0).asin() * ARCSEC_PER_RAD
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(ra: f64, dec: f64) -> SphericalPoint {
        SphericalPoint::new(ra, dec).unwrap()
    }

    #[test]
    fn pointing_poles_and_equator() {
        let p = pt(0.0, 90.0).to_pointing();
        assert_eq!(p.theta(), 0.0);
        assert_eq!(p.phi(), 0.0);

        let p = pt(180.0, 0.0).to_pointing();
        assert!((p.theta() - PI / 2.0).abs() < 1e-15);
        assert!((p.phi() - PI).abs() < 1e-15);

        let p = pt(0.0, -90.0).to_pointing();
        assert!((p.theta() - PI).abs() < 1e-15);
        assert_eq!(p.phi(), 0.0);
    }

    #[test]
    fn pointing_roundtrip() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10_000 {
            let p = pt(next() * 360.0, next() * 180.0 - 90.0);
            let q = p.to_pointing().to_spherical();
            assert!((p.ra_deg() - q.ra_deg()).abs() < 1e-12);
            assert!((p.dec_deg() - q.dec_deg()).abs() < 1e-12);
        }
    }

    #[test]
    fn ra_normalization_and_dec_validation() {
        assert_eq!(pt(370.0, 0.0).ra_deg(), 10.0);
        assert_eq!(pt(-10.0, 0.0).ra_deg(), 350.0);
        assert_eq!(pt(-1e-18, 0.0).ra_deg(), 0.0);
        assert!(SphericalPoint::new(10.5, -95.0).is_err());
        assert!(SphericalPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn distance_basics() {
        let a = pt(0.0, 0.0);
        assert_eq!(angular_distance_arcsec(&a, &a), 0.0);
        let d = angular_distance_arcsec(&a, &pt(1.0, 0.0));
        assert!((d - 3600.0).abs() < 1e-9);
        // RA wraparound across 0
        let d = angular_distance_arcsec(&pt(359.9995, 0.0), &pt(0.0005, 0.0));
        assert!((d - 3.6).abs() < 1e-9);
    }

    #[test]
    fn distance_small_separation_stability() {
        // 0.1 mas apart in declination: plain arccos would return garbage
        let a = pt(10.0, 20.0);
        let b = pt(10.0, 20.0 + 0.0001 / 3600.0);
        let d = angular_distance_arcsec(&a, &b);
        assert!((d - 0.0001).abs() < 1e-9, "got {}", d);
    }

    #[test]
    fn distance_symmetry_and_triangle() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..2000 {
            let a = pt(next() * 360.0, next() * 180.0 - 90.0);
            let b = pt(next() * 360.0, next() * 180.0 - 90.0);
            let c = pt(next() * 360.0, next() * 180.0 - 90.0);
            let ab = angular_distance_arcsec(&a, &b);
            let ba = angular_distance_arcsec(&b, &a);
            assert_eq!(ab, ba);
            assert!(ab >= 0.0);
            let ac = angular_distance_arcsec(&a, &c);
            let cb = angular_distance_arcsec(&c, &b);
            assert!(ab <= ac + cb + 1e-9);
        }
    }

    #[test]
    fn unit_vector_roundtrip() {
        for (ra, dec) in [(0.0, 0.0), (123.456, -45.0), (359.9, 89.99), (42.0, -89.99)] {
            let p = pt(ra, dec);
            let q = SphericalPoint::from_vector(p.unit_vector());
            assert!(angular_distance_arcsec(&p, &q) < 1e-9);
        }
    }
}
