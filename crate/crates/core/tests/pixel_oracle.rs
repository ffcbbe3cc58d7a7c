//! Cross-checks the pixelization against an independent reference
//! implementation (cdshealpix), which uses the same nested numbering.

use std::f64::consts::PI;

use cdshealpix::compass_point::MainWind;
use cdshealpix::nested;

use starcat::healpix::{PixelId, Resolution};
use starcat::sphere::Pointing;

/// Reference neighbor in our fixed slot order SW, W, NW, N, NE, E, SE, S.
fn reference_neighbors(depth: u8, pix: u64) -> [i64; 8] {
    let map = nested::get(depth).neighbours(pix, false);
    let slot = |w: MainWind| map.get(w).map(|v| *v as i64).unwrap_or(-1);
    [
        slot(MainWind::SW),
        slot(MainWind::W),
        slot(MainWind::NW),
        slot(MainWind::N),
        slot(MainWind::NE),
        slot(MainWind::E),
        slot(MainWind::SE),
        slot(MainWind::S),
    ]
}

fn lonlat_of(pt: &Pointing) -> (f64, f64) {
    (pt.phi(), PI / 2.0 - pt.theta())
}

#[test]
fn ang2pix_frozen_reference_values() {
    // values computed once with the reference implementation
    let k3 = Resolution::new(3).unwrap();
    assert_eq!(k3.ang2pix(&Pointing::new(0.0, 0.1)), PixelId(63));
    assert_eq!(k3.ang2pix(&Pointing::new(1.0, 1.0)), PixelId(24));
    let k0 = Resolution::new(0).unwrap();
    assert_eq!(k0.ang2pix(&Pointing::new(0.0, 0.1)), PixelId(0));
}

#[test]
fn ang2pix_matches_reference_on_random_points() {
    let mut state = 0xdead_beefu64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let depths = [0u8, 1, 2, 3, 5, 8, 13, 17, 21, 25, 29];
    for i in 0..20_000 {
        let z: f64 = next() * 2.0 - 1.0;
        let phi = next() * 2.0 * PI;
        let theta = z.acos();
        let pt = Pointing::new(theta, phi);
        for &d in &depths {
            let ours = Resolution::new(d as u32).unwrap().ang2pix(&pt);
            let layer = nested::get(d);
            let theirs = layer.hash(phi, PI / 2.0 - theta);
            assert_eq!(ours.0 as u64, theirs, "point {} depth {}", i, d);
        }
    }
}

#[test]
fn pix2ang_matches_reference_exhaustive_low_k() {
    for k in 0..=4u8 {
        let r = Resolution::new(k as u32).unwrap();
        let layer = nested::get(k);
        for p in 0..r.pixel_count() {
            let ours = r.pix2ang(PixelId(p)).unwrap();
            let (lon, lat) = lonlat_of(&ours);
            let (rlon, rlat) = layer.center(p as u64);
            assert!((lon - rlon).abs() < 1e-10, "k={} p={} lon {} vs {}", k, p, lon, rlon);
            assert!((lat - rlat).abs() < 1e-10, "k={} p={} lat {} vs {}", k, p, lat, rlat);
        }
    }
}

#[test]
fn neighbors_match_reference_exhaustive_low_k() {
    for k in 0..=4u8 {
        let r = Resolution::new(k as u32).unwrap();
        for p in 0..r.pixel_count() {
            let ours = r.neighbors(PixelId(p)).unwrap();
            let theirs = reference_neighbors(k, p as u64);
            for i in 0..8 {
                assert_eq!(
                    ours[i].0, theirs[i],
                    "k={} pix={} slot {}: {:?} vs {:?}",
                    k, p, i, ours, theirs
                );
            }
        }
    }
}

#[test]
fn neighbors_match_reference_random_high_k() {
    let mut state = 0x1234_5678u64;
    let mut next_u64 = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        state
    };
    for &k in &[8u8, 13, 18, 29] {
        let r = Resolution::new(k as u32).unwrap();
        for _ in 0..2000 {
            let p = (next_u64() % r.pixel_count() as u64) as i64;
            let ours = r.neighbors(PixelId(p)).unwrap();
            let theirs = reference_neighbors(k, p as u64);
            for i in 0..8 {
                assert_eq!(ours[i].0, theirs[i], "k={} pix={} slot {}", k, p, i);
            }
        }
    }
}

#[test]
fn pix2ang_matches_reference_random_high_k() {
    let mut state = 0xfeed_f00du64;
    let mut next_u64 = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        state
    };
    for &k in &[8u8, 13, 18, 24, 29] {
        let r = Resolution::new(k as u32).unwrap();
        let layer = nested::get(k);
        for _ in 0..2000 {
            let p = (next_u64() % r.pixel_count() as u64) as i64;
            let ours = r.pix2ang(PixelId(p)).unwrap();
            let (lon, lat) = lonlat_of(&ours);
            let (rlon, rlat) = layer.center(p as u64);
            assert!((lon - rlon).abs() < 1e-10, "k={} p={}", k, p);
            assert!((lat - rlat).abs() < 1e-10, "k={} p={}", k, p);
        }
    }
}
