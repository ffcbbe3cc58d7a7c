//! Equal-area hierarchical sphere pixelization, nested scheme.
//!
//! The sphere is split into 12 base diamonds; each is subdivided into
//! `nside * nside` pixels with `nside = 2^k`, `k` in `[0, 29]`. All pixels at
//! one resolution have equal area `4*pi / (12*4^k)`. Pixel indices follow the
//! nested numbering: within a base diamond the (i, j) grid position is
//! bit-interleaved (z-order), so the parent of a pixel one level up is its
//! index shifted right by two bits. That shift/prefix property is what the
//! chunking layer relies on, and the 8-slot neighbor lookup is what makes
//! overlap rings cheap to build.
//!
//! Geometry follows the standard equal-area projection: a cylindrical
//! equal-area band for |z| <= 2/3 and Collignon-type polar caps outside it.
//! Conversions near the poles switch to sin(theta)-based forms so positions
//! survive resolutions down to sub-milliarcsecond pixels (k = 29).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use thiserror::Error;

use crate::sphere::{Pointing, ARCSEC_PER_RAD};

/// Largest supported resolution exponent (nside = 2^29; ids fit in i64).
pub const MAX_K: u8 = 29;

const TRANSITION_Z: f64 = 2.0 / 3.0;

/// Ring offset of the northernmost corner of each base diamond, in units of
/// nside: 2 for polar-north diamonds, 3 equatorial, 4 polar-south.
const JRLL: [i64; 12] = [2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4];
/// Longitude offset of each base diamond center, in units of pi/4.
const JPLL: [i64; 12] = [1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PixelError {
    #[error("resolution exponent {0} out of range [0, 29]")]
    InvalidResolution(u32),
    #[error("pixel id {id} invalid at resolution k={k}")]
    InvalidPixel { id: i64, k: u8 },
    #[error("resolution pair invalid: k_hi={hi} < k_lo={lo}")]
    InvalidResolutionPair { hi: u8, lo: u8 },
}

/// Pixelization resolution: exponent `k` with `nside = 2^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Resolution {
    k: u8,
}

impl Resolution {
    pub fn new(k: u32) -> Result<Resolution, PixelError> {
        if k > MAX_K as u32 {
            return Err(PixelError::InvalidResolution(k));
        }
        Ok(Resolution { k: k as u8 })
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn nside(&self) -> i64 {
        1i64 << self.k
    }

    /// Total number of pixels on the sphere: 12 * 4^k.
    pub fn pixel_count(&self) -> i64 {
        12i64 << (2 * self.k)
    }

    /// Square root of the (exact, equal) pixel area, in arcseconds: the
    /// usual characteristic width quoted for a grid resolution.
    pub fn mean_pixel_width_arcsec(&self) -> f64 {
        (4.0 * PI / self.pixel_count() as f64).sqrt() * ARCSEC_PER_RAD
    }

    pub fn contains(&self, pix: PixelId) -> bool {
        (0..self.pixel_count()).contains(&pix.0)
    }

    fn check(&self, pix: PixelId) -> Result<(), PixelError> {
        if self.contains(pix) {
            Ok(())
        } else {
            Err(PixelError::InvalidPixel { id: pix.0, k: self.k })
        }
    }

    /// Nested-scheme pixel containing the given direction.
    pub fn ang2pix(&self, pt: &Pointing) -> PixelId {
        let nside = self.nside();
        let z = pt.theta().cos();
        let za = z.abs();
        // longitude in [0, 4) quarter-turns
        let mut tt = pt.phi() * (2.0 / PI);
        if !(0.0..4.0).contains(&tt) {
            tt = tt.rem_euclid(4.0);
            if tt >= 4.0 {
                tt = 0.0;
            }
        }

        let (face, ix, iy) = if za <= TRANSITION_Z {
            // equatorial band: straight lines of constant i+j / i-j
            let temp1 = nside as f64 * (0.5 + tt);
            let temp2 = nside as f64 * (z * 0.75);
            let jp = (temp1 - temp2) as i64; // ascending edge line
            let jm = (temp1 + temp2) as i64; // descending edge line
            let ifp = jp >> self.k;
            let ifm = jm >> self.k;
            let face = if ifp == ifm {
                (ifp | 4) & 7
            } else if ifp < ifm {
                ifp
            } else {
                ifm + 8
            };
            let ix = jm & (nside - 1);
            let iy = nside - 1 - (jp & (nside - 1));
            (face, ix, iy)
        } else {
            // polar cap
            let ntt = (tt as i64).min(3);
            let tp = tt - ntt as f64;
            // sqrt(3 * (1 - |z|)), computed from sin(theta) near the poles
            // where 1 - |z| cancels catastrophically
            let tmp = if za < 0.99 {
                nside as f64 * (3.0 * (1.0 - za)).sqrt()
            } else {
                nside as f64 * pt.theta().sin() / ((1.0 + za) / 3.0).sqrt()
            };
            let jp = ((tp * tmp) as i64).min(nside - 1);
            let jm = (((1.0 - tp) * tmp) as i64).min(nside - 1);
            if z >= 0.0 {
                (ntt, nside - 1 - jm, nside - 1 - jp)
            } else {
                (ntt + 8, jp, jm)
            }
        };
        PixelId(xyf2nest(ix, iy, face, self.k))
    }

    /// Center of a pixel.
    pub fn pix2ang(&self, pix: PixelId) -> Result<Pointing, PixelError> {
        self.check(pix)?;
        let nside = self.nside();
        let (ix, iy, face) = nest2xyf(pix.0, self.k);
        // fact2 = 4 / npix, fact1 = 2 * nside * fact2
        let fact2 = 4.0 / self.pixel_count() as f64;
        let fact1 = (nside << 1) as f64 * fact2;

        let jr = (JRLL[face as usize] << self.k) - ix - iy - 1;
        let (z, nr, sin_theta) = if jr < nside {
            // north polar cap
            let nr = jr;
            let tmp = nr as f64 * nr as f64 * fact2;
            let z = 1.0 - tmp;
            let sth = if z > 0.99 { Some((tmp * (2.0 - tmp)).sqrt()) } else { None };
            (z, nr, sth)
        } else if jr > 3 * nside {
            // south polar cap
            let nr = 4 * nside - jr;
            let tmp = nr as f64 * nr as f64 * fact2;
            let z = tmp - 1.0;
            let sth = if z < -0.99 { Some((tmp * (2.0 - tmp)).sqrt()) } else { None };
            (z, nr, sth)
        } else {
            ((2 * nside - jr) as f64 * fact1, nside, None)
        };

        let mut jp = JPLL[face as usize] * nr + ix - iy;
        if jp < 0 {
            jp += 8 * nr;
        }
        let phi = if nr == nside {
            0.75 * FRAC_PI_2 * jp as f64 * fact1
        } else {
            0.5 * FRAC_PI_2 * jp as f64 / nr as f64
        };
        let theta = match sin_theta {
            Some(sth) => sth.atan2(z),
            None => z.acos(),
        };
        Ok(Pointing::new(theta, phi))
    }

    /// The up-to-8 edge/corner-adjacent pixels, in fixed order
    /// SW, W, NW, N, NE, E, SE, S. Slots with no neighbor (possible only
    /// where base diamonds meet corner-on) hold `PixelId::NONE`.
    pub fn neighbors(&self, pix: PixelId) -> Result<[PixelId; 8], PixelError> {
        self.check(pix)?;
        const XOFFSET: [i64; 8] = [-1, -1, 0, 1, 1, 1, 0, -1];
        const YOFFSET: [i64; 8] = [0, 1, 1, 1, 0, -1, -1, -1];

        let nside = self.nside();
        let (ix, iy, face) = nest2xyf(pix.0, self.k);
        let mut result = [PixelId::NONE; 8];

        if ix > 0 && ix < nside - 1 && iy > 0 && iy < nside - 1 {
            // interior: all 8 within the same base diamond
            let fpix = face << (2 * self.k);
            let px0 = spread_bits(ix);
            let py0 = spread_bits(iy) << 1;
            let pxp = spread_bits(ix + 1);
            let pyp = spread_bits(iy + 1) << 1;
            let pxm = spread_bits(ix - 1);
            let pym = spread_bits(iy - 1) << 1;
            result[0] = PixelId(fpix + pxm + py0);
            result[1] = PixelId(fpix + pxm + pyp);
            result[2] = PixelId(fpix + px0 + pyp);
            result[3] = PixelId(fpix + pxp + pyp);
            result[4] = PixelId(fpix + pxp + py0);
            result[5] = PixelId(fpix + pxp + pym);
            result[6] = PixelId(fpix + px0 + pym);
            result[7] = PixelId(fpix + pxm + pym);
            return Ok(result);
        }

        for dir in 0..8 {
            let mut x = ix + XOFFSET[dir];
            let mut y = iy + YOFFSET[dir];
            let mut nbnum = 4usize;
            if x < 0 {
                x += nside;
                nbnum -= 1;
            } else if x >= nside {
                x -= nside;
                nbnum += 1;
            }
            if y < 0 {
                y += nside;
                nbnum -= 3;
            } else if y >= nside {
                y -= nside;
                nbnum += 3;
            }
            let f = FACEARRAY[nbnum][face as usize];
            if f >= 0 {
                let bits = SWAPARRAY[nbnum][(face >> 2) as usize];
                if bits & 1 != 0 {
                    x = nside - x - 1;
                }
                if bits & 2 != 0 {
                    y = nside - y - 1;
                }
                if bits & 4 != 0 {
                    std::mem::swap(&mut x, &mut y);
                }
                result[dir] = PixelId(xyf2nest(x, y, f as i64, self.k));
            }
        }
        Ok(result)
    }

    /// Parent pixel of `pix` at the (coarser or equal) resolution `lo`.
    ///
    /// In the nested scheme this is a plain right shift by two bits per
    /// level; it must and does agree with re-pixelizing the pixel center at
    /// the lower resolution.
    pub fn coarsen(&self, lo: Resolution, pix: PixelId) -> Result<PixelId, PixelError> {
        if self.k < lo.k {
            return Err(PixelError::InvalidResolutionPair { hi: self.k, lo: lo.k });
        }
        self.check(pix)?;
        Ok(PixelId(pix.0 >> (2 * (self.k - lo.k))))
    }
}

/// Nested-scheme pixel index; -1 marks an absent neighbor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelId(pub i64);

impl PixelId {
    pub const NONE: PixelId = PixelId(-1);

    pub fn is_valid(&self) -> bool {
        self.0 >= 0
    }
}

impl fmt::Display for PixelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Interleave the low 32 bits of `v` with zeros (z-order curve).
fn spread_bits(v: i64) -> i64 {
    let mut x = (v as u64) & 0xffff_ffff;
    x = (x ^ (x << 16)) & 0x0000_ffff_0000_ffff;
    x = (x ^ (x << 8)) & 0x00ff_00ff_00ff_00ff;
    x = (x ^ (x << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x ^ (x << 2)) & 0x3333_3333_3333_3333;
    x = (x ^ (x << 1)) & 0x5555_5555_5555_5555;
    x as i64
}

/// Inverse of `spread_bits`: collect every other bit.
fn compress_bits(v: i64) -> i64 {
    let mut x = (v as u64) & 0x5555_5555_5555_5555;
    x = (x ^ (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x ^ (x >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x ^ (x >> 4)) & 0x00ff_00ff_00ff_00ff;
    x = (x ^ (x >> 8)) & 0x0000_ffff_0000_ffff;
    x = (x ^ (x >> 16)) & 0x0000_0000_ffff_ffff;
    x as i64
}

fn xyf2nest(ix: i64, iy: i64, face: i64, k: u8) -> i64 {
    (face << (2 * k)) + spread_bits(ix) + (spread_bits(iy) << 1)
}

fn nest2xyf(pix: i64, k: u8) -> (i64, i64, i64) {
    let face = pix >> (2 * k);
    let t = pix & ((1i64 << (2 * k)) - 1);
    (compress_bits(t), compress_bits(t >> 1), face)
}

/// Base diamond reached when stepping off an edge/corner, indexed by
/// step direction (S, SE, E, SW, center, NE, W, NW, N) and current diamond.
/// -1: no diamond meets that corner.
const FACEARRAY: [[i8; 12]; 9] = [
    [8, 9, 10, 11, -1, -1, -1, -1, 10, 11, 8, 9],
    [5, 6, 7, 4, 8, 9, 10, 11, 9, 10, 11, 8],
    [-1, -1, -1, -1, 5, 6, 7, 4, -1, -1, -1, -1],
    [4, 5, 6, 7, 11, 8, 9, 10, 11, 8, 9, 10],
    [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
    [1, 2, 3, 0, 0, 1, 2, 3, 5, 6, 7, 4],
    [-1, -1, -1, -1, 7, 4, 5, 6, -1, -1, -1, -1],
    [3, 0, 1, 2, 3, 0, 1, 2, 4, 5, 6, 7],
    [2, 3, 0, 1, -1, -1, -1, -1, 0, 1, 2, 3],
];

/// In-diamond coordinate transform applied when crossing to the diamond from
/// FACEARRAY, indexed by step direction and diamond row (north/equator/south).
/// Bit 1: mirror x, bit 2: mirror y, bit 4: transpose.
const SWAPARRAY: [[u8; 3]; 9] = [
    [0, 0, 3],
    [0, 0, 6],
    [0, 0, 0],
    [0, 0, 5],
    [0, 0, 0],
    [5, 0, 0],
    [0, 0, 0],
    [6, 0, 0],
    [3, 0, 0],
];
