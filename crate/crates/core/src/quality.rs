//! Synthetic skies with ground truth, catalog cross-matching, and quality
//! statistics.
//!
//! The generator plants cluster centers uniformly in a spherical cap with a
//! minimum mutual separation and scatters members around each center with an
//! isotropic Gaussian, the same shape real astrometric error produces. That
//! gives every evaluation a known answer: which observations belong
//! together and where their true centers are.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

use crate::config::EngineConfig;
use crate::healpix::Resolution;
use crate::io::{AssignmentRecord, CatalogRecord, ObservationRecord};
use crate::pipeline::{run_in_memory, PipelineError};
use crate::sphere::{angular_distance_arcsec, SphericalPoint};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("center placement failed after {attempts} rejection attempts")]
    PlacementFailure { attempts: u64 },
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// True cluster centers and the observation-to-center mapping.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub centers: Vec<SphericalPoint>,
    /// membership[i] is the center index of observation i.
    pub membership: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SyntheticParams {
    pub n_clusters: usize,
    pub mean_members: f64,
    pub sigma_arcsec: f64,
    pub min_separation_arcsec: f64,
    pub region_center: SphericalPoint,
    pub region_radius_deg: f64,
    pub seed: u64,
}

/// Place cluster centers uniformly in the cap, rejecting any candidate
/// closer than the minimum separation to an accepted one.
pub fn place_centers(params: &SyntheticParams) -> Result<Vec<SphericalPoint>, QualityError> {
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let cap_cos = params.region_radius_deg.to_radians().cos();
    let center = params.region_center.unit_vector();
    let up = if center[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let e1 = normalize(cross(up, center));
    let e2 = cross(center, e1);

    let mut centers: Vec<SphericalPoint> = Vec::with_capacity(params.n_clusters);
    let max_attempts = 10_000u64.saturating_mul(params.n_clusters as u64);
    let mut attempts = 0u64;
    while centers.len() < params.n_clusters {
        attempts += 1;
        if attempts > max_attempts {
            return Err(QualityError::PlacementFailure { attempts });
        }
        let cos_t = cap_cos + (1.0 - cap_cos) * rng.gen::<f64>();
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi = rng.gen::<f64>() * std::f64::consts::TAU;
        let (sp, cp) = phi.sin_cos();
        let v = [
            cos_t * center[0] + sin_t * (cp * e1[0] + sp * e2[0]),
            cos_t * center[1] + sin_t * (cp * e1[1] + sp * e2[1]),
            cos_t * center[2] + sin_t * (cp * e1[2] + sp * e2[2]),
        ];
        let candidate = SphericalPoint::from_vector(v);
        if centers
            .iter()
            .all(|c| angular_distance_arcsec(c, &candidate) >= params.min_separation_arcsec)
        {
            centers.push(candidate);
        }
    }
    Ok(centers)
}

/// Scatter Gaussian members around explicit centers. Member counts are
/// Poisson with a floor of one; observations are shuffled so input order
/// carries no cluster structure.
pub fn synthesize_members(
    centers: &[SphericalPoint],
    mean_members: f64,
    sigma_arcsec: f64,
    seed: u64,
) -> (Vec<ObservationRecord>, GroundTruth) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x51ca_7a10_65ed_5eed);
    let poisson = Poisson::new(mean_members.max(f64::MIN_POSITIVE)).expect("positive mean");
    let normal = Normal::new(0.0, sigma_arcsec).expect("finite sigma");

    let mut observations = Vec::new();
    let mut membership = Vec::new();
    let mut star_no = 0i64;
    for (ci, center) in centers.iter().enumerate() {
        let count = (poisson.sample(&mut rng) as usize).max(1);
        let cos_dec = center.dec_deg().to_radians().cos().max(1e-12);
        for epoch in 0..count {
            let dx: f64 = normal.sample(&mut rng);
            let dy: f64 = normal.sample(&mut rng);
            let ra = center.ra_deg() + dx / 3600.0 / cos_dec;
            let dec = (center.dec_deg() + dy / 3600.0).clamp(-90.0, 90.0);
            observations.push(ObservationRecord {
                pos: SphericalPoint::new(ra, dec).expect("generated coordinates valid"),
                image_id: epoch as i64,
                star_no,
            });
            membership.push(ci as u32);
            star_no += 1;
        }
    }

    let mut order: Vec<usize> = (0..observations.len()).collect();
    order.shuffle(&mut rng);
    let observations_shuffled: Vec<ObservationRecord> =
        order.iter().map(|&i| observations[i]).collect();
    let membership_shuffled: Vec<u32> = order.iter().map(|&i| membership[i]).collect();

    (
        observations_shuffled,
        GroundTruth { centers: centers.to_vec(), membership: membership_shuffled },
    )
}

/// Uniform cap placement plus Gaussian members, all from one seed.
pub fn generate_synthetic(
    params: &SyntheticParams,
) -> Result<(Vec<ObservationRecord>, GroundTruth), QualityError> {
    let centers = place_centers(params)?;
    Ok(synthesize_members(
        &centers,
        params.mean_members,
        params.sigma_arcsec,
        params.seed,
    ))
}

/// Like [`synthesize_members`] but with the Gaussian truncated at
/// `max_offset_arcsec` (members are redrawn until inside). Real clusters
/// have bounded diameter; this variant produces fixtures whose recovery can
/// be exact rather than merely overwhelmingly likely.
pub fn synthesize_members_bounded(
    centers: &[SphericalPoint],
    mean_members: f64,
    sigma_arcsec: f64,
    max_offset_arcsec: f64,
    seed: u64,
) -> (Vec<ObservationRecord>, GroundTruth) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x0b0b_5eed_0b0b_5eed);
    let poisson = Poisson::new(mean_members.max(f64::MIN_POSITIVE)).expect("positive mean");
    let normal = Normal::new(0.0, sigma_arcsec).expect("finite sigma");

    let mut observations = Vec::new();
    let mut membership = Vec::new();
    let mut star_no = 0i64;
    for (ci, center) in centers.iter().enumerate() {
        let count = (poisson.sample(&mut rng) as usize).max(1);
        let cos_dec = center.dec_deg().to_radians().cos().max(1e-12);
        for epoch in 0..count {
            let (dx, dy) = loop {
                let dx: f64 = normal.sample(&mut rng);
                let dy: f64 = normal.sample(&mut rng);
                if dx.hypot(dy) < max_offset_arcsec {
                    break (dx, dy);
                }
            };
            let ra = center.ra_deg() + dx / 3600.0 / cos_dec;
            let dec = (center.dec_deg() + dy / 3600.0).clamp(-90.0, 90.0);
            observations.push(ObservationRecord {
                pos: SphericalPoint::new(ra, dec).expect("generated coordinates valid"),
                image_id: epoch as i64,
                star_no,
            });
            membership.push(ci as u32);
            star_no += 1;
        }
    }

    let mut order: Vec<usize> = (0..observations.len()).collect();
    order.shuffle(&mut rng);
    let observations_shuffled: Vec<ObservationRecord> =
        order.iter().map(|&i| observations[i]).collect();
    let membership_shuffled: Vec<u32> = order.iter().map(|&i| membership[i]).collect();

    (
        observations_shuffled,
        GroundTruth { centers: centers.to_vec(), membership: membership_shuffled },
    )
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Histogram of nearest-neighbor match distances.
#[derive(Debug, Clone)]
pub struct DistanceHistogram {
    pub bin_width_arcsec: f64,
    pub counts: Vec<u64>,
    pub matched: u64,
    pub unmatched: u64,
}

impl DistanceHistogram {
    pub fn write_csv<W: std::io::Write>(&self, writer: &mut W) -> std::io::Result<()> {
        for (i, count) in self.counts.iter().enumerate() {
            writeln!(writer, "{:.3},{}", i as f64 * self.bin_width_arcsec, count)?;
        }
        Ok(())
    }

    pub fn mode_bin_start_arcsec(&self) -> f64 {
        let best = self
            .counts
            .iter()
            .enumerate()
            .max_by_key(|(_, c)| **c)
            .map(|(i, _)| i)
            .unwrap_or(0);
        best as f64 * self.bin_width_arcsec
    }
}

const HISTOGRAM_BIN_ARCSEC: f64 = 0.05;

/// For every entry of `a`, find the nearest entry of `b` within the radius
/// through a pixel-index neighborhood search; bin the match distances.
pub fn crossmatch(
    a: &[CatalogRecord],
    b: &[CatalogRecord],
    max_radius_arcsec: f64,
) -> DistanceHistogram {
    // index pixels must be wide enough that one ring of neighbors covers the
    // search radius everywhere
    let mut k = 29u32;
    while k > 0 {
        let width = Resolution::new(k).expect("k in range").mean_pixel_width_arcsec();
        if width >= 4.0 * max_radius_arcsec {
            break;
        }
        k -= 1;
    }
    let res = Resolution::new(k).expect("k in range");
    let mut index: HashMap<i64, Vec<usize>> = HashMap::new();
    for (i, rec) in b.iter().enumerate() {
        index
            .entry(res.ang2pix(&rec.pos.to_pointing()).0)
            .or_default()
            .push(i);
    }

    let bins = (max_radius_arcsec / HISTOGRAM_BIN_ARCSEC).ceil() as usize + 1;
    let mut hist = DistanceHistogram {
        bin_width_arcsec: HISTOGRAM_BIN_ARCSEC,
        counts: vec![0; bins],
        matched: 0,
        unmatched: 0,
    };
    for rec in a {
        let pixel = res.ang2pix(&rec.pos.to_pointing());
        let mut best: Option<f64> = None;
        let mut candidates = vec![pixel];
        candidates.extend(
            res.neighbors(pixel)
                .expect("pixel from ang2pix")
                .into_iter()
                .filter(crate::healpix::PixelId::is_valid),
        );
        for p in candidates {
            if let Some(list) = index.get(&p.0) {
                for &i in list {
                    let d = angular_distance_arcsec(&rec.pos, &b[i].pos);
                    if d <= max_radius_arcsec && best.map_or(true, |bd| d < bd) {
                        best = Some(d);
                    }
                }
            }
        }
        match best {
            Some(d) => {
                hist.matched += 1;
                let bin = ((d / HISTOGRAM_BIN_ARCSEC) as usize).min(bins - 1);
                hist.counts[bin] += 1;
            }
            None => hist.unmatched += 1,
        }
    }
    hist
}

/// Mean angular distance from each assigned observation to its catalog
/// center.
pub fn mean_member_distance(
    catalog: &[CatalogRecord],
    assignments: &[AssignmentRecord],
    observations: &[ObservationRecord],
) -> Result<f64, QualityError> {
    let centers: HashMap<i64, &SphericalPoint> =
        catalog.iter().map(|r| (r.catalog_id, &r.pos)).collect();
    let by_key: HashMap<(i64, i64), &SphericalPoint> = observations
        .iter()
        .map(|o| ((o.image_id, o.star_no), &o.pos))
        .collect();

    if assignments.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for a in assignments {
        let center = centers.get(&a.catalog_id).ok_or_else(|| {
            QualityError::Inconsistent(format!("assignment to unknown catalog id {}", a.catalog_id))
        })?;
        let obs = by_key.get(&(a.image_id, a.star_no)).ok_or_else(|| {
            QualityError::Inconsistent(format!(
                "assignment of unknown observation ({}, {})",
                a.image_id, a.star_no
            ))
        })?;
        total += angular_distance_arcsec(obs, center);
    }
    Ok(total / assignments.len() as f64)
}

/// Result of clustering the same observations under two task resolutions.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub clusters_a: usize,
    pub clusters_b: usize,
    pub unmatched_a: u64,
    pub unmatched_b: u64,
    pub max_displacement_arcsec: f64,
}

/// Run the full pipeline twice with different task resolutions and compare
/// the catalogs: parallelization granularity should not change the result.
pub fn partition_invariance_check(
    observations: &[ObservationRecord],
    config: &EngineConfig,
    task_k_a: u8,
    task_k_b: u8,
    threads: usize,
    seed: u64,
) -> Result<InvarianceReport, QualityError> {
    let mut config_a = config.clone();
    config_a.task_k = task_k_a;
    let mut config_b = config.clone();
    config_b.task_k = task_k_b;
    let out_a = run_in_memory(observations, &config_a, threads, seed)?;
    let out_b = run_in_memory(observations, &config_b, threads, seed)?;

    let radius = config.cluster_duplicates_arcsec;
    let ab = crossmatch(&out_a.catalog, &out_b.catalog, radius);
    let ba = crossmatch(&out_b.catalog, &out_a.catalog, radius);

    let mut max_disp = 0.0f64;
    for rec in &out_a.catalog {
        for other in &out_b.catalog {
            let d = angular_distance_arcsec(&rec.pos, &other.pos);
            if d <= radius {
                max_disp = max_disp.max(d);
            }
        }
    }

    Ok(InvarianceReport {
        clusters_a: out_a.catalog.len(),
        clusters_b: out_b.catalog.len(),
        unmatched_a: ab.unmatched,
        unmatched_b: ba.unmatched,
        max_displacement_arcsec: max_disp,
    })
}
