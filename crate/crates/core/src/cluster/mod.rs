//! Per-task clustering strategies.
//!
//! A task sees its own cell observations plus the overlap copies from the
//! surrounding ring and produces clusters independently of every other task.
//! Two interchangeable strategies exist: the single-pass incremental
//! clusterer and an elbow-tuned randomized K-means. Both end by discarding
//! incomplete clusters, i.e. clusters whose center lies outside the task's
//! own cell: the neighboring task that owns the center sees the complete
//! cluster and reports it instead.

mod incremental;
mod kmeans;

pub use incremental::{find_and_update_neighbor, incremental_cluster, IncrementalParams};
pub use kmeans::{elbow_select, kmeans_elbow_cluster, kmeans_run, KmeansError, KmeansRun};

use std::collections::{BTreeSet, HashMap};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::chunk::ObsIndex;
use crate::config::{EngineConfig, Strategy};
use crate::healpix::{PixelId, Resolution};
use crate::io::ObservationRecord;
use crate::sphere::SphericalPoint;

/// A group of observations believed to be one physical source.
///
/// The center is a running weighted average of member positions; the weight
/// tracks the member count so later points (and later merges) contribute
/// proportionally.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub center: SphericalPoint,
    pub weight: usize,
    pub members: BTreeSet<ObsIndex>,
}

impl Cluster {
    pub fn seeded(center: SphericalPoint, member: ObsIndex) -> Cluster {
        let mut members = BTreeSet::new();
        members.insert(member);
        Cluster { center, weight: 1, members }
    }
}

/// Clusters produced by one task, in creation order.
#[derive(Debug, Clone, Default)]
pub struct ClusterMap {
    pub clusters: Vec<Cluster>,
}

/// Spatial index over cluster centers: pixel at the index resolution to the
/// clusters whose center currently lies in it. A center is re-indexed
/// whenever an update moves it across a pixel border.
#[derive(Debug, Clone)]
pub struct CatalogIndex {
    res: Resolution,
    cells: HashMap<PixelId, Vec<usize>>,
}

impl CatalogIndex {
    pub fn new(res: Resolution) -> CatalogIndex {
        CatalogIndex { res, cells: HashMap::new() }
    }

    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn pixel_of(&self, pos: &SphericalPoint) -> PixelId {
        self.res.ang2pix(&pos.to_pointing())
    }

    pub fn insert(&mut self, cluster: usize, pixel: PixelId) {
        self.cells.entry(pixel).or_default().push(cluster);
    }

    pub fn remove(&mut self, cluster: usize, pixel: PixelId) {
        if let Some(list) = self.cells.get_mut(&pixel) {
            if let Some(pos) = list.iter().position(|c| *c == cluster) {
                list.remove(pos);
            }
        }
    }

    pub fn relocate(&mut self, cluster: usize, from: PixelId, to: PixelId) {
        self.remove(cluster, from);
        self.insert(cluster, to);
    }

    /// Candidate pixels for a neighborhood query: the pixel itself followed
    /// by its valid neighbors, in the fixed neighbor slot order.
    pub fn candidate_pixels(&self, pixel: PixelId) -> Vec<PixelId> {
        let mut pixels = Vec::with_capacity(9);
        pixels.push(pixel);
        let neighbors = self.res.neighbors(pixel).expect("indexed pixel is valid");
        pixels.extend(neighbors.into_iter().filter(PixelId::is_valid));
        pixels
    }

    pub fn clusters_in(&self, pixel: PixelId) -> &[usize] {
        self.cells.get(&pixel).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// New center after absorbing one observation into a cluster of the given
/// weight: the normalized weighted sum of unit vectors. Working on unit
/// vectors keeps RA wraparound and the poles out of the arithmetic.
pub fn update_center(center: &SphericalPoint, weight: usize, obs: &SphericalPoint) -> SphericalPoint {
    let c = center.unit_vector();
    let u = obs.unit_vector();
    let w = weight as f64;
    SphericalPoint::from_vector([w * c[0] + u[0], w * c[1] + u[1], w * c[2] + u[2]])
}

/// Weighted combination of two cluster centers.
pub fn combine_centers(
    a: &SphericalPoint,
    weight_a: usize,
    b: &SphericalPoint,
    weight_b: usize,
) -> SphericalPoint {
    let va = a.unit_vector();
    let vb = b.unit_vector();
    let (wa, wb) = (weight_a as f64, weight_b as f64);
    SphericalPoint::from_vector([
        wa * va[0] + wb * vb[0],
        wa * va[1] + wb * vb[1],
        wa * va[2] + wb * vb[2],
    ])
}

/// Drop every cluster whose center falls outside the task's own cell. Those
/// were built from overlap copies (or slid across the border) and the
/// neighboring task owns their complete version.
pub fn remove_incomplete_clusters(result: &mut ClusterMap, task_pixel: PixelId, task: Resolution) {
    result
        .clusters
        .retain(|c| task.ang2pix(&c.center.to_pointing()) == task_pixel);
}

/// Cluster one task with the configured strategy. The result never contains
/// incomplete clusters.
pub fn cluster_task(
    store: &[ObservationRecord],
    cell: &[ObsIndex],
    overlap: &[ObsIndex],
    task_pixel: PixelId,
    task: Resolution,
    strategy: Strategy,
    config: &EngineConfig,
    seed: u64,
) -> ClusterMap {
    if cell.is_empty() && overlap.is_empty() {
        return ClusterMap::default();
    }
    match strategy {
        Strategy::Incremental => {
            let params = IncrementalParams {
                index_res: Resolution::new(config.catalog_index_k as u32)
                    .expect("validated config"),
                radius_arcsec: config.cluster_radius_arcsec,
            };
            incremental_cluster(store, cell, overlap, task_pixel, task, &params).0
        }
        Strategy::KmeansHybrid => {
            let mut rng = task_rng(seed, task_pixel);
            let mut result =
                kmeans_elbow_cluster(store, cell, overlap, &config.kmeans, &mut rng);
            remove_incomplete_clusters(&mut result, task_pixel, task);
            result
        }
    }
}

/// Task-local generator: depends only on the run seed and the task pixel, so
/// results do not depend on which worker runs the task or when.
pub fn task_rng(seed: u64, task_pixel: PixelId) -> ChaCha12Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&task_pixel.0.to_le_bytes());
    bytes[16..24].copy_from_slice(&0x5354_4152_4341_5431u64.to_le_bytes());
    ChaCha12Rng::from_seed(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::angular_distance_arcsec;

    fn pt(ra: f64, dec: f64) -> SphericalPoint {
        SphericalPoint::new(ra, dec).unwrap()
    }

    #[test]
    fn update_center_identity() {
        let c = pt(10.0, 20.0);
        let updated = update_center(&c, 1, &c);
        assert!(angular_distance_arcsec(&c, &updated) < 1e-9);
    }

    #[test]
    fn update_center_midpoint_of_two() {
        let a = pt(10.0, 0.0);
        let b = pt(10.0 + 1.0 / 3600.0, 0.0);
        let mid = update_center(&a, 1, &b);
        let d_a = angular_distance_arcsec(&a, &mid);
        let d_b = angular_distance_arcsec(&b, &mid);
        assert!((d_a - 0.5).abs() < 1e-9);
        assert!((d_b - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sequential_updates_track_the_vector_mean() {
        // n points on a small ring; running updates must agree with the
        // direct unit-vector mean to well below a microarcsecond
        let base = pt(200.0, -45.0);
        let mut points = Vec::new();
        for i in 0..50 {
            let ang = i as f64 * 0.125664;
            let dra = 3.0 * ang.cos() / 3600.0 / base.dec_deg().to_radians().cos();
            let ddec = 3.0 * ang.sin() / 3600.0;
            points.push(pt(base.ra_deg() + dra, base.dec_deg() + ddec));
        }
        let mut center = points[0];
        for (i, p) in points.iter().enumerate().skip(1) {
            center = update_center(&center, i, p);
        }
        let mut sum = [0.0f64; 3];
        for p in &points {
            let u = p.unit_vector();
            sum[0] += u[0];
            sum[1] += u[1];
            sum[2] += u[2];
        }
        let mean = SphericalPoint::from_vector(sum);
        assert!(angular_distance_arcsec(&center, &mean) < 1e-6);
    }

    #[test]
    fn update_center_matches_plain_average_at_cluster_scales() {
        // at sub-cluster separations the unit-vector average and the plain
        // coordinate average agree to far below a microarcsecond
        let a = pt(50.0, 10.0);
        let b = pt(50.0 + 1.2 / 3600.0, 10.0 + 0.9 / 3600.0);
        let c = update_center(&a, 1, &b);
        let plain_ra = (a.ra_deg() + b.ra_deg()) / 2.0;
        let plain_dec = (a.dec_deg() + b.dec_deg()) / 2.0;
        let plain = pt(plain_ra, plain_dec);
        assert!(angular_distance_arcsec(&c, &plain) < 1e-6);
    }

    #[test]
    fn incomplete_cluster_removal() {
        let task = Resolution::new(6).unwrap();
        let inside_pix = PixelId(1000);
        let inside = task.pix2ang(inside_pix).unwrap().to_spherical();
        let outside = task.pix2ang(PixelId(2000)).unwrap().to_spherical();
        let mut map = ClusterMap {
            clusters: vec![Cluster::seeded(inside, 0), Cluster::seeded(outside, 1)],
        };
        remove_incomplete_clusters(&mut map, inside_pix, task);
        assert_eq!(map.clusters.len(), 1);
        assert!(map.clusters[0].members.contains(&0));
    }

    #[test]
    fn cluster_task_dispatch() {
        let config = EngineConfig::default();
        let task = Resolution::new(config.task_k as u32).unwrap();
        let store = [ObservationRecord {
            pos: pt(33.0, -20.0),
            image_id: 4,
            star_no: 2,
        }];
        let pixel = task.ang2pix(&store[0].pos.to_pointing());

        for strategy in [Strategy::Incremental, Strategy::KmeansHybrid] {
            let empty = cluster_task(&store, &[], &[], pixel, task, strategy, &config, 1);
            assert!(empty.clusters.is_empty());

            let one = cluster_task(&store, &[0], &[], pixel, task, strategy, &config, 1);
            assert_eq!(one.clusters.len(), 1);
            assert_eq!(one.clusters[0].weight, 1);
            assert!(
                angular_distance_arcsec(&one.clusters[0].center, &store[0].pos) < 1e-6
            );
        }
    }

    #[test]
    fn task_rng_is_pixel_dependent_and_stable() {
        use rand::RngCore;
        let mut a = task_rng(7, PixelId(100));
        let mut b = task_rng(7, PixelId(100));
        let mut c = task_rng(7, PixelId(101));
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }
}
