//! Single-pass incremental clustering.
//!
//! Observations are visited once, cell list first, then the overlap list.
//! Each observation either joins the first known cluster center within the
//! configured radius (updating that center as a running weighted average) or
//! founds a new cluster at its own position. Centers live in a spatial index
//! so only the observation's index pixel and that pixel's neighbors are
//! scanned.
//!
//! Visiting order matters in principle: a wide cluster seeded from opposite
//! ends can end up split in two. Such patterns are rare in real data and are
//! accepted as the method's error rate.

use crate::chunk::ObsIndex;
use crate::healpix::{PixelId, Resolution};
use crate::io::ObservationRecord;
use crate::sphere::{angular_distance_arcsec, SphericalPoint};

use super::{update_center, remove_incomplete_clusters, CatalogIndex, Cluster, ClusterMap};

#[derive(Debug, Clone)]
pub struct IncrementalParams {
    /// Resolution of the per-task center index.
    pub index_res: Resolution,
    /// Absorb an observation into a center strictly closer than this.
    pub radius_arcsec: f64,
}

/// Try to absorb `obs` into the first indexed center within the radius.
///
/// Candidates are scanned pixel by pixel (the observation's index pixel,
/// then its neighbors in slot order) and within a pixel in insertion order;
/// the first center strictly closer than the radius wins. On success the
/// center moves to the new weighted average and is re-indexed if it crossed
/// a pixel border.
pub fn find_and_update_neighbor(
    index: &mut CatalogIndex,
    obs: &SphericalPoint,
    obs_idx: ObsIndex,
    radius_arcsec: f64,
    result: &mut ClusterMap,
) -> bool {
    let pixel = index.pixel_of(obs);
    let mut hit: Option<usize> = None;
    'scan: for p in index.candidate_pixels(pixel) {
        for &ci in index.clusters_in(p) {
            if angular_distance_arcsec(obs, &result.clusters[ci].center) < radius_arcsec {
                hit = Some(ci);
                break 'scan;
            }
        }
    }
    let Some(ci) = hit else {
        return false;
    };
    let cluster = &mut result.clusters[ci];
    let old_pixel = index.pixel_of(&cluster.center);
    cluster.center = update_center(&cluster.center, cluster.weight, obs);
    cluster.weight += 1;
    cluster.members.insert(obs_idx);
    let new_pixel = index.pixel_of(&cluster.center);
    if new_pixel != old_pixel {
        index.relocate(ci, old_pixel, new_pixel);
    }
    true
}

/// Cluster one task incrementally. Returns the surviving clusters and the
/// number of observations visited (exactly `cell.len() + overlap.len()`).
pub fn incremental_cluster(
    store: &[ObservationRecord],
    cell: &[ObsIndex],
    overlap: &[ObsIndex],
    task_pixel: PixelId,
    task: Resolution,
    params: &IncrementalParams,
) -> (ClusterMap, usize) {
    let mut result = ClusterMap::default();
    let mut index = CatalogIndex::new(params.index_res);
    let mut visited = 0usize;

    for &i in cell.iter().chain(overlap.iter()) {
        visited += 1;
        let pos = store[i as usize].pos;
        if !find_and_update_neighbor(&mut index, &pos, i, params.radius_arcsec, &mut result) {
            let ci = result.clusters.len();
            let pixel = index.pixel_of(&pos);
            result.clusters.push(Cluster::seeded(pos, i));
            index.insert(ci, pixel);
        }
    }

    remove_incomplete_clusters(&mut result, task_pixel, task);
    (result, visited)
}
