//! Distribution of observations into equal-area task cells with overlap
//! rings.
//!
//! Every observation lands in exactly one task cell (its pixel at the task
//! resolution). It is additionally copied into the overlap list of every
//! neighboring task whose area its fine-grid neighborhood touches: the point
//! is within roughly one overlap pixel of that task's border. A cluster
//! never spans further than the overlap ring is wide, so the task owning a
//! cluster's center always sees the whole cluster and tasks need no
//! communication.

use std::collections::HashMap;

use crate::healpix::{PixelId, Resolution};
use crate::io::ObservationRecord;

/// Index of an observation in the immutable observation store.
pub type ObsIndex = u32;

/// Per-task observation lists: owned cell members and overlap copies.
#[derive(Debug, Default, Clone)]
pub struct ChunkSet {
    pub cells: HashMap<PixelId, Vec<ObsIndex>>,
    pub overlaps: HashMap<PixelId, Vec<ObsIndex>>,
}

impl ChunkSet {
    /// Task pixels in ascending id order: every pixel that owns observations
    /// or received overlap copies.
    pub fn task_pixels(&self) -> Vec<PixelId> {
        let mut pixels: Vec<PixelId> = self.cells.keys().copied().collect();
        for p in self.overlaps.keys() {
            if !self.cells.contains_key(p) {
                pixels.push(*p);
            }
        }
        pixels.sort_unstable();
        pixels
    }
}

/// Outcome of checking a task/overlap resolution pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolutionCheck {
    Ok,
    /// Resolutions are usable but the overlap ring is thinner than the
    /// clustering scale, so sliced clusters become possible.
    Warning(String),
    Error(String),
}

/// Validate a task/overlap resolution pair against the clustering radius.
///
/// The overlap ring is one overlap pixel wide, so a pixel much narrower than
/// the cluster scale cannot guarantee that a border cluster is fully seen by
/// its owning task.
pub fn validate_resolutions(
    task: Resolution,
    overlap: Resolution,
    cluster_radius_arcsec: f64,
) -> ResolutionCheck {
    if task.k() >= overlap.k() {
        return ResolutionCheck::Error(format!(
            "overlap resolution (k={}) must be finer than task resolution (k={})",
            overlap.k(),
            task.k()
        ));
    }
    let width = overlap.mean_pixel_width_arcsec();
    if width < 0.5 * cluster_radius_arcsec {
        return ResolutionCheck::Warning(format!(
            "overlap pixel width {:.4} arcsec is below half the cluster radius \
             {:.4} arcsec; clusters may be sliced at task borders",
            width, cluster_radius_arcsec
        ));
    }
    ResolutionCheck::Ok
}

/// Distribute observations into task cells and overlap lists. Single pass:
/// each observation is pixelized once at each resolution and its fine-pixel
/// neighborhood decides which neighboring tasks get an overlap copy.
pub fn build_chunks(
    observations: &[ObservationRecord],
    task: Resolution,
    overlap: Resolution,
) -> ChunkSet {
    assert!(task.k() < overlap.k(), "validate resolutions before chunking");
    let mut set = ChunkSet::default();
    for (i, obs) in observations.iter().enumerate() {
        let i = i as ObsIndex;
        let pt = obs.pos.to_pointing();
        let own = task.ang2pix(&pt);
        set.cells.entry(own).or_default().push(i);
        set.overlaps.entry(own).or_default();

        let fine = overlap.ang2pix(&pt);
        let neighbors = overlap.neighbors(fine).expect("pixel from ang2pix is valid");
        for nb in neighbors.into_iter().filter(PixelId::is_valid) {
            let coarse = overlap.coarsen(task, nb).expect("valid neighbor pixel");
            if coarse == own {
                continue;
            }
            let list = set.overlaps.entry(coarse).or_default();
            // all inserts for one observation are consecutive, so checking
            // the tail suffices to keep the list duplicate free
            if list.last() != Some(&i) {
                list.push(i);
            }
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::sphere::SphericalPoint;

    fn res(k: u32) -> Resolution {
        Resolution::new(k).unwrap()
    }

    fn obs(ra: f64, dec: f64) -> ObservationRecord {
        ObservationRecord {
            pos: SphericalPoint::new(ra, dec).unwrap(),
            image_id: 0,
            star_no: 0,
        }
    }

    /// The membership rule an observation must satisfy, evaluated
    /// independently with set semantics.
    fn expected_overlaps(o: &ObservationRecord, task: Resolution, overlap: Resolution) -> BTreeSet<PixelId> {
        let pt = o.pos.to_pointing();
        let own = task.ang2pix(&pt);
        let fine = overlap.ang2pix(&pt);
        overlap
            .neighbors(fine)
            .unwrap()
            .into_iter()
            .filter(PixelId::is_valid)
            .map(|nb| overlap.coarsen(task, nb).unwrap())
            .filter(|c| *c != own)
            .collect()
    }

    #[test]
    fn resolution_validation() {
        assert_eq!(
            validate_resolutions(res(15), res(18), 1.0),
            ResolutionCheck::Ok
        );
        assert!(matches!(
            validate_resolutions(res(18), res(18), 1.0),
            ResolutionCheck::Error(_)
        ));
        assert!(matches!(
            validate_resolutions(res(15), res(29), 1.0),
            ResolutionCheck::Warning(_)
        ));
    }

    #[test]
    fn interior_point_has_no_overlap_membership() {
        let task = res(6);
        let overlap = res(9);
        // center of some task pixel is far from every task edge
        let center = task.pix2ang(PixelId(1234)).unwrap().to_spherical();
        let o = [ObservationRecord { pos: center, image_id: 1, star_no: 1 }];
        let set = build_chunks(&o, task, overlap);
        assert_eq!(set.cells[&PixelId(1234)], vec![0]);
        let in_overlaps: usize = set.overlaps.values().map(|v| v.len()).sum();
        assert_eq!(in_overlaps, 0);
    }

    #[test]
    fn point_near_task_corner_lands_in_neighbor_overlap() {
        let task = res(6);
        let overlap = res(9);
        // a task pixel corner: the shared corner of the pixel and a neighbor;
        // nudge the neighbor-center direction slightly to stay just outside
        let own_center = task.pix2ang(PixelId(1234)).unwrap().to_spherical();
        let nb = task.neighbors(PixelId(1234)).unwrap()[0];
        let nb_center = task.pix2ang(nb).unwrap().to_spherical();
        // walk from the neighbor center toward the shared edge until we sit
        // just inside the neighbor next to the border
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let v = [
                nb_center.unit_vector()[0] * (1.0 - mid) + own_center.unit_vector()[0] * mid,
                nb_center.unit_vector()[1] * (1.0 - mid) + own_center.unit_vector()[1] * mid,
                nb_center.unit_vector()[2] * (1.0 - mid) + own_center.unit_vector()[2] * mid,
            ];
            let p = SphericalPoint::from_vector(v);
            if task.ang2pix(&p.to_pointing()) == nb {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = [
            nb_center.unit_vector()[0] * (1.0 - lo) + own_center.unit_vector()[0] * lo,
            nb_center.unit_vector()[1] * (1.0 - lo) + own_center.unit_vector()[1] * lo,
            nb_center.unit_vector()[2] * (1.0 - lo) + own_center.unit_vector()[2] * lo,
        ];
        let edge_point = SphericalPoint::from_vector(v);
        assert_eq!(task.ang2pix(&edge_point.to_pointing()), nb);

        let o = [ObservationRecord { pos: edge_point, image_id: 1, star_no: 1 }];
        let set = build_chunks(&o, task, overlap);
        assert_eq!(set.cells[&nb], vec![0]);
        let touched: Vec<PixelId> = set
            .overlaps
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(p, _)| *p)
            .collect();
        // sitting on the 1234|nb border, the point must be copied into the
        // overlap list of the task it does not belong to
        assert!(
            touched.contains(&PixelId(1234)),
            "edge point missing from the adjacent task overlap: {touched:?}"
        );
    }

    #[test]
    fn matches_brute_force_rule_on_random_points() {
        let task = res(6);
        let overlap = res(9);
        let mut state = 77u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let observations: Vec<ObservationRecord> = (0..10_000)
            .map(|_| {
                let z: f64 = next() * 2.0 - 1.0;
                let dec = z.asin().to_degrees();
                obs(next() * 360.0, dec)
            })
            .collect();
        let set = build_chunks(&observations, task, overlap);

        // total cell membership is exactly n
        let total: usize = set.cells.values().map(|v| v.len()).sum();
        assert_eq!(total, observations.len());

        // overlap lists contain no duplicates
        for list in set.overlaps.values() {
            let mut sorted = list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), list.len());
        }

        // per-point membership equals the brute-force rule
        let mut by_obs: HashMap<ObsIndex, BTreeSet<PixelId>> = HashMap::new();
        for (pix, list) in &set.overlaps {
            for i in list {
                by_obs.entry(*i).or_default().insert(*pix);
            }
        }
        for (i, o) in observations.iter().enumerate() {
            let got = by_obs.remove(&(i as ObsIndex)).unwrap_or_default();
            let want = expected_overlaps(o, task, overlap);
            assert_eq!(got, want, "observation {}", i);
            let own = task.ang2pix(&o.pos.to_pointing());
            assert!(set.cells[&own].contains(&(i as ObsIndex)));
        }
    }

    #[test]
    fn deterministic_for_identical_input() {
        let task = res(5);
        let overlap = res(8);
        let observations: Vec<ObservationRecord> =
            (0..500).map(|i| obs(i as f64 * 0.7 % 360.0, (i % 89) as f64 - 44.0)).collect();
        let a = build_chunks(&observations, task, overlap);
        let b = build_chunks(&observations, task, overlap);
        assert_eq!(a.task_pixels(), b.task_pixels());
        for p in a.task_pixels() {
            assert_eq!(a.cells.get(&p), b.cells.get(&p));
            assert_eq!(a.overlaps.get(&p), b.overlaps.get(&p));
        }
    }

    #[test]
    fn every_occupied_cell_has_overlap_entry() {
        let task = res(4);
        let overlap = res(7);
        let observations: Vec<ObservationRecord> =
            (0..200).map(|i| obs((i * 7 % 360) as f64, ((i * 13) % 160) as f64 - 80.0)).collect();
        let set = build_chunks(&observations, task, overlap);
        for pix in set.cells.keys() {
            assert!(set.overlaps.contains_key(pix));
        }
    }
}
