//! Sequential collection of per-task results into one catalog.
//!
//! Tasks report their clusters in ascending task-pixel order. Each incoming
//! cluster is checked against the already-collected centers through a
//! spatial index; while any center lies within the duplicate radius, the
//! incoming cluster merges with the closest one (weighted center, member-set
//! union) and the search repeats with the merged result, so the finished
//! catalog never holds two centers within the radius. Duplicates arise both
//! from task-border overlap (two tasks seeing the same source) and from
//! strategies that over-split dense regions.

use std::collections::HashMap;

use crate::cluster::{combine_centers, CatalogIndex, Cluster, ClusterMap};
use crate::healpix::Resolution;
use crate::io::{AssignmentRecord, CatalogRecord, ObservationRecord};
use crate::sphere::angular_distance_arcsec;

/// The merged catalog. `ids` is populated by [`GlobalCatalog::generate_catalog_ids`].
#[derive(Debug)]
pub struct GlobalCatalog {
    pub clusters: Vec<Cluster>,
    pub ids: Vec<i64>,
    /// Number of incoming clusters that merged into an existing one.
    pub merged_duplicates: u64,
    /// Center-to-center distance computations spent while merging.
    pub distance_checks: u64,
}

struct MergeState {
    slots: Vec<Option<Cluster>>,
    index: CatalogIndex,
    merged: u64,
    checks: u64,
}

impl MergeState {
    /// Closest indexed center strictly within the radius, ties broken by
    /// insertion order (candidate pixels are scanned in fixed order and
    /// strict `<` keeps the earliest minimum).
    fn closest_within(&mut self, cluster: &Cluster, radius: f64) -> Option<usize> {
        let pixel = self.index.pixel_of(&cluster.center);
        let mut best: Option<(usize, f64)> = None;
        for p in self.index.candidate_pixels(pixel) {
            for &slot in self.index.clusters_in(p) {
                let other = self.slots[slot].as_ref().expect("indexed slots are live");
                self.checks += 1;
                let d = angular_distance_arcsec(&cluster.center, &other.center);
                if d < radius {
                    let better = match best {
                        Some((bs, bd)) => d < bd || (d == bd && slot < bs),
                        None => true,
                    };
                    if better {
                        best = Some((slot, d));
                    }
                }
            }
        }
        best.map(|(slot, _)| slot)
    }

    fn absorb(&mut self, mut incoming: Cluster, radius: f64) {
        while let Some(slot) = self.closest_within(&incoming, radius) {
            let existing = self.slots[slot].take().expect("slot found via index");
            let pixel = self.index.pixel_of(&existing.center);
            self.index.remove(slot, pixel);
            self.merged += 1;

            let center = combine_centers(
                &incoming.center,
                incoming.weight,
                &existing.center,
                existing.weight,
            );
            let mut members = existing.members;
            members.extend(incoming.members.iter().copied());
            let weight = members.len();
            incoming = Cluster { center, weight, members };
        }
        let slot = self.slots.len();
        let pixel = self.index.pixel_of(&incoming.center);
        self.slots.push(Some(incoming));
        self.index.insert(slot, pixel);
    }
}

/// Merge per-task cluster maps (already ordered by task pixel) into one
/// catalog, collapsing centers closer than `dup_radius_arcsec`.
pub fn merge_results<I>(task_results: I, dup_radius_arcsec: f64, index_res: Resolution) -> GlobalCatalog
where
    I: IntoIterator<Item = ClusterMap>,
{
    let mut state = MergeState {
        slots: Vec::new(),
        index: CatalogIndex::new(index_res),
        merged: 0,
        checks: 0,
    };
    for map in task_results {
        for cluster in map.clusters {
            state.absorb(cluster, dup_radius_arcsec);
        }
    }
    GlobalCatalog {
        clusters: state.slots.into_iter().flatten().collect(),
        ids: Vec::new(),
        merged_duplicates: state.merged,
        distance_checks: state.checks,
    }
}

impl GlobalCatalog {
    /// Mint catalog identifiers: the pixel of each center at the id
    /// resolution. Centers sharing an id pixel (closer than a fraction of a
    /// milliarcsecond at the default resolution, so in practice already
    /// merged) are merged here with a warning.
    pub fn generate_catalog_ids(&mut self, id_res: Resolution) -> Vec<CatalogRecord> {
        let mut by_id: HashMap<i64, usize> = HashMap::new();
        let mut alive: Vec<Option<Cluster>> = std::mem::take(&mut self.clusters)
            .into_iter()
            .map(Some)
            .collect();

        for slot in 0..alive.len() {
            let Some(cluster) = alive[slot].take() else {
                continue;
            };
            let mut cluster = cluster;
            loop {
                let id = id_res.ang2pix(&cluster.center.to_pointing()).0;
                match by_id.get(&id).copied() {
                    Some(other_slot) => {
                        let other = alive[other_slot].take().expect("id map holds live slots");
                        by_id.remove(&id);
                        log::warn!(
                            "catalog id collision at pixel {id}: merging two centers \
                             {:.6} arcsec apart",
                            angular_distance_arcsec(&cluster.center, &other.center)
                        );
                        let center = combine_centers(
                            &cluster.center,
                            cluster.weight,
                            &other.center,
                            other.weight,
                        );
                        let mut members = other.members;
                        members.extend(cluster.members.iter().copied());
                        let weight = members.len();
                        cluster = Cluster { center, weight, members };
                        self.merged_duplicates += 1;
                    }
                    None => {
                        alive[slot] = Some(cluster);
                        by_id.insert(id, slot);
                        break;
                    }
                }
            }
        }

        self.clusters = Vec::with_capacity(by_id.len());
        self.ids = Vec::with_capacity(by_id.len());
        let mut records = Vec::with_capacity(by_id.len());
        for cluster in alive.into_iter().flatten() {
            let id = id_res.ang2pix(&cluster.center.to_pointing()).0;
            records.push(CatalogRecord { catalog_id: id, pos: cluster.center });
            self.ids.push(id);
            self.clusters.push(cluster);
        }
        records
    }

    /// One assignment row per member per cluster.
    pub fn build_assignments(&self, store: &[ObservationRecord]) -> Vec<AssignmentRecord> {
        assert_eq!(
            self.ids.len(),
            self.clusters.len(),
            "generate_catalog_ids must run first"
        );
        let total: usize = self.clusters.iter().map(|c| c.members.len()).sum();
        let mut records = Vec::with_capacity(total);
        for (cluster, &catalog_id) in self.clusters.iter().zip(&self.ids) {
            for &m in &cluster.members {
                let obs = &store[m as usize];
                records.push(AssignmentRecord {
                    catalog_id,
                    image_id: obs.image_id,
                    star_no: obs.star_no,
                });
            }
        }
        records
    }
}
