//! Randomized K-means with an elbow stop on the cluster count.
//!
//! Task points are projected onto a tangent plane about their mean direction
//! (task areas are a few arcminutes at most, so the projection is metrically
//! faithful far beyond the sub-arcsecond scales that matter). K is swept
//! upward from 1; each K runs a local search that alternates Lloyd
//! refinement with random center swaps, accepting worse intermediate
//! solutions with a decaying probability. The sweep stops at the first K
//! whose average distortion fails to improve on the previous K by the elbow
//! factor, and the last accepted clustering wins.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::chunk::ObsIndex;
use crate::config::KmeansConfig;
use crate::io::ObservationRecord;
use crate::sphere::SphericalPoint;

use super::{Cluster, ClusterMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum KmeansError {
    #[error("requested {k} clusters from {n} points")]
    KTooLarge { k: usize, n: usize },
}

/// One K-means solution: centers, the per-point assignment, and the mean
/// squared point-to-center distance.
#[derive(Debug, Clone)]
pub struct KmeansRun {
    pub centers: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
    pub avg_distortion: f64,
}

/// Gnomonic tangent-plane frame about a reference direction.
struct TangentFrame {
    origin: [f64; 3],
    e1: [f64; 3],
    e2: [f64; 3],
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

impl TangentFrame {
    fn about(units: &[[f64; 3]]) -> TangentFrame {
        let mut sum = [0.0f64; 3];
        for u in units {
            sum[0] += u[0];
            sum[1] += u[1];
            sum[2] += u[2];
        }
        let origin = normalized(sum);
        let up = if origin[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
        let e1 = normalized(cross(up, origin));
        let e2 = cross(origin, e1);
        TangentFrame { origin, e1, e2 }
    }

    fn project(&self, u: [f64; 3]) -> [f64; 2] {
        let w = dot(u, self.origin);
        debug_assert!(w > 0.0, "point not on the origin hemisphere");
        [dot(u, self.e1) / w, dot(u, self.e2) / w]
    }

    fn unproject(&self, p: [f64; 2]) -> [f64; 3] {
        [
            self.origin[0] + p[0] * self.e1[0] + p[1] * self.e2[0],
            self.origin[1] + p[0] * self.e1[1] + p[1] * self.e2[1],
            self.origin[2] + p[0] * self.e1[2] + p[1] * self.e2[2],
        ]
    }
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Assign each point to its nearest center; returns the average distortion.
fn assign(points: &[[f64; 2]], centers: &[[f64; 2]], assignment: &mut [usize]) -> f64 {
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = sq_dist(*p, centers[0]);
        for (c, center) in centers.iter().enumerate().skip(1) {
            let d = sq_dist(*p, *center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignment[i] = best;
        total += best_d;
    }
    total / points.len() as f64
}

/// Move centers to the centroid of their members; an empty center is placed
/// on the point currently farthest from its own center.
fn recenter(points: &[[f64; 2]], assignment: &mut [usize], centers: &mut [[f64; 2]]) {
    let k = centers.len();
    let mut sums = vec![[0.0f64; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment.iter()) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far_i = usize::MAX;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[assignment[i]] <= 1 {
                continue;
            }
            let d = sq_dist(*p, centers[assignment[i]]);
            if d > far_d {
                far_d = d;
                far_i = i;
            }
        }
        if far_i != usize::MAX {
            counts[assignment[far_i]] -= 1;
            centers[c] = points[far_i];
            assignment[far_i] = c;
            counts[c] = 1;
        }
    }
}

const MAX_LLOYD_PASSES: usize = 100;

/// Lloyd refinement with the relative-distortion-loss stop rules: quit when
/// one pass improves by less than `min_consec_rdl`, or when a block of
/// `max_run_stage` passes improves by less than `min_accum_rdl` in total.
fn refine(
    points: &[[f64; 2]],
    centers: &mut [[f64; 2]],
    assignment: &mut [usize],
    params: &KmeansConfig,
) -> f64 {
    let mut prev = assign(points, centers, assignment);
    let mut block_start = prev;
    let mut passes = 0usize;
    loop {
        if prev <= 0.0 {
            return prev;
        }
        recenter(points, assignment, centers);
        let d = assign(points, centers, assignment);
        passes += 1;
        let consec_rdl = (prev - d) / prev;
        let mut stop = consec_rdl < params.min_consec_rdl;
        if !stop && passes % params.max_run_stage == 0 {
            let accum_rdl = (block_start - d) / block_start;
            stop = accum_rdl < params.min_accum_rdl;
            block_start = d;
        }
        prev = d;
        if stop || passes >= MAX_LLOYD_PASSES {
            return prev;
        }
    }
}

fn stage_budget(k: usize, n: usize, params: &KmeansConfig) -> usize {
    let [a, b, c, d] = params.stage_coeffs;
    let inner = (b * k as f64 + c * n as f64).max(0.0);
    (a + inner.powf(d)).round().clamp(0.0, 1e7) as usize
}

/// Local-search K-means for a fixed K.
///
/// Stage budget `a + (b*K + c*n)^d`; each stage swaps one center onto a
/// random point, refines with Lloyd passes, and accepts the result if it is
/// no worse, or with the current annealing probability otherwise. The best
/// solution ever visited is returned, so the output never regresses below
/// an accepted-but-worse walk state. Deterministic for a given generator
/// state and input.
pub fn kmeans_run(
    points: &[[f64; 2]],
    k: usize,
    params: &KmeansConfig,
    rng: &mut ChaCha12Rng,
) -> Result<KmeansRun, KmeansError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(KmeansError::KTooLarge { k, n });
    }

    let picks = rand::seq::index::sample(rng, n, k);
    let mut centers: Vec<[f64; 2]> = picks.iter().map(|i| points[i]).collect();
    let mut assignment = vec![0usize; n];
    let mut dist = refine(points, &mut centers, &mut assignment, params);

    let mut best = KmeansRun {
        centers: centers.clone(),
        assignment: assignment.clone(),
        avg_distortion: dist,
    };

    let mut p_accept = params.init_prob_accept;
    for stage in 1..=stage_budget(k, n, params) {
        if best.avg_distortion <= 0.0 {
            break;
        }
        if stage % params.temp_run_length == 0 {
            p_accept *= params.temp_reduc_fact;
        }
        let mut cand_centers = centers.clone();
        let swap_center = rng.gen_range(0..k);
        let swap_point = rng.gen_range(0..n);
        cand_centers[swap_center] = points[swap_point];
        let mut cand_assignment = assignment.clone();
        let cand_dist = refine(points, &mut cand_centers, &mut cand_assignment, params);

        if cand_dist < best.avg_distortion {
            best.centers.clone_from(&cand_centers);
            best.assignment.clone_from(&cand_assignment);
            best.avg_distortion = cand_dist;
        }
        if cand_dist <= dist || rng.gen::<f64>() < p_accept {
            centers = cand_centers;
            assignment = cand_assignment;
            dist = cand_dist;
        }
    }
    Ok(best)
}

/// Sweep K upward and keep the last K whose distortion ratio clears the
/// elbow factor. Returns the chosen K, its solution, and the distortions of
/// every K tried.
pub fn elbow_select(
    points: &[[f64; 2]],
    params: &KmeansConfig,
    rng: &mut ChaCha12Rng,
) -> (usize, KmeansRun, Vec<f64>) {
    assert!(!points.is_empty());
    let k_max = params.max_clusters.min(points.len());
    let mut accepted = kmeans_run(points, 1, params, rng).expect("k=1 always fits");
    let mut accepted_k = 1usize;
    let mut distortions = vec![accepted.avg_distortion];
    let mut prev = accepted.avg_distortion;

    for k in 2..=k_max {
        if prev <= 0.0 {
            break;
        }
        let run = kmeans_run(points, k, params, rng).expect("k bounded by point count");
        distortions.push(run.avg_distortion);
        if prev / run.avg_distortion >= params.elbow_fact {
            prev = run.avg_distortion;
            accepted = run;
            accepted_k = k;
        } else {
            break;
        }
    }
    (accepted_k, accepted, distortions)
}

/// Cluster one task's points (cell members then overlap copies) with the
/// elbow-tuned K-means. Incomplete-cluster removal is the caller's step.
pub fn kmeans_elbow_cluster(
    store: &[ObservationRecord],
    cell: &[ObsIndex],
    overlap: &[ObsIndex],
    params: &KmeansConfig,
    rng: &mut ChaCha12Rng,
) -> ClusterMap {
    let indices: Vec<ObsIndex> = cell.iter().chain(overlap.iter()).copied().collect();
    if indices.is_empty() {
        return ClusterMap::default();
    }
    let units: Vec<[f64; 3]> = indices
        .iter()
        .map(|&i| store[i as usize].pos.unit_vector())
        .collect();
    let frame = TangentFrame::about(&units);
    let plane: Vec<[f64; 2]> = units.iter().map(|u| frame.project(*u)).collect();

    let (k, run, _) = elbow_select(&plane, params, rng);

    let mut member_lists: Vec<Vec<ObsIndex>> = vec![Vec::new(); k];
    for (slot, &c) in run.assignment.iter().enumerate() {
        member_lists[c].push(indices[slot]);
    }
    let mut result = ClusterMap::default();
    for (c, members) in member_lists.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let center = SphericalPoint::from_vector(frame.unproject(run.centers[c]));
        let weight = members.len();
        result.clusters.push(Cluster {
            center,
            weight,
            members: BTreeSet::from_iter(members),
        });
    }
    result
}
