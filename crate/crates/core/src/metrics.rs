//! Reconstruction quality metrics: Chamfer distance (reported ×10³), F1
//! score (×10²), normal consistency (×10²), and Hausdorff distance.
//!
//! Nearest-neighbor queries run on a uniform grid with an expanding-ring
//! search that never stops before the exact answer is certain, so the
//! accelerated results equal the O(n²) brute-force paths bit for bit (the
//! brute-force functions stay public as test oracles).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::PointCloud;
use crate::vec3::Vec3;

/// Uniform-grid index over a fixed point set, answering exact
/// nearest-neighbor queries.
pub struct NearestNeighbors {
    points: Vec<Vec3>,
    lo: Vec3,
    side: f64,
    dims: [i64; 3],
    /// Prefix offsets into `order`, one slot per cell plus a terminator.
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl NearestNeighbors {
    pub fn build(points: &[Vec3]) -> Result<NearestNeighbors> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for &p in points {
            if !p.is_finite() {
                return Err(Error::NonFiniteInput);
            }
            lo = lo.min(p);
            hi = hi.max(p);
        }
        let extent = hi - lo;
        let longest = extent.max_component();
        // Aim for a handful of points per cell; degenerate extents collapse
        // to a single cell along that axis.
        let per_axis = ((points.len() as f64 / 2.0).cbrt().ceil() as i64).clamp(1, 128);
        let side = if longest > 0.0 {
            longest / per_axis as f64
        } else {
            1.0
        };
        let dims = [
            (extent.x / side).floor() as i64 + 1,
            (extent.y / side).floor() as i64 + 1,
            (extent.z / side).floor() as i64 + 1,
        ];

        let n_cells = (dims[0] * dims[1] * dims[2]) as usize;
        let cell_of = |p: Vec3| -> usize {
            let c = [
                (((p.x - lo.x) / side).floor() as i64).clamp(0, dims[0] - 1),
                (((p.y - lo.y) / side).floor() as i64).clamp(0, dims[1] - 1),
                (((p.z - lo.z) / side).floor() as i64).clamp(0, dims[2] - 1),
            ];
            ((c[0] * dims[1] + c[1]) * dims[2] + c[2]) as usize
        };

        let mut counts = vec![0u32; n_cells + 1];
        for &p in points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut cursor = counts;
        let mut order = vec![0u32; points.len()];
        for (i, &p) in points.iter().enumerate() {
            let c = cell_of(p);
            order[cursor[c] as usize] = i as u32;
            cursor[c] += 1;
        }

        Ok(NearestNeighbors {
            points: points.to_vec(),
            lo,
            side,
            dims,
            starts,
            order,
        })
    }

    fn scan_cell(&self, c: [i64; 3], q: Vec3, best: &mut (f64, u32)) {
        if c.iter().zip(&self.dims).any(|(&v, &d)| v < 0 || v >= d) {
            return;
        }
        let cell = ((c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]) as usize;
        for &i in &self.order[self.starts[cell] as usize..self.starts[cell + 1] as usize] {
            let d2 = (self.points[i as usize] - q).norm_sq();
            if d2 < best.0 {
                *best = (d2, i);
            }
        }
    }

    /// All existing cells at Chebyshev distance exactly `r` from `qc`.
    fn scan_shell(&self, qc: [i64; 3], r: i64, q: Vec3, best: &mut (f64, u32)) {
        let lo: Vec<i64> = (0..3).map(|a| (qc[a] - r).max(0)).collect();
        let hi: Vec<i64> = (0..3).map(|a| (qc[a] + r).min(self.dims[a] - 1)).collect();
        if (0..3).any(|a| lo[a] > hi[a]) {
            return;
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                if (x - qc[0]).abs().max((y - qc[1]).abs()) == r {
                    for z in lo[2]..=hi[2] {
                        self.scan_cell([x, y, z], q, best);
                    }
                } else {
                    // The interior in x and y: only the two z extremes are
                    // on the shell.
                    for z in [qc[2] - r, qc[2] + r] {
                        if z >= lo[2] && z <= hi[2] {
                            self.scan_cell([x, y, z], q, best);
                        }
                    }
                }
            }
        }
    }

    /// Index of the closest point and its (exact) distance.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        // The query's cell coordinates, deliberately unclamped: a point in a
        // cell at Chebyshev ring k is separated from the query by at least
        // k−1 whole cells along some axis, so its distance exceeds
        // (k−1)·side. After ring r is fully scanned, anything unscanned is
        // in ring ≥ r+1 and strictly farther than r·side — the search may
        // stop only once the best distance is within that bound.
        let qc = [
            ((q.x - self.lo.x) / self.side).floor() as i64,
            ((q.y - self.lo.y) / self.side).floor() as i64,
            ((q.z - self.lo.z) / self.side).floor() as i64,
        ];
        // First ring that touches the grid at all, and the last that could.
        let r_start = (0..3)
            .map(|a| (-qc[a]).max(qc[a] - (self.dims[a] - 1)).max(0))
            .max()
            .unwrap();
        let r_max = (0..3)
            .map(|a| qc[a].abs().max((self.dims[a] - 1 - qc[a]).abs()))
            .max()
            .unwrap();

        let mut best = (f64::INFINITY, u32::MAX);
        for r in r_start..=r_max {
            self.scan_shell(qc, r, q, &mut best);
            if best.0 <= (r as f64 * self.side).powi(2) {
                break;
            }
        }
        (best.1 as usize, best.0.sqrt())
    }
}

fn one_sided(queries: &[Vec3], targets: &[Vec3]) -> Result<(Vec<f64>, Vec<u32>)> {
    if queries.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let nn = NearestNeighbors::build(targets)?;
    let pairs: Vec<(f64, u32)> = queries
        .par_iter()
        .map(|&q| {
            let (i, d) = nn.nearest(q);
            (d, i as u32)
        })
        .collect();
    Ok(pairs.into_iter().unzip())
}

/// Distance from each query point to its nearest target point (the
/// per-vertex error channel behind distance-colored meshes).
pub fn nearest_distances(queries: &[Vec3], targets: &[Vec3]) -> Result<Vec<f64>> {
    Ok(one_sided(queries, targets)?.0)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric mean nearest-neighbor distance (unsquared L2, unscaled —
/// multiply by 10³ at report time).
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    let (ab, _) = one_sided(a, b)?;
    let (ba, _) = one_sided(b, a)?;
    Ok(0.5 * (mean(&ab) + mean(&ba)))
}

/// Max over both one-sided sup-inf distances.
pub fn hausdorff(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    let (ab, _) = one_sided(a, b)?;
    let (ba, _) = one_sided(b, a)?;
    Ok(ab.iter().chain(&ba).fold(0.0f64, |m, &d| m.max(d)))
}

fn one_sided_brute(queries: &[Vec3], targets: &[Vec3]) -> Result<Vec<f64>> {
    if queries.is_empty() || targets.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(queries
        .iter()
        .map(|&q| {
            targets
                .iter()
                .map(|&t| (t - q).norm_sq())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

/// O(n²) reference implementation of [`chamfer`].
pub fn chamfer_brute(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(0.5 * (mean(&one_sided_brute(a, b)?) + mean(&one_sided_brute(b, a)?)))
}

/// O(n²) reference implementation of [`hausdorff`].
pub fn hausdorff_brute(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    let ab = one_sided_brute(a, b)?;
    let ba = one_sided_brute(b, a)?;
    Ok(ab.iter().chain(&ba).fold(0.0f64, |m, &d| m.max(d)))
}

/// Harmonic mean of precision and recall at a distance threshold, ×10².
pub fn f1_score(pred: &[Vec3], gt: &[Vec3], threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "F1 threshold must be positive, got {threshold}"
        )));
    }
    let (pd, _) = one_sided(pred, gt)?;
    let (gd, _) = one_sided(gt, pred)?;
    Ok(f1_from_distances(&pd, &gd, threshold))
}

fn f1_from_distances(pred_dists: &[f64], gt_dists: &[f64], threshold: f64) -> f64 {
    let frac = |d: &[f64]| d.iter().filter(|&&x| x <= threshold).count() as f64 / d.len() as f64;
    let (p, r) = (frac(pred_dists), frac(gt_dists));
    if p + r == 0.0 {
        0.0
    } else {
        200.0 * p * r / (p + r)
    }
}

fn unit_normals(normals: &[Vec3]) -> Result<Vec<Vec3>> {
    normals
        .iter()
        .enumerate()
        .map(|(i, n)| {
            n.normalized(1e-12)
                .ok_or_else(|| Error::InvalidConfig(format!("zero-length normal at index {i}")))
        })
        .collect()
}

/// Mean |cos| between each point's normal and its nearest neighbor's normal
/// in the other set, symmetric, ×10². Absolute cosine makes the metric
/// orientation-agnostic, as the inputs are unoriented.
pub fn normal_consistency(
    pred: (&[Vec3], &[Vec3]),
    gt: (&[Vec3], &[Vec3]),
) -> Result<f64> {
    for (pts, nrm) in [pred, gt] {
        if pts.len() != nrm.len() {
            return Err(Error::InvalidConfig(format!(
                "{} normals for {} points",
                nrm.len(),
                pts.len()
            )));
        }
    }
    let pn = unit_normals(pred.1)?;
    let gn = unit_normals(gt.1)?;
    let (_, p_to_g) = one_sided(pred.0, gt.0)?;
    let (_, g_to_p) = one_sided(gt.0, pred.0)?;
    let side = |own: &[Vec3], other: &[Vec3], idx: &[u32]| -> f64 {
        own.iter()
            .zip(idx)
            .map(|(n, &j)| n.dot(other[j as usize]).abs().min(1.0))
            .sum::<f64>()
            / own.len() as f64
    };
    Ok(50.0 * (side(&pn, &gn, &p_to_g) + side(&gn, &pn, &g_to_p)))
}

/// The evaluation summary in the reporting scales: Chamfer ×10³, F1 ×10²,
/// normal consistency ×10² (absent when either side has no normals), and
/// unscaled Hausdorff.
#[derive(Clone, Copy, Debug)]
pub struct MetricsReport {
    pub cd_x1000: f64,
    pub f1_x100: f64,
    pub nc_x100: Option<f64>,
    pub hausdorff: f64,
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "CD(x1e3) {:8.4}   F1(x1e2) {:7.2}   NC(x1e2) ",
            self.cd_x1000, self.f1_x100
        )?;
        match self.nc_x100 {
            Some(nc) => write!(f, "{nc:7.2}")?,
            None => write!(f, "      -")?,
        }
        write!(f, "   Hausdorff {:8.5}", self.hausdorff)
    }
}

/// Compute all metrics between a predicted and a ground-truth cloud with one
/// grid build per direction.
pub fn metrics_report(
    pred: &PointCloud,
    gt: &PointCloud,
    f1_threshold: f64,
) -> Result<MetricsReport> {
    if !(f1_threshold > 0.0 && f1_threshold.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "F1 threshold must be positive, got {f1_threshold}"
        )));
    }
    let (pd, p_to_g) = one_sided(&pred.points, &gt.points)?;
    let (gd, g_to_p) = one_sided(&gt.points, &pred.points)?;
    let cd = 0.5 * (mean(&pd) + mean(&gd));
    let haus = pd.iter().chain(&gd).fold(0.0f64, |m, &d| m.max(d));
    let f1 = f1_from_distances(&pd, &gd, f1_threshold);
    let nc = match (&pred.normals, &gt.normals) {
        (Some(pn), Some(gn)) => {
            let pn = unit_normals(pn)?;
            let gn = unit_normals(gn)?;
            let fwd: f64 = pn
                .iter()
                .zip(&p_to_g)
                .map(|(n, &j)| n.dot(gn[j as usize]).abs().min(1.0))
                .sum::<f64>()
                / pn.len() as f64;
            let back: f64 = gn
                .iter()
                .zip(&g_to_p)
                .map(|(n, &j)| n.dot(pn[j as usize]).abs().min(1.0))
                .sum::<f64>()
                / gn.len() as f64;
            Some(50.0 * (fwd + back))
        }
        _ => None,
    };
    Ok(MetricsReport {
        cd_x1000: cd * 1e3,
        f1_x100: f1,
        nc_x100: nc,
        hausdorff: haus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use crate::vec3::vec3;
    use rand::Rng;

    fn random_points<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                vec3(
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                )
            })
            .collect()
    }

    #[test]
    fn identical_sets_have_zero_distance_and_full_f1() {
        let mut rng = derive_rng(50, "metrics", 0);
        let pts = random_points(200, 1.0, &mut rng);
        assert_eq!(chamfer(&pts, &pts).unwrap(), 0.0);
        assert_eq!(hausdorff(&pts, &pts).unwrap(), 0.0);
        assert_eq!(f1_score(&pts, &pts, 0.005).unwrap(), 100.0);
    }

    #[test]
    fn two_points_at_distance_d() {
        let a = vec![Vec3::ZERO];
        let b = vec![vec3(0.0, 3.0, 4.0)];
        assert!((chamfer(&a, &b).unwrap() - 5.0).abs() < 1e-15);
        assert!((hausdorff(&a, &b).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn grid_search_is_exact_against_brute_force() {
        let mut rng = derive_rng(51, "metrics", 0);
        // Uniform, clustered, and a copy with far outliers.
        let uniform = random_points(500, 1.0, &mut rng);
        let mut clustered = random_points(400, 0.05, &mut rng);
        clustered.extend(random_points(100, 2.0, &mut rng));
        let mut with_outliers = random_points(490, 0.5, &mut rng);
        with_outliers.extend(random_points(10, 50.0, &mut rng));

        for (a, b) in [
            (&uniform, &clustered),
            (&clustered, &with_outliers),
            (&with_outliers, &uniform),
        ] {
            assert_eq!(
                chamfer(a, b).unwrap(),
                chamfer_brute(a, b).unwrap(),
                "chamfer must match brute force exactly"
            );
            assert_eq!(
                hausdorff(a, b).unwrap(),
                hausdorff_brute(a, b).unwrap(),
                "hausdorff must match brute force exactly"
            );
        }
    }

    #[test]
    fn queries_far_outside_the_grid_are_still_exact() {
        let mut rng = derive_rng(52, "metrics", 0);
        let targets = random_points(300, 0.3, &mut rng);
        let queries = random_points(100, 30.0, &mut rng);
        let fast = nearest_distances(&queries, &targets).unwrap();
        let brute = one_sided_brute(&queries, &targets).unwrap();
        assert_eq!(fast, brute);
    }

    #[test]
    fn degenerate_target_sets_are_handled() {
        let single = vec![vec3(1.0, 2.0, 3.0)];
        let nn = NearestNeighbors::build(&single).unwrap();
        assert_eq!(nn.nearest(vec3(1.0, 2.0, 7.0)), (0, 4.0));

        // Collinear points collapse two grid axes.
        let line: Vec<Vec3> = (0..50).map(|i| vec3(i as f64, 0.0, 0.0)).collect();
        let fast = nearest_distances(&[vec3(17.4, 5.0, 0.0)], &line).unwrap();
        assert!((fast[0] - (0.4f64 * 0.4 + 25.0).sqrt()).abs() < 1e-12);

        assert!(chamfer(&[], &single).is_err());
        assert!(chamfer(&single, &[]).is_err());
    }

    #[test]
    fn metrics_are_symmetric() {
        let mut rng = derive_rng(53, "metrics", 0);
        let a = random_points(300, 1.0, &mut rng);
        let b = random_points(250, 1.2, &mut rng);
        assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
        assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff(&b, &a).unwrap());
    }

    #[test]
    fn distances_scale_linearly_and_f1_is_scale_invariant() {
        let mut rng = derive_rng(54, "metrics", 0);
        let a = random_points(200, 1.0, &mut rng);
        let b = random_points(200, 1.0, &mut rng);
        let s = 3.7;
        let sa: Vec<Vec3> = a.iter().map(|&p| p * s).collect();
        let sb: Vec<Vec3> = b.iter().map(|&p| p * s).collect();

        let cd = chamfer(&a, &b).unwrap();
        let scd = chamfer(&sa, &sb).unwrap();
        assert!((scd - s * cd).abs() < 1e-12 * scd);

        let h = hausdorff(&a, &b).unwrap();
        let sh = hausdorff(&sa, &sb).unwrap();
        assert!((sh - s * h).abs() < 1e-12 * sh);

        let t = 0.21;
        assert_eq!(
            f1_score(&a, &b, t).unwrap(),
            f1_score(&sa, &sb, s * t).unwrap()
        );

        assert!(h >= cd, "hausdorff dominates unscaled chamfer");
    }

    #[test]
    fn f1_formula_from_half_precision_full_recall() {
        let gt: Vec<Vec3> = (0..10).map(|i| vec3(i as f64, 0.0, 0.0)).collect();
        let mut pred = gt.clone();
        pred.extend((0..10).map(|i| vec3(i as f64, 100.0, 0.0)));
        let f1 = f1_score(&pred, &gt, 0.4).unwrap();
        assert!((f1 - 200.0 / 3.0).abs() < 1e-9, "expected 66.67, got {f1}");

        let far: Vec<Vec3> = gt.iter().map(|&p| p + vec3(0.0, 9.0, 0.0)).collect();
        assert_eq!(f1_score(&far, &gt, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn normal_consistency_conventions() {
        let mut rng = derive_rng(55, "metrics", 0);
        let pts = random_points(100, 1.0, &mut rng);
        let normals: Vec<Vec3> = (0..100)
            .map(|_| {
                random_points(1, 1.0, &mut rng)[0]
                    .normalized(1e-9)
                    .unwrap_or(Vec3::X)
            })
            .collect();
        let nc = normal_consistency((&pts, &normals), (&pts, &normals)).unwrap();
        assert!((nc - 100.0).abs() < 1e-9);

        let flipped: Vec<Vec3> = normals.iter().map(|&n| -n).collect();
        let nc_flip = normal_consistency((&pts, &normals), (&pts, &flipped)).unwrap();
        assert!((nc_flip - 100.0).abs() < 1e-9, "orientation must not matter");

        let xs = vec![Vec3::X; 100];
        let ys = vec![Vec3::Y; 100];
        let nc_orth = normal_consistency((&pts, &xs), (&pts, &ys)).unwrap();
        assert_eq!(nc_orth, 0.0);

        let zeros = vec![Vec3::ZERO; 100];
        assert!(normal_consistency((&pts, &zeros), (&pts, &ys)).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn accelerated_metrics_match_brute_force_on_random_sets(
            a in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -1.0f64..1.0), 1..60),
            b in proptest::collection::vec((-10.0f64..10.0, -0.5f64..0.5, -10.0f64..10.0), 1..60),
        ) {
            let a: Vec<Vec3> = a.into_iter().map(|(x, y, z)| vec3(x, y, z)).collect();
            let b: Vec<Vec3> = b.into_iter().map(|(x, y, z)| vec3(x, y, z)).collect();
            proptest::prop_assert_eq!(chamfer(&a, &b).unwrap(), chamfer_brute(&a, &b).unwrap());
            proptest::prop_assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff_brute(&a, &b).unwrap());
            proptest::prop_assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
            proptest::prop_assert!(hausdorff(&a, &b).unwrap() >= chamfer(&a, &b).unwrap());
        }
    }

    #[test]
    fn report_combines_all_metrics() {
        let mut rng = derive_rng(56, "metrics", 0);
        let pts = random_points(300, 1.0, &mut rng);
        let normals = vec![Vec3::Z; 300];
        let cloud = PointCloud::new(pts.clone(), Some(normals)).unwrap();
        let report = metrics_report(&cloud, &cloud, 0.005).unwrap();
        assert_eq!(report.cd_x1000, 0.0);
        assert_eq!(report.f1_x100, 100.0);
        assert_eq!(report.nc_x100, Some(100.0));
        assert_eq!(report.hausdorff, 0.0);

        let plain = PointCloud::new(pts, None).unwrap();
        let report = metrics_report(&plain, &cloud, 0.005).unwrap();
        assert_eq!(report.nc_x100, None);

        assert!(metrics_report(&plain, &cloud, 0.0).is_err());
    }
}
