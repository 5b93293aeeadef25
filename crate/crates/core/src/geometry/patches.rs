use super::{dist2, Point3, PointCloud, SpatialIndex};
use crate::error::{Error, Result};

/// Greedy max-min subset. The first pick is index 0; each later pick maximizes
/// the distance to the picked set, ties going to the smaller index.
pub fn farthest_point_sample(cloud: &PointCloud, n: usize) -> Result<Vec<usize>> {
    let points = cloud.points();
    if n == 0 || n > points.len() {
        return Err(Error::invalid_arg(format!(
            "sample count {n} must lie in 1..={}",
            points.len()
        )));
    }
    let mut picked = Vec::with_capacity(n);
    let mut min_d2 = vec![f64::INFINITY; points.len()];
    let mut next = 0usize;
    for _ in 0..n {
        picked.push(next);
        let p = points[next];
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, d) in min_d2.iter_mut().enumerate() {
            *d = d.min(dist2(p, points[i]));
            if *d > best.0 {
                best = (*d, i);
            }
        }
        next = best.1;
    }
    Ok(picked)
}

/// A subset of a cloud plus the indices it was taken from.
#[derive(Clone, Debug)]
pub struct Patch {
    pub cloud: PointCloud,
    pub indices: Vec<usize>,
}

/// The `size` nearest points to point `seed`, in ascending distance.
pub fn patch_around(index: &SpatialIndex, seed: usize, size: usize) -> Result<Patch> {
    let centre = *index
        .points()
        .get(seed)
        .ok_or_else(|| Error::invalid_arg(format!("seed {seed} out of range")))?;
    let indices: Vec<usize> = index.knn(centre, size)?.into_iter().map(|n| n.index).collect();
    let cloud = PointCloud::new(indices.iter().map(|&i| index.points()[i]).collect())?;
    Ok(Patch { cloud, indices })
}

/// `num_patches` patches of `patch_size` points seeded by farthest point sampling.
pub fn extract_patches(
    cloud: &PointCloud,
    patch_size: usize,
    num_patches: usize,
) -> Result<Vec<Patch>> {
    check_patch_size(cloud, patch_size)?;
    let index = SpatialIndex::build(cloud.points().to_vec());
    farthest_point_sample(cloud, num_patches)?
        .into_iter()
        .map(|seed| patch_around(&index, seed, patch_size))
        .collect()
}

/// Patches seeded in farthest-point order until every point is in at least one.
pub fn covering_patches(cloud: &PointCloud, patch_size: usize) -> Result<Vec<Patch>> {
    check_patch_size(cloud, patch_size)?;
    let points = cloud.points();
    let index = SpatialIndex::build(points.to_vec());
    let mut covered = vec![false; points.len()];
    let mut remaining = points.len();
    let mut min_d2 = vec![f64::INFINITY; points.len()];
    let mut patches = Vec::new();
    let mut seed = 0usize;
    while remaining > 0 {
        let patch = patch_around(&index, seed, patch_size)?;
        for &i in &patch.indices {
            if !covered[i] {
                covered[i] = true;
                remaining -= 1;
            }
        }
        patches.push(patch);
        // continue the farthest point ordering, preferring uncovered points
        let p = points[seed];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, d) in min_d2.iter_mut().enumerate() {
            *d = d.min(dist2(p, points[i]));
            if !covered[i] && *d > best.0 {
                best = (*d, i);
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        seed = best.1;
    }
    Ok(patches)
}

fn check_patch_size(cloud: &PointCloud, patch_size: usize) -> Result<()> {
    if patch_size == 0 || patch_size > cloud.len() {
        return Err(Error::invalid_arg(format!(
            "patch size {patch_size} must lie in 1..={}",
            cloud.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MergeMode {
    /// Later patches overwrite earlier ones.
    #[default]
    LastWrite,
    /// Points covered by several patches get the mean of their restored positions.
    Average,
}

/// Write patch coordinates back into `target`. `patches[k]` must carry the
/// index map produced by extraction. Points not covered keep their value.
pub fn write_back(target: &mut [Point3], patches: &[Patch], mode: MergeMode) -> Result<()> {
    // Average mode accumulates offsets from the first write, so identical
    // copies reproduce their value bit-exactly.
    let mut first: Vec<Option<Point3>> = vec![None; target.len()];
    let mut sums = vec![[0.0; 3]; target.len()];
    let mut counts = vec![0u32; target.len()];
    for patch in patches {
        if patch.indices.len() != patch.cloud.len() {
            return Err(Error::invalid_arg("patch index map does not match its point count"));
        }
        for (&i, p) in patch.indices.iter().zip(patch.cloud.points()) {
            let slot = target
                .get_mut(i)
                .ok_or_else(|| Error::invalid_arg(format!("patch index {i} out of range")))?;
            match mode {
                MergeMode::LastWrite => *slot = *p,
                MergeMode::Average => {
                    let base = *first[i].get_or_insert(*p);
                    for k in 0..3 {
                        sums[i][k] += p[k] - base[k];
                    }
                    counts[i] += 1;
                }
            }
        }
    }
    if mode == MergeMode::Average {
        for (i, slot) in target.iter_mut().enumerate() {
            if let Some(base) = first[i] {
                let c = counts[i] as f64;
                *slot = [
                    base[0] + sums[i][0] / c,
                    base[1] + sums[i][1] / c,
                    base[2] + sums[i][2] / c,
                ];
            }
        }
    }
    Ok(())
}
