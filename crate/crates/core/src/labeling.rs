//! 26-connected component labeling on a 3D grid.

use std::collections::{HashSet, VecDeque};

use crate::volume::Grid3;

fn neighbors_26(grid: &Grid3, [i, j, k]: [usize; 3], mut f: impl FnMut(usize)) {
    let [nx, ny, nz] = grid.dims();
    for dk in -1i64..=1 {
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 && dk == 0 {
                    continue;
                }
                let (x, y, z) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
                    continue;
                }
                f(grid.flat_index([x as usize, y as usize, z as usize]));
            }
        }
    }
}

/// Connected components of the foreground voxels.
///
/// Components come out in scan order of their first voxel and each
/// component's indices are sorted, so the result does not depend on how
/// the flood fill visits neighbours.
pub fn components(grid: &Grid3, foreground: &[bool]) -> Vec<Vec<usize>> {
    assert_eq!(foreground.len(), grid.len());
    let mut seen = vec![false; foreground.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..foreground.len() {
        if !foreground[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(v) = queue.pop_front() {
            comp.push(v);
            neighbors_26(grid, grid.coords(v), |n| {
                if foreground[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            });
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Whether a set of voxel coordinates forms one 26-connected region.
pub fn is_connected_26(voxels: &[[usize; 3]]) -> bool {
    if voxels.is_empty() {
        return false;
    }
    let set: HashSet<[usize; 3]> = voxels.iter().copied().collect();
    let mut seen = HashSet::with_capacity(set.len());
    let mut stack = vec![voxels[0]];
    seen.insert(voxels[0]);
    while let Some([i, j, k]) = stack.pop() {
        for dk in -1i64..=1 {
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (x, y, z) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    if x < 0 || y < 0 || z < 0 {
                        continue;
                    }
                    let n = [x as usize, y as usize, z as usize];
                    if set.contains(&n) && seen.insert(n) {
                        stack.push(n);
                    }
                }
            }
        }
    }
    seen.len() == set.len()
}
