//! Region adjacency graph over a supervoxel map, weighted by shared faces.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Result, SvxError};
use crate::supervoxel::SupervoxelMap;
use crate::volume::{coords, strides};

#[derive(Clone, Debug, PartialEq)]
pub struct Rag {
    adjacency: Vec<BTreeMap<u32, u64>>,
    boundary_faces: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RagEdge {
    pub a: u32,
    pub b: u32,
    pub faces: u64,
}

/// Builds the graph in one sweep over the +x, +y and +z faces.
pub fn build_rag(sp: &SupervoxelMap) -> Rag {
    let dims = sp.dims();
    let labels = sp.labels();
    let st = strides(dims);
    let k = sp.count();
    let mut adjacency = vec![BTreeMap::new(); k];
    let mut boundary_faces = vec![0u64; k];
    for (i, &l) in labels.iter().enumerate() {
        let pos = coords(dims, i);
        for a in 0..3 {
            if pos[a] == 0 {
                boundary_faces[l as usize] += 1;
            }
            if pos[a] + 1 == dims[a] {
                boundary_faces[l as usize] += 1;
                continue;
            }
            let m = labels[i + st[a]];
            if m != l {
                *adjacency[l as usize].entry(m).or_insert(0) += 1;
                *adjacency[m as usize].entry(l).or_insert(0) += 1;
                boundary_faces[l as usize] += 1;
                boundary_faces[m as usize] += 1;
            }
        }
    }
    Rag {
        adjacency,
        boundary_faces,
    }
}

impl Rag {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbours(&self, sv: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency[sv as usize].keys().copied()
    }

    /// Shared faces between two supervoxels (0 when not adjacent).
    pub fn faces(&self, a: u32, b: u32) -> u64 {
        self.adjacency[a as usize].get(&b).copied().unwrap_or(0)
    }

    /// Faces of `sv` touching a different label or the volume border.
    pub fn boundary_faces(&self, sv: u32) -> u64 {
        self.boundary_faces[sv as usize]
    }

    /// Edges with `a < b`, sorted.
    pub fn edges(&self) -> Vec<RagEdge> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, m)| {
                m.iter()
                    .filter(move |(&b, _)| (a as u32) < b)
                    .map(move |(&b, &faces)| RagEdge { a: a as u32, b, faces })
            })
            .collect()
    }

    /// Boundary faces of a member set counting only faces to non-members and
    /// to the volume border.
    pub fn region_boundary_faces(&self, members: &BTreeSet<u32>) -> u64 {
        members
            .iter()
            .map(|&m| {
                let internal: u64 = self.adjacency[m as usize]
                    .iter()
                    .filter(|(nb, _)| members.contains(nb))
                    .map(|(_, &f)| f)
                    .sum();
                self.boundary_faces[m as usize] - internal
            })
            .sum()
    }

    fn check(&self, sv: u32) -> Result<()> {
        if sv as usize >= self.len() {
            return Err(SvxError::Param(format!("supervoxel {sv} out of range")));
        }
        Ok(())
    }
}

/// Supervoxels adjacent to at least one member and not members themselves.
pub fn find_neighbours(rag: &Rag, members: &BTreeSet<u32>) -> Result<BTreeSet<u32>> {
    if members.is_empty() {
        return Err(SvxError::Param("member set is empty".into()));
    }
    let mut out = BTreeSet::new();
    for &m in members {
        rag.check(m)?;
        out.extend(rag.neighbours(m).filter(|nb| !members.contains(nb)));
    }
    Ok(out)
}

/// Faces shared between `candidate` and the member set.
pub fn shared_border(rag: &Rag, members: &BTreeSet<u32>, candidate: u32) -> Result<u64> {
    rag.check(candidate)?;
    if members.contains(&candidate) {
        return Err(SvxError::Param(format!("candidate {candidate} is already a member")));
    }
    Ok(rag.adjacency[candidate as usize]
        .iter()
        .filter(|(nb, _)| members.contains(nb))
        .map(|(_, &f)| f)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::LabelMap;

    fn map(dims: [usize; 3], labels: Vec<u32>) -> SupervoxelMap {
        SupervoxelMap::from_labels(&LabelMap::new(dims, labels).unwrap())
    }

    #[test]
    fn two_voxels() {
        let rag = build_rag(&map([2, 1, 1], vec![0, 1]));
        assert_eq!(rag.edges(), vec![RagEdge { a: 0, b: 1, faces: 1 }]);
        assert_eq!(rag.boundary_faces(0), 6);
    }

    #[test]
    fn eight_blocks() {
        let labels = (0..512)
            .map(|i| {
                let (x, y, z) = (i % 8, (i / 8) % 8, i / 64);
                (x / 4 + 2 * (y / 4) + 4 * (z / 4)) as u32
            })
            .collect();
        let rag = build_rag(&map([8, 8, 8], labels));
        for sv in 0..8 {
            assert_eq!(rag.neighbours(sv).count(), 3);
            for nb in rag.neighbours(sv) {
                assert_eq!(rag.faces(sv, nb), 16);
            }
            assert_eq!(rag.boundary_faces(sv), 6 * 16);
        }
    }

    #[test]
    fn neighbour_queries() {
        let rag = build_rag(&map([4, 1, 1], vec![0, 1, 2, 3]));
        let all: BTreeSet<u32> = (0..4).collect();
        assert!(find_neighbours(&rag, &all).unwrap().is_empty());
        assert_eq!(find_neighbours(&rag, &BTreeSet::from([1])).unwrap(), BTreeSet::from([0, 2]));
        assert!(find_neighbours(&rag, &BTreeSet::new()).is_err());
        assert_eq!(shared_border(&rag, &BTreeSet::from([0]), 3).unwrap(), 0);
        assert_eq!(shared_border(&rag, &BTreeSet::from([0, 2]), 1).unwrap(), 2);
        assert!(shared_border(&rag, &BTreeSet::from([0]), 0).is_err());
        assert_eq!(rag.region_boundary_faces(&BTreeSet::from([1, 2])), 10);
    }
}
