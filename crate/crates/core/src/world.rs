//! Simulated world: buildings and regions of interest.
//!
//! Boxes are axis-aligned and closed: a point lying exactly on a face counts
//! as inside. Boxes are stored as the 6-array `[Px1,Px2,Py1,Py2,Pz1,Pz2]`
//! of two corner points and normalized so min <= max per axis.

use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("malformed box: non-finite coordinate")]
    MalformedBox,
    #[error("unknown region {0}")]
    UnknownRegion(usize),
}

/// Axis-aligned closed box, normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    min: Vec3,
    max: Vec3,
}

impl Box3 {
    pub fn from_corners(p1: Vec3, p2: Vec3) -> Result<Self, WorldError> {
        if !p1.is_finite() || !p2.is_finite() {
            return Err(WorldError::MalformedBox);
        }
        Ok(Self {
            min: Vec3::new(p1.x.min(p2.x), p1.y.min(p2.y), p1.z.min(p2.z)),
            max: Vec3::new(p1.x.max(p2.x), p1.y.max(p2.y), p1.z.max(p2.z)),
        })
    }

    /// Builds a box from the `[Px1,Px2,Py1,Py2,Pz1,Pz2]` bounds array.
    pub fn from_bounds(b: [f64; 6]) -> Result<Self, WorldError> {
        Self::from_corners(Vec3::new(b[0], b[2], b[4]), Vec3::new(b[1], b[3], b[5]))
    }

    pub fn bounds(&self) -> [f64; 6] {
        [
            self.min.x, self.max.x, self.min.y, self.max.y, self.min.z, self.max.z,
        ]
    }

    pub fn min(&self) -> Vec3 {
        self.min
    }

    pub fn max(&self) -> Vec3 {
        self.max
    }

    /// Closed containment: faces, edges and corners are inside.
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Number of external boundary crossings of segment `a`-`b` (0, 1 or 2).
    ///
    /// Slab method: the segment parameter interval clipped against the box is
    /// `[t_enter, t_exit]`; each end that falls strictly inside (0, 1) is one
    /// wall crossing. A segment fully inside crosses nothing, one endpoint
    /// inside crosses once, a pass-through crosses twice.
    pub fn segment_crossings(&self, a: Vec3, b: Vec3) -> u8 {
        let d = b - a;
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        let axes = [
            (a.x, d.x, self.min.x, self.max.x),
            (a.y, d.y, self.min.y, self.max.y),
            (a.z, d.z, self.min.z, self.max.z),
        ];
        for (origin, dir, lo, hi) in axes {
            if dir == 0.0 {
                if origin < lo || origin > hi {
                    return 0;
                }
            } else {
                let t1 = (lo - origin) / dir;
                let t2 = (hi - origin) / dir;
                let (near, far) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                t_enter = t_enter.max(near);
                t_exit = t_exit.min(far);
                if t_enter > t_exit {
                    return 0;
                }
            }
        }
        if t_exit < 0.0 || t_enter > 1.0 {
            return 0;
        }
        let mut crossings = 0;
        if t_enter > 0.0 && t_enter < 1.0 {
            crossings += 1;
        }
        if t_exit > 0.0 && t_exit < 1.0 {
            crossings += 1;
        }
        crossings
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BuildingKind {
    Commercial,
    Residential,
    Office,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum WallMaterial {
    Wood,
    ConcreteWithWindows,
    ConcreteWithoutWindows,
    StoneBlocks,
}

/// Collisionless 3D obstacle. Mobility ignores buildings entirely; only the
/// propagation models see them, through wall material.
#[derive(Debug, Clone)]
pub struct Building {
    pub bounds: Box3,
    pub kind: BuildingKind,
    pub walls: WallMaterial,
    pub floors: u32,
    pub rooms_x: u32,
    pub rooms_y: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallCrossing {
    pub building: usize,
    pub material: WallMaterial,
    pub crossings: u8,
}

#[derive(Debug, Default)]
pub struct World {
    buildings: Vec<Building>,
    regions: Vec<Box3>,
}

impl World {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_building(&mut self, b: Building) -> usize {
        self.buildings.push(b);
        self.buildings.len() - 1
    }

    pub fn buildings(&self) -> &[Building] {
        &self.buildings
    }

    /// Stores a region of interest; ids are assigned in creation order.
    pub fn create_region(&mut self, bounds: Box3) -> usize {
        self.regions.push(bounds);
        self.regions.len() - 1
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn get_region_coordinates(&self, id: usize) -> Result<Box3, WorldError> {
        self.regions
            .get(id)
            .copied()
            .ok_or(WorldError::UnknownRegion(id))
    }

    pub fn set_region_coordinates(&mut self, id: usize, bounds: Box3) -> Result<(), WorldError> {
        match self.regions.get_mut(id) {
            Some(slot) => {
                *slot = bounds;
                Ok(())
            }
            None => Err(WorldError::UnknownRegion(id)),
        }
    }

    /// True iff `position` lies inside every listed region. An empty list is
    /// vacuously true.
    pub fn is_in_regions(&self, position: Vec3, ids: &[usize]) -> Result<bool, WorldError> {
        let mut inside = true;
        for &id in ids {
            let region = self.regions.get(id).ok_or(WorldError::UnknownRegion(id))?;
            inside &= region.contains(position);
        }
        Ok(inside)
    }

    /// Buildings whose external boundary the segment `a`-`b` crosses, with
    /// crossing counts. Buildings that are not hit are omitted.
    pub fn wall_crossings(&self, a: Vec3, b: Vec3) -> Vec<WallCrossing> {
        self.buildings
            .iter()
            .enumerate()
            .filter_map(|(i, building)| {
                let crossings = building.bounds.segment_crossings(a, b);
                (crossings > 0).then_some(WallCrossing {
                    building: i,
                    material: building.walls,
                    crossings,
                })
            })
            .collect()
    }
}
