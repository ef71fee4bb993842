//! Drones, ZSPs and remotes with their global registries.

// `!(x > 0.0)` guards intentionally treat NaN as invalid input.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use crate::vec3::Vec3;
use thiserror::Error;

/// Standard gravity used to derive the weight force from the mass.
pub const STANDARD_GRAVITY: f64 = 9.81;
/// Sea-level ISA air density, used when a scenario gives none.
pub const DEFAULT_AIR_DENSITY: f64 = 1.225;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EntityError {
    #[error("mass must be positive")]
    NonPositiveMass,
    #[error("rotor disk area must be positive")]
    NonPositiveArea,
    #[error("air density must be positive")]
    NonPositiveDensity,
    #[error("drag coefficient must be non-negative")]
    NegativeDrag,
    #[error("unknown entity {0}")]
    UnknownEntity(usize),
}

/// Mechanical properties of a rotary-wing drone. The weight force is derived
/// from the mass and re-derived on every mass update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mechanics {
    mass: f64,
    rotor_disk_area: f64,
    drag_coefficient: f64,
    air_density: f64,
}

impl Mechanics {
    pub fn new(
        mass: f64,
        rotor_disk_area: f64,
        drag_coefficient: f64,
        air_density: f64,
    ) -> Result<Self, EntityError> {
        if !(mass > 0.0) {
            return Err(EntityError::NonPositiveMass);
        }
        if !(rotor_disk_area > 0.0) {
            return Err(EntityError::NonPositiveArea);
        }
        if !(air_density > 0.0) {
            return Err(EntityError::NonPositiveDensity);
        }
        if drag_coefficient < 0.0 {
            return Err(EntityError::NegativeDrag);
        }
        Ok(Self {
            mass,
            rotor_disk_area,
            drag_coefficient,
            air_density,
        })
    }

    pub fn set_mass(&mut self, mass: f64) -> Result<(), EntityError> {
        if !(mass > 0.0) {
            return Err(EntityError::NonPositiveMass);
        }
        self.mass = mass;
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Weight force in newtons, always `mass * g`.
    pub fn weight(&self) -> f64 {
        self.mass * STANDARD_GRAVITY
    }

    pub fn rotor_disk_area(&self) -> f64 {
        self.rotor_disk_area
    }

    pub fn drag_coefficient(&self) -> f64 {
        self.drag_coefficient
    }

    pub fn air_density(&self) -> f64 {
        self.air_density
    }
}

/// Global node identifier, unique across drones, ZSPs and remotes. Used in
/// telemetry payloads and trace filenames.
pub type NodeId = u32;

/// Dense per-kind registry: ids are assigned in creation order.
#[derive(Debug)]
pub struct Registry<T> {
    items: Vec<T>,
}

impl<T> Default for Registry<T> {
    fn default() -> Self {
        Self { items: Vec::new() }
    }
}

impl<T> Registry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registration happens during the configuration phase only; ids are
    /// stable for the whole run.
    pub fn register(&mut self, item: T) -> usize {
        self.items.push(item);
        self.items.len() - 1
    }

    pub fn get(&self, id: usize) -> Result<&T, EntityError> {
        self.items.get(id).ok_or(EntityError::UnknownEntity(id))
    }

    pub fn get_mut(&mut self, id: usize) -> Result<&mut T, EntityError> {
        self.items.get_mut(id).ok_or(EntityError::UnknownEntity(id))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.items.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, T> {
        self.items.iter_mut()
    }
}

impl<'a, T> IntoIterator for &'a Registry<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

// panic on a bad id, like slices; `get` is the checked path
impl<T> std::ops::Index<usize> for Registry<T> {
    type Output = T;
    fn index(&self, id: usize) -> &T {
        &self.items[id]
    }
}

impl<T> std::ops::IndexMut<usize> for Registry<T> {
    fn index_mut(&mut self, id: usize) -> &mut T {
        &mut self.items[id]
    }
}

/// Fixed placement of an entity that does not fly a mission.
#[derive(Debug, Clone, Copy)]
pub struct FixedPosition(pub Vec3);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_cascades_from_mass() {
        let mut m = Mechanics::new(1.0, 0.18, 0.08, DEFAULT_AIR_DENSITY).unwrap();
        assert_eq!(m.weight(), 9.81);
        m.set_mass(2.5).unwrap();
        assert!((m.weight() - 24.525).abs() < 1e-12);
        // cascade holds exactly after arbitrary updates
        for mass in [0.3, 1.7, 10.0, 0.001] {
            m.set_mass(mass).unwrap();
            assert_eq!(m.weight() / m.mass(), STANDARD_GRAVITY);
        }
    }

    #[test]
    fn non_positive_mass_rejected() {
        assert_eq!(
            Mechanics::new(0.0, 0.18, 0.08, 1.225).unwrap_err(),
            EntityError::NonPositiveMass
        );
        let mut m = Mechanics::new(1.0, 0.18, 0.08, 1.225).unwrap();
        assert_eq!(m.set_mass(-1.0).unwrap_err(), EntityError::NonPositiveMass);
    }

    #[test]
    fn registry_ids_are_dense() {
        let mut reg: Registry<&str> = Registry::new();
        assert_eq!(reg.register("a"), 0);
        assert_eq!(reg.register("b"), 1);
        assert_eq!(reg.register("c"), 2);
        assert_eq!(*reg.get(1).unwrap(), "b");
        assert_eq!(reg.get(9).unwrap_err(), EntityError::UnknownEntity(9));
        assert_eq!(reg.len() - 1, 2); // max id == count - 1
    }
}
