//! Discrete-event Internet-of-Drones simulator.
//!
//! The crate is organized around a deterministic event engine ([`engine`])
//! driving a simulated world of drones, ground stations (ZSPs) and remote
//! hosts. Drones fly interest-level Bezier trajectories ([`mobility`]),
//! consume energy according to a rotary-wing power model ([`energy`]),
//! carry peripherals ([`peripherals`]) and talk over simplified radio links
//! ([`channel`]) running telemetry and traffic applications ([`apps`]).
//! Scenarios are described by JSON files ([`config`]), executed by
//! [`scenario`], and summarized as XML reports, ASCII traces and PCAP
//! captures ([`report`]) that the [`analysis`] module turns into KPI CSVs.

pub mod analysis;
pub mod apps;
pub mod channel;
pub mod config;
pub mod energy;
pub mod engine;
pub mod entities;
pub mod mobility;
pub mod peripherals;
pub mod report;
pub mod scenario;
pub mod vec3;
pub mod world;

pub use vec3::Vec3;
