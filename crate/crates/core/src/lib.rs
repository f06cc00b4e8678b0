//! Virtual vehicle-in-the-loop test harness.
//!
//! A deterministic world steps an ego vehicle along a waypoint road while a
//! central car server (perception, lane keeping, adaptive cruise control,
//! emergency brake) drives it through a safety gateway. The same control code
//! runs in three stages: fully in-process, as a separate process over TCP, and
//! with the gateway as its own peer.

pub mod batch;
pub mod cecas;
pub mod cockpit;
pub mod dynamics;
pub mod error;
pub mod gateway;
pub mod geometry;
pub mod harness;
pub mod map;
pub mod sensors;
pub mod world;
