//! Invariant filtering on SE₂(3) with consistent pose initialisation.
//!
//! The crate is organised bottom-up:
//!
//! - [`lie`]: SO(3), SE(3) and SE₂(3) maps and Jacobians.
//! - [`gaussian`]: concentrated Gaussians on SE₂(3) and their propagation.
//! - [`sensors`]: IMU integration and camera/LiDAR measurement models.
//! - [`consistent`]: closed-form pose estimates that stay consistent as the
//!   number of features grows.
//! - [`filter`]: the invariant filters and error-state baselines.

pub mod bench;
pub mod consistent;
pub mod filter;
pub mod gaussian;
pub mod lie;
pub mod selftest;
pub mod sensors;
pub mod sim;
