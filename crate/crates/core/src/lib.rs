// SPDX-License-Identifier: Apache-2.0

pub mod error;
pub mod field;
pub mod hash;
pub mod numeric;
pub mod params;
pub mod reference;
pub mod constraints;
pub mod backend;
pub mod protocol;
pub mod audit;

pub use error::{Error, Result};
