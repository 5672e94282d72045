//! Concrete game families: the fishing-protection game, the lower-bound hard
//! instances, and random games.

pub mod fishing;
pub mod hard;
pub mod random;
