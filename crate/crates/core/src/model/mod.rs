//! Generator and discriminator architectures.

pub mod discriminator;
pub mod generator;
pub mod mrf;
pub mod seq;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig};
pub use mrf::Mrf;
pub use seq::SeqLayer;
