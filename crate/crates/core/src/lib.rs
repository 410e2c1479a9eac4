pub mod extract;
pub mod fixtures;
pub mod flow;
pub mod forge;
mod fsutil;
pub mod ids;
pub mod patch;
pub mod registry;
pub mod spikedef;
pub mod tracker;
pub mod workbench;
