#![allow(clippy::needless_range_loop)]

pub mod codec;
pub mod image;
pub mod model;
pub mod schedules;
pub mod sphharm;
pub mod render;
pub mod train;
pub mod experiment;
