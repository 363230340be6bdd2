#![allow(dead_code)]

pub mod dispersion;
pub mod oracles;
