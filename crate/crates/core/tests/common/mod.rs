#![allow(dead_code)]

pub mod np_fixture;
pub mod oracles;
