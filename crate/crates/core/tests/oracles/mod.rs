//! Reference implementations and numerical checks shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

pub mod attention;
pub mod flow;
pub mod masks;
pub mod mesh;
pub mod metrics;
pub mod numeric;
