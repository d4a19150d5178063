#![allow(dead_code)]

pub mod cases;
pub mod criteria;
pub mod gen;
pub mod oracle;
